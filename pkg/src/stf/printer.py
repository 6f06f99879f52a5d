"""Canonical text rendering of a model (four-space indent, one item per line)."""

from __future__ import annotations

from stf.model import (
    Assign, AutoMLMode, Binary, DaAction, DaExpr, If, Literal, LocalDecl, Model, Print,
    Ref, Send, Thing, Unary, While,
)

INDENT = "    "


def format_literal(lit: Literal) -> str:
    v = lit.value
    if lit.type == "Bool":
        return "true" if v else "false"
    if lit.type == "String":
        return '"' + (v.replace("\\", "\\\\").replace('"', '\\"')
                      .replace("\n", "\\n").replace("\t", "\\t")) + '"'
    if lit.type == "Float":
        return repr(float(v))
    return str(int(v))


def _string(s: str) -> str:
    return format_literal(Literal(s, "String"))


def format_expr(e) -> str:
    if isinstance(e, Literal):
        return format_literal(e)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, DaExpr):
        return e.kind
    if isinstance(e, Unary):
        inner = format_expr(e.operand)
        simple = isinstance(e.operand, Ref) or (
            isinstance(e.operand, Literal) and not (
                e.operand.type in ("Int", "Float") and (e.op == "-" or e.operand.value < 0)))
        if not simple:
            inner = f"({inner})"
        return f"-{inner}" if e.op == "-" else f"not {inner}"
    if isinstance(e, Binary):
        return f"{_operand(e.left)} {e.op} {_operand(e.right)}"
    raise TypeError(f"not an expression: {e!r}")


def _operand(e) -> str:
    text = format_expr(e)
    return f"({text})" if isinstance(e, (Binary, Unary)) else text


def _block(stmts, depth: int, out: list[str]) -> None:
    for s in stmts:
        _statement(s, depth, out)


def _statement(s, depth: int, out: list[str]) -> None:
    pad = INDENT * depth
    if isinstance(s, DaAction):
        out.append(pad + s.kind)
    elif isinstance(s, Assign):
        out.append(f"{pad}{s.target} = {format_expr(s.value)}")
    elif isinstance(s, LocalDecl):
        out.append(f"{pad}var {s.name} : {s.type} = {format_expr(s.value)}")
    elif isinstance(s, Send):
        args = ", ".join(format_expr(a) for a in s.args)
        out.append(f"{pad}{s.port}!{s.message}({args})")
    elif isinstance(s, Print):
        out.append(f"{pad}print {format_expr(s.value)}")
    elif isinstance(s, If):
        out.append(f"{pad}if {format_expr(s.cond)} {{")
        _block(s.then, depth + 1, out)
        if s.orelse:
            out.append(pad + "} else {")
            _block(s.orelse, depth + 1, out)
        out.append(pad + "}")
    elif isinstance(s, While):
        out.append(f"{pad}while {format_expr(s.cond)} {{")
        _block(s.body, depth + 1, out)
        out.append(pad + "}")
    else:
        raise TypeError(f"not a statement: {s!r}")


def _braced(header: str, stmts, depth: int, out: list[str]) -> None:
    pad = INDENT * depth
    if not stmts:
        out.append(f"{pad}{header} {{ }}")
        return
    out.append(f"{pad}{header} {{")
    _block(stmts, depth + 1, out)
    out.append(pad + "}")


def _thing(t: Thing, out: list[str]) -> None:
    head = "thing "
    if t.is_fragment:
        head += "fragment "
    head += t.name
    if t.includes:
        head += " includes " + ", ".join(t.includes)
    for a in t.annotations:
        head += f" @{a.key} {_string(a.value)}"
    out.append(head + " {")
    p1, p2, p3 = INDENT, INDENT * 2, INDENT * 3
    for p in t.properties:
        init = f" = {format_literal(p.initial)}" if p.initial is not None else ""
        out.append(f"{p1}property {p.name} : {p.type}{init}")
    for m in t.messages:
        params = ", ".join(f"{x.name} : {x.type}" for x in m.params)
        out.append(f"{p1}message {m.name}({params})")
    for port in t.ports:
        if not port.receives and not port.sends:
            out.append(f"{p1}port {port.name} {{ }}")
            continue
        out.append(f"{p1}port {port.name} {{")
        if port.receives:
            out.append(f"{p2}receives " + " ".join(port.receives))
        if port.sends:
            out.append(f"{p2}sends " + " ".join(port.sends))
        out.append(p1 + "}")
    da = t.da
    if da is not None:
        out.append(p1 + "data_analytics {")
        out.append(f"{p2}dataset {_string(da.dataset)}")
        out.append(f"{p2}features " + " ".join(da.features))
        out.append(f"{p2}labels " + " ".join(da.labels))
        if da.sequential is not None:
            out.append(f"{p2}sequential {'true' if da.sequential else 'false'}")
        if da.window is not None:
            out.append(f"{p2}window {da.window[0]} horizon {da.window[1]}")
        if da.scaling is not None:
            out.append(f"{p2}scaling {da.scaling}")
        if da.missing is not None:
            out.append(f"{p2}missing {da.missing}")
        mode = da.mode
        if isinstance(mode, AutoMLMode):
            budget = f" budget {mode.budget}" if mode.budget is not None else ""
            out.append(f"{p2}automl {{ metric {mode.metric} folds {mode.folds}{budget} }}")
        elif not mode.hyperparams:
            out.append(f"{p2}model {mode.algorithm} {{ }}")
        else:
            out.append(f"{p2}model {mode.algorithm} {{")
            for h in mode.hyperparams:
                out.append(f"{p3}{h.name} = {format_literal(h.value)}")
            out.append(p2 + "}")
        if da.pretrained is not None:
            out.append(f"{p2}pretrained {_string(da.pretrained)}")
        for a in da.annotations:
            out.append(f"{p2}@{a.key} {_string(a.value)}")
        out.append(p1 + "}")
    sm = t.behavior
    out.append(f"{p1}statechart {sm.name} init {sm.initial} {{")
    for s in sm.states:
        if not (s.on_entry or s.on_exit or s.transitions):
            out.append(f"{p2}state {s.name} {{ }}")
            continue
        out.append(f"{p2}state {s.name} {{")
        if s.on_entry:
            _braced("on_entry", s.on_entry, 3, out)
        if s.on_exit:
            _braced("on_exit", s.on_exit, 3, out)
        for tr in s.transitions:
            head = f"transition -> {tr.target}"
            if tr.event is not None:
                head += f" event {tr.event[0]}.{tr.event[1]}"
            if tr.guard is not None:
                head += f" guard {format_expr(tr.guard)}"
            if tr.actions:
                _braced(head, tr.actions, 3, out)
            else:
                out.append(p3 + head)
        out.append(p2 + "}")
    out.append(p1 + "}")
    out.append("}")


def pretty_print(m: Model) -> str:
    sections: list[list[str]] = []
    if m.imports:
        sections.append([f"import {_string(i.path)}" for i in m.imports])
    for t in m.things:
        out: list[str] = []
        _thing(t, out)
        sections.append(out)
    for c in m.configurations:
        out = [f"configuration {c.name} {{"]
        for inst in c.instances:
            out.append(f"{INDENT}instance {inst.name} : {inst.thing}")
        for k in c.connectors:
            out.append(f"{INDENT}connector {k.left_instance}.{k.left_port} <-> "
                       f"{k.right_instance}.{k.right_port}")
        out.append("}")
        sections.append(out)
    return "\n\n".join("\n".join(s) for s in sections) + ("\n" if sections else "")
