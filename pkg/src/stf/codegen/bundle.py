"""Deployment bundles: compiled, self-contained configurations.

A bundle is a JSON document with canonical key order.  States and
transitions are integer-indexed; expressions are flat prefix-form token
lists; statements are small tagged arrays.  ``run_bundle`` executes the
compiled form with its own evaluator, sharing only the tick scheduler with
the interpreter.

Expression tokens::

    "c", value          constant
    "v", name           variable reference
    "neg" | "not", e    unary
    op, e1, e2          binary (+ - * / % == != < <= > >= and or)
    "da", kind          DA action in expression position (always faults)

Statements::

    ["set", name, expr]            ["var", name, type, expr]
    ["send", port, msg, [expr..]]  ["print", expr]
    ["if", expr, block, block]     ["while", expr, block]
    ["da", kind]
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional, Union

from stf.model import (Assign, Binary, DaAction, DaExpr, If, Literal, LocalDecl, Model, Print,
                       Ref, Send, Thing, Unary, While, platform_completeness, with_default_backend)
from stf.printer import pretty_print
from stf.runtime.da import da_config
from stf.runtime.engine import Simulation, TransitionView
from stf.runtime.interpreter import pick_configuration
from stf.runtime.values import (MAX_LOOP_ITERATIONS, RuntimeFault, arith, coerce, literal_value,
                                unary, zero_value)

BUNDLE_FORMAT_VERSION = 1

BINARY_OPS = ("+", "-", "*", "/", "%", "==", "!=", "<", "<=", ">", ">=", "and", "or")
UNARY_OPS = {"-": "neg", "not": "not"}
STATEMENT_ARITY = {"set": 3, "var": 4, "send": 4, "print": 2, "if": 4, "while": 3, "da": 2}
DA_KINDS = ("da_save", "da_preprocess", "da_train", "da_predict")
SCALAR_TYPES = ("Int", "Float", "Bool", "String", "Timestamp")


class BundleError(ValueError):
    """The bundle document is malformed or of an unsupported version."""


class GenerationError(Exception):
    """Generation was refused or failed."""

    def __init__(self, message: str, model_error: bool = False):
        super().__init__(message)
        self.model_error = model_error


def model_hash(m: Model) -> str:
    """sha256 of the canonical text; whitespace and comments do not matter."""
    return hashlib.sha256(pretty_print(m).encode("utf-8")).hexdigest()


def dumps_bundle(bundle: dict) -> str:
    return json.dumps(bundle, sort_keys=True, indent=1, ensure_ascii=False,
                      allow_nan=False) + "\n"


# -- compilation -----------------------------------------------------------------------

def compile_expr(e, out: list) -> list:
    if isinstance(e, Literal):
        out += ["c", e.value]
    elif isinstance(e, Ref):
        out += ["v", e.name]
    elif isinstance(e, Unary):
        out.append(UNARY_OPS[e.op])
        compile_expr(e.operand, out)
    elif isinstance(e, Binary):
        out.append(e.op)
        compile_expr(e.left, out)
        compile_expr(e.right, out)
    elif isinstance(e, DaExpr):
        out += ["da", e.kind]
    else:
        raise GenerationError(f"cannot compile expression {type(e).__name__}")
    return out


def compile_block(stmts) -> list:
    out = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(["set", s.target, compile_expr(s.value, [])])
        elif isinstance(s, LocalDecl):
            out.append(["var", s.name, s.type, compile_expr(s.value, [])])
        elif isinstance(s, Send):
            out.append(["send", s.port, s.message, [compile_expr(a, []) for a in s.args]])
        elif isinstance(s, Print):
            out.append(["print", compile_expr(s.value, [])])
        elif isinstance(s, If):
            out.append(["if", compile_expr(s.cond, []), compile_block(s.then),
                        compile_block(s.orelse)])
        elif isinstance(s, While):
            out.append(["while", compile_expr(s.cond, []), compile_block(s.body)])
        elif isinstance(s, DaAction):
            out.append(["da", s.kind])
        else:
            raise GenerationError(f"cannot compile statement {type(s).__name__}")
    return out


def compile_thing(t: Thing) -> dict:
    sm = t.behavior
    names = [s.name for s in sm.states]
    index = {n: i for i, n in enumerate(names)}
    transitions, table = [], []
    for i, st in enumerate(sm.states):
        row = []
        for tr in st.transitions:
            row.append(len(transitions))
            transitions.append({
                "source": i,
                "target": index[tr.target],
                "event": list(tr.event) if tr.event else None,
                "guard": compile_expr(tr.guard, []) if tr.guard is not None else None,
                "actions": compile_block(tr.actions),
            })
        table.append(row)
    props = []
    for p in t.properties:
        init = (literal_value(p.initial.value, p.initial.type, p.type) if p.initial is not None
                else zero_value(p.type))
        props.append([p.name, p.type, init])
    return {
        "name": t.name,
        "properties": props,
        "messages": {m.name: [[q.name, q.type] for q in m.params] for m in t.messages},
        "ports": {p.name: {"receives": list(p.receives), "sends": list(p.sends)}
                  for p in t.ports},
        "states": names,
        "initial": index[sm.initial],
        "entry": [compile_block(s.on_entry) for s in sm.states],
        "exit": [compile_block(s.on_exit) for s in sm.states],
        "transitions": transitions,
        "table": table,
        "da": da_config(t),
    }


def generate_bundle(m: Model, config: Optional[str] = None, default_backend: Optional[str] = None,
                    data_root=None, validate_first: bool = True,
                    data_root_hint: Optional[str] = None) -> dict:
    """Compile one configuration of a merged model into a bundle document.

    Refuses (``GenerationError`` with ``model_error`` set) when the model has
    validation errors or a DA thing has no backend and no default was given.
    ``data_root`` is where pretrained model files are read from; the files are
    embedded.  ``data_root_hint`` is stored verbatim for ``run_bundle``.
    """
    from stf import __version__
    from stf.validator import DataProvider, has_errors, validate

    if validate_first:
        provider = DataProvider(data_root) if data_root is not None else None
        diags = validate(m, provider)
        if has_errors(diags):
            errs = [d.render() for d in diags if d.is_error]
            raise GenerationError(f"model has {len(errs)} validation error(s)",
                                  model_error=True)
    missing = platform_completeness(m)
    if missing:
        if not default_backend:
            raise GenerationError("no DA backend for " + ", ".join(missing) +
                                  " (add @backend or pass --default-backend)", model_error=True)
        m = with_default_backend(m, default_backend)
    c = pick_configuration(m, config)
    things, pretrained = [], {}
    root = Path(data_root) if data_root is not None else Path(".")
    for name in dict.fromkeys(i.thing for i in c.instances):
        t = m.get_thing(name)
        compiled = compile_thing(t)
        things.append(compiled)
        da = compiled["da"]
        if da and da.get("pretrained"):
            p = Path(da["pretrained"])
            p = p if p.is_absolute() else root / p
            try:
                doc = json.loads(p.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise GenerationError(f"cannot embed pretrained model '{da['pretrained']}': "
                                      f"{e}") from None
            pretrained[t.name] = doc
    thing_index = {t["name"]: i for i, t in enumerate(things)}
    return {
        "format_version": BUNDLE_FORMAT_VERSION,
        "manifest": {
            "tool": "stf",
            "tool_version": __version__,
            "model_hash": model_hash(m),
            "configuration": c.name,
            "default_backend": default_backend if missing else None,
            "defaulted_backend_for": missing,
        },
        "configuration": {
            "name": c.name,
            "instances": [{"name": i.name, "thing": thing_index[i.thing]} for i in c.instances],
            "connectors": [[k.left_instance, k.left_port, k.right_instance, k.right_port]
                           for k in c.connectors],
        },
        "things": things,
        "pretrained": pretrained,
        "data_root": data_root_hint,
    }


# -- loading -----------------------------------------------------------------------------

def _check_expr(tokens, where: str) -> None:
    if not isinstance(tokens, list):
        raise BundleError(f"{where}: expression must be a list")

    def walk(i: int) -> int:
        if i >= len(tokens):
            raise BundleError(f"{where}: truncated expression")
        tok = tokens[i]
        if tok in ("c", "v", "da"):
            if i + 1 >= len(tokens):
                raise BundleError(f"{where}: truncated expression")
            if tok == "v" and not isinstance(tokens[i + 1], str):
                raise BundleError(f"{where}: variable name must be a string")
            if tok == "c" and not isinstance(tokens[i + 1], (bool, int, float, str)):
                raise BundleError(f"{where}: bad constant {tokens[i + 1]!r}")
            return i + 2
        if tok in ("neg", "not"):
            return walk(i + 1)
        if tok in BINARY_OPS:
            return walk(walk(i + 1))
        raise BundleError(f"{where}: unknown expression token {tok!r}")

    if walk(0) != len(tokens):
        raise BundleError(f"{where}: trailing tokens in expression")


def _check_block(block, where: str) -> None:
    if not isinstance(block, list):
        raise BundleError(f"{where}: block must be a list")
    for k, s in enumerate(block):
        w = f"{where}[{k}]"
        if not isinstance(s, list) or not s or s[0] not in STATEMENT_ARITY or \
                len(s) != STATEMENT_ARITY[s[0]]:
            raise BundleError(f"{w}: malformed statement {s!r}")
        tag = s[0]
        if tag == "set":
            _check_expr(s[2], w)
        elif tag == "var":
            if s[2] not in SCALAR_TYPES:
                raise BundleError(f"{w}: unknown type {s[2]!r}")
            _check_expr(s[3], w)
        elif tag == "send":
            if not isinstance(s[3], list):
                raise BundleError(f"{w}: send arguments must be a list")
            for a in s[3]:
                _check_expr(a, w)
        elif tag == "print":
            _check_expr(s[1], w)
        elif tag == "if":
            _check_expr(s[1], w)
            _check_block(s[2], w + ".then")
            _check_block(s[3], w + ".else")
        elif tag == "while":
            _check_expr(s[1], w)
            _check_block(s[2], w + ".body")
        elif s[1] not in DA_KINDS:
            raise BundleError(f"{w}: unknown DA action {s[1]!r}")


def _require(doc: dict, key: str, typ, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise BundleError(f"{where}: missing field '{key}'")
    v = doc[key]
    if not isinstance(v, typ) or (typ is int and isinstance(v, bool)):
        raise BundleError(f"{where}: field '{key}' has the wrong type")
    return v


def _check_thing(t: dict, k: int) -> None:
    where = f"things[{k}]"
    _require(t, "name", str, where)
    states = _require(t, "states", list, where)
    n = len(states)
    if n == 0:
        raise BundleError(f"{where}: no states")
    initial = _require(t, "initial", int, where)
    if not 0 <= initial < n:
        raise BundleError(f"{where}: initial state index {initial} out of range")
    props = _require(t, "properties", list, where)
    for p in props:
        if not (isinstance(p, list) and len(p) == 3 and p[1] in SCALAR_TYPES):
            raise BundleError(f"{where}: malformed property {p!r}")
    msgs = _require(t, "messages", dict, where)
    ports = _require(t, "ports", dict, where)
    for pname, port in ports.items():
        for key in ("receives", "sends"):
            for msg in _require(port, key, list, f"{where}.ports.{pname}"):
                if msg not in msgs:
                    raise BundleError(f"{where}: port {pname} references unknown message {msg}")
    for key in ("entry", "exit"):
        blocks = _require(t, key, list, where)
        if len(blocks) != n:
            raise BundleError(f"{where}: {key} table has {len(blocks)} rows for {n} states")
        for i, b in enumerate(blocks):
            _check_block(b, f"{where}.{key}[{i}]")
    trs = _require(t, "transitions", list, where)
    for i, tr in enumerate(trs):
        w = f"{where}.transitions[{i}]"
        for key in ("source", "target"):
            v = _require(tr, key, int, w)
            if not 0 <= v < n:
                raise BundleError(f"{w}: {key} state index {v} out of range")
        ev = tr.get("event")
        if ev is not None and not (isinstance(ev, list) and len(ev) == 2 and ev[0] in ports
                                   and ev[1] in msgs):
            raise BundleError(f"{w}: bad event {ev!r}")
        if tr.get("guard") is not None:
            _check_expr(tr["guard"], w)
        _check_block(_require(tr, "actions", list, w), w)
    table = _require(t, "table", list, where)
    if len(table) != n:
        raise BundleError(f"{where}: transition table has {len(table)} rows for {n} states")
    for i, row in enumerate(table):
        for j in row:
            if not isinstance(j, int) or not 0 <= j < len(trs) or trs[j]["source"] != i:
                raise BundleError(f"{where}: transition table row {i} has bad index {j!r}")


def load_bundle(source: Union[str, Path, dict]) -> dict:
    """Parse and structurally validate a bundle (path, JSON text or document)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and
                                        not source.lstrip().startswith("{")):
            p = Path(source)
            if not p.is_file():
                raise BundleError(f"bundle file not found: {p}")
            text = p.read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise BundleError(f"bundle is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise BundleError("bundle must be a JSON object")
    version = doc.get("format_version")
    if version != BUNDLE_FORMAT_VERSION:
        raise BundleError(f"unsupported bundle format_version {version!r} "
                          f"(this tool reads {BUNDLE_FORMAT_VERSION})")
    things = _require(doc, "things", list, "bundle")
    for k, t in enumerate(things):
        _check_thing(t, k)
    cfg = _require(doc, "configuration", dict, "bundle")
    insts = _require(cfg, "instances", list, "configuration")
    names = set()
    for inst in insts:
        idx = _require(inst, "thing", int, "configuration.instances")
        if not 0 <= idx < len(things):
            raise BundleError(f"instance {inst.get('name')!r} refers to thing index {idx}, "
                              "out of range")
        names.add(_require(inst, "name", str, "configuration.instances"))
    by_name = {i["name"]: things[i["thing"]] for i in insts}
    for conn in _require(cfg, "connectors", list, "configuration"):
        if not (isinstance(conn, list) and len(conn) == 4):
            raise BundleError(f"malformed connector {conn!r}")
        for inst, port in ((conn[0], conn[1]), (conn[2], conn[3])):
            if inst not in names or port not in by_name[inst]["ports"]:
                raise BundleError(f"connector endpoint {inst}.{port} does not exist")
    return doc


# -- execution ---------------------------------------------------------------------------

class BundleProgram:
    """Program view of one compiled thing."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.name = doc["name"]
        self.properties = [(n, t, coerce(v, t)) for n, t, v in doc["properties"]]
        self.state_names = list(doc["states"])
        self.initial = doc["initial"]
        self.da = doc.get("da")
        trs = doc["transitions"]
        self._rows = [
            [TransitionView(trs[j]["target"], tuple(trs[j]["event"]) if trs[j]["event"] else None,
                            trs[j]["guard"], trs[j]["actions"]) for j in row]
            for row in doc["table"]]
        self._messages = {m: [tuple(p) for p in ps] for m, ps in doc["messages"].items()}

    def message_params(self, message: str):
        return self._messages.get(message)

    def has_port(self, port: str) -> bool:
        return port in self.doc["ports"]

    def receives(self, port: str) -> tuple:
        p = self.doc["ports"].get(port)
        return tuple(p["receives"]) if p else ()

    def entry(self, state: int):
        return self.doc["entry"][state]

    def exit(self, state: int):
        return self.doc["exit"][state]

    def transitions(self, state: int) -> list:
        return self._rows[state]

    def _eval(self, tokens: list, i: int, frame):
        """Evaluate the prefix expression starting at ``i``; returns (value, next index)."""
        tok = tokens[i]
        if tok == "c":
            return tokens[i + 1], i + 2
        if tok == "v":
            return frame.lookup(tokens[i + 1]), i + 2
        if tok == "da":
            raise RuntimeFault(f"'{tokens[i + 1]}' cannot be evaluated as an expression")
        if tok == "neg" or tok == "not":
            v, j = self._eval(tokens, i + 1, frame)
            return unary("-" if tok == "neg" else "not", v), j
        left, j = self._eval(tokens, i + 1, frame)
        if tok == "and" and not left:
            return False, _skip(tokens, j)
        if tok == "or" and left:
            return True, _skip(tokens, j)
        right, k = self._eval(tokens, j, frame)
        return arith(tok, left, right), k

    def evaluate(self, tokens: list, frame):
        return self._eval(tokens, 0, frame)[0]

    def eval_guard(self, guard, frame) -> bool:
        return bool(self.evaluate(guard, frame))

    def run_block(self, block, frame, ctx) -> None:
        frame.push()
        try:
            for s in block:
                self._exec(s, frame, ctx)
        finally:
            frame.pop()

    def _exec(self, s: list, frame, ctx) -> None:
        tag = s[0]
        if tag == "set":
            frame.assign(s[1], self.evaluate(s[2], frame))
        elif tag == "var":
            frame.declare(s[1], s[2], self.evaluate(s[3], frame))
        elif tag == "send":
            args = [self.evaluate(a, frame) for a in s[3]]
            sig = self._messages.get(s[2], [])
            if len(sig) == len(args):
                args = [coerce(a, t) for a, (_, t) in zip(args, sig)]
            ctx.send(s[1], s[2], args)
        elif tag == "print":
            ctx.print(self.evaluate(s[1], frame))
        elif tag == "if":
            self.run_block(s[2] if self.evaluate(s[1], frame) else s[3], frame, ctx)
        elif tag == "while":
            n = 0
            while self.evaluate(s[1], frame):
                n += 1
                if n > MAX_LOOP_ITERATIONS:
                    raise RuntimeFault(f"while loop exceeded {MAX_LOOP_ITERATIONS} iterations")
                self.run_block(s[2], frame, ctx)
        else:
            ctx.da(s[1])


def _skip(tokens: list, i: int) -> int:
    """Index just past the prefix expression starting at ``i``."""
    tok = tokens[i]
    if tok in ("c", "v", "da"):
        return i + 2
    if tok in ("neg", "not"):
        return _skip(tokens, i + 1)
    return _skip(tokens, _skip(tokens, i + 1))


def instantiate_bundle(bundle, data_root=None, seed: int = 0,
                       persist_saves: bool = False) -> Simulation:
    doc = load_bundle(bundle)
    programs = {t["name"]: BundleProgram(t) for t in doc["things"]}
    names = [t["name"] for t in doc["things"]]
    cfg = doc["configuration"]
    if data_root is None:
        # a recorded root is relative to the bundle file's directory
        is_file = isinstance(bundle, (str, Path)) and not str(bundle).lstrip().startswith("{")
        base = Path(bundle).resolve().parent if is_file else Path(".")
        hint = doc.get("data_root")
        data_root = base / hint if hint is not None else base
    return Simulation(programs, [(i["name"], names[i["thing"]]) for i in cfg["instances"]],
                      [tuple(c) for c in cfg["connectors"]], data_root=data_root, seed=seed,
                      pretrained_docs=doc.get("pretrained") or {}, persist_saves=persist_saves)


def run_bundle(bundle, scenario=None, seed: int = 0, data_root=None, max_ticks=None,
               persist_saves: bool = False):
    """Execute a bundle (path, JSON text or loaded document) and return its trace."""
    sim = instantiate_bundle(bundle, data_root, seed, persist_saves)
    return sim.run(scenario, max_ticks)
