"""Recursive-descent parser for ``.stf`` model files.

``parse`` never raises on bad input.  Syntax errors become diagnostics and the
parser resynchronizes at the next top-level ``thing``, ``configuration`` or
``import`` keyword, so one broken declaration does not take its siblings down
with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from stf.lexer import Token, tokenize
from stf.model import (
    ANNOTATION_KEYS, DA_ACTIONS, SCALAR_TYPES, Annotation, Assign, AutoMLMode, Binary,
    Configuration, Connector, DaAction, DaExpr, DataAnalyticsSpec, ExpertMode, Hyperparam,
    If, Import, Instance, Literal, LocalDecl, Message, Model, Param, Port, Print, Property,
    Ref, Send, SourceSpan, State, StateMachine, Thing, Transition, Unary, While,
)

_TOP_LEVEL = ("thing", "configuration", "import")
_COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")
SCALING_KINDS = ("none", "minmax", "zscore")
MISSING_POLICIES = ("drop", "mean_impute")


@dataclass(frozen=True)
class ParseDiagnostic:
    message: str
    span: SourceSpan
    expected: tuple[str, ...] = ()
    rule_id: str = "P001"
    severity: str = "error"

    def render(self) -> str:
        return f"{self.span}: {self.severity}[{self.rule_id}]: {self.message}"


class _SyntaxError(Exception):
    def __init__(self, diag: ParseDiagnostic):
        self.diag = diag


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0
        self.diags: list[ParseDiagnostic] = []

    # -- token helpers ---------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, *lexemes: str) -> bool:
        t = self.tok
        return t.kind in ("keyword", "punct") and t.lexeme in lexemes

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def prev_span(self) -> SourceSpan:
        return self.toks[max(self.pos - 1, 0)].span

    def span_since(self, start: Token) -> SourceSpan:
        return start.span.cover(self.prev_span())

    def fail(self, expected: tuple[str, ...], what: Optional[str] = None) -> None:
        t = self.tok
        exp = " or ".join(expected)
        msg = what or f"expected {exp}, found {t.describe()}"
        raise _SyntaxError(ParseDiagnostic(msg, t.span, expected))

    def expect(self, lexeme: str) -> Token:
        if not self.at(lexeme):
            self.fail((f"'{lexeme}'",))
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.fail(("identifier",))
        return self.advance()

    def int_lit(self) -> int:
        if self.tok.kind != "int":
            self.fail(("integer",))
        return self.advance().value

    def string_lit(self) -> str:
        if self.tok.kind != "string":
            self.fail(("string",))
        return self.advance().value

    def skip_semicolon(self) -> None:
        # optional terminator, accepted after declarations and statements
        if self.at(";"):
            self.advance()

    def type_name(self) -> str:
        if not self.at(*SCALAR_TYPES):
            self.fail(tuple(SCALAR_TYPES))
        return self.advance().lexeme

    # -- top level -------------------------------------------------------------

    def model(self) -> Model:
        imports, things, configs = [], [], []
        while self.tok.kind != "eof":
            start = self.pos
            try:
                if self.at("import"):
                    imports.append(self.import_())
                elif self.at("thing"):
                    things.append(self.thing())
                elif self.at("configuration"):
                    configs.append(self.configuration())
                else:
                    self.fail(("'thing'", "'configuration'", "'import'"))
            except _SyntaxError as e:
                self.diags.append(e.diag)
                self.recover(start)
        return Model(tuple(imports), tuple(things), tuple(configs))

    def recover(self, start: int) -> None:
        if self.pos == start:
            self.advance()
        while self.tok.kind != "eof" and not self.at(*_TOP_LEVEL):
            self.advance()

    def import_(self) -> Import:
        start = self.expect("import")
        path = self.string_lit()
        return Import(path, span=self.span_since(start))

    def annotation(self) -> Annotation:
        start = self.expect("@")
        key_tok = self.tok
        if key_tok.kind not in ("ident", "keyword"):
            self.fail(("annotation key",))
        self.advance()
        if key_tok.lexeme not in ANNOTATION_KEYS:
            raise _SyntaxError(ParseDiagnostic(
                f"unknown annotation key '@{key_tok.lexeme}' (known: "
                + ", ".join("@" + k for k in ANNOTATION_KEYS) + ")",
                key_tok.span, tuple("@" + k for k in ANNOTATION_KEYS), rule_id="P003"))
        value = self.string_lit()
        return Annotation(key_tok.lexeme, value, span=self.span_since(start))

    def thing(self) -> Thing:
        start = self.expect("thing")
        fragment = False
        if self.at("fragment"):
            self.advance()
            fragment = True
        name = self.ident().lexeme
        includes = []
        if self.at("includes"):
            self.advance()
            includes.append(self.ident().lexeme)
            while self.at(","):
                self.advance()
                includes.append(self.ident().lexeme)
        annotations = []
        while self.at("@"):
            annotations.append(self.annotation())
        self.expect("{")
        props, msgs, ports = [], [], []
        while self.at("property"):
            props.append(self.property())
            self.skip_semicolon()
        while self.at("message"):
            msgs.append(self.message())
            self.skip_semicolon()
        while self.at("port"):
            ports.append(self.port())
            self.skip_semicolon()
        da = self.da_block() if self.at("data_analytics") else None
        if not self.at("statechart"):
            expected = []
            if not ports and not da:
                expected += ["'property'", "'message'"] if not msgs else ["'message'"]
            if da is None:
                expected += ["'port'", "'data_analytics'"]
            self.fail(tuple(expected) + ("'statechart'",))
        sm = self.statechart()
        self.expect("}")
        return Thing(name, sm, fragment, tuple(includes), tuple(annotations), tuple(props),
                     tuple(msgs), tuple(ports), da, span=self.span_since(start))

    def literal(self) -> Literal:
        t = self.tok
        if self.at("-") and self.peek().kind in ("int", "float"):
            self.advance()
            num = self.advance()
            return Literal(-num.value, "Int" if num.kind == "int" else "Float",
                           span=t.span.cover(num.span))
        if t.kind == "int":
            self.advance()
            return Literal(t.value, "Int", span=t.span)
        if t.kind == "float":
            self.advance()
            return Literal(t.value, "Float", span=t.span)
        if t.kind == "string":
            self.advance()
            return Literal(t.value, "String", span=t.span)
        if self.at("true", "false"):
            self.advance()
            return Literal(t.lexeme == "true", "Bool", span=t.span)
        self.fail(("literal",))

    def property(self) -> Property:
        start = self.expect("property")
        name = self.ident().lexeme
        self.expect(":")
        typ = self.type_name()
        initial = None
        if self.at("="):
            self.advance()
            initial = self.literal()
        return Property(name, typ, initial, span=self.span_since(start))

    def message(self) -> Message:
        start = self.expect("message")
        name = self.ident().lexeme
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.at(","):
                self.advance()
                params.append(self.param())
        self.expect(")")
        return Message(name, tuple(params), span=self.span_since(start))

    def param(self) -> Param:
        start = self.ident()
        self.expect(":")
        typ = self.type_name()
        return Param(start.lexeme, typ, span=self.span_since(start))

    def ident_list(self) -> tuple[str, ...]:
        names = [self.ident().lexeme]
        while self.tok.kind == "ident":
            names.append(self.advance().lexeme)
        return tuple(names)

    def port(self) -> Port:
        start = self.expect("port")
        name = self.ident().lexeme
        self.expect("{")
        receives: tuple[str, ...] = ()
        sends: tuple[str, ...] = ()
        if self.at("receives"):
            self.advance()
            receives = self.ident_list()
        if self.at("sends"):
            self.advance()
            sends = self.ident_list()
        if not self.at("}"):
            self.fail(("'receives'", "'sends'", "'}'") if not receives and not sends
                      else ("'sends'", "'}'") if not sends else ("identifier", "'}'"))
        self.advance()
        return Port(name, receives, sends, span=self.span_since(start))

    def choice(self, options: tuple[str, ...]) -> str:
        t = self.tok
        if t.kind not in ("ident", "keyword") or t.lexeme not in options:
            self.fail(tuple(f"'{o}'" for o in options))
        return self.advance().lexeme

    def da_block(self) -> DataAnalyticsSpec:
        start = self.expect("data_analytics")
        self.expect("{")
        self.expect("dataset")
        dataset = self.string_lit()
        self.expect("features")
        features = self.ident_list()
        self.expect("labels")
        labels = self.ident_list()
        sequential = window = scaling = missing = None
        if self.at("sequential"):
            self.advance()
            sequential = self.choice(("true", "false")) == "true"
        if self.at("window"):
            self.advance()
            w = self.int_lit()
            self.expect("horizon")
            window = (w, self.int_lit())
        if self.at("scaling"):
            self.advance()
            scaling = self.choice(SCALING_KINDS)
        if self.at("missing"):
            self.advance()
            missing = self.choice(MISSING_POLICIES)
        mode_start = self.tok
        if self.at("model"):
            self.advance()
            algorithm = self.ident().lexeme
            self.expect("{")
            hps = []
            while self.tok.kind == "ident":
                hs = self.advance()
                self.expect("=")
                hps.append(Hyperparam(hs.lexeme, self.literal(), span=self.span_since(hs)))
            self.expect("}")
            mode = ExpertMode(algorithm, tuple(hps), span=self.span_since(mode_start))
        elif self.at("automl"):
            self.advance()
            self.expect("{")
            self.expect("metric")
            metric = self.ident().lexeme
            self.expect("folds")
            folds = self.int_lit()
            budget = None
            if self.at("budget"):
                self.advance()
                budget = self.int_lit()
            self.expect("}")
            mode = AutoMLMode(metric, folds, budget, span=self.span_since(mode_start))
        else:
            expected = ["'model'", "'automl'"]
            if missing is None:
                expected.insert(0, "'missing'")
            if scaling is None and missing is None:
                expected.insert(0, "'scaling'")
            self.fail(tuple(expected))
        pretrained = None
        if self.at("pretrained"):
            self.advance()
            pretrained = self.string_lit()
        annotations = []
        while self.at("@"):
            annotations.append(self.annotation())
        self.expect("}")
        return DataAnalyticsSpec(dataset, features, labels, mode, sequential, window, scaling,
                                 missing, pretrained, tuple(annotations),
                                 span=self.span_since(start))

    def statechart(self) -> StateMachine:
        start = self.expect("statechart")
        name = self.ident().lexeme
        self.expect("init")
        initial = self.ident().lexeme
        self.expect("{")
        states = []
        while self.at("state"):
            states.append(self.state())
        if not self.at("}"):
            self.fail(("'state'", "'}'"))
        self.advance()
        return StateMachine(name, initial, tuple(states), span=self.span_since(start))

    def state(self) -> State:
        start = self.expect("state")
        name = self.ident().lexeme
        self.expect("{")
        on_entry: tuple = ()
        on_exit: tuple = ()
        if self.at("on_entry"):
            self.advance()
            on_entry = self.block()
        if self.at("on_exit"):
            self.advance()
            on_exit = self.block()
        transitions = []
        while self.at("transition"):
            transitions.append(self.transition(name))
        if not self.at("}"):
            self.fail(("'transition'", "'}'"))
        self.advance()
        return State(name, on_entry, on_exit, tuple(transitions), span=self.span_since(start))

    def transition(self, source: str) -> Transition:
        start = self.expect("transition")
        self.expect("->")
        target = self.ident().lexeme
        event = guard = None
        if self.at("event"):
            self.advance()
            port = self.ident().lexeme
            self.expect(".")
            event = (port, self.ident().lexeme)
        if self.at("guard"):
            self.advance()
            guard = self.expr()
        actions: tuple = ()
        if self.at("{"):
            actions = self.block()
        return Transition(source, target, event, guard, actions, span=self.span_since(start))

    def configuration(self) -> Configuration:
        start = self.expect("configuration")
        name = self.ident().lexeme
        self.expect("{")
        instances, connectors = [], []
        while self.at("instance"):
            s = self.advance()
            iname = self.ident().lexeme
            self.expect(":")
            thing = self.ident().lexeme
            instances.append(Instance(iname, thing, span=self.span_since(s)))
        while self.at("connector"):
            s = self.advance()
            li = self.ident().lexeme
            self.expect(".")
            lp = self.ident().lexeme
            self.expect("<->")
            ri = self.ident().lexeme
            self.expect(".")
            rp = self.ident().lexeme
            connectors.append(Connector(li, lp, ri, rp, span=self.span_since(s)))
        if not self.at("}"):
            self.fail(("'connector'", "'}'") if connectors or instances
                      else ("'instance'", "'connector'", "'}'"))
        self.advance()
        return Configuration(name, tuple(instances), tuple(connectors),
                             span=self.span_since(start))

    # -- statements ------------------------------------------------------------

    def block(self) -> tuple:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.fail(("statement", "'}'"))
            stmts.append(self.statement())
            self.skip_semicolon()
        self.advance()
        return tuple(stmts)

    def statement(self):
        t = self.tok
        if self.at(*DA_ACTIONS):
            self.advance()
            return DaAction(t.lexeme, span=t.span)
        if self.at("var"):
            self.advance()
            name = self.ident().lexeme
            self.expect(":")
            typ = self.type_name()
            self.expect("=")
            value = self.expr()
            return LocalDecl(name, typ, value, span=self.span_since(t))
        if self.at("print"):
            self.advance()
            return Print(self.expr(), span=self.span_since(t))
        if self.at("if"):
            self.advance()
            cond = self.expr()
            then = self.block()
            orelse: tuple = ()
            if self.at("else"):
                self.advance()
                orelse = self.block()
            return If(cond, then, orelse, span=self.span_since(t))
        if self.at("while"):
            self.advance()
            cond = self.expr()
            return While(cond, self.block(), span=self.span_since(t))
        if t.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "punct" and nxt.lexeme == "=":
                self.advance()
                self.advance()
                return Assign(t.lexeme, self.expr(), span=self.span_since(t))
            if nxt.kind == "punct" and nxt.lexeme == "!":
                self.advance()
                self.advance()
                msg = self.ident().lexeme
                self.expect("(")
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                return Send(t.lexeme, msg, tuple(args), span=self.span_since(t))
            self.advance()
            self.fail(("'='", "'!'"))
        self.fail(("statement",))

    # -- expressions -----------------------------------------------------------

    def expr(self):
        return self.or_expr()

    def or_expr(self):
        left = self.and_expr()
        while self.at("or"):
            self.advance()
            right = self.and_expr()
            left = Binary("or", left, right, span=_cover(left, right))
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at("and"):
            self.advance()
            right = self.not_expr()
            left = Binary("and", left, right, span=_cover(left, right))
        return left

    def not_expr(self):
        if self.at("not"):
            t = self.advance()
            operand = self.not_expr()
            return Unary("not", operand, span=t.span.cover(operand.span))
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.at(*_COMPARISONS):
            op = self.advance().lexeme
            right = self.additive()
            return Binary(op, left, right, span=_cover(left, right))
        return left

    def additive(self):
        left = self.multiplicative()
        while self.at("+", "-"):
            op = self.advance().lexeme
            right = self.multiplicative()
            left = Binary(op, left, right, span=_cover(left, right))
        return left

    def multiplicative(self):
        left = self.unary()
        while self.at("*", "/", "%"):
            op = self.advance().lexeme
            right = self.unary()
            left = Binary(op, left, right, span=_cover(left, right))
        return left

    def unary(self):
        if self.at("-"):
            if self.peek().kind in ("int", "float"):
                return self.literal()
            t = self.advance()
            operand = self.unary()
            return Unary("-", operand, span=t.span.cover(operand.span))
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind in ("int", "float", "string") or self.at("true", "false"):
            return self.literal()
        if t.kind == "ident":
            self.advance()
            return Ref(t.lexeme, span=t.span)
        if self.at(*DA_ACTIONS):
            self.advance()
            return DaExpr(t.lexeme, span=t.span)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail(("expression",))


def _cover(a, b) -> Optional[SourceSpan]:
    if a.span is None or b.span is None:
        return a.span or b.span
    return a.span.cover(b.span)


def parse(text: str, filename: str = "<input>") -> tuple[Optional[Model], list[ParseDiagnostic]]:
    """Parse ``text`` into a model plus syntax diagnostics.

    The model holds every top-level declaration that parsed cleanly; it is
    returned even when diagnostics are present.
    """
    tokens, lex_errors = tokenize(text, filename)
    p = _Parser(tokens)
    model = p.model()
    diags = [ParseDiagnostic(e.message, e.span, rule_id="P002") for e in lex_errors]
    diags.extend(p.diags)
    diags.sort(key=lambda d: (d.span.start, d.span.end))
    return model, diags


def parse_file(path) -> tuple[Optional[Model], list[ParseDiagnostic]]:
    from pathlib import Path

    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), filename=str(path))
