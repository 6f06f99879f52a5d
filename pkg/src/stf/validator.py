"""Design-time model checking.

Structural rules, a small type checker for the action language, and the
ML-aware rules for data-analytics blocks.  Every finding is a
:class:`Diagnostic`; errors block code generation, warnings and hints never do.

Rule catalog::

    E001 duplicate name               E007 connector incompatibility
    E002 port uses undeclared message E008 unknown initial/target or unreachable state
    E003 event not receivable on port E009 type error
    E004 DA feature/label problem     E010 window without sequential / bad window
    E005 da_* action without DA block E011 pretrained model schema mismatch
    E006 algorithm/label mismatch     E012 da_* in expression (guard) position
    W101 da_predict reachable untrained
    W102 required receiving port never connected
    W103 da_train reachable without da_preprocess
    H201 fewer than 10 rows per feature
    H202 expert mode with no hyperparameters
    H203 zscore scaling over a constant column
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from stf.model import (
    Assign, AutoMLMode, Binary, Configuration, DaAction, DaExpr, DataAnalyticsSpec, ExpertMode,
    If, Literal, LocalDecl, Model, Print, Ref, Send, SourceSpan, StateMachine, Thing, Unary,
    While, iter_statements,
)

ERROR, WARNING, HINT = "error", "warning", "hint"

RULES = {
    "E001": (ERROR, "duplicate name"),
    "E002": (ERROR, "port references undeclared message"),
    "E003": (ERROR, "transition event not receivable on port"),
    "E004": (ERROR, "DA feature/label references unknown property"),
    "E005": (ERROR, "DA action in a thing without a DA block"),
    "E006": (ERROR, "algorithm incompatible with label type"),
    "E007": (ERROR, "connector message-set incompatibility"),
    "E008": (ERROR, "unknown or unreachable state"),
    "E009": (ERROR, "type error"),
    "E010": (ERROR, "window requires sequential data"),
    "E011": (ERROR, "pretrained model schema mismatch"),
    "E012": (ERROR, "DA action in guard position"),
    "W101": (WARNING, "prediction possibly before training"),
    "W102": (WARNING, "receiving port never connected"),
    "W103": (WARNING, "training possibly before preprocessing"),
    "H201": (HINT, "small dataset"),
    "H202": (HINT, "expert mode without hyperparameters"),
    "H203": (HINT, "zscore over constant column"),
}

# H201 threshold: rows per feature
MIN_ROWS_PER_FEATURE = 10

CLASSIFICATION_TYPES = ("Bool", "String")
REGRESSION_TYPES = ("Int", "Float")
NUMERIC_TYPES = ("Int", "Float", "Timestamp")


@dataclass(frozen=True)
class Diagnostic:
    rule_id: str
    severity: str
    message: str
    span: Optional[SourceSpan] = None
    related: tuple = ()

    @property
    def is_error(self) -> bool:
        return self.severity == ERROR

    def sort_key(self):
        s = self.span
        if s is None:
            return ("", 0, 0, self.rule_id, self.message)
        return (s.file, s.start, s.end, self.rule_id, self.message)

    def render(self) -> str:
        loc = str(self.span) if self.span is not None else "<unknown>:0:0"
        return f"{loc}: {self.severity}[{self.rule_id}]: {self.message}"

    def to_record(self) -> dict:
        s = self.span
        rec = {"rule": self.rule_id, "severity": self.severity, "message": self.message}
        if s is not None:
            rec["span"] = {"file": s.file, "line": s.line, "column": s.column,
                           "end_line": s.end_line, "end_column": s.end_column}
        else:
            rec["span"] = None
        return rec


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


def report_json(diags: Iterable[Diagnostic]) -> str:
    """Machine-readable report: one record per diagnostic."""
    return json.dumps([d.to_record() for d in diags], indent=2, sort_keys=True) + "\n"


# -- dataset metadata -------------------------------------------------------------

class DataProvider:
    """Loads datasets and pretrained model files for the data-dependent rules.

    Relative paths resolve against ``root``.  Results are cached, so repeated
    validation of one model sees the same files.
    """

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else Path(".")
        self._datasets: dict = {}
        self._models: dict = {}

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.root / p

    def dataset(self, path: str, schema: Optional[dict] = None):
        """The dataset at ``path``, or None when absent or unreadable."""
        from stf.ml.dataset import DatasetError, load_dataset

        key = (path, tuple(sorted((schema or {}).items())))
        if key not in self._datasets:
            p = self.resolve(path)
            try:
                self._datasets[key] = load_dataset(p, schema) if p.is_file() else None
            except (DatasetError, OSError, UnicodeDecodeError):
                self._datasets[key] = None
        return self._datasets[key]

    def model(self, path: str):
        """``(TrainedModel, None)``, ``(None, problem)`` or ``(None, None)`` when absent."""
        from stf.ml.models import ModelFormatError, load_model

        if path not in self._models:
            p = self.resolve(path)
            if not p.is_file():
                self._models[path] = (None, None)
            else:
                try:
                    self._models[path] = (load_model(p), None)
                except ModelFormatError as e:
                    self._models[path] = (None, str(e))
        return self._models[path]


def default_data_root(model_path=None, data_root=None) -> Path:
    if data_root:
        return Path(data_root)
    env = os.environ.get("STF_DATA_ROOT")
    if env:
        return Path(env)
    if model_path:
        return Path(model_path).resolve().parent
    return Path(".")


# -- reachability and DA path facts -----------------------------------------------------

@dataclass
class Reachability:
    reachable: dict
    untrained_predicts: list = field(default_factory=list)
    unprepared_trains: list = field(default_factory=list)
    may_untrained: dict = field(default_factory=dict)
    may_unprepared: dict = field(default_factory=dict)


def _flow(stmts, flag: bool, sets: str, checks: str, hits: list) -> bool:
    """Push "some path has not seen ``sets`` yet" through a block.

    Records every ``checks`` action reached while the flag holds.  A branch
    merges with OR (exists-path), a loop body may run zero times.
    """
    for s in stmts:
        if isinstance(s, DaAction):
            if s.kind == checks and flag:
                hits.append(s)
            if s.kind == sets:
                flag = False
        elif isinstance(s, If):
            a = _flow(s.then, flag, sets, checks, hits)
            b = _flow(s.orelse, flag, sets, checks, hits)
            flag = a or b
        elif isinstance(s, While):
            _flow(s.body, flag, sets, checks, hits)
    return flag


def _path_facts(sm: StateMachine, reachable: dict, sets: str, checks: str):
    entry = {s.name: False for s in sm.states}
    if sm.initial in entry:
        entry[sm.initial] = True
    # iterate to a fixed point; the lattice is boolean so this terminates
    changed = True
    while changed:
        changed = False
        for st in sm.states:
            if not reachable.get(st.name):
                continue
            inside = _flow(st.on_entry, entry[st.name], sets, checks, [])
            for tr in st.transitions:
                if tr.target not in entry:
                    continue
                f = _flow(st.on_exit, inside, sets, checks, [])
                f = _flow(tr.actions, f, sets, checks, [])
                if f and not entry[tr.target]:
                    entry[tr.target] = True
                    changed = True
    hits: list = []
    for st in sm.states:
        if not reachable.get(st.name):
            continue
        inside = _flow(st.on_entry, entry[st.name], sets, checks, hits)
        for tr in st.transitions:
            f = _flow(st.on_exit, inside, sets, checks, hits)
            _flow(tr.actions, f, sets, checks, hits)
    seen, unique = set(), []
    for h in hits:
        if id(h) not in seen:
            seen.add(id(h))
            unique.append(h)
    return entry, unique


def reachability(sm: StateMachine) -> Reachability:
    """Graph reachability from the initial state plus DA path facts.

    ``untrained_predicts`` lists the ``da_predict`` statements that some path
    from the initial state reaches without passing a ``da_train``;
    ``unprepared_trains`` does the same for ``da_train`` versus
    ``da_preprocess``.  Every transition is treated as external: the source
    state's exit actions and the target's entry actions run even on self-loops.
    """
    names = {s.name for s in sm.states}
    reachable = {s.name: False for s in sm.states}
    if sm.initial in names:
        reachable[sm.initial] = True
        queue = [sm.initial]
        while queue:
            cur = sm.get_state(queue.pop(0))
            for tr in cur.transitions:
                if tr.target in names and not reachable[tr.target]:
                    reachable[tr.target] = True
                    queue.append(tr.target)
    untrained, predicts = _path_facts(sm, reachable, "da_train", "da_predict")
    unprepared, trains = _path_facts(sm, reachable, "da_preprocess", "da_train")
    return Reachability(reachable, predicts, trains, untrained, unprepared)


# -- type checking -------------------------------------------------------------------

def assignable(target: str, value: Optional[str]) -> bool:
    if value is None or target == value:
        return True
    if target == "Float" and value in ("Int", "Timestamp"):
        return True
    return target in ("Int", "Timestamp") and value in ("Int", "Timestamp")


class _TypeChecker:
    def __init__(self, thing: Thing, out: list):
        self.thing = thing
        self.out = out
        self.props = {p.name: p.type for p in thing.properties}
        self.params: Optional[dict] = None

    def err(self, msg: str, span) -> None:
        self.out.append(Diagnostic("E009", ERROR, msg, span))

    def lookup(self, name: str, scopes: list[dict]) -> Optional[str]:
        for scope in reversed(scopes):
            if name in scope:
                return scope[name]
        return self.props.get(name)

    def expr(self, e, scopes) -> Optional[str]:
        if isinstance(e, Literal):
            return e.type
        if isinstance(e, DaExpr):
            self.out.append(Diagnostic(
                "E012", ERROR, f"'{e.kind}' is an action and cannot be used as an expression "
                "(guards must be side-effect free)", e.span))
            return None
        if isinstance(e, Ref):
            t = self.lookup(e.name, scopes)
            if t is None and not self._known(e.name, scopes):
                self.err(f"unknown name '{e.name}'", e.span)
            return t
        if isinstance(e, Unary):
            t = self.expr(e.operand, scopes)
            if t is None:
                return None
            if e.op == "not":
                if t != "Bool":
                    self.err(f"'not' needs a Bool operand, got {t}", e.span)
                return "Bool"
            if t not in NUMERIC_TYPES:
                self.err(f"unary '-' needs a numeric operand, got {t}", e.span)
                return None
            return "Int" if t == "Timestamp" else t
        if isinstance(e, Binary):
            return self.binary(e, scopes)
        return None

    def _known(self, name, scopes) -> bool:
        return any(name in s for s in scopes) or name in self.props

    def binary(self, e: Binary, scopes) -> Optional[str]:
        lt = self.expr(e.left, scopes)
        rt = self.expr(e.right, scopes)
        if lt is None or rt is None:
            return "Bool" if e.op in ("and", "or", "==", "!=", "<", "<=", ">", ">=") else None
        op = e.op
        if op in ("and", "or"):
            if lt != "Bool" or rt != "Bool":
                self.err(f"'{op}' needs Bool operands, got {lt} and {rt}", e.span)
            return "Bool"
        if op in ("==", "!="):
            if not (lt == rt or (lt in NUMERIC_TYPES and rt in NUMERIC_TYPES)):
                self.err(f"cannot compare {lt} with {rt}", e.span)
            return "Bool"
        if op in ("<", "<=", ">", ">="):
            ok = (lt in NUMERIC_TYPES and rt in NUMERIC_TYPES) or (lt == rt == "String")
            if not ok:
                self.err(f"'{op}' cannot order {lt} and {rt}", e.span)
            return "Bool"
        if op == "+" and "String" in (lt, rt):
            return "String"
        if lt not in NUMERIC_TYPES or rt not in NUMERIC_TYPES:
            self.err(f"'{op}' needs numeric operands, got {lt} and {rt}", e.span)
            return None
        return "Float" if "Float" in (lt, rt) else "Int"

    def condition(self, e, scopes, what: str) -> None:
        t = self.expr(e, scopes)
        if t is not None and t != "Bool":
            self.err(f"{what} must be Bool, got {t}", getattr(e, "span", None))

    def block(self, stmts, scopes) -> None:
        scopes = scopes + [{}]
        for s in stmts:
            self.statement(s, scopes)

    def statement(self, s, scopes) -> None:
        if isinstance(s, Assign):
            vt = self.expr(s.value, scopes)
            owner = next((sc for sc in reversed(scopes) if s.target in sc), None)
            if owner is not None and owner is self.params:
                self.err(f"cannot assign to message parameter '{s.target}'", s.span)
                return
            tt = self.lookup(s.target, scopes)
            if tt is None:
                if not self._known(s.target, scopes):
                    self.err(f"assignment to unknown name '{s.target}'", s.span)
                return
            if not assignable(tt, vt):
                self.err(f"cannot assign {vt} to '{s.target}' of type {tt}", s.span)
        elif isinstance(s, LocalDecl):
            vt = self.expr(s.value, scopes)
            if not assignable(s.type, vt):
                self.err(f"cannot initialize {s.type} variable '{s.name}' with {vt}", s.span)
            if s.name in scopes[-1]:
                self.out.append(Diagnostic(
                    "E001", ERROR, f"variable '{s.name}' declared twice in one block", s.span))
            scopes[-1][s.name] = s.type
        elif isinstance(s, Send):
            self.send(s, scopes)
        elif isinstance(s, Print):
            self.expr(s.value, scopes)
        elif isinstance(s, If):
            self.condition(s.cond, scopes, "if condition")
            self.block(s.then, scopes)
            self.block(s.orelse, scopes)
        elif isinstance(s, While):
            self.condition(s.cond, scopes, "while condition")
            self.block(s.body, scopes)

    def send(self, s: Send, scopes) -> None:
        arg_types = [self.expr(a, scopes) for a in s.args]
        port = self.thing.get_port(s.port)
        if port is None:
            self.err(f"send on unknown port '{s.port}'", s.span)
            return
        if s.message not in port.sends:
            self.err(f"port '{s.port}' does not send '{s.message}'", s.span)
            return
        msg = self.thing.get_message(s.message)
        if msg is None:
            return  # reported as E002
        if len(s.args) != len(msg.params):
            self.err(f"'{s.message}' takes {len(msg.params)} argument(s), "
                     f"{len(s.args)} given", s.span)
            return
        for prm, at, arg in zip(msg.params, arg_types, s.args):
            if not assignable(prm.type, at):
                self.err(f"argument '{prm.name}' of '{s.message}' expects {prm.type}, got {at}",
                         getattr(arg, "span", None) or s.span)


def _check_behavior(thing: Thing, out: list) -> None:
    tc = _TypeChecker(thing, out)
    sm = thing.behavior
    for st in sm.states:
        tc.params = None
        tc.block(st.on_entry, [])
        tc.block(st.on_exit, [])
        for tr in st.transitions:
            params: dict = {}
            if tr.event is not None:
                msg = thing.get_message(tr.event[1])
                if msg is not None:
                    params = {p.name: p.type for p in msg.params}
            tc.params = params
            if tr.guard is not None:
                tc.condition(tr.guard, [params], "guard")
            tc.block(tr.actions, [params])


# -- structural rules -----------------------------------------------------------------

def _dupes(items, kind: str, scope: str, out: list) -> None:
    seen = set()
    for it in items:
        if it.name in seen:
            out.append(Diagnostic("E001", ERROR, f"duplicate {kind} '{it.name}'{scope}", it.span))
        seen.add(it.name)


def _all_blocks(thing: Thing):
    for st in thing.behavior.states:
        yield st.on_entry
        yield st.on_exit
        for tr in st.transitions:
            yield tr.actions


def _check_thing(thing: Thing, out: list) -> None:
    where = f" in thing '{thing.name}'"
    _dupes(thing.properties, "property", where, out)
    _dupes(thing.messages, "message", where, out)
    _dupes(thing.ports, "port", where, out)
    _dupes(thing.behavior.states, "state", where, out)
    for m in thing.messages:
        _dupes(m.params, "parameter", f" in message '{m.name}'", out)
    for p in thing.properties:
        if p.initial is not None and not _initial_ok(p.type, p.initial):
            out.append(Diagnostic("E009", ERROR, f"property '{p.name}' of type {p.type} cannot "
                                  f"start as {p.initial.type}", p.initial.span or p.span))

    for port in thing.ports:
        for name in tuple(port.receives) + tuple(port.sends):
            if thing.get_message(name) is None:
                out.append(Diagnostic("E002", ERROR, f"port '{port.name}' references undeclared "
                                      f"message '{name}'", port.span))

    sm = thing.behavior
    states = {s.name for s in sm.states}
    if sm.initial not in states:
        out.append(Diagnostic("E008", ERROR, f"initial state '{sm.initial}' is not declared",
                              sm.span))
    for st in sm.states:
        for tr in st.transitions:
            if tr.target not in states:
                out.append(Diagnostic("E008", ERROR, f"transition targets unknown state "
                                      f"'{tr.target}'", tr.span))
            if tr.event is not None:
                pname, mname = tr.event
                port = thing.get_port(pname)
                if port is None:
                    out.append(Diagnostic("E003", ERROR, f"event on unknown port '{pname}'",
                                          tr.span))
                elif mname not in port.receives:
                    out.append(Diagnostic("E003", ERROR, f"port '{pname}' does not receive "
                                          f"'{mname}'", tr.span))
    if sm.initial in states:
        reach = reachability(sm)
        for st in sm.states:
            if not reach.reachable[st.name]:
                out.append(Diagnostic("E008", ERROR, f"state '{st.name}' is unreachable from "
                                      f"initial state '{sm.initial}'", st.span))
    else:
        reach = None

    if thing.da is None:
        for block in _all_blocks(thing):
            for s in iter_statements(block):
                if isinstance(s, DaAction):
                    out.append(Diagnostic("E005", ERROR, f"'{s.kind}' used in thing "
                                          f"'{thing.name}', which has no data_analytics block",
                                          s.span))
    elif reach is not None:
        if not thing.da.pretrained:
            for s in reach.untrained_predicts:
                out.append(Diagnostic("W101", WARNING, "da_predict is reachable from the initial "
                                      "state on a path without da_train and no pretrained model "
                                      "is declared", s.span))
        for s in reach.unprepared_trains:
            out.append(Diagnostic("W103", WARNING, "da_train is reachable on a path without a "
                                  "preceding da_preprocess", s.span))

    _check_behavior(thing, out)
    if thing.da is not None:
        _check_da(thing, thing.da, out)


def _initial_ok(typ: str, lit: Literal) -> bool:
    if typ == "Timestamp" and lit.type == "String":
        from stf.ml.dataset import is_timestamp
        return is_timestamp(lit.value)
    return assignable(typ, lit.type)


def label_task(types: list[str]) -> Optional[str]:
    """Task implied by the label types, or None when they disagree or are unusable."""
    if types and all(t in CLASSIFICATION_TYPES for t in types):
        return "classification"
    if types and all(t in REGRESSION_TYPES for t in types):
        return "regression"
    return None


def _check_da(thing: Thing, da: DataAnalyticsSpec, out: list) -> None:
    from stf.ml.models import METRICS, TASKS_OF, spec_problems

    span = da.span
    for kind, names in (("feature", da.features), ("label", da.labels)):
        seen = set()
        for n in names:
            if thing.get_property(n) is None:
                out.append(Diagnostic("E004", ERROR, f"DA {kind} '{n}' is not a property of "
                                      f"thing '{thing.name}'", span))
            if n in seen:
                out.append(Diagnostic("E004", ERROR, f"DA {kind} '{n}' is listed twice", span))
            seen.add(n)
    if not da.features:
        out.append(Diagnostic("E004", ERROR, "DA block declares no features", span))
    overlap = sorted(set(da.features) & set(da.labels))
    if overlap and not da.is_sequential:
        out.append(Diagnostic("E004", ERROR, "features and labels overlap "
                              f"({', '.join(overlap)}) on non-sequential data", span))

    if da.window is not None:
        if not da.is_sequential:
            out.append(Diagnostic("E010", ERROR, "window/horizon require 'sequential true'", span))
        if da.window[0] < 1 or da.window[1] < 1:
            out.append(Diagnostic("E010", ERROR, "window and horizon must be positive", span))

    label_types = [thing.get_property(n).type for n in da.labels if thing.get_property(n)]
    task = label_task(label_types)
    mode = da.mode
    if label_types and task is None:
        out.append(Diagnostic("E006", ERROR, "labels must be all Bool/String (classification) or "
                              f"all Int/Float (regression), got {', '.join(label_types)}",
                              mode.span or span))
    if isinstance(mode, ExpertMode):
        problems = spec_problems(mode.algorithm, mode.hyperparam_dict())
        for p in problems:
            out.append(Diagnostic("E006", ERROR, p, mode.span or span))
        if not problems and task is not None and task not in TASKS_OF[mode.algorithm]:
            kind = "Float" if task == "regression" else "/".join(sorted(set(label_types)))
            out.append(Diagnostic("E006", ERROR, f"{mode.algorithm} is a "
                                  f"{'/'.join(TASKS_OF[mode.algorithm])} algorithm but the "
                                  f"label type is {kind} ({task})", mode.span or span))
        if not mode.hyperparams:
            out.append(Diagnostic("H202", HINT, f"expert mode '{mode.algorithm}' has no "
                                  "hyperparameters; consider 'automl' to search them",
                                  mode.span or span))
    elif isinstance(mode, AutoMLMode):
        if task is not None and mode.metric not in METRICS[task]:
            out.append(Diagnostic("E006", ERROR, f"metric '{mode.metric}' does not apply to "
                                  f"{task} (use {' or '.join(METRICS[task])})",
                                  mode.span or span))
        if mode.folds < 2:
            out.append(Diagnostic("E006", ERROR, "automl needs at least 2 folds",
                                  mode.span or span))
        if mode.budget is not None and mode.budget < 1:
            out.append(Diagnostic("E006", ERROR, "automl budget must be at least 1",
                                  mode.span or span))


def _check_data(thing: Thing, da: DataAnalyticsSpec, provider: DataProvider, out: list) -> None:
    from stf.ml.dataset import CATEGORICAL, KIND_OF_TYPE

    span = da.span
    types = {p.name: p.type for p in thing.properties}
    if da.pretrained:
        model, problem = provider.model(da.pretrained)
        if problem:
            out.append(Diagnostic("E011", ERROR, f"pretrained model '{da.pretrained}' cannot be "
                                  f"loaded: {problem}", span))
        elif model is not None:
            _check_pretrained(model, da, types, span, out)
    schema = {n: KIND_OF_TYPE[types[n]] for n in tuple(da.features) + tuple(da.labels)
              if n in types}
    ds = provider.dataset(da.dataset, schema)
    if ds is None:
        return
    n_features = len(da.features)
    if n_features and len(ds) < MIN_ROWS_PER_FEATURE * n_features:
        out.append(Diagnostic("H201", HINT, f"dataset '{da.dataset}' has {len(ds)} rows for "
                              f"{n_features} feature(s); at least "
                              f"{MIN_ROWS_PER_FEATURE * n_features} are advisable", span))
    if da.scaling_kind == "zscore":
        for name in da.features:
            if name not in ds.names or ds.column(name).kind == CATEGORICAL:
                continue
            vals = {v for v in ds.values(name) if v is not None}
            if len(vals) <= 1 and len(ds):
                out.append(Diagnostic("H203", HINT, f"zscore scaling: feature '{name}' is "
                                      "constant in the dataset (its scale is fixed to 1)", span))


def _check_pretrained(model, da: DataAnalyticsSpec, types: dict, span, out: list) -> None:
    from stf.ml.dataset import KIND_OF_TYPE

    feats = model.feature_names
    if sorted(feats) != sorted(da.features):
        out.append(Diagnostic("E011", ERROR, f"pretrained model expects features {feats}, the "
                              f"DA block declares {list(da.features)}", span))
        return
    labels = model.label_names
    if da.labels and sorted(labels) != sorted(da.labels):
        out.append(Diagnostic("E011", ERROR, f"pretrained model predicts {labels}, the DA block "
                              f"declares labels {list(da.labels)}", span))
        return
    for c in model.preprocessor.feature_columns_ + model.preprocessor.label_columns_:
        t = types.get(c.name)
        if t is not None and KIND_OF_TYPE[t] != c.kind:
            out.append(Diagnostic("E011", ERROR, f"pretrained model treats '{c.name}' as "
                                  f"{c.kind}, but the property is {t}", span))
    task = label_task([types[n] for n in da.labels if n in types])
    if task is not None and task != model.task:
        out.append(Diagnostic("E011", ERROR, f"pretrained model is a {model.task} model, labels "
                              f"imply {task}", span))
    if model.window is not None and tuple(model.window) != tuple(da.window or ()):
        out.append(Diagnostic("E011", ERROR, f"pretrained model uses window {list(model.window)}"
                              f", the DA block declares {list(da.window) if da.window else None}",
                              span))


def _check_configuration(m: Model, c: Configuration, out: list) -> None:
    _dupes(c.instances, "instance", f" in configuration '{c.name}'", out)
    insts = {}
    for inst in c.instances:
        t = m.get_thing(inst.thing)
        if t is None:
            out.append(Diagnostic("E007", ERROR, f"instance '{inst.name}' refers to unknown thing "
                                  f"'{inst.thing}'", inst.span))
        elif t.is_fragment:
            out.append(Diagnostic("E007", ERROR, f"instance '{inst.name}' instantiates fragment "
                                  f"'{inst.thing}'", inst.span))
        else:
            insts.setdefault(inst.name, t)
    for conn in c.connectors:
        ends = []
        for iname, pname in ((conn.left_instance, conn.left_port),
                             (conn.right_instance, conn.right_port)):
            t = insts.get(iname)
            if t is None:
                if iname not in {i.name for i in c.instances}:
                    out.append(Diagnostic("E007", ERROR, f"connector references unknown instance "
                                          f"'{iname}'", conn.span))
                ends.append(None)
                continue
            port = t.get_port(pname)
            if port is None:
                out.append(Diagnostic("E007", ERROR, f"thing '{t.name}' has no port '{pname}'",
                                      conn.span))
                ends.append(None)
                continue
            ends.append((iname, t, port))
        if None in ends:
            continue
        for (an, at, ap), (bn, bt, bp) in ((ends[0], ends[1]), (ends[1], ends[0])):
            missing = [msg for msg in ap.sends if msg not in bp.receives]
            if missing:
                out.append(Diagnostic("E007", ERROR, f"{an}.{ap.name} sends {', '.join(missing)} "
                                      f"which {bn}.{bp.name} does not receive", conn.span))
            for msg in ap.sends:
                if msg in bp.receives:
                    ma, mb = at.get_message(msg), bt.get_message(msg)
                    if ma is not None and mb is not None and \
                            [p.type for p in ma.params] != [p.type for p in mb.params]:
                        out.append(Diagnostic("E007", ERROR, f"message '{msg}' has different "
                                              f"parameters in '{at.name}' and '{bt.name}'",
                                              conn.span))


def _check_unconnected(m: Model, out: list) -> None:
    connected = set()
    instantiated = set()
    for c in m.configurations:
        names = {i.name: i.thing for i in c.instances}
        instantiated.update(names.values())
        for conn in c.connectors:
            connected.add((names.get(conn.left_instance), conn.left_port))
            connected.add((names.get(conn.right_instance), conn.right_port))
    for t in m.things:
        if t.is_fragment or t.name not in instantiated:
            continue
        used = {tr.event for tr in t.behavior.transitions if tr.event is not None}
        for port in t.ports:
            required = any((port.name, msg) in used for msg in port.receives)
            if required and (t.name, port.name) not in connected:
                out.append(Diagnostic("W102", WARNING, f"port '{port.name}' of thing '{t.name}' "
                                      "receives events but is never connected in any "
                                      "configuration", port.span))


def validate(m: Model, provider: Optional[DataProvider] = None) -> list[Diagnostic]:
    """Run the full rule catalog over a merged model.

    ``provider`` enables the data-dependent rules (E011, H201, H203); without
    it those rules are skipped.  The result is sorted by file and position.
    """
    out: list[Diagnostic] = []
    _dupes(m.things, "thing", "", out)
    _dupes(m.configurations, "configuration", "", out)
    for t in m.things:
        _check_thing(t, out)
        if provider is not None and t.da is not None and not t.is_fragment:
            _check_data(t, t.da, provider, out)
    for c in m.configurations:
        _check_configuration(m, c, out)
    _check_unconnected(m, out)
    unique = list(dict.fromkeys(out))
    return sorted(unique, key=Diagnostic.sort_key)
