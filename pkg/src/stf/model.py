"""Abstract syntax for the thing-modeling language.

Every node is a frozen dataclass.  Source spans ride along on each node but
are excluded from equality, so two models compare equal when they have the
same structure regardless of where they came from.

The module also owns the two model-level transformations that happen before
validation: import merging (PIM/PSM overlay plus fragment flattening) and the
platform-completeness query.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Union

SCALAR_TYPES = ("Int", "Float", "Bool", "String", "Timestamp")

# documented annotation registry
ANNOTATION_KEYS = ("platform", "backend", "dataset_format")

DA_ACTIONS = ("da_save", "da_preprocess", "da_train", "da_predict")

ALGORITHMS = ("baseline", "linear_regression", "logistic_regression", "knn", "gaussian_nb")


class ModelError(Exception):
    """Base class for errors raised while assembling a model."""


class ImportCycleError(ModelError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("cyclic import: " + " -> ".join(cycle))


class MergeConflictError(ModelError):
    pass


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    end_line: int
    end_column: int
    start: int
    end: int
    file: str = "<input>"

    def cover(self, other: "SourceSpan") -> "SourceSpan":
        return SourceSpan(self.line, self.column, other.end_line, other.end_column,
                          self.start, other.end, self.file)

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


def _span() -> Optional[SourceSpan]:
    return field(default=None, compare=False, repr=False)


# -- action language ----------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: Union[int, float, bool, str]
    type: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Ref:
    name: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "not"
    operand: "Expression"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class DaExpr:
    """A DA action written where an expression is expected (e.g. a guard).

    Parsed so the source can be represented faithfully; always rejected by
    the validator.
    """

    kind: str
    span: Optional[SourceSpan] = _span()


Expression = Union[Literal, Ref, Unary, Binary, DaExpr]


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expression
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class LocalDecl:
    name: str
    type: str
    value: Expression
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Send:
    port: str
    message: str
    args: tuple[Expression, ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Print:
    value: Expression
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class If:
    cond: Expression
    then: tuple["Statement", ...]
    orelse: tuple["Statement", ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class While:
    cond: Expression
    body: tuple["Statement", ...]
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class DaAction:
    kind: str
    span: Optional[SourceSpan] = _span()


Statement = Union[Assign, LocalDecl, Send, Print, If, While, DaAction]


# -- structure -----------------------------------------------------------------

@dataclass(frozen=True)
class Annotation:
    key: str
    value: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Property:
    name: str
    type: str
    initial: Optional[Literal] = None
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Param:
    name: str
    type: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Message:
    name: str
    params: tuple[Param, ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Port:
    name: str
    receives: tuple[str, ...] = ()
    sends: tuple[str, ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Hyperparam:
    name: str
    value: Literal
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class ExpertMode:
    algorithm: str
    hyperparams: tuple[Hyperparam, ...] = ()
    span: Optional[SourceSpan] = _span()

    def hyperparam_dict(self) -> dict:
        return {h.name: h.value.value for h in self.hyperparams}


@dataclass(frozen=True)
class AutoMLMode:
    metric: str
    folds: int
    budget: Optional[int] = None
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class DataAnalyticsSpec:
    dataset: str
    features: tuple[str, ...]
    labels: tuple[str, ...]
    mode: Union[ExpertMode, AutoMLMode]
    sequential: Optional[bool] = None
    window: Optional[tuple[int, int]] = None
    scaling: Optional[str] = None
    missing: Optional[str] = None
    pretrained: Optional[str] = None
    annotations: tuple[Annotation, ...] = ()
    span: Optional[SourceSpan] = _span()

    @property
    def backend(self) -> Optional[str]:
        return annotation_value(self.annotations, "backend")

    @property
    def is_sequential(self) -> bool:
        return bool(self.sequential)

    @property
    def scaling_kind(self) -> str:
        return self.scaling or "none"

    @property
    def missing_policy(self) -> str:
        return self.missing or "drop"


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    event: Optional[tuple[str, str]] = None
    guard: Optional[Expression] = None
    actions: tuple[Statement, ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class State:
    name: str
    on_entry: tuple[Statement, ...] = ()
    on_exit: tuple[Statement, ...] = ()
    transitions: tuple[Transition, ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class StateMachine:
    name: str
    initial: str
    states: tuple[State, ...] = ()
    span: Optional[SourceSpan] = _span()

    @property
    def transitions(self) -> tuple[Transition, ...]:
        return tuple(t for s in self.states for t in s.transitions)

    def get_state(self, name: str) -> Optional[State]:
        for s in self.states:
            if s.name == name:
                return s
        return None


@dataclass(frozen=True)
class Thing:
    name: str
    behavior: StateMachine
    is_fragment: bool = False
    includes: tuple[str, ...] = ()
    annotations: tuple[Annotation, ...] = ()
    properties: tuple[Property, ...] = ()
    messages: tuple[Message, ...] = ()
    ports: tuple[Port, ...] = ()
    da: Optional[DataAnalyticsSpec] = None
    span: Optional[SourceSpan] = _span()

    def get_property(self, name: str) -> Optional[Property]:
        return next((p for p in self.properties if p.name == name), None)

    def get_message(self, name: str) -> Optional[Message]:
        return next((m for m in self.messages if m.name == name), None)

    def get_port(self, name: str) -> Optional[Port]:
        return next((p for p in self.ports if p.name == name), None)

    @property
    def backend(self) -> Optional[str]:
        """Effective DA backend: block-level annotation wins over thing-level."""
        if self.da is not None and self.da.backend:
            return self.da.backend
        return annotation_value(self.annotations, "backend")


@dataclass(frozen=True)
class Instance:
    name: str
    thing: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Connector:
    left_instance: str
    left_port: str
    right_instance: str
    right_port: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Configuration:
    name: str
    instances: tuple[Instance, ...] = ()
    connectors: tuple[Connector, ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Import:
    path: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Model:
    imports: tuple[Import, ...] = ()
    things: tuple[Thing, ...] = ()
    configurations: tuple[Configuration, ...] = ()

    def get_thing(self, name: str) -> Optional[Thing]:
        return next((t for t in self.things if t.name == name), None)

    def get_configuration(self, name: str) -> Optional[Configuration]:
        return next((c for c in self.configurations if c.name == name), None)

    @property
    def source_spans(self) -> dict[str, SourceSpan]:
        return {node_id: node.span for node_id, node in iter_nodes(self)
                if getattr(node, "span", None) is not None}


def annotation_value(annotations, key: str) -> Optional[str]:
    value = None
    for a in annotations:
        if a.key == key:
            value = a.value
    return value


# -- traversal ----------------------------------------------------------------

def _iter_expr(e, prefix: str) -> Iterator[tuple[str, object]]:
    yield prefix, e
    if isinstance(e, Unary):
        yield from _iter_expr(e.operand, prefix + "/0")
    elif isinstance(e, Binary):
        yield from _iter_expr(e.left, prefix + "/0")
        yield from _iter_expr(e.right, prefix + "/1")


def _iter_block(stmts, prefix: str) -> Iterator[tuple[str, object]]:
    for i, s in enumerate(stmts):
        sid = f"{prefix}/{i}"
        yield sid, s
        if isinstance(s, (Assign, LocalDecl, Print)):
            yield from _iter_expr(s.value, sid + "/value")
        elif isinstance(s, Send):
            for j, a in enumerate(s.args):
                yield from _iter_expr(a, f"{sid}/arg{j}")
        elif isinstance(s, If):
            yield from _iter_expr(s.cond, sid + "/cond")
            yield from _iter_block(s.then, sid + "/then")
            yield from _iter_block(s.orelse, sid + "/else")
        elif isinstance(s, While):
            yield from _iter_expr(s.cond, sid + "/cond")
            yield from _iter_block(s.body, sid + "/body")


def iter_nodes(m: Model) -> Iterator[tuple[str, object]]:
    """Yield ``(node_id, node)`` for every node, ids being stable paths."""
    for i, imp in enumerate(m.imports):
        yield f"import:{i}", imp
    for ti, t in enumerate(m.things):
        tid = f"thing:{ti}:{t.name}"
        yield tid, t
        for a in t.annotations:
            yield f"{tid}/@{a.key}", a
        for p in t.properties:
            yield f"{tid}/property:{p.name}", p
            if p.initial is not None:
                yield f"{tid}/property:{p.name}/initial", p.initial
        for msg in t.messages:
            yield f"{tid}/message:{msg.name}", msg
            for prm in msg.params:
                yield f"{tid}/message:{msg.name}/param:{prm.name}", prm
        for port in t.ports:
            yield f"{tid}/port:{port.name}", port
        if t.da is not None:
            did = f"{tid}/da"
            yield did, t.da
            yield did + "/mode", t.da.mode
            if isinstance(t.da.mode, ExpertMode):
                for h in t.da.mode.hyperparams:
                    yield f"{did}/mode/{h.name}", h
                    yield f"{did}/mode/{h.name}/value", h.value
            for a in t.da.annotations:
                yield f"{did}/@{a.key}", a
        sm = t.behavior
        sm_id = f"{tid}/statechart"
        yield sm_id, sm
        for si, s in enumerate(sm.states):
            sid = f"{sm_id}/state:{si}:{s.name}"
            yield sid, s
            yield from _iter_block(s.on_entry, sid + "/entry")
            yield from _iter_block(s.on_exit, sid + "/exit")
            for k, tr in enumerate(s.transitions):
                trid = f"{sid}/transition:{k}"
                yield trid, tr
                if tr.guard is not None:
                    yield from _iter_expr(tr.guard, trid + "/guard")
                yield from _iter_block(tr.actions, trid + "/actions")
    for ci, c in enumerate(m.configurations):
        cid = f"configuration:{ci}:{c.name}"
        yield cid, c
        for inst in c.instances:
            yield f"{cid}/instance:{inst.name}", inst
        for k, conn in enumerate(c.connectors):
            yield f"{cid}/connector:{k}", conn


def iter_statements(stmts) -> Iterator[Statement]:
    """Depth-first walk over a statement block, nested blocks included."""
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from iter_statements(s.then)
            yield from iter_statements(s.orelse)
        elif isinstance(s, While):
            yield from iter_statements(s.body)


def node_count(m: Model) -> int:
    return sum(1 for _ in iter_nodes(m))


def uses_da(thing: Thing) -> bool:
    for s in thing.behavior.states:
        blocks = [s.on_entry, s.on_exit] + [t.actions for t in s.transitions]
        for block in blocks:
            if any(isinstance(st, DaAction) for st in iter_statements(block)):
                return True
    return False


# -- import merging -------------------------------------------------------------

Resolver = Callable[[str, str], tuple[str, Model]]


class FileResolver:
    """Loads imported files from disk, relative to the importing file."""

    def __init__(self, parse_fn=None):
        self._cache: dict[str, Model] = {}
        self._parse = parse_fn

    def __call__(self, ref: str, importer: str) -> tuple[str, Model]:
        base = Path(importer).parent if importer and not importer.startswith("<") else Path(".")
        path = (base / ref).resolve()
        key = str(path)
        if key not in self._cache:
            if not path.is_file():
                raise ModelError(f"imported file not found: {ref}")
            parse = self._parse
            if parse is None:
                from stf.parser import parse as parse
            model, diags = parse(path.read_text(encoding="utf-8"), filename=key)
            if diags:
                raise ModelError(f"parse errors in imported file {ref}: " + "; ".join(
                    d.render() for d in diags))
            self._cache[key] = model
        return key, self._cache[key]


def _display(key: str) -> str:
    return Path(key).name if not key.startswith("<") else key


def merge_imports(root: Model, resolver: Optional[Resolver] = None,
                  origin: str = "<root>") -> Model:
    """Flatten ``root`` and everything it imports into one model.

    Same-named things coming from different files are treated as a PIM/PSM
    refinement: the later definition (the importer) may add elements,
    annotations, a backend or a mode, but may not remove or retype anything.
    Thing fragments named in ``includes`` are flattened into their users.
    """
    if not root.imports and not any(t.includes for t in root.things):
        return root
    if root.imports and resolver is None:
        resolver = FileResolver()

    things: list[tuple[str, Thing]] = []
    configs: list[tuple[str, Configuration]] = []
    visited: set[str] = set()

    def collect(model: Model, key: str, stack: list[str]) -> None:
        for imp in model.imports:
            child_key, child = resolver(imp.path, key)
            if child_key in stack:
                cycle = stack[stack.index(child_key):] + [child_key]
                raise ImportCycleError([_display(k) for k in cycle])
            if child_key in visited:
                continue
            collect(child, child_key, stack + [child_key])
        visited.add(key)
        things.extend((key, t) for t in model.things)
        configs.extend((key, c) for c in model.configurations)

    collect(root, origin, [origin])

    merged: list[Thing] = []
    owner: dict[str, str] = {}
    for key, t in things:
        idx = next((i for i, m in enumerate(merged) if m.name == t.name), None)
        if idx is None or owner[t.name] == key:
            # same-file duplicates are left for the validator (E001)
            if idx is None:
                owner[t.name] = key
            merged.append(t)
        else:
            merged[idx] = _refine(merged[idx], t)
            owner[t.name] = key

    merged_configs: list[Configuration] = []
    config_owner: dict[str, str] = {}
    for key, c in configs:
        idx = next((i for i, m in enumerate(merged_configs) if m.name == c.name), None)
        if idx is None or config_owner[c.name] == key:
            if idx is None:
                config_owner[c.name] = key
            merged_configs.append(c)
        else:
            merged_configs[idx] = _refine_configuration(merged_configs[idx], c)
            config_owner[c.name] = key

    merged = _flatten_fragments(merged)
    return Model(imports=(), things=tuple(merged), configurations=tuple(merged_configs))


def _refine(base: Thing, over: Thing) -> Thing:
    name = base.name
    if base.is_fragment != over.is_fragment:
        raise MergeConflictError(f"thing {name}: fragment flag changed")
    props = list(over.properties)
    for p in base.properties:
        q = over.get_property(p.name)
        if q is None:
            raise MergeConflictError(f"thing {name}: overlay removes property {p.name}")
        if q.type != p.type:
            raise MergeConflictError(
                f"thing {name}: overlay retypes property {p.name} from {p.type} to {q.type}")
    for m in base.messages:
        q = over.get_message(m.name)
        if q is None:
            raise MergeConflictError(f"thing {name}: overlay removes message {m.name}")
        if q.params != m.params:
            raise MergeConflictError(f"thing {name}: overlay changes parameters of message {m.name}")
    for p in base.ports:
        q = over.get_port(p.name)
        if q is None:
            raise MergeConflictError(f"thing {name}: overlay removes port {p.name}")
        if not set(p.receives) <= set(q.receives) or not set(p.sends) <= set(q.sends):
            raise MergeConflictError(f"thing {name}: overlay narrows port {p.name}")
    for s in base.behavior.states:
        if over.behavior.get_state(s.name) is None:
            raise MergeConflictError(f"thing {name}: overlay removes state {s.name}")

    da = over.da
    if base.da is not None:
        if over.da is None:
            raise MergeConflictError(f"thing {name}: overlay removes the data_analytics block")
        if not set(base.da.features) <= set(over.da.features) or \
                not set(base.da.labels) <= set(over.da.labels):
            raise MergeConflictError(f"thing {name}: overlay removes DA features or labels")
        da = dataclasses.replace(
            over.da,
            annotations=_merge_annotations(base.da.annotations, over.da.annotations),
            pretrained=over.da.pretrained or base.da.pretrained,
        )

    includes = tuple(dict.fromkeys(base.includes + over.includes))
    return dataclasses.replace(
        over,
        includes=includes,
        annotations=_merge_annotations(base.annotations, over.annotations),
        properties=tuple(props),
        da=da,
    )


def _merge_annotations(base, over) -> tuple[Annotation, ...]:
    merged: dict[str, Annotation] = {}
    for a in base:
        merged[a.key] = a
    for a in over:
        merged[a.key] = a
    return tuple(merged.values())


def _refine_configuration(base: Configuration, over: Configuration) -> Configuration:
    names = {i.name for i in over.instances}
    for inst in base.instances:
        if inst.name not in names:
            raise MergeConflictError(
                f"configuration {base.name}: overlay removes instance {inst.name}")
    return over


def _flatten_fragments(things: list[Thing]) -> list[Thing]:
    by_name = {t.name: t for t in things}
    done: dict[str, Thing] = {}

    def flatten(t: Thing, stack: tuple[str, ...]) -> Thing:
        if t.name in done:
            return done[t.name]
        if not t.includes:
            done[t.name] = t
            return t
        props = list(t.properties)
        msgs = list(t.messages)
        ports = list(t.ports)
        annotations = list(t.annotations)
        da = t.da
        for frag_name in t.includes:
            if frag_name in stack:
                raise MergeConflictError(
                    "cyclic fragment inclusion: " + " -> ".join(stack + (frag_name,)))
            frag = by_name.get(frag_name)
            if frag is None or not frag.is_fragment:
                raise MergeConflictError(f"thing {t.name}: includes unknown fragment {frag_name}")
            frag = flatten(frag, stack + (frag_name,))
            for kind, own, extra in (("property", props, frag.properties),
                                     ("message", msgs, frag.messages),
                                     ("port", ports, frag.ports)):
                existing = {x.name for x in own}
                for x in extra:
                    if x.name in existing:
                        raise MergeConflictError(
                            f"thing {t.name}: {kind} {x.name} from fragment {frag_name} "
                            "clashes with an existing declaration")
                    own.append(x)
                    existing.add(x.name)
            keys = {a.key for a in annotations}
            annotations.extend(a for a in frag.annotations if a.key not in keys)
            if da is None:
                da = frag.da
        out = dataclasses.replace(t, includes=(), properties=tuple(props),
                                  messages=tuple(msgs), ports=tuple(ports),
                                  annotations=tuple(annotations), da=da)
        done[t.name] = out
        return out

    return [flatten(t, (t.name,)) for t in things]


def platform_completeness(m: Model) -> list[str]:
    """Names of DA-enabled, non-fragment things that still lack a backend."""
    return [t.name for t in m.things
            if t.da is not None and not t.is_fragment and not t.backend]


def with_default_backend(m: Model, backend: str) -> Model:
    """Fill every missing DA backend with ``backend`` (``--default-backend``)."""
    things = []
    for t in m.things:
        if t.da is not None and not t.backend:
            da = dataclasses.replace(
                t.da, annotations=t.da.annotations + (Annotation("backend", backend),))
            t = dataclasses.replace(t, da=da)
        things.append(t)
    return dataclasses.replace(m, things=tuple(things))
