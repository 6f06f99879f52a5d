"""Tick scheduler shared by the interpreter and the bundle executor.

The scheduler only sees *programs*: objects describing one thing (properties,
states, transitions, message signatures, DA config) plus two hooks that run
action blocks and evaluate guards.  The interpreter implements them over the
AST, the bundle executor over compiled tables; the scheduling semantics below
are therefore identical by construction.

Tick semantics
--------------
* Instantiation happens at tick 0: every instance enters its initial state
  and runs its entry actions, in declaration order.
* A step at tick ``t`` delivers the scenario injections due at ``t``, then
  visits the instances in declaration order.  An instance takes at most one
  message from its mailbox and fires the first transition (textual order)
  from its current state whose event matches and whose guard holds; exit
  actions, transition actions and entry actions run in that order.  Every
  transition is external, self-loops included.  A message no transition
  accepts is discarded with a note.  An instance with an empty mailbox fires
  at most one enabled eventless transition instead.
* Messages sent during a tick reach the peers' mailboxes at the end of that
  tick, so they are received at ``t + 1`` at the earliest.  A send on a port
  with no connector is dropped with a note.
* A runtime fault (division by zero, loop limit) emits an error event and
  halts that instance.  DA failures emit an error event only.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

from stf.runtime.da import DAContext, DAError, InstantiationError
from stf.runtime.scenario import ScenarioError, ScenarioScript
from stf.runtime.trace import Trace, TraceEvent
from stf.runtime.values import Frame, RuntimeFault, parse_arg

DEFAULT_MAX_TICKS = 10_000


class Program(Protocol):
    name: str
    properties: list  # (name, type, initial value)
    state_names: list
    initial: int
    da: Optional[dict]

    def message_params(self, message: str) -> Optional[list]: ...

    def receives(self, port: str) -> tuple: ...

    def has_port(self, port: str) -> bool: ...

    def entry(self, state: int): ...

    def exit(self, state: int): ...

    def transitions(self, state: int) -> list: ...

    def run_block(self, block, frame: Frame, ctx: "ExecContext") -> None: ...

    def eval_guard(self, guard, frame: Frame) -> bool: ...


@dataclass
class TransitionView:
    target: int
    event: Optional[tuple]
    guard: object
    actions: object


@dataclass
class InstanceState:
    name: str
    program: object
    index: int
    props: dict
    state: int = 0
    mailbox: deque = field(default_factory=deque)
    halted: bool = False
    da: Optional[DAContext] = None


class ExecContext:
    """Side-effect sink handed to executors while an instance runs actions."""

    def __init__(self, sim: "Simulation", inst: InstanceState):
        self.sim = sim
        self.inst = inst

    def send(self, port: str, message: str, args: list) -> None:
        self.sim._emit("send", self.inst, port=port, message=message, args=list(args))
        self.sim._outbox.append((self.inst.name, port, message, list(args)))

    def print(self, value) -> None:
        from stf.runtime.values import to_text
        self.sim._emit("print", self.inst, value=value, text=to_text(value))

    def da(self, kind: str) -> None:
        self.sim._da_action(self.inst, kind)


class Simulation:
    def __init__(self, programs: dict, instances: list, connectors: list,
                 data_root=None, seed: int = 0, pretrained_docs: Optional[dict] = None,
                 persist_saves: bool = False):
        """``instances`` is ``[(name, thing)]``; ``connectors`` is
        ``[(inst, port, inst, port)]``; ``pretrained_docs`` maps a thing name to
        an embedded model document (bundles), overriding file loading."""
        self.programs = programs
        self.seed = int(seed)
        self.data_root = Path(data_root) if data_root is not None else Path(".")
        self.trace = Trace()
        self.tick = 0
        self._outbox: list = []
        self._started = False
        self.instances: list[InstanceState] = []
        for i, (name, thing) in enumerate(instances):
            prog = programs.get(thing)
            if prog is None:
                raise InstantiationError(f"instance '{name}' refers to unknown thing '{thing}'")
            props = {n: v for n, _, v in prog.properties}
            inst = InstanceState(name, prog, i, props, prog.initial)
            if prog.da is not None:
                doc = (pretrained_docs or {}).get(thing)
                inst.da = DAContext(prog.da, self.data_root, self.seed + i, doc, persist_saves)
            self.instances.append(inst)
        self.by_name = {inst.name: inst for inst in self.instances}
        self.routes: dict = {}
        for a, p, b, q in connectors:
            for src, sp, dst, dp in ((a, p, b, q), (b, q, a, p)):
                if src not in self.by_name or dst not in self.by_name:
                    raise InstantiationError(f"connector references unknown instance "
                                             f"'{src if src not in self.by_name else dst}'")
                self.routes.setdefault((src, sp), []).append((dst, dp))

    # -- events ------------------------------------------------------------------

    def _emit(self, kind: str, inst: Optional[InstanceState], **data) -> None:
        self.trace.append(TraceEvent(self.tick, kind, inst.name if inst else "", data))

    def _frame(self, inst: InstanceState, params: Optional[dict] = None) -> Frame:
        types = {n: t for n, t, _ in inst.program.properties}
        return Frame(inst.props, types, params,
                     on_assign=lambda n, v: self._emit("assign", inst, name=n, value=v))

    # -- DA ---------------------------------------------------------------------

    def _da_action(self, inst: InstanceState, kind: str) -> None:
        if inst.da is None:
            self._emit("error", inst, source=kind, message="thing has no data_analytics block")
            return
        try:
            if kind == "da_save":
                self._emit("da_save", inst, **inst.da.save(inst.props))
            elif kind == "da_preprocess":
                self._emit("da_preprocess", inst, **inst.da.preprocess())
            elif kind == "da_train":
                self._emit("da_train", inst, report=inst.da.train())
            elif kind == "da_predict":
                inputs, result = inst.da.predict(inst.props)
                self._emit("da_predict", inst, inputs=inputs, outputs=result["outputs"])
                frame = self._frame(inst)
                for label, value in result["assign"].items():
                    frame.assign(label, value)
        except DAError as e:
            self._emit("error", inst, source=kind, message=str(e))

    # -- execution ---------------------------------------------------------------

    def _run(self, inst: InstanceState, block, params=None) -> bool:
        """Run an action block; returns False if the instance faulted."""
        try:
            inst.program.run_block(block, self._frame(inst, params), ExecContext(self, inst))
            return True
        except RuntimeFault as e:
            self._emit("error", inst, source="runtime", message=str(e))
            self._emit("note", inst, message=f"instance '{inst.name}' halted")
            inst.halted = True
            return False

    def _enter(self, inst: InstanceState, state: int) -> None:
        inst.state = state
        self._emit("state_enter", inst, state=inst.program.state_names[state])
        self._run(inst, inst.program.entry(state))

    def _fire(self, inst: InstanceState, tr: TransitionView, params: Optional[dict]) -> None:
        prog = inst.program
        self._emit("state_exit", inst, state=prog.state_names[inst.state])
        if not self._run(inst, prog.exit(inst.state), params):
            return
        if not self._run(inst, tr.actions, params):
            return
        self._enter(inst, tr.target)

    def _guard(self, inst: InstanceState, guard, params) -> Optional[bool]:
        if guard is None:
            return True
        try:
            return bool(inst.program.eval_guard(guard, self._frame(inst, params)))
        except RuntimeFault as e:
            self._emit("error", inst, source="runtime", message=f"guard: {e}")
            self._emit("note", inst, message=f"instance '{inst.name}' halted")
            inst.halted = True
            return None

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        self.tick = 0
        for inst in self.instances:
            self._enter(inst, inst.program.initial)
        self._flush()

    def _flush(self) -> None:
        out, self._outbox = self._outbox, []
        for src, port, message, args in out:
            targets = self.routes.get((src, port))
            if not targets:
                self._emit("note", self.by_name[src],
                           message=f"dropped {port}!{message}: port is not connected")
                continue
            for dst, dport in targets:
                self.by_name[dst].mailbox.append((dport, message, args))

    def _visit(self, inst: InstanceState) -> None:
        prog = inst.program
        if inst.mailbox:
            port, message, args = inst.mailbox.popleft()
            self._emit("receive", inst, port=port, message=message, args=list(args))
            sig = prog.message_params(message) or []
            params = {name: value for (name, _), value in zip(sig, args)}
            for tr in prog.transitions(inst.state):
                if tr.event != (port, message):
                    continue
                ok = self._guard(inst, tr.guard, params)
                if ok is None:
                    return
                if ok:
                    self._fire(inst, tr, params)
                    return
            self._emit("note", inst, message=f"discarded {port}.{message} in state "
                                             f"{prog.state_names[inst.state]}")
            return
        for tr in prog.transitions(inst.state):
            if tr.event is not None:
                continue
            ok = self._guard(inst, tr.guard, None)
            if ok is None:
                return
            if ok:
                self._fire(inst, tr, None)
                return

    def inject(self, instance: str, port: str, message: str, args) -> None:
        inst = self.by_name.get(instance)
        if inst is None:
            raise ScenarioError(f"unknown instance '{instance}'")
        prog = inst.program
        if not prog.has_port(port):
            raise ScenarioError(f"instance '{instance}' has no port '{port}'")
        if message not in prog.receives(port):
            raise ScenarioError(f"port {instance}.{port} does not receive '{message}'")
        sig = prog.message_params(message) or []
        if len(args) != len(sig):
            raise ScenarioError(f"'{message}' takes {len(sig)} argument(s), {len(args)} given")
        values = []
        for (pname, ptype), a in zip(sig, args):
            if isinstance(a, str):
                try:
                    a = parse_arg(a, ptype)
                except ValueError as e:
                    raise ScenarioError(f"argument '{pname}' of '{message}': {e}") from None
            values.append(a)
        inst.mailbox.append((port, message, values))

    def step(self, injections=()) -> int:
        """Run one tick; returns the number of trace events it produced."""
        before = len(self.trace)
        for inj in injections:
            self.inject(inj.instance, inj.port, inj.message, list(inj.args))
        for inst in self.instances:
            if not inst.halted:
                self._visit(inst)
        self._flush()
        return len(self.trace) - before

    def busy(self) -> bool:
        return any(inst.mailbox and not inst.halted for inst in self.instances)

    def run(self, scenario: Optional[ScenarioScript] = None,
            max_ticks: Optional[int] = None) -> Trace:
        """Step until ``max_ticks`` or quiescence and return the trace."""
        scenario = scenario or ScenarioScript()
        if max_ticks is None:
            max_ticks = scenario.max_ticks if scenario.max_ticks is not None else DEFAULT_MAX_TICKS
        pending = deque(scenario.sorted())
        # reject bad injections before anything runs
        for inj in pending:
            if inj.instance not in self.by_name:
                raise ScenarioError(f"line {inj.line}: unknown instance '{inj.instance}'")
        self.start()
        tick = 0
        while tick <= max_ticks:
            self.tick = tick
            due = []
            while pending and pending[0].tick <= tick:
                due.append(pending.popleft())
            produced = self.step(due)
            if produced == 0 and not self.busy():
                if not pending:
                    break
                # nothing can change until the next injection: skip ahead
                tick = max(tick + 1, pending[0].tick)
                continue
            tick += 1
        return self.trace
