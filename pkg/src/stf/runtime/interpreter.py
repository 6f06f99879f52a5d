"""Direct interpretation of a merged, validated model."""

from __future__ import annotations

from typing import Optional

from stf.model import (Assign, Binary, Configuration, DaAction, DaExpr, If, Literal, LocalDecl,
                       Model, Print, Ref, Send, Thing, Unary, While)
from stf.runtime.da import InstantiationError, da_config
from stf.runtime.engine import Simulation, TransitionView
from stf.runtime.values import (MAX_LOOP_ITERATIONS, RuntimeFault, arith, coerce, literal_value,
                                unary, zero_value)


class AstProgram:
    """Program view of one thing, executed by walking its AST."""

    def __init__(self, thing: Thing):
        self.thing = thing
        self.name = thing.name
        self.properties = [
            (p.name, p.type,
             literal_value(p.initial.value, p.initial.type, p.type) if p.initial is not None
             else zero_value(p.type))
            for p in thing.properties]
        sm = thing.behavior
        self.state_names = [s.name for s in sm.states]
        index = {n: i for i, n in enumerate(self.state_names)}
        if sm.initial not in index:
            raise InstantiationError(f"thing '{thing.name}': unknown initial state '{sm.initial}'")
        self.initial = index[sm.initial]
        self._states = sm.states
        self._transitions = [
            [TransitionView(index[t.target], t.event, t.guard, t.actions) for t in s.transitions]
            for s in sm.states]
        self._signatures = {m.name: [(p.name, p.type) for p in m.params] for m in thing.messages}
        self.da = da_config(thing)

    def message_params(self, message: str) -> Optional[list]:
        return self._signatures.get(message)

    def has_port(self, port: str) -> bool:
        return self.thing.get_port(port) is not None

    def receives(self, port: str) -> tuple:
        p = self.thing.get_port(port)
        return tuple(p.receives) if p else ()

    def entry(self, state: int):
        return self._states[state].on_entry

    def exit(self, state: int):
        return self._states[state].on_exit

    def transitions(self, state: int) -> list:
        return self._transitions[state]

    # -- evaluation --------------------------------------------------------------

    def eval(self, e, frame):
        if isinstance(e, Literal):
            return e.value
        if isinstance(e, Ref):
            return frame.lookup(e.name)
        if isinstance(e, Unary):
            return unary(e.op, self.eval(e.operand, frame))
        if isinstance(e, Binary):
            left = self.eval(e.left, frame)
            if e.op == "and" and not left:
                return False
            if e.op == "or" and left:
                return True
            return arith(e.op, left, self.eval(e.right, frame))
        if isinstance(e, DaExpr):
            raise RuntimeFault(f"'{e.kind}' cannot be evaluated as an expression")
        raise RuntimeFault(f"unsupported expression {type(e).__name__}")

    def eval_guard(self, guard, frame) -> bool:
        return bool(self.eval(guard, frame))

    def run_block(self, block, frame, ctx) -> None:
        frame.push()
        try:
            for s in block:
                self._exec(s, frame, ctx)
        finally:
            frame.pop()

    def _exec(self, s, frame, ctx) -> None:
        if isinstance(s, Assign):
            frame.assign(s.target, self.eval(s.value, frame))
        elif isinstance(s, LocalDecl):
            frame.declare(s.name, s.type, self.eval(s.value, frame))
        elif isinstance(s, Send):
            args = [self.eval(a, frame) for a in s.args]
            sig = self._signatures.get(s.message, [])
            args = [coerce(a, t) for a, (_, t) in zip(args, sig)] if len(sig) == len(args) \
                else args
            ctx.send(s.port, s.message, args)
        elif isinstance(s, Print):
            ctx.print(self.eval(s.value, frame))
        elif isinstance(s, If):
            branch = s.then if self.eval(s.cond, frame) else s.orelse
            self.run_block(branch, frame, ctx)
        elif isinstance(s, While):
            n = 0
            while self.eval(s.cond, frame):
                n += 1
                if n > MAX_LOOP_ITERATIONS:
                    raise RuntimeFault(f"while loop exceeded {MAX_LOOP_ITERATIONS} iterations")
                self.run_block(s.body, frame, ctx)
        elif isinstance(s, DaAction):
            ctx.da(s.kind)
        else:
            raise RuntimeFault(f"unsupported statement {type(s).__name__}")


def pick_configuration(m: Model, name: Optional[str] = None) -> Configuration:
    if name is None:
        if not m.configurations:
            raise InstantiationError("model declares no configuration")
        return m.configurations[0]
    c = m.get_configuration(name)
    if c is None:
        raise InstantiationError(f"unknown configuration '{name}'")
    return c


def instantiate(m: Model, config: Optional[str] = None, data_root=None, seed: int = 0,
                persist_saves: bool = False) -> Simulation:
    """Create a simulation of one configuration of a merged, validated model.

    Instances are created in declaration order; properties take their initial
    literal or the type's zero value.  Entry actions run when the simulation
    starts (tick 0).
    """
    c = pick_configuration(m, config)
    programs = {}
    for inst in c.instances:
        t = m.get_thing(inst.thing)
        if t is None:
            raise InstantiationError(f"instance '{inst.name}' refers to unknown thing "
                                     f"'{inst.thing}'")
        if t.is_fragment:
            raise InstantiationError(f"instance '{inst.name}' instantiates fragment '{t.name}'")
        if t.name not in programs:
            programs[t.name] = AstProgram(t)
    return Simulation(programs, [(i.name, i.thing) for i in c.instances],
                      [(k.left_instance, k.left_port, k.right_instance, k.right_port)
                       for k in c.connectors],
                      data_root=data_root, seed=seed, persist_saves=persist_saves)
