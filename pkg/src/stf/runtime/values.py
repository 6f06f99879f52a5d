"""Runtime values, coercions and the variable frame shared by both executors."""

from __future__ import annotations

import math
from typing import Callable, Optional

# guards against runaway `while` loops; exceeding it is a runtime fault
MAX_LOOP_ITERATIONS = 100_000

ZERO = {"Int": 0, "Float": 0.0, "Bool": False, "String": "", "Timestamp": 0}


class RuntimeFault(Exception):
    """A dynamic error in the action language; halts the faulting instance."""


def zero_value(typ: str):
    return ZERO[typ]


def coerce(value, typ: str):
    """Convert a well-typed value to the storage form of ``typ``."""
    if typ == "Float":
        return float(value)
    if typ in ("Int", "Timestamp"):
        if isinstance(value, float):
            raise RuntimeFault(f"cannot store Float {value!r} in {typ}")
        return int(value)
    return value


def literal_value(value, lit_type: str, typ: str):
    """Initial value of a property declared ``typ`` with a literal of ``lit_type``."""
    if typ == "Timestamp" and lit_type == "String":
        from stf.ml.dataset import parse_timestamp
        return parse_timestamp(value)
    return coerce(value, typ)


def to_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_arg(text: str, typ: str):
    """Parse a scenario argument according to a message parameter type."""
    text = text.strip()
    if typ == "Int":
        return int(text)
    if typ == "Float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError(f"non-finite Float {text!r}")
        return v
    if typ == "Bool":
        if text not in ("true", "false"):
            raise ValueError(f"expected true or false, got {text!r}")
        return text == "true"
    if typ == "Timestamp":
        if text.lstrip("-").isdigit():
            return int(text)
        from stf.ml.dataset import parse_timestamp
        return parse_timestamp(text)
    return text


def _numeric(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def arith(op: str, a, b):
    """Binary operator semantics.

    ``+`` with a String operand concatenates text forms.  Int ``/`` and ``%``
    floor like Python; any division by zero is a fault.
    """
    if op == "and":
        return bool(a) and bool(b)
    if op == "or":
        return bool(a) or bool(b)
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "+" and (isinstance(a, str) or isinstance(b, str)):
        return to_text(a) + to_text(b)
    if not (_numeric(a) and _numeric(b)):
        raise RuntimeFault(f"operator '{op}' applied to {to_text(a)!r} and {to_text(b)!r}")
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op in ("/", "%"):
        if b == 0:
            raise RuntimeFault("division by zero")
        both_int = isinstance(a, int) and isinstance(b, int)
        if op == "/":
            return a // b if both_int else a / b
        return a % b
    raise RuntimeFault(f"unknown operator '{op}'")


def unary(op: str, v):
    if op == "not":
        return not v
    if not _numeric(v):
        raise RuntimeFault(f"cannot negate {to_text(v)!r}")
    return -v


class Frame:
    """Variable lookup for one action execution.

    Resolution order is innermost local scope, then the triggering message's
    parameters, then the instance properties.  Property writes are reported
    through ``on_assign`` so the engine can trace them.
    """

    def __init__(self, props: dict, prop_types: dict, params: Optional[dict] = None,
                 on_assign: Optional[Callable] = None):
        self.props = props
        self.prop_types = prop_types
        self.params = params or {}
        self.scopes: list[dict] = []
        self.on_assign = on_assign

    def push(self) -> None:
        self.scopes.append({})

    def pop(self) -> None:
        self.scopes.pop()

    def lookup(self, name: str):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name][1]
        if name in self.params:
            return self.params[name]
        if name in self.props:
            return self.props[name]
        raise RuntimeFault(f"unknown name '{name}'")

    def declare(self, name: str, typ: str, value) -> None:
        self.scopes[-1][name] = (typ, coerce(value, typ))

    def assign(self, name: str, value) -> None:
        for scope in reversed(self.scopes):
            if name in scope:
                typ = scope[name][0]
                scope[name] = (typ, coerce(value, typ))
                return
        if name in self.prop_types:
            v = coerce(value, self.prop_types[name])
            self.props[name] = v
            if self.on_assign is not None:
                self.on_assign(name, v)
            return
        raise RuntimeFault(f"cannot assign to '{name}'")
