"""Scenario scripts: timed message injections driving a simulation.

One record per line::

    # comment
    max_ticks 500
    3 client net request 10,14

Fields are tick, instance, port, message and an optional comma-separated
argument list.  Records are kept sorted by tick; records with the same tick
keep file order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Injection:
    tick: int
    instance: str
    port: str
    message: str
    args: tuple[str, ...] = ()
    line: int = 0


@dataclass
class ScenarioScript:
    injections: list[Injection] = field(default_factory=list)
    max_ticks: Optional[int] = None

    def sorted(self) -> list[Injection]:
        return sorted(self.injections, key=lambda i: i.tick)


def parse_scenario(text: str, name: str = "<scenario>") -> ScenarioScript:
    script = ScenarioScript()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 4)
        if parts[0] == "max_ticks":
            if len(parts) != 2 or not parts[1].isdigit():
                raise ScenarioError(f"{name}:{lineno}: expected 'max_ticks N'")
            script.max_ticks = int(parts[1])
            continue
        if len(parts) < 4:
            raise ScenarioError(f"{name}:{lineno}: expected 'tick instance port message [args]'")
        if not parts[0].isdigit():
            raise ScenarioError(f"{name}:{lineno}: tick must be a non-negative integer, "
                                f"got {parts[0]!r}")
        args: tuple[str, ...] = ()
        if len(parts) == 5:
            args = tuple(a.strip() for a in parts[4].split(","))
        script.injections.append(Injection(int(parts[0]), parts[1], parts[2], parts[3], args,
                                           lineno))
    script.injections = script.sorted()
    return script


def load_scenario(path: Union[str, Path]) -> ScenarioScript:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text(encoding="utf-8"), path.name)


def format_scenario(script: ScenarioScript) -> str:
    lines = []
    if script.max_ticks is not None:
        lines.append(f"max_ticks {script.max_ticks}")
    for inj in script.sorted():
        rec = f"{inj.tick} {inj.instance} {inj.port} {inj.message}"
        if inj.args:
            rec += " " + ",".join(inj.args)
        lines.append(rec)
    return "\n".join(lines) + "\n"
