"""Trace events and their JSON Lines form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

EVENT_KINDS = ("state_enter", "state_exit", "send", "receive", "assign", "print",
               "da_save", "da_preprocess", "da_train", "da_predict", "error", "note")


@dataclass
class TraceEvent:
    tick: int
    kind: str
    instance: str
    data: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = dict(self.data)
        rec.update(tick=self.tick, kind=self.kind, instance=self.instance)
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, ensure_ascii=False)


class Trace(list):
    """Ordered list of events; serializes one event per line."""

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    def of_kind(self, *kinds: str) -> list[TraceEvent]:
        return [e for e in self if e.kind in kinds]


def read_trace(path: Union[str, Path]) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()]


def records(events: Iterable[TraceEvent]) -> list[dict]:
    return [e.to_record() for e in events]
