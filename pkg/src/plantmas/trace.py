"""Append-only run traces: newline-delimited JSON records.

Records are strictly ordered by (tick, per-tick sequence number) and the
sequence is gap-free, which makes traces byte-diffable and replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    seq: int
    clock: float
    source: str
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "tick": self.tick,
                "seq": self.seq,
                "clock": round(self.clock, 9),
                "source": self.source,
                "kind": self.kind,
                "payload": self.payload,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


class Trace:
    def __init__(self):
        self.records: list[TraceRecord] = []
        self._seq = 0
        self.tick = 0
        self.clock = 0.0

    def set_time(self, tick: int, clock: float) -> None:
        self.tick = tick
        self.clock = clock

    def add(self, source: str, kind: str, payload: dict) -> TraceRecord:
        rec = TraceRecord(self.tick, self._seq, self.clock, source, kind, payload)
        self._seq += 1
        self.records.append(rec)
        return rec

    def hook(self, source: str):
        """Trace callback suitable for Agent(trace=...)."""
        def fn(kind: str, payload: dict) -> None:
            self.add(source, kind, payload)
        return fn

    def filter(self, kind: Optional[str] = None, source: Optional[str] = None) -> list[TraceRecord]:
        return [
            r for r in self.records
            if (kind is None or r.kind == kind) and (source is None or r.source == source)
        ]

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for rec in self.records:
                f.write(rec.to_json())
                f.write("\n")


def read_trace(path: str | Path) -> Iterator[dict]:
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def check_wellformed(records: list[dict]) -> list[str]:
    """Gap-free sequence, monotone (tick, seq) order; returns violations."""
    problems = []
    for i, rec in enumerate(records):
        if rec["seq"] != i:
            problems.append(f"record {i}: seq {rec['seq']} breaks the gap-free sequence")
            break
    for prev, cur in zip(records, records[1:]):
        if (cur["tick"], cur["seq"]) <= (prev["tick"], prev["seq"]):
            problems.append(f"records not ordered at seq {cur['seq']}")
            break
    return problems


def diff_traces(path_a: str | Path, path_b: str | Path) -> Optional[str]:
    """Returns a description of the first divergence, or None if identical."""
    with open(path_a, "rb") as fa, open(path_b, "rb") as fb:
        lineno = 0
        while True:
            la, lb = fa.readline(), fb.readline()
            lineno += 1
            if la != lb:
                return (
                    f"line {lineno} differs:\n  a: {la.decode(errors='replace').strip()}"
                    f"\n  b: {lb.decode(errors='replace').strip()}"
                )
            if not la:
                return None
