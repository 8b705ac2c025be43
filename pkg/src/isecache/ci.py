"""Custom-instruction identification, selection and program/trace rewriting.

Candidates are contiguous static ranges ``[start, start+length)``. A range
qualifies only if every dynamic execution of it is complete, i.e. every
time the trace touches an index in the range it is part of an unbroken
``start, start+1, ..., start+length-1`` run.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .cache import AccessStats
from .errors import ParseError, SubstitutionError, ValidationError
from .program import BRANCH, LOAD, STORE, DynamicTrace, InstructionRecord, StaticProgram

DEFAULT_FORBIDDEN = frozenset({BRANCH, LOAD, STORE})


@dataclass(frozen=True)
class CiConstraints:
    max_len: int = 8
    max_inputs: int = 2
    max_outputs: int = 1
    forbid_classes: frozenset = DEFAULT_FORBIDDEN

    def __post_init__(self):
        object.__setattr__(self, "forbid_classes", frozenset(self.forbid_classes))
        if self.max_len < 2:
            raise ValueError(f"max_len must be >= 2, got {self.max_len}")
        if self.max_inputs < 0 or self.max_outputs < 0:
            raise ValueError("port limits must be non-negative")


@dataclass(frozen=True, order=True)
class CiCandidate:
    start_index: int
    length: int
    ext_inputs: int = 0
    ext_outputs: int = 0
    exec_count: int = 0

    def __post_init__(self):
        if self.length < 2:
            raise ValidationError(f"CI length must be >= 2, got {self.length}")
        if self.start_index < 0:
            raise ValidationError(f"negative CI start {self.start_index}")

    @property
    def stop(self) -> int:
        return self.start_index + self.length

    @property
    def merit(self) -> int:
        """Instruction fetches saved over the whole trace."""
        return self.exec_count * (self.length - 1)

    def overlaps(self, other: "CiCandidate") -> bool:
        return self.start_index < other.stop and other.start_index < self.stop


@dataclass(frozen=True)
class CiSelection:
    chosen: tuple[CiCandidate, ...] = ()

    def __post_init__(self):
        chosen = tuple(self.chosen)
        ordered = sorted(chosen, key=lambda c: c.start_index)
        for a, b in zip(ordered, ordered[1:]):
            if a.overlaps(b):
                raise ValidationError(
                    f"selected CIs [{a.start_index},{a.stop}) and [{b.start_index},{b.stop}) overlap"
                )
        object.__setattr__(self, "chosen", chosen)

    def __len__(self):
        return len(self.chosen)

    def __iter__(self):
        return iter(self.chosen)

    @property
    def saved_instructions(self) -> int:
        return sum(c.length - 1 for c in self.chosen)


@dataclass(frozen=True)
class RewriteResult:
    program: StaticProgram
    trace: DynamicTrace
    index_map: tuple[int, ...]
    selection: CiSelection = field(default_factory=CiSelection)

    @property
    def code_size_before(self) -> int:
        return len(self.index_map)

    @property
    def code_size_after(self) -> int:
        return len(self.program)


# -- dataflow -------------------------------------------------------------------


def live_after(program: StaticProgram) -> list[frozenset]:
    """``live[p]``: registers read at some ``m >= p`` before any overwrite.

    Nothing is live past the last instruction; the static order is the only
    control flow considered.
    """
    live = [frozenset()] * (len(program) + 1)
    cur = frozenset()
    for p in range(len(program) - 1, -1, -1):
        rec = program[p]
        if rec.dst is not None:
            cur = cur - {rec.dst}
        cur = cur | set(rec.srcs)
        live[p] = cur
    return live


def range_io(program: StaticProgram, start: int, stop: int, live=None) -> tuple[list[int], list[int]]:
    """External input and output registers of ``[start, stop)``, in first-touch order."""
    live = live if live is not None else live_after(program)
    inputs, written = [], []
    for rec in program.instructions[start:stop]:
        for s in rec.srcs:
            if s not in written and s not in inputs:
                inputs.append(s)
        if rec.dst is not None and rec.dst not in written:
            written.append(rec.dst)
    return inputs, [r for r in written if r in live[stop]]


# -- identification -------------------------------------------------------------


def _trace_profile(n: int, events: Sequence[int]):
    """Per static index: execution count and shortest ascending run starting there."""
    count = [0] * n
    min_run = [0] * n
    run = 0
    for pos in range(len(events) - 1, -1, -1):
        e = events[pos]
        if pos + 1 < len(events) and events[pos + 1] == e + 1:
            run += 1
        else:
            run = 1
        if count[e] == 0 or run < min_run[e]:
            min_run[e] = run
        count[e] += 1
    return count, min_run


def enumerate_candidates(program: StaticProgram, trace: DynamicTrace,
                         constraints: CiConstraints | None = None) -> list[CiCandidate]:
    """Every legal, executed, always-complete window of length 2..max_len."""
    c = constraints or CiConstraints()
    if len(trace) == 0:
        raise ValueError("enumerate_candidates needs a nonempty trace")
    trace.validate(program)
    n = len(program)
    count, min_run = _trace_profile(n, trace.events)
    live = live_after(program)
    out = []
    for k in range(n):
        if count[k] == 0 or program[k].opcode_class in c.forbid_classes:
            continue
        inputs, written = set(), []
        _absorb(program[k], inputs, written)
        for j in range(2, c.max_len + 1):
            stop = k + j
            if stop > n:
                break
            rec = program[stop - 1]
            # any failure below also fails every longer window from k
            if rec.opcode_class in c.forbid_classes or count[stop - 1] != count[k] or min_run[k] < j:
                break
            _absorb(rec, inputs, written)
            if len(inputs) > c.max_inputs:
                break
            n_out = sum(1 for r in written if r in live[stop])
            if n_out <= c.max_outputs:
                out.append(CiCandidate(k, j, len(inputs), n_out, count[k]))
    return out


def _absorb(rec: InstructionRecord, inputs: set, written: list):
    for s in rec.srcs:
        if s not in written:
            inputs.add(s)
    if rec.dst is not None and rec.dst not in written:
        written.append(rec.dst)


def greedy_select(candidates: Iterable[CiCandidate], budget: int | None = None) -> CiSelection:
    """Highest merit first, skipping overlaps; ties go to lower start, then longer."""
    ranked = sorted(candidates, key=lambda c: (-c.merit, c.start_index, -c.length))
    chosen: list[CiCandidate] = []
    for cand in ranked:
        if budget is not None and len(chosen) >= budget:
            break
        if not any(cand.overlaps(o) for o in chosen):
            chosen.append(cand)
    return CiSelection(tuple(chosen))


# -- substitution ---------------------------------------------------------------


def substitute(program: StaticProgram, trace: DynamicTrace, selection: CiSelection) -> RewriteResult:
    """Collapse each selected range into one custom instruction.

    The custom record for selection entry ``i`` has opcode ``ci<i>``; its
    sources are the range's external inputs and its destination the sole
    live-out register (the first one if the range has several, none if it
    has none).
    """
    n = len(program)
    trace.validate(program)
    by_start = {}
    for ci_id, cand in enumerate(selection.chosen):
        if cand.stop > n:
            raise SubstitutionError(f"ci{ci_id} [{cand.start_index},{cand.stop}) exceeds program of {n}")
        by_start[cand.start_index] = (ci_id, cand)

    live = live_after(program)
    index_map = [0] * n
    records = []
    i = 0
    while i < n:
        new_idx = len(records)
        if i in by_start:
            ci_id, cand = by_start[i]
            inputs, outputs = range_io(program, cand.start_index, cand.stop, live)
            dst = outputs[0] if outputs else None
            records.append(InstructionRecord(new_idx, f"ci{ci_id}", dst, tuple(inputs), ci_id))
            for old in range(cand.start_index, cand.stop):
                index_map[old] = new_idx
            i = cand.stop
        else:
            old = program[i]
            records.append(InstructionRecord(new_idx, old.opcode, old.dst, old.srcs, old.ci_id))
            index_map[i] = new_idx
            i += 1
    new_program = StaticProgram(tuple(records), program.instruction_width, program.base)

    owner = {}
    for ci_id, cand in enumerate(selection.chosen):
        for old in range(cand.start_index, cand.stop):
            owner[old] = (ci_id, cand)
    events = trace.events
    out = []
    pos = 0
    while pos < len(events):
        e = events[pos]
        hit = owner.get(e)
        if hit is None:
            out.append(index_map[e])
            pos += 1
            continue
        ci_id, cand = hit
        k, j = cand.start_index, cand.length
        if e != k or tuple(events[pos:pos + j]) != tuple(range(k, k + j)):
            raise SubstitutionError(
                f"partial execution of ci{ci_id} [{k},{k + j}) at trace position {pos}"
            )
        out.append(index_map[k])
        pos += j
    return RewriteResult(new_program, DynamicTrace.from_events(out), tuple(index_map), selection)


# -- reduction statistics -------------------------------------------------------


@dataclass(frozen=True)
class ReductionStats:
    access_red_pct: float
    hit_red_pct: float
    miss_red_pct: float


def _pct(before, after):
    return 100.0 * (before - after) / before if before else 0.0


def reduction_stats(before: AccessStats, after: AccessStats) -> ReductionStats:
    return ReductionStats(
        _pct(before.total, after.total),
        _pct(before.hits, after.hits),
        _pct(before.misses, after.misses),
    )


# -- selection file -------------------------------------------------------------

_CI_LINE = re.compile(
    r"^ci\s+(\d+)\s+start=(\d+)\s+len=(\d+)\s+inputs=(\d+)\s+outputs=(\d+)\s+execs=(\d+)$"
)


def format_selection(selection: CiSelection) -> str:
    lines = [
        f"ci {i} start={c.start_index} len={c.length} inputs={c.ext_inputs} "
        f"outputs={c.ext_outputs} execs={c.exec_count}"
        for i, c in enumerate(selection.chosen)
    ]
    return "".join(line + "\n" for line in lines)


def parse_selection(text: str, path=None) -> CiSelection:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _CI_LINE.match(line)
        if not m:
            raise ParseError(f"bad CI line {line!r}", lineno, path)
        ci_id, k, j, ins, outs, execs = map(int, m.groups())
        if ci_id in entries:
            raise ParseError(f"duplicate ci id {ci_id}", lineno, path)
        try:
            entries[ci_id] = CiCandidate(k, j, ins, outs, execs)
        except ValidationError as exc:
            raise ParseError(str(exc), lineno, path) from None
    if sorted(entries) != list(range(len(entries))):
        raise ValidationError(f"ci ids must be 0..{len(entries) - 1}, got {sorted(entries)}")
    return CiSelection(tuple(entries[i] for i in range(len(entries))))


def load_selection(path) -> CiSelection:
    path = Path(path)
    return parse_selection(path.read_text(encoding="utf-8"), path=path)


def save_selection(selection: CiSelection, path) -> None:
    Path(path).write_text(format_selection(selection), encoding="utf-8")
