"""Static program image, dynamic fetch trace, their text formats and generators.

Program file (``format v1``)::

    format v1
    # index opcode dst src1 src2
    0 add r1 r2 r3
    1 ld  r4 r1
    2 br  -  r4

Trace file (``format v1``)::

    format v1
    trace 803
    0..7 x100
    0 1 2

A trace body is a stream of items. An item is a bare index ``a`` or an
inclusive span ``a..b``, optionally followed by a repeat ``xN``.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from .errors import IntegrityError, ParseError, SpecError, ValidationError

FORMAT_VERSION = 1
NUM_REGISTERS = 32
DEFAULT_INSTRUCTION_WIDTH = 4

ARITHMETIC = "arithmetic"
LOAD = "load"
STORE = "store"
BRANCH = "branch"
CUSTOM = "custom"
OPCODE_CLASSES = (ARITHMETIC, LOAD, STORE, BRANCH, CUSTOM)

_MNEMONIC_CLASS = {
    **dict.fromkeys(["ld", "lw", "lh", "lhu", "lb", "lbu", "lwl", "lwr", "load"], LOAD),
    **dict.fromkeys(["st", "sw", "sh", "sb", "swl", "swr", "store"], STORE),
    **dict.fromkeys(
        ["br", "b", "beq", "bne", "blt", "bge", "bltz", "blez", "bgtz", "bgez",
         "j", "jal", "jr", "jalr", "branch", "jump", "call", "ret"],
        BRANCH,
    ),
    ARITHMETIC: ARITHMETIC,
}
_CUSTOM_RE = re.compile(r"^ci(\d+)$")


def classify(opcode: str) -> str:
    """Map a mnemonic to its opcode class; unknown mnemonics are ALU ops."""
    if _CUSTOM_RE.match(opcode):
        return CUSTOM
    return _MNEMONIC_CLASS.get(opcode.lower(), ARITHMETIC)


def _check_reg(reg, what):
    if not isinstance(reg, int) or not 0 <= reg < NUM_REGISTERS:
        raise ValidationError(f"{what} register {reg!r} out of range 0-{NUM_REGISTERS - 1}")


@dataclass(frozen=True)
class InstructionRecord:
    index: int
    opcode: str
    dst: int | None = None
    srcs: tuple[int, ...] = ()
    ci_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "srcs", tuple(self.srcs))
        if self.index < 0:
            raise ValidationError(f"negative index {self.index}")
        if self.dst is not None:
            _check_reg(self.dst, "dst")
        for s in self.srcs:
            _check_reg(s, "src")
        m = _CUSTOM_RE.match(self.opcode)
        if m:
            if self.ci_id is None:
                object.__setattr__(self, "ci_id", int(m.group(1)))
            elif self.ci_id != int(m.group(1)):
                raise ValidationError(f"opcode {self.opcode} disagrees with ci_id {self.ci_id}")
        elif self.ci_id is not None:
            raise ValidationError(f"non-custom record {self.index} carries ci_id {self.ci_id}")
        elif len(self.srcs) > 2:
            raise ValidationError(
                f"instruction {self.index} has {len(self.srcs)} sources; base instructions take at most 2"
            )

    @property
    def opcode_class(self) -> str:
        return classify(self.opcode)

    @property
    def is_custom(self) -> bool:
        return self.ci_id is not None


@dataclass(frozen=True)
class StaticProgram:
    instructions: tuple[InstructionRecord, ...] = ()
    instruction_width: int = DEFAULT_INSTRUCTION_WIDTH
    base: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if self.instruction_width <= 0:
            raise ValidationError(f"instruction_width must be positive, got {self.instruction_width}")
        if self.base < 0:
            raise ValidationError(f"base address must be non-negative, got {self.base}")
        _check_dense(r.index for r in self.instructions)

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __getitem__(self, i):
        return self.instructions[i]

    def address(self, index: int) -> int:
        return self.base + index * self.instruction_width

    @property
    def code_bytes(self) -> int:
        return len(self.instructions) * self.instruction_width


def _check_dense(indices: Iterable[int], lines: Sequence[int] | None = None):
    expected = 0
    for pos, idx in enumerate(indices):
        line = lines[pos] if lines else None
        if idx < expected:
            raise ValidationError(_at(line, f"duplicate index {idx}"))
        if idx > expected:
            raise ValidationError(_at(line, f"gap at index {expected}"))
        expected += 1


def _at(line, msg):
    return f"line {line}: {msg}" if line is not None else msg


@dataclass(frozen=True)
class DynamicTrace:
    """Fetch stream stored as ``(first, last, repeat)`` runs.

    Each run expands to ``first, first+1, ..., last`` repeated ``repeat``
    times. A bare event is the run ``(i, i, 1)``.
    """

    runs: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        runs = tuple((int(a), int(b), int(n)) for a, b, n in self.runs)
        for a, b, n in runs:
            if a < 0 or b < a or n < 1:
                raise ValidationError(f"malformed run {a}..{b} x{n}")
        object.__setattr__(self, "runs", runs)

    @classmethod
    def from_events(cls, events: Iterable[int]) -> "DynamicTrace":
        """Compress an event sequence into ascending spans with repeat counts."""
        spans = []
        start = prev = None
        for e in events:
            if start is not None and e == prev + 1:
                prev = e
                continue
            if start is not None:
                spans.append((start, prev))
            start = prev = e
        if start is not None:
            spans.append((start, prev))
        runs = []
        for span in spans:
            if runs and runs[-1][:2] == span:
                a, b, n = runs[-1]
                runs[-1] = (a, b, n + 1)
            else:
                runs.append((span[0], span[1], 1))
        return cls(tuple(runs))

    @cached_property
    def events(self) -> tuple[int, ...]:
        out = []
        for a, b, n in self.runs:
            span = range(a, b + 1)
            for _ in range(n):
                out.extend(span)
        return tuple(out)

    @property
    def total_accesses(self) -> int:
        return sum((b - a + 1) * n for a, b, n in self.runs)

    def __len__(self):
        return self.total_accesses

    def max_index(self) -> int:
        return max((b for _, b, _ in self.runs), default=-1)

    def validate(self, program: StaticProgram) -> "DynamicTrace":
        n = len(program)
        for a, b, _ in self.runs:
            if b >= n:
                bad = a if a >= n else n
                raise ValidationError(f"index {bad} out of range (program has {n} instructions)")
        return self


# -- program text format ------------------------------------------------------


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _check_format_line(fields, lineno, path):
    if len(fields) != 2 or not fields[1].startswith("v"):
        raise ParseError(f"bad format line {' '.join(fields)!r}", lineno, path)
    try:
        version = int(fields[1][1:])
    except ValueError:
        raise ParseError(f"bad format version {fields[1]!r}", lineno, path) from None
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}", lineno, path)


def _parse_reg(tok, lineno, path):
    if tok == "-":
        return None
    body = tok[1:] if tok[:1] in ("r", "R", "$") else tok
    try:
        reg = int(body)
    except ValueError:
        raise ParseError(f"bad register {tok!r}", lineno, path) from None
    if not 0 <= reg < NUM_REGISTERS:
        raise ValidationError(_at(lineno, f"register id {reg} out of range 0-{NUM_REGISTERS - 1}"))
    return reg


def parse_program(text: str, instruction_width: int = DEFAULT_INSTRUCTION_WIDTH,
                  base: int = 0, path=None) -> StaticProgram:
    records = []
    lines = []
    seen_content = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        fields = line.split()
        if fields[0] == "format":
            if seen_content:
                raise ParseError("format line must come first", lineno, path)
            _check_format_line(fields, lineno, path)
            seen_content = True
            continue
        seen_content = True
        if len(fields) < 2:
            raise ParseError(f"expected 'index opcode [dst [src ...]]', got {line!r}", lineno, path)
        try:
            index = int(fields[0])
        except ValueError:
            raise ParseError(f"bad index {fields[0]!r}", lineno, path) from None
        opcode = fields[1]
        dst = _parse_reg(fields[2], lineno, path) if len(fields) > 2 else None
        srcs = tuple(
            r for r in (_parse_reg(t, lineno, path) for t in fields[3:]) if r is not None
        )
        try:
            records.append(InstructionRecord(index, opcode, dst, srcs))
        except ValidationError as exc:
            raise ValidationError(_at(lineno, str(exc))) from None
        lines.append(lineno)
    _check_dense((r.index for r in records), lines)
    return StaticProgram(tuple(records), instruction_width, base)


def _fmt_reg(reg):
    return "-" if reg is None else f"r{reg}"


def format_program(program: StaticProgram) -> str:
    out = [f"format v{FORMAT_VERSION}"]
    for r in program:
        fields = [str(r.index), r.opcode, _fmt_reg(r.dst)]
        fields.extend(_fmt_reg(s) for s in r.srcs)
        out.append(" ".join(fields))
    return "\n".join(out) + "\n"


def load_program(path, instruction_width: int = DEFAULT_INSTRUCTION_WIDTH, base: int = 0) -> StaticProgram:
    path = Path(path)
    return parse_program(path.read_text(encoding="utf-8"), instruction_width, base, path=path)


def save_program(program: StaticProgram, path) -> None:
    Path(path).write_text(format_program(program), encoding="utf-8")


# -- trace text format ----------------------------------------------------------

_SPAN_RE = re.compile(r"^(\d+)(?:\.\.(\d+))?$")
_REPEAT_RE = re.compile(r"^x(\d+)$")


def parse_trace(text: str, program: StaticProgram | None = None, path=None) -> DynamicTrace:
    declared = None
    runs = []
    pending = None
    seen_content = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        fields = line.split()
        if fields[0] == "format":
            if seen_content:
                raise ParseError("format line must come first", lineno, path)
            _check_format_line(fields, lineno, path)
            seen_content = True
            continue
        seen_content = True
        if fields[0] == "trace":
            if declared is not None or runs or pending:
                raise ParseError("trace header must precede events", lineno, path)
            if len(fields) != 2 or not fields[1].isdigit():
                raise ParseError(f"bad trace header {line!r}", lineno, path)
            declared = int(fields[1])
            continue
        if declared is None:
            raise ParseError("missing 'trace <event_count>' header", lineno, path)
        for tok in fields:
            m = _REPEAT_RE.match(tok)
            if m:
                if pending is None:
                    raise ParseError(f"repeat {tok!r} without a preceding index or span", lineno, path)
                count = int(m.group(1))
                if count < 1:
                    raise ParseError(f"repeat count must be >= 1, got {count}", lineno, path)
                runs.append((*pending, count))
                pending = None
                continue
            m = _SPAN_RE.match(tok)
            if not m:
                raise ParseError(f"bad trace token {tok!r}", lineno, path)
            if pending is not None:
                runs.append((*pending, 1))
            a = int(m.group(1))
            b = int(m.group(2)) if m.group(2) is not None else a
            if b < a:
                raise ParseError(f"descending span {tok!r}", lineno, path)
            pending = (a, b)
    if pending is not None:
        runs.append((*pending, 1))
    if declared is None:
        if not seen_content:
            raise ParseError("empty trace file: missing 'trace <event_count>' header", None, path)
        raise ParseError("missing 'trace <event_count>' header", None, path)
    trace = DynamicTrace(tuple(runs))
    if trace.total_accesses != declared:
        raise IntegrityError(
            f"{path or 'trace'}: header declares {declared} events but body decodes to {trace.total_accesses}"
        )
    if program is not None:
        trace.validate(program)
    return trace


def format_trace(trace: DynamicTrace, per_line: int = 16) -> str:
    out = [f"format v{FORMAT_VERSION}", f"trace {trace.total_accesses}"]
    line = []
    for a, b, n in trace.runs:
        tok = str(a) if a == b else f"{a}..{b}"
        if n > 1:
            tok += f" x{n}"
        line.append(tok)
        if len(line) == per_line:
            out.append(" ".join(line))
            line = []
    if line:
        out.append(" ".join(line))
    return "\n".join(out) + "\n"


def load_trace(path, program: StaticProgram | None = None) -> DynamicTrace:
    path = Path(path)
    return parse_trace(path.read_text(encoding="utf-8"), program, path=path)


def save_trace(trace: DynamicTrace, path) -> None:
    Path(path).write_text(format_trace(trace), encoding="utf-8")


# -- synthetic workloads --------------------------------------------------------

GENERATORS = {
    "straight-loop": ("n_instrs", "iterations"),
    "hot-cold": ("hot_len", "cold_len", "hot_repeats"),
    "uniform-random": ("n_instrs", "n_events", "seed"),
}
_GEN_RE = re.compile(r"^\s*([a-z-]+)\s*(?:\((.*)\)|:(.*))?\s*$")


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "GeneratorSpec":
        """Parse ``name(a, b, key=v)`` or ``name:a,b,key=v``."""
        m = _GEN_RE.match(text)
        if not m or m.group(1) not in GENERATORS:
            raise SpecError(f"unknown generator spec {text!r}; expected one of {sorted(GENERATORS)}")
        name = m.group(1)
        names = GENERATORS[name]
        body = m.group(2) if m.group(2) is not None else (m.group(3) or "")
        params = {}
        positional = 0
        for part in filter(None, (p.strip() for p in body.split(","))):
            key, sep, value = part.partition("=")
            if not sep:
                if positional >= len(names):
                    raise SpecError(f"{name}: too many arguments in {text!r}")
                key, value = names[positional], part
                positional += 1
            key = key.strip().replace("-", "_")
            if key not in names:
                raise SpecError(f"{name}: unknown parameter {key!r}")
            try:
                params[key] = int(value)
            except ValueError:
                raise SpecError(f"{name}: parameter {key} must be an integer, got {value!r}") from None
        return cls(name, params)

    def __str__(self):
        args = ",".join(f"{k}={self.params[k]}" for k in GENERATORS[self.name] if k in self.params)
        return f"{self.name}({args})"


def _chain_program(n: int, width: int) -> StaticProgram:
    # Accumulator chain: each add consumes the previous result and loop-invariant r30.
    def reg(i):
        return 1 + i % 29

    return StaticProgram(
        tuple(InstructionRecord(i, "add", reg(i), (reg((i - 1) % n), 30)) for i in range(n)),
        width,
    )


_RANDOM_OPCODES = ["add", "sub", "and", "or", "xor", "sll", "mul", "ld", "st", "br"]
_RANDOM_WEIGHTS = [6, 3, 2, 2, 2, 1, 1, 2, 1, 1]


def random_program(n: int, rng: random.Random, width: int = DEFAULT_INSTRUCTION_WIDTH,
                   n_regs: int = 8) -> StaticProgram:
    records = []
    for i in range(n):
        op = rng.choices(_RANDOM_OPCODES, _RANDOM_WEIGHTS)[0]
        cls = classify(op)
        pick = lambda: rng.randint(1, n_regs)  # noqa: E731
        if cls == STORE:
            rec = InstructionRecord(i, op, None, (pick(), pick()))
        elif cls == BRANCH:
            rec = InstructionRecord(i, op, None, (pick(),))
        elif cls == LOAD:
            rec = InstructionRecord(i, op, pick(), (pick(),))
        else:
            rec = InstructionRecord(i, op, pick(), (pick(), pick()))
        records.append(rec)
    return StaticProgram(tuple(records), width)


def synth_trace(spec, seed: int | None = None,
                instruction_width: int = DEFAULT_INSTRUCTION_WIDTH) -> tuple[StaticProgram, DynamicTrace]:
    """Build a synthetic (program, trace) pair.

    ``spec`` is a :class:`GeneratorSpec` or its string form. ``seed`` is
    used by ``uniform-random`` only when the generator string does not carry one.
    """
    if isinstance(spec, str):
        spec = GeneratorSpec.parse(spec)
    p = dict(spec.params)
    if spec.name == "uniform-random" and "seed" not in p:
        p["seed"] = 0 if seed is None else seed
    missing = [k for k in GENERATORS[spec.name] if k not in p]
    if missing:
        raise SpecError(f"{spec.name}: missing parameter(s) {', '.join(missing)}")
    for k, v in p.items():
        if k != "seed" and v <= 0:
            raise SpecError(f"{spec.name}: {k} must be positive, got {v}")

    if spec.name == "straight-loop":
        n = p["n_instrs"]
        return _chain_program(n, instruction_width), DynamicTrace(((0, n - 1, p["iterations"]),))
    if spec.name == "hot-cold":
        hot, cold = p["hot_len"], p["cold_len"]
        runs = ((0, hot - 1, p["hot_repeats"]), (hot, hot + cold - 1, 1))
        return _chain_program(hot + cold, instruction_width), DynamicTrace(runs)
    rng = random.Random(p["seed"])
    program = random_program(p["n_instrs"], rng, instruction_width)
    events = [rng.randrange(p["n_instrs"]) for _ in range(p["n_events"])]
    return program, DynamicTrace.from_events(events)
