"""Trace-driven instruction cache.

The simulator installs the whole containing block on every miss, never
writes, and keeps no dirty state. ``reference_simulate`` is a deliberately
naive second model (explicit per-set lists, address bit slicing) used as a
test oracle for ``simulate``.
"""

from __future__ import annotations

import csv
import io
from collections import OrderedDict
from dataclasses import dataclass, replace

from .errors import ValidationError
from .program import DEFAULT_INSTRUCTION_WIDTH, DynamicTrace, StaticProgram

LRU = "lru"
FIFO = "fifo"
REPLACEMENTS = (LRU, FIFO)
FULL = "full"

STATS_CSV_COLUMNS = ("size", "ways", "block", "replacement", "hits", "misses", "total")


def _pow2(x):
    return isinstance(x, int) and x > 0 and x & (x - 1) == 0


@dataclass(frozen=True)
class CacheConfig:
    capacity: int
    block_size: int = 32
    associativity: int | str = 2
    replacement: str = LRU
    instruction_width: int = DEFAULT_INSTRUCTION_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "replacement", str(self.replacement).lower())
        if isinstance(self.associativity, str):
            if self.associativity.lower() != FULL:
                raise ValidationError(f"associativity must be a power of two or 'full', got {self.associativity!r}")
            object.__setattr__(self, "associativity", FULL)
        if not _pow2(self.capacity):
            raise ValidationError(f"capacity must be a power of two, got {self.capacity}")
        if not _pow2(self.block_size) or self.block_size > self.capacity:
            raise ValidationError(f"block size {self.block_size} must be a power of two <= capacity")
        if self.associativity != FULL:
            if not _pow2(self.associativity):
                raise ValidationError(f"associativity must be a power of two or 'full', got {self.associativity}")
            if self.capacity % (self.block_size * self.associativity):
                raise ValidationError(
                    f"capacity {self.capacity} not divisible by block {self.block_size} x {self.associativity} ways"
                )
        if self.replacement not in REPLACEMENTS:
            raise ValidationError(f"replacement must be one of {REPLACEMENTS}, got {self.replacement!r}")
        if self.instruction_width <= 0 or self.block_size % self.instruction_width:
            raise ValidationError(
                f"block size {self.block_size} is not a whole number of {self.instruction_width}-byte instructions"
            )

    @property
    def ways(self) -> int:
        if self.associativity == FULL:
            return self.capacity // self.block_size
        return self.associativity

    @property
    def num_sets(self) -> int:
        return self.capacity // (self.block_size * self.ways)

    @property
    def block_instructions(self) -> int:
        """B: instructions per block."""
        return self.block_size // self.instruction_width

    def with_capacity(self, capacity: int) -> "CacheConfig":
        return replace(self, capacity=capacity)


@dataclass(frozen=True)
class AccessStats:
    hits: int = 0
    misses: int = 0

    @property
    def total(self) -> int:
        return self.hits + self.misses

    @property
    def hit_rate(self) -> float:
        return self.hits / self.total if self.total else 0.0

    @property
    def miss_rate(self) -> float:
        return self.misses / self.total if self.total else 0.0

    def __add__(self, other: "AccessStats") -> "AccessStats":
        return AccessStats(self.hits + other.hits, self.misses + other.misses)

    def as_dict(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "total": self.total}


def _check_inputs(program, trace, config):
    if program.instruction_width != config.instruction_width:
        raise ValidationError(
            f"program width {program.instruction_width} != cache instruction_width {config.instruction_width}"
        )
    trace.validate(program)


def simulate(program: StaticProgram, trace: DynamicTrace, config: CacheConfig) -> AccessStats:
    _check_inputs(program, trace, config)
    block_of = [program.address(i) // config.block_size for i in range(len(program))]
    n_sets, ways = config.num_sets, config.ways
    lru = config.replacement == LRU
    sets = [OrderedDict() for _ in range(n_sets)]
    hits = misses = 0
    for idx in trace.events:
        blk = block_of[idx]
        s = sets[blk % n_sets]
        if blk in s:
            hits += 1
            if lru:
                s.move_to_end(blk)
        else:
            misses += 1
            if len(s) >= ways:
                s.popitem(last=False)
            s[blk] = None
    return AccessStats(hits, misses)


def reference_simulate(program: StaticProgram, trace: DynamicTrace, config: CacheConfig) -> AccessStats:
    """Naive model: per-set tag lists ordered oldest-first, linear search."""
    _check_inputs(program, trace, config)
    offset_bits = config.block_size.bit_length() - 1
    index_bits = config.num_sets.bit_length() - 1
    index_mask = config.num_sets - 1
    tags = [[] for _ in range(config.num_sets)]
    hits = misses = 0
    for idx in trace.events:
        addr = program.base + idx * program.instruction_width
        set_idx = (addr >> offset_bits) & index_mask
        tag = addr >> (offset_bits + index_bits)
        ways = tags[set_idx]
        found = -1
        for pos in range(len(ways)):
            if ways[pos] == tag:
                found = pos
                break
        if found >= 0:
            hits += 1
            if config.replacement == LRU:
                ways.append(ways.pop(found))
        else:
            misses += 1
            if len(ways) == config.ways:
                del ways[0]
            ways.append(tag)
    return AccessStats(hits, misses)


def simulate_sweep(program: StaticProgram, trace: DynamicTrace, sizes, template: CacheConfig) -> dict[int, AccessStats]:
    configs = [template.with_capacity(size) for size in sizes]
    return {cfg.capacity: simulate(program, trace, cfg) for cfg in configs}


def stats_csv(results: dict[int, AccessStats], template: CacheConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_CSV_COLUMNS)
    for size in sorted(results):
        st = results[size]
        ways = template.with_capacity(size).ways
        w.writerow([size, ways, template.block_size, template.replacement, st.hits, st.misses, st.total])
    return buf.getvalue()
