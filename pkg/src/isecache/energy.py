"""Instruction cache dynamic energy, AMAT and the downsizing rule.

Per-access miss cost is folded into a single factor::

    miss_energy(size)  = k_factor * hit_energy(size)
    miss_penalty(size) = k_factor * hit_delay(size)
    energy = hits * hit_energy + misses * miss_energy
    amat   = hit_rate * hit_delay + miss_rate * miss_penalty      ("paper")
    amat   = hit_delay + miss_rate * miss_penalty                 ("textbook")

A smaller cache is accepted when the extended-ISA AMAT at the smaller size
does not exceed the base-ISA AMAT at the original size.
"""

from __future__ import annotations

import csv
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from .cache import AccessStats
from .errors import FixtureError, ParameterError, ParseError, ReportError

PAPER = "paper"
TEXTBOOK = "textbook"
AMAT_CONVENTIONS = (PAPER, TEXTBOOK)

K_FACTOR_RANGE = (50.0, 200.0)

KB = 1024
_SIZE_RE = re.compile(r"^\s*(\d+)\s*([kKmM]?)[bB]?\s*$")


def parse_size(text) -> int:
    """``"16K"``, ``"16KB"``, ``"16kB"`` or ``"16384"`` -> 16384."""
    if isinstance(text, int):
        return text
    m = _SIZE_RE.match(str(text))
    if not m:
        raise ValueError(f"bad size {text!r}")
    scale = {"": 1, "k": KB, "m": KB * KB}[m.group(2).lower()]
    return int(m.group(1)) * scale


def format_size(size: int) -> str:
    if size % (KB * KB) == 0:
        return f"{size // (KB * KB)}M"
    if size % KB == 0:
        return f"{size // KB}K"
    return str(size)


@dataclass(frozen=True)
class SizeParams:
    hit_energy: float  # nJ
    hit_delay: float  # ns


# 45 nm, CACTI-derived per-access figures.
TABLE_I = {
    1 * KB: SizeParams(0.00516, 0.295112),
    2 * KB: SizeParams(0.005368, 0.295543),
    4 * KB: SizeParams(0.008101, 0.33874),
    8 * KB: SizeParams(0.008965, 0.347022),
    16 * KB: SizeParams(0.012822, 0.366523),
    32 * KB: SizeParams(0.019736, 0.406605),
}
TABLE_I_LABEL = "45 nm / CACTI-derived"


@dataclass(frozen=True)
class EnergyParams:
    per_size: Mapping[int, SizeParams] = field(default_factory=lambda: dict(TABLE_I))
    k_factor: float = 100.0
    label: str = TABLE_I_LABEL

    def __post_init__(self):
        object.__setattr__(self, "per_size", dict(sorted(self.per_size.items())))
        if not self.k_factor > 0:
            raise ParameterError(f"k_factor must be positive, got {self.k_factor}")
        lo, hi = K_FACTOR_RANGE
        if not lo <= self.k_factor <= hi:
            warnings.warn(f"k_factor {self.k_factor} outside the usual {lo:g}-{hi:g} range", stacklevel=3)
        for size, p in self.per_size.items():
            if not (p.hit_energy > 0 and p.hit_delay > 0):
                raise ParameterError(f"size {size}: hit energy and delay must be positive")

    def _get(self, size) -> SizeParams:
        try:
            return self.per_size[size]
        except KeyError:
            raise ParameterError(
                f"no energy parameters for size {format_size(size)}; known: "
                + ", ".join(format_size(s) for s in self.per_size)
            ) from None

    def hit_energy(self, size: int) -> float:
        return self._get(size).hit_energy

    def hit_delay(self, size: int) -> float:
        return self._get(size).hit_delay

    def miss_energy(self, size: int) -> float:
        return self.k_factor * self._get(size).hit_energy

    def miss_penalty(self, size: int) -> float:
        return self.k_factor * self._get(size).hit_delay

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "k_factor": self.k_factor,
            "per_size": {
                str(size): {"hit_energy_nj": p.hit_energy, "hit_delay_ns": p.hit_delay}
                for size, p in self.per_size.items()
            },
        }


def parse_energy_params(text: str, path=None) -> EnergyParams:
    per_size = {}
    k_factor = 100.0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kv = {}
        for tok in line.split():
            key, sep, value = tok.partition("=")
            if not sep:
                raise ParseError(f"expected key=value, got {tok!r}", lineno, path)
            kv[key] = value
        try:
            if set(kv) == {"k_factor"}:
                k_factor = float(kv["k_factor"])
            elif set(kv) == {"size", "hit_energy_nj", "hit_delay_ns"}:
                size = parse_size(kv["size"])
                if size in per_size:
                    raise ParseError(f"duplicate size {kv['size']}", lineno, path)
                per_size[size] = SizeParams(float(kv["hit_energy_nj"]), float(kv["hit_delay_ns"]))
            else:
                raise ParseError(f"unexpected keys {sorted(kv)}", lineno, path)
        except ValueError as exc:
            raise ParseError(str(exc), lineno, path) from None
    if not per_size:
        raise ParameterError(f"{path or 'energy params'}: no size lines")
    label = f"file:{Path(path).name}" if path is not None else "custom"
    return EnergyParams(per_size, k_factor, label)


def load_energy_params(path) -> EnergyParams:
    path = Path(path)
    return parse_energy_params(path.read_text(encoding="utf-8"), path=path)


def format_energy_params(params: EnergyParams) -> str:
    lines = [f"k_factor={params.k_factor!r}"]
    for size, p in params.per_size.items():
        lines.append(f"size={format_size(size)} hit_energy_nj={p.hit_energy!r} hit_delay_ns={p.hit_delay!r}")
    return "\n".join(lines) + "\n"


# -- energy and AMAT ------------------------------------------------------------


@dataclass(frozen=True)
class EnergyResult:
    size: int
    hits: int
    misses: int
    total_energy: float  # nJ
    amat: float  # ns

    @property
    def total(self) -> int:
        return self.hits + self.misses


def amat(stats: AccessStats, hit_delay: float, miss_penalty: float, convention: str = PAPER) -> float:
    if not stats.total:
        return 0.0
    if convention == PAPER:
        return stats.hit_rate * hit_delay + stats.miss_rate * miss_penalty
    if convention == TEXTBOOK:
        return hit_delay + stats.miss_rate * miss_penalty
    raise ValueError(f"unknown AMAT convention {convention!r}")


def energy(stats: AccessStats, size: int, params: EnergyParams, convention: str = PAPER) -> EnergyResult:
    total = stats.hits * params.hit_energy(size) + stats.misses * params.miss_energy(size)
    t = amat(stats, params.hit_delay(size), params.miss_penalty(size), convention)
    return EnergyResult(size, stats.hits, stats.misses, total, t)


@dataclass(frozen=True)
class SizingVerdict:
    baseline_size: int
    candidate_size: int
    amat_baseline_no_ci: float
    amat_candidate_with_ci: float
    accepted: bool
    dyn_energy_reduction_pct: float | None = None


def downsize_decision(amat_no_ci_at_baseline: float, amat_with_ci_at_candidate: float,
                      baseline_size: int, candidate_size: int,
                      reduction_pct: float | None = None) -> SizingVerdict:
    """Accept iff the candidate's with-CI AMAT is at most the baseline's no-CI AMAT.

    ``reduction_pct`` is attached only to accepted verdicts.
    """
    accepted = amat_with_ci_at_candidate <= amat_no_ci_at_baseline
    return SizingVerdict(
        baseline_size, candidate_size, amat_no_ci_at_baseline, amat_with_ci_at_candidate,
        accepted, reduction_pct if accepted else None,
    )


def dyn_energy_reduction(result_small: EnergyResult, result_large: EnergyResult) -> float:
    if result_large.total_energy == 0:
        raise ReportError(f"zero energy at size {format_size(result_large.size)}; reduction undefined")
    return 100.0 * (1.0 - result_small.total_energy / result_large.total_energy)


# -- sweep report -------------------------------------------------------------


@dataclass(frozen=True)
class SizeRow:
    size: int
    baseline: EnergyResult
    extended: EnergyResult

    @property
    def energy_saving_pct(self) -> float:
        if self.baseline.total_energy == 0:
            return 0.0
        return 100.0 * (1.0 - self.extended.total_energy / self.baseline.total_energy)


@dataclass(frozen=True)
class SizingReport:
    rows: tuple[SizeRow, ...]
    verdicts: tuple[SizingVerdict, ...]
    convention: str = PAPER

    @property
    def mean_energy_saving_pct(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.energy_saving_pct for r in self.rows) / len(self.rows)


def sweep_report(baseline_stats_by_size: Mapping[int, AccessStats],
                 extended_stats_by_size: Mapping[int, AccessStats],
                 params: EnergyParams, convention: str = PAPER) -> SizingReport:
    if sorted(baseline_stats_by_size) != sorted(extended_stats_by_size):
        raise ReportError(
            f"size lists differ: baseline {sorted(baseline_stats_by_size)} vs extended {sorted(extended_stats_by_size)}"
        )
    sizes = sorted(baseline_stats_by_size)
    rows = tuple(
        SizeRow(s, energy(baseline_stats_by_size[s], s, params, convention),
                energy(extended_stats_by_size[s], s, params, convention))
        for s in sizes
    )
    by_size = {r.size: r for r in rows}
    verdicts = []
    for large in reversed(sizes):
        for small in reversed([s for s in sizes if s < large]):
            big, little = by_size[large], by_size[small]
            red = dyn_energy_reduction(little.extended, big.extended) if big.extended.total_energy else None
            verdicts.append(downsize_decision(big.baseline.amat, little.extended.amat, large, small, red))
    return SizingReport(rows, tuple(verdicts), convention)


# -- published AMAT fixture -----------------------------------------------------

TABLE_II_RESOURCE = "table2_amat.csv"


@dataclass(frozen=True)
class AmatFixture:
    """Per-benchmark AMAT grids for the base ISA and the extended ISA."""

    sizes: tuple[int, ...]
    no_ci: Mapping[str, Mapping[int, float]]
    with_ci: Mapping[str, Mapping[int, float]]

    @property
    def benchmarks(self) -> list[str]:
        return list(self.no_ci)


def parse_amat_fixture(text: str, path=None) -> AmatFixture:
    """CSV: ``benchmark,ci,<size>,<size>,...`` with ``ci`` in {no, yes}.

    Lines starting with ``#`` are comments.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or [h.strip() for h in rows[0][:2]] != ["benchmark", "ci"]:
        raise FixtureError(f"{path or 'fixture'}: header must start with 'benchmark,ci'")
    try:
        sizes = tuple(parse_size(h) for h in rows[0][2:])
    except ValueError as exc:
        raise FixtureError(f"{path or 'fixture'}: {exc}") from None
    no_ci, with_ci = {}, {}
    for row in rows[1:]:
        bench, flag = row[0].strip(), row[1].strip().lower()
        target = {"no": no_ci, "yes": with_ci}.get(flag)
        if target is None:
            raise FixtureError(f"{bench}: ci column must be 'no' or 'yes', got {row[1]!r}")
        cells = {}
        for size, cell in zip(sizes, row[2:] + [""] * (len(sizes) - len(row[2:]))):
            if not cell.strip():
                raise FixtureError(f"missing AMAT for {bench} ({flag} CI) at {format_size(size)}")
            try:
                cells[size] = float(cell)
            except ValueError:
                raise FixtureError(f"bad AMAT {cell!r} for {bench} at {format_size(size)}") from None
        target[bench] = cells
    for bench in no_ci.keys() ^ with_ci.keys():
        raise FixtureError(f"benchmark {bench} lacks a {'yes' if bench in no_ci else 'no'} CI row")
    return AmatFixture(sizes, no_ci, with_ci)


def load_amat_fixture(path=None) -> AmatFixture:
    """Load an AMAT fixture; ``None`` loads the bundled published grid."""
    if path is None:
        text = resources.files("isecache.data").joinpath(TABLE_II_RESOURCE).read_text(encoding="utf-8")
        return parse_amat_fixture(text, TABLE_II_RESOURCE)
    path = Path(path)
    return parse_amat_fixture(path.read_text(encoding="utf-8"), path)


def fixture_verdicts(fixture: AmatFixture) -> list[tuple[str, SizingVerdict]]:
    out = []
    for bench in fixture.benchmarks:
        for large in sorted(fixture.sizes, reverse=True):
            for small in sorted((s for s in fixture.sizes if s < large), reverse=True):
                out.append((bench, downsize_decision(
                    fixture.no_ci[bench][large], fixture.with_ci[bench][small], large, small)))
    return out
