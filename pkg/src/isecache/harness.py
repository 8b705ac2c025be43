"""identify -> select -> substitute -> simulate -> energy -> advise, over a size sweep."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .cache import CacheConfig, AccessStats, simulate_sweep, stats_csv
from .ci import (
    CiConstraints,
    CiSelection,
    RewriteResult,
    enumerate_candidates,
    format_selection,
    greedy_select,
    load_selection,
    reduction_stats,
    substitute,
)
from .energy import (
    AMAT_CONVENTIONS,
    PAPER,
    EnergyParams,
    SizingReport,
    fixture_verdicts,
    format_size,
    load_amat_fixture,
    load_energy_params,
    sweep_report,
)
from .errors import ConfigError, DataError, IsecacheError, PipelineError, ValidationError
from .program import (
    DEFAULT_INSTRUCTION_WIDTH,
    DynamicTrace,
    GeneratorSpec,
    StaticProgram,
    load_program,
    load_trace,
    synth_trace,
)

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
DEFAULT_SIZES = tuple(k * 1024 for k in (1, 2, 4, 8, 16, 32))

REDUCTION_COLUMNS = (
    "size", "ways", "block", "replacement",
    "base_hits", "base_misses", "base_total", "ext_hits", "ext_misses", "ext_total",
    "access_red_pct", "hit_red_pct", "miss_red_pct",
)
ENERGY_COLUMNS = (
    "size", "ways", "block", "replacement", "k_factor",
    "hit_energy_nj", "hit_delay_ns", "miss_energy_nj", "miss_penalty_ns",
    "base_hits", "base_misses", "base_energy_nj", "base_amat_ns",
    "ext_hits", "ext_misses", "ext_energy_nj", "ext_amat_ns", "energy_saving_pct",
)
VERDICT_COLUMNS = (
    "baseline_size", "candidate_size", "associativity", "block", "replacement",
    "amat_baseline_no_ci_ns", "amat_candidate_with_ci_ns", "accepted", "dyn_energy_reduction_pct",
)
FIXTURE_VERDICT_COLUMNS = (
    "benchmark", "baseline_size", "candidate_size", "amat_baseline_no_ci", "amat_candidate_with_ci", "accepted",
)


def fmt(x) -> str:
    """Report number formatting: 6 significant digits for floats."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


@dataclass
class RunConfig:
    program_path: str | None = None
    trace_path: str | None = None
    synth: str | None = None
    ci_mode: str = "auto"
    ci_file: str | None = None
    max_len: int | None = None
    max_inputs: int = 2
    max_outputs: int = 1
    budget: int | None = None
    block: int = 32
    ways: int | str = 2
    replacement: str = "lru"
    sizes: tuple[int, ...] = DEFAULT_SIZES
    energy_params_path: str | None = None
    k_factor: float | None = None
    amat_convention: str = PAPER
    instruction_width: int = DEFAULT_INSTRUCTION_WIDTH
    out: str = "out"
    seed: int = 0

    def template(self) -> CacheConfig:
        return CacheConfig(min(self.sizes), self.block, self.ways, self.replacement, self.instruction_width)

    def constraints(self) -> CiConstraints:
        max_len = self.max_len if self.max_len is not None else self.block // self.instruction_width
        return CiConstraints(max_len=max_len, max_inputs=self.max_inputs, max_outputs=self.max_outputs)

    def validate(self) -> "RunConfig":
        has_files = self.program_path is not None or self.trace_path is not None
        if has_files == (self.synth is not None):
            raise ConfigError("give exactly one workload source: --program/--trace or --synth")
        if has_files and (self.program_path is None or self.trace_path is None):
            raise ConfigError("--program and --trace must be given together")
        if self.synth is not None:
            GeneratorSpec.parse(self.synth)
        if self.ci_mode not in ("auto", "file", "none"):
            raise ConfigError(f"ci mode must be auto, file=PATH or none, got {self.ci_mode!r}")
        if (self.ci_mode == "file") != (self.ci_file is not None):
            raise ConfigError("ci mode 'file' needs a selection path (--ci file=PATH)")
        if not self.sizes:
            raise ConfigError("size list is empty")
        if len(set(self.sizes)) != len(self.sizes):
            raise ConfigError(f"duplicate sizes in {self.sizes}")
        if self.amat_convention not in AMAT_CONVENTIONS:
            raise ConfigError(f"amat convention must be one of {AMAT_CONVENTIONS}")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("budget must be non-negative")
        try:
            template = self.template()
            for size in self.sizes:
                template.with_capacity(size)
            self.constraints()
        except (ValidationError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def as_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d


@dataclass
class RunResult:
    config: RunConfig
    program: StaticProgram
    trace: DynamicTrace
    rewrite: RewriteResult
    params: EnergyParams
    baseline: dict[int, AccessStats]
    extended: dict[int, AccessStats]
    report: SizingReport
    files: dict[str, str] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


@contextmanager
def stage(name: str):
    """Tag any error escaping the block with the pipeline stage that raised it."""
    try:
        yield
    except IsecacheError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise
    except OSError as exc:
        err = DataError(f"{exc.strerror or exc}: {exc.filename}" if exc.filename else str(exc))
        err.stage = name
        raise err from exc
    except (ValueError, KeyError, IndexError) as exc:
        err = PipelineError(str(exc))
        err.stage = name
        raise err from exc


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def run(config: RunConfig, write: bool = True) -> RunResult:
    with stage("config"):
        config.validate()
    template = config.template()

    with stage("load"):
        workload = {}
        if config.synth is not None:
            spec = GeneratorSpec.parse(config.synth)
            program, trace = synth_trace(spec, seed=config.seed, instruction_width=config.instruction_width)
            workload = {"source": "synth", "spec": str(spec)}
        else:
            program = load_program(config.program_path, config.instruction_width)
            trace = load_trace(config.trace_path, program)
            workload = {
                "source": "files",
                "program_path": str(config.program_path),
                "program_sha256": _sha256(config.program_path),
                "trace_path": str(config.trace_path),
                "trace_sha256": _sha256(config.trace_path),
            }
        if config.energy_params_path is not None:
            params = load_energy_params(config.energy_params_path)
        else:
            params = EnergyParams()
        if config.k_factor is not None:
            params = EnergyParams(params.per_size, config.k_factor, params.label)
        for size in config.sizes:
            params.hit_energy(size)

    constraints = config.constraints()
    n_candidates = None
    if config.ci_mode == "auto" and len(trace) > 0:
        with stage("identify"):
            candidates = enumerate_candidates(program, trace, constraints)
            n_candidates = len(candidates)
        with stage("select"):
            selection = greedy_select(candidates, config.budget)
    elif config.ci_mode == "file":
        with stage("select"):
            selection = load_selection(config.ci_file)
    else:
        selection = CiSelection()
    log.info("selected %d CI(s)", len(selection))

    with stage("substitute"):
        rewrite = substitute(program, trace, selection)

    with stage("simulate"):
        baseline = simulate_sweep(program, trace, config.sizes, template)
        extended = simulate_sweep(rewrite.program, rewrite.trace, config.sizes, template)

    with stage("energy"):
        report = sweep_report(baseline, extended, params, config.amat_convention)

    result = RunResult(config, program, trace, rewrite, params, baseline, extended, report)
    with stage("report"):
        result.files = render_reports(result)
        result.provenance = _provenance(result, workload, constraints, n_candidates)
        result.files["run.json"] = json.dumps(result.provenance, indent=2, sort_keys=True) + "\n"
        if write:
            out = Path(config.out)
            out.mkdir(parents=True, exist_ok=True)
            for name, body in result.files.items():
                (out / name).write_text(body, encoding="utf-8")
    return result


def render_reports(result: RunResult) -> dict[str, str]:
    cfg = result.config
    template = cfg.template()
    params = result.params
    red_rows, energy_rows = [], []
    for row in result.report.rows:
        size = row.size
        ways = template.with_capacity(size).ways
        geom = [size, ways, cfg.block, cfg.replacement]
        b, e = result.baseline[size], result.extended[size]
        red = reduction_stats(b, e)
        red_rows.append(geom + [b.hits, b.misses, b.total, e.hits, e.misses, e.total,
                                red.access_red_pct, red.hit_red_pct, red.miss_red_pct])
        energy_rows.append(geom + [
            params.k_factor, params.hit_energy(size), params.hit_delay(size),
            params.miss_energy(size), params.miss_penalty(size),
            row.baseline.hits, row.baseline.misses, row.baseline.total_energy, row.baseline.amat,
            row.extended.hits, row.extended.misses, row.extended.total_energy, row.extended.amat,
            row.energy_saving_pct,
        ])
    verdict_rows = [
        [v.baseline_size, v.candidate_size, cfg.ways, cfg.block, cfg.replacement,
         v.amat_baseline_no_ci, v.amat_candidate_with_ci, v.accepted, v.dyn_energy_reduction_pct]
        for v in result.report.verdicts
    ]
    return {
        "reduction.csv": _csv(REDUCTION_COLUMNS, red_rows),
        "energy.csv": _csv(ENERGY_COLUMNS, energy_rows),
        "verdicts.csv": _csv(VERDICT_COLUMNS, verdict_rows),
        "stats_baseline.csv": stats_csv(result.baseline, template),
        "stats_extended.csv": stats_csv(result.extended, template),
        "selection.txt": format_selection(result.rewrite.selection),
    }


def _provenance(result: RunResult, workload, constraints, n_candidates) -> dict:
    rw = result.rewrite
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "tool": {"name": "isecache", "version": __version__},
        "config": result.config.as_dict(),
        "seed": result.config.seed,
        "workload": {
            **workload,
            "instruction_width": result.program.instruction_width,
            "base": result.program.base,
            "code_size_before": rw.code_size_before,
            "code_size_after": rw.code_size_after,
            "trace_events_before": len(result.trace),
            "trace_events_after": len(rw.trace),
        },
        "cache_template": {
            "block": result.config.block,
            "associativity": result.config.ways,
            "replacement": result.config.replacement,
            "instruction_width": result.config.instruction_width,
            "sizes": list(result.config.sizes),
        },
        "energy_params": result.params.as_dict(),
        "amat_convention": result.config.amat_convention,
        "ci": {
            "mode": result.config.ci_mode,
            "constraints": {
                "max_len": constraints.max_len,
                "max_inputs": constraints.max_inputs,
                "max_outputs": constraints.max_outputs,
                "forbid_classes": sorted(constraints.forbid_classes),
                "budget": result.config.budget,
            },
            "candidates_considered": n_candidates,
            "selection": [
                {"id": i, "start": c.start_index, "len": c.length, "inputs": c.ext_inputs,
                 "outputs": c.ext_outputs, "execs": c.exec_count, "merit": c.merit}
                for i, c in enumerate(rw.selection.chosen)
            ],
        },
        "stats": {
            kind: {str(size): {"hits": st.hits, "misses": st.misses} for size, st in sorted(stats.items())}
            for kind, stats in (("baseline", result.baseline), ("extended", result.extended))
        },
        "summary": {
            "mean_energy_saving_pct": result.report.mean_energy_saving_pct,
            "accepted_downsizes": [
                [v.baseline_size, v.candidate_size] for v in result.report.verdicts if v.accepted
            ],
        },
        "csv_schemas": {
            "reduction.csv": list(REDUCTION_COLUMNS),
            "energy.csv": list(ENERGY_COLUMNS),
            "verdicts.csv": list(VERDICT_COLUMNS),
        },
    }


def run_fixture_verdicts(fixture_path=None, out=None) -> tuple[str, list]:
    """Replay an AMAT grid through the downsizing rule; returns (csv body, verdicts)."""
    with stage("load"):
        fixture = load_amat_fixture(fixture_path)
    verdicts = fixture_verdicts(fixture)
    rows = [
        [bench, format_size(v.baseline_size), format_size(v.candidate_size),
         v.amat_baseline_no_ci, v.amat_candidate_with_ci, v.accepted]
        for bench, v in verdicts
    ]
    body = _csv(FIXTURE_VERDICT_COLUMNS, rows)
    if out is not None:
        with stage("report"):
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "verdicts.csv").write_text(body, encoding="utf-8")
    return body, verdicts
