"""Deterministic experiment runner and report generator.

A single JSON config describes the run matrix (functions x presets x
strategies x seeded runs); execution writes one flat trace CSV plus a
manifest, and the reporting entry points rebuild every number from that CSV.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .acquisition import InnerOptBudgets
from .benchmarks import (
    SUPPORTED_FUNCTIONS,
    MaximizationObjective,
    SubprocessObjective,
    make_function,
    maximization_objective,
)
from .engine import EngineConfig, PipelineProblem, run
from .metrics import (
    RunTrace,
    StepsToReach,
    aggregate,
    steps_to_reach,
    superiority_ratio,
)

__all__ = [
    "ConfigError",
    "PresetConfig",
    "ExternalObjective",
    "ExperimentConfig",
    "load_config",
    "run_matrix",
    "load_traces",
    "summarize",
    "compare_update",
    "TRACE_HEADER",
    "CENSORED_MARK",
]

TRACE_HEADER = "function,preset,strategy,run,step,best_value,simple_regret"
CENSORED_MARK = "–"  # rendered for censored table entries


class ConfigError(Exception):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class PresetConfig:
    """One (P, K, D) problem row."""

    parallelism: int
    process_dims: tuple[int, ...]

    @property
    def tag(self) -> str:
        dims = self.process_dims
        joined = (
            "".join(str(n) for n in dims)
            if all(n <= 9 for n in dims)
            else "x".join(str(n) for n in dims)
        )
        return f"K{len(dims)}-{joined}"

    @property
    def d(self) -> int:
        return sum(self.process_dims)


# The seven reference problem rows, in presentation order.
DEFAULT_PRESETS = (
    PresetConfig(1, (1, 1)),
    PresetConfig(1, (8, 1, 1)),
    PresetConfig(1, (5, 3, 2)),
    PresetConfig(1, (3, 4, 3)),
    PresetConfig(1, (2, 3, 5)),
    PresetConfig(1, (1, 1, 8)),
    PresetConfig(1, (2, 2, 2, 2, 2)),
)


@dataclass(frozen=True)
class ExternalObjective:
    """Objective served by a subprocess (minimization form)."""

    name: str
    command: tuple[str, ...]
    f_opt: float = 0.0


@dataclass
class ExperimentConfig:
    functions: tuple = SUPPORTED_FUNCTIONS
    presets: tuple[PresetConfig, ...] = DEFAULT_PRESETS
    strategies: tuple[str, ...] = ("pipebo", "noupdate", "vanilla")
    runs: int = 50
    base_seed: int = 0
    budget_steps: int = 200
    kappa: float = 2.0
    candidates: int = 2000
    refine_top: int = 10
    refine_iters: int = 100
    gp_restarts: int = 5
    lipschitz_samples: int = 500
    workers: Optional[int] = None
    out_dir: str = "results"
    reference_step: int = 100

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            kappa=self.kappa,
            budgets=InnerOptBudgets(
                candidates=self.candidates,
                refine_top=self.refine_top,
                refine_iters=self.refine_iters,
            ),
            gp_restarts=self.gp_restarts,
            lipschitz_samples=self.lipschitz_samples,
        )

    def validate(self) -> None:
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not self.functions:
            raise ConfigError("functions must not be empty")
        for f in self.functions:
            if isinstance(f, str) and f not in SUPPORTED_FUNCTIONS:
                raise ConfigError(
                    f"unknown function {f!r}; supported: {', '.join(SUPPORTED_FUNCTIONS)}"
                )
        for s in self.strategies:
            if s not in ("pipebo", "noupdate", "vanilla"):
                raise ConfigError(f"unknown strategy {s!r}")
        for p in self.presets:
            if self.budget_steps < len(p.process_dims):
                raise ConfigError(
                    f"budget_steps ({self.budget_steps}) < K for preset {p.tag}"
                )

    def resolved_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["functions"] = [
            f if isinstance(f, str) else dataclasses.asdict(f) for f in self.functions
        ]
        d["presets"] = [
            {"P": p.parallelism, "K": len(p.process_dims), "D": list(p.process_dims)}
            for p in self.presets
        ]
        d["strategies"] = list(self.strategies)
        return d


def _parse_preset(entry: dict) -> PresetConfig:
    try:
        dims = tuple(int(n) for n in entry["D"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid preset entry {entry!r}") from exc
    parallelism = int(entry.get("P", 1))
    if "K" in entry and int(entry["K"]) != len(dims):
        raise ConfigError(f"preset {entry!r}: K does not match len(D)")
    if parallelism < 1 or any(n < 1 for n in dims):
        raise ConfigError(f"preset {entry!r}: P and all D entries must be >= 1")
    return PresetConfig(parallelism=parallelism, process_dims=dims)


def _parse_function(entry) -> object:
    if isinstance(entry, str):
        return entry
    if isinstance(entry, dict):
        try:
            return ExternalObjective(
                name=str(entry["name"]),
                command=tuple(str(c) for c in entry["command"]),
                f_opt=float(entry.get("f_opt", 0.0)),
            )
        except KeyError as exc:
            raise ConfigError(
                f"external objective entry {entry!r} needs 'name' and 'command'"
            ) from exc
    raise ConfigError(f"invalid function entry {entry!r}")


_CONFIG_KEYS = {
    "functions", "presets", "strategies", "runs", "base_seed", "budget_steps",
    "kappa", "candidates", "refine_top", "refine_iters", "gp_restarts",
    "lipschitz_samples", "workers", "out_dir", "reference_step",
}


def load_config(path: str | Path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a JSON config file; ``overrides`` (CLI flags) win over file keys."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    raw.update(overrides or {})
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    kwargs: dict = {}
    if "functions" in raw:
        kwargs["functions"] = tuple(_parse_function(f) for f in raw["functions"])
    if "presets" in raw:
        kwargs["presets"] = tuple(_parse_preset(p) for p in raw["presets"])
    if "strategies" in raw:
        kwargs["strategies"] = tuple(str(s) for s in raw["strategies"])
    for key in (
        "runs", "base_seed", "budget_steps", "candidates", "refine_top",
        "refine_iters", "gp_restarts", "lipschitz_samples", "reference_step",
    ):
        if raw.get(key) is not None:
            kwargs[key] = int(raw[key])
    if raw.get("kappa") is not None:
        kwargs["kappa"] = float(raw["kappa"])
    if raw.get("workers") is not None:
        kwargs["workers"] = int(raw["workers"])
    if raw.get("out_dir") is not None:
        kwargs["out_dir"] = str(raw["out_dir"])
    cfg = dataclasses.replace(cfg, **kwargs)
    cfg.validate()
    return cfg


def _function_key(f) -> str:
    return f if isinstance(f, str) else f.name


def _execute_task(payload: dict) -> tuple[tuple, list, list]:
    """Run one (function, preset, strategy, run) cell; used by worker processes."""
    preset = PresetConfig(payload["parallelism"], tuple(payload["process_dims"]))
    problem = PipelineProblem(
        process_dims=preset.process_dims,
        parallelism=preset.parallelism,
        budget_steps=payload["budget_steps"],
    )
    engine_cfg = EngineConfig(
        kappa=payload["kappa"],
        budgets=InnerOptBudgets(
            candidates=payload["candidates"],
            refine_top=payload["refine_top"],
            refine_iters=payload["refine_iters"],
        ),
        gp_restarts=payload["gp_restarts"],
        lipschitz_samples=payload["lipschitz_samples"],
    )
    seed = payload["seed"]
    closer = None
    if payload["command"] is None:
        inst = make_function(payload["function"], preset.d, instance_seed=seed)
        objective = maximization_objective(inst)
    else:
        ext = SubprocessObjective(payload["command"], preset.d, f_opt=payload["f_opt"])
        objective = MaximizationObjective(ext, f_opt=payload["f_opt"])
        closer = ext.close
    try:
        trace = run(
            payload["strategy"], problem, objective, seed,
            f_star=objective.f_star, config=engine_cfg,
        )
    finally:
        if closer is not None:
            closer()
    key = (payload["function"], preset.tag, payload["strategy"], payload["run"])
    return key, trace.best_values.tolist(), trace.regret.tolist()


def _limit_worker_blas():
    # one BLAS thread per worker; the matrices are small and workers saturate cores
    try:
        import threadpoolctl

        global _tp_controller
        _tp_controller = threadpoolctl.threadpool_limits(limits=1)
    except Exception:
        pass


def _format(v: float) -> str:
    return repr(float(v))


def run_matrix(config: ExperimentConfig) -> tuple[Path, Path]:
    """Execute the whole matrix; returns (traces_csv_path, manifest_path).

    Output is byte-identical across reruns of the same config (the manifest's
    timestamp field aside). Rows are sorted by function, preset, strategy, run.
    """
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out}") from exc

    payload_base = {
        "budget_steps": config.budget_steps,
        "kappa": config.kappa,
        "candidates": config.candidates,
        "refine_top": config.refine_top,
        "refine_iters": config.refine_iters,
        "gp_restarts": config.gp_restarts,
        "lipschitz_samples": config.lipschitz_samples,
    }
    tasks = []
    for f in config.functions:
        ext = None if isinstance(f, str) else f
        for preset in config.presets:
            for strategy in config.strategies:
                for r in range(config.runs):
                    tasks.append(
                        dict(
                            payload_base,
                            function=_function_key(f),
                            command=None if ext is None else list(ext.command),
                            f_opt=0.0 if ext is None else ext.f_opt,
                            parallelism=preset.parallelism,
                            process_dims=list(preset.process_dims),
                            strategy=strategy,
                            run=r,
                            seed=config.base_seed + r,
                        )
                    )

    workers = config.workers if config.workers is not None else (os.cpu_count() or 1)
    results: dict[tuple, tuple[list, list]] = {}
    if workers <= 1:
        for task in tasks:
            key, best, regret = _execute_task(task)
            results[key] = (best, regret)
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_limit_worker_blas
        ) as pool:
            for key, best, regret in pool.map(_execute_task, tasks, chunksize=1):
                results[key] = (best, regret)

    csv_path = out / "traces.csv"
    lines = [TRACE_HEADER]
    for key in sorted(results):
        function, preset, strategy, run_idx = key
        best, regret = results[key]
        for step, (b, g) in enumerate(zip(best, regret), start=1):
            lines.append(
                f"{function},{preset},{strategy},{run_idx},{step},{_format(b)},{_format(g)}"
            )
    csv_path.write_text("\n".join(lines) + "\n")

    manifest = {
        "package": "pipebo",
        "version": __version__,
        "prng": "numpy default_rng (PCG64), run seed = base_seed + run index",
        "config": config.resolved_dict(),
        "seeds": list(range(config.base_seed, config.base_seed + config.runs)),
        "trace_schema": TRACE_HEADER,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return csv_path, manifest_path


def _resolve_traces_path(traces: str | Path) -> Path:
    p = Path(traces)
    if p.is_dir():
        p = p / "traces.csv"
    if not p.exists():
        raise ConfigError(f"trace file not found: {p}")
    return p


def load_traces(traces: str | Path) -> dict[tuple[str, str, str], list[RunTrace]]:
    """Rebuild RunTrace objects from a trace CSV, keyed by (function, preset, strategy)."""
    path = _resolve_traces_path(traces)
    with path.open() as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise ConfigError(
                f"unexpected trace header {header!r}; expected {TRACE_HEADER!r}"
            )
        rows: dict[tuple[str, str, str, int], list[tuple[int, float, float]]] = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            function, preset, strategy, run_s, step_s, best_s, regret_s = line.split(",")
            rows.setdefault((function, preset, strategy, int(run_s)), []).append(
                (int(step_s), float(best_s), float(regret_s))
            )
    grouped: dict[tuple[str, str, str], list[RunTrace]] = {}
    for (function, preset, strategy, run_idx), entries in sorted(rows.items()):
        entries.sort()
        best = np.array([e[1] for e in entries])
        regret = np.array([e[2] for e in entries])
        grouped.setdefault((function, preset, strategy), []).append(
            RunTrace(
                best_values=best, regret=regret, seed=run_idx,
                strategy=strategy, function_id=function, preset=preset,
            )
        )
    return grouped


def _preset_sort_key(tag: str) -> tuple:
    known = [p.tag for p in DEFAULT_PRESETS]
    return (known.index(tag), "") if tag in known else (len(known), tag)


@dataclass(frozen=True)
class SummaryRow:
    function: str
    preset: str
    strategy: str
    result: StepsToReach
    reference_regret: float


def summarize(
    traces: str | Path, reference_step: int = 100
) -> tuple[list[SummaryRow], dict[tuple[str, str], float]]:
    """Steps each strategy needs to reach the sequential baseline's regret.

    The reference is the baseline's median regret at ``reference_step`` for
    each (function, preset); every other strategy's runs are then scanned for
    the first step at or below it.
    """
    grouped = load_traces(traces)
    keys = sorted(grouped)
    functions = sorted({k[0] for k in keys})
    presets = sorted({k[1] for k in keys}, key=_preset_sort_key)
    strategies = sorted({k[2] for k in keys})
    if "vanilla" not in strategies:
        raise ConfigError("missing strategy 'vanilla' (needed as the reference)")

    rows: list[SummaryRow] = []
    averages: dict[tuple[str, str], float] = {}
    for preset in presets:
        for strategy in strategies:
            if strategy == "vanilla":
                continue
            medians = []
            for function in functions:
                ref_key = (function, preset, "vanilla")
                cmp_key = (function, preset, strategy)
                if ref_key not in grouped or cmp_key not in grouped:
                    continue
                med, _, _ = aggregate(grouped[ref_key])
                if reference_step < 1 or reference_step > med.shape[0]:
                    raise ConfigError(
                        f"reference_step {reference_step} outside trace length {med.shape[0]}"
                    )
                ref = float(med[reference_step - 1])
                result = steps_to_reach(grouped[cmp_key], ref)
                rows.append(
                    SummaryRow(function, preset, strategy, result, ref)
                )
                if not result.censored:
                    medians.append(result.median)
            if medians:
                averages[(preset, strategy)] = float(np.mean(medians))
    return rows, averages


def _fmt_steps(r: StepsToReach) -> str:
    if r.censored:
        return CENSORED_MARK
    iqr = CENSORED_MARK if math.isinf(r.iqr) else f"{r.iqr:g}"
    return f"{r.median:g}({iqr})"


def render_summary(
    rows: list[SummaryRow], averages: dict[tuple[str, str], float]
) -> str:
    """Text table: one row per function, one column per (preset, strategy)."""
    functions = sorted({r.function for r in rows})
    cols = sorted(
        {(r.preset, r.strategy) for r in rows},
        key=lambda c: (_preset_sort_key(c[0]), c[1]),
    )
    cells = {(r.function, r.preset, r.strategy): _fmt_steps(r.result) for r in rows}
    header = ["function"] + [f"{p}/{s}" for p, s in cols]
    out = [" | ".join(header)]
    for f in functions:
        out.append(
            " | ".join([f] + [cells.get((f, p, s), "") for p, s in cols])
        )
    avg_cells = [
        f"{averages[(p, s)]:.1f}" if (p, s) in averages else CENSORED_MARK
        for p, s in cols
    ]
    out.append(" | ".join(["Average"] + avg_cells))
    return "\n".join(out)


def write_summary_csv(
    rows: list[SummaryRow],
    averages: dict[tuple[str, str], float],
    path: str | Path,
) -> Path:
    lines = ["function,preset,strategy,reference_regret,median_steps,iqr,reached_fraction"]
    for r in rows:
        med = "" if r.result.censored else _format(r.result.median)
        iqr = "" if math.isinf(r.result.iqr) else _format(r.result.iqr)
        lines.append(
            f"{r.function},{r.preset},{r.strategy},{_format(r.reference_regret)},"
            f"{med},{iqr},{_format(r.result.reached_fraction)}"
        )
    for (preset, strategy), avg in sorted(averages.items()):
        lines.append(f"Average,{preset},{strategy},,{_format(avg)},,")
    p = Path(path)
    p.write_text("\n".join(lines) + "\n")
    return p


def compare_update(traces: str | Path) -> list[dict]:
    """Superiority ratio of the updating strategy over the frozen variant.

    One record per (function, preset): the fraction of steps at which the
    updating strategy's median regret is strictly below the frozen variant's.
    """
    grouped = load_traces(traces)
    pairs = {}
    for function, preset, strategy in grouped:
        pairs.setdefault((function, preset), set()).add(strategy)
    records = []
    for (function, preset), strategies in sorted(
        pairs.items(), key=lambda kv: (kv[0][0], _preset_sort_key(kv[0][1]))
    ):
        if not {"pipebo", "noupdate"} <= strategies:
            raise ConfigError(
                f"preset mismatch: need both pipebo and noupdate for {function}/{preset}"
            )
        med_a, _, _ = aggregate(grouped[(function, preset, "pipebo")])
        med_b, _, _ = aggregate(grouped[(function, preset, "noupdate")])
        records.append(
            {
                "function": function,
                "preset": preset,
                "ratio": superiority_ratio(med_a, med_b),
            }
        )
    return records


def render_compare(records: list[dict]) -> str:
    functions = sorted({r["function"] for r in records})
    presets = sorted({r["preset"] for r in records}, key=_preset_sort_key)
    cells = {(r["function"], r["preset"]): r["ratio"] for r in records}
    out = [" | ".join(["function"] + presets)]
    for f in functions:
        row = [f]
        for p in presets:
            v = cells.get((f, p))
            row.append("" if v is None else f"{v:.3f}")
        out.append(" | ".join(row))
    return "\n".join(out)


def write_compare_csv(records: list[dict], path: str | Path) -> Path:
    lines = ["function,preset,ratio"]
    for r in records:
        lines.append(f"{r['function']},{r['preset']},{_format(r['ratio'])}")
    p = Path(path)
    p.write_text("\n".join(lines) + "\n")
    return p
