"""Trace CSV loading and the aggregation recomputed from raw runs.

Everything is rebuilt from the flat per-run trace rows; pre-aggregated files
are never consumed, so a disagreement with the producing pipeline's own
metrics is always a bug on one side.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXPECTED_HEADER = "function,preset,strategy,run,step,best_value,simple_regret"


class SchemaError(Exception):
    """Input file does not match the trace CSV schema."""


class FilterError(Exception):
    """Requested filters select no data."""


@dataclass(frozen=True)
class TraceTable:
    """Regret traces keyed by (function, preset, strategy), runs stacked row-wise."""

    regret: dict[tuple[str, str, str], np.ndarray]

    @property
    def functions(self) -> list[str]:
        return sorted({k[0] for k in self.regret})

    @property
    def presets(self) -> list[str]:
        return sorted({k[1] for k in self.regret})

    @property
    def strategies(self) -> list[str]:
        return sorted({k[2] for k in self.regret})


def load_trace_csv(path: str | Path) -> TraceTable:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with path.open() as fh:
        header = fh.readline().strip()
        if header != EXPECTED_HEADER:
            raise SchemaError(
                f"unexpected header {header!r}; expected {EXPECTED_HEADER!r}"
            )
        per_run: dict[tuple[str, str, str, int], list[tuple[int, float]]] = {}
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise SchemaError(f"line {ln}: expected 7 fields, got {len(parts)}")
            function, preset, strategy, run_s, step_s, _best, regret_s = parts
            try:
                per_run.setdefault((function, preset, strategy, int(run_s)), []).append(
                    (int(step_s), float(regret_s))
                )
            except ValueError as exc:
                raise SchemaError(f"line {ln}: {exc}") from exc

    grouped: dict[tuple[str, str, str], list[np.ndarray]] = {}
    for (function, preset, strategy, _run), entries in sorted(per_run.items()):
        entries.sort()
        grouped.setdefault((function, preset, strategy), []).append(
            np.array([e[1] for e in entries])
        )
    return TraceTable(regret={k: np.vstack(v) for k, v in grouped.items()})


def aggregate_regret(runs: np.ndarray) -> dict[str, np.ndarray]:
    """Per-step median and quartiles over the stacked runs.

    Linear-interpolation quantiles, matching the producing pipeline's
    aggregation exactly (the median of an even count is the average of the
    middle two).
    """
    q25, med, q75 = np.quantile(runs, [0.25, 0.5, 0.75], axis=0)
    return {"median": med, "q25": q25, "q75": q75}


def superiority_ratios(
    table: TraceTable, functions: list[str] | None = None
) -> dict[str, dict[str, float]]:
    """Per preset: per-function fraction of steps where the updating strategy's
    median regret is strictly below the frozen variant's (ties to neither)."""
    wanted = functions or table.functions
    out: dict[str, dict[str, float]] = {}
    for preset in table.presets:
        for fn in wanted:
            key_a = (fn, preset, "pipebo")
            key_b = (fn, preset, "noupdate")
            if key_a not in table.regret or key_b not in table.regret:
                continue
            med_a = aggregate_regret(table.regret[key_a])["median"]
            med_b = aggregate_regret(table.regret[key_b])["median"]
            ratio = float(np.sum(med_a < med_b)) / med_a.shape[0]
            out.setdefault(preset, {})[fn] = ratio
    if not out:
        raise FilterError(
            "no (pipebo, noupdate) pairs found; available keys: "
            + ", ".join(f"{k[0]}/{k[1]}/{k[2]}" for k in sorted(table.regret))
        )
    return out
