"""Figure rendering: regret curves (median + interquartile band) and
superiority box plots, reproducible byte for byte given identical inputs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .data import FilterError, TraceTable, aggregate_regret, superiority_ratios

PLOT_KINDS = ("regret-curves", "superiority-box")

# keep text as text (assertable output) and strip volatile metadata
matplotlib.rcParams["svg.fonttype"] = "none"
matplotlib.rcParams["svg.hashsalt"] = "pipebo-plots"


@dataclass(frozen=True)
class PlotSpec:
    input_csv: Path
    output_image: Path
    kind: str
    function: Optional[str] = None
    preset: Optional[str] = None
    log_scale: bool = False

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"kind must be one of {PLOT_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class RenderResult:
    output_image: Path
    series: dict
    n_boxes: int = 0
    strategies: tuple[str, ...] = ()


def _filtered_keys(table: TraceTable, spec: PlotSpec) -> list[tuple[str, str, str]]:
    keys = [
        k
        for k in sorted(table.regret)
        if (spec.function is None or k[0] == spec.function)
        and (spec.preset is None or k[1] == spec.preset)
    ]
    if not keys:
        raise FilterError(
            "filters match no series; available: functions="
            + ",".join(table.functions)
            + " presets="
            + ",".join(table.presets)
            + " strategies="
            + ",".join(table.strategies)
        )
    return keys


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {"metadata": {"Date": None}} if path.suffix == ".svg" else {}
    fig.savefig(path, **kwargs)
    plt.close(fig)


def render_regret_curves(table: TraceTable, spec: PlotSpec) -> RenderResult:
    keys = _filtered_keys(table, spec)
    functions = sorted({k[0] for k in keys})
    presets = sorted({k[1] for k in keys})
    if len(functions) > 1 or len(presets) > 1:
        raise FilterError(
            "regret curves need a single (function, preset); narrow the filters. "
            f"matched functions={','.join(functions)} presets={','.join(presets)}"
        )

    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = {}
    strategies = []
    for key in keys:
        strategy = key[2]
        bands = aggregate_regret(table.regret[key])
        steps = np.arange(1, bands["median"].shape[0] + 1)
        (line,) = ax.plot(steps, bands["median"], label=strategy)
        ax.fill_between(
            steps, bands["q25"], bands["q75"], alpha=0.25, color=line.get_color()
        )
        series[strategy] = bands
        strategies.append(strategy)
    if spec.log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("simple regret")
    ax.set_title(f"{functions[0]} {presets[0]}")
    ax.legend()
    _save(fig, spec.output_image)
    return RenderResult(
        output_image=spec.output_image, series=series, strategies=tuple(strategies)
    )


def render_superiority_box(table: TraceTable, spec: PlotSpec) -> RenderResult:
    functions = [spec.function] if spec.function else None
    ratios = superiority_ratios(table, functions)
    presets = (
        [p for p in ratios if p == spec.preset] if spec.preset else sorted(ratios)
    )
    if not presets:
        raise FilterError(
            f"preset filter {spec.preset!r} matches none of: {', '.join(sorted(ratios))}"
        )
    data = [sorted(ratios[p].values()) for p in presets]

    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(presets), 4.5))
    ax.boxplot(data, tick_labels=presets)
    ax.axhline(0.5, linestyle=":", linewidth=0.8, color="gray")
    ax.set_ylabel("superiority ratio (updates vs frozen)")
    ax.set_ylim(-0.05, 1.05)
    _save(fig, spec.output_image)
    return RenderResult(
        output_image=spec.output_image,
        series={p: ratios[p] for p in presets},
        n_boxes=len(presets),
    )


def render(table: TraceTable, spec: PlotSpec) -> RenderResult:
    if spec.kind == "regret-curves":
        return render_regret_curves(table, spec)
    return render_superiority_box(table, spec)
