"""Regenerate the golden trace CSV and frozen median spot-checks.

Runs the producing pipeline's CLI on a tiny deterministic matrix and freezes
five per-step medians computed by its own metrics module, so the plot tests
can verify exact agreement without importing the producer at test time.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

CONFIG = {
    "functions": ["F1"],
    "presets": [
        {"P": 1, "D": [1, 1]},
        {"P": 1, "D": [1, 1, 1]},
        {"P": 1, "D": [1, 1, 1, 1, 1]},
    ],
    "strategies": ["pipebo", "noupdate"],
    "runs": 3,
    "base_seed": 0,
    "budget_steps": 30,
    "candidates": 300,
    "refine_top": 4,
    "refine_iters": 40,
    "gp_restarts": 2,
    "lipschitz_samples": 100,
    "workers": 2,
}

SPOT_STEPS = [5, 10, 15, 20, 30]


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        cfg = dict(CONFIG, out_dir=str(Path(tmp) / "out"))
        cfg_path = Path(tmp) / "golden.json"
        cfg_path.write_text(json.dumps(cfg))
        subprocess.run(
            [sys.executable, "-m", "pipebo.cli", "run", "--config", str(cfg_path)],
            check=True,
        )
        csv_src = Path(cfg["out_dir"]) / "traces.csv"
        (DATA / "golden_traces.csv").write_bytes(csv_src.read_bytes())

        from pipebo.harness import load_traces
        from pipebo.metrics import aggregate

        grouped = load_traces(csv_src)
        medians = {}
        for (fn, preset, strategy), traces in grouped.items():
            med, _, _ = aggregate(traces)
            medians[f"{fn}/{preset}/{strategy}"] = {
                str(s): float(med[s - 1]) for s in SPOT_STEPS
            }
        (DATA / "golden_medians.json").write_text(json.dumps(medians, indent=2) + "\n")
    print(f"golden fixtures written to {DATA}")


if __name__ == "__main__":
    main()
