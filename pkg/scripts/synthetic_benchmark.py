"""Generate the default synthetic cohort and run the full pipeline on it.

    python3 scripts/synthetic_benchmark.py --out runs/synth --quick
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import dataclass
from pathlib import Path

from steppd.config import load_config
from steppd.pipeline import run_pipeline
from steppd.synth import CohortSpec, generate_cohort

QUICK = {
    "grids": {
        "logistic": {"l2": [0.1]},
        "knn": {"k": [5]},
        "random_forest": {"n_trees": [50], "max_depth": [8]},
        "gbt": {"max_depth": [3], "n_rounds": [100], "learning_rate": [0.1]},
    },
    "embed": {"max_points": 400, "iterations": 400},
}


@dataclass
class BenchmarkConfig:
    out: Path = Path("runs/synth")
    seed: int = 0
    quick: bool = False
    workers: int = 1


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=BenchmarkConfig.out)
    p.add_argument("--seed", type=int, default=BenchmarkConfig.seed)
    p.add_argument("--quick", action="store_true", help="one grid point per model")
    p.add_argument("--workers", type=int, default=BenchmarkConfig.workers)
    bc = BenchmarkConfig(**vars(p.parse_args()))

    data = bc.out / "data"
    generate_cohort(CohortSpec(seed=bc.seed), data)
    overrides = QUICK if bc.quick else {}
    cfg = load_config(None, data_dir=str(data), out_dir=str(bc.out / "run"), seed=bc.seed,
                      workers=bc.workers, **overrides)
    t0 = time.time()
    report = run_pipeline(cfg)
    print(f"pipeline finished in {time.time() - t0:.1f}s")
    print(json.dumps(report["ingest"]["class_counts"]))
    for task, models in report["evaluate"].items():
        for model, res in models.items():
            cv = res["cv"]
            print(f"{task:20s} {model:14s} acc {cv['accuracy']['mean']:.4f} "
                  f"f1 {cv['f1']['mean']:.4f} mcc {cv['mcc']['mean']:.4f}")
    print((bc.out / "run" / "report.md").resolve())


if __name__ == "__main__":
    main()
