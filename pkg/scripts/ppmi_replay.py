"""Replay on real PPMI exports (needs data access; not runnable otherwise).

Checks the cohort accounting and the GBT metrics against reference values:
counts must match exactly, each cross-validated metric must fall within
mean +/- 3 sd of the reference row.

    python3 scripts/ppmi_replay.py --data /path/to/ppmi_csvs --out runs/ppmi [--config cfg.yaml]

The directory must hold the 15 instrument CSVs named in the schema plus
stages.csv (PATNO, EVENT_ID, COHORT, NHY).  Column names in PPMI releases
drift; adapt a copy of the schema file and pass it via ``schema:`` in the
config when needed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from steppd.config import load_config
from steppd.pipeline import run_evaluate, run_ingest

REFERENCE_ACCOUNTING = {
    "common_visits": 16162,
    "after_cleaning": 15624,
    "labelled": 15606,
    "class_counts": {"Healthy": 7689, "Mild": 7364, "ModSevere": 553},
}

# task -> metric -> (mean, sd) over 5 folds
REFERENCE_GBT = {
    "HealthyVsMild": {"accuracy": (0.9548, 0.0063), "f1": (0.9530, 0.0068),
                      "roc_auc": (0.9888, 0.0022), "pr_auc": (0.9892, 0.0024),
                      "mcc": (0.9099, 0.0124)},
    "HealthyVsModSevere": {"accuracy": (0.9944, 0.0022), "f1": (0.9586, 0.0159),
                           "roc_auc": (0.9983, 0.0022), "pr_auc": (0.9908, 0.0055),
                           "mcc": (0.9556, 0.0170)},
    "MildVsModSevere": {"accuracy": (0.9678, 0.0028), "f1": (0.7661, 0.0201),
                        "roc_auc": (0.9775, 0.0077), "pr_auc": (0.8472, 0.0276),
                        "mcc": (0.7516, 0.0221)},
    "ThreeClass": {"accuracy": (0.9414, 0.0050), "f1": (0.8775, 0.0145),
                   "roc_auc": (0.9865, 0.0030), "pr_auc": (0.9377, 0.0117),
                   "mcc": (0.8898, 0.0095)},
}


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="runs/ppmi")
    p.add_argument("--config")
    p.add_argument("--workers", type=int)
    args = p.parse_args()
    if not Path(args.data).is_dir():
        print(f"no PPMI export at {args.data}; this replay is data-gated", file=sys.stderr)
        return 3
    cfg = load_config(args.config, data_dir=args.data, out_dir=args.out, models=["gbt"],
                      workers=args.workers)
    matrix = run_ingest(cfg)
    report = json.loads((Path(cfg.out_dir) / "ingest" / "report.json").read_text())
    observed = {
        "common_visits": report["common_visits"],
        "after_cleaning": report["after_cleaning"],
        "labelled": len(matrix),
        "class_counts": report["class_counts"],
    }
    ok = True
    for key, want in REFERENCE_ACCOUNTING.items():
        good = observed[key] == want
        ok &= good
        print(f"[{'PASS' if good else 'FAIL'}] {key}: observed {observed[key]} expected {want}")
    summary = run_evaluate(cfg, matrix)
    for task, ref in REFERENCE_GBT.items():
        cv = summary[task]["gbt"]["cv"]
        for metric, (mean, sd) in ref.items():
            got = cv[metric]["mean"]
            good = abs(got - mean) <= 3 * sd
            ok &= good
            print(f"[{'PASS' if good else 'FAIL'}] {task} {metric}: {got:.4f} "
                  f"vs {mean:.4f} +/- 3*{sd:.4f}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
