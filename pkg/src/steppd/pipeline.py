"""Pipeline stages; each reads its inputs from, and writes its outputs under, ``out_dir``.

Layout::

    resolved_config.yaml
    ingest/    features.csv  report.json
    evaluate/  summary.json  <task>/split.json  <task>/<model>/{metrics.json, pipeline.json,
               confusion_oof.csv, confusion_holdout.csv}
    explain/   heatmap.tsv  <task>/{attributions.csv, global_summary.tsv, waterfall_*.csv}
    embed/     <task>.csv
    report.md  report.json

Every stage directory also receives ``resolved_config.yaml``.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .attribution import (
    METHOD,
    AttributionVector,
    cross_task_heatmap,
    global_class_summary,
    local_waterfall,
    shap_values,
)
from .config import RunConfig, stage_seed
from .embed import tsne_embed, write_embedding_csv
from .errors import DataError
from .evaluate import GridSpec, evaluate_model, get_task, make_splits
from .evaluate.splits import stratified_holdout
from .evaluate.search import FittedPipeline
from .evaluate.tasks import BINARY_TASKS
from .ingest import FeatureMatrix, ingest_directory
from .learners import model_from_dict
from .preprocess import Standardizer, fit_standardizer
from .schema import load_schema

log = logging.getLogger(__name__)


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def stage_dir(cfg: RunConfig, name: str = "") -> Path:
    d = Path(cfg.out_dir) / name if name else Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "resolved_config.yaml").write_text(cfg.snapshot())
    return d


def sample_ids(matrix: FeatureMatrix) -> list[str]:
    return [f"{s}:{v}" for s, v in matrix.keys]


# ---------------------------------------------------------------- ingest

def run_ingest(cfg: RunConfig) -> FeatureMatrix:
    if not cfg.data_dir:
        raise DataError("no data_dir configured")
    schema = load_schema(cfg.schema)
    matrix, report = ingest_directory(cfg.data_dir, schema, cfg.stage_csv)
    out = stage_dir(cfg, "ingest")
    matrix.write_csv(out / "features.csv")
    _dump_json(out / "report.json", report.to_dict())
    log.info("ingest: %d visits, classes %s", len(matrix), report.class_counts)
    return matrix


def load_features(cfg: RunConfig) -> FeatureMatrix:
    path = Path(cfg.out_dir) / "ingest" / "features.csv"
    return FeatureMatrix.read_csv(path) if path.exists() else run_ingest(cfg)


def task_rows(matrix: FeatureMatrix, task_name: str):
    task = get_task(task_name)
    sub = matrix.take(np.flatnonzero(task.mask(matrix.labels)))
    return task, sub, task.encode(sub.labels)


# ---------------------------------------------------------------- evaluate

def _pipeline_doc(pipe: FittedPipeline) -> dict:
    return {"standardizer": pipe.standardizer.to_dict(), "model": pipe.model.to_dict()}


def load_pipeline(cfg: RunConfig, task: str, model: str) -> FittedPipeline:
    path = Path(cfg.out_dir) / "evaluate" / task / model / "pipeline.json"
    if not path.exists():
        raise DataError(f"{path} missing; run the evaluate stage first")
    doc = json.loads(path.read_text())
    return FittedPipeline(Standardizer.from_dict(doc["standardizer"]), model_from_dict(doc["model"]))


def load_split(cfg: RunConfig, task: str) -> dict:
    path = Path(cfg.out_dir) / "evaluate" / task / "split.json"
    if not path.exists():
        raise DataError(f"{path} missing; run the evaluate stage first")
    return json.loads(path.read_text())


def _confusion_csv(path: Path, cm: np.ndarray, names: list[str]) -> None:
    df = pd.DataFrame(cm, index=pd.Index(names, name="true"), columns=names)
    df.to_csv(path, lineterminator="\n")


def run_evaluate(cfg: RunConfig, matrix: FeatureMatrix | None = None) -> dict:
    matrix = matrix if matrix is not None else load_features(cfg)
    root = stage_dir(cfg, "evaluate")
    summary = {}
    for task_name in cfg.tasks:
        task, sub, y = task_rows(matrix, task_name)
        groups = sub.subject_ids if cfg.grouped_split else None
        train_idx, test_idx, folds = make_splits(
            y, stage_seed(cfg.seed, "split", task_name), cfg.cv_folds, cfg.test_fraction, groups)
        ids = np.array(sample_ids(sub), dtype=object)
        tdir = root / task_name
        tdir.mkdir(exist_ok=True)
        fold_of = np.empty(len(train_idx), dtype=np.int64)
        for f, (_, val) in enumerate(folds):
            fold_of[val] = f
        _dump_json(tdir / "split.json", {
            "train": ids[train_idx].tolist(), "test": ids[test_idx].tolist(),
            "fold": fold_of.tolist(), "grouped": cfg.grouped_split,
        })
        summary[task_name] = {}
        for model in cfg.models:
            grid = GridSpec(model, cfg.grids[model], task.selection_metric)
            ev = evaluate_model(
                sub.X, y, task.n_classes, grid, seed=stage_seed(cfg.seed, "model", task_name, model),
                feature_names=sub.feature_names, workers=cfg.workers,
                splits=(train_idx, test_idx, folds))
            mdir = tdir / model
            mdir.mkdir(exist_ok=True)
            doc = {
                "task": task_name, "model": model, "classes": task.class_names,
                "positive_class": task.class_names[-1] if task.is_binary else None,
                "n_train": len(train_idx), "n_test": len(test_idx),
                "selection_metric": task.selection_metric,
                **ev.metrics_dict(),
                "oof_confusion": ev.oof_confusion.tolist(),
            }
            _dump_json(mdir / "metrics.json", doc)
            _confusion_csv(mdir / "confusion_oof.csv", ev.oof_confusion, task.class_names)
            _confusion_csv(mdir / "confusion_holdout.csv", ev.holdout_confusion, task.class_names)
            (mdir / "pipeline.json").write_text(
                json.dumps(_pipeline_doc(ev.final), separators=(",", ":")) + "\n")
            summary[task_name][model] = {
                "cv": {m: {"mean": v["mean"], "sd": v["sd"]} for m, v in ev.cv.items()},
                "holdout": ev.holdout, "best_params": ev.best_params,
            }
            log.info("evaluate %s/%s: cv f1 %.4f", task_name, model, ev.cv["f1"]["mean"])
    _dump_json(root / "summary.json", summary)
    return summary


# ---------------------------------------------------------------- explain

def _rows_for_partition(cfg: RunConfig, sub: FeatureMatrix, task_name: str) -> np.ndarray:
    split = load_split(cfg, task_name)
    wanted = split["test" if cfg.explain.partition == "holdout" else "train"]
    pos = {sid: i for i, sid in enumerate(sample_ids(sub))}
    try:
        return np.array([pos[s] for s in wanted], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"split references unknown sample {exc.args[0]}") from None


def _attribution_frame(ids, labels, phi, base, margin, names) -> pd.DataFrame:
    n, C, _ = phi.shape
    head = pd.DataFrame({
        "sample_id": np.repeat(ids, C),
        "label": np.repeat(labels, C),
        "output": np.tile(np.arange(C), n),
        "base": np.tile(base, n),
        "margin": margin.reshape(-1),
        "local_accuracy_residual": (base[None, :] + phi.sum(axis=2) - margin).reshape(-1),
    })
    return pd.concat([head, pd.DataFrame(phi.reshape(n * C, -1), columns=names)], axis=1)


def run_explain(cfg: RunConfig, matrix: FeatureMatrix | None = None) -> dict:
    matrix = matrix if matrix is not None else load_features(cfg)
    schema = load_schema(cfg.schema)
    meta = schema.feature_metadata()
    root = stage_dir(cfg, "explain")
    results = {}
    summaries = {}
    for task_name in cfg.tasks:
        task, sub, y = task_rows(matrix, task_name)
        for model_name in cfg.explain.models:
            pipe = load_pipeline(cfg, task_name, model_name)
            rows = _rows_for_partition(cfg, sub, task_name)
            Z = pipe.transform(sub.X[rows])
            phi, base = shap_values(pipe.model, Z)
            margin = pipe.model.margin(Z).reshape(len(rows), -1)
            ids = np.array(sample_ids(sub), dtype=object)[rows]
            labels = np.array(task.class_names, dtype=object)[y[rows]]
            tdir = root / task_name if model_name == "gbt" else root / task_name / model_name
            tdir.mkdir(parents=True, exist_ok=True)
            frame = _attribution_frame(ids, labels, phi, base, margin, sub.feature_names)
            frame.to_csv(tdir / "attributions.csv", index=False, lineterminator="\n")
            # summaries use the binary margin, or the true class's margin for softmax models
            out_idx = np.zeros(len(rows), dtype=np.int64) if phi.shape[1] == 1 else y[rows]
            chosen = phi[np.arange(len(rows)), out_idx]
            summary = global_class_summary(chosen, labels, sub.feature_names, cfg.explain.top_k,
                                           task.class_names, task_name)
            table = summary.to_frame()
            top_total = table["mean_abs_total"].max() if len(table) else 0.0
            table["shade"] = table["mean_abs_total"] / top_total if top_total > 0 else 0.0
            for key in ("instrument", "domain", "nf"):
                table[key] = [meta.get(f, {}).get(key, "") for f in table["feature"]]
            table.to_csv(tdir / "global_summary.tsv", sep="\t", index=False, lineterminator="\n")
            _write_waterfalls(cfg, tdir, sub, rows, ids, y, phi, base, margin, out_idx, task)
            resid = np.abs(frame["local_accuracy_residual"].to_numpy())
            results[(task_name, model_name)] = {
                "n_samples": len(rows), "max_local_accuracy_residual": float(resid.max()),
                "top_features": summary.top_features,
            }
            if model_name == "gbt":
                summaries[task_name] = summary
    binary = [t for t in BINARY_TASKS if t in summaries]
    if len(binary) == 3:
        heat = cross_task_heatmap({t: summaries[t] for t in binary}, cfg.explain.top_k, meta)
        heat.to_frame().to_csv(root / "heatmap.tsv", sep="\t", index=False, lineterminator="\n")
    _dump_json(root / "explain.json", {
        "method": METHOD, "partition": cfg.explain.partition,
        "results": {f"{t}/{m}": r for (t, m), r in results.items()},
    })
    return results


def _write_waterfalls(cfg, tdir, sub, rows, ids, y, phi, base, margin, out_idx, task):
    chosen = []
    for c in range(task.n_classes):
        hits = [i for i in range(len(rows)) if y[rows[i]] == c]
        chosen.extend(hits[: cfg.explain.waterfall_per_class])
    wanted = set(cfg.explain.samples)
    chosen.extend(i for i in range(len(rows)) if ids[i] in wanted and i not in chosen)
    for i in chosen:
        k = int(out_idx[i])
        attr = AttributionVector(phi[i, k], float(base[k]), float(margin[i, k]), k, ids[i])
        entries = local_waterfall(attr, sub.feature_names, cfg.explain.waterfall_top_n,
                                  sub.X[rows[i]])
        df = pd.DataFrame([{"feature": "base_value", "feature_value": None, "phi": None,
                            "cumulative": attr.base_value}]
                          + [e.__dict__ for e in entries])
        df = df[["feature", "feature_value", "phi", "cumulative"]]
        name = ids[i].replace(":", "_")
        df.to_csv(tdir / f"waterfall_{name}.csv", index=False, lineterminator="\n")


# ---------------------------------------------------------------- embed

def run_embed(cfg: RunConfig, matrix: FeatureMatrix | None = None) -> dict:
    matrix = matrix if matrix is not None else load_features(cfg)
    root = stage_dir(cfg, "embed")
    out = {}
    for task_name in cfg.tasks:
        task, sub, y = task_rows(matrix, task_name)
        idx = np.arange(len(y))
        if cfg.embed.max_points and cfg.embed.max_points < len(y):
            _, idx = stratified_holdout(y, stage_seed(cfg.seed, "embed-sample", task_name),
                                        cfg.embed.max_points / len(y), min_per_class=1)
        if cfg.embed.input == "margin":
            pipe = load_pipeline(cfg, task_name, "gbt")
            X = pipe.model.margin(pipe.transform(sub.X[idx])).reshape(len(idx), -1)
        else:
            X = fit_standardizer(sub.X[idx], sub.feature_names).transform(sub.X[idx])
        ecfg = cfg.embed.embedding_config(stage_seed(cfg.seed, "embed", task_name))
        emb = tsne_embed(X, ecfg)
        labels = np.array(task.class_names, dtype=object)[y[idx]]
        write_embedding_csv(root / f"{task_name}.csv", np.array(sample_ids(sub))[idx], emb.coords,
                            labels, ecfg, {"task": task_name, "input": cfg.embed.input,
                                           "n_points": int(len(idx)), "final_kl": emb.final_kl})
        out[task_name] = {"n_points": int(len(idx)), "final_kl": emb.final_kl}
    return out


# ---------------------------------------------------------------- report

def _fmt(stat: dict) -> str:
    return f"{stat['mean']:.4f} ± {stat['sd']:.4f}"


def run_report(cfg: RunConfig) -> dict:
    root = stage_dir(cfg)
    report = {"tool_version": __version__}
    ingest = root / "ingest" / "report.json"
    if ingest.exists():
        report["ingest"] = json.loads(ingest.read_text())
    summary_path = root / "evaluate" / "summary.json"
    if summary_path.exists():
        report["evaluate"] = json.loads(summary_path.read_text())
    explain_path = root / "explain" / "explain.json"
    if explain_path.exists():
        report["explain"] = json.loads(explain_path.read_text())
    heat = root / "explain" / "heatmap.tsv"
    if heat.exists():
        report["heatmap_rows"] = int(len(pd.read_csv(heat, sep="\t")))
    _dump_json(root / "report.json", report)

    lines = [f"# Run report (steppd {__version__})", ""]
    if "ingest" in report:
        ing = report["ingest"]
        lines += ["## Cohort", "",
                  f"- common visits: {ing['common_visits']}",
                  f"- after removing incomplete rows: {ing['after_cleaning']}",
                  f"- excluded by stage code: {ing['excluded']}",
                  f"- classes: {ing['class_counts']}", ""]
    if "evaluate" in report:
        lines += ["## Cross-validated performance (mean ± sd over folds)", "",
                  "| task | model | accuracy | f1 | roc_auc | pr_auc | mcc |",
                  "|---|---|---|---|---|---|---|"]
        for task, models in report["evaluate"].items():
            for model, res in models.items():
                cells = " | ".join(_fmt(res["cv"][m]) for m in
                                   ("accuracy", "f1", "roc_auc", "pr_auc", "mcc"))
                lines.append(f"| {task} | {model} | {cells} |")
        lines.append("")
    if "explain" in report:
        lines += ["## Top attributed features", ""]
        for key, res in report["explain"]["results"].items():
            lines.append(f"- {key}: {', '.join(res['top_features'][:5])} "
                         f"(max local-accuracy residual {res['max_local_accuracy_residual']:.2e})")
        if "heatmap_rows" in report:
            lines.append(f"- cross-task heatmap rows: {report['heatmap_rows']}")
        lines.append("")
    (root / "report.md").write_text("\n".join(lines))
    return report


def run_pipeline(cfg: RunConfig) -> dict:
    stage_dir(cfg)
    matrix = run_ingest(cfg)
    run_evaluate(cfg, matrix)
    run_explain(cfg, matrix)
    run_embed(cfg, matrix)
    return run_report(cfg)
