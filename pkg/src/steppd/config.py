"""Run configuration: one YAML document, flag overrides, a resolved snapshot.

Keys (all optional)::

    data_dir: path to instrument CSVs        stage_csv: defaults to data_dir/stages.csv
    schema: schema YAML (builtin if null)    out_dir: output root
    seed: top-level seed                     workers: grid-search processes
    tasks: [HealthyVsMild, ...]              models: [logistic, knn, random_forest, gbt]
    grids: {model: {param: [values]}}        cv_folds / test_fraction
    grouped_split: keep a subject's visits on one side of every split
    explain: {models, partition, top_k, waterfall_top_n, waterfall_per_class}
    embed: {input, max_points, perplexity, iterations, learning_rate, ...}
"""
from __future__ import annotations

import copy
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .embed import EmbeddingConfig
from .errors import ConfigError
from .evaluate.tasks import TASKS
from .learners import MODEL_NAMES

DEFAULT_GRIDS = {
    "logistic": {"l2": [0.01, 0.1, 1.0]},
    "knn": {"k": [5, 11, 21]},
    "random_forest": {"n_trees": [200], "max_depth": [8, 16]},
    "gbt": {"max_depth": [3, 5, 7], "n_rounds": [100, 300], "learning_rate": [0.05, 0.1],
            "reg_lambda": [1.0]},
}


@dataclass
class ExplainSettings:
    models: list = field(default_factory=lambda: ["gbt"])
    partition: str = "holdout"  # or "train"
    top_k: int = 15
    waterfall_top_n: int = 10
    waterfall_per_class: int = 1
    samples: list = field(default_factory=list)  # "subject:visit" ids to always explain


@dataclass
class EmbedSettings:
    input: str = "features"  # or "margin" (GBT margins of the evaluated model)
    max_points: int = 0  # 0 keeps every row; otherwise a stratified seeded subsample
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250

    def embedding_config(self, seed: int) -> EmbeddingConfig:
        return EmbeddingConfig(
            perplexity=self.perplexity, iterations=self.iterations,
            learning_rate=self.learning_rate, exaggeration=self.exaggeration,
            exaggeration_iters=self.exaggeration_iters, seed=seed,
        )


@dataclass
class RunConfig:
    data_dir: str | None = None
    stage_csv: str | None = None
    schema: str | None = None
    out_dir: str = "runs/default"
    seed: int = 0
    workers: int = 1
    tasks: list = field(default_factory=lambda: list(TASKS))
    models: list = field(default_factory=lambda: list(MODEL_NAMES))
    grids: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_GRIDS))
    cv_folds: int = 5
    test_fraction: float = 0.2
    grouped_split: bool = False
    explain: ExplainSettings = field(default_factory=ExplainSettings)
    embed: EmbedSettings = field(default_factory=EmbedSettings)

    def validate(self) -> None:
        for t in self.tasks:
            if t not in TASKS:
                raise ConfigError(f"unknown task {t!r}; choose from {list(TASKS)}")
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ConfigError(f"unknown model {m!r}; choose from {list(MODEL_NAMES)}")
            grid = self.grids.get(m)
            if not grid or any(not isinstance(v, list) or not v for v in grid.values()):
                raise ConfigError(f"grid for {m} must map parameters to non-empty lists")
        if self.cv_folds < 2 or not 0 < self.test_fraction < 1:
            raise ConfigError("cv_folds must be >= 2 and test_fraction in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.explain.partition not in ("holdout", "train"):
            raise ConfigError("explain.partition must be 'holdout' or 'train'")
        if self.embed.input not in ("features", "margin"):
            raise ConfigError("embed.input must be 'features' or 'margin'")
        if any(m != "gbt" for m in self.explain.models):
            raise ConfigError("attributions are computed for gbt ensembles only")
        if self.explain.top_k < 1:
            raise ConfigError("explain.top_k must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def snapshot(self) -> str:
        doc = {"tool_version": __version__, **self.to_dict()}
        return yaml.safe_dump(doc, sort_keys=True)


def _build(cls, doc: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**doc)


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc or {})
    doc.pop("tool_version", None)
    explain = _build(ExplainSettings, doc.pop("explain", None) or {}, "explain")
    embed = _build(EmbedSettings, doc.pop("embed", None) or {}, "embed")
    grids = copy.deepcopy(DEFAULT_GRIDS)
    grids.update(doc.pop("grids", None) or {})
    cfg = _build(RunConfig, doc, "config")
    cfg.explain, cfg.embed, cfg.grids = explain, embed, grids
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a YAML config (or start from defaults) and apply non-None overrides."""
    doc = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            doc = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {p} is not valid YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a mapping")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return config_from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def stage_seed(seed: int, *names: str) -> int:
    """Deterministic per-stage seed derived from the top-level seed and a path of names."""
    key = [int(seed)] + [zlib.crc32(n.encode()) for n in names]
    return int(np.random.SeedSequence(key).generate_state(1)[0] & 0x7FFFFFFF)
