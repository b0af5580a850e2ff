"""Synthetic cohorts in the instrument-CSV layout, with planted class signal.

Every item is a latent Gaussian rounded and clipped into its instrument's
legal range.  Background items share one distribution across classes; items
behind a planted feature get class-specific means (as fractions of the range).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, LabelingError
from .ingest import CLASS_NAMES, HEALTHY_STAGE, SENTINEL_STAGE, Severity, consolidate_stage
from .schema import SchemaSet, default_schema

# raw stage code -> visit count; HEALTHY_STAGE stands for the healthy arm
DEFAULT_STAGE_COUNTS = {HEALTHY_STAGE: 769, 1: 180, 2: 556, 3: 45, 4: 8, 5: 2, SENTINEL_STAGE: 2}


def default_boundaries() -> dict:
    return {
        "healthy_mild": {
            "features": ["NP3BRADY", "NP3RIGRU", "NP3FTAPR", "NP3RTCON"],
            "means": {"Healthy": 0.10, "Mild": 0.50, "ModSevere": 0.60},
        },
        "mild_modsevere": {
            "features": ["NP3PSTBL", "NP2WALK", "NP3GAIT"],
            "means": {"Healthy": 0.10, "Mild": 0.15, "ModSevere": 0.75},
        },
    }


@dataclass
class CohortSpec:
    stage_counts: dict = field(default_factory=lambda: dict(DEFAULT_STAGE_COUNTS))
    boundaries: dict = field(default_factory=default_boundaries)
    spread: float = 0.12  # latent sd as a fraction of the item range
    background_mean: tuple[float, float] = (0.1, 0.6)
    missing_rate: float = 0.0
    visits_per_subject: int = 4
    extra_rows: int = 3  # instrument-only visits that never survive the join
    seed: int = 0

    def __post_init__(self):
        self.stage_counts = {int(k): int(v) for k, v in self.stage_counts.items()}
        self.background_mean = tuple(self.background_mean)

    def planted(self) -> dict[str, dict[str, float]]:
        """feature -> class name -> mean fraction; later boundaries win on overlap."""
        out = {}
        for b in self.boundaries.values():
            for f in b["features"]:
                out[f] = dict(b["means"])
        return out

    def expected_class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in CLASS_NAMES}
        for code, n in self.stage_counts.items():
            sev = consolidate_stage(code)
            if sev != Severity.EXCLUDED:
                counts[sev.label] += n
        return counts

    def validate(self, schema: SchemaSet) -> None:
        if any(n < 0 for n in self.stage_counts.values()):
            raise ConfigError("stage counts must be non-negative")
        for code in self.stage_counts:
            try:
                consolidate_stage(code)
            except LabelingError as exc:
                raise ConfigError(str(exc)) from None
        if not 0 <= self.missing_rate < 1 or self.spread <= 0 or self.visits_per_subject < 1:
            raise ConfigError("invalid missing_rate, spread or visits_per_subject")
        plantable = {r.name: r for inst in schema.instruments for r in inst.features}
        for name, b in self.boundaries.items():
            if set(b["means"]) != set(CLASS_NAMES):
                raise ConfigError(f"boundary {name} must give a mean for each of {CLASS_NAMES}")
            for f in b["features"]:
                if f not in plantable:
                    raise ConfigError(f"planted feature {f!r} is not in the schema")
                if plantable[f].kind != "passthrough":
                    raise ConfigError(f"planted feature {f!r} is derived; plant single items")

    @classmethod
    def from_dict(cls, doc: dict) -> CohortSpec:
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown cohort spec keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> CohortSpec:
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["background_mean"] = list(self.background_mean)
        return d


def _visit_keys(spec: CohortSpec):
    """(subject, visit, cohort, stage) for every labelled visit, subjects by stage group."""
    rows, next_subject = [], 1000
    for code in sorted(spec.stage_counts):
        n = spec.stage_counts[code]
        n_subj = math.ceil(n / spec.visits_per_subject)
        for s in range(n_subj):
            k = min(spec.visits_per_subject, n - s * spec.visits_per_subject)
            for v in range(k):
                visit = "BL" if v == 0 else f"V{v:02d}"
                cohort = "HC" if code == HEALTHY_STAGE else "PD"
                rows.append((str(next_subject), visit, cohort, code))
            next_subject += 1
    return rows


def _item_values(rng, n, lo, hi, mean_frac, spread):
    width = hi - lo
    latent = rng.normal(lo + np.asarray(mean_frac) * width, spread * width, size=n)
    return np.clip(np.rint(latent), lo, hi).astype(np.int64)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class GeneratedCohort:
    out_dir: Path
    manifest: dict
    files: dict[str, Path]


def generate_cohort(spec: CohortSpec, out_dir: str | Path,
                    schema: SchemaSet | None = None) -> GeneratedCohort:
    """Write one CSV per instrument, ``stages.csv``, ``truth.csv`` and ``manifest.json``."""
    schema = schema or default_schema()
    spec.validate(schema)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    visits = _visit_keys(spec)
    n = len(visits)
    sev = np.array([int(consolidate_stage(v[3])) for v in visits])
    class_of = np.array([CLASS_NAMES[s] if s >= 0 else "Mild" for s in sev])
    planted = spec.planted()
    files = {}
    instrument_rows = {}
    for i, inst in enumerate(schema.instruments):
        lo, hi = inst.item_range
        passthrough = {r.sources[0]: r.name for r in inst.features if r.kind == "passthrough"}
        cols = inst.required_columns
        values = {}
        for col in cols:
            if inst.row_filter and col == inst.row_filter["column"]:
                continue
            feature = passthrough.get(col)
            if feature in planted:
                frac = np.array([planted[feature][c] for c in class_of])
            else:
                frac = np.full(n, rng.uniform(*spec.background_mean))
            values[col] = _item_values(rng, n, lo, hi, frac, spec.spread)
        # excluded items are written but never derived from; blanks there are harmless
        body = []
        for r, (subj, visit, _, _) in enumerate(visits):
            row = [subj, visit]
            for col in cols:
                if inst.row_filter and col == inst.row_filter["column"]:
                    row.append(str(inst.row_filter["value"]))
                elif spec.missing_rate and rng.random() < spec.missing_rate:
                    row.append("")
                else:
                    row.append(str(values[col][r]))
            body.append(row)
        for e in range(spec.extra_rows):
            subj = visits[int(rng.integers(n))][0]
            row = [subj, f"X{i:02d}{e:02d}"]
            for col in cols:
                if inst.row_filter and col == inst.row_filter["column"]:
                    row.append(str(inst.row_filter["value"]))
                else:
                    row.append(str(int(rng.integers(lo, hi + 1))))
            body.append(row)
        body = [body[j] for j in rng.permutation(len(body))]
        path = out / inst.file
        path.write_text(_csv_text([schema.subject_column, schema.visit_column, *cols], body))
        files[inst.name] = path
        instrument_rows[inst.name] = len(body)

    stage_rows = [(s, v, c, "0" if code == HEALTHY_STAGE else str(code))
                  for s, v, c, code in visits]
    (out / "stages.csv").write_text(_csv_text(
        [schema.subject_column, schema.visit_column, "COHORT", "NHY"], stage_rows))
    truth = [(s, v, str(code), Severity(int(consolidate_stage(code))).name)
             for s, v, _, code in visits]
    (out / "truth.csv").write_text(_csv_text(
        [schema.subject_column, schema.visit_column, "stage", "severity"], truth))
    manifest = {
        "spec": spec.to_dict(),
        "common_visits": n,
        "instrument_rows": instrument_rows,
        "expected_class_counts": spec.expected_class_counts(),
        "excluded_visits": spec.stage_counts.get(SENTINEL_STAGE, 0),
        "planted": {k: list(b["features"]) for k, b in spec.boundaries.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    files["stages"] = out / "stages.csv"
    return GeneratedCohort(out, manifest, files)
