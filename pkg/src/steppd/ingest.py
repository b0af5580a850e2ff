"""Instrument tables -> visit-level feature matrix with severity labels."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, EmptyResultError, LabelingError, SchemaError
from .schema import InstrumentSchema, SchemaSet

log = logging.getLogger(__name__)

SUBJECT = "subject_id"
VISIT = "visit_id"
HEALTHY_STAGE = -1  # raw-stage marker for healthy-arm visits
SENTINEL_STAGE = 101


class Severity(IntEnum):
    EXCLUDED = -1
    HEALTHY = 0
    MILD = 1
    MOD_SEVERE = 2

    @property
    def label(self) -> str:
        return _SEVERITY_NAMES[self]


_SEVERITY_NAMES = {
    Severity.EXCLUDED: "Excluded",
    Severity.HEALTHY: "Healthy",
    Severity.MILD: "Mild",
    Severity.MOD_SEVERE: "ModSevere",
}
CLASS_NAMES = ("Healthy", "Mild", "ModSevere")


def consolidate_stage(raw_stage: int) -> Severity:
    """Map a raw stage code onto the three severity classes (or EXCLUDED)."""
    if raw_stage == HEALTHY_STAGE:
        return Severity.HEALTHY
    if raw_stage in (1, 2):
        return Severity.MILD
    if raw_stage in (3, 4, 5):
        return Severity.MOD_SEVERE
    if raw_stage == SENTINEL_STAGE:
        return Severity.EXCLUDED
    raise LabelingError(f"unrecognised stage code {raw_stage!r}")


@dataclass
class RawItemTable:
    instrument: str
    keys: pd.DataFrame  # subject_id, visit_id as strings
    values: pd.DataFrame  # float, NaN marks a missing or unparseable cell
    n_unparseable: int = 0
    n_filtered: int = 0

    def __len__(self) -> int:
        return len(self.keys)


@dataclass
class FeatureBlock:
    instrument: str
    keys: pd.DataFrame
    values: np.ndarray
    feature_names: list[str]

    def __len__(self) -> int:
        return len(self.keys)


@dataclass
class FeatureMatrix:
    """Visit-level rows, one column per derived feature.

    ``labels`` holds :class:`Severity` codes once :func:`assign_severity` has
    run, otherwise ``None``.
    """

    subject_ids: np.ndarray
    visit_ids: np.ndarray
    X: np.ndarray
    feature_names: list[str]
    raw_stage: np.ndarray | None = None
    labels: np.ndarray | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape != (len(self.subject_ids), len(self.feature_names)):
            raise DataError(
                f"matrix shape {self.X.shape} does not match "
                f"{len(self.subject_ids)} rows x {len(self.feature_names)} features"
            )

    def __len__(self) -> int:
        return len(self.subject_ids)

    @property
    def keys(self) -> list[tuple[str, str]]:
        return list(zip(self.subject_ids.tolist(), self.visit_ids.tolist()))

    def take(self, idx) -> FeatureMatrix:
        idx = np.asarray(idx)
        return replace(
            self,
            subject_ids=self.subject_ids[idx],
            visit_ids=self.visit_ids[idx],
            X=self.X[idx],
            raw_stage=None if self.raw_stage is None else self.raw_stage[idx],
            labels=None if self.labels is None else self.labels[idx],
            notes=dict(self.notes),
        )

    def class_counts(self) -> dict[str, int]:
        if self.labels is None:
            return {}
        return {name: int(np.sum(self.labels == i)) for i, name in enumerate(CLASS_NAMES)}

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=self.feature_names)
        df.insert(0, SUBJECT, self.subject_ids)
        df.insert(1, VISIT, self.visit_ids)
        if self.raw_stage is not None:
            df.insert(2, "raw_stage", self.raw_stage)
        if self.labels is not None:
            df["label"] = [Severity(int(v)).label for v in self.labels]
        return df

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def read_csv(cls, path: str | Path) -> FeatureMatrix:
        df = pd.read_csv(path, dtype={SUBJECT: str, VISIT: str})
        meta = [SUBJECT, VISIT, "raw_stage", "label"]
        features = [c for c in df.columns if c not in meta]
        labels = None
        if "label" in df.columns:
            lookup = {name: i for i, name in enumerate(CLASS_NAMES)}
            labels = np.array([lookup[v] for v in df["label"]], dtype=np.int64)
        raw = df["raw_stage"].to_numpy(dtype=np.int64) if "raw_stage" in df.columns else None
        return cls(
            subject_ids=df[SUBJECT].to_numpy(dtype=object),
            visit_ids=df[VISIT].to_numpy(dtype=object),
            X=df[features].to_numpy(dtype=np.float64),
            feature_names=features,
            raw_stage=raw,
            labels=labels,
        )


def load_instrument_table(
    path: str | Path,
    schema: InstrumentSchema,
    subject_column: str = "PATNO",
    visit_column: str = "EVENT_ID",
) -> RawItemTable:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{schema.name}: table {path} not found")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    for col in [subject_column, visit_column, *schema.required_columns]:
        if col not in df.columns:
            raise SchemaError(f"{schema.name}: {path.name} lacks required column {col!r}")

    n_before = len(df)
    if schema.row_filter:
        col, value = schema.row_filter["column"], str(schema.row_filter["value"])
        df = df[df[col].str.strip() == value]
    value_cols = [c for c in schema.required_columns if not schema.row_filter
                  or c != schema.row_filter["column"]]

    raw = df[value_cols].apply(lambda s: s.str.strip())
    blank = raw == ""
    parsed = raw.apply(pd.to_numeric, errors="coerce")
    bad = parsed.isna() & ~blank
    if bad.to_numpy().any():
        log.warning("%s: %d unparseable cells treated as missing", schema.name, int(bad.sum().sum()))
    keys = pd.DataFrame({
        SUBJECT: df[subject_column].str.strip().to_numpy(),
        VISIT: df[visit_column].str.strip().to_numpy(),
    })
    return RawItemTable(
        instrument=schema.name,
        keys=keys,
        values=parsed.reset_index(drop=True).astype(np.float64),
        n_unparseable=int(bad.to_numpy().sum()),
        n_filtered=n_before - len(df),
    )


def derive_instrument_features(table: RawItemTable, schema: InstrumentSchema) -> FeatureBlock:
    """Apply the schema's rules row by row; a missing input makes the output missing."""
    n = len(table)
    out = np.empty((n, len(schema.features)), dtype=np.float64)
    for j, rule in enumerate(schema.features):
        cols = table.values[list(rule.sources)].to_numpy()
        if rule.kind == "sum":
            # NaN propagates: any missing constituent makes the sum missing
            out[:, j] = cols.sum(axis=1)
        else:
            out[:, j] = cols[:, 0]
    return FeatureBlock(
        instrument=schema.name,
        keys=table.keys.reset_index(drop=True),
        values=out,
        feature_names=schema.feature_names,
    )


def join_common_visits(blocks: list[FeatureBlock]) -> FeatureMatrix:
    """Inner-join blocks on (subject_id, visit_id); rows sorted by key."""
    if not blocks:
        raise DataError("join_common_visits needs at least one block")
    frames = []
    for block in blocks:
        if block.keys.duplicated().any():
            dup = block.keys[block.keys.duplicated()].iloc[0].tolist()
            raise DataError(
                f"{block.instrument}: duplicate (subject, visit) key {tuple(dup)}; "
                "use the schema row_filter to select one assessment per visit"
            )
        df = pd.DataFrame(block.values, columns=block.feature_names)
        df.index = pd.MultiIndex.from_frame(block.keys)
        frames.append(df)
    joined = pd.concat(frames, axis=1, join="inner")
    if joined.empty:
        raise EmptyResultError("no (subject, visit) pair is present in every instrument")
    joined = joined.sort_index()
    keys = joined.index.to_frame(index=False)
    return FeatureMatrix(
        subject_ids=keys[SUBJECT].to_numpy(dtype=object),
        visit_ids=keys[VISIT].to_numpy(dtype=object),
        X=joined.to_numpy(dtype=np.float64),
        feature_names=[n for b in blocks for n in b.feature_names],
    )


def drop_incomplete(matrix: FeatureMatrix) -> tuple[FeatureMatrix, int]:
    """Row-wise deletion of visits with any missing feature.

    Returns the cleaned matrix and the number of rows removed.
    """
    keep = ~np.isnan(matrix.X).any(axis=1)
    removed = int(len(matrix) - keep.sum())
    return matrix.take(np.flatnonzero(keep)), removed


def load_stage_table(
    path: str | Path,
    subject_column: str = "PATNO",
    visit_column: str = "EVENT_ID",
    cohort_column: str = "COHORT",
    stage_column: str = "NHY",
    healthy_value: str = "HC",
) -> dict[tuple[str, str], int]:
    """Read the stage CSV into (subject, visit) -> raw stage code.

    Healthy-arm visits get :data:`HEALTHY_STAGE` regardless of their H&Y entry.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"stage table {path} not found")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    for col in (subject_column, visit_column, cohort_column, stage_column):
        if col not in df.columns:
            raise SchemaError(f"stage table lacks required column {col!r}")
    table: dict[tuple[str, str], int] = {}
    for subj, visit, cohort, stage in zip(
        df[subject_column].str.strip(), df[visit_column].str.strip(),
        df[cohort_column].str.strip(), df[stage_column].str.strip(),
    ):
        if cohort == healthy_value:
            code = HEALTHY_STAGE
        else:
            try:
                code = int(float(stage))
            except ValueError:
                raise LabelingError(f"visit {(subj, visit)} has no usable stage {stage!r}") from None
        key = (subj, visit)
        if key in table and table[key] != code:
            raise LabelingError(f"conflicting stage entries for visit {key}")
        table[key] = code
    return table


def assign_severity(
    matrix: FeatureMatrix, stage_table: dict[tuple[str, str], int]
) -> tuple[FeatureMatrix, int]:
    """Attach consolidated labels and remove EXCLUDED rows.

    Returns the labelled matrix and the number of excluded rows.
    """
    keys = matrix.keys
    missing = [k for k in keys if k not in stage_table]
    if missing:
        shown = ", ".join(map(str, missing[:5]))
        raise LabelingError(f"{len(missing)} visits lack a stage entry: {shown}")
    raw = np.array([stage_table[k] for k in keys], dtype=np.int64)
    labels = np.array([int(consolidate_stage(int(r))) for r in raw], dtype=np.int64)
    keep = np.flatnonzero(labels != Severity.EXCLUDED)
    out = replace(matrix, raw_stage=raw, labels=labels).take(keep)
    return out, int(len(matrix) - len(keep))


@dataclass
class IngestReport:
    instrument_rows: dict[str, int]
    unparseable_cells: dict[str, int]
    filtered_rows: dict[str, int]
    common_visits: int
    dropped_incomplete: int
    after_cleaning: int
    stage_counts: dict[str, int]
    excluded: int
    class_counts: dict[str, int]
    n_features: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ingest_directory(
    data_dir: str | Path,
    schemas: SchemaSet,
    stage_csv: str | Path | None = None,
) -> tuple[FeatureMatrix, IngestReport]:
    """Run load -> derive -> join -> drop -> label over one directory of CSVs."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"input directory {data_dir} does not exist")
    if not any(data_dir.iterdir()):
        raise DataError(f"input directory {data_dir} is empty")
    blocks, rows, bad, filtered = [], {}, {}, {}
    for inst in schemas.instruments:
        table = load_instrument_table(
            data_dir / inst.file, inst, schemas.subject_column, schemas.visit_column
        )
        rows[inst.name] = len(table)
        bad[inst.name] = table.n_unparseable
        filtered[inst.name] = table.n_filtered
        blocks.append(derive_instrument_features(table, inst))
    joined = join_common_visits(blocks)
    clean, n_dropped = drop_incomplete(joined)
    stages = load_stage_table(
        stage_csv if stage_csv is not None else data_dir / "stages.csv",
        schemas.subject_column, schemas.visit_column,
    )
    labelled, n_excluded = assign_severity(clean, stages)
    raw_all = np.array([stages[k] for k in clean.keys], dtype=np.int64)
    stage_counts = {}
    for code in sorted(set(raw_all.tolist())):
        name = "healthy" if code == HEALTHY_STAGE else str(code)
        stage_counts[name] = int(np.sum(raw_all == code))
    report = IngestReport(
        instrument_rows=rows,
        unparseable_cells=bad,
        filtered_rows=filtered,
        common_visits=len(joined),
        dropped_incomplete=n_dropped,
        after_cleaning=len(clean),
        stage_counts=stage_counts,
        excluded=n_excluded,
        class_counts=labelled.class_counts(),
        n_features=len(labelled.feature_names),
    )
    return labelled, report
