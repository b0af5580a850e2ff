import json

import pandas as pd
import pytest

from steppd.errors import ConfigError
from steppd.schema import default_schema
from steppd.synth import DEFAULT_STAGE_COUNTS, CohortSpec, default_boundaries, generate_cohort

SMALL = {-1: 30, 1: 10, 2: 20, 3: 10, 4: 2, 5: 1, 101: 2}


def _files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_same_seed_same_bytes(tmp_path):
    a = generate_cohort(CohortSpec(stage_counts=SMALL, seed=5), tmp_path / "a")
    b = generate_cohort(CohortSpec(stage_counts=SMALL, seed=5), tmp_path / "b")
    assert _files(a.out_dir) == _files(b.out_dir)
    c = generate_cohort(CohortSpec(stage_counts=SMALL, seed=6), tmp_path / "c")
    assert _files(a.out_dir) != _files(c.out_dir)


def test_default_counts_follow_reference_skew():
    spec = CohortSpec()
    assert spec.expected_class_counts() == {"Healthy": 769, "Mild": 736, "ModSevere": 55}
    assert DEFAULT_STAGE_COUNTS[101] == 2


def test_no_missing_cells_by_default(small_cohort):
    for name, path in small_cohort.files.items():
        if path.suffix == ".csv" and name not in ("stages", "truth"):
            df = pd.read_csv(path, dtype=str)
            assert not df.isna().any().any(), name


def test_missing_rate_blanks_cells(tmp_path):
    g = generate_cohort(CohortSpec(stage_counts=SMALL, missing_rate=0.2, seed=1), tmp_path)
    blanks = sum(int(pd.read_csv(p, dtype=str).isna().sum().sum())
                 for n, p in g.files.items() if n not in ("stages", "truth") and p.suffix == ".csv")
    assert blanks > 0


def test_planted_feature_outside_schema_is_rejected():
    b = default_boundaries()
    b["healthy_mild"]["features"].append("NOT_AN_ITEM")
    with pytest.raises(ConfigError):
        CohortSpec(boundaries=b).validate(default_schema())


def test_derived_features_cannot_be_planted():
    b = default_boundaries()
    b["healthy_mild"]["features"] = ["STAI_STATE"]
    with pytest.raises(ConfigError):
        CohortSpec(boundaries=b).validate(default_schema())


def test_unknown_spec_keys_are_rejected():
    with pytest.raises(ConfigError):
        CohortSpec.from_dict({"stage_count": {}})


def test_spec_round_trips_through_yaml(tmp_path):
    import yaml

    spec = CohortSpec(stage_counts=SMALL, spread=0.2, seed=9)
    p = tmp_path / "spec.yaml"
    p.write_text(yaml.safe_dump(spec.to_dict()))
    assert CohortSpec.load(p) == spec


def test_manifest_accounts_for_every_visit(small_cohort):
    m = json.loads((small_cohort.out_dir / "manifest.json").read_text())
    spec = CohortSpec(stage_counts={-1: 60, 1: 20, 2: 40, 3: 20, 4: 6, 5: 4, 101: 3})
    assert m["expected_class_counts"] == spec.expected_class_counts()
    assert m["excluded_visits"] == 3
    assert m["common_visits"] == sum(spec.stage_counts.values())
    planted = {f for feats in m["planted"].values() for f in feats}
    assert planted == set(spec.planted())
