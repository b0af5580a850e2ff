import json

import numpy as np
import pandas as pd
import pytest

from steppd.errors import DataError, EmptyResultError, LabelingError, SchemaError
from steppd.ingest import (
    HEALTHY_STAGE,
    FeatureBlock,
    FeatureMatrix,
    Severity,
    assign_severity,
    consolidate_stage,
    derive_instrument_features,
    drop_incomplete,
    ingest_directory,
    join_common_visits,
    load_instrument_table,
    load_stage_table,
)
from steppd.schema import (
    EXPECTED_FEATURE_COUNTS,
    check_reference_counts,
    default_schema,
    parse_schema,
)


def test_builtin_schema_counts():
    s = default_schema()
    check_reference_counts(s)
    assert len(s.feature_names) == 208
    assert s.n_items == 230
    assert {i.name: len(i.features) for i in s.instruments} == EXPECTED_FEATURE_COUNTS


def test_excluded_items_never_become_features():
    s = default_schema()
    names = set(s.feature_names)
    assert "PARKISM" in s.instrument("REM").excluded
    assert {"VLTVEG", "VLTFRUIT"} <= set(s.instrument("Semantic Fluency").excluded)
    assert not {"PARKISM", "VLTVEG", "VLTFRUIT"} & names


def test_feature_metadata_covers_every_feature():
    meta = default_schema().feature_metadata()
    assert len(meta) == 208
    assert meta["NP3BRADY"]["instrument"] == "UPDRS-III"


def _doc(**inst):
    base = {"name": "T", "items": ["A", "B"], "features": [{"passthrough": "A"}]}
    base.update(inst)
    return {"instruments": [base]}


@pytest.mark.parametrize("inst", [
    {"features": [{"passthrough": "A"}, {"passthrough": "A"}]},
    {"features": [{"sum": ["A", "Z"], "name": "S"}]},
    {"excluded": ["B"], "features": [{"sum": ["A", "B"], "name": "S"}]},
    {"features": [{"sum": ["A", "B"]}]},
    {"features": [{"median": ["A"]}]},
])
def test_malformed_schemas_are_rejected(inst):
    with pytest.raises(SchemaError):
        parse_schema(_doc(**inst))


@pytest.mark.parametrize("code,sev", [
    (HEALTHY_STAGE, Severity.HEALTHY), (1, Severity.MILD), (2, Severity.MILD),
    (3, Severity.MOD_SEVERE), (4, Severity.MOD_SEVERE), (5, Severity.MOD_SEVERE),
    (101, Severity.EXCLUDED),
])
def test_stage_consolidation(code, sev):
    assert consolidate_stage(code) == sev


@pytest.mark.parametrize("code", [0, 6, 99, 7])
def test_unknown_stage_codes_raise(code):
    with pytest.raises(LabelingError):
        consolidate_stage(code)


def _stai():
    return default_schema().instrument("STAI")


def test_missing_column_is_a_schema_error(tmp_path):
    (tmp_path / "t.csv").write_text("PATNO,EVENT_ID,STAIAD1\n1,BL,2\n")
    with pytest.raises(SchemaError):
        load_instrument_table(tmp_path / "t.csv", _stai())


def test_blank_and_garbage_cells_become_missing(tmp_path):
    inst = default_schema().instrument("Benton")
    cols = list(inst.items)
    rows = [["1", "BL"] + ["1"] * len(cols), ["2", "BL"] + [""] + ["1"] * (len(cols) - 1),
            ["3", "BL"] + ["x"] + ["1"] * (len(cols) - 1)]
    pd.DataFrame(rows, columns=["PATNO", "EVENT_ID"] + cols).to_csv(tmp_path / "b.csv", index=False)
    table = load_instrument_table(tmp_path / "b.csv", inst)
    assert table.n_unparseable == 1
    block = derive_instrument_features(table, inst)
    assert block.values[0, 0] == len(cols)
    assert np.isnan(block.values[1, 0]) and np.isnan(block.values[2, 0])


def test_stai_sums_split_state_and_trait():
    inst = _stai()
    items = list(inst.items)
    vals = np.arange(1, len(items) + 1, dtype=float)
    from steppd.ingest import RawItemTable

    table = RawItemTable("STAI", pd.DataFrame({"subject_id": ["1"], "visit_id": ["BL"]}),
                         pd.DataFrame([vals], columns=items), 0, 0)
    block = derive_instrument_features(table, inst)
    f = dict(zip(block.feature_names, block.values[0]))
    assert f["STAI_STATE"] == vals[:20].sum()
    assert f["STAI_TRAIT"] == vals[20:40].sum()


def _block(name, keys, values, features):
    return FeatureBlock(name, pd.DataFrame(keys, columns=["subject_id", "visit_id"]),
                        np.asarray(values, dtype=float), features)


def test_join_keeps_only_common_visits_sorted():
    a = _block("A", [("2", "BL"), ("1", "BL"), ("3", "V01")], [[1], [2], [3]], ["a"])
    b = _block("B", [("1", "BL"), ("2", "BL")], [[10], [20]], ["b"])
    m = join_common_visits([a, b])
    assert m.keys == [("1", "BL"), ("2", "BL")]
    np.testing.assert_array_equal(m.X, [[2, 10], [1, 20]])


def test_join_rejects_duplicates_and_empty_results():
    dup = _block("A", [("1", "BL"), ("1", "BL")], [[1], [2]], ["a"])
    with pytest.raises(DataError):
        join_common_visits([dup])
    a = _block("A", [("1", "BL")], [[1]], ["a"])
    b = _block("B", [("2", "BL")], [[1]], ["b"])
    with pytest.raises(EmptyResultError):
        join_common_visits([a, b])


def test_drop_incomplete_counts_removed_rows():
    m = FeatureMatrix(np.array(["1", "2", "3"], dtype=object), np.array(["BL"] * 3, dtype=object),
                      np.array([[1.0, 2.0], [np.nan, 1.0], [3.0, 4.0]]), ["a", "b"])
    clean, n = drop_incomplete(m)
    assert n == 1 and len(clean) == 2


def test_assign_severity_excludes_sentinel_and_requires_stage():
    m = FeatureMatrix(np.array(["1", "2", "3"], dtype=object), np.array(["BL"] * 3, dtype=object),
                      np.zeros((3, 1)), ["a"])
    out, n_ex = assign_severity(m, {("1", "BL"): -1, ("2", "BL"): 101, ("3", "BL"): 4})
    assert n_ex == 1
    assert out.labels.tolist() == [Severity.HEALTHY, Severity.MOD_SEVERE]
    with pytest.raises(LabelingError):
        assign_severity(m, {("1", "BL"): -1})


def test_stage_table_uses_cohort_for_healthy(tmp_path):
    p = tmp_path / "stages.csv"
    p.write_text("PATNO,EVENT_ID,COHORT,NHY\n1,BL,HC,0\n2,BL,PD,2\n3,BL,PD,\n")
    with pytest.raises(LabelingError):
        load_stage_table(p)
    p.write_text("PATNO,EVENT_ID,COHORT,NHY\n1,BL,HC,\n2,BL,PD,2\n")
    assert load_stage_table(p) == {("1", "BL"): HEALTHY_STAGE, ("2", "BL"): 2}


def test_ingest_directory_matches_generator_manifest(small_cohort):
    m, report = ingest_directory(small_cohort.out_dir, default_schema())
    manifest = json.loads((small_cohort.out_dir / "manifest.json").read_text())
    assert report.class_counts == manifest["expected_class_counts"]
    assert report.common_visits == manifest["common_visits"]
    assert report.excluded == manifest["excluded_visits"]
    assert report.dropped_incomplete == 0
    assert m.X.shape == (sum(report.class_counts.values()), 208)
    for inst, rows in report.instrument_rows.items():
        assert rows == manifest["instrument_rows"][inst] > report.common_visits


def test_ingest_errors_on_empty_directory(tmp_path):
    with pytest.raises(DataError):
        ingest_directory(tmp_path, default_schema())


def test_feature_matrix_csv_round_trip(small_cohort, tmp_path):
    m, _ = ingest_directory(small_cohort.out_dir, default_schema())
    m.write_csv(tmp_path / "f.csv")
    back = FeatureMatrix.read_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.X, m.X)
    np.testing.assert_array_equal(back.labels, m.labels)
    assert back.keys == m.keys and back.feature_names == m.feature_names
