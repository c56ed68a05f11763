import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tabgan.errors import ClassTooSmall, DuplicateHeader, InputError, MissingColumn, SchemaError, UnparsableCell
from tabgan.schema import ColumnSpec, Dataset, Kind, TableSchema, Task, load_csv, stratified_split, write_csv

SCHEMA = TableSchema((
    ColumnSpec("age", Kind.CONTINUOUS),
    ColumnSpec("city", Kind.CATEGORICAL, missing_token="NA"),
    ColumnSpec("y", Kind.TARGET, target_task=Task.CLASSIFICATION),
))


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_rows_parse(tmp_path):
    d = load_csv(write(tmp_path, "age,city,y\n1,a,p\n2.5,b,q\n3,a,p\n"), SCHEMA)
    assert d.row_count == 3
    assert d.row(1) == (2.5, "b", "q")


def test_header_order_is_irrelevant(tmp_path):
    d = load_csv(write(tmp_path, "y,age,city\np,1,a\n"), SCHEMA)
    assert d.row(0) == (1.0, "a", "p")


def test_empty_and_token_cells_are_missing(tmp_path):
    d = load_csv(write(tmp_path, "age,city,y\n,NA,p\n"), SCHEMA)
    assert d.row(0) == (None, None, "p")
    assert np.isnan(d["age"][0])


def test_unparsable_numeric_cell(tmp_path):
    with pytest.raises(UnparsableCell) as info:
        load_csv(write(tmp_path, "age,city,y\nabc,a,p\n"), SCHEMA)
    assert info.value.col == "age" and info.value.row == 0


def test_non_finite_numeric_cell_rejected(tmp_path):
    with pytest.raises(UnparsableCell):
        load_csv(write(tmp_path, "age,city,y\ninf,a,p\n"), SCHEMA)


def test_header_errors(tmp_path):
    with pytest.raises(MissingColumn):
        load_csv(write(tmp_path, "age,y\n1,p\n"), SCHEMA)
    with pytest.raises(DuplicateHeader):
        load_csv(write(tmp_path, "age,age,city,y\n1,1,a,p\n"), SCHEMA)
    with pytest.raises(InputError):
        load_csv(write(tmp_path, "age,city,y,extra\n1,a,p,0\n"), SCHEMA)


def test_schema_validation():
    with pytest.raises(SchemaError):
        ColumnSpec("t", Kind.TARGET)
    with pytest.raises(SchemaError):
        ColumnSpec("m", Kind.MIXED)
    with pytest.raises(SchemaError):
        ColumnSpec("c", Kind.CATEGORICAL, long_tail=True)


def test_schema_json_round_trip(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(SCHEMA.to_dict()))
    assert TableSchema.from_json(p) == SCHEMA


def test_dataset_rejects_bad_cells():
    with pytest.raises(InputError):
        Dataset.from_rows(SCHEMA, [(1.0, "a")])


cells = st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False, width=64))
labels = st.one_of(st.none(), st.text(alphabet="abc,\"\n x", min_size=1, max_size=4))


@given(st.lists(st.tuples(cells, labels, st.sampled_from(["p", "q"])), min_size=0, max_size=12))
def test_csv_round_trip_idempotent(tmp_path_factory, rows):
    tmp = tmp_path_factory.mktemp("rt")
    schema = TableSchema((ColumnSpec("age", Kind.CONTINUOUS), ColumnSpec("city", Kind.CATEGORICAL),
                          ColumnSpec("y", Kind.TARGET, target_task=Task.CLASSIFICATION)))
    # an empty string cannot survive a CSV round trip as a category: it reads back as missing
    d0 = Dataset.from_rows(schema, rows)
    write_csv(d0, tmp / "a.csv")
    d1 = load_csv(tmp / "a.csv", schema)
    write_csv(d1, tmp / "b.csv")
    d2 = load_csv(tmp / "b.csv", schema)
    assert d1.equals(d0)
    assert d2.equals(d1)


def _labelled(counts):
    labels = [c for c, n in counts.items() for _ in range(n)]
    schema = TableSchema((ColumnSpec("x", Kind.CONTINUOUS),
                          ColumnSpec("y", Kind.TARGET, target_task=Task.CLASSIFICATION)))
    return Dataset(schema, {"x": np.arange(len(labels), dtype=float), "y": np.array(labels, dtype=object)})


def test_stratified_counts_exact():
    d = _labelled({"a": 90, "b": 10})
    train, test = stratified_split(d, 0.2, seed=3)
    assert Counter(test["y"]) == {"a": 18, "b": 2}
    assert Counter(train["y"]) == {"a": 72, "b": 8}


def test_stratified_two_per_class_half():
    d = _labelled({"a": 2, "b": 2})
    train, test = stratified_split(d, 0.5, seed=0)
    assert Counter(test["y"]) == {"a": 1, "b": 1}
    assert Counter(train["y"]) == {"a": 1, "b": 1}


def test_stratified_class_too_small():
    with pytest.raises(ClassTooSmall):
        stratified_split(_labelled({"a": 1}), 0.5, seed=0)


@given(st.dictionaries(st.sampled_from("abcde"), st.integers(2, 40), min_size=1),
       st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_stratified_partition_properties(counts, frac, seed):
    d = _labelled(counts)
    train, test = stratified_split(d, frac, seed)
    xs = sorted(list(train["x"]) + list(test["x"]))
    assert xs == list(d["x"])
    got = Counter(test["y"])
    for c, n in counts.items():
        assert abs(got[c] - round(n * frac)) <= 1
    again = stratified_split(d, frac, seed)
    assert again[0].equals(train) and again[1].equals(test)


def test_uniform_split_without_target():
    schema = TableSchema((ColumnSpec("x", Kind.CONTINUOUS),))
    d = Dataset(schema, {"x": np.arange(50, dtype=float)})
    train, test = stratified_split(d, 0.2, seed=1)
    assert test.row_count == 10 and train.row_count == 40
    assert set(train["x"]).isdisjoint(test["x"])
