import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from datasets import all_kinds, bimodal
from tabgan.encoder import (
    GTEncoder,
    MixedEncoder,
    MSNEncoder,
    OneHotEncoder,
    TabularEncoder,
    decode_row,
    encode_dataset,
    encode_value_mixed,
    encode_value_msn,
    fit_encoders,
)
from tabgan.gmm import GaussianMixture1D
from tabgan.schema import ColumnSpec, Dataset, Kind, TableSchema


def table(**cols):
    specs, data = [], {}
    for name, (spec_kw, values) in cols.items():
        specs.append(ColumnSpec(name, **spec_kw))
        data[name] = values
    return Dataset(TableSchema(tuple(specs)), data)


def test_mortgage_style_mixed_encoder():
    r = np.random.default_rng(0)
    n = 2000
    v = np.where(r.random(n) < 0.3, 0.0, bimodal(r, n, 100.0, 400.0, 20.0))
    d = table(m=(dict(kind=Kind.MIXED, categorical_values_in_mixed=(0.0,)), v))
    enc = fit_encoders(d, seed=0).encoders["m"]
    assert isinstance(enc, MixedEncoder)
    assert enc.k == 2 and enc.width == 4


def test_onehot_width():
    d = table(c=(dict(kind=Kind.CATEGORICAL), np.array(list("ABCABC"), dtype=object)))
    enc = fit_encoders(d).encoders["c"]
    assert isinstance(enc, OneHotEncoder) and enc.width == 3


def test_missing_category_gets_its_own_class():
    d = table(c=(dict(kind=Kind.CATEGORICAL), np.array(["A", None, "B"], dtype=object)))
    enc = fit_encoders(d).encoders["c"]
    assert enc.width == 3 and enc.categories[-1] is None


def test_gt_flag_width_one():
    d = table(x=(dict(kind=Kind.CONTINUOUS, general_transform=True), np.linspace(0, 1, 20)))
    enc = fit_encoders(d).encoders["x"]
    assert isinstance(enc, GTEncoder) and enc.width == 1


def test_continuous_with_missing_becomes_mixed():
    v = np.r_[np.random.default_rng(1).normal(0, 1, 50), [np.nan] * 5]
    enc = fit_encoders(table(x=(dict(kind=Kind.CONTINUOUS), v))).encoders["x"]
    assert isinstance(enc, MixedEncoder) and enc.has_missing and enc.categorical_values == ()


ONE = GaussianMixture1D([1.0], [2.0], [0.5])


def test_msn_value_examples():
    assert encode_value_msn(2.0, ONE)[0] == 0.0
    assert encode_value_msn(4.0, ONE)[0] == 1.0
    alpha, beta = encode_value_msn(3.0, ONE)
    assert alpha == 0.5 and beta.tolist() == [1.0]
    assert encode_value_msn(100.0, ONE)[0] == 1.0  # clipped


MIXED = MixedEncoder("m", GaussianMixture1D([0.5, 0.5], [100.0, 400.0], [20.0, 20.0]), (0.0,), True)


def test_mixed_value_examples():
    a, oh = encode_value_mixed(0.0, MIXED)
    assert a == 0.0 and oh.tolist() == [0, 0, 1, 0]
    a, oh = encode_value_mixed(None, MIXED)
    assert a == 0.0 and oh.tolist() == [0, 0, 0, 1]
    a, oh = encode_value_mixed(130.0, MIXED)
    ref_a, ref_beta = encode_value_msn(130.0, MIXED.gmm)
    assert a == ref_a and oh[:2].tolist() == ref_beta.tolist() and oh[2:].tolist() == [0, 0]


def test_decode_argmax_rule():
    enc = TabularEncoder(TableSchema((ColumnSpec("x", Kind.CONTINUOUS),)),
                         {"x": MSNEncoder("x", GaussianMixture1D([0.5, 0.5], [-3.0, 7.0], [1.0, 2.0]))})
    assert decode_row([0.0, 0.4, 0.6], enc) == (7.0,)


def test_decode_categorical_only_row_exact():
    d = table(a=(dict(kind=Kind.CATEGORICAL), np.array(["x", "y", "z"], dtype=object)),
              b=(dict(kind=Kind.CATEGORICAL), np.array(["p", None, "p"], dtype=object)))
    enc = fit_encoders(d)
    m = enc.encode(d)
    for i in range(3):
        assert decode_row(m.rows[i], enc) == d.row(i)


def test_widths_and_layout():
    r = np.random.default_rng(3)
    d = table(c=(dict(kind=Kind.CATEGORICAL), r.choice(np.array(list("abc"), dtype=object), 500)),
              x=(dict(kind=Kind.CONTINUOUS), bimodal(r, 500)))
    enc = fit_encoders(d, seed=0)
    assert enc.encoders["x"].gmm.k == 2
    m = encode_dataset(d, enc)
    assert m.total_width == 6
    # continuous blocks first, then categorical, contiguous
    assert [b.name for b in m.layout] == ["x", "c"]
    assert [b.offset for b in m.layout] == [0, 3]


def test_empty_dataset_encodes_to_zero_rows():
    d = all_kinds(300, seed=1)
    enc = fit_encoders(d, seed=0)
    m = encode_dataset(d.take([]), enc)
    assert m.rows.shape == (0, enc.total_width)


@pytest.fixture(scope="module")
def fitted():
    d = all_kinds(1500, seed=2)
    return d, fit_encoders(d, seed=0)


def test_layout_contiguous_and_ordered(fitted):
    _, enc = fitted
    offsets = [b.offset for b in enc.layout]
    widths = [b.width for b in enc.layout]
    assert offsets == list(np.cumsum([0] + widths[:-1]))
    assert sum(widths) == enc.total_width
    numeric = [enc.encoders[b.name].numeric for b in enc.layout]
    assert numeric == sorted(numeric, reverse=True)


def test_layout_deterministic(fitted):
    d, enc = fitted
    again = fit_encoders(d, seed=0)
    assert again.layout == enc.layout
    assert again.to_dict() == enc.to_dict()


def _unclipped(enc, d):
    """Rows whose continuous values all encode without alpha clipping."""
    ok = np.ones(d.row_count, dtype=bool)
    for name, e in enc.encoders.items():
        if isinstance(e, (MSNEncoder, MixedEncoder)) and e.gmm is not None:
            v = np.asarray(d[name], dtype=float)
            cont = np.isfinite(v)
            if isinstance(e, MixedEncoder):
                cont &= ~np.isin(v, e.categorical_values)
            x = v[cont]
            if e.long_tail is not None:
                from tabgan.transforms import long_tail_forward_array
                x = long_tail_forward_array(x, e.long_tail)
            m = e.gmm.argmax_mode(x)
            raw = np.abs((x - e.gmm.means[m]) / (4 * e.gmm.stds[m]))
            bad = np.zeros(d.row_count, dtype=bool)
            bad[np.flatnonzero(cont)[raw > 1]] = True
            ok &= ~bad
    return ok


def test_round_trip(fitted):
    d, enc = fitted
    m = encode_dataset(d, enc)
    back = enc.decode(m.rows)
    ok = _unclipped(enc, d)
    assert ok.mean() > 0.9
    for spec in d.schema.columns:
        a, b = d[spec.name], back[spec.name]
        if spec.is_numeric:
            a, b = a[ok], b[ok]
            assert np.array_equal(np.isnan(a), np.isnan(b))
            f = np.isfinite(a)
            np.testing.assert_allclose(b[f], a[f], rtol=1e-9, atol=0)
        else:
            assert list(a) == list(b)


def test_one_hot_validity(fitted):
    d, enc = fitted
    m = encode_dataset(d, enc)
    for b in m.layout:
        if b.n_options:
            seg = m.rows[:, b.option_offset:b.option_offset + b.n_options]
            assert np.all(np.isin(seg, (0.0, 1.0))) and np.all(seg.sum(axis=1) == 1)
        if b.has_alpha:
            assert np.all(np.abs(m.rows[:, b.offset]) <= 1)


def test_clipped_values_decode_to_surrogate():
    enc = TabularEncoder(TableSchema((ColumnSpec("x", Kind.CONTINUOUS),)), {"x": MSNEncoder("x", ONE)})
    m = enc.encode(Dataset(enc.schema, {"x": np.array([10.0])}))
    assert enc.decode(m.rows)["x"][0] == 2.0 + 4 * 0.5


def test_serialization_round_trip(fitted):
    d, enc = fitted
    again = TabularEncoder.from_dict(d.schema, enc.to_dict())
    np.testing.assert_array_equal(again.encode(d).rows, enc.encode(d).rows)


@given(st.lists(st.floats(-1e4, 1e4), min_size=5, max_size=60, unique=True))
def test_msn_round_trip_property(values):
    d = table(x=(dict(kind=Kind.CONTINUOUS), np.array(values)))
    enc = fit_encoders(d, seed=0, k_max=3)
    back = enc.decode(enc.encode(d).rows)["x"]
    ok = _unclipped(enc, d)
    scale = max(1.0, np.abs(values).max())
    assert np.all(np.abs(back[ok] - np.array(values)[ok]) <= 1e-9 * scale)
