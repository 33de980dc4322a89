import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cem.errors import DuplicateKeyError, EmptyInputError, ParseError, SchemaError
from cem.schema import (
    Column,
    FeatureSchema,
    NormalizationParams,
    ODPairDataset,
    apply_normalizer,
    denormalize,
    fit_normalizer,
    load_dataset,
    od_schema,
    save_dataset,
)


def small_schema():
    return FeatureSchema((
        Column("origin", "key"), Column("destination", "key"),
        Column("Total_number_trips", "dependent"),
        Column("Fare_median", "travel_impedance"),
        Column("Popden_Ori", "built_environment"),
        Column("Pctwhite_Ori", "socio_economic"),
    ))


def write_csv(path, rows, header=None):
    header = header or ["origin", "destination", "Total_number_trips", "Fare_median",
                        "Popden_Ori", "Pctwhite_Ori"]
    lines = [",".join(header)] + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


ROWS = [("a", "b", 60, 10.5, 1000, 0.2), ("b", "a", 75, 11.0, 1500, 0.4), ("a", "c", 51, 9.0, 800, 0.9)]


def test_schema_roles_and_columns():
    s = small_schema()
    assert s.dependent == "Total_number_trips"
    assert list(s.key_columns) == ["origin", "destination"]
    assert s.feature_columns == ["Fare_median", "Popden_Ori", "Pctwhite_Ori"]
    assert s.clustering_columns == ["Popden_Ori", "Pctwhite_Ori"]


@pytest.mark.parametrize("cols", [
    (("o", "key"), ("d", "key"), ("y", "dependent"), ("y", "socio_economic")),
    (("o", "key"), ("d", "key"), ("y", "dependent"), ("z", "dependent")),
    (("o", "key"), ("d", "key"), ("x", "socio_economic")),
    (("o", "key"), ("d", "key"), ("y", "dependent"), ("x", "nonsense")),
])
def test_schema_rejects_invalid(cols):
    with pytest.raises(SchemaError):
        FeatureSchema(tuple(Column(*c) for c in cols))


def test_schema_dict_roundtrip():
    s = od_schema()
    assert FeatureSchema.from_dict(s.to_dict()) == s
    assert "Popden_Ori" in s.names and "Popden_Des" in s.names
    assert "Euclidean_distance" not in s.clustering_columns


def test_load_roundtrip_preserves_order(tmp_path):
    p = tmp_path / "od.csv"
    write_csv(p, ROWS)
    d = load_dataset(p, small_schema())
    assert len(d) == 3
    assert list(zip(d.origin, d.destination)) == [("a", "b"), ("b", "a"), ("a", "c")]
    assert d.y.tolist() == [60, 75, 51]
    out = tmp_path / "again.csv"
    save_dataset(d, out)
    d2 = load_dataset(out, small_schema())
    np.testing.assert_array_equal(d2.X, d.X)


def test_missing_column_named(tmp_path):
    p = tmp_path / "od.csv"
    header = ["origin", "destination", "Total_number_trips", "Popden_Ori", "Pctwhite_Ori"]
    write_csv(p, [r[:3] + r[4:] for r in ROWS], header)
    with pytest.raises(SchemaError, match="Fare_median"):
        load_dataset(p, small_schema())


def test_non_numeric_cell_reports_row(tmp_path):
    p = tmp_path / "od.csv"
    rows = list(ROWS)
    rows[1] = ("b", "a", 75, 11.0, "abc", 0.4)
    write_csv(p, rows)
    with pytest.raises(ParseError) as info:
        load_dataset(p, small_schema())
    assert info.value.row == 1 and info.value.column == "Popden_Ori"


def test_duplicate_key(tmp_path):
    p = tmp_path / "od.csv"
    write_csv(p, ROWS + [("a", "b", 99, 1, 1, 1)])
    with pytest.raises(DuplicateKeyError):
        load_dataset(p, small_schema())


def test_negative_target_rejected():
    with pytest.raises(SchemaError):
        ODPairDataset(small_schema(), ["a"], ["b"], [[1.0, 2.0, 3.0]], [-1.0])


def test_dataset_immutable():
    d = ODPairDataset(small_schema(), ["a"], ["b"], [[1.0, 2.0, 3.0]], [4.0])
    with pytest.raises(ValueError):
        d.X[0, 0] = 9.0


def dataset_from_columns(cols):
    X = np.column_stack(cols)
    s = FeatureSchema((Column("o", "key"), Column("d", "key"), Column("y", "dependent"))
                      + tuple(Column(f"c{j}", "socio_economic") for j in range(X.shape[1])))
    n = len(X)
    return ODPairDataset(s, [str(i) for i in range(n)], ["z"] * n, X, np.ones(n))


def test_fit_normalizer_examples():
    d = dataset_from_columns([np.array([2.0, 4.0, 6.0]), np.array([5.0, 5.0, 5.0])])
    nz = fit_normalizer(d)
    assert nz.mins.tolist() == [2.0, 5.0] and nz.maxs.tolist() == [6.0, 5.0]
    assert nz.constant.tolist() == [False, True]
    d2 = dataset_from_columns([np.array([0.0, 10.0]), np.array([-1.0, 1.0])])
    nz2 = fit_normalizer(d2)
    assert nz2.mins.tolist() == [0.0, -1.0] and nz2.maxs.tolist() == [10.0, 1.0]


def test_apply_normalizer_examples():
    nz = NormalizationParams(("c0",), [2.0], [6.0])
    Z = nz.transform(np.array([[4.0], [2.0], [8.0], [-5.0]]))
    assert Z.ravel().tolist() == [0.5, 0.0, 1.0, 0.0]
    const = NormalizationParams(("c0",), [5.0], [5.0])
    assert const.transform(np.array([[5.0], [7.0]])).ravel().tolist() == [0.0, 0.0]


def test_normalizer_errors():
    d = dataset_from_columns([np.array([1.0, 2.0])])
    with pytest.raises(EmptyInputError):
        fit_normalizer(d.subset(np.array([], dtype=int)))
    other = NormalizationParams(("missing",), [0.0], [1.0])
    with pytest.raises(SchemaError):
        apply_normalizer(d, other)


columns = arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 4)),
                 elements=st.floats(-1e6, 1e6, allow_nan=False))


@given(columns)
def test_normalize_properties(X):
    d = dataset_from_columns([X[:, j] for j in range(X.shape[1])])
    nz = fit_normalizer(d)
    nd = apply_normalizer(d, nz)
    Z = nd.X
    assert np.all((Z >= 0) & (Z <= 1))
    nonconst = ~nz.constant
    # the fitting set hits 0 and 1 exactly on every non-constant column
    assert np.all(Z[:, nonconst].min(axis=0) == 0.0)
    assert np.all(Z[:, nonconst].max(axis=0) == 1.0)
    back = denormalize(nd, nz).X
    scale = np.maximum(1.0, np.abs(X).max())
    np.testing.assert_allclose(back[:, nonconst], X[:, nonconst], rtol=0, atol=1e-12 * scale)
    # monotone per column
    for j in range(X.shape[1]):
        o = np.argsort(X[:, j], kind="stable")
        assert np.all(np.diff(Z[o, j]) >= 0)


def test_to_frame_roundtrip():
    d = ODPairDataset(small_schema(), ["a", "b"], ["b", "a"], [[1, 2, 3], [4, 5, 6]], [7, 8])
    df = d.to_frame()
    assert list(df.columns) == small_schema().names
    d2 = ODPairDataset.from_frame(df.astype(str), small_schema())
    np.testing.assert_array_equal(d2.X, d.X)
    assert isinstance(df, pd.DataFrame)
