import numpy as np
import pytest

from cem.clustering import select_data_clustering
from cem.errors import ConfigError
from cem.schema import save_dataset
from cem.synthetic import AIRPORT_TRACTS, DOWNTOWN_TRACTS, SyntheticSpec, generate, simplex_centers


def test_same_spec_same_bytes(tmp_path):
    spec = SyntheticSpec(n_rows=300, seed=4)
    save_dataset(generate(spec).data, tmp_path / "a.csv")
    save_dataset(generate(spec).data, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    save_dataset(generate(SyntheticSpec(n_rows=300, seed=5)).data, tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_noise_free_recovers_planted_coefficients():
    sd = generate(SyntheticSpec(n_rows=900, noise=0.0, seed=7))
    X = sd.data.X[:, 1:]  # drop the signal-free impedance column
    logy = np.log(sd.data.y)
    for label, beta in sd.coefficients.items():
        mask = sd.labels == label
        A = np.column_stack([np.ones(mask.sum()), X[mask]])
        coef, *_ = np.linalg.lstsq(A, logy[mask], rcond=None)
        np.testing.assert_allclose(coef[1:], beta, atol=1e-6)


def test_simplex_centres_are_equidistant():
    C = simplex_centers(3, 4, 4.0)
    d = [np.linalg.norm(C[i] - C[j]) for i in range(3) for j in range(i + 1, 3)]
    np.testing.assert_allclose(d, 4.0, rtol=1e-12)
    assert np.all(simplex_centers(3, 4, 0.0) == 0)


def test_knowledge_rows_touch_pseudo_tracts():
    sd = generate(SyntheticSpec(n_rows=600, knowledge_fraction=0.15, seed=1))
    d = sd.data
    air = np.isin(d.origin, AIRPORT_TRACTS) | np.isin(d.destination, AIRPORT_TRACTS)
    down = np.isin(d.origin, DOWNTOWN_TRACTS) | np.isin(d.destination, DOWNTOWN_TRACTS)
    assert np.array_equal(air, sd.labels == "airport")
    assert np.array_equal(down, sd.labels == "downtown")
    assert air.sum() + down.sum() == 90
    assert len(set(zip(d.origin, d.destination))) == len(d)
    assert np.all(d.y >= 0) and np.all(d.y == np.round(d.y))


def test_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(n_clusters=0)
    with pytest.raises(ConfigError):
        SyntheticSpec(separation=-1.0)
    with pytest.raises(ConfigError):
        SyntheticSpec(n_features=2, n_clusters=3)
    with pytest.raises(ConfigError):
        SyntheticSpec(coefficients=[[1.0, 2.0]])
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict({"rows": 10})


def _normalized(X):
    return (X - X.min(0)) / (X.max(0) - X.min(0))


@pytest.mark.xfail(strict=True, reason="DBI has no one-cluster option; on a single Gaussian blob "
                   "K-Means DBI keeps falling with k and selects 6 or 7")
def test_no_separation_selects_small_k():
    small = 0
    for s in range(10):
        spec = SyntheticSpec(n_rows=600, separation=0.0, coefficients=[[0.3] * 4] * 3,
                             knowledge_fraction=0.0, seed=s)
        X = _normalized(generate(spec).data.X[:, 1:])
        small += select_data_clustering(X, range(2, 8), 5, ("kmeans",), seed=s).k <= 3
    assert small >= 6


def test_separated_clusters_select_three():
    spec = SyntheticSpec(n_rows=900, knowledge_fraction=0.0, seed=2)
    X = _normalized(generate(spec).data.X[:, 1:])
    assert select_data_clustering(X, range(2, 6), 5, ("kmeans",), seed=2).k == 3
