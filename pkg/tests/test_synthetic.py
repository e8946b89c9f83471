import numpy as np
import pytest

from irga.cli import read_table
from irga.errors import ConfigError
from irga.synthetic import ScenarioSpec, consistency_sequence, generate, to_csv


def test_gp_replication_shapes_and_truth():
    data, truth = generate(ScenarioSpec.gp_replication(seed=0))
    assert data.y.shape == (100,) and data.X.shape == (100, 3) and data.Z.shape == (100, 1)
    np.testing.assert_array_equal(truth.beta, [4.0, -4.0, 4.0])
    np.testing.assert_array_equal(data.Z[:, 0], data.X[:, 0])
    np.testing.assert_allclose(truth.eta, truth.F**2)
    assert truth.gamma == (0, 1, 2)


def test_zero_signal_selection_has_empty_model():
    _, truth = generate(ScenarioSpec("selection", n=40, p=8))
    assert truth.gamma == ()
    assert not truth.beta.any()


@pytest.mark.parametrize("spec", [
    ScenarioSpec.gp_replication(seed=3),
    ScenarioSpec("covariate_adjust", n=30, p=2, q=5, rho=0.4, beta=(1.0, 0.0), alpha=(0.5,) * 5, seed=7),
])
def test_seeded_generation_is_bit_identical(spec):
    a, ta = generate(spec)
    b, tb = generate(spec)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.X, b.X) and np.array_equal(a.Z, b.Z)
    assert np.array_equal(ta.eta, tb.eta)


def test_toeplitz_correlation():
    data, _ = generate(ScenarioSpec("selection", n=10_000, p=6, rho=0.9, seed=1))
    emp = np.corrcoef(data.X, rowvar=False)
    lag = np.abs(np.subtract.outer(np.arange(6), np.arange(6)))
    assert np.abs(emp - 0.9**lag).max() < 0.1


def test_ground_truth_not_in_dataset():
    data, truth = generate(ScenarioSpec("covariate_adjust", n=20, p=2, q=3, beta=(1.0, 2.0), seed=2))
    assert not hasattr(data, "beta") and not hasattr(data, "eta")
    np.testing.assert_allclose(truth.eta, data.Z @ truth.alpha)


def test_csv_round_trip(tmp_path):
    data, _ = generate(ScenarioSpec("covariate_adjust", n=25, p=2, q=3, rho=0.3, beta=(1.0, -1.0), seed=4))
    back = read_table(to_csv(data, tmp_path / "d.csv"))
    assert np.array_equal(back.y, data.y)
    assert np.array_equal(back.X, data.X)
    assert np.array_equal(back.Z, data.Z)
    assert back.names_x == ["x_1", "x_2"] and back.names_z == ["z_1", "z_2", "z_3"]


def test_consistency_sequence_is_nested():
    spec = ScenarioSpec("consistency", n=400, p=4, q=5, beta=(1.0, -1.0, 0.5, 0.0), alpha=(1.0, 0, 0, -1.0, 0), seed=5)
    seq = consistency_sequence(spec, (50, 100, 400))
    big = seq[-1][0]
    for data, truth in seq:
        n = data.n
        assert np.array_equal(data.y, big.y[:n]) and np.array_equal(data.X, big.X[:n])
        assert truth.gamma == (0, 1, 2)


@pytest.mark.parametrize("kw", [
    dict(family="nope", n=10, p=1),
    dict(family="selection", n=5, p=6),
    dict(family="selection", n=10, p=2, rho=1.0),
    dict(family="selection", n=10, p=2, beta=(1.0,)),
    dict(family="covariate_adjust", n=10, p=2, q=2, alpha=(1.0,)),
    dict(family="gp", n=10, p=2, q=3),
])
def test_invalid_specs(kw):
    with pytest.raises(ConfigError):
        ScenarioSpec(**kw)
