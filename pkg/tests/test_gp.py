import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewsearch import gp
from skewsearch.gp import DimensionMismatch, GpHyperparams, SingularKernel


def naive_posterior(X, y, Q, ls, sf2, sn2):
    """Textbook GP posterior with a dense solve; standardisation done by hand."""
    mean, std = X.mean(0), X.std(0)
    std = np.where(std > 1e-12, std, 1.0)
    Xs, Qs = (X - mean) / std / ls, (Q - mean) / std / ls
    k = lambda a, b: sf2 * np.exp(-0.5 * ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    K = k(Xs, Xs) + sn2 * np.eye(len(X))
    Ks = k(Qs, Xs)
    ym = y.mean()
    mu = ym + Ks @ np.linalg.solve(K, y - ym)
    var = sf2 + sn2 - np.einsum("ij,ji->i", Ks, np.linalg.solve(K, Ks.T))
    return mu, np.sqrt(np.maximum(var, 0))


def test_linear_1d_example():
    X = np.arange(4.0)[:, None]
    m = gp.fit(X, X[:, 0])
    mu, _ = m.predict_arrays([[1.5]])
    assert abs(mu[0] - 1.5) <= 0.05
    hp = m.hyperparams
    ref_mu, ref_v = naive_posterior(X, X[:, 0], np.array([[1.5], [0.3], [2.9]]), hp.lengthscales,
                                    hp.signal_variance, max(hp.noise_variance, gp.NOISE_FLOOR))
    got_mu, got_v = m.predict_arrays([[1.5], [0.3], [2.9]])
    assert np.allclose(got_mu, ref_mu, atol=1e-6)
    assert np.allclose(got_v, ref_v, atol=1e-5)


def test_duplicate_rows_fit():
    m = gp.fit([[1.0, 2.0], [1.0, 2.0]], [3.0, 3.0])
    assert m.predict([[1.0, 2.0]])[0].mu == pytest.approx(3.0)


def test_constant_targets():
    X = np.random.default_rng(0).random((8, 2))
    m = gp.fit(X, np.full(8, 4.2))
    mu, v = m.predict_arrays(X + 1e-3)
    assert np.allclose(mu, 4.2) and np.all(v < 1e-3)


def fixed_model(X, y, ls=1.0, sf2=1.0, sn2=1e-10):
    X = np.atleast_2d(X)
    return gp.fit(X, y, hyperparams=GpHyperparams(np.full(X.shape[1], ls), sf2, sn2))


def test_interpolates_training_points():
    rng = np.random.default_rng(1)
    X = rng.random((10, 3))
    y = np.sin(X.sum(1))
    m = fixed_model(X, y, ls=1.0)
    mu, v = m.predict_arrays(X)
    noise_sd = np.sqrt(max(m.hyperparams.noise_variance, gp.NOISE_FLOOR))
    assert np.all(np.abs(mu - y) <= 3 * noise_sd + 1e-7)
    assert np.all(v <= 10 * np.sqrt(gp.NOISE_FLOOR))


def test_reverts_to_prior_far_away():
    X = np.linspace(0, 1, 6)[:, None]
    m = fixed_model(X, np.cos(3 * X[:, 0]), ls=0.5, sf2=2.0, sn2=0.01)
    far = X.mean() + 10 * 0.5 * X.std() * 3
    _, v = m.predict_arrays([[far]])
    assert v[0] == pytest.approx(np.sqrt(2.01), rel=0.05)


def test_symmetric_predictions():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = X[:, 0] ** 2
    m = gp.fit(X, y)
    a = m.predict_arrays([[0.4], [1.7]])
    b = m.predict_arrays([[-0.4], [-1.7]])
    assert np.allclose(a[0], b[0], atol=1e-8) and np.allclose(a[1], b[1], atol=1e-8)


def test_dimension_mismatch():
    m = gp.fit(np.random.default_rng(0).random((5, 3)), np.arange(5.0))
    with pytest.raises(DimensionMismatch):
        m.predict([[1.0, 2.0]])
    with pytest.raises(DimensionMismatch):
        gp.fit(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        gp.fit([[1.0]], [1.0])


def test_singular_kernel_after_jitter():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalue -1
    with pytest.raises(SingularKernel):
        gp._factor(bad)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        GpHyperparams(np.array([1.0, 0.0]), 1.0, 0.1)
    with pytest.raises(ValueError):
        GpHyperparams(np.array([1.0]), -1.0, 0.1)
    with pytest.raises(ValueError):
        GpHyperparams(np.array([1.0]), 1.0, -0.1)


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((15, 4))
    y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(15)
    theta = np.log(np.array([1.2, 0.8, 3.0, 1.5, 1.1, 0.05]))
    _, g = gp.log_marginal_likelihood(theta, X, y)
    h = 1e-6
    fd = [(gp.log_marginal_likelihood(theta + h * e, X, y, False)
           - gp.log_marginal_likelihood(theta - h * e, X, y, False)) / (2 * h) for e in np.eye(6)]
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-6)


def test_dump_and_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    m = gp.fit(rng.random((12, 3)), rng.random(12))
    m.dump(tmp_path / "gp.json")
    m2 = gp.GpModel.load(tmp_path / "gp.json")
    Q = rng.random((5, 3))
    assert np.array_equal(m.predict_arrays(Q)[0], m2.predict_arrays(Q)[0])
    assert np.array_equal(m.predict_arrays(Q)[1], m2.predict_arrays(Q)[1])


def test_fit_is_deterministic():
    rng = np.random.default_rng(4)
    X, y = rng.random((20, 5)), rng.random(20)
    a, b = gp.fit(X, y, seed=1), gp.fit(X, y, seed=1)
    assert np.array_equal(a.hyperparams.to_vector(), b.hyperparams.to_vector())


def test_warm_start_dimension_checked():
    rng = np.random.default_rng(5)
    with pytest.raises(DimensionMismatch):
        gp.fit(rng.random((6, 2)), rng.random(6), warm_start=GpHyperparams(np.ones(3), 1.0, 0.1))


@given(st.integers(0, 10_000), st.sampled_from([1, 5]))
def test_posterior_variance_bounded_by_prior(seed, d):
    rng = np.random.default_rng(seed)
    X = rng.random((8, d))
    m = gp.fit(X, np.sin(3 * X).sum(1), n_starts=2, seed=seed)
    hp = m.hyperparams
    _, v = m.predict_arrays(rng.random((30, d)) * 3 - 1)
    assert np.all(v ** 2 <= hp.signal_variance + max(hp.noise_variance, gp.NOISE_FLOOR) + 1e-9)
    assert m.factorization_error() <= 1e-8


@given(st.integers(0, 10_000))
def test_adding_data_never_increases_variance(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (7, 1))
    y = np.sin(X[:, 0])
    hp = GpHyperparams(np.array([rng.uniform(0.2, 2)]), rng.uniform(0.5, 2), rng.uniform(1e-6, 1e-2))
    Q = np.linspace(-3, 3, 41)[:, None]
    # same standardisation for both models so only the data changes
    small = gp.GpModel(X[:-1], y[:-1], hp, np.zeros(1), np.ones(1), 0.0)
    big = gp.GpModel(X, y, hp, np.zeros(1), np.ones(1), 0.0)
    assert np.all(big.predict_arrays(Q)[1] <= small.predict_arrays(Q)[1] + 1e-9)
