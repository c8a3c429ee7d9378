import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from sentinel.errors import BadRank, DimensionMismatch, InsufficientData
from sentinel.pca import PcaDensityModel, effective_k, explained_variance, fit_pca, pca_score


def correlated_2d(n=500, seed=0):
    rng = np.random.default_rng(seed)
    return rng.multivariate_normal([1.0, -2.0], [[3.0, 1.2], [1.2, 1.0]], size=n)


def closed_form_2d_loglik(X, x):
    """Bivariate normal log-density built with 2x2 algebra only."""
    n = len(X)
    mx, my = X[:, 0].mean(), X[:, 1].mean()
    a = ((X[:, 0] - mx) ** 2).sum() / (n - 1)
    c = ((X[:, 1] - my) ** 2).sum() / (n - 1)
    b = ((X[:, 0] - mx) * (X[:, 1] - my)).sum() / (n - 1)
    det = a * c - b * b
    dx, dy = x[:, 0] - mx, x[:, 1] - my
    quad = (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det
    return -math.log(2 * math.pi) - 0.5 * math.log(det) - 0.5 * quad


def test_two_d_matches_closed_form():
    X = correlated_2d()
    model = fit_pca(X, k=1)
    # with d=2, k=1 the noise variance is exactly the minor eigenvalue
    probe = np.random.default_rng(1).normal(size=(50, 2)) * 3
    np.testing.assert_allclose(model.log_likelihood(probe), closed_form_2d_loglik(X, probe), atol=1e-6, rtol=0)


def _ppca_dense_cov(X, k):
    """Dense PPCA covariance from np.cov, power iteration and the trace identity."""
    S = np.cov(X, rowvar=False)
    d = S.shape[0]
    vecs = []
    lams = []
    R = S.copy()
    rng = np.random.default_rng(0)
    for _ in range(k):
        v = rng.normal(size=d)
        for _ in range(5000):
            v = R @ v
            v /= np.linalg.norm(v)
        lam = v @ R @ v
        vecs.append(v)
        lams.append(lam)
        R = R - lam * np.outer(v, v)
    sigma2 = (np.trace(S) - sum(lams)) / (d - k)
    C = sigma2 * np.eye(d)
    for lam, v in zip(lams, vecs):
        C += (lam - sigma2) * np.outer(v, v)
    return X.mean(axis=0), C


@pytest.mark.parametrize("k", [1, 2])
def test_three_d_matches_dense_logpdf(k):
    rng = np.random.default_rng(2)
    A = np.array([[2.0, 0.0, 0.0], [0.8, 1.0, 0.0], [0.3, -0.4, 0.5]])
    X = rng.normal(size=(500, 3)) @ A.T + np.array([0.5, 1.0, -1.0])
    model = fit_pca(X, k=k)
    mean, C = _ppca_dense_cov(X, k)
    probe = rng.normal(size=(40, 3)) * 2
    expect = multivariate_normal(mean, C).logpdf(probe)
    np.testing.assert_allclose(model.log_likelihood(probe), expect, atol=1e-6, rtol=0)
    np.testing.assert_allclose(model.covariance(), C, atol=1e-9)


def test_model_invariants():
    X = np.random.default_rng(3).normal(size=(200, 6)) @ np.random.default_rng(4).normal(size=(6, 6))
    m = fit_pca(X, k=3)
    np.testing.assert_allclose(m.components.T @ m.components, np.eye(3), atol=1e-8)
    assert np.all(np.diff(m.eigenvalues) <= 1e-10)
    assert m.eigenvalues[-1] >= -1e-10
    assert m.sigma2 > 0


def test_mean_is_the_global_minimizer():
    X = correlated_2d(seed=5)
    m = fit_pca(X, k=1)
    best = pca_score(m, m.mean)
    probes = m.mean + np.random.default_rng(0).normal(size=(200, 2))
    assert np.all(m.score(probes) > best)


def test_equal_mahalanobis_gives_equal_scores():
    m = fit_pca(correlated_2d(seed=6), k=1)
    C = m.covariance()
    L = np.linalg.cholesky(C)
    u = np.array([[0.6, 0.8], [-1.0, 0.0]])
    pts = m.mean + u @ L.T * 2.0
    s = m.score(pts)
    assert s[0] == pytest.approx(s[1], abs=1e-10)


def test_full_rank_reconstruction_is_exact():
    X = np.random.default_rng(7).normal(size=(30, 4))
    m = fit_pca(X, k=4)
    np.testing.assert_allclose(m.reconstruction_error(X), 0.0, atol=1e-20)


def test_reconstruction_error_non_increasing_in_k():
    X = np.random.default_rng(8).normal(size=(100, 8)) * np.arange(1, 9)
    errs = [fit_pca(X, k=k).reconstruction_error(X).sum() for k in range(1, 9)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_explained_variance_matches_eigenvalues():
    X = np.random.default_rng(9).normal(size=(60, 5)) * np.array([3, 2, 1, 0.5, 0.1])
    ratios = explained_variance(fit_pca(X, k=2))
    vals = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False)))[::-1]
    np.testing.assert_allclose(ratios, np.cumsum(vals) / np.trace(np.cov(X, rowvar=False)), atol=1e-12)
    assert ratios[-1] == 1.0


def test_isotropic_and_rank_one_explained_variance():
    iso = np.random.default_rng(10).normal(size=(20000, 4))
    np.testing.assert_allclose(explained_variance(fit_pca(iso, 2)), [0.25, 0.5, 0.75, 1.0], atol=0.02)
    t = np.random.default_rng(11).normal(size=(50, 1))
    rank1 = t @ np.array([[1.0, 2.0, -1.0]])
    assert explained_variance(fit_pca(rank1, 1))[0] == pytest.approx(1.0, abs=1e-12)


def test_default_k_on_high_dimensional_data():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(400, 40)) @ rng.normal(size=(40, 40))
    m = fit_pca(X)
    assert m.k == 20
    ratios = explained_variance(m)
    assert np.all(np.diff(ratios) >= 0) and 0 < ratios[0] and ratios[-1] == 1.0


def test_effective_k_clamps_below_dimension():
    assert effective_k(20, 31) == 20
    assert effective_k(20, 20) == 19
    assert effective_k(20, 6) == 5
    assert effective_k(20, 1) == 1


def test_entropy_sanity():
    m = fit_pca(np.random.default_rng(13).normal(size=(300, 5)) * [3, 2, 1, 1, 1], k=2)
    C = m.covariance()
    sample = np.random.default_rng(14).multivariate_normal(m.mean, C, size=20000)
    entropy = 0.5 * np.linalg.slogdet(2 * np.pi * np.e * C)[1]
    assert m.score(sample).mean() == pytest.approx(entropy, abs=0.05)


def test_errors():
    with pytest.raises(InsufficientData):
        fit_pca(np.ones((1, 3)), 1)
    with pytest.raises(BadRank):
        fit_pca(np.ones((5, 3)), 4)
    with pytest.raises(BadRank):
        fit_pca(np.ones((5, 3)), 0)
    m = fit_pca(np.random.default_rng(0).normal(size=(10, 3)), 1)
    with pytest.raises(DimensionMismatch):
        pca_score(m, np.zeros(4))


def test_scores_finite_for_degenerate_training_data():
    X = np.zeros((10, 3))
    X[:, 0] = np.arange(10)
    m = fit_pca(X, 1)
    assert np.all(np.isfinite(m.score(np.array([[100.0, 50.0, -50.0]]))))


def test_save_load_is_bit_exact(tmp_path):
    from sentinel.ingest import fit_scaler
    X = np.random.default_rng(15).poisson(3, size=(50, 6)).astype(float)
    sc = fit_scaler(X, "standardize")
    m = fit_pca(sc.apply(X), 3, sc, "abc")
    m.save(tmp_path / "pca.model")
    back = PcaDensityModel.load(tmp_path / "pca.model")
    assert back.vocab_hash == "abc" and back.k == 3
    assert np.array_equal(back.score_counts(X), m.score_counts(X))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_scores_invariant_under_rotation(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 4)) * [2.0, 1.0, 0.5, 0.2]
    T = rng.normal(size=(10, 4))
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    a = fit_pca(X, 2).score(T)
    b = fit_pca(X @ Q.T, 2).score(T @ Q.T)
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-8)
