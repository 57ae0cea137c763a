import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slowmap import (BurstConfig, BurstEnsemble, ConfigurationError, DegenerateCovarianceError,
                     InsufficientSamplesError, LocalCovariance, StateError, estimate_covariance,
                     halfmoon_map, identity_map, linear_example, mahalanobis_sq, metric_bounds, observe,
                     oracle_halfmoon, oracle_halfmoon_em, oracle_linear_cov, pairwise_euclidean,
                     pairwise_mahalanobis, pseudoinvert, rescale, sample_burst, sample_bursts,
                     simulate)
from slowmap.geometry import psd_pinv, pseudoinvert_all


def _cov(c):
    return LocalCovariance(np.zeros(len(c)), np.asarray(c, dtype=float), 1e-6)


def _rot(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


# ---------------------------------------------------------------- estimation

def test_identical_samples_give_zero_covariance():
    b = BurstEnsemble(np.zeros(2), np.ones((10, 2)), 1e-5, "parallel-bursts")
    np.testing.assert_array_equal(estimate_covariance(b).c_hat, np.zeros((2, 2)))


def test_estimate_uses_unbiased_normalisation():
    s = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 4.0]])
    b = BurstEnsemble(np.zeros(2), s, 0.5, "parallel-bursts")
    c = estimate_covariance(b).c_hat
    np.testing.assert_allclose(c, np.cov(s.T) / 0.5)
    np.testing.assert_array_equal(c, c.T)


def test_too_few_samples():
    b = BurstEnsemble(np.zeros(2), np.ones((1, 2)), 1e-5, "parallel-bursts")
    with pytest.raises(InsufficientSamplesError):
        estimate_covariance(b)


def test_short_burst_recovers_diffusion(linear):
    b = sample_burst(linear, identity_map(), [0.0, 0.0], BurstConfig(1e-6, q=5000), seed=1)
    c = estimate_covariance(b).c_hat
    target = np.diag([1.0, 1.0 / linear.epsilon])
    np.testing.assert_allclose(np.diag(c), np.diag(target), rtol=0.10)
    assert np.linalg.norm(c - target, 2) / np.linalg.norm(target, 2) <= 0.10


def test_long_burst_matches_ou_oracle(linear):
    # fine substeps keep the Euler-Maruyama bias well below the tolerance
    cfg = BurstConfig(1e-3, q=5000, n_substeps=100)
    c = estimate_covariance(sample_burst(linear, identity_map(), [0.0, 0.0], cfg, seed=1)).c_hat
    assert abs(c[1, 1] / 432.3323583816937 - 1) < 0.05
    assert abs(c[1, 1] / oracle_linear_cov(1e-3, linear.epsilon)[1, 1] - 1) < 0.05


def test_default_substeps_bias_is_bounded(linear):
    c = estimate_covariance(sample_burst(linear, identity_map(), [0.0, 0.0],
                                         BurstConfig(1e-3, q=5000), seed=1)).c_hat
    assert abs(c[1, 1] / oracle_linear_cov(1e-3, linear.epsilon)[1, 1] - 1) < 0.15


def test_linear_example_ten_points(linear, linear_traj):
    base = linear_traj.states[::300][:10]
    bursts = sample_bursts(linear, identity_map(), base, BurstConfig(1e-6, q=50), seed=0)
    mean_c = np.mean([estimate_covariance(b).c_hat for b in bursts], axis=0)
    target = np.diag([1.0, 1.0 / linear.epsilon])
    assert np.linalg.norm(mean_c - target, 2) / np.linalg.norm(target, 2) <= 0.25


def test_burst_modes_agree(linear):
    covs = []
    for mode in ("parallel-bursts", "increments"):
        b = sample_burst(linear, identity_map(), [0.0, 0.0], BurstConfig(1e-6, q=5000, mode=mode),
                         seed=6)
        covs.append(estimate_covariance(b).c_hat)
    n = [np.linalg.norm(c, 2) for c in covs]
    assert abs(n[0] - n[1]) / n[0] <= 0.15


# ---------------------------------------------------------------- pseudoinverse

def test_fixed_rank_example():
    p, r = psd_pinv(np.diag([2.0, 0.0]), rank=1)
    assert r == 1
    np.testing.assert_allclose(p, np.diag([0.5, 0.0]), atol=1e-15)


def test_halfmoon_full_rank_inverse():
    C, C_dag = oracle_halfmoon(1.0, 1e-3)
    p = pseudoinvert(_cov(C), rank=2).c_pinv
    np.testing.assert_allclose(p, C_dag, rtol=0, atol=1e-6)
    np.testing.assert_allclose(C_dag, [[1.0, -2.0], [-2.0, 4.001]])


def test_threshold_policy_drops_small_directions():
    c = _rot(0.3) @ np.diag([1.0, 1e-5]) @ _rot(0.3).T
    cov = pseudoinvert(_cov(c))
    assert cov.rank == 1
    cov = pseudoinvert(_cov(c), rtol=1e-6)
    assert cov.rank == 2


def test_random_spd_inverse():
    rng = np.random.default_rng(3)
    for _ in range(20):
        B = rng.normal(size=(3, 3))
        c = B @ B.T + 0.1 * np.eye(3)
        p, r = psd_pinv(c, rank=3)
        assert r == 3
        np.testing.assert_allclose(p @ c, np.eye(3), atol=1e-10)


def test_moore_penrose_identities(linear):
    b = sample_burst(linear, identity_map(), [0.0, 0.0], BurstConfig(1e-6, q=50), seed=2)
    c = estimate_covariance(b).c_hat
    for rank in (1, 2):
        p = pseudoinvert(estimate_covariance(b), rank=rank).c_pinv
        scale = np.linalg.norm(c, 2)
        np.testing.assert_allclose(p @ c @ p, p, atol=1e-10 * np.linalg.norm(p, 2))
        np.testing.assert_allclose(p, p.T, atol=0)
        if rank == 2:
            np.testing.assert_allclose(c @ p @ c, c, atol=1e-10 * scale)
        assert np.all(np.linalg.eigvalsh(p) >= -1e-12 * np.linalg.norm(p, 2))


def test_pinv_errors():
    with pytest.raises(ConfigurationError):
        psd_pinv(np.eye(2), rank=3)
    with pytest.raises(DegenerateCovarianceError):
        psd_pinv(np.zeros((2, 2)))
    with pytest.raises(DegenerateCovarianceError):
        psd_pinv(np.diag([1.0, 0.0]), rank=2)
    with pytest.raises(DegenerateCovarianceError):
        psd_pinv(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(DegenerateCovarianceError, match="base point 1"):
        pseudoinvert_all([_cov(np.eye(2)), _cov(np.zeros((2, 2)))], rank=2)


# ---------------------------------------------------------------- distances

def test_mahalanobis_examples():
    I = np.eye(2)
    assert mahalanobis_sq([0, 0], I, [3, 4], I) == 25.0
    assert mahalanobis_sq([0, 0], np.diag([1.0, 0.0]), [0, 1], np.diag([1.0, 0.0])) == 0.0
    assert mahalanobis_sq([0, 0], np.diag([2.0, 0.0]), [1, 0], np.diag([0.0, 0.0])) == 1.0
    with pytest.raises(ConfigurationError):
        mahalanobis_sq([0, 0], np.eye(3), [1, 1], np.eye(3))


def test_pairwise_single_point():
    M = pairwise_mahalanobis([[1.0, 2.0]], np.eye(2)[None])
    np.testing.assert_array_equal(M.values, [[0.0]])
    np.testing.assert_array_equal(pairwise_euclidean([[1.0, 2.0]]).values, [[0.0]])


def test_pairwise_brute_force():
    rng = np.random.default_rng(4)
    y = rng.normal(size=(3, 2))
    P = []
    for _ in range(3):
        B = rng.normal(size=(2, 2))
        P.append(B @ B.T)
    M = pairwise_mahalanobis(y, np.array(P)).values
    for i in range(3):
        for j in range(3):
            expected = 0.0 if i == j else mahalanobis_sq(y[i], P[i], y[j], P[j])
            assert M[i, j] == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_pairwise_blocking_is_invisible():
    rng = np.random.default_rng(5)
    y = rng.normal(size=(37, 2))
    B = rng.normal(size=(37, 2, 2))
    P = B @ np.swapaxes(B, 1, 2)
    a = pairwise_mahalanobis(y, P, block=256).values
    b = pairwise_mahalanobis(y, P, block=5).values
    np.testing.assert_allclose(a, b, rtol=1e-14)
    np.testing.assert_array_equal(a, a.T)
    assert np.all(a >= 0)


def test_pairwise_requires_pseudoinverse():
    with pytest.raises(StateError):
        pairwise_mahalanobis(np.zeros((2, 2)), [_cov(np.eye(2)), _cov(np.eye(2))])


def test_pairwise_accepts_local_covariances():
    covs = [pseudoinvert(_cov(np.diag([1.0, 4.0])), rank=2) for _ in range(2)]
    M = pairwise_mahalanobis([[0.0, 0.0], [1.0, 2.0]], covs).values
    assert M[0, 1] == pytest.approx(2.0)


def test_identity_map_exact_metric_is_rescaled_euclidean(linear, linear_traj):
    x = linear_traj.states[::5]
    P = np.broadcast_to(np.diag(linear.scaling), (len(x), 2, 2))
    M = pairwise_mahalanobis(x, P).values
    D = pairwise_euclidean(rescale(linear, x)).values
    np.testing.assert_allclose(M, D, rtol=1e-12, atol=0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, np.pi), st.floats(0.0, np.pi), st.floats(0.0, 2.0))
def test_linear_observation_exactness(t1, t2, log_cond):
    # y = A x with exact covariance A E^-1 A^T; the metric must reproduce |dz|^2
    lin = linear_example()
    x = simulate(lin, [0.0, 0.0], 1e-4, 200, seed=3).states
    A = _rot(t1) @ np.diag([1.0, 10.0 ** log_cond]) @ _rot(t2)
    C = A @ np.diag(1.0 / lin.scaling) @ A.T
    p = pseudoinvert(_cov(C), rank=2).c_pinv
    M = pairwise_mahalanobis(x @ A.T, np.broadcast_to(p, (len(x), 2, 2))).values
    D = pairwise_euclidean(rescale(lin, x)).values
    assert np.linalg.norm(M - D) <= 1e-8 * np.linalg.norm(D)


def test_halfmoon_error_identity():
    hm = halfmoon_map()
    rng = np.random.default_rng(6)
    x = rng.uniform(-1, 1, size=(200, 2))
    y = observe(hm, x)
    eps = 1e-3
    P = np.array([oracle_halfmoon(v, eps)[1] for v in x[:, 1]])
    M = pairwise_mahalanobis(y, P).values
    z = x * np.sqrt([1.0, eps])
    D = pairwise_euclidean(z).values
    dy2 = y[:, 1][None, :] - y[:, 1][:, None]
    np.testing.assert_allclose(D - M, -dy2 ** 4, rtol=0, atol=1e-10)
    assert D[0, 1] - M[0, 1] == pytest.approx(oracle_halfmoon_em(y[0], y[1]), abs=1e-12)


def test_oracle_halfmoon_em_example():
    assert oracle_halfmoon_em([0.0, 0.0], [1.0, 0.5]) == -0.0625
    assert oracle_halfmoon_em([3.0, 1.0], [-2.0, 1.0]) == 0.0


psd = arrays(np.float64, (2, 2), elements=st.floats(-3, 3)).map(lambda b: b @ b.T)
pts = arrays(np.float64, (2,), elements=st.floats(-10, 10))


@settings(max_examples=300, deadline=None)
@given(pts, pts, psd)
def test_metric_bounds_bracket(y1, y2, P):
    lo, hi = metric_bounds(y1, y2, P)
    q = mahalanobis_sq(y1, P, y2, P)
    tol = 1e-9 * max(1.0, abs(hi))
    assert lo - tol <= q <= hi + tol


def test_metric_bounds_bulk():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        B = rng.normal(size=(2, 2))
        P = B @ B.T
        y1, y2 = rng.normal(size=(2, 2))
        lo, hi = metric_bounds(y1, y2, P)
        q = mahalanobis_sq(y1, P, y2, P)
        assert lo - 1e-12 * abs(hi) <= q <= hi * (1 + 1e-12) + 1e-15
