"""Empirical parameter selection for the burst horizon and the kernel scale.

Two scans guide the choice of parameters:

* ``delta_t_scan`` / ``detect_knee``: the mean spectral norm of the burst
  covariance is flat while drift effects are negligible and decays once the
  burst outlasts the fast relaxation.  The largest horizon on the plateau is
  recommended.
* ``sigma_scan`` / ``detect_quadratic_break``: squared Mahalanobis distance
  grows quadratically with Euclidean distance while the local linearisation
  of the observation map holds.  The kernel scale is taken from the last bin
  that still grows quadratically.

The ``oracle_*`` functions are closed forms for the two worked examples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (ConfigurationError, InsufficientRangeError, MetricInvalidError,
                     NoKneeError, SlowmapError)
from .geometry import (SquaredDistanceMatrix, estimate_covariance, pairwise_mahalanobis)
from .sde import BurstConfig, sample_bursts

__all__ = [
    "CovarianceScan",
    "DistanceScan",
    "Knee",
    "QuadraticBreak",
    "delta_t_scan",
    "detect_knee",
    "sigma_scan",
    "detect_quadratic_break",
    "oracle_linear_cov",
    "oracle_halfmoon",
    "oracle_halfmoon_em",
]


@dataclass(frozen=True)
class CovarianceScan:
    delta_t: np.ndarray
    mean_norm: np.ndarray
    std_norm: np.ndarray
    q: int
    n_base: int

    @property
    def degenerate(self) -> bool:
        return bool(np.all(self.mean_norm == 0))


@dataclass(frozen=True)
class DistanceScan:
    """Per-bin mean squared Mahalanobis distance against Euclidean distance.

    Only nonempty bins are stored.
    """

    bin_center: np.ndarray
    mean_sqdist: np.ndarray
    count: np.ndarray


class Knee(NamedTuple):
    delta_t: float
    plateau: float
    slopes: np.ndarray


class QuadraticBreak(NamedTuple):
    sigma2: float
    break_index: int | None
    slopes: np.ndarray
    populated: np.ndarray


def delta_t_scan(system, obs_map, base_points, dt_grid, q: int, seed: int,
                 n_substeps=None, noise=None) -> CovarianceScan:
    """Mean spectral norm of the burst covariance over a grid of horizons.

    Every horizon reuses the same per-point noise streams, so neighbouring
    grid values differ by the horizon rather than by resampling.
    """
    grid = np.asarray(dt_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1 or np.any(np.diff(grid) <= 0):
        raise ConfigurationError("dt_grid must be strictly increasing")
    base = np.atleast_2d(np.asarray(base_points, dtype=float))
    means, stds = [], []
    for dt in grid:
        cfg = BurstConfig(delta_t=float(dt), q=q, n_substeps=n_substeps)
        try:
            bursts = sample_bursts(system, obs_map, base, cfg, seed, noise=noise)
        except SlowmapError as err:
            raise type(err)(f"delta_t={dt:g}: {err}") from err
        norms = []
        for i, b in enumerate(bursts):
            c = estimate_covariance(b).c_hat
            nrm = np.linalg.norm(c, 2)
            if not np.isfinite(nrm):
                raise SlowmapError(f"delta_t={dt:g}, base point {i}: non-finite covariance")
            norms.append(nrm)
        means.append(np.mean(norms))
        stds.append(np.std(norms))
    return CovarianceScan(grid, np.array(means), np.array(stds), q, len(base))


def detect_knee(scan: CovarianceScan, slope_tol: float = 0.2) -> Knee:
    """Largest horizon before the covariance norm starts to decay.

    Segment slopes ``d log|C| / d log dt`` are taken between consecutive grid
    points; the knee is the right end of the longest leading run of segments
    with ``|slope| <= slope_tol``.
    """
    dt = np.asarray(scan.delta_t, dtype=float)
    c = np.asarray(scan.mean_norm, dtype=float)
    if len(dt) < 4:
        raise ConfigurationError(f"knee detection needs at least 4 grid points, got {len(dt)}")
    if scan.degenerate or np.any(~(c > 0)):
        raise NoKneeError("covariance scan is degenerate (zero norms); no plateau to detect")
    slopes = np.diff(np.log(c)) / np.diff(np.log(dt))
    ok = np.abs(slopes) <= slope_tol
    j = len(ok) if ok.all() else int(np.argmin(ok))
    if j == 0:
        raise NoKneeError(
            f"no plateau: first segment slope {slopes[0]:.3g} exceeds {slope_tol}; "
            "extend the grid to smaller delta_t or refine it")
    return Knee(float(dt[j]), float(c[: j + 1].mean()), slopes)


def sigma_scan(points, covs=None, n_bins: int = 24, sqdists=None) -> DistanceScan:
    """Bin all pairs by Euclidean distance and average their squared Mahalanobis distance.

    Pass ``covs`` (pseudoinverted covariances) or a precomputed ``sqdists``.
    """
    y = np.atleast_2d(np.asarray(points, dtype=float))
    if sqdists is None:
        if covs is None:
            raise ConfigurationError("either covs or sqdists is required")
        sqdists = pairwise_mahalanobis(y, covs)
    M = np.asarray(sqdists.values if isinstance(sqdists, SquaredDistanceMatrix) else sqdists)
    iu = np.triu_indices(len(y), 1)
    diff = y[iu[1]] - y[iu[0]]
    s = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    m = M[iu]
    keep = s > 0
    s, m = s[keep], m[keep]
    if s.size == 0 or s.min() == s.max():
        raise InsufficientRangeError("pair distances span fewer than 3 bins")
    edges = np.logspace(np.log10(s.min()), np.log10(s.max()), n_bins + 1)
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    total = np.bincount(idx, weights=m, minlength=n_bins)
    nonempty = count > 0
    if nonempty.sum() < 3:
        raise InsufficientRangeError(
            f"only {int(nonempty.sum())} nonempty distance bins; need at least 3")
    centers = np.sqrt(edges[:-1] * edges[1:])
    return DistanceScan(centers[nonempty], total[nonempty] / count[nonempty], count[nonempty])


def detect_quadratic_break(scan: DistanceScan, slope_tol: float = 0.3,
                           min_count: int = 50) -> QuadraticBreak:
    """Kernel scale at the edge of the quadratic regime.

    Bins with fewer than ``min_count`` pairs are ignored.  The local log-log
    slope is estimated per bin; the break is the first bin with
    ``|slope - 2| > slope_tol`` and the recommended ``sigma2`` is the mean
    squared distance of the bin before it.
    """
    populated = np.flatnonzero(np.asarray(scan.count) >= min_count)
    if len(populated) < 4:
        raise InsufficientRangeError(
            f"{len(populated)} bins with >= {min_count} pairs; need at least 4")
    c = np.asarray(scan.bin_center, dtype=float)[populated]
    m = np.asarray(scan.mean_sqdist, dtype=float)[populated]
    if np.any(~(m > 0)):
        raise MetricInvalidError("non-positive mean squared distance in a populated bin")
    slopes = np.gradient(np.log(m), np.log(c))
    bad = np.abs(slopes - 2.0) > slope_tol
    if not bad.any():
        return QuadraticBreak(float(m[-1]), None, slopes, populated)
    j = int(np.argmax(bad))
    if j == 0:
        raise MetricInvalidError(
            f"squared distances are not quadratic even in the smallest bin (slope {slopes[0]:.3g})")
    return QuadraticBreak(float(m[j - 1]), int(populated[j]), slopes, populated)


def oracle_linear_cov(delta_t: float, epsilon: float) -> np.ndarray:
    """Expected burst covariance for the linear example at horizon ``delta_t``.

    The fast entry is the OU variance growth ``(1 - exp(-2 dt/eps)) / (2 dt)``,
    which tends to ``1/eps`` as ``dt -> 0``.
    """
    if delta_t < 0:
        raise ConfigurationError("delta_t must be non-negative")
    if delta_t == 0:
        fast = 1.0 / epsilon
    else:
        fast = -np.expm1(-2.0 * delta_t / epsilon) / (2.0 * delta_t)
    return np.diag([1.0, fast])


def oracle_halfmoon(x2: float, epsilon: float):
    """Analytical covariance and its inverse for the half-moon observation."""
    if not np.isfinite(x2):
        raise ConfigurationError("x2 must be finite")
    C = np.array([[epsilon + 4 * x2 ** 2, 2 * x2], [2 * x2, 1.0]]) / epsilon
    C_inv = np.array([[1.0, -2 * x2], [-2 * x2, epsilon + 4 * x2 ** 2]])
    return C, C_inv


def oracle_halfmoon_em(y1, y2) -> float:
    """Metric error ``|dz|^2 - |dy|_M^2 = -(dy2)^4`` for the half-moon map."""
    return -float(np.asarray(y2)[1] - np.asarray(y1)[1]) ** 4
