"""Local covariances from bursts and the point-pair Mahalanobis metric.

The squared distance between observations ``y1`` and ``y2`` is

    0.5 * (y2 - y1)^T (C1^+ + C2^+) (y2 - y1)

where ``Ci^+`` is the pseudoinverse of the observed covariance at ``yi``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import (ConfigurationError, DegenerateCovarianceError,
                     InsufficientSamplesError, StateError)

__all__ = [
    "LocalCovariance",
    "SquaredDistanceMatrix",
    "estimate_covariance",
    "estimate_covariances",
    "psd_pinv",
    "pseudoinvert",
    "pseudoinvert_all",
    "mahalanobis_sq",
    "pairwise_mahalanobis",
    "pairwise_euclidean",
    "metric_bounds",
]

DEFAULT_RTOL = 1e-3


@dataclass(frozen=True)
class LocalCovariance:
    base_point: np.ndarray
    c_hat: np.ndarray
    delta_t: float
    c_pinv: Optional[np.ndarray] = None
    rank: Optional[int] = None


@dataclass(frozen=True)
class SquaredDistanceMatrix:
    values: np.ndarray
    metric: str

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape


def _sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def estimate_covariance(ensemble) -> LocalCovariance:
    """Burst covariance estimate ``C_hat = SampleCov(samples) / delta_t``.

    Uses the unbiased ``1/(q-1)`` sample covariance of the burst endpoints
    (or increments), symmetrised.
    """
    s = np.asarray(ensemble.samples, dtype=float)
    q = len(s)
    if q < 2:
        raise InsufficientSamplesError(f"need at least 2 burst samples, got {q}")
    # shift by one sample first so identical samples give an exact zero
    shifted = s - s[0]
    centered = shifted - shifted.mean(axis=0)
    c = centered.T @ centered / ((q - 1) * ensemble.delta_t)
    return LocalCovariance(np.asarray(ensemble.base_point, dtype=float), _sym(c), ensemble.delta_t)


def estimate_covariances(ensembles) -> list[LocalCovariance]:
    return [estimate_covariance(e) for e in ensembles]


def psd_pinv(c, rank: Optional[int] = None, rtol: float = DEFAULT_RTOL):
    """Pseudoinverse of a symmetric PSD matrix truncated to its leading eigenpairs.

    With ``rank`` given, the top ``rank`` eigenpairs are kept; otherwise all
    eigenvalues above ``rtol * lambda_max``.  Returns ``(pinv, rank)``.
    """
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise DegenerateCovarianceError("covariance has non-finite entries")
    d = c.shape[-1]
    if rank is not None and not 1 <= rank <= d:
        raise ConfigurationError(f"rank {rank} outside [1, {d}]")
    w, v = np.linalg.eigh(_sym(c))
    lam_max = w[-1]
    if not lam_max > 0:
        raise DegenerateCovarianceError(
            f"covariance has no positive eigenvalue (lambda_max = {lam_max:.3g})")
    if rank is None:
        keep = w > rtol * lam_max
    else:
        keep = np.zeros(d, dtype=bool)
        keep[d - rank:] = True
        if not np.all(w[keep] > 0):
            raise DegenerateCovarianceError(
                f"requested rank {rank} but covariance has only {int((w > 0).sum())} positive eigenvalues")
    vk = v[:, keep]
    pinv = (vk / w[keep]) @ vk.T
    return _sym(pinv), int(keep.sum())


def pseudoinvert(cov: LocalCovariance, rank: Optional[int] = None,
                 rtol: float = DEFAULT_RTOL) -> LocalCovariance:
    """Attach the truncated pseudoinverse to ``cov``.

    ``rank`` selects the fixed-rank policy; leaving it ``None`` uses the
    relative threshold ``rtol``.
    """
    pinv, r = psd_pinv(cov.c_hat, rank=rank, rtol=rtol)
    return dataclasses.replace(cov, c_pinv=pinv, rank=r)


def pseudoinvert_all(covs, rank=None, rtol=DEFAULT_RTOL) -> list[LocalCovariance]:
    out = []
    for i, c in enumerate(covs):
        try:
            out.append(pseudoinvert(c, rank=rank, rtol=rtol))
        except DegenerateCovarianceError as err:
            raise DegenerateCovarianceError(f"base point {i}: {err}") from err
    return out


def mahalanobis_sq(y1, cinv1, y2, cinv2) -> float:
    dy = np.asarray(y2, dtype=float) - np.asarray(y1, dtype=float)
    cinv1 = np.asarray(cinv1, dtype=float)
    cinv2 = np.asarray(cinv2, dtype=float)
    if cinv1.shape != (dy.size, dy.size) or cinv2.shape != cinv1.shape:
        raise ConfigurationError("dimension mismatch between points and metrics")
    return float(0.5 * dy @ (cinv1 + cinv2) @ dy)


def _pinv_stack(covs) -> np.ndarray:
    if isinstance(covs, np.ndarray):
        return covs
    mats = []
    for i, c in enumerate(covs):
        if isinstance(c, LocalCovariance):
            if c.c_pinv is None:
                raise StateError(f"covariance {i} has no pseudoinverse; call pseudoinvert first")
            mats.append(c.c_pinv)
        else:
            mats.append(np.asarray(c, dtype=float))
    return np.asarray(mats, dtype=float)


def pairwise_mahalanobis(points, covs, block: int = 256) -> SquaredDistanceMatrix:
    """All pairwise squared Mahalanobis distances.

    ``covs`` is a sequence of pseudoinverted :class:`LocalCovariance` or an
    ``(N, d, d)`` array of metric matrices.
    """
    y = np.atleast_2d(np.asarray(points, dtype=float))
    P = _pinv_stack(covs)
    N, d = y.shape
    if P.shape != (N, d, d):
        raise ConfigurationError(f"expected {N} metrics of shape ({d}, {d}), got {P.shape}")
    # Q[i, j] = dy_ij^T P_i dy_ij, computed row-block by row-block
    Q = np.empty((N, N))
    for start in range(0, N, block):
        stop = min(start + block, N)
        dy = y[None, :, :] - y[start:stop, None, :]
        Q[start:stop] = np.einsum("bnk,bkl,bnl->bn", dy, P[start:stop], dy, optimize=True)
    M = 0.5 * (Q + Q.T)
    np.fill_diagonal(M, 0.0)
    return SquaredDistanceMatrix(M, "mahalanobis")


def pairwise_euclidean(points) -> SquaredDistanceMatrix:
    y = np.atleast_2d(np.asarray(points, dtype=float))
    if len(y) == 1:
        return SquaredDistanceMatrix(np.zeros((1, 1)), "euclidean")
    return SquaredDistanceMatrix(squareform(pdist(y, "sqeuclidean")), "euclidean")


def metric_bounds(y1, y2, cinv):
    """Eigenvalue bracket ``(lam_min |dy|^2, lam_max |dy|^2)`` for ``dy^T C^+ dy``."""
    dy = np.asarray(y2, dtype=float) - np.asarray(y1, dtype=float)
    w = np.linalg.eigvalsh(_sym(np.asarray(cinv, dtype=float)))
    n2 = float(dy @ dy)
    return float(w[0]) * n2, float(w[-1]) * n2
