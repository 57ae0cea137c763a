"""Diffusion maps on a precomputed squared-distance matrix.

The kernel ``W_ij = exp(-d2_ij / sigma2)`` is row-normalised into the Markov
matrix ``A = D^-1 W``.  Its eigenpairs are obtained from the symmetric
conjugate ``S = D^-1/2 W D^-1/2`` and mapped back with ``phi = D^-1/2 psi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.stats import pearsonr, spearmanr

from .errors import (ConfigurationError, ConnectivityError, UndefinedCorrelationError)

__all__ = [
    "DisconnectedGraphWarning",
    "DmapsConfig",
    "DmapsResult",
    "Match",
    "kernel_matrix",
    "embed",
    "diffusion_map",
    "best_matching_eigenvector",
]

SOLVERS = ("dense", "arpack")


class DisconnectedGraphWarning(UserWarning):
    """The leading eigenvalue 1 is repeated: the kernel graph is disconnected."""


@dataclass(frozen=True)
class DmapsConfig:
    sigma2: float
    n_eigenpairs: int = 10
    solver: str = "dense"

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2}")
        if self.n_eigenpairs < 2:
            raise ConfigurationError(f"need at least 2 eigenpairs, got {self.n_eigenpairs}")
        if self.solver not in SOLVERS:
            raise ConfigurationError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")


@dataclass(frozen=True)
class DmapsResult:
    """Eigenvalues sorted by decreasing magnitude and matching eigenvectors.

    ``eigenvectors[:, j]`` is ``phi_j``: unit 2-norm, with its largest-magnitude
    entry positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sigma2: Optional[float] = None

    @property
    def n_points(self) -> int:
        return self.eigenvectors.shape[0]

    def __len__(self):
        return len(self.eigenvalues)


class Match(NamedTuple):
    index: int
    pearson: float
    spearman: float


def kernel_matrix(sqdists, sigma2: float) -> np.ndarray:
    """Gaussian kernel ``exp(-d2 / sigma2)`` of a squared-distance matrix."""
    if not sigma2 > 0:
        raise ConfigurationError(f"sigma2 must be positive, got {sigma2}")
    d2 = np.asarray(sqdists, dtype=float)
    return np.exp(-d2 / sigma2)


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)  # first occurrence on ties
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def embed(W, k: int, solver: str = "dense") -> DmapsResult:
    """Top ``k`` eigenpairs (by ``|lambda|``) of ``A = D^-1 W``.

    ``solver='dense'`` runs a full symmetric eigendecomposition;
    ``solver='arpack'`` uses Lanczos iteration for the ``k`` largest-magnitude
    eigenvalues and is meant for large ``N``.
    """
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    if W.shape != (N, N):
        raise ConfigurationError(f"kernel must be square, got {W.shape}")
    if not 1 <= k <= N:
        raise ConfigurationError(f"k must be in [1, {N}], got {k}")
    if solver not in SOLVERS:
        raise ConfigurationError(f"unknown solver {solver!r}")
    d = W.sum(axis=1)
    zero = np.flatnonzero(~(d > 0))
    if zero.size:
        raise ConnectivityError(int(zero[0]))
    s = 1.0 / np.sqrt(d)
    S = s[:, None] * W * s[None, :]
    S = 0.5 * (S + S.T)

    if solver == "dense" or k >= N - 1:
        w, psi = scipy.linalg.eigh(S, driver="evd")
    else:
        v0 = np.random.default_rng(0).uniform(0.5, 1.5, N)
        w, psi = scipy.sparse.linalg.eigsh(S, k=k, which="LM", v0=v0, tol=0)
    order = np.lexsort((-w, -np.abs(w)))[:k]
    w = w[order]
    phi = s[:, None] * psi[:, order]
    phi /= np.linalg.norm(phi, axis=0)
    phi = _fix_signs(phi)
    if k > 1 and abs(w[1] - 1.0) < 1e-10:
        warnings.warn("eigenvalue 1 has multiplicity > 1; kernel graph is disconnected",
                      DisconnectedGraphWarning, stacklevel=2)
    return DmapsResult(w, phi)


def diffusion_map(sqdists, config: DmapsConfig) -> DmapsResult:
    W = kernel_matrix(sqdists, config.sigma2)
    res = embed(W, min(config.n_eigenpairs, W.shape[0]), solver=config.solver)
    return DmapsResult(res.eigenvalues, res.eigenvectors, config.sigma2)


def best_matching_eigenvector(result: DmapsResult, reference) -> Match:
    """Nontrivial eigenvector with the largest ``|Pearson r|`` against ``reference``.

    Searches ``phi_1 .. phi_{k-1}``; also reports the Spearman ``|rho|`` of the
    winner.
    """
    ref = np.asarray(reference, dtype=float)
    k = len(result)
    if k < 2:
        raise ConfigurationError("need at least two eigenvectors")
    if ref.shape != (result.n_points,):
        raise ConfigurationError(f"reference must have length {result.n_points}")
    if np.ptp(ref) == 0:
        raise UndefinedCorrelationError("reference signal is constant")
    best = (0, -1.0)
    for j in range(1, k):
        phi = result.eigenvectors[:, j]
        if np.ptp(phi) == 0:
            continue
        r = abs(pearsonr(phi, ref)[0])
        if r > best[1]:
            best = (j, r)
    if best[0] == 0:
        raise UndefinedCorrelationError("all nontrivial eigenvectors are constant")
    j, r = best
    rho = abs(spearmanr(result.eigenvectors[:, j], ref)[0])
    return Match(j, float(r), float(rho))
