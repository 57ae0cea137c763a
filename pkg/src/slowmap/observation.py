"""Observation maps ``y = f(x)`` and the rescaled coordinates ``z``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, MapDomainError, UnsupportedOperationError

__all__ = [
    "ObservationMap",
    "identity_map",
    "halfmoon_map",
    "linear_map",
    "register_map",
    "get_map",
    "available_maps",
    "observe",
    "invert",
    "rescale",
]


@dataclass(frozen=True)
class ObservationMap:
    """Forward map ``R^n -> R^d`` with an optional inverse on its image.

    Both callables act on arrays of shape ``(..., n)`` / ``(..., d)``.
    """

    name: str
    in_dim: int
    out_dim: int
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.out_dim < self.in_dim:
            raise ConfigurationError(
                f"observation dimension d={self.out_dim} must be >= n={self.in_dim}")


def identity_map(n: int = 2) -> ObservationMap:
    return ObservationMap("identity", n, n, lambda x: np.array(x, dtype=float, copy=True),
                          lambda y: np.array(y, dtype=float, copy=True))


def _halfmoon_forward(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 0] + x[..., 1] ** 2, x[..., 1]], axis=-1)


def _halfmoon_inverse(y):
    y = np.asarray(y, dtype=float)
    return np.stack([y[..., 0] - y[..., 1] ** 2, y[..., 1]], axis=-1)


def halfmoon_map() -> ObservationMap:
    """``f(x) = (x1 + x2**2, x2)``, inverse ``g(y) = (y1 - y2**2, y2)``."""
    return ObservationMap("halfmoon", 2, 2, _halfmoon_forward, _halfmoon_inverse)


def linear_map(A, name: str = "linear") -> ObservationMap:
    """``f(x) = A x`` for a ``d x n`` matrix of full column rank.

    The inverse is the least-squares solve, exact on the image of ``A``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2:
        raise ConfigurationError("A must be a matrix")
    d, n = A.shape
    if np.linalg.matrix_rank(A) < n:
        raise ConfigurationError("A must have full column rank")
    A_pinv = np.linalg.pinv(A)
    return ObservationMap(name, n, d, lambda x: np.asarray(x, dtype=float) @ A.T,
                          lambda y: np.asarray(y, dtype=float) @ A_pinv.T)


_REGISTRY: dict[str, ObservationMap] = {
    "identity": identity_map(2),
    "halfmoon": halfmoon_map(),
}


def register_map(obs_map: ObservationMap, replace: bool = False) -> None:
    """Make a user-supplied map selectable by name."""
    if obs_map.name in _REGISTRY and not replace:
        raise ConfigurationError(f"map {obs_map.name!r} is already registered")
    _REGISTRY[obs_map.name] = obs_map


def get_map(name: str) -> ObservationMap:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown observation map {name!r}; known: {sorted(_REGISTRY)}") from None


def available_maps() -> list[str]:
    return sorted(_REGISTRY)


def observe(obs_map: ObservationMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != obs_map.in_dim:
        raise ConfigurationError(
            f"{obs_map.name}: expected trailing dimension {obs_map.in_dim}, got {x.shape}")
    y = np.asarray(obs_map.forward(x), dtype=float)
    if not np.all(np.isfinite(y)):
        raise MapDomainError(f"{obs_map.name}: non-finite output")
    return y


def invert(obs_map: ObservationMap, y) -> np.ndarray:
    if obs_map.inverse is None:
        raise UnsupportedOperationError(f"map {obs_map.name!r} has no inverse")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != obs_map.out_dim:
        raise ConfigurationError(
            f"{obs_map.name}: expected trailing dimension {obs_map.out_dim}, got {y.shape}")
    return np.asarray(obs_map.inverse(y), dtype=float)


def rescale(system, x) -> np.ndarray:
    """Rescaled coordinates ``z_i = sqrt(e_i) x_i`` with unit diffusivity."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != system.dim:
        raise ConfigurationError(f"expected trailing dimension {system.dim}, got {x.shape}")
    return np.sqrt(system.scaling) * x
