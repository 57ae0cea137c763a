"""Two-time-scale SDE systems, Euler-Maruyama integration and simulation bursts.

A system is described by its drift ``a(x)``, the number of slow coordinates
``m`` and the time-scale separation ``eps``.  Slow rows evolve as
``dx = a(x) dt + dW`` and fast rows as ``dx = a(x)/eps dt + dW/sqrt(eps)``.

Random numbers come from counter-based Philox streams keyed by
``(seed, stream...)`` so that every burst owns an independent stream and
results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, IntegrationError

__all__ = [
    "SdeSystem",
    "Trajectory",
    "BurstConfig",
    "BurstEnsemble",
    "ZeroNoise",
    "linear_example",
    "make_rng",
    "em_step",
    "simulate",
    "sample_burst",
    "sample_bursts",
]

# Explicit Euler on a fast OU row diverges once h/eps approaches 2.
MAX_STEP_RATIO = 0.5

TRAJECTORY_STREAM = 0
BURST_STREAM = 1

BURST_MODES = ("parallel-bursts", "increments")


@dataclass(frozen=True)
class SdeSystem:
    """Two-time-scale SDE with unit diffusivity in rescaled coordinates.

    Parameters
    ----------
    drift : callable
        Maps states of shape ``(..., n)`` to drift values of the same shape.
        Must be vectorised over leading axes.
    dim : int
        State dimension ``n``.
    slow_count : int
        Number ``m`` of slow coordinates; they come first.
    epsilon : float
        Time-scale separation, ``0 < epsilon <= 1``.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    dim: int
    slow_count: int
    epsilon: float
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 1 <= self.slow_count <= self.dim:
            raise ConfigurationError(
                f"slow_count must satisfy 1 <= m <= n, got m={self.slow_count}, n={self.dim}")
        if not 0 < self.epsilon <= 1:
            raise ConfigurationError(f"epsilon must be in (0, 1], got {self.epsilon}")

    @property
    def scaling(self) -> np.ndarray:
        """Per-coordinate scaling ``e``: 1 for slow rows, ``epsilon`` for fast rows."""
        e = np.ones(self.dim)
        e[self.slow_count:] = self.epsilon
        return e

    @property
    def fast_count(self) -> int:
        return self.dim - self.slow_count

    def default_substeps(self, delta_t: float) -> int:
        return max(1, math.ceil(10 * delta_t / self.scaling.min()))


def linear_example(a: float = 3.0, epsilon: float = 1e-3) -> SdeSystem:
    """Constant-drift slow coordinate coupled to a fast OU coordinate.

    ``dx1 = a dt + dW1``, ``dx2 = -x2/eps dt + dW2/sqrt(eps)``.
    """

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = a
        out[..., 1] = -x[..., 1]
        return out

    return SdeSystem(drift=drift, dim=2, slow_count=1, epsilon=epsilon,
                     name="linear-eq19", params={"a": a, "epsilon": epsilon})


class ZeroNoise:
    """Drop-in replacement for a numpy Generator that only yields zeros."""

    def standard_normal(self, size=None):
        return np.zeros(size)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the stream keyed by ``(seed, *stream)``."""
    if seed is None or int(seed) != seed or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _check_step(system: SdeSystem, h: float, what: str = "dt"):
    if not h > 0:
        raise ConfigurationError(f"{what} must be positive, got {h}")
    ratio = h / system.scaling.min()
    if ratio > MAX_STEP_RATIO:
        raise ConfigurationError(
            f"stability guard violated: {what}/epsilon = {ratio:.6g} > {MAX_STEP_RATIO}")


def _drift(system: SdeSystem, x: np.ndarray) -> np.ndarray:
    a = np.asarray(system.drift(x), dtype=float)
    if a.shape != x.shape:
        raise ConfigurationError(f"drift returned shape {a.shape}, expected {x.shape}")
    bad = ~np.isfinite(a)
    if bad.any():
        where = tuple(int(i[0]) for i in np.nonzero(bad))
        err = IntegrationError(f"non-finite drift in component {where[-1]}")
        err.index = where[:-1]
        err.component = where[-1]
        raise err
    return a


def em_step(x, system: SdeSystem, h: float, xi) -> np.ndarray:
    """One Euler-Maruyama step of size ``h`` with standard normal draws ``xi``.

    Returns ``x + (a(x)/e) h + sqrt(h/e) xi``.  Works on a single state of
    shape ``(n,)`` or a batch ``(..., n)``.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if not h > 0:
        raise ConfigurationError(f"step h must be positive, got {h}")
    if x.shape[-1] != system.dim or xi.shape != x.shape:
        raise ConfigurationError(
            f"state and noise must have trailing dimension {system.dim}; "
            f"got {x.shape} and {xi.shape}")
    e = system.scaling
    return x + _drift(system, x) / e * h + np.sqrt(h / e) * xi


@dataclass(frozen=True)
class Trajectory:
    dt: float
    states: np.ndarray
    seed: Optional[int]

    def __post_init__(self):
        if self.states.ndim != 2 or len(self.states) < 2:
            raise ConfigurationError("a trajectory needs at least two states")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.states))

    def __len__(self):
        return len(self.states)


def simulate(system: SdeSystem, x0, dt: float, n_steps: int, seed: int,
             noise=None) -> Trajectory:
    """Integrate ``n_steps`` Euler-Maruyama steps from ``x0``.

    ``noise`` overrides the seeded generator (any object with a numpy-style
    ``standard_normal(size)``); meant for tests.
    """
    _check_step(system, dt)
    if n_steps < 1:
        raise ConfigurationError(f"n_steps must be >= 1, got {n_steps}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.dim,):
        raise ConfigurationError(f"x0 must have shape ({system.dim},), got {x0.shape}")
    rng = noise if noise is not None else make_rng(seed, TRAJECTORY_STREAM)
    xi = rng.standard_normal((n_steps, system.dim))
    states = np.empty((n_steps + 1, system.dim))
    states[0] = x0
    e = system.scaling
    scale = np.sqrt(dt / e)
    for k in range(n_steps):
        try:
            a = _drift(system, states[k])
        except IntegrationError as err:
            raise IntegrationError(f"step {k}: {err}") from err
        states[k + 1] = states[k] + a / e * dt + scale * xi[k]
    return Trajectory(dt=dt, states=states, seed=seed)


@dataclass(frozen=True)
class BurstConfig:
    """Burst horizon ``delta_t``, sample count ``q`` and sampling mode.

    ``parallel-bursts`` runs ``q`` independent paths of length ``delta_t``;
    ``increments`` runs one path of length ``q * delta_t`` and keeps its ``q``
    successive increments.  ``n_substeps=None`` picks
    ``max(1, ceil(10 delta_t / eps))``.
    """

    delta_t: float
    q: int = 50
    n_substeps: Optional[int] = None
    mode: str = "parallel-bursts"

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ConfigurationError(f"delta_t must be positive, got {self.delta_t}")
        if self.q < 2:
            raise ConfigurationError(f"q must be >= 2, got {self.q}")
        if self.n_substeps is not None and self.n_substeps < 1:
            raise ConfigurationError(f"n_substeps must be >= 1, got {self.n_substeps}")
        if self.mode not in BURST_MODES:
            raise ConfigurationError(f"unknown burst mode {self.mode!r}; expected one of {BURST_MODES}")

    def substeps(self, system: SdeSystem) -> int:
        return self.n_substeps if self.n_substeps is not None else system.default_substeps(self.delta_t)


@dataclass(frozen=True)
class BurstEnsemble:
    """Observed burst samples anchored at one base point.

    ``samples`` holds the ``q`` observed endpoints (parallel mode) or the
    ``q`` observed increments (increments mode).  ``path`` is the observed
    path ``y(t_0), ..., y(t_q)`` in increments mode and ``None`` otherwise.
    """

    base_point: np.ndarray
    samples: np.ndarray
    delta_t: float
    mode: str
    path: Optional[np.ndarray] = None

    @property
    def q(self) -> int:
        return len(self.samples)


def _burst_noise(rng, cfg: BurstConfig, ns: int, n: int) -> np.ndarray:
    # shape (n_steps_total, n_paths, n)
    if cfg.mode == "parallel-bursts":
        return rng.standard_normal((ns, cfg.q, n))
    return rng.standard_normal((cfg.q * ns, 1, n))


def sample_bursts(system: SdeSystem, obs_map, base_states, cfg: BurstConfig, seed: int,
                  noise=None, indices=None) -> list[BurstEnsemble]:
    """Run bursts from every state in ``base_states``.

    Burst ``i`` draws from the stream ``(seed, 1, indices[i])`` so the result
    for a base point does not depend on which other points are in the batch.
    """
    from .observation import observe

    x0 = np.atleast_2d(np.asarray(base_states, dtype=float))
    if x0.shape[-1] != system.dim:
        raise ConfigurationError(f"base states must have dimension {system.dim}")
    if not np.all(np.isfinite(x0)):
        raise ConfigurationError("base states must be finite")
    if indices is None:
        indices = range(len(x0))
    indices = [int(i) for i in indices]
    if len(indices) != len(x0):
        raise ConfigurationError("indices must match the number of base states")

    ns = cfg.substeps(system)
    h = cfg.delta_t / ns
    _check_step(system, h, what="burst substep")

    xi = np.stack([_burst_noise(noise if noise is not None else make_rng(seed, BURST_STREAM, i),
                                cfg, ns, system.dim) for i in indices])
    e = system.scaling
    scale = np.sqrt(h / e)
    n_paths = xi.shape[2]
    x = np.repeat(x0[:, None, :], n_paths, axis=1)
    saved = [x.copy()] if cfg.mode == "increments" else None
    for k in range(xi.shape[1]):
        try:
            a = _drift(system, x)
        except IntegrationError as err:
            burst = indices[err.index[0]]
            raise IntegrationError(f"burst {burst}: {err}") from err
        x = x + a / e * h + scale * xi[:, k]
        if saved is not None and (k + 1) % ns == 0:
            saved.append(x.copy())

    base_obs = observe(obs_map, x0)
    out = []
    if cfg.mode == "parallel-bursts":
        ends = observe(obs_map, x)
        for p in range(len(x0)):
            out.append(BurstEnsemble(base_obs[p], ends[p], cfg.delta_t, cfg.mode))
    else:
        path = observe(obs_map, np.stack(saved, axis=1)[:, :, 0, :])
        for p in range(len(x0)):
            out.append(BurstEnsemble(base_obs[p], np.diff(path[p], axis=0), cfg.delta_t,
                                     cfg.mode, path=path[p]))
    return out


def sample_burst(system: SdeSystem, obs_map, x0, cfg: BurstConfig, seed: int,
                 index: int = 0, noise=None) -> BurstEnsemble:
    """Single-base-point version of :func:`sample_bursts`."""
    return sample_bursts(system, obs_map, [x0], cfg, seed, noise=noise, indices=[index])[0]
