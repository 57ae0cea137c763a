"""End-to-end experiment pipeline and figure presets.

An :class:`ExperimentConfig` fully describes one run: the system, the
observation map, the trajectory, the burst sampling, the metric and the
diffusion-map settings.  :func:`run_experiment` executes it and, when given an
output directory, writes plot-ready CSV files plus ``summary.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np
from scipy.stats import spearmanr

from . import dmaps as dm
from . import geometry as geo
from . import tuning
from .errors import ConfigurationError
from .observation import get_map, invert, observe
from .sde import BURST_MODES, BurstConfig, linear_example, sample_bursts, simulate

log = logging.getLogger(__name__)

__all__ = [
    "SystemSpec", "TrajectorySpec", "BurstSpec", "DmapsSpec", "ScanSpec",
    "ExperimentConfig", "RunResult", "register_system", "build_system",
    "default_dt_grid", "simulate_data", "compute_metric", "run_experiment",
    "run_dt_scan", "PRESETS", "reproduce",
]

METRICS = ("euclidean", "mahalanobis")

_SYSTEMS: dict[str, Callable[..., Any]] = {"linear-eq19": linear_example}


def register_system(name: str, factory: Callable[..., Any]) -> None:
    """Register a system factory; its keyword arguments come from ``SystemSpec.params``."""
    _SYSTEMS[name] = factory


def default_dt_grid(lo: float = 1e-7, hi: float = 1e-2, per_decade: int = 2) -> list[float]:
    n = int(round(np.log10(hi / lo) * per_decade)) + 1
    return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), n)]


@dataclass
class SystemSpec:
    name: str = "linear-eq19"
    params: dict = field(default_factory=lambda: {"a": 3.0, "epsilon": 1e-3})
    x0: list = field(default_factory=lambda: [0.0, 0.0])


@dataclass
class TrajectorySpec:
    dt: float = 1e-4
    n_steps: int = 3000
    seed: int = 0
    stride: int = 1


@dataclass
class BurstSpec:
    delta_t: float = 1e-5
    q: int = 50
    mode: str = "parallel-bursts"
    n_substeps: Optional[int] = None
    rank: Optional[int] = None  # None: the state dimension n


@dataclass
class DmapsSpec:
    sigma2: Union[float, str] = "auto"  # "auto": from detect_quadratic_break
    k: int = 10
    solver: str = "dense"


@dataclass
class ScanSpec:
    dt_grid: Optional[list] = None
    n_base: int = 10
    n_bins: int = 24
    min_count: int = 50
    knee_tol: float = 0.2
    break_tol: float = 0.3


@dataclass
class ExperimentConfig:
    system: SystemSpec = field(default_factory=SystemSpec)
    map: str = "identity"
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    burst: BurstSpec = field(default_factory=BurstSpec)
    metric: str = "mahalanobis"
    dmaps: DmapsSpec = field(default_factory=DmapsSpec)
    scans: ScanSpec = field(default_factory=ScanSpec)
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return _from_dict(cls, d, "config")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"burst.q": 100})``."""
        d = self.to_dict()
        for key, value in changes.items():
            node = d
            *path, last = key.split(".")
            for p in path:
                node = node[p]
            if last not in node:
                raise ConfigurationError(f"unknown config field {key!r}")
            node[last] = value
        return ExperimentConfig.from_dict(d)

    def validate(self) -> None:
        s = self.system
        if s.name not in _SYSTEMS:
            raise ConfigurationError(f"unknown system {s.name!r}; known: {sorted(_SYSTEMS)}")
        get_map(self.map)
        t = self.trajectory
        if not t.dt > 0 or t.n_steps < 1 or t.stride < 1 or t.seed < 0:
            raise ConfigurationError("trajectory needs dt > 0, n_steps >= 1, stride >= 1, seed >= 0")
        b = self.burst
        if not b.delta_t > 0 or b.q < 2 or b.mode not in BURST_MODES:
            raise ConfigurationError(
                f"burst needs delta_t > 0, q >= 2 and mode in {BURST_MODES}")
        if self.metric not in METRICS:
            raise ConfigurationError(f"metric must be one of {METRICS}, got {self.metric!r}")
        sig = self.dmaps.sigma2
        if sig != "auto" and not (isinstance(sig, (int, float)) and sig > 0):
            raise ConfigurationError(f"dmaps.sigma2 must be positive or 'auto', got {sig!r}")
        if self.dmaps.k < 2:
            raise ConfigurationError("dmaps.k must be >= 2")
        if self.dmaps.solver not in dm.SOLVERS:
            raise ConfigurationError(f"dmaps.solver must be one of {dm.SOLVERS}")
        g = self.scans.dt_grid
        if g is not None and (len(g) < 1 or any(v <= 0 for v in g)
                              or any(b2 <= b1 for b1, b2 in zip(g, g[1:]))):
            raise ConfigurationError("scans.dt_grid must be positive and strictly increasing")
        if self.scans.n_base < 1 or self.scans.n_bins < 3:
            raise ConfigurationError("scans need n_base >= 1 and n_bins >= 3")
        system = build_system(self)
        if len(s.x0) != system.dim:
            raise ConfigurationError(f"system.x0 must have {system.dim} entries")
        if t.dt / system.scaling.min() > 0.5:
            raise ConfigurationError(
                f"stability guard violated: dt/epsilon = {t.dt / system.scaling.min():.6g} > 0.5")


def _from_dict(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _from_dict(sub, value, f"{where}.{name}") if sub else value
    try:
        return cls(**kwargs)
    except TypeError as err:
        raise ConfigurationError(f"{where}: {err}") from None


_NESTED = {
    (ExperimentConfig, "system"): SystemSpec,
    (ExperimentConfig, "trajectory"): TrajectorySpec,
    (ExperimentConfig, "burst"): BurstSpec,
    (ExperimentConfig, "dmaps"): DmapsSpec,
    (ExperimentConfig, "scans"): ScanSpec,
}


def build_system(cfg: ExperimentConfig):
    try:
        return _SYSTEMS[cfg.system.name](**cfg.system.params)
    except TypeError as err:
        raise ConfigurationError(f"system.params: {err}") from None


@dataclass
class Data:
    system: Any
    obs_map: Any
    times: np.ndarray
    states: np.ndarray          # subsampled x, shape (N, n)
    observed: np.ndarray        # y = f(x), shape (N, d)
    indices: np.ndarray         # positions in the full trajectory
    truth: Optional[np.ndarray]  # g(y) when the map is invertible


def simulate_data(cfg: ExperimentConfig) -> Data:
    system = build_system(cfg)
    obs_map = get_map(cfg.map)
    t = cfg.trajectory
    traj = simulate(system, cfg.system.x0, t.dt, t.n_steps, t.seed)
    idx = np.arange(0, len(traj), t.stride)
    x = traj.states[idx]
    y = observe(obs_map, x)
    truth = invert(obs_map, y) if obs_map.inverse is not None else None
    return Data(system, obs_map, traj.times[idx], x, y, idx, truth)


def compute_metric(cfg: ExperimentConfig, data: Data, metric: Optional[str] = None):
    """Squared distances for the configured metric; also returns the covariances."""
    metric = metric or cfg.metric
    if metric == "euclidean":
        return geo.pairwise_euclidean(data.observed), None
    b = cfg.burst
    bcfg = BurstConfig(delta_t=b.delta_t, q=b.q, n_substeps=b.n_substeps, mode=b.mode)
    ens = sample_bursts(data.system, data.obs_map, data.states, bcfg, cfg.trajectory.seed,
                        indices=data.indices)
    covs = geo.estimate_covariances(ens)
    rank = b.rank if b.rank is not None else data.system.dim
    covs = geo.pseudoinvert_all(covs, rank=rank)
    return geo.pairwise_mahalanobis(data.observed, covs), covs


def run_dt_scan(cfg: ExperimentConfig, data: Optional[Data] = None):
    data = data or simulate_data(cfg)
    grid = cfg.scans.dt_grid or default_dt_grid()
    pick = np.linspace(0, len(data.states) - 1, cfg.scans.n_base).round().astype(int)
    scan = tuning.delta_t_scan(data.system, data.obs_map, data.states[pick], grid,
                               cfg.burst.q, cfg.trajectory.seed, n_substeps=cfg.burst.n_substeps)
    try:
        knee = tuning.detect_knee(scan, cfg.scans.knee_tol)
    except tuning.NoKneeError as err:
        log.warning("knee detection failed: %s", err)
        knee = None
    return scan, knee


@dataclass
class RunResult:
    config: ExperimentConfig
    data: Data
    sqdists: Any = None
    covs: Any = None
    embedding: Optional[dm.DmapsResult] = None
    sigma_scan: Optional[tuning.DistanceScan] = None
    sigma_break: Optional[tuning.QuadraticBreak] = None
    dt_scan: Optional[tuning.CovarianceScan] = None
    knee: Optional[tuning.Knee] = None
    summary: dict = field(default_factory=dict)


def _match_dict(m: dm.Match) -> dict:
    return {"index": m.index, "pearson": m.pearson, "spearman": m.spearman}


def summarize(res: RunResult) -> dict:
    cfg = res.config
    s: dict[str, Any] = {"seed": cfg.trajectory.seed, "metric": cfg.metric,
                         "n_points": int(len(res.data.states))}
    if res.sigma_break is not None:
        s["sigma2_star"] = res.sigma_break.sigma2
    if res.knee is not None:
        s["delta_t_star"] = res.knee.delta_t
        s["plateau_norm"] = res.knee.plateau
    if res.embedding is not None:
        emb = res.embedding
        s["sigma2"] = emb.sigma2
        s["eigenvalues"] = [float(v) for v in emb.eigenvalues]
        if res.data.truth is not None:
            matches, phi1 = {}, {}
            for i in range(res.data.truth.shape[1]):
                ref = res.data.truth[:, i]
                name = f"x{i + 1}"
                if np.ptp(ref) > 0:
                    matches[name] = _match_dict(dm.best_matching_eigenvector(emb, ref))
                    phi1[name] = float(abs(spearmanr(emb.eigenvectors[:, 1], ref)[0]))
            s["matches"] = matches
            s["phi1_spearman"] = phi1
    s["config"] = cfg.to_dict()
    return s


def run_experiment(cfg: ExperimentConfig, out=None, embed: bool = True,
                   sigma_scan: Optional[bool] = None, record_timing: bool = False) -> RunResult:
    """Run the full pipeline for one configuration.

    ``sigma_scan`` defaults to running only when ``dmaps.sigma2 == 'auto'`` or
    when an embedding is not requested.  The delta_t scan runs when
    ``scans.dt_grid`` is set.
    """
    cfg.validate()
    t0 = time.perf_counter()
    out = Path(out) if out is not None else (Path(cfg.out) if cfg.out else None)
    data = simulate_data(cfg)
    res = RunResult(cfg, data)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory(out / "trajectory.csv", data)

    if sigma_scan is None:
        sigma_scan = cfg.dmaps.sigma2 == "auto" or not embed
    if embed or sigma_scan:
        res.sqdists, res.covs = compute_metric(cfg, data)
    if sigma_scan:
        res.sigma_scan = tuning.sigma_scan(data.observed, sqdists=res.sqdists, n_bins=cfg.scans.n_bins)
        res.sigma_break = tuning.detect_quadratic_break(res.sigma_scan, cfg.scans.break_tol,
                                                        cfg.scans.min_count)
        if out is not None:
            write_sigma_scan(out / "scan_sigma.csv", res.sigma_scan)
    if cfg.scans.dt_grid is not None:
        res.dt_scan, res.knee = run_dt_scan(cfg, data)
        if out is not None:
            write_dt_scan(out / "scan_dt.csv", res.dt_scan)
    if embed:
        sigma2 = cfg.dmaps.sigma2
        if sigma2 == "auto":
            sigma2 = res.sigma_break.sigma2
        k = min(cfg.dmaps.k, len(data.states))
        res.embedding = dm.diffusion_map(res.sqdists, dm.DmapsConfig(float(sigma2), k, cfg.dmaps.solver))
        if out is not None:
            write_embedding(out / "embedding.csv", res.embedding)
    res.summary = summarize(res)
    if record_timing:
        res.summary["wall_clock_s"] = time.perf_counter() - t0
    if out is not None:
        write_json(out / "summary.json", res.summary)
    return res


def _fmt(v) -> str:
    return repr(float(v))


def write_trajectory(path, data: Data) -> None:
    n, d = data.states.shape[1], data.observed.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(d)])
        for t, x, y in zip(data.times, data.states, data.observed):
            w.writerow([_fmt(t)] + [_fmt(v) for v in x] + [_fmt(v) for v in y])


def write_embedding(path, emb: dm.DmapsResult) -> None:
    k = len(emb)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point"] + [f"phi_{j}" for j in range(k)])
        w.writerow(["lambda"] + [_fmt(v) for v in emb.eigenvalues])
        for i, row in enumerate(emb.eigenvectors):
            w.writerow([i] + [_fmt(v) for v in row])


def write_dt_scan(path, scan: tuning.CovarianceScan) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta_t", "mean_norm", "std"])
        for row in zip(scan.delta_t, scan.mean_norm, scan.std_norm):
            w.writerow([_fmt(v) for v in row])


def write_sigma_scan(path, scan: tuning.DistanceScan) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center", "mean_sqdist_M", "count"])
        for c, m, n in zip(scan.bin_center, scan.mean_sqdist, scan.count):
            w.writerow([_fmt(c), _fmt(m), int(n)])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- figure presets -------------------------------------------------------

LINEAR = ExperimentConfig()
HALFMOON = ExperimentConfig(map="halfmoon", burst=BurstSpec(delta_t=1e-7))


def _cfg(base: ExperimentConfig, **changes) -> ExperimentConfig:
    return base.replace(**changes) if changes else ExperimentConfig.from_dict(base.to_dict())


def _preset_fig3(seed):
    return {"runs": {"": _cfg(LINEAR, **{"trajectory.seed": seed})}, "embed": False,
            "sigma_scan": False}


def _preset_fig7(seed):
    return {"runs": {"": _cfg(HALFMOON, **{"trajectory.seed": seed})}, "embed": False,
            "sigma_scan": False}


def _preset_fig5(seed):
    cfg = _cfg(LINEAR, **{"trajectory.seed": seed, "scans.dt_grid": default_dt_grid(1e-7, 1e-2)})
    return {"runs": {"": cfg}, "embed": False, "sigma_scan": False}


def _preset_fig8(seed):
    cfg = _cfg(HALFMOON, **{"trajectory.seed": seed, "scans.dt_grid": default_dt_grid(1e-8, 1e-2)})
    return {"runs": {"": cfg}, "embed": False, "sigma_scan": True}


def _preset_fig6(seed):
    runs = {}
    for dt in (1e-6, 1e-5, 1e-3):
        runs[f"dt_{dt:.0e}"] = _cfg(LINEAR, **{"trajectory.seed": seed, "burst.delta_t": dt,
                                               "dmaps.sigma2": 2e-2, "dmaps.k": 30})
    return {"runs": runs, "embed": True, "sigma_scan": False}


def _preset_fig9(seed):
    runs = {}
    for name, dt, s2 in (("success", 1e-7, 1e-2), ("large_sigma", 1e-7, 1e1),
                         ("large_dt", 1e-3, 1e-2)):
        runs[name] = _cfg(HALFMOON, **{"trajectory.seed": seed, "burst.delta_t": dt,
                                       "dmaps.sigma2": s2})
    return {"runs": runs, "embed": True, "sigma_scan": False}


def _preset_fig4(seed):
    cfg = _cfg(LINEAR, **{"trajectory.seed": seed})
    return {"runs": {"mahalanobis": cfg, "euclidean": cfg.replace(metric="euclidean")},
            "embed": True, "sigma_scan": None, "shared_sigma": ("euclidean", "mahalanobis")}


PRESETS = {
    "fig3": ("trajectory of the linear example", _preset_fig3),
    "fig4": ("Euclidean vs Mahalanobis embeddings of the linear example", _preset_fig4),
    "fig5": ("covariance norm vs burst horizon, linear example", _preset_fig5),
    "fig6": ("fast-variable eigenvector index for three burst horizons", _preset_fig6),
    "fig7": ("trajectory under the half-moon observation", _preset_fig7),
    "fig8": ("distance and covariance scans, half-moon example", _preset_fig8),
    "fig9": ("half-moon embeddings in three parameter regimes", _preset_fig9),
}


def preset_configs(name: str, seed: int = 0) -> dict:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name][1](seed)


def reproduce(name: str, out=None, seed: int = 0, record_timing: bool = False,
              overrides: Optional[dict] = None) -> dict[str, RunResult]:
    """Run every configuration of a figure preset.

    Multi-run presets write one subdirectory per run and a combined
    ``summary.json`` at the top level.
    """
    spec = preset_configs(name, seed)
    runs = spec["runs"]
    if overrides:
        runs = {k: c.replace(**overrides) for k, c in runs.items()}
    out = Path(out) if out is not None else None
    shared = spec.get("shared_sigma")
    results: dict[str, RunResult] = {}
    order = list(runs)
    if shared:
        order = [shared[1]] + [r for r in order if r != shared[1]]
    t0 = time.perf_counter()
    for key in order:
        cfg = runs[key]
        if shared and key == shared[0] and cfg.dmaps.sigma2 == "auto":
            # same kernel scale for both metrics
            cfg = cfg.replace(**{"dmaps.sigma2": results[shared[1]].embedding.sigma2})
        run_out = (out / key if key else out) if out is not None else None
        log.info("%s: running %s", name, key or "main")
        results[key] = run_experiment(cfg, run_out, embed=spec["embed"],
                                      sigma_scan=spec["sigma_scan"], record_timing=record_timing)
    if out is not None and len(runs) > 1:
        top = {"preset": name, "seed": seed,
               "runs": {k: _strip_config(r.summary) for k, r in results.items()},
               "configs": {k: r.config.to_dict() for k, r in results.items()}}
        if record_timing:
            top["wall_clock_s"] = time.perf_counter() - t0
        write_json(out / "summary.json", top)
    return results


def _strip_config(summary: dict) -> dict:
    return {k: v for k, v in summary.items() if k != "config"}
