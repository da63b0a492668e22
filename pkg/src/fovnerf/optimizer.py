"""Joint latency-quality configuration search.

The objective charges each candidate (N, N_m, N_c) for its color error
against the largest reference network, scaled by the pixel reprojection
drift a viewer accumulates while the frame is ``l(config)`` milliseconds
stale along a head trajectory. An exhaustive grid search under the
latency budget is exact by construction.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DegenerateInputError
from .field import NeuralField
from .latency import LatencyModel
from .raymarch import PinholeCamera
from .scenes import ProceduralScene, sample_surface_points, unoccluded
from .sphgeom import ConcentricGrid, nearest_sphere_index_batch, ray_sphere_intersect_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class CandidateConfig:
    n_spheres: int
    n_layers: int
    n_channels: int

    def key(self) -> str:
        return f"N{self.n_spheres}_M{self.n_layers}_C{self.n_channels}"


REFERENCE_CONFIG = CandidateConfig(n_spheres=64, n_layers=8, n_channels=256)


@dataclass
class SearchSpace:
    n_options: list[int]
    nm_options: list[int]
    nc_options: list[int]
    reference: CandidateConfig = REFERENCE_CONFIG
    budget_ms: float = 24.0

    def __post_init__(self) -> None:
        if not (self.n_options and self.nm_options and self.nc_options):
            raise ConfigError("search space must have candidates on every axis")
        if (
            max(self.n_options) >= self.reference.n_spheres
            or max(self.nm_options) >= self.reference.n_layers
            or max(self.nc_options) >= self.reference.n_channels
        ):
            raise ConfigError(
                "the reference config must strictly dominate every candidate"
            )

    def configs(self) -> list[CandidateConfig]:
        return [
            CandidateConfig(n, m, c)
            for n, m, c in itertools.product(
                self.n_options, self.nm_options, self.nc_options
            )
        ]


@dataclass
class TrajectorySpec:
    """Discrete head poses on a fixed time step (default 1 ms)."""

    positions: NDArray[np.float64]  # (T, 3)
    rotations: NDArray[np.float64]  # (T, 3, 3)
    step_ms: float = 1.0

    def __post_init__(self) -> None:
        if self.positions.shape[0] != self.rotations.shape[0]:
            raise ConfigError("positions and rotations must have equal length")
        if self.positions.shape[0] >= 2:
            v = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
            if v.max() > 0.01 * self.step_ms:  # 10 m/s sanity bound
                raise ConfigError("trajectory positions are discontinuous")

    def __len__(self) -> int:
        return self.positions.shape[0]


def _yaw(rad: float) -> NDArray:
    c, s = np.cos(rad), np.sin(rad)
    return np.asarray([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def sinusoidal_trajectory(
    duration_s: float = 1.0,
    step_ms: float = 1.0,
    yaw_amplitude_deg: float = 20.0,
    yaw_rate_deg_s: float = 30.0,
    lateral_speed_m_s: float = 0.1,
    lateral_amplitude_m: float = 0.1,
) -> TrajectorySpec:
    """Sinusoidal yaw sweep plus lateral sway, both velocity-bounded."""
    t = np.arange(0.0, duration_s, step_ms / 1e3)
    omega_yaw = yaw_rate_deg_s / yaw_amplitude_deg  # rad/s of the phase
    yaw_deg = yaw_amplitude_deg * np.sin(omega_yaw * t)
    omega_lat = lateral_speed_m_s / lateral_amplitude_m
    x = lateral_amplitude_m * np.sin(omega_lat * t)
    positions = np.stack([x, np.zeros_like(t), np.zeros_like(t)], axis=1)
    rotations = np.stack([_yaw(np.radians(d)) for d in yaw_deg])
    return TrajectorySpec(positions=positions, rotations=rotations, step_ms=step_ms)


def static_trajectory(duration_s: float = 0.2, step_ms: float = 1.0) -> TrajectorySpec:
    t = np.arange(0.0, duration_s, step_ms / 1e3)
    return TrajectorySpec(
        positions=np.zeros((len(t), 3)),
        rotations=np.broadcast_to(np.eye(3), (len(t), 3, 3)).copy(),
        step_ms=step_ms,
    )


def stratified_sphere_probes(
    grid: ConcentricGrid, n_total: int = 4096, seed: int = 0
) -> tuple[NDArray, NDArray, NDArray]:
    """Deterministic probe points stratified across the grid spheres.

    Directions follow a jittered Fibonacci spiral per sphere; returns
    (radius, theta, phi) arrays of length >= n_total.
    """
    rng = np.random.default_rng(seed)
    per = int(np.ceil(n_total / grid.n_spheres))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(per)
    rs, ts, ps = [], [], []
    for r in grid.radii:
        z = 1.0 - (2.0 * i + 1.0) / per
        theta = np.arccos(np.clip(z, -1, 1))
        phi = (i * golden + rng.uniform(0, 2 * np.pi)) % (2 * np.pi) - np.pi
        rs.append(np.full(per, r))
        ts.append(theta)
        ps.append(phi)
    return np.concatenate(rs), np.concatenate(ts), np.concatenate(ps)


def color_discrepancy(
    candidate: NeuralField,
    reference: NeuralField,
    probes: tuple[NDArray, NDArray, NDArray],
) -> float:
    """Mean L1 distance over the four output channels at the probe points."""
    r, t, p = probes
    out_c = candidate.forward(r, t, p)
    out_r = reference.forward(r, t, p)
    return float(np.mean(np.abs(out_c - out_r)))


def reprojection_error_px(
    grid: ConcentricGrid,
    scene: ProceduralScene,
    trajectory: TrajectorySpec,
    delay_steps: int,
    camera_proto: PinholeCamera,
    n_points: int = 64,
    seed: int = 0,
) -> float:
    """Mean pixel drift between the live projection of visible scene points
    and the delayed-pose projection of their delayed-ray sphere images,
    summed over trajectory steps."""
    if delay_steps >= len(trajectory):
        raise ConfigError("latency exceeds the trajectory length")
    rng = np.random.default_rng(seed)
    total = 0.0
    for t_idx in range(delay_steps, len(trajectory)):
        x_t = trajectory.positions[t_idx]
        r_t = trajectory.rotations[t_idx]
        x_d = trajectory.positions[t_idx - delay_steps]
        r_d = trajectory.rotations[t_idx - delay_steps]
        q = sample_surface_points(scene, n_points, rng)
        q = q[unoccluded(scene, x_t, q)]
        if q.shape[0] == 0:
            continue
        cam_t = PinholeCamera(x_t, r_t, camera_proto.fov_deg,
                              camera_proto.width, camera_proto.height)
        cam_d = PinholeCamera(x_d, r_d, camera_proto.fov_deg,
                              camera_proto.width, camera_proto.height)
        ks = nearest_sphere_index_batch(grid, np.linalg.norm(q, axis=1))
        dirs = q - x_d
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        q_sphere = np.full_like(q, np.nan)
        ok = np.zeros(q.shape[0], dtype=bool)
        for k in np.unique(ks):
            sel = ks == k
            pts, _, valid = ray_sphere_intersect_batch(
                grid.radii[k], np.broadcast_to(x_d, q[sel].shape), dirs[sel]
            )
            q_sphere[sel] = pts
            ok[sel] = valid
        pix_live, front_live = cam_t.project(q)
        pix_stale, front_stale = cam_d.project(q_sphere)
        use = ok & front_live & front_stale
        if not use.any():
            continue
        total += float(np.linalg.norm(pix_live[use] - pix_stale[use], axis=1).mean())
    return total


def objective_e(
    config: CandidateConfig,
    trajectory: TrajectorySpec,
    latency_ms: float,
    discrepancy: float,
    scene: ProceduralScene,
    grid: ConcentricGrid,
    camera_proto: PinholeCamera,
    n_points: int = 64,
    seed: int = 0,
) -> float:
    """Spatial-temporal objective: discrepancy x summed reprojection drift.

    Latency rounds down to the trajectory step (conservative would round
    up the error; rounding down keeps the zero-latency case exactly zero).
    """
    delay_steps = int(latency_ms // trajectory.step_ms)
    drift = reprojection_error_px(
        grid, scene, trajectory, delay_steps, camera_proto, n_points, seed
    )
    return discrepancy * drift


@dataclass
class SearchRow:
    config: CandidateConfig
    objective: float
    latency_ms: float
    feasible: bool


@dataclass
class SearchResult:
    chosen: CandidateConfig | None
    rows: list[SearchRow]
    budget_ms: float
    fastest: CandidateConfig | None = None

    @property
    def feasible(self) -> bool:
        return self.chosen is not None


def search(
    space: SearchSpace,
    objective_fn: Callable[[CandidateConfig], float],
    latency_fn: Callable[[CandidateConfig], float],
) -> SearchResult:
    """Exhaustive argmin of the objective over budget-feasible configs.

    Deterministic and enumeration-order independent: ties break by the
    config tuple ordering. When nothing fits the budget the result is an
    explicit infeasibility listing the fastest config.
    """
    rows = []
    for cfg in space.configs():
        lat = latency_fn(cfg)
        rows.append(SearchRow(
            config=cfg, objective=objective_fn(cfg), latency_ms=lat,
            feasible=lat < space.budget_ms,
        ))
    rows.sort(key=lambda r: r.config)
    feasible = [r for r in rows if r.feasible]
    fastest = min(rows, key=lambda r: (r.latency_ms, r.config)).config
    if not feasible:
        log.warning("no configuration fits the %.1f ms budget", space.budget_ms)
        return SearchResult(chosen=None, rows=rows, budget_ms=space.budget_ms,
                            fastest=fastest)
    best = min(feasible, key=lambda r: (r.objective, r.config))
    return SearchResult(chosen=best.config, rows=rows, budget_ms=space.budget_ms,
                        fastest=fastest)


def write_results_csv(result: SearchResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_spheres", "n_layers", "n_channels",
                         "objective", "latency_ms", "feasible", "chosen"])
        for row in result.rows:
            writer.writerow([
                row.config.n_spheres, row.config.n_layers, row.config.n_channels,
                f"{row.objective:.9g}", f"{row.latency_ms:.6g}",
                int(row.feasible), int(row.config == result.chosen),
            ])


def plot_heatmaps(result: SearchResult, out_prefix: Path) -> list[Path]:
    """Objective and latency heatmaps on (N_c x N_m, N) axes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ns = sorted({r.config.n_spheres for r in result.rows})
    mcs = sorted({(r.config.n_layers, r.config.n_channels) for r in result.rows})
    paths = []
    for attr, label in (("objective", "objective"), ("latency_ms", "latency_ms")):
        m = np.full((len(ns), len(mcs)), np.nan)
        for row in result.rows:
            i = ns.index(row.config.n_spheres)
            j = mcs.index((row.config.n_layers, row.config.n_channels))
            m[i, j] = getattr(row, attr)
        fig, ax = plt.subplots(figsize=(1.2 + 0.6 * len(mcs), 1.2 + 0.5 * len(ns)))
        im = ax.imshow(m, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(mcs)),
                      [f"{m_}x{c}" for m_, c in mcs], rotation=45, ha="right")
        ax.set_yticks(range(len(ns)), [str(n) for n in ns])
        ax.set_xlabel("N_c x N_m")
        ax.set_ylabel("N")
        ax.set_title(label)
        fig.colorbar(im, ax=ax)
        out = Path(f"{out_prefix}_{label}.png")
        fig.tight_layout()
        fig.savefig(out, dpi=110)
        plt.close(fig)
        paths.append(out)
    return paths
