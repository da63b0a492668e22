"""Latency model: per-frame synthesis time as a function of the config.

The model is linear in the work term rays * N * cost(N_m, N_c), where
cost is the MLP's multiply count per point evaluation. Calibration fits
(a, b) by least squares over measured configurations on the host machine.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


def mlp_point_cost(enc_width: int, n_m: int, n_c: int) -> int:
    """Multiplies per MLP point evaluation: input, hidden and output layers."""
    return enc_width * n_c + (n_m - 1) * n_c * n_c + 4 * n_c


def work_units(rays: int, n_spheres: int, n_m: int, n_c: int, enc_width: int) -> float:
    return float(rays) * n_spheres * mlp_point_cost(enc_width, n_m, n_c)


@dataclass
class LatencyModel:
    a: float  # ms per work unit
    b: float  # fixed overhead ms
    r2: float = 0.0
    enc_width: int = 63
    samples: list[tuple[float, float]] = dc_field(default_factory=list)

    def predict_ms(self, rays: int, n_spheres: int, n_m: int, n_c: int) -> float:
        w = work_units(rays, n_spheres, n_m, n_c, self.enc_width)
        return max(self.a * w + self.b, self.b)

    def monotone_in_each_argument(self) -> bool:
        return self.a >= 0.0


def fit_latency(work: np.ndarray, measured_ms: np.ndarray,
                enc_width: int) -> LatencyModel:
    """Least-squares line through (work, ms); slope clamped non-negative."""
    work = np.asarray(work, dtype=np.float64)
    measured_ms = np.asarray(measured_ms, dtype=np.float64)
    if len(np.unique(work)) < 4:
        raise ConfigError("need at least 4 distinct configurations to calibrate")
    A = np.stack([work, np.ones_like(work)], axis=1)
    (a, b), *_ = np.linalg.lstsq(A, measured_ms, rcond=None)
    if a < 0:
        log.warning("fitted negative slope %.3g; clamping to 0", a)
        a = 0.0
        b = float(measured_ms.mean())
    pred = a * work + b
    ss_res = float(np.sum((measured_ms - pred) ** 2))
    ss_tot = float(np.sum((measured_ms - measured_ms.mean()) ** 2))
    if ss_tot == 0.0:
        log.warning("all configurations timed identically; slope is unidentified")
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return LatencyModel(a=float(a), b=float(b), r2=r2, enc_width=enc_width,
                        samples=list(zip(work.tolist(), measured_ms.tolist())))


def calibrate_latency(
    bench: Callable[[int, int, int, int], float],
    configs: list[tuple[int, int, int]],
    rays: int,
    enc_width: int = 63,
    repeats: int = 3,
) -> LatencyModel:
    """Measure each (N, N_m, N_c) with the benchmark and fit the model.

    ``bench(rays, n_spheres, n_m, n_c)`` returns seconds per frame; the
    median of ``repeats`` runs (after one warmup) goes into the fit.
    """
    if len(set(configs)) < 4:
        raise ConfigError("need at least 4 distinct configurations to calibrate")
    work, ms = [], []
    for n, n_m, n_c in configs:
        bench(rays, n, n_m, n_c)  # warm caches
        times = [bench(rays, n, n_m, n_c) for _ in range(repeats)]
        ms.append(float(np.median(times)) * 1e3)
        work.append(work_units(rays, n, n_m, n_c, enc_width))
    return fit_latency(np.asarray(work), np.asarray(ms), enc_width)


def make_march_bench(r_near: float = 1.0, r_far: float = 6.0,
                     bands_per_coord: int = 10, seed: int = 0):
    """Benchmark closure: time marching random rays through a random field."""
    from .encoding import EncodingConfig
    from .field import NeuralField
    from .mlp import MlpConfig
    from .raymarch import RayBatch, march
    from .sphgeom import ConcentricGrid

    rng = np.random.default_rng(seed)
    cache: dict[tuple[int, int, int], NeuralField] = {}

    def bench(rays: int, n_spheres: int, n_m: int, n_c: int) -> float:
        key = (n_spheres, n_m, n_c)
        if key not in cache:
            cache[key] = NeuralField.create(
                ConcentricGrid.uniform(n_spheres, r_near, r_far),
                encoding=EncodingConfig(bands_per_coord=bands_per_coord),
                mlp_cfg=MlpConfig(n_m, n_c),
                seed=seed,
            )
        field = cache[key]
        origins = rng.uniform(-0.1, 0.1, size=(rays, 3))
        dirs = rng.normal(size=(rays, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        batch = RayBatch(origins, dirs, np.zeros((rays, 2), dtype=np.intp))
        t0 = time.perf_counter()
        march(field, batch)
        return time.perf_counter() - t0

    return bench
