"""Objective quality metrics and pipeline timing instrumentation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from .compositor import DisplaySpec
from .errors import ConfigError

PSNR_INF = float("inf")


def _check_pair(a: NDArray, b: NDArray) -> tuple[NDArray, NDArray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: NDArray, b: NDArray, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * np.log10(data_range**2 / mse)


def _ssim_map_single(a: NDArray, b: NDArray, data_range: float,
                     sigma: float = 1.5, truncate: float = 3.5,
                     k1: float = 0.01, k2: float = 0.03) -> NDArray:
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    blur = lambda x: ndimage.gaussian_filter(x, sigma, truncate=truncate)  # noqa: E731
    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a: NDArray, b: NDArray, data_range: float = 1.0,
         full: bool = False):
    """Structural similarity (Gaussian 11x11 window, sigma 1.5).

    Matches the standard formulation with population statistics; the mean
    excludes the filter-radius border. Multichannel inputs average the
    per-channel scores.
    """
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    sigma, truncate = 1.5, 3.5
    pad = int(truncate * sigma + 0.5)
    maps = np.stack(
        [
            _ssim_map_single(a[..., c], b[..., c], data_range, sigma, truncate,
                             k1=0.01, k2=0.03)
            for c in range(a.shape[-1])
        ],
        axis=-1,
    )
    if a.shape[0] <= 2 * pad or a.shape[1] <= 2 * pad:
        raise ConfigError("image too small for the SSIM window")
    score = float(np.mean(maps[pad:-pad, pad:-pad]))
    if full:
        return score, maps.mean(axis=-1)
    return score


@dataclass
class EccentricityBandReport:
    """Quality scored on contiguous eccentricity annuli around the gaze."""

    band_edges_deg: list[float]
    psnr_db: list[float]  # nan where the band has no pixels
    ssim_scores: list[float]
    pixel_counts: list[int]

    def bands(self) -> list[tuple[float, float]]:
        return list(zip(self.band_edges_deg[:-1], self.band_edges_deg[1:]))


def banded_quality(
    render: NDArray,
    reference: NDArray,
    display: DisplaySpec,
    gaze_px: tuple[float, float],
    band_deg: float = 5.0,
    max_deg: float = 110.0,
) -> EccentricityBandReport:
    """Score 5-degree eccentricity bands of a frame against a reference."""
    render, reference = _check_pair(render, reference)
    h, w = render.shape[:2]
    if not (0 <= gaze_px[0] < w and 0 <= gaze_px[1] < h):
        raise ConfigError("gaze must lie inside the frame")
    # pixel directions in the display camera frame
    cam = display.camera(np.zeros(3), np.eye(3))
    dirs = cam.pixel_directions()
    gu = np.clip(gaze_px[0], 0, w - 1)
    gv = np.clip(gaze_px[1], 0, h - 1)
    gdir = dirs[int(round(gv)), int(round(gu))]
    ecc = np.degrees(np.arccos(np.clip(dirs @ gdir, -1.0, 1.0)))

    _, ssim_map = ssim(render, reference, full=True)
    sq_err = np.mean((render - reference) ** 2, axis=-1)

    edges = list(np.arange(0.0, max_deg + band_deg / 2, band_deg))
    psnrs, ssims, counts = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (ecc >= lo) & (ecc < hi)
        n = int(mask.sum())
        counts.append(n)
        if n == 0:
            psnrs.append(float("nan"))
            ssims.append(float("nan"))
            continue
        mse = float(sq_err[mask].mean())
        psnrs.append(PSNR_INF if mse == 0 else 10 * np.log10(1.0 / mse))
        ssims.append(float(ssim_map[mask].mean()))
    return EccentricityBandReport(
        band_edges_deg=edges, psnr_db=psnrs, ssim_scores=ssims, pixel_counts=counts
    )


@dataclass
class TimingBreakdown:
    """Per-stage means (ms) over measured frames, Table-style."""

    foveal_infer_per_eye_ms: float
    periphery_infer_per_eye_ms: float
    blend_and_contrast_ms: float
    total_ms: float
    mode: str
    n_frames: int = 0
    p95_total_ms: float = 0.0

    def serial_stage_sum_ms(self) -> float:
        """2x fovea + periphery passes + blend, per the serial pipeline."""
        periphery_passes = 2 if self.mode == "naive-stereo" else 1
        return (
            2 * self.foveal_infer_per_eye_ms
            + periphery_passes * self.periphery_infer_per_eye_ms
            + self.blend_and_contrast_ms
        )


def time_pipeline(engine, n_frames: int, mode: str, warmup: int = 10) -> TimingBreakdown:
    """Render n_frames after warmup and aggregate the per-stage timings."""
    if n_frames < 20:
        raise ConfigError("need at least 20 frames for stable timing")
    rig = engine.default_rig()
    records = []
    for i in range(warmup + n_frames):
        frame = engine.render_frame(rig, mode=mode)
        if i >= warmup:
            records.append(frame.timings_ms)
    def mean(key: str) -> float:
        return float(np.mean([r[key] for r in records]))

    totals = np.asarray([r["total"] for r in records])
    return TimingBreakdown(
        foveal_infer_per_eye_ms=mean("fovea_per_eye"),
        periphery_infer_per_eye_ms=mean("periphery_per_eye"),
        blend_and_contrast_ms=mean("blend_contrast"),
        total_ms=float(totals.mean()),
        mode=mode,
        n_frames=n_frames,
        p95_total_ms=float(np.percentile(totals, 95)),
    )
