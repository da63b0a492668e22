"""From-scratch training of a neural field on reference renders.

The loss is the mean squared error between composited ray colors and the
reference pixel colors; gradients flow through the over-compositing
weights into the MLP. Everything is deterministic given the schedule seed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import mlp, model_io, raymarch
from .errors import ConfigError
from .field import NeuralField

log = logging.getLogger(__name__)


@dataclass
class RayPool:
    """Flattened training rays with their reference colors (linear RGB)."""

    origins: NDArray[np.float64]
    directions: NDArray[np.float64]
    targets: NDArray[np.float32]
    fov_deg: float
    layer_tag: str = "fovea"

    def __len__(self) -> int:
        return self.origins.shape[0]


@dataclass
class TrainSchedule:
    epochs: int = 20
    learning_rate: float = 5e-4
    batch_rays: int = 4096
    seed: int = 0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    checkpoint_dir: str | None = None
    time_budget_s: float | None = None
    lr_warmup_steps: int = 0


@dataclass
class TrainResult:
    field: NeuralField
    loss_curve: list[float] = dc_field(default_factory=list)
    steps: int = 0
    wall_time_s: float = 0.0


def loss_and_gradients(
    field: NeuralField,
    origins: NDArray[np.float64],
    directions: NDArray[np.float64],
    targets: NDArray,
    background: NDArray = raymarch.BLACK,
) -> tuple[float, mlp.Params]:
    """MSE over composited RGB plus gradients for every weight and bias.

    Runs at the field's parameter dtype; cast the field to float64 for
    finite-difference comparisons.
    """
    if origins.shape[0] == 0:
        raise ValueError("empty ray batch")
    targets = np.asarray(targets)
    if targets.min() < 0.0 or targets.max() > 1.0:
        raise ValueError("targets must lie in [0, 1]")
    dtype = field.dtype
    points, t, valid = raymarch.grid_intersections(
        field.grid, origins, directions
    )
    B, n = t.shape
    safe_points = np.where(valid[..., None], points, 1.0)
    from .sphgeom import cartesian_to_spherical_batch

    _, theta, phi = cartesian_to_spherical_batch(safe_points.reshape(-1, 3))
    radius = np.broadcast_to(field.grid.radii_array, (B, n)).ravel()
    feats = field.encode_coords(radius, theta, phi).astype(dtype)
    out, cache = mlp.forward(field.params, feats, want_cache=True)
    field.eval_count += feats.shape[0]
    out = out.reshape(B, n, 4)
    colors = out[..., :3]
    alphas = out[..., 3]
    bg = np.asarray(background, dtype=dtype)
    composited, _ = raymarch.composite_over(colors, alphas, valid, bg)
    residual = composited - targets.astype(dtype)
    loss = float(np.mean(residual**2))
    d_out = (2.0 / residual.size) * residual
    d_colors, d_alphas = raymarch.composite_backward(colors, alphas, valid, bg, d_out)
    d_net = np.concatenate([d_colors, d_alphas[..., None]], axis=-1).reshape(-1, 4)
    grads = mlp.backward(field.params, cache, d_net.astype(dtype))
    return loss, grads


def train(
    field: NeuralField,
    pool: RayPool,
    schedule: TrainSchedule,
    expected_fov_deg: float | None = None,
) -> TrainResult:
    """Adam-train the field on the ray pool; returns the loss curve per epoch.

    The loss curve is checked for non-increase over a 10-epoch moving
    window; violations only warn. A checkpoint is written per epoch when a
    checkpoint directory is configured.
    """
    if expected_fov_deg is not None and abs(pool.fov_deg - expected_fov_deg) > 1e-6:
        raise ConfigError(
            f"dataset FoV {pool.fov_deg} does not match the layer FoV {expected_fov_deg}"
        )
    if pool.layer_tag != field.layer_tag:
        raise ConfigError(
            f"dataset layer {pool.layer_tag!r} does not match field layer {field.layer_tag!r}"
        )
    rng = np.random.default_rng(schedule.seed)
    state = mlp.AdamState.for_params(field.params)
    bg = np.asarray(schedule.background, dtype=np.float64)
    curve: list[float] = []
    ckpt_dir = Path(schedule.checkpoint_dir) if schedule.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    steps = 0
    stopped = False
    for epoch in range(schedule.epochs):
        order = rng.permutation(len(pool))
        losses = []
        for lo in range(0, len(pool), schedule.batch_rays):
            idx = order[lo : lo + schedule.batch_rays]
            loss, grads = loss_and_gradients(
                field, pool.origins[idx], pool.directions[idx], pool.targets[idx], bg
            )
            lr = schedule.learning_rate
            if schedule.lr_warmup_steps and steps < schedule.lr_warmup_steps:
                lr *= (steps + 1) / schedule.lr_warmup_steps
            mlp.adam_step(field.params, grads, state, lr)
            losses.append(loss)
            steps += 1
            if (
                schedule.time_budget_s is not None
                and time.perf_counter() - t0 > schedule.time_budget_s
            ):
                stopped = True
                break
        curve.append(float(np.mean(losses)))
        log.info("epoch %d loss %.6f", epoch, curve[-1])
        if ckpt_dir:
            model_io.save_field_file(field, ckpt_dir / f"epoch_{epoch:04d}.fnrf")
        if len(curve) >= 20:
            recent = np.mean(curve[-10:])
            prior = np.mean(curve[-20:-10])
            if recent > prior:
                log.warning(
                    "loss not decreasing over the last 10 epochs (%.6f > %.6f)",
                    recent, prior,
                )
        if stopped:
            log.warning("time budget reached after %d steps", steps)
            break
    return TrainResult(
        field=field, loss_curve=curve, steps=steps,
        wall_time_s=time.perf_counter() - t0,
    )
