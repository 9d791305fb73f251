"""Deterministic inversion: recover the noise trajectory of a given image.

Each inversion step solves for the latent one level up whose denoising step
lands exactly on the current latent, using fixed-point refinement of the
noise prediction (the plain approximation evaluates the predictor at the
wrong endpoint; a few iterations close that gap).
"""

from __future__ import annotations

import numpy as np

from .base import BackendError, CapabilityError, DenoiserBackend, LatentImage


def ddim_invert(
    image: np.ndarray,
    conditioning,
    backend: DenoiserBackend,
    steps: int,
    *,
    guidance_scale: float | None = None,
    refine_iters: int = 60,
    refine_tol: float = 1e-11,
) -> list[LatentImage]:
    """Trajectory [x_0, x_1, ..., x_steps]; re-denoising it reproduces image."""
    sch = backend.scheduler
    if not getattr(sch, "deterministic", False):
        raise BackendError("inversion requires a deterministic scheduler")
    if steps < 0 or steps > sch.num_steps:
        raise BackendError(f"steps must be in [0, {sch.num_steps}]")
    x = backend.encode_image(image)
    trajectory = [LatentImage(x, 0)]
    for level in range(steps):
        up = level + 1
        eps = backend.predict_noise(x, conditioning, up, guidance_scale=guidance_scale)
        y = _solve_up(sch, x, eps, level)
        for _ in range(refine_iters):
            eps = backend.predict_noise(y, conditioning, up, guidance_scale=guidance_scale)
            y_next = _solve_up(sch, x, eps, level)
            delta = float(np.max(np.abs(y_next - y)))
            y = y_next
            if delta < refine_tol:
                break
        trajectory.append(LatentImage(y, up))
        x = y
    return trajectory


def _solve_up(sch, x_low: np.ndarray, eps: np.ndarray, level: int) -> np.ndarray:
    """Latent at level+1 whose step with this eps lands on x_low at level."""
    a_lo, b_lo = sch.signal[level], sch.noise[level]
    a_hi, b_hi = sch.signal[level + 1], sch.noise[level + 1]
    x0 = (x_low - b_lo * eps) / a_lo
    return a_hi * x0 + b_hi * eps


def redenoise(
    trajectory_top: LatentImage,
    conditioning,
    backend: DenoiserBackend,
    *,
    guidance_scale: float | None = None,
) -> np.ndarray:
    """Plain denoising from an inverted latent back to level 0."""
    x = trajectory_top.values
    for level in range(trajectory_top.level, 0, -1):
        eps = backend.predict_noise(x, conditioning, level, guidance_scale=guidance_scale)
        x = backend.scheduler.step(x, eps, level)
    return x


def null_text_optimize(image, prompt, backend: DenoiserBackend, steps: int):
    """Per-step unconditional embeddings for guided reconstruction.

    Only backends with optimizable embeddings support this; the synthetic
    backend does not.
    """
    if not backend.capabilities.null_text:
        raise CapabilityError("null-text requires optimizable embeddings")
    return backend.null_text_embeddings(image, prompt, steps)
