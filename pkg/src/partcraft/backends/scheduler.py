"""Deterministic noise schedule with an exact step/invert_step pair.

Levels run from ``num_steps`` (pure noise) down to 0 (clean). A latent at
level L decomposes as x = a_L * x0 + b_L * eps with a = sqrt(alpha_bar),
b = sqrt(1 - alpha_bar); stepping re-projects the same (x0, eps) estimate at
the neighbouring level, so step followed by invert_step with the same eps is
algebraically exact.
"""

from __future__ import annotations

import numpy as np


class SchedulerError(ValueError):
    pass


class DeterministicScheduler:
    """Cosine-profile alpha_bar, clamped away from 0 and 1 at the endpoints."""

    deterministic = True

    def __init__(self, num_steps: int):
        if num_steps < 1:
            raise SchedulerError("num_steps must be >= 1")
        self.num_steps = num_steps
        levels = np.arange(num_steps + 1)
        alpha_bar = np.cos(0.5 * np.pi * levels / num_steps) ** 2
        alpha_bar = np.clip(alpha_bar, 1e-4, 1.0 - 1e-4)
        self.signal = np.sqrt(alpha_bar)  # a_L
        self.noise = np.sqrt(1.0 - alpha_bar)  # b_L

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= self.num_steps:
            raise SchedulerError(f"level {level} outside [0, {self.num_steps}]")

    def estimate_clean(self, x: np.ndarray, eps: np.ndarray, level: int) -> np.ndarray:
        """x0 implied by the noise prediction at this level."""
        self._check_level(level)
        return (x - self.noise[level] * eps) / self.signal[level]

    def project(self, x0: np.ndarray, eps: np.ndarray, level: int) -> np.ndarray:
        """Latent at ``level`` carrying the given clean image and noise."""
        self._check_level(level)
        return self.signal[level] * x0 + self.noise[level] * eps

    def step(self, x: np.ndarray, eps: np.ndarray, level: int) -> np.ndarray:
        """One denoising step: level -> level - 1."""
        if level < 1:
            raise SchedulerError("cannot step below level 0")
        x0 = self.estimate_clean(x, eps, level)
        return self.project(x0, eps, level - 1)

    def invert_step(self, x: np.ndarray, eps: np.ndarray, level: int) -> np.ndarray:
        """One inversion step: level -> level + 1 (exact inverse of step for
        the same eps)."""
        self._check_level(level)
        if level >= self.num_steps:
            raise SchedulerError(f"cannot invert above level {self.num_steps}")
        x0 = self.estimate_clean(x, eps, level)
        return self.project(x0, eps, level + 1)
