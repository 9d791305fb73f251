"""Denoiser backend contract shared by the synthetic test backend and the
latent-diffusion adapter."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..attention import AttentionCapture
from .scheduler import DeterministicScheduler


class BackendError(RuntimeError):
    pass


class CapabilityError(BackendError):
    """An operation was requested that this backend does not advertise."""


@dataclass(frozen=True)
class LatentImage:
    """A latent (or pixel) grid tagged with its schedule level."""

    values: np.ndarray
    level: int

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"latent must be (C, H, W), got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("latent contains non-finite values")
        if self.level < 0:
            raise ValueError("level must be >= 0")
        object.__setattr__(self, "values", v)


@dataclass
class Hooks:
    """Per-call extension points honoured inside predict_noise.

    capture receives the step's attention (already head-averaged) when set;
    cross_logit_bias is added to per-token cross-attention logits before the
    softmax (the size-weight hook); self_attn_override replaces the backend's
    own self-attention affinity (the injection hook).
    """

    capture: Optional[Callable[[AttentionCapture, int], None]] = None
    cross_logit_bias: Optional[np.ndarray] = None
    self_attn_override: Optional[np.ndarray] = None
    want_self: bool = True
    want_cross: bool = True


@dataclass(frozen=True)
class Capabilities:
    decode: bool = True
    null_text: bool = False
    attention_capture: bool = True


class DenoiserBackend:
    """Contract: deterministic noise prediction plus text/image codecs.

    Concrete backends provide encode_text, predict_noise, encode_image,
    decode_image, initial_latent, and a deterministic scheduler. Operations
    outside a backend's capabilities raise CapabilityError.
    """

    capabilities = Capabilities()
    scheduler: DeterministicScheduler
    default_guidance: float = 1.0

    def encode_text(self, prompt: str):
        raise NotImplementedError

    def predict_noise(
        self,
        x: np.ndarray,
        conditioning,
        level: int,
        guidance_scale: float | None = None,
        hooks: Hooks | None = None,
    ) -> np.ndarray:
        raise NotImplementedError

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode_image(self, latent: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def initial_latent(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def null_text_embeddings(self, *args, **kwargs):
        raise CapabilityError("null-text requires optimizable embeddings")
