"""Region-composed generation: per-part prompts denoised in parallel under
their masks, fused each step, with color guidance, size reweighting,
structure injection from the base run, and background blending.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import masked_sum
from .backends.base import CapabilityError, DenoiserBackend, Hooks
from .colors import NamedColorTable, default_color_table, nearest_named_color
from .config import PipelineConfig
from .document import PartSpec, RichPromptDocument
from .localization import run_base_diffusion
from .masks import Mask2D, PartMaskSet, upsample_mask

log = logging.getLogger(__name__)


class GenerationError(RuntimeError):
    pass


@dataclass
class RegionProcess:
    """One masked denoising process: a part (or the background) region."""

    name: str
    mask: Mask2D
    prompt_text: str
    conditioning: object
    size_weight: float = 1.0
    color_target: tuple[float, float, float] | None = None  # unit RGB

    def __post_init__(self) -> None:
        if self.size_weight <= 0:
            raise GenerationError(f"region {self.name!r}: size weight must be > 0")


def build_region_prompt(part: PartSpec, table: NamedColorTable | None = None) -> str:
    """Region prompt from the part's attributes: the footnote replaces the
    name, style appends, and the nearest named color prepends."""
    text = part.name
    if part.footnote is not None:
        text = part.footnote
    if part.style is not None:
        text = f"{text} in style of {part.style}"
    if part.color is not None:
        color_name = nearest_named_color(part.color, table or default_color_table())
        text = f"{color_name} {text}"
    return text


def fuse_region_noise(
    processes: list[RegionProcess],
    background: RegionProcess,
    predictions: list[np.ndarray],
) -> np.ndarray:
    """Masked sum of all region predictions plus the background prediction.

    The masks must partition the grid: every position belongs to exactly one
    process.
    """
    everyone = [*processes, background]
    if len(predictions) != len(everyone):
        raise GenerationError(
            f"{len(predictions)} predictions for {len(everyone)} processes"
        )
    c, h, w = predictions[0].shape
    masks = np.stack(
        [upsample_mask(p.mask, h, w).astype(np.float64) for p in everyone]
    )
    if not (masks.sum(axis=0) == 1.0).all():
        raise GenerationError("region masks do not partition the grid")
    preds = np.stack([np.asarray(p, dtype=np.float64) for p in predictions])
    return masked_sum(masks, preds)


def color_guidance_gradient(
    x: np.ndarray,
    eps: np.ndarray,
    process: RegionProcess,
    backend: DenoiserBackend,
    level: int,
    weight: float,
) -> np.ndarray:
    """Noise-space term steering the masked region toward the exact RGB.

    The gradient of the masked MSE between the estimated clean image and the
    constant target is (x0 - target) on the mask; scaling by signal/noise and
    the guidance weight makes the implied clean image move a ``weight``
    fraction toward the target each step.
    """
    if process.color_target is None:
        return np.zeros_like(eps)
    if not backend.capabilities.decode:
        raise CapabilityError("color guidance unavailable: backend cannot decode")
    sch = backend.scheduler
    x0 = sch.estimate_clean(x, eps, level)
    pixels = backend.decode_image(x0)
    target = np.asarray(process.color_target, dtype=np.float64)[:, None, None]
    mask = upsample_mask(process.mask, pixels.shape[1], pixels.shape[2])
    residual = (pixels - target) * mask
    scale = sch.signal[level] / sch.noise[level]
    return scale * weight * residual


def apply_size_weight(
    logits: np.ndarray, positions: list[int] | np.ndarray, size_weight: float
) -> np.ndarray:
    """Reweight token logits so post-softmax mass scales with size_weight.

    Adding log(w) multiplies the token's exponentiated score by w, which makes
    the post-softmax mass strictly increasing in w; w = 1 is the identity.
    """
    if size_weight <= 0:
        raise GenerationError("size weight must be > 0")
    out = np.array(logits, dtype=np.float64, copy=True)
    out[np.asarray(positions, dtype=np.intp)] += np.log(size_weight)
    return out


def background_blend(
    x: np.ndarray,
    x_base: np.ndarray,
    background_mask: Mask2D,
    level: int,
    blend_start_level: int,
) -> np.ndarray:
    """Hard overwrite of background positions with the base trajectory once
    the final blend window begins (level <= blend_start_level)."""
    if level > blend_start_level:
        return x
    if x_base is None:
        raise GenerationError(f"no base trajectory recorded for level {level}")
    mask = upsample_mask(background_mask, x.shape[1], x.shape[2]).astype(bool)
    return np.where(mask[None, :, :], x_base, x)


class SelfInjection:
    """Feeds the base run's self-attention into region denoising.

    The base trajectory is replayed through the backend's affinity computation
    at each injected level, which reproduces the base branch's self-attention
    exactly (the backend is deterministic in its inputs).
    """

    def __init__(self, backend: DenoiserBackend, base_trajectory: dict[int, np.ndarray]):
        if not hasattr(backend, "compute_affinity"):
            raise GenerationError(
                "self-injection needs a backend exposing its self-attention affinity"
            )
        self.backend = backend
        self.base_trajectory = base_trajectory

    def affinity_at(self, level: int) -> np.ndarray:
        if level not in self.base_trajectory:
            raise GenerationError(f"no base trajectory recorded for level {level}")
        return self.backend.compute_affinity(self.base_trajectory[level], level)


@dataclass
class GenerationResult:
    image: np.ndarray  # decoded pixels, (3, H, W)
    latent: np.ndarray
    base_image: np.ndarray
    region_prompts: dict[str, str]


def generate(
    doc: RichPromptDocument,
    masks: PartMaskSet,
    config: PipelineConfig,
    backend: DenoiserBackend,
    *,
    color_table: NamedColorTable | None = None,
    intermediates_dir: str | Path | None = None,
) -> GenerationResult:
    """Compose the final image from per-part region processes."""
    doc_names = {p.name for p in doc.parts}
    mask_names = set(masks.part_masks)
    unmatched = sorted(mask_names ^ doc_names)
    if unmatched:
        raise GenerationError(f"mask/part mismatch for names: {unmatched}")

    table = color_table or default_color_table()
    processes: list[RegionProcess] = []
    prompts: dict[str, str] = {}
    for part in doc.parts:
        mask = masks.part_masks[part.name]
        if mask.is_empty():
            log.info("part %r has an empty mask; skipping its region", part.name)
            continue
        prompt = build_region_prompt(part, table)
        prompts[part.name] = prompt
        processes.append(
            RegionProcess(
                name=part.name,
                mask=mask,
                prompt_text=prompt,
                conditioning=backend.encode_text(prompt),
                size_weight=part.size,
                color_target=(
                    tuple(c / 255.0 for c in part.color) if part.color else None
                ),
            )
        )
    base_cond = backend.encode_text(doc.base_prompt)
    # everything not claimed by an active part region is denoised under the
    # base prompt, so empty-mask (non-localized) parts fall back to it
    claimed = np.zeros_like(masks.background_mask.values)
    for p in processes:
        claimed |= p.mask.values
    background = RegionProcess(
        name="__background__",
        mask=Mask2D(1 - claimed),
        prompt_text=doc.base_prompt,
        conditioning=base_cond,
    )
    prompts["__background__"] = doc.base_prompt

    _, base_traj = run_base_diffusion(doc, config, backend, keep_trajectory=True)
    injection = (
        SelfInjection(backend, base_traj)
        if config.self_injection_fraction > 0
        else None
    )

    sch = backend.scheduler
    blend_start = config.blend_start_level()
    inject_above = config.injection_cutoff_level()
    x = backend.initial_latent(config.seed)
    inter = Path(intermediates_dir) if intermediates_dir else None
    if inter:
        inter.mkdir(parents=True, exist_ok=True)
        (inter / "prompts.json").write_text(json.dumps(prompts, indent=2))

    for level in range(config.num_steps, 0, -1):
        override = (
            injection.affinity_at(level)
            if injection is not None and level > inject_above
            else None
        )
        predictions = []
        for proc in [*processes, background]:
            hooks = None
            bias_needed = proc.size_weight != 1.0
            if override is not None or bias_needed:
                bias = None
                if bias_needed:
                    n_tokens = len(proc.conditioning.token_labels)
                    positions = [
                        i
                        for i, lab in enumerate(proc.conditioning.token_labels)
                        if i > 0
                    ]
                    bias = apply_size_weight(
                        np.zeros(n_tokens), positions, proc.size_weight
                    )
                hooks = Hooks(
                    capture=None,
                    cross_logit_bias=bias,
                    self_attn_override=override,
                )
            eps = backend.predict_noise(x, proc.conditioning, level, hooks=hooks)
            if (
                proc.color_target is not None
                and level <= config.t_threshold
                and config.color_guidance_weight > 0
            ):
                eps = eps + color_guidance_gradient(
                    x, eps, proc, backend, level, config.color_guidance_weight
                )
            predictions.append(eps)
        fused = fuse_region_noise(processes, background, predictions)
        x = sch.step(x, fused, level)
        x = background_blend(
            x, base_traj.get(level - 1), masks.background_mask, level - 1, blend_start
        )
        if inter:
            _save_png(backend.decode_image(x), inter / f"step_{level - 1:03d}.png")

    image = backend.decode_image(x)
    return GenerationResult(
        image=image,
        latent=x,
        base_image=backend.decode_image(base_traj[0]),
        region_prompts=prompts,
    )


def _save_png(pixels: np.ndarray, path: Path) -> None:
    from PIL import Image

    arr = np.clip(np.moveaxis(pixels, 0, -1) * 255.0, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    """Write a (3, H, W) unit-range pixel array as PNG."""
    _save_png(pixels, Path(path))
