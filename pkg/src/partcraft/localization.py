"""Part localization: blended two-branch denoising, spectral segmentation of
self-attention, per-part localization tests, and segment-to-part assignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._kernels import kmeans_lloyd
from .attention import (
    AttentionAccumulator,
    AttentionBundle,
    normalize_cross_attention,
    part_token_indices,
)
from .backends.base import DenoiserBackend, Hooks
from .config import PipelineConfig
from .document import RichPromptDocument
from .masks import CANONICAL_RES, Mask2D, PartMaskSet

log = logging.getLogger(__name__)


class LocalizationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# spectral segmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentMap:
    """Integer label grid from clustering the position affinity."""

    labels: np.ndarray  # (32, 32) ints in [0, k)
    k: int

    def __post_init__(self) -> None:
        lab = np.asarray(self.labels)
        if lab.min() < 0 or lab.max() >= self.k:
            raise LocalizationError("segment labels out of range")
        object.__setattr__(self, "labels", lab.astype(np.int64))

    def indicator(self, segment: int) -> np.ndarray:
        return (self.labels == segment).astype(np.float64)

    def used_segments(self) -> list[int]:
        return sorted(int(s) for s in np.unique(self.labels))


def _kmeanspp_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than centers: reuse the first point
            centers[c:] = centers[0]
            break
        probs = d2 / total
        centers[c] = points[int(rng.choice(n, p=probs))]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def cluster_attention(
    self_attn: np.ndarray, k: int, seed: int, n_init: int = 10
) -> SegmentMap:
    """K-way segmentation of a position affinity.

    Symmetrize, form the symmetric normalized Laplacian, embed positions with
    the k smallest eigenvectors, row-normalize, and run seeded k-means with
    n_init restarts, keeping the lowest-inertia labeling. Deterministic for
    fixed (affinity, k, seed).
    """
    a = np.asarray(self_attn, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LocalizationError(f"affinity must be square, got {a.shape}")
    if not np.isfinite(a).all():
        raise LocalizationError("affinity contains non-finite values")
    n = a.shape[0]
    if k < 2:
        raise LocalizationError("k must be >= 2")
    if k > n:
        raise LocalizationError(f"k={k} exceeds {n} positions")
    a = (a + a.T) / 2.0
    degree = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(degree, 1e-12))
    lap = -a * inv_sqrt[:, None] * inv_sqrt[None, :]
    lap[np.diag_indices(n)] += 1.0
    _, vecs = scipy.linalg.eigh(lap, subset_by_index=[0, k - 1])
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    embedding = vecs / np.maximum(norms, 1e-12)
    best_labels = None
    best_inertia = np.inf
    for restart in range(max(1, n_init)):
        centers = _kmeanspp_init(embedding, k, seed + restart)
        labels, centers = kmeans_lloyd(embedding, centers)
        inertia = float(np.sum((embedding - centers[labels]) ** 2))
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_labels = labels
    side = int(np.sqrt(n))
    return SegmentMap(labels=best_labels.reshape(side, side), k=k)


# ---------------------------------------------------------------------------
# Part-token tests and assignment
# ---------------------------------------------------------------------------

def localization_test(m_hat: np.ndarray, k: int, delta: float) -> bool:
    """A part is usable iff its normalized map peaks at (1 - delta)/K or above."""
    if k < 1:
        raise LocalizationError("k must be >= 1")
    if not 0.0 <= delta <= 1.0:
        raise LocalizationError("delta must be in [0, 1]")
    return bool(np.max(m_hat) >= (1.0 - delta) / k)


def conditional_normalize(m_hat: np.ndarray, localized: bool) -> np.ndarray:
    """Min-max rescale localized maps to [0, 1]; pass others through.

    A localized-but-constant map rescales to all zeros: it carries no spatial
    signal, so it should not attract any segment.
    """
    if not localized:
        return m_hat
    lo = float(np.min(m_hat))
    hi = float(np.max(m_hat))
    if hi == lo:
        return np.zeros_like(m_hat)
    return (m_hat - lo) / (hi - lo)


@dataclass(frozen=True)
class SegmentAssignment:
    part_masks: dict[str, Mask2D]
    background: Mask2D
    scores: dict[str, float]


def assign_segments(
    segments: SegmentMap,
    part_maps: dict[str, np.ndarray],
    epsilon_assign: float,
) -> SegmentAssignment:
    """Assign every segment to the part whose map overlaps it most.

    The score is the dot product of the binary segment indicator with the
    part map; a segment goes to the argmax part when that best score reaches
    epsilon_assign, otherwise to the background.
    """
    names = list(part_maps)
    shape = segments.labels.shape
    unions = {name: np.zeros(shape, dtype=np.uint8) for name in names}
    background = np.zeros(shape, dtype=np.uint8)
    scores = {name: 0.0 for name in names}
    for seg in segments.used_segments():
        ind = segments.indicator(seg)
        best_name = None
        best_score = -np.inf
        for name in names:
            score = float(np.sum(ind * part_maps[name]))
            if score > best_score:
                best_score = score
                best_name = name
        if best_name is not None and best_score >= epsilon_assign:
            unions[best_name] |= ind.astype(np.uint8)
            scores[best_name] = max(scores[best_name], best_score)
        else:
            background |= ind.astype(np.uint8)
    return SegmentAssignment(
        part_masks={n: Mask2D(m) for n, m in unions.items()},
        background=Mask2D(background),
        scores=scores,
    )


# ---------------------------------------------------------------------------
# Object mask
# ---------------------------------------------------------------------------

def extract_object_mask(
    base_attention: AttentionBundle,
    object_token: int,
    k: int,
    seed: int,
) -> Mask2D:
    """Binary object mask: cluster self-attention, then attribute each
    segment to the object by the object token's mean cross-attention.

    A segment is object when its mean reaches half the best segment's mean;
    if the object token never attends anywhere, the object is not localizable.
    """
    if base_attention.self_attn is None:
        raise LocalizationError("base attention bundle lacks self-attention")
    obj_map = base_attention.cross_map(object_token)
    if float(obj_map.max()) <= 0.0:
        raise LocalizationError("object not localizable: object attention is all zero")
    segments = cluster_attention(base_attention.self_attn, k, seed)
    means = {
        seg: float(obj_map[segments.labels == seg].mean())
        for seg in segments.used_segments()
    }
    cutoff = 0.5 * max(means.values())
    out = np.zeros(segments.labels.shape, dtype=np.uint8)
    for seg, mean in means.items():
        if mean >= cutoff:
            out |= (segments.labels == seg).astype(np.uint8)
    return Mask2D(out)


# ---------------------------------------------------------------------------
# Two-branch blended denoising
# ---------------------------------------------------------------------------

def blended_noise(
    base_pred: np.ndarray,
    part_pred: np.ndarray,
    object_mask: Mask2D,
    alpha: float,
) -> np.ndarray:
    """Mix the two branch predictions: the part branch acts only inside the
    object mask, at strength alpha."""
    if base_pred.shape != part_pred.shape:
        raise LocalizationError(
            f"branch shapes differ: {base_pred.shape} vs {part_pred.shape}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise LocalizationError("alpha must be in [0, 1]")
    m = object_mask.values.astype(np.float64)
    if m.shape != base_pred.shape[-2:]:
        raise LocalizationError(
            f"mask shape {m.shape} does not match prediction {base_pred.shape}"
        )
    if alpha == 0.0 or object_mask.is_empty():
        # the mix weight vanishes identically; return the base branch as-is so
        # an alpha-0 run reproduces base-only denoising bit for bit
        return base_pred
    w = alpha * m
    return w * part_pred + (1.0 - w) * base_pred


def blended_noise_three_term(
    base_pred: np.ndarray,
    part_pred: np.ndarray,
    object_mask: Mask2D,
    alpha: float,
) -> np.ndarray:
    """Expanded form: base everywhere, minus the masked base share, plus the
    masked part share. Equal to blended_noise up to float roundoff."""
    m = object_mask.values.astype(np.float64)
    return base_pred - alpha * m * base_pred + alpha * m * part_pred


def embed_parts_independently(doc: RichPromptDocument, backend: DenoiserBackend):
    """Per-part conditioning from per-part template sentences.

    Each part is encoded alone inside "A photo of {part} of a {object}" and
    its token vector extracted, so the assembled conditioning does not depend
    on declaration order beyond the position of each entry.
    """
    if not doc.parts:
        raise LocalizationError("document declares no parts")
    vectors = []
    for part in doc.parts:
        template = f"A photo of {part.name} of a {doc.object_token}"
        enc = backend.encode_text(template)
        words = part.name.split()
        labels = list(enc.token_labels)
        span = None
        for start in range(1, len(labels) - len(words) + 1):
            if labels[start : start + len(words)] == words:
                span = (start, start + len(words))
                break
        if span is None:
            raise LocalizationError(
                f"part {part.name!r} not found in its template tokenization"
            )
        vectors.append(enc.token_vectors[span[0] : span[1]].mean(axis=0))
    return backend.assemble_part_conditioning(
        [p.name for p in doc.parts], np.stack(vectors)
    )


@dataclass
class PartDiffusionResult:
    image: np.ndarray
    object_mask: Mask2D
    object_bundle: AttentionBundle  # base branch, steps before the part branch joins
    base_bundle: AttentionBundle  # base branch over the blended phase
    part_bundle: AttentionBundle  # part branch over the blended phase


def _object_token_index(bundle: AttentionBundle, object_token: str) -> int:
    first_word = object_token.split()[0]
    return bundle.token_index(first_word)


def run_part_diffusion(
    doc: RichPromptDocument,
    config: PipelineConfig,
    backend: DenoiserBackend,
    x_init: np.ndarray | None = None,
) -> PartDiffusionResult:
    """Single fused trajectory: base-only until t_threshold, then both
    branches mixed inside the object mask with the ramping alpha."""
    sch = backend.scheduler
    if sch.num_steps != config.num_steps:
        raise LocalizationError(
            f"backend scheduler has {sch.num_steps} steps, config says {config.num_steps}"
        )
    base_cond = backend.encode_text(doc.base_prompt)
    part_cond = embed_parts_independently(doc, backend)

    x = backend.initial_latent(config.seed) if x_init is None else np.asarray(x_init)
    obj_acc = AttentionAccumulator()
    base_acc = AttentionAccumulator()
    part_acc = AttentionAccumulator()

    k_segments = config.segment_count(len(doc.parts))
    object_mask: Mask2D | None = None
    level = config.num_steps
    try:
        while level > 0:
            if level > config.t_threshold:
                hooks = Hooks(capture=obj_acc.add)
                eps = backend.predict_noise(x, base_cond, level, hooks=hooks)
            else:
                if object_mask is None:
                    object_bundle = obj_acc.finish()
                    token = _object_token_index(object_bundle, doc.object_token)
                    object_mask = extract_object_mask(
                        object_bundle, token, k_segments, config.seed
                    )
                base_eps = backend.predict_noise(
                    x, base_cond, level, hooks=Hooks(capture=base_acc.add)
                )
                part_eps = backend.predict_noise(
                    x, part_cond, level, hooks=Hooks(capture=part_acc.add)
                )
                eps = blended_noise(
                    base_eps, part_eps, object_mask, config.alpha_at(level)
                )
            x = sch.step(x, eps, level)
            level -= 1
    except LocalizationError:
        raise
    except Exception as exc:
        raise LocalizationError(f"denoising failed at step {level}: {exc}") from exc

    if object_mask is None:
        # t_threshold >= num_steps is rejected by config, so the part phase
        # always runs; this guards a pathological t_threshold == 0
        object_bundle = obj_acc.finish()
        token = _object_token_index(object_bundle, doc.object_token)
        object_mask = extract_object_mask(
            object_bundle, token, k_segments, config.seed
        )
        base_bundle = object_bundle
        part_bundle = object_bundle
    else:
        base_bundle = base_acc.finish()
        part_bundle = part_acc.finish()
    return PartDiffusionResult(
        image=x,
        object_mask=object_mask,
        object_bundle=object_bundle,
        base_bundle=base_bundle,
        part_bundle=part_bundle,
    )


def run_base_diffusion(
    prompt_or_doc,
    config: PipelineConfig,
    backend: DenoiserBackend,
    x_init: np.ndarray | None = None,
    keep_trajectory: bool = False,
):
    """Base-prompt-only denoising; optionally keeps the per-level latents."""
    prompt = (
        prompt_or_doc.base_prompt
        if isinstance(prompt_or_doc, RichPromptDocument)
        else prompt_or_doc
    )
    cond = backend.encode_text(prompt)
    sch = backend.scheduler
    x = backend.initial_latent(config.seed) if x_init is None else np.asarray(x_init)
    trajectory = {config.num_steps: x.copy()} if keep_trajectory else None
    for level in range(config.num_steps, 0, -1):
        eps = backend.predict_noise(x, cond, level)
        x = sch.step(x, eps, level)
        if keep_trajectory:
            trajectory[level - 1] = x.copy()
    if keep_trajectory:
        return x, trajectory
    return x


# ---------------------------------------------------------------------------
# End-to-end
# ---------------------------------------------------------------------------

def localize(
    doc: RichPromptDocument,
    config: PipelineConfig,
    backend: DenoiserBackend,
    x_init: np.ndarray | None = None,
) -> PartMaskSet:
    """Full localization: blended run, segmentation, per-part tests, and
    segment assignment into a partitioned mask set."""
    if not doc.parts:
        raise LocalizationError("localization requires at least one part")
    result = run_part_diffusion(doc, config, backend, x_init=x_init)

    base_self = result.base_bundle.self_attn
    part_self = result.part_bundle.self_attn
    if config.attention_branches == "base":
        self_attn = base_self
    elif config.attention_branches == "part":
        self_attn = part_self
    elif base_self is not None and part_self is not None:
        self_attn = (base_self + part_self) / 2.0
    else:
        self_attn = base_self if base_self is not None else part_self
    if self_attn is None:
        raise LocalizationError("no self-attention was captured")

    try:
        segments = cluster_attention(
            self_attn, config.segment_count(len(doc.parts)), config.seed
        )
    except LocalizationError as exc:
        raise LocalizationError(f"segmentation failed: {exc}") from exc

    bundle = result.part_bundle
    k_parts = len(doc.parts)
    localized: dict[str, bool] = {}
    maps: dict[str, np.ndarray] = {}
    for idx in part_token_indices(bundle):
        name = bundle.token_labels[idx]
        m_hat = normalize_cross_attention(bundle, idx)
        flag = localization_test(m_hat, k_parts, config.delta)
        localized[name] = flag
        if flag:
            maps[name] = conditional_normalize(m_hat, True)

    assignment = assign_segments(segments, maps, config.epsilon_assign)

    obj = result.object_mask.values
    part_masks: dict[str, Mask2D] = {}
    scores: dict[str, float] = {}
    for part in doc.parts:
        name = part.name
        if name in assignment.part_masks:
            clipped = assignment.part_masks[name].values & obj
            part_masks[name] = Mask2D(clipped)
            scores[name] = assignment.scores[name]
        else:
            part_masks[name] = Mask2D.empty(obj.shape[0], obj.shape[1])
            scores[name] = 0.0
    covered = np.zeros_like(obj)
    for m in part_masks.values():
        covered |= m.values
    background = Mask2D(1 - covered)

    return PartMaskSet(
        object_mask=result.object_mask,
        part_masks=part_masks,
        localized=localized,
        background_mask=background,
        scores=scores,
    )


def empty_mask_set(size: int = CANONICAL_RES) -> PartMaskSet:
    """All-background mask set for part-free documents."""
    return PartMaskSet(
        object_mask=Mask2D.empty(size),
        part_masks={},
        localized={},
        background_mask=Mask2D.full(size),
        scores={},
    )
