"""Aggregation and normalization of attention captured during denoising.

Self-attention arrives as an affinity over flattened spatial positions;
cross-attention as one map per prompt token. Captures from many steps and
heads are folded into a single ``AttentionBundle`` by arithmetic mean, with
maps area-averaged to the canonical 32x32 grid when captured at another
resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import area_average_resize
from .masks import CANONICAL_RES

SOT_TOKEN = "<sot>"

_S = CANONICAL_RES * CANONICAL_RES


class AttentionError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionCapture:
    """One step's capture: affinity over positions plus per-token maps.

    ``self_attn`` is (S, S) or (heads, S, S) with S = height*width;
    ``cross_attn`` is (tokens, height, width) or (heads, tokens, height, width).
    Either may be None when a branch exposes only one kind.
    """

    height: int
    width: int
    token_labels: tuple[str, ...]
    self_attn: np.ndarray | None = None
    cross_attn: np.ndarray | None = None


def _head_mean(arr: np.ndarray, core_ndim: int) -> np.ndarray:
    if arr.ndim == core_ndim:
        return np.asarray(arr, dtype=np.float64)
    if arr.ndim == core_ndim + 1:
        return np.asarray(arr, dtype=np.float64).mean(axis=0)
    raise AttentionError(f"capture array has unexpected ndim {arr.ndim}")


def _axis_weights(in_n: int, out_n: int) -> np.ndarray:
    """(out_n, in_n) rectangle-overlap averaging weights; rows sum to 1."""
    w = np.zeros((out_n, in_n))
    for i in range(out_n):
        y0 = i * in_n / out_n
        y1 = (i + 1) * in_n / out_n
        for r in range(int(np.floor(y0)), min(in_n, int(np.ceil(y1)))):
            w[i, r] = min(y1, r + 1.0) - max(y0, float(r))
    return w / (in_n / out_n)


def resize_affinity(aff: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Block-average a position-affinity matrix onto the canonical grid.

    The position index flattens a (h, w) grid row-major, so resizing acts on
    both sides through the Kronecker product of per-axis averaging weights.
    """
    if aff.shape == (_S, _S):
        return aff
    w = np.kron(_axis_weights(in_h, CANONICAL_RES), _axis_weights(in_w, CANONICAL_RES))
    return w @ aff @ w.T


@dataclass(frozen=True)
class AttentionBundle:
    """Mean attention over all folded captures, on the canonical grid."""

    self_attn: np.ndarray | None
    cross_attn: np.ndarray | None  # (n_tokens, 32, 32)
    token_labels: tuple[str, ...]
    step_range: tuple[int, int] | None = None

    def token_index(self, label: str) -> int:
        try:
            return self.token_labels.index(label)
        except ValueError:
            raise AttentionError(f"token {label!r} not present in bundle") from None

    def cross_map(self, token: int) -> np.ndarray:
        if self.cross_attn is None:
            raise AttentionError("bundle has no cross-attention")
        if not 0 <= token < len(self.token_labels):
            raise AttentionError(f"token index {token} out of range")
        return self.cross_attn[token]


class AttentionAccumulator:
    """Streaming mean over captures; records are never stored individually."""

    def __init__(self) -> None:
        self._self_sum: np.ndarray | None = None
        self._cross_sum: np.ndarray | None = None
        self._labels: tuple[str, ...] | None = None
        self._count = 0
        self._levels: list[int] = []

    def add(self, capture: AttentionCapture, level: int | None = None) -> None:
        if self._labels is None:
            self._labels = tuple(capture.token_labels)
        elif self._labels != tuple(capture.token_labels):
            raise AttentionError(
                "token labels changed between captures: "
                f"{self._labels} vs {tuple(capture.token_labels)}"
            )
        if capture.self_attn is not None:
            s = _head_mean(capture.self_attn, 2)
            n = capture.height * capture.width
            if s.shape != (n, n):
                raise AttentionError(f"self-attention shape {s.shape} != ({n}, {n})")
            s = resize_affinity(s, capture.height, capture.width)
            self._self_sum = s if self._self_sum is None else self._self_sum + s
        if capture.cross_attn is not None:
            c = _head_mean(capture.cross_attn, 3)
            if c.shape[0] != len(capture.token_labels):
                raise AttentionError(
                    f"cross-attention token count {c.shape[0]} != "
                    f"{len(capture.token_labels)} labels"
                )
            if (capture.height, capture.width) != (CANONICAL_RES, CANONICAL_RES):
                c = np.stack(
                    [area_average_resize(m, CANONICAL_RES, CANONICAL_RES) for m in c]
                )
            self._cross_sum = c if self._cross_sum is None else self._cross_sum + c
        self._count += 1
        if level is not None:
            self._levels.append(level)

    def finish(self) -> AttentionBundle:
        if self._count == 0:
            raise AttentionError("no captures accumulated")
        step_range = (max(self._levels), min(self._levels)) if self._levels else None
        return AttentionBundle(
            self_attn=None if self._self_sum is None else self._self_sum / self._count,
            cross_attn=None if self._cross_sum is None else self._cross_sum / self._count,
            token_labels=self._labels,
            step_range=step_range,
        )

    @property
    def count(self) -> int:
        return self._count


def accumulate(captures, levels=None) -> AttentionBundle:
    """Fold a sequence of captures into one bundle (arithmetic mean)."""
    acc = AttentionAccumulator()
    if levels is None:
        for cap in captures:
            acc.add(cap)
    else:
        for cap, level in zip(captures, levels):
            acc.add(cap, level)
    return acc.finish()


def merge_bundles(a: AttentionBundle, b: AttentionBundle) -> AttentionBundle:
    """Elementwise mean of two branch aggregates sharing token labels."""
    if a.token_labels != b.token_labels:
        raise AttentionError("cannot merge bundles with different token labels")

    def _mean(x, y):
        if x is None:
            return y
        if y is None:
            return x
        return (x + y) / 2.0

    rng = None
    if a.step_range and b.step_range:
        rng = (max(a.step_range[0], b.step_range[0]), min(a.step_range[1], b.step_range[1]))
    return AttentionBundle(
        self_attn=_mean(a.self_attn, b.self_attn),
        cross_attn=_mean(a.cross_attn, b.cross_attn),
        token_labels=a.token_labels,
        step_range=rng or a.step_range or b.step_range,
    )


def part_token_indices(bundle: AttentionBundle) -> list[int]:
    """Indices of every non-<sot> token (the part tokens of a part prompt)."""
    return [i for i, lab in enumerate(bundle.token_labels) if lab != SOT_TOKEN]


def normalize_cross_attention(bundle: AttentionBundle, token: int) -> np.ndarray:
    """Per-position share of one part token among all part tokens.

    The <sot> column is dropped first; at each position the remaining raw
    scores are renormalized to sum to 1. Positions where every part score is
    zero fall back to the uniform share 1/K.
    """
    if bundle.cross_attn is None:
        raise AttentionError("bundle has no cross-attention")
    if not 0 <= token < len(bundle.token_labels):
        raise AttentionError(f"token index {token} out of range")
    if bundle.token_labels[token] == SOT_TOKEN:
        raise AttentionError("requested token is the <sot> marker, not a part token")
    parts = part_token_indices(bundle)
    k = len(parts)
    stack = bundle.cross_attn[parts]  # (K, 32, 32)
    denom = stack.sum(axis=0)
    row = parts.index(token)
    out = np.full_like(denom, 1.0 / k)
    nz = denom > 0
    out[nz] = stack[row][nz] / denom[nz]
    return out


def normalized_part_maps(bundle: AttentionBundle) -> dict[str, np.ndarray]:
    """Normalized map per part token, keyed by token label."""
    return {
        bundle.token_labels[i]: normalize_cross_attention(bundle, i)
        for i in part_token_indices(bundle)
    }
