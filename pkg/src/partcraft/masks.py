"""Binary masks at the canonical 32x32 attention resolution, and the
object/part/background mask set produced by localization.

Masks persist as single-channel PNGs (0/255) next to a ``masks.json`` index:
{"resolution": [h, w], "object": file, "background": file,
 "parts": {name: {"file": ..., "localized": bool, "score": float}}}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

CANONICAL_RES = 32


class MaskError(ValueError):
    """Raised when a mask or mask set violates its invariants."""


@dataclass(frozen=True, eq=False)
class Mask2D:
    """A binary grid; values are uint8 in {0, 1}."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise MaskError(f"mask must be 2D, got shape {v.shape}")
        if not np.isin(v, (0, 1)).all():
            raise MaskError("mask values must be 0 or 1")
        object.__setattr__(self, "values", np.ascontiguousarray(v, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def area(self) -> int:
        return int(self.values.sum())

    def is_empty(self) -> bool:
        return self.area == 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mask2D):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:  # frozen dataclass with eq=False keeps id hash
        return id(self)

    @classmethod
    def full(cls, height: int = CANONICAL_RES, width: int | None = None) -> "Mask2D":
        width = height if width is None else width
        return cls(np.ones((height, width), dtype=np.uint8))

    @classmethod
    def empty(cls, height: int = CANONICAL_RES, width: int | None = None) -> "Mask2D":
        width = height if width is None else width
        return cls(np.zeros((height, width), dtype=np.uint8))


def nearest_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2D grid (exact for integer upsampling)."""
    in_h, in_w = values.shape
    rows = (np.arange(out_h) * in_h) // out_h
    cols = (np.arange(out_w) * in_w) // out_w
    return values[np.ix_(rows, cols)]


def upsample_mask(mask: Mask2D, out_h: int, out_w: int) -> np.ndarray:
    """Mask grid resized to latent/pixel resolution by nearest neighbor."""
    return nearest_resize(mask.values, out_h, out_w)


@dataclass(frozen=True)
class PartMaskSet:
    """Object mask, per-part masks, localized flags, and the background mask.

    Invariants: part masks are pairwise disjoint; part masks plus background
    partition the grid; every part mask lies inside the object mask or is
    empty (non-localized parts get empty masks).
    """

    object_mask: Mask2D
    part_masks: dict[str, Mask2D]
    localized: dict[str, bool]
    background_mask: Mask2D
    scores: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        shape = self.object_mask.values.shape
        for name, m in self.part_masks.items():
            if m.values.shape != shape:
                raise MaskError(f"part {name!r}: shape {m.values.shape} != {shape}")
        if self.background_mask.values.shape != shape:
            raise MaskError("background mask shape mismatch")
        if set(self.localized) != set(self.part_masks):
            raise MaskError("localized flags and part masks disagree on part names")
        total = self.background_mask.values.astype(np.int64).copy()
        for m in self.part_masks.values():
            total += m.values
        if not (total == 1).all():
            raise MaskError("part masks + background do not partition the grid")
        obj = self.object_mask.values
        for name, m in self.part_masks.items():
            if not m.is_empty() and (m.values & ~obj & 1).any():
                raise MaskError(f"part {name!r} mask extends outside the object mask")
            if not self.localized[name] and not m.is_empty():
                raise MaskError(f"part {name!r} is non-localized but has a nonempty mask")

    def part_names(self) -> list[str]:
        return list(self.part_masks)


def save_mask_set(mask_set: PartMaskSet, out_dir: str | Path) -> Path:
    """Write PNG masks plus the masks.json index; returns the index path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def _write(name: str, mask: Mask2D) -> str:
        fname = f"{name}.png"
        Image.fromarray(mask.values * 255, mode="L").save(out / fname)
        return fname

    index = {
        "resolution": list(mask_set.object_mask.values.shape),
        "object": _write("object", mask_set.object_mask),
        "background": _write("background", mask_set.background_mask),
        "parts": {},
    }
    for i, (name, mask) in enumerate(mask_set.part_masks.items()):
        fname = _write(f"part_{i:02d}", mask)
        index["parts"][name] = {
            "file": fname,
            "localized": bool(mask_set.localized[name]),
            "score": float(mask_set.scores.get(name, 0.0)),
        }
    index_path = out / "masks.json"
    index_path.write_text(json.dumps(index, indent=2))
    return index_path


def _read_mask(path: Path) -> Mask2D:
    arr = np.asarray(Image.open(path).convert("L"))
    return Mask2D((arr >= 128).astype(np.uint8))


def load_mask_set(in_dir: str | Path) -> PartMaskSet:
    """Read a mask set previously written by ``save_mask_set``."""
    root = Path(in_dir)
    index = json.loads((root / "masks.json").read_text())
    part_masks = {}
    localized = {}
    scores = {}
    for name, entry in index["parts"].items():
        part_masks[name] = _read_mask(root / entry["file"])
        localized[name] = bool(entry["localized"])
        scores[name] = float(entry.get("score", 0.0))
    return PartMaskSet(
        object_mask=_read_mask(root / index["object"]),
        part_masks=part_masks,
        localized=localized,
        background_mask=_read_mask(root / index["background"]),
        scores=scores,
    )
