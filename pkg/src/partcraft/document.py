"""Rich-prompt document model: base prompt, object token, per-part attributes.

The wire format is JSON: {"base": str, "object": str, "parts": [{"name": str,
"footnote"?: str, "color"?: [r,g,b], "style"?: str, "size"?: number}]}.
``serialize_document`` emits a canonical byte form (fixed key order, compact
separators, defaults elided) so goldens can be compared across languages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class DocumentError(ValueError):
    """Raised when a document fails schema or invariant validation."""


_PART_KEYS = ("name", "footnote", "color", "style", "size")
_TOP_KEYS = ("base", "object", "parts")


@dataclass(frozen=True)
class PartSpec:
    """One annotated part span: the name plus optional appearance attributes."""

    name: str
    footnote: str | None = None
    color: tuple[int, int, int] | None = None
    style: str | None = None
    size: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name.strip():
            raise DocumentError("part name must be a nonempty string")
        if self.color is not None:
            if len(self.color) != 3:
                raise DocumentError(f"part {self.name!r}: color must be an [r,g,b] triple")
            for c in self.color:
                if not isinstance(c, int) or not 0 <= c <= 255:
                    raise DocumentError(
                        f"part {self.name!r}: color components must be integers in [0,255]"
                    )
            object.__setattr__(self, "color", tuple(self.color))
        if not (isinstance(self.size, (int, float)) and self.size > 0):
            raise DocumentError(f"part {self.name!r}: size must be > 0")
        object.__setattr__(self, "size", float(self.size))

    @property
    def key(self) -> str:
        """Normalized identity used for uniqueness checks and mask keys."""
        return self.name.strip().lower()


@dataclass(frozen=True)
class RichPromptDocument:
    """Base prompt, the object token within it, and the ordered part list."""

    base_prompt: str
    object_token: str
    parts: tuple[PartSpec, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        if not isinstance(self.base_prompt, str) or not self.base_prompt.strip():
            raise DocumentError("base prompt must be a nonempty string")
        if not isinstance(self.object_token, str) or not self.object_token.strip():
            raise DocumentError("object token missing")
        if self.object_token not in self.base_prompt:
            raise DocumentError(
                f"object token {self.object_token!r} does not occur in the base prompt"
            )
        seen: dict[str, str] = {}
        dupes = []
        for p in self.parts:
            if p.key in seen:
                dupes.append(p.name)
            seen[p.key] = p.name
        if dupes:
            raise DocumentError(f"duplicate part names: {sorted(set(dupes))}")

    @property
    def object_span(self) -> tuple[int, int]:
        """(start, end) character span of the object token in the base prompt."""
        start = self.base_prompt.index(self.object_token)
        return start, start + len(self.object_token)

    def part_names(self) -> list[str]:
        return [p.name for p in self.parts]


def _part_from_dict(raw: dict, index: int) -> PartSpec:
    unknown = set(raw) - set(_PART_KEYS)
    if unknown:
        raise DocumentError(f"parts[{index}]: unknown attributes {sorted(unknown)}")
    if "name" not in raw:
        raise DocumentError(f"parts[{index}]: missing name")
    color = raw.get("color")
    if color is not None:
        if not isinstance(color, list):
            raise DocumentError(f"parts[{index}]: color must be an [r,g,b] array")
        color = tuple(color)
    return PartSpec(
        name=raw["name"],
        footnote=raw.get("footnote"),
        color=color,
        style=raw.get("style"),
        size=raw.get("size", 1.0),
    )


def document_from_dict(data: dict) -> RichPromptDocument:
    if not isinstance(data, dict):
        raise DocumentError("document root must be a JSON object")
    unknown = set(data) - set(_TOP_KEYS)
    if unknown:
        raise DocumentError(f"unknown document fields {sorted(unknown)}")
    if "object" not in data or data.get("object") in (None, ""):
        raise DocumentError("object token missing")
    parts_raw = data.get("parts", [])
    if not isinstance(parts_raw, list):
        raise DocumentError("parts must be an array")
    parts = tuple(_part_from_dict(p, i) for i, p in enumerate(parts_raw))
    return RichPromptDocument(
        base_prompt=data.get("base", ""),
        object_token=data["object"],
        parts=parts,
    )


def parse_document(serialized: str | bytes) -> RichPromptDocument:
    """Parse the JSON wire form; malformed input reports the byte offset."""
    if isinstance(serialized, bytes):
        serialized = serialized.decode("utf-8")
    try:
        data = json.loads(serialized)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    return document_from_dict(data)


def document_to_dict(doc: RichPromptDocument) -> dict:
    """Plain-dict form with canonical key order and defaults elided."""
    parts = []
    for p in doc.parts:
        entry: dict = {"name": p.name}
        if p.footnote is not None:
            entry["footnote"] = p.footnote
        if p.color is not None:
            entry["color"] = list(p.color)
        if p.style is not None:
            entry["style"] = p.style
        if p.size != 1.0:
            # integral sizes serialize as ints so the byte form is
            # language-independent (1 vs 1.0)
            entry["size"] = int(p.size) if p.size == int(p.size) else p.size
        parts.append(entry)
    return {"base": doc.base_prompt, "object": doc.object_token, "parts": parts}


def serialize_document(doc: RichPromptDocument) -> str:
    """Canonical compact JSON; parse(serialize(d)) == d for every valid d."""
    return json.dumps(document_to_dict(doc), separators=(",", ":"), ensure_ascii=False)


def build_part_prompt(doc: RichPromptDocument) -> str:
    """Concatenated part names in declaration order, e.g. "beak crown wings"."""
    if not doc.parts:
        raise DocumentError("document declares no parts")
    return " ".join(p.name for p in doc.parts)
