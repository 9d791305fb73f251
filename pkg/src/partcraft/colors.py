"""Fixed named-color table and nearest-name lookup for prompt text."""

from __future__ import annotations

import json
from importlib import resources


class NamedColorTable:
    """Ordered (name, rgb) entries; ties in distance go to the earlier entry."""

    def __init__(self, entries: list[tuple[str, tuple[int, int, int]]]):
        if not entries:
            raise ValueError("color table must be nonempty")
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError("color table names must be unique")
        self.entries = [(name, tuple(rgb)) for name, rgb in entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_color_table() -> NamedColorTable:
    raw = json.loads(
        resources.files("partcraft.data").joinpath("named_colors.json").read_text()
    )
    return NamedColorTable([(name, tuple(rgb)) for name, rgb in raw])


_DEFAULT_TABLE: NamedColorTable | None = None


def default_color_table() -> NamedColorTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = load_color_table()
    return _DEFAULT_TABLE


def nearest_named_color(
    rgb: tuple[int, int, int], table: NamedColorTable | None = None
) -> str:
    """Name of the table entry closest to rgb in Euclidean RGB distance."""
    table = table or default_color_table()
    r, g, b = rgb
    best_name = None
    best_d = None
    for name, (tr, tg, tb) in table.entries:
        d = (r - tr) ** 2 + (g - tg) ** 2 + (b - tb) ** 2
        if best_d is None or d < best_d:
            best_d = d
            best_name = name
    return best_name
