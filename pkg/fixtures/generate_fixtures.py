"""Regenerates the fixture files shared with the web client.

The frontend never imports Python; it consumes these files at build/test
time. Everything here is deterministic, so regenerating should be a no-op
unless the wire formats themselves changed — tests/test_fixtures.py fails
loudly when these files drift from the package's behavior.

    python3 fixtures/generate_fixtures.py
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from partcraft.backends.synthetic import SyntheticBackend, make_scene
from partcraft.colors import nearest_named_color
from partcraft.config import PipelineConfig
from partcraft.document import PartSpec, RichPromptDocument, serialize_document
from partcraft.localization import localize
from partcraft.masks import save_mask_set

ROOT = Path(__file__).resolve().parent

DOCUMENTS: dict[str, RichPromptDocument] = {
    "flamingo": RichPromptDocument(
        base_prompt="a photo of a flamingo",
        object_token="flamingo",
        parts=(PartSpec(name="beak", footnote="a pelicans beak"),),
    ),
    "dress_full": RichPromptDocument(
        base_prompt="a woman wearing a dress in a garden",
        object_token="dress",
        parts=(
            PartSpec(
                name="dress",
                footnote="flowing dress",
                color=(255, 165, 0),
                style="Van Gogh",
                size=2,
            ),
            PartSpec(name="hair", color=(128, 128, 128)),
        ),
    ),
    "bird_minimal": RichPromptDocument(
        base_prompt="a photo of a bird",
        object_token="bird",
    ),
    "accents": RichPromptDocument(
        base_prompt="ein Foto eines Vogels — größer als üblich",
        object_token="Vogels",
        parts=(PartSpec(name="gefieder", footnote="buntes Gefieder ✦"),),
    ),
}


def write_documents() -> None:
    out = ROOT / "documents"
    out.mkdir(parents=True, exist_ok=True)
    for name, doc in DOCUMENTS.items():
        (out / f"{name}.json").write_text(serialize_document(doc), encoding="utf-8")


def write_colors() -> None:
    out = ROOT / "colors"
    out.mkdir(parents=True, exist_ok=True)
    table_text = (
        resources.files("partcraft.data").joinpath("named_colors.json").read_text()
    )
    (out / "named_colors.json").write_text(table_text, encoding="utf-8")

    pinned = [
        (255, 0, 0),
        (0, 0, 255),
        (255, 165, 0),
        (128, 128, 128),  # gray/grey tie: first table entry wins
        (129, 128, 127),
        (0, 0, 0),
        (255, 255, 255),
        (17, 203, 88),
    ]
    rng = np.random.default_rng(77)
    samples = pinned + [
        tuple(int(v) for v in rng.integers(0, 256, size=3)) for _ in range(32)
    ]
    cases = [
        {"rgb": list(rgb), "name": nearest_named_color(rgb)} for rgb in samples
    ]
    (out / "nearest_color_cases.json").write_text(
        json.dumps(cases, indent=2), encoding="utf-8"
    )


def write_mask_example() -> None:
    scene = make_scene(["head", "wing"], seed=21)
    doc = RichPromptDocument(
        base_prompt=scene.base_prompt,
        object_token=scene.object_token,
        parts=(
            PartSpec(name="head"),
            PartSpec(name="wing"),
            PartSpec(name="horn"),  # not planted: stays unlocalized
        ),
    )
    config = PipelineConfig(num_steps=41, t_threshold=24, seed=7)
    masks = localize(doc, config, SyntheticBackend(scene, num_steps=41))
    out = ROOT / "masks_example"
    out.mkdir(parents=True, exist_ok=True)
    save_mask_set(masks, out)


def main() -> int:
    write_documents()
    write_colors()
    write_mask_example()
    print(f"fixtures written under {ROOT}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
