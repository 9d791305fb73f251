"""Command line entry points: localize, generate, eval, serve, synth-data."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import derive_scene_from_document, load_scene, make_backend
from .config import load_config
from .document import parse_document
from .evaluation import (
    evaluate_dataset,
    load_dataset,
    load_grouping,
    make_synthetic_dataset,
    synthetic_localizer,
)
from .generation import generate, save_image
from .localization import empty_mask_set, localize
from .masks import load_mask_set, save_mask_set

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="pipeline config JSON")
    p.add_argument(
        "--backend", choices=("synthetic", "diffusion"), default=None,
        help="override the backend named in the config",
    )
    p.add_argument(
        "--scene", type=Path, default=None,
        help="planted scene JSON for the synthetic backend (default: derived from the document)",
    )
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def _load_doc(path: Path):
    return parse_document(path.read_bytes())


def _setup(args) -> tuple:
    config = load_config(args.config)
    overrides = {}
    if args.backend is not None:
        overrides["backend"] = args.backend
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = config.with_overrides(**overrides)
    doc = _load_doc(args.doc)
    scene = load_scene(args.scene) if args.scene else derive_scene_from_document(doc, config.seed)
    backend = make_backend(config, scene)
    return doc, config, backend


def cmd_localize(args) -> int:
    doc, config, backend = _setup(args)
    masks = localize(doc, config, backend)
    args.out.mkdir(parents=True, exist_ok=True)
    save_mask_set(masks, args.out)
    for name in doc.part_names():
        flag = "localized" if masks.localized[name] else "not localized"
        print(f"{name}: {flag}, area {masks.part_masks[name].area}")
    print(f"wrote masks to {args.out}")
    return 0


def cmd_generate(args) -> int:
    doc, config, backend = _setup(args)
    if args.masks:
        masks = load_mask_set(args.masks)
    elif doc.parts:
        masks = localize(doc, config, backend)
    else:
        masks = empty_mask_set()
    args.out.mkdir(parents=True, exist_ok=True)
    if not args.masks:
        save_mask_set(masks, args.out)
    steps_dir = args.out / "steps" if args.save_intermediates else None
    result = generate(doc, masks, config, backend, intermediates_dir=steps_dir)
    save_image(result.image, args.out / "image.png")
    for name, prompt in result.region_prompts.items():
        print(f"{name}: {prompt!r}")
    print(f"wrote image to {args.out / 'image.png'}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)
    samples = load_dataset(args.root)
    if args.grouping:
        grouping = load_grouping(args.grouping)
    elif args.dataset == "synthetic":
        grouping = load_grouping(args.root / "grouping.json")
    else:
        grouping = load_grouping(args.dataset)
    report = evaluate_dataset(samples, synthetic_localizer(config), grouping, config)
    print(f"samples: {report.n} (failed: {report.failures})")
    print(f"NMI: {report.nmi:.4f}  ARI: {report.ari:.4f}")
    print(f"FG-NMI: {report.fg_nmi:.4f}  FG-ARI: {report.fg_ari:.4f}")
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(json.dumps(report.to_dict(), indent=2))
        print(f"wrote report to {args.report}")
    return 0


def cmd_synth_data(args) -> int:
    root = make_synthetic_dataset(args.root, args.n, seed=args.seed)
    print(f"wrote {args.n} samples under {root}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.store, workers=args.workers)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partcraft", description="part-level controllable image composition"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", help="recover object and part masks for a document")
    p.add_argument("--doc", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("generate", help="compose an image from a document and masks")
    p.add_argument("--doc", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--masks", type=Path, default=None, help="reuse masks from a localize run")
    p.add_argument("--save-intermediates", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score part localization against ground truth")
    p.add_argument("--dataset", choices=("synthetic", "cub", "deepfashion"), required=True)
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--grouping", type=Path, default=None)
    p.add_argument("--report", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-data", help="write a synthetic evaluation dataset")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("serve", help="run the HTTP job service")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
