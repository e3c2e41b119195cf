"""Command-line entry point.

    scenechange detect t0.png t1.png -o change.png [--emit-intermediates]
    scenechange evaluate ROOT [ROOT ...] --layout scd --out-format json --out-format md
    scenechange score-external PRED_DIR ROOT --layout changevpr --gt inter

Settings come from ``--config`` (INI, see ``scenechange.config``) and are
overridden by flags. Exit codes: 0 success, 2 usage or input error, 1 internal
failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np

from .backbone import BACKENDS, BackendUnavailable, make_backend
from .bench import emit_report, run_protocol, score_external
from .config import AVERAGE_CHOICES, GT_CHOICES, REGISTER_MODES, PipelineConfig, load_config, with_overrides
from .data import LAYOUTS, LayoutError, PairingError, load_dataset, read_image, write_image, write_mask
from .matching import ChangeMask, detect_changes

log = logging.getLogger("scenechange")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
FORMATS = ("json", "csv", "md")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--weights-path")
    p.add_argument("--layer", type=int, help="facet layer (0-based)")
    p.add_argument("--facet", choices=("query", "key", "value"))
    p.add_argument("--register", choices=REGISTER_MODES)
    p.add_argument("--ransac-iters", type=int)
    p.add_argument("--ransac-thresh-px", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha-t", type=float)
    p.add_argument("--confidence", type=float)
    p.add_argument("--gt", choices=GT_CHOICES)
    p.add_argument("--average", choices=AVERAGE_CHOICES)
    p.add_argument("--size", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


_FLAG_PATHS = {
    "backend": "backend",
    "weights_path": "weights_path",
    "layer": "layer",
    "facet": "facet",
    "register": "register",
    "ransac_iters": "ransac.max_iterations",
    "ransac_thresh_px": "ransac.inlier_threshold",
    "seed": "ransac.random_seed",
    "alpha_t": "match.alpha_t",
    "confidence": "match.confidence",
    "gt": "eval.gt",
    "average": "eval.average",
    "size": "eval.size",
    "workers": "eval.workers",
}


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="scenechange", description="Zero-shot scene change detection")
    sub = parser.add_subparsers(dest="command", required=True)

    det = sub.add_parser("detect", parents=[common], help="change mask for one image pair")
    det.add_argument("img0")
    det.add_argument("img1")
    det.add_argument("-o", "--out", required=True, help="output mask PNG")
    det.add_argument("--emit-intermediates", action="store_true",
                     help="also write similarity heatmap, pseudo-mask and proposal overlay")

    ev = sub.add_parser("evaluate", parents=[common], help="run the pipeline over datasets")
    ev.add_argument("roots", nargs="+")
    ev.add_argument("--layout", choices=tuple(LAYOUTS), default="scd")
    ev.add_argument("--out-format", action="append", choices=FORMATS)
    ev.add_argument("--out-dir", default=".")

    ext = sub.add_parser("score-external", parents=[common], help="score third-party predictions")
    ext.add_argument("pred_dir")
    ext.add_argument("root")
    ext.add_argument("--layout", choices=tuple(LAYOUTS), default="scd")
    ext.add_argument("--out-format", action="append", choices=FORMATS)
    ext.add_argument("--out-dir", default=".")
    return parser


def effective_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config and not Path(args.config).is_file():
        raise FileNotFoundError(f"no such file: {args.config}")
    cfg = load_config(args.config)
    overrides = {path: getattr(args, flag) for flag, path in _FLAG_PATHS.items()
                 if getattr(args, flag, None) is not None}
    return with_overrides(cfg, overrides)


# ---- detect ------------------------------------------------------------------------

def _heatmap(similarity: np.ndarray) -> np.ndarray:
    scaled = np.round((np.clip(similarity, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    return cv2.cvtColor(cv2.applyColorMap(scaled, cv2.COLORMAP_JET), cv2.COLOR_BGR2RGB)


def _overlay(image: np.ndarray, result: ChangeMask) -> np.ndarray:
    out = image.astype(np.float64)
    palette = np.array([[230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200], [245, 130, 48]], float)
    for i, m in enumerate(result.retained_masks):
        out[m] = 0.5 * out[m] + 0.5 * palette[i % len(palette)]
    return np.round(out).astype(np.uint8)


def cmd_detect(args, cfg: PipelineConfig) -> int:
    for path in (args.img0, args.img1):
        if not Path(path).is_file():
            raise FileNotFoundError(f"no such file: {path}")
    img0 = read_image(args.img0, cfg.eval.size)
    img1 = read_image(args.img1, cfg.eval.size)
    backend = make_backend(cfg.backend, cfg.weights_path)
    result = detect_changes(img0, img1, cfg, backend)

    out = Path(args.out)
    write_mask(result.mask, out)
    written = [str(out)]
    if args.emit_intermediates:
        stem = out.with_suffix("")
        extras = [f"{stem}_similarity.png", f"{stem}_pseudo.png", f"{stem}_overlay.png"]
        write_image(_heatmap(result.similarity.data), extras[0])
        write_mask(result.pseudo.mask, extras[1])
        write_image(_overlay(img0, result), extras[2])
        written += extras
    summary = {
        "outputs": written,
        "changed_pixels": result.area,
        "retained_proposals": len(result.retained_proposals),
        "pseudo_branch": result.pseudo.branch,
        "registration": result.registration,
        "config": cfg.snapshot(),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# ---- evaluate / score-external -----------------------------------------------------

def _write_reports(report, args) -> None:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt in dict.fromkeys(args.out_format or ["json"]):
        (out_dir / f"report.{fmt}").write_bytes(emit_report(report, fmt))
    sys.stdout.write(emit_report(report, "md").decode())


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    manifests = [load_dataset(root, args.layout, size=cfg.eval.size) for root in args.roots]
    backend = make_backend(cfg.backend, cfg.weights_path)
    report = run_protocol(manifests, cfg, backend)
    _write_reports(report, args)
    return EXIT_INTERNAL if not report.per_dataset else EXIT_OK


def cmd_score_external(args, cfg: PipelineConfig) -> int:
    if not Path(args.pred_dir).is_dir():
        raise FileNotFoundError(f"no such directory: {args.pred_dir}")
    manifest = load_dataset(args.root, args.layout, size=cfg.eval.size)
    report = score_external([manifest], [args.pred_dir], cfg.eval.size, cfg.eval.gt, cfg.eval.average)
    _write_reports(report, args)
    return EXIT_INTERNAL if not report.per_dataset else EXIT_OK


COMMANDS = {"detect": cmd_detect, "evaluate": cmd_evaluate, "score-external": cmd_score_external}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        return COMMANDS[args.command](args, cfg)
    except (FileNotFoundError, LayoutError, PairingError, BackendUnavailable,
            configparser.Error, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
