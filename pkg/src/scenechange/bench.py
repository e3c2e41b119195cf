"""Cross-domain evaluation: both temporal orders, temporal consistency, reports.

A training-free pipeline gets one assessment per dataset. Every pair is
scored in both input orders against the same ground truth (expressed in the
t0 frame), and TC compares the two predictions. Per-pair work may run in
threads; results are reduced in sorted id order so reports are reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .backbone import Backend, BackendUnavailable, make_backend
from .config import PipelineConfig
from .data import DatasetManifest, PairRecord, read_image, read_mask
from .matching import detect_changes
from .metrics import Confusion, MetricRow, confusion, mean_rows, metric_row, tc_counts
from .registration import warp_mask

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DIRECTIONS = ("t0->t1", "t1->t0")
_ARROWS = {"t0->t1": "t0→t1", "t1->t0": "t1→t0"}
METRIC_FIELDS = ("f1", "precision", "recall", "iou_change", "iou_nochange", "miou")

# (record, size) -> (forward mask, backward mask in the t0 frame)
Predictor = Callable[[PairRecord, int], "tuple[np.ndarray, np.ndarray]"]


class MissingPredictionError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class PairScore:
    id: str
    fwd: Confusion
    bwd: Confusion
    tc_inter: int
    tc_union: int

    @property
    def tc(self) -> float:
        return 1.0 if self.tc_union == 0 else self.tc_inter / self.tc_union


@dataclass(frozen=True)
class DatasetResult:
    name: str
    split: str
    pairs: int
    fwd: MetricRow
    bwd: MetricRow
    tc: float
    skipped: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "pairs": self.pairs,
            "t0->t1": self.fwd.to_dict(),
            "t1->t0": self.bwd.to_dict(),
            "tc": self.tc,
            "skipped": [{"id": i, "error": e} for i, e in self.skipped],
        }


@dataclass
class EvalReport:
    per_dataset: dict[str, DatasetResult]
    average: MetricRow | None
    config: dict
    failed: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "per_dataset": {name: r.to_dict() for name, r in self.per_dataset.items()},
            "average": None if self.average is None else self.average.to_dict(),
            "failed": dict(self.failed),
            "config": self.config,
        }


def pipeline_predictor(cfg: PipelineConfig, backend: Backend) -> Predictor:
    def predict(record: PairRecord, size: int):
        img0 = read_image(record.path_t0, size)
        img1 = read_image(record.path_t1, size)
        fwd = detect_changes(img0, img1, cfg, backend)
        bwd = detect_changes(img1, img0, cfg, backend)
        bwd_mask = bwd.mask
        if bwd.transform is not None:
            # bwd lives in img1's frame; its transform maps img0 coords there
            bwd_mask = warp_mask(bwd_mask, bwd.transform.inverse())
        return fwd.mask, bwd_mask

    return predict


def external_predictor(pred_dir) -> Predictor:
    """Read ``<id>_fwd.png`` / ``<id>_bwd.png``, both in the t0 frame."""
    pred_dir = Path(pred_dir)

    def predict(record: PairRecord, size: int):
        return (read_mask(pred_dir / f"{record.id}_fwd.png", size),
                read_mask(pred_dir / f"{record.id}_bwd.png", size))

    return predict


def check_external_predictions(manifest: DatasetManifest, pred_dir) -> None:
    pred_dir = Path(pred_dir)
    missing = [f"{r.id}_{d}" for r in manifest.records for d in ("fwd", "bwd")
               if not (pred_dir / f"{r.id}_{d}.png").is_file()]
    if missing:
        raise MissingPredictionError(f"missing predictions in {pred_dir}: {', '.join(missing)}")


def _score_pair(record: PairRecord, predict: Predictor, size: int, gt: str) -> PairScore:
    truth = read_mask(record.gt_path(gt), size)
    fwd, bwd = predict(record, size)
    inter, union = tc_counts(fwd, bwd)
    return PairScore(record.id, confusion(fwd, truth), confusion(bwd, truth), inter, union)


def aggregate(scores: Sequence[PairScore], average: str = "macro") -> tuple[MetricRow, MetricRow, float]:
    """Combine per-pair scores into (forward row, backward row, TC)."""
    if not scores:
        raise ValueError("no scored pairs")
    if average == "macro":
        tc = math.fsum(s.tc for s in scores) / len(scores)
        fwd = mean_rows([metric_row(s.fwd) for s in scores])
        bwd = mean_rows([metric_row(s.bwd) for s in scores])
    elif average == "micro":
        inter = sum(s.tc_inter for s in scores)
        union = sum(s.tc_union for s in scores)
        tc = 1.0 if union == 0 else inter / union
        fwd = metric_row(sum((s.fwd for s in scores[1:]), scores[0].fwd))
        bwd = metric_row(sum((s.bwd for s in scores[1:]), scores[0].bwd))
    else:
        raise ValueError(f"unknown averaging mode {average!r}")
    return _with_tc(fwd, tc), _with_tc(bwd, tc), tc


def _with_tc(row: MetricRow, tc: float) -> MetricRow:
    return MetricRow(**{**row.to_dict(), "tc": tc})


def evaluate_manifest(manifest: DatasetManifest, predict: Predictor, size: int = 512,
                      gt: str = "fwd", average: str = "macro", workers: int = 1) -> DatasetResult:
    def run(record: PairRecord):
        try:
            return _score_pair(record, predict, size, gt)
        except BackendUnavailable:
            raise
        except Exception as exc:  # noqa: BLE001 - recorded per pair
            log.warning("pair %s skipped: %s", record.id, exc)
            return f"{type(exc).__name__}: {exc}"

    records = sorted(manifest.records, key=lambda r: r.id)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = dict(zip((r.id for r in records), pool.map(run, records)))
    else:
        outcomes = {r.id: run(r) for r in records}

    scores = [outcomes[i] for i in sorted(outcomes) if isinstance(outcomes[i], PairScore)]
    skipped = tuple((i, outcomes[i]) for i in sorted(outcomes) if isinstance(outcomes[i], str))
    if not scores:
        raise RuntimeError(f"every pair in {manifest.name!r} failed")
    fwd, bwd, tc = aggregate(scores, average)
    return DatasetResult(manifest.name, manifest.split, len(scores), fwd, bwd, tc, skipped)


def run_eval(manifest: DatasetManifest, cfg: PipelineConfig | None = None,
             backend: Backend | None = None) -> DatasetResult:
    """Score the detection pipeline on one dataset in both temporal orders."""
    cfg = cfg or PipelineConfig()
    backend = backend or make_backend(cfg.backend, cfg.weights_path)
    ev = cfg.eval
    return evaluate_manifest(manifest, pipeline_predictor(cfg, backend), ev.size, ev.gt, ev.average, ev.workers)


def _unique_names(manifests: Sequence[DatasetManifest]) -> list[str]:
    seen: dict[str, int] = {}
    names = []
    for m in manifests:
        seen[m.name] = seen.get(m.name, 0) + 1
        names.append(m.name if seen[m.name] == 1 else f"{m.name}#{seen[m.name]}")
    return names


def _build_report(manifests, evaluate_one, config: dict) -> EvalReport:
    if not manifests:
        raise ValueError("at least one dataset manifest is required")
    per_dataset: dict[str, DatasetResult] = {}
    failed: dict[str, str] = {}
    for name, manifest in zip(_unique_names(manifests), manifests):
        try:
            per_dataset[name] = evaluate_one(manifest)
        except BackendUnavailable:
            raise
        except Exception as exc:  # noqa: BLE001 - recorded per dataset
            log.error("dataset %s failed: %s", name, exc)
            failed[name] = f"{type(exc).__name__}: {exc}"
    rows = [row for r in per_dataset.values() for row in (r.fwd, r.bwd)]
    average = mean_rows(rows) if rows else None
    return EvalReport(per_dataset, average, config, failed)


def run_protocol(manifests: Sequence[DatasetManifest], cfg: PipelineConfig | None = None,
                 backend: Backend | None = None) -> EvalReport:
    """One assessment per dataset plus the unweighted cross-dataset average."""
    cfg = cfg or PipelineConfig()
    backend = backend or make_backend(cfg.backend, cfg.weights_path)
    config = {"predictions": "pipeline", **cfg.snapshot(),
              "datasets": [m.to_dict() | {"records": len(m)} for m in manifests]}
    return _build_report(manifests, lambda m: run_eval(m, cfg, backend), config)


def score_external(manifests: Sequence[DatasetManifest], pred_dirs: Sequence, size: int = 512,
                   gt: str = "fwd", average: str = "macro") -> EvalReport:
    """Score third-party predictions, one prediction directory per manifest."""
    if len(pred_dirs) != len(manifests):
        raise ValueError("need one prediction directory per dataset")
    for manifest, pred_dir in zip(manifests, pred_dirs):
        check_external_predictions(manifest, pred_dir)
    dirs = {id(m): d for m, d in zip(manifests, pred_dirs)}
    config = {"predictions": "external",
              "prediction_dirs": [str(d) for d in pred_dirs],
              "eval": {"gt": gt, "average": average, "size": size},
              "datasets": [m.to_dict() | {"records": len(m)} for m in manifests]}
    return _build_report(
        manifests,
        lambda m: evaluate_manifest(m, external_predictor(dirs[id(m)]), size, gt, average),
        config,
    )


# ---- rendering ---------------------------------------------------------------------

def _csv_columns() -> list[str]:
    cols = ["dataset", "pairs"]
    for metric in METRIC_FIELDS:
        cols += [f"{metric}_{d.replace('->', '_')}" for d in DIRECTIONS]
    return cols + ["tc"]


def _csv_row(name: str, pairs, fwd: MetricRow, bwd: MetricRow, tc: float) -> list:
    row = [name, pairs]
    for metric in METRIC_FIELDS:
        row += [repr(getattr(fwd, metric)), repr(getattr(bwd, metric))]
    return row + [repr(tc)]


def render_markdown(report: EvalReport) -> str:
    """Benchmark-style table: t0→t1, t1→t0 and TC per dataset, then Avg."""
    names = list(report.per_dataset)
    header = ["Metric"]
    for name in names:
        header += [f"{name} {_ARROWS['t0->t1']}", f"{name} {_ARROWS['t1->t0']}", f"{name} TC"]
    header.append("Avg.")
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for label, metric in (("F1", "f1"), ("mIoU", "miou")):
        cells = [label]
        for name in names:
            r = report.per_dataset[name]
            cells += [f"{100 * getattr(r.fwd, metric):.1f}", f"{100 * getattr(r.bwd, metric):.1f}", f"{r.tc:.2f}"]
        avg = report.average
        cells.append("-" if avg is None else f"{100 * getattr(avg, metric):.1f}")
        lines.append("| " + " | ".join(cells) + " |")
    for name, err in report.failed.items():
        lines.append(f"\nFAILED {name}: {err}")
    return "\n".join(lines) + "\n"


def emit_report(report: EvalReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_csv_columns())
        for name, r in report.per_dataset.items():
            writer.writerow(_csv_row(name, r.pairs, r.fwd, r.bwd, r.tc))
        if report.average is not None:
            avg = report.average
            writer.writerow(_csv_row("Avg.", sum(r.pairs for r in report.per_dataset.values()), avg, avg, avg.tc))
        return buf.getvalue().encode()
    if fmt in ("md", "markdown", "markdown-table"):
        return render_markdown(report).encode()
    raise ValueError(f"unknown report format {fmt!r}")
