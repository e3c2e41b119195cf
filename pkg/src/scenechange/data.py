"""Dataset layouts, manifests and PNG image/mask I/O.

Two directory layouts are understood, pairing files by identical stem::

    scd/                      changevpr/
      t0/<id>.png               query/<id>.png       (t0)
      t1/<id>.png               reference/<id>.png   (t1)
      gt/<id>.png               gt_t0/<id>.png       (C_t0, used as gt_fwd)
                                gt_t1/<id>.png       (C_t1, gt_bwd)
                                gt_inter/<id>.png    (intersection mask)

Images are resized to ``size`` x ``size`` bilinearly on read, masks with
nearest neighbour and binarised at intensity > 127.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MASK_THRESHOLD = 127
DEFAULT_SIZE = 512

LAYOUTS = {
    "scd": {"t0": "t0", "t1": "t1", "gt_fwd": "gt"},
    "changevpr": {"t0": "query", "t1": "reference", "gt_fwd": "gt_t0",
                  "gt_bwd": "gt_t1", "gt_intersection": "gt_inter"},
}


class LayoutError(ValueError):
    pass


class PairingError(ValueError):
    pass


@dataclass(frozen=True)
class PairRecord:
    id: str
    path_t0: str
    path_t1: str
    gt_fwd: str
    gt_bwd: str | None = None
    gt_intersection: str | None = None

    def gt_path(self, which: str = "fwd") -> str:
        path = {"fwd": self.gt_fwd, "bwd": self.gt_bwd, "inter": self.gt_intersection}[which]
        if path is None:
            raise PairingError(f"pair {self.id!r} has no {which!r} ground-truth mask")
        return path


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    split: str
    layout: str
    records: tuple[PairRecord, ...]
    resolution: tuple[int, int] = (DEFAULT_SIZE, DEFAULT_SIZE)
    root: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "split": self.split,
            "layout": self.layout,
            "root": self.root,
            "resolution": list(self.resolution),
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _index(directory: Path) -> dict[str, Path]:
    found: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
            if path.stem in found:
                raise PairingError(f"duplicate id {path.stem!r} in {directory}")
            found[path.stem] = path
    return found


def load_dataset(root, layout: str = "scd", name: str | None = None, split: str = "test",
                 size: int = DEFAULT_SIZE) -> DatasetManifest:
    """Index a dataset tree into a manifest of records sorted by id."""
    if layout not in LAYOUTS:
        raise LayoutError(f"unknown layout {layout!r}; choose from {', '.join(LAYOUTS)}")
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"dataset root {str(root)!r} is not a directory")
    dirs = LAYOUTS[layout]
    missing = [sub for sub in dirs.values() if not (root / sub).is_dir()]
    if missing:
        raise LayoutError(f"{layout} layout at {root} is missing director{'y' if len(missing) == 1 else 'ies'}: "
                          + ", ".join(f"{m}/" for m in missing))

    indexes = {role: _index(root / sub) for role, sub in dirs.items()}
    ids0, ids1, ids_gt = set(indexes["t0"]), set(indexes["t1"]), set(indexes["gt_fwd"])
    orphans = sorted(ids0 ^ ids1)
    if orphans:
        raise PairingError(f"ids present in only one of {dirs['t0']}/ and {dirs['t1']}/: {', '.join(orphans)}")
    no_gt = sorted(ids0 - ids_gt)
    if no_gt:
        raise PairingError(f"ids without a {dirs['gt_fwd']}/ mask: {', '.join(no_gt)}")
    if not ids0:
        raise LayoutError(f"no image pairs found under {root}")

    records = []
    for pid in sorted(ids0):
        optional = {role: str(indexes[role][pid]) if pid in indexes[role] else None
                    for role in ("gt_bwd", "gt_intersection") if role in indexes}
        records.append(PairRecord(pid, str(indexes["t0"][pid]), str(indexes["t1"][pid]),
                                  str(indexes["gt_fwd"][pid]), **optional))
    return DatasetManifest(name or root.name, split, layout, tuple(records), (size, size), str(root))


def _open(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return img


def read_image(path, size: int | None = DEFAULT_SIZE) -> np.ndarray:
    img = _open(path).convert("RGB")
    if size is not None and img.size != (size, size):
        img = img.resize((size, size), Image.BILINEAR)
    return np.asarray(img, dtype=np.uint8).copy()


def read_mask(path, size: int | None = None) -> np.ndarray:
    img = _open(path).convert("L")
    if size is not None and img.size != (size, size):
        img = img.resize((size, size), Image.NEAREST)
    return np.asarray(img) > MASK_THRESHOLD


def write_mask(mask, path) -> None:
    """Write a binary mask as a single-channel PNG with values {0, 255}."""
    m = np.asarray(getattr(mask, "mask", mask), dtype=bool)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(m, 255, 0).astype(np.uint8)).save(path, format="PNG")


def write_image(pixels, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")


@dataclass
class PairData:
    id: str
    img0: np.ndarray
    img1: np.ndarray
    gt: np.ndarray


def load_pair(record: PairRecord, size: int = DEFAULT_SIZE, gt: str = "fwd") -> PairData:
    return PairData(
        record.id,
        read_image(record.path_t0, size),
        read_image(record.path_t1, size),
        read_mask(record.gt_path(gt), size),
    )
