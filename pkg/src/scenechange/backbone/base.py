"""Backend contract shared by every feature/proposal provider."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

FacetKind = Literal["query", "key", "value"]
FACET_KINDS: tuple[str, ...] = ("query", "key", "value")


class BackendUnavailable(RuntimeError):
    """Raised when a backend cannot run (missing package or weights)."""

    def __init__(self, backend: str, reason: str):
        super().__init__(f"backend {backend!r} unavailable: {reason}")
        self.backend = backend


class LayerRangeError(IndexError):
    pass


class EmptyMaskError(ValueError):
    """The mask has no cells once mapped onto the embedding grid."""


def as_image(pixels) -> np.ndarray:
    """Validate and return an H x W x 3 uint8 image array."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have positive height and width")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.integer) and arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("pixel intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


@dataclass(frozen=True)
class FacetStack:
    """Per-head attention facet at one encoder layer, shaped (heads, h, w, C)."""

    kind: str
    layer: int
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in FACET_KINDS:
            raise ValueError(f"unknown facet kind {self.kind!r}")
        if self.data.ndim != 4 or self.data.shape[0] < 1:
            raise ValueError(f"facet data must be (N, h, w, C) with N >= 1, got {self.data.shape}")

    @property
    def heads(self) -> int:
        return self.data.shape[0]

    @property
    def grid(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]


@dataclass(frozen=True)
class EmbeddingMap:
    layer: int
    data: np.ndarray  # (h, w, C)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"embedding data must be (h, w, C), got {self.data.shape}")


@dataclass(frozen=True)
class ProposerConfig:
    points_per_side: int = 32
    nms_threshold: float = 0.7
    predicted_iou_threshold: float = 0.7
    stability_threshold: float = 0.7

    def __post_init__(self):
        if self.points_per_side < 1:
            raise ValueError("points_per_side must be >= 1")
        for name in ("nms_threshold", "predicted_iou_threshold", "stability_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True, eq=False)
class MaskProposal:
    mask: np.ndarray  # bool, input-image resolution
    predicted_iou: float = 1.0
    stability: float = 1.0

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        if mask.ndim != 2:
            raise ValueError("proposal mask must be 2-D")
        if not mask.any():
            raise ValueError("proposal mask must cover at least one pixel")

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))


@dataclass(frozen=True)
class MaskEmbedding:
    vector: np.ndarray
    source_mask_area: int


class Backend:
    """Feature and proposal provider.

    Subclasses set ``name``, ``num_layers``, ``num_heads`` and
    ``default_layer`` and implement the three extraction methods. Instances
    must be read-only after construction so they can be shared across threads.
    """

    name = "abstract"
    num_layers = 0
    num_heads = 0
    default_layer = 0

    @property
    def last_layer(self) -> int:
        return self.num_layers - 1

    def check_layer(self, layer: int) -> int:
        if not isinstance(layer, (int, np.integer)) or not 0 <= layer < self.num_layers:
            raise LayerRangeError(
                f"layer {layer!r} out of range for backend {self.name!r} "
                f"(valid: 0..{self.num_layers - 1})"
            )
        return int(layer)

    def resolve_layer(self, layer: int | str | None) -> int:
        """Map ``None``/"last"/"initial"/"intermediate" or an index to a layer."""
        if layer is None:
            return self.default_layer
        if isinstance(layer, str):
            named = {
                "last": self.last_layer,
                "initial": 0,
                "intermediate": self.default_layer,
            }
            if layer in named:
                return named[layer]
            try:
                layer = int(layer)
            except ValueError:
                raise LayerRangeError(f"unknown layer name {layer!r}") from None
        return self.check_layer(layer)

    def extract_facets(self, image: np.ndarray, layer: int, kind: str = "key") -> FacetStack:
        raise NotImplementedError

    def extract_embedding(self, image: np.ndarray, layer: int | None = None) -> EmbeddingMap:
        raise NotImplementedError

    def propose_masks(self, image: np.ndarray, cfg: ProposerConfig | None = None) -> list[MaskProposal]:
        raise NotImplementedError


def filter_proposals(proposals: Sequence[MaskProposal], cfg: ProposerConfig) -> list[MaskProposal]:
    return [
        p
        for p in proposals
        if p.predicted_iou >= cfg.predicted_iou_threshold and p.stability >= cfg.stability_threshold
    ]


def downscale_mask(mask: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resample of a binary mask onto an (h, w) grid.

    Each grid cell takes the mask value at the pixel nearest its centre.
    """
    mask = np.asarray(mask, dtype=bool)
    H, W = mask.shape
    h, w = grid
    rows = np.minimum(((np.arange(h) + 0.5) * H / h).astype(np.int64), H - 1)
    cols = np.minimum(((np.arange(w) + 0.5) * W / w).astype(np.int64), W - 1)
    return mask[np.ix_(rows, cols)]


def mask_embedding(emb: EmbeddingMap, mask: np.ndarray) -> MaskEmbedding:
    """Average the embedding over the cells covered by ``mask``.

    ``mask`` may be given at image resolution; it is mapped onto the
    embedding grid first. Raises EmptyMaskError if nothing survives.
    """
    mask = np.asarray(mask, dtype=bool)
    grid = emb.data.shape[:2]
    cells = mask if mask.shape == grid else downscale_mask(mask, grid)
    count = int(np.count_nonzero(cells))
    if count == 0:
        raise EmptyMaskError(f"mask of area {int(mask.sum())} is empty on the {grid} embedding grid")
    vector = emb.data[cells].sum(axis=0) / count
    return MaskEmbedding(vector=vector, source_mask_area=max(int(np.count_nonzero(mask)), 1))
