"""Weight-free deterministic backend for desk-scale runs and tests.

Tokens are non-overlapping ``patch_size`` squares. Each token carries local
patch statistics: centred mean colour, colour standard deviation and mean
gradient magnitude. Deeper layers see those statistics after more passes of a
3x3 token-grid box filter, and head ``n`` adds ``n`` further passes, so heads
differ in spatial scale. Facets additionally carry a small coordinate
encoding. Mask embeddings are per-token histograms over a 4-level-per-channel
colour quantisation, so distinct surfaces are near-orthogonal; earlier layers
get extra box-filter passes. Proposals are connected components of an
8-level-per-channel colour quantisation, each scored 1.0 for predicted IoU and
stability.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .base import (
    Backend,
    EmbeddingMap,
    FacetStack,
    MaskProposal,
    ProposerConfig,
    as_image,
    filter_proposals,
)

# per-kind weights on (mean colour, colour std, gradient) channel groups
_KIND_WEIGHTS = {
    "query": (1.0, 1.0, 1.0),
    "key": (1.5, 0.5, 1.0),
    "value": (1.0, 1.0, 0.0),
}
_COORD_WEIGHT = 0.25
_QUANT_STEP = 32  # 256 / 8 levels
_HIST_STEP = 64  # 256 / 4 levels -> 64 histogram bins


def _box3(f: np.ndarray) -> np.ndarray:
    # explicit 9-tap sum keeps constant fields bit-constant (running-sum filters do not)
    h, w = f.shape[:2]
    p = np.pad(f, ((1, 1), (1, 1), (0, 0)), mode="edge")
    acc = np.zeros_like(f)
    for dy in range(3):
        for dx in range(3):
            acc = acc + p[dy:dy + h, dx:dx + w]
    return acc / 9.0


def _equal_value_components(codes: np.ndarray) -> np.ndarray:
    """4-connected components of equal-valued pixels, labelled 0..k-1."""
    h, w = codes.shape
    idx = np.arange(h * w).reshape(h, w)
    right = codes[:, :-1] == codes[:, 1:]
    down = codes[:-1, :] == codes[1:, :]
    rows = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    cols = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(h * w, h * w))
    _, labels = connected_components(graph, directed=False)
    return labels.reshape(h, w)


def _smooth(f: np.ndarray, passes: int) -> np.ndarray:
    for _ in range(passes):
        f = _box3(f)
    return f


class SyntheticBackend(Backend):
    name = "synthetic"

    def __init__(self, patch_size: int = 8, num_layers: int = 4, num_heads: int = 2,
                 default_layer: int = 1, min_area_fraction: float = 5e-4):
        if patch_size < 1 or num_layers < 1 or num_heads < 1:
            raise ValueError("patch_size, num_layers and num_heads must be >= 1")
        self.patch_size = patch_size
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.default_layer = min(default_layer, num_layers - 1)
        self.min_area_fraction = min_area_fraction

    def grid_shape(self, height: int, width: int) -> tuple[int, int]:
        p = self.patch_size
        return -(-height // p), -(-width // p)

    def _patch_stats(self, image: np.ndarray) -> np.ndarray:
        """(h, w, 7) token statistics: mean colour (3), colour std (3), gradient (1)."""
        x = image.astype(np.float64) / 127.5 - 1.0
        gray = x.mean(axis=2)
        gy, gx = np.gradient(gray)
        grad = np.hypot(gx, gy)[..., None]
        stack = np.concatenate([x, grad], axis=2)

        p = self.patch_size
        H, W = image.shape[:2]
        h, w = self.grid_shape(H, W)
        stack = np.pad(stack, ((0, h * p - H), (0, w * p - W), (0, 0)), mode="edge")
        blocks = stack.reshape(h, p, w, p, 4)
        mean = blocks.mean(axis=(1, 3))
        std = blocks[..., :3].std(axis=(1, 3))
        return np.concatenate([mean[..., :3], std, mean[..., 3:]], axis=2)

    def _colour_hist(self, image: np.ndarray) -> np.ndarray:
        q = (image // _HIST_STEP).astype(np.int64)
        codes = q[..., 0] * 16 + q[..., 1] * 4 + q[..., 2]
        p = self.patch_size
        H, W = codes.shape
        h, w = self.grid_shape(H, W)
        codes = np.pad(codes, ((0, h * p - H), (0, w * p - W)), mode="edge")
        onehot = np.eye(64)[codes]
        return onehot.reshape(h, p, w, p, 64).mean(axis=(1, 3))

    @staticmethod
    def _coords(h: int, w: int) -> np.ndarray:
        yy, xx = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
        enc = np.stack([np.sin(np.pi * yy), np.cos(np.pi * yy),
                        np.sin(np.pi * xx), np.cos(np.pi * xx)], axis=2)
        return _COORD_WEIGHT * enc

    def extract_facets(self, image, layer: int, kind: str = "key") -> FacetStack:
        image = as_image(image)
        layer = self.check_layer(layer)
        if kind not in _KIND_WEIGHTS:
            raise ValueError(f"unknown facet kind {kind!r}")
        stats = self._patch_stats(image)
        wm, ws, wg = _KIND_WEIGHTS[kind]
        weights = np.array([wm] * 3 + [ws] * 3 + [wg])
        coords = self._coords(*stats.shape[:2])
        heads = []
        for n in range(self.num_heads):
            f = _smooth(stats, layer // 2 + n) * weights
            heads.append(np.concatenate([f, coords], axis=2))
        return FacetStack(kind=kind, layer=layer, data=np.stack(heads))

    def extract_embedding(self, image, layer: int | None = None) -> EmbeddingMap:
        image = as_image(image)
        layer = self.last_layer if layer is None else self.check_layer(layer)
        passes = (self.last_layer - layer) // 2
        return EmbeddingMap(layer=layer, data=_smooth(self._colour_hist(image), passes))

    def propose_masks(self, image, cfg: ProposerConfig | None = None) -> list[MaskProposal]:
        image = as_image(image)
        cfg = cfg or ProposerConfig()
        q = (image // _QUANT_STEP).astype(np.int32)
        codes = q[..., 0] * 64 + q[..., 1] * 8 + q[..., 2]
        min_area = max(1, int(self.min_area_fraction * codes.size))

        labels = _equal_value_components(codes)
        ids, firsts, areas = np.unique(labels.ravel(), return_index=True, return_counts=True)
        found = [(-int(a), int(f), labels, int(i)) for i, f, a in zip(ids, firsts, areas) if a >= min_area]
        found.sort(key=lambda t: (t[0], t[1]))
        # prompt-grid analogue: at most points_per_side**2 proposals, largest first
        found = found[: cfg.points_per_side ** 2]
        proposals = [MaskProposal(mask=labels == idx) for _, _, labels, idx in found]
        return filter_proposals(proposals, cfg)
