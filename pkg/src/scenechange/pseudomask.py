"""Initial pseudo-mask: facet correlation, MAD normalisation, skew-adaptive threshold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import Backend, FacetStack

UNIFORM_EPS = 1e-12


@dataclass(frozen=True)
class SimilarityMap:
    data: np.ndarray  # (H, W) float64

    @property
    def value_range(self) -> tuple[float, float]:
        return float(self.data.min()), float(self.data.max())


@dataclass(frozen=True)
class ThresholdParams:
    b_right: float = 0.05
    s_right: float = 0.1
    b_left: float = 0.7
    s_left: float = 1.0
    c: float = 1.0
    skew_band: float = 0.2
    z_value: float = -0.52

    def __post_init__(self):
        if self.skew_band < 0:
            raise ValueError("skew_band must be >= 0")


@dataclass(frozen=True)
class PseudoMask:
    mask: np.ndarray  # bool (H, W)
    threshold_used: float
    skew: float
    branch: str  # "right", "left", "moderate" or "uniform"


def bilinear_resize(grid: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Half-pixel-centre bilinear resize of a 2-D map (edge-clamped).

    Written as ``a + (b - a) * t`` so constant regions stay bit-exact.
    """
    grid = np.asarray(grid, dtype=np.float64)

    def axis_weights(n_in: int, n_out: int):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    H, W = size
    lo, hi, t = axis_weights(grid.shape[0], H)
    rows = grid[lo] + (grid[hi] - grid[lo]) * t[:, None]
    lo, hi, t = axis_weights(grid.shape[1], W)
    return rows[:, lo] + (rows[:, hi] - rows[:, lo]) * t[None, :]


def head_cosine(f0: FacetStack, f1: FacetStack) -> np.ndarray:
    """Per-head, per-token cosine similarity, shaped (N, h, w).

    Zero-norm feature vectors get similarity 0.
    """
    if (f0.kind, f0.layer) != (f1.kind, f1.layer):
        raise ValueError(f"facet provenance differs: {(f0.kind, f0.layer)} vs {(f1.kind, f1.layer)}")
    if f0.data.shape != f1.data.shape:
        raise ValueError(f"facet shapes differ: {f0.data.shape} vs {f1.data.shape}")
    a = f0.data.astype(np.float64)
    b = f1.data.astype(np.float64)
    dot = (a * b).sum(axis=-1)
    # sqrt(|a|^2 |b|^2) is symmetric in (a, b) and gives exactly 1 for a == b
    denom = np.sqrt((a * a).sum(axis=-1) * (b * b).sum(axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, dot / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(cos, -1.0, 1.0)


def correlate_heads(f0: FacetStack, f1: FacetStack, size: tuple[int, int] | None = None) -> SimilarityMap:
    """Head-averaged cosine similarity, bilinearly upsampled to ``size`` (H, W).

    With ``size=None`` the map stays on the token grid.
    """
    cos = head_cosine(f0, f1)
    mean = cos.sum(axis=0) / cos.shape[0]
    return SimilarityMap(mean if size is None else bilinear_resize(mean, size))


def skewness(values) -> float:
    """Population (Fisher-Pearson) skewness g1 = m3 / m2**1.5; 0 for zero variance."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("skewness needs at least 2 samples")
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 < UNIFORM_EPS:
        return 0.0
    m3 = np.mean(d * d * d)
    return float(m3 / m2 ** 1.5)


def mad(values) -> float:
    """Mean absolute deviation about the mean."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("mad of an empty sample")
    return float(np.mean(np.abs(x - x.mean())))


def normalize_map(s: SimilarityMap) -> SimilarityMap:
    """Map [mean - 3 MAD, mean + 3 MAD] linearly onto [0, 1], clipping outside.

    A map with MAD below 1e-12 is uniform and maps to all ones.
    """
    data = s.data
    spread = mad(data)
    if spread < UNIFORM_EPS:
        return SimilarityMap(np.ones_like(data, dtype=np.float64))
    lo = data.mean() - 3.0 * spread
    return SimilarityMap(np.clip((data - lo) / (6.0 * spread), 0.0, 1.0))


def adaptive_threshold(gamma: float, p: ThresholdParams = ThresholdParams()) -> float | None:
    """Skew-dependent threshold on the normalised map.

    Returns None inside the moderate band ``|gamma| <= skew_band``, where the
    caller falls back to a z-score rule on the raw map.
    """
    if gamma > p.skew_band:
        b, s = p.b_right, p.s_right
    elif gamma < -p.skew_band:
        b, s = p.b_left, p.s_left
    else:
        return None
    # sign(gamma) * gamma == |gamma|
    return float(np.clip(b + p.c * s * abs(gamma), 0.0, 1.0))


def binarize(norm: SimilarityMap, raw: SimilarityMap, gamma: float,
             p: ThresholdParams = ThresholdParams()) -> PseudoMask:
    if mad(raw.data) < UNIFORM_EPS:
        return PseudoMask(np.zeros(raw.data.shape, dtype=bool), 1.0, gamma, "uniform")
    thr = adaptive_threshold(gamma, p)
    if thr is not None:
        branch = "right" if gamma > 0 else "left"
        return PseudoMask(norm.data < thr, thr, gamma, branch)
    cut = float(raw.data.mean() + p.z_value * raw.data.std())
    return PseudoMask(raw.data < cut, cut, gamma, "moderate")


def pseudomask_from_similarity(raw: SimilarityMap, p: ThresholdParams = ThresholdParams()) -> PseudoMask:
    gamma = skewness(raw.data)
    return binarize(normalize_map(raw), raw, gamma, p)


def generate_pseudomask(img0: np.ndarray, img1: np.ndarray, backend: Backend,
                        layer: int | None = None, kind: str = "key",
                        p: ThresholdParams = ThresholdParams(),
                        return_similarity: bool = False):
    """Facets -> correlation -> adaptive binarisation. Symmetric in (img0, img1)."""
    if img0.shape != img1.shape:
        raise ValueError(f"image shapes differ: {img0.shape} vs {img1.shape}")
    layer = backend.resolve_layer(layer)
    f0 = backend.extract_facets(img0, layer, kind)
    f1 = backend.extract_facets(img1, layer, kind)
    sim = correlate_heads(f0, f1, img0.shape[:2])
    pseudo = pseudomask_from_similarity(sim, p)
    return (pseudo, sim) if return_similarity else pseudo
