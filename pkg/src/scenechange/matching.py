"""Object-level refinement of the pseudo-mask and the full detection pipeline.

Geometric intersection matching keeps proposals that mostly lie inside the
pseudo-mask; semantic similarity matching then drops those whose mask
embeddings barely differ across time. Both images contribute proposals, and
the pseudo-mask and embedding cosines are symmetric, so swapping the inputs
yields the same change mask.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backbone import (
    Backend,
    EmbeddingMap,
    EmptyMaskError,
    MaskProposal,
    as_image,
    make_backend,
    mask_embedding,
)
from .config import MatchParams, PipelineConfig
from .pseudomask import PseudoMask, SimilarityMap, generate_pseudomask
from .registration import RegistrationError, Transform, estimate_transform, warp

log = logging.getLogger(__name__)

__all__ = [
    "ChangeMask",
    "MatchParams",
    "Retained",
    "compose_change_mask",
    "cosine",
    "detect_changes",
    "gim_filter",
    "intersection_ratio",
    "ssm_filter",
]


@dataclass(frozen=True)
class Retained:
    """Provenance of one proposal that made it into the change mask."""

    source: str  # "t0" or "t1"
    alpha: float
    cosine: float
    area: int


@dataclass(frozen=True, eq=False)
class ChangeMask:
    mask: np.ndarray  # bool (H, W)
    retained_proposals: list[Retained] = field(default_factory=list)
    pseudo: PseudoMask | None = None
    similarity: SimilarityMap | None = None
    retained_masks: list[np.ndarray] = field(default_factory=list)
    registration: str = "none"
    transform: Transform | None = None

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))


def intersection_ratio(proposal: MaskProposal, pseudo: PseudoMask | np.ndarray) -> float:
    """Fraction of the proposal's pixels that the pseudo-mask also flags."""
    pm = pseudo.mask if isinstance(pseudo, PseudoMask) else np.asarray(pseudo, dtype=bool)
    if proposal.mask.shape != pm.shape:
        raise ValueError(f"proposal {proposal.mask.shape} and pseudo-mask {pm.shape} differ in size")
    area = proposal.area
    if area == 0:
        raise ValueError("zero-area proposal")
    return np.count_nonzero(proposal.mask & pm) / area


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, symmetric bit-for-bit in its arguments; 0 for zero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    denom = np.sqrt(np.dot(u, u) * np.dot(v, v))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / denom, -1.0, 1.0))


def _gim(proposals, pseudo, p: MatchParams):
    scored = [(prop, intersection_ratio(prop, pseudo)) for prop in proposals]
    return [(prop, a) for prop, a in scored if a > p.alpha_t]


def _ssm(candidates, emb0: EmbeddingMap, emb1: EmbeddingMap, p: MatchParams):
    kept = []
    for prop, *rest in candidates:
        try:
            m0 = mask_embedding(emb0, prop.mask)
            m1 = mask_embedding(emb1, prop.mask)
        except EmptyMaskError:
            continue  # too small to verify on the embedding grid
        c = cosine(m0.vector, m1.vector)
        if c < p.confidence:
            kept.append((prop, *rest, c))
    return kept


def gim_filter(proposals: Sequence[MaskProposal], pseudo: PseudoMask,
               p: MatchParams = MatchParams()) -> list[MaskProposal]:
    """Proposals whose intersection ratio strictly exceeds ``alpha_t``, in order."""
    return [prop for prop, _ in _gim(proposals, pseudo, p)]


def ssm_filter(retained: Sequence[MaskProposal], emb0: EmbeddingMap, emb1: EmbeddingMap,
               p: MatchParams = MatchParams()) -> list[MaskProposal]:
    """Proposals whose cross-time mask-embedding cosine is below ``confidence``."""
    return [prop for prop, _ in _ssm([(prop,) for prop in retained], emb0, emb1, p)]


def compose_change_mask(kept_t0: Sequence[MaskProposal], kept_t1: Sequence[MaskProposal],
                        shape: tuple[int, int] | None = None) -> ChangeMask:
    """Pixelwise union of every retained proposal from both images."""
    masks = [p.mask for p in kept_t0] + [p.mask for p in kept_t1]
    if shape is None:
        if not masks:
            raise ValueError("shape is required when both lists are empty")
        shape = masks[0].shape
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        if m.shape != out.shape:
            raise ValueError(f"mask shape {m.shape} differs from {out.shape}")
        out |= m
    provenance = [Retained(src, float("nan"), float("nan"), p.area)
                  for src, side in (("t0", kept_t0), ("t1", kept_t1)) for p in side]
    return ChangeMask(mask=out, retained_proposals=provenance, retained_masks=masks)


def _register(img0, img1, cfg: PipelineConfig):
    if cfg.register == "none":
        return img1, "none", None
    try:
        t = estimate_transform(img0, img1, cfg.ransac)
    except RegistrationError as exc:
        log.warning("registration failed (%s); falling back to identity", exc)
        return img1, "identity-fallback", None
    return warp(img1, t), "homography", t


def detect_changes(img0, img1, cfg: PipelineConfig | None = None,
                   backend: Backend | None = None) -> ChangeMask:
    """Run the full pipeline; the result lives in img0's frame.

    With ``register="none"`` the output is identical under argument swap.
    """
    cfg = cfg or PipelineConfig()
    img0, img1 = as_image(img0), as_image(img1)
    if img0.shape != img1.shape:
        raise ValueError(f"image shapes differ: {img0.shape} vs {img1.shape}")
    if backend is None:
        backend = make_backend(cfg.backend, cfg.weights_path)

    img1, reg_mode, transform = _register(img0, img1, cfg)

    pseudo, sim = generate_pseudomask(img0, img1, backend, cfg.layer, cfg.facet,
                                      cfg.threshold, return_similarity=True)
    ssm_layer = backend.resolve_layer(cfg.match.ssm_layer)
    emb0 = backend.extract_embedding(img0, ssm_layer)
    emb1 = backend.extract_embedding(img1, ssm_layer)

    kept = []
    for source, image in (("t0", img0), ("t1", img1)):
        proposals = backend.propose_masks(image, cfg.proposer)
        for prop, alpha, cos in _ssm(_gim(proposals, pseudo, cfg.match), emb0, emb1, cfg.match):
            kept.append((source, prop, alpha, cos))

    out = np.zeros(img0.shape[:2], dtype=bool)
    for _, prop, _, _ in kept:
        out |= prop.mask
    if cfg.match.fallback_pseudo and not kept:
        out |= pseudo.mask

    return ChangeMask(
        mask=out,
        retained_proposals=[Retained(s, float(a), float(c), prop.area) for s, prop, a, c in kept],
        pseudo=pseudo,
        similarity=sim,
        retained_masks=[prop.mask for _, prop, _, _ in kept],
        registration=reg_mode,
        transform=transform,
    )
