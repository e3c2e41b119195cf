from .base import (
    FACET_KINDS,
    Backend,
    BackendUnavailable,
    EmbeddingMap,
    EmptyMaskError,
    FacetStack,
    LayerRangeError,
    MaskEmbedding,
    MaskProposal,
    ProposerConfig,
    as_image,
    downscale_mask,
    filter_proposals,
    mask_embedding,
)
from .synthetic import SyntheticBackend

BACKENDS = ("synthetic", "vith-adapter")


def make_backend(name: str = "synthetic", weights_path: str | None = None, **kwargs) -> Backend:
    if name == "synthetic":
        return SyntheticBackend(**kwargs)
    if name == "vith-adapter":
        from .sam import SamVitHBackend

        return SamVitHBackend(weights_path, **kwargs)
    raise ValueError(f"unknown backend {name!r}; choose from {', '.join(BACKENDS)}")


__all__ = [
    "BACKENDS",
    "FACET_KINDS",
    "Backend",
    "BackendUnavailable",
    "EmbeddingMap",
    "EmptyMaskError",
    "FacetStack",
    "LayerRangeError",
    "MaskEmbedding",
    "MaskProposal",
    "ProposerConfig",
    "SyntheticBackend",
    "as_image",
    "downscale_mask",
    "filter_proposals",
    "make_backend",
    "mask_embedding",
]
