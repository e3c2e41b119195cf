"""Adapter around a pretrained Segment Anything ViT-H image encoder.

Requires ``torch`` and ``segment_anything`` plus the ViT-H checkpoint; none are
hard dependencies of this package. Facets are captured from the ``qkv``
projection of one encoder block, embeddings from a block's output.
"""

from __future__ import annotations

import math
import os
import threading

import numpy as np

from .base import (
    FACET_KINDS,
    Backend,
    BackendUnavailable,
    EmbeddingMap,
    FacetStack,
    MaskProposal,
    ProposerConfig,
    as_image,
    filter_proposals,
)

PATCH = 16
ENCODER_INPUT = 1024


class SamVitHBackend(Backend):
    name = "vith-adapter"
    num_layers = 32
    num_heads = 16
    default_layer = 17

    def __init__(self, weights_path: str | None, device: str | None = None, model_type: str = "vit_h"):
        if not weights_path or not os.path.isfile(weights_path):
            raise BackendUnavailable(self.name, f"weights not found at {weights_path!r}")
        try:
            import torch
            from segment_anything import SamAutomaticMaskGenerator, SamPredictor, sam_model_registry
        except ImportError as exc:
            raise BackendUnavailable(self.name, f"missing dependency ({exc.name})") from exc

        self._torch = torch
        self._mask_generator_cls = SamAutomaticMaskGenerator
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        sam = sam_model_registry[model_type](checkpoint=weights_path)
        sam.to(device=self.device).eval()
        self.sam = sam
        self.predictor = SamPredictor(sam)
        blocks = sam.image_encoder.blocks
        self.num_layers = len(blocks)
        self.num_heads = blocks[0].attn.num_heads
        self.default_layer = min(self.default_layer, self.num_layers - 1)
        # the predictor keeps per-image state; serialise encoder runs
        self._lock = threading.Lock()

    def _valid_grid(self, height: int, width: int) -> tuple[int, int]:
        scale = ENCODER_INPUT / max(height, width)
        return math.ceil(round(height * scale) / PATCH), math.ceil(round(width * scale) / PATCH)

    def _encode(self, image: np.ndarray, module, hook_output):
        captured = {}

        def hook(_module, _inputs, output):
            captured["out"] = hook_output(output)

        with self._lock:
            handle = module.register_forward_hook(hook)
            try:
                with self._torch.no_grad():
                    self.predictor.set_image(image)
            finally:
                handle.remove()
                self.predictor.reset_image()
        return captured["out"]

    def extract_facets(self, image, layer: int, kind: str = "key") -> FacetStack:
        from segment_anything.modeling.image_encoder import window_unpartition

        image = as_image(image)
        layer = self.check_layer(layer)
        if kind not in FACET_KINDS:
            raise ValueError(f"unknown facet kind {kind!r}")
        block = self.sam.image_encoder.blocks[layer]
        grid = self.sam.image_encoder.patch_embed.proj.stride[0]
        full = ENCODER_INPUT // grid

        def to_tokens(qkv):
            ws = block.window_size
            if ws > 0:
                pad = (full + (ws - full % ws) % ws,) * 2
                qkv = window_unpartition(qkv, ws, pad, (full, full))
            return qkv[0].float().cpu().numpy()

        qkv = self._encode(image, block.attn.qkv, to_tokens)  # (H, W, 3 * dim)
        H, W, three_dim = qkv.shape
        per_head = three_dim // (3 * self.num_heads)
        qkv = qkv.reshape(H, W, 3, self.num_heads, per_head)
        facet = np.transpose(qkv[:, :, FACET_KINDS.index(kind)], (2, 0, 1, 3))
        h, w = self._valid_grid(*image.shape[:2])
        return FacetStack(kind=kind, layer=layer, data=np.ascontiguousarray(facet[:, :h, :w]).astype(np.float64))

    def extract_embedding(self, image, layer: int | None = None) -> EmbeddingMap:
        image = as_image(image)
        layer = self.last_layer if layer is None else self.check_layer(layer)
        out = self._encode(image, self.sam.image_encoder.blocks[layer],
                           lambda o: o[0].float().cpu().numpy())
        h, w = self._valid_grid(*image.shape[:2])
        return EmbeddingMap(layer=layer, data=out[:h, :w].astype(np.float64))

    def propose_masks(self, image, cfg: ProposerConfig | None = None) -> list[MaskProposal]:
        image = as_image(image)
        cfg = cfg or ProposerConfig()
        generator = self._mask_generator_cls(
            self.sam,
            points_per_side=cfg.points_per_side,
            pred_iou_thresh=cfg.predicted_iou_threshold,
            stability_score_thresh=cfg.stability_threshold,
            box_nms_thresh=cfg.nms_threshold,
        )
        with self._lock, self._torch.no_grad():
            records = generator.generate(image)
        proposals = [
            MaskProposal(
                mask=r["segmentation"],
                predicted_iou=float(np.clip(r["predicted_iou"], 0.0, 1.0)),
                stability=float(np.clip(r["stability_score"], 0.0, 1.0)),
            )
            for r in records
            if np.any(r["segmentation"])
        ]
        return filter_proposals(proposals, cfg)
