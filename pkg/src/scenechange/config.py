"""Pipeline configuration and the sectioned key-value config file.

File format (INI, every key optional)::

    [backend]
    backend = synthetic        ; synthetic | vith-adapter
    weights_path = /models/sam_vit_h.pth
    layer = 17                 ; facet layer, 0-based; empty = backend default
    facet = key                ; query | key | value

    [proposer]
    points_per_side = 32
    nms_threshold = 0.7
    predicted_iou_threshold = 0.7
    stability_threshold = 0.7

    [threshold]
    b_right = 0.05
    ...                        ; s_right, b_left, s_left, c, skew_band, z_value

    [match]
    alpha_t = 0.65
    confidence = 0.88
    fallback_pseudo = false
    ssm_layer = last

    [registration]
    register = none            ; none | homography
    ransac_iters = 2000
    ransac_thresh_px = 3.0
    min_inliers = 8
    seed = 0

    [eval]
    gt = fwd                   ; fwd | bwd | inter
    average = macro            ; macro | micro
    size = 512
    workers = 1
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .backbone import BACKENDS, FACET_KINDS, ProposerConfig
from .pseudomask import ThresholdParams
from .registration import RansacConfig

REGISTER_MODES = ("none", "homography")
GT_CHOICES = ("fwd", "bwd", "inter")
AVERAGE_CHOICES = ("macro", "micro")


@dataclass(frozen=True)
class MatchParams:
    alpha_t: float = 0.65
    confidence: float = 0.88
    fallback_pseudo: bool = False
    ssm_layer: str = "last"

    def __post_init__(self):
        if not 0.0 < self.alpha_t <= 1.0:
            raise ValueError(f"alpha_t must lie in (0, 1], got {self.alpha_t}")
        if not -1.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [-1, 1], got {self.confidence}")


@dataclass(frozen=True)
class EvalSettings:
    gt: str = "fwd"
    average: str = "macro"
    size: int = 512
    workers: int = 1

    def __post_init__(self):
        if self.gt not in GT_CHOICES:
            raise ValueError(f"gt must be one of {GT_CHOICES}")
        if self.average not in AVERAGE_CHOICES:
            raise ValueError(f"average must be one of {AVERAGE_CHOICES}")
        if self.size < 1 or self.workers < 1:
            raise ValueError("size and workers must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    backend: str = "synthetic"
    weights_path: str | None = None
    layer: int | None = None
    facet: str = "key"
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    threshold: ThresholdParams = field(default_factory=ThresholdParams)
    match: MatchParams = field(default_factory=MatchParams)
    register: str = "none"
    ransac: RansacConfig = field(default_factory=RansacConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.facet not in FACET_KINDS:
            raise ValueError(f"facet must be one of {FACET_KINDS}")
        if self.register not in REGISTER_MODES:
            raise ValueError(f"register must be one of {REGISTER_MODES}")

    def snapshot(self) -> dict:
        """Plain-dict view with stable key order, for reports."""
        return {
            "backend": {"backend": self.backend, "weights_path": self.weights_path,
                        "layer": self.layer, "facet": self.facet},
            "proposer": asdict(self.proposer),
            "threshold": asdict(self.threshold),
            "match": asdict(self.match),
            "registration": {"register": self.register,
                             "ransac_iters": self.ransac.max_iterations,
                             "ransac_thresh_px": self.ransac.inlier_threshold,
                             "min_inliers": self.ransac.min_inliers,
                             "seed": self.ransac.random_seed},
            "eval": asdict(self.eval),
        }


# (section, key) -> (attribute path, parser)
def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str) -> int | None:
    return int(text) if text.strip() else None


def _opt_str(text: str) -> str | None:
    return text.strip() or None


_KEYS = {
    ("backend", "backend"): ("backend", str),
    ("backend", "weights_path"): ("weights_path", _opt_str),
    ("backend", "layer"): ("layer", _opt_int),
    ("backend", "facet"): ("facet", str),
    ("registration", "register"): ("register", str),
    ("registration", "ransac_iters"): ("ransac.max_iterations", int),
    ("registration", "ransac_thresh_px"): ("ransac.inlier_threshold", float),
    ("registration", "min_inliers"): ("ransac.min_inliers", int),
    ("registration", "seed"): ("ransac.random_seed", int),
    ("match", "fallback_pseudo"): ("match.fallback_pseudo", _bool),
    ("match", "ssm_layer"): ("match.ssm_layer", str),
    ("eval", "gt"): ("eval.gt", str),
    ("eval", "average"): ("eval.average", str),
    ("eval", "size"): ("eval.size", int),
    ("eval", "workers"): ("eval.workers", int),
}
for _f in fields(ProposerConfig):
    _KEYS[("proposer", _f.name)] = (f"proposer.{_f.name}", int if _f.type in (int, "int") else float)
for _f in fields(ThresholdParams):
    _KEYS[("threshold", _f.name)] = (f"threshold.{_f.name}", float)
for _name in ("alpha_t", "confidence"):
    _KEYS[("match", _name)] = (f"match.{_name}", float)


def with_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply ``{"match.alpha_t": 0.7, "register": "homography", ...}`` overrides."""
    top: dict = {}
    nested: dict[str, dict] = {}
    for path, value in overrides.items():
        if "." in path:
            group, name = path.split(".", 1)
            nested.setdefault(group, {})[name] = value
        else:
            top[path] = value
    for group, values in nested.items():
        top[group] = replace(getattr(cfg, group), **values)
    return replace(cfg, **top)


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read_string(text)
    overrides = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            entry = _KEYS.get((section, key))
            if entry is None:
                raise ValueError(f"unknown config key {section}.{key}")
            path, convert = entry
            overrides[path] = convert(raw)
    return with_overrides(base or PipelineConfig(), overrides)


def load_config(path: str | Path | None, base: PipelineConfig | None = None) -> PipelineConfig:
    if path is None:
        return base or PipelineConfig()
    return parse_config_text(Path(path).read_text(), base)
