"""Coarse bi-temporal alignment: ORB keypoints + seeded RANSAC homography.

A Transform's matrix maps coordinates of the *second* image into the frame of
the first, so ``warp(img_b, t)`` resamples img_b onto img_a's pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .backbone import as_image

DET_EPS = 1e-8


class RegistrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 2000
    inlier_threshold: float = 3.0
    min_inliers: int = 8
    random_seed: int = 0
    confidence: float = 0.999

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be > 0")


@dataclass(frozen=True)
class Transform:
    matrix: np.ndarray
    inlier_count: int = 0
    inlier_ratio: float = 1.0
    inliers: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3))

    @property
    def invertible(self) -> bool:
        return bool(np.isfinite(self.matrix).all() and abs(np.linalg.det(self.matrix)) > DET_EPS)

    def inverse(self) -> "Transform":
        if not self.invertible:
            raise ValueError("transform is not invertible")
        return Transform(np.linalg.inv(self.matrix), self.inlier_count, self.inlier_ratio)


def translation(dx: float, dy: float) -> Transform:
    return Transform(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))


def project(matrix: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.c_[pts, np.ones(len(pts))] @ matrix.T
    w = ph[:, 2:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ph[:, :2] / w
    return np.where(np.isfinite(out), out, np.inf)


def reprojection_error(matrix: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(project(matrix, src) - dst, axis=1)


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Normalised direct linear transform; None for degenerate point sets."""
    if len(src) < 4:
        return None
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = np.c_[src, np.ones(len(src))] @ Ts.T
    d = np.c_[dst, np.ones(len(dst))] @ Td.T
    x, y = s[:, 0], s[:, 1]
    u, v = d[:, 0], d[:, 1]
    zeros, ones = np.zeros(len(s)), np.ones(len(s))
    A = np.empty((2 * len(s), 9))
    A[0::2] = np.c_[-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u]
    A[1::2] = np.c_[zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v]
    _, sv, vt = np.linalg.svd(A)
    if sv[7] < 1e-10 * sv[0]:
        return None
    H = np.linalg.inv(Td) @ vt[-1].reshape(3, 3) @ Ts
    if abs(H[2, 2]) < 1e-12 or not np.isfinite(H).all():
        return None
    H = H / H[2, 2]
    if abs(np.linalg.det(H)) <= DET_EPS:
        return None
    return H


def _collinear(pts: np.ndarray, eps: float = 1e-6) -> bool:
    for i in range(4):
        a, b, c = np.delete(pts, i, axis=0)
        if abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) < eps:
            return True
    return False


def _iterations_needed(inlier_ratio: float, confidence: float) -> int:
    miss = 1.0 - inlier_ratio ** 4
    if miss <= 0.0:
        return 1
    if miss >= 1.0:
        return 10 ** 9
    return int(np.ceil(np.log(1.0 - confidence) / np.log(miss)))


def ransac_homography(matches, cfg: RansacConfig = RansacConfig()) -> Transform:
    """Fit a homography mapping ``src`` onto ``dst`` for (src, dst) point pairs.

    Random 4-point samples from a seeded generator; the sample with most
    inliers wins (first one on ties), then the model is refit on its inliers
    until the inlier set stops growing.
    """
    pairs = np.asarray(matches, dtype=np.float64).reshape(-1, 2, 2)
    n = len(pairs)
    if n < 4:
        raise ValueError(f"need at least 4 matches, got {n}")
    src, dst = pairs[:, 0], pairs[:, 1]
    rng = np.random.default_rng(cfg.random_seed)
    thr = cfg.inlier_threshold

    best_H, best_inl = None, None
    budget = cfg.max_iterations
    it = 0
    while it < budget:
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        if _collinear(src[idx]) or _collinear(dst[idx]):
            continue
        H = dlt_homography(src[idx], dst[idx])
        if H is None:
            continue
        inl = reprojection_error(H, src, dst) <= thr
        if best_inl is None or inl.sum() > best_inl.sum():
            best_H, best_inl = H, inl
            budget = min(budget, _iterations_needed(inl.mean(), cfg.confidence))
    if best_H is None:
        raise RegistrationError("no non-degenerate minimal sample found")

    for _ in range(10):
        H = dlt_homography(src[best_inl], dst[best_inl])
        if H is None:
            break
        inl = reprojection_error(H, src, dst) <= thr
        if inl.sum() < best_inl.sum():
            break
        grew = inl.sum() > best_inl.sum()
        best_H, best_inl = H, inl
        if not grew:
            break

    count = int(best_inl.sum())
    if count < max(cfg.min_inliers, 4):
        raise RegistrationError(f"only {count} consensus matches (need {cfg.min_inliers})")
    return Transform(best_H, count, count / n, inliers=best_inl)


def match_keypoints(img_a: np.ndarray, img_b: np.ndarray, max_features: int = 2000,
                    levels: int = 1) -> np.ndarray:
    """ORB + cross-checked Hamming matching, returned as (k, 2, 2) (pt_b, pt_a) pairs.

    One pyramid level by default: coarser levels quantise keypoint positions,
    and the pairs this serves differ little in scale.
    """
    orb = cv2.ORB_create(nfeatures=max_features, nlevels=levels)
    gray_a = cv2.cvtColor(img_a, cv2.COLOR_RGB2GRAY)
    gray_b = cv2.cvtColor(img_b, cv2.COLOR_RGB2GRAY)
    kp_a, des_a = orb.detectAndCompute(gray_a, None)
    kp_b, des_b = orb.detectAndCompute(gray_b, None)
    if des_a is None or des_b is None or len(kp_a) == 0 or len(kp_b) == 0:
        return np.empty((0, 2, 2))
    matcher = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=True)
    matches = sorted(matcher.match(des_b, des_a), key=lambda m: (m.distance, m.queryIdx, m.trainIdx))
    return np.array([[kp_b[m.queryIdx].pt, kp_a[m.trainIdx].pt] for m in matches], dtype=np.float64).reshape(-1, 2, 2)


def estimate_transform(img_a, img_b, cfg: RansacConfig = RansacConfig()) -> Transform:
    """Homography taking img_b coordinates into img_a's frame."""
    img_a, img_b = as_image(img_a), as_image(img_b)
    if img_a.shape != img_b.shape:
        raise ValueError(f"image shapes differ: {img_a.shape} vs {img_b.shape}")
    matches = match_keypoints(img_a, img_b)
    if len(matches) < max(cfg.min_inliers, 4):
        raise RegistrationError(f"only {len(matches)} keypoint matches")
    return ransac_homography(matches, cfg)


def warp(image: np.ndarray, t: Transform, interpolation: int = cv2.INTER_LINEAR) -> np.ndarray:
    """Resample ``image`` under ``t``; pixels mapping outside the source become 0."""
    if not t.invertible:
        raise ValueError("cannot warp with a non-invertible transform")
    image = np.asarray(image)
    h, w = image.shape[:2]
    return cv2.warpPerspective(image, t.matrix, (w, h), flags=interpolation,
                               borderMode=cv2.BORDER_CONSTANT, borderValue=0)


def warp_mask(mask: np.ndarray, t: Transform) -> np.ndarray:
    return warp(np.asarray(mask, dtype=np.uint8), t, cv2.INTER_NEAREST).astype(bool)
