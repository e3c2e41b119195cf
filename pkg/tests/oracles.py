"""Independent brute-force reference implementations used by the tests.

Written with plain Python loops and ``math`` so they share no code path with
the vectorised package implementations.
"""

from __future__ import annotations

import math


def skewness(xs) -> float:
    xs = [float(x) for x in xs]
    n = len(xs)
    mean = math.fsum(xs) / n
    m2 = math.fsum((x - mean) ** 2 for x in xs) / n
    if m2 < 1e-12:
        return 0.0
    m3 = math.fsum((x - mean) ** 3 for x in xs) / n
    return m3 / m2 ** 1.5


def mad(xs) -> float:
    xs = [float(x) for x in xs]
    mean = math.fsum(xs) / len(xs)
    return math.fsum(abs(x - mean) for x in xs) / len(xs)


def cosine(u, v) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0 or nv == 0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


def counts(pred, gt):
    tp = fp = fn = tn = 0
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def metrics(pred, gt) -> dict:
    tp, fp, fn, tn = counts(pred, gt)
    pos_pred, pos_gt = tp + fp, tp + fn
    if pos_pred == 0:
        precision = 1.0 if pos_gt == 0 else 0.0
    else:
        precision = tp / pos_pred
    if pos_gt == 0:
        recall = 1.0 if pos_pred == 0 else 0.0
    else:
        recall = tp / pos_gt
    union_c = tp + fp + fn
    union_n = tn + fp + fn
    return {
        "f1": 1.0 if union_c == 0 else 2 * tp / (2 * tp + fp + fn),
        "precision": precision,
        "recall": recall,
        "iou_change": 1.0 if union_c == 0 else tp / union_c,
        "iou_nochange": 1.0 if union_n == 0 else tn / union_n,
    }


def tc(a, b) -> float:
    inter = union = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        inter += bool(x and y)
        union += bool(x or y)
    return 1.0 if union == 0 else inter / union


def pixel_change(norm: float, raw: float, gamma: float, raw_mean: float, raw_std: float,
                 b_r=0.05, s_r=0.1, b_l=0.7, s_l=1.0, c=1.0, band=0.2, z=-0.52) -> bool:
    """Per-pixel decision of the skew-adaptive threshold rule."""
    if gamma > band:
        return norm < min(1.0, max(0.0, b_r + c * s_r * abs(gamma)))
    if gamma < -band:
        return norm < min(1.0, max(0.0, b_l + c * s_l * abs(gamma)))
    return raw < raw_mean + z * raw_std


def intersection_ratio(prop, pseudo) -> float:
    inside = total = 0
    for p, q in zip(prop.ravel().tolist(), pseudo.ravel().tolist()):
        if p:
            total += 1
            inside += bool(q)
    return inside / total


def masked_mean(emb, mask):
    """Mean embedding over grid cells picked by nearest cell-centre sampling."""
    h, w, ch = emb.shape
    H, W = mask.shape
    acc = [0.0] * ch
    n = 0
    for i in range(h):
        for j in range(w):
            r = min(int((i + 0.5) * H / h), H - 1)
            q = min(int((j + 0.5) * W / w), W - 1)
            if mask[r, q]:
                n += 1
                for k in range(ch):
                    acc[k] += float(emb[i, j, k])
    return None if n == 0 else [a / n for a in acc]
