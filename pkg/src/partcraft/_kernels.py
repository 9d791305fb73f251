"""Numeric hot kernels with a numba fast path and a pure-numpy fallback.

The fallback is selected automatically when numba is unavailable, or
explicitly by setting ``PARTCRAFT_NO_NUMBA=1`` in the environment before
import. Both paths compute the same quantities; ``benchmarks/bench_kernels.py``
compares their wall-clock speed.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("PARTCRAFT_NO_NUMBA", "").strip() in {"1", "true", "yes"}

if not _DISABLED:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - exercised only without numba
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _field_affinity_np(u: np.ndarray, tau: float) -> np.ndarray:
    # exp(-||u_p - u_q||^2 / tau) over all position pairs; u is (N, C)
    sq = np.sum(u * u, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (u @ u.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / tau)


def _area_resize_np(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    # Exact rectangle-overlap area average: output cell (i,j) is the mean of
    # the source region it covers. Works for both up- and down-sampling.
    in_h, in_w = src.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        y0 = i * in_h / out_h
        y1 = (i + 1) * in_h / out_h
        for j in range(out_w):
            x0 = j * in_w / out_w
            x1 = (j + 1) * in_w / out_w
            acc = 0.0
            r = int(np.floor(y0))
            while r < y1 and r < in_h:
                ry = min(y1, r + 1.0) - max(y0, float(r))
                c = int(np.floor(x0))
                while c < x1 and c < in_w:
                    cx = min(x1, c + 1.0) - max(x0, float(c))
                    acc += src[r, c] * ry * cx
                    c += 1
                r += 1
            out[i, j] = acc / ((y1 - y0) * (x1 - x0))
    return out


def _kmeans_lloyd_np(
    points: np.ndarray, centers: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray]:
    n, d = points.shape
    k = centers.shape[0]
    centers = centers.copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = (
            np.sum(points * points, axis=1)[:, None]
            + np.sum(centers * centers, axis=1)[None, :]
            - 2.0 * (points @ centers.T)
        )
        new_labels = np.argmin(d2, axis=1)
        new_centers = np.zeros_like(centers)
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            new_centers[new_labels[i]] += points[i]
            counts[new_labels[i]] += 1
        for c in range(k):
            if counts[c] > 0:
                new_centers[c] /= counts[c]
            else:
                # deterministic empty-cluster repair: take the point farthest
                # from its current center (lowest index on ties)
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                new_centers[c] = points[far]
                new_labels[far] = c
        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        if np.array_equal(new_labels, labels) and shift <= tol:
            labels = new_labels
            break
        labels = new_labels
    return labels, centers


def _masked_sum_np(masks: np.ndarray, preds: np.ndarray) -> np.ndarray:
    # masks (R, H, W), preds (R, C, H, W) -> (C, H, W)
    return np.einsum("rhw,rchw->chw", masks, preds)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _field_affinity_nb(u, tau):
        n, c = u.shape
        out = np.empty((n, n), dtype=np.float64)
        for p in range(n):
            out[p, p] = 1.0
            for q in range(p + 1, n):
                d2 = 0.0
                for ch in range(c):
                    diff = u[p, ch] - u[q, ch]
                    d2 += diff * diff
                v = np.exp(-d2 / tau)
                out[p, q] = v
                out[q, p] = v
        return out

    @njit(cache=True)
    def _area_resize_nb(src, out_h, out_w):
        in_h, in_w = src.shape
        out = np.zeros((out_h, out_w), dtype=np.float64)
        for i in range(out_h):
            y0 = i * in_h / out_h
            y1 = (i + 1) * in_h / out_h
            for j in range(out_w):
                x0 = j * in_w / out_w
                x1 = (j + 1) * in_w / out_w
                acc = 0.0
                r = int(np.floor(y0))
                while r < y1 and r < in_h:
                    ry = min(y1, r + 1.0) - max(y0, float(r))
                    c = int(np.floor(x0))
                    while c < x1 and c < in_w:
                        cx = min(x1, c + 1.0) - max(x0, float(c))
                        acc += src[r, c] * ry * cx
                        c += 1
                    r += 1
                out[i, j] = acc / ((y1 - y0) * (x1 - x0))
        return out

    @njit(cache=True)
    def _kmeans_lloyd_nb(points, centers, max_iter, tol):
        n, d = points.shape
        k = centers.shape[0]
        cur = centers.copy()
        labels = np.zeros(n, dtype=np.int64)
        dist_to_own = np.zeros(n, dtype=np.float64)
        for _ in range(max_iter):
            new_labels = np.zeros(n, dtype=np.int64)
            for i in range(n):
                best = 0
                best_d = 1e300
                for c in range(k):
                    d2 = 0.0
                    for j in range(d):
                        diff = points[i, j] - cur[c, j]
                        d2 += diff * diff
                    if d2 < best_d:
                        best_d = d2
                        best = c
                new_labels[i] = best
                dist_to_own[i] = best_d
            new_centers = np.zeros((k, d), dtype=np.float64)
            counts = np.zeros(k, dtype=np.int64)
            for i in range(n):
                c = new_labels[i]
                counts[c] += 1
                for j in range(d):
                    new_centers[c, j] += points[i, j]
            for c in range(k):
                if counts[c] > 0:
                    for j in range(d):
                        new_centers[c, j] /= counts[c]
                else:
                    far = 0
                    far_d = -1.0
                    for i in range(n):
                        if dist_to_own[i] > far_d:
                            far_d = dist_to_own[i]
                            far = i
                    for j in range(d):
                        new_centers[c, j] = points[far, j]
                    new_labels[far] = c
            shift = 0.0
            for c in range(k):
                for j in range(d):
                    s = abs(new_centers[c, j] - cur[c, j])
                    if s > shift:
                        shift = s
            same = True
            for i in range(n):
                if new_labels[i] != labels[i]:
                    same = False
                    break
            cur = new_centers
            labels = new_labels
            if same and shift <= tol:
                break
        return labels, cur

    @njit(cache=True)
    def _masked_sum_nb(masks, preds):
        r, h, w = masks.shape
        c = preds.shape[1]
        out = np.zeros((c, h, w), dtype=np.float64)
        for ri in range(r):
            for ci in range(c):
                for y in range(h):
                    for x in range(w):
                        out[ci, y, x] += masks[ri, y, x] * preds[ri, ci, y, x]
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def field_affinity(u: np.ndarray, tau: float) -> np.ndarray:
    """Dense pairwise similarity exp(-||u_p - u_q||^2 / tau) for rows of u."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    if HAVE_NUMBA:
        return _field_affinity_nb(u, float(tau))
    return _field_affinity_np(u, float(tau))


def area_average_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2D map so each output cell averages the source area it covers."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    if src.shape == (out_h, out_w):
        return src.copy()
    if HAVE_NUMBA:
        return _area_resize_nb(src, out_h, out_w)
    return _area_resize_np(src, out_h, out_w)


def kmeans_lloyd(
    points: np.ndarray, centers: np.ndarray, max_iter: int = 300, tol: float = 1e-10
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from given initial centers; returns (labels, centers).

    Ties in assignment go to the lowest-index center; an emptied cluster is
    reseeded with the point farthest from its current center. Deterministic
    for fixed inputs.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if HAVE_NUMBA:
        return _kmeans_lloyd_nb(points, centers, max_iter, tol)
    return _kmeans_lloyd_np(points, centers, max_iter, tol)


def masked_sum(masks: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Sum of per-region predictions gated by their masks: (R,H,W)x(R,C,H,W)->(C,H,W)."""
    masks = np.ascontiguousarray(masks, dtype=np.float64)
    preds = np.ascontiguousarray(preds, dtype=np.float64)
    if HAVE_NUMBA:
        return _masked_sum_nb(masks, preds)
    return _masked_sum_np(masks, preds)
