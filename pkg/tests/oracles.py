"""Independent reference implementations used only by the tests.

They favour obviousness over speed: BFS labeling, explicit neighbourhood
loops, all-pairs distances, per-voxel loops. None of them call into the
package except for plain data types.
"""

from __future__ import annotations

import itertools
import math
from collections import deque

import numba
import numpy as np

FACE = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
ALL26 = [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]
OFFSETS = {
    "face-6": FACE,
    "edge-18": [o for o in ALL26 if sum(map(abs, o)) <= 2],
    "vertex-26": ALL26,
}
OFFSET_ARRAYS = {k: np.array(v, dtype=np.int64) for k, v in OFFSETS.items()}


@numba.njit(cache=True)
def _bfs_label(mask, offsets):
    nx, ny, nz = mask.shape
    labels = np.zeros((nx, ny, nz), dtype=np.int32)
    queue = np.empty((nx * ny * nz, 3), dtype=np.int64)
    k = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if mask[x, y, z] and labels[x, y, z] == 0:
                    k += 1
                    labels[x, y, z] = k
                    head, tail = 0, 1
                    queue[0, 0], queue[0, 1], queue[0, 2] = x, y, z
                    while head < tail:
                        cx, cy, cz = queue[head, 0], queue[head, 1], queue[head, 2]
                        head += 1
                        for j in range(offsets.shape[0]):
                            ax = cx + offsets[j, 0]
                            ay = cy + offsets[j, 1]
                            az = cz + offsets[j, 2]
                            if 0 <= ax < nx and 0 <= ay < ny and 0 <= az < nz:
                                if mask[ax, ay, az] and labels[ax, ay, az] == 0:
                                    labels[ax, ay, az] = k
                                    queue[tail, 0], queue[tail, 1], queue[tail, 2] = ax, ay, az
                                    tail += 1
    return labels, k


def bfs_label(mask, conn: str = "vertex-26"):
    """BFS labeling, ids in first-encounter x-fastest order. Returns (ids, k)."""
    return _bfs_label(np.ascontiguousarray(mask, dtype=np.bool_), OFFSET_ARRAYS[conn])


def bfs_label_py(mask, conn: str = "vertex-26"):
    """Pure-Python BFS (slow); cross-checks the jitted oracle itself."""
    mask = np.asarray(mask, dtype=bool)
    labels = np.zeros(mask.shape, dtype=np.int32)
    nx, ny, nz = mask.shape
    k = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if mask[x, y, z] and not labels[x, y, z]:
                    k += 1
                    labels[x, y, z] = k
                    q = deque([(x, y, z)])
                    while q:
                        c = q.popleft()
                        for o in OFFSETS[conn]:
                            a = (c[0] + o[0], c[1] + o[1], c[2] + o[2])
                            if all(0 <= a[i] < mask.shape[i] for i in range(3)) and mask[a] and not labels[a]:
                                labels[a] = k
                                q.append(a)
    return labels, k


def dilate_once(mask, conn: str) -> np.ndarray:
    """OR of the mask shifted by every neighbour offset (out-of-volume dropped)."""
    mask = np.asarray(mask, dtype=bool)
    out = mask.copy()
    for off in OFFSETS[conn]:
        src, dst = [], []
        for o, n in zip(off, mask.shape):
            src.append(slice(max(0, -o), n - max(0, o)))
            dst.append(slice(max(0, o), n - max(0, -o)))
        out[tuple(dst)] |= mask[tuple(src)]
    return out


def dilate_once_loop(mask, conn: str) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    out = mask.copy()
    nx, ny, nz = mask.shape
    for x, y, z in np.argwhere(mask):
        for dx, dy, dz in OFFSETS[conn]:
            a, b, c = x + dx, y + dy, z + dz
            if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz:
                out[a, b, c] = True
    return out


def dilate_n(mask, n: int, conn: str) -> np.ndarray:
    out = np.asarray(mask, dtype=bool).copy()
    for _ in range(n):
        out = dilate_once(out, conn)
    return out


def erode_by_duality(mask, n: int, conn: str) -> np.ndarray:
    """complement(dilate(complement)) with out-of-volume counted as set in the complement."""
    mask = np.asarray(mask, dtype=bool)
    pad = n
    comp = np.pad(~mask, pad, constant_values=True)
    grown = dilate_n(comp, n, conn)
    crop = tuple(slice(pad, pad + d) for d in mask.shape)
    return ~grown[crop]


def reconstruct_by_selection(marker, limit, conn: str) -> np.ndarray:
    ids, _ = bfs_label(limit, conn)
    keep = set(np.unique(ids[np.asarray(marker, dtype=bool)])) - {0}
    return np.isin(ids, sorted(keep))


def boundary_points(mask, spacing) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    pts = []
    nx, ny, nz = mask.shape
    for x, y, z in np.argwhere(mask):
        for dx, dy, dz in FACE:
            a, b, c = x + dx, y + dy, z + dz
            if not (0 <= a < nx and 0 <= b < ny and 0 <= c < nz) or not mask[a, b, c]:
                pts.append((x * spacing[0], y * spacing[1], z * spacing[2]))
                break
    return np.array(pts, dtype=np.float64).reshape(-1, 3)


def percentile_linear(values, q: float) -> float:
    v = sorted(values)
    pos = (len(v) - 1) * q / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


def hd95_all_pairs(pred, gt, spacing) -> float:
    p, g = np.asarray(pred, bool), np.asarray(gt, bool)
    if not p.any() and not g.any():
        return 0.0
    if not p.any() or not g.any():
        return math.inf
    bp, bg = boundary_points(p, spacing), boundary_points(g, spacing)
    d = np.sqrt(((bp[:, None, :] - bg[None, :, :]) ** 2).sum(axis=2))
    return max(percentile_linear(d.min(axis=1), 95), percentile_linear(d.min(axis=0), 95))


def dice_count(p, g) -> float:
    p, g = np.asarray(p, bool), np.asarray(g, bool)
    total = int(p.sum()) + int(g.sum())
    return 1.0 if total == 0 else 2.0 * int((p & g).sum()) / total


def lesion_wise_straight(pred, gt, spacing, dil, conn, fp_pen, fn_pen, hd_pen, min_vox):
    """Lesion-wise scoring written directly from the matching rules."""
    gids, gk = bfs_label(gt, conn)
    pids, pk = bfs_label(pred, conn)
    gts = [i for i in range(1, gk + 1) if (gids == i).sum() >= min_vox]
    prs = [i for i in range(1, pk + 1) if (pids == i).sum() >= min_vox]
    dices, hds, used, fn = [], [], set(), 0
    for gi in gts:
        lesion = gids == gi
        grown = dilate_n(lesion, dil, conn)
        matched = [pi for pi in prs if ((pids == pi) & grown).any()]
        if not matched:
            fn += 1
            continue
        used.update(matched)
        union = np.isin(pids, matched)
        dices.append(dice_count(union, lesion))
        hds.append(hd95_all_pairs(union, lesion, spacing))
    fp = len([pi for pi in prs if pi not in used])
    tp = len(dices)
    if tp + fp + fn == 0:
        return 1.0, 0.0, 0, 0, 0
    n = tp + fp + fn
    d = sum(dices + [fp_pen] * fp + [fn_pen] * fn) / n
    h = sum(hds + [hd_pen] * (fp + fn)) / n
    return d, h, tp, fp, fn


# Losses, per voxel.


def ce_loop(probs, labels, eps=1e-7) -> float:
    flat_p = probs.reshape(-1, probs.shape[-1])
    flat_l = labels.reshape(-1)
    return sum(-math.log(max(float(flat_p[v, flat_l[v]]), eps)) for v in range(flat_l.size)) / flat_l.size


def dice_loss_loop(probs, labels, i, s=1e-6) -> float:
    pi = probs[..., i].reshape(-1)
    gi = (labels == i).reshape(-1)
    inter = sum(float(pi[v]) for v in range(pi.size) if gi[v])
    return 1.0 - (2 * inter + s) / (float(sum(pi)) + int(gi.sum()) + s)


def jaccard_loss_loop(probs, labels, i, s=1e-6) -> float:
    pi = probs[..., i].reshape(-1)
    gi = (labels == i).reshape(-1)
    inter = sum(float(pi[v]) for v in range(pi.size) if gi[v])
    return 1.0 - (inter + s) / (float(sum(pi)) + int(gi.sum()) - inter + s)


def _gauss3d(window, sigma):
    c = np.arange(window) - window // 2
    w = np.exp(-(c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2) / (2 * sigma**2))
    return w / w.sum()


def ssim_dense(x, y, window, sigma, k1=0.01, k2=0.03, L=1.0):
    """(mean SSIM, mean CS) by explicit weighted sums over every valid window."""
    w = _gauss3d(window, sigma)
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    n = [d - window + 1 for d in x.shape]
    ssim_vals, cs_vals = [], []
    for i in range(n[0]):
        for j in range(n[1]):
            for k in range(n[2]):
                px = x[i : i + window, j : j + window, k : k + window]
                py = y[i : i + window, j : j + window, k : k + window]
                mx, my = (w * px).sum(), (w * py).sum()
                vx = (w * (px - mx) ** 2).sum()
                vy = (w * (py - my) ** 2).sum()
                cxy = (w * (px - mx) * (py - my)).sum()
                cs = (2 * cxy + c2) / (vx + vy + c2)
                lum = (2 * mx * my + c1) / (mx**2 + my**2 + c1)
                ssim_vals.append(lum * cs)
                cs_vals.append(cs)
    return float(np.mean(ssim_vals)), float(np.mean(cs_vals))


def avg_pool2_loop(x):
    n = [d // 2 for d in x.shape]
    out = np.zeros(n)
    for i in range(n[0]):
        for j in range(n[1]):
            for k in range(n[2]):
                out[i, j, k] = x[2 * i : 2 * i + 2, 2 * j : 2 * j + 2, 2 * k : 2 * k + 2].mean()
    return out


def ms_ssim_dense(x, y, window, sigma, scales):
    x, y = np.asarray(x, float), np.asarray(y, float)
    out = 1.0
    for s in range(scales):
        ssim, cs = ssim_dense(x, y, window, sigma)
        term = ssim if s == scales - 1 else cs
        out *= max(term, 0.0) ** (1.0 / scales)
        x, y = avg_pool2_loop(x), avg_pool2_loop(y)
    return out
