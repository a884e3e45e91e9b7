"""Volumetric and lesion-wise Dice / HD95 evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .components import Connectivity, component_sizes, connected_components, dilate, erode
from .errors import ConfigError, ShapeError
from .volume import BRATS_REGIONS, LabelVolume, RegionSpec, region_mask

# Above this many boundary voxels on either side, nearest distances come from
# an exact Euclidean distance transform instead of all pairs.
BRUTE_FORCE_LIMIT = 10_000
_CHUNK = 2048


@dataclass(frozen=True)
class LesionwiseConfig:
    match_dilation_iters: int = 3
    match_connectivity: Connectivity = Connectivity.VERTEX_26
    fp_dice_penalty: float = 0.0
    fn_dice_penalty: float = 0.0
    hd95_penalty: float = 374.0
    min_lesion_voxels: int = 50

    def __post_init__(self):
        object.__setattr__(self, "match_connectivity", Connectivity.parse(self.match_connectivity))
        if self.match_dilation_iters < 0:
            raise ConfigError("match_dilation_iters must be >= 0", field="match_dilation_iters")
        if self.min_lesion_voxels < 0:
            raise ConfigError("min_lesion_voxels must be >= 0", field="min_lesion_voxels")
        for name in ("fp_dice_penalty", "fn_dice_penalty", "hd95_penalty"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite", field=name)
        if not self.hd95_penalty > 0:
            raise ConfigError("hd95_penalty must be > 0", field="hd95_penalty")


@dataclass(frozen=True)
class MetricReport:
    case_id: str
    region: str
    lesion_wise_dice: float
    dice: float
    lesion_wise_hd95: float
    hd95: float
    tp: int
    fp: int
    fn: int


def dice_score(pred, gt) -> float:
    p, g = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    total = np.count_nonzero(p) + np.count_nonzero(g)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(p & g) / total


def boundary(mask) -> np.ndarray:
    """Foreground voxels with a face neighbour that is background or outside the volume."""
    m = np.asarray(mask, dtype=bool)
    return m & ~erode(m, 1, Connectivity.FACE_6)


def _nearest_brute(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    out = np.empty(len(src))
    for start in range(0, len(src), _CHUNK):
        block = src[start : start + _CHUNK]
        d2 = ((block[:, None, :] - dst[None, :, :]) ** 2).sum(axis=2)
        out[start : start + _CHUNK] = np.sqrt(d2.min(axis=1))
    return out


def _nearest_edt(src_mask: np.ndarray, dst_mask: np.ndarray, spacing) -> np.ndarray:
    dist = ndimage.distance_transform_edt(~dst_mask, sampling=spacing)
    return dist[src_mask]


def surface_distances(pred, gt, spacing, method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Directed boundary-to-boundary distances in mm: (pred -> gt, gt -> pred).

    Both masks must be non-empty. ``method`` is ``"brute"``, ``"edt"`` or ``"auto"``.
    Returned arrays follow x-fastest scan order of the source boundary.
    """
    bp, bg = boundary(pred), boundary(gt)
    n_p, n_g = np.count_nonzero(bp), np.count_nonzero(bg)
    if method == "auto":
        method = "brute" if max(n_p, n_g) <= BRUTE_FORCE_LIMIT else "edt"
    if method == "brute":
        sp = np.asarray(spacing, dtype=np.float64)
        # transpose so argwhere enumerates in x-fastest order
        cp = np.argwhere(bp.transpose(2, 1, 0))[:, ::-1] * sp
        cg = np.argwhere(bg.transpose(2, 1, 0))[:, ::-1] * sp
        return _nearest_brute(cp, cg), _nearest_brute(cg, cp)
    if method == "edt":
        fp = bp.transpose(2, 1, 0)
        fg = bg.transpose(2, 1, 0)
        sp = tuple(spacing)[::-1]
        return _nearest_edt(fp, fg, sp), _nearest_edt(fg, fp, sp)
    raise ValueError(f"unknown distance method {method!r}")


def hd95(pred, gt, spacing=(1.0, 1.0, 1.0), method: str = "auto") -> float:
    """Max of the two directed 95th-percentile boundary distances (mm).

    Both masks empty gives 0.0; exactly one empty gives ``inf`` for the caller
    to replace with its penalty.
    """
    p, g = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    has_p, has_g = p.any(), g.any()
    if not has_p and not has_g:
        return 0.0
    if not has_p or not has_g:
        return math.inf
    d_pg, d_gp = surface_distances(p, g, spacing, method)
    return float(max(np.percentile(d_pg, 95), np.percentile(d_gp, 95)))


def _bbox(mask: np.ndarray, margin: int) -> tuple[slice, ...]:
    coords = np.argwhere(mask)
    lo = np.maximum(coords.min(axis=0) - margin, 0)
    hi = np.minimum(coords.max(axis=0) + margin + 1, mask.shape)
    return tuple(slice(a, b) for a, b in zip(lo, hi))


def _lesions(mask: np.ndarray, cfg: LesionwiseConfig) -> tuple[np.ndarray, list[int]]:
    cm = connected_components(mask, cfg.match_connectivity)
    keep = [cid for cid, count, _ in component_sizes(cm) if count >= cfg.min_lesion_voxels]
    return cm.ids, keep


def lesion_wise(
    pred, gt, spacing=(1.0, 1.0, 1.0), cfg: LesionwiseConfig = LesionwiseConfig()
) -> tuple[float, float, int, int, int]:
    """Lesion-wise Dice and HD95 with fixed penalties for unmatched lesions.

    Returns ``(lw_dice, lw_hd95, tp, fp, fn)``.
    """
    p, g = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    gt_ids, gt_keep = _lesions(g, cfg)
    pred_ids, pred_keep = _lesions(p, cfg)
    pred_keep_set = set(pred_keep)

    dice_terms: list[float] = []
    hd_terms: list[float] = []
    used: set[int] = set()
    fn = 0
    for lesion in gt_keep:
        gt_lesion = gt_ids == lesion
        window = _bbox(gt_lesion, cfg.match_dilation_iters)
        grown = dilate(gt_lesion[window], cfg.match_dilation_iters, cfg.match_connectivity)
        hits = np.unique(pred_ids[window][grown])
        matched = [int(h) for h in hits if h in pred_keep_set]
        if not matched:
            fn += 1
            continue
        used.update(matched)
        pred_union = np.isin(pred_ids, matched)
        dice_terms.append(dice_score(pred_union, gt_lesion))
        hd_terms.append(hd95(pred_union, gt_lesion, spacing))

    tp = len(dice_terms)
    fp = sum(1 for cid in pred_keep if cid not in used)
    if tp + fp + fn == 0:
        return 1.0, 0.0, 0, 0, 0
    dice_terms += [cfg.fp_dice_penalty] * fp + [cfg.fn_dice_penalty] * fn
    hd_terms += [cfg.hd95_penalty] * (fp + fn)
    n = tp + fp + fn
    return sum(dice_terms) / n, sum(hd_terms) / n, tp, fp, fn


def evaluate_case(
    pred: LabelVolume,
    gt: LabelVolume,
    regions: tuple[RegionSpec, ...] | list[RegionSpec] = BRATS_REGIONS,
    cfg: LesionwiseConfig = LesionwiseConfig(),
    case_id: str | None = None,
) -> list[MetricReport]:
    """One report per region, in the order given."""
    pred.meta.require_compatible(gt.meta)
    spacing = gt.meta.spacing
    case = case_id if case_id is not None else (gt.meta.case_id or pred.meta.case_id)
    reports = []
    for region in regions:
        p, g = region_mask(pred, region), region_mask(gt, region)
        dist = hd95(p, g, spacing)
        if math.isinf(dist):
            dist = cfg.hd95_penalty
        lw_dice, lw_hd, tp, fp, fn = lesion_wise(p, g, spacing, cfg)
        reports.append(MetricReport(case, region.name, lw_dice, dice_score(p, g), lw_hd, dist, tp, fp, fn))
    return reports
