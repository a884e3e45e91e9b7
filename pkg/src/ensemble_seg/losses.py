"""Forward evaluation of the segmentation losses used to train ensemble members.

Three training objectives are covered:

* ``ce_dice_loss``: cross entropy plus the class-averaged soft Dice loss
  (background included).
* ``basnet_hybrid_loss``: cross entropy plus the class-averaged sum of
  MS-SSIM loss and soft Jaccard loss.
* ``blob_loss``: a weighted sum of the hybrid loss on the whole volume and the
  hybrid loss averaged over individual ground-truth lesions.

No gradients are computed; these are evaluators for analysis and reporting.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .components import Connectivity, connected_components
from .errors import ConfigError, ShapeError
from .ssim import MsSsimConfig, ms_ssim
from .volume import LabelVolume, ProbVolume

CE_EPS = 1e-7
SMOOTH = 1e-6


@dataclass
class LossBreakdown:
    total: float
    cross_entropy: float
    per_class_dice: list[float] | None = None
    per_class_jaccard: list[float] | None = None
    per_class_msssim: list[float] | None = None
    blob_term: float | None = None
    global_term: float | None = None
    blob_empty: bool | None = None
    blob_per_class: dict[int, float] | None = None
    blob_components: dict[int, int] | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("blob_per_class", "blob_components"):
            if out[key] is not None:
                out[key] = {str(k): v for k, v in out[key].items()}
        return out


@dataclass(frozen=True)
class BlobLossConfig:
    alpha: float = 1.0
    beta: float = 1.0
    connectivity: Connectivity = Connectivity.VERTEX_26
    include_background: bool = False
    mask_other_components: bool = True

    def __post_init__(self):
        object.__setattr__(self, "connectivity", Connectivity.parse(self.connectivity))
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0", field="alpha" if self.alpha < 0 else "beta")
        if not self.alpha + self.beta > 0:
            raise ConfigError("alpha + beta must be > 0", field="beta")


def _check_pair(p: ProbVolume, g: LabelVolume) -> None:
    p.meta.require_compatible(g.meta)
    if p.channels != g.n_classes:
        raise ShapeError(f"prediction has {p.channels} channels, ground truth {g.n_classes} classes")


# Array-level kernels. ``probs`` is (..., C) float64, ``labels`` integer (...).


def _cross_entropy(probs: np.ndarray, labels: np.ndarray, eps: float) -> float:
    picked = np.take_along_axis(probs, labels[..., None].astype(np.intp), axis=-1)
    return float(np.mean(-np.log(np.maximum(picked, eps))))


def _soft_dice_loss(pi: np.ndarray, gi: np.ndarray, smooth: float) -> float:
    inter = float(np.sum(pi[gi]))
    return 1.0 - (2.0 * inter + smooth) / (float(np.sum(pi)) + float(np.count_nonzero(gi)) + smooth)


def _soft_jaccard_loss(pi: np.ndarray, gi: np.ndarray, smooth: float) -> float:
    inter = float(np.sum(pi[gi]))
    union = float(np.sum(pi)) + float(np.count_nonzero(gi)) - inter
    return 1.0 - (inter + smooth) / (union + smooth)


def _ms_ssim_loss(pi: np.ndarray, gi: np.ndarray, cfg: MsSsimConfig) -> float:
    return max(0.0, 1.0 - ms_ssim(pi, gi.astype(np.float64), cfg))


def _hybrid(probs: np.ndarray, labels: np.ndarray, cfg: MsSsimConfig, eps: float, smooth: float) -> LossBreakdown:
    n = probs.shape[-1]
    ce = _cross_entropy(probs, labels, eps)
    msssim, jaccard = [], []
    for i in range(n):
        pi, gi = probs[..., i], labels == i
        msssim.append(_ms_ssim_loss(pi, gi, cfg))
        jaccard.append(_soft_jaccard_loss(pi, gi, smooth))
    total = ce + sum(m + j for m, j in zip(msssim, jaccard)) / n
    return LossBreakdown(total=total, cross_entropy=ce, per_class_jaccard=jaccard, per_class_msssim=msssim)


# Volume-level API.


def cross_entropy(p: ProbVolume, g: LabelVolume, eps: float = CE_EPS) -> float:
    _check_pair(p, g)
    return _cross_entropy(p.probs.astype(np.float64), g.voxels, eps)


def dice_loss(p: ProbVolume, g: LabelVolume, class_i: int, smooth: float = SMOOTH) -> float:
    _check_pair(p, g)
    return _soft_dice_loss(p.probs[..., class_i].astype(np.float64), g.voxels == class_i, smooth)


def jaccard_loss(p: ProbVolume, g: LabelVolume, class_i: int, smooth: float = SMOOTH) -> float:
    _check_pair(p, g)
    return _soft_jaccard_loss(p.probs[..., class_i].astype(np.float64), g.voxels == class_i, smooth)


def ms_ssim_loss(p: ProbVolume, g: LabelVolume, class_i: int, cfg: MsSsimConfig = MsSsimConfig()) -> float:
    _check_pair(p, g)
    return _ms_ssim_loss(p.probs[..., class_i].astype(np.float64), g.voxels == class_i, cfg)


def ce_dice_loss(
    p: ProbVolume, g: LabelVolume, eps: float = CE_EPS, smooth: float = SMOOTH
) -> LossBreakdown:
    _check_pair(p, g)
    probs = p.probs.astype(np.float64)
    ce = _cross_entropy(probs, g.voxels, eps)
    dice = [_soft_dice_loss(probs[..., i], g.voxels == i, smooth) for i in range(p.channels)]
    return LossBreakdown(total=ce + sum(dice) / p.channels, cross_entropy=ce, per_class_dice=dice)


def basnet_hybrid_loss(
    p: ProbVolume,
    g: LabelVolume,
    cfg: MsSsimConfig = MsSsimConfig(),
    eps: float = CE_EPS,
    smooth: float = SMOOTH,
) -> LossBreakdown:
    _check_pair(p, g)
    cfg.effective_scales(p.shape)
    return _hybrid(p.probs.astype(np.float64), g.voxels, cfg, eps, smooth)


def component_pair(
    prob_i: np.ndarray, ids: np.ndarray, component: int, mask_others: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Binary (prediction, target) pair for one ground-truth component.

    The target is the component itself. With ``mask_others``, voxels of the
    class's other components are zeroed in the prediction so they count as
    correct background and cannot reward or penalise this lesion.
    """
    target = ids == component
    pred = prob_i.astype(np.float64, copy=True)
    if mask_others:
        pred[(ids != 0) & ~target] = 0.0
    return pred, target


def binary_hybrid_loss(
    pred: np.ndarray,
    target: np.ndarray,
    cfg: MsSsimConfig = MsSsimConfig(),
    eps: float = CE_EPS,
    smooth: float = SMOOTH,
) -> LossBreakdown:
    """Hybrid loss of a foreground probability map against a binary target (two classes)."""
    probs = np.stack([1.0 - pred, pred], axis=-1)
    return _hybrid(probs, target.astype(np.uint8), cfg, eps, smooth)


def blob_loss(
    p: ProbVolume,
    g: LabelVolume,
    cfg: BlobLossConfig = BlobLossConfig(),
    ms: MsSsimConfig = MsSsimConfig(),
    eps: float = CE_EPS,
    smooth: float = SMOOTH,
) -> LossBreakdown:
    global_bd = basnet_hybrid_loss(p, g, ms, eps, smooth)
    probs = p.probs.astype(np.float64)

    per_class: dict[int, float] = {}
    counts: dict[int, int] = {}
    first = 0 if cfg.include_background else 1
    for i in range(first, p.channels):
        cm = connected_components(g.voxels == i, cfg.connectivity, g.meta)
        counts[i] = cm.k
        if cm.k == 0:
            continue
        losses = []
        for n in range(1, cm.k + 1):
            pred, target = component_pair(probs[..., i], cm.ids, n, cfg.mask_other_components)
            losses.append(binary_hybrid_loss(pred, target, ms, eps, smooth).total)
        per_class[i] = sum(losses) / len(losses)

    empty = not per_class
    blob = 0.0 if empty else sum(per_class.values()) / len(per_class)
    global_term = global_bd.total
    return LossBreakdown(
        total=cfg.alpha * global_term + cfg.beta * blob,
        cross_entropy=global_bd.cross_entropy,
        per_class_jaccard=global_bd.per_class_jaccard,
        per_class_msssim=global_bd.per_class_msssim,
        blob_term=blob,
        global_term=global_term,
        blob_empty=empty,
        blob_per_class=per_class,
        blob_components=counts,
    )
