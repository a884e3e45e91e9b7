"""Label-volume refinement: small-component removal and per-class smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import (
    Connectivity,
    component_sizes,
    connected_components,
    dilate,
    erode,
    morph_reconstruct,
)
from .errors import ConfigError
from .volume import LabelVolume


@dataclass(frozen=True)
class PostprocessConfig:
    min_component_voxels: int = 50
    connectivity: Connectivity = Connectivity.VERTEX_26
    smooth_iterations: int = 1
    class_priority: tuple[int, ...] = (3, 1, 2)

    def __post_init__(self):
        object.__setattr__(self, "connectivity", Connectivity.parse(self.connectivity))
        object.__setattr__(self, "class_priority", tuple(int(c) for c in self.class_priority))
        if self.min_component_voxels < 0:
            raise ConfigError("min_component_voxels must be >= 0", field="min_component_voxels")
        if self.smooth_iterations < 0:
            raise ConfigError("smooth_iterations must be >= 0", field="smooth_iterations")

    def check_classes(self, n_classes: int) -> None:
        if sorted(self.class_priority) != list(range(1, n_classes)):
            raise ConfigError(
                f"class_priority {self.class_priority} is not a permutation of 1..{n_classes - 1}",
                field="class_priority",
            )


def size_filter(l: LabelVolume, cfg: PostprocessConfig = PostprocessConfig()) -> LabelVolume:
    """Relabel to background every per-class component smaller than the threshold."""
    if cfg.min_component_voxels == 0:
        return l
    out = l.voxels.copy()
    for c in range(1, l.n_classes):
        mask = l.voxels == c
        if not mask.any():
            continue
        cm = connected_components(mask, cfg.connectivity, l.meta)
        small = [cid for cid, count, _ in component_sizes(cm) if count < cfg.min_component_voxels]
        if small:
            out[np.isin(cm.ids, small)] = 0
    return l.with_voxels(out)


def _closing(mask: np.ndarray, iterations: int, conn: Connectivity) -> np.ndarray:
    # pad so the volume border does not erode the closing back inside the input
    padded = np.pad(mask, iterations)
    closed = erode(dilate(padded, iterations, conn), iterations, conn)
    crop = tuple(slice(iterations, iterations + d) for d in mask.shape)
    return closed[crop]


def morph_smooth(l: LabelVolume, cfg: PostprocessConfig = PostprocessConfig()) -> LabelVolume:
    """Per-class closing followed by reconstruction from the eroded original.

    Classes are processed in ``class_priority`` order and a voxel claimed by
    several classes keeps the first one. Components whose once-eroded core is
    empty have no marker and are dropped.
    """
    if cfg.smooth_iterations == 0:
        return l
    cfg.check_classes(l.n_classes)
    k, conn = cfg.smooth_iterations, cfg.connectivity
    out = np.zeros_like(l.voxels)
    claimed = np.zeros(l.shape, dtype=bool)
    for c in cfg.class_priority:
        mask = l.voxels == c
        if not mask.any():
            continue
        closed = _closing(mask, k, conn)
        marker = erode(mask, 1, conn)
        smoothed = morph_reconstruct(marker, closed, conn)
        take = smoothed & ~claimed
        out[take] = c
        claimed |= take
    return l.with_voxels(out)


def postprocess(l: LabelVolume, cfg: PostprocessConfig = PostprocessConfig()) -> LabelVolume:
    return morph_smooth(size_filter(l, cfg), cfg)
