"""Dense 3D volume types and label/region derivation.

Arrays are indexed ``[x, y, z]`` (probabilities ``[x, y, z, c]``). "Scan order"
anywhere in the package means x-fastest, i.e. ``ravel(order="F")``, which is
also the NIfTI on-disk order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateVoxelError, ShapeError, SpecError

# BraTS 2023 label convention.
BACKGROUND = 0
NECROTIC_CORE = 1
EDEMA = 2
ENHANCING = 3
DEFAULT_N_CLASSES = 4


@dataclass(frozen=True)
class VolumeMeta:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    case_id: str = ""

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ShapeError(f"dims must be three positive counts, got {self.dims}")
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ShapeError(f"spacing must be three positive reals, got {self.spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "case_id", str(self.case_id))

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def compatible(self, other: VolumeMeta) -> bool:
        return self.dims == other.dims and self.spacing == other.spacing

    def require_compatible(self, other: VolumeMeta) -> None:
        if not self.compatible(other):
            raise ShapeError(
                f"volumes not combinable: dims {self.dims} vs {other.dims}, "
                f"spacing {self.spacing} vs {other.spacing}"
            )


def _frozen_copy(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Per-voxel class indices in ``{0, ..., n_classes - 1}``."""

    meta: VolumeMeta
    voxels: np.ndarray
    n_classes: int = DEFAULT_N_CLASSES

    def __post_init__(self):
        vox = np.asarray(self.voxels)
        if vox.shape != self.meta.dims:
            raise ShapeError(f"voxel array shape {vox.shape} != dims {self.meta.dims}")
        if not 1 <= self.n_classes <= 256:
            raise DataError(f"n_classes must be in [1, 256], got {self.n_classes}")
        if vox.dtype.kind == "f":
            if not np.all(np.isfinite(vox)) or np.any(vox != np.round(vox)):
                raise DataError("label voxels must be integers")
        elif vox.dtype.kind not in "iub":
            raise DataError(f"unsupported label dtype {vox.dtype}")
        if vox.size and (vox.min() < 0 or vox.max() >= self.n_classes):
            raise DataError(
                f"label values must lie in [0, {self.n_classes - 1}], "
                f"got [{vox.min()}, {vox.max()}]"
            )
        object.__setattr__(self, "voxels", _frozen_copy(vox.astype(np.uint8)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.meta.dims

    def with_voxels(self, voxels: np.ndarray) -> LabelVolume:
        return LabelVolume(self.meta, voxels, self.n_classes)


@dataclass(frozen=True, eq=False)
class ProbVolume:
    """Per-voxel class-probability field, array shape ``dims + (channels,)``.

    Construction only enforces finite, non-negative values; the unit-sum and
    ``[0, 1]`` invariants hold after :func:`normalize`.
    """

    meta: VolumeMeta
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs)
        if p.ndim != 4 or p.shape[:3] != self.meta.dims or p.shape[3] < 1:
            raise ShapeError(
                f"probability array shape {p.shape} does not match dims {self.meta.dims} + (C,)"
            )
        if p.dtype not in (np.float32, np.float64):
            p = p.astype(np.float64)
        if not np.all(np.isfinite(p)):
            raise DataError("probability volume contains non-finite values")
        if np.any(p < 0):
            raise DataError("probability volume contains negative values")
        object.__setattr__(self, "probs", _frozen_copy(p))

    @property
    def channels(self) -> int:
        return self.probs.shape[3]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.meta.dims

    def require_compatible(self, other: ProbVolume | LabelVolume) -> None:
        self.meta.require_compatible(other.meta)
        if isinstance(other, ProbVolume) and other.channels != self.channels:
            raise ShapeError(f"channel count {self.channels} != {other.channels}")


@dataclass(frozen=True)
class RegionSpec:
    """A named composite region: the union of a set of foreground labels."""

    name: str
    labels: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        labels = frozenset(int(v) for v in self.labels)
        if not labels:
            raise SpecError(f"region {self.name!r} has no labels")
        if 0 in labels or min(labels) < 0:
            raise SpecError(f"region {self.name!r} may not contain background or negative labels")
        object.__setattr__(self, "labels", labels)


ENHANCING_TUMOR = RegionSpec("enhancing_tumor", frozenset({ENHANCING}))
TUMOR_CORE = RegionSpec("tumor_core", frozenset({NECROTIC_CORE, ENHANCING}))
WHOLE_TUMOR = RegionSpec("whole_tumor", frozenset({NECROTIC_CORE, EDEMA, ENHANCING}))
BRATS_REGIONS = (ENHANCING_TUMOR, TUMOR_CORE, WHOLE_TUMOR)


def normalize(p: ProbVolume) -> ProbVolume:
    """Rescale every voxel so its channels sum to one (float64 result)."""
    probs = p.probs.astype(np.float64)
    totals = probs.sum(axis=3, keepdims=True)
    if np.any(totals <= 0):
        bad = np.argwhere(totals[..., 0] <= 0)
        raise DegenerateVoxelError(
            f"{len(bad)} voxel(s) have zero total probability, first at {tuple(bad[0])}"
        )
    return ProbVolume(p.meta, probs / totals)


def argmax_labels(p: ProbVolume) -> LabelVolume:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index.
    return LabelVolume(p.meta, np.argmax(p.probs, axis=3), n_classes=p.channels)


def one_hot(l: LabelVolume, dtype=np.float64) -> ProbVolume:
    probs = np.zeros(l.meta.dims + (l.n_classes,), dtype=dtype)
    np.put_along_axis(probs, l.voxels[..., None].astype(np.intp), 1, axis=3)
    return ProbVolume(l.meta, probs)


def region_mask(l: LabelVolume, r: RegionSpec) -> np.ndarray:
    """Boolean mask of voxels whose label belongs to ``r``."""
    too_big = [v for v in r.labels if v >= l.n_classes]
    if too_big:
        raise SpecError(
            f"region {r.name!r} uses labels {sorted(too_big)} but the volume has "
            f"{l.n_classes} classes"
        )
    return np.isin(l.voxels, sorted(r.labels))
