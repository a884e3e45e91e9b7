"""Deterministic synthetic cases with known ground truth.

Randomness comes from SplitMix64 implemented with numpy uint64 arithmetic,
so outputs are identical on every platform and numpy version.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError
from .volume import DEFAULT_N_CLASSES, LabelVolume, ProbVolume, VolumeMeta

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of SplitMix64 seeded with ``seed``."""
    state = np.uint64(seed & _MASK64)
    counters = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(state + counters * _GOLDEN)


def uniform(seed: int, n: int) -> np.ndarray:
    """``n`` doubles in [0, 1) from the top 53 bits of each draw."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(seed: int, stream: int) -> int:
    with np.errstate(over="ignore"):
        return int(splitmix64(seed ^ (stream * 0xD1B54A32D192ED03 & _MASK64), 1)[0])


@dataclass(frozen=True)
class Shape:
    label: int
    geometry: str  # "sphere" or "box"
    center: tuple[float, float, float]
    size: float | tuple[int, int, int]  # sphere radius, or box edge lengths

    def mask(self, dims) -> np.ndarray:
        x, y, z = np.indices(dims, dtype=np.float64)
        cx, cy, cz = self.center
        if self.geometry == "sphere":
            r = float(self.size)
            return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= r * r
        lo, hi = self.box_bounds()
        return (
            (x >= lo[0]) & (x < hi[0]) & (y >= lo[1]) & (y < hi[1]) & (z >= lo[2]) & (z < hi[2])
        )

    def box_bounds(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        size = tuple(int(s) for s in np.broadcast_to(self.size, 3))
        lo = tuple(int(c) - s // 2 for c, s in zip(self.center, size))
        hi = tuple(a + s for a, s in zip(lo, size))
        return lo, hi

    def validate(self, dims, n_classes: int) -> None:
        if not 0 <= self.label < n_classes:
            raise SpecError(f"shape label {self.label} outside [0, {n_classes})")
        if self.geometry == "sphere":
            r = float(self.size)
            if r < 0:
                raise SpecError(f"negative sphere radius {r}")
            lo = [c - r for c in self.center]
            hi = [c + r for c in self.center]
            if any(a < 0 for a in lo) or any(b > d - 1 for b, d in zip(hi, dims)):
                raise SpecError(f"sphere {self} extends outside dims {dims}")
        elif self.geometry == "box":
            lo, hi = self.box_bounds()
            if any(s < 1 for s in np.broadcast_to(self.size, 3)):
                raise SpecError(f"box sizes must be >= 1: {self.size}")
            if any(a < 0 for a in lo) or any(b > d for b, d in zip(hi, dims)):
                raise SpecError(f"box {self} extends outside dims {dims}")
        else:
            raise SpecError(f"unknown geometry {self.geometry!r}")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shapes: tuple[Shape, ...] = field(default_factory=tuple)
    noise: float = 0.0
    n_models: int = 3
    n_classes: int = DEFAULT_N_CLASSES
    case_id: str = "synth"

    def validate(self) -> None:
        if not 0.0 <= self.noise < 0.5:
            raise SpecError(f"noise must be in [0, 0.5), got {self.noise}")
        if self.n_models < 1:
            raise SpecError(f"n_models must be >= 1, got {self.n_models}")
        for shape in self.shapes:
            shape.validate(self.dims, self.n_classes)


def nested_tumor(center) -> tuple[Shape, ...]:
    """Edema box enclosing a necrotic box enclosing an enhancing box.

    Every class is at least three voxels thick so it survives one erosion.
    """
    return (
        Shape(2, "box", center, (16, 16, 16)),
        Shape(1, "box", center, (10, 10, 10)),
        Shape(3, "box", center, (4, 4, 4)),
    )


def default_spec(
    seed: int = 0, dims=(64, 64, 64), n_models: int = 3, noise: float = 0.0, case_id: str = "synth"
) -> SynthSpec:
    """Two nested-box tumors, one per x-half, positions drawn from ``seed``.

    The lesions stay five voxels apart, so lesion matching with the default
    three-iteration dilation keeps them separate.
    """
    dims = tuple(int(d) for d in dims)
    nx, ny, nz = dims
    if min(dims) < 40:
        raise SpecError(f"default synthetic layout needs dims >= 40, got {dims}")
    u = uniform(derive_seed(seed, 0xC0FFEE), 6)

    def pick(lo: int, hi: int, r: float) -> int:
        return lo + int(r * (hi - lo))

    half = nx // 2
    first = (pick(8, half - 10, u[0]), pick(8, ny - 8, u[1]), pick(8, nz - 8, u[2]))
    second = (pick(half + 10, nx - 8, u[3]), pick(8, ny - 8, u[4]), pick(8, nz - 8, u[5]))
    shapes = nested_tumor(first) + nested_tumor(second)
    return SynthSpec(seed, dims, (1.0, 1.0, 1.0), shapes, noise, n_models, case_id=case_id)


def rasterize(spec: SynthSpec) -> LabelVolume:
    spec.validate()
    voxels = np.zeros(spec.dims, dtype=np.uint8)
    for shape in spec.shapes:
        voxels[shape.mask(spec.dims)] = shape.label
    return LabelVolume(VolumeMeta(spec.dims, spec.spacing, spec.case_id), voxels, spec.n_classes)


def make_case(spec: SynthSpec) -> tuple[LabelVolume, list[ProbVolume]]:
    """Ground truth plus ``n_models`` noisy, normalized one-hot members."""
    gt = rasterize(spec)
    shape = spec.dims + (spec.n_classes,)
    onehot = np.zeros(shape, dtype=np.float64)
    np.put_along_axis(onehot, gt.voxels[..., None].astype(np.intp), 1.0, axis=3)
    members = []
    for m in range(spec.n_models):
        if spec.noise > 0:
            u = uniform(derive_seed(spec.seed, m), onehot.size).reshape(shape, order="F")
            probs = onehot + spec.noise * u
            probs /= probs.sum(axis=3, keepdims=True)
        else:
            probs = onehot.copy()
        members.append(ProbVolume(gt.meta, probs))
    return gt, members
