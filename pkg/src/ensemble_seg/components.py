"""3D connected-component labeling and binary morphology.

Out-of-volume voxels count as unset everywhere: dilation never grows from
outside, and erosion removes voxels whose neighbourhood leaves the volume.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .errors import ConfigError, PreconditionError, ShapeError
from .volume import VolumeMeta


class Connectivity(enum.Enum):
    FACE_6 = "face-6"
    EDGE_18 = "edge-18"
    VERTEX_26 = "vertex-26"

    @classmethod
    def parse(cls, value: Connectivity | str | int) -> Connectivity:
        if isinstance(value, cls):
            return value
        for conn in cls:
            if value == conn.value or str(value) == str(conn.neighbors):
                return conn
        raise ConfigError(
            f"unknown connectivity {value!r}; expected one of "
            + ", ".join(c.value for c in cls),
            field="connectivity",
        )

    @property
    def neighbors(self) -> int:
        return int(self.value.split("-")[1])

    @property
    def structure(self) -> np.ndarray:
        return _STRUCTURES[self.value]

    def offsets(self) -> list[tuple[int, int, int]]:
        """Neighbour offsets (centre excluded)."""
        return [
            (dx - 1, dy - 1, dz - 1)
            for dx, dy, dz in np.argwhere(self.structure)
            if (dx, dy, dz) != (1, 1, 1)
        ]

    def backward_offsets(self) -> np.ndarray:
        """Neighbour offsets visited before the centre in x-fastest scan order."""
        return _BACKWARD[self.value]


_STRUCTURES = {
    name: ndimage.generate_binary_structure(3, rank)
    for name, rank in (("face-6", 1), ("edge-18", 2), ("vertex-26", 3))
}
for _s in _STRUCTURES.values():
    _s.flags.writeable = False


def _backward(structure: np.ndarray) -> np.ndarray:
    offs = [tuple(int(v) - 1 for v in idx) for idx in np.argwhere(structure)]
    # earlier in scan order: compare (dz, dy, dx) lexicographically against zero
    return np.array([o for o in offs if (o[2], o[1], o[0]) < (0, 0, 0)], dtype=np.int64)


_BACKWARD = {name: _backward(s) for name, s in _STRUCTURES.items()}


@dataclass(frozen=True, eq=False)
class ComponentMap:
    """Component ids (0 = background, 1..k contiguous in scan order)."""

    meta: VolumeMeta
    ids: np.ndarray
    k: int

    def mask(self, component: int) -> np.ndarray:
        return self.ids == component


@numba.njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


@numba.njit(cache=True)
def _label_two_pass(mask, offsets):
    """Union-find labeling; final ids numbered by first voxel in x-fastest order."""
    nx, ny, nz = mask.shape
    prov = np.zeros((nx, ny, nz), dtype=np.int32)
    parent = np.zeros(nx * ny * nz + 1, dtype=np.int32)
    n_prov = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not mask[x, y, z]:
                    continue
                current = 0
                for j in range(offsets.shape[0]):
                    xx = x + offsets[j, 0]
                    yy = y + offsets[j, 1]
                    zz = z + offsets[j, 2]
                    if xx < 0 or yy < 0 or zz < 0 or xx >= nx or yy >= ny:
                        continue
                    other = prov[xx, yy, zz]
                    if other == 0:
                        continue
                    if current == 0:
                        current = _find(parent, other)
                    else:
                        a = _find(parent, current)
                        b = _find(parent, other)
                        if a != b:
                            lo, hi = (a, b) if a < b else (b, a)
                            parent[hi] = lo
                            current = lo
                if current == 0:
                    n_prov += 1
                    parent[n_prov] = n_prov
                    current = n_prov
                prov[x, y, z] = current
    final = np.zeros(n_prov + 1, dtype=np.int32)
    k = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                p = prov[x, y, z]
                if p == 0:
                    continue
                root = _find(parent, p)
                if final[root] == 0:
                    k += 1
                    final[root] = k
                prov[x, y, z] = final[root]
    return prov, k


def _as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 3:
        raise ShapeError(f"expected a 3D mask, got shape {m.shape}")
    return m.astype(bool, copy=False)


def connected_components(
    mask,
    conn: Connectivity | str = Connectivity.VERTEX_26,
    meta: VolumeMeta | None = None,
) -> ComponentMap:
    """Label connected components; ids follow first encounter in x-fastest order."""
    conn = Connectivity.parse(conn)
    m = _as_mask(mask)
    if meta is None:
        meta = VolumeMeta(m.shape)
    elif meta.dims != m.shape:
        raise ShapeError(f"mask shape {m.shape} != meta dims {meta.dims}")
    ids, k = _label_two_pass(np.ascontiguousarray(m, dtype=np.uint8), conn.backward_offsets())
    ids.flags.writeable = False
    return ComponentMap(meta, ids, int(k))


def component_sizes(cm: ComponentMap) -> list[tuple[int, int, float]]:
    """``(id, voxel count, volume in mm^3)`` for every component, ascending id."""
    counts = np.bincount(cm.ids.ravel(), minlength=cm.k + 1)
    vv = cm.meta.voxel_volume
    return [(i, int(counts[i]), float(counts[i]) * vv) for i in range(1, cm.k + 1)]


def dilate(mask, iterations: int = 1, conn: Connectivity | str = Connectivity.VERTEX_26) -> np.ndarray:
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    m = _as_mask(mask)
    if iterations == 0:
        return m.copy()
    # scipy treats iterations=0 as "until stable", hence the guard above
    return ndimage.binary_dilation(
        m, structure=Connectivity.parse(conn).structure, iterations=iterations, border_value=0
    )


def erode(mask, iterations: int = 1, conn: Connectivity | str = Connectivity.VERTEX_26) -> np.ndarray:
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    m = _as_mask(mask)
    if iterations == 0:
        return m.copy()
    return ndimage.binary_erosion(
        m, structure=Connectivity.parse(conn).structure, iterations=iterations, border_value=0
    )


def morph_reconstruct(marker, limit, conn: Connectivity | str = Connectivity.VERTEX_26) -> np.ndarray:
    """Reconstruction by dilation: grow ``marker`` inside ``limit`` until stable."""
    mk, lim = _as_mask(marker), _as_mask(limit)
    if mk.shape != lim.shape:
        raise ShapeError(f"marker shape {mk.shape} != limit shape {lim.shape}")
    if np.any(mk & ~lim):
        raise PreconditionError("marker is not contained in limit")
    if not mk.any():
        return np.zeros_like(lim)
    return ndimage.binary_dilation(
        mk, structure=Connectivity.parse(conn).structure, iterations=-1, mask=lim, border_value=0
    )
