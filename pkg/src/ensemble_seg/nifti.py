"""Minimal NIfTI-1 single-file reader/writer.

Supported subset: ``.nii`` or gzip-compressed ``.nii.gz``, little-endian,
datatype uint8 (3D label volumes) or float32 (4D probability volumes with the
fourth dimension as channels). Spacing comes from ``pixdim[1:4]`` and is
stored at float32 precision. The case id travels in the ``descrip`` field.
Orientation/affine information is written as a plain diagonal sform and
ignored on read.
"""

from __future__ import annotations

import gzip
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, UnsupportedError
from .volume import DEFAULT_N_CLASSES, LabelVolume, ProbVolume, VolumeMeta

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte empty extension block
MAGIC = b"n+1\x00"
GZIP_MAGIC = b"\x1f\x8b"

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16
_DTYPES = {DT_UINT8: (np.dtype("<u1"), 8), DT_FLOAT32: (np.dtype("<f4"), 32)}

_NIFTI_UNITS_MM = 2


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def read_header(raw: bytes, path: str | Path = "<bytes>") -> dict:
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: file too short for a NIfTI-1 header ({len(raw)} bytes)")
    if raw[344:348] != MAGIC:
        if raw[344:348] == b"ni1\x00":
            raise UnsupportedError(f"{path}: two-file (.hdr/.img) NIfTI is not supported")
        raise FormatError(f"{path}: bad magic bytes {raw[344:348]!r}")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
            raise UnsupportedError(f"{path}: big-endian NIfTI is not supported")
        raise FormatError(f"{path}: sizeof_hdr is {sizeof_hdr}, expected 348")
    dim = struct.unpack_from("<8h", raw, 40)
    datatype, bitpix = struct.unpack_from("<2h", raw, 70)
    pixdim = struct.unpack_from("<8f", raw, 76)
    vox_offset, scl_slope, scl_inter = struct.unpack_from("<3f", raw, 108)
    descrip = raw[148:228].split(b"\x00", 1)[0].decode("utf-8", errors="replace")
    return {
        "dim": dim,
        "datatype": datatype,
        "bitpix": bitpix,
        "pixdim": pixdim,
        "vox_offset": vox_offset,
        "scl_slope": scl_slope,
        "scl_inter": scl_inter,
        "descrip": descrip,
    }


def case_id_from_path(path: Path) -> str:
    name = path.name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def read_nifti(
    path: str | Path, n_classes: int = DEFAULT_N_CLASSES
) -> tuple[VolumeMeta, LabelVolume | ProbVolume]:
    """Read a volume; uint8 files become labels, 4D float32 files probabilities."""
    path = Path(path)
    raw = _read_bytes(path)
    hdr = read_header(raw, path)

    datatype = hdr["datatype"]
    if datatype not in _DTYPES:
        raise UnsupportedError(f"{path}: datatype code {datatype} is not supported (uint8/float32 only)")
    dtype, bitpix = _DTYPES[datatype]
    if hdr["bitpix"] != bitpix:
        raise FormatError(f"{path}: bitpix {hdr['bitpix']} inconsistent with datatype {datatype}")
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if not (slope in (0.0, 1.0) and inter == 0.0):
        raise UnsupportedError(f"{path}: intensity scaling (scl_slope/scl_inter) is not supported")

    dim = hdr["dim"]
    ndim = dim[0]
    if ndim not in (3, 4) or any(d < 1 for d in dim[1 : ndim + 1]):
        raise UnsupportedError(f"{path}: only 3D or 4D volumes are supported, dim={dim}")
    dims = tuple(int(d) for d in dim[1:4])
    channels = int(dim[4]) if ndim == 4 else 1
    if datatype == DT_UINT8 and channels != 1:
        raise UnsupportedError(f"{path}: 4D uint8 volumes are not supported")
    if datatype == DT_FLOAT32 and ndim != 4:
        raise UnsupportedError(f"{path}: float32 data must be 4D with channels in dim[4]")

    spacing = tuple(float(s) for s in hdr["pixdim"][1:4])
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise FormatError(f"{path}: invalid pixdim spacing {spacing}")
    case_id = hdr["descrip"] or case_id_from_path(path)
    meta = VolumeMeta(dims, spacing, case_id)

    offset = int(hdr["vox_offset"])
    if offset < HEADER_SIZE:
        raise FormatError(f"{path}: vox_offset {hdr['vox_offset']} inside the header")
    count = dims[0] * dims[1] * dims[2] * channels
    nbytes = count * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise FormatError(f"{path}: truncated voxel data ({len(raw) - offset} of {nbytes} bytes)")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)

    if datatype == DT_UINT8:
        voxels = flat.reshape(dims, order="F")
        if voxels.max(initial=0) >= n_classes:
            raise DataError(f"{path}: label value {voxels.max()} >= n_classes {n_classes}")
        return meta, LabelVolume(meta, voxels, n_classes)

    if not np.all(np.isfinite(flat)):
        raise DataError(f"{path}: non-finite voxel value in float data")
    probs = flat.reshape(dims + (channels,), order="F")
    return meta, ProbVolume(meta, probs)


def encode_header(meta: VolumeMeta, datatype: int, channels: int | None) -> bytes:
    """Return the 352 bytes (header plus empty extension flag) preceding voxel data."""
    hdr = bytearray(VOX_OFFSET)
    dtype, bitpix = _DTYPES[datatype]
    nx, ny, nz = meta.dims
    sx, sy, sz = meta.spacing
    if channels is None:
        dim = (3, nx, ny, nz, 1, 1, 1, 1)
    else:
        dim = (4, nx, ny, nz, channels, 1, 1, 1)
    if max(dim) > 32767:
        raise UnsupportedError(f"dimension too large for NIfTI-1: {dim}")
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    hdr[38] = ord("r")
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<2h", hdr, 70, datatype, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<3f", hdr, 108, float(VOX_OFFSET), 1.0, 0.0)
    hdr[123] = _NIFTI_UNITS_MM
    descrip = meta.case_id.encode("utf-8")
    if len(descrip) > 79:
        raise DataError(f"case id longer than 79 bytes cannot be stored: {meta.case_id!r}")
    hdr[148 : 148 + len(descrip)] = descrip
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code, sform_code
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, 0.0)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, 0.0)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, 0.0)
    hdr[344:348] = MAGIC
    return bytes(hdr)


def atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_nifti(volume: LabelVolume | ProbVolume, path: str | Path) -> None:
    """Write ``volume``; a ``.gz`` suffix selects gzip compression.

    Probabilities are stored as float32, so only float32 inputs round-trip
    bit-exactly.
    """
    path = Path(path)
    if isinstance(volume, LabelVolume):
        header = encode_header(volume.meta, DT_UINT8, None)
        data = np.asarray(volume.voxels, dtype="<u1").tobytes(order="F")
    elif isinstance(volume, ProbVolume):
        probs = np.asarray(volume.probs, dtype="<f4")
        if not np.all(np.isfinite(probs)):
            raise DataError("refusing to write non-finite probabilities")
        header = encode_header(volume.meta, DT_FLOAT32, volume.channels)
        data = probs.tobytes(order="F")
    else:
        raise TypeError(f"cannot write {type(volume).__name__} as NIfTI")
    payload = header + data
    if path.name.endswith(".gz"):
        payload = gzip.compress(payload, compresslevel=6, mtime=0)
    try:
        atomic_write(path, payload)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
