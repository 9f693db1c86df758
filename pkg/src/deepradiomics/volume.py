"""3D volume and ROI-mask handling.

File format: a pair of files per volume, `<name>.vol.json` (header) and
`<name>.vol.raw` (payload).  The header declares dims, spacing and dtype;
the payload is raw little-endian float32 (volumes) or uint8 in {0, 1}
(masks), x-fastest.  Resampling is trilinear on a voxel grid whose first
voxel centre sits at the physical origin, so a volume with spacing s has
voxel i at physical position i*s along each axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import (
    DegenerateOutput,
    EmptyMask,
    MalformedHeader,
    MissingFile,
    NonFiniteData,
    ShapeMismatch,
)

MODALITIES = ("T1WI", "T1CE", "T2WI", "FLAIR", "DERIVED")

CNN_INPUT_SIZE = 64


@dataclass(frozen=True)
class Volume3D:
    """A scalar 3D grid with voxel spacing in millimetres.

    `data` has shape (nx, ny, nz) and is treated as read-only.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    modality: str = "DERIVED"

    def __post_init__(self):
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ShapeMismatch(f"volume data must be 3D, got shape {self.data.shape}")
        if len(self.spacing) != 3 or not all(
            math.isfinite(s) and s > 0 for s in self.spacing
        ):
            raise MalformedHeader(f"spacing must be positive and finite, got {self.spacing}")
        if self.modality not in MODALITIES:
            raise MalformedHeader(f"unknown modality {self.modality!r}")
        if not np.isfinite(self.data).all():
            raise NonFiniteData("volume contains NaN or Inf")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class RoiMask:
    """Binary tumour mask aligned voxel-for-voxel to a Volume3D."""

    voxels: np.ndarray  # uint8, values in {0, 1}

    def __post_init__(self):
        if self.voxels.ndim != 3:
            raise ShapeMismatch(f"mask must be 3D, got shape {self.voxels.shape}")
        bad = (self.voxels != 0) & (self.voxels != 1)
        if bad.any():
            raise MalformedHeader("mask voxels must be 0 or 1")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    @property
    def count(self) -> int:
        return int(self.voxels.sum())


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------

def _sidecar_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    name = p.name
    if name.endswith(".vol.json"):
        stem = name[: -len(".vol.json")]
    elif name.endswith(".vol.raw"):
        stem = name[: -len(".vol.raw")]
    else:
        stem = name
    return p.with_name(stem + ".vol.json"), p.with_name(stem + ".vol.raw")


def volume_exists(path) -> bool:
    """True when both sidecar and payload files are present."""
    side, raw = _sidecar_paths(path)
    return side.exists() and raw.exists()


def read_header(path) -> dict:
    """Parse and validate a `.vol.json` sidecar; returns the header dict."""
    side, raw = _sidecar_paths(path)
    if not side.exists():
        raise MissingFile(f"no sidecar at {side}")
    if not raw.exists():
        raise MissingFile(f"no payload at {raw}")
    try:
        hdr = json.loads(side.read_text())
    except (ValueError, UnicodeDecodeError) as e:
        raise MalformedHeader(f"{side}: {e}") from e
    dims = hdr.get("dims")
    spacing = hdr.get("spacing_mm")
    dtype = hdr.get("dtype")
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or not all(isinstance(d, int) and d > 0 for d in dims)
    ):
        raise MalformedHeader(f"{side}: bad dims {dims!r}")
    if (
        not isinstance(spacing, list)
        or len(spacing) != 3
        or not all(
            isinstance(s, (int, float)) and math.isfinite(s) and s > 0 for s in spacing
        )
    ):
        raise MalformedHeader(f"{side}: bad spacing_mm {spacing!r}")
    if dtype not in ("f32le", "u8"):
        raise MalformedHeader(f"{side}: bad dtype {dtype!r}")
    return hdr


def load_volume(path) -> Volume3D:
    """Load a float32 volume from its `.vol.json` / `.vol.raw` pair."""
    side, raw = _sidecar_paths(path)
    hdr = read_header(path)
    if hdr["dtype"] != "f32le":
        raise MalformedHeader(f"{side}: expected dtype f32le, got {hdr['dtype']!r}")
    modality = hdr.get("modality", "DERIVED")
    if modality not in MODALITIES:
        raise MalformedHeader(f"{side}: unknown modality {modality!r}")
    nx, ny, nz = hdr["dims"]
    payload = raw.read_bytes()
    if len(payload) != 4 * nx * ny * nz:
        raise MalformedHeader(
            f"{raw}: payload has {len(payload)} bytes, header declares {4 * nx * ny * nz}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape((nx, ny, nz), order="F")
    if not np.isfinite(data).all():
        raise NonFiniteData(f"{raw}: payload contains NaN or Inf")
    return Volume3D(
        data=data.copy(), spacing=tuple(float(s) for s in hdr["spacing_mm"]), modality=modality
    )


def save_volume(vol: Volume3D, path) -> None:
    """Write a volume as a `.vol.json` / `.vol.raw` pair (float32 payload)."""
    side, raw = _sidecar_paths(path)
    hdr = {
        "dims": [int(d) for d in vol.dims],
        "spacing_mm": [float(s) for s in vol.spacing],
        "dtype": "f32le",
        "modality": vol.modality,
    }
    side.write_text(json.dumps(hdr, sort_keys=True) + "\n")
    raw.write_bytes(np.asarray(vol.data, dtype="<f4").tobytes(order="F"))


def load_mask(path) -> RoiMask:
    """Load a binary mask from its sidecar pair (dtype u8)."""
    side, raw = _sidecar_paths(path)
    hdr = read_header(path)
    if hdr["dtype"] != "u8":
        raise MalformedHeader(f"{side}: expected dtype u8, got {hdr['dtype']!r}")
    nx, ny, nz = hdr["dims"]
    payload = raw.read_bytes()
    if len(payload) != nx * ny * nz:
        raise MalformedHeader(
            f"{raw}: payload has {len(payload)} bytes, header declares {nx * ny * nz}"
        )
    voxels = np.frombuffer(payload, dtype=np.uint8).reshape((nx, ny, nz), order="F")
    return RoiMask(voxels=voxels.copy())


def save_mask(mask: RoiMask, path, spacing=(1.0, 1.0, 1.0)) -> None:
    side, raw = _sidecar_paths(path)
    hdr = {
        "dims": [int(d) for d in mask.dims],
        "spacing_mm": [float(s) for s in spacing],
        "dtype": "u8",
        "modality": "DERIVED",
    }
    side.write_text(json.dumps(hdr, sort_keys=True) + "\n")
    raw.write_bytes(np.asarray(mask.voxels, dtype=np.uint8).tobytes(order="F"))


# --------------------------------------------------------------------------
# resampling and intensity normalisation
# --------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _iso_dims(dims, spacing, target_mm: float) -> tuple[int, int, int]:
    out = tuple(_round_half_up(n * s / target_mm) for n, s in zip(dims, spacing))
    if any(d < 1 for d in out):
        raise DegenerateOutput(
            f"resampling {dims} at spacing {spacing} to {target_mm} mm gives dims {out}"
        )
    return out


def _trilinear_grid(data: np.ndarray, coords_1d: list[np.ndarray]) -> np.ndarray:
    """Trilinear interpolation of `data` on the separable grid of coords.

    Coordinates are in voxel-index space and clamped to the valid range, so
    sampling outside the grid replicates edge values.
    """
    grid = np.meshgrid(*coords_1d, indexing="ij")
    return map_coordinates(
        np.asarray(data, dtype=np.float64), np.stack(grid), order=1, mode="nearest"
    )


def resample_isotropic(vol: Volume3D, target_mm: float) -> Volume3D:
    """Resample to an isotropic grid of `target_mm` millimetre voxels.

    Output dims are round(n*s/target_mm) per axis; values come from
    trilinear interpolation at the new voxel centres.  A volume already at
    the target spacing is returned unchanged.
    """
    if not (target_mm > 0 and math.isfinite(target_mm)):
        raise ValueError(f"target_mm must be positive, got {target_mm}")
    if all(s == target_mm for s in vol.spacing):
        return vol
    out_dims = _iso_dims(vol.dims, vol.spacing, target_mm)
    coords = [
        np.arange(od, dtype=np.float64) * (target_mm / s)
        for od, s in zip(out_dims, vol.spacing)
    ]
    data = _trilinear_grid(vol.data, coords)
    return Volume3D(data=data, spacing=(target_mm,) * 3, modality=vol.modality)


def resample_mask(mask: RoiMask, spacing, target_mm: float) -> RoiMask:
    """Resample a binary mask onto the grid resample_isotropic would produce.

    The mask is interpolated as a float field and re-binarised at 0.5.  A
    nonempty input is guaranteed to stay nonempty: if thresholding empties
    it, the voxel nearest the ROI centroid is switched back on.
    """
    if not (target_mm > 0 and math.isfinite(target_mm)):
        raise ValueError(f"target_mm must be positive, got {target_mm}")
    if all(s == target_mm for s in spacing):
        return mask
    out_dims = _iso_dims(mask.dims, spacing, target_mm)
    coords = [
        np.arange(od, dtype=np.float64) * (target_mm / s)
        for od, s in zip(out_dims, spacing)
    ]
    dense = _trilinear_grid(mask.voxels, coords)
    voxels = (dense > 0.5).astype(np.uint8)
    if mask.count > 0 and voxels.sum() == 0:
        centroid = [float(c.mean()) for c in np.nonzero(mask.voxels)]
        idx = tuple(
            min(out_dims[a] - 1, max(0, _round_half_up(centroid[a] * spacing[a] / target_mm)))
            for a in range(3)
        )
        voxels[idx] = 1
    return RoiMask(voxels=voxels)


def standardize_intensity(vol: Volume3D) -> Volume3D:
    """Rescale values to [0, 255]; a constant volume maps to all zeros."""
    lo = float(vol.data.min())
    hi = float(vol.data.max())
    if hi == lo:
        data = np.zeros(vol.dims, dtype=np.float64)
    else:
        data = 255.0 * (np.asarray(vol.data, dtype=np.float64) - lo) / (hi - lo)
        np.clip(data, 0.0, 255.0, out=data)  # shave 1-ulp rounding overshoot
    return Volume3D(data=data, spacing=vol.spacing, modality=vol.modality)


# --------------------------------------------------------------------------
# fixed-size network input extraction
# --------------------------------------------------------------------------

def _resize_align_corners(data: np.ndarray, out_dims) -> np.ndarray:
    """Trilinear resize mapping the corners of `data` onto the output corners."""
    coords = []
    for n_in, n_out in zip(data.shape, out_dims):
        if n_out == 1:
            coords.append(np.array([(n_in - 1) / 2.0]))
        else:
            coords.append(np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1)))
    return _trilinear_grid(data, coords)


def extract_cnn_input(vol: Volume3D, mask: RoiMask, size: int = CNN_INPUT_SIZE) -> tuple[Volume3D, RoiMask]:
    """Cut the ROI bounding box out of `vol` and fit it into a `size`^3 cube.

    Out-of-mask voxels are zeroed first.  The box is scaled by a single
    factor (largest axis -> `size`) so aspect ratio is preserved, then
    zero-padded to centre it.  Returns the cube and a matching binary mask
    (threshold 0.5 after the same resize; never empty).
    """
    if vol.dims != mask.dims:
        raise ShapeMismatch(f"volume dims {vol.dims} != mask dims {mask.dims}")
    if mask.count == 0:
        raise EmptyMask("cannot extract network input from an empty mask")

    inside = mask.voxels.astype(bool)
    masked = np.where(inside, np.asarray(vol.data, dtype=np.float64), 0.0)
    idx = np.nonzero(inside)
    lo = [int(i.min()) for i in idx]
    hi = [int(i.max()) + 1 for i in idx]
    box = masked[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    box_mask = inside[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]].astype(np.float64)

    scale = size / max(box.shape)
    target = tuple(min(size, max(1, _round_half_up(b * scale))) for b in box.shape)
    resized = _resize_align_corners(box, target)
    resized_mask = _resize_align_corners(box_mask, target) > 0.5

    cube = np.zeros((size, size, size), dtype=np.float64)
    cube_mask = np.zeros((size, size, size), dtype=np.uint8)
    off = tuple((size - t) // 2 for t in target)
    sl = tuple(slice(o, o + t) for o, t in zip(off, target))
    cube[sl] = resized
    cube_mask[sl] = resized_mask.astype(np.uint8)
    if cube_mask.sum() == 0:
        # degenerate resize: re-seed at the box centre so downstream
        # histogram collection always has at least one voxel
        centre = tuple(o + (t - 1) // 2 for o, t in zip(off, target))
        cube_mask[centre] = 1

    out = Volume3D(data=cube, spacing=(1.0, 1.0, 1.0), modality=vol.modality)
    return out, RoiMask(voxels=cube_mask)
