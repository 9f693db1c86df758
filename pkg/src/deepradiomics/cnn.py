"""Fixed two-layer 3D convolutional network, inference only.

Architecture: 64^3 input -> [conv 2x2x2 stride 1 'same', ReLU, 2x2x2
max-pool stride 2] twice, giving 10 maps of 32^3 then 10 maps of 16^3.
Together with the raw input that yields the 21 activation volumes consumed
by the feature extractor.  Dropout exists only in training and is identity
here; the trailing fully-connected and softmax weights are carried as
metadata and never executed.

Weights file: one binary file whose first line is a JSON header (layer
shapes, provenance, format version) followed by a raw little-endian
float32 payload in declared order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    IndivisibleDims,
    MalformedWeights,
    MissingFile,
    NonFiniteWeights,
    ShapeMismatch,
)
from .volume import CNN_INPUT_SIZE, RoiMask, Volume3D

WEIGHTS_FORMAT_VERSION = 1

N_FILTERS = 10
KERNEL = 2
CONV1_SHAPE = (N_FILTERS, KERNEL, KERNEL, KERNEL, 1)
CONV2_SHAPE = (N_FILTERS, KERNEL, KERNEL, KERNEL, N_FILTERS)
N_MAPS = 1 + 2 * N_FILTERS


@dataclass(frozen=True)
class CnnWeights:
    """Filter tensors, laid out (out_channels, kx, ky, kz, in_channels)."""

    conv1: np.ndarray
    bias1: np.ndarray
    conv2: np.ndarray
    bias2: np.ndarray
    fc: tuple[np.ndarray, np.ndarray] | None = None
    softmax: tuple[np.ndarray, np.ndarray] | None = None
    provenance: str = ""

    def __post_init__(self):
        if self.conv1.shape != CONV1_SHAPE or self.bias1.shape != (N_FILTERS,):
            raise MalformedWeights(
                f"layer 1 must be {CONV1_SHAPE} + ({N_FILTERS},) bias, "
                f"got {self.conv1.shape} + {self.bias1.shape}"
            )
        if self.conv2.shape != CONV2_SHAPE or self.bias2.shape != (N_FILTERS,):
            raise MalformedWeights(
                f"layer 2 must be {CONV2_SHAPE} + ({N_FILTERS},) bias, "
                f"got {self.conv2.shape} + {self.bias2.shape}"
            )
        for arr in self._arrays():
            if not np.isfinite(arr).all():
                raise NonFiniteWeights("weights contain NaN or Inf")

    def _arrays(self) -> list[np.ndarray]:
        out = [self.conv1, self.bias1, self.conv2, self.bias2]
        for pair in (self.fc, self.softmax):
            if pair is not None:
                out.extend(pair)
        return out


@dataclass(frozen=True)
class ActivationSet:
    """The 21 activation volumes of one forward pass plus per-scale masks.

    Map order is fixed: index 0 is the raw network input, 1..10 the first
    convolutional layer, 11..20 the second.
    """

    input_map: Volume3D
    layer1_maps: tuple[Volume3D, ...]
    layer2_maps: tuple[Volume3D, ...]
    mask64: RoiMask
    mask32: RoiMask
    mask16: RoiMask

    def __post_init__(self):
        if len(self.layer1_maps) != N_FILTERS or len(self.layer2_maps) != N_FILTERS:
            raise ShapeMismatch("expected 10 maps per convolutional layer")

    @property
    def n_maps(self) -> int:
        return 1 + len(self.layer1_maps) + len(self.layer2_maps)

    def maps_with_masks(self) -> list[tuple[Volume3D, RoiMask]]:
        """All 21 (map, matching-resolution mask) pairs in canonical order."""
        pairs = [(self.input_map, self.mask64)]
        pairs += [(m, self.mask32) for m in self.layer1_maps]
        pairs += [(m, self.mask16) for m in self.layer2_maps]
        return pairs


# --------------------------------------------------------------------------
# weights I/O
# --------------------------------------------------------------------------

def _segments(header: dict) -> list[tuple[str, tuple[int, ...]]]:
    segs = [
        ("conv1", tuple(header["conv1"])),
        ("bias1", tuple(header["bias1"])),
        ("conv2", tuple(header["conv2"])),
        ("bias2", tuple(header["bias2"])),
    ]
    for name in ("fc_w", "fc_b", "softmax_w", "softmax_b"):
        shape = header.get(name)
        if shape is not None:
            segs.append((name, tuple(shape)))
    return segs


def save_weights(w: CnnWeights, path) -> None:
    header = {
        "version": WEIGHTS_FORMAT_VERSION,
        "provenance": w.provenance,
        "conv1": list(w.conv1.shape),
        "bias1": list(w.bias1.shape),
        "conv2": list(w.conv2.shape),
        "bias2": list(w.bias2.shape),
        "fc_w": list(w.fc[0].shape) if w.fc else None,
        "fc_b": list(w.fc[1].shape) if w.fc else None,
        "softmax_w": list(w.softmax[0].shape) if w.softmax else None,
        "softmax_b": list(w.softmax[1].shape) if w.softmax else None,
    }
    blobs = [np.asarray(a, dtype="<f4").tobytes() for a in w._arrays()]
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            f.write(b)


def load_weights(path) -> CnnWeights:
    """Load and shape-validate a weights file."""
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"no weights file at {p}")
    raw = p.read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise MalformedWeights(f"{p}: missing header line")
    try:
        header = json.loads(raw[:nl].decode())
    except (ValueError, UnicodeDecodeError) as e:
        raise MalformedWeights(f"{p}: bad header: {e}") from e
    if header.get("version") != WEIGHTS_FORMAT_VERSION:
        raise MalformedWeights(f"{p}: unsupported format version {header.get('version')!r}")
    for key in ("conv1", "bias1", "conv2", "bias2"):
        if not isinstance(header.get(key), list):
            raise MalformedWeights(f"{p}: header missing shape for {key}")

    segs = _segments(header)
    payload = raw[nl + 1:]
    expected = sum(int(np.prod(shape)) for _, shape in segs)
    if len(payload) != 4 * expected:
        raise MalformedWeights(
            f"{p}: payload has {len(payload)} bytes, header declares {4 * expected}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in segs:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(
            payload, dtype="<f4", count=n, offset=offset
        ).reshape(shape).astype(np.float64)
        offset += 4 * n
    for arr in arrays.values():
        if not np.isfinite(arr).all():
            raise NonFiniteWeights(f"{p}: weights contain NaN or Inf")

    fc = (arrays["fc_w"], arrays["fc_b"]) if "fc_w" in arrays else None
    softmax = (arrays["softmax_w"], arrays["softmax_b"]) if "softmax_w" in arrays else None
    if ("fc_w" in arrays) != ("fc_b" in arrays) or ("softmax_w" in arrays) != (
        "softmax_b" in arrays
    ):
        raise MalformedWeights(f"{p}: fc/softmax weight and bias must be declared together")
    return CnnWeights(
        conv1=arrays["conv1"],
        bias1=arrays["bias1"],
        conv2=arrays["conv2"],
        bias2=arrays["bias2"],
        fc=fc,
        softmax=softmax,
        provenance=str(header.get("provenance", "")),
    )


def generate_test_weights(seed: int) -> CnnWeights:
    """Deterministic stand-in weights, uniform on (-0.5, 0.5).

    Draw order is fixed (conv1, bias1, conv2, bias2 from one PCG64 stream)
    so a given seed always yields bit-identical weights.
    """
    rng = np.random.default_rng(seed)
    return CnnWeights(
        conv1=rng.uniform(-0.5, 0.5, CONV1_SHAPE),
        bias1=rng.uniform(-0.5, 0.5, (N_FILTERS,)),
        conv2=rng.uniform(-0.5, 0.5, CONV2_SHAPE),
        bias2=rng.uniform(-0.5, 0.5, (N_FILTERS,)),
        provenance=f"seed:{seed}",
    )


# --------------------------------------------------------------------------
# primitive ops
# --------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def _pad_amounts(n: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Returns (pad_before, pad_after, out_size) for one spatial axis."""
    if padding == "same":
        out = -(-n // stride)  # ceil
        needed = max(0, (out - 1) * stride + k - n)
        return needed // 2, needed - needed // 2, out
    if padding == "valid":
        if n < k:
            raise ShapeMismatch(f"axis of size {n} too small for kernel {k}")
        return 0, 0, (n - k) // stride + 1
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def conv3d(
    x: np.ndarray,
    filters: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    padding: str = "same",
) -> np.ndarray:
    """Strided 3D cross-correlation.

    `x` is (in_channels, X, Y, Z); `filters` is (out_channels, kx, ky, kz,
    in_channels).  'same' pads with zeros so output dims = ceil(in/stride),
    splitting any odd padding with the extra voxel at the high end.
    """
    x = np.asarray(x, dtype=np.float64)
    filters = np.asarray(filters, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 4 or filters.ndim != 5:
        raise ShapeMismatch(f"expected 4D input and 5D filters, got {x.ndim}D / {filters.ndim}D")
    c_out, kx, ky, kz, c_in = filters.shape
    if x.shape[0] != c_in:
        raise ShapeMismatch(f"input has {x.shape[0]} channels, filters expect {c_in}")
    if bias.shape != (c_out,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({c_out},)")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")

    pads, outs = [], []
    for axis, k in zip(x.shape[1:], (kx, ky, kz)):
        before, after, out = _pad_amounts(axis, k, stride, padding)
        pads.append((before, after))
        outs.append(out)
    xp = np.pad(x, [(0, 0)] + pads)

    result = np.empty((c_out, *outs), dtype=np.float64)
    result[:] = bias[:, None, None, None]
    for dx in range(kx):
        for dy in range(ky):
            for dz in range(kz):
                sl = xp[
                    :,
                    dx : dx + (outs[0] - 1) * stride + 1 : stride,
                    dy : dy + (outs[1] - 1) * stride + 1 : stride,
                    dz : dz + (outs[2] - 1) * stride + 1 : stride,
                ]
                # (c_out, c_in) . (c_in, X, Y, Z) accumulated per kernel offset
                result += np.tensordot(filters[:, dx, dy, dz, :], sl, axes=([1], [0]))
    return result


def maxpool3d(x: np.ndarray, window: int = 2, stride: int = 2) -> np.ndarray:
    """2x2x2 max pooling with stride 2; spatial dims must be even."""
    if window != 2 or stride != 2:
        raise ValueError("only window=2, stride=2 pooling is supported")
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"expected (channels, X, Y, Z), got {x.shape}")
    c, nx, ny, nz = x.shape
    if nx % 2 or ny % 2 or nz % 2:
        raise IndivisibleDims(f"spatial dims {x.shape[1:]} not divisible by 2")
    view = x.reshape(c, nx // 2, 2, ny // 2, 2, nz // 2, 2)
    return view.max(axis=(2, 4, 6))


def downsample_mask(mask: RoiMask) -> RoiMask:
    """Halve a mask: a coarse voxel is in-ROI iff any of its 2^3 children is."""
    v = mask.voxels
    nx, ny, nz = v.shape
    if nx % 2 or ny % 2 or nz % 2:
        raise IndivisibleDims(f"mask dims {v.shape} not divisible by 2")
    view = v.reshape(nx // 2, 2, ny // 2, 2, nz // 2, 2)
    return RoiMask(voxels=view.max(axis=(1, 3, 5)))


# --------------------------------------------------------------------------
# forward pass
# --------------------------------------------------------------------------

def forward(input64: Volume3D, mask64: RoiMask, weights: CnnWeights) -> ActivationSet:
    """Run the fixed network on one 64^3 input volume.

    Pure function of (input, weights); returns all 21 activation maps and
    the ROI mask max-downsampled to each map resolution.
    """
    size = CNN_INPUT_SIZE
    if input64.dims != (size, size, size):
        raise ShapeMismatch(f"network input must be {size}^3, got {input64.dims}")
    if mask64.dims != input64.dims:
        raise ShapeMismatch(f"mask dims {mask64.dims} != input dims {input64.dims}")

    x0 = np.asarray(input64.data, dtype=np.float64)[None]
    a1 = maxpool3d(relu(conv3d(x0, weights.conv1, weights.bias1, stride=1, padding="same")))
    a2 = maxpool3d(relu(conv3d(a1, weights.conv2, weights.bias2, stride=1, padding="same")))

    mask32 = downsample_mask(mask64)
    mask16 = downsample_mask(mask32)

    def as_volume(arr: np.ndarray, mm: float) -> Volume3D:
        return Volume3D(data=arr, spacing=(mm, mm, mm), modality="DERIVED")

    return ActivationSet(
        input_map=input64,
        layer1_maps=tuple(as_volume(a1[i], 2.0) for i in range(N_FILTERS)),
        layer2_maps=tuple(as_volume(a2[i], 4.0) for i in range(N_FILTERS)),
        mask64=mask64,
        mask32=mask32,
        mask16=mask16,
    )
