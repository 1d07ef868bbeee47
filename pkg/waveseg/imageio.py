"""
Image and Subband Files
Binary PGM (P5) / PPM (P6) images with maxval 255, label maps stored as PGM,
and subband directories: one WLT1 tensor file per component plus a
header.json describing how they were produced.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from waveseg.config import SUPPORTED_MODES
from waveseg.errors import FormatError, ShapeError
from waveseg.filters import list_wavelets, subband_tags
from waveseg.tensor import Tensor, as_array, load, save
from waveseg.transform import Pyramid, Subbands

PathLike = Union[str, Path]

MAXVAL = 255
HEADER_FILE = "header.json"

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


@dataclass(frozen=True, eq=False)
class ImageFile:
    """Decoded image: tensor [C, H, W] scaled to [0, 1]."""
    tensor: Tensor
    maxval: int
    magic: str

    @property
    def channels(self) -> int:
        return self.tensor.shape[0]


def _parse_header(payload: bytes):
    tokens, offset = [], 0
    for _ in range(4):
        match = _TOKEN.match(payload, offset)
        if not match:
            raise FormatError("PNM header is truncated")
        tokens.append(match.group(1))
        offset = match.end()
    if offset >= len(payload) or payload[offset:offset + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise FormatError("PNM header must end with a single whitespace byte")
    magic = tokens[0].decode("ascii", "replace")
    if magic not in ("P5", "P6"):
        raise FormatError(f"unsupported PNM type {magic!r}; only binary P5 and P6 are read")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"malformed PNM header values {tokens[1:]}") from None
    if width < 1 or height < 1:
        raise FormatError(f"PNM size {width}x{height} is empty")
    if maxval != MAXVAL:
        raise FormatError(f"PNM maxval {maxval} is not supported; only 8-bit files with maxval 255 are read")
    return magic, width, height, maxval, offset + 1


def _read_raster(path: PathLike):
    payload = Path(path).read_bytes()
    magic, width, height, maxval, start = _parse_header(payload)
    channels = 1 if magic == "P5" else 3
    expected = width * height * channels
    raster = payload[start:start + expected]
    if len(raster) != expected:
        raise FormatError(f"PNM raster has {len(raster)} bytes, expected {expected}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return magic, maxval, np.moveaxis(pixels, -1, 0)


def read_pnm(path: PathLike) -> ImageFile:
    magic, maxval, pixels = _read_raster(path)
    return ImageFile(Tensor(pixels / maxval), maxval, magic)


def quantize(values) -> np.ndarray:
    """[0, 1] floats to 8-bit pixels (clipped, rounded half to even)."""
    return np.rint(np.clip(as_array(values), 0.0, 1.0) * MAXVAL).astype(np.uint8)


def _write_raster(path: PathLike, pixels: np.ndarray):
    if pixels.ndim == 2:
        pixels = pixels[None]
    if pixels.ndim != 3 or pixels.shape[0] not in (1, 3):
        raise ShapeError(f"images must be [H, W], [1, H, W] or [3, H, W], got {pixels.shape}")
    channels, height, width = pixels.shape
    magic = "P5" if channels == 1 else "P6"
    header = f"{magic}\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(np.moveaxis(pixels, 0, -1)).tobytes())


def write_pnm(path: PathLike, image) -> None:
    """Write a [C, H, W] (or [H, W]) image with values in [0, 1]."""
    _write_raster(path, quantize(image))


def read_label_map(path: PathLike) -> np.ndarray:
    """Integer labels [H, W] from an 8-bit PGM (pixel value = class id)."""
    magic, _, pixels = _read_raster(path)
    if magic != "P5":
        raise FormatError(f"label maps must be P5 (grayscale), got {magic}")
    return pixels[0].astype(np.int64)


def write_label_map(path: PathLike, labels) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.min() < 0 or labels.max() > MAXVAL:
        raise ShapeError("label maps must be 2D with values in [0, 255]")
    _write_raster(path, labels.astype(np.uint8))


# ---------------------------------------------------------------------------
# Subband directories
# ---------------------------------------------------------------------------

def component_file(level: int, tag: str, suffix: str = ".wlt") -> str:
    return f"level{level}_{tag}{suffix}"


def save_pyramid(p: Pyramid, out_dir: PathLike) -> Path:
    """Write every component of every level plus header.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = p.levels[0]
    for i, level in enumerate(p.levels, start=1):
        for tag, component in level.components().items():
            save(component, out / component_file(i, tag))
    header = {
        "format": "WLT1",
        "wavelet": first.wavelet_name,
        "mode": first.boundary_mode,
        "dim": first.dim,
        "levels": p.depth,
        "original_extents": [list(level.original_extent) for level in p.levels],
    }
    (out / HEADER_FILE).write_text(json.dumps(header, indent=2) + "\n")
    return out


def read_header(in_dir: PathLike) -> dict:
    path = Path(in_dir) / HEADER_FILE
    try:
        header = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError(f"{path} must hold a JSON object")
    required = ("wavelet", "mode", "dim", "levels", "original_extents")
    missing = [k for k in required if k not in header]
    if missing:
        raise FormatError(f"{path} is missing {', '.join(missing)}")
    dim, levels, extents = header["dim"], header["levels"], header["original_extents"]
    if type(dim) is not int or dim not in (1, 2, 3):
        raise FormatError(f"{path}: dim must be 1, 2 or 3, got {dim!r}")
    if type(levels) is not int or levels < 1:
        raise FormatError(f"{path}: levels must be a positive integer, got {levels!r}")
    if header["mode"] not in SUPPORTED_MODES:
        raise FormatError(f"{path}: unknown mode {header['mode']!r}")
    if header["wavelet"] not in list_wavelets():
        raise FormatError(f"{path}: unknown wavelet {header['wavelet']!r}")
    if not isinstance(extents, list) or len(extents) != levels:
        raise FormatError(f"{path}: original_extents must list one extent per level ({levels})")
    for extent in extents:
        valid = isinstance(extent, list) and len(extent) == dim
        if not valid or not all(type(n) is int and n >= 2 for n in extent):
            raise FormatError(f"{path}: bad extent {extent!r} for dim {dim}")
    return header


def load_pyramid(in_dir: PathLike) -> Pyramid:
    """Inverse of save_pyramid."""
    root = Path(in_dir)
    header = read_header(root)
    dim = int(header["dim"])
    pyramid = Pyramid()
    for i, extent in enumerate(header["original_extents"], start=1):
        comps = {tag: load(root / component_file(i, tag)) for tag in subband_tags(dim)}
        low_tag = "l" * dim
        try:
            level = Subbands(
                dim=dim,
                low=comps[low_tag],
                highs={t: c for t, c in comps.items() if t != low_tag},
                boundary_mode=header["mode"],
                wavelet_name=header["wavelet"],
                original_extent=tuple(extent),
            )
        except ShapeError as exc:
            raise FormatError(f"level {i} in {root} is inconsistent: {exc}") from None
        pyramid.levels.append(level)
    return pyramid


def save_previews(p: Pyramid, out_dir: PathLike) -> list:
    """
    8-bit previews of every component, each rescaled to its own [min, max].

    Components with 1 or 3 leading channels become PGM or PPM files;
    others get one PGM per channel.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, level in enumerate(p.levels, start=1):
        for tag, component in level.components().items():
            values = np.asarray(component)
            lo, hi = values.min(), values.max()
            scaled = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
            if scaled.ndim == 2 or scaled.shape[0] in (1, 3):
                suffix = ".pgm" if scaled.ndim == 2 or scaled.shape[0] == 1 else ".ppm"
                path = out / component_file(i, tag, suffix)
                write_pnm(path, scaled)
                written.append(path)
            else:
                for c, channel in enumerate(scaled):
                    path = out / component_file(i, f"{tag}_c{c}", ".pgm")
                    write_pnm(path, channel)
                    written.append(path)
    return written
