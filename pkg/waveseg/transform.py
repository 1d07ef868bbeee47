"""
Transform Module
Forward DWT and inverse IDWT for 1D/2D/3D multi-channel tensors.

The last `dim` axes of an array are spatial; every leading axis is an
independent channel. Each spatial axis is processed by a 1D operator stored
as a gather stencil (for every output sample, the input positions it reads
and their weights), so every output value is computed by the same sequence of
floating point operations no matter how many channels are stacked.

Per axis of extent n the analysis operator emits floor(n/2) coefficients
    y_c[k] = sum_j dec_c[j] * e[2k + j - p]
where e is the signal extended by the boundary mode and p a centring shift
(0 except in symmetric mode). Synthesis is
    x[i] = sum_c sum_k g_c[i - 2k + p] * y_c[k],    g_c = reverse(rec_c)
with out-of-range coefficients supplied by the same boundary rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from waveseg.config import DEFAULT_MODE, SUPPORTED_MODES
from waveseg.errors import ArgumentError, ShapeError
from waveseg.filters import (
    WaveletSpec,
    center,
    get_wavelet,
    is_antipalindrome,
    is_palindrome,
    subband_tags,
    support,
)
from waveseg.tensor import Tensor, as_array

WaveletLike = Union[str, WaveletSpec]

BOUNDARY_TOL = 1e-10


# ---------------------------------------------------------------------------
# 1D axis operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Stencil:
    """
    Sparse 1D linear operator in gather form.

    out[..., o] = sum_t weight[o, t] * x[..., index[o, t]]
    """
    index: np.ndarray
    weight: np.ndarray
    n_in: int

    @property
    def n_out(self) -> int:
        return self.index.shape[0]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Stencil":
        n_out, n_in = matrix.shape
        rows = [np.flatnonzero(matrix[o]) for o in range(n_out)]
        width = max(1, max(len(r) for r in rows))
        index = np.zeros((n_out, width), dtype=np.intp)
        weight = np.zeros((n_out, width))
        for o, cols in enumerate(rows):
            index[o, :len(cols)] = cols
            weight[o, :len(cols)] = matrix[o, cols]
        index.setflags(write=False)
        weight.setflags(write=False)
        return cls(index, weight, n_in)

    def apply(self, x: np.ndarray, axis: int) -> np.ndarray:
        if x.shape[axis] != self.n_in:
            raise ShapeError(f"axis {axis} has extent {x.shape[axis]}, operator expects {self.n_in}")
        moved = np.moveaxis(x, axis, -1)
        out = np.zeros(moved.shape[:-1] + (self.n_out,))
        for t in range(self.index.shape[1]):
            out += self.weight[:, t] * moved[..., self.index[:, t]]
        return np.moveaxis(out, -1, axis)


def _check_mode(mode: str) -> str:
    if mode not in SUPPORTED_MODES:
        raise ArgumentError(f"unknown boundary mode {mode!r}; expected one of {', '.join(SUPPORTED_MODES)}")
    return mode


def _whole_sample(w: WaveletSpec) -> bool:
    # odd-length lowpass support reflects without repeating the edge sample
    first, last = support(w.dec_lo)
    return (last - first) % 2 == 0


def _shift(w: WaveletSpec, mode: str) -> int:
    if mode == "symmetric":
        return int(math.floor(center(w.dec_lo)))
    return 0


def _extend_signal(pos: np.ndarray, n: int, mode: str, whole: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Map extended positions to (sample index, valid mask)."""
    if mode == "periodic":
        return pos % n, np.ones(pos.shape, dtype=bool)
    if mode == "zero":
        valid = (pos >= 0) & (pos < n)
        return np.clip(pos, 0, n - 1), valid
    if whole:
        period = 2 * n - 2
        q = pos % period
        return np.where(q < n, q, period - q), np.ones(pos.shape, dtype=bool)
    period = 2 * n
    q = pos % period
    return np.where(q < n, q, period - 1 - q), np.ones(pos.shape, dtype=bool)


def _coefficient_sign(w: WaveletSpec, channel: str) -> float:
    f = w.dec_lo if channel == "l" else w.dec_hi
    if is_palindrome(f):
        return 1.0
    if is_antipalindrome(f):
        return -1.0
    return 1.0 if channel == "l" else -1.0


def _extend_coefficients(
    k: np.ndarray, h: int, n: int, mode: str, w: WaveletSpec, channel: str
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map coefficient positions outside [0, h) to (index, sign, valid mask)."""
    ones = np.ones(k.shape)
    if mode == "periodic":
        return k % h, ones, np.ones(k.shape, dtype=bool)
    if mode == "zero":
        valid = (k >= 0) & (k < h)
        return np.clip(k, 0, h - 1), ones, valid

    # Symmetric: work in doubled sample coordinates, where coefficient k of
    # a filter centred at gamma sits at 4k + 2*gamma - 2p.
    f = w.dec_lo if channel == "l" else w.dec_hi
    gamma2 = int(round(2 * center(f)))
    p = _shift(w, mode)
    pos = 4 * k + gamma2 - 2 * p
    if _whole_sample(w):
        period = 4 * n - 4
        pos = pos % period
        reflected = pos > 2 * n - 2
        pos = np.where(reflected, period - pos, pos)
    else:
        period = 4 * n
        pos = (pos + 1) % period - 1
        reflected = pos > 2 * n - 1
        pos = np.where(reflected, period - 2 - pos, pos)
    sign = np.where(reflected, _coefficient_sign(w, channel), 1.0)
    numerator = pos - gamma2 + 2 * p
    index = numerator // 4
    valid = (numerator % 4 == 0) & (index >= 0) & (index < h)
    return np.clip(index, 0, h - 1), sign, valid


@lru_cache(maxsize=512)
def _matrix(w: WaveletSpec, mode: str, n: int, role: str, channel: str) -> np.ndarray:
    """
    Dense 1D operator of one channel.

    analysis: (n // 2, n), synthesis: (n, n // 2)
    """
    h = n // 2
    L = w.filter_length
    p = _shift(w, mode)
    whole = _whole_sample(w)
    if role == "analysis":
        taps = np.array(w.dec_lo if channel == "l" else w.dec_hi)
        k, j = np.meshgrid(np.arange(h), np.arange(L), indexing="ij")
        index, valid = _extend_signal(2 * k + j - p, n, mode, whole)
        matrix = np.zeros((h, n))
        np.add.at(matrix, (k[valid], index[valid]), taps[j[valid]])
    else:
        g = np.array(w.rec_lo if channel == "l" else w.rec_hi)[::-1]
        i, t = np.meshgrid(np.arange(n), np.arange(L // 2), indexing="ij")
        k = (i + p) // 2 - t
        tap = (i + p) % 2 + 2 * t
        index, sign, valid = _extend_coefficients(k, h, n, mode, w, channel)
        matrix = np.zeros((n, h))
        np.add.at(matrix, (i[valid], index[valid]), (sign * g[tap])[valid])
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=512)
def _stencil(w: WaveletSpec, mode: str, n: int, role: str, channel: str, transpose: bool = False) -> Stencil:
    matrix = _matrix(w, mode, n, role, channel)
    return Stencil.from_matrix(matrix.T if transpose else matrix)


def analysis_matrix(w: WaveletLike, n: int, mode: str = "periodic") -> np.ndarray:
    """
    Dense matrix of the 1D DWT on length n: rows are the low coefficients
    followed by the high coefficients.
    """
    w = get_wavelet(w)
    _check_extent([n])
    _check_mode(mode)
    return np.vstack([_matrix(w, mode, n, "analysis", "l"), _matrix(w, mode, n, "analysis", "h")])


def synthesis_matrix(w: WaveletLike, n: int, mode: str = "periodic") -> np.ndarray:
    """Dense matrix of the 1D IDWT: columns follow analysis_matrix's rows."""
    w = get_wavelet(w)
    _check_extent([n])
    _check_mode(mode)
    return np.hstack([_matrix(w, mode, n, "synthesis", "l"), _matrix(w, mode, n, "synthesis", "h")])


# ---------------------------------------------------------------------------
# Separable N-d application on raw arrays
# ---------------------------------------------------------------------------

def _check_extent(extent: Sequence[int]):
    if any(n < 2 for n in extent):
        raise ShapeError(f"every transformed extent must be >= 2, got {tuple(extent)}")


def _spatial(x: np.ndarray, dim: int) -> Tuple[int, ...]:
    if dim not in (1, 2, 3):
        raise ArgumentError(f"dim must be 1, 2 or 3, got {dim}")
    if x.ndim < dim:
        raise ShapeError(f"a {dim}D transform needs rank >= {dim}, got shape {x.shape}")
    extent = tuple(x.shape[x.ndim - dim:])
    _check_extent(extent)
    return extent


def _split(x: np.ndarray, w: WaveletSpec, dim: int, mode: str, role: str, transpose: bool) -> Dict[str, np.ndarray]:
    """
    Apply the two-channel operator along each spatial axis, last axis first.

    Tag character k names the channel used along axis -(k + 1).
    """
    parts = {"": x}
    for k in range(dim):
        axis = -(k + 1)
        n = x.shape[axis]
        parts = {
            prefix + c: _stencil(w, mode, n, role, c, transpose=transpose).apply(arr, axis)
            for prefix, arr in parts.items()
            for c in "lh"
        }
    return parts


def _merge(
    parts: Mapping[str, np.ndarray],
    w: WaveletSpec,
    dim: int,
    mode: str,
    extent: Sequence[int],
    role: str,
    transpose: bool,
) -> np.ndarray:
    """Inverse bookkeeping of _split: combine channels along the first spatial axis first."""
    current = dict(parts)
    for k in reversed(range(dim)):
        axis = -(k + 1)
        n = extent[len(extent) - 1 - k]
        merged = {}
        for tag in current:
            prefix = tag[:-1]
            if prefix in merged:
                continue
            total = None
            for c in "lh":
                op = _stencil(w, mode, n, role, c, transpose=transpose)
                term = op.apply(current[prefix + c], axis)
                total = term if total is None else total + term
            merged[prefix] = total
        current = merged
    return current[""]


def dwt_arrays(x: np.ndarray, w: WaveletSpec, dim: int, mode: str) -> Dict[str, np.ndarray]:
    """Forward transform of a raw array; returns tag -> component."""
    x = np.asarray(x, dtype=np.float64)
    _spatial(x, dim)
    _check_mode(mode)
    return _split(x, w, dim, mode, "analysis", transpose=False)


def idwt_arrays(
    parts: Mapping[str, np.ndarray], w: WaveletSpec, dim: int, mode: str, extent: Sequence[int]
) -> np.ndarray:
    _check_mode(mode)
    _check_extent(extent)
    _check_parts(parts, dim, extent)
    return _merge(parts, w, dim, mode, extent, "synthesis", transpose=False)


def dwt_adjoint_arrays(
    parts: Mapping[str, np.ndarray], w: WaveletSpec, dim: int, mode: str, extent: Sequence[int]
) -> np.ndarray:
    """Transpose of the forward transform: components -> signal-shaped array."""
    _check_mode(mode)
    _check_extent(extent)
    _check_parts(parts, dim, extent)
    return _merge(parts, w, dim, mode, extent, "analysis", transpose=True)


def idwt_adjoint_arrays(y: np.ndarray, w: WaveletSpec, dim: int, mode: str) -> Dict[str, np.ndarray]:
    """Transpose of the inverse transform: signal-shaped array -> components."""
    y = np.asarray(y, dtype=np.float64)
    _spatial(y, dim)
    _check_mode(mode)
    return _split(y, w, dim, mode, "synthesis", transpose=True)


def _check_parts(parts: Mapping[str, np.ndarray], dim: int, extent: Sequence[int]):
    tags = subband_tags(dim)
    if sorted(parts) != sorted(tags):
        raise ShapeError(f"expected components {tags}, got {sorted(parts)}")
    shapes = {np.shape(parts[t]) for t in tags}
    if len(shapes) != 1:
        raise ShapeError(f"components have different shapes: {sorted(shapes)}")
    shape = shapes.pop()
    expected = tuple(n // 2 for n in extent)
    if len(shape) < dim or tuple(shape[len(shape) - dim:]) != expected:
        raise ShapeError(f"components of shape {shape} do not match extent {tuple(extent)}")


# ---------------------------------------------------------------------------
# Public types
# ---------------------------------------------------------------------------

@dataclass
class Subbands:
    """
    One level of decomposition.

    `low` is the all-lowpass component; `highs` holds the 2^dim - 1 detail
    components keyed by tag (1D: h; 2D: lh, hl, hh; 3D: llh ... hhh).
    """
    dim: int
    low: Tensor
    highs: Dict[str, Tensor]
    boundary_mode: str
    wavelet_name: str
    original_extent: Tuple[int, ...]

    def __post_init__(self):
        self.original_extent = tuple(int(n) for n in self.original_extent)
        tags = subband_tags(self.dim)
        if sorted(self.highs) != sorted(tags[1:]):
            raise ShapeError(f"{self.dim}D subbands need detail tags {tags[1:]}, got {sorted(self.highs)}")
        if len(self.original_extent) != self.dim:
            raise ShapeError(f"original_extent {self.original_extent} does not have {self.dim} entries")
        self.highs = {t: self.highs[t] for t in tags[1:]}
        _check_parts({t: np.asarray(v) for t, v in self.components().items()}, self.dim, self.original_extent)

    @property
    def tags(self) -> List[str]:
        return subband_tags(self.dim)

    def components(self) -> Dict[str, Tensor]:
        """Every component keyed by tag, low first."""
        return {"l" * self.dim: self.low, **self.highs}

    def __getitem__(self, tag: str) -> Tensor:
        return self.components()[tag]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {t: np.asarray(v) for t, v in self.components().items()}

    def energy(self) -> float:
        return float(sum(c.norm() ** 2 for c in self.components().values()))


@dataclass
class Pyramid:
    """Multi-level decomposition; level i splits level i-1's low component."""
    levels: List[Subbands] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def low(self) -> Tensor:
        return self.levels[-1].low


def _subbands(parts: Dict[str, np.ndarray], dim: int, mode: str, name: str, extent) -> Subbands:
    tags = subband_tags(dim)
    return Subbands(
        dim=dim,
        low=Tensor(parts[tags[0]]),
        highs={t: Tensor(parts[t]) for t in tags[1:]},
        boundary_mode=mode,
        wavelet_name=name,
        original_extent=tuple(extent),
    )


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def dwt(x, w: WaveletLike = "haar", dim: int = 2, mode: str = DEFAULT_MODE) -> Subbands:
    """
    One level of the discrete wavelet transform.

    Args:
        x: Tensor or array whose last `dim` axes are spatial
        w: wavelet name or spec
        dim: number of spatial axes (1, 2 or 3)
        mode: boundary mode, one of periodic, symmetric, zero

    Returns:
        Subbands with components of spatial extent floor(n/2) per axis
    """
    w = get_wavelet(w)
    array = as_array(x)
    extent = _spatial(array, dim)
    parts = dwt_arrays(array, w, dim, mode)
    return _subbands(parts, dim, mode, w.name, extent)


def idwt(s: Subbands, w: Optional[WaveletLike] = None) -> Tensor:
    """Inverse of dwt; the output has the spatial extent recorded in `s`."""
    w = _matching_wavelet(s, w)
    return Tensor(idwt_arrays(s.arrays(), w, s.dim, s.boundary_mode, s.original_extent))


def _matching_wavelet(s: Subbands, w: Optional[WaveletLike]) -> WaveletSpec:
    spec = get_wavelet(s.wavelet_name if w is None else w)
    if spec.name != s.wavelet_name:
        raise ArgumentError(f"subbands were produced with {s.wavelet_name!r}, not {spec.name!r}")
    return spec


def dwt_adjoint(s: Subbands, w: Optional[WaveletLike] = None) -> Tensor:
    """
    Apply the transpose of dwt to cotangents laid out as Subbands.

    dot(dwt(x), s) == dot(x, dwt_adjoint(s)) for every x of the original extent.
    """
    w = _matching_wavelet(s, w)
    return Tensor(dwt_adjoint_arrays(s.arrays(), w, s.dim, s.boundary_mode, s.original_extent))


def idwt_adjoint(y, w: WaveletLike = "haar", dim: int = 2, mode: str = DEFAULT_MODE) -> Subbands:
    """Apply the transpose of idwt to a signal-shaped cotangent."""
    w = get_wavelet(w)
    array = as_array(y)
    extent = _spatial(array, dim)
    parts = idwt_adjoint_arrays(array, w, dim, mode)
    return _subbands(parts, dim, mode, w.name, extent)


def dwt_multilevel(x, w: WaveletLike = "haar", dim: int = 2, mode: str = DEFAULT_MODE, depth: int = 1) -> Pyramid:
    """Repeated dwt on the low component."""
    if depth < 1:
        raise ArgumentError(f"depth must be >= 1, got {depth}")
    w = get_wavelet(w)
    array = as_array(x)
    extent = _spatial(array, dim)
    if any(n // 2 ** (depth - 1) < 2 for n in extent):
        raise ArgumentError(f"depth {depth} is too large for spatial extent {extent}")

    pyramid = Pyramid()
    current = array
    for _ in range(depth):
        level = dwt(current, w, dim, mode)
        pyramid.levels.append(level)
        current = np.asarray(level.low)
    return pyramid


def idwt_multilevel(p: Pyramid, w: Optional[WaveletLike] = None) -> Tensor:
    if p.depth == 0:
        raise ArgumentError("pyramid has no levels")
    current = p.low
    for level in reversed(p.levels):
        current = idwt(replace(level, low=current), w)
    return current


# ---------------------------------------------------------------------------
# Boundary behaviour
# ---------------------------------------------------------------------------

def boundary_error_profile(x, w: WaveletLike, mode: str) -> Tensor:
    """
    Signed reconstruction error idwt(dwt(x)) - x of a single-channel image.

    Accepts [H, W] or [1, H, W]; the map is [H, W].
    """
    image = as_array(x)
    if image.ndim == 3 and image.shape[0] == 1:
        image = image[0]
    if image.ndim != 2:
        raise ShapeError(f"boundary profile needs a single-channel 2D image, got shape {np.shape(x)}")
    rebuilt = np.asarray(idwt(dwt(image, w, 2, mode)))
    return Tensor(rebuilt - image)


def _edge_distance(shape: Tuple[int, int]) -> np.ndarray:
    rows = np.arange(shape[0])
    cols = np.arange(shape[1])
    row_dist = np.minimum(rows, shape[0] - 1 - rows)[:, None]
    col_dist = np.minimum(cols, shape[1] - 1 - cols)[None, :]
    return np.minimum(row_dist, col_dist)


def affected_band_width(error_map, tol: float = BOUNDARY_TOL) -> int:
    """
    Width of the edge band that holds every error above tol.

    0 when reconstruction is exact everywhere; k when the worst offender is
    k-1 samples away from its nearest edge.
    """
    errors = np.abs(as_array(error_map))
    if errors.ndim != 2:
        raise ShapeError(f"error map must be 2D, got shape {errors.shape}")
    bad = errors > tol
    if not bad.any():
        return 0
    return int(_edge_distance(errors.shape)[bad].max()) + 1


def boundary_summary(
    w: WaveletLike, mode: str = "zero", size: int = 64, seed: int = 0, tol: float = BOUNDARY_TOL
) -> Dict[str, object]:
    """
    Boundary-effect measurement on a random size x size image.

    The interior excludes a band of twice the filter length at every edge.
    """
    if size < 2 or size % 2:
        raise ArgumentError(f"size must be a positive even number, got {size}")
    w = get_wavelet(w)
    rng = np.random.default_rng(seed)
    image = rng.random((size, size))
    errors = np.abs(np.asarray(boundary_error_profile(image, w, mode)))

    band = 2 * w.filter_length
    in_band = _edge_distance(errors.shape) < band
    interior = errors[~in_band]
    return {
        "wavelet": w.name,
        "filter_length": w.filter_length,
        "affected_band_width": affected_band_width(errors, tol),
        "max_interior_err": float(interior.max()) if interior.size else 0.0,
        "max_boundary_err": float(errors[in_band].max()),
    }


def boundary_sweep(
    wavelets: Iterable[WaveletLike], mode: str = "zero", size: int = 64, seed: int = 0
) -> pd.DataFrame:
    """boundary_summary for several wavelets, sorted by filter length."""
    rows = [boundary_summary(w, mode, size, seed) for w in wavelets]
    frame = pd.DataFrame(rows, columns=[
        "wavelet", "filter_length", "affected_band_width", "max_interior_err", "max_boundary_err",
    ])
    return frame.sort_values("filter_length", kind="stable").reset_index(drop=True)
