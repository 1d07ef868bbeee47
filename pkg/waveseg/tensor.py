"""
Tensor Module
A small dense N-d array of 64-bit floats with the bookkeeping the transforms
need: shape checks, elementwise math, dot products and a bit-exact file format.

Feature maps are laid out channels first, [channels, d1, ..., dk], row major.
Raw signals may be plain [n] or [m, n].

File format (little endian):
    b"WLT1" | u32 rank | rank x u64 dims | product(dims) x f64 values
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from waveseg.errors import FormatError, NumericError, ShapeError

MAGIC = b"WLT1"
_HEADER = struct.Struct("<4sI")

ArrayLike = Union["Tensor", np.ndarray, Sequence[float], float]

_ELEMENTWISE: dict[str, Callable] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ShapeError("tensor shape must have at least one dimension")
    if any(d < 1 for d in shape):
        raise ShapeError(f"every dimension must be >= 1, got {shape}")
    return shape


class Tensor:
    """
    Immutable dense float64 array.

    The buffer is copied on construction and marked read-only, so a Tensor
    can be shared between threads for reading.
    """

    __slots__ = ("_array",)

    def __init__(self, data: ArrayLike, shape: Sequence[int] | None = None):
        array = np.array(np.asarray(data), dtype=np.float64)
        if shape is not None:
            shape = _check_shape(shape)
            if int(np.prod(shape)) != array.size:
                raise ShapeError(f"{array.size} values do not fill shape {shape}")
            array = array.reshape(shape)
        _check_shape(array.shape)
        if not np.all(np.isfinite(array)):
            raise NumericError("tensor values must be finite")
        array.setflags(write=False)
        self._array = array

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Tensor":
        return cls(array)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values (read-only)."""
        return self._array.reshape(-1)

    def to_numpy(self) -> np.ndarray:
        """Writable copy of the values with the tensor's shape."""
        return self._array.copy()

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return Tensor(self._array, shape)

    def norm(self) -> float:
        return float(np.sqrt(dot(self, self)))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._array
        return self._array.astype(dtype)

    def __len__(self) -> int:
        return self._array.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, data={np.array2string(self._array, threshold=8)})"

    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __rsub__(self, other):
        return elementwise("mul", elementwise("sub", self, other), -1.0)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", self, other)

    def __neg__(self):
        return elementwise("mul", self, -1.0)

    def equals(self, other: "Tensor") -> bool:
        """Bitwise equality of shape and values."""
        return (
            self.shape == other.shape
            and self._array.tobytes() == np.asarray(other, dtype=np.float64).tobytes()
        )

    def allclose(self, other: ArrayLike, atol: float = 1e-12) -> bool:
        other = as_array(other)
        return self.shape == other.shape and bool(np.allclose(self._array, other, rtol=0.0, atol=atol))

    def save(self, path: Union[str, Path]) -> None:
        save(self, path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Tensor":
        return load(path)


def as_array(x: ArrayLike) -> np.ndarray:
    """float64 ndarray view of a Tensor or array-like (no copy when possible)."""
    return np.asarray(x, dtype=np.float64)


def zeros(shape: Iterable[int]) -> Tensor:
    return Tensor(np.zeros(_check_shape(list(shape))))


def zeros_like(t: ArrayLike) -> Tensor:
    return zeros(as_array(t).shape)


def ones(shape: Iterable[int]) -> Tensor:
    return Tensor(np.ones(_check_shape(list(shape))))


def full(shape: Iterable[int], value: float) -> Tensor:
    return Tensor(np.full(_check_shape(list(shape)), float(value)))


def elementwise(op: str, a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Pointwise add/sub/mul of two same-shape tensors, or of a tensor and a scalar.

    Args:
        op: "add", "sub" or "mul"
        a: left operand
        b: right operand (tensor of the same shape, or a Python scalar)

    Returns:
        New tensor c with c[i] = op(a[i], b[i])
    """
    if op not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}")
    left = as_array(a)
    if np.isscalar(b):
        return Tensor(_ELEMENTWISE[op](left, float(b)))
    right = as_array(b)
    if left.shape != right.shape:
        raise ShapeError(f"shape mismatch: {left.shape} vs {right.shape}")
    return Tensor(_ELEMENTWISE[op](left, right))


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    return elementwise("add", a, b)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    return elementwise("mul", a, b)


def dot(a: ArrayLike, b: ArrayLike) -> float:
    """Sum of a[i] * b[i] over all flat indices."""
    left, right = as_array(a), as_array(b)
    if left.shape != right.shape:
        raise ShapeError(f"shape mismatch: {left.shape} vs {right.shape}")
    return float(np.dot(left.reshape(-1), right.reshape(-1)))


def encode(t: ArrayLike) -> bytes:
    array = as_array(t)
    shape = _check_shape(array.shape)
    header = _HEADER.pack(MAGIC, len(shape)) + struct.pack(f"<{len(shape)}Q", *shape)
    return header + np.ascontiguousarray(array, dtype="<f8").tobytes()


def decode(payload: bytes) -> Tensor:
    if len(payload) < _HEADER.size:
        raise FormatError("tensor file is truncated (no header)")
    magic, rank = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if rank == 0:
        raise FormatError("tensor file declares rank 0")
    dims_end = _HEADER.size + 8 * rank
    if len(payload) < dims_end:
        raise FormatError("tensor file is truncated (dims)")
    dims = struct.unpack_from(f"<{rank}Q", payload, _HEADER.size)
    if any(d == 0 for d in dims):
        raise FormatError(f"tensor file declares a zero-sized dim: {dims}")
    expected = dims_end + 8 * int(np.prod(dims, dtype=np.uint64))
    if len(payload) != expected:
        raise FormatError(f"tensor file length {len(payload)} does not match dims {dims} (expected {expected})")
    values = np.frombuffer(payload, dtype="<f8", offset=dims_end)
    return Tensor(values.astype(np.float64), dims)


def save(t: ArrayLike, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode(t))


def load(path: Union[str, Path]) -> Tensor:
    return decode(Path(path).read_bytes())
