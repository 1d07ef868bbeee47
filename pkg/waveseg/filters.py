"""
Filter Banks
The shipped wavelets (Haar, Daubechies db2-db6, spline Cohen ch2.2-ch5.5),
their tensor-product kernels for 2D/3D, and a checker for the filter-bank
identities.

Convention: analysis is cross-correlation at stride 2,
    y_c[k] = sum_j dec_c[j] * x[2k + j]
and synthesis uses the time-reversed rec filters, so all four filters of a
bank are stored at one common even length.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from waveseg.config import FILTER_TOL
from waveseg.errors import ArgumentError, UnknownWaveletError

SQRT2 = math.sqrt(2.0)

ORTHOGONAL = "orthogonal"
BIORTHOGONAL = "biorthogonal"


@dataclass(frozen=True)
class WaveletSpec:
    """
    A named two-channel filter bank.

    Filters are tuples so specs are hashable and can key the transform's
    stencil cache.
    """
    name: str
    dec_lo: Tuple[float, ...]
    dec_hi: Tuple[float, ...]
    rec_lo: Tuple[float, ...]
    rec_hi: Tuple[float, ...]
    symmetric: bool
    family: str
    order: int = 1

    @property
    def filter_length(self) -> int:
        return len(self.dec_lo)

    def bank(self, kind: str = "analysis") -> Tuple[np.ndarray, np.ndarray]:
        """(lo, hi) filters of the analysis or synthesis bank as arrays."""
        if kind == "analysis":
            return np.array(self.dec_lo), np.array(self.dec_hi)
        if kind == "synthesis":
            return np.array(self.rec_lo), np.array(self.rec_hi)
        raise ArgumentError(f"bank must be 'analysis' or 'synthesis', got {kind!r}")


@dataclass(frozen=True, eq=False)
class Filter2D:
    tag: str
    kernel: np.ndarray


@dataclass(frozen=True, eq=False)
class Filter3D:
    tag: str
    kernel: np.ndarray


def support(f: Sequence[float]) -> Tuple[int, int]:
    """First and last index of the nonzero taps of f."""
    nz = np.flatnonzero(np.asarray(f, dtype=np.float64))
    if nz.size == 0:
        return 0, len(f) - 1
    return int(nz[0]), int(nz[-1])


def trimmed(f: Sequence[float]) -> np.ndarray:
    first, last = support(f)
    return np.asarray(f, dtype=np.float64)[first:last + 1]


def center(f: Sequence[float]) -> float:
    first, last = support(f)
    return (first + last) / 2.0


def is_palindrome(f: Sequence[float], tol: float = 1e-12) -> bool:
    core = trimmed(f)
    return bool(np.max(np.abs(core - core[::-1])) <= tol)


def is_antipalindrome(f: Sequence[float], tol: float = 1e-12) -> bool:
    core = trimmed(f)
    return bool(np.max(np.abs(core + core[::-1])) <= tol)


def _alternate_flip(f: np.ndarray) -> np.ndarray:
    # g[j] = (-1)^j f[L-1-j]
    signs = np.where(np.arange(len(f)) % 2 == 0, 1.0, -1.0)
    return signs * f[::-1]


def _orthogonal(name: str, lo: Sequence[float], order: int) -> WaveletSpec:
    dec_lo = np.asarray(lo, dtype=np.float64)
    dec_hi = _alternate_flip(dec_lo)
    return WaveletSpec(
        name=name,
        dec_lo=tuple(dec_lo),
        dec_hi=tuple(dec_hi),
        rec_lo=tuple(dec_lo[::-1]),
        rec_hi=tuple(dec_hi[::-1]),
        symmetric=is_palindrome(dec_lo),
        family=ORTHOGONAL,
        order=order,
    )


def _biorthogonal(
    name: str,
    analysis: Sequence[float],
    analysis_start: int,
    synthesis: Sequence[float],
    synthesis_start: int,
    length: int,
    order: int,
) -> WaveletSpec:
    """
    Build a biorthogonal bank from its two lowpass filters.

    Both lowpass filters are given in forward orientation and placed so that
    their centres coincide inside a zero-padded bank of the given length.
    """
    a_lo = np.zeros(length)
    a_lo[analysis_start:analysis_start + len(analysis)] = analysis
    g_lo = np.zeros(length)
    g_lo[synthesis_start:synthesis_start + len(synthesis)] = synthesis

    dec_hi = _alternate_flip(g_lo)
    g_hi = _alternate_flip(a_lo)
    return WaveletSpec(
        name=name,
        dec_lo=tuple(a_lo),
        dec_hi=tuple(dec_hi),
        rec_lo=tuple(g_lo[::-1]),
        rec_hi=tuple(g_hi[::-1]),
        symmetric=is_palindrome(a_lo),
        family=BIORTHOGONAL,
        order=order,
    )


def _scaled(numerators: Sequence[int], denominator: int) -> List[float]:
    return [SQRT2 * n / denominator for n in numerators]


_S3 = math.sqrt(3.0)

_DAUBECHIES: Dict[str, Tuple[int, List[float]]] = {
    "db2": (2, [
        (1 + _S3) / (4 * SQRT2),
        (3 + _S3) / (4 * SQRT2),
        (3 - _S3) / (4 * SQRT2),
        (1 - _S3) / (4 * SQRT2),
    ]),
    "db3": (3, [
        0.33267055295008261599851158914,
        0.80689150931109257649449360409,
        0.45987750211849157009515194215,
        -0.13501102001025458869638990670,
        -0.08544127388202666169281916918,
        0.03522629188570953660274066472,
    ]),
    "db4": (4, [
        0.23037781330889650086329118304,
        0.71484657055291564708992195527,
        0.63088076792985890788171633830,
        -0.02798376941685985421141374718,
        -0.18703481171909308407957067279,
        0.03084138183556076362721936253,
        0.03288301166688519973540751355,
        -0.01059740178506903210488320852,
    ]),
    "db5": (5, [
        0.16010239797419293,
        0.60382926979718967,
        0.72430852843777292,
        0.13842814590132074,
        -0.24229488706638203,
        -0.032244869584638375,
        0.077571493840045713,
        -0.0062414902127983338,
        -0.012580751999081999,
        0.0033357252854737712,
    ]),
    "db6": (6, [
        0.11154074335010947,
        0.49462389039845309,
        0.75113390802109536,
        0.31525035170919763,
        -0.22626469396543983,
        -0.12976686756726194,
        0.097501605587322462,
        0.027522865530305728,
        -0.031582039317486226,
        0.00055384220116149614,
        0.0047772575109455169,
        -0.0010773010853084796,
    ]),
}

# name: (order, analysis lowpass, start, synthesis lowpass (B-spline), start, bank length)
_COHEN = {
    "ch2.2": (2, _scaled([-1, 2, 6, 2, -1], 8), 0, _scaled([1, 2, 1], 4), 1, 6),
    "ch3.3": (3, _scaled([3, -9, -7, 45, 45, -7, -9, 3], 64), 0, _scaled([1, 3, 3, 1], 8), 2, 8),
    "ch4.4": (
        4,
        _scaled([-5, 20, -1, -96, 70, 280, 70, -96, -1, 20, -5], 256), 0,
        _scaled([1, 4, 6, 4, 1], 16), 3,
        12,
    ),
    "ch5.5": (
        5,
        _scaled([35, -175, 120, 800, -1357, -1575, 4200, 4200, -1575, -1357, 800, 120, -175, 35], 4096), 0,
        _scaled([1, 5, 10, 10, 5, 1], 32), 4,
        14,
    ),
}


def _build_registry() -> Dict[str, WaveletSpec]:
    registry = {"haar": _orthogonal("haar", [1 / SQRT2, 1 / SQRT2], 1)}
    for name, (order, lo) in _DAUBECHIES.items():
        registry[name] = _orthogonal(name, lo, order)
    for name, (order, analysis, a_start, synthesis, s_start, length) in _COHEN.items():
        registry[name] = _biorthogonal(name, analysis, a_start, synthesis, s_start, length, order)
    return registry


_REGISTRY = _build_registry()


def list_wavelets() -> List[str]:
    """Names of every shipped wavelet, Haar first, then Daubechies, then Cohen."""
    return list(_REGISTRY)


def get_wavelet(name) -> WaveletSpec:
    """
    Look up a shipped wavelet.

    Args:
        name: wavelet id, or a WaveletSpec which is returned unchanged

    Returns:
        The WaveletSpec for that name
    """
    if isinstance(name, WaveletSpec):
        return name
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownWaveletError(
            f"unknown wavelet {name!r}; choose one of {', '.join(_REGISTRY)}"
        ) from None


def _tags(dim: int) -> List[str]:
    return ["".join(t) for t in itertools.product("lh", repeat=dim)]


def subband_tags(dim: int) -> List[str]:
    """Component tags for one level: low first, then the 2^dim - 1 details."""
    if dim not in (1, 2, 3):
        raise ArgumentError(f"dim must be 1, 2 or 3, got {dim}")
    return _tags(dim)


def tensor_filters(w: WaveletSpec, bank: str, dim: int) -> Dict[str, np.ndarray]:
    """
    Tensor-product kernels for every tag.

    Character k of a tag picks the filter along the k-th axis counted from the
    last one, so the first character acts along the last array axis.
    """
    lo, hi = w.bank(bank)
    pick = {"l": lo, "h": hi}
    kernels = {}
    for tag in subband_tags(dim):
        factors = [pick[c] for c in reversed(tag)]
        kernel = factors[0]
        for f in factors[1:]:
            kernel = np.multiply.outer(kernel, f)
        kernels[tag] = kernel
    return kernels


def tensor_filters_2d(w: WaveletSpec, bank: str = "analysis") -> List[Filter2D]:
    """
    The four 2D kernels ll, lh, hl, hh with kernel_{c0c1}[i][j] = f_{c1}[i] * f_{c0}[j].

    Rows (first index) follow the height axis, so c0 filters along width.
    """
    return [Filter2D(tag, k) for tag, k in tensor_filters(w, bank, 2).items()]


def tensor_filters_3d(w: WaveletSpec, bank: str = "analysis") -> List[Filter3D]:
    return [Filter3D(tag, k) for tag, k in tensor_filters(w, bank, 3).items()]


@dataclass
class Check:
    name: str
    deviation: float
    passed: bool


@dataclass
class ValidationReport:
    """Outcome of validate(): one Check per identity."""
    wavelet: str
    checks: List[Check] = field(default_factory=list)
    tol: float = FILTER_TOL

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_deviation(self) -> float:
        return max((c.deviation for c in self.checks), default=0.0)

    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, deviation: float, tol: float | None = None):
        deviation = float(deviation)
        limit = self.tol if tol is None else tol
        self.checks.append(Check(name, deviation, bool(np.isfinite(deviation) and deviation <= limit)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"wavelet": self.wavelet, "check": c.name, "deviation": c.deviation, "passed": c.passed}
             for c in self.checks]
        )


def _shift_products(a: np.ndarray, b: np.ndarray) -> Dict[int, float]:
    # m -> sum_k a[k] * b[k + 2m]
    full = np.correlate(b, a, mode="full")
    lags = np.arange(-(len(a) - 1), len(b))
    return {int(lag // 2): float(v) for lag, v in zip(lags, full) if lag % 2 == 0}


def _moment_deviation(h: np.ndarray, power: int) -> float:
    t = np.arange(len(h)) - center(h)
    scale = float(np.sum(np.abs(t) ** power * np.abs(h)))
    if scale == 0.0:
        return 0.0
    return abs(float(np.sum(t ** power * h))) / scale


def validate(w: WaveletSpec, tol: float = FILTER_TOL) -> ValidationReport:
    """
    Check the filter-bank identities of a spec.

    Never raises for a malformed spec: failing identities are reported as
    failed checks with their deviation.
    """
    report = ValidationReport(wavelet=w.name, tol=tol)
    filters = {k: np.asarray(getattr(w, k), dtype=np.float64)
               for k in ("dec_lo", "dec_hi", "rec_lo", "rec_hi")}

    nonempty = all(f.size > 0 for f in filters.values())
    finite = nonempty and all(np.all(np.isfinite(f)) for f in filters.values())
    report.add("nonempty and finite", 0.0 if finite else math.inf)
    if not finite:
        return report

    lengths = {len(f) for f in filters.values()}
    report.add("equal filter lengths", 0.0 if len(lengths) == 1 else math.inf)

    dec_lo, dec_hi = filters["dec_lo"], filters["dec_hi"]
    report.add("sum(dec_lo) == sqrt(2)", abs(dec_lo.sum() - SQRT2))
    report.add("sum(dec_hi) == 0", abs(dec_hi.sum()))
    report.add("sum(rec_lo) == sqrt(2)", abs(filters["rec_lo"].sum() - SQRT2))

    if w.family == ORTHOGONAL:
        if len(lengths) == 1:
            report.add("rec_lo == reverse(dec_lo)", np.max(np.abs(filters["rec_lo"] - dec_lo[::-1])))
            report.add("rec_hi == reverse(dec_hi)", np.max(np.abs(filters["rec_hi"] - dec_hi[::-1])))
        products = _shift_products(dec_lo, dec_lo)
        report.add(
            "double-shift orthogonality",
            max(abs(v - (1.0 if m == 0 else 0.0)) for m, v in products.items()),
        )
    else:
        synthesis = filters["rec_lo"][::-1]
        products = _shift_products(dec_lo, synthesis)
        report.add(
            "biorthogonality",
            max(abs(v - (1.0 if m == 0 else 0.0)) for m, v in products.items()),
        )

    for power in range(w.order):
        report.add(f"vanishing moment {power} of dec_hi", _moment_deviation(dec_hi, power))

    core = trimmed(dec_lo)
    asymmetry = float(np.max(np.abs(core - core[::-1])))
    report.add("symmetry flag", 0.0 if (asymmetry <= 1e-12) == w.symmetric else asymmetry)
    return report
