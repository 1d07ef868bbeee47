"""
Reverse-Mode Differentiation
A tape of Nodes recorded during a forward pass. Each node keeps a closure
that maps its output gradient to gradients of its parents; backward() walks
the tape in reverse and accumulates them.

The DWT/IDWT nodes back-propagate through the exact transposes of the
transform operators (boundary extension included), so their gradients are
correct in every boundary mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from waveseg.config import IGNORE_LABEL
from waveseg.errors import ArgumentError, ShapeError
from waveseg.filters import WaveletSpec, get_wavelet, subband_tags
from waveseg.transform import (
    dwt_adjoint_arrays,
    dwt_arrays,
    idwt_adjoint_arrays,
    idwt_arrays,
)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Node:
    """A value on the tape plus its accumulated gradient."""
    value: np.ndarray
    parents: Tuple["Node", ...] = ()
    op: str = "leaf"
    backward_fn: Optional[BackwardFn] = None
    tape: Optional["Tape"] = None
    name: str = ""
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape


class Tape:
    """Nodes of one forward pass in creation order (parents before children)."""

    def __init__(self):
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value, name: str = "") -> Node:
        node = Node(np.array(value, dtype=np.float64), tape=self, name=name)
        self.nodes.append(node)
        return node

    def record(self, value, parents: Sequence[Node], op: str, backward_fn: BackwardFn) -> Node:
        for parent in parents:
            if parent.tape is not self:
                raise ArgumentError(f"{op}: every input must live on the same tape")
        node = Node(value, tuple(parents), op, backward_fn, tape=self)
        self.nodes.append(node)
        return node

    def zero_grad(self):
        for node in self.nodes:
            node.grad = np.zeros_like(node.value)


def backward(tape: Tape, loss: Node):
    """
    Fill every node's grad with d(loss)/d(value).

    Nodes the loss does not depend on end with zero gradients.
    """
    if loss.value.size != 1:
        raise ArgumentError(f"loss must be a scalar, got shape {loss.shape}")
    try:
        position = next(i for i, n in enumerate(tape.nodes) if n is loss)
    except StopIteration:
        raise ArgumentError("loss node is not on this tape") from None

    tape.zero_grad()
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes[:position + 1]):
        if node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is not None:
                parent.grad = parent.grad + g


def _tape_of(*nodes: Node) -> Tape:
    return nodes[0].tape


# ---------------------------------------------------------------------------
# Elementwise and reductions
# ---------------------------------------------------------------------------

def add_node(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _tape_of(a).record(a.value + b.value, (a, b), "add", lambda g: (g, g))


def sum_node(x: Node) -> Node:
    return _tape_of(x).record(
        np.sum(x.value), (x,), "sum", lambda g: (np.full(x.shape, float(g)),)
    )


def dot_node(x: Node, c) -> Node:
    """Inner product with a constant array."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape:
        raise ShapeError(f"dot: shape mismatch {x.shape} vs {c.shape}")
    return _tape_of(x).record(
        np.sum(x.value * c), (x,), "dot", lambda g: (float(g) * c,)
    )


def half_sq_norm_node(x: Node) -> Node:
    """0.5 * sum(x^2)."""
    return _tape_of(x).record(
        0.5 * np.sum(x.value * x.value), (x,), "half_sq_norm", lambda g: (float(g) * x.value,)
    )


def relu_node(x: Node) -> Node:
    mask = x.value > 0
    return _tape_of(x).record(
        np.where(mask, x.value, 0.0), (x,), "relu", lambda g: (g * mask,)
    )


def _channel_view(param: np.ndarray, ndim: int) -> np.ndarray:
    # [C] -> [1, C, 1, ..., 1]
    return param.reshape((1, -1) + (1,) * (ndim - 2))


def affine_node(x: Node, scale: Node, shift: Node) -> Node:
    """Per-channel scale and shift of x laid out [B, C, ...]."""
    channels = x.shape[1] if x.value.ndim >= 2 else -1
    if scale.shape != (channels,) or shift.shape != (channels,):
        raise ShapeError(f"affine: scale/shift must be [{channels}], got {scale.shape} and {shift.shape}")
    s = _channel_view(scale.value, x.value.ndim)
    b = _channel_view(shift.value, x.value.ndim)
    axes = tuple(i for i in range(x.value.ndim) if i != 1)

    def grads(g):
        return g * s, np.sum(g * x.value, axis=axes), np.sum(g, axis=axes)

    return _tape_of(x).record(x.value * s + b, (x, scale, shift), "affine", grads)


def concat_node(nodes: Sequence[Node], axis: int = 1) -> Node:
    """Concatenate along the channel axis."""
    values = [n.value for n in nodes]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def grads(g):
        return np.split(g, bounds, axis=axis)

    return _tape_of(*nodes).record(out, tuple(nodes), "concat", grads)


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def conv2d_node(x: Node, k: Node, bias: Node) -> Node:
    """
    Stride-1 same-padded cross-correlation.

    x: [B, Cin, H, W], k: [Cout, Cin, kh, kw] (odd kh, kw), bias: [Cout]
    """
    if x.value.ndim != 4 or k.value.ndim != 4:
        raise ShapeError(f"conv2d expects x [B,C,H,W] and k [O,C,kh,kw], got {x.shape} and {k.shape}")
    cout, cin, kh, kw = k.shape
    if x.shape[1] != cin:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, kernel expects {cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel size must be odd, got {kh}x{kw}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias must be [{cout}], got {bias.shape}")
    ph, pw = kh // 2, kw // 2
    pad = ((0, 0), (0, 0), (ph, ph), (pw, pw))

    # windows[b, c, y, x, i, j] = padded[b, c, y + i, x + j]
    windows = np.lib.stride_tricks.sliding_window_view(np.pad(x.value, pad), (kh, kw), axis=(2, 3))
    out = np.tensordot(windows, k.value, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias.value[None, :, None, None]

    def grads(g):
        g_windows = np.lib.stride_tricks.sliding_window_view(np.pad(g, pad), (kh, kw), axis=(2, 3))
        flipped = k.value[:, :, ::-1, ::-1]
        dx = np.tensordot(g_windows, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        dk = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        return dx, dk, g.sum(axis=(0, 2, 3))

    return _tape_of(x).record(out, (x, k, bias), "conv2d", grads)


def conv_transpose2x2_node(x: Node, k: Node, bias: Node) -> Node:
    """
    Learnable stride-2 up-sampling.

    out[b, o, 2y + i, 2x + j] = sum_c x[b, c, y, x] * k[c, o, i, j] + bias[o]
    x: [B, Cin, h, w], k: [Cin, Cout, 2, 2], bias: [Cout]
    """
    if x.value.ndim != 4 or k.value.ndim != 4 or k.shape[2:] != (2, 2):
        raise ShapeError(f"conv_transpose2x2 expects x [B,C,h,w] and k [C,O,2,2], got {x.shape} and {k.shape}")
    cin, cout = k.shape[:2]
    if x.shape[1] != cin:
        raise ShapeError(f"conv_transpose2x2: input has {x.shape[1]} channels, kernel expects {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv_transpose2x2: bias must be [{cout}], got {bias.shape}")
    b, _, h, w = x.shape

    # [B, h, w, O, 2, 2] -> [B, O, h, 2, w, 2]
    blocks = np.tensordot(x.value, k.value, axes=([1], [0])).transpose(0, 3, 1, 4, 2, 5)
    out = blocks.reshape(b, cout, 2 * h, 2 * w) + bias.value[None, :, None, None]

    def grads(g):
        g_blocks = g.reshape(b, cout, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5)
        dx = np.tensordot(g_blocks, k.value, axes=([3, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        dk = np.tensordot(x.value, g_blocks, axes=([0, 2, 3], [0, 1, 2]))
        return dx, dk, g.sum(axis=(0, 2, 3))

    return _tape_of(x).record(out, (x, k, bias), "conv_transpose2x2", grads)


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PoolIndices:
    """Position of each maximum inside its 2x2 window (row-major 0..3)."""
    argmax: np.ndarray
    input_shape: Tuple[int, ...]


def _windows(full: np.ndarray) -> np.ndarray:
    # [..., H, W] -> [..., H/2, W/2, 4]
    *lead, H, W = full.shape
    blocks = full.reshape(*lead, H // 2, 2, W // 2, 2)
    blocks = np.moveaxis(blocks, -3, -2)
    return blocks.reshape(*lead, H // 2, W // 2, 4)


def _scatter_windows(values: np.ndarray, argmax: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    *lead, H, W = shape
    placed = (np.arange(4) == argmax[..., None]) * values[..., None]
    placed = placed.reshape(*lead, H // 2, W // 2, 2, 2)
    return np.moveaxis(placed, -2, -3).reshape(shape)


def maxpool2_node(x: Node) -> Tuple[Node, PoolIndices]:
    """2x2 stride-2 max pooling over the last two axes; returns the indices too."""
    if x.value.ndim < 2 or x.shape[-1] % 2 or x.shape[-2] % 2:
        raise ShapeError(f"maxpool2 needs even spatial extents, got {x.shape}")
    windows = _windows(x.value)
    argmax = np.argmax(windows, axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    indices = PoolIndices(argmax, x.shape)

    def grads(g):
        return (_scatter_windows(g, argmax, x.shape),)

    return _tape_of(x).record(out, (x,), "maxpool2", grads), indices


def maxunpool2_node(x: Node, indices: PoolIndices) -> Node:
    """Place each value at its recorded argmax inside a zero 2x2 window."""
    if x.shape != indices.argmax.shape:
        raise ShapeError(f"maxunpool2: input {x.shape} does not match pooling indices {indices.argmax.shape}")
    out = _scatter_windows(x.value, indices.argmax, indices.input_shape)

    def grads(g):
        return (np.take_along_axis(_windows(g), indices.argmax[..., None], axis=-1)[..., 0],)

    return _tape_of(x).record(out, (x,), "maxunpool2", grads)


# ---------------------------------------------------------------------------
# Wavelet sampling
# ---------------------------------------------------------------------------

@dataclass
class NodeSubbands:
    """Subbands whose components are nodes on a tape."""
    dim: int
    low: Node
    highs: Dict[str, Node]
    boundary_mode: str
    wavelet_name: str
    original_extent: Tuple[int, ...]

    def components(self) -> Dict[str, Node]:
        return {"l" * self.dim: self.low, **self.highs}

    def with_highs(self, highs: Dict[str, Node]) -> "NodeSubbands":
        return NodeSubbands(self.dim, self.low, highs, self.boundary_mode, self.wavelet_name, self.original_extent)


def _select_node(packed: Node, i: int) -> Node:
    def grads(g):
        full = np.zeros_like(packed.value)
        full[i] = g
        return (full,)

    return _tape_of(packed).record(packed.value[i], (packed,), "select", grads)


def dwt_node(x: Node, w, dim: int, mode: str) -> NodeSubbands:
    """
    DWT on the last `dim` axes of x.

    Values equal transform.dwt bit for bit; gradients go through dwt's transpose.
    """
    w = get_wavelet(w)
    extent = tuple(x.shape[x.value.ndim - dim:]) if x.value.ndim >= dim else ()
    parts = dwt_arrays(x.value, w, dim, mode)
    tags = subband_tags(dim)

    def grads(g):
        return (dwt_adjoint_arrays({t: g[i] for i, t in enumerate(tags)}, w, dim, mode, extent),)

    packed = _tape_of(x).record(np.stack([parts[t] for t in tags]), (x,), "dwt", grads)
    nodes = {t: _select_node(packed, i) for i, t in enumerate(tags)}
    return NodeSubbands(dim, nodes[tags[0]], {t: nodes[t] for t in tags[1:]}, mode, w.name, extent)


def idwt_node(s: NodeSubbands, w=None) -> Node:
    spec: WaveletSpec = get_wavelet(s.wavelet_name if w is None else w)
    if spec.name != s.wavelet_name:
        raise ArgumentError(f"subbands were produced with {s.wavelet_name!r}, not {spec.name!r}")
    tags = subband_tags(s.dim)
    comps = s.components()
    parents = tuple(comps[t] for t in tags)
    out = idwt_arrays({t: comps[t].value for t in tags}, spec, s.dim, s.boundary_mode, s.original_extent)

    def grads(g):
        parts = idwt_adjoint_arrays(g, spec, s.dim, s.boundary_mode)
        return tuple(parts[t] for t in tags)

    return _tape_of(*parents).record(out, parents, "idwt", grads)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def softmax_ce_loss_node(logits: Node, labels, ignore_label: int = IGNORE_LABEL) -> Node:
    """
    Mean softmax cross-entropy over the labelled pixels.

    logits: [B, K, H, W]; labels: integer [B, H, W]. Pixels equal to
    ignore_label contribute nothing.
    """
    labels = np.asarray(labels)
    if logits.value.ndim != 4 or labels.shape != (logits.shape[0],) + logits.shape[2:]:
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not line up")
    K = logits.shape[1]
    valid = labels != ignore_label
    if np.any((labels[valid] < 0) | (labels[valid] >= K)):
        raise ArgumentError(f"labels must lie in [0, {K}) or equal {ignore_label}")
    count = int(valid.sum())

    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    safe = np.where(valid, labels, 0).astype(np.intp)
    picked = np.take_along_axis(log_probs, safe[:, None], axis=1)[:, 0]
    loss = -np.sum(np.where(valid, picked, 0.0)) / max(count, 1)

    def grads(g):
        probs = np.exp(log_probs)
        one_hot = np.arange(K)[None, :, None, None] == safe[:, None]
        d = (probs - one_hot) * valid[:, None] / max(count, 1)
        return (float(g) * d,)

    return _tape_of(logits).record(np.float64(loss), (logits,), "softmax_ce", grads)


# ---------------------------------------------------------------------------
# Gradient checking and optimisation
# ---------------------------------------------------------------------------

def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5,
                       indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Central differences of a scalar function.

    Args:
        f: function of an array shaped like x
        x: evaluation point (not modified)
        h: step
        indices: flat positions to perturb; all positions when omitted

    Returns:
        Gradient estimates, shaped like x, or one per perturbed index
    """
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    positions = range(flat.size) if indices is None else list(indices)
    estimates = []
    for i in positions:
        saved = flat[i]
        flat[i] = saved + h
        up = f(x)
        flat[i] = saved - h
        down = f(x)
        flat[i] = saved
        estimates.append((up - down) / (2 * h))
    estimates = np.array(estimates)
    return estimates.reshape(x.shape) if indices is None else estimates


def relative_error(a, b, floor: float = 1e-12) -> float:
    """max|a - b| scaled by the larger of max|a| and max|b|."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


class SGD:
    """Stochastic gradient descent with momentum and optional weight decay."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        if lr < 0 or not 0 <= momentum < 1 or weight_decay < 0:
            raise ArgumentError(f"invalid SGD settings lr={lr}, momentum={momentum}, weight_decay={weight_decay}")
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: Dict[str, np.ndarray]):
        for name, p in self.params.items():
            g = grads[name] + self.weight_decay * p
            v = self.momentum * self.velocity[name] - self.lr * g
            self.velocity[name] = v
            p += v
