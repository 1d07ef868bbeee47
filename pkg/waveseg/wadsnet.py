"""
Toy Encoder-Decoder Networks
Small segmentation networks that differ only in their dual structures, the
paired down-sampling and up-sampling stages:

    wads  DWT down, IDWT up; the detail components travel from each DWT to
          its matching IDWT
    puds  2x2 max pooling down, max unpooling with the pooling indices up
    pdds  2x2 max pooling down, 2x2 transposed convolution up, then the
          encoder feature map is concatenated before the decoder conv

wads and puds have identical parameter sets; pdds carries extra weights for
the transposed convolutions and the wider decoder convs.

Stage layout for depth D, widths w_1..w_D:
    enc_i: conv3x3 -> affine -> relu -> down        (i = 1..D)
    bridge: conv3x3 -> affine -> relu
    dec_i: up -> conv3x3 -> affine -> relu          (i = D..1)
    head: conv1x1 to class logits
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from waveseg.autodiff import (
    SGD,
    Node,
    Tape,
    affine_node,
    backward,
    concat_node,
    conv2d_node,
    conv_transpose2x2_node,
    dwt_node,
    idwt_node,
    maxpool2_node,
    maxunpool2_node,
    relu_node,
    softmax_ce_loss_node,
)
from waveseg.config import (
    BATCH_SIZE,
    CLASS_NAMES,
    DEFAULT_MODE,
    DEFAULT_WAVELET,
    DEPTH,
    EPOCHS,
    IGNORE_LABEL,
    IMAGE_SIZE,
    LEARNING_RATE,
    MOMENTUM,
    NUM_SAMPLES,
    NUM_TEST_SAMPLES,
    VERBOSE,
    WEIGHT_DECAY,
    WIDTHS,
)
from waveseg.dataset import SegSample, stack
from waveseg.errors import ArgumentError, DivergenceError, ShapeError
from waveseg.filters import WaveletSpec, get_wavelet
from waveseg.metrics import ConfusionMatrix, class_iou, global_accuracy, miou
from waveseg.state import EpochRecord, IoURecord

KINDS = ("wads", "puds", "pdds")


class ToyNet:
    """Encoder-decoder with `depth` dual structures and a 1x1 classification head."""

    def __init__(
        self,
        kind: str,
        wavelet: WaveletSpec,
        mode: str,
        depth: int,
        widths: Sequence[int],
        num_classes: int,
        seed: int,
    ):
        self.kind = kind
        self.wavelet = wavelet
        self.mode = mode
        self.depth = depth
        self.widths = tuple(widths)
        self.num_classes = num_classes
        self.seed = seed
        self.params: Dict[str, np.ndarray] = {}
        self._init_params(np.random.default_rng(seed))

    # -- parameters ---------------------------------------------------------

    def _conv(self, rng, name: str, cout: int, cin: int, size: int):
        fan_in = cin * size * size
        self.params[f"{name}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, size, size))
        self.params[f"{name}.b"] = np.zeros(cout)

    def _affine(self, name: str, channels: int):
        self.params[f"{name}.scale"] = np.ones(channels)
        self.params[f"{name}.shift"] = np.zeros(channels)

    def _init_params(self, rng: np.random.Generator):
        cin = 1
        for i, width in enumerate(self.widths, start=1):
            self._conv(rng, f"enc{i}", width, cin, 3)
            self._affine(f"enc{i}", width)
            cin = width
        self._conv(rng, "bridge", cin, cin, 3)
        self._affine("bridge", cin)
        for i in reversed(range(1, self.depth + 1)):
            width = self.widths[i - 1]
            out = self.widths[i - 2] if i > 1 else width
            if self.kind == "pdds":
                fan_in = width * 4
                self.params[f"up{i}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, width, 2, 2))
                self.params[f"up{i}.b"] = np.zeros(width)
                self._conv(rng, f"dec{i}", out, 2 * width, 3)
            else:
                self._conv(rng, f"dec{i}", out, width, 3)
            self._affine(f"dec{i}", out)
        self._conv(rng, "head", self.num_classes, self.widths[0], 1)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    # -- forward ------------------------------------------------------------

    def _check_images(self, images) -> Tuple[np.ndarray, bool]:
        images = np.asarray(images, dtype=np.float64)
        single = images.ndim == 3
        if single:
            images = images[None]
        if images.ndim != 4 or images.shape[1] != 1:
            raise ShapeError(f"images must be [B, 1, H, W] or [1, H, W], got {images.shape}")
        factor = 2 ** self.depth
        if images.shape[2] % factor or images.shape[3] % factor:
            raise ShapeError(f"spatial size {images.shape[2:]} must be divisible by {factor}")
        return images, single

    def _block(self, h: Node, name: str, leaves: Dict[str, Node]) -> Node:
        h = conv2d_node(h, leaves[f"{name}.w"], leaves[f"{name}.b"])
        h = affine_node(h, leaves[f"{name}.scale"], leaves[f"{name}.shift"])
        return relu_node(h)

    def build_graph(self, tape: Tape, images: np.ndarray, drop_details: bool = False) -> Tuple[Node, Dict[str, Node]]:
        """
        Record one forward pass on `tape`.

        Returns:
            (logits node [B, K, H, W], parameter leaves by name)
        """
        leaves = {name: tape.leaf(p, name) for name, p in self.params.items()}
        h = tape.leaf(images, "images")

        skips = []
        for i in range(1, self.depth + 1):
            h = self._block(h, f"enc{i}", leaves)
            if self.kind == "wads":
                bands = dwt_node(h, self.wavelet, 2, self.mode)
                skips.append(bands)
                h = bands.low
            elif self.kind == "puds":
                h, indices = maxpool2_node(h)
                skips.append(indices)
            else:
                skips.append(h)
                h, _ = maxpool2_node(h)

        h = self._block(h, "bridge", leaves)

        for i in reversed(range(1, self.depth + 1)):
            skip = skips.pop()
            if self.kind == "wads":
                if drop_details:
                    skip = skip.with_highs({t: tape.leaf(np.zeros(n.shape)) for t, n in skip.highs.items()})
                h = idwt_node(replace(skip, low=h), self.wavelet)
            elif self.kind == "puds":
                h = maxunpool2_node(h, skip)
            else:
                h = conv_transpose2x2_node(h, leaves[f"up{i}.w"], leaves[f"up{i}.b"])
                h = concat_node([h, skip])
            h = self._block(h, f"dec{i}", leaves)

        logits = conv2d_node(h, leaves["head.w"], leaves["head.b"])
        return logits, leaves

    def forward(self, images, drop_details: bool = False) -> np.ndarray:
        """
        Class logits for a batch.

        Args:
            images: [B, 1, H, W] or a single [1, H, W] image
            drop_details: wads only; zero the detail components handed to each IDWT

        Returns:
            logits [B, K, H, W] (or [K, H, W] for a single image)
        """
        images, single = self._check_images(images)
        logits, _ = self.build_graph(Tape(), images, drop_details)
        return logits.value[0] if single else logits.value

    def predict(self, images) -> np.ndarray:
        return np.argmax(self.forward(images), axis=-3)

    def loss(self, images, labels) -> float:
        images, _ = self._check_images(images)
        tape = Tape()
        logits, _ = self.build_graph(tape, images)
        return float(softmax_ce_loss_node(logits, labels).value)

    def loss_and_grads(self, images, labels) -> Tuple[float, Dict[str, np.ndarray], np.ndarray]:
        """Loss, gradient of every parameter, and the logits of one batch."""
        images, _ = self._check_images(images)
        tape = Tape()
        logits, leaves = self.build_graph(tape, images)
        loss = softmax_ce_loss_node(logits, labels)
        backward(tape, loss)
        return float(loss.value), {name: leaf.grad for name, leaf in leaves.items()}, logits.value


def build_net(
    kind: str,
    wavelet=DEFAULT_WAVELET,
    seed: int = 0,
    depth: int = DEPTH,
    widths: Sequence[int] = WIDTHS,
    num_classes: int = len(CLASS_NAMES),
    mode: str = DEFAULT_MODE,
) -> ToyNet:
    """
    Create a toy network with He-initialised weights drawn from `seed`.
    """
    kind = str(kind).lower()
    if kind not in KINDS:
        raise ArgumentError(f"unknown network kind {kind!r}; expected one of {', '.join(KINDS)}")
    spec = get_wavelet(wavelet)
    if depth < 1 or len(widths) != depth or any(w < 1 for w in widths):
        raise ArgumentError(f"need {depth} positive widths, got {tuple(widths)}")
    return ToyNet(kind, spec, mode, depth, widths, num_classes, seed)


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

def _batches(count: int, batch_size: int, order: np.ndarray) -> Iterable[np.ndarray]:
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def train(
    net: ToyNet,
    dataset: Sequence[SegSample],
    epochs: int = EPOCHS,
    lr: float = LEARNING_RATE,
    momentum: float = MOMENTUM,
    weight_decay: float = WEIGHT_DECAY,
    batch_size: int = BATCH_SIZE,
    seed: Optional[int] = None,
    verbose: bool = VERBOSE,
) -> List[EpochRecord]:
    """
    Minibatch SGD with momentum; samples are reshuffled every epoch.

    Each log row holds the epoch's mean loss and pixel accuracy measured on
    the training batches as they were seen.

    Raises:
        DivergenceError: the loss became NaN or infinite; carries the log so far
    """
    if not dataset:
        raise ArgumentError("training needs a nonempty dataset")
    if epochs < 0 or batch_size < 1:
        raise ArgumentError(f"invalid epochs={epochs} or batch_size={batch_size}")
    images, labels = stack(dataset)
    rng = np.random.default_rng(net.seed if seed is None else seed)
    optimizer = SGD(net.params, lr, momentum, weight_decay)

    log: List[EpochRecord] = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(dataset))
        loss_sum, correct, counted = 0.0, 0, 0
        for batch in _batches(len(dataset), batch_size, order):
            loss, grads, logits = net.loss_and_grads(images[batch], labels[batch])
            if not np.isfinite(loss):
                raise DivergenceError(f"{net.kind} training diverged at epoch {epoch} (loss={loss})", log)
            valid = labels[batch] != IGNORE_LABEL
            count = int(valid.sum())
            loss_sum += loss * count
            correct += int(np.sum((np.argmax(logits, axis=1) == labels[batch]) & valid))
            counted += count
            optimizer.step(grads)

        record = EpochRecord(epoch=epoch, loss=loss_sum / max(counted, 1), pixel_acc=correct / max(counted, 1))
        log.append(record)
        if verbose:
            print(f"[{net.kind}] epoch {epoch}/{epochs} loss={record['loss']:.4f} "
                  f"pixel_acc={record['pixel_acc']:.4f}", file=sys.stderr)
    return log


def log_frame(log: Sequence[EpochRecord]) -> pd.DataFrame:
    return pd.DataFrame(list(log), columns=["epoch", "loss", "pixel_acc"])


def logs_frame(logs: Dict[str, Sequence[EpochRecord]]) -> pd.DataFrame:
    """Training logs keyed "kind/seed" stacked under a `run` column."""
    frames = [log_frame(log).assign(run=run) for run, log in logs.items()]
    if not frames:
        return pd.DataFrame(columns=["run", "epoch", "loss", "pixel_acc"])
    return pd.concat(frames, ignore_index=True)[["run", "epoch", "loss", "pixel_acc"]]


def evaluate(net: ToyNet, dataset: Sequence[SegSample], batch_size: int = BATCH_SIZE) -> ConfusionMatrix:
    """Confusion matrix of the network's predictions over a dataset."""
    cm = ConfusionMatrix(net.num_classes)
    images, labels = stack(dataset)
    for start in range(0, len(dataset), batch_size):
        cm.update(labels[start:start + batch_size], net.predict(images[start:start + batch_size]))
    return cm


# ---------------------------------------------------------------------------
# Dual-structure comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    rows: pd.DataFrame       # kind, class, IoU, seed
    summary: pd.DataFrame    # kind, class, median_IoU
    overview: pd.DataFrame   # kind, params, median_mIoU, median_global_acc
    trace: List[dict] = field(default_factory=list)
    logs: Dict[str, list] = field(default_factory=dict)
    confusions: Dict[str, ConfusionMatrix] = field(default_factory=dict)  # pooled over seeds


def comparison_rows(
    confusions: Dict[Tuple[str, int], ConfusionMatrix], class_names: Sequence[str] = CLASS_NAMES
) -> List[IoURecord]:
    """One row per (kind, class, seed) from held-out confusion matrices."""
    rows = []
    for (kind, seed), cm in confusions.items():
        for name, iou in zip(class_names, class_iou(cm)):
            rows.append(IoURecord({"kind": kind, "class": name, "IoU": float(iou), "seed": seed}))
    return rows


def rows_frame(rows: Sequence[IoURecord]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=list(IoURecord.__annotations__))


def pooled_confusions(confusions: Dict[Tuple[str, int], ConfusionMatrix]) -> Dict[str, ConfusionMatrix]:
    """Sum each kind's held-out matrices over its seeds."""
    pooled: Dict[str, ConfusionMatrix] = {}
    for (kind, _), cm in confusions.items():
        pooled[kind] = pooled[kind] + cm if kind in pooled else cm
    return pooled


def summarize(
    confusions: Dict[Tuple[str, int], ConfusionMatrix], param_counts: Dict[str, int],
    class_names: Sequence[str] = CLASS_NAMES,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Medians over seeds: IoU per kind and class, and mIoU / accuracy per kind."""
    frame = rows_frame(comparison_rows(confusions, class_names))
    summary = (
        frame.groupby(["kind", "class"], sort=False)["IoU"].median()
        .rename("median_IoU").reset_index()
    )
    per_run = pd.DataFrame([
        {"kind": kind, "mIoU": miou(cm)[0], "global_acc": global_accuracy(cm)}
        for (kind, _), cm in confusions.items()
    ])
    overview = per_run.groupby("kind", sort=False).median().reset_index()
    overview = overview.rename(columns={"mIoU": "median_mIoU", "global_acc": "median_global_acc"})
    overview.insert(1, "params", [param_counts[k] for k in overview["kind"]])
    return summary, overview


def compare_duals(
    seeds: Sequence[int],
    kinds: Sequence[str] = ("wads", "puds"),
    wavelet=DEFAULT_WAVELET,
    mode: str = DEFAULT_MODE,
    epochs: int = EPOCHS,
    num_train: int = NUM_SAMPLES,
    num_test: int = NUM_TEST_SAMPLES,
    image_size: int = IMAGE_SIZE,
    lr: float = LEARNING_RATE,
    verbose: bool = VERBOSE,
) -> ComparisonReport:
    """
    Train every kind on every seed and report held-out per-class IoU.

    Runs the generate -> train -> evaluate -> report workflow.
    """
    # local import: the workflow stages call back into this module
    from waveseg.workflow import run_comparison

    seeds = [int(s) for s in seeds]
    if len(set(seeds)) < 3:
        raise ArgumentError(f"need at least 3 distinct seeds, got {seeds}")
    kinds = [str(k).lower() for k in kinds]
    unknown = [k for k in kinds if k not in KINDS]
    if unknown or not kinds:
        raise ArgumentError(f"unknown network kinds {unknown}; expected a subset of {', '.join(KINDS)}")
    name = get_wavelet(wavelet).name

    state = run_comparison(
        seeds=seeds, kinds=kinds, wavelet=name, mode=mode, epochs=epochs,
        num_train=num_train, num_test=num_test, image_size=image_size, lr=lr, verbose=verbose,
    )
    return ComparisonReport(
        rows=rows_frame(state["rows"]),
        summary=state["summary"]["per_class"],
        overview=state["summary"]["per_kind"],
        trace=list(state["trace"]),
        logs=dict(state["logs"] or {}),
        confusions=state["summary"]["pooled"],
    )
