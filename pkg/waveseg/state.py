"""
Shared State Module
Records that the comparison pipeline stages share.
Each stage reads what earlier stages produced and adds its own results.
"""

from typing import TypedDict, List, Optional, Annotated, Any, Dict
from operator import add


class StageTrace(TypedDict):
    """
    Record of a single pipeline stage action.
    Rendered as the trace table by workflow.format_trace_table.
    """
    step: int
    stage: str
    action: str
    outcome: str


class EpochRecord(TypedDict):
    """One row of a training log."""
    epoch: int
    loss: float
    pixel_acc: float


# One row of a comparison report; "class" is a keyword, hence the functional form
IoURecord = TypedDict("IoURecord", {"kind": str, "class": str, "IoU": float, "seed": int})


class ComparisonState(TypedDict):
    """
    The shared state of the dual-structure comparison.

    This is passed through the workflow:
    Generate → Train → Evaluate → Report

    Datasets are keyed by seed.
    """

    # Request
    seeds: List[int]
    kinds: List[str]
    wavelet: str
    mode: str
    epochs: int
    num_train: int
    num_test: int
    image_size: int
    lr: float
    verbose: bool

    # Synthetic splits, one (train, test) pair per seed
    datasets: Optional[Dict[int, Any]]

    # Trained networks keyed (kind, seed); logs keyed "kind/seed"
    nets: Optional[Dict[Any, Any]]
    logs: Optional[Dict[str, List[EpochRecord]]]

    # Set when a training run diverged; the runner re-raises it
    divergence: Optional[Any]

    # Held-out confusion matrices keyed (kind, seed)
    confusions: Optional[Dict[Any, Any]]

    # Report rows, median tables ("per_class", "per_kind") and the
    # per-kind confusion matrices pooled over seeds ("pooled")
    rows: Optional[List[IoURecord]]
    summary: Optional[Dict[str, Any]]

    # Trace log; new entries are appended to the existing list
    trace: Annotated[List[StageTrace], add]

    current_step: int

    # Data problems reported by stages
    errors: Optional[List[str]]
