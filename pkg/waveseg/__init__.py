"""
Differentiable wavelet transforms and toy wavelet-sampling segmentation networks.
"""

from waveseg.errors import (
    ArgumentError,
    DivergenceError,
    FormatError,
    NumericError,
    ShapeError,
    UndefinedMetricError,
    UnknownWaveletError,
    WaveSegError,
)
from waveseg.tensor import Tensor, dot, elementwise, load, save, zeros
from waveseg.filters import (
    Filter2D,
    Filter3D,
    WaveletSpec,
    get_wavelet,
    list_wavelets,
    tensor_filters_2d,
    tensor_filters_3d,
    validate,
)
from waveseg.transform import (
    Pyramid,
    Subbands,
    affected_band_width,
    analysis_matrix,
    boundary_error_profile,
    boundary_summary,
    dwt,
    dwt_adjoint,
    dwt_multilevel,
    idwt,
    idwt_adjoint,
    idwt_multilevel,
)
from waveseg.autodiff import Node, Tape, backward
from waveseg.dataset import SegSample, gen_dataset
from waveseg.metrics import ConfusionMatrix, accumulate, global_accuracy, miou, psnr
from waveseg.wadsnet import ToyNet, build_net, compare_duals, evaluate, train

__all__ = [
    "ArgumentError",
    "DivergenceError",
    "FormatError",
    "NumericError",
    "ShapeError",
    "UndefinedMetricError",
    "UnknownWaveletError",
    "WaveSegError",
    "Tensor",
    "dot",
    "elementwise",
    "load",
    "save",
    "zeros",
    "Filter2D",
    "Filter3D",
    "WaveletSpec",
    "get_wavelet",
    "list_wavelets",
    "tensor_filters_2d",
    "tensor_filters_3d",
    "validate",
    "Pyramid",
    "Subbands",
    "affected_band_width",
    "analysis_matrix",
    "boundary_error_profile",
    "boundary_summary",
    "dwt",
    "dwt_adjoint",
    "dwt_multilevel",
    "idwt",
    "idwt_adjoint",
    "idwt_multilevel",
    "Node",
    "Tape",
    "backward",
    "SegSample",
    "gen_dataset",
    "ConfusionMatrix",
    "accumulate",
    "global_accuracy",
    "miou",
    "psnr",
    "ToyNet",
    "build_net",
    "compare_duals",
    "evaluate",
    "train",
]
