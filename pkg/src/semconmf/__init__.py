"""Training-free audio-visual co-factorization for sound-prompted segmentation."""

from .errors import (
    CorruptFile,
    Degenerate,
    DimensionMismatch,
    DivergenceError,
    EmptyBank,
    FormatError,
    InvalidInput,
    NotFound,
    SegmenterError,
    SemconmfError,
)
from .metrics import (
    MetricReport,
    average_precision,
    f_score,
    mask_iou,
    mean_iou_binary,
    semantic_report,
)
from .nmfcore import (
    DecompositionState,
    LossBreakdown,
    SemanticsContext,
    init_state,
    loss_gradients,
    reconstruction_loss,
)
from .segment import (
    ExternalSegmenter,
    SegmenterPrompt,
    SoftMask,
    StubSegmenter,
    activation_mask,
    binarize,
    classify_sounding_factor,
)
from .semantics import (
    AnchorBank,
    DescriptorSet,
    descriptor_cross_entropy,
    descriptor_kl,
    penalty_term,
    select_kstar,
    semantic_component,
    semantic_descriptor,
)
from .solver import (
    DecompositionResult,
    SolverConfig,
    conmf_shared,
    decompose,
    decompose_sequence,
    nmf_single,
)
from .tensorio import clamp_nonneg, load_manifest, read_anchor_bank, read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "AnchorBank",
    "CorruptFile",
    "DecompositionResult",
    "DecompositionState",
    "Degenerate",
    "DescriptorSet",
    "DimensionMismatch",
    "DivergenceError",
    "EmptyBank",
    "ExternalSegmenter",
    "FormatError",
    "InvalidInput",
    "LossBreakdown",
    "MetricReport",
    "NotFound",
    "SegmenterError",
    "SegmenterPrompt",
    "SemanticsContext",
    "SemconmfError",
    "SoftMask",
    "SolverConfig",
    "StubSegmenter",
    "activation_mask",
    "average_precision",
    "binarize",
    "clamp_nonneg",
    "classify_sounding_factor",
    "conmf_shared",
    "decompose",
    "decompose_sequence",
    "descriptor_cross_entropy",
    "descriptor_kl",
    "f_score",
    "init_state",
    "load_manifest",
    "loss_gradients",
    "mask_iou",
    "mean_iou_binary",
    "nmf_single",
    "penalty_term",
    "read_anchor_bank",
    "read_tensor",
    "reconstruction_loss",
    "select_kstar",
    "semantic_component",
    "semantic_descriptor",
    "semantic_report",
    "write_tensor",
]
