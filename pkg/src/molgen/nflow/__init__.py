from molgen.nflow.layers import (
    ActNorm,
    FlowLayer,
    LinearFlow,
    MaskedAffineFlow,
    SingularWeightError,
    alternating_mask,
)
from molgen.nflow.model import (
    FlowConfig,
    FlowHistory,
    FlowModel,
    NaNLossError,
    NonFiniteInputError,
    SelfiesFlow,
    build_flow,
    dequantize,
    longest_encoding,
    quantize,
    train_flow,
    train_selfies_flow,
)
