"""The codec networks, the P-frame model and its weight container."""

from .model import (
    PAPER_TRIPLES,
    RES_FEATURES,
    Buffers,
    CodecModel,
    CodedLatent,
    FrameResult,
    LatentResult,
    check_channel_constraints,
)
from .networks import (
    FEATURE_WIDTH,
    N_FRAME_REFS,
    N_MV_REFS,
    LatentCodec,
    LFNet,
    MCNet,
    MENet,
    MVPNet,
    RPNet,
    size_chain,
)
from .weights import (
    LAMBDAS,
    UNTAGGED,
    ModelWeights,
    WeightsFormatError,
    atomic_write,
    deserialize_tensors,
    serialize_tensors,
)

__all__ = [
    "FEATURE_WIDTH", "LAMBDAS", "N_FRAME_REFS", "N_MV_REFS", "PAPER_TRIPLES", "RES_FEATURES",
    "UNTAGGED", "Buffers", "CodecModel", "CodedLatent", "FrameResult", "LFNet", "LatentCodec",
    "LatentResult", "MCNet", "MENet", "MVPNet", "ModelWeights", "RPNet", "WeightsFormatError",
    "atomic_write", "check_channel_constraints", "deserialize_tensors", "serialize_tensors",
    "size_chain",
]
