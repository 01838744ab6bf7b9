"""Parameter and FLOP accounting."""

from __future__ import annotations

from ..codecnets import CodecModel, ModelWeights
from ..layers import ParamStore


def count_params(weights) -> int:
    """Total element count of a weight store (or of a model's store)."""
    if isinstance(weights, CodecModel):
        weights = weights.weights
    if not isinstance(weights, ParamStore):
        raise TypeError(f"expected a weight store or model, got {type(weights).__name__}")
    return weights.num_params()


def count_flops(model, width: int, height: int, predict: bool = True) -> int:
    """Conv/deconv FLOPs (2 Cin Cout k^2 per output position) of one P-frame.

    Accepts a :class:`CodecModel` or its :class:`ModelWeights`.
    """
    if isinstance(model, ModelWeights):
        model = CodecModel(model)
    return model.flops(height, width, predict=predict)


def count_params_by_network(model: CodecModel) -> dict[str, int]:
    out: dict[str, int] = {}
    for name, t in model.weights.items():
        key = name.split(".")[0]
        out[key] = out.get(key, 0) + t.size
    return out
