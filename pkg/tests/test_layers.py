import numpy as np
import pytest

from lvcodec import tensor as T
from lvcodec.layers import (
    LF_SPEC,
    MC_SPEC,
    MVP_SPEC,
    RP_SPEC,
    AttentionBlock,
    Backbone,
    BackboneSpec,
    ParamStore,
    ResBlock,
)
from lvcodec.tensor import Tensor


def rand(shape, seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape).astype(np.float32))


def test_resblock_zero_weights_is_skip():
    store = ParamStore(seed=1)
    block = ResBlock(store, "rb", 32)
    for t in store.tensors.values():
        t.data[...] = 0
    x = rand((1, 32, 8, 8))
    out = block(x)
    assert out.shape == (1, 32, 8, 8)
    np.testing.assert_array_equal(out.data, x.data)


def test_resblock_channel_mismatch():
    block = ResBlock(ParamStore(), "rb", 8)
    with pytest.raises(ValueError):
        block(rand((1, 4, 8, 8)))


def test_resblock_deterministic():
    x = rand((1, 32, 8, 8), seed=3)
    outs = [ResBlock(ParamStore(seed=5), "rb", 32)(x).data for _ in range(2)]
    np.testing.assert_array_equal(outs[0], outs[1])


def test_attention_zero_mask_gates_half():
    store = ParamStore(seed=2)
    attn = AttentionBlock(store, "a", 16)
    attn.mask_conv.weight.data[...] = 0
    attn.mask_conv.bias.data[...] = 0
    x = rand((1, 16, 6, 6), seed=4)
    expected = x.data + 0.5 * attn.trunk(x).data
    np.testing.assert_allclose(attn(x).data, expected, rtol=0, atol=0)


@pytest.mark.parametrize(
    "spec,shape,out",
    [
        (MVP_SPEC, (1, 8, 64, 64), (1, 2, 64, 64)),
        (LF_SPEC, (1, 195, 64, 64), (1, 3, 64, 64)),
        (MC_SPEC, (1, 70, 16, 16), (1, 64, 16, 16)),
        (RP_SPEC, (1, 64, 16, 16), (1, 3, 16, 16)),
    ],
)
def test_backbone_shapes(spec, shape, out):
    bb = Backbone(ParamStore(), "bb", spec)
    with T.no_grad():
        assert bb(rand(shape)).shape == out


@pytest.mark.parametrize("hw", [(7, 9), (5, 6), (10, 11)])
def test_backbone_odd_dims_preserved(hw):
    bb = Backbone(ParamStore(), "bb", MVP_SPEC)
    assert bb(rand((1, 8) + hw)).shape == (1, 2) + hw


def test_backbone_channel_mismatch():
    bb = Backbone(ParamStore(), "bb", MVP_SPEC)
    with pytest.raises(ValueError, match="8 input channels"):
        bb(rand((1, 6, 8, 8)))


def test_spec_rejects_nonpositive():
    with pytest.raises(ValueError):
        BackboneSpec(0, 4, 4)


def test_paper_channel_constants():
    assert (MVP_SPEC.n_in, MVP_SPEC.n_mid, MVP_SPEC.n_out) == (8, 32, 2)
    assert (RP_SPEC.n_in, RP_SPEC.n_mid, RP_SPEC.n_out) == (64, 64, 3)
    assert (MC_SPEC.n_in, MC_SPEC.n_mid, MC_SPEC.n_out) == (70, 64, 64)
    assert (LF_SPEC.n_in, LF_SPEC.n_mid, LF_SPEC.n_out) == (195, 128, 3)


@pytest.mark.parametrize("spec", [MVP_SPEC, RP_SPEC, MC_SPEC, LF_SPEC])
def test_downsampled_trunk_is_quarter_cost(spec):
    bb = Backbone(ParamStore(), "bb", spec)
    h, w = 720, 1280
    assert 4 * bb.trunk_flops(h // 2, w // 2) == bb.trunk_flops(h, w)


@pytest.mark.parametrize("spec,hw", [(MVP_SPEC, (16, 16)), (RP_SPEC, (12, 10)), (MVP_SPEC, (9, 7))])
def test_analytic_flops_match_recorded(spec, hw):
    bb = Backbone(ParamStore(), "bb", spec)
    x = rand((1, spec.n_in) + hw)
    with T.no_grad(), T.record_flops() as log:
        bb(x)
    assert sum(f for _, f in log) == bb.flops(*hw)
