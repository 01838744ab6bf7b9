import numpy as np
import pytest

from lvcodec import tensor as T
from lvcodec.codecnets import (
    FEATURE_WIDTH,
    PAPER_TRIPLES,
    Buffers,
    CodecModel,
    LatentCodec,
    MCNet,
    WeightsFormatError,
    check_channel_constraints,
    deserialize_tensors,
    serialize_tensors,
)
from lvcodec.layers import ParamStore
from lvcodec.tensor import Tensor

from gradcheck import max_rel_error, numeric_grad


@pytest.fixture(scope="module")
def model():
    return CodecModel(seed=3)


def frame(seed, size=(16, 16), dtype=np.float32):
    return Tensor(np.random.default_rng(seed).random((1, 3) + size).astype(dtype))


def test_channel_triples_and_feature_width(model):
    check_channel_constraints()
    assert FEATURE_WIDTH == 8
    assert model.mc.h_x.cout == model.rp.h_r.cout == 8
    got = {n: (b.spec.n_in, b.spec.n_mid, b.spec.n_out) for n, b in
           (("mvp", model.mvp.backbone), ("rp", model.rp.backbone), ("mc", model.mc.backbone), ("lf", model.lf.backbone))}
    assert got == PAPER_TRIPLES


def test_me_static_scene_zero_flow(model):
    x = frame(0, (20, 12))
    v = model.me_estimate(x, x)
    assert v.shape == (1, 2, 20, 12)
    assert not v.data.any()


def test_me_odd_dims(model):
    assert model.me_estimate(frame(0, (9, 13)), frame(1, (9, 13))).shape == (1, 2, 9, 13)


def test_me_dim_mismatch(model):
    with pytest.raises(ValueError):
        model.me_estimate(frame(0, (8, 8)), frame(0, (8, 16)))


def test_mvp_zero_buffer_zero_prediction(model):
    zeros = [Tensor(np.zeros((1, 2, 16, 16), np.float32))] * 3
    assert not model.mvp_predict(zeros).data.any()


def test_mvp_underfull_buffer(model):
    with pytest.raises(ValueError):
        model.mvp_predict([Tensor(np.zeros((1, 2, 8, 8), np.float32))] * 2)


def test_mc_skip_path_and_feature_shape():
    store = ParamStore(seed=0)
    mc = MCNet(store)
    mc.backbone.tail.weight.data[...] = 0
    prev = frame(4)
    zero_mv = Tensor(np.zeros((1, 2, 16, 16), np.float32))
    x_bar, f_mv = mc(zero_mv, [prev] * 4, [zero_mv] * 3)
    assert f_mv.shape == (1, 64, 16, 16)
    np.testing.assert_array_equal(x_bar.data, prev.data)


def test_rp_zero_buffer(model):
    zr = [Tensor(np.zeros((1, 3, 16, 16), np.float32))] * 4
    zm = [Tensor(np.zeros((1, 2, 16, 16), np.float32))] * 3
    out = model.rp_predict(zr, zm)
    assert out.shape == (1, 3, 16, 16) and not out.data.any()


def test_lf_zero_tail_is_clamped_shortcut(model):
    x_bar = Tensor(np.random.default_rng(1).uniform(-0.2, 1.2, (1, 3, 16, 16)).astype(np.float32))
    r_hat = frame(2) * 0.1
    f_mv = Tensor(np.ones((1, 64, 16, 16), np.float32))
    f_res = Tensor(np.ones((1, 128, 16, 16), np.float32))
    x_hat, x_prime = model.lf_filter(x_bar, r_hat, f_mv, f_res)
    np.testing.assert_array_equal(x_hat.data, np.clip(x_bar.data + r_hat.data, 0, 1))
    np.testing.assert_array_equal(x_prime.data, x_bar.data + r_hat.data)


def test_lf_channel_mismatch(model):
    with pytest.raises(ValueError, match="195"):
        model.lf_filter(frame(0), frame(1), Tensor(np.ones((1, 60, 16, 16), np.float32)),
                        Tensor(np.ones((1, 128, 16, 16), np.float32)))


def test_res_code_feature_width(model):
    with T.no_grad():
        res, r_hat = model.res_code(frame(0) - 0.5, frame(1) * 0, "code")
    assert res.decoded.shape == (1, 128, 16, 16)
    assert r_hat.shape == (1, 3, 16, 16)


def test_perfect_mv_prediction_gives_zero_delta(model):
    v = Tensor(np.random.default_rng(0).normal(0, 2, (1, 2, 32, 32)).astype(np.float32))
    with T.no_grad():
        res = model.mv_code(v, v, "code")
    assert not res.coded.delta.any()


@pytest.mark.parametrize("size", [(16, 16), (20, 28), (33, 17)])
def test_latent_codec_shapes(size):
    codec = LatentCodec(ParamStore(seed=0), "c", 3, 5)
    x = Tensor(np.zeros((1, 3) + size, np.float32))
    y = codec.encode(x)
    assert y.shape[2:] == codec.latent_size(*size)
    assert codec.hyper_encode(y).shape[2:] == codec.hyper_size(*size)
    z = codec.hyper_encode(y)
    mu, sigma = codec.hyper_decode(z, y.shape[2:])
    assert mu.shape == y.shape and sigma.data.min() >= 0.01
    assert codec.decode(y, size).shape == (1, 5) + size


@pytest.mark.parametrize("size", [(16, 16), (24, 40), (18, 14)])
def test_frame_encode_decode_bitwise(model, size):
    buf = Buffers.from_intra(frame(10, size))
    x = frame(11, size)
    with T.no_grad():
        enc = model.forward(x, buf, "code")
        dec = model.decode(enc.sections, buf)
    np.testing.assert_array_equal(dec.x_hat.data, enc.x_hat.data)
    for a, b in zip(enc.buffers.residuals + enc.buffers.mvs, dec.buffers.residuals + dec.buffers.mvs):
        np.testing.assert_array_equal(a.data, b.data)
    assert enc.buffers.mvs[0] is enc.v_hat
    np.testing.assert_array_equal(enc.buffers.residuals[0].data, (enc.x_hat - enc.x_bar).data)


def test_zeroed_buffers_and_tails_match_no_prediction(model):
    # a fresh model has zero prediction tails; at sequence start buffers are zero
    buf = Buffers.from_intra(frame(20))
    with T.no_grad():
        a = model.forward(frame(21), buf, "code", predict=True)
        b = model.forward(frame(21), buf, "code", predict=False)
    assert a.sections == b.sections
    np.testing.assert_array_equal(a.x_hat.data, b.x_hat.data)


def test_flops_match_recorder(model):
    buf = Buffers.from_intra(frame(0, (24, 20)))
    with T.no_grad(), T.record_flops() as log:
        model.forward(frame(1, (24, 20)), buf, "code")
    assert sum(f for _, f in log) == model.flops(24, 20)


def test_train_mode_rate_is_differentiable(model):
    buf = Buffers.from_intra(frame(0))
    out = model.forward(frame(1), buf, "train", np.random.default_rng(0))
    assert isinstance(out.rate, Tensor) and np.isfinite(out.rate.item()) and out.rate.item() > 0
    T.backward(out.rate + T.tsum(out.x_hat))
    assert model.mv_codec.enc[0].weight.grad is not None
    for t in model.weights.tensors.values():
        t.grad = None


# --- weights container ---------------------------------------------------------------

def test_weights_round_trip_bit_exact(tmp_path, model):
    path = tmp_path / "w.rplw"
    model.weights.lambda_index = 2
    model.weights.save(path)
    raw = path.read_bytes()
    assert raw[:4] == b"RPLW"
    arrays, lam = deserialize_tensors(raw)
    assert lam == 2
    again = CodecModel(seed=99)
    again.weights.assign(arrays)
    again.weights.lambda_index = lam
    assert again.weights.to_bytes() == raw
    assert again.weights.checksum() == model.weights.checksum()
    model.weights.lambda_index = 255


def test_weights_reject_closed_set_violations(model):
    arrays = model.weights.arrays()
    bad = dict(arrays)
    bad.pop(next(iter(bad)))
    with pytest.raises(WeightsFormatError, match="missing"):
        CodecModel(seed=1).weights.assign(bad)
    name = next(iter(arrays))
    wrong = dict(arrays)
    wrong[name] = np.zeros((1,), np.float32)
    with pytest.raises(WeightsFormatError, match="shape"):
        CodecModel(seed=1).weights.assign(wrong)


def test_weights_truncation_and_magic():
    blob = serialize_tensors({"a": np.arange(6, dtype=np.float32).reshape(2, 3)}, 1)
    back, lam = deserialize_tensors(blob)
    np.testing.assert_array_equal(back["a"], np.arange(6).reshape(2, 3))
    with pytest.raises(WeightsFormatError):
        deserialize_tensors(blob[:-3])
    with pytest.raises(WeightsFormatError, match="magic"):
        deserialize_tensors(b"XXXX" + blob[4:])
    with pytest.raises(WeightsFormatError, match="trailing"):
        deserialize_tensors(blob + b"\0")


def test_checksum_depends_on_values():
    a = CodecModel(seed=0).weights
    b = CodecModel(seed=1).weights
    assert a.checksum() != b.checksum()


# --- MC-Net end-to-end gradient -----------------------------------------------------------

def test_mc_net_gradient_matches_finite_differences():
    store = ParamStore(seed=5, dtype=np.float64)
    mc = MCNet(store)
    rng = np.random.default_rng(5)
    frames = [Tensor(rng.random((1, 3, 6, 6)), requires_grad=True) for _ in range(4)]
    mv = Tensor(rng.normal(0, 0.7, (1, 2, 6, 6)), requires_grad=True)
    mvs = [Tensor(rng.normal(0, 0.7, (1, 2, 6, 6))) for _ in range(3)]
    probe = Tensor(rng.standard_normal((1, 3, 6, 6)))
    probe_f = Tensor(rng.standard_normal((1, 64, 6, 6)))

    def loss():
        x_bar, f_mv = mc(mv, frames, mvs)
        return T.tsum(x_bar * probe) + T.tsum(f_mv * probe_f)

    T.backward(loss())
    targets = [("frame0", frames[0]), ("mv", mv), ("h_x", mc.h_x.weight), ("head", mc.backbone.head.weight),
               ("tail", mc.backbone.tail.weight), ("h_f", mc.h_f.weight)]
    for name, t in targets:
        idx = rng.choice(t.size, min(12, t.size), replace=False)

        def f():
            with T.no_grad():
                return loss().item()
        num = numeric_grad(f, t.data, indices=idx)
        ana = t.grad.reshape(-1)[idx]
        assert max_rel_error(ana, [num[i] for i in idx]) < 1e-4, name
