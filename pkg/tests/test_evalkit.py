import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from lvcodec.codecnets import CodecModel
from lvcodec.evalkit import (
    BDRateError,
    ClipFormatError,
    RDCurve,
    RDPoint,
    VideoClip,
    bd_rate,
    bd_rate_trapezoid,
    count_flops,
    count_params,
    encode_y4m,
    load_png_dir,
    load_y4m,
    ms_ssim,
    ms_ssim_scales,
    plot_rd_curves,
    psnr,
    read_rd_csv,
    write_png_dir,
    write_rd_csv,
    write_y4m,
)
from lvcodec.layers import Conv2d, ParamStore
from lvcodec.tensor import conv_flops


def natural_image(seed=0, size=192):
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random((size, size)), 2.5)
    img = (img - img.min()) / (img.max() - img.min())
    return np.stack([img, img ** 1.3, 1 - img])


# --- PSNR -------------------------------------------------------------------------------------

def test_psnr_identical_is_cap():
    a = np.random.default_rng(0).random((3, 8, 8))
    assert psnr(a, a) == 100.0


def test_psnr_uniform_error():
    a = np.full((3, 16, 16), 0.5)
    assert psnr(a, a + 1 / 255) == pytest.approx(20 * math.log10(255), abs=1e-4)
    assert psnr(a, a + 1 / 255) == pytest.approx(48.1308, abs=1e-4)


def test_psnr_symmetric_and_dims():
    rng = np.random.default_rng(1)
    a, b = rng.random((3, 9, 7)), rng.random((3, 9, 7))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(a, b[:, :8])


# --- MS-SSIM -------------------------------------------------------------------------------------

def test_ms_ssim_identical_is_exactly_one():
    a = natural_image()
    assert ms_ssim(a, a) == 1.0


def test_ms_ssim_inverted_binary_low():
    rng = np.random.default_rng(2)
    a = (rng.random((1, 192, 192)) > 0.5).astype(float)
    assert ms_ssim(a, 1 - a) < 0.2


def test_ms_ssim_monotone_in_noise():
    a = natural_image(3)
    rng = np.random.default_rng(3)
    noise = rng.standard_normal(a.shape)
    scores = [ms_ssim(a, a + s * noise) for s in (0.005, 0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(scores, scores[1:]))


def test_ms_ssim_symmetric():
    a = natural_image(4, 64)
    b = a + np.random.default_rng(4).normal(0, 0.05, a.shape)
    assert ms_ssim(a, b) == pytest.approx(ms_ssim(b, a), abs=1e-12)


def test_ms_ssim_scale_rule():
    assert ms_ssim_scales(160, 200) == 5
    assert ms_ssim_scales(159, 200) == 4
    assert ms_ssim_scales(32, 32) == 2
    assert ms_ssim_scales(6, 6) == 1
    a = np.random.default_rng(0).random((3, 6, 6))
    assert 0 < ms_ssim(a, a * 0.9) <= 1


# --- BD-rate ---------------------------------------------------------------------------------------

ANCHOR_R = np.array([0.05, 0.1, 0.2, 0.4, 0.8])
ANCHOR_Q = np.array([30.0, 32.5, 35.0, 37.0, 38.5])


def test_bd_rate_identical_zero():
    assert bd_rate(ANCHOR_R, ANCHOR_Q, ANCHOR_R, ANCHOR_Q) == pytest.approx(0.0, abs=1e-9)


def test_bd_rate_half_rate():
    assert bd_rate(ANCHOR_R, ANCHOR_Q, ANCHOR_R / 2, ANCHOR_Q) == pytest.approx(-50.0, abs=1e-9)


def random_curve(rng):
    q = np.sort(rng.uniform(28, 42, 5))
    while np.min(np.diff(q)) < 0.5:
        q = np.sort(rng.uniform(28, 42, 5))
    r = np.exp(np.sort(rng.uniform(-4, 1, 5)))
    return r, q


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bd_rate_matches_trapezoid_oracle_and_is_reciprocal(seed):
    rng = np.random.default_rng(seed)
    (ra, qa), (rb, qb) = random_curve(rng), random_curve(rng)
    try:
        fast = bd_rate(ra, qa, rb, qb)
    except BDRateError:
        return
    assert abs(fast - bd_rate_trapezoid(ra, qa, rb, qb)) < 0.1
    back = bd_rate(rb, qb, ra, qa)
    assert 0.999 <= (1 + fast / 100) * (1 + back / 100) <= 1.001


def test_bd_rate_errors():
    with pytest.raises(BDRateError, match="overlap"):
        bd_rate(ANCHOR_R, ANCHOR_Q, ANCHOR_R, ANCHOR_Q + 20)
    with pytest.raises(BDRateError, match="4 points"):
        bd_rate(ANCHOR_R[:3], ANCHOR_Q[:3], ANCHOR_R, ANCHOR_Q)


# --- complexity -------------------------------------------------------------------------------------

def test_single_conv_params():
    store = ParamStore()
    Conv2d(store, "c", 3, 64)
    assert count_params(store) == 1792 == 3 * 64 * 9 + 64


def test_stride2_conv_flops_quarter():
    full = Conv2d(ParamStore(), "a", 16, 16).flops(64, 64)
    half = Conv2d(ParamStore(), "b", 16, 16, stride=2).flops(64, 64)
    assert half * 4 == full == conv_flops(16, 16, 3, 64, 64)


def test_model_counters():
    m = CodecModel(seed=0)
    assert count_params(m) == count_params(m.weights) == sum(t.size for t in m.weights.tensors.values())
    assert count_flops(m, 64, 48) == m.flops(48, 64) == count_flops(m.weights, 64, 48)


# --- Y4M and PNG --------------------------------------------------------------------------------------

def y4m_fixture(chroma="420jpeg", frames=2, w=4, h=4, seed=0):
    rng = np.random.default_rng(seed)
    cw, ch = (w // 2, h // 2) if chroma.startswith("420") else (w, h)
    parts = [f"YUV4MPEG2 W{w} H{h} F25:1 Ip A1:1 C{chroma}\n".encode()]
    planes = []
    for _ in range(frames):
        y = rng.integers(60, 200, (h, w), dtype=np.uint8)
        u = rng.integers(110, 146, (ch, cw), dtype=np.uint8)
        v = rng.integers(110, 146, (ch, cw), dtype=np.uint8)
        planes.append((y, u, v))
        parts += [b"FRAME\n", y.tobytes(), u.tobytes(), v.tobytes()]
    return b"".join(parts), planes


def test_y4m_minimal_fixture(tmp_path):
    data, planes = y4m_fixture()
    p = tmp_path / "a.y4m"
    p.write_bytes(data)
    clip = load_y4m(p)
    assert len(clip) == 2 and (clip.width, clip.height) == (4, 4)
    assert clip.fps == "25:1" and clip.colorspace == "yuv420"
    # R = Y + 1.402 (Cr - 128), chroma replicated over its 2x2 block
    y, u, v = planes[0]
    r = (y[0, 0] + 1.402 * (int(v[0, 0]) - 128)) / 255
    assert clip.frames[0][0, 0, 0] == pytest.approx(r, abs=1e-6)


def test_y4m_444_accepted(tmp_path):
    data, planes = y4m_fixture("444")
    p = tmp_path / "b.y4m"
    p.write_bytes(data)
    clip = load_y4m(p)
    assert clip.colorspace == "yuv444"
    y, u, v = planes[1]
    b = (y[2, 3] + 1.772 * (int(u[2, 3]) - 128)) / 255
    assert clip.frames[1][2, 2, 3] == pytest.approx(b, abs=1e-6)


def test_y4m_truncated_names_frame(tmp_path):
    data, _ = y4m_fixture(frames=3)
    p = tmp_path / "c.y4m"
    p.write_bytes(data[:-5])
    with pytest.raises(ClipFormatError, match="frame 2.*byte"):
        load_y4m(p)


def test_y4m_bad_header(tmp_path):
    p = tmp_path / "d.y4m"
    p.write_bytes(b"YUV4MPEG2 W4 H4 Cmono\nFRAME\n")
    with pytest.raises(ClipFormatError, match="colourspace"):
        load_y4m(p)
    p.write_bytes(b"RIFF....")
    with pytest.raises(ClipFormatError, match="byte 0"):
        load_y4m(p)


@pytest.mark.parametrize("chroma", ["420jpeg", "444"])
def test_y4m_load_write_load_lossless(tmp_path, chroma):
    data, _ = y4m_fixture(chroma, frames=3, w=8, h=6, seed=5)
    p = tmp_path / "in.y4m"
    p.write_bytes(data)
    clip = load_y4m(p)
    out = tmp_path / "out.y4m"
    write_y4m(clip, out, chroma[:3])
    again = load_y4m(out)
    assert out.read_bytes() == data
    for a, b in zip(clip.frames, again.frames):
        np.testing.assert_array_equal(np.round(a * 255), np.round(b * 255))


def test_png_dir_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    frames = [(rng.integers(0, 256, (3, 5, 7)) / 255.0).astype(np.float32) for _ in range(3)]
    clip = VideoClip(frames, 7, 5)
    write_png_dir(clip, tmp_path / "pngs")
    back = load_png_dir(tmp_path / "pngs")
    for a, b in zip(frames, back.frames):
        np.testing.assert_array_equal(np.round(a * 255), np.round(b * 255))


def test_png_dir_mixed_dims(tmp_path):
    write_png_dir(VideoClip([np.zeros((3, 4, 4), np.float32)], 4, 4), tmp_path)
    write_png_dir(VideoClip([np.zeros((3, 4, 4), np.float32)] * 2, 4, 4), tmp_path / "x")
    (tmp_path / "x" / "frame_00001.png").rename(tmp_path / "frame_00009.png")
    from PIL import Image
    Image.new("RGB", (5, 4)).save(tmp_path / "frame_00010.png")
    with pytest.raises(ClipFormatError, match="frame 2"):
        load_png_dir(tmp_path)


def test_encode_y4m_header():
    clip = VideoClip([np.zeros((3, 2, 2), np.float32)], 2, 2)
    assert encode_y4m(clip).startswith(b"YUV4MPEG2 W2 H2 F30:1")


# --- CSV and plots -------------------------------------------------------------------------------------

def test_rd_csv_round_trip_and_svg(tmp_path):
    c = RDCurve("seqA")
    for lam, (r, q) in zip((512, 1024, 2048, 4096), zip(ANCHOR_R, ANCHOR_Q)):
        c.add(lam, RDPoint(r, q, 0.9))
    write_rd_csv([c], tmp_path / "rd.csv")
    text = (tmp_path / "rd.csv").read_text()
    assert text.splitlines()[0] == "sequence,lambda,bpp,psnr,ms_ssim"
    back = read_rd_csv(tmp_path / "rd.csv")["seqA"]
    assert back.lambdas == [512, 1024, 2048, 4096]
    np.testing.assert_allclose(back.arrays()[0], ANCHOR_R[:4])
    svg = plot_rd_curves([back], tmp_path / "rd.svg")
    assert svg.read_text().lstrip().startswith("<?xml")


def test_rd_point_invariants():
    with pytest.raises(ValueError):
        RDPoint(-1.0, 30.0, 0.9)
    with pytest.raises(ValueError):
        RDPoint(0.1, 30.0, 1.5)
