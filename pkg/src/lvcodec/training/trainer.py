"""Training loop: P-frame curriculum, ME warm-up and checkpoints."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..codecnets import LAMBDAS, Buffers, CodecModel, ModelWeights
from ..codecnets.weights import atomic_write, deserialize_tensors, serialize_tensors
from ..layers import ParamStore
from ..pipeline.intra import from_uint8, to_uint8
from ..tensor import Tensor
from .data import ClipSampler, smooth_texture, _shift
from .losses import RDLossConfig, rd_loss
from .optim import Adam

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class CurriculumConfig:
    initial_pframes: int = 1
    step_iters: int = 500
    max_pframes: int = 3
    batch_size: int = 1
    iters: int = 2000
    lr: float = 1e-4
    seed: int = 0
    crop: int | None = 32
    quant: str = "noise"
    rate_warmup: int = 0

    def __post_init__(self):
        if self.step_iters <= 0:
            raise ValueError("step_iters must be > 0")
        if not 1 <= self.initial_pframes <= self.max_pframes:
            raise ValueError("need 1 <= initial_pframes <= max_pframes")
        if self.quant not in ("noise", "ste"):
            raise ValueError(f"training quantization must be noise or ste, got {self.quant!r}")


def pframes_at(iteration: int, cfg: CurriculumConfig) -> int:
    """P-frames per training clip at ``iteration``; never decreases."""
    return min(cfg.initial_pframes + iteration // cfg.step_iters, cfg.max_pframes)


def rate_weight_at(iteration: int, cfg: CurriculumConfig) -> float:
    """Weight on the rate term, ramped linearly from 0 over ``rate_warmup``
    iterations so the decoders learn to use the latents before rate pressure
    can shrink them below the quantization step."""
    if cfg.rate_warmup <= 0:
        return 1.0
    return min(1.0, iteration / cfg.rate_warmup)


def clip_length_schedule(cfg: CurriculumConfig, iters: int | None = None, start: int = 0) -> list[int]:
    n = cfg.iters if iters is None else iters
    return [1 + pframes_at(i, cfg) for i in range(start, start + n)]


def _intra(frame: np.ndarray, dtype) -> Tensor:
    return Tensor(from_uint8(to_uint8(frame), dtype))


def forward_clip(model: CodecModel, frames: list[np.ndarray], rng, quant: str = "noise", predict: bool = True):
    """Differentiable pass over one batch of clips: the first frame is
    intra-coded (8-bit), the rest are P-frames. Returns (originals,
    reconstructions, total rate bits, per-frame results)."""
    buf = Buffers.from_intra(_intra(frames[0], model.dtype))
    originals, recons, results = [], [], []
    rate = None
    mode = "train" if quant == "noise" else quant
    for x in frames[1:]:
        xt = Tensor(np.asarray(x, dtype=model.dtype))
        out = model.forward(xt, buf, mode, rng, predict=predict)
        buf = out.buffers
        originals.append(xt)
        recons.append(out.x_hat)
        results.append(out)
        rate = out.rate if rate is None else rate + out.rate
    return originals, recons, rate, results


@dataclass
class StepResult:
    loss: float
    distortion: float
    bpp: float
    pframes: int


def train_step(model: CodecModel, opt: Adam, batch: list[np.ndarray], loss_cfg: RDLossConfig, rng,
               quant: str = "noise", rate_weight: float = 1.0) -> StepResult:
    """One joint gradient step through every network."""
    opt.zero_grad()
    originals, recons, rate, _ = forward_clip(model, batch, rng, quant)
    loss, d, bpp = rd_loss(originals, recons, rate, loss_cfg)
    if rate_weight != 1.0:
        loss = d * loss_cfg.lam + bpp * rate_weight
    if not np.isfinite(loss.item()):
        raise TrainingError(f"non-finite loss {loss.item()} (distortion {d.item()}, bpp {bpp.item()}, "
                            f"{len(batch) - 1} P-frames, step {opt.step_count})")
    T.backward(loss)
    opt.step()
    return StepResult(loss.item(), d.item(), bpp.item(), len(batch) - 1)


def _iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration])


@dataclass
class TrainResult:
    model: CodecModel
    opt: Adam
    history: list[StepResult] = field(default_factory=list)
    skipped: int = 0
    iteration: int = 0


def run_curriculum(clips, loss_cfg: RDLossConfig, cfg: CurriculumConfig, model: CodecModel | None = None,
                   opt: Adam | None = None, start: int = 0, log_every: int = 100, stop: int | None = None) -> TrainResult:
    """Train from iteration ``start`` to ``cfg.iters`` (or ``stop``).

    Every iteration draws its data and noise from an RNG keyed on
    (seed, iteration), so resuming from a checkpoint repeats exactly the
    run that was interrupted.
    """
    model = model or CodecModel(seed=cfg.seed)
    if loss_cfg.lam in LAMBDAS:
        model.weights.lambda_index = LAMBDAS.index(int(loss_cfg.lam))
    opt = opt or Adam(model.weights, lr=cfg.lr)
    sampler = ClipSampler(clips, cfg.crop)
    end = cfg.iters if stop is None else stop
    result = TrainResult(model, opt, iteration=start)
    skipped_by_len = {}
    t0 = time.time()
    for it in range(start, end):
        length = 1 + pframes_at(it, cfg)
        if length not in skipped_by_len:
            _, skipped_by_len[length] = sampler.eligible(length)
            if skipped_by_len[length]:
                log.warning("%d clips too short for %d frames, skipped", skipped_by_len[length], length)
        rng = _iteration_rng(cfg.seed, it)
        batch = sampler.sample(rng, length, cfg.batch_size)
        step = train_step(model, opt, batch, loss_cfg, rng, cfg.quant, rate_weight_at(it, cfg))
        result.history.append(step)
        result.iteration = it + 1
        if log_every and (it + 1) % log_every == 0:
            recent = result.history[-log_every:]
            log.info("iter %d  pframes %d  loss %.4f  mse %.5f  bpp %.4f  (%.1fs)", it + 1, step.pframes,
                     np.mean([s.loss for s in recent]), np.mean([s.distortion for s in recent]),
                     np.mean([s.bpp for s in recent]), time.time() - t0)
    result.skipped = max(skipped_by_len.values(), default=0)
    return result


# --- motion estimation warm-up -------------------------------------------------------------

def translation_pair(rng, size: int = 32, max_shift: float = 3.0, canvas: int = 96):
    """(cur, ref, flow) with ref content moved by a random global shift.

    Flow follows the warp convention ``warp(ref, flow) ~ cur``.
    """
    tex = smooth_texture(rng, canvas, sigma=rng.uniform(1.0, 2.5))
    dy, dx = np.round(rng.uniform(-max_shift, max_shift, 2) * 2) / 2
    oy, ox = rng.integers(0, canvas - size + 1, 2)
    ref = tex[:, oy : oy + size, ox : ox + size]
    cur = _shift(tex, dy, dx)[:, oy : oy + size, ox : ox + size]
    flow = np.empty((2, size, size))
    flow[0], flow[1] = -dx, -dy
    return cur.astype(np.float32), ref.astype(np.float32), flow.astype(np.float32)


def me_endpoint_error(model: CodecModel, cur, ref, flow, border: int = 4) -> float:
    with T.no_grad():
        v = model.me_estimate(Tensor(cur[None].astype(model.dtype)), Tensor(ref[None].astype(model.dtype))).data[0]
    d = v - flow
    b = border
    return float(np.sqrt((d[:, b:-b, b:-b] ** 2).sum(axis=0)).mean())


def pretrain_me(model: CodecModel, iters: int = 1500, seed: int = 0, size: int = 32, batch: int = 4,
                lr: float = 2e-3, border: int = 4) -> list[float]:
    """Supervised flow regression on synthetic global translations.

    Stands in for pretrained flow weights; only ME parameters are updated.
    """
    me_params = ParamStore(dtype=model.dtype)
    me_params.tensors = {k: t for k, t in model.weights.items() if k.startswith("me.")}
    opt = Adam(me_params, lr=lr)
    losses = []
    b = border
    for it in range(iters):
        rng = _iteration_rng(seed + 7919, it)
        pairs = [translation_pair(rng, size) for _ in range(batch)]
        cur = Tensor(np.stack([p[0] for p in pairs]).astype(model.dtype))
        ref = Tensor(np.stack([p[1] for p in pairs]).astype(model.dtype))
        gt = Tensor(np.stack([p[2] for p in pairs]).astype(model.dtype))
        opt.zero_grad()
        v = model.me_estimate(cur, ref)
        loss = T.mean(((v - gt) ** 2)[:, :, b:-b, b:-b])
        T.backward(loss)
        opt.step()
        losses.append(loss.item())
    for t in model.weights.tensors.values():
        t.grad = None
    return losses


def train_codec(clips, loss_cfg: RDLossConfig, cfg: CurriculumConfig, me_iters: int = 1500,
                log_every: int = 100) -> TrainResult:
    """Fresh model from ``cfg.seed``: ME warm-up, then the joint curriculum."""
    model = CodecModel(seed=cfg.seed)
    if me_iters > 0:
        pretrain_me(model, iters=me_iters, seed=cfg.seed)
    return run_curriculum(clips, loss_cfg, cfg, model=model, log_every=log_every)


# --- checkpoints ---------------------------------------------------------------------------

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".opt")


def save_checkpoint(path, model: CodecModel, opt: Adam, iteration: int) -> None:
    """Weights file at ``path`` plus optimizer state in ``path.opt`` (same container)."""
    arrays = opt.state_arrays()
    arrays["curriculum.iteration"] = np.array([iteration], np.float32)
    arrays["adam.hyper"] = np.array([opt.lr, opt.beta1, opt.beta2, opt.eps], np.float32)
    model.weights.save(path)
    atomic_write(sidecar_path(path), serialize_tensors(arrays, model.weights.lambda_index))


def _weights_from(arrays, lam) -> ModelWeights:
    w = ModelWeights(lambda_index=lam)
    for k, a in arrays.items():
        w.tensors[k] = Tensor(a, requires_grad=True)
    return w


def load_model(path) -> CodecModel:
    """Model built from a weights file; names and shapes are validated."""
    arrays, lam = deserialize_tensors(Path(path).read_bytes())
    return CodecModel(_weights_from(arrays, lam))


def load_checkpoint(path, lr: float | None = None) -> tuple[CodecModel, Adam, int]:
    model = load_model(path)
    arrays, _ = deserialize_tensors(sidecar_path(path).read_bytes())
    hyper = arrays["adam.hyper"]
    opt = Adam(model.weights, lr=float(hyper[0]) if lr is None else lr, beta1=float(hyper[1]),
               beta2=float(hyper[2]), eps=float(hyper[3]))
    opt.load_state(arrays)
    return model, opt, int(arrays["curriculum.iteration"][0])
