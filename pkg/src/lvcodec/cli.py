"""Command line entry points: encode, decode, train, eval, bdrate.

Every stats line is a single ``key=value`` record. Exit codes: 0 success,
1 internal error, 2 usage or input error. Outputs are written to a temporary
file and renamed into place, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .codecnets import LAMBDAS, atomic_write
from .evalkit import (
    BDRateError,
    RDCurve,
    RDPoint,
    VideoClip,
    bd_rate,
    load_clip,
    ms_ssim,
    plot_rd_curves,
    psnr,
    read_rd_csv,
    write_clip,
    write_rd_csv,
)
from .pipeline import decode_sequence, encode_sequence

log = logging.getLogger("lvcodec")


class InputError(ValueError):
    """Bad paths or arguments detected before any work starts."""


def _record(**fields) -> str:
    parts = []
    for k, v in fields.items():
        if isinstance(v, float):
            v = f"{v:.6f}"
        parts.append(f"{k}={v}")
    return " ".join(parts)


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {p}")
    return p


def _weights_file(path, lambda_index: int | None) -> Path:
    """A weights file, or ``lambda<i>.lvw`` inside a weights directory."""
    p = _existing(path, "weights")
    if p.is_dir():
        if lambda_index is None:
            raise InputError(f"{p} is a directory; pass --lambda-index to pick a model")
        p = _existing(p / f"lambda{lambda_index}.lvw", "weights")
    return p


def _load_model(path):
    from .training import load_model

    return load_model(path)


def _quality(frames, recons) -> tuple[list[float], list[float]]:
    return ([psnr(a, b) for a, b in zip(frames, recons)],
            [ms_ssim(a, b) for a, b in zip(frames, recons)])


# --- encode / decode ------------------------------------------------------------------------

def cmd_encode(args) -> int:
    src = _existing(args.input, "input clip")
    wpath = _weights_file(args.weights, args.lambda_index)
    if args.output is None:
        raise InputError("encode needs --output")
    clip = load_clip(src)
    model = _load_model(wpath)
    enc = encode_sequence(clip.frames, model, gop=args.gop, intra=args.intra)
    atomic_write(args.output, enc.data)
    ps, ms = _quality(clip.frames, enc.reconstructions)
    for s, p, m in zip(enc.stats, ps, ms):
        print(_record(frame=s.index, type=s.frame_type.name, bits=s.bits, bpp=s.bpp, psnr=p, ms_ssim=m))
    print(_record(total=len(enc.stats), bytes=len(enc.data), bpp=enc.bpp, psnr=float(np.mean(ps)),
                  ms_ssim=float(np.mean(ms))))
    return 0


def cmd_decode(args) -> int:
    src = _existing(args.input, "bitstream")
    wpath = _weights_file(args.weights, args.lambda_index)
    if args.output is None:
        raise InputError("decode needs --output (.y4m file or PNG directory)")
    ref = load_clip(_existing(args.reference, "reference clip")) if args.reference else None
    data = src.read_bytes()
    model = _load_model(wpath)
    dec = decode_sequence(data, model)
    header = dec.header
    if len(dec.frames) != header.frame_count:
        raise RuntimeError(f"decoded {len(dec.frames)} frames, header says {header.frame_count}")
    write_clip(VideoClip(dec.frames, header.width, header.height, name=src.stem), args.output)
    fields = dict(frames=len(dec.frames), width=header.width, height=header.height,
                  bpp=8 * len(data) / (header.width * header.height * header.frame_count))
    if ref is not None:
        if len(ref) != len(dec.frames):
            raise InputError(f"reference has {len(ref)} frames, bitstream {len(dec.frames)}")
        ps, ms = _quality(ref.frames, dec.frames)
        fields.update(psnr=float(np.mean(ps)), ms_ssim=float(np.mean(ms)))
    print(_record(**fields))
    return 0


# --- train ------------------------------------------------------------------------------------

def cmd_train(args) -> int:
    from .training import CurriculumConfig, RDLossConfig, synthetic_dataset, train_codec

    if args.output is None:
        raise InputError("train needs --output")
    extra = [load_clip(_existing(p, "training clip")) for p in args.input or []]
    lam_index = 2 if args.lambda_index is None else args.lambda_index
    clips = synthetic_dataset(np.random.default_rng(args.seed), n_clips=args.clips, size=args.crop)
    clips += [c.frames for c in extra]
    cfg = CurriculumConfig(max_pframes=args.pframes, step_iters=args.step_iters, iters=args.iters,
                           batch_size=args.batch, lr=args.lr, seed=args.seed, crop=args.crop,
                           rate_warmup=args.rate_warmup)
    loss_cfg = RDLossConfig.from_index(lam_index, args.distortion)
    result = train_codec(clips, loss_cfg, cfg, me_iters=args.me_iters, log_every=args.log_every)
    result.model.weights.save(args.output)
    last = result.history[-1] if result.history else None
    print(_record(iters=result.iteration, lam=float(loss_cfg.lam), seed=args.seed,
                  loss=last.loss if last else float("nan"), skipped=result.skipped,
                  weights=Path(args.output).name))
    return 0


# --- eval / bdrate --------------------------------------------------------------------------------

def _eval_sequence(job) -> RDCurve:
    clip_path, weight_paths, gop = job
    clip = load_clip(clip_path)
    curve = RDCurve(clip.name)
    for i, wp in enumerate(weight_paths):
        model = _load_model(wp)
        enc = encode_sequence(clip.frames, model, gop=gop)
        ps, ms = _quality(clip.frames, enc.reconstructions)
        lam = model.weights.lam
        curve.add(float(lam) if lam is not None else float(i), RDPoint(enc.bpp, float(np.mean(ps)), float(np.mean(ms))))
    return curve


def _weight_set(paths) -> list[Path]:
    out = []
    for p in paths:
        p = _existing(p, "weights")
        if p.is_dir():
            found = sorted(p.glob("lambda*.lvw"))
            if not found:
                raise InputError(f"no lambda*.lvw files in {p}")
            out += found
        else:
            out.append(p)
    return out


def cmd_eval(args) -> int:
    if not args.input:
        raise InputError("eval needs at least one --input clip")
    if args.output is None:
        raise InputError("eval needs --output (CSV path)")
    clips = [_existing(p, "input clip") for p in args.input]
    weights = _weight_set(args.weights)
    jobs = [(c, weights, args.gop) for c in clips]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            curves = list(pool.map(_eval_sequence, jobs))
    else:
        curves = [_eval_sequence(j) for j in jobs]
    out = Path(args.output)
    write_rd_csv(curves, out)
    figures = [plot_rd_curves(curves, out.with_name(f"{out.stem}_{m}.svg"), metric=m) for m in ("psnr", "ms_ssim")]
    for c in curves:
        for lam, p in zip(c.lambdas, c.points):
            print(_record(sequence=c.sequence, lam=float(lam), bpp=p.bpp, psnr=p.psnr, ms_ssim=p.ms_ssim))
    print(_record(csv=out.name, figures=",".join(f.name for f in figures)))
    return 0


def cmd_bdrate(args) -> int:
    anchor = read_rd_csv(_existing(args.anchor, "anchor CSV"))
    test = read_rd_csv(_existing(args.test, "test CSV"))
    common = [s for s in anchor if s in test]
    if not common:
        raise InputError(f"no sequence appears in both {args.anchor} and {args.test}")
    rows = []
    for seq in common:
        ra, pa, ma = anchor[seq].arrays()
        rt, pt, mt = test[seq].arrays()
        try:
            rows.append((seq, bd_rate(ra, pa, rt, pt), bd_rate(ra, ma, rt, mt)))
        except BDRateError as exc:
            raise BDRateError(f"sequence {seq}: {exc}") from None
    rows.append(("average", float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows]))))
    lines = ["sequence,bd_rate_psnr,bd_rate_ms_ssim"]
    for seq, bp, bm in rows:
        lines.append(f"{seq},{bp:.3f},{bm:.3f}")
        print(f"sequence={seq} bd_rate_psnr={bp:.3f} bd_rate_ms_ssim={bm:.3f}")
    if args.output:
        atomic_write(args.output, ("\n".join(lines) + "\n").encode("utf-8"))
    return 0


# --- entry point ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lvcodec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, weights=True):
        p.add_argument("--input", help="input path")
        p.add_argument("--output", help="output path")
        if weights:
            p.add_argument("--weights", required=True, help="weights file, or directory of lambda<i>.lvw")
        p.add_argument("--lambda-index", type=int, choices=range(len(LAMBDAS)), default=None)

    p = sub.add_parser("encode", help="code a clip (Y4M or PNG directory) into a bitstream")
    common(p)
    p.add_argument("--gop", type=int, default=0, help="intra period; 0 codes one I-frame then all P-frames")
    p.add_argument("--intra", choices=("stored", "png"), default="stored")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct a clip from a bitstream")
    common(p)
    p.add_argument("--reference", help="source clip; adds PSNR and MS-SSIM to the stats line")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train a model on synthetic clips (plus optional --input clips)")
    p.add_argument("--input", action="append", help="extra training clip; may repeat")
    p.add_argument("--output", help="weights file to write")
    p.add_argument("--lambda-index", type=int, choices=range(len(LAMBDAS)), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--pframes", type=int, default=3, help="maximum P-frames per training clip")
    p.add_argument("--step-iters", type=int, default=500, help="iterations between clip extensions")
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--crop", type=int, default=32)
    p.add_argument("--clips", type=int, default=24, help="number of synthetic clips")
    p.add_argument("--me-iters", type=int, default=1500, help="motion-estimation warm-up iterations")
    p.add_argument("--rate-warmup", type=int, default=500, help="iterations over which the rate weight ramps to 1")
    p.add_argument("--distortion", choices=("mse", "ms_ssim"), default="mse")
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="RD points for clips at every weight set; CSV plus SVG plots")
    p.add_argument("--input", action="append", help="clip to evaluate; may repeat")
    p.add_argument("--output", help="CSV path; figures are written next to it")
    p.add_argument("--weights", action="append", required=True, help="weights file or directory; may repeat")
    p.add_argument("--gop", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="sequences coded in parallel")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", help="BD-rate of a test RD CSV against an anchor RD CSV")
    p.add_argument("anchor")
    p.add_argument("test")
    p.add_argument("--output", help="write the table as CSV")
    p.set_defaults(func=cmd_bdrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        # bad paths, malformed clips, bitstreams, weights or curves
        print(f"lvcodec: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"lvcodec: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
