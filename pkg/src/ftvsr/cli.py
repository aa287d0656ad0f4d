"""Command-line entry points: degrade | train | eval | spectra | gradcheck.

Frames move between commands as binary PPM sequences; checkpoints and
tensors use the FTT format. Every command echoes its resolved config into
the output directory and is deterministic given that config, so two runs
with the same flags produce byte-identical artifacts. Diagnostics go to
stderr; exit code 0 means success.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from ftvsr import gradcheck as gc
from ftvsr.config import echo_config, resolve_config
from ftvsr.degrade import DegradationSpec, degrade, spectral_curve
from ftvsr.metrics import EvalReport, evaluate_sequence
from ftvsr.model import (bicubic, forward_sequence, init_model, load_model,
                         save_model)
from ftvsr.optim import Adam, cosine_lr, train_step
from ftvsr.ppm import PPMError, frame_paths, read_sequence, write_sequence
from ftvsr.tensor import NumericsError, Tensor


def _fail(message: str, code: int = 2) -> int:
    print(f"ftvsr: error: {message}", file=sys.stderr)
    return code


def discover_clips(root: str) -> list[tuple[str, str]]:
    """(name, dir) pairs: the root itself if it holds frames, else subdirs."""
    if not os.path.isdir(root):
        raise PPMError(f"{root} is not a directory")
    if frame_paths(root):
        return [(os.path.basename(os.path.normpath(root)), root)]
    clips = []
    for name in sorted(os.listdir(root)):
        path = os.path.join(root, name)
        if os.path.isdir(path) and frame_paths(path):
            clips.append((name, path))
    if not clips:
        raise PPMError(f"no PPM frames or clip subdirectories under {root}")
    return clips


# ---------------------------------------------------------------------------
# degrade
# ---------------------------------------------------------------------------

def cmd_degrade(args: argparse.Namespace) -> int:
    config = resolve_config(args.config, {"seed": args.seed})
    spec = DegradationSpec(
        scale=args.scale,
        kernel_sigma=args.kernel_sigma,
        kernel_size=args.kernel_size,
        noise_sigma=args.noise_sigma,
        quant_q=args.quant_q,
        proxy_block=args.proxy_block)
    clips = discover_clips(args.input)
    os.makedirs(args.output, exist_ok=True)
    echo_config(config, args.output)
    with open(os.path.join(args.output, "degrade_spec.txt"), "w") as fh:
        fh.write(spec.to_manifest())
    single = len(clips) == 1 and clips[0][1] == os.path.normpath(args.input)
    for index, (name, clip_dir) in enumerate(clips):
        frames = read_sequence(clip_dir)
        out = degrade(frames, spec, seed=config.seed + 7919 * index)
        target = args.output if single else os.path.join(args.output, name)
        write_sequence(target, out)
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_pairs(lr_root: str, hr_root: str) -> list[tuple[str, np.ndarray, np.ndarray]]:
    lr_clips = dict(discover_clips(lr_root))
    hr_clips = dict(discover_clips(hr_root))
    names = sorted(set(lr_clips) & set(hr_clips))
    if not names:
        raise PPMError(f"no clip names shared between {lr_root} and {hr_root}")
    pairs = []
    for name in names:
        pairs.append((name, read_sequence(lr_clips[name]), read_sequence(hr_clips[name])))
    return pairs


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {name: getattr(args, name) for name in (
        "seed", "scale", "block_size", "token_edge", "scheme", "attention",
        "head_count", "hidden_channels", "phi_width", "base_lr", "total_steps",
        "checkpoint_every")}
    config = resolve_config(args.config, overrides)
    pairs = _load_pairs(args.lr_root, args.hr_root)
    t, c, h, w = pairs[0][1].shape
    for name, lr_seq, hr_seq in pairs:
        if lr_seq.shape[1:] != (c, h, w):
            raise PPMError(f"clip {name}: LR size {lr_seq.shape[1:]} != {(c, h, w)}")
        if hr_seq.shape[2:] != (h * config.scale, w * config.scale):
            raise PPMError(f"clip {name}: HR size {hr_seq.shape[2:]} is not "
                           f"{config.scale}x the LR size")

    os.makedirs(args.out, exist_ok=True)
    echo_config(config, args.out)
    checkpoint_dir = os.path.join(args.out, "checkpoint")

    start_step = 0
    if args.resume:
        params, meta, extra = load_model(args.resume)
        start_step = int(meta.get("step", 0))
    else:
        params = init_model(
            scale=config.scale, block_size=config.block_size,
            token_edge=config.token_edge, channels=c, lr_height=h, lr_width=w,
            scheme=config.scheme, attention_variant=config.attention,
            head_count=config.head_count, hidden_channels=config.hidden_channels,
            phi_width=config.phi_width, seed=config.seed)
        extra = {}

    names = list(params.named_parameters().keys())
    optimizer = Adam(params.parameters())
    if args.resume and extra:
        optimizer.load_state(names, extra, start_step)

    def save(step: int, directory: str) -> None:
        save_model(directory, params, extra_meta={"step": str(step)},
                   extra_tensors=optimizer.state_tensors(names))

    log_path = os.path.join(args.out, "loss_log.csv")
    mode = "a" if (args.resume and os.path.exists(log_path)) else "w"
    with open(log_path, mode, newline="") as log:
        writer = csv.writer(log, lineterminator="\n")
        if mode == "w":
            writer.writerow(["step", "lr", "loss"])
        for step in range(start_step, config.total_steps):
            name, lr_seq, hr_seq = pairs[step % len(pairs)]
            lr_value = cosine_lr(config.base_lr, step, config.total_steps)
            try:
                loss = train_step((Tensor(lr_seq), Tensor(hr_seq)), params,
                                  optimizer, lr_value)
            except NumericsError as exc:
                print(f"ftvsr: train aborted at step {step} on clip {name}: {exc}; "
                      f"last-good checkpoint kept at {checkpoint_dir}", file=sys.stderr)
                return 3
            writer.writerow([step, f"{lr_value:.10e}", f"{loss:.10e}"])
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                save(step + 1, checkpoint_dir)
    save(config.total_steps, checkpoint_dir)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _write_report(path: str, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(report.to_csv())


def cmd_eval(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    hr_clips = dict(discover_clips(args.hr_root))
    summary: list[tuple[str, EvalReport]] = []

    if args.compare:
        cmp_clips = dict(discover_clips(args.compare))
        names = sorted(set(hr_clips) & set(cmp_clips))
        if not names:
            return _fail(f"no clip names shared between {args.compare} and {args.hr_root}")
        for name in names:
            report = evaluate_sequence(read_sequence(cmp_clips[name]),
                                       read_sequence(hr_clips[name]),
                                       channel_mode=args.channel_mode)
            _write_report(os.path.join(args.out, f"{name}.csv"), report)
            summary.append((name, report))
    else:
        if not args.checkpoint or not args.lr_root:
            return _fail("eval needs either --compare or both --checkpoint and --lr-root")
        if not os.path.isdir(args.checkpoint) or \
                not os.path.exists(os.path.join(args.checkpoint, "manifest.txt")):
            return _fail(f"checkpoint not found at {args.checkpoint}")
        params, _, _ = load_model(args.checkpoint)
        lr_clips = dict(discover_clips(args.lr_root))
        names = sorted(set(hr_clips) & set(lr_clips))
        if not names:
            return _fail(f"no clip names shared between {args.lr_root} and {args.hr_root}")
        for name in names:
            lr_seq = read_sequence(lr_clips[name])
            hr_seq = read_sequence(hr_clips[name])
            outputs = forward_sequence(Tensor(lr_seq), params)
            sr = np.clip(np.stack([f.to_numpy() for f in outputs]), 0.0, 1.0)
            report = evaluate_sequence(sr, hr_seq, channel_mode=args.channel_mode)
            _write_report(os.path.join(args.out, f"{name}.csv"), report)
            summary.append((name, report))
            if args.baseline:
                base = np.stack([
                    np.clip(bicubic(Tensor(lr_seq[t]), params.scale).to_numpy(), 0, 1)
                    for t in range(lr_seq.shape[0])])
                base_report = evaluate_sequence(base, hr_seq,
                                                channel_mode=args.channel_mode)
                _write_report(os.path.join(args.out, f"{name}.baseline.csv"), base_report)
                summary.append((f"{name}.baseline", base_report))

    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip", "mean_psnr_db", "mean_ssim"])
        for name, report in summary:
            writer.writerow([name, f"{report.mean_psnr_db:.6f}", f"{report.mean_ssim:.6f}"])
    return 0


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def cmd_spectra(args: argparse.Namespace) -> int:
    if args.band_lo > args.band_hi:
        return _fail(f"band range invalid: lo {args.band_lo} > hi {args.band_hi}")
    clips = discover_clips(args.input)
    totals: np.ndarray | None = None
    bands: np.ndarray | None = None
    count = 0
    for _, clip_dir in clips:
        frames = read_sequence(clip_dir)
        for t in range(frames.shape[0]):
            bands, amps = spectral_curve(frames[t], args.band_lo, args.band_hi,
                                         block=args.proxy_block)
            totals = amps if totals is None else totals + amps
            count += 1
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["band", "mean_abs_amplitude"])
        for band, amp in zip(bands, totals / count):
            writer.writerow([int(band), f"{amp:.10e}"])
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = gc.run_op_suite(seed=args.seed)
    if args.self_test:
        loss_fn, inputs = gc.corrupted_case(seed=args.seed)
        err = gc.check(loss_fn, inputs)
        detected = err >= gc.DEFAULT_TOL
        results.append(gc.CheckResult("self_test_corrupted_rule_detected",
                                      err, detected))
    width = max(len(r.name) for r in results)
    all_ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  max_rel_err={r.max_rel_err:.3e}  {status}")
        all_ok &= r.passed
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftvsr",
        description="Frequency-domain video super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key=value config file (flags win)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("degrade", help="synthesize low-quality sequences")
    add_config(p)
    p.add_argument("--input", required=True, help="PPM clip dir or root of clips")
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--kernel-sigma", type=float, default=0.0)
    p.add_argument("--kernel-size", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--quant-q", type=float, default=0.0)
    p.add_argument("--proxy-block", type=int, default=8)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train the restorer on paired clips")
    add_config(p)
    p.add_argument("--lr-root", required=True)
    p.add_argument("--hr-root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--token-edge", type=int, default=None)
    p.add_argument("--scheme", choices=("sf", "tf", "joint", "ts", "st"), default=None)
    p.add_argument("--attention", choices=("fa", "dfa"), default=None)
    p.add_argument("--head-count", type=int, default=None)
    p.add_argument("--hidden-channels", type=int, default=None)
    p.add_argument("--phi-width", type=int, default=None)
    p.add_argument("--base-lr", type=float, default=None)
    p.add_argument("--total-steps", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM evaluation")
    add_config(p)
    p.add_argument("--hr-root", required=True)
    p.add_argument("--out", required=True, help="output directory for CSV reports")
    p.add_argument("--checkpoint")
    p.add_argument("--lr-root")
    p.add_argument("--compare", help="evaluate these frames directly against HR")
    p.add_argument("--baseline", action="store_true",
                   help="also report the bicubic upsampling baseline")
    p.add_argument("--channel-mode", choices=("rgb", "y"), default="rgb")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectra", help="radial amplitude-frequency curves")
    add_config(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--band-lo", type=int, required=True)
    p.add_argument("--band-hi", type=int, required=True)
    p.add_argument("--proxy-block", type=int, default=8)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--self-test", action="store_true",
                   help="also verify the checker flags a corrupted rule")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, NumericsError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
