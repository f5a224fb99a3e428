"""Command-line entry point: data generation, training, rollout, eval, gradcheck.

Commands:
  gen-data  --spec F --out D              phantom dataset from a spec file
  train     --config F [--resume C]       train; checkpoints + stats CSV
  rollout   --ckpt C (--case|--image) ... export frames as PNGs
  eval      --ckpt C --data D --out F     model-vs-baseline metric report
  gradcheck [--trials N] [--seed S]       finite-difference gradient check

TENCA_THREADS caps the worker count; --reproducible forces the
single-threaded deterministic mode (the current engine is serial either
way, so both simply pin the recorded thread count).
"""

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import backends, bptt, checkpoint, config as config_mod, core, data
from . import metrics, phantom, rng, training
from .errors import ConfigError, DataError, TencaError

STATS_NAME = "train_stats.csv"
REPORT_HEADER = ["epoch", "mean_loss", "grad_norm", "seconds"]


def _threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("TENCA_THREADS", "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"TENCA_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"TENCA_THREADS must be >= 1, got {n}")
    return n


def _load_png(path) -> np.ndarray:
    from PIL import Image
    with Image.open(path) as img:
        plane = np.asarray(img.convert("L"), dtype=np.float64)
    return plane / 255.0


def _save_png(path, image) -> None:
    from PIL import Image
    quantized = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    quantized = np.round(quantized * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path, format="PNG")


def cmd_gen_data(args) -> int:
    job = config_mod.load_phantom_job(args.spec)
    os.makedirs(args.out, exist_ok=True)
    cases, _ = phantom.generate_dataset(job.spec, job.n_cases,
                                        id_start=job.id_start)
    manifest_path = data.write_dataset(cases, args.out,
                                       delta_t_hint=job.delta_t_hint)
    total = sum(os.path.getsize(os.path.join(args.out, e.filename))
                for e in data.read_manifest(manifest_path).entries)
    print(f"wrote {len(cases)} cases ({job.spec.height}x{job.spec.width}, "
          f"{total / 1024:.0f} KiB payloads) to {args.out}")
    return 0


def _append_stats(path, stats) -> None:
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(REPORT_HEADER)
        writer.writerow([stats.epoch, f"{stats.mean_loss:.10g}",
                         f"{stats.grad_norm:.10g}", f"{stats.seconds:.3f}"])


def cmd_train(args) -> int:
    run = config_mod.load_run_config(args.config)
    if args.reproducible:
        run.reproducible = True
        run.threads = 1
    run.threads = min(run.threads, _threads_from_env(run.threads))
    cfg = run.train
    if not run.dataset:
        raise ConfigError("config has no [paths] dataset entry")
    _, dataset = data.read_dataset(run.dataset)
    if not dataset:
        raise DataError(f"dataset at {run.dataset} is empty")
    ckpt_dir = run.checkpoints or "."
    os.makedirs(ckpt_dir, exist_ok=True)
    stats_path = os.path.join(ckpt_dir, STATS_NAME)

    params = opt = None
    start_epoch = 0
    if args.resume:
        ck_cfg, params, opt, last_epoch = checkpoint.load_checkpoint(args.resume)
        if config_mod.train_config_hash(ck_cfg) != config_mod.train_config_hash(cfg):
            raise ConfigError(
                "refusing to resume: checkpoint was trained with a different "
                f"config (hash {config_mod.train_config_hash(ck_cfg)} vs "
                f"{config_mod.train_config_hash(cfg)})")
        start_epoch = last_epoch + 1
        print(f"resuming from {args.resume} at epoch {start_epoch}")

    def on_epoch(stats, cur_params, cur_opt):
        _append_stats(stats_path, stats)
        line = (f"epoch {stats.epoch}: loss {stats.mean_loss:.6e} "
                f"grad {stats.grad_norm:.3e} {stats.seconds:.1f}s")
        if stats.skipped_cases:
            line += f" ({stats.skipped_cases} cases skipped)"
        print(line)
        if (stats.epoch + 1) % run.checkpoint_every == 0:
            path = os.path.join(ckpt_dir, f"epoch_{stats.epoch:05d}.tnck")
            checkpoint.save_checkpoint(path, cfg, cur_params, cur_opt, stats.epoch)

    params, opt, all_stats = training.fit(
        dataset, cfg, params=params, opt=opt, start_epoch=start_epoch,
        full_horizon=run.full_horizon, on_epoch=on_epoch,
        log=lambda msg: print(msg, file=sys.stderr))
    final_epoch = all_stats[-1].epoch if all_stats else start_epoch - 1
    final = os.path.join(ckpt_dir, "final.tnck")
    checkpoint.save_checkpoint(final, cfg, params, opt, final_epoch)
    print(f"saved {final} (epoch {final_epoch})")
    return 0


def _rollout_steps(args, cfg) -> list:
    if args.all_steps:
        return list(range(1, cfg.n_steps + 1))
    if not args.times:
        raise ConfigError("give --times or --all-steps")
    steps = []
    for part in args.times.split(","):
        t = float(part)
        if t > cfg.horizon_s:
            raise ConfigError(
                f"time {t:g} s is beyond the horizon {cfg.horizon_s:g} s "
                f"({cfg.n_steps} steps x {cfg.delta_t_s:g} s)")
        steps.append(training.time_to_step(t, cfg.delta_t_s))
    return steps


def cmd_rollout(args) -> int:
    cfg, params, _, _ = checkpoint.load_checkpoint(args.ckpt)
    if args.case:
        with open(args.case, "rb") as fh:
            raw = fh.read()
        # Only the pre-contrast plane matters here; the payload header
        # carries the frame count, so synthesize valid placeholder times.
        k = data.peek_payload_frame_count(raw)
        case = data.parse_payload(raw, case_id=0,
                                  times_s=[float(i + 1) for i in range(k)])
        pre = case.pre_contrast.astype(np.float64)
        tag = os.path.splitext(os.path.basename(args.case))[0]
    else:
        pre = _load_png(args.image)
        tag = os.path.splitext(os.path.basename(args.image))[0]
    os.makedirs(args.out, exist_ok=True)
    steps = sorted(set(_rollout_steps(args, cfg)))
    grid0 = core.init_state(pre, cfg.d)
    snapshots, _ = core.rollout(
        grid0, params, max(steps), steps, (args.seed, 0, 0),
        fire_rate=cfg.fire_rate, deterministic_mask=args.det_mask)
    for step, frame in zip(steps, snapshots):
        seconds = step * cfg.delta_t_s
        base = f"{tag}_step{step:04d}_t{seconds:06.0f}s"
        _save_png(os.path.join(args.out, base + ".png"), frame)
        # subtraction image, offset so zero change sits at mid-gray
        _save_png(os.path.join(args.out, base + "_sub.png"),
                  (frame - pre + 1.0) / 2.0)
    print(f"wrote {2 * len(steps)} images to {args.out}")
    return 0


def model_predictor(cfg, params, seed: int = 0, deterministic_mask: bool = False):
    """predict(case) -> frames at the case's own acquisition times."""
    def predict(case):
        schedule = training.build_schedule(case.times_s, cfg.delta_t_s,
                                           cfg.n_steps)
        steps = sorted(schedule)
        grid0 = core.init_state(case.pre_contrast.astype(np.float64), cfg.d)
        snaps, _ = core.rollout(grid0, params, max(steps), steps,
                                (seed, 0, case.case_id),
                                fire_rate=cfg.fire_rate,
                                deterministic_mask=deterministic_mask)
        by_step = dict(zip(steps, snaps))
        out = [None] * case.k
        for step, idx in schedule.items():
            out[idx] = by_step[step]
        return out
    return predict


def cmd_eval(args) -> int:
    cfg, params, _, _ = checkpoint.load_checkpoint(args.ckpt)
    _, dataset = data.read_dataset(args.data)
    worst = max(t for case in dataset for t in case.times_s)
    if worst > cfg.horizon_s:
        raise DataError(
            f"dataset frame at {worst:g} s exceeds the checkpoint horizon "
            f"{cfg.horizon_s:g} s")
    model = metrics.build_report(
        "model", dataset, model_predictor(cfg, params, seed=args.seed))
    base = metrics.baseline_report(dataset)
    metrics.write_report_csv(args.out, [model, base])
    for rep in (model, base):
        ov = rep.overall()
        print(f"{rep.method:8s} overall: " + "  ".join(
            f"{k}={ov[k]:.5g}" for k in metrics.METRIC_NAMES))
        for p, vals in rep.per_phase().items():
            print(f"{rep.method:8s} phase {p}: " + "  ".join(
                f"{k}={vals[k]:.5g}" for k in metrics.METRIC_NAMES))
    print(f"report written to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    """Finite-difference check on tiny configs (8x8 grid, d=4, H=8, 5 steps)."""
    worst = 0.0
    failed = False
    for trial in range(args.trials):
        params = core.ModelParams.random(4, 8, seed=args.seed + trial)
        gen = rng.spawn_numpy_rng(args.seed, 0xFD, trial)
        grid0 = core.init_state(gen.uniform(0.0, 1.0, (8, 8)), 4)
        targets = {2: gen.uniform(0.0, 1.0, (8, 8)),
                   5: gen.uniform(0.0, 1.0, (8, 8))}
        err, _, _ = bptt.finite_diff_check(
            grid0, params, 5, targets, (args.seed, 0, trial),
            boundary_every=2, eps=args.eps)
        status = "ok" if err < 1e-4 else "FAIL"
        print(f"trial {trial}: max rel err {err:.3e}  [{status}]")
        worst = max(worst, err)
        failed = failed or err >= 1e-4
    print(f"worst over {args.trials} trials: {worst:.3e} "
          f"({'FAIL' if failed else 'ok'}, tolerance 1e-4)")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tenca",
        description="Temporal neural cellular automata on sparse frame sequences")
    parser.add_argument("--backend", choices=sorted(backends.available()),
                        help="compute backend (default: compiled if built)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom dataset")
    p.add_argument("--spec", required=True, help="phantom spec file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True, help="run config file")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--reproducible", action="store_true",
                   help="force single-threaded deterministic mode")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rollout", help="roll a checkpoint forward, export PNGs")
    p.add_argument("--ckpt", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--case", help="dataset payload file (.tnca)")
    src.add_argument("--image", help="grayscale image file")
    p.add_argument("--times", help="comma-separated seconds")
    p.add_argument("--all-steps", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="fire-mask seed")
    p.add_argument("--det-mask", action="store_true",
                   help="deterministic every-cell updates (debug)")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="model-vs-baseline metrics on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="dataset dir or manifest")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--seed", type=int, default=0, help="fire-mask seed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend:
        backends.use(args.backend)
    try:
        return args.func(args)
    except TencaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
