"""Command-line interface.

Subcommands: ``synth`` (write a synthetic paired dataset), ``train``,
``generate`` (run a checkpoint over inputs, optionally as
input|truth|generated triptychs), ``eval`` (mean L1 + PSNR), and
``selfcheck`` (gradient suite and shape traces).

The default run root is ``./runs`` or the ``MAP2SAT_RUN_ROOT`` env var;
run directories are timestamped and never overwritten.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import CONFIG_SCHEMA, ConfigError, load_config, parse_value, write_manifest
from .generator import GeneratorSpec
from .imgio import ImagePair, encode_png, load_combined, make_triptych, write_combined
from .pipeline import (Dataset, JitterSpec, SYNTH_TASKS, normalize, normalize_pair,
                       resize, synth_pair)
from .tensor import ShapeError
from .training import evaluate, fit, generate_image, load_state
from . import selfcheck as sc

RUN_ROOT_ENV = "MAP2SAT_RUN_ROOT"


def _run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, "runs"))


def _new_run_dir(explicit: str | None) -> Path:
    if explicit is not None:
        run = Path(explicit)
        if (run / "manifest.txt").exists():
            raise SystemExit(f"refusing to reuse run directory {run} (manifest exists)")
        run.mkdir(parents=True, exist_ok=True)
        return run
    root = _run_root()
    root.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    candidate = root / stamp
    n = 1
    while candidate.exists():
        candidate = root / f"{stamp}-{n}"
        n += 1
    candidate.mkdir()
    return candidate


def cmd_synth(args) -> int:
    out = Path(args.out)
    n_val = args.count // 10
    n_train = args.count - n_val
    (out / "train").mkdir(parents=True, exist_ok=True)
    if n_val:
        (out / "val").mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        pair = synth_pair(args.task, args.size, args.seed, i)
        split = "train" if i < n_train else "val"
        path = out / split / f"{i:05d}.png"
        write_combined(pair.input_map, pair.target_truth, path, args.pair_order)
    print(f"wrote {n_train} train + {n_val} val combined tiles under {out}")
    return 0


def _parse_overrides(pairs: list[str]) -> dict:
    overrides = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key.strip()] = parse_value(key.strip(), raw)
    return overrides


def cmd_train(args) -> int:
    overrides = _parse_overrides(args.set or [])
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    cfg.validate_network_sizes()

    data_dir = Path(args.data)
    train_dir = data_dir / "train" if (data_dir / "train").is_dir() else data_dir
    dataset = Dataset.from_dir(train_dir, cfg.pair_order)
    val_dir = data_dir / "val"
    val_pair = None
    if val_dir.is_dir() and any(val_dir.iterdir()):
        val_set = Dataset.from_dir(val_dir, cfg.pair_order)
        val_pair = val_set.eval_sample(0, cfg.jitter_spec.crop_to, cfg.resize_method)

    run_dir = _new_run_dir(args.run_dir)
    write_manifest(run_dir / "manifest.txt", cfg,
                   artifact_version=__version__,
                   dataset_fingerprint=dataset.fingerprint,
                   started_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
                   kernel_backend=kernels.backend_name(),
                   data_dir=str(data_dir))
    print(f"run directory: {run_dir} (backend: {kernels.backend_name()})")
    final = fit(cfg, dataset, run_dir, val_pair=val_pair, resume_from=args.resume,
                log=print)
    print(f"final checkpoint: {final}")
    return 0


def _load_generator(checkpoint_path):
    state, _ = load_state(checkpoint_path)
    return state.gen_spec, state.gen


def _input_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        if not files:
            raise SystemExit(f"no image files under {path}")
        return files
    return [path]


def _fit_input(t, size: int, policy: str, name: str):
    _, h, w, _ = t.dims
    if (h, w) == (size, size):
        return t
    if policy == "reject":
        raise SystemExit(
            f"{name}: input is {h}x{w} but the generator needs {size}x{size}; "
            f"pass --resize-policy fit to resample")
    return resize(t, size, size)


def cmd_generate(args) -> int:
    spec, store = _load_generator(args.checkpoint)
    size = spec.input_size
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in _input_files(Path(args.input)):
        if args.input_kind == "combined":
            pair = normalize_pair(load_combined(path, args.pair_order))
            x = _fit_input(pair.input_map, size, args.resize_policy, path.name)
            truth = _fit_input(pair.target_truth, size, args.resize_policy, path.name)
        else:
            from .imgio import decode_image
            x = _fit_input(normalize(decode_image(path)), size, args.resize_policy,
                           path.name)
            truth = None
        generated = generate_image(spec, store, x)
        target = out / f"{path.stem}_gen.png"
        if args.triptych:
            if truth is None:
                raise SystemExit("--triptych needs combined inputs (ground truth)")
            encode_png(make_triptych(x, truth, generated), target)
        else:
            encode_png(generated, target)
        print(f"wrote {target}")
    return 0


def cmd_eval(args) -> int:
    spec, store = _load_generator(args.checkpoint)
    dataset = Dataset.from_dir(args.data, args.pair_order)
    pairs = (dataset.eval_sample(i, spec.input_size) for i in range(len(dataset)))
    result = evaluate(lambda x: generate_image(spec, store, x), pairs)
    print(f"mean_l1 = {result['mean_l1']:.6f}")
    print(f"psnr_db = {result['psnr_db']:.3f}")
    print(f"pairs   = {result['pairs']}")
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_selfcheck(args) -> int:
    failed = False
    print(f"kernel backend: {kernels.backend_name()}")
    print("gradient checks (central differences, h=1e-3, float64):")
    for r in sc.check_op_gradients() + sc.check_network_gradients():
        status = "PASS" if r.passed else "FAIL"
        failed |= not r.passed
        print(f"  {status}  {r.name:52s} max_rel_err={r.max_rel_err:.3e} "
              f"(threshold {r.threshold:g})")

    print("generator shape trace (256x256 input):")
    for name, dims in sc.generator_shape_trace():
        print(f"  {name:8s} {dims[1]}x{dims[2]}x{dims[3]}")
    print("discriminator shape trace (256x256 inputs):")
    for name, dims in sc.discriminator_shape_trace():
        print(f"  {name:8s} {dims[1]}x{dims[2]}x{dims[3]}")
    print("FAIL" if failed else "all checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="map2sat",
        description="Conditional-GAN map-to-aerial tile translation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic paired dataset")
    p.add_argument("--task", choices=SYNTH_TASKS, default="invert")
    p.add_argument("--count", type=int, default=10, help="total tiles (9:1 train/val)")
    p.add_argument("--size", type=int, default=32, help="tile edge in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--pair-order", choices=("map-left", "map-right"),
                   default="map-left")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "train", help="train on a dataset directory",
        epilog="config keys (override with --set key=value):\n" + "\n".join(
            f"  {k:20s} default {vals[1]!r:24} {vals[2]}"
            for k, vals in CONFIG_SCHEMA.items()),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--data", required=True, help="dataset dir (with train/ and val/)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key")
    p.add_argument("--steps", type=int, help="shorthand for --set steps=N")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--run-dir", help="explicit run directory (default: timestamped)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="run a checkpoint over inputs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="combined file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--triptych", action="store_true",
                   help="emit input|truth|generated panels")
    p.add_argument("--input-kind", choices=("combined", "map"), default="combined")
    p.add_argument("--pair-order", choices=("map-left", "map-right"),
                   default="map-left")
    p.add_argument("--resize-policy", choices=("reject", "fit"), default="reject")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="mean L1 and PSNR of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the metrics as JSON here")
    p.add_argument("--pair-order", choices=("map-left", "map-right"),
                   default="map-left")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", help="gradient suite and shape traces")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
