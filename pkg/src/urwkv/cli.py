"""Command-line interface.

Subcommands: ``gen`` (synthesize a paired corpus), ``train``, ``eval``,
``infer``, ``complexity``. Exit codes: 0 success, 1 usage error, 2 bad
config or data, 3 non-finite numerics during optimization. Each training
run writes a run manifest (config snapshot, seed, code version, timing,
metric summary) next to its checkpoints so results stay attributable.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import complexity, data, metrics, training, wkv
from .autodiff import Tensor, no_grad
from .checkpoint import apply_parameters, load_checkpoint
from .config import UrwkvConfig
from .errors import ConfigError, DataError, NumericsError
from .model import RestorationModel

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this CLI reserves 2 for data problems
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _code_version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_model_from_checkpoint(path: str):
    meta, tensors = load_checkpoint(path)
    config = UrwkvConfig.from_dict(meta["config"])
    model = RestorationModel(config)
    apply_parameters(model, tensors)
    return model, config, meta


def cmd_gen(args) -> int:
    if args.count < 1 or args.size < 16:
        raise DataError("gen needs count >= 1 and size >= 16")
    ids = data.generate_corpus(args.out, args.count, args.size, args.seed)
    print(f"wrote {len(ids)} pairs ({args.size}x{args.size}) under {args.out}")
    return 0


def cmd_train(args) -> int:
    config = UrwkvConfig.from_json(args.config)
    pairs = data.load_corpus(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": "train",
        "config": config.to_dict(),
        "seed": config.seed,
        "data": str(args.data),
        "pairs": len(pairs),
        "code_version": _code_version(),
        "wkv_backend": wkv.active_backend(),
        "started": _utc_now(),
    }
    t0 = time.monotonic()
    try:
        result = training.train_model(config, pairs, out_dir)
    finally:
        manifest["finished"] = _utc_now()
        manifest["wall_seconds"] = round(time.monotonic() - t0, 3)
        (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2))
    manifest["best_psnr"] = result.best_psnr
    manifest["best_step"] = result.best_step
    manifest["final_loss"] = result.history[-1]["loss"]
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"trained {config.train.steps} steps; best train PSNR {result.best_psnr:.2f} dB at step {result.best_step}")
    print(f"checkpoints and train_log.csv under {out_dir}")
    return 0


def cmd_eval(args) -> int:
    model, _, _ = _load_model_from_checkpoint(args.ckpt)
    pairs = data.load_corpus(args.data)
    rows = training.evaluate_pairs(model, pairs)
    print(f"{'id':<12} {'psnr':>8} {'ssim':>8} {'in_psnr':>8} {'in_ssim':>8}")
    for row in rows:
        print(f"{row['id']:<12} {row['psnr']:>8.3f} {row['ssim']:>8.4f} {row['input_psnr']:>8.3f} {row['input_ssim']:>8.4f}")
    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    mean_ssim = float(np.mean([r["ssim"] for r in rows]))
    mean_in = float(np.mean([r["input_psnr"] for r in rows]))
    mean_in_ssim = float(np.mean([r["input_ssim"] for r in rows]))
    print(f"{'mean':<12} {mean_psnr:>8.3f} {mean_ssim:>8.4f} {mean_in:>8.3f} {mean_in_ssim:>8.4f}")
    return 0


def cmd_infer(args) -> int:
    model, _, _ = _load_model_from_checkpoint(args.ckpt)
    image = data.read_ppm(args.input)
    with no_grad():
        restored = model.forward(Tensor(image))
    data.write_ppm(args.output, restored.data)
    print(f"restored {args.input} -> {args.output}")
    return 0


def cmd_complexity(args) -> int:
    config = UrwkvConfig.from_json(args.config) if args.config else UrwkvConfig()
    try:
        h, w = (int(part) for part in args.hw.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--hw expects HxW (e.g. 256x256), got {args.hw!r}") from None
    report = complexity.complexity_report(config, h, w)
    print(f"input 3x{h}x{w}")
    print(f"parameters: {report['params']:,} ({report['params'] / 1e6:.3f} M)")
    for group, count in sorted(report["params_by_group"].items(), key=lambda kv: -kv[1]):
        print(f"  {group:<12} {count:>10,}")
    print(f"macs: {report['macs']:,} ({report['macs'] / 1e9:.2f} G)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="urwkv", description="Low-light image restoration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[], help="generate a synthetic paired corpus")
    p.add_argument("--out", required=True, help="corpus root directory")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--data", required=True, help="corpus root")
    p.add_argument("--out", required=True, help="run output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="restore a single PPM image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("complexity", help="report parameter and MAC counts")
    p.add_argument("--config", default=None, help="JSON config file (defaults used if omitted)")
    p.add_argument("--hw", default="256x256", help="input size as HxW")
    p.set_defaults(func=cmd_complexity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
