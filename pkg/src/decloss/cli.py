"""Command-line entry point: ``decloss <subcommand> ...``.

Exit status is 0 on success, 1 on usage or configuration errors, and 2 on
data errors (unreadable images, unmatched directories, failed checks).
Diagnostics go to stderr with an ``error:`` prefix.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, DeclossError
from .fourier import enhance
from .gradcheck import run_suite
from .icoo import icoo
from .imageio import list_images, load_image, pair_directories, save_image
from .losses import combine, loss_terms
from .tensor import Tensor
from .toy.checkpoint import save_checkpoint
from .toy.data import synthetic_dataset
from .toy.metrics import psnr
from .toy.resize import bicubic_resize
from .toy.train import config_dict, train, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def thread_count() -> int:
    raw = os.environ.get("DECL_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DECL_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"DECL_THREADS must be >= 1, got {n}")
    return n


def _fan_out(fn, items: list) -> list:
    with ThreadPoolExecutor(thread_count()) as pool:
        return list(pool.map(fn, items))


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _load_config(args, overrides: dict) -> RunConfig:
    return RunConfig.load(getattr(args, "config", None), {k: v for k, v in overrides.items() if v is not None})


def cmd_enhance(args) -> int:
    cfg = _load_config(args, {"enhance.alpha": args.alpha, "enhance.mu": args.mu, "enhance.mode": args.mode})
    img = load_image(args.input)
    out = enhance(Tensor(img.pixels.data[None]), cfg.enhance).data[0]
    save_image(out, args.output)
    return EXIT_OK


def cmd_prep(args) -> int:
    if args.scale < 1:
        raise UsageError(f"--scale must be a positive integer, got {args.scale}")
    images = list_images(args.hr_dir)
    out_dir = Path(args.lr_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(item):
        stem, path = item
        pixels = load_image(path).pixels
        _, h, w = pixels.shape
        lr = bicubic_resize(pixels, size=(max(h // args.scale, 1), max(w // args.scale, 1)))
        save_image(lr, out_dir / f"{stem}.png")
        return stem

    done = _fan_out(work, sorted(images.items()))
    print(_dumps({"written": len(done), "scale": args.scale, "lr_dir": str(out_dir)}))
    return EXIT_OK


def cmd_loss(args) -> int:
    cfg = _load_config(args, {"contrast.patch_size": args.patch, "contrast.eta": args.eta})
    pairs = pair_directories(args.sr, args.hr)
    if not pairs:
        raise DeclossError(f"no images found in {args.sr}")

    def work(pair):
        stem, sr_path, hr_path = pair
        sr = Tensor(load_image(sr_path).pixels.data[None])
        hr = Tensor(load_image(hr_path).pixels.data[None])
        w = cfg.weights
        terms = loss_terms(sr, hr, w, cfg.enhance, cfg.contrast, None, args.l1_reduction)
        row = {"name": stem}
        row["l1"] = terms["l1"].item() if "l1" in terms else None
        row["ld"] = terms["ld"].item() if "ld" in terms else None
        row["total"] = combine(terms, w).item()
        return row

    rows = _fan_out(work, pairs)
    mean = {k: float(np.mean([r[k] for r in rows])) if rows[0][k] is not None else None for k in ("l1", "ld", "total")}
    config = cfg.to_dict()
    config["l1_reduction"] = args.l1_reduction
    print(_dumps({**mean, "pairs": rows, "config": config}))
    return EXIT_OK


def cmd_icoo(args) -> int:
    cfg = _load_config(
        args,
        {
            "icoo.seed": args.seed,
            "icoo.patch_size": args.patch_size,
            "icoo.sr_patches": args.sr_patches,
            "icoo.hr_patches": args.hr_patches,
            "icoo.rounds": args.rounds,
        },
    )
    sr = [load_image(p).pixels for p in list_images(args.sr).values()]
    hr = [load_image(p).pixels for p in list_images(args.hr).values()]
    if not sr or not hr:
        raise DeclossError("icoo needs at least one image in each directory")
    report = icoo(sr, hr, cfg.icoo, max_workers=thread_count()).to_dict()
    if args.report:
        Path(args.report).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(_dumps(report))
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {"train.seed": args.seed}
    if args.steps is not None:
        overrides.update({"train.phase1_epochs": 1, "train.phase2_epochs": 1, "train.steps_per_epoch": args.steps})
    cfg = _load_config(args, overrides)
    if args.data:
        images = [load_image(p).pixels.data for p in list_images(args.data).values()]
        if not images:
            raise DeclossError(f"no images found in {args.data}")
    else:
        images = synthetic_dataset(args.synthetic, seed=cfg.train.seed)

    def report(row):
        if args.verbose:
            print(f"step {row.step} phase {row.phase} total {row.total:.6g}", file=sys.stderr)

    result = train(images, cfg.train, on_step=report)
    out = Path(args.out)
    save_checkpoint(out, result.params, config_dict(cfg.train))
    trace_path = Path(args.trace) if args.trace else out.with_suffix(".csv")
    write_trace_csv(trace_path, result.trace)
    print(
        _dumps(
            {
                "checkpoint": str(out),
                "trace": str(trace_path),
                "steps": len(result.trace),
                "final_total": result.trace[-1].total,
                "config": cfg.to_dict(),
            }
        )
    )
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_suite(range(args.seeds))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print(f"error: {len(failed)} gradient checks failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_psnr(args) -> int:
    a = load_image(args.a).pixels
    b = load_image(args.b).pixels
    print(f"{psnr(a, b, 1.0):.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decloss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("enhance", help="high-frequency enhance one image")
    p.add_argument("--alpha", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--mode", choices=["exact", "paper_literal"])
    p.add_argument("--config")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("prep", help="bicubic-downsample a directory of HR images")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("hr_dir")
    p.add_argument("lr_dir")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("loss", help="L1 / contrastive / total loss between SR and HR directories")
    p.add_argument("--sr", required=True)
    p.add_argument("--hr", required=True)
    p.add_argument("--patch", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--l1-reduction", choices=["sum", "mean"], default="sum")
    p.add_argument("--config")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("icoo", help="ICOO score of SR images against HR images")
    p.add_argument("--sr", required=True)
    p.add_argument("--hr", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--sr-patches", type=int)
    p.add_argument("--hr-patches", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--report", help="also write the report as JSON to this file")
    p.add_argument("--config")
    p.set_defaults(func=cmd_icoo)

    p = sub.add_parser("train-toy", help="train the toy upsampler")
    p.add_argument("--data", help="directory of HR images (default: synthetic set)")
    p.add_argument("--synthetic", type=int, default=50, help="synthetic image count when --data is absent")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", help="loss trace CSV (default: checkpoint path with .csv)")
    p.add_argument("--steps", type=int, help="shortcut: this many steps per phase")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference check of every taped operation")
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("psnr", help="PSNR between two images in dB")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_psnr)
    return parser


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DeclossError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
