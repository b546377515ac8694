"""Command-line entry point: one executable, one subcommand per pipeline stage.

Every subcommand echoes its effective configuration (config file merged
with command-line overrides) into the run directory as ``run-config.txt``
before doing any work, and appends to ``run.log`` there, so any artifact
can be traced back to the exact settings that produced it.

Errors exit nonzero with a one-line ``error:<category>: <message>`` on
standard error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .engine import PatternKind
from .errors import BlurfieldError
from .kernels import BlurParams, kernel_to_image, kernel_to_text, make_kernel, unique_params

_PATTERN_CHOICES = [k.value for k in PatternKind]

LOG = logging.getLogger("blurfield")

_ENV_THREADS = "BLURFIELD_THREADS"


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _load_config_file(path: str) -> dict[str, str]:
    """Parse a plain KEY=VALUE config file; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected KEY=VALUE, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _setup_run_dir(run_dir: Path, command: str, config: dict) -> None:
    """Freeze the effective config and open the run log before any work."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command={command}"]
    for key in sorted(config):
        lines.append(f"{key}={config[key]}")
    (run_dir / "run-config.txt").write_text("\n".join(lines) + "\n")
    for handler in LOG.handlers:
        handler.close()
    LOG.handlers.clear()
    LOG.setLevel(logging.INFO)
    fh = logging.FileHandler(run_dir / "run.log")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    LOG.addHandler(fh)
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(logging.Formatter("%(message)s"))
    LOG.addHandler(sh)
    LOG.info("blurfield %s starting", command)


def _set_threads(threads: int | None) -> None:
    if threads is None:
        env = os.environ.get(_ENV_THREADS)
        threads = int(env) if env else None
    if threads is not None:
        import torch

        torch.set_num_threads(max(1, threads))


def _effective_config(args: argparse.Namespace, skip=("func", "command", "config")) -> dict:
    return {k: v for k, v in vars(args).items() if k not in skip}


# ---------------------------------------------------------------- kernels

def _cmd_kernels(args) -> int:
    out = Path(args.out)
    _setup_run_dir(out.parent if out.parent != Path("") else Path("."), "kernels", _effective_config(args))
    kern = make_kernel(BlurParams(args.r, args.phi))
    out.write_text(kernel_to_text(kern))
    if args.png:
        kernel_to_image(kern, args.png)
    LOG.info("wrote %dx%d kernel to %s", kern.size, kern.size, out)
    return 0


# ------------------------------------------------------------------- blur

def _cmd_blur(args) -> int:
    from .engine import NOISE_GAUSSIAN, NoiseConfig, PatternKind, blur_nonuniform, blur_uniform, make_pattern
    from .imgio import load_image, save_image

    out = Path(args.out)
    _setup_run_dir(out.parent if out.parent != Path("") else Path("."), "blur", _effective_config(args))
    if (args.pattern is None) == (args.r is None):
        raise ValueError("specify exactly one of --pattern or --r/--phi")
    image = load_image(args.input)
    noise = None
    if args.sigma > 0:
        noise = NoiseConfig(kind=NOISE_GAUSSIAN, sigma=args.sigma, seed=args.seed)
    if args.pattern is not None:
        field = make_pattern(PatternKind(args.pattern), image.shape[0], image.shape[1])
        blurred = blur_nonuniform(image, field, noise)
        if args.field_json:
            Path(args.field_json).write_text(field.to_json())
    else:
        blurred = blur_uniform(image, make_kernel(BlurParams(args.r, args.phi)), noise)
    save_image(out, blurred)
    LOG.info("wrote blurred image to %s", out)
    return 0


# ---------------------------------------------------------------- dataset

def _cmd_dataset(args) -> int:
    from .dataset import generate_dataset
    from .engine import NOISE_GAUSSIAN, NoiseConfig

    out_dir = Path(args.out)
    _setup_run_dir(out_dir, "dataset", _effective_config(args))
    params = unique_params(_parse_floats(args.lengths), args.angle_step)
    LOG.info("%d unique blur parameter pairs", len(params))
    noise = None
    if args.sigma > 0:
        noise = NoiseConfig(kind=NOISE_GAUSSIAN, sigma=args.sigma, seed=args.seed)
    ratios = _parse_floats(args.split_ratios)
    manifest = generate_dataset(
        corpus_dir=args.corpus,
        params_set=params,
        out_dir=out_dir,
        seed=args.seed,
        n_max=args.nmax,
        split_ratios=ratios,
        noise=noise,
        enumerate_all=args.enumerate_all,
        extra_settings={"lengths": _parse_floats(args.lengths), "angle_step": args.angle_step},
    )
    LOG.info("wrote %d records to %s", len(manifest.records), out_dir / "manifest.json")
    return 0


# ------------------------------------------------------------------ train

def _cmd_train(args) -> int:
    _set_threads(args.threads)
    from .dataset import Manifest
    from .model import ArchitectureConfig, TrainingConfig, train
    from .sampler import PatchSchedule

    out = Path(args.out)
    _setup_run_dir(out.parent if out.parent != Path("") else Path("."), "train", _effective_config(args))
    manifest = Manifest.load(args.manifest)
    arch = ArchitectureConfig(include_block5=not args.no_block5)
    cfg = TrainingConfig(
        schedule=PatchSchedule(_parse_ints(args.patch_schedule)),
        batch_size=args.batch_size,
        learning_rate=args.lr,
        epsilon=args.epsilon,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
    )
    loss_log = args.loss_log or str(out) + ".loss.csv"

    def progress(epoch, n, loss, val_loss):
        LOG.info(
            "epoch %d patch %d loss %.6g val %s",
            epoch, n, loss, "-" if val_loss is None else f"{val_loss:.6g}",
        )

    ckpt = train(manifest, arch, cfg, loss_log_path=loss_log, progress=progress)
    ckpt.save(out)
    LOG.info("wrote checkpoint to %s (%d epochs, final loss %.6g)",
             out, ckpt.meta["epochs_run"], ckpt.meta["final_loss"])
    return 0


# ------------------------------------------------------------------- eval

def _cmd_eval(args) -> int:
    _set_threads(args.threads)
    from .dataset import Manifest
    from .evaluate import eval_matrix, save_matrix
    from .model import ModelCheckpoint

    out_dir = Path(args.out_dir)
    _setup_run_dir(out_dir, "eval", _effective_config(args))
    ckpt = ModelCheckpoint.load(args.ckpt)
    manifest = Manifest.load(args.manifest)
    split = None if args.split == "all" else args.split
    matrix = eval_matrix(ckpt, manifest, _parse_ints(args.patch_sizes), seed=args.seed, split=split)
    csv_path, table_path = save_matrix(matrix, out_dir)
    LOG.info("wrote %s and %s", csv_path, table_path)
    print(matrix.format_table(), end="")
    return 0


# ------------------------------------------------------------------ field

def _cmd_field(args) -> int:
    _set_threads(args.threads)
    from .fieldmap import render_heatmaps, sliding_predict
    from .imgio import load_image
    from .model import ModelCheckpoint

    out_dir = Path(args.out_dir)
    _setup_run_dir(out_dir, "field", _effective_config(args))
    ckpt = ModelCheckpoint.load(args.ckpt)
    image = load_image(args.input)
    grid = sliding_predict(ckpt, image, args.n, stride=args.stride)
    grid.to_csv(out_dir)
    render_heatmaps(grid, out_dir)
    LOG.info("wrote %dx%d prediction grid to %s", grid.shape[0], grid.shape[1], out_dir)
    return 0


# ------------------------------------------------------------------ sweep

def _cmd_sweep(args) -> int:
    _set_threads(args.threads)
    from .engine import PatternKind
    from .fieldmap import overlap_sweep
    from .imgio import IMAGE_SUFFIXES, load_image
    from .model import ModelCheckpoint

    out_dir = Path(args.out_dir)
    _setup_run_dir(out_dir, "sweep", _effective_config(args))
    ckpt = ModelCheckpoint.load(args.ckpt)
    images_dir = Path(args.images)
    paths = sorted(
        p for p in images_dir.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise ValueError(f"no images found in {images_dir}")
    curve = overlap_sweep(ckpt, (load_image(p) for p in paths), PatternKind(args.pattern), n=args.n)
    curve.to_csv(out_dir / "overlap-curve.csv")
    curve.plot_svg(out_dir / "overlap-curve.svg")
    LOG.info("wrote overlap curve over %d positions to %s", len(curve.points), out_dir)
    return 0


# ---------------------------------------------------------------- parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blurfield",
        description="Synthesize linear motion blur, train a patch regressor, analyze blur fields.",
    )
    parser.add_argument("--config", help="KEY=VALUE config file supplying subcommand defaults")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"cap internal parallelism (default: ${_ENV_THREADS} or library default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernels", help="rasterize one blur kernel")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--out", required=True, help="output text-grid path")
    p.add_argument("--png", default=None, help="also write a 16-bit grayscale PNG")
    p.set_defaults(func=_cmd_kernels)

    p = sub.add_parser("blur", help="blur one image uniformly or with a test pattern")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--pattern", choices=_PATTERN_CHOICES)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--field-json", default=None, help="dump the pattern field as a JSON region list")
    p.set_defaults(func=_cmd_blur)

    p = sub.add_parser("dataset", help="generate a blurred dataset from a local corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lengths", default="1,3,5,7,9,11,13,15", help="comma-separated blur lengths")
    p.add_argument("--angle-step", type=float, default=15.0)
    p.add_argument("--nmax", type=int, default=33, help="largest training patch size (sets the label range)")
    p.add_argument("--split-ratios", default="0.8,0.1,0.1")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--enumerate-all", action="store_true", help="blur every image with every kernel")
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("train", help="train the regression network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--patch-schedule", default="29,30,31,32,33")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=1e-12, help="loss-change convergence threshold")
    p.add_argument("--patience", type=int, default=15, help="epochs of sub-epsilon change before stopping")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-block5", action="store_true", help="drop the fifth conv block (minimum patch 16)")
    p.add_argument("--loss-log", default=None, help="CSV loss log path (default: <out>.loss.csv)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint across patch sizes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--patch-sizes", default="16,29,30,31,32,64")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="eval-out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("field", help="sliding-window blur-field prediction + heatmaps")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--n", type=int, default=31)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_field)

    p = sub.add_parser("sweep", help="overlap-transition sweep over pattern-blurred images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--images", required=True, help="directory of pattern-blurred images")
    p.add_argument("--pattern", required=True, choices=_PATTERN_CHOICES)
    p.add_argument("--n", type=int, default=31)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Use config-file values as defaults for the invoked subcommand."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv  # argparse will report the missing value
    values = _load_config_file(argv[idx + 1])
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    command = next((tok for tok in argv if tok in sub_actions[0].choices), None)
    if command is None:
        return argv
    sub = sub_actions[0].choices[command]
    known = {a.dest for a in sub._actions}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"config keys not recognized by '{command}': {sorted(unknown)}")
    typed = {}
    for key, text in values.items():
        action = next(a for a in sub._actions if a.dest == key)
        if action.type is not None:
            typed[key] = action.type(text)
        elif isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            typed[key] = text.lower() in ("1", "true", "yes", "on")
        else:
            typed[key] = text
    sub.set_defaults(**typed)
    return argv


def dispatch(argv: list[str]) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return int(exc.code or 0)
    except ValueError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except BlurfieldError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
