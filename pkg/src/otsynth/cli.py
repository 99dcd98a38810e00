"""Command line entry point.

    otsynth synth IN.png OUT.png [--method ot|bs|nn|gram] ...
    otsynth ic EXEMPLAR.png SYNTH.png [--scales 4] [--patch 4] [--csv report.csv]
    otsynth tilemap EXEMPLAR.png SYNTH.png OUT.png [--patch 4] [--scale 0]
    otsynth replay OUT.manifest [--out OTHER.png]

Exit status is 0 on success, 2 for usage or input errors and 3 for runtime
or numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

from PIL import UnidentifiedImageError

from . import __version__
from . import image as im
from .errors import ConfigError, OTSynthError
from .gram import gram_synthesize
from .innovation import innovation_capacity, tile_map, tile_map_render
from .synthesis import SynthesisConfig, synthesize
from .transport import DEFAULT_SLICE_BYTES

log = logging.getLogger("otsynth")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

# manifest keys replayed into the synth parser, in a fixed order
_SYNTH_KEYS = ("method", "eps", "alpha", "patch", "scales", "iters", "subsample", "blend",
               "slice_bytes", "seed", "filters", "steps", "sinkhorn_iters", "rounds",
               "target_mc", "size")


def _size(text: str):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return h, w


def _add_synth_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="exemplar PNG")
    p.add_argument("output", help="synthesis PNG; .manifest and .trace.csv are written beside it")
    p.add_argument("--method", choices=["ot", "bs", "nn", "gram"], default="ot")
    p.add_argument("--eps", type=float, default=1e-3, help="entropic regulariser (ot)")
    p.add_argument("--alpha", type=float, default=0.25, help="forward/backward balance (bs)")
    p.add_argument("--patch", type=int, default=4, help="patch / filter side")
    p.add_argument("--scales", type=int, default=4, help="index of the coarsest scale")
    p.add_argument("--iters", type=int, default=10, help="synthesis iterations per scale")
    p.add_argument("--subsample", type=float, default=0.35, help="fraction of patches per iteration")
    p.add_argument("--blend", type=float, default=0.5, help="weight of the coarser result")
    p.add_argument("--slice-bytes", type=int, default=DEFAULT_SLICE_BYTES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filters", type=int, default=256, help="random filters (gram)")
    p.add_argument("--steps", type=int, default=500, help="L-BFGS steps per scale (gram)")
    p.add_argument("--sinkhorn-iters", type=int, default=10)
    p.add_argument("--rounds", type=int, default=20, help="greedy match rounds (ot)")
    p.add_argument("--target-mc", type=float, default=0.99)
    p.add_argument("--size", type=_size, default=None, help="output size HxW (default: exemplar)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otsynth", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_synth_args(sub.add_parser("synth", help="synthesize a texture"))

    p = sub.add_parser("ic", help="multi-resolution innovation capacity")
    p.add_argument("exemplar")
    p.add_argument("synthesis")
    p.add_argument("--scales", type=int, default=4)
    p.add_argument("--patch", type=int, default=4)
    p.add_argument("--csv", default=None, help="also write the report as CSV")
    p.add_argument("--slice-bytes", type=int, default=DEFAULT_SLICE_BYTES)

    p = sub.add_parser("tilemap", help="render the tile map of a synthesis")
    p.add_argument("exemplar")
    p.add_argument("synthesis")
    p.add_argument("output")
    p.add_argument("--patch", type=int, default=4)
    p.add_argument("--scale", type=int, default=0)
    p.add_argument("--slice-bytes", type=int, default=DEFAULT_SLICE_BYTES)

    p = sub.add_parser("replay", help="re-run a synthesis from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="write here instead of the recorded output")
    return parser


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def sidecar_paths(output) -> tuple[Path, Path]:
    out = Path(output)
    stem = out.with_suffix("") if out.suffix.lower() == ".png" else out
    return stem.with_name(stem.name + ".manifest"), stem.with_name(stem.name + ".trace.csv")


class _AtomicOutputs:
    """Collect temp files and move them into place only if everything succeeded."""

    def __init__(self):
        self._pending: list[tuple[Path, Path]] = []

    def temp_for(self, final) -> Path:
        final = Path(final)
        fd, tmp = tempfile.mkstemp(prefix=f".{final.name}.", suffix=".part",
                                   dir=final.parent if str(final.parent) else ".")
        os.close(fd)
        self._pending.append((Path(tmp), final))
        return Path(tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for tmp, final in self._pending:
                os.replace(tmp, final)
        else:
            for tmp, _ in self._pending:
                tmp.unlink(missing_ok=True)
        return False


def write_manifest(path, items: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in items.items():
            fh.write(f"{k}={v}\n")


def read_manifest(path) -> dict:
    items = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"malformed manifest line: {line!r}")
            items[key] = value
    return items


def _read_input(path) -> "im.np.ndarray":
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"cannot read {path}: no such file")
    try:
        return im.read_png(p)
    except (UnidentifiedImageError, OSError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from None


def _check_output_dir(path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise ConfigError(f"output directory {parent} does not exist")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    _check_output_dir(args.output)
    x = _read_input(args.input)
    manifest_path, trace_path = sidecar_paths(args.output)
    t0 = time.perf_counter()
    if args.method == "gram":
        y, trace = gram_synthesize(x, K=args.filters, steps=args.steps, J=args.scales,
                                   seed=args.seed, b=args.patch, output_shape=args.size,
                                   slice_bytes=args.slice_bytes)
    else:
        cfg = SynthesisConfig(
            patch_side=args.patch, num_scales=args.scales, iters_per_scale=args.iters,
            heuristic=args.method, epsilon=args.eps, alpha=args.alpha,
            subsample_fraction=args.subsample, slice_bytes=args.slice_bytes,
            coarse_blend_weight=args.blend, seed=args.seed, output_shape=args.size,
            sinkhorn_iters=args.sinkhorn_iters, greedy_rounds=args.rounds,
            target_mc=args.target_mc)
        y, trace = synthesize(x, cfg)
    wall = time.perf_counter() - t0

    items = {"version": __version__, "command": "synth",
             "input": Path(args.input).resolve(), "output": Path(args.output).resolve(),
             "trace": trace_path.resolve()}
    for key in _SYNTH_KEYS:
        value = getattr(args, key)
        if key == "size" and value is not None:
            value = f"{value[0]}x{value[1]}"
        items[key] = "" if value is None else value
    items["wall_time"] = f"{wall:.3f}"

    with _AtomicOutputs() as out:
        im.write_png(out.temp_for(args.output), y)
        trace.write_csv(out.temp_for(trace_path))
        write_manifest(out.temp_for(manifest_path), items)
    log.info("wrote %s (%.1fs)", args.output, wall)
    return EXIT_OK


def cmd_ic(args) -> int:
    x = _read_input(args.exemplar)
    y = _read_input(args.synthesis)
    if args.scales < 0 or args.patch < 1:
        raise ConfigError("need --scales >= 0 and --patch >= 1")
    for j in range(args.scales + 1):
        im.scale_dims(*x.shape[:2], j)
        im.scale_dims(*y.shape[:2], j)
    report = innovation_capacity(x, y, args.scales, args.patch, args.slice_bytes)
    print(report.format())
    if args.csv:
        _check_output_dir(args.csv)
        with _AtomicOutputs() as out:
            report.write_csv(out.temp_for(args.csv))
    return EXIT_OK


def cmd_tilemap(args) -> int:
    _check_output_dir(args.output)
    x = _read_input(args.exemplar)
    y = _read_input(args.synthesis)
    if args.patch < 1:
        raise ConfigError("--patch must be >= 1")
    x_j, y_j = im.downsample(x, args.scale), im.downsample(y, args.scale)
    tm = tile_map(x_j, y_j, args.patch, args.slice_bytes)
    with _AtomicOutputs() as out:
        im.write_png(out.temp_for(args.output), tile_map_render(tm))
    return EXIT_OK


def cmd_replay(args) -> int:
    items = read_manifest(args.manifest)
    if items.get("command") != "synth":
        raise ConfigError(f"{args.manifest} is not a synth manifest")
    argv = ["synth", items["input"], args.out or items["output"]]
    for key in _SYNTH_KEYS:
        value = items.get(key, "")
        if value != "":
            argv += ["--" + key.replace("_", "-"), value]
    return cmd_synth(build_parser().parse_args(argv))


COMMANDS = {"synth": cmd_synth, "ic": cmd_ic, "tilemap": cmd_tilemap, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"otsynth: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OTSynthError, FloatingPointError, ArithmeticError) as e:
        print(f"otsynth: runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
