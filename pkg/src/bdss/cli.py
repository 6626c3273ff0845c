"""``bdss`` command line: simulate, train, despeckle, evaluate (and fixture).

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage,
configuration or input-format error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .config import RunConfig, load_config
from .data import (
    DatasetManifest,
    PairDataset,
    load_patches,
    parse_manifest,
    read_raster,
    read_target,
    scene_set,
    write_raster,
)
from .exceptions import BDSSError, ConfigurationError, DomainError, FormatError, GeometryError
from .metrics import evaluate_image, read_regions, report_csv
from .network import build_bdss, load_checkpoint, save_checkpoint
from .speckle import speckle_realization
from .trainer import despeckle, train

log = logging.getLogger("bdss")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
RASTER_SUFFIXES = (".bdsr", ".pgm", ".pnm")
VALIDATION_KEY = 1 << 20


class UsageError(BDSSError):
    """Bad paths or arguments detected after parsing."""


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def _list_rasters(paths):
    """Expand directories into their raster files (sorted for determinism)."""
    out = []
    for p in paths:
        if os.path.isdir(p):
            names = sorted(n for n in os.listdir(p) if n.lower().endswith(RASTER_SUFFIXES))
            out.extend(os.path.join(p, n) for n in names)
        elif os.path.exists(p):
            out.append(p)
        else:
            raise UsageError(f"input not found: {p}")
    if not out:
        raise UsageError("no input rasters found")
    return out


def _resolve_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {"seed": args.seed, "threads": args.threads, "out": args.out}
    for name in ("looks", "mode", "epochs", "patch", "scale_factor", "tile", "regions", "indexes"):
        overrides[name] = getattr(args, name, None)
    return cfg.update(**overrides)


def _echo_config(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_ini())


# -- commands ------------------------------------------------------------------


def cmd_simulate(args, cfg):
    spec = cfg.speckle_spec()
    files = _list_rasters(args.clean)
    os.makedirs(cfg.out, exist_ok=True)
    rows = []
    for i, path in enumerate(files):
        try:
            clean = read_raster(path).values
        except (OSError, FormatError) as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        y, looks = speckle_realization(clean, spec, i)
        name = _stem(path) + ".bdsr"
        write_raster(y, os.path.join(cfg.out, name))
        rows.append((name, repr(float(looks)), cfg.seed))
    if not rows:
        raise UsageError("no readable clean rasters")
    with open(os.path.join(cfg.out, "speckle.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("file", "looks", "seed"))
        writer.writerows(rows)
    _echo_config(cfg)
    print(f"wrote {len(rows)} speckled rasters to {cfg.out}")


def _validation_set(cfg, spec):
    if not cfg.validation:
        return None
    with open(_require_file(cfg.validation, "validation manifest"), encoding="utf-8") as fh:
        paths, _ = parse_manifest(fh.read(), os.path.dirname(os.path.abspath(cfg.validation)))
    clean = [read_raster(p).values for p in paths]
    noisy = [speckle_realization(x, spec, VALIDATION_KEY + i)[0] for i, x in enumerate(clean)]
    return noisy, clean


def cmd_train(args, cfg):
    _require_file(args.manifest, "manifest")
    tcfg = cfg.train_config()
    spec = cfg.speckle_spec()
    with open(args.manifest, encoding="utf-8") as fh:
        paths, regions = parse_manifest(fh.read(), os.path.dirname(os.path.abspath(args.manifest)))
    manifest = DatasetManifest(paths, regions, cfg.patch, cfg.patch_stride(), cfg.seed)
    dataset = PairDataset(load_patches(manifest), spec, tcfg.mode, cfg.fresh_noise, cfg.seed)
    model = build_bdss(cfg.model_config(), seed=cfg.seed)
    ckpt_dir = os.path.join(cfg.out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    _echo_config(cfg)
    if args.resume:
        _require_file(args.resume, "resume state")
    model, train_log = train(
        dataset,
        model,
        tcfg,
        validation=_validation_set(cfg, spec),
        checkpoint_dir=ckpt_dir,
        resume=args.resume,
    )
    save_checkpoint(model, os.path.join(cfg.out, "model.bdsm"))
    with open(os.path.join(cfg.out, "train_log.csv"), "w", encoding="utf-8") as fh:
        fh.write(train_log.to_csv())
    if train_log.val_psnr:
        with open(os.path.join(cfg.out, "validation.csv"), "w", encoding="utf-8") as fh:
            fh.write("epoch,psnr\n")
            for epoch, value in enumerate(train_log.val_psnr):
                fh.write(f"{epoch},{value!r}\n")
    first = np.mean(train_log.losses[: max(1, len(train_log.losses) // 10)])
    last = np.mean(train_log.losses[-max(1, len(train_log.losses) // 10) :])
    print(f"trained {len(train_log.losses)} iterations; loss {first:.5g} -> {last:.5g}")


def cmd_despeckle(args, cfg):
    model = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    files = _list_rasters(args.inputs)
    os.makedirs(cfg.out, exist_ok=True)
    for path in files:
        y = read_raster(path, "speckled").values
        if np.any(y < 0):
            raise DomainError(f"{path}: negative intensities")
        out = despeckle(model, y, tile=cfg.tile)
        write_raster(out, os.path.join(cfg.out, _stem(path) + ".bdsr"))
        if args.preview:
            write_raster(out, os.path.join(cfg.out, _stem(path) + ".pgm"))
    _echo_config(cfg)
    print(f"despeckled {len(files)} rasters into {cfg.out}")


def parse_pairs(text, base_dir="."):
    """``name key=path ...`` lines; keys: despeckled (required), clean, speckled, regions."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, *items = line.split()
        entry = {"name": name}
        for item in items:
            key, sep, value = item.partition("=")
            if not sep or key not in ("despeckled", "clean", "speckled", "regions"):
                raise FormatError(f"pairs line {lineno}: bad field {item!r}")
            entry[key] = os.path.join(base_dir, value)
        if "despeckled" not in entry:
            raise FormatError(f"pairs line {lineno}: missing despeckled=")
        entries.append(entry)
    if not entries:
        raise FormatError("pairs file lists no images")
    return entries


def cmd_evaluate(args, cfg):
    if args.pairs:
        with open(_require_file(args.pairs, "pairs file"), encoding="utf-8") as fh:
            entries = parse_pairs(fh.read(), os.path.dirname(os.path.abspath(args.pairs)))
    elif args.despeckled:
        entry = {"name": _stem(args.despeckled), "despeckled": args.despeckled}
        for key in ("clean", "speckled"):
            if getattr(args, key):
                entry[key] = getattr(args, key)
        entries = [entry]
    else:
        raise UsageError("evaluate needs --pairs or --despeckled")
    shared_regions = read_regions(_require_file(cfg.regions, "region spec")) if cfg.regions else []
    reports = []
    for entry in entries:
        load = {k: read_raster(_require_file(entry[k], k)).values for k in ("despeckled", "clean", "speckled") if k in entry}
        regions = read_regions(_require_file(entry["regions"], "region spec")) if "regions" in entry else shared_regions
        reports.append(
            evaluate_image(
                load["despeckled"],
                clean=load.get("clean"),
                speckled=load.get("speckled"),
                regions=regions,
                indexes=cfg.index_list(),
                image=entry["name"],
            )
        )
    text = report_csv(reports)
    target = args.csv or os.path.join(cfg.out, "metrics.csv")
    os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    _echo_config(cfg)
    print(f"wrote {len(text.splitlines()) - 1} metric rows to {target}")


FIXTURE_CONFIG = """\
[run]
seed = {seed}

[speckle]
looks = 1,10

[model]
scale_factor = 8

[trainer]
epochs = 4
halve_every = 2
batch_size = 16
patch = 32

[metrics]
tile = 256
"""


def cmd_fixture(args, cfg):
    """Write a small synthetic train/test set, manifest and desk-scale config."""
    n_train, n_test = args.train_images, args.test_images
    scenes = scene_set(n_train + n_test, args.size, seed=cfg.seed, target=read_target(cfg.target) if cfg.target else None)
    for sub in ("train", "test"):
        os.makedirs(os.path.join(cfg.out, sub), exist_ok=True)
    lines = []
    for i, img in enumerate(scenes):
        sub = "train" if i < n_train else "test"
        name = f"scene_{i:03d}.bdsr"
        write_raster(img, os.path.join(cfg.out, sub, name))
        if sub == "train":
            lines.append(f"train/{name}")
    with open(os.path.join(cfg.out, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(cfg.out, "fixture.ini"), "w", encoding="utf-8") as fh:
        fh.write(FIXTURE_CONFIG.format(seed=cfg.seed))
    print(f"fixture with {n_train} training and {n_test} test scenes in {cfg.out}")


# -- entry point ---------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [run] [speckle] [model] [trainer] [data] [metrics]")
    common.add_argument("--seed", type=int, help="master seed (init, noise and data substreams)")
    common.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bdss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="inject speckle into clean rasters")
    p.add_argument("clean", nargs="+", help="clean rasters or directories")
    p.add_argument("--looks", help="fixed L, or 'low,high' to draw L per image")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="train a despeckling network")
    p.add_argument("manifest", help="text file listing clean training rasters")
    p.add_argument("--mode", choices=("self_supervised", "supervised"))
    p.add_argument("--looks")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--scale-factor", dest="scale_factor", type=int)
    p.add_argument("--resume", help="state.npz written by a previous run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("despeckle", parents=[common], help="apply a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("inputs", nargs="+", help="speckled rasters or directories")
    p.add_argument("--tile", type=int)
    p.add_argument("--preview", action="store_true", help="also write an 8-bit PGM")
    p.set_defaults(func=cmd_despeckle)

    p = sub.add_parser("evaluate", parents=[common], help="compute quality indexes to CSV")
    p.add_argument("--pairs", help="file of 'name despeckled=... clean=... speckled=... regions=...' lines")
    p.add_argument("--despeckled")
    p.add_argument("--clean")
    p.add_argument("--speckled")
    p.add_argument("--regions", help="region spec applied to every image")
    p.add_argument("--indexes", help="comma-separated subset of psnr,ssim,enl,tcr,epd_roa,mor")
    p.add_argument("--csv", help="output CSV path (default OUT/metrics.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fixture", parents=[common], help="write a synthetic desk-scale fixture")
    p.add_argument("--train-images", type=int, default=13)
    p.add_argument("--test-images", type=int, default=7)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolve_config(args)
        if cfg.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {cfg.threads}")
        with threadpool_limits(limits=cfg.threads):
            args.func(args, cfg)
    except (UsageError, ConfigurationError, FormatError, DomainError, GeometryError) as exc:
        print(f"bdss {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BDSSError, OSError, FloatingPointError) as exc:
        print(f"bdss {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
