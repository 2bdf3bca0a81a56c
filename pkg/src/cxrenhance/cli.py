"""Command-line batch driver.

Subcommands: enhance, split, augment, mask, hist, report, bench. All relative
paths resolve against ``--root``. On failure the last stderr line is
``error: kind=<ExceptionName> message=<text>`` and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import enhance as enh
from . import pipeline as pl
from .synthetic import synthetic_cxr

EXIT_ERROR = 2


def _add_run_options(p: argparse.ArgumentParser, technique: bool = True):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    if technique:
        p.add_argument("--technique", choices=enh.TECHNIQUES)
    p.add_argument("--clahe-tiles", metavar="XxY", help="CLAHE tile grid, e.g. 8x8")
    p.add_argument("--clip-factor", type=float, help="CLAHE clip factor")
    p.add_argument("--gamma-a", type=float, help="gamma weighting factor a in [0, 1)")
    p.add_argument("--bcet", metavar="L,H,E", help="BCET targets")
    p.add_argument("--resize", metavar="WxH", help="resize target, or 'none'")
    p.add_argument("--copies", type=int, help="rotated copies per augmented image")
    p.add_argument("--max-angle", type=float, help="max absolute rotation angle (degrees)")
    p.add_argument("--augment-classes", metavar="A,B", help="classes that receive augmentation")
    p.add_argument("--masks", help="directory of lung masks mirroring manifest paths")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cxrenhance", description=__doc__.splitlines()[0])
    ap.add_argument("--root", type=Path, default=Path("."), help="base directory for relative paths")
    ap.add_argument("--seed", type=int, default=None, help=f"default from ${pl.SEED_ENV} or 0")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="mask -> resize -> enhance every manifest row")
    p.add_argument("manifest")
    _add_run_options(p)

    p = sub.add_parser("split", help="write stratified 5-fold CSVs (path,label,fold,role)")
    p.add_argument("manifest")
    p.add_argument("--out", default="folds")
    p.add_argument("--augment-classes", default="", metavar="A,B")
    p.add_argument("--copies", type=int, default=1)

    p = sub.add_parser("augment", help="add seeded rotated copies for flagged classes")
    p.add_argument("manifest")
    _add_run_options(p, technique=False)

    p = sub.add_parser("mask", help="apply lung masks to every manifest row")
    p.add_argument("manifest")
    _add_run_options(p, technique=False)

    p = sub.add_parser("hist", help="dump a bin,count histogram CSV")
    p.add_argument("image")
    p.add_argument("out")

    p = sub.add_parser("report", help="classification report from a predictions CSV")
    p.add_argument("predictions")
    p.add_argument("out")
    p.add_argument("--classes", metavar="A,B,C")
    p.add_argument("--average", choices=("weighted", "macro"), default="weighted")

    p = sub.add_parser("bench", help="time every technique, printed as a dt table")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N synthetic images")
    p.add_argument("--size", type=int, default=512, help="synthetic image side length")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--techniques", default=",".join(enh.TECHNIQUES))
    _add_run_options(p, technique=False)
    return ap


def _overrides(args) -> dict:
    o = {}
    if getattr(args, "technique", None):
        o["technique"] = args.technique
    if getattr(args, "clahe_tiles", None):
        x, _, y = args.clahe_tiles.lower().partition("x")
        o["clahe.tiles_x"], o["clahe.tiles_y"] = x, y or x
    if getattr(args, "clip_factor", None) is not None:
        o["clahe.clip_factor"] = args.clip_factor
    if getattr(args, "gamma_a", None) is not None:
        o["gamma.a"] = args.gamma_a
    if getattr(args, "bcet", None):
        parts = args.bcet.split(",")
        if len(parts) != 3:
            raise ValueError("--bcet expects L,H,E")
        o["bcet.L"], o["bcet.H"], o["bcet.E"] = parts
    if getattr(args, "resize", None):
        o["resize"] = args.resize
    if getattr(args, "copies", None) is not None:
        o["augment.copies"] = args.copies
    if getattr(args, "max_angle", None) is not None:
        o["augment.max_angle"] = args.max_angle
    if getattr(args, "augment_classes", None):
        o["augment.classes"] = args.augment_classes
    if getattr(args, "masks", None):
        o["masks"] = args.masks
    if getattr(args, "workers", None) is not None:
        o["workers"] = args.workers
    if getattr(args, "out", None):
        o["out"] = args.out
    if args.seed is not None:
        o["seed"] = args.seed
    return o


def _run_config(args) -> pl.RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(pl.parse_config_text(_resolve(args, args.config).read_text(encoding="utf-8")))
    values.update(_overrides(args))
    values["root"] = str(args.root)
    cfg = pl.config_from_dict(values)
    out = cfg.out_dir if cfg.out_dir.is_absolute() else args.root / cfg.out_dir
    return pl.RunConfig(**{**cfg.__dict__, "out_dir": out})


def _resolve(args, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else args.root / p


def _seed(args) -> int:
    return args.seed if args.seed is not None else pl.default_seed()


def cmd_enhance(args) -> int:
    cfg = _run_config(args)
    if args.print_config:
        print(pl.format_config(cfg), end="")
        return 0
    summary = pl.run_enhance_batch(pl.parse_manifest(_resolve(args, args.manifest)), cfg)
    print(summary.format(), end="")
    return 0


def cmd_split(args) -> int:
    m = pl.parse_manifest(_resolve(args, args.manifest))
    plan = pl.make_folds(m, _seed(args))
    pl.write_fold_csvs(m, plan, _resolve(args, args.out))
    classes = tuple(c for c in args.augment_classes.split(",") if c)
    print(pl.format_split_table(m, plan, classes, args.copies), end="")
    return 0


def cmd_augment(args) -> int:
    cfg = _run_config(args)
    if args.print_config:
        print(pl.format_config(cfg), end="")
        return 0
    new, summary = pl.run_augment(pl.parse_manifest(_resolve(args, args.manifest)), cfg)
    print(summary.format(), end="")
    print(f"manifest: {cfg.out_dir / 'manifest.csv'} ({len(new)} rows)")
    return 0


def cmd_mask(args) -> int:
    cfg = _run_config(args)
    if args.print_config:
        print(pl.format_config(cfg), end="")
        return 0
    summary = pl.run_mask_batch(pl.parse_manifest(_resolve(args, args.manifest)), cfg)
    print(summary.format(), end="")
    return 0


def cmd_hist(args) -> int:
    for p in pl.dump_histogram(_resolve(args, args.image), _resolve(args, args.out)):
        print(p)
    return 0


def cmd_report(args) -> int:
    classes = [c for c in args.classes.split(",") if c] if args.classes else None
    out = _resolve(args, args.out)
    pl.write_report(_resolve(args, args.predictions), classes, out, average=args.average)
    print(out.read_text(encoding="utf-8"), end="")
    return 0


def cmd_bench(args) -> int:
    cfg = _run_config(args)
    if args.print_config:
        print(pl.format_config(cfg), end="")
        return 0
    if args.synthetic is not None:
        rng = np.random.default_rng(cfg.seed)
        images = [synthetic_cxr(args.size, rng) for _ in range(args.synthetic)]
    else:
        from .raster import read_image

        m = pl.parse_manifest(_resolve(args, args.manifest))
        images = [read_image(args.root / r.path) for r in m.rows]
    techniques = [t.strip() for t in args.techniques.split(",") if t.strip()]
    stats = pl.bench(images, techniques, args.repeats, cfg.params)
    print(pl.format_timing_table(stats), end="")
    return 0


COMMANDS = {
    "enhance": cmd_enhance,
    "split": cmd_split,
    "augment": cmd_augment,
    "mask": cmd_mask,
    "hist": cmd_hist,
    "report": cmd_report,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: kind={type(exc).__name__} message={msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
