"""Manifest-driven batch processing: fold splitting, enhancement, augmentation,
masking, histogram dumps, prediction reports and timing benchmarks."""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import enhance as enh
from .histogram import compute_histogram, histogram_csv
from .metrics import (
    ClassificationReport,
    TimingStats,
    classification_report,
    confusion_from_pairs,
    format_report,
    report_csv_rows,
    time_block,
)
from .preprocess import AugmentSpec, BinaryMask, ResizeSpec, apply_mask, augment_rotations, resize_bilinear
from .raster import ImageBuffer, decode_image, encode_image, format_for_path, read_image

log = logging.getLogger(__name__)

FOLD_COUNT = 5
SEED_ENV = "CXRENHANCE_SEED"


class ManifestError(ValueError):
    pass


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: str


@dataclass(frozen=True)
class Manifest:
    rows: tuple

    @property
    def classes(self) -> tuple:
        """Labels in order of first appearance."""
        return tuple(dict.fromkeys(r.label for r in self.rows))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["path", "label"])
        for r in self.rows:
            w.writerow([r.path, r.label])
        return out.getvalue()


def parse_manifest(source, classes: Sequence[str] | None = None) -> Manifest:
    """Read a ``path,label`` CSV from a file path or an open text file."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("manifest is empty") from None
    if [h.strip() for h in header] != ["path", "label"]:
        raise ManifestError(f"malformed header {header!r}; expected 'path,label'")
    allowed = set(classes) if classes is not None else None
    seen = set()
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 2:
            raise ManifestError(f"line {lineno}: expected 2 fields, got {len(rec)}")
        path, label = rec[0].strip(), rec[1].strip()
        if not path or not label:
            raise ManifestError(f"line {lineno}: empty path or label")
        if path in seen:
            raise ManifestError(f"duplicate path {path!r} (line {lineno})")
        if allowed is not None and label not in allowed:
            raise ManifestError(f"unknown label {label!r} (line {lineno})")
        seen.add(path)
        rows.append(ManifestRow(path, label))
    if not rows:
        raise ManifestError("manifest has no rows")
    return Manifest(tuple(rows))


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldCounts:
    train: int
    augmented_train: int
    val: int
    test: int


def split_counts(n: int, copies_per_image: int = 0) -> FoldCounts:
    """Per-fold image counts for a class of ``n`` images.

    Test takes n - floor(0.8 n); of the remaining pool, round-half-up(0.8 pool)
    is training and the rest validation. Augmented training adds
    ``copies_per_image`` rotated variants per training image.
    """
    pool = (4 * n) // 5
    train = (8 * pool + 5) // 10
    return FoldCounts(train=train, augmented_train=train * (1 + copies_per_image), val=pool - train, test=n - pool)


@dataclass(frozen=True)
class FoldPlan:
    """Stratified k-fold assignment.

    ``assignments[(fold, label)]`` maps ``"train"``/``"val"``/``"test"`` to a tuple
    of manifest row indices.
    """

    fold_count: int
    classes: tuple
    assignments: dict = field(repr=False)

    def indices(self, fold: int, role: str, label: str | None = None) -> list[int]:
        labels = [label] if label is not None else self.classes
        return [i for c in labels for i in self.assignments[(fold, c)][role]]

    def counts(self, fold: int, label: str, copies_per_image: int = 0) -> FoldCounts:
        a = self.assignments[(fold, label)]
        train = len(a["train"])
        return FoldCounts(train, train * (1 + copies_per_image), len(a["val"]), len(a["test"]))

    def rows(self, manifest: Manifest):
        """(path, label, fold, role) for every fold, ordered by fold, role, class."""
        for f in range(self.fold_count):
            for role in ("train", "val", "test"):
                for i in self.indices(f, role):
                    r = manifest.rows[i]
                    yield r.path, r.label, f, role


def _class_rng(seed: int, label: str) -> np.random.Generator:
    words = list(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, len(words), *words]))


def make_folds(m: Manifest, seed: int = 0, fold_count: int = FOLD_COUNT) -> FoldPlan:
    """Deterministic stratified split.

    Each class is shuffled by ``seed`` and cut into ``fold_count`` contiguous test
    chunks whose sizes differ by at most one (larger chunks first, so fold 0
    always has the nominal n - floor(0.8 n) test images). The rest of the class
    is the fold's pool, split by :func:`split_counts` arithmetic.
    """
    by_class: dict[str, list[int]] = {}
    for i, r in enumerate(m.rows):
        by_class.setdefault(r.label, []).append(i)
    assignments = {}
    for label, idx in by_class.items():
        if len(idx) < fold_count:
            raise ManifestError(f"class {label!r} has {len(idx)} rows; need at least {fold_count}")
        order = np.asarray(idx)[_class_rng(seed, label).permutation(len(idx))]
        chunks = np.array_split(order, fold_count)
        for f in range(fold_count):
            pool = np.concatenate([chunks[g] for g in range(fold_count) if g != f])
            n_train = (8 * len(pool) + 5) // 10
            assignments[(f, label)] = {
                "train": tuple(int(i) for i in pool[:n_train]),
                "val": tuple(int(i) for i in pool[n_train:]),
                "test": tuple(int(i) for i in chunks[f]),
            }
    return FoldPlan(fold_count, tuple(by_class), assignments)


def write_fold_csvs(m: Manifest, plan: FoldPlan, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    rows = list(plan.rows(m))
    for f in range(plan.fold_count):
        p = out_dir / f"fold_{f}.csv"
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "label", "fold", "role"])
            w.writerows(r for r in rows if r[2] == f)
        files.append(p)
    return files


def format_split_table(m: Manifest, plan: FoldPlan, augment_classes=(), copies_per_image: int = 1) -> str:
    lines = ["class,count,fold,train,augmented_train,val,test"]
    sizes = {c: 0 for c in plan.classes}
    for r in m.rows:
        sizes[r.label] += 1
    for c in plan.classes:
        copies = copies_per_image if c in augment_classes else 0
        for f in range(plan.fold_count):
            k = plan.counts(f, c, copies)
            lines.append(f"{c},{sizes[c]},{f},{k.train},{k.augmented_train},{k.val},{k.test}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    technique: str = "original"
    params: enh.EnhanceParams = field(default_factory=enh.EnhanceParams)
    resize: ResizeSpec | None = ResizeSpec(*(224, 224))
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    augment_classes: tuple = ()
    seed: int = 0
    root: Path = Path(".")
    out_dir: Path = Path("out")
    mask_dir: Path | None = None
    workers: int = 1

    def __post_init__(self):
        if self.technique not in enh.TECHNIQUES:
            raise ValueError(f"unknown technique {self.technique!r}; expected one of {enh.TECHNIQUES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def config_to_dict(cfg: RunConfig) -> dict:
    p = cfg.params
    return {
        "technique": cfg.technique,
        "clahe.tiles_x": p.clahe.tiles_x,
        "clahe.tiles_y": p.clahe.tiles_y,
        "clahe.clip_factor": p.clahe.clip_factor,
        "gamma.a": p.gamma.a,
        "bcet.L": p.bcet.L,
        "bcet.H": p.bcet.H,
        "bcet.E": p.bcet.E,
        "resize": "none" if cfg.resize is None else f"{cfg.resize.target_w}x{cfg.resize.target_h}",
        "augment.copies": cfg.augment.copies_per_image,
        "augment.max_angle": cfg.augment.max_abs_angle,
        "augment.classes": ",".join(cfg.augment_classes),
        "seed": cfg.seed,
        "root": str(cfg.root),
        "out": str(cfg.out_dir),
        "masks": "" if cfg.mask_dir is None else str(cfg.mask_dir),
        "workers": cfg.workers,
    }


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_to_dict(cfg).items())


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _parse_size(v: str) -> ResizeSpec | None:
    if v.lower() in ("", "none", "off"):
        return None
    w, _, h = v.lower().partition("x")
    return ResizeSpec(int(w), int(h or w))


def config_from_dict(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay string-valued settings (from a config file or CLI flags) on ``base``."""
    d = {k: str(v) for k, v in config_to_dict(base or RunConfig(seed=default_seed())).items()}
    unknown = set(values) - set(d)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    d.update({k: str(v) for k, v in values.items() if v is not None})
    params = enh.EnhanceParams(
        clahe=enh.ClaheParams(int(d["clahe.tiles_x"]), int(d["clahe.tiles_y"]), float(d["clahe.clip_factor"])),
        gamma=enh.GammaParams(float(d["gamma.a"])),
        bcet=enh.BcetTargets(float(d["bcet.L"]), float(d["bcet.H"]), float(d["bcet.E"])),
    )
    seed = int(d["seed"])
    return RunConfig(
        technique=d["technique"],
        params=params,
        resize=_parse_size(d["resize"]),
        augment=AugmentSpec(int(d["augment.copies"]), float(d["augment.max_angle"]), seed),
        augment_classes=tuple(c.strip() for c in d["augment.classes"].split(",") if c.strip()),
        seed=seed,
        root=Path(d["root"]),
        out_dir=Path(d["out"]),
        mask_dir=Path(d["masks"]) if d["masks"] else None,
        workers=int(d["workers"]),
    )


# ---------------------------------------------------------------------------
# batch runs
# ---------------------------------------------------------------------------

@dataclass
class BatchSummary:
    total: int
    written: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (path, "ErrorClass: message")
    timing: TimingStats | None = None

    @property
    def ok(self) -> int:
        return len(self.written)

    def format(self) -> str:
        lines = [f"processed: {self.total}", f"written: {self.ok}", f"failed: {len(self.failures)}"]
        if self.timing is not None:
            t = self.timing
            lines.append(
                f"dt_ms mean={t.mean * 1e3:.3f} median={t.median * 1e3:.3f} "
                f"min={t.min * 1e3:.3f} max={t.max * 1e3:.3f}"
            )
        for path, err in self.failures:
            lines.append(f"failure: {path}: {err}")
        return "\n".join(lines) + "\n"


def output_path(cfg: RunConfig, row: ManifestRow, suffix: str = "") -> Path:
    p = Path(row.path)
    return cfg.out_dir / row.label / f"{p.stem}{suffix}{p.suffix}"


def _check_output_collisions(m: Manifest, cfg: RunConfig):
    seen = {}
    for r in m.rows:
        o = output_path(cfg, r)
        if o in seen:
            raise ManifestError(f"rows {seen[o]!r} and {r.path!r} would both write {o}")
        seen[o] = r.path


def _load_mask(cfg: RunConfig, row: ManifestRow) -> BinaryMask:
    return BinaryMask.from_image(read_image(cfg.root / cfg.mask_dir / row.path))


def process_image(img: ImageBuffer, cfg: RunConfig, mask: BinaryMask | None = None):
    """mask -> resize -> enhance for one image; returns (output, enhancement seconds)."""
    if mask is not None:
        img = apply_mask(img, mask)
    if cfg.resize is not None:
        img = resize_bilinear(img, cfg.resize)
    return time_block(enh.apply_technique, img, cfg.technique, cfg.params)


def _map_rows(fn, rows, workers: int):
    if workers == 1:
        return [fn(r) for r in rows]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rows))


def run_enhance_batch(m: Manifest, cfg: RunConfig) -> BatchSummary:
    _check_output_collisions(m, cfg)

    def one(row: ManifestRow):
        try:
            src = cfg.root / row.path
            img = decode_image(src.read_bytes())
            mask = _load_mask(cfg, row) if cfg.mask_dir is not None else None
            out, dt = process_image(img, cfg, mask)
            dest = output_path(cfg, row)
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(encode_image(out, format_for_path(dest, out.channels)))
            return row, dest, dt, None
        except Exception as exc:  # per-image failures are collected, not fatal
            return row, None, None, f"{type(exc).__name__}: {exc}"

    results = _map_rows(one, m.rows, cfg.workers)
    summary = BatchSummary(total=len(m))
    times = []
    for row, dest, dt, err in results:
        if err is None:
            summary.written.append(dest)
            times.append(dt)
        else:
            log.warning("failed on %s: %s", row.path, err)
            summary.failures.append((row.path, err))
    if times:
        summary.timing = TimingStats.from_times(times)
    return summary


def run_augment(m: Manifest, cfg: RunConfig) -> tuple[Manifest, BatchSummary]:
    """Copy every row into ``out_dir`` and add rotated variants for flagged classes.

    Returns the new manifest (paths relative to ``out_dir``) and a summary.
    Variants are keyed by (seed, manifest path), so output is schedule independent.
    """
    _check_output_collisions(m, cfg)

    def one(row: ManifestRow):
        try:
            src = cfg.root / row.path
            raw = src.read_bytes()
            img = decode_image(raw)
            dest = output_path(cfg, row)
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(raw)
            new_rows = [ManifestRow(dest.relative_to(cfg.out_dir).as_posix(), row.label)]
            if row.label in cfg.augment_classes:
                for i, rot in enumerate(augment_rotations(img, cfg.augment, row.path)):
                    d = output_path(cfg, row, f"_rot{i}")
                    d.write_bytes(encode_image(rot, format_for_path(d, rot.channels)))
                    new_rows.append(ManifestRow(d.relative_to(cfg.out_dir).as_posix(), row.label))
            return row, new_rows, None
        except Exception as exc:
            return row, [], f"{type(exc).__name__}: {exc}"

    results = _map_rows(one, m.rows, cfg.workers)
    summary = BatchSummary(total=len(m))
    rows = []
    for row, new_rows, err in results:
        if err is None:
            rows.extend(new_rows)
            summary.written.extend(cfg.out_dir / r.path for r in new_rows)
        else:
            summary.failures.append((row.path, err))
    new_manifest = Manifest(tuple(rows))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "manifest.csv").write_text(new_manifest.to_csv(), encoding="utf-8")
    return new_manifest, summary


def run_mask_batch(m: Manifest, cfg: RunConfig) -> BatchSummary:
    """Apply the lung mask stored at ``mask_dir/<path>`` to every row."""
    if cfg.mask_dir is None:
        raise ValueError("masking needs a mask directory")
    masked_cfg = replace(cfg, technique="original", resize=None)
    return run_enhance_batch(m, masked_cfg)


# ---------------------------------------------------------------------------
# reports, histograms, benchmarks
# ---------------------------------------------------------------------------

def read_predictions(source) -> list[tuple[str, str, str]]:
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("predictions file is empty") from None
    if [h.strip() for h in header] != ["path", "true_label", "pred_label"]:
        raise ManifestError(f"malformed header {header!r}; expected 'path,true_label,pred_label'")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 3:
            raise ManifestError(f"line {lineno}: expected 3 fields, got {len(rec)}")
        rows.append(tuple(f.strip() for f in rec))
    if not rows:
        raise ManifestError("predictions file has no rows")
    return rows


def write_report(predictions, classes: Sequence[str] | None, out_path, average: str = "weighted") -> ClassificationReport:
    """Write the text report to ``out_path`` and a CSV next to it (``.csv`` suffix).

    ``classes`` defaults to the true labels in order of first appearance.
    """
    rows = read_predictions(predictions)
    if classes is None:
        classes = list(dict.fromkeys(r[1] for r in rows))
    cm = confusion_from_pairs(((r[1], r[2]) for r in rows), classes)
    report = classification_report(cm, average=average)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(format_report(report), encoding="utf-8")
    with out_path.with_suffix(".csv").open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(report_csv_rows(report))
    return report


def dump_histogram(image_path, out_path) -> list[Path]:
    """256-row ``bin,count`` CSV; 3-channel images get one file per channel (_r, _g, _b)."""
    img = read_image(image_path)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if img.channels == 1:
        out_path.write_text(histogram_csv(compute_histogram(img.plane(0))), encoding="utf-8")
        return [out_path]
    files = []
    for c, tag in enumerate("rgb"):
        p = out_path.with_name(f"{out_path.stem}_{tag}{out_path.suffix}")
        p.write_text(histogram_csv(compute_histogram(img.plane(c))), encoding="utf-8")
        files.append(p)
    return files


def bench(images: Sequence[ImageBuffer], techniques=enh.TECHNIQUES, repeats: int = 1,
          params: enh.EnhanceParams = enh.EnhanceParams()) -> dict:
    """Per-image enhancement time for each technique; returns {technique: TimingStats}."""
    out = {}
    for t in techniques:
        times = []
        for _ in range(repeats):
            for img in images:
                _, dt = time_block(enh.apply_technique, img, t, params)
                times.append(dt)
        out[t] = TimingStats.from_times(times)
    return out


def format_timing_table(stats: dict) -> str:
    lines = [f"{'technique':<12}{'n':>6}{'mean dt (s)':>14}{'median':>12}{'min':>12}{'max':>12}"]
    for t, s in stats.items():
        lines.append(f"{t:<12}{len(s.times):>6}{s.mean:>14.5f}{s.median:>12.5f}{s.min:>12.5f}{s.max:>12.5f}")
    return "\n".join(lines) + "\n"
