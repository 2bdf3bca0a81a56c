import io
import itertools

import numpy as np
import pytest

from cxrenhance import enhance as enh
from cxrenhance import pipeline as pl
from cxrenhance.cli import main
from cxrenhance.preprocess import ResizeSpec, resize_bilinear
from cxrenhance.raster import ImageBuffer, read_image, write_image

from conftest import make_dataset, tree_bytes

PUBLISHED_FOLD_COUNTS = {
    # class size: (train, augmented train, val, test) per fold
    3616: (2314, 4628, 578, 724),
    8851: (5664, 5664, 1416, 1771),
    6012: (3847, 3847, 962, 1203),
}


def manifest_of(sizes):
    rows = []
    for c, n in enumerate(sizes):
        rows += [pl.ManifestRow(f"c{c}/{i}.png", f"c{c}") for i in range(n)]
    return pl.Manifest(tuple(rows))


# -- manifest --------------------------------------------------------------

def test_parse_manifest_order():
    m = pl.parse_manifest(io.StringIO("path,label\nb.png,x\na.png,y\nc.png,x\n"))
    assert [r.path for r in m] == ["b.png", "a.png", "c.png"]
    assert m.classes == ("x", "y")


def test_parse_manifest_duplicate():
    with pytest.raises(pl.ManifestError, match="a.png"):
        pl.parse_manifest(io.StringIO("path,label\na.png,x\na.png,y\n"))


def test_parse_manifest_bad_header():
    with pytest.raises(pl.ManifestError, match="header"):
        pl.parse_manifest(io.StringIO("file,class\na.png,x\n"))


def test_parse_manifest_empty():
    with pytest.raises(pl.ManifestError):
        pl.parse_manifest(io.StringIO(""))
    with pytest.raises(pl.ManifestError):
        pl.parse_manifest(io.StringIO("path,label\n"))


def test_parse_manifest_unknown_label():
    with pytest.raises(pl.ManifestError, match="'z'"):
        pl.parse_manifest(io.StringIO("path,label\na.png,z\n"), classes=["x", "y"])


# -- folds -----------------------------------------------------------------

@pytest.mark.parametrize("n", sorted(PUBLISHED_FOLD_COUNTS))
def test_split_counts_table(n):
    copies = 1 if n == 3616 else 0
    k = pl.split_counts(n, copies)
    assert (k.train, k.augmented_train, k.val, k.test) == PUBLISHED_FOLD_COUNTS[n]


def test_make_folds_partitions():
    m = manifest_of([23, 17, 5])
    plan = pl.make_folds(m, seed=3)
    for label in plan.classes:
        members = {i for i, r in enumerate(m.rows) if r.label == label}
        tests = [set(plan.assignments[(f, label)]["test"]) for f in range(5)]
        for a, b in itertools.combinations(tests, 2):
            assert not a & b
        assert set().union(*tests) == members
        sizes = [len(t) for t in tests]
        assert max(sizes) - min(sizes) <= 1
        for f in range(5):
            a = plan.assignments[(f, label)]
            parts = [set(a[r]) for r in ("train", "val", "test")]
            assert sum(map(len, parts)) == len(members)
            assert set().union(*parts) == members


def test_make_folds_fold0_matches_published_counts():
    m = manifest_of([3616, 8851, 6012])
    plan = pl.make_folds(m, seed=0)
    for c, n in enumerate([3616, 8851, 6012]):
        k = plan.counts(0, f"c{c}", 1 if n == 3616 else 0)
        assert (k.train, k.augmented_train, k.val, k.test) == PUBLISHED_FOLD_COUNTS[n]
        for f in range(1, 5):
            kf = plan.counts(f, f"c{c}")
            assert abs(kf.test - PUBLISHED_FOLD_COUNTS[n][3]) <= 1
            assert abs(kf.train - PUBLISHED_FOLD_COUNTS[n][0]) <= 1


def test_make_folds_deterministic():
    m = manifest_of([40, 30])
    assert pl.make_folds(m, 5).assignments == pl.make_folds(m, 5).assignments
    assert pl.make_folds(m, 5).assignments != pl.make_folds(m, 6).assignments


def test_make_folds_too_small():
    with pytest.raises(pl.ManifestError):
        pl.make_folds(manifest_of([10, 4]), 0)


def test_write_fold_csvs(tmp_path):
    m = manifest_of([12, 8])
    plan = pl.make_folds(m, 1)
    files = pl.write_fold_csvs(m, plan, tmp_path)
    assert len(files) == 5
    lines = files[2].read_text().splitlines()
    assert lines[0] == "path,label,fold,role"
    assert len(lines) == 1 + 20
    assert {l.split(",")[2] for l in lines[1:]} == {"2"}
    assert {l.split(",")[3] for l in lines[1:]} == {"train", "val", "test"}


# -- config ----------------------------------------------------------------

def test_config_round_trip():
    cfg = pl.RunConfig(technique="gamma", augment_classes=("covid",))
    text = pl.format_config(cfg)
    again = pl.config_from_dict(pl.parse_config_text(text))
    assert again == cfg


def test_config_rejects_unknown_key():
    with pytest.raises(ValueError):
        pl.config_from_dict({"gama.a": "0.3"})
    with pytest.raises(ValueError):
        pl.config_from_dict({"technique": "sharpen"})


def test_seed_from_env(monkeypatch):
    monkeypatch.setenv(pl.SEED_ENV, "77")
    assert pl.config_from_dict({}).seed == 77


# -- batch -----------------------------------------------------------------

def test_enhance_batch_complement(tmp_path):
    manifest = make_dataset(tmp_path / "in", (6, 4), ["covid", "normal"])
    m = pl.parse_manifest(manifest)
    cfg = pl.RunConfig(technique="complement", resize=ResizeSpec(32, 24), root=tmp_path / "in", out_dir=tmp_path / "out")
    summary = pl.run_enhance_batch(m, cfg)
    assert summary.ok == 10 and not summary.failures
    assert len(summary.timing.times) == 10
    for r in m:
        expect = enh.complement(resize_bilinear(read_image(tmp_path / "in" / r.path), ResizeSpec(32, 24)))
        assert read_image(tmp_path / "out" / r.path) == expect


def test_enhance_batch_original_is_resize_only(tmp_path):
    manifest = make_dataset(tmp_path / "in", (3,), ["normal"], fmt="pgm")
    m = pl.parse_manifest(manifest)
    cfg = pl.RunConfig(technique="original", resize=None, root=tmp_path / "in", out_dir=tmp_path / "out")
    pl.run_enhance_batch(m, cfg)
    for r in m:
        assert (tmp_path / "out" / r.path).read_bytes() == (tmp_path / "in" / r.path).read_bytes()


def test_enhance_batch_collects_failures(tmp_path):
    manifest = make_dataset(tmp_path / "in", (3,), ["normal"])
    (tmp_path / "in" / "normal" / "img001.png").write_bytes(b"not an image")
    with manifest.open("a") as fh:
        fh.write("normal/missing.png,normal\n")
    cfg = pl.RunConfig(technique="he", root=tmp_path / "in", out_dir=tmp_path / "out")
    summary = pl.run_enhance_batch(pl.parse_manifest(manifest), cfg)
    assert summary.ok == 2
    assert [p for p, _ in summary.failures] == ["normal/img001.png", "normal/missing.png"]
    assert "MalformedHeaderError" in summary.failures[0][1]


def test_enhance_batch_with_masks(tmp_path):
    from cxrenhance.synthetic import synthetic_lung_mask

    manifest = make_dataset(tmp_path / "in", (2,), ["covid"], size=40)
    mask_img = ImageBuffer(synthetic_lung_mask(40).astype(np.uint8) * 255)
    (tmp_path / "in" / "masks" / "covid").mkdir(parents=True)
    for i in range(2):
        write_image(tmp_path / "in" / "masks" / "covid" / f"img{i:03d}.png", mask_img)
    cfg = pl.RunConfig(technique="original", resize=None, root=tmp_path / "in",
                       out_dir=tmp_path / "out", mask_dir=tmp_path / "in" / "masks")
    summary = pl.run_mask_batch(pl.parse_manifest(manifest), cfg)
    assert summary.ok == 2
    out = read_image(tmp_path / "out" / "covid" / "img000.png").data[..., 0]
    assert (out[~synthetic_lung_mask(40)] == 0).all()


def test_augment_flags_only_selected_classes(tmp_path):
    manifest = make_dataset(tmp_path / "in", (4, 3), ["covid", "normal"])
    cfg = pl.RunConfig(augment_classes=("covid",), root=tmp_path / "in", out_dir=tmp_path / "aug", seed=5)
    new, summary = pl.run_augment(pl.parse_manifest(manifest), cfg)
    assert not summary.failures
    counts = {c: sum(1 for r in new if r.label == c) for c in ("covid", "normal")}
    assert counts == {"covid": 8, "normal": 3}
    assert pl.parse_manifest(tmp_path / "aug" / "manifest.csv") == new
    again, _ = pl.run_augment(pl.parse_manifest(manifest), pl.RunConfig(
        augment_classes=("covid",), root=tmp_path / "in", out_dir=tmp_path / "aug2", seed=5, workers=4))
    assert tree_bytes(tmp_path / "aug") == tree_bytes(tmp_path / "aug2")


# -- reports and histograms ------------------------------------------------

def _predictions(tmp_path, pairs):
    p = tmp_path / "pred.csv"
    p.write_text("path,true_label,pred_label\n" + "".join(f"i{n}.png,{t},{q}\n" for n, (t, q) in enumerate(pairs)))
    return p


def test_write_report_perfect(tmp_path):
    pairs = [(c, c) for c in "abc" for _ in range(4)]
    rep = pl.write_report(_predictions(tmp_path, pairs), ["a", "b", "c"], tmp_path / "rep.txt")
    text = (tmp_path / "rep.txt").read_text()
    assert rep.overall_accuracy == 1.0
    assert "accuracy: 1.0000" in text and "f1: 1.0000" in text and "specificity: 1.0000" in text
    assert (tmp_path / "rep.csv").read_text().startswith("class,precision,recall,f1,specificity,support")


def test_write_report_three_class(tmp_path):
    cm = [[8, 1, 1], [0, 9, 1], [1, 0, 9]]
    classes = ["a", "b", "c"]
    pairs = [(classes[i], classes[j]) for i in range(3) for j in range(3) for _ in range(cm[i][j])]
    assert len(pairs) == 30
    rep = pl.write_report(_predictions(tmp_path, pairs), classes, tmp_path / "rep.txt")
    assert f"{rep.overall_accuracy:.4f}" == "0.8667"
    assert "accuracy: 0.8667" in (tmp_path / "rep.txt").read_text()


def test_write_report_unknown_label(tmp_path):
    with pytest.raises(ValueError, match="'z'"):
        pl.write_report(_predictions(tmp_path, [("a", "z")]), ["a", "b"], tmp_path / "rep.txt")


def test_write_report_empty(tmp_path):
    p = tmp_path / "pred.csv"
    p.write_text("path,true_label,pred_label\n")
    with pytest.raises(pl.ManifestError):
        pl.write_report(p, ["a"], tmp_path / "rep.txt")


def test_dump_histogram_constant(tmp_path):
    write_image(tmp_path / "c.pgm", ImageBuffer(np.full((3, 3), 7, np.uint8)))
    [out] = pl.dump_histogram(tmp_path / "c.pgm", tmp_path / "h.csv")
    rows = out.read_text().splitlines()
    assert rows[0] == "bin,count" and len(rows) == 257
    assert rows[8] == "7,9"
    assert sum(int(r.split(",")[1]) for r in rows[1:]) == 9


def _counts(path):
    return [int(r.split(",")[1]) for r in path.read_text().splitlines()[1:]]


def test_dump_histogram_complement_reverses(tmp_path, rng):
    img = ImageBuffer(rng.integers(0, 256, (20, 30)).astype(np.uint8))
    write_image(tmp_path / "a.png", img)
    write_image(tmp_path / "b.png", enh.complement(img))
    [a] = pl.dump_histogram(tmp_path / "a.png", tmp_path / "a.csv")
    [b] = pl.dump_histogram(tmp_path / "b.png", tmp_path / "b.csv")
    assert _counts(b) == _counts(a)[::-1]
    assert sum(_counts(a)) == 600


def test_dump_histogram_rgb(tmp_path, rng):
    write_image(tmp_path / "a.ppm", ImageBuffer(rng.integers(0, 256, (5, 6, 3)).astype(np.uint8)))
    files = pl.dump_histogram(tmp_path / "a.ppm", tmp_path / "h.csv")
    assert [f.name for f in files] == ["h_r.csv", "h_g.csv", "h_b.csv"]
    assert all(sum(_counts(f)) == 30 for f in files)


def test_bench_table():
    imgs = [ImageBuffer(np.random.default_rng(i).integers(0, 256, (32, 32, 1)).astype(np.uint8)) for i in range(3)]
    stats = pl.bench(imgs, repeats=2)
    assert list(stats) == list(enh.TECHNIQUES)
    assert all(len(s.times) == 6 for s in stats.values())
    table = pl.format_timing_table(stats)
    assert table.splitlines()[0].startswith("technique")
    assert len(table.splitlines()) == 7


# -- CLI -------------------------------------------------------------------

def test_cli_enhance_and_print_config(tmp_path, capsys):
    make_dataset(tmp_path, (3,), ["covid"])
    assert main(["--root", str(tmp_path), "enhance", "manifest.csv", "--technique", "gamma",
                 "--gamma-a", "0.3", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert "technique = gamma" in out and "gamma.a = 0.3" in out and "clahe.tiles_x = 8" in out
    assert main(["--root", str(tmp_path), "enhance", "manifest.csv", "--technique", "clahe",
                 "--clahe-tiles", "4x4", "--resize", "64x64", "--out", "res"]) == 0
    out = read_image(tmp_path / "res" / "covid" / "img000.png")
    assert (out.width, out.height) == (64, 64)


def test_cli_config_file(tmp_path, capsys):
    make_dataset(tmp_path, (3,), ["covid"])
    (tmp_path / "run.cfg").write_text("# bcet run\ntechnique = bcet\nbcet.E = 120\nresize = none\n")
    assert main(["--root", str(tmp_path), "enhance", "manifest.csv", "--config", "run.cfg", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert "technique = bcet" in out and "bcet.E = 120.0" in out and "resize = none" in out


def test_cli_split(tmp_path, capsys):
    make_dataset(tmp_path, (10, 6), ["covid", "normal"], size=24)
    assert main(["--root", str(tmp_path), "--seed", "4", "split", "manifest.csv", "--augment-classes", "covid"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "class,count,fold,train,augmented_train,val,test"
    assert "covid,10,0,6,12,2,2" in out
    assert (tmp_path / "folds" / "fold_4.csv").exists()


def test_cli_report_hist_bench(tmp_path, capsys):
    p = _predictions(tmp_path, [("a", "a"), ("b", "a"), ("b", "b")])
    assert main(["--root", str(tmp_path), "report", "pred.csv", "rep.txt", "--classes", "a,b"]) == 0
    assert "accuracy: 0.6667" in capsys.readouterr().out
    write_image(tmp_path / "x.pgm", ImageBuffer(np.full((3, 3), 7, np.uint8)))
    assert main(["--root", str(tmp_path), "hist", "x.pgm", "x.csv"]) == 0
    assert "7,9" in (tmp_path / "x.csv").read_text()
    assert main(["bench", "--synthetic", "2", "--size", "64", "--techniques", "he,gamma"]) == 0
    out = capsys.readouterr().out
    assert "he" in out and "gamma" in out


def test_cli_augment_and_mask(tmp_path, capsys):
    make_dataset(tmp_path, (2, 2), ["covid", "normal"], size=24)
    assert main(["--root", str(tmp_path), "augment", "manifest.csv", "--augment-classes", "covid",
                 "--out", "aug"]) == 0
    assert "(6 rows)" in capsys.readouterr().out
    assert main(["--root", str(tmp_path), "mask", "manifest.csv", "--out", "m"]) == 2
    assert "kind=ValueError" in capsys.readouterr().err


def test_cli_error_line(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("file,class\n")
    assert main(["--root", str(tmp_path), "split", "bad.csv"]) != 0
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: kind=ManifestError message=")


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "cxrenhance", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("enhance", "split", "augment", "mask", "hist", "report", "bench"):
        assert cmd in r.stdout
