import numpy as np
import pytest

from cxrenhance.raster import ImageBuffer

ACCEPTANCE_LINES = []


def record(name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, h=None, w=None, channels=1) -> ImageBuffer:
    h = h or int(rng.integers(1, 20))
    w = w or int(rng.integers(1, 20))
    return ImageBuffer(rng.integers(0, 256, size=(h, w, channels), dtype=np.uint8))


def make_dataset(root, n_per_class=(10,), labels=None, size=48, seed=0, fmt="png"):
    """Write synthetic images under root/<label>/ plus root/manifest.csv."""
    from cxrenhance.raster import write_image
    from cxrenhance.synthetic import synthetic_cxr

    labels = labels or [f"class{i}" for i in range(len(n_per_class))]
    rng = np.random.default_rng(seed)
    lines = ["path,label"]
    for label, n in zip(labels, n_per_class):
        (root / label).mkdir(parents=True, exist_ok=True)
        for i in range(n):
            rel = f"{label}/img{i:03d}.{fmt}"
            write_image(root / rel, synthetic_cxr(size, rng))
            lines.append(f"{rel},{label}")
    (root / "manifest.csv").write_text("\n".join(lines) + "\n")
    return root / "manifest.csv"


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
