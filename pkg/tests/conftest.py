import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rainsd.image import ImageBuffer, save_image  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, width, height) -> ImageBuffer:
    return ImageBuffer(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def road_like_image(rng, width, height) -> ImageBuffer:
    """Sky gradient over a darker band; cheap stand-in for a road frame."""
    y = np.linspace(0, 1, height)[:, None, None]
    sky = np.array([150, 170, 200]) * (1 - y) + np.array([60, 60, 65]) * y
    noise = rng.normal(0, 6, size=(height, width, 3))
    arr = np.clip(np.broadcast_to(sky, (height, width, 3)) + noise, 0, 255)
    return ImageBuffer(arr.astype(np.uint8))


def make_corpus(root: Path, n_rainy: int, n_clear: int, size=(96, 64), seed=0):
    """Write PNG frames plus a BDD100K-style label file; returns (annotations, images_dir)."""
    rng = np.random.default_rng(seed)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n_rainy):
        name = f"rainy_{i:03d}.png"
        save_image(road_like_image(rng, *size), images / name)
        records.append({"name": name, "attributes": {"weather": "rainy", "timeofday": "daytime"}})
    for i in range(n_clear):
        name = f"clear_{i:03d}.png"
        save_image(road_like_image(rng, *size), images / name)
        records.append({"name": name, "attributes": {"weather": "clear", "timeofday": "daytime"}})
    save_image(road_like_image(rng, *size), images / "snow.png")
    records.append({"name": "snow.png", "attributes": {"weather": "snowy", "timeofday": "night"}})
    ann = root / "labels.json"
    ann.write_text(json.dumps(records))
    return ann, images


@pytest.fixture
def corpus(tmp_path):
    return make_corpus(tmp_path / "corpus", n_rainy=4, n_clear=6)


def random_scene(rng, n_images=2, n_classes=2, max_boxes=6):
    """Random ground truth plus jittered, duplicated and spurious predictions.

    Returns (preds, gts) as plain tuples: (image, class, box, score) and
    (image, class, box). Scores are distinct.
    """
    def box():
        x, y = rng.uniform(0, 8, size=2)
        w, h = rng.uniform(1, 4, size=2)
        return (float(x), float(y), float(x + w), float(y + h))

    gts, preds = [], []
    for _ in range(int(rng.integers(1, max_boxes + 1))):
        gts.append((f"im{rng.integers(n_images)}", int(rng.integers(n_classes)), box()))
    for img, cls, b in gts:
        for _ in range(int(rng.integers(0, 3))):  # misses, hits and duplicates
            j = rng.normal(0, 0.4, size=4)
            jb = (b[0] + j[0], b[1] + j[1], max(b[0] + j[0] + 0.1, b[2] + j[2]),
                  max(b[1] + j[1] + 0.1, b[3] + j[3]))
            cls_p = cls if rng.uniform() < 0.85 else int(rng.integers(n_classes))
            preds.append((img, cls_p, tuple(float(v) for v in jb)))
    for _ in range(int(rng.integers(0, 3))):
        preds.append((f"im{rng.integers(n_images)}", int(rng.integers(n_classes)), box()))
    scores = rng.permutation(len(preds)) / max(1, len(preds)) * 0.9 + 0.05
    preds = [(*p, float(s)) for p, s in zip(preds, scores)]
    return preds, gts


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
