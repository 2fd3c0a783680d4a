"""Detection recall / mAP@0.5 and segmentation mIoU / pixel accuracy."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]
    score: float = 1.0

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate box {self.box} in {self.image_id}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class MaskRecord:
    image_id: str
    labels: np.ndarray


def iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def _match_flags(preds, gts, cls, iou_threshold):
    """TP flags for class ``cls`` predictions in descending score order.

    Each prediction targets its highest-IoU ground truth of the same class in
    the same image (first one on ties); it is a TP only if that IoU reaches
    the threshold and the target is still unmatched.
    """
    order = sorted((p for p in preds if p.class_id == cls), key=lambda p: -p.score)
    gt_by_img = defaultdict(list)
    for g in gts:
        if g.class_id == cls:
            gt_by_img[g.image_id].append(g)
    taken = set()
    flags = []
    for p in order:
        best, best_iou = None, 0.0
        for j, g in enumerate(gt_by_img.get(p.image_id, ())):
            o = iou(p.box, g.box)
            if o > best_iou:
                best, best_iou = j, o
        hit = best is not None and best_iou >= iou_threshold and (p.image_id, best) not in taken
        if hit:
            taken.add((p.image_id, best))
        flags.append(hit)
    return flags


def average_precision(tp_flags, n_gt: int) -> float:
    """All-point interpolated AP for a score-sorted list of TP flags."""
    if n_gt == 0:
        raise ValueError("AP undefined without ground truth")
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(tp_flags, dtype=np.float64))
    recall = np.concatenate([[0.0], tp / n_gt, [1.0]])
    denom = np.maximum(tp + fp, np.finfo(np.float64).tiny)
    precision = np.concatenate([[0.0], tp / denom, [0.0]])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.nonzero(recall[1:] != recall[:-1])[0]
    return float(np.sum((recall[steps + 1] - recall[steps]) * envelope[steps + 1]))


@dataclass
class DetectionResult:
    recall: float | None
    map: float | None
    per_class_ap: dict[int, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


def detection_metrics(preds, gts, iou_threshold: float = 0.5) -> DetectionResult:
    """Recall and mAP in percent. Classes without ground truth are ignored."""
    preds, gts = list(preds), list(gts)
    if not gts:
        return DetectionResult(None, None, notes=["empty ground truth: recall and mAP undefined"])
    classes = sorted({g.class_id for g in gts})
    total_tp = 0
    aps = {}
    for c in classes:
        n_gt = sum(1 for g in gts if g.class_id == c)
        flags = _match_flags(preds, gts, c, iou_threshold)
        total_tp += sum(flags)
        aps[c] = 100.0 * average_precision(flags, n_gt)
    return DetectionResult(
        recall=100.0 * total_tp / len(gts),
        map=float(np.mean(list(aps.values()))),
        per_class_ap=aps,
    )


def confusion_matrix(pred, gt, n_classes: int) -> np.ndarray:
    """Rows are ground truth, columns predictions."""
    pred = np.asarray(pred, dtype=np.int64).ravel()
    gt = np.asarray(gt, dtype=np.int64).ravel()
    if pred.size and (pred.min() < 0 or pred.max() >= n_classes or gt.min() < 0 or gt.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return np.bincount(gt * n_classes + pred, minlength=n_classes ** 2).reshape(n_classes, n_classes)


@dataclass
class SegmentationResult:
    miou: float
    accuracy: float
    per_class_iou: dict[int, float | None]
    confusion: np.ndarray


def segmentation_metrics(preds, gts, n_classes: int) -> SegmentationResult:
    """Pooled confusion over all image pairs; classes absent from both sides are skipped in mIoU."""
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predicted masks vs {len(gts)} ground-truth masks")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    for i, (p, g) in enumerate(zip(preds, gts)):
        p = p.labels if isinstance(p, MaskRecord) else np.asarray(p)
        g = g.labels if isinstance(g, MaskRecord) else np.asarray(g)
        if p.shape != g.shape:
            raise ValueError(f"mask pair {i}: shape {p.shape} vs {g.shape}")
        conf += confusion_matrix(p, g, n_classes)
    tp = np.diag(conf).astype(np.float64)
    union = conf.sum(axis=0) + conf.sum(axis=1) - np.diag(conf)
    per_class = {c: (100.0 * tp[c] / union[c] if union[c] else None) for c in range(n_classes)}
    defined = [v for v in per_class.values() if v is not None]
    total = conf.sum()
    return SegmentationResult(
        miou=float(np.mean(defined)) if defined else float("nan"),
        accuracy=100.0 * float(tp.sum()) / total if total else float("nan"),
        per_class_iou=per_class,
        confusion=conf,
    )


# --- file interchange -----------------------------------------------------

def read_detections(path) -> list[DetectionRecord]:
    """JSON-lines records: image_id, class_id, box [x1, y1, x2, y2], optional score."""
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(DetectionRecord(str(rec["image_id"]), int(rec["class_id"]),
                                       tuple(float(v) for v in rec["box"]),
                                       float(rec.get("score", 1.0))))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{n}: bad detection record ({exc})") from None
    return out


def read_label_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "I", "I;16"):
            raise ValueError(f"{path}: label masks must be single-channel, got mode {im.mode}")
        return np.asarray(im).astype(np.int64)


def write_label_png(labels, path) -> None:
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(path)


def load_mask_dir(directory) -> list[MaskRecord]:
    return [MaskRecord(p.stem, read_label_png(p)) for p in sorted(Path(directory).glob("*.png"))]


def pair_masks(preds: list[MaskRecord], gts: list[MaskRecord]):
    by_id = {m.image_id: m for m in preds}
    missing = [g.image_id for g in gts if g.image_id not in by_id]
    if missing:
        raise ValueError(f"no predicted mask for: {', '.join(missing[:5])}")
    return [by_id[g.image_id] for g in gts], gts
