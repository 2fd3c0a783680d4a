"""Per-layer style statistics and cross-condition comparison."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import ChannelStats, channel_stats, read_tensor

_LAYER_FILE = re.compile(r"^f(\d+)\.rsdt$")


@dataclass(frozen=True)
class LayerStyleReport:
    layer_id: int
    stats: ChannelStats
    scalar_mean: float
    scalar_std: float

    def to_dict(self) -> dict:
        return {
            "layer_id": self.layer_id,
            "scalar_mean": self.scalar_mean,
            "scalar_std": self.scalar_std,
            "channel_mean": self.stats.mean.tolist(),
            "channel_std": self.stats.std.tolist(),
        }


@dataclass(frozen=True)
class LayerChange:
    layer_id: int
    relative_mean_change: float | None  # percent; None when the baseline is zero
    relative_std_change: float | None


@dataclass(frozen=True)
class ComparisonReport:
    layers: list[LayerChange]

    @property
    def undefined(self) -> list[int]:
        return [c.layer_id for c in self.layers
                if c.relative_mean_change is None or c.relative_std_change is None]


def probe(features, layer_ids=None) -> list[LayerStyleReport]:
    """Style summary per layer. Layer ids default to 1..n in input order."""
    features = list(features)
    if layer_ids is None:
        layer_ids = range(1, len(features) + 1)
    reports = []
    for lid, t in zip(layer_ids, features):
        if np.ndim(t) != 3:
            raise ValueError(f"layer f{lid}: expected a C x H x W tensor, got shape {np.shape(t)}")
        st = channel_stats(t)
        reports.append(LayerStyleReport(int(lid), st, float(st.mean.mean()), float(st.std.mean())))
    return reports


def _pct(a: float, b: float) -> float | None:
    if b == 0:
        return None
    return 100.0 * (a - b) / abs(b)


def compare(a: list[LayerStyleReport], b: list[LayerStyleReport]) -> ComparisonReport:
    """Percent change of condition ``a`` relative to baseline ``b``, per layer."""
    if [r.layer_id for r in a] != [r.layer_id for r in b]:
        raise ValueError(
            f"layer mismatch: {[r.layer_id for r in a]} vs {[r.layer_id for r in b]}"
        )
    return ComparisonReport([
        LayerChange(ra.layer_id, _pct(ra.scalar_mean, rb.scalar_mean), _pct(ra.scalar_std, rb.scalar_std))
        for ra, rb in zip(a, b)
    ])


def load_feature_dir(directory) -> tuple[list[int], list[np.ndarray]]:
    """Read ``f<k>.rsdt`` files, ordered by k."""
    found = []
    for p in Path(directory).iterdir():
        m = _LAYER_FILE.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    if not found:
        raise FileNotFoundError(f"no f<k>.rsdt files in {directory}")
    found.sort()
    return [k for k, _ in found], [read_tensor(p) for _, p in found]


def _fmt(v: float | None) -> str:
    return "undef" if v is None else f"{v:+.2f}%"


def format_table(a, b, cmp: ComparisonReport) -> str:
    lines = [f"{'layer':>5}  {'mean':>10}  {'base mean':>10}  {'d mean':>9}  "
             f"{'std':>10}  {'base std':>10}  {'d std':>9}"]
    for ra, rb, c in zip(a, b, cmp.layers):
        lines.append(
            f"{'f' + str(c.layer_id):>5}  {ra.scalar_mean:10.4g}  {rb.scalar_mean:10.4g}  "
            f"{_fmt(c.relative_mean_change):>9}  {ra.scalar_std:10.4g}  {rb.scalar_std:10.4g}  "
            f"{_fmt(c.relative_std_change):>9}"
        )
    return "\n".join(lines) + "\n"


def write_report(path, a, b, cmp: ComparisonReport) -> list[Path]:
    """Write the text table at ``path`` plus ``.json`` records and ``.csv`` plot data."""
    path = Path(path)
    if path.suffix in (".json", ".csv"):
        path = path.with_suffix(".txt")
    path.write_text(format_table(a, b, cmp))
    records = {
        "condition": [r.to_dict() for r in a],
        "baseline": [r.to_dict() for r in b],
        "changes": [vars(c) for c in cmp.layers],
        "undefined_layers": cmp.undefined,
    }
    jpath = path.with_suffix(".json")
    jpath.write_text(json.dumps(records, indent=2) + "\n")
    cpath = path.with_suffix(".csv")
    with cpath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer_id", "mean", "baseline_mean", "mean_change_pct",
                    "std", "baseline_std", "std_change_pct"])
        for ra, rb, c in zip(a, b, cmp.layers):
            w.writerow([c.layer_id, ra.scalar_mean, rb.scalar_mean,
                        "" if c.relative_mean_change is None else c.relative_mean_change,
                        ra.scalar_std, rb.scalar_std,
                        "" if c.relative_std_change is None else c.relative_std_change])
    return [path, jpath, cpath]

