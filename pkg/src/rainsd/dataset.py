"""Attribute-filtered split planning and manifest-driven dataset materialization."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path, PurePosixPath

from .image import load_image, save_image
from .network import NetworkConfig, TwoStreamNet
from .prng import SplitMix64, derive_seed
from .rain import CountModel, StreakGeometry, resolve_spec
from .streaks import composite, generate_layer

log = logging.getLogger(__name__)

WEATHER = ("clear", "rainy")
TIMEOFDAY = ("daytime", "night")
SPLITS = ("trainA", "trainB", "testA", "eval_clear", "eval_rainy")
RAIN_SPLITS = ("trainB", "eval_rainy")
MANIFEST_NAME = "manifest.jsonl"


class AnnotationError(ValueError):
    pass


class InsufficientSourcesError(ValueError):
    def __init__(self, shortfalls: dict[str, tuple[int, int]]):
        self.shortfalls = shortfalls
        parts = [f"{cls}: need {need}, have {have}" for cls, (need, have) in shortfalls.items()]
        super().__init__("insufficient sources (" + "; ".join(parts) + ")")


@dataclass(frozen=True)
class FrameAttributes:
    name: str
    weather: str
    timeofday: str
    source_path: str


def _enum(value, allowed) -> str:
    return value if value in allowed else "other"


def ingest_attributes(annotation_file, images_dir=None, require_exists: bool = True) -> list[FrameAttributes]:
    """Parse a BDD100K-style label list: ``[{"name": ..., "attributes": {...}}, ...]``.

    Source paths are ``images_dir / name`` when a directory is given (and must
    exist unless ``require_exists`` is false), else the bare name.
    """
    path = Path(annotation_file)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise AnnotationError(f"annotation file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(records, list):
        raise AnnotationError(f"{path}: expected a list of records")
    out = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict) or not isinstance(rec.get("name"), str):
            raise AnnotationError(f"record {i}: missing 'name'")
        attrs = rec.get("attributes")
        if not isinstance(attrs, dict) or "weather" not in attrs or "timeofday" not in attrs:
            raise AnnotationError(f"record {i} ({rec['name']}): missing weather/timeofday attributes")
        src = rec["name"]
        if images_dir is not None:
            src_path = Path(images_dir) / rec["name"]
            if require_exists and not src_path.exists():
                raise AnnotationError(f"record {i}: source image not found: {src_path}")
            src = str(src_path)
        out.append(FrameAttributes(
            rec["name"], _enum(attrs["weather"], WEATHER), _enum(attrs["timeofday"], TIMEOFDAY), src,
        ))
    return out


@dataclass(frozen=True)
class SplitPlan:
    n_rainy_sources: int = 10
    rates: tuple[float, ...] = tuple(range(10, 101, 10))
    n_clear_train: int = 10
    n_test_clear: int = 10
    master_seed: int = 0
    timeofday: str | None = None  # restrict sources, e.g. "night"
    eval_pairs: bool = False      # clear/rainy copy of every testA frame

    def __post_init__(self):
        for name in ("n_rainy_sources", "n_clear_train", "n_test_clear"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_rainy_sources > 0 and not self.rates:
            raise ValueError("rates must be non-empty when n_rainy_sources > 0")
        if any(r < 0 for r in self.rates):
            raise ValueError("rates must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown key(s) in [pipeline]: {', '.join(sorted(unknown))}")
        d = dict(d)
        if "rates" in d:
            d["rates"] = tuple(d["rates"])
        return cls(**d)


@dataclass(frozen=True)
class ManifestEntry:
    output_path: str
    source_path: str
    split: str
    rate: float | None
    seed: int


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in self.entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "DatasetManifest":
        entries = []
        for n, line in enumerate(text.splitlines(), 1):
            if line.strip():
                try:
                    entries.append(ManifestEntry(**json.loads(line)))
                except (TypeError, json.JSONDecodeError) as exc:
                    raise ValueError(f"manifest line {n}: {exc}") from None
        return cls(entries)

    def write(self, path) -> None:
        _atomic_write(Path(path), self.to_jsonl().encode("utf-8"))

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def seeded_shuffle(items: list, seed: int) -> list:
    """Fisher-Yates driven by SplitMix64."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _rate_tag(rate: float) -> str:
    return f"{rate:g}mmh".replace(".", "p")


def plan_splits(attrs: list[FrameAttributes], plan: SplitPlan) -> DatasetManifest:
    seen = set()
    unique = []
    for a in attrs:
        if a.source_path not in seen:
            seen.add(a.source_path)
            unique.append(a)

    def pool(weather):
        return [a for a in unique if a.weather == weather
                and (plan.timeofday is None or a.timeofday == plan.timeofday)]

    rainy, clear = pool("rainy"), pool("clear")
    need_clear = plan.n_clear_train + plan.n_test_clear
    short = {}
    if len(rainy) < plan.n_rainy_sources:
        short["rainy"] = (plan.n_rainy_sources, len(rainy))
    if len(clear) < need_clear:
        short["clear"] = (need_clear, len(clear))
    if short:
        raise InsufficientSourcesError(short)

    rainy = seeded_shuffle(rainy, derive_seed(plan.master_seed, "select/rainy"))[:plan.n_rainy_sources]
    clear = seeded_shuffle(clear, derive_seed(plan.master_seed, "select/clear"))[:need_clear]
    train_a, test_a = clear[:plan.n_clear_train], clear[plan.n_clear_train:]

    rows = []  # (output_path, source, split, rate)
    for a in train_a:
        rows.append((f"trainA/{a.name}", a.source_path, "trainA", None))
    for a in rainy:
        stem = PurePosixPath(a.name).stem
        for rate in plan.rates:
            rows.append((f"trainB/{stem}_{_rate_tag(rate)}.png", a.source_path, "trainB", rate))
    for j, a in enumerate(test_a):
        rows.append((f"testA/{a.name}", a.source_path, "testA", None))
        if plan.eval_pairs and plan.rates:
            rate = plan.rates[j % len(plan.rates)]
            stem = PurePosixPath(a.name).stem
            rows.append((f"eval_clear/{a.name}", a.source_path, "eval_clear", None))
            rows.append((f"eval_rainy/{stem}_{_rate_tag(rate)}.png", a.source_path, "eval_rainy", rate))

    entries = []
    outputs = set()
    for out, src, split, rate in rows:
        if out in outputs:
            raise ValueError(f"duplicate output path {out}")
        outputs.add(out)
        entries.append(ManifestEntry(out, src, split, rate, derive_seed(plan.master_seed, out)))
    return DatasetManifest(entries)


@dataclass
class MaterializeReport:
    processed: int = 0
    skipped: int = 0
    failed: int = 0
    failures: list[dict] = field(default_factory=list)
    by_split: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, entry: ManifestEntry, status: str, error: str | None = None):
        setattr(self, status, getattr(self, status) + 1)
        counts = self.by_split.setdefault(entry.split, {"processed": 0, "skipped": 0, "failed": 0})
        counts[status] += 1
        if error is not None:
            self.failures.append({"output_path": entry.output_path,
                                  "source_path": entry.source_path, "error": error})

    def to_dict(self) -> dict:
        self.failures.sort(key=lambda f: f["output_path"])
        return asdict(self)


@dataclass(frozen=True)
class RainSettings:
    model: CountModel = CountModel()
    geometry: StreakGeometry = StreakGeometry()


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _save_atomic(img, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    os.close(fd)
    try:
        save_image(img, tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def render_entry(entry: ManifestEntry, rain: RainSettings, net_params=None,
                 net_cfg: NetworkConfig | None = None):
    """Rain-streak (and optionally translate) the entry's source image."""
    img = load_image(entry.source_path)
    spec = resolve_spec(entry.rate, rain.geometry, (img.width, img.height), entry.seed, rain.model)
    rained = composite(img, generate_layer(spec))
    if net_params is None:
        return rained
    cfg = replace(net_cfg or NetworkConfig(), spatial_input=(img.height, img.width))
    return TwoStreamNet(cfg, net_params).translate(img, rained, entry.seed)


def materialize(manifest: DatasetManifest, out_dir, rain: RainSettings = RainSettings(),
                net_params=None, net_cfg: NetworkConfig | None = None,
                threads: int = 1) -> MaterializeReport:
    """Produce every manifest output under ``out_dir``.

    An entry is skipped when its output exists and the manifest left by a
    previous run recorded the same seed for it. Outputs are written via
    rename, so an existing file is always complete. Per-entry errors are
    collected in the report.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / MANIFEST_NAME
    recorded = {}
    if manifest_path.exists():
        try:
            recorded = {e.output_path: e.seed for e in DatasetManifest.read(manifest_path).entries}
        except ValueError as exc:
            log.warning("ignoring unreadable previous manifest: %s", exc)
    manifest.write(manifest_path)

    def work(entry: ManifestEntry):
        target = out_dir / entry.output_path
        if target.exists() and recorded.get(entry.output_path) == entry.seed:
            return entry, "skipped", None
        try:
            if entry.split in RAIN_SPLITS:
                _save_atomic(render_entry(entry, rain, net_params, net_cfg), target)
            else:
                with open(entry.source_path, "rb") as fh:
                    data = fh.read()
                _atomic_write(target, data)
        except Exception as exc:
            log.error("failed %s: %s", entry.output_path, exc)
            return entry, "failed", f"{type(exc).__name__}: {exc}"
        return entry, "processed", None

    report = MaterializeReport()
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers == 1:
        results = [work(e) for e in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, manifest.entries))
    for entry, status, error in results:
        report.add(entry, status, error)
    return report
