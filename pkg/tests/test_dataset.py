import hashlib
import json

import pytest

from rainsd.dataset import (AnnotationError, DatasetManifest, FrameAttributes,
                            InsufficientSourcesError, SplitPlan, ingest_attributes,
                            materialize, plan_splits, seeded_shuffle)
from rainsd.image import load_image
from rainsd.network import NetworkConfig, init_params

from conftest import make_corpus


def tree_hashes(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def small_plan(**kw):
    base = dict(n_rainy_sources=2, rates=(10, 50), n_clear_train=3, n_test_clear=2, master_seed=5)
    base.update(kw)
    return SplitPlan(**base)


def test_ingest(corpus):
    ann, images = corpus
    attrs = ingest_attributes(ann, images)
    assert len(attrs) == 11
    assert {a.weather for a in attrs} == {"rainy", "clear", "other"}
    assert all(a.source_path.startswith(str(images)) for a in attrs)


def test_ingest_missing_attribute(tmp_path):
    ann = tmp_path / "a.json"
    ann.write_text(json.dumps([{"name": "x.png", "attributes": {"weather": "clear"}}]))
    with pytest.raises(AnnotationError, match="x.png"):
        ingest_attributes(ann)


def test_ingest_missing_image(tmp_path):
    ann = tmp_path / "a.json"
    ann.write_text(json.dumps([{"name": "x.png", "attributes": {"weather": "clear", "timeofday": "night"}}]))
    with pytest.raises(AnnotationError, match="not found"):
        ingest_attributes(ann, tmp_path)
    assert len(ingest_attributes(ann, tmp_path, require_exists=False)) == 1


def test_ingest_bad_json(tmp_path):
    ann = tmp_path / "a.json"
    ann.write_text("{not json")
    with pytest.raises(AnnotationError, match="invalid JSON"):
        ingest_attributes(ann)


def test_seeded_shuffle_is_permutation():
    items = list(range(50))
    out = seeded_shuffle(items, 9)
    assert sorted(out) == items and out != items
    assert out == seeded_shuffle(items, 9)
    assert out != seeded_shuffle(items, 10)


def test_plan_counts_and_disjoint(corpus):
    ann, images = corpus
    m = plan_splits(ingest_attributes(ann, images), small_plan())
    assert len(m.split("trainB")) == 4
    assert len(m.split("trainA")) == 3 and len(m.split("testA")) == 2
    a = {e.source_path for e in m.split("trainA")}
    t = {e.source_path for e in m.split("testA")}
    assert not a & t
    assert len({e.output_path for e in m.entries}) == len(m)


def test_plan_deterministic_and_seed_sensitive(corpus):
    ann, images = corpus
    attrs = ingest_attributes(ann, images)
    assert plan_splits(attrs, small_plan()).entries == plan_splits(attrs, small_plan()).entries
    assert plan_splits(attrs, small_plan()).entries != plan_splits(attrs, small_plan(master_seed=6)).entries


def test_plan_insufficient(corpus):
    ann, images = corpus
    with pytest.raises(InsufficientSourcesError) as err:
        plan_splits(ingest_attributes(ann, images), small_plan(n_rainy_sources=9))
    assert err.value.shortfalls == {"rainy": (9, 4)}


def test_timeofday_filter(corpus):
    ann, images = corpus
    with pytest.raises(InsufficientSourcesError):
        plan_splits(ingest_attributes(ann, images), small_plan(timeofday="night"))


def test_eval_pairs(corpus):
    ann, images = corpus
    m = plan_splits(ingest_attributes(ann, images), small_plan(eval_pairs=True))
    assert len(m.split("eval_clear")) == len(m.split("eval_rainy")) == 2
    assert [e.rate for e in m.split("eval_rainy")] == [10, 50]


def test_duplicate_sources_collapsed():
    attrs = [FrameAttributes("a.png", "rainy", "daytime", "a.png")] * 3
    with pytest.raises(InsufficientSourcesError):
        plan_splits(attrs, SplitPlan(n_rainy_sources=2, n_clear_train=0, n_test_clear=0))


def test_manifest_jsonl_round_trip(corpus):
    ann, images = corpus
    m = plan_splits(ingest_attributes(ann, images), small_plan())
    assert DatasetManifest.from_jsonl(m.to_jsonl()).entries == m.entries


def test_plan_from_dict():
    plan = SplitPlan.from_dict({"rates": [5, 15], "n_rainy_sources": 1})
    assert plan.rates == (5, 15)
    with pytest.raises(KeyError, match="bogus"):
        SplitPlan.from_dict({"bogus": 1})


def test_materialize_and_resume(corpus, tmp_path):
    ann, images = corpus
    m = plan_splits(ingest_attributes(ann, images), small_plan())
    out = tmp_path / "out"
    first = materialize(m, out)
    assert (first.processed, first.skipped, first.failed) == (len(m), 0, 0)
    img = load_image(out / m.split("trainB")[0].output_path)
    assert (img.width, img.height) == (96, 64)
    hashes = tree_hashes(out)
    second = materialize(m, out)
    assert (second.processed, second.skipped) == (0, len(m))
    assert tree_hashes(out) == hashes


def test_resume_reprocesses_changed_seed(corpus, tmp_path):
    ann, images = corpus
    attrs = ingest_attributes(ann, images)
    out = tmp_path / "out"
    materialize(plan_splits(attrs, small_plan()), out)
    again = materialize(plan_splits(attrs, small_plan(master_seed=6)), out)
    assert again.by_split["trainB"]["processed"] > 0


def test_threads_do_not_change_output(corpus, tmp_path):
    ann, images = corpus
    m = plan_splits(ingest_attributes(ann, images), small_plan())
    materialize(m, tmp_path / "a", threads=1)
    materialize(m, tmp_path / "b", threads=4)
    assert tree_hashes(tmp_path / "a") == tree_hashes(tmp_path / "b")


def test_failures_are_collected(corpus, tmp_path):
    ann, images = corpus
    m = plan_splits(ingest_attributes(ann, images), small_plan())
    victim = m.split("trainB")[0].source_path
    open(victim, "wb").write(b"garbage")
    rep = materialize(m, tmp_path / "out")
    assert rep.failed == 2  # both rates of that source
    assert all("ImageFormatError" in f["error"] for f in rep.failures)
    assert rep.processed == len(m) - 2


def test_materialize_with_network(tmp_path):
    ann, images = make_corpus(tmp_path / "c", 1, 2, size=(32, 16))
    m = plan_splits(ingest_attributes(ann, images),
                    SplitPlan(n_rainy_sources=1, rates=(30,), n_clear_train=1, n_test_clear=1))
    cfg = NetworkConfig(levels=2, base_channels=2, spatial_input=(16, 32))
    rep = materialize(m, tmp_path / "out", net_params=init_params(cfg), net_cfg=cfg)
    assert rep.failed == 0
    img = load_image(tmp_path / "out" / m.split("trainB")[0].output_path)
    assert (img.width, img.height) == (32, 16)
