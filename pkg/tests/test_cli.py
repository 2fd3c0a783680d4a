import hashlib
import json

import numpy as np
import pytest

from rainsd.cli import main
from rainsd.config import ConfigError, load_config, parse_config
from rainsd.image import load_image, save_image
from rainsd.metrics import write_label_png
from rainsd.tensor import channel_stats, read_tensor, write_tensor

from conftest import make_corpus, random_image


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def image_file(tmp_path, rng):
    path = tmp_path / "in.png"
    save_image(random_image(rng, 64, 48), path)
    return path


def test_rain_is_deterministic(tmp_path, image_file):
    outs = []
    for i in range(2):
        out = tmp_path / f"out{i}.png"
        assert main(["rain", "--in", str(image_file), "--out", str(out), "--rate", "50",
                     "--seed", "42", "--quiet"]) == 0
        outs.append(out)
    assert digest(outs[0]) == digest(outs[1])
    assert load_image(outs[0]) != load_image(image_file)


def test_rain_ppm_and_dump(tmp_path, image_file):
    out = tmp_path / "o.ppm"
    dump = tmp_path / "layer.txt"
    rep = tmp_path / "rep.json"
    assert main(["rain", "--in", str(image_file), "--out", str(out), "--rate", "30",
                 "--seed", "0x10", "--dump-layer", str(dump), "--report", str(rep)]) == 0
    assert out.read_bytes().startswith(b"P6")
    streaks = json.loads(rep.read_text())["streaks"]
    assert len(dump.read_text().splitlines()) == streaks > 0


def test_usage_errors_exit_2(tmp_path, image_file, capsys):
    assert main(["bogus"]) == 2
    assert main(["rain", "--out", "x.png", "--rate", "1", "--seed", "1"]) == 2
    assert "--in" in capsys.readouterr().err
    assert main(["rain", "--in", str(image_file), "--out", "x.png", "--rate", "-1", "--seed", "1"]) == 2
    assert main(["rain", "--in", str(image_file), "--out", "x.png", "--rate", "1", "--seed", "-5"]) == 2


def test_missing_input_exit_1(tmp_path, capsys):
    assert main(["rain", "--in", str(tmp_path / "none.png"), "--out", str(tmp_path / "o.png"),
                 "--rate", "10", "--seed", "1"]) == 1
    assert "none.png" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, image_file, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"rain": {"wind": 1}}))
    assert main(["rain", "--in", str(image_file), "--out", str(tmp_path / "o.png"),
                 "--rate", "10", "--seed", "1", "--config", str(cfg)]) == 2
    assert "wind" in capsys.readouterr().err


def test_config_changes_rain(tmp_path, image_file):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"rain": {"k": 0.5, "alpha": 1.0}}))
    rep = tmp_path / "r.json"
    assert main(["rain", "--in", str(image_file), "--out", str(tmp_path / "o.png"), "--rate", "10",
                 "--seed", "1", "--config", str(cfg), "--report", str(rep)]) == 0
    # 0.5 * 10 * (64 * 48) / (800 * 600) = 0.032 -> 0
    assert json.loads(rep.read_text())["streaks"] == 0


def test_translate(tmp_path, rng):
    c, s = tmp_path / "c.png", tmp_path / "s.png"
    save_image(random_image(rng, 32, 16), c)
    save_image(random_image(rng, 32, 16), s)
    outs = []
    for i in range(2):
        out = tmp_path / f"t{i}.png"
        assert main(["translate", "--content", str(c), "--style", str(s), "--seed", "3",
                     "--out", str(out), "--levels", "2", "--base-channels", "2", "--quiet"]) == 0
        outs.append(out)
    assert digest(outs[0]) == digest(outs[1])
    img = load_image(outs[0])
    assert (img.width, img.height) == (32, 16)


def test_translate_bad_size_exit_1(tmp_path, rng):
    c, s = tmp_path / "c.png", tmp_path / "s.png"
    save_image(random_image(rng, 30, 16), c)
    save_image(random_image(rng, 30, 16), s)
    assert main(["translate", "--content", str(c), "--style", str(s), "--seed", "3",
                 "--out", str(tmp_path / "o.png"), "--levels", "2"]) == 1


def test_pipeline_run_resume_and_dry_run(tmp_path, capsys):
    ann, images = make_corpus(tmp_path / "c", 2, 4, size=(48, 32))
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"n_rainy_sources": 2, "rates": [10, 90], "n_clear_train": 2,
                                "n_test_clear": 2}))
    args = ["pipeline", "--annotations", str(ann), "--images", str(images),
            "--out", str(tmp_path / "out"), "--plan", str(plan)]
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out) == {"processed": 8, "skipped": 0, "failed": 0}
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out) == {"processed": 0, "skipped": 8, "failed": 0}
    assert main(args + ["--dry-run"]) == 0
    assert json.loads(capsys.readouterr().out)["splits"]["trainB"] == 4


def test_pipeline_shortfall_exit_1(tmp_path, capsys):
    ann, images = make_corpus(tmp_path / "c", 1, 1, size=(16, 16))
    assert main(["pipeline", "--annotations", str(ann), "--images", str(images),
                 "--out", str(tmp_path / "o")]) == 1
    assert "rainy" in capsys.readouterr().err


def test_pipeline_bad_thread_env(tmp_path, monkeypatch):
    ann, images = make_corpus(tmp_path / "c", 1, 2, size=(16, 16))
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"n_rainy_sources": 1, "rates": [10], "n_clear_train": 1,
                                "n_test_clear": 1}))
    monkeypatch.setenv("RAINSD_THREADS", "many")
    assert main(["pipeline", "--annotations", str(ann), "--images", str(images),
                 "--out", str(tmp_path / "o"), "--plan", str(plan)]) == 1


def test_probe(tmp_path, rng, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    for k in (6, 7):
        f = rng.uniform(1, 2, size=(3, 4, 4)).astype(np.float32)
        write_tensor(0.895 * f, a / f"f{k}.rsdt")
        write_tensor(f, b / f"f{k}.rsdt")
    assert main(["probe", "--features", str(a), "--baseline", str(b),
                 "--out", str(tmp_path / "r.txt")]) == 0
    assert "-10.50%" in capsys.readouterr().out
    assert (tmp_path / "r.csv").exists() and (tmp_path / "r.json").exists()


def test_fadain(tmp_path, rng):
    z = rng.normal(size=(3, 5, 5)).astype(np.float32)
    f = (4 + 2 * rng.normal(size=(3, 6, 6))).astype(np.float32)
    write_tensor(z, tmp_path / "z.rsdt")
    write_tensor(f, tmp_path / "f.rsdt")
    assert main(["fadain", "--content", str(tmp_path / "z.rsdt"), "--style", str(tmp_path / "f.rsdt"),
                 "--out", str(tmp_path / "o.rsdt")]) == 0
    out = read_tensor(tmp_path / "o.rsdt")
    np.testing.assert_allclose(channel_stats(out).mean, channel_stats(f).mean, rtol=1e-4)


def test_fadain_corrupt_tensor_exit_1(tmp_path):
    (tmp_path / "z.rsdt").write_bytes(b"nope")
    assert main(["fadain", "--content", str(tmp_path / "z.rsdt"), "--style", str(tmp_path / "z.rsdt"),
                 "--out", str(tmp_path / "o.rsdt")]) == 1


def test_eval(tmp_path, rng, capsys):
    det = [{"image_id": "a", "class_id": 0, "box": [0, 0, 2, 2], "score": 0.9}]
    (tmp_path / "p.jsonl").write_text(json.dumps(det)[1:-1] + "\n")
    (tmp_path / "g.jsonl").write_text(json.dumps(det)[1:-1] + "\n")
    for d in ("mp", "mg"):
        (tmp_path / d).mkdir()
    lab = rng.integers(0, 3, size=(6, 6))
    write_label_png(lab, tmp_path / "mp" / "a.png")
    write_label_png(lab, tmp_path / "mg" / "a.png")
    rep = tmp_path / "rep.json"
    assert main(["eval", "--preds", str(tmp_path / "p.jsonl"), "--gts", str(tmp_path / "g.jsonl"),
                 "--masks-pred", str(tmp_path / "mp"), "--masks-gt", str(tmp_path / "mg"),
                 "--report", str(rep)]) == 0
    out = capsys.readouterr().out
    assert "Recall" in out and "100.0" in out
    data = json.loads(rep.read_text())
    assert data["detection"]["map"] == 100.0 and data["drivable"]["miou"] == 100.0


def test_eval_half_mask_args_exit_1(tmp_path):
    (tmp_path / "g.jsonl").write_text("")
    assert main(["eval", "--preds", str(tmp_path / "g.jsonl"), "--gts", str(tmp_path / "g.jsonl"),
                 "--masks-pred", str(tmp_path)]) == 1


def test_loss_check(capsys):
    assert main(["loss-check", "--quiet"]) == 0
    assert "11/11 checks passed" in capsys.readouterr().out


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "rainsd" in capsys.readouterr().out


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.master_seed == 0 and cfg.loss_weights().lambda_p == 1.0

    def test_unknown_top_level(self):
        with pytest.raises(ConfigError, match="colour"):
            parse_config({"colour": 1})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigError, match="section 'network'"):
            parse_config({"network": {"depth": 3}})

    def test_bad_json_location(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"master_seed": }')
        with pytest.raises(ConfigError, match=r"c.json:1:"):
            load_config(p)

    def test_split_plan_overrides(self):
        cfg = parse_config({"master_seed": 9, "pipeline": {"n_rainy_sources": 3}})
        plan = cfg.split_plan(n_clear_train=1)
        assert (plan.master_seed, plan.n_rainy_sources, plan.n_clear_train) == (9, 3, 1)

    def test_bad_seed(self):
        with pytest.raises(ConfigError, match="master_seed"):
            parse_config({"master_seed": -1})
