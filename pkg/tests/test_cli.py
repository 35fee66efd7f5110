import json

import pytest

from series2vec.cli import main, resolve_config, _parser

DATA = "synthetic:tones,n=10,length=24,sigma=0.2"


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "encoder": {"layers": 1, "filters": 4, "kernel_width": 4, "repr_dim": 8},
        "train": {"heads": 2, "epochs": 2, "batch_size": 8, "lr": 0.01},
    }))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


class TestPretrain:
    def test_writes_outputs(self, tmp_path, small_config):
        out = tmp_path / "ckpt"
        assert run("pretrain", "--config", small_config, "--data", DATA, "--out", out) == 0
        for name in ("checkpoint.bin", "checkpoint.json", "history.json", "config.json"):
            assert (out / name).exists()
        assert len(json.loads((out / "history.json").read_text())) == 2
        echo = json.loads((out / "config.json").read_text())
        assert echo["train"]["batch_size"] == 8 and echo["similarity"] == {"alpha": 0.1, "gamma": 0.0}

    def test_batch_size_one_is_usage_error(self, tmp_path, capsys):
        assert run("pretrain", "--data", DATA, "--out", tmp_path, "--batch-size", 1) == 2
        assert "batch_size" in capsys.readouterr().err

    def test_rerun_byte_identical(self, tmp_path, small_config):
        for d in ("a", "b"):
            assert run("pretrain", "--config", small_config, "--data", DATA, "--out", tmp_path / d) == 0
        for name in ("checkpoint.bin", "checkpoint.json", "history.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        echoes = [json.loads((tmp_path / d / "config.json").read_text()) for d in ("a", "b")]
        assert [e.pop("out") for e in echoes] == [str(tmp_path / "a"), str(tmp_path / "b")]
        assert echoes[0] == echoes[1]

    def test_missing_data(self, tmp_path):
        assert run("pretrain", "--out", tmp_path) == 2

    def test_unknown_synthetic_kind(self, tmp_path):
        assert run("pretrain", "--data", "synthetic:chirps", "--out", tmp_path) == 2


class TestProbe:
    def test_accuracy_and_curve(self, tmp_path, small_config, capsys):
        ckpt = tmp_path / "ckpt"
        run("pretrain", "--config", small_config, "--data", DATA, "--out", ckpt)
        code = run("probe", "--checkpoint", ckpt, "--data", DATA, "--labels-per-class", "2,4,6", "--repeats", 2)
        assert code == 0
        res = json.loads((ckpt / "probe.json").read_text())
        assert 0 <= res["accuracy"] <= 1
        assert f"accuracy {res['accuracy']:.4f}" in capsys.readouterr().out
        lines = (ckpt / "low_label.csv").read_text().splitlines()
        assert lines[0] == "n_per_class,mean,std" and len(lines) == 4

    def test_missing_checkpoint(self, tmp_path):
        assert run("probe", "--checkpoint", tmp_path / "nope", "--data", DATA) == 2

    def test_channel_mismatch(self, tmp_path, small_config):
        ckpt = tmp_path / "ckpt"
        run("pretrain", "--config", small_config, "--data", DATA, "--out", ckpt)
        assert run("probe", "--checkpoint", ckpt, "--data", DATA + ",channels=2") == 2


def test_finetune_compare_random(tmp_path, small_config):
    code = run("finetune", "--config", small_config, "--data", DATA, "--out", tmp_path,
               "--finetune-epochs", 1, "--finetune-lr", 0.01, "--compare-random")
    assert code == 0
    report = json.loads((tmp_path / "finetune.json").read_text())
    assert set(report) == {"pretrained", "random"}


class TestAblate:
    def test_keys(self, tmp_path, small_config):
        assert run("ablate", "--config", small_config, "--data", DATA, "--out", tmp_path) == 0
        res = json.loads((tmp_path / "ablation.json").read_text())
        assert set(res) == {"full", "no_attention", "no_spectral", "no_temporal"}
        assert (tmp_path / "ablation.txt").read_text().startswith("variant")

    def test_no_branches(self, tmp_path):
        assert run("ablate", "--data", DATA, "--out", tmp_path, "--no-spectral", "--no-temporal") == 2


class TestRank:
    def write(self, tmp_path, name, accs):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps({"model": name, "accuracies": accs}))
        return p

    def test_ranks(self, tmp_path, capsys):
        a = self.write(tmp_path, "a", {"x": 0.9, "y": 0.6})
        b = self.write(tmp_path, "b", {"x": 0.9, "y": 0.6})
        c = self.write(tmp_path, "c", {"x": 0.1, "y": 0.2})
        assert run("rank", a, b, c, "--out", tmp_path / "r") == 0
        assert json.loads((tmp_path / "r" / "rank.json").read_text()) == {"a": 1.5, "b": 1.5, "c": 3.0}
        out = capsys.readouterr().out.splitlines()
        assert out[2].startswith("a") and out[-1].startswith("c")

    def test_mismatched_keys(self, tmp_path):
        a = self.write(tmp_path, "a", {"x": 0.9})
        b = self.write(tmp_path, "b", {"y": 0.9})
        assert run("rank", a, b) == 2

    def test_single_model(self, tmp_path):
        assert run("rank", self.write(tmp_path, "a", {"x": 0.9})) == 2


def test_generate_round_trips_through_pretrain(tmp_path, small_config):
    assert run("generate", "shapes", "--out", tmp_path / "d", "--n-per-class", 4, "--length", 16) == 0
    assert len(list((tmp_path / "d").glob("sample_*.csv"))) == 12
    assert run("pretrain", "--config", small_config, "--data", tmp_path / "d", "--out", tmp_path / "c") == 0


class TestPrecedence:
    def test_flag_over_config_over_default(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 4, "train": {"epochs": 7, "lr": 0.5}, "similarity": {"alpha": 0.3}}))
        args = _parser().parse_args(["pretrain", "--config", str(cfg), "--epochs", "3", "--gamma", "0.2"])
        rc = resolve_config(args)
        t = rc.train_config()
        assert (t.epochs, t.lr, t.batch_size, t.seed) == (3, 0.5, 64, 4)
        assert rc.dtw_config().alpha == 0.3 and rc.dtw_config().gamma == 0.2

    def test_unknown_config_field(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"train": {"epochz": 3}}))
        assert run("pretrain", "--config", cfg, "--data", DATA, "--out", tmp_path) == 2

    def test_negative_alpha(self, tmp_path):
        assert run("pretrain", "--data", DATA, "--out", tmp_path, "--alpha", -1) == 2
