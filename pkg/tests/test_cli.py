import hashlib
import json

import numpy as np
import pytest

from ttfs_sim import cli, datasets
from ttfs_sim.core import load_network


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    """A small synthetic image classification problem in IDX files."""
    root = tmp_path_factory.mktemp("data")
    rng = np.random.default_rng(0)
    n = 160
    y = rng.integers(0, 2, n).astype(np.uint8)
    img = 0.1 * rng.uniform(0, 1, (n, 4, 4))
    img[y == 0, :2] += 0.8
    img[y == 1, 2:] += 0.8
    pixels = (np.clip(img, 0, 1).reshape(n, 16) * 255).astype(np.uint8)
    paths = {}
    for name, sl in (("train", slice(0, 120)), ("test", slice(120, None))):
        ip = root / f"{name}-images.idx.gz"
        lp = root / f"{name}-labels.idx.gz"
        datasets.save_idx_images(ip, pixels[sl])
        datasets.save_idx_labels(lp, y[sl])
        paths[f"{name}_images"] = str(ip)
        paths[f"{name}_labels"] = str(lp)
    return paths


def _train_args(paths, out, extra=()):
    return [
        "train",
        "--train-images", paths["train_images"],
        "--train-labels", paths["train_labels"],
        "--hidden", "8",
        "--epochs", "15",
        "--learning-rate", "0.3",
        "--batch-size", "20",
        "--seed", "1",
        "--out", str(out),
        *extra,
    ]


@pytest.fixture(scope="module")
def trained_model(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "model.ttfs"
    assert cli.main(_train_args(tiny_dataset, out)) == 0
    return out


@pytest.fixture(scope="module")
def converted_model(trained_model, tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "norm.ttfs"
    assert cli.main(["convert", "--model", str(trained_model), "--out", str(out)]) == 0
    return out


class TestTrain:
    def test_happy_path_writes_model(self, trained_model, capsys):
        net, stats = load_network(trained_model)
        assert stats is not None
        assert [l.n_out for l in net.layers] == [8, 2]

    def test_missing_dataset_path_names_it(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.idx")
        rc = cli.main(
            ["train", "--train-images", missing, "--train-labels", missing]
        )
        assert rc == 1
        assert missing in capsys.readouterr().err

    def test_malformed_config_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this line has no equals sign\n")
        assert cli.main(["train", "--config", str(cfg)]) == 1
        assert "key=value" in capsys.readouterr().err

    def test_config_file_drives_training(self, tiny_dataset, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            "# tiny training run\n"
            f"train_images = {tiny_dataset['train_images']}\n"
            f"train_labels = {tiny_dataset['train_labels']}\n"
            "hidden = 6\n"
            "epochs = 2\n"
            "seed = 5\n"
        )
        out = tmp_path / "model.ttfs"
        assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        net, _ = load_network(out)
        assert net.layers[0].n_out == 6

    def test_fixed_seed_gives_byte_identical_models(self, tiny_dataset, tmp_path):
        a, b = tmp_path / "a.ttfs", tmp_path / "b.ttfs"
        assert cli.main(_train_args(tiny_dataset, a)) == 0
        assert cli.main(_train_args(tiny_dataset, b)) == 0
        da = hashlib.sha256(a.read_bytes()).hexdigest()
        db = hashlib.sha256(b.read_bytes()).hexdigest()
        assert da == db


class TestConvert:
    def test_happy_path_normalizes(self, converted_model):
        net, stats = load_network(converted_model)
        assert stats is not None
        for lam in stats.lam[1:]:
            assert lam == pytest.approx(1.0)

    def test_missing_model_file(self, capsys):
        assert cli.main(["convert", "--model", "/no/such/model"]) == 1
        assert "/no/such/model" in capsys.readouterr().err

    def test_kernel_override_flags(self, trained_model, tmp_path):
        out = tmp_path / "norm.ttfs"
        rc = cli.main(
            ["convert", "--model", str(trained_model), "--out", str(out),
             "--tau", "10", "--td", "1.5"]
        )
        assert rc == 0
        net, _ = load_network(out)
        for layer in net.layers:
            assert layer.kernel.tau == 10.0 and layer.kernel.t_d == 1.5

    def test_model_without_stats_rejected(self, converted_model, tmp_path, capsys):
        from ttfs_sim.core import save_network

        net, _ = load_network(converted_model)
        bare = tmp_path / "bare.ttfs"
        save_network(bare, net)
        assert cli.main(["convert", "--model", str(bare)]) == 1
        assert "statistics" in capsys.readouterr().err


class TestOptimize:
    def test_happy_path_with_loss_csv(self, converted_model, tmp_path):
        out = tmp_path / "opt.ttfs"
        csv = tmp_path / "loss.csv"
        rc = cli.main(
            ["optimize", "--model", str(converted_model), "--out", str(out),
             "--iters", "20", "--loss-csv", str(csv)]
        )
        assert rc == 0
        net, stats = load_network(out)
        assert stats is not None
        lines = csv.read_text().strip().splitlines()
        assert lines[0].startswith("iteration,layer")
        assert len(lines) - 1 == 20 * net.num_layers

    def test_deterministic_given_seed(self, converted_model, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.ttfs"
            assert cli.main(
                ["optimize", "--model", str(converted_model), "--out", str(out),
                 "--iters", "10", "--seed", "7"]
            ) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestRun:
    def test_ttfs_run_with_artifacts(self, converted_model, tiny_dataset, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        curve = tmp_path / "curve.csv"
        report = tmp_path / "report.jsonl"
        table = tmp_path / "kernels.csv"
        rc = cli.main(
            ["run", "--model", str(converted_model),
             "--images", tiny_dataset["test_images"],
             "--labels", tiny_dataset["test_labels"],
             "--schedule", "early-firing",
             "--trace", str(trace), "--curve", str(curve),
             "--report", str(report), "--kernel-table", str(table)]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "accuracy" in out

        assert trace.read_text().splitlines()[0] == "layer,neuron,time"
        assert curve.read_text().splitlines()[0] == "time,accuracy"
        assert table.read_text().splitlines()[0] == "layer,offset,value"
        lines = report.read_text().strip().splitlines()
        per_run, aggregate = lines[:-1], json.loads(lines[-1])
        assert len(per_run) == aggregate["n_runs"] == 40
        first = json.loads(per_run[0])
        assert {"predicted", "correct", "spikes", "latency"} <= set(first)

    def test_dense_engine_matches_event_engine(self, converted_model, tiny_dataset, tmp_path):
        reports = {}
        for engine in ("event", "dense"):
            path = tmp_path / f"{engine}.jsonl"
            assert cli.main(
                ["run", "--model", str(converted_model),
                 "--images", tiny_dataset["test_images"],
                 "--labels", tiny_dataset["test_labels"],
                 "--engine", engine, "--limit", "10",
                 "--report", str(path)]
            ) == 0
            reports[engine] = path.read_text()
        assert reports["event"] == reports["dense"]

    def test_rate_coding_run(self, converted_model, tiny_dataset, capsys):
        rc = cli.main(
            ["run", "--model", str(converted_model),
             "--images", tiny_dataset["test_images"],
             "--labels", tiny_dataset["test_labels"],
             "--coding", "rate", "--T", "100", "--limit", "10"]
        )
        assert rc == 0
        assert "rate run" in capsys.readouterr().out

    def test_feature_mismatch_is_user_error(self, converted_model, tmp_path, capsys):
        ip = tmp_path / "imgs.idx"
        lp = tmp_path / "lbls.idx"
        datasets.save_idx_images(ip, np.zeros((2, 9), dtype=np.uint8))
        datasets.save_idx_labels(lp, np.zeros(2, dtype=np.uint8))
        rc = cli.main(
            ["run", "--model", str(converted_model),
             "--images", str(ip), "--labels", str(lp)]
        )
        assert rc == 1
        assert "features" in capsys.readouterr().err
