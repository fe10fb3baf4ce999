import json
import math
import os

import numpy as np
import pytest

from noisylab.cli import cli_main
from noisylab.data import synth_blobs, write_feature_cache
from noisylab.errors import ConfigError, InvalidInputError
from noisylab.experiment import (
    EpochRecord,
    ExperimentConfig,
    delta_h,
    emit_metrics,
    emit_metrics_jsonl,
    parse_config,
    run_experiment,
)
from noisylab.losses import ALL_KINDS, LambdaSchedule, LossSpec, lambda_at


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


BLOBS_CFG = """
# quick separable-blobs run
dataset = synth
synth_n = 600
synth_classes = 3
synth_dim = 6
synth_separation = 5.0
synth_test_n = 200
loss = ce
epochs = 5
batch_size = 64
lr = 0.1
seed = 3
"""


class TestParseConfig:
    def test_defaults_filled(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, "dataset = synth\nloss = ce\n"))
        assert cfg.lr == 0.001
        assert cfg.momentum == 0.9
        assert cfg.clip_norm == 5.0
        assert cfg.batch_size == 256
        assert cfg.epochs == 100
        assert cfg.val_fraction == 0.1

    def test_typo_key_rejected_by_name(self, tmp_path):
        with pytest.raises(ConfigError, match="lose"):
            parse_config(write_config(tmp_path, "dataset = synth\nlose = ce\n"))

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(ConfigError, match="dataset"):
            parse_config(write_config(tmp_path, "loss = ce\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "absent.cfg")

    def test_schedule_parsing(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, "dataset = synth\nloss = ce\nepochs = 40\n"
                      "entropy_schedule = linear:0.3\n"))
        sched = cfg.loss.entropy_schedule
        assert sched == LambdaSchedule("linear", 0.3, 40)

    def test_bad_schedule(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write_config(
                tmp_path, "dataset = synth\nentropy_schedule = cosine:0.3\n"))

    def test_loss_kinds_case_insensitive(self, tmp_path):
        for text in ("anl-ce", "ANL-CE", "nce+rce"):
            cfg = parse_config(write_config(
                tmp_path, f"dataset = synth\nloss = {text}\n"))
            assert cfg.loss.kind in ALL_KINDS

    def test_loss_params_forwarded(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, "dataset = synth\nloss = gce\nq = 0.5\n"))
        assert cfg.loss.params["q"] == 0.5

    def test_bad_value_type(self, tmp_path):
        with pytest.raises(ConfigError, match="epochs"):
            parse_config(write_config(tmp_path, "dataset = synth\nepochs = many\n"))

    def test_noise_block(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, "dataset = synth\nnoise = symmetric\nnoise_rate = 0.4\n"))
        assert cfg.noise.kind == "symmetric"
        assert cfg.noise.rate == 0.4

    def test_asymmetric_needs_map(self, tmp_path):
        with pytest.raises(ConfigError, match="noise_map"):
            parse_config(write_config(
                tmp_path, "dataset = synth\nnoise = asymmetric\nnoise_rate = 0.3\n"))

    def test_custom_flip_map(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, "dataset = synth\nnoise = asymmetric\nnoise_rate = 0.3\n"
                      "noise_map = 0>1,1>2\n"))
        assert cfg.noise.flip_map.pairs == ((0, 1), (1, 2))

    def test_bad_noise_rate_range(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write_config(
                tmp_path, "dataset = synth\nnoise = asymmetric\nnoise_rate = 0.6\n"
                          "noise_map = mnist\n"))


class TestRunExperiment:
    def test_learns_separable_blobs(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, BLOBS_CFG))
        records = run_experiment(cfg)
        assert len(records) == 5
        assert records[-1].val_acc >= 0.95
        assert records[-1].test_acc >= 0.95

    def test_identical_runs_identical_records(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, BLOBS_CFG))
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        for ra, rb in zip(a, b):
            assert (ra.train_loss, ra.train_acc, ra.val_acc, ra.test_acc,
                    ra.mean_entropy) == (rb.train_loss, rb.train_acc,
                                         rb.val_acc, rb.test_acc,
                                         rb.mean_entropy)

    def test_heavy_noise_hurts_test_accuracy(self, tmp_path):
        base = write_config(tmp_path, BLOBS_CFG + "epochs = 10\n")
        clean_records = run_experiment(parse_config(base))
        noisy = write_config(
            tmp_path, BLOBS_CFG + "epochs = 10\nnoise = symmetric\n"
                      "noise_rate = 0.8\n", name="noisy.cfg")
        noisy_records = run_experiment(parse_config(noisy))
        assert noisy_records[-1].test_acc < clean_records[-1].test_acc

    def test_val_and_test_labels_stay_clean(self, tmp_path):
        # With eta=1 on 2 classes every training label is flipped, so a model
        # that fits the training data perfectly must score ~0 against the
        # clean validation/test labels. If either split were corrupted the
        # accuracies would be high instead.
        cfg_path = write_config(tmp_path, """
dataset = synth
synth_n = 400
synth_classes = 2
synth_dim = 4
synth_separation = 8.0
synth_test_n = 100
loss = ce
epochs = 8
batch_size = 64
lr = 0.2
seed = 5
noise = symmetric
noise_rate = 1.0
""")
        records = run_experiment(parse_config(cfg_path))
        assert records[-1].train_acc > 0.95  # fits the flipped labels
        assert records[-1].val_acc < 0.05
        assert records[-1].test_acc < 0.05

    def test_recorded_lambda_matches_schedule(self, tmp_path):
        cfg_path = write_config(
            tmp_path, BLOBS_CFG + "entropy_schedule = linear:0.3\n")
        cfg = parse_config(cfg_path)
        records = run_experiment(cfg)
        sched = cfg.loss.entropy_schedule
        for r in records:
            assert r.entropy_weight == lambda_at(sched, r.epoch)
        assert records[0].entropy_weight == 0.0
        assert records[-1].entropy_weight == pytest.approx(0.3)

    def test_entropy_column_within_bounds(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, BLOBS_CFG))
        for r in run_experiment(cfg):
            assert 0.0 <= r.mean_entropy <= math.log(3) + 1e-9

    def test_train_subset(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, BLOBS_CFG + "train_subset = 100\n"))
        records = run_experiment(cfg)
        assert len(records) == 5  # runs fine on the reduced split

    def test_feature_cache_source(self, tmp_path):
        ds = synth_blobs(300, 3, 5, 5.0, seed=9)
        train_path = tmp_path / "train.nlfc"
        test_path = tmp_path / "test.nlfc"
        write_feature_cache(ds, train_path)
        write_feature_cache(synth_blobs(100, 3, 5, 5.0, seed=10), test_path)
        cfg_path = write_config(tmp_path, f"""
dataset = features
features_path = {train_path}
features_test_path = {test_path}
loss = ce
epochs = 4
batch_size = 64
lr = 0.2
""")
        records = run_experiment(parse_config(cfg_path))
        assert records[-1].test_acc > 0.9


def _records(entropies):
    return [EpochRecord(i, 0.0, 0.5, 0.9, 0.8, 0.8, h, 12.0)
            for i, h in enumerate(entropies)]


class TestDeltaH:
    def test_drop(self):
        assert delta_h(_records([1.0, 0.7, 0.3])) == pytest.approx(0.7)

    def test_constant(self):
        assert delta_h(_records([0.4, 0.4, 0.4])) == 0.0

    def test_rising_entropy_is_negative(self):
        assert delta_h(_records([0.2, 0.9])) == pytest.approx(-0.7)

    def test_needs_two_records(self):
        with pytest.raises(InvalidInputError):
            delta_h(_records([1.0]))


class TestEmitMetrics:
    def test_row_count_and_header(self, tmp_path):
        path = tmp_path / "m.csv"
        emit_metrics(_records([1.0, 0.8, 0.6]), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 5  # header + 3 rows + summary
        assert lines[0] == ("epoch,lambda,train_loss,train_acc,val_acc,"
                            "test_acc,mean_entropy,ms")
        assert lines[-1] == "# delta_h=0.400000"

    def test_six_decimal_floats(self, tmp_path):
        path = tmp_path / "m.csv"
        emit_metrics(_records([1.0, 0.5]), path)
        row = path.read_text().splitlines()[1].split(",")
        assert row[2] == "0.500000"
        assert row[6] == "1.000000"

    def test_byte_identical_for_identical_records(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_metrics(_records([1.0, 0.5]), a)
        emit_metrics(_records([1.0, 0.5]), b)
        assert a.read_bytes() == b.read_bytes()

    def test_timing_zeroed_by_default(self, tmp_path):
        path = tmp_path / "m.csv"
        emit_metrics(_records([1.0, 0.5]), path)
        assert all(line.split(",")[-1] == "0"
                   for line in path.read_text().splitlines()[1:3])
        emit_metrics(_records([1.0, 0.5]), path, include_timing=True)
        assert path.read_text().splitlines()[1].split(",")[-1] == "12"

    def test_summary_matches_delta_h(self, tmp_path):
        records = _records([1.25, 0.75, 0.5])
        path = tmp_path / "m.csv"
        emit_metrics(records, path)
        summary = path.read_text().splitlines()[-1]
        assert summary == f"# delta_h={delta_h(records):.6f}"

    def test_jsonl_mirror(self, tmp_path):
        path = tmp_path / "m.jsonl"
        emit_metrics_jsonl(_records([1.0, 0.5]), path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 2
        assert rows[0]["epoch"] == 0
        assert rows[0]["mean_entropy"] == 1.0
        assert rows[0]["wall_ms"] == 0

    def test_empty_records_rejected(self, tmp_path):
        with pytest.raises(InvalidInputError):
            emit_metrics([], tmp_path / "m.csv")


class TestCli:
    def test_run_writes_metrics(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BLOBS_CFG + f"out = {tmp_path}/out.csv\n")
        assert cli_main(["run", cfg]) == 0
        assert (tmp_path / "out.csv").exists()
        assert "final test acc" in capsys.readouterr().out

    def test_run_byte_identical_outputs(self, tmp_path):
        cfg = write_config(tmp_path, BLOBS_CFG)
        out_a, out_b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        assert cli_main(["run", cfg, "--out", out_a]) == 0
        assert cli_main(["run", cfg, "--out", out_b]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_run_jsonl_flag(self, tmp_path):
        cfg = write_config(tmp_path, BLOBS_CFG)
        out = str(tmp_path / "m.csv")
        assert cli_main(["run", cfg, "--out", out, "--jsonl"]) == 0
        assert (tmp_path / "m.jsonl").exists()

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert cli_main(["run", str(tmp_path / "missing.cfg")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_config_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, "dataset = synth\nlose = ce\n")
        assert cli_main(["run", cfg]) == 2

    def test_sweep_one_csv_per_rate(self, tmp_path):
        cfg = write_config(
            tmp_path, BLOBS_CFG + "noise = symmetric\nnoise_rate = 0.2\n"
                      f"out = {tmp_path}/sweep.csv\n")
        assert cli_main(["sweep", cfg, "--noise-rates", "0.2,0.4,0.6,0.8",
                         "--epochs", "2"]) == 0
        for eta in ("0.2", "0.4", "0.6", "0.8"):
            assert (tmp_path / f"sweep_eta{eta}.csv").exists()

    def test_sweep_without_noise_config_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, BLOBS_CFG)
        assert cli_main(["sweep", cfg, "--noise-rates", "0.2"]) == 2

    def test_grad_check_ok(self, capsys):
        assert cli_main(["grad-check", "--points", "5"]) == 0
        out = capsys.readouterr().out
        assert "all gradients within" in out

    def test_make_noise(self, tmp_path, capsys):
        ds = synth_blobs(200, 10, 8, 3.0, seed=1)
        cache = tmp_path / "ds.nlfc"
        write_feature_cache(ds, cache)
        out = tmp_path / "noisy.csv"
        assert cli_main(["make-noise", str(cache), "symmetric:0.4",
                         "--seed", "7", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "index,clean,noisy"
        assert len(lines) == 202  # header + 200 rows + summary
        assert lines[-1].startswith("# empirical_rate=")

    def test_make_noise_asymmetric_builtin(self, tmp_path):
        ds = synth_blobs(100, 10, 8, 3.0, seed=2)
        cache = tmp_path / "ds.nlfc"
        write_feature_cache(ds, cache)
        out = tmp_path / "noisy.csv"
        assert cli_main(["make-noise", str(cache), "asymmetric:0.3:mnist",
                         "--out", str(out)]) == 0

    def test_make_noise_bad_spec_exits_2(self, tmp_path):
        ds = synth_blobs(50, 5, 4, 3.0, seed=2)
        cache = tmp_path / "ds.nlfc"
        write_feature_cache(ds, cache)
        assert cli_main(["make-noise", str(cache), "gaussian:0.3"]) == 2

    def test_make_noise_from_idx_labels(self, tmp_path):
        from noisylab.data import synth_digits, write_mnist_idx

        ds = synth_digits(40, seed=6)
        img, lbl = tmp_path / "d.img", tmp_path / "d.lbl"
        write_mnist_idx(ds, img, lbl)
        out = tmp_path / "noisy.csv"
        assert cli_main(["make-noise", str(lbl), "symmetric:0.5",
                         "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 42

    def test_divergence_exits_3(self, tmp_path, monkeypatch):
        from noisylab import cli
        from noisylab.errors import DivergenceError

        def explode(cfg):
            raise DivergenceError("non-finite loss at epoch 0, batch 1")

        monkeypatch.setattr(cli, "run_experiment", explode)
        cfg = write_config(tmp_path, BLOBS_CFG)
        assert cli_main(["run", cfg]) == 3
