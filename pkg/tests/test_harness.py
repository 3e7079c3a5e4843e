import gzip
import json
import struct

import numpy as np
import pytest

from spikenet.harness import cli
from spikenet.harness.config import ConfigError, load_config, resolve
from spikenet.harness.idx import IMAGE_MAGIC, LABEL_MAGIC, IdxFormatError, load_idx, read_idx, write_idx
from spikenet.harness.reports import ReportError, emit_plot_data, write_csv
from spikenet.harness import reports
from spikenet.topology import build_topology, save_topology


@pytest.fixture
def tiny_mnist(tmp_path):
    """Learnable 4x4 'digits': class k lights pixel k (plus noise)."""
    rng = np.random.default_rng(0)

    def make(n, name):
        labels = rng.integers(0, 10, n).astype(np.uint8)
        images = rng.integers(0, 40, (n, 4, 4)).astype(np.uint8)
        images.reshape(n, 16)[np.arange(n), labels] = 255
        write_idx(tmp_path / f"{name}-images", images)
        write_idx(tmp_path / f"{name}-labels", labels)

    make(300, "train")
    make(60, "test")
    return tmp_path


def read_csv(path, header):
    return [row for _, row in reports.read_csv(path, header)]


def _write_config(path, doc):
    path.write_text(json.dumps(doc))
    return path


def _data_section(d):
    return {
        "train_images": str(d / "train-images"), "train_labels": str(d / "train-labels"),
        "test_images": str(d / "test-images"), "test_labels": str(d / "test-labels"),
        "train_size": 300, "test_size": 60,
    }


class TestIdx:
    def test_round_trip(self, tmp_path):
        a = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        write_idx(tmp_path / "x", a)
        raw = (tmp_path / "x").read_bytes()
        assert raw[:4] == b"\x00\x00\x08\x03"
        assert struct.unpack(">III", raw[4:16]) == (2, 3, 4)
        assert np.array_equal(read_idx(tmp_path / "x", IMAGE_MAGIC), a)

    def test_gzip_detected(self, tmp_path):
        labels = np.array([3, 1, 4], dtype=np.uint8)
        write_idx(tmp_path / "l", labels)
        (tmp_path / "l.gz").write_bytes(gzip.compress((tmp_path / "l").read_bytes()))
        assert read_idx(tmp_path / "l.gz", LABEL_MAGIC).tolist() == [3, 1, 4]

    def test_standard_header_counts(self, tmp_path):
        # a header announcing 60000 images is accepted when the payload matches
        rows = np.zeros((60000, 1, 1), dtype=np.uint8)
        write_idx(tmp_path / "big", rows)
        assert read_idx(tmp_path / "big", IMAGE_MAGIC).shape == (60000, 1, 1)

    def test_bad_magic_located(self, tmp_path):
        write_idx(tmp_path / "l", np.zeros(3, dtype=np.uint8))
        with pytest.raises(IdxFormatError, match=r"byte 0: bad magic.*0x00000803.*0x00000801"):
            read_idx(tmp_path / "l", IMAGE_MAGIC)

    def test_truncated_payload(self, tmp_path):
        write_idx(tmp_path / "x", np.zeros((5, 2, 2), dtype=np.uint8))
        raw = (tmp_path / "x").read_bytes()
        (tmp_path / "x").write_bytes(raw[:-3])
        with pytest.raises(IdxFormatError, match="byte 16: payload length 17"):
            read_idx(tmp_path / "x", IMAGE_MAGIC)

    def test_truncated_header(self, tmp_path):
        (tmp_path / "x").write_bytes(b"\x00\x00\x08\x03\x00\x00")
        with pytest.raises(IdxFormatError, match="byte 4: header truncated"):
            read_idx(tmp_path / "x", IMAGE_MAGIC)
        (tmp_path / "y").write_bytes(b"\x00")
        with pytest.raises(IdxFormatError, match="too short"):
            read_idx(tmp_path / "y", IMAGE_MAGIC)

    def test_count_mismatch(self, tmp_path):
        write_idx(tmp_path / "i", np.zeros((4, 2, 2), dtype=np.uint8))
        write_idx(tmp_path / "l", np.zeros(3, dtype=np.uint8))
        with pytest.raises(IdxFormatError, match="4 images but .* 3 labels"):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_normalized(self, tmp_path):
        write_idx(tmp_path / "i", np.array([[[0, 255], [51, 102]]], dtype=np.uint8))
        write_idx(tmp_path / "l", np.array([7], dtype=np.uint8))
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        assert ds.normalized().tolist() == [[0.0, 1.0, 0.2, 0.4]]


class TestConfig:
    def test_defaults_filled(self, tmp_path):
        cfg = load_config(_write_config(tmp_path / "c.json", {"experiment": "sample"}))
        assert cfg["sampler"]["tau_ref"] == 10 and cfg["seed"] == 0
        assert "oracle" not in cfg

    def test_unknown_key_located(self, tmp_path):
        p = _write_config(tmp_path / "c.json", {"experiment": "sample", "sampler": {"tau": 3}})
        with pytest.raises(ConfigError, match=r"c.json: at \$.sampler: .*'tau'"):
            load_config(p)

    def test_bad_value_located(self, tmp_path):
        p = _write_config(tmp_path / "c.json", {"experiment": "sample", "sampler": {"tau_ref": 0}})
        with pytest.raises(ConfigError, match=r"at \$.sampler.tau_ref"):
            load_config(p)

    def test_array_index_located(self, tmp_path):
        doc = {"experiment": "oracle-check", "oracle": {"schedules": ["sequential", "sideways"]}}
        with pytest.raises(ConfigError, match=r"\$.oracle.schedules\[1\]"):
            load_config(_write_config(tmp_path / "c.json", doc))

    def test_syntax_error_located(self, tmp_path):
        (tmp_path / "c.json").write_text('{"experiment": "sample",\n  "seed": }')
        with pytest.raises(ConfigError, match="line 2 column"):
            load_config(tmp_path / "c.json")

    def test_missing_path(self, tmp_path):
        doc = {"experiment": "train-ann", "data": {"train_images": "nope", "train_labels": "nope2"}}
        with pytest.raises(ConfigError, match=r"\$.data.train_images: path does not exist"):
            load_config(_write_config(tmp_path / "c.json", doc))

    def test_relative_paths_resolve_against_config(self, tiny_mnist):
        doc = {"experiment": "train-ann", "data": {"train_images": "train-images", "train_labels": "train-labels"}}
        cfg = load_config(_write_config(tiny_mnist / "c.json", doc))
        assert cfg["data"]["train_images"] == str((tiny_mnist / "train-images").resolve())

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="experiment"):
            resolve({"experiment": "fly"})


class TestReports:
    def test_csv_round_trip_and_repr_floats(self, tmp_path):
        write_csv(tmp_path / "a.csv", ("t", "x"), [(1, 0.1), (2, 1 / 3)])
        assert (tmp_path / "a.csv").read_text().splitlines() == ["t,x", "1,0.1", "2,0.3333333333333333"]
        rows = read_csv(tmp_path / "a.csv", ("t", "x"))
        assert float(rows[1]["x"]) == 1 / 3

    def test_malformed_csv_line_number(self, tmp_path):
        (tmp_path / "kl.csv").write_text("samples,kl_nats\n1,0.5\n2\n")
        with pytest.raises(ReportError, match="line 3"):
            emit_plot_data([tmp_path / "kl.csv"], tmp_path / "out")

    def test_non_numeric_line_number(self, tmp_path):
        (tmp_path / "kl.csv").write_text("samples,kl_nats\n1,0.5\n2,abc\n")
        with pytest.raises(ReportError, match="line 3"):
            emit_plot_data([tmp_path / "kl.csv"], tmp_path / "out")

    def test_unknown_header(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ReportError):
            emit_plot_data([tmp_path / "x.csv"], tmp_path / "out")


def _run(argv, capsys):
    code = cli.main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


class TestCli:
    def test_sample_and_plot_data(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.json", {
            "experiment": "sample",
            "sampler": {"n": 3, "tau_ref": 3, "samples": 20_000, "burn_in": 500, "param_seeds": [0, 1]},
        })
        code, out, err = _run(["sample", "--config", str(cfg), "--out", str(tmp_path / "run")], capsys)
        assert code == 0, err
        run = tmp_path / "run"
        for name in ("kl_curve_p0.csv", "kl_curve_p1.csv", "histogram_p0.csv", "sampling_summary.csv",
                     "params_p0.json", "manifest.json"):
            assert (run / name).exists()
        hist = read_csv(run / "histogram_p0.csv", ("configuration_bits", "count", "empirical_log_prob", "exact_log_prob"))
        assert len(hist) == 8 and sum(int(r["count"]) for r in hist) == 20_000
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["seeds"]["chain"] == 0 and manifest["config"]["sampler"]["n"] == 3
        assert set(manifest["outputs"]) >= {"kl_curve_p0.csv", "histogram_p1.csv"}
        assert all(len(h) == 64 for h in manifest["outputs"].values())

        code, out, err = _run(["plot-data", str(run / "kl_curve_p0.csv"), str(run / "histogram_p0.csv"),
                               "--out", str(tmp_path / "plots")], capsys)
        assert code == 0, err
        assert (tmp_path / "plots" / "plot_kl.csv").exists()
        assert (tmp_path / "plots" / "plot_histogram.csv").exists()

    def test_rerun_from_manifest_is_byte_identical(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.json", {
            "experiment": "sample", "seed": 4,
            "sampler": {"n": 3, "tau_ref": 2, "samples": 5_000, "burn_in": 100},
        })
        assert _run(["sample", "--config", str(cfg), "--out", str(tmp_path / "a")], capsys)[0] == 0
        manifest = tmp_path / "a" / "manifest.json"
        assert _run(["sample", "--config", str(manifest), "--out", str(tmp_path / "b")], capsys)[0] == 0
        for name in ("kl_curve_p0.csv", "histogram_p0.csv", "sampling_summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override_changes_output(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.json", {
            "experiment": "sample", "sampler": {"n": 3, "tau_ref": 2, "samples": 5_000, "burn_in": 100},
        })
        _run(["sample", "--config", str(cfg), "--out", str(tmp_path / "a")], capsys)
        _run(["sample", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "b")], capsys)
        assert (tmp_path / "a" / "histogram_p0.csv").read_bytes() != (tmp_path / "b" / "histogram_p0.csv").read_bytes()

    def test_oracle_check(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.json", {"experiment": "oracle-check", "oracle": {"draws": 3}})
        code, _, err = _run(["oracle-check", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 0, err
        rows = read_csv(tmp_path / "o" / "oracle_tv.csv", ("draw", "param_seed", "schedule", "total_variation",
                                                          "joint_max_abs_error", "residual", "iterations", "pass"))
        assert len(rows) == 6 and all(r["pass"] == "1" for r in rows)

    def test_failed_check_exit_code(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.json", {
            "experiment": "oracle-check", "oracle": {"draws": 1, "tolerance": 1e-300},
        })
        code, _, err = _run(["oracle-check", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 1 and "error [check]" in err

    def test_simulate(self, tmp_path, capsys):
        topo = build_topology(3, [(1, 0, 2.0), (2, 1, 2.0)], [0.0, 0.0, 0.0])
        save_topology(topo, tmp_path / "net.json")
        cfg = _write_config(tmp_path / "c.json", {
            "experiment": "simulate",
            "simulation": {"topology": "net.json", "horizon": 40, "input_current": [1.5, 0.0, 0.0]},
        })
        code, _, err = _run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")], capsys)
        assert code == 0, err
        lines = (tmp_path / "s" / "raster.csv").read_text().splitlines()
        assert lines[0] == "t,neuron,spike" and len(lines) > 1
        assert (tmp_path / "s" / "raster.bin").stat().st_size == 40 * 3
        assert len((tmp_path / "s" / "potentials.csv").read_text().splitlines()) == 41

    def test_train_and_convert(self, tiny_mnist, tmp_path, capsys):
        data = _data_section(tiny_mnist)
        ann_cfg = {"sizes": [16, 12, 10], "epochs": 20, "learning_rate": 0.3, "batch_size": 16}
        cfg = _write_config(tmp_path / "t.json", {"experiment": "train-ann", "data": data, "ann": ann_cfg})
        code, _, err = _run(["train-ann", "--config", str(cfg), "--out", str(tmp_path / "t")], capsys)
        assert code == 0, err
        hist = read_csv(tmp_path / "t" / "training_history.csv", ("epoch", "loss", "train_accuracy", "test_accuracy"))
        assert len(hist) == 20 and float(hist[-1]["test_accuracy"]) > 0.9

        conv = {"threshold": 1.0, "timesteps": [5, 50], "encodings": ["analog", "poisson"]}
        cfg = _write_config(tmp_path / "c.json", {
            "experiment": "convert-rate", "data": data,
            "ann": {**ann_cfg, "weights": str(tmp_path / "t" / "weights.json")}, "conversion": conv,
        })
        code, _, err = _run(["convert", "--config", str(cfg), "--out", str(tmp_path / "c1")], capsys)
        assert code == 0, err
        code, _, err = _run(["convert", "--config", str(cfg), "--out", str(tmp_path / "c2")], capsys)
        for name in ("accuracy_analog.csv", "accuracy_poisson.csv", "conversion_summary.csv"):
            assert (tmp_path / "c1" / name).read_bytes() == (tmp_path / "c2" / name).read_bytes()
        acc = read_csv(tmp_path / "c1" / "accuracy_analog.csv", ("t", "accuracy", "accuracy_std"))
        assert float(acc[-1]["accuracy"]) > 0.8

        code, _, err = _run(["convert", "--config", str(cfg), "--encoding", "poisson",
                             "--out", str(tmp_path / "c3")], capsys)
        assert code == 0 and not (tmp_path / "c3" / "accuracy_analog.csv").exists()

        cfg = _write_config(tmp_path / "tt.json", {
            "experiment": "convert-ttfs", "data": data,
            "ann": {**ann_cfg, "weights": str(tmp_path / "t" / "weights.json")}, "conversion": conv,
        })
        code, _, err = _run(["convert", "--config", str(cfg), "--out", str(tmp_path / "tt")], capsys)
        assert code == 0, err
        assert (tmp_path / "tt" / "accuracy_ttfs.csv").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.json", {"experiment": "sample", "sampler": {"n": 0}})
        code, _, err = _run(["sample", "--config", str(cfg)], capsys)
        assert code == 2 and "error [config]" in err and "$.sampler.n" in err

    def test_wrong_subcommand(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.json", {"experiment": "sample"})
        code, _, err = _run(["convert", "--config", str(cfg)], capsys)
        assert code == 2 and "cannot run" in err

    def test_stage_named_in_runtime_errors(self, tiny_mnist, tmp_path, capsys):
        bad = tmp_path / "bad-images"
        bad.write_bytes(b"\x00\x00\x08\x01" + (tiny_mnist / "train-images").read_bytes()[4:])
        data = {**_data_section(tiny_mnist), "train_images": str(bad)}
        cfg = _write_config(tmp_path / "c.json", {"experiment": "train-ann", "data": data})
        code, _, err = _run(["train-ann", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 1 and "[load-data]" in err and "bad magic" in err
