import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from snrsel import dataio, harness
from snrsel.errors import ConfigurationError
from snrsel.learner import ArchConfig, ConvFrontConfig, TrainConfig
from snrsel.sigsynth import DatasetSpec, ModType, SnrGrid, build_dataset

MINI_GRID = SnrGrid((-4.0, 0.0, 4.0))
MINI_ARCH = ArchConfig(
    input_len=128, hidden=(8,), n_classes=2,
    conv_front=ConvFrontConfig(4, 16, 8, "modulus", "avg"),
)
MINI_TRAIN = TrainConfig(batch_size=128, max_epochs=4, early_stop_patience=2, dtype="float32")


def mini_config(strategy, out_dir, **overrides):
    base = dict(
        strategy=strategy,
        dataset_spec=DatasetSpec(
            classes=(ModType.BPSK, ModType.QAM16),
            grid=MINI_GRID,
            frames_per_cell=30,
            master_seed=5,
        ),
        pipeline=harness.reference_pipeline(),
        arch=MINI_ARCH,
        train=MINI_TRAIN,
        n_seeds=2,
        master_seed=11,
        output_dir=str(out_dir),
    )
    base.update(overrides)
    return harness.ExperimentConfig(**base)


@pytest.fixture(scope="module")
def single_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("single")
    return harness.run(mini_config("single_snr", out)), out


class TestRun:
    def test_single_snr_report_structure(self, single_report):
        report, _ = single_report
        assert report.strategy == "single_snr"
        assert report.test_snrs == [-4.0, 0.0, 4.0]
        assert len(report.acc_per_seed) == 2
        assert len(report.acc_mean) == 3
        assert all(0.0 <= a <= 1.0 for a in report.acc_mean)
        for key, cm in report.confusion.items():
            cm = np.asarray(cm)
            # each (seed, snr) run tests 15 frames/class -> 30 per seed
            assert cm.sum() == 2 * 30
            assert np.all(cm.sum(axis=1) == 30)

    def test_audit_clean(self, single_report):
        report, _ = single_report
        assert report.audit["clean"] is True
        for audit in report.audit["per_seed"]:
            assert audit["train_test_overlap"] == 0
            assert audit["val_test_overlap"] == 0

    def test_determinism_modulo_timing(self, tmp_path):
        cfg_a = mini_config("single_snr", tmp_path / "a")
        cfg_b = mini_config("single_snr", tmp_path / "b")
        ra = harness.strip_timing(harness.report_to_dict(harness.run(cfg_a)))
        rb = harness.strip_timing(harness.report_to_dict(harness.run(cfg_b)))
        ra["config"].pop("output_dir")
        rb["config"].pop("output_dir")
        assert ra == rb

    def test_all_snr_single_model_curve(self, tmp_path):
        report = harness.run(mini_config("all_snr", tmp_path, n_seeds=1), persist=False)
        assert len(report.acc_mean) == 3

    def test_uniform_fraction(self, tmp_path):
        report = harness.run(
            mini_config("uniform_fraction", tmp_path, n_seeds=1, uniform_fraction_value=1.0 / 3),
            persist=False,
        )
        assert report.strategy_meta["per_seed"][0]["train_size"] == 30  # 90 pool frames / 3

    def test_boost_metadata(self, tmp_path):
        report = harness.run(
            mini_config("boost", tmp_path, n_seeds=1, test_snrs=(0.0,)), persist=False
        )
        b = report.strategy_meta["per_seed"][0]["boost"]["0"]
        assert b["selected_snrs_db"][0] == 0.0
        assert len(b["val_trace"]) == len(b["selected_snrs_db"])

    def test_bagging_run(self, tmp_path):
        report = harness.run(
            mini_config("bagging", tmp_path, n_seeds=1, test_snrs=(0.0,), bag_member_fraction=0.5),
            persist=False,
        )
        meta = report.strategy_meta["per_seed"][0]["bagging"]["0"]
        assert meta["pool_snrs_db"] == [-4.0, 0.0, 4.0]
        assert meta["k"] == 3

    def test_sensitivity_run(self, tmp_path):
        report = harness.run(
            mini_config("sensitivity", tmp_path, n_seeds=1, sensitivity_offsets=(-4.0, 0.0, 4.0)),
            persist=False,
        )
        table = report.strategy_meta["per_seed"][0]["sensitivity"]
        acc = np.asarray(table["accuracy"], dtype=float)
        assert acc.shape == (3, 3)
        assert np.isnan(acc[0, 0])  # -4 dB with -4 offset is off grid

    def test_off_grid_test_snr_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            harness.run(mini_config("single_snr", tmp_path, test_snrs=(1.0,)))

    def test_timing_accounting(self, single_report):
        report, _ = single_report
        per_seed = report.strategy_meta["per_seed"]
        total = 0.0
        for sm in per_seed:
            for rec in sm["records"].values():
                total += rec["timing"]["total_seconds"]
        assert report.timing["total_train_seconds"] == pytest.approx(total, rel=0.05)


class TestPersistence:
    def test_files_written(self, single_report):
        _, out = single_report
        assert (out / "report.json").exists()
        assert (out / "accuracy_curve.csv").exists()
        assert (out / "timing.csv").exists()
        assert (out / "confusion_snr_0.csv").exists()
        runs = list((out / "runs").glob("*.json"))
        assert len(runs) == 2 * 3  # seeds x test SNRs

    def test_accuracy_csv_rows(self, single_report):
        report, out = single_report
        lines = (out / "accuracy_curve.csv").read_text().strip().split("\n")
        assert len(lines) == 1 + len(report.test_snrs)
        assert lines[0] == "test_snr_db,acc_mean,acc_std,seed0,seed1"

    def test_reexport_byte_identical(self, single_report, tmp_path):
        report, _ = single_report
        harness.report_export(report, tmp_path / "x")
        a = (tmp_path / "x" / "report.json").read_bytes()
        harness.report_export(report, tmp_path / "y")
        b = (tmp_path / "y" / "report.json").read_bytes()
        assert a == b
        assert (tmp_path / "x" / "accuracy_curve.csv").read_bytes() == (
            tmp_path / "y" / "accuracy_curve.csv"
        ).read_bytes()

    def test_report_json_round_trip(self, single_report):
        report, out = single_report
        loaded = json.loads((out / "report.json").read_text())
        assert loaded["strategy"] == "single_snr"
        assert loaded["acc_mean"] == report.acc_mean


class TestImportDataset:
    def test_import_matches_generated(self, tmp_path):
        spec = DatasetSpec(
            classes=(ModType.BPSK, ModType.GFSK), grid=MINI_GRID, frames_per_cell=4, master_seed=3
        )
        ds = build_dataset(spec)
        dataio.write_container(ds, tmp_path / "ds")
        config = harness.ExperimentConfig(
            strategy="single_snr",
            dataset_path=str(tmp_path / "ds"),
            arch=replace(MINI_ARCH, n_classes=2),
            train=MINI_TRAIN,
            pipeline=harness.reference_pipeline(),
            n_seeds=1,
            master_seed=1,
            output_dir=str(tmp_path / "out"),
        )
        dataset, arch, test_snrs = harness._resolve(config)
        assert np.array_equal(dataset.iq, ds.iq)
        assert test_snrs == (-4.0, 0.0, 4.0)


class TestConfusionOverlay:
    def test_identical_reports_equal_components(self, single_report):
        report, _ = single_report
        text = harness.confusion_overlay([report, report, report], 0.0)
        lines = text.strip().split("\n")
        assert lines[0] == "true,pred,whole_dataset,single_snr,boost"
        assert len(lines) == 1 + len(report.classes) ** 2
        for line in lines[1:]:
            vals = line.split(",")[2:]
            assert vals[0] == vals[1] == vals[2]

    def test_row_normalization(self, single_report):
        report, _ = single_report
        text = harness.confusion_overlay([report, report, report], 0.0)
        rows = {}
        for line in text.strip().split("\n")[1:]:
            parts = line.split(",")
            rows.setdefault(parts[0], []).append(float(parts[2]))
        for vals in rows.values():
            assert sum(vals) == pytest.approx(1.0, abs=1e-6)

    def test_class_mismatch_rejected(self, single_report, tmp_path):
        report, _ = single_report
        other = replace(report, classes=["X", "Y"])
        with pytest.raises(ConfigurationError):
            harness.confusion_overlay([report, other, report], 0.0)


class TestConfigFile:
    def test_yaml_round_trip(self, tmp_path):
        raw = {
            "strategy": "boost",
            "master_seed": 42,
            "n_seeds": 3,
            "output_dir": "out/boost",
            "dataset": {
                "classes": ["BPSK", "QPSK", "QAM16"],
                "snr_grid": {"start": -10, "stop": 10, "step": 2},
                "frames_per_cell": 50,
                "impairments": {"cfo_max": 0.002, "fading": True},
            },
            "pipeline": {"use_fft": True, "normalization": "none"},
            "arch": {"hidden": [24, 12], "conv_front": {"n_kernels": 8, "kernel_len": 5}},
            "train": {"optimizer": "sgd", "learning_rate": 0.01, "max_epochs": 7},
            "test_snrs": [0, 4],
            "strategy_params": {"threshold": 2.0, "candidate_epochs": 3},
        }
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(raw))
        config = harness.load_config(path)
        assert config.strategy == "boost"
        assert config.dataset_spec.grid.values == tuple(float(v) for v in range(-10, 12, 2))
        assert config.dataset_spec.impairments.fading is True
        assert config.pipeline.use_fft is True
        assert config.arch.hidden == (24, 12)
        assert config.train.optimizer == "sgd"
        assert config.test_snrs == (0.0, 4.0)
        assert config.boost_threshold == 2.0
        assert config.boost_candidate_epochs == 3

    def test_missing_strategy_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump({"n_seeds": 1}))
        with pytest.raises(ConfigurationError):
            harness.load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            harness.load_config(tmp_path / "absent.yaml")
