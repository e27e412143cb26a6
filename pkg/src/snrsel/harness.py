"""Experiment orchestration and reporting.

Parses experiment configs, generates or imports the dataset, runs one
selection strategy across seeds and test SNRs, and persists an EvalReport
(JSON summary plus plot-ready CSV tables). All randomness flows from the
experiment master seed through documented (tag, index) derivations, so a
rerun with the same config reproduces every non-timing number exactly.
Wall-clock measurements are confined to "timing" subtrees of the outputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import dataio
from .errors import ConfigurationError, OutputError
from .features import PipelineConfig, fit_stats, transform
from .learner import ArchConfig, ConvFrontConfig, TrainConfig, TrainRecord, evaluate
from .seeding import derive_seed
from .sigsynth import Dataset, DatasetSpec, ImpairmentConfig, ModType, SnrGrid, build_dataset
from .strategies import (
    DataView,
    bagging_train,
    ensemble_predict,
    make_split,
    offset_sensitivity,
    select_uniform_fraction,
    snr_boost,
    train_on_snr_set,
)

STRATEGIES = ("all_snr", "single_snr", "uniform_fraction", "boost", "bagging", "sensitivity")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, addressable from the config file."""

    strategy: str
    dataset_spec: DatasetSpec | None = None
    dataset_path: str | None = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    arch: ArchConfig | None = None  # None: sized from the dataset
    train: TrainConfig = field(default_factory=TrainConfig)
    test_snrs: tuple[float, ...] | None = None  # None: whole grid
    n_seeds: int = 1
    master_seed: int = 0
    output_dir: str = "out"
    test_fraction: float = 0.5
    val_fraction: float = 0.2
    uniform_fraction_value: float = 0.125
    boost_threshold: float = 1.0
    boost_candidate_epochs: int | None = None  # lighter budget for scoring fits
    boost_candidate_patience: int | None = None
    boost_candidate_batch: int | None = None
    bag_k: int = 3
    bag_member_fraction: float = 0.05
    sensitivity_offsets: tuple[float, ...] = (-4.0, -2.0, 0.0, 2.0, 4.0)

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy must be one of {STRATEGIES}")
        if self.n_seeds < 1:
            raise ConfigurationError("n_seeds must be >= 1")
        if self.dataset_spec is None and self.dataset_path is None:
            raise ConfigurationError("Either dataset_spec or dataset_path is required")


@dataclass
class EvalReport:
    """Aggregated results of one strategy run."""

    strategy: str
    classes: list[str]
    test_snrs: list[float]
    acc_per_seed: list[list[float]]  # [seed][test_snr]
    acc_mean: list[float]
    acc_std: list[float]
    confusion: dict[str, list[list[int]]]  # per test SNR, summed over seeds
    strategy_meta: dict
    audit: dict
    timing: dict
    config: dict


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {str(k): _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_builtin(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _snr_key(snr: float) -> str:
    return f"{snr:g}"


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed config-file mapping."""
    raw = dict(raw)
    try:
        strategy = raw["strategy"]
    except KeyError as exc:
        raise ConfigurationError("Config is missing 'strategy'") from exc

    spec = None
    if "dataset" in raw and isinstance(raw["dataset"], dict):
        d = raw["dataset"]
        grid_cfg = d.get("snr_grid")
        if grid_cfg is None:
            grid = SnrGrid.default()
        elif isinstance(grid_cfg, dict):
            vals = np.arange(grid_cfg["start"], grid_cfg["stop"] + grid_cfg["step"] / 2, grid_cfg["step"])
            grid = SnrGrid(tuple(float(v) for v in vals))
        else:
            grid = SnrGrid(tuple(float(v) for v in grid_cfg))
        imp = d.get("impairments")
        spec = DatasetSpec(
            classes=tuple(ModType(c) for c in d["classes"]),
            grid=grid,
            frames_per_cell=int(d.get("frames_per_cell", 100)),
            sps=int(d.get("sps", 8)),
            frame_len=int(d.get("frame_len", 128)),
            impairments=ImpairmentConfig(**imp) if imp else ImpairmentConfig(),
            master_seed=int(d.get("master_seed", raw.get("master_seed", 0))),
        )

    arch = None
    if "arch" in raw and raw["arch"]:
        a = raw["arch"]
        conv = a.get("conv_front")
        arch = ArchConfig(
            input_len=int(a.get("input_len", spec.frame_len if spec else 128)),
            hidden=tuple(int(h) for h in a.get("hidden", (64, 32))),
            n_classes=int(a.get("n_classes", len(spec.classes) if spec else 10)),
            conv_front=ConvFrontConfig(**conv) if conv else None,
        )

    train = TrainConfig(**raw["train"]) if raw.get("train") else TrainConfig()
    pipeline = PipelineConfig(**raw["pipeline"]) if raw.get("pipeline") else PipelineConfig()

    test_snrs = raw.get("test_snrs")
    if isinstance(test_snrs, str) and test_snrs == "all":
        test_snrs = None
    if test_snrs is not None:
        test_snrs = tuple(float(s) for s in test_snrs)

    sp = raw.get("strategy_params", {}) or {}
    return ExperimentConfig(
        strategy=strategy,
        dataset_spec=spec,
        dataset_path=raw.get("dataset_path"),
        pipeline=pipeline,
        arch=arch,
        train=train,
        test_snrs=test_snrs,
        n_seeds=int(raw.get("n_seeds", 1)),
        master_seed=int(raw.get("master_seed", 0)),
        output_dir=str(raw.get("output_dir", "out")),
        test_fraction=float(raw.get("test_fraction", 0.5)),
        val_fraction=float(raw.get("val_fraction", 0.2)),
        uniform_fraction_value=float(sp.get("fraction", 0.125)),
        boost_threshold=float(sp.get("threshold", 1.0)),
        boost_candidate_epochs=(
            int(sp["candidate_epochs"]) if sp.get("candidate_epochs") is not None else None
        ),
        boost_candidate_patience=(
            int(sp["candidate_patience"]) if sp.get("candidate_patience") is not None else None
        ),
        boost_candidate_batch=(
            int(sp["candidate_batch"]) if sp.get("candidate_batch") is not None else None
        ),
        bag_k=int(sp.get("k", 3)),
        bag_member_fraction=float(sp.get("member_fraction", 0.05)),
        sensitivity_offsets=tuple(float(o) for o in sp.get("offsets", (-4, -2, 0, 2, 4))),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Load a YAML experiment config file."""
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"Config file not found: {p}")
    raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Config file {p} does not hold a mapping")
    return config_from_dict(raw)


def import_dataset(path: str | Path) -> Dataset:
    """Load an externally supplied dataset container (validated)."""
    return dataio.read_container(path)


def _resolve(config: ExperimentConfig) -> tuple[Dataset, ArchConfig, tuple[float, ...]]:
    dataset = import_dataset(config.dataset_path) if config.dataset_path else build_dataset(config.dataset_spec)
    arch = config.arch or ArchConfig(
        input_len=dataset.frame_len, hidden=(64, 32), n_classes=len(dataset.classes)
    )
    if arch.input_len != dataset.frame_len:
        raise ConfigurationError("arch.input_len does not match the dataset frame length")
    if arch.n_classes != len(dataset.classes):
        raise ConfigurationError("arch.n_classes does not match the dataset class count")
    test_snrs = config.test_snrs if config.test_snrs is not None else dataset.grid.values
    for s in test_snrs:
        if s not in dataset.grid:
            raise ConfigurationError(f"test SNR {s} dB is not on the dataset grid")
    return dataset, arch, tuple(float(s) for s in test_snrs)


def make_view(dataset: Dataset, config: ExperimentConfig, seed_idx: int) -> DataView:
    """Split the dataset and featurize it for one seed."""
    split = make_split(
        dataset,
        seed=derive_seed(config.master_seed, "split", seed_idx),
        test_fraction=config.test_fraction,
        val_fraction=config.val_fraction,
    )
    stats = None
    if config.pipeline.normalization == "global_standard":
        stats = fit_stats(dataset.iq[split.train_idx], config.pipeline)
    x = transform(dataset.iq, config.pipeline, stats)
    return DataView(x=x, y=dataset.labels, snr_db=dataset.snr_db, grid=dataset.grid, split=split)


def _audit_split(view: DataView) -> dict:
    train = set(view.split.train_idx.tolist())
    val = set(view.split.val_idx.tolist())
    test = set(view.split.test_idx.tolist())
    return {
        "train_test_overlap": len(train & test),
        "val_test_overlap": len(val & test),
        "clean": not (train & test) and not (val & test),
    }


def _record_summary(rec: TrainRecord) -> dict:
    return {
        "epochs_run": rec.epochs_run,
        "best_epoch": rec.best_epoch,
        "final_val_loss": rec.val_loss[rec.best_epoch] if rec.val_loss else None,
        "timing": {"total_seconds": rec.total_seconds, "seconds_per_epoch": rec.seconds_per_epoch},
    }


def _eval_at(view: DataView, model, snr: float):
    idx = view.test_at(snr)
    return evaluate(model, view.x[idx], view.y[idx])


def run(config: ExperimentConfig, persist: bool = True) -> EvalReport:
    """Execute one strategy across seeds and test SNRs; persist the report."""
    dataset, arch, test_snrs = _resolve(config)
    n_classes = len(dataset.classes)

    acc_rows: list[list[float]] = []
    confusion = {s: np.zeros((n_classes, n_classes), dtype=np.int64) for s in test_snrs}
    audits = []
    run_records = []
    meta: dict = {"per_seed": []}
    total_seconds = 0.0
    total_epochs = 0

    for seed_idx in range(config.n_seeds):
        view = make_view(dataset, config, seed_idx)
        audits.append(_audit_split(view))
        init_seed = derive_seed(config.master_seed, "init", seed_idx)
        cfg = replace(config.train, seed=derive_seed(config.master_seed, "train", seed_idx))

        row: list[float] = []
        seed_meta: dict = {}

        if config.strategy in ("all_snr", "uniform_fraction"):
            if config.strategy == "all_snr":
                model, rec = train_on_snr_set(view, None, None, arch, cfg, init_seed)
                seed_meta["train_size"] = int(view.pool_at(None).size)
            else:
                subset = select_uniform_fraction(
                    dataset,
                    config.uniform_fraction_value,
                    derive_seed(config.master_seed, "uniform", seed_idx),
                    within=view.split.pool_idx,
                )
                model, rec = train_on_snr_set(view, None, None, arch, cfg, init_seed, train_idx=subset)
                seed_meta["train_size"] = int(subset.size)
            total_seconds += rec.total_seconds
            total_epochs += rec.epochs_run
            seed_meta["record"] = _record_summary(rec)
            for s in test_snrs:
                acc, cm = _eval_at(view, model, s)
                row.append(acc)
                confusion[s] += cm
                run_records.append(
                    {"seed": seed_idx, "test_snr_db": s, "accuracy": acc, "strategy": config.strategy}
                )

        elif config.strategy == "single_snr":
            records = {}
            for s in test_snrs:
                model, rec = train_on_snr_set(view, [s], s, arch, cfg, init_seed)
                total_seconds += rec.total_seconds
                total_epochs += rec.epochs_run
                acc, cm = _eval_at(view, model, s)
                row.append(acc)
                confusion[s] += cm
                records[_snr_key(s)] = _record_summary(rec)
                run_records.append(
                    {"seed": seed_idx, "test_snr_db": s, "accuracy": acc, "strategy": "single_snr"}
                )
            seed_meta["records"] = records

        elif config.strategy == "boost":
            boosts = {}
            cand_overrides = {
                k: v
                for k, v in {
                    "max_epochs": config.boost_candidate_epochs,
                    "early_stop_patience": config.boost_candidate_patience,
                    "batch_size": config.boost_candidate_batch,
                }.items()
                if v is not None
            }
            cand_cfg = replace(cfg, **cand_overrides) if cand_overrides else None
            for s in test_snrs:
                result = snr_boost(
                    view, s, arch, cfg, init_seed,
                    threshold=config.boost_threshold, candidate_cfg=cand_cfg,
                )
                total_seconds += result.train_seconds_total
                total_epochs += result.epochs_total
                acc, cm = _eval_at(view, result.final_model, s)
                row.append(acc)
                confusion[s] += cm
                boosts[_snr_key(s)] = {
                    "selected_snrs_db": result.selected,
                    "val_trace": result.val_trace,
                    "threshold_pp": result.improvement_threshold,
                    "policy": result.policy,
                    "timing": {"train_seconds_total": result.train_seconds_total},
                }
                run_records.append(
                    {
                        "seed": seed_idx,
                        "test_snr_db": s,
                        "accuracy": acc,
                        "strategy": "boost",
                        "selected_snrs_db": result.selected,
                    }
                )
            seed_meta["boost"] = boosts

        elif config.strategy == "bagging":
            bags = {}
            for s in test_snrs:
                ens = bagging_train(
                    view,
                    s,
                    arch,
                    cfg,
                    seed=derive_seed(config.master_seed, "bag", seed_idx),
                    k=config.bag_k,
                    member_fraction=config.bag_member_fraction,
                )
                total_seconds += sum(r.total_seconds for r in ens.records)
                total_epochs += sum(r.epochs_run for r in ens.records)
                idx = view.test_at(s)
                pred = ensemble_predict(ens, view.x[idx])
                cm = np.zeros((n_classes, n_classes), dtype=np.int64)
                np.add.at(cm, (view.y[idx], pred), 1)
                acc = float(np.trace(cm) / idx.size)
                row.append(acc)
                confusion[s] += cm
                bags[_snr_key(s)] = {
                    "pool_snrs_db": ens.pool_snrs,
                    "member_size": ens.member_size,
                    "k": len(ens.members),
                }
                run_records.append(
                    {"seed": seed_idx, "test_snr_db": s, "accuracy": acc, "strategy": "bagging"}
                )
            seed_meta["bagging"] = bags

        elif config.strategy == "sensitivity":
            table = offset_sensitivity(view, arch, cfg, init_seed, offsets=config.sensitivity_offsets)
            total_seconds += sum(r.total_seconds for r in table.records.values())
            total_epochs += sum(r.epochs_run for r in table.records.values())
            zero_cols = np.flatnonzero(table.offsets == 0.0)
            zero_col = int(zero_cols[0]) if zero_cols.size else None
            for s in test_snrs:
                i = dataset.grid.index_of(s)
                row.append(float(table.accuracy[i, zero_col]) if zero_col is not None else float("nan"))
            seed_meta["sensitivity"] = {
                "offsets_db": table.offsets.tolist(),
                "test_snrs_db": table.test_snrs.tolist(),
                "accuracy": table.accuracy.tolist(),
            }

        acc_rows.append(row)
        meta["per_seed"].append(seed_meta)

    acc = np.asarray(acc_rows, dtype=float)
    report = EvalReport(
        strategy=config.strategy,
        classes=list(dataset.classes),
        test_snrs=list(test_snrs),
        acc_per_seed=acc.tolist(),
        acc_mean=np.nanmean(acc, axis=0).tolist(),
        acc_std=np.nanstd(acc, axis=0).tolist(),
        confusion={_snr_key(s): confusion[s].tolist() for s in test_snrs},
        strategy_meta=_to_builtin(meta),
        audit={
            "per_seed": audits,
            "clean": all(a["clean"] for a in audits),
        },
        timing={"total_train_seconds": total_seconds, "epochs_total": total_epochs},
        config=_to_builtin(_config_to_dict(config)),
    )
    if persist:
        report_export(report, Path(config.output_dir), run_records=run_records)
    return report


def _config_to_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    if config.dataset_spec is not None:
        d["dataset_spec"] = dataio.spec_to_dict(config.dataset_spec)
    return d


def strip_timing(obj):
    """Deep-copy a report structure with every "timing" subtree removed."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k != "timing"}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def report_to_dict(report: EvalReport) -> dict:
    return _to_builtin(asdict(report))


def report_export(report: EvalReport, out_dir: str | Path, run_records: list | None = None) -> list[Path]:
    """Write report.json plus stable CSV tables; re-export is byte-identical."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"Cannot create output directory {out}: {exc}") from exc

    written: list[Path] = []

    def _write(path: Path, text: str) -> None:
        try:
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise OutputError(f"Cannot write {path}: {exc}") from exc
        written.append(path)

    _write(out / "report.json", json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")

    # Accuracy curve: one row per test SNR, per-seed columns after the stats.
    n_seeds = len(report.acc_per_seed)
    header = ["test_snr_db", "acc_mean", "acc_std"] + [f"seed{i}" for i in range(n_seeds)]
    lines = [",".join(header)]
    for j, s in enumerate(report.test_snrs):
        cells = [f"{s:g}", f"{report.acc_mean[j]:.6f}", f"{report.acc_std[j]:.6f}"]
        cells += [f"{report.acc_per_seed[i][j]:.6f}" for i in range(n_seeds)]
        lines.append(",".join(cells))
    _write(out / "accuracy_curve.csv", "\n".join(lines) + "\n")

    # Confusion matrices, one file per test SNR (counts, true class rows).
    for key, cm in report.confusion.items():
        lines = [",".join(["true\\pred"] + list(report.classes))]
        for ci, rowvals in enumerate(cm):
            lines.append(",".join([report.classes[ci]] + [str(v) for v in rowvals]))
        _write(out / f"confusion_snr_{key}.csv", "\n".join(lines) + "\n")

    # Sensitivity grid, when present (mean over seeds).
    tables = [
        sm["sensitivity"]["accuracy"]
        for sm in report.strategy_meta.get("per_seed", [])
        if "sensitivity" in sm
    ]
    if tables:
        first = next(sm["sensitivity"] for sm in report.strategy_meta["per_seed"] if "sensitivity" in sm)
        offsets = first["offsets_db"]
        snrs = first["test_snrs_db"]
        mean = np.nanmean(np.asarray(tables, dtype=float), axis=0)
        lines = [",".join(["test_snr_db"] + [f"offset_{o:g}" for o in offsets])]
        for i, s in enumerate(snrs):
            lines.append(",".join([f"{s:g}"] + [f"{v:.6f}" for v in mean[i]]))
        _write(out / "sensitivity.csv", "\n".join(lines) + "\n")

    # Selected-SNR lists (boost), columnar text for Fig. 5-style plots.
    boost_rows = []
    for seed_idx, sm in enumerate(report.strategy_meta.get("per_seed", [])):
        for key, b in sm.get("boost", {}).items():
            for sel in b["selected_snrs_db"]:
                boost_rows.append((float(key), seed_idx, sel))
    if boost_rows:
        lines = ["target_snr_db,seed,selected_snr_db"]
        for target, seed_idx, sel in boost_rows:
            lines.append(f"{target:g},{seed_idx},{sel:g}")
        _write(out / "selected_snrs.csv", "\n".join(lines) + "\n")

    # Timing summary (excluded from determinism comparisons).
    lines = ["metric,value"]
    lines.append(f"total_train_seconds,{report.timing['total_train_seconds']:.3f}")
    lines.append(f"epochs_total,{report.timing['epochs_total']}")
    _write(out / "timing.csv", "\n".join(lines) + "\n")

    if run_records is not None:
        runs_dir = out / "runs"
        runs_dir.mkdir(exist_ok=True)
        for rec in run_records:
            name = f"{rec['strategy']}_seed{rec['seed']}_snr{_snr_key(rec['test_snr_db'])}.json"
            _write(runs_dir / name, json.dumps(_to_builtin(rec), indent=2, sort_keys=True) + "\n")

    return written


def confusion_overlay(reports: list[EvalReport], test_snr: float) -> str:
    """Columnar overlay of three row-normalized confusion matrices.

    Expects the (whole-dataset, single-SNR, boosting) reports, in that
    order, sharing one class set; returns CSV text with one row per
    (true, predicted) cell and one value column per report.
    """
    if len(reports) != 3:
        raise ConfigurationError("confusion_overlay expects exactly three reports")
    classes = reports[0].classes
    for r in reports[1:]:
        if r.classes != classes:
            raise ConfigurationError("Reports do not share a class set")
    key = _snr_key(test_snr)
    mats = []
    for r in reports:
        if key not in r.confusion:
            raise ConfigurationError(f"Report {r.strategy} has no confusion at {test_snr} dB")
        cm = np.asarray(r.confusion[key], dtype=float)
        sums = cm.sum(axis=1, keepdims=True)
        mats.append(cm / np.maximum(sums, 1.0))
    lines = ["true,pred,whole_dataset,single_snr,boost"]
    for i, true_c in enumerate(classes):
        for j, pred_c in enumerate(classes):
            vals = ",".join(f"{m[i, j]:.6f}" for m in mats)
            lines.append(f"{true_c},{pred_c},{vals}")
    return "\n".join(lines) + "\n"


def reference_dataset_spec(master_seed: int = 2024) -> DatasetSpec:
    """Desk-scale reference dataset: 5 digital classes x 20 SNRs x 400 frames."""
    return DatasetSpec(
        classes=(ModType.BPSK, ModType.QPSK, ModType.QAM16, ModType.QAM64, ModType.GFSK),
        grid=SnrGrid.default(),
        frames_per_cell=400,
        sps=8,
        frame_len=128,
        impairments=ImpairmentConfig(),
        master_seed=master_seed,
    )


def reference_arch() -> ArchConfig:
    """Desk-scale surrogate: complex matched-filter bank with pooled moments.

    The modulus activation makes the conv features invariant to the
    frame's unknown carrier phase and the pooled moments cut per-frame
    feature variance enough that a few hundred frames train it; a plain
    relu/dense stack at this scale stays near chance.
    """
    return ArchConfig(
        input_len=128,
        hidden=(32,),
        n_classes=5,
        conv_front=ConvFrontConfig(
            n_kernels=24, kernel_len=16, stride=8, activation="modulus", pool="avg"
        ),
    )


def reference_train_config(seed: int = 0) -> TrainConfig:
    """Single-core budget so the full acceptance suite stays near 30 minutes."""
    return TrainConfig(
        optimizer="adam",
        learning_rate=1e-3,
        batch_size=128,
        max_epochs=100,
        early_stop_patience=8,
        dtype="float32",
        seed=seed,
    )


REFERENCE_BOOST_CANDIDATE_EPOCHS = 8
REFERENCE_BOOST_CANDIDATE_PATIENCE = 2
REFERENCE_BOOST_CANDIDATE_BATCH = 256


def reference_pipeline() -> PipelineConfig:
    return PipelineConfig(use_fft=False, normalization="frame_power")
