"""Training-set selection and ensembling strategies.

Implements four ways of choosing training data given a test-SNR estimate:

* single-SNR selection: train only on frames whose SNR equals the estimate;
* uniform-fraction baseline: an equal-count stratified sample across all
  (class, SNR) cells;
* greedy SNR boosting: grow the selected SNR set one whole slice at a
  time, keeping a candidate only if it raises validation accuracy at the
  target SNR by more than a threshold (in percentage points);
* SNR bagging: bootstrap ensembles drawn from the target SNR and its two
  grid neighbors, combined by majority vote.

All strategies operate on a DataView (features + labels + split) and are
pure functions of their inputs and seeds. The common training protocol:
selection and candidate scoring use the 20% validation slice of the
available-for-training pool; final models are retrained on the full pool
restricted to the selected frames, with the validation slice (now part of
the training data again) still monitored for early stopping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError
from .learner import ArchConfig, Model, TrainConfig, TrainRecord, evaluate, forward, init_model, train
from .seeding import derive_rng
from .sigsynth import Dataset, SnrGrid

BOOST_POLICY = {
    "candidate_rule": "argmax-of-sweep",
    "tie_break": "nearest-target-then-lower",
    "threshold_units": "percentage-points",
    "initial_selection": "target-snr",
    "candidate_training": "fresh-model-same-init-seed",
    "final_model": "retrained-on-full-pool-at-selected-snrs",
}


@dataclass(frozen=True)
class Split:
    """Disjoint train/validation/test index sets over one dataset."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self) -> None:
        sets = [set(self.train_idx.tolist()), set(self.val_idx.tolist()), set(self.test_idx.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ConfigurationError("Split index sets must be pairwise disjoint")

    @property
    def pool_idx(self) -> np.ndarray:
        """Available-for-training pool: train plus validation."""
        return np.sort(np.concatenate([self.train_idx, self.val_idx]))


def make_split(
    dataset: Dataset,
    seed: int,
    test_fraction: float = 0.5,
    val_fraction: float = 0.2,
) -> Split:
    """Stratified split per (class, SNR) cell.

    test_fraction of each cell is held out; val_fraction of the remaining
    available-for-training part becomes the validation slice.
    """
    if not 0 < test_fraction < 1:
        raise ConfigurationError("test_fraction must be in (0, 1)")
    if not 0 <= val_fraction < 1:
        raise ConfigurationError("val_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    train_parts, val_parts, test_parts = [], [], []
    for label in np.unique(dataset.labels):
        for snr in dataset.grid.values:
            cell = np.flatnonzero((dataset.labels == label) & (np.abs(dataset.snr_db - snr) < 1e-6))
            if cell.size == 0:
                continue
            perm = rng.permutation(cell)
            n_test = int(round(cell.size * test_fraction))
            n_val = int(round((cell.size - n_test) * val_fraction))
            test_parts.append(perm[:n_test])
            val_parts.append(perm[n_test : n_test + n_val])
            train_parts.append(perm[n_test + n_val :])
    return Split(
        train_idx=np.sort(np.concatenate(train_parts)),
        val_idx=np.sort(np.concatenate(val_parts)),
        test_idx=np.sort(np.concatenate(test_parts)),
    )


@dataclass
class DataView:
    """Featurized dataset plus its split, the unit strategies operate on."""

    x: np.ndarray  # (n, 2, N) float64 features
    y: np.ndarray  # (n,) int labels
    snr_db: np.ndarray  # (n,) float
    grid: SnrGrid
    split: Split

    def _at(self, idx: np.ndarray, snrs) -> np.ndarray:
        if snrs is None:
            return idx
        mask = np.zeros(idx.size, dtype=bool)
        for s in np.atleast_1d(snrs):
            mask |= np.abs(self.snr_db[idx] - s) < 1e-6
        return idx[mask]

    def train_at(self, snrs=None) -> np.ndarray:
        return self._at(self.split.train_idx, snrs)

    def val_at(self, snrs=None) -> np.ndarray:
        return self._at(self.split.val_idx, snrs)

    def pool_at(self, snrs=None) -> np.ndarray:
        return self._at(self.split.pool_idx, snrs)

    def test_at(self, snrs=None) -> np.ndarray:
        return self._at(self.split.test_idx, snrs)

    def accuracy(self, model: Model, idx: np.ndarray) -> float:
        acc, _ = evaluate(model, self.x[idx], self.y[idx])
        return acc


def select_single_snr(dataset: Dataset, snr_db: float, within: np.ndarray | None = None) -> np.ndarray:
    """Indices of exactly the frames at the requested grid SNR."""
    if snr_db not in dataset.grid:
        raise ConfigurationError(f"Requested SNR {snr_db} dB is not on the dataset grid")
    idx = dataset.indices_at(snr_db)
    if within is not None:
        idx = np.intersect1d(idx, within)
    return idx


def select_uniform_fraction(
    dataset: Dataset,
    fraction: float,
    seed: int,
    within: np.ndarray | None = None,
) -> np.ndarray:
    """Equal-count stratified sample across all (class, SNR) cells."""
    if not 0 < fraction <= 1:
        raise ConfigurationError("fraction must be in (0, 1]")
    base = within if within is not None else np.arange(dataset.n_frames)
    cells: list[np.ndarray] = []
    for label in np.unique(dataset.labels[base]):
        for snr in dataset.grid.values:
            cell = base[(dataset.labels[base] == label) & (np.abs(dataset.snr_db[base] - snr) < 1e-6)]
            if cell.size:
                cells.append(cell)
    per_cell = int(np.floor(fraction * base.size / len(cells)))
    if per_cell == 0:
        raise ConfigurationError(
            f"fraction {fraction} yields zero frames per cell ({len(cells)} cells, {base.size} frames)"
        )
    rng = np.random.default_rng(seed)
    picks = [rng.choice(cell, size=min(per_cell, cell.size), replace=False) for cell in cells]
    return np.sort(np.concatenate(picks))


def train_on_snr_set(
    view: DataView,
    snrs,
    monitor_snr: float | None,
    arch: ArchConfig,
    cfg: TrainConfig,
    init_seed: int,
    train_idx: np.ndarray | None = None,
) -> tuple[Model, TrainRecord]:
    """Train a fresh model on the full pool at the given SNRs.

    snrs=None means the whole grid; monitor_snr selects the validation
    slice that drives early stopping (None: all of it). An explicit
    train_idx overrides the pool selection (used for subsampled baselines).
    """
    if train_idx is not None:
        idx = train_idx
    else:
        idx = view.pool_at(None if snrs is None else list(np.atleast_1d(snrs)))
    if idx.size == 0:
        raise DataError("No training frames at the requested SNRs")
    val = view.val_at(monitor_snr)
    if val.size == 0:
        raise DataError(f"No validation frames at {monitor_snr} dB")
    model = init_model(arch, init_seed)
    return train(model, view.x[idx], view.y[idx], view.x[val], view.y[val], cfg)


@dataclass
class BoostResult:
    """Outcome of one greedy SNR-boosting run."""

    target_snr: float
    selected: list[float]
    val_trace: list[float]  # validation accuracy after each accepted addition
    final_model: Model
    final_record: TrainRecord
    improvement_threshold: float
    sweep_log: list[dict[float, float]] = field(default_factory=list)
    policy: dict[str, str] = field(default_factory=lambda: dict(BOOST_POLICY))
    train_seconds_total: float = 0.0
    epochs_total: int = 0


def snr_boost(
    view: DataView,
    target_snr: float,
    arch: ArchConfig,
    cfg: TrainConfig,
    init_seed: int,
    threshold: float = 1.0,
    candidate_cfg: TrainConfig | None = None,
) -> BoostResult:
    """Greedy whole-SNR-slice selection for one target SNR.

    Starts from the target slice alone; in each sweep trains a fresh model
    per remaining candidate on (selected + candidate) training frames,
    scores it on the validation slice at the target SNR, and accepts the
    best candidate only if it beats the incumbent accuracy by more than
    `threshold` percentage points. Afterwards the final model is retrained
    on the full available-for-training pool at the selected SNRs.

    candidate_cfg, when given, is the (typically lighter) budget used for
    the scoring fits; the final retrain always uses cfg.
    """
    if target_snr not in view.grid:
        raise ConfigurationError(f"Target SNR {target_snr} dB is not on the grid")
    val_idx = view.val_at(target_snr)
    if val_idx.size == 0:
        raise DataError(f"No validation frames at {target_snr} dB")
    scoring_cfg = candidate_cfg if candidate_cfg is not None else cfg

    def eval_candidate(snrs: list[float]) -> tuple[float, TrainRecord]:
        idx = view.train_at(snrs)
        model = init_model(arch, init_seed)
        trained, rec = train(
            model, view.x[idx], view.y[idx], view.x[val_idx], view.y[val_idx], scoring_cfg
        )
        return view.accuracy(trained, val_idx), rec

    seconds = 0.0
    epochs = 0
    selected = [float(target_snr)]
    remaining = [s for s in view.grid.values if abs(s - target_snr) >= 1e-6]

    best_acc, rec = eval_candidate(selected)
    seconds += rec.total_seconds
    epochs += rec.epochs_run
    val_trace = [best_acc]
    sweep_log: list[dict[float, float]] = []

    while remaining:
        sweep: dict[float, float] = {}
        for cand in remaining:
            acc, rec = eval_candidate(selected + [cand])
            sweep[cand] = acc
            seconds += rec.total_seconds
            epochs += rec.epochs_run
        sweep_log.append(sweep)
        # Best candidate of the sweep; ties go to the SNR nearest the
        # target, then to the lower SNR.
        best_cand = min(sweep, key=lambda s: (-sweep[s], abs(s - target_snr), s))
        gain_pp = (sweep[best_cand] - best_acc) * 100.0
        if not gain_pp > threshold:
            break
        selected.append(float(best_cand))
        remaining.remove(best_cand)
        best_acc = sweep[best_cand]
        val_trace.append(best_acc)

    final_model, final_record = train_on_snr_set(view, selected, target_snr, arch, cfg, init_seed)
    seconds += final_record.total_seconds
    epochs += final_record.epochs_run

    policy = dict(BOOST_POLICY)
    policy["candidate_budget"] = (
        f"max_epochs={scoring_cfg.max_epochs},patience={scoring_cfg.early_stop_patience}"
    )
    return BoostResult(
        target_snr=float(target_snr),
        selected=selected,
        val_trace=val_trace,
        final_model=final_model,
        final_record=final_record,
        improvement_threshold=threshold,
        sweep_log=sweep_log,
        policy=policy,
        train_seconds_total=seconds,
        epochs_total=epochs,
    )


@dataclass
class SensitivityTable:
    """Accuracy for training at (test SNR + offset), per test SNR."""

    test_snrs: np.ndarray
    offsets: np.ndarray
    accuracy: np.ndarray  # (n_test_snrs, n_offsets); NaN where off-grid
    records: dict[float, TrainRecord] = field(default_factory=dict)  # per training SNR


def offset_sensitivity(
    view: DataView,
    arch: ArchConfig,
    cfg: TrainConfig,
    init_seed: int,
    offsets=(-4.0, -2.0, 0.0, 2.0, 4.0),
) -> SensitivityTable:
    """Single-SNR training at offset estimates, evaluated at the true SNR.

    One model is trained per distinct training SNR and reused across the
    (test SNR, offset) combinations that need it; combinations that fall
    off the grid are recorded as NaN.
    """
    test_snrs = np.asarray(view.grid.values, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    table = np.full((test_snrs.size, offsets.size), np.nan)
    models: dict[float, Model] = {}
    records: dict[float, TrainRecord] = {}
    for j, off in enumerate(offsets):
        for i, snr in enumerate(test_snrs):
            train_snr = snr + off
            if train_snr not in view.grid:
                continue
            train_snr = float(view.grid.values[view.grid.index_of(train_snr)])
            if train_snr not in models:
                models[train_snr], records[train_snr] = train_on_snr_set(
                    view, [train_snr], train_snr, arch, cfg, init_seed
                )
            table[i, j] = view.accuracy(models[train_snr], view.test_at(snr))
    return SensitivityTable(test_snrs=test_snrs, offsets=offsets, accuracy=table, records=records)


@dataclass
class Ensemble:
    """Bagged ensemble: k models with identical architecture."""

    members: list[Model]
    records: list[TrainRecord]
    target_snr: float
    pool_snrs: list[float]
    member_size: int
    seed: int

    def __post_init__(self) -> None:
        if len(self.members) == 0:
            raise ConfigurationError("Ensemble needs at least one member")
        archs = {m.arch for m in self.members}
        if len(archs) != 1:
            raise ConfigurationError("Ensemble members must share one architecture")


def bagging_train(
    view: DataView,
    target_snr: float,
    arch: ArchConfig,
    cfg: TrainConfig,
    seed: int,
    k: int = 3,
    member_fraction: float = 0.05,
) -> Ensemble:
    """Bootstrap-train k models from the target SNR and its grid neighbors.

    Each member gets an independent uniform with-replacement sample of
    size member_fraction x (single-SNR pool size), drawn from the pooled
    frames at {target - step, target, target + step} (clipped to the grid).
    """
    if member_fraction <= 0:
        raise ConfigurationError("member_fraction must be > 0")
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    pool_snrs = sorted(set(view.grid.neighbors(target_snr)) | {float(target_snr)})
    if len(pool_snrs) < 2:
        raise ConfigurationError(f"Target {target_snr} dB has no adjacent grid value")
    pool = view.pool_at(pool_snrs)
    if pool.size == 0:
        raise DataError("Empty bagging pool")
    single_size = view.pool_at(target_snr).size
    member_size = max(1, int(round(member_fraction * single_size)))

    members: list[Model] = []
    records: list[TrainRecord] = []
    val_idx = view.val_at(target_snr)
    for m in range(k):
        rng = derive_rng(seed, "bag-member", m)
        sample = np.sort(rng.choice(pool, size=member_size, replace=True))
        model = init_model(arch, derive_rng(seed, "bag-init", m).integers(2**31))
        trained, rec = train(model, view.x[sample], view.y[sample], view.x[val_idx], view.y[val_idx], cfg)
        members.append(trained)
        records.append(rec)
    return Ensemble(
        members=members,
        records=records,
        target_snr=float(target_snr),
        pool_snrs=[float(s) for s in pool_snrs],
        member_size=member_size,
        seed=seed,
    )


def majority_vote(member_probs: np.ndarray) -> np.ndarray:
    """Plurality vote over member argmax predictions.

    member_probs has shape (k, B, C). Ties among the top vote-getters are
    broken by the mean of the member probability vectors restricted to the
    tied classes, then by the lowest class index.
    """
    member_probs = np.asarray(member_probs, dtype=np.float64)
    k, n, c = member_probs.shape
    votes = np.argmax(member_probs, axis=2)  # (k, B)
    counts = np.zeros((n, c), dtype=np.int64)
    for m in range(k):
        counts[np.arange(n), votes[m]] += 1
    top = counts.max(axis=1, keepdims=True)
    tied = counts == top
    mean_probs = member_probs.mean(axis=0)
    score = np.where(tied, mean_probs, -np.inf)
    return np.argmax(score, axis=1)


def ensemble_predict(ensemble: Ensemble, x: np.ndarray) -> np.ndarray:
    """Majority-vote labels for a batch of feature matrices."""
    probs = np.stack([forward(m, x) for m in ensemble.members], axis=0)
    return majority_vote(probs)
