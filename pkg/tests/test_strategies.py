import collections

import numpy as np
import pytest

from snrsel.errors import ConfigurationError
from snrsel.features import PipelineConfig, transform
from snrsel.learner import ArchConfig, ConvFrontConfig, TrainConfig
from snrsel.sigsynth import DatasetSpec, ModType, SnrGrid, build_dataset
from snrsel.strategies import (
    DataView,
    bagging_train,
    ensemble_predict,
    majority_vote,
    make_split,
    offset_sensitivity,
    select_single_snr,
    select_uniform_fraction,
    snr_boost,
    train_on_snr_set,
)

TOY_ARCH = ArchConfig(
    input_len=128, hidden=(16,), n_classes=3,
    conv_front=ConvFrontConfig(8, 16, 8, "modulus", "avg"),
)
TOY_CFG = TrainConfig(batch_size=128, max_epochs=6, early_stop_patience=2, seed=5, dtype="float32")


@pytest.fixture(scope="module")
def toy_dataset():
    spec = DatasetSpec(
        classes=(ModType.BPSK, ModType.QAM16, ModType.GFSK),
        grid=SnrGrid((0.0, 2.0, 4.0, 6.0)),
        frames_per_cell=40,
        master_seed=21,
    )
    return build_dataset(spec)


@pytest.fixture(scope="module")
def toy_view(toy_dataset):
    split = make_split(toy_dataset, seed=3)
    x = transform(toy_dataset.iq, PipelineConfig(use_fft=False, normalization="frame_power"))
    return DataView(
        x=x, y=toy_dataset.labels, snr_db=toy_dataset.snr_db,
        grid=toy_dataset.grid, split=split,
    )


class TestSplit:
    def test_disjoint_and_stratified(self, toy_dataset):
        split = make_split(toy_dataset, seed=1)
        all_idx = np.concatenate([split.train_idx, split.val_idx, split.test_idx])
        assert np.array_equal(np.sort(all_idx), np.arange(toy_dataset.n_frames))
        for label in range(3):
            for snr in toy_dataset.grid.values:
                cell = (toy_dataset.labels == label) & (toy_dataset.snr_db == snr)
                n_test = np.sum(cell[split.test_idx.astype(int)] if False else cell[split.test_idx])
                assert n_test == 20  # half of 40
                n_val = np.sum(cell[split.val_idx])
                assert n_val == 4  # 20% of the remaining 20

    def test_deterministic(self, toy_dataset):
        a = make_split(toy_dataset, seed=9)
        b = make_split(toy_dataset, seed=9)
        assert np.array_equal(a.train_idx, b.train_idx)
        assert np.array_equal(a.test_idx, b.test_idx)

    def test_different_seeds_differ(self, toy_dataset):
        a = make_split(toy_dataset, seed=1)
        b = make_split(toy_dataset, seed=2)
        assert not np.array_equal(a.test_idx, b.test_idx)


class TestSelection:
    def test_single_snr_purity(self, toy_dataset):
        idx = select_single_snr(toy_dataset, 2.0)
        assert idx.size == 3 * 40
        assert np.all(toy_dataset.snr_db[idx] == 2.0)

    def test_single_snr_fraction_of_dataset(self, toy_dataset):
        idx = select_single_snr(toy_dataset, 0.0)
        assert idx.size == toy_dataset.n_frames // len(toy_dataset.grid)

    def test_single_snr_whole_dataset_when_one_snr(self):
        spec = DatasetSpec(classes=(ModType.BPSK,), grid=SnrGrid((6.0,)), frames_per_cell=3, master_seed=1)
        ds = build_dataset(spec)
        assert select_single_snr(ds, 6.0).size == ds.n_frames

    def test_off_grid_rejected(self, toy_dataset):
        with pytest.raises(ConfigurationError):
            select_single_snr(toy_dataset, 1.0)

    def test_uniform_fraction_whole(self, toy_dataset):
        idx = select_uniform_fraction(toy_dataset, 1.0, seed=4)
        assert idx.size == toy_dataset.n_frames

    def test_uniform_fraction_counts(self, toy_dataset):
        idx = select_uniform_fraction(toy_dataset, 0.25, seed=4)
        assert idx.size == int(0.25 * toy_dataset.n_frames)
        for label in range(3):
            for snr in toy_dataset.grid.values:
                cell = np.sum((toy_dataset.labels[idx] == label) & (toy_dataset.snr_db[idx] == snr))
                assert cell == 10

    def test_uniform_seeds_differ_but_counts_match(self, toy_dataset):
        a = select_uniform_fraction(toy_dataset, 0.25, seed=1)
        b = select_uniform_fraction(toy_dataset, 0.25, seed=2)
        assert a.size == b.size
        assert not np.array_equal(a, b)

    def test_uniform_zero_per_cell_rejected(self, toy_dataset):
        with pytest.raises(ConfigurationError):
            select_uniform_fraction(toy_dataset, 0.001, seed=1)


class TestBoost:
    def test_single_value_grid_degenerates(self):
        spec = DatasetSpec(classes=(ModType.BPSK, ModType.QPSK), grid=SnrGrid((4.0,)), frames_per_cell=40, master_seed=2)
        ds = build_dataset(spec)
        split = make_split(ds, seed=1)
        x = transform(ds.iq, PipelineConfig())
        view = DataView(x=x, y=ds.labels, snr_db=ds.snr_db, grid=ds.grid, split=split)
        arch = ArchConfig(input_len=128, hidden=(8,), n_classes=2,
                          conv_front=ConvFrontConfig(4, 16, 8, "modulus", "avg"))
        res = snr_boost(view, 4.0, arch, TOY_CFG, init_seed=7)
        assert res.selected == [4.0]
        assert len(res.val_trace) == 1
        assert res.sweep_log == []

    def test_infinite_threshold_equals_single_snr_training(self, toy_view):
        res = snr_boost(toy_view, 2.0, TOY_ARCH, TOY_CFG, init_seed=7, threshold=np.inf)
        assert res.selected == [2.0]
        direct, _ = train_on_snr_set(toy_view, [2.0], 2.0, TOY_ARCH, TOY_CFG, init_seed=7)
        assert np.array_equal(res.final_model.params, direct.params)

    def test_loop_contract(self, toy_view):
        res = snr_boost(toy_view, 4.0, TOY_ARCH, TOY_CFG, init_seed=7, threshold=0.5)
        assert len(set(res.selected)) == len(res.selected)
        assert all(s in toy_view.grid for s in res.selected)
        gains = np.diff(res.val_trace) * 100.0
        assert np.all(gains > res.improvement_threshold)
        assert res.selected[0] == 4.0

    def test_deterministic(self, toy_view):
        a = snr_boost(toy_view, 0.0, TOY_ARCH, TOY_CFG, init_seed=9, threshold=1.0)
        b = snr_boost(toy_view, 0.0, TOY_ARCH, TOY_CFG, init_seed=9, threshold=1.0)
        assert a.selected == b.selected
        assert a.val_trace == b.val_trace
        assert np.array_equal(a.final_model.params, b.final_model.params)

    def test_off_grid_target_rejected(self, toy_view):
        with pytest.raises(ConfigurationError):
            snr_boost(toy_view, 1.0, TOY_ARCH, TOY_CFG, init_seed=1)


class TestSensitivity:
    def test_zero_offset_equals_single_snr(self, toy_view):
        table = offset_sensitivity(toy_view, TOY_ARCH, TOY_CFG, init_seed=7, offsets=(0.0,))
        for i, snr in enumerate(table.test_snrs):
            model, _ = train_on_snr_set(toy_view, [snr], snr, TOY_ARCH, TOY_CFG, init_seed=7)
            direct = toy_view.accuracy(model, toy_view.test_at(snr))
            assert table.accuracy[i, 0] == pytest.approx(direct, abs=1e-12)

    def test_boundary_combinations_absent(self, toy_view):
        table = offset_sensitivity(toy_view, TOY_ARCH, TOY_CFG, init_seed=7, offsets=(-2.0, 2.0))
        i_max = len(table.test_snrs) - 1
        assert np.isnan(table.accuracy[i_max, 1])  # 6 dB + 2 off grid
        assert np.isnan(table.accuracy[0, 0])  # 0 dB - 2 off grid
        assert np.isfinite(table.accuracy[1, 0])


def brute_force_vote(member_probs):
    """Literal re-statement of the voting rule, loops and Counters only."""
    k, n, c = member_probs.shape
    out = []
    for i in range(n):
        votes = [int(np.argmax(member_probs[m, i])) for m in range(k)]
        counts = collections.Counter(votes)
        top = max(counts.values())
        tied = sorted(cls for cls, cnt in counts.items() if cnt == top)
        if len(tied) == 1:
            out.append(tied[0])
            continue
        mean = member_probs[:, i, :].mean(axis=0)
        best = max(tied, key=lambda cls: (mean[cls], -cls))
        out.append(best)
    return np.array(out)


class TestVoting:
    def test_plurality(self):
        probs = np.zeros((3, 1, 3))
        probs[0, 0] = [0.8, 0.1, 0.1]  # A
        probs[1, 0] = [0.6, 0.3, 0.1]  # A
        probs[2, 0] = [0.1, 0.8, 0.1]  # B
        assert majority_vote(probs)[0] == 0

    def test_three_way_tie_uses_mean(self):
        probs = np.zeros((3, 1, 3))
        probs[0, 0] = [0.9, 0.05, 0.05]  # A
        probs[1, 0] = [0.1, 0.8, 0.1]  # B
        probs[2, 0] = [0.2, 0.1, 0.7]  # C; mean favours B? compute: A=.4, B=.316, C=.283 -> A
        assert majority_vote(probs)[0] == int(np.argmax(probs.mean(axis=0)[0]))

    def test_exact_tie_breaks_to_lowest_index(self):
        probs = np.zeros((2, 1, 2))
        probs[0, 0] = [1.0, 0.0]
        probs[1, 0] = [0.0, 1.0]
        # counts tie, means tie at 0.5/0.5 -> lowest class index
        assert majority_vote(probs)[0] == 0

    def test_oracle_on_random_tuples(self):
        rng = np.random.default_rng(0)
        for trial in range(200):
            k = int(rng.choice([1, 3, 5]))
            c = int(rng.choice([2, 5, 10]))
            n = int(rng.integers(1, 8))
            probs = rng.random((k, n, c))
            probs /= probs.sum(axis=2, keepdims=True)
            assert np.array_equal(majority_vote(probs), brute_force_vote(probs))

    def test_oracle_on_tie_heavy_tuples(self):
        # Integer-ish probability vectors force frequent exact ties.
        rng = np.random.default_rng(1)
        for trial in range(100):
            k, n, c = 3, 5, 4
            hard = rng.integers(0, c, (k, n))
            probs = np.zeros((k, n, c))
            for m in range(k):
                probs[m, np.arange(n), hard[m]] = 1.0
            assert np.array_equal(majority_vote(probs), brute_force_vote(probs))


class TestBagging:
    def test_member_size_is_fraction_of_single_set(self, toy_view):
        ens = bagging_train(toy_view, 2.0, TOY_ARCH, TOY_CFG, seed=5, k=3, member_fraction=0.05)
        single_size = toy_view.pool_at(2.0).size
        assert ens.member_size == max(1, round(0.05 * single_size))
        assert len(ens.members) == 3

    def test_edge_target_pool(self, toy_view):
        ens = bagging_train(toy_view, 0.0, TOY_ARCH, TOY_CFG, seed=5, k=2, member_fraction=0.5)
        assert ens.pool_snrs == [0.0, 2.0]

    def test_k1_equals_member_prediction(self, toy_view):
        from snrsel.learner import predict

        ens = bagging_train(toy_view, 2.0, TOY_ARCH, TOY_CFG, seed=6, k=1, member_fraction=0.5)
        idx = toy_view.test_at(2.0)
        assert np.array_equal(ensemble_predict(ens, toy_view.x[idx]), predict(ens.members[0], toy_view.x[idx]))

    def test_deterministic(self, toy_view):
        a = bagging_train(toy_view, 2.0, TOY_ARCH, TOY_CFG, seed=8, k=3, member_fraction=0.2)
        b = bagging_train(toy_view, 2.0, TOY_ARCH, TOY_CFG, seed=8, k=3, member_fraction=0.2)
        for ma, mb in zip(a.members, b.members):
            assert np.array_equal(ma.params, mb.params)

    def test_bad_params_rejected(self, toy_view):
        with pytest.raises(ConfigurationError):
            bagging_train(toy_view, 2.0, TOY_ARCH, TOY_CFG, seed=1, k=0)
        with pytest.raises(ConfigurationError):
            bagging_train(toy_view, 2.0, TOY_ARCH, TOY_CFG, seed=1, member_fraction=0.0)


class TestSubsetHygiene:
    def test_no_test_index_in_any_training_subset(self, toy_dataset, toy_view):
        test_set = set(toy_view.split.test_idx.tolist())
        single = select_single_snr(toy_dataset, 2.0, within=toy_view.split.pool_idx)
        uniform = select_uniform_fraction(toy_dataset, 0.25, seed=3, within=toy_view.split.pool_idx)
        assert not (set(single.tolist()) & test_set)
        assert not (set(uniform.tolist()) & test_set)
        ens = bagging_train(toy_view, 2.0, TOY_ARCH, TOY_CFG, seed=5, k=2, member_fraction=0.3)
        # members draw from the pool; the pool excludes test by construction
        assert not (set(toy_view.pool_at(ens.pool_snrs).tolist()) & test_set)
