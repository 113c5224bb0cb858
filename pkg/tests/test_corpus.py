import numpy as np
import pytest

from quantsketch import (
    ConfigurationError,
    DataSpec,
    QuantilePoint,
    RankOracle,
    generate,
    read_dataset,
    read_dataset_text,
    write_dataset,
    write_dataset_text,
)

# The two 15-item worked datasets used across the golden tests.
DATASET_A = [3, 4, 0, 7, 1, 0, 0, 2, 6, 0, 2, 1, 0, 4, 2]
DATASET_B = [3, 6, 2, 3, 2, 1, 7, 3, 3, 5, 2, 3, 3, 7, 2]


class TestDataSpec:
    def test_rejects_zero_items(self):
        with pytest.raises(ConfigurationError):
            DataSpec(n=0, u=8)

    @pytest.mark.parametrize("u", [0, 1, 3, 12, 1000])
    def test_rejects_non_power_of_two_universe(self, u):
        with pytest.raises(ConfigurationError):
            DataSpec(n=10, u=u)

    def test_rejects_bad_order_and_negative_zipf(self):
        with pytest.raises(ConfigurationError):
            DataSpec(n=10, u=8, order="shuffled")
        with pytest.raises(ConfigurationError):
            DataSpec(n=10, u=8, zipf=-1.0)


class TestGenerate:
    def test_sorted_output_is_nondecreasing(self):
        values = generate(DataSpec(n=10, u=8, zipf=0, order="sorted", seed=1))
        assert len(values) == 10
        assert values.min() >= 0 and values.max() < 8
        assert np.all(np.diff(values.astype(np.int64)) >= 0)

    def test_reproducible_byte_identical(self):
        spec = DataSpec(n=5000, u=1 << 12, zipf=0.5, order="random", seed=42)
        a, b = generate(spec), generate(spec)
        assert a.tobytes() == b.tobytes()

    def test_sorted_equals_sorted_random_permutation(self):
        base = dict(n=4000, u=1 << 10, zipf=1.0, seed=9)
        rnd = generate(DataSpec(order="random", **base))
        srt = generate(DataSpec(order="sorted", **base))
        assert np.array_equal(np.sort(rnd), srt)

    def test_uniform_mean_near_half_universe(self):
        spec = DataSpec(n=10**5, u=1 << 20, zipf=0, order="random", seed=7)
        values = generate(spec)
        assert abs(values.mean() - spec.u / 2) < 0.01 * spec.u

    def test_zipf_one_makes_zero_the_mode(self):
        spec = DataSpec(n=10**5, u=1 << 20, zipf=1.0, order="random", seed=7)
        values = generate(spec)
        counts = np.bincount(values)
        assert int(np.argmax(counts)) == 0

    def test_values_stay_inside_universe(self):
        spec = DataSpec(n=2000, u=16, zipf=2.0, order="random", seed=3)
        values = generate(spec)
        assert values.min() >= 0 and values.max() < 16


class TestRankOracle:
    def test_median_of_first_worked_dataset(self):
        oracle = RankOracle(DATASET_A)
        assert oracle.exact_quantile(0.5) == 2

    def test_low_quantile_of_first_worked_dataset(self):
        oracle = RankOracle(DATASET_A)
        assert oracle.exact_quantile(0.2) == 0

    def test_median_of_combined_dataset(self):
        oracle = RankOracle(DATASET_A + DATASET_B)
        assert oracle.exact_quantile(0.5) == 3

    def test_rank_bounds_duplicates(self):
        oracle = RankOracle(DATASET_A)
        assert tuple(oracle.rank_bounds(0)) == (0, 4, False)

    def test_rank_bounds_unique_maximum(self):
        oracle = RankOracle(DATASET_A)
        assert tuple(oracle.rank_bounds(7)) == (14, 14, False)

    def test_rank_bounds_absent_value(self):
        oracle = RankOracle(DATASET_A)
        r_min, r_max, absent = oracle.rank_bounds(5)
        assert (r_min, r_max, absent) == (13, 13, True)

    def test_rank_error_exact_answer_is_zero(self):
        oracle = RankOracle(DATASET_A)
        assert oracle.rank_error(0.5, 2) == 0.0

    def test_rank_error_low_answer(self):
        oracle = RankOracle(DATASET_A)
        assert oracle.rank_error(0.5, 0) == pytest.approx(3 / 15)

    def test_rank_error_high_answer(self):
        oracle = RankOracle(DATASET_A)
        assert oracle.rank_error(0.5, 3) == pytest.approx(3 / 15)

    def test_exact_quantile_has_zero_error_everywhere(self):
        values = generate(DataSpec(n=977, u=1 << 10, zipf=0.7, order="random", seed=12))
        oracle = RankOracle(values)
        for phi in np.linspace(0.01, 0.99, 57):
            assert oracle.rank_error(float(phi), oracle.exact_quantile(float(phi))) == 0.0

    def test_rank_bounds_partition_the_dataset(self):
        values = generate(DataSpec(n=500, u=64, zipf=0.3, order="random", seed=5))
        oracle = RankOracle(values)
        covered = 0
        for v in np.unique(values):
            r_min, r_max, absent = oracle.rank_bounds(int(v))
            assert not absent
            assert r_min <= r_max
            covered += r_max - r_min + 1
        assert covered == len(values)

    def test_phi_validation(self):
        oracle = RankOracle(DATASET_A)
        with pytest.raises(ValueError):
            oracle.exact_quantile(0.0)
        with pytest.raises(ValueError):
            oracle.exact_quantile(1.0)

    def test_quantile_point_target_rank(self):
        assert QuantilePoint.for_phi(0.5, 15).target_rank == 7
        assert QuantilePoint.for_phi(0.2, 15).target_rank == 3


class TestDatasetFiles:
    def test_binary_round_trip(self, tmp_path):
        values = generate(DataSpec(n=777, u=1 << 10, zipf=0.5, order="random", seed=2))
        path = str(tmp_path / "d.bin")
        write_dataset(path, values, 1 << 10)
        back, u = read_dataset(path)
        assert u == 1 << 10
        assert np.array_equal(values, back)

    def test_binary_layout_size(self, tmp_path):
        values = np.zeros(1000, dtype=np.uint32)
        path = str(tmp_path / "d.bin")
        write_dataset(path, values, 1 << 20)
        import os

        assert os.path.getsize(path) == 4 + 1 + 8 + 8 + 4 * 1000

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"XXXX" + bytes(30))
        with pytest.raises(ConfigurationError):
            read_dataset(str(path))

    def test_truncated_values_rejected(self, tmp_path):
        values = np.arange(10, dtype=np.uint32)
        path = str(tmp_path / "d.bin")
        write_dataset(path, values, 16)
        data = open(path, "rb").read()
        open(path, "wb").write(data[:-5])
        with pytest.raises(ConfigurationError):
            read_dataset(path)

    def test_text_round_trip(self, tmp_path):
        values = np.array([5, 1, 3, 3, 0], dtype=np.uint32)
        path = str(tmp_path / "d.txt")
        write_dataset_text(path, values)
        assert np.array_equal(read_dataset_text(path), values)
