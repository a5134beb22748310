import csv
import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from hybridlinks.analysis import (binary_entropy, bias_for_entropy, information_rate, kl_divergence, kl_to_uniform,
                                  pinsker_gap, rate_formula, rate_from_counts, reliability_bound, seed_study,
                                  variational_distance, write_csv)
from hybridlinks.errors import DimensionError
from hybridlinks.polar import PolarParams, entropy_profile
from hybridlinks.source_codec import output_distribution


class TestDivergences:
    def test_variational_distance(self, rng):
        p = rng.dirichlet(np.ones(8))
        q = rng.dirichlet(np.ones(8))
        assert variational_distance(p, p) == 0.0
        assert variational_distance(p, q) == pytest.approx(np.abs(p - q).sum())
        assert variational_distance([1, 0], [0, 1]) == 2.0

    def test_support_mismatch(self):
        with pytest.raises(DimensionError):
            variational_distance([0.5, 0.5], [0.25] * 4)

    def test_not_a_distribution(self):
        with pytest.raises(ValueError):
            kl_divergence([0.5, 0.6], [0.5, 0.5])
        with pytest.raises(ValueError):
            variational_distance([1.5, -0.5], [0.5, 0.5])

    def test_kl_divergence(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)
        assert math.isinf(kl_divergence([0.5, 0.5], [1.0, 0.0]))

    def test_kl_to_uniform(self):
        assert kl_to_uniform(np.full(8, 1 / 8)) == pytest.approx(0.0, abs=1e-12)
        point = np.zeros(8)
        point[3] = 1.0
        assert kl_to_uniform(point) == pytest.approx(3.0)
        p = 0.11
        pair = np.outer([1 - p, p], [1 - p, p]).ravel()
        assert kl_to_uniform(pair) == pytest.approx(2 - 2 * binary_entropy(p), abs=1e-9)
        with pytest.raises(DimensionError):
            kl_to_uniform(np.full(6, 1 / 6))

    def test_pinsker_holds(self, rng):
        for _ in range(50):
            p = rng.dirichlet(np.ones(6))
            q = rng.dirichlet(np.ones(6))
            lhs, rhs = pinsker_gap(p, q)
            assert lhs <= rhs + 1e-12

    def test_bias_for_entropy(self):
        p = bias_for_entropy(0.9)
        assert 0.0 < p < 0.5
        assert binary_entropy(p) == pytest.approx(0.9, abs=1e-9)
        assert bias_for_entropy(0.0) == 0.0
        assert bias_for_entropy(1.0) == 0.5
        with pytest.raises(ValueError):
            bias_for_entropy(1.2)


class TestSourceOutputDivergence:
    def test_near_uniform_output(self):
        delta = 0.25
        profile = entropy_profile(PolarParams(8, 0.11, delta_override=delta))
        law = output_distribution(profile, 2)
        divergence = kl_to_uniform(law)
        assert divergence >= -1e-12
        assert divergence <= 2 * profile.compressed_len * delta, (
            f"Output divergence {divergence} exceeds {2 * profile.compressed_len * delta}")


class TestRate:
    def test_spot_value(self):
        rate = rate_formula(Fraction(9, 10), Fraction(1, 50), ell=16, c=2, r=2)
        assert rate == Fraction(40, 43)
        assert float(rate) == pytest.approx(0.93023, abs=1e-5)

    def test_formula_matches_frame_count_on_grid(self):
        checked = 0
        for n, ell, c, r, dj in product([8, 16], [8, 16], [1, 2, 4], [0, 4, 8], [0, 2, 4]):
            if c >= ell:
                continue
            report = rate_from_counts(n, n // 2, dj, ell, c, r)
            if report.pad == 0:
                assert report.exact, f"Rate mismatch at n={n} ell={ell} c={c} r={r} dj={dj}"
                checked += 1
        assert checked > 0

    def test_padding_lowers_measured_rate(self):
        report = rate_from_counts(16, 8, 3, 8, 5, 4)
        assert report.pad > 0
        assert report.measured_rate < report.rate

    def test_no_expansion(self):
        report = rate_from_counts(16, 12, 2, 8, 2, 0)
        assert report.rate == 1 / (Fraction(12, 16) + 2 * Fraction(2, 16))
        assert rate_from_counts(16, 12, 0, 8, 2, 0).rate == Fraction(16, 12)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            rate_formula(Fraction(1, 2), 0, ell=4, c=4, r=0)
        with pytest.raises(ValueError):
            rate_from_counts(8, 6, 4, 8, 2, 0)

    def test_from_profile(self, profile16):
        report = information_rate(profile16, 16, 4, 32)
        assert report.high_count == len(profile16.high_set)
        assert report.seed_len == profile16.seed_len
        if report.pad == 0:
            assert report.exact
        data = report.to_dict()
        assert isinstance(data["rate"], float)
        assert Fraction(data["rate_exact"]) == report.rate


class TestSeedStudy:
    def test_uniform_source_needs_no_seed(self):
        points = seed_study([256, 1024], 0.5, 0.25, samples=10**4, seed=1)
        assert [point.d_j for point in points] == [0, 0]
        assert [point.n_tilde for point in points] == [256, 1024]
        assert all(point.method == "monte-carlo" for point in points)

    def test_bracket(self):
        point = seed_study([16], 0.11, 0.25)[0]
        assert point.method == "exact"
        assert point.bound_low == pytest.approx(16 ** 0.7214)
        assert point.bound_high == pytest.approx(16 ** 0.7331)
        assert 0 <= point.d_j <= point.n_tilde <= 16

    @pytest.mark.slow
    def test_seed_fraction_at_scale(self):
        p = bias_for_entropy(0.9)
        points = seed_study([2 ** m for m in range(8, 15)], p, 0.25, samples=10**5, seed=2, threads=4)
        for point in points:
            assert 0 <= point.d_j <= point.n_tilde <= point.n
            assert 0.0 <= point.seed_fraction <= 1.0
        fractions = [point.seed_fraction for point in points]
        assert all(later <= earlier for earlier, later in zip(fractions, fractions[1:])), fractions


class TestReliabilityBound:
    def test_arithmetic(self):
        assert reliability_bound(4, 8, 0.001, 0.0) == pytest.approx(math.sqrt(2 * 4 * 8 * 0.001) + 8 * 0.001)
        assert reliability_bound(10, 16, 0.25, 0.5) == 1.0


class TestCsv:
    def test_write_rows(self, tmp_path):
        path = tmp_path / "rows.csv"
        rows = [rate_from_counts(8, 4, 2, 8, 2, 4).to_dict(), rate_from_counts(8, 4, 0, 8, 2, 4).to_dict()]
        assert write_csv(rows, path) == 2
        with path.open() as f:
            loaded = list(csv.DictReader(f))
        assert len(loaded) == 2
        assert Fraction(loaded[0]["rate_exact"]) == Fraction(rows[0]["rate_exact"])

    def test_empty(self, tmp_path):
        assert write_csv([], tmp_path / "empty.csv") == 0
