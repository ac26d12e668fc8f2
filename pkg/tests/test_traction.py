from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from traction_risk.traction import (
    CategoricalDistribution,
    GridGeometry,
    TractionDistributionMap,
    TractionRealizationMap,
    bin_centers,
    cvar_traction_map,
    fit_categorical,
    left_cvar,
    left_var,
    right_cvar,
    right_cvar_empirical,
    right_cvar_rows,
    sample_realization,
    sample_realizations,
)


def two_point(bins: int = 5) -> CategoricalDistribution:
    # mass 0.5 on the first and last bin centers (0.1 and 0.9 at 5 bins)
    p = np.zeros(bins)
    p[0] = p[-1] = 0.5
    return CategoricalDistribution(p)


def quantile_oracle(dist: CategoricalDistribution, alpha: float, points: int = 1_000_000) -> float:
    """Midpoint Riemann sum of the lower quantile function over (0, alpha].

    The error is at most half the support width over ``points``, so 10**6
    points keep it below 1e-6.
    """
    tau = (np.arange(points) + 0.5) * alpha / points
    cdf = np.cumsum(dist.probs)
    idx = np.minimum(np.searchsorted(cdf, tau, side="left"), dist.bin_count - 1)
    return float(dist.centers[idx].mean())


pmfs = st.integers(2, 50).flatmap(
    lambda n: st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(lambda v: sum(v) > 1e-3)
).map(lambda v: CategoricalDistribution(np.asarray(v) / np.sum(v)))
alphas = st.floats(1e-3, 1.0)


class TestCategorical:
    def test_bin_centers_strictly_increasing_inside_unit_interval(self):
        c = bin_centers(20)
        assert np.all(np.diff(c) > 0) and c[0] > 0 and c[-1] < 1

    @pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], [], [np.nan, 1.0]])
    def test_rejects_invalid_probabilities(self, probs):
        with pytest.raises(ValueError):
            CategoricalDistribution(np.asarray(probs, dtype=float))

    def test_point_mass_mean(self):
        d = CategoricalDistribution.point_mass(0.8, 20)
        assert d.mean() == pytest.approx(0.825)
        assert d.probs[16] == 1.0

    def test_normal_mixture_is_normalized(self):
        d = CategoricalDistribution.from_normal_mixture([(0.5, 0.15, 0.05), (0.5, 0.85, 0.05)])
        assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert d.mean() == pytest.approx(0.5, abs=0.01)


class TestFitCategorical:
    def test_single_bin(self):
        assert fit_categorical([0.5, 0.5, 0.5], 2).probs.tolist() == [0.0, 1.0]

    def test_symmetric_split(self):
        assert fit_categorical([0.1, 0.9], 2).probs.tolist() == [0.5, 0.5]

    def test_boundaries_go_to_higher_bin_and_one_to_last(self):
        d = fit_categorical([0.0, 0.25, 0.5, 1.0], 4)
        assert d.probs.tolist() == [0.25, 0.25, 0.25, 0.25]

    def test_errors(self):
        with pytest.raises(ValueError, match="no samples"):
            fit_categorical([], 5)
        with pytest.raises(ValueError, match="out of range"):
            fit_categorical([0.2, 1.2], 5)
        with pytest.raises(ValueError, match="out of range"):
            fit_categorical([-0.01], 5)

    def test_bimodal_histogram_matches_analytic_bin_mass(self):
        rng = np.random.default_rng(7)
        n = 10_000
        comp = rng.random(n) < 0.5
        x = np.where(comp, rng.normal(0.3, 0.08, n), rng.normal(0.7, 0.1, n))
        x = x[(x >= 0) & (x <= 1)]
        fitted = fit_categorical(x, 20)
        edges = np.linspace(0, 1, 21)
        cdf = np.array([
            0.5 * 0.5 * math.erfc(-(e - 0.3) / (0.08 * math.sqrt(2)))
            + 0.5 * 0.5 * math.erfc(-(e - 0.7) / (0.1 * math.sqrt(2)))
            for e in edges
        ])
        analytic = np.diff(cdf) / (cdf[-1] - cdf[0])
        assert np.max(np.abs(fitted.probs - analytic)) < 0.02


class TestLeftCvar:
    def test_examples(self):
        d = two_point()
        assert left_cvar(d, 0.5) == pytest.approx(0.1, abs=1e-12)
        assert left_cvar(d, 1.0) == pytest.approx(0.5, abs=1e-12)
        assert left_cvar(d, 0.75) == pytest.approx((0.5 * 0.1 + 0.25 * 0.9) / 0.75, abs=1e-12)

    def test_examples_match_quantile_oracle(self):
        d = two_point()
        for a in (0.5, 0.75, 1.0):
            assert left_cvar(d, a) == pytest.approx(quantile_oracle(d, a), abs=1e-6)

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.0001, float("nan")])
    def test_invalid_alpha(self, alpha):
        with pytest.raises(ValueError, match="invalid risk level"):
            left_cvar(two_point(), alpha)

    def test_left_var(self):
        d = two_point()
        assert left_var(d, 0.25) == pytest.approx(0.1)
        assert left_var(d, 0.75) == pytest.approx(0.9)

    @given(pmfs, alphas)
    def test_matches_quantile_oracle(self, d, a):
        assert left_cvar(d, a) == pytest.approx(quantile_oracle(d, a), abs=1e-6)

    @given(pmfs)
    def test_alpha_one_is_mean(self, d):
        assert abs(left_cvar(d, 1.0) - d.mean()) < 1e-9

    @given(pmfs, alphas, alphas)
    def test_monotone_in_alpha(self, d, a, b):
        lo, hi = sorted((a, b))
        assert left_cvar(d, lo) <= left_cvar(d, hi) + 1e-12
        assert right_cvar(d, lo) >= right_cvar(d, hi) - 1e-12

    @given(pmfs, alphas)
    def test_bounded_by_support_and_mean(self, d, a):
        support = d.centers[d.probs > 0]
        v = left_cvar(d, a)
        assert support.min() - 1e-12 <= v <= support.max() + 1e-12
        assert v <= d.mean() + 1e-12
        assert right_cvar(d, a) >= d.mean() - 1e-12

    def test_equality_with_mean_only_for_point_mass(self):
        assert left_cvar(CategoricalDistribution.point_mass(0.4), 0.3) == pytest.approx(0.425)
        assert left_cvar(two_point(), 0.99) < two_point().mean()


class TestEmpiricalCvar:
    def test_examples(self):
        assert right_cvar_empirical([1, 2, 3, 4], 0.5) == 3.5
        assert right_cvar_empirical([7], 0.01) == 7
        assert right_cvar_empirical([1, 2, 3, 4], 1.0) == 2.5

    def test_errors(self):
        with pytest.raises(ValueError):
            right_cvar_empirical([], 0.5)
        with pytest.raises(ValueError, match="invalid risk level"):
            right_cvar_empirical([1.0], 0.0)

    samples = st.lists(st.floats(-100, 100), min_size=1, max_size=60)

    @given(samples, alphas)
    def test_top_k_oracle(self, values, a):
        k = math.ceil(a * len(values) - 1e-12)
        expected = sum(sorted(values, reverse=True)[:k]) / k
        assert right_cvar_empirical(values, a) == pytest.approx(expected, abs=1e-9)

    @given(samples)
    def test_alpha_one_is_sample_mean(self, values):
        assert abs(right_cvar_empirical(values, 1.0) - np.mean(values)) < 1e-9

    @given(samples, alphas, st.floats(-50, 50), st.floats(0.01, 20))
    def test_translation_and_homogeneity(self, values, a, c, k):
        x = np.asarray(values)
        base = right_cvar_empirical(x, a)
        assert right_cvar_empirical(x + c, a) == pytest.approx(base + c, abs=1e-9)
        assert right_cvar_empirical(k * x, a) == pytest.approx(k * base, rel=1e-9, abs=1e-9)

    @given(samples, alphas, alphas)
    def test_nonincreasing_in_alpha(self, values, a, b):
        lo, hi = sorted((a, b))
        assert right_cvar_empirical(values, lo) >= right_cvar_empirical(values, hi) - 1e-9

    def test_rows_match_scalar(self):
        costs = np.random.default_rng(0).normal(size=(30, 17))
        for a in (0.05, 0.3, 0.5, 1.0):
            rows = right_cvar_rows(costs, a)
            assert np.allclose(rows, [right_cvar_empirical(r, a) for r in costs], atol=1e-12)


def bimodal_map(h: int = 3, w: int = 4, known: np.ndarray | None = None) -> TractionDistributionMap:
    geo = GridGeometry(h, w)
    m = TractionDistributionMap.uniform(geo, two_point())
    return m if known is None else m.with_known(known)


class TestMaps:
    def test_geometry_cell_lookup(self):
        geo = GridGeometry(4, 5, 0.5, (1.0, 2.0))
        assert geo.cell_of(1.0, 2.0) == (0, 0)
        assert geo.cell_of(1.5, 2.49) == (0, 1)
        assert geo.cell_of(1.5, 2.5) == (1, 1)
        assert geo.cell_of(0.99, 2.0) is None
        assert geo.cell_of(3.5, 2.0) is None
        assert geo.cell_center(1, 2) == (2.25, 2.75)

    def test_mismatched_grids_rejected(self):
        geo = GridGeometry(2, 2)
        p = np.full((2, 2, 5), 0.2)
        with pytest.raises(ValueError):
            TractionDistributionMap(geo, p, np.full((2, 3, 5), 0.2))
        with pytest.raises(ValueError):
            TractionDistributionMap(geo, p, np.full((2, 2, 5), 0.3))

    def test_unknown_cells_may_hold_garbage(self):
        geo = GridGeometry(1, 2)
        p = np.array([[[0.5, 0.5], [0.0, 0.0]]])
        m = TractionDistributionMap(geo, p, p, np.array([[True, False]]))
        assert cvar_traction_map(m, 1.0).linear.tolist() == [[0.5, 0.0]]

    def test_realization_values_in_unit_interval(self):
        with pytest.raises(ValueError):
            TractionRealizationMap(GridGeometry(1, 1), np.array([[1.5]]), np.array([[0.5]]))

    def test_point_mass_map_samples_and_cvar(self):
        d = CategoricalDistribution.point_mass(0.8, 20)
        m = TractionDistributionMap.uniform(GridGeometry(5, 5), d)
        r = sample_realization(m, np.random.default_rng(1))
        assert np.all(r.linear == d.centers[16]) and np.all(r.angular == d.centers[16])
        for a in (0.05, 0.5, 1.0):
            assert np.allclose(cvar_traction_map(m, a).linear, d.centers[16])

    def test_sampling_law_of_large_numbers(self):
        lin, ang = sample_realizations(bimodal_map(1, 1), np.random.default_rng(2), 100_000)
        assert abs(lin.mean() - 0.5) < 0.01 and abs(ang.mean() - 0.5) < 0.01
        assert set(np.unique(lin)) == {0.1, 0.9}

    def test_sampling_is_deterministic(self):
        m = bimodal_map()
        a = sample_realization(m, np.random.default_rng(3))
        b = sample_realization(m, np.random.default_rng(3))
        assert np.array_equal(a.linear, b.linear) and np.array_equal(a.angular, b.angular)

    def test_unknown_cells_sample_zero(self):
        known = np.ones((3, 4), dtype=bool)
        known[1, 2] = False
        lin, ang = sample_realizations(bimodal_map(known=known), np.random.default_rng(4), 50)
        assert np.all(lin[:, 1, 2] == 0) and np.all(ang[:, 1, 2] == 0)
        assert np.all(lin[:, 0, 0] > 0)

    def test_cvar_map_values(self):
        m = bimodal_map()
        assert np.allclose(cvar_traction_map(m, 0.5).linear, 0.1)
        assert np.allclose(cvar_traction_map(m, 1.0).angular, 0.5)
        with pytest.raises(ValueError, match="invalid risk level"):
            cvar_traction_map(m, 0.0)

    def test_cvar_map_matches_per_cell_cvar(self):
        rng = np.random.default_rng(5)
        p = rng.dirichlet(np.ones(20), size=(3, 3))
        m = TractionDistributionMap(GridGeometry(3, 3), p, p[::-1])
        for a in (0.1, 0.37, 1.0):
            cm = cvar_traction_map(m, a)
            for r in range(3):
                for c in range(3):
                    lin, ang = m.cell(r, c)
                    assert cm.linear[r, c] == pytest.approx(left_cvar(lin, a), abs=1e-12)
                    assert cm.angular[r, c] == pytest.approx(left_cvar(ang, a), abs=1e-12)

    def test_json_round_trip_and_version_check(self):
        known = np.ones((3, 4), dtype=bool)
        known[0, 0] = False
        m = bimodal_map(known=known)
        back = TractionDistributionMap.from_dict(m.to_dict())
        assert np.array_equal(back.linear, m.linear) and np.array_equal(back.known, m.known)
        assert back.geometry == m.geometry
        r = sample_realization(m, np.random.default_rng(0))
        r2 = TractionRealizationMap.from_dict(r.to_dict())
        assert np.array_equal(r2.linear, r.linear)
        bad = {**m.to_dict(), "version": 99}
        with pytest.raises(ValueError, match="version"):
            TractionDistributionMap.from_dict(bad)
