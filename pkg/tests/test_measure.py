import math

import numpy as np
import pytest

from idslab import measure
from oracles import trapezoid_line_integral


def atoms(*pairs):
    locs = [p[0] for p in pairs]
    ws = [p[1] for p in pairs]
    return measure.AtomicMeasure.from_points(locs, ws)


class TestAtomicMeasure:
    def test_sorted_and_merged(self):
        mu = atoms((2.0, 1.0), (-1.0, 0.5), (2.0, 3.0))
        assert list(mu.locations) == [-1.0, 2.0]
        assert list(mu.weights) == [0.5, 4.0]

    def test_rejects_bad_atoms(self):
        with pytest.raises(ValueError):
            measure.AtomicMeasure.from_points([0.0], [0.0])
        with pytest.raises(ValueError):
            measure.AtomicMeasure.from_points([np.inf], [1.0])

    def test_distribution_left_continuous(self):
        mu = atoms((0.0, 1.0), (1.0, 2.0))
        assert mu.mass_below(0.0) == 0.0
        assert mu.mass_below(0.5) == 1.0
        assert mu.mass_below(1.0) == 1.0   # atom at the threshold not counted
        assert mu.mass_below(1.1) == 3.0

    def test_integrate(self):
        mu = atoms((2.0, 3.0))
        assert mu.integrate(lambda e: e) == pytest.approx(6.0)
        assert measure.AtomicMeasure.empty().integrate(lambda e: e) == 0.0
        mu2 = atoms((0.0, 1.0), (1.0, 1.0))
        assert mu2.integrate(lambda e: e ** 2) == pytest.approx(1.0)

    def test_integrate_rejects_nonfinite(self):
        mu = atoms((0.0, 1.0))
        with pytest.raises(ValueError):
            mu.integrate(lambda e: np.full_like(e, np.inf))

    def test_json_roundtrip(self):
        mu = atoms((0.5, 1.0), (-2.0, 0.25))
        again = measure.AtomicMeasure.from_json(mu.to_json())
        assert np.array_equal(again.locations, mu.locations)
        assert np.array_equal(again.weights, mu.weights)

    def test_csv_export(self, tmp_path):
        mu = atoms((0.5, 1.0))
        path = tmp_path / "measure.csv"
        mu.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "location,weight"
        assert lines[1] == "0.5,1"


class TestStieltjesTransform:
    def test_atom_at_origin(self):
        mu = atoms((0.0, 1.0))
        assert measure.stieltjes(mu, 1j, 2.0) == pytest.approx(1.0)

    def test_weighted_atom(self):
        mu = atoms((1.0, 2.0))
        assert measure.stieltjes(mu, 1j, 2.0) == pytest.approx(1.0)

    def test_linearity_in_mass(self):
        mu = atoms((0.3, 1.0), (1.5, 2.0))
        scaled = mu.scaled(3.0)
        assert measure.stieltjes(scaled, 1j, 2.5) == pytest.approx(
            3.0 * measure.stieltjes(mu, 1j, 2.5))

    def test_rejects_real_z(self):
        with pytest.raises(ValueError):
            measure.stieltjes(atoms((0.0, 1.0)), 1.0 + 0.0j, 2.0)

    def test_domination_inequality(self):
        rng = np.random.default_rng(44)
        for _ in range(200):
            mu = measure.AtomicMeasure.from_points(rng.normal(size=15) * 4.0,
                                                   rng.uniform(0.1, 2.0, 15))
            e = float(rng.normal() * 3.0)
            eps = float(rng.uniform(0.1, 2.0))
            p = float(rng.uniform(1.5, 4.0))
            lhs = measure.stieltjes(mu, e + 1j * eps, p)
            rhs = (1.0 + abs(e) / eps) ** p * measure.stieltjes(mu, 1j * eps, p)
            assert lhs <= rhs * (1.0 + 1e-12)


class TestSmoothingKernel:
    def test_p2_is_cauchy(self):
        assert measure.kernel_normalizer(2.0) == pytest.approx(1.0 / math.pi, rel=1e-8)
        kernel = measure.smoothing_kernel(2.0, 0.5)
        xs = np.array([0.0, 0.3, -1.0])
        want = 0.5 / (math.pi * (xs ** 2 + 0.25))
        assert np.allclose(kernel(xs), want, rtol=1e-9)

    @pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
    @pytest.mark.parametrize("eps", [1.0, 0.1])
    def test_unit_mass(self, p, eps):
        kernel = measure.smoothing_kernel(p, eps)
        # substitute x = eps * tan(t) for an exact finite-interval integral
        ts = np.linspace(-math.pi / 2 + 1e-10, math.pi / 2 - 1e-10, 200001)
        xs = eps * np.tan(ts)
        mass = float(np.trapezoid(kernel(xs) * eps / np.cos(ts) ** 2, ts))
        assert abs(mass - 1.0) <= 1e-8

    def test_peak_scaling(self):
        for p in (2.0, 3.0):
            k1 = measure.smoothing_kernel(p, 1.0)
            k01 = measure.smoothing_kernel(p, 0.1)
            k001 = measure.smoothing_kernel(p, 0.01)
            assert k001(0.0) > k01(0.0) > k1(0.0)
            assert k001(1.0) < k01(1.0) < k1(1.0)

    def test_rejects_nonnormalizable(self):
        with pytest.raises(ValueError):
            measure.smoothing_kernel(1.0, 0.1)
        with pytest.raises(ValueError):
            measure.smoothing_kernel(0.5, 0.1)


class TestIndicatorHat:
    def test_values(self):
        hat = measure.indicator_hat(2.0)
        assert hat(1.0) == 1.0
        assert hat(2.0) == 1.0          # ramp value at the knee
        assert hat(2.5) == 0.5
        assert hat(3.0) == 0.0
        assert hat(4.0) == 0.0

    def test_squeeze(self):
        rng = np.random.default_rng(45)
        for _ in range(200):
            mu = measure.AtomicMeasure.from_points(rng.normal(size=20) * 3.0,
                                                   rng.uniform(0.1, 2.0, 20))
            e = float(rng.normal() * 2.0)
            mid = mu.integrate(measure.indicator_hat(e))
            assert mu.mass_below(e) <= mid + 1e-12
            assert mid <= mu.mass_below(e + 1.0) + 1e-12

    def test_mollified_matches_quadrature(self):
        e0, eps = 0.7, 0.35
        smooth = measure.mollified_indicator_hat(e0, eps)
        hat = measure.indicator_hat(e0)
        for lam in (-1.0, 0.3, 0.7, 1.0, 1.7, 2.5):
            def convolved(ys):
                return (eps / math.pi) / ((lam - ys) ** 2 + eps ** 2) * hat(ys)
            brute = trapezoid_line_integral(convolved, 5000.0, 2_000_001)
            assert abs(float(smooth(lam)) - brute) <= 1e-4

    def test_mollified_between_zero_and_one(self):
        smooth = measure.mollified_indicator_hat(0.0, 0.2)
        xs = np.linspace(-30, 30, 1001)
        vals = smooth(xs)
        assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
        assert float(smooth(-20.0)) > 0.99
        assert float(smooth(20.0)) < 0.01


class TestVagueDistance:
    def test_identical_measures(self):
        mu = atoms((0.0, 1.0), (2.0, 0.3))
        assert measure.vague_distance(mu, mu, measure.DEFAULT_TEST_GRID) == 0.0

    def test_shrinking_atom(self):
        target = atoms((0.0, 1.0))
        for n in (1, 3, 10, 100):
            mu = atoms((1.0 / n, 1.0))
            dist = measure.vague_distance(mu, target, [(1j, 2.0)])
            assert dist == pytest.approx(1.0 / (n * n + 1.0), rel=1e-12)

    def test_escaping_mass_looks_vaguely_null(self):
        # vague convergence alone misses mass escaping to -infinity
        empty = measure.AtomicMeasure.empty()
        for n in (1, 3, 10, 100):
            mu = atoms((-float(n), 1.0))
            dist = measure.vague_distance(mu, empty, [(1j, 2.0)])
            assert dist == pytest.approx(1.0 / (n * n + 1.0), rel=1e-12)

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError):
            measure.vague_distance(atoms((0.0, 1.0)), atoms((0.0, 1.0)), [])


class TestTightnessProfile:
    def test_positive_support(self):
        seq = [atoms((0.5, 1.0), (1.5, 2.0)) for _ in range(10)]
        assert measure.tightness_profile(seq, [-1.0, -2.0, -4.0]) == [0.0, 0.0, 0.0]

    def test_escaping_mass_detected(self):
        seq = [atoms((-float(n), 1.0)) for n in range(1, 21)]
        profile = measure.tightness_profile(seq, [-1.0, -5.0, -9.0])
        assert profile == [1.0, 1.0, 1.0]

    def test_heavy_then_light_tail(self):
        # distribution functions converging pointwise: profiles decay
        seq = [atoms(*((1.0 / k, 1.0 / n) for k in range(1, n + 1)))
               for n in range(1, 30)]
        profile = measure.tightness_profile(seq, [0.0, -1.0])
        assert profile == [0.0, 0.0]

    def test_forward_direction_of_convergence_criterion(self):
        # pointwise distribution convergence plus tightness implies the
        # transform gap on a fixed grid goes to zero
        target = atoms((0.0, 1.0))
        gaps = [measure.vague_distance(atoms((1.0 / n, 1.0)), target,
                                       measure.DEFAULT_TEST_GRID)
                for n in (2, 4, 8, 16, 32)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        profile = measure.tightness_profile([atoms((1.0 / n, 1.0))
                                             for n in range(1, 40)], [-0.5, -2.0])
        assert profile == [0.0, 0.0]
