"""
Tests for Girsanov weights, tilde densities and the positive image
"""

import math

import numpy as np
import pytest

import densities
import girsanov
import numerics
from errors import DomainError, ParameterError, UnsupportedFamilyError
from girsanov import TildeDensity, WeightMethod
from numerics import Interval
from processes import ProcessSpec
from simulate import PathSample

COTH = ProcessSpec.coth(1.0, -1.0)
LINE = ProcessSpec.line(0.5, 1.0)


class TestClosedWeight:
    def test_reference_values(self):
        assert girsanov.z_closed(COTH, 0.0, 0.0).value == pytest.approx(1.0, abs=1e-15)
        expected = math.sinh(0.5) / math.sinh(1.0) * math.exp(-0.5)
        assert girsanov.z_closed(COTH, 0.5, 1.0).value == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.2689414, abs=1e-7)
        expected = math.sinh(1.0) / math.sinh(0.5) * math.exp(-0.5)
        assert girsanov.z_closed(LINE, 0.0, 2.0).value == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(1.3678794, abs=1e-7)

    def test_method_flag(self):
        assert girsanov.z_closed(LINE, 0.0, 1.0).method is WeightMethod.CLOSED_FORM

    def test_outside(self):
        with pytest.raises(DomainError):
            girsanov.z_closed(COTH, 1.5, 1.0)

    def test_unsupported_family(self):
        with pytest.raises(UnsupportedFamilyError):
            girsanov.z_closed(ProcessSpec.taboo(1.0), 0.0, 1.0)

    def test_endpoint_weights_are_signed(self):
        w = np.array([0.0, 0.5, 1.5])
        z = girsanov.endpoint_weights(COTH, w, 1.0)
        assert z[0] > 0 and z[1] > 0 and z[2] < 0
        assert z[1] == pytest.approx(girsanov.z_closed(COTH, 0.5, 1.0).value, rel=1e-13)


class TestPathWeight:
    def test_zero_length_path(self):
        path = PathSample(times=np.array([0.0]), positions=np.array([0.0]), seed=0, dt=1e-3)
        weight = girsanov.z_path(COTH, path)
        assert weight.value == 1.0 and not weight.zero_weight

    def test_touching_the_boundary(self):
        path = PathSample(times=np.array([0.0, 0.5, 1.0]), positions=np.array([0.0, 0.5, 1.0]),
                          seed=0, dt=0.5)
        weight = girsanov.z_path(COTH, path)
        assert weight.zero_weight and weight.value == 0.0

    def test_brownian_paths_are_reproducible(self):
        times, first = girsanov.brownian_paths(0.0, 1e-2, 1.0, 5, 7)
        _, second = girsanov.brownian_paths(0.0, 1e-2, 1.0, 5, 7)
        assert len(times) == 101
        assert np.array_equal(first, second)
        assert np.all(first[:, 0] == 0.0)

    @pytest.mark.slow
    def test_path_weights_approach_closed_form(self):
        (rms,), kept = girsanov.z_path_rms(COTH, 1.0, (1e-3,), 1000, 42)
        assert rms <= 5e-2
        assert kept > 400

    def test_path_weight_rms_shrinks_with_dt(self):
        rms, kept = girsanov.z_path_rms(COTH, 1.0, (4e-2, 1e-2), 200, 42)
        assert 0 < kept <= 200
        assert rms[1] < rms[0]

    def test_path_weight_rms_rejects_misaligned_steps(self):
        with pytest.raises(ParameterError):
            girsanov.z_path_rms(COTH, 1.0, (3e-2, 2e-2), 20, 1)

    def test_path_weight_rms_needs_surviving_paths(self):
        with pytest.raises(ParameterError):
            girsanov.z_path_rms(COTH, 1.0, (1e-2,), 20, 1, margin=2.0)


class TestTildeDensity:
    def test_vanishes_at_boundary(self):
        assert girsanov.tilde_density(COTH, 1.0, 1.0) == pytest.approx(0.0, abs=1e-16)

    @pytest.mark.parametrize("spec", [COTH, LINE, ProcessSpec.taboo(1.0), ProcessSpec.line_star(-0.5, 1.0)])
    def test_normalized_on_the_line(self, spec):
        mass = numerics.integrate(lambda y: girsanov.tilde_density(spec, y, 1.0), Interval(-math.inf, math.inf))
        assert mass.value == pytest.approx(1.0, abs=1e-8)

    def test_excess_physical_mass(self):
        mass = numerics.integrate(lambda y: girsanov.tilde_density(COTH, y, 1.0), Interval(-math.inf, 1.0))
        defect = girsanov.tilde_normalization_defect(COTH, 1.0)
        assert defect > 0
        assert mass.value - 1.0 == pytest.approx(defect, abs=1e-9)

    def test_outgoing_current(self):
        mu, a, t = -1.0, 1.0, 1.0
        expected = mu * math.exp(-(a * a + mu * mu * t * t) / (2.0 * t)) / (
            2.0 * math.sinh(mu * a) * math.sqrt(2.0 * math.pi * t))
        closed = girsanov.tilde_boundary_current(COTH, t)
        assert closed == pytest.approx(expected, rel=1e-14)
        assert closed > 0
        h = 1e-5
        numeric = -0.5 * (girsanov.tilde_density(COTH, a + h, t) - girsanov.tilde_density(COTH, a - h, t)) / (2 * h)
        assert numeric == pytest.approx(closed, abs=1e-8)

    def test_no_tilde_for_bridges(self):
        with pytest.raises(UnsupportedFamilyError):
            TildeDensity(ProcessSpec.excursion(1.0))


class TestImageDensity:
    @pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
    def test_matches_closed_coth_density(self, t):
        tilde = TildeDensity(COTH)
        xs = np.linspace(-6.0, 0.999, 1000)
        image = girsanov.image_density(tilde, tilde.boundary, xs, t)
        assert np.max(np.abs(image - densities.pdf(COTH, xs, t))) <= 1e-12

    @pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
    def test_matches_closed_line_density(self, t):
        tilde = TildeDensity(LINE)
        b = 1.0 + 0.5 * t
        xs = np.linspace(b - 7.0, b - 1e-3, 1000)
        image = girsanov.image_density(tilde, tilde.boundary, xs, t)
        assert np.max(np.abs(image - densities.pdf(LINE, xs, t))) <= 1e-12

    def test_zero_on_and_beyond_the_boundary(self):
        tilde = TildeDensity(COTH)
        assert girsanov.image_density(tilde, tilde.boundary, 1.0, 1.0) == 0.0
        assert girsanov.image_density(tilde, tilde.boundary, 2.0, 1.0) == 0.0

    def test_normalized(self):
        tilde = TildeDensity(COTH)
        mass = numerics.integrate(lambda y: girsanov.image_density(tilde, tilde.boundary, y, 1.0),
                                  Interval(-math.inf, 1.0))
        assert mass.value == pytest.approx(1.0, abs=1e-8)
