"""
Tests for process specs, drifts and Doob survival probabilities
"""

import math

import numpy as np
import pytest

import processes
from errors import DomainError, HorizonError, ParameterError, SpecFormatError, UnsupportedFamilyError
from processes import Family, ProcessSpec, Side

ALL_SPECS = [
    ProcessSpec.taboo(1.0),
    ProcessSpec.coth(1.0, -1.0),
    ProcessSpec.line(0.5, 1.0),
    ProcessSpec.line(-0.5, 1.0),
    ProcessSpec.line_star(-0.5, 1.0),
    ProcessSpec.excursion(1.0, X=0.3, x0=0.1),
    ProcessSpec.meander(1.0, mu=1.0),
]


class TestValidate:
    def test_accepts_reference_specs(self):
        processes.validate(ProcessSpec.taboo(1.0))
        processes.validate(ProcessSpec.excursion(1.0))

    @pytest.mark.parametrize("build", [
        lambda: ProcessSpec.line_star(0.5, 1.0),
        lambda: ProcessSpec.taboo(-1.0),
        lambda: ProcessSpec.coth(1.0, 0.0),
        lambda: ProcessSpec.line(0.0, 1.0),
        lambda: ProcessSpec.line(0.5, -1.0),
        lambda: ProcessSpec.excursion(0.0),
        lambda: ProcessSpec.excursion(1.0, X=-0.1),
        lambda: ProcessSpec.meander(1.0, x0=-0.5),
    ])
    def test_rejects_invariant_violations(self, build):
        with pytest.raises(ParameterError):
            processes.validate(build())

    def test_rejects_foreign_parameter(self):
        with pytest.raises(ParameterError):
            processes.validate(ProcessSpec(Family.TABOO_I, a=1.0, mu=2.0))

    def test_rejects_start_off_origin(self):
        with pytest.raises(ParameterError):
            processes.validate(ProcessSpec(Family.TABOO_I, a=1.0, x0=0.5))

    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            processes.validate(ProcessSpec(Family.TABOO_I, a=math.inf))


class TestJson:
    @pytest.mark.parametrize("spec", ALL_SPECS)
    def test_round_trip(self, spec):
        assert processes.spec_from_json(processes.spec_to_json(spec)) == spec

    def test_defaults(self):
        spec = processes.spec_from_json('{"family": "excursion_e", "horizon": 2}')
        assert spec.x_end == 0.0 and spec.x0 == 0.0
        assert processes.spec_from_json('{"family": "meander_m", "horizon": 1}').mu == 0.0

    def test_short_keys(self):
        spec = processes.spec_from_json('{"family": "excursion_e", "t": 2, "x": 0.5, "x0": 0.1}')
        assert spec == processes.spec_from_json('{"family": "excursion_e", "horizon": 2, "x_end": 0.5, "x0": 0.1}')
        assert processes.spec_from_json('{"family": "meander_m", "t": 1.5}').horizon == 1.5

    @pytest.mark.parametrize("text", [
        '{"family": "excursion_e", "t": 1, "horizon": 1}',
        '{"family": "excursion_e", "horizon": 1, "x": 0, "x_end": 0}',
    ])
    def test_short_and_long_key_together(self, text):
        with pytest.raises(SpecFormatError):
            processes.spec_from_json(text)

    @pytest.mark.parametrize("text", [
        '{"family": "taboo_i", "a": 1, "b": 2}',
        '{"family": "bessel", "a": 1}',
        '{"a": 1}',
        '[1, 2]',
        '{"family": "taboo_i", "a": 1',
    ])
    def test_malformed(self, text):
        with pytest.raises(SpecFormatError):
            processes.spec_from_json(text)

    def test_invalid_values_are_parameter_errors(self):
        with pytest.raises(ParameterError):
            processes.spec_from_json('{"family": "coth_ii", "a": 1, "mu": 0}')


class TestGeometry:
    def test_moving_boundary(self):
        b = processes.boundary(ProcessSpec.line(0.5, 1.0))
        assert b.side is Side.UPPER
        assert b.position_at(2.0) == 2.0

    def test_lower_boundary(self):
        spec = ProcessSpec.meander(1.0)
        assert processes.boundary(spec).side is Side.LOWER
        assert processes.state_space(spec, 0.5).lo == 0.0
        assert processes.contains(spec, 0.1, 0.5)
        assert not processes.contains(spec, 0.0, 0.5)

    def test_distance_is_signed(self):
        spec = ProcessSpec.taboo(1.0)
        assert processes.distance_to_boundary(spec, 2.0, 1.0) == -1.0


class TestDrift:
    def test_reference_values(self):
        assert processes.drift(ProcessSpec.taboo(1.0), 0.0, 3.0) == -1.0
        assert processes.drift(ProcessSpec.coth(1.0, -1.0), 0.0, 0.0) == pytest.approx(-1.3130352854993312, abs=1e-14)
        assert processes.drift(ProcessSpec.excursion(1.0), 0.5, 0.5) == pytest.approx(1.0, abs=1e-14)

    def test_meander_near_origin(self):
        spec = ProcessSpec.meander(1.0, mu=0.0)
        for x in (1e-9, 1e-6, 1e-3):
            assert processes.drift(spec, x, 0.5) * x == pytest.approx(1.0, abs=1e-5)

    @pytest.mark.parametrize("spec", ALL_SPECS)
    def test_repulsion(self, spec):
        t = 0.5
        b = processes.boundary(spec)
        inward = -1.0 if b.side is Side.UPPER else 1.0
        previous = 0.0
        for k in range(1, 9):
            d = 10.0 ** -k
            value = processes.drift(spec, b.position_at(t) + inward * d, t)
            assert value * inward > 0
            assert abs(value) > previous
            assert abs(value) >= 0.5 / d
            previous = abs(value)

    def test_coth_tends_to_taboo(self):
        xs = np.linspace(1.0 - 10.0, 1.0 - 1e-3, 500)
        taboo = processes.drift(ProcessSpec.taboo(1.0), xs, 1.0)
        for mu in (1e-2, 1e-3, 1e-4):
            gap = np.max(np.abs(processes.drift(ProcessSpec.coth(1.0, mu), xs, 1.0) - taboo))
            assert gap <= 4.0 * mu * mu

    def test_rising_line_below_free_drift(self):
        spec = ProcessSpec.line(0.5, 1.0)
        xs = np.linspace(-20.0, 1.5 - 1e-6, 1000)
        assert np.all(processes.drift(spec, xs, 1.0) <= 0.5)

    def test_series_switch_is_finite(self):
        spec = ProcessSpec.coth(1.0, -1.0)
        value = processes.drift(spec, 1.0 - 1e-10, 0.0)
        assert math.isfinite(value) and value < -1e9

    def test_outside_and_on_boundary(self):
        spec = ProcessSpec.taboo(1.0)
        with pytest.raises(DomainError):
            processes.drift(spec, 1.0, 0.5)
        with pytest.raises(DomainError):
            processes.drift(spec, 1.5, 0.5)

    def test_horizon(self):
        with pytest.raises(HorizonError):
            processes.drift(ProcessSpec.excursion(1.0), 0.5, 1.0)

    def test_vectorized(self):
        xs = np.array([-1.0, 0.0, 0.5])
        values = processes.drift(ProcessSpec.taboo(1.0), xs, 1.0)
        assert values.shape == (3,)
        assert values[1] == -1.0


class TestDoob:
    def test_survival_reference_values(self):
        line = ProcessSpec.line(0.5, 1.0)
        assert processes.survival_pi(line, 0.0, 0.0) == pytest.approx(0.6321205588285577, abs=1e-15)
        assert processes.survival_pi(line, 1.5, 1.0) == 0.0
        assert processes.survival_pi(ProcessSpec.meander(1.0), 0.0, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_survival_unsupported(self):
        with pytest.raises(UnsupportedFamilyError):
            processes.survival_pi(ProcessSpec.taboo(1.0), 0.0, 1.0)
        with pytest.raises(ParameterError):
            processes.survival_pi(ProcessSpec.line(-0.5, 1.0), 0.0, 1.0)

    @pytest.mark.parametrize("spec,x,t,tol", [
        (ProcessSpec.line(0.5, 1.0), 0.0, 1.0, 1e-8),
        (ProcessSpec.excursion(1.0, X=0.3, x0=0.1), 0.2, 0.4, 1e-7),
        (ProcessSpec.meander(1.0, mu=1.0), 0.5, 0.3, 1e-7),
    ])
    def test_drift_is_log_gradient(self, spec, x, t, tol):
        assert processes.doob_drift_check(spec, x, t, 1e-5) == pytest.approx(processes.drift(spec, x, t), abs=tol)

    def test_second_order_convergence(self):
        spec = ProcessSpec.line(0.5, 1.0)
        exact = processes.drift(spec, 0.0, 1.0)
        hs = np.array([1e-1, 5e-2, 2.5e-2])
        errors = [abs(processes.doob_drift_check(spec, 0.0, 1.0, h) - exact) for h in hs]
        slope = np.polyfit(np.log(hs), np.log(errors), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)

    @pytest.mark.parametrize("mu", [-2.0, 0.0, 3.0])
    def test_excursion_drift_ignores_prior_drift(self, mu):
        spec = ProcessSpec.excursion(1.0, X=0.3, x0=0.1)
        xs = np.array([0.05, 0.2, 0.8, 1.5])
        direct = processes.drift(spec, xs, 0.4)
        conditioned = processes.excursion_drift_with_prior_drift(spec, xs, 0.4, mu)
        assert np.allclose(conditioned, direct, rtol=1e-10, atol=1e-10)
