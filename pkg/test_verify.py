"""
Tests for the verification checks, the battery and its report
"""

import json
import math

import pytest

import girsanov
import verify
from config import config
from errors import DomainError, ParameterError
from processes import Family, ProcessSpec
from verify import BatteryConfig, BatteryEntry, FPGrid, Outcome

COTH = ProcessSpec.coth(1.0, -1.0)
LINE = ProcessSpec.line(0.5, 1.0)


class TestNormalization:
    def test_true_density(self):
        result = verify.check_normalization(COTH, 1.0, tol=1e-8)
        assert result.outcome is Outcome.PASS

    def test_tilde_is_an_expected_failure(self):
        result = verify.check_normalization(COTH, 1.0, tilde=True)
        assert result.outcome is Outcome.EXPECTED_FAIL
        assert result.measured_defect == pytest.approx(girsanov.tilde_normalization_defect(COTH, 1.0), abs=1e-8)
        assert result.acceptable and not result.passed

    def test_meander(self):
        assert verify.check_normalization(ProcessSpec.meander(1.0, mu=1.0), 0.5).outcome is Outcome.PASS


class TestFokkerPlanck:
    def test_coth(self):
        grid = FPGrid(xs=tuple(x / 10.0 for x in range(-30, 10)), ts=(0.5, 1.0, 1.5))
        result = verify.check_fp_residual(COTH, grid)
        assert result.outcome is Outcome.PASS
        assert result.params["slope"] == pytest.approx(2.0, abs=0.2)

    def test_tilde_solves_the_same_equation(self):
        assert verify.check_fp_residual(COTH, tilde=True).outcome is Outcome.PASS

    def test_excursion(self):
        assert verify.check_fp_residual(ProcessSpec.excursion(1.0, X=0.5, x0=0.2)).outcome is Outcome.PASS

    def test_grid_touching_the_boundary(self):
        with pytest.raises(DomainError):
            verify.check_fp_residual(COTH, FPGrid(xs=(0.0, 0.995), ts=(1.0,)))


class TestBoundaryFlux:
    def test_coth(self):
        assert verify.check_boundary_flux(COTH, 1.0).outcome is Outcome.PASS

    def test_moving_line(self):
        assert verify.check_boundary_flux(LINE, 2.0).outcome is Outcome.PASS

    def test_tilde_current_matches_closed_form(self):
        result = verify.check_boundary_flux(COTH, 1.0, tilde=True)
        assert result.outcome is Outcome.EXPECTED_FAIL
        assert result.params["oracle_gap"] <= 1e-8


class TestMoments:
    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_taboo(self, t):
        assert verify.check_moments(ProcessSpec.taboo(1.0), t).outcome is Outcome.PASS

    def test_excursion(self):
        assert verify.check_moments(ProcessSpec.excursion(1.0, X=0.7, x0=0.3), 0.5).outcome is Outcome.PASS

    def test_pinned_end(self):
        result = verify.check_moments(ProcessSpec.excursion(1.0, X=0.7, x0=0.3), 1.0)
        assert result.outcome is Outcome.PASS
        assert result.measured_defect <= 1e-10

    def test_meander_is_skipped(self):
        assert verify.check_moments(ProcessSpec.meander(1.0), 0.5).outcome is Outcome.SKIPPED


class TestAsymptotics:
    @pytest.mark.parametrize("spec", [ProcessSpec.taboo(1.0), COTH, LINE])
    def test_leading_laws(self, spec):
        assert verify.check_asymptotics(spec).outcome is Outcome.PASS


class TestGirsanov:
    def test_too_few_paths(self):
        assert verify.check_girsanov_mc(COTH, n=10).outcome is Outcome.INCONCLUSIVE

    def test_histogram_shape(self):
        edges, means, seconds, masses = verify.girsanov_histogram(COTH, 1.0, 2000, 20, 1)
        assert len(edges) == 21 and len(means) == 20 and len(masses) == 20
        assert all(s >= 0 for s in seconds)

    @pytest.mark.slow
    @pytest.mark.parametrize("spec", [COTH, LINE])
    def test_chi_square(self, spec):
        result = verify.check_girsanov_mc(spec, n=100000, bins=40, seed=42)
        assert result.outcome is Outcome.PASS

    @pytest.mark.slow
    def test_path_weight_convergence(self):
        results = verify.check_z_convergence(COTH, seed=42)
        assert [r.check_id for r in results] == ["z_convergence_slope", "z_convergence_rms"]
        assert all(r.outcome is Outcome.PASS for r in results), [r.to_dict() for r in results]
        assert 0.35 <= results[0].params["slope"] <= 0.65
        assert results[1].measured_defect <= 5e-2

    def test_path_weight_params(self):
        results = verify.check_z_convergence(COTH, dt_list=(4e-2, 2e-2, 1e-2), n=200, seed=7)
        params = results[0].params
        assert params["margin"] == config.Z_PATH_MARGIN
        assert 0 < params["kept"] <= 200
        assert len(params["rms"]) == 3
        assert results[1].measured_defect == params["rms"][-1]

    def test_step_size_does_not_enter_the_statistic(self):
        coarse = verify.check_girsanov_mc(COTH, n=2000, dt=1e-2, bins=10, seed=5)
        fine = verify.check_girsanov_mc(COTH, n=2000, dt=1e-4, bins=10, seed=5)
        assert coarse.measured_defect == fine.measured_defect
        assert coarse.params["weights"] == "closed_form_endpoint"
        assert coarse.params["dt"] == 1e-2 and fine.params["dt"] == 1e-4


class TestSimulationChecks:
    def test_allowance_is_noise_plus_measured_bias(self):
        mean, ks = verify.check_simulation(ProcessSpec.taboo(1.0), dt=1e-2, t_end=0.5, n=200, seed=11)
        params = mean.params
        assert params["bias_estimate"] >= 0
        assert params["allowance"] == pytest.approx(3.0 * params["stderr"] + params["bias_estimate"])
        assert mean.tolerance == params["allowance"]
        assert ks.check_id == "simulation_ks"

    def test_dt_bias_needs_three_levels(self):
        with pytest.raises(ParameterError):
            verify.check_dt_bias(ProcessSpec.taboo(1.0), dt_list=(1e-2, 1e-3), n=10)

    def test_dt_bias_params(self):
        result = verify.check_dt_bias(ProcessSpec.taboo(1.0), t_end=0.4, dt_list=(0.2, 0.1, 0.05), n=50, seed=2)
        assert result.params["dt_list"] == [0.2, 0.1, 0.05]
        assert len(result.params["means"]) == 3 and len(result.params["level_steps"]) == 2
        assert result.tolerance == 1.0

    @pytest.mark.slow
    def test_dt_bias_shrinks(self):
        result = verify.check_dt_bias(ProcessSpec.taboo(1.0), seed=42)
        assert result.outcome is Outcome.PASS, result.to_dict()

    @pytest.mark.slow
    @pytest.mark.parametrize("family", list(Family))
    def test_endpoint_law_at_fine_step(self, family):
        spec = verify.figure_specs(family)[0]
        results = verify.check_simulation(spec, 1e-4, verify.SIMULATION_HORIZONS[family], n=10000, seed=42)
        ks = results[1]
        assert ks.measured_defect <= 0.02, ks.to_dict()


class TestLimits:
    def test_all_limits_hold(self):
        results = verify.check_limits()
        assert len(results) == 4
        assert all(r.outcome is Outcome.PASS for r in results), [r.to_dict() for r in results]


class TestBattery:
    def test_empty(self):
        report = verify.run_battery(BatteryConfig([]))
        assert report.ok and report.results == []
        assert "no checks" in verify.report_table(report)

    def test_invalid_spec_becomes_an_error_entry(self):
        entry = BatteryEntry("normalization", {"family": "coth_ii", "a": 1, "mu": 0}, {"t": 1.0})
        report = verify.run_battery(BatteryConfig([entry]))
        assert not report.ok
        assert report.results[0].outcome is Outcome.ERROR

    def test_tolerance_override_forces_failure(self):
        entry = BatteryEntry("asymptotics", ProcessSpec.taboo(1.0))
        report = verify.run_battery(BatteryConfig([entry], tolerances={"asymptotics": 1e-12}))
        assert report.results[0].outcome is Outcome.FAIL
        assert report.failures() == report.results

    def test_results_sorted_and_serialized(self):
        entries = [BatteryEntry("boundary_flux", COTH, {"t": 1.0}),
                   BatteryEntry("normalization", COTH, {"t": 1.0}),
                   BatteryEntry("limits")]
        report = verify.run_battery(BatteryConfig(entries, workers=2))
        ids = [r.check_id for r in report.results]
        assert ids == sorted(ids)
        assert ids[0] == "000-boundary_flux-coth_ii"
        data = json.loads(verify.report_to_json(report))
        assert data["schema_version"] == 1
        assert data["counts"]["total"] == 6
        assert data["ok"] is True

    def test_filter(self):
        battery = verify.default_battery(include_simulation=False).only(check="boundary_flux")
        assert battery.entries and all(e.check == "boundary_flux" for e in battery.entries)
        families = verify.default_battery().only(family="meander_m")
        assert all(e.spec.family.value == "meander_m" for e in families.entries)

    def test_default_battery_coverage(self):
        battery = verify.default_battery()
        checks = {e.check for e in battery.entries}
        assert checks == set(verify.CHECKS)

    def test_bit_identical_reruns(self):
        entry = BatteryEntry("girsanov_mc", COTH, {"n": 2000, "bins": 10, "seed": 3})
        first = verify.run_battery(BatteryConfig([entry])).results[0]
        second = verify.run_battery(BatteryConfig([entry])).results[0]
        assert first.measured_defect == second.measured_defect
        assert not math.isnan(first.measured_defect)

    @pytest.mark.slow
    def test_default_battery_passes(self):
        report = verify.run_battery()
        assert report.ok, verify.report_table(report)
