"""Convergence sweeps, slope fitting, verdicts and derivative-bound checks."""

import json
import math

import numpy as np
import pytest

from chebmatfun.experiments import (BoundCheckConfig, ConvergenceReport, EstimationError, SEED_RULE,
                                    check_derivative_bounds, convergence_verdict, derivative_bound_violations,
                                    derive_seed, envelope, estimate_slope, experiment_coeffs, f3_test_spectrum,
                                    is_ordered, random_symmetric, run_block_structure_experiment, run_figure,
                                    run_jordan_eigenvalue_experiment, run_jordan_size_experiment,
                                    run_symmetric_experiment, spectrum_matrix)
from chebmatfun.jordan import DerivativeUnavailableError
from chebmatfun.scalar import BUILTINS, cheb_coeffs, f4


def _synthetic(N, e):
    N = np.asarray(N)
    return ConvergenceReport("syn", {"desc": "syn"}, N, np.zeros(N.size), np.asarray(e, dtype=float),
                             np.zeros(N.size), 1.0)


@pytest.fixture(scope="module")
def sizes():
    return run_jordan_size_experiment(f4, 0.7, (2, 3, 4), 600)


@pytest.fixture(scope="module")
def blocks():
    return run_block_structure_experiment(maxN=100)


class TestSlope:

    def test_inverse_square(self):
        N = np.arange(1, 200)
        assert estimate_slope((N, N ** -2.0), (10, 199)) == pytest.approx(-2.0, abs=1e-10)

    def test_constant_ignored(self):
        N = np.arange(1, 200)
        assert estimate_slope((N, 3.0 / N), (10, 199)) == pytest.approx(-1.0, abs=1e-10)

    def test_window_only(self):
        N = np.arange(1, 300)
        e = np.where(N < 100, 1.0, N ** -3.0)
        assert estimate_slope((N, e), (100, 299)) == pytest.approx(-3.0, abs=1e-10)

    def test_too_few_points(self):
        N = np.arange(1, 10)
        with pytest.raises(EstimationError):
            estimate_slope((N, 1.0 / N), (7, 9))

    def test_rounding_floor_excluded(self):
        N = np.arange(1, 400)
        e = np.maximum(N ** -4.0, 1e-16)
        rep = _synthetic(N, e)
        assert estimate_slope(rep, (10, 399)) == pytest.approx(-4.0, abs=1e-10)

    def test_f1_report_slope_recorded(self):
        rep = run_symmetric_experiment("f1", 10, 1, 400, window=(100, 400))
        assert rep.slope == pytest.approx(estimate_slope(rep, (100, 400)))
        assert rep.theoretical_slope == -2.0


class TestSymmetricExperiment:

    def test_random_symmetric_radius(self):
        A = random_symmetric(10, 4)
        lam = np.linalg.eigvalsh(A)
        np.testing.assert_allclose(A, A.T)
        assert np.max(np.abs(lam)) == pytest.approx(0.95, abs=1e-14)

    def test_f3_spectrum(self):
        lam = f3_test_spectrum(3)
        assert np.count_nonzero(np.abs(lam) > 0.5) == 7 and lam.size == 10
        np.testing.assert_allclose(np.linalg.eigvalsh(spectrum_matrix(lam, 3)), np.sort(lam), atol=1e-14)

    def test_f3_precision(self):
        s = derive_seed(0, 0)
        rep = run_symmetric_experiment("f3", 10, s, 100, spectrum=f3_test_spectrum(s))
        assert rep.relative_errors()[73] < 1e-13

    def test_normalisation_consistency(self):
        rep = run_symmetric_experiment("f2", 10, 5, 50)
        A = random_symmetric(10, 5)
        cond = np.linalg.norm(A, 2) * np.linalg.norm(np.linalg.inv(A), 2)
        np.testing.assert_allclose(rep.normalized_errors, rep.errors / cond, rtol=1e-12)

    def test_reports_serialise(self, tmp_path):
        rep = run_symmetric_experiment("f2", 10, 5, 30)
        assert rep.slope is None
        paths = rep.write(tmp_path, "fig1")
        assert [p.name for p in paths] == ["fig1__f2__goe10__5.csv", "fig1__f2__goe10__5.json"]
        header, first = paths[0].read_text().splitlines()[:2]
        assert header == "N,coeff_abs,error,normalized_error"
        assert first.startswith("0,")
        meta = json.loads(paths[1].read_text())
        assert meta["seed"] == 5 and len(meta["errors"]) == 31
        assert np.all(rep.errors >= 0) and np.all(np.diff(rep.N) > 0)

    def test_rerun_is_identical(self):
        a = run_symmetric_experiment("f1", 10, 2, 200)
        b = run_symmetric_experiment("f1", 10, 2, 200)
        assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()

    def test_order_validation(self):
        with pytest.raises(ValueError):
            run_symmetric_experiment("f1", 1, 0, 10)


class TestCoefficientEnvelope:

    @pytest.mark.parametrize("name", sorted(BUILTINS))
    def test_running_max_non_increasing(self, name):
        c = np.abs(experiment_coeffs(BUILTINS[name], 500).coeffs)
        env = envelope(c[10:])
        assert np.all(np.diff(env) <= 0)
        # the envelope must actually decay, not just stay flat
        assert env[-1] < 1e-2 * env[0]


class TestJordanExperiments:


    def test_rate_ordering(self, sizes):
        assert is_ordered(sizes[1], sizes[0], start=60)
        assert is_ordered(sizes[2], sizes[1], start=60)

    def test_calibrated_errors(self, sizes):
        # frozen after one calibration run at maxN = 600 (2000 in the acceptance suite)
        assert sizes[0].error_at(600) < 1e-8
        assert sizes[1].error_at(600) < 1e-5
        assert sizes[2].error_at(600) < 1e-3

    def test_kink_rejected(self):
        with pytest.raises(DerivativeUnavailableError):
            run_jordan_size_experiment(f4, 0.0, (2,), 50)

    def test_endpoint_errors_ranked(self):
        reps = run_jordan_eigenvalue_experiment(f4, (0.4, 0.7, 1.0), 3, 600)
        e = [r.error_at(600) for r in reps]
        assert e[0] <= e[1] * 10
        assert e[2] > 100 * e[1]
        assert not reps[2].verdict["converging"]

    def test_verdict_fields(self, sizes):
        v = sizes[0].verdict
        assert v["converging"] and v["absolutely_convergent"] and v["window"] == [60, 600]


class TestVerdict:

    def _report(self, errors, coeffs, terms):
        N = np.arange(len(errors))
        return ConvergenceReport("syn", {"desc": "syn"}, N, np.asarray(coeffs, float), np.asarray(errors, float),
                                 np.asarray(terms, float), 1.0)

    def test_converging(self):
        N = np.arange(1, 1001, dtype=float)
        rep = self._report(np.r_[1.0, N ** -2], np.r_[1.0, N ** -3], np.r_[1.0, N ** -3])
        assert convergence_verdict(rep)["converging"]

    def test_flat_error(self):
        N = np.arange(1, 1001, dtype=float)
        rep = self._report(np.r_[1.0, 0.1 + N ** -2], np.r_[1.0, N ** -3], np.r_[1.0, N ** -3])
        assert not convergence_verdict(rep)["converging"]

    def test_slowly_summable_terms(self):
        # error falls by more than 2x yet the terms decay like n^-1/2
        N = np.arange(1, 1001, dtype=float)
        rep = self._report(np.r_[1.0, N ** -0.5], np.r_[1.0, N ** -2], np.r_[1.0, N ** -0.5])
        v = convergence_verdict(rep)
        assert v["error_reduction"] > 2 and not v["absolutely_convergent"] and not v["converging"]

    def test_floor_counts_as_converged(self):
        N = np.arange(1, 1001, dtype=float)
        rep = self._report(np.r_[1.0, np.full(1000, 1e-14)], np.r_[1.0, np.zeros(1000)], np.r_[1.0, np.zeros(1000)])
        assert convergence_verdict(rep)["converging"]


class TestBlockStructure:


    def test_ordering(self, blocks):
        assert is_ordered(blocks["10"][0], blocks["5+5"][0])
        assert is_ordered(blocks["5+5"][0], blocks["2x5"][0])

    def test_duplication(self, blocks):
        for once, twice in blocks.values():
            assert np.max(np.abs(once.errors - twice.errors)) < 1e-13
            assert twice.matrix["spec"]["blocks"].__len__() == 2 * len(once.matrix["spec"]["blocks"])

    def test_fastest_decay(self, blocks):
        assert blocks["2x5"][0].error_at(60) < blocks["5+5"][0].error_at(60) < blocks["10"][0].error_at(60)


class TestDerivativeBounds:

    @pytest.mark.parametrize("delta", [0.1, 0.3, 0.5])
    def test_passes(self, delta):
        assert check_derivative_bounds(BoundCheckConfig(delta=delta))

    def test_nu(self):
        assert BoundCheckConfig(delta=0.3).nu == pytest.approx(1 / math.sqrt(2 * 0.3 * 0.7), rel=1e-15)
        assert BoundCheckConfig(delta=0.3).interval == pytest.approx((-0.7, 0.7))

    def test_order_zero(self):
        counts = derivative_bound_violations(BoundCheckConfig(max_order=0))
        assert counts == {"global": 0, "first_derivative": 0, "interior_two_term": 0, "interior": 0}

    def test_first_derivative_form(self):
        counts = derivative_bound_violations(BoundCheckConfig(max_order=1, delta=0.1))
        assert counts["first_derivative"] == 0

    def test_two_term_bound_holds_alone(self):
        # the slack term is not needed on this grid
        for delta in (0.1, 0.3, 0.5):
            assert derivative_bound_violations(BoundCheckConfig(delta=delta))["interior_two_term"] == 0

    def test_detects_false_bound(self):
        # an interval wider than I_delta makes the interior bound fail near the ends
        class Wide(BoundCheckConfig):
            @property
            def interval(self):
                return (-1.0, 1.0)

        assert derivative_bound_violations(Wide(delta=0.3))["interior"] > 0

    @pytest.mark.parametrize("delta", [0.0, 1.0])
    def test_invalid_delta(self, delta):
        with pytest.raises(ValueError):
            BoundCheckConfig(delta=delta)


class TestFigures:

    def test_unknown(self):
        with pytest.raises(KeyError):
            run_figure("fig9")

    def test_fig2_pass_and_write(self, tmp_path):
        res = run_figure("fig2", seed=3)
        assert res.passed and res.status_line() == "fig2: PASS"
        paths = res.write(tmp_path)
        assert (tmp_path / "fig2__summary.json") in paths
        summary = json.loads((tmp_path / "fig2__summary.json").read_text())
        assert summary["summary"]["nonzero_coeffs"] == 37

    def test_seed_rule(self):
        assert derive_seed(7, 0) == derive_seed(7, 0) != derive_seed(7, 1)
        assert "SeedSequence" in SEED_RULE

    def test_failure_line(self):
        res = run_figure("fig3a", max_degree=400)
        assert res.status_line().startswith("fig3a:")
