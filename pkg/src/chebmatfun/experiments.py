"""Convergence experiments for truncated matrix Chebyshev expansions.

Every experiment sweeps N = 0..maxN with one forward recurrence, recording
the spectral-norm error ``||S_N(f)(A) - f(A)||`` against an independent
ground truth (orthogonal diagonalisation or the Jordan-form formula) and the
term norms ``|alpha_n| ||T_n(A)||``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from chebmatfun.jordan import (JordanBlock, JordanSpec, build_jordan_matrix, f_of_matrix_via_jordan,
                               random_orthogonal)
from chebmatfun.matrix import partial_sums
from chebmatfun.scalar import (ChebCoeffs, ScalarFunction, cheb_coeffs, cheb_derivative_at_one,
                               cheb_derivative_table, default_samples, f3, f4, get_builtin)

log = logging.getLogger(__name__)

__all__ = [
    "ConvergenceReport",
    "BoundCheckConfig",
    "EstimationError",
    "THEORETICAL_SLOPES",
    "SYMMETRIC_WINDOW",
    "random_symmetric",
    "spectrum_matrix",
    "f3_test_spectrum",
    "experiment_coeffs",
    "sweep",
    "run_symmetric_experiment",
    "run_jordan_experiment",
    "run_jordan_size_experiment",
    "run_jordan_eigenvalue_experiment",
    "run_block_structure_experiment",
    "estimate_slope",
    "envelope",
    "convergence_verdict",
    "is_ordered",
    "derivative_bound_violations",
    "check_derivative_bounds",
    "FigureResult",
    "FIGURES",
    "derive_seed",
    "run_figure",
]

EPS = np.finfo(float).eps
THEORETICAL_SLOPES = {"f1": -2.0, "f2": -1.0, "f3": None, "f4": None}
SYMMETRIC_WINDOW = (100, 2000)


class EstimationError(ValueError):
    """Too few usable points to fit a slope."""


@dataclass
class ConvergenceReport:
    label: str
    matrix: dict
    N: np.ndarray
    coeff_abs: np.ndarray
    errors: np.ndarray
    term_norms: np.ndarray
    scale: float
    normalized_errors: Optional[np.ndarray] = None
    condition: Optional[float] = None
    window: tuple = (1, None)
    slope: Optional[float] = None
    theoretical_slope: Optional[float] = None
    seed: Optional[int] = None
    verdict: dict = field(default_factory=dict)

    @property
    def max_degree(self) -> int:
        return int(self.N[-1])

    def error_at(self, N: int) -> float:
        return float(self.errors[N])

    def relative_errors(self) -> np.ndarray:
        return self.errors / self.scale

    def file_stem(self, experiment: str) -> str:
        desc = self.matrix.get("desc", "matrix")
        return f"{experiment}__{self.label}__{desc}__{self.seed if self.seed is not None else 'none'}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "coeff_abs", "error", "normalized_error"])
        norm = self.normalized_errors if self.normalized_errors is not None else self.errors * np.nan
        for n, a, e, ne in zip(self.N, self.coeff_abs, self.errors, norm):
            w.writerow([int(n), repr(float(a)), repr(float(e)), repr(float(ne))])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "label": self.label,
            "matrix": self.matrix,
            "seed": self.seed,
            "max_degree": self.max_degree,
            "window": list(self.window),
            "slope": self.slope,
            "theoretical_slope": self.theoretical_slope,
            "scale": self.scale,
            "condition": self.condition,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        meta = self.metadata()
        meta["errors"] = [float(e) for e in self.errors]
        meta["coeff_abs"] = [float(a) for a in self.coeff_abs]
        if self.normalized_errors is not None:
            meta["normalized_errors"] = [float(e) for e in self.normalized_errors]
        return json.dumps(meta, indent=1)

    def write(self, out_dir, experiment: str) -> list:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = self.file_stem(experiment)
        paths = [out_dir / f"{stem}.csv", out_dir / f"{stem}.json"]
        paths[0].write_text(self.to_csv())
        paths[1].write_text(self.to_json())
        return paths


# ---------------------------------------------------------------------------
# Test matrices
# ---------------------------------------------------------------------------

def random_symmetric(k: int, seed, radius: float = 0.95) -> np.ndarray:
    """Symmetrised Gaussian matrix with spectrum mapped affinely onto [-radius, radius]."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((k, k))
    S = 0.5 * (G + G.T)
    lam = np.linalg.eigvalsh(S)
    lo, hi = lam[0], lam[-1]
    return radius * (2.0 * S - (hi + lo) * np.eye(k)) / (hi - lo)


def spectrum_matrix(eigenvalues, seed) -> np.ndarray:
    """``Q diag(eigenvalues) Q^T`` for a seeded random orthogonal Q."""
    lam = np.asarray(eigenvalues, dtype=float)
    Q = random_orthogonal(lam.size, seed)
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


def f3_test_spectrum(seed, k: int = 10, n_large: int = 7) -> np.ndarray:
    """Spectrum with ``n_large`` magnitudes in (0.5, 0.95) and the rest in (0.05, 0.45)."""
    rng = np.random.default_rng(seed)
    mags = np.concatenate([rng.uniform(0.55, 0.95, n_large), rng.uniform(0.05, 0.45, k - n_large)])
    return np.sort(mags * rng.choice([-1.0, 1.0], k))


def experiment_coeffs(f, maxN: int, samples: Optional[int] = None) -> ChebCoeffs:
    """Coefficients for an N-sweep; oversampled 16x so aliasing stays far below truncation error."""
    M = samples or max(default_samples(maxN), 16 * (maxN + 1))
    return cheb_coeffs(f, maxN, M)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def sweep(coeffs: ChebCoeffs, A, F) -> tuple:
    """Spectral-norm errors of S_0..S_N against ``F`` and the term norms."""
    N = coeffs.degree
    errors = np.empty(N + 1)
    terms = np.empty(N + 1)
    a = coeffs.coeffs
    for n, (S, T) in enumerate(partial_sums(coeffs, A, with_terms=True)):
        errors[n] = np.linalg.norm(S - F, 2)
        w = 0.5 * abs(a[0]) if n == 0 else abs(a[n])
        terms[n] = w * np.linalg.norm(T, 2) if w else 0.0
    return errors, terms


def _report(label, desc, coeffs, A, F, seed=None, window=(1, None), theoretical=None,
            normalize=False, condition=None) -> ConvergenceReport:
    errors, terms = sweep(coeffs, A, F)
    rep = ConvergenceReport(
        label=label, matrix=desc, N=np.arange(coeffs.degree + 1), coeff_abs=np.abs(coeffs.coeffs),
        errors=errors, term_norms=terms, scale=float(np.linalg.norm(F, 2)), seed=seed,
        window=window, theoretical_slope=theoretical, condition=condition)
    if normalize:
        rep.normalized_errors = errors / condition
    return rep


def run_symmetric_experiment(f="f1", k: int = 10, seed: int = 0, maxN: Optional[int] = None,
                             spectrum: Optional[Sequence[float]] = None, window=None) -> ConvergenceReport:
    """Truncation errors on a seeded random symmetric matrix.

    Ground truth is ``Q f(Lambda) Q^T`` from ``eigh``. Errors are normalised by
    the 2-norm condition number ``||A|| ||A^{-1}||``.
    """
    f = get_builtin(f) if isinstance(f, str) else f
    if k < 2:
        raise ValueError("order must be at least 2")
    label = f.label
    if maxN is None:
        maxN = 100 if label == "f3" else 2000
    if spectrum is None:
        A = random_symmetric(k, seed)
        desc = {"desc": f"goe{k}", "kind": "random-symmetric", "order": k, "radius": 0.95}
    else:
        A = spectrum_matrix(spectrum, seed)
        desc = {"desc": f"spec{len(spectrum)}", "kind": "prescribed-spectrum", "order": len(spectrum),
                "spectrum": [float(v) for v in spectrum]}
    lam, Q = np.linalg.eigh(A)
    F = (Q * f(lam)) @ Q.T
    cond = float(np.max(np.abs(lam)) / np.min(np.abs(lam)))
    if window is None:
        window = SYMMETRIC_WINDOW if label in ("f1", "f2") else (1, maxN)
    coeffs = experiment_coeffs(f, maxN)
    rep = _report(label, desc, coeffs, A, F, seed, tuple(window), THEORETICAL_SLOPES.get(label),
                  normalize=True, condition=cond)
    if label in ("f1", "f2"):
        try:
            rep.slope = estimate_slope(rep, window)
        except EstimationError as exc:
            log.warning("no slope for %s: %s", label, exc)
    return rep


def run_jordan_experiment(f: ScalarFunction, spec: JordanSpec, maxN: int, desc: Optional[str] = None,
                          window=None, coeffs: Optional[ChebCoeffs] = None) -> ConvergenceReport:
    A = build_jordan_matrix(spec)
    F = f_of_matrix_via_jordan(f, spec)
    if coeffs is None:
        coeffs = experiment_coeffs(f, maxN)
    blocks = "+".join(f"{b.size}@{b.eigenvalue:g}" for b in spec.blocks)
    meta = {"desc": desc or f"jordan[{blocks}]", "kind": "jordan", "spec": json.loads(spec.to_json())}
    rep = _report(f.label, meta, coeffs.truncate(maxN), A, F, window=window or (max(1, maxN // 10), maxN))
    rep.verdict = convergence_verdict(rep)
    return rep


def run_jordan_size_experiment(f: ScalarFunction = f4, lam: float = 0.7, sizes=(2, 3, 4),
                               maxN: int = 2000) -> list:
    """One report per Jordan block size, unit superdiagonal."""
    coeffs = experiment_coeffs(f, maxN)
    return [run_jordan_experiment(f, JordanSpec([JordanBlock(lam, m)]), maxN, f"block{m}@{lam:g}",
                                  coeffs=coeffs) for m in sizes]


def run_jordan_eigenvalue_experiment(f: ScalarFunction = f4, eigenvalues=(0.4, 0.7, 1.0), size: int = 3,
                                     maxN: int = 2000) -> list:
    """One report per eigenvalue for a fixed block size."""
    coeffs = experiment_coeffs(f, maxN)
    return [run_jordan_experiment(f, JordanSpec([JordanBlock(lam, size)]), maxN, f"block{size}@{lam:g}",
                                  coeffs=coeffs) for lam in eigenvalues]


BLOCK_LAYOUTS = {"10": [10], "5+5": [5, 5], "2x5": [2] * 5}


def run_block_structure_experiment(f: ScalarFunction = f3, maxN: int = 150, eigenvalue: float = 0.5,
                                   offdiag: float = 0.5) -> dict:
    """Order-10 block layouts and their order-20 duplicates, keyed by layout name.

    Returns ``{"10": (once, twice), "5+5": (...), "2x5": (...)}``.
    """
    coeffs = experiment_coeffs(f, maxN)
    out = {}
    for name, sizes in BLOCK_LAYOUTS.items():
        spec = JordanSpec([JordanBlock(eigenvalue, s, offdiag) for s in sizes])
        once = run_jordan_experiment(f, spec, maxN, f"blocks{name}", window=(20, maxN), coeffs=coeffs)
        twice = run_jordan_experiment(f, spec.replicated(2), maxN, f"blocks{name}x2", window=(20, maxN),
                                      coeffs=coeffs)
        out[name] = (once, twice)
    return out


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------

def estimate_slope(report, window=None) -> float:
    """Least-squares slope of log e_N against log N inside ``window``.

    ``report`` is a :class:`ConvergenceReport` or an ``(N, errors)`` pair.
    Points below 100 eps relative error are dropped as rounding floor.
    """
    if isinstance(report, ConvergenceReport):
        N, e = report.N, report.normalized_errors if report.normalized_errors is not None else report.errors
        floor = 100 * EPS * (report.scale / (report.condition or 1.0)
                             if report.normalized_errors is not None else report.scale)
        window = window or report.window
    else:
        N, e = (np.asarray(v, dtype=float) for v in report)
        floor = 0.0
    lo, hi = window if window is not None else (N[0], N[-1])
    hi = N[-1] if hi is None else hi
    mask = (N >= lo) & (N <= hi) & (N > 0) & (e > floor) & (e > 0)
    if np.count_nonzero(mask) < 5:
        raise EstimationError(f"only {np.count_nonzero(mask)} usable points in window {window}")
    return float(np.polyfit(np.log(N[mask]), np.log(e[mask]), 1)[0])


def envelope(values) -> np.ndarray:
    """Right running maximum: ``env[n] = max(values[n:])``."""
    v = np.asarray(values, dtype=float)
    return np.maximum.accumulate(v[::-1])[::-1]


def convergence_verdict(report: ConvergenceReport, decay_factor: float = 2.0) -> dict:
    """Judge convergence over the final decade of N.

    Two tests, both required:

    * the error envelope falls by ``decay_factor`` from N/10 to the last 10%
      of the sweep (or ends at the rounding floor);
    * the expansion is absolutely convergent: the envelope of
      ``|alpha_n| ||T_n(A)||`` decays faster than 1/n. Coefficients below
      10 eps of the largest are treated as zero.
    """
    N = report.N
    n_end = int(N[-1])
    n_start = max(1, n_end // 10)
    env = envelope(report.errors)
    head = float(env[n_start])
    tail = float(env[int(0.9 * n_end)])
    floor = 1e4 * EPS * max(report.scale, 1.0)
    reduction = head / tail if tail > 0 else math.inf
    decays = reduction >= decay_factor or tail <= floor

    coeff_floor = 10 * EPS * float(np.max(report.coeff_abs))
    live = (N >= n_start) & (report.coeff_abs > coeff_floor)
    if np.count_nonzero(live) < 5:
        term_slope = -math.inf
    else:
        tenv = envelope(np.where(report.coeff_abs > coeff_floor, report.term_norms, 0.0))
        term_slope = float(np.polyfit(np.log(N[live]), np.log(tenv[live]), 1)[0])
    absolute = term_slope < -1.0
    return {
        "window": [n_start, n_end],
        "error_reduction": reduction,
        "reached_floor": bool(tail <= floor),
        "term_slope": term_slope,
        "absolutely_convergent": bool(absolute),
        "converging": bool(decays and absolute),
    }


def is_ordered(upper: ConvergenceReport, lower: ConvergenceReport, start: int = 20,
               slack: float = 1e-12) -> bool:
    """``upper.errors[N] >= lower.errors[N] - slack`` for every N >= start."""
    n = min(upper.errors.size, lower.errors.size)
    return bool(np.all(upper.errors[start:n] >= lower.errors[start:n] - slack))


# ---------------------------------------------------------------------------
# Derivative bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheckConfig:
    delta: float = 0.3
    max_degree: int = 40
    max_order: int = 4
    grid: int = 200
    slack: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def nu(self) -> float:
        return 1.0 / math.sqrt(2.0 * self.delta * (1.0 - self.delta))

    @property
    def interval(self) -> tuple:
        return (-1.0 + self.delta, 1.0 - self.delta)


def derivative_bound_violations(cfg: BoundCheckConfig) -> dict:
    """Count grid violations of each derivative bound.

    ``global``: ``|T_n^(k)(x)| <= T_n^(k)(1)`` on all of [-1, 1].
    ``first_derivative``: ``|T_n'(x)| sqrt(1 - x^2) <= n``.
    ``interior_two_term``: ``nu^k n^k + k(k-1)/2 nu^(k+1) n^(k-1)`` on the
    shrunken interval, with no third-order allowance.
    ``interior``: the same plus ``slack k^3 nu^(k+2) n^(k-2)``.
    """
    nmax, kmax = cfg.max_degree, cfg.max_order
    x_all = np.linspace(-1.0, 1.0, cfg.grid)
    x_in = np.linspace(*cfg.interval, cfg.grid)
    D_all = cheb_derivative_table(nmax, kmax, x_all)
    D_in = cheb_derivative_table(nmax, kmax, x_in)
    nu = cfg.nu
    counts = {"global": 0, "first_derivative": 0, "interior_two_term": 0, "interior": 0}
    for n in range(nmax + 1):
        for k in range(kmax + 1):
            top = abs(cheb_derivative_at_one(n, k)) if k <= n else 0.0
            counts["global"] += int(np.count_nonzero(np.abs(D_all[n, k]) > top * (1 + 1e-12) + 1e-9))
            if k == 1:
                lhs = np.abs(D_all[n, 1]) * np.sqrt(1.0 - x_all ** 2)
                counts["first_derivative"] += int(np.count_nonzero(lhs > n * (1 + 1e-12)))
            if k == 0:
                two = np.ones_like(x_in)
                third = 0.0
            else:
                two = nu ** k * n ** k + 0.5 * k * (k - 1) * nu ** (k + 1) * n ** (k - 1)
                third = cfg.slack * k ** 3 * nu ** (k + 2) * float(n) ** max(k - 2, 0)
            v = np.abs(D_in[n, k])
            counts["interior_two_term"] += int(np.count_nonzero(v > two * (1 + 1e-12) + 1e-12))
            counts["interior"] += int(np.count_nonzero(v > (two + third) * (1 + 1e-12) + 1e-12))
    return counts


def check_derivative_bounds(cfg: BoundCheckConfig = BoundCheckConfig()) -> bool:
    c = derivative_bound_violations(cfg)
    return c["global"] == 0 and c["first_derivative"] == 0 and c["interior"] == 0


# ---------------------------------------------------------------------------
# Figure reproductions
# ---------------------------------------------------------------------------

F1_SLOPE_RANGE = (-2.4, -1.6)
F2_SLOPE_RANGE = (-1.35, -0.7)
F3_DEGREE = 73
F3_REL_TOL = 1e-12
DUPLICATION_TOL = 1e-13
FIGURES = ("fig1", "fig2", "fig3a", "fig3b", "fig4")


def derive_seed(seed: int, index: int) -> int:
    """Sub-seed ``index`` of ``seed`` (``SeedSequence(seed, spawn_key=(index,))``)."""
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


SEED_RULE = "sub-seed i = SeedSequence(seed, spawn_key=(i,)).generate_state(1)[0]"


@dataclass
class FigureResult:
    name: str
    reports: list
    checks: dict
    summary: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def status_line(self) -> str:
        failed = [k for k, v in self.checks.items() if not v]
        return f"{self.name}: {'PASS' if not failed else 'FAIL'}" + (f" ({', '.join(failed)})" if failed else "")

    def write(self, out_dir) -> list:
        paths = []
        for rep in self.reports:
            paths += rep.write(out_dir, self.name)
        p = Path(out_dir) / f"{self.name}__summary.json"
        p.write_text(json.dumps({"figure": self.name, "checks": self.checks, "summary": self.summary},
                                indent=2, default=float))
        return paths + [p]


def _within(value, bounds) -> bool:
    return value is not None and bounds[0] <= value <= bounds[1]


def run_figure(name: str, seed: int = 0, max_degree: Optional[int] = None) -> FigureResult:
    """Run one of the named figure experiments and its acceptance checks."""
    if name == "fig1":
        s = derive_seed(seed, 0)
        reps = [run_symmetric_experiment(f, 10, s, max_degree or 2000) for f in ("f1", "f2")]
        checks = {"f1_slope": _within(reps[0].slope, F1_SLOPE_RANGE),
                  "f2_slope": _within(reps[1].slope, F2_SLOPE_RANGE)}
        summary = {"matrix_seed": s, "slopes": {r.label: r.slope for r in reps},
                   "theoretical": {r.label: r.theoretical_slope for r in reps},
                   "window": list(SYMMETRIC_WINDOW)}
        return FigureResult(name, reps, checks, summary)
    if name == "fig2":
        s = derive_seed(seed, 0)
        spectrum = f3_test_spectrum(s)
        rep = run_symmetric_experiment("f3", 10, s, max(max_degree or 100, F3_DEGREE), spectrum=spectrum)
        rel = float(rep.relative_errors()[F3_DEGREE])
        nonzero = int(np.count_nonzero(rep.coeff_abs[: F3_DEGREE + 1] > 1e-15))
        checks = {"relative_error_73": rel < F3_REL_TOL, "nonzero_coeffs_37": nonzero == 37}
        summary = {"matrix_seed": s, "relative_error_73": rel, "nonzero_coeffs": nonzero,
                   "eigenvalues_above_half": int(np.count_nonzero(np.abs(spectrum) > 0.5))}
        return FigureResult(name, [rep], checks, summary)
    if name == "fig3a":
        reps = run_jordan_size_experiment(f4, 0.7, (2, 3, 4), max_degree or 2000)
        v = [r.verdict["converging"] for r in reps]
        checks = {"m2_converges": v[0], "m3_converges": v[1], "m4_not_converging": not v[2]}
        summary = {r.matrix["desc"]: r.verdict for r in reps}
        return FigureResult(name, reps, checks, summary)
    if name == "fig3b":
        reps = run_jordan_eigenvalue_experiment(f4, (0.4, 0.7, 1.0), 3, max_degree or 2000)
        v = [r.verdict["converging"] for r in reps]
        checks = {"lambda0.4_converges": v[0], "lambda0.7_converges": v[1], "lambda1_not_converging": not v[2]}
        summary = {r.matrix["desc"]: r.verdict for r in reps}
        return FigureResult(name, reps, checks, summary)
    if name == "fig4":
        res = run_block_structure_experiment(f3, max_degree or 150)
        once = {k: v[0] for k, v in res.items()}
        dup = {k: float(np.max(np.abs(v[0].errors - v[1].errors))) for k, v in res.items()}
        checks = {"10_ge_5+5": is_ordered(once["10"], once["5+5"]),
                  "5+5_ge_2x5": is_ordered(once["5+5"], once["2x5"]),
                  "duplication_identical": max(dup.values()) < DUPLICATION_TOL}
        summary = {"duplication_max_diff": dup,
                   "errors_at_N": {k: {str(n): float(r.errors[n]) for n in (20, 50, 100)
                                       if n < r.errors.size} for k, r in once.items()}}
        reps = [r for pair in res.values() for r in pair]
        return FigureResult(name, reps, checks, summary)
    raise KeyError(f"unknown experiment {name!r}; choose from {', '.join(FIGURES)}")
