"""Scalar Chebyshev machinery on [-1, 1].

Coefficients follow the halved-first-term convention: ``coeffs[0]`` is stored
as the full inner product ``<f, T_0>`` and is halved only when the series is
evaluated, so that ``S_N(f)(x) = coeffs[0]/2 + sum_{n>=1} coeffs[n] T_n(x)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft
from scipy.special import erf

from chebmatfun._config import fft_workers

__all__ = [
    "ChebCoeffs",
    "ScalarFunction",
    "AliasingWarning",
    "BUILTINS",
    "get_builtin",
    "cheb_poly",
    "cheb_poly_derivative",
    "cheb_derivative_table",
    "cheb_derivative_at_one",
    "cheb_nodes",
    "dct2_naive",
    "dct2_fast",
    "cheb_coeffs",
    "default_samples",
    "eval_cheb_scalar",
    "eval_cheb_naive",
]


class AliasingWarning(UserWarning):
    """Coefficients moved when the sample count was doubled."""


def _check_domain(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("argument outside [-1, 1]")
    return x


# ---------------------------------------------------------------------------
# Scalar functions
# ---------------------------------------------------------------------------

DerivativeFn = Callable[[float, int], float]


@dataclass(frozen=True)
class ScalarFunction:
    """A real function on [-1, 1] with optional closed-form derivatives.

    ``derivative(x, j)`` returns the j-th derivative at a scalar ``x``; it is
    only trusted away from the points listed in ``kinks``.
    """

    label: str
    func: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[DerivativeFn] = None
    kinks: tuple = ()
    parity: Optional[str] = None  # "odd", "even" or None

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    @classmethod
    def from_polynomial(cls, monomial_coeffs: Sequence[float], label: str = "poly") -> "ScalarFunction":
        """Polynomial ``sum a_i x^i`` with exact derivatives of every order."""
        p = np.polynomial.Polynomial(np.asarray(monomial_coeffs, dtype=float))

        def deriv(x, j):
            return float(p.deriv(j)(x)) if j > 0 else float(p(x))

        return cls(label, lambda x: p(x), deriv)


def _abs_power_derivative(a: float) -> DerivativeFn:
    # d^j/dx^j |x|^a = a(a-1)...(a-j+1) |x|^(a-j) sign(x)^j, valid for x != 0
    def deriv(x, j):
        fall = 1.0
        for i in range(j):
            fall *= a - i
        return fall * abs(x) ** (a - j) * math.copysign(1.0, x) ** j

    return deriv


def _f1_derivative(x, j):
    s = math.copysign(1.0, x)
    if j == 0:
        return s * x * x
    if j == 1:
        return 2.0 * abs(x)
    if j == 2:
        return 2.0 * s
    return 0.0


def _rational_derivative(a: float) -> DerivativeFn:
    # 1/(x^2+a^2) = Im[1/(x - ia)] / a, so the j-th derivative is
    # Im[(-1)^j j! (x - ia)^(-j-1)] / a.
    def deriv(x, j):
        z = complex(x, -a) ** (-(j + 1))
        return ((-1) ** j) * math.factorial(j) * z.imag / a

    return deriv


f1 = ScalarFunction("f1", lambda x: np.sign(x) * x * x, _f1_derivative, kinks=(0.0,), parity="odd")
f2 = ScalarFunction("f2", lambda x: np.sqrt(np.abs(x)), _abs_power_derivative(0.5), kinks=(0.0,), parity="even")
f3 = ScalarFunction("f3", lambda x: 1.0 / (x * x + 0.25), _rational_derivative(0.5), parity="even")
f4 = ScalarFunction("f4", lambda x: np.abs(x) ** 3.5, _abs_power_derivative(3.5), kinks=(0.0,), parity="even")

BUILTINS = {"f1": f1, "f2": f2, "f3": f3, "f4": f4}


def get_builtin(name: str) -> ScalarFunction:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown function {name!r}; choose from {sorted(BUILTINS)}") from None


# ---------------------------------------------------------------------------
# Chebyshev polynomials and their derivatives
# ---------------------------------------------------------------------------

def cheb_poly(n: int, x):
    """T_n(x) by the three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x = _check_domain(x)
    t0 = np.ones_like(x)
    if n == 0:
        return t0 if t0.ndim else float(t0)
    t1 = x.copy()
    for _ in range(n - 1):
        t0, t1 = t1, 2.0 * x * t1 - t0
    return t1 if t1.ndim else float(t1)


def cheb_derivative_table(nmax: int, kmax: int, x) -> np.ndarray:
    """Table ``D[n, k] = T_n^(k)(x)`` for 0 <= n <= nmax, 0 <= k <= kmax.

    Uses the k-fold derivative of the three-term recurrence,
    ``T_n^(k) = 2x T_{n-1}^(k) + 2k T_{n-1}^(k-1) - T_{n-2}^(k)``.
    Trailing axes follow the shape of ``x``.
    """
    x = _check_domain(x)
    D = np.zeros((nmax + 1, kmax + 1) + x.shape)
    D[0, 0] = 1.0
    if nmax >= 1:
        D[1, 0] = x
        if kmax >= 1:
            D[1, 1] = 1.0
    for n in range(2, nmax + 1):
        D[n] = 2.0 * x * D[n - 1] - D[n - 2]
        D[n, 1:] += 2.0 * np.arange(1, kmax + 1).reshape((-1,) + (1,) * x.ndim) * D[n - 1, :-1]
    return D


def cheb_poly_derivative(n: int, k: int, x):
    """k-th derivative of T_n at x (zero when k > n)."""
    if n < 0 or k < 0:
        raise ValueError("degree and derivative order must be nonnegative")
    x = _check_domain(x)
    if k > n:
        return np.zeros_like(x) if x.ndim else 0.0
    val = cheb_derivative_table(n, k, x)[n, k]
    return val if np.ndim(val) else float(val)


def cheb_derivative_at_one(n: int, k: int) -> float:
    """T_n^(k)(1) = prod_{i<k} (n^2 - i^2) / (2i + 1)."""
    val = 1.0
    for i in range(k):
        val *= (n * n - i * i) / (2 * i + 1)
    return val


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChebCoeffs:
    """Chebyshev coefficients alpha_0..alpha_N with alpha_0 stored un-halved."""

    coeffs: np.ndarray
    samples: int = field(default=0)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0:
            raise ValueError("need at least one coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if self.samples and self.samples < c.size:
            raise ValueError("sample count must be at least N+1")

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __len__(self):
        return self.coeffs.size

    def truncate(self, N: int) -> "ChebCoeffs":
        if N < 0 or N > self.degree:
            raise ValueError(f"cannot truncate degree {self.degree} series to {N}")
        return ChebCoeffs(self.coeffs[: N + 1], self.samples)

    def value_at_one(self) -> float:
        return 0.5 * self.coeffs[0] + float(np.sum(self.coeffs[1:]))

    def to_json(self) -> str:
        return json.dumps({"degree": self.degree, "samples": self.samples,
                           "coeffs": [float(v) for v in self.coeffs]})

    @classmethod
    def from_json(cls, text: str) -> "ChebCoeffs":
        d = json.loads(text)
        c = cls(np.array(d["coeffs"], dtype=float), int(d.get("samples", 0)))
        if "degree" in d and d["degree"] != c.degree:
            raise ValueError("degree field disagrees with coefficient count")
        return c

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(self.coeffs):
            w.writerow([i, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, samples: int = 0) -> "ChebCoeffs":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        vals = np.zeros(len(rows))
        for i, v in rows:
            vals[int(i)] = float(v)
        return cls(vals, samples)


def cheb_nodes(M: int) -> np.ndarray:
    """Chebyshev points of the first kind, x_j = cos(pi (j + 1/2) / M)."""
    j = np.arange(M)
    return np.cos(np.pi * (j + 0.5) / M)


def dct2_naive(values: np.ndarray) -> np.ndarray:
    """y_n = sum_j v_j cos(pi n (j + 1/2) / M), O(M^2)."""
    v = np.asarray(values, dtype=float)
    M = v.shape[0]
    n = np.arange(M)[:, None]
    j = np.arange(M)[None, :]
    return np.cos(np.pi * n * (j + 0.5) / M) @ v


def dct2_fast(values: np.ndarray) -> np.ndarray:
    """Same transform as :func:`dct2_naive` in O(M log M)."""
    # scipy's unnormalized type-II DCT carries an extra factor of 2
    return 0.5 * scipy.fft.dct(np.asarray(values, dtype=float), type=2, axis=0, workers=fft_workers())


def default_samples(N: int) -> int:
    return max(2 * (N + 1), 512)


def cheb_coeffs(f: Callable, N: int, M: Optional[int] = None, *, method: str = "fast",
                check_aliasing: bool = False) -> ChebCoeffs:
    """Chebyshev coefficients of ``f`` up to degree ``N``.

    Samples ``f`` at ``M`` first-kind Chebyshev points and applies the
    discrete orthogonality relation, which is the Gauss-Chebyshev rule for the
    weighted inner product. Exact for polynomials of degree below ``2M - N``.

    Parameters
    ----------
    f
        Vectorised callable on [-1, 1] (a :class:`ScalarFunction` or plain function).
    N
        Truncation degree.
    M
        Number of samples, default ``max(2(N+1), 512)``.
    method
        ``"fast"`` (FFT-based) or ``"naive"`` (explicit cosine sums).
    check_aliasing
        Recompute at ``2M`` samples and emit :class:`AliasingWarning` if any
        coefficient moves by more than 1e-10.
    """
    if N < 0:
        raise ValueError("degree must be nonnegative")
    M = default_samples(N) if M is None else int(M)
    if M < N + 1:
        raise ValueError(f"sample count M={M} must be at least N+1={N + 1}")
    vals = np.asarray(f(cheb_nodes(M)), dtype=float)
    if vals.shape != (M,):
        vals = np.broadcast_to(vals, (M,)).astype(float)
    if method == "fast":
        y = dct2_fast(vals)
    elif method == "naive":
        y = dct2_naive(vals)
    else:
        raise ValueError(f"unknown method {method!r}")
    c = ChebCoeffs((2.0 / M) * y[: N + 1], M)
    if check_aliasing:
        fine = cheb_coeffs(f, N, 2 * M, method=method)
        drift = float(np.max(np.abs(fine.coeffs - c.coeffs)))
        if drift > 1e-10:
            warnings.warn(f"coefficients moved by {drift:.3e} when doubling M={M}", AliasingWarning,
                          stacklevel=2)
    return c


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_cheb_scalar(c: ChebCoeffs, x):
    """Evaluate the truncated series at ``x`` by Clenshaw's recurrence."""
    x = _check_domain(x)
    a = c.coeffs
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for n in range(a.size - 1, 0, -1):
        b1, b2 = 2.0 * x * b1 - b2 + a[n], b1
    out = x * b1 - b2 + 0.5 * a[0]
    return out if out.ndim else float(out)


def eval_cheb_naive(c: ChebCoeffs, x):
    """Direct sum of ``alpha_n T_n(x)``, for cross-checking."""
    x = _check_domain(x)
    total = 0.5 * c.coeffs[0] * np.ones_like(x)
    for n in range(1, c.coeffs.size):
        total = total + c.coeffs[n] * cheb_poly(n, x)
    return total if np.ndim(total) else float(total)


def erf_filter_function(center: float, half_width: float, steepness: float) -> ScalarFunction:
    """Smoothed indicator of ``[center - half_width, center + half_width]``.

    ``0.5 (1 - erf((2/r)(|x - c| - R)))``; derivatives are closed form away
    from ``x = c`` via Hermite polynomials.
    """
    c, R, r = float(center), float(half_width), float(steepness)
    if R <= 0 or r <= 0:
        raise ValueError("half_width and steepness must be positive")
    s = 2.0 / r

    def func(x):
        return 0.5 * (1.0 - erf(s * (np.abs(x - c) - R)))

    def deriv(x, j):
        if j == 0:
            return float(func(np.asarray(x)))
        y = s * (abs(x - c) - R)
        sigma = math.copysign(1.0, x - c)
        h = np.polynomial.hermite.hermval(y, [0] * (j - 1) + [1])
        # d^{j-1}/du^{j-1} exp(-s^2 u^2) = (-s)^{j-1} H_{j-1}(s u) exp(-(s u)^2)
        return sigma ** j * (-s / math.sqrt(math.pi)) * (-s) ** (j - 1) * h * math.exp(-y * y)

    return ScalarFunction(f"erf(c={c},R={R},r={r})", func, deriv, kinks=(c,))
