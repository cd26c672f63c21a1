"""Truncated matrix Chebyshev expansions for dense matrices and operators.

Clenshaw's backward recurrence carries over to matrices unchanged because
every intermediate quantity is a polynomial in ``A`` and therefore commutes
with ``A``::

    b_{N+1} = b_{N+2} = 0
    b_n = 2 A b_{n+1} - b_{n+2} + alpha_n I,     n = N, ..., 1
    S_N(f)(A) = A b_1 - b_2 + alpha_0 / 2 I

The recursion multiplies by ``A`` itself and runs down to ``n = 1``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Tuple

import numpy as np

from chebmatfun.scalar import ChebCoeffs, ScalarFunction

__all__ = [
    "LinearOperator",
    "DenseOperator",
    "DiagonalOperator",
    "ScaledOperator",
    "SpectralScaling",
    "as_square_matrix",
    "clenshaw_matrix",
    "clenshaw_apply",
    "direct_sum_matrix",
    "partial_sums",
    "rescale_function_and_operator",
    "matrix_error",
    "save_matrix_text",
    "load_matrix_text",
    "save_matrix_binary",
    "load_matrix_binary",
    "load_matrix",
]


def as_square_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

class LinearOperator:
    """A real linear map on R^k, seen only through its action on blocks.

    Subclasses implement :meth:`_apply` for a ``k x b`` block. ``spectral_bounds``
    is an optional interval certified to contain every eigenvalue.
    """

    def __init__(self, dim: int, spectral_bounds: Optional[Tuple[float, float]] = None):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        self.spectral_bounds = spectral_bounds

    def _apply(self, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=float)
        vec = V.ndim == 1
        if vec:
            V = V[:, None]
        if V.ndim != 2 or V.shape[0] != self.dim:
            raise ValueError(f"block of shape {V.shape} does not match operator dimension {self.dim}")
        out = self._apply(V)
        return out[:, 0] if vec else out

    __matmul__ = apply

    def to_dense(self) -> np.ndarray:
        return self.apply(np.eye(self.dim))


class DenseOperator(LinearOperator):
    def __init__(self, A, spectral_bounds=None):
        self.A = as_square_matrix(A)
        super().__init__(self.A.shape[0], spectral_bounds)

    def _apply(self, V):
        return self.A @ V


class DiagonalOperator(LinearOperator):
    def __init__(self, diagonal, spectral_bounds=None):
        self.diagonal = np.asarray(diagonal, dtype=float).ravel()
        if spectral_bounds is None:
            spectral_bounds = (float(self.diagonal.min()), float(self.diagonal.max()))
        super().__init__(self.diagonal.size, spectral_bounds)

    def _apply(self, V):
        return self.diagonal[:, None] * V


class FunctionOperator(LinearOperator):
    """Wrap a plain callable acting on ``k x b`` blocks."""

    def __init__(self, dim: int, func: Callable[[np.ndarray], np.ndarray], spectral_bounds=None):
        super().__init__(dim, spectral_bounds)
        self._func = func

    def _apply(self, V):
        return np.asarray(self._func(V), dtype=float)


@dataclass(frozen=True)
class SpectralScaling:
    """Affine map taking [lo, hi] onto [-1, 1]: B = (2A - (hi + lo) I) / (hi - lo)."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def scale(self) -> float:
        return 2.0 / (self.hi - self.lo)

    @property
    def shift(self) -> float:
        return (self.hi + self.lo) / (self.hi - self.lo)

    def to_unit(self, x):
        return self.scale * np.asarray(x, dtype=float) - self.shift

    def from_unit(self, y):
        return ((self.hi - self.lo) * np.asarray(y, dtype=float) + self.hi + self.lo) / 2.0

    def matrix(self, A) -> np.ndarray:
        A = as_square_matrix(A)
        return self.scale * A - self.shift * np.eye(A.shape[0])

    def operator(self, op: LinearOperator) -> "ScaledOperator":
        return ScaledOperator(op, self)


class ScaledOperator(LinearOperator):
    def __init__(self, op: LinearOperator, scaling: SpectralScaling):
        super().__init__(op.dim, (-1.0, 1.0))
        self.inner = op
        self.scaling = scaling

    def _apply(self, V):
        return self.scaling.scale * self.inner.apply(V) - self.scaling.shift * V


def rescale_function_and_operator(f: Callable, lo: float, hi: float):
    """Move ``f`` from [lo, hi] to [-1, 1].

    Returns ``(g, scaling)`` with ``g(y) = f(((hi - lo) y + hi + lo) / 2)`` and
    the :class:`SpectralScaling` that maps ``A`` to ``B``, so that ``g(B) = f(A)``.
    """
    scaling = SpectralScaling(float(lo), float(hi))
    label = getattr(f, "label", "f")

    def g(y):
        return f(scaling.from_unit(y))

    deriv = None
    base = getattr(f, "derivative", None)
    if base is not None:
        factor = (hi - lo) / 2.0

        def deriv(y, j):
            return base(float(scaling.from_unit(y)), j) * factor ** j

    kinks = tuple(float(scaling.to_unit(k)) for k in getattr(f, "kinks", ()))
    return ScalarFunction(f"{label}@[{lo},{hi}]", g, deriv, kinks), scaling


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _add_diag(M: np.ndarray, value: float) -> np.ndarray:
    M.flat[:: M.shape[0] + 1] += value
    return M


def clenshaw_matrix(c: ChebCoeffs, A) -> np.ndarray:
    """``sum' alpha_n T_n(A)`` by the matrix Clenshaw recurrence."""
    A = as_square_matrix(A)
    a = c.coeffs
    k = A.shape[0]
    if a.size == 1:
        return 0.5 * a[0] * np.eye(k)
    b1 = np.zeros((k, k))
    b2 = np.zeros((k, k))
    for n in range(a.size - 1, 0, -1):
        b0 = 2.0 * (A @ b1)
        b0 -= b2
        _add_diag(b0, a[n])
        b1, b2 = b0, b1
    out = A @ b1 - b2
    return _add_diag(out, 0.5 * a[0])


def clenshaw_apply(c: ChebCoeffs, op: LinearOperator, V) -> np.ndarray:
    """``S_N(f)(A) V`` without forming any k x k matrix.

    Uses exactly ``N`` operator applications and three ``k x b`` work blocks.
    """
    V = np.asarray(V, dtype=float)
    vec = V.ndim == 1
    if vec:
        V = V[:, None]
    if V.ndim != 2 or V.shape[0] != op.dim:
        raise ValueError(f"block of shape {V.shape} does not match operator dimension {op.dim}")
    a = c.coeffs
    N = a.size - 1
    if N == 0:
        out = 0.5 * a[0] * V
        return out[:, 0] if vec else out
    # b_N = alpha_N V needs no application since b_{N+1} = 0
    b1 = a[N] * V
    b2 = np.zeros_like(V)
    for n in range(N - 1, 0, -1):
        scratch = op.apply(b1)
        scratch *= 2.0
        scratch -= b2
        scratch += a[n] * V
        b1, b2 = scratch, b1
    out = op.apply(b1)
    out -= b2
    out += 0.5 * a[0] * V
    return out[:, 0] if vec else out


def direct_sum_matrix(c: ChebCoeffs, A) -> np.ndarray:
    """Reference evaluation: build each T_n(A) by the forward recurrence and sum."""
    A = as_square_matrix(A)
    out = None
    for out in partial_sums(c, A):
        pass
    return out


def partial_sums(c: ChebCoeffs, A, with_terms: bool = False) -> Iterator:
    """Yield ``S_0, S_1, ..., S_N`` of the matrix series in order.

    With ``with_terms`` each item is ``(S_n, T_n(A))``. One matrix product per
    degree, so a whole convergence sweep costs the same as one direct sum.
    """
    A = as_square_matrix(A)
    a = c.coeffs
    k = A.shape[0]
    t_prev = np.eye(k)
    S = 0.5 * a[0] * t_prev
    yield (S.copy(), t_prev) if with_terms else S.copy()
    if a.size == 1:
        return
    t_cur = A.copy()
    S = S + a[1] * t_cur
    yield (S.copy(), t_cur) if with_terms else S.copy()
    for n in range(2, a.size):
        t_prev, t_cur = t_cur, 2.0 * (A @ t_cur) - t_prev
        S = S + a[n] * t_cur
        yield (S.copy(), t_cur) if with_terms else S.copy()


def matrix_error(X, Y, norm: str = "spectral") -> float:
    """Norm of ``X - Y``: ``"spectral"`` (largest singular value) or ``"frobenius"``."""
    D = np.asarray(X, dtype=float) - np.asarray(Y, dtype=float)
    if norm == "spectral":
        return float(np.linalg.norm(D, 2))
    if norm == "frobenius":
        return float(np.linalg.norm(D, "fro"))
    raise ValueError(f"unknown norm {norm!r}")


# ---------------------------------------------------------------------------
# Matrix files
# ---------------------------------------------------------------------------

MAGIC = b"CHEBMAT1"


def save_matrix_text(path, A) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(A, dtype=float)), fmt="%.17g")


def load_matrix_text(path) -> np.ndarray:
    return as_square_matrix(np.atleast_2d(np.loadtxt(path, dtype=float)))


def save_matrix_binary(path, A) -> None:
    """Write ``CHEBMAT1`` + little-endian u64 order + row-major float64 entries.

    Non-square blocks (basis dumps) are stored with the row count as the order;
    the column count is implied by the payload length.
    """
    A = np.atleast_2d(np.asarray(A, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", A.shape[0]))
        fh.write(np.ascontiguousarray(A).tobytes())


def load_matrix_binary(path, square: bool = True) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a CHEBMAT1 file")
    (order,) = struct.unpack("<Q", raw[8:16])
    data = np.frombuffer(raw[16:], dtype="<f8").astype(float)
    if order == 0 or data.size % order:
        raise ValueError(f"{path}: payload of {data.size} values does not fit order {order}")
    A = data.reshape(order, -1)
    return as_square_matrix(A) if square else A


def load_matrix(path) -> np.ndarray:
    """Load a matrix file, sniffing binary versus text by the magic header."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == MAGIC:
        return load_matrix_binary(path)
    return load_matrix_text(path)
