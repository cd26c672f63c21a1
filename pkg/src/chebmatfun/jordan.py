"""Matrices with known Jordan structure and exact matrix functions on them.

A block with eigenvalue ``lam``, size ``k`` and superdiagonal ``s`` is
``D J_unit D^{-1}`` with ``D = diag(1, s, s^2, ...)``, so ``f`` of that block
has entry ``(p, q) = s^(q-p) f^(q-p)(lam) / (q-p)!``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from chebmatfun.scalar import ScalarFunction

__all__ = [
    "JordanBlock",
    "JordanSpec",
    "DerivativeStack",
    "DerivativeUnavailableError",
    "random_orthogonal",
    "build_jordan_matrix",
    "derivative_stack",
    "f_of_jordan_block",
    "f_of_matrix_via_jordan",
    "poly_on_jordan_block_check",
    "taylor_matrix_function",
]


class DerivativeUnavailableError(ValueError):
    """No trustworthy derivatives of f at an eigenvalue that needs them."""


def random_orthogonal(k: int, seed) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True)
class JordanBlock:
    eigenvalue: float
    size: int
    offdiag: float = 1.0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("block size must be positive")


@dataclass(frozen=True)
class JordanSpec:
    """Block list plus an optional similarity ``Z``; the matrix is ``Z^{-1} J Z``.

    ``similarity`` is ``None``, an explicit matrix, or ``("orthogonal", seed)``.
    """

    blocks: tuple
    similarity: object = None

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, JordanBlock) else JordanBlock(*b) for b in self.blocks)
        if not blocks:
            raise ValueError("need at least one block")
        object.__setattr__(self, "blocks", blocks)

    @property
    def order(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def largest_block(self) -> int:
        return max(b.size for b in self.blocks)

    @property
    def diagonalizable(self) -> bool:
        return self.largest_block == 1

    def is_delta_condense(self, delta: float) -> bool:
        """True when every eigenvalue with ``|lam| >= 1 - delta`` sits in 1x1 blocks."""
        return all(b.size == 1 for b in self.blocks if abs(b.eigenvalue) >= 1.0 - delta)

    def similarity_matrix(self) -> Optional[np.ndarray]:
        Z = self.similarity
        if Z is None:
            return None
        if isinstance(Z, tuple) and len(Z) == 2 and Z[0] == "orthogonal":
            return random_orthogonal(self.order, Z[1])
        Z = np.asarray(Z, dtype=float)
        if Z.shape != (self.order, self.order):
            raise ValueError(f"similarity of shape {Z.shape} does not match order {self.order}")
        return Z

    def replicated(self, times: int = 2) -> "JordanSpec":
        if self.similarity is not None:
            raise ValueError("replication is defined for specs without similarity")
        return JordanSpec(self.blocks * times)

    def to_json(self) -> str:
        Z = self.similarity
        if Z is None:
            sim = "none"
        elif isinstance(Z, tuple):
            sim = f"orthogonal-random({Z[1]})"
        else:
            sim = np.asarray(Z, dtype=float).tolist()
        return json.dumps({"blocks": [{"lambda": b.eigenvalue, "size": b.size, "offdiag": b.offdiag}
                                      for b in self.blocks], "similarity": sim})

    @classmethod
    def from_json(cls, text: str) -> "JordanSpec":
        d = json.loads(text)
        blocks = tuple(JordanBlock(float(b["lambda"]), int(b["size"]), float(b.get("offdiag", 1.0)))
                       for b in d["blocks"])
        sim = d.get("similarity", "none")
        if sim in (None, "none"):
            Z = None
        elif isinstance(sim, str):
            if not (sim.startswith("orthogonal-random(") and sim.endswith(")")):
                raise ValueError(f"unrecognised similarity {sim!r}")
            Z = ("orthogonal", int(sim[len("orthogonal-random("):-1]))
        else:
            Z = np.asarray(sim, dtype=float)
        return cls(blocks, Z)


def _check_invertible(Z: np.ndarray) -> None:
    if np.linalg.cond(Z) > 1e12:
        raise ValueError("similarity matrix is singular or numerically singular")


def build_jordan_matrix(spec: JordanSpec) -> np.ndarray:
    """``Z^{-1} J Z`` with upper-bidiagonal Jordan blocks on the diagonal of J."""
    pieces = []
    for b in spec.blocks:
        Jb = b.eigenvalue * np.eye(b.size)
        if b.size > 1:
            Jb += np.diag(np.full(b.size - 1, b.offdiag), 1)
        pieces.append(Jb)
    J = scipy.linalg.block_diag(*pieces)
    Z = spec.similarity_matrix()
    if Z is None:
        return J
    _check_invertible(Z)
    return np.linalg.solve(Z, J @ Z)


@dataclass(frozen=True)
class DerivativeStack:
    """``values[j] = f^(j)(lam)`` for j = 0..len-1."""

    eigenvalue: float
    values: tuple
    source: str = "closed-form"

    def __len__(self):
        return len(self.values)


def _finite_difference(f: Callable, x: float, j: int) -> float:
    # central differences of order j; step balances truncation against rounding
    h = np.finfo(float).eps ** (1.0 / (j + 2)) * max(1.0, abs(x))
    i = np.arange(j + 1)
    weights = (-1.0) ** i * np.array([math.comb(j, int(v)) for v in i])
    pts = x + (j / 2.0 - i) * h
    return float(np.dot(weights, np.asarray(f(pts), dtype=float)) / h ** j)


def derivative_stack(f: ScalarFunction, eigenvalue: float, count: int,
                     allow_finite_difference: bool = True) -> DerivativeStack:
    """Derivatives ``f^(0..count-1)`` at ``eigenvalue``.

    Refuses (``DerivativeUnavailableError``) when ``count > 1`` and the
    eigenvalue sits on a kink of ``f``.
    """
    lam = float(eigenvalue)
    if count > 1 and any(abs(lam - k) < 1e-12 for k in getattr(f, "kinks", ())):
        raise DerivativeUnavailableError(
            f"{getattr(f, 'label', 'f')} has no derivatives at eigenvalue {lam} (kink)")
    deriv = getattr(f, "derivative", None)
    if deriv is not None:
        return DerivativeStack(lam, tuple(float(deriv(lam, j)) for j in range(count)))
    if count > 1 and not allow_finite_difference:
        raise DerivativeUnavailableError(f"no closed-form derivatives registered at eigenvalue {lam}")
    vals = [float(np.asarray(f(np.array([lam])))[0])]
    vals += [_finite_difference(f, lam, j) for j in range(1, count)]
    return DerivativeStack(lam, tuple(vals), "finite-difference")


def f_of_jordan_block(d: DerivativeStack, size: int, offdiag: float = 1.0) -> np.ndarray:
    """Upper triangular Toeplitz block with entry (p, q) = s^(q-p) f^(q-p)(lam)/(q-p)!."""
    if len(d) < size:
        raise ValueError(f"need {size} derivatives, got {len(d)}")
    F = np.zeros((size, size))
    for j in range(size):
        F += np.diag(np.full(size - j, d.values[j] * offdiag ** j / math.factorial(j)), j)
    return F


def f_of_matrix_via_jordan(f: ScalarFunction, spec: JordanSpec) -> np.ndarray:
    """Exact ``f(A) = Z^{-1} f(J) Z`` assembled block by block."""
    pieces = []
    for b in spec.blocks:
        d = derivative_stack(f, b.eigenvalue, b.size)
        pieces.append(f_of_jordan_block(d, b.size, b.offdiag))
    F = scipy.linalg.block_diag(*pieces)
    Z = spec.similarity_matrix()
    if Z is None:
        return F
    _check_invertible(Z)
    return np.linalg.solve(Z, F @ Z)


def poly_on_jordan_block_check(p: Sequence[float], lam: float, size: int, tol: float = 1e-11) -> bool:
    """Compare p(J) by explicit powers with the binomial-sum formula entrywise.

    ``p`` holds monomial coefficients a_0..a_l; the formula for entry (q, j)
    is ``sum_n a_n C(n, j-q) lam^(n-j+q)``.
    """
    a = np.asarray(p, dtype=float)
    J = lam * np.eye(size) + np.diag(np.ones(size - 1), 1)
    P = np.zeros((size, size))
    power = np.eye(size)
    for coef in a:
        P += coef * power
        power = power @ J
    B = np.zeros((size, size))
    for q in range(size):
        for j in range(q, size):
            s = j - q
            B[q, j] = sum(a[n] * math.comb(n, s) * lam ** (n - s) for n in range(s, a.size))
    return bool(np.max(np.abs(P - B)) < tol)


def taylor_matrix_function(derivs_at_zero: Sequence[float], A) -> np.ndarray:
    """``sum_n f^(n)(0)/n! A^n`` over the supplied derivatives (test utility)."""
    A = np.asarray(A, dtype=float)
    out = np.zeros_like(A)
    power = np.eye(A.shape[0])
    for n, dn in enumerate(derivs_at_zero):
        out += dn / math.factorial(n) * power
        power = power @ A
    return out
