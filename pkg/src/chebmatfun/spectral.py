"""Eigenspace recovery by repeated application of a polynomial erf filter.

The filter is approximated by a short Chebyshev series ``p`` (degree 10 by
default) and applied to a random block over and over, with a QR step after
each pass. Off-target directions shrink by ``max |p(x)| / |p(c)|`` per pass.

Per-pass QR keeps the block orthonormal, so the rank of the recovered space
cannot be read off a single pass. The product of the (normalised) R factors
is tracked instead; its singular values are those of ``(p(A)/p(c))^P V_0``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.special import erf

from chebmatfun._config import fft_workers
from chebmatfun.matrix import LinearOperator, clenshaw_apply
from chebmatfun.scalar import ChebCoeffs, cheb_coeffs, erf_filter_function, eval_cheb_scalar

log = logging.getLogger(__name__)

__all__ = [
    "FilterParams",
    "RecoveryConfig",
    "RecoveryResult",
    "erf_filter",
    "filter_coeffs",
    "recover_eigenspace",
    "residual_metric",
    "DCTOperator",
    "dct_operator",
    "dct_matrix",
]


@dataclass(frozen=True)
class FilterParams:
    center: float
    half_width: float
    steepness: float

    def __post_init__(self):
        if self.half_width <= 0 or self.steepness <= 0:
            raise ValueError("half_width and steepness must be positive")

    def function(self):
        return erf_filter_function(self.center, self.half_width, self.steepness)


def erf_filter(x, p: FilterParams):
    """``0.5 (1 - erf((2/r)(|x - c| - R)))``."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * (1.0 - erf((2.0 / p.steepness) * (np.abs(x - p.center) - p.half_width)))
    return out if out.ndim else float(out)


def filter_coeffs(p: FilterParams, degree: int, samples: Optional[int] = None) -> ChebCoeffs:
    return cheb_coeffs(lambda x: erf_filter(x, p), degree, samples)


@dataclass(frozen=True)
class RecoveryConfig:
    degree: int = 10
    max_passes: int = 12
    block_size: int = 25
    tol: float = 1e-10
    rank_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.block_size < 1 or self.degree < 1 or self.max_passes < 1:
            raise ValueError("block_size, degree and max_passes must be positive")
        if self.tol <= 0 or self.rank_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class RecoveryResult:
    basis: np.ndarray
    eigenvalue: float
    residual_history: list
    passes: int
    op_applications: int
    converged: bool
    seed: int
    rank_history: list = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    @property
    def empty(self) -> bool:
        return self.dimension == 0

    def report(self) -> dict:
        return {
            "dimension": self.dimension,
            "lambda_hat": None if self.empty else self.eigenvalue,
            "residual_history": list(self.residual_history),
            "passes": self.passes,
            "op_applications": self.op_applications,
            "seed": self.seed,
            "converged": self.converged,
            "converged_empty": self.converged and self.empty,
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=2)


class _Counting(LinearOperator):
    def __init__(self, op: LinearOperator):
        super().__init__(op.dim, op.spectral_bounds)
        self.inner = op
        self.count = 0

    def _apply(self, V):
        self.count += V.shape[1]
        return self.inner.apply(V)


def residual_metric(op: LinearOperator, U, lam: float) -> float:
    """``sum_j ||A u_j - lam u_j||_2`` over the columns of ``U``."""
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.shape[1] == 0:
        return 0.0
    R = op.apply(U) - lam * U
    return float(np.sum(np.linalg.norm(R, axis=0)))


def _retained_rank(sv: np.ndarray, rank_tol: float) -> int:
    if sv.size == 0 or sv[0] < rank_tol:
        return 0
    return int(np.count_nonzero(sv >= rank_tol * sv[0]))


def recover_eigenspace(op: LinearOperator, p: FilterParams, cfg: RecoveryConfig = RecoveryConfig(),
                       coeffs: Optional[ChebCoeffs] = None) -> RecoveryResult:
    """Recover the invariant subspace for eigenvalues near ``p.center``.

    The operator's spectrum must already lie in [-1, 1]. Non-convergence after
    ``cfg.max_passes`` is reported through ``converged=False``, not raised.

    The operator-application count includes the Rayleigh-quotient and
    residual products of every pass.
    """
    counted = _Counting(op)
    coeffs = filter_coeffs(p, cfg.degree) if coeffs is None else coeffs
    peak = abs(eval_cheb_scalar(coeffs, float(np.clip(p.center, -1.0, 1.0))))
    if peak == 0.0:
        raise ValueError("filter polynomial vanishes at its center")
    rng = np.random.default_rng(cfg.seed)
    b = cfg.block_size
    Q, _ = np.linalg.qr(rng.standard_normal((op.dim, b)))
    # singular values of gain equal those of (p(A)/p(c))^P Q_0
    gain = np.eye(b)
    history, ranks = [], []
    U = Q[:, :0]
    lam_hat = float("nan")
    converged = False
    passes = 0
    for passes in range(1, cfg.max_passes + 1):
        W = clenshaw_apply(coeffs, counted, Q) / peak
        Q, R, perm = scipy.linalg.qr(W, mode="economic", pivoting=True)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        gain = R[:, inv] @ gain
        Ug, sv, _ = np.linalg.svd(gain)
        d = _retained_rank(sv, cfg.rank_tol)
        ranks.append(d)
        if d == 0:
            U = Q[:, :0]
            history.append(0.0)
            converged = True
            log.info("pass %d: filtered block vanished, empty eigenspace", passes)
            break
        U = Q @ Ug[:, :d]
        AU = counted.apply(U)
        rq = np.einsum("ij,ij->j", U, AU)
        lam_hat = float(np.mean(rq))
        res = float(np.sum(np.linalg.norm(AU - lam_hat * U, axis=0)))
        history.append(res)
        log.info("pass %d: rank %d, lambda %.15g, residual %.3e", passes, d, lam_hat, res)
        if res < cfg.tol:
            converged = True
            break
        # rotate so the leading columns carry the retained directions
        Q = U if d == b else np.hstack([U, Q @ Ug[:, d:]])
        gain = np.diag(sv)
    return RecoveryResult(U, lam_hat, history, passes, counted.count, converged, cfg.seed, ranks)


# ---------------------------------------------------------------------------
# DCT-structured operators
# ---------------------------------------------------------------------------

def dct_matrix(k: int) -> np.ndarray:
    """Orthonormal DCT-II matrix: row n, column j proportional to cos(pi n (j + 1/2) / k)."""
    n = np.arange(k)[:, None]
    j = np.arange(k)[None, :]
    Q = np.cos(np.pi * n * (j + 0.5) / k) * np.sqrt(2.0 / k)
    Q[0] /= np.sqrt(2.0)
    return Q


class DCTOperator(LinearOperator):
    """``A = Q^T diag(spectrum) Q`` with Q the orthonormal DCT-II.

    ``naive=True`` multiplies by the explicit k x k matrix instead of using
    fast transforms (for cross-checking on small sizes).
    """

    def __init__(self, spectrum, naive: bool = False):
        self.spectrum = np.asarray(spectrum, dtype=float).ravel()
        super().__init__(self.spectrum.size, (float(self.spectrum.min()), float(self.spectrum.max())))
        self.naive = naive
        self._Q = dct_matrix(self.dim) if naive else None

    def _apply(self, V):
        d = self.spectrum[:, None]
        if self.naive:
            return self._Q.T @ (d * (self._Q @ V))
        w = fft_workers()
        y = scipy.fft.dct(V, type=2, norm="ortho", axis=0, workers=w)
        return scipy.fft.idct(d * y, type=2, norm="ortho", axis=0, workers=w)


def dct_operator(spectrum, naive: bool = False) -> DCTOperator:
    return DCTOperator(spectrum, naive)
