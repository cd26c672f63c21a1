"""Matrix functions through truncated Chebyshev expansions.

Scalar coefficients (:mod:`chebmatfun.scalar`), dense and matrix-free
evaluation (:mod:`chebmatfun.matrix`), exact Jordan-form references
(:mod:`chebmatfun.jordan`), erf-filter eigenspace recovery
(:mod:`chebmatfun.spectral`) and convergence experiments
(:mod:`chebmatfun.experiments`).
"""

__version__ = "0.1.0"

from chebmatfun.jordan import (JordanBlock, JordanSpec, build_jordan_matrix, f_of_jordan_block,
                               f_of_matrix_via_jordan)
from chebmatfun.matrix import (DenseOperator, DiagonalOperator, LinearOperator, SpectralScaling,
                               clenshaw_apply, clenshaw_matrix, direct_sum_matrix,
                               rescale_function_and_operator)
from chebmatfun.scalar import (BUILTINS, ChebCoeffs, ScalarFunction, cheb_coeffs, cheb_poly,
                               cheb_poly_derivative, erf_filter_function, eval_cheb_scalar)
from chebmatfun.spectral import (FilterParams, RecoveryConfig, RecoveryResult, dct_operator, erf_filter,
                                 recover_eigenspace, residual_metric)
