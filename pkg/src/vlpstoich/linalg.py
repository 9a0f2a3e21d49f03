"""Dense SPD solves via Cholesky factorization."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite


def solve_spd(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs for symmetric positive-definite A.

    Raises NotPositiveDefinite when the Cholesky factorization encounters a
    non-positive pivot.
    """
    A = np.asarray(A, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)
