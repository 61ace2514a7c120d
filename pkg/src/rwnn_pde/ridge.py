"""Streaming multi-output ridge regression via accumulated outer products.

The fit never materializes the full design matrix: callers stream
``(X, Y)`` batches into a :class:`MomentAccumulator`, which keeps the p x p
Gram matrix and the m x p cross-moment matrix, and a single symmetric
positive-definite solve produces the readout.  Accumulators are plain
mergeable values, so parallel workers can own private ones and combine them
in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

# Jitter ladder for nearly singular normal equations: relative floor, then
# escalate by 10x at most this many times before giving up.
_JITTER_FLOOR = 1e-10
_MAX_ESCALATIONS = 4


class SingularSystemError(RuntimeError):
    """Normal equations stayed indefinite after the jitter ladder."""

    def __init__(self, message: str, gram_condition: float):
        super().__init__(message)
        self.gram_condition = gram_condition


@dataclass
class MomentAccumulator:
    """Running ``sum_j X_j X_j^T`` (Gram) and ``sum_j Y_j X_j^T`` (cross)."""

    gram: np.ndarray
    cross: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, n_features: int, n_outputs: int = 1) -> "MomentAccumulator":
        return cls(
            gram=np.zeros((n_features, n_features)),
            cross=np.zeros((n_outputs, n_features)),
        )

    def accumulate(self, X: np.ndarray, Y: np.ndarray) -> "MomentAccumulator":
        """Add one batch; rows of ``X`` are samples, ``Y`` is (batch, m)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise ValueError(f"incompatible batch shapes {X.shape} and {Y.shape}")
        if X.shape[1] != self.gram.shape[0] or Y.shape[1] != self.cross.shape[0]:
            raise ValueError(
                f"batch has {X.shape[1]} features / {Y.shape[1]} outputs, "
                f"accumulator expects {self.gram.shape[0]} / {self.cross.shape[0]}"
            )
        if X.shape[0] == 0:
            return self
        self.gram += X.T @ X
        self.cross += Y.T @ X
        self.count += X.shape[0]
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Combine partial accumulators (call in a fixed worker order)."""
        self.gram += other.gram
        self.cross += other.cross
        self.count += other.count
        return self


@dataclass
class RidgeSolution:
    """Fitted readout plus solve diagnostics.

    ``beta @ (gram + lam * I) == cross`` holds to a relative residual of
    1e-8 on every successful solve.
    """

    beta: np.ndarray
    lam: float
    residual_norm: float
    gram_condition: float


def default_ridge_lambda(acc: MomentAccumulator) -> float:
    """Scale-aware default regularization, 1e-8 * trace(Gram) / p."""
    p = acc.gram.shape[0]
    return 1e-8 * float(np.trace(acc.gram)) / p


def ridge_solve(acc: MomentAccumulator, lam: float | None = None) -> RidgeSolution:
    """Solve ``beta (Gram + lam I) = Cross`` by SPD factorization.

    ``lam=None`` picks the scale-aware default; ``lam=0`` is allowed (exact
    least squares on full-rank systems).  If the factorization fails, a
    diagonal jitter of ``1e-10 * trace(Gram)/p`` is added and escalated by
    10x at most four times; an indefinite system after that raises
    :class:`SingularSystemError` carrying the Gram condition estimate.
    """
    if lam is None:
        lam = default_ridge_lambda(acc)
    if lam < 0.0:
        raise ValueError("ridge strength must be nonnegative")
    p = acc.gram.shape[0]
    base = acc.gram + lam * np.eye(p) if lam != 0.0 else acc.gram
    if not np.all(np.isfinite(base)) or not np.all(np.isfinite(acc.cross)):
        raise SingularSystemError(
            "non-finite entries in the normal equations", gram_condition=np.inf
        )
    jitter_unit = _JITTER_FLOOR * max(float(np.trace(acc.gram)), 0.0) / p
    attempt = 0
    factor = None
    while factor is None:
        jitter = 0.0 if attempt == 0 else jitter_unit * 10.0 ** (attempt - 1)
        system = base if jitter == 0.0 else base + jitter * np.eye(p)
        try:
            factor = scipy.linalg.cho_factor(system, lower=False, check_finite=False)
        except scipy.linalg.LinAlgError:
            attempt += 1
            if attempt > _MAX_ESCALATIONS + 1 or jitter_unit == 0.0 and attempt > 1:
                cond = _condition_from_eigs(base)
                raise SingularSystemError(
                    f"normal equations not positive definite "
                    f"(condition ~{cond:.3e}, lambda={lam:g})",
                    gram_condition=cond,
                ) from None
    beta = scipy.linalg.cho_solve(factor, acc.cross.T, check_finite=False).T
    anorm = float(np.abs(base).sum(axis=0).max())
    rcond, info = lapack.dpocon(factor[0], anorm)
    gram_condition = float(1.0 / rcond) if info == 0 and rcond > 0.0 else np.inf
    cross_norm = float(np.linalg.norm(acc.cross))
    residual = float(np.linalg.norm(beta @ base - acc.cross))
    residual_norm = residual / cross_norm if cross_norm > 0.0 else residual
    if not np.all(np.isfinite(beta)):
        raise SingularSystemError(
            f"non-finite readout entries (condition ~{gram_condition:.3e})",
            gram_condition=gram_condition,
        )
    return RidgeSolution(
        beta=beta, lam=float(lam), residual_norm=residual_norm, gram_condition=gram_condition
    )


def _condition_from_eigs(matrix: np.ndarray) -> float:
    eigs = scipy.linalg.eigvalsh(matrix, check_finite=False)
    smallest = float(eigs.min())
    largest = float(eigs.max())
    if smallest <= 0.0:
        return np.inf
    return largest / smallest
