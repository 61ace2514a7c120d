"""Time grids, deterministic random streams and simulated-path storage.

Everything stochastic in this package draws its randomness through
:class:`SeedSpec`, which derives one independent generator per
``(purpose, timestep, path-chunk)`` triple.  Paths are produced in blocks of
fixed size :data:`CHUNK_SIZE`, so the result of a simulation is a pure
function of the seed and never depends on scheduling or worker count.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Fixed path-block size; results must not depend on how blocks are consumed.
CHUNK_SIZE = 8192

_MASK64 = (1 << 64) - 1


class DecompositionError(ValueError):
    """A correlation/covariance matrix could not be factorized.

    ``leading_minor`` is the 1-based index of the offending leading minor
    reported by the last Cholesky attempt, when known.
    """

    def __init__(self, message: str, leading_minor: int | None = None):
        super().__init__(message)
        self.leading_minor = leading_minor


@dataclass(frozen=True)
class TimeGrid:
    """Partition ``0 = t_0 < t_1 < ... < t_N = T`` with step widths in years."""

    times: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        deltas = np.asarray(self.deltas, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "deltas", deltas)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("grid needs at least two time points")
        if times[0] != 0.0:
            raise ValueError("grid must start at t=0")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("grid times must be strictly increasing")
        if deltas.shape != (times.size - 1,) or not np.allclose(
            deltas, np.diff(times), rtol=1e-12, atol=0.0
        ):
            raise ValueError("deltas must equal consecutive time differences")

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def maturity(self) -> float:
        return float(self.times[-1])


def make_uniform_grid(maturity: float, n_steps: int) -> TimeGrid:
    """Equally spaced grid on ``[0, maturity]`` with ``n_steps`` steps."""
    if not maturity > 0.0:
        raise ValueError(f"maturity must be positive, got {maturity}")
    if n_steps < 1:
        raise ValueError(f"need at least one step, got {n_steps}")
    times = np.linspace(0.0, maturity, n_steps + 1)
    return TimeGrid(times=times, deltas=np.diff(times))


def _tag_to_int(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus a namespace path; spawns independent child streams.

    Two :class:`SeedSpec` instances with equal ``master_seed`` and
    ``namespace`` produce bit-identical draws for equal stream keys,
    regardless of process or thread layout.
    """

    master_seed: int
    namespace: tuple[str, ...] = ()

    def child(self, tag: str) -> "SeedSpec":
        """Disjoint sub-namespace, e.g. per repeat or per reference run."""
        return SeedSpec(self.master_seed, self.namespace + (tag,))

    def generator(self, purpose: str, *indices: int) -> np.random.Generator:
        """Fresh generator keyed by ``(namespace, purpose, *indices)``."""
        entropy = [self.master_seed & _MASK64]
        entropy += [_tag_to_int(tag) for tag in self.namespace]
        entropy.append(_tag_to_int(purpose))
        entropy += [int(i) & _MASK64 for i in indices]
        return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass
class PathBatch:
    """Simulated sample paths.

    ``states`` has shape ``(n, N+1, d)`` and holds log-price coordinates for
    the models in this package.  ``dW`` has shape ``(n, N, d_w)`` and stores
    the standard (unit-correlation) Brownian increments that generated the
    paths, on the sqrt-year scale; regressions reuse them.  ``variance`` is
    ``(n, N+1)`` in variance/year units for stochastic-volatility models,
    otherwise ``None``.
    """

    states: np.ndarray
    dW: np.ndarray
    variance: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_assets(self) -> int:
        return self.states.shape[2]


def path_chunks(n: int, chunk: int = CHUNK_SIZE):
    """Yield ``(start, stop)`` blocks of the fixed path partition."""
    for start in range(0, n, chunk):
        yield start, min(start + chunk, n)


def correlation_factor(corr: np.ndarray, max_jitter: float = 1e-8) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``L @ L.T == corr``.

    Near-singular matrices get a diagonal jitter of 1e-12, escalated by
    factors of 10 up to ``max_jitter``, before failing with a
    :class:`DecompositionError` that names the offending leading minor.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ValueError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise ValueError("correlation matrix must have unit diagonal")
    return _spd_factor(corr, first_jitter=1e-12, max_jitter=max_jitter)


def _spd_factor(matrix: np.ndarray, first_jitter: float, max_jitter: float) -> np.ndarray:
    """Cholesky with escalating diagonal jitter; shared by covariance users."""
    jitter = 0.0
    last_error: Exception | None = None
    while True:
        try:
            shifted = matrix if jitter == 0.0 else matrix + jitter * np.eye(matrix.shape[0])
            return scipy.linalg.cholesky(shifted, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:  # pragma: no branch
            last_error = exc
            jitter = first_jitter if jitter == 0.0 else jitter * 10.0
            if jitter > max_jitter * (1.0 + 1e-12):
                break
    minor = None
    match = re.search(r"(\d+)", str(last_error))
    if match:
        minor = int(match.group(1))
    raise DecompositionError(
        f"matrix is not positive semidefinite (leading minor {minor} "
        f"not positive definite after jitter up to {max_jitter:g})",
        leading_minor=minor,
    )


def sample_correlated_increments(
    grid: TimeGrid,
    n: int,
    corr: np.ndarray,
    seeds: SeedSpec,
    purpose: str = "increments",
) -> np.ndarray:
    """Draw Brownian increments with per-step law ``N(0, delta_i * corr)``.

    Returns an ``(n, N, d_w)`` array; draws are independent across steps and
    paths and are generated through a triangular factor of ``corr``.
    """
    if n < 1:
        raise ValueError("need at least one path")
    factor = correlation_factor(corr)
    return _standard_increments(grid, n, seeds, purpose, factor=factor)


def _standard_increments(
    grid: TimeGrid,
    n: int,
    seeds: SeedSpec,
    purpose: str,
    n_factors: int | None = None,
    factor: np.ndarray | None = None,
    antithetic: bool = False,
) -> np.ndarray:
    """Per-(step, chunk) keyed Gaussian increments, optionally antithetic.

    With ``antithetic=True`` the second half of the batch is the negation of
    the first, which keeps every per-step sample mean at exactly zero (for
    even ``n``) while preserving the marginal law.
    """
    d = n_factors if factor is None else factor.shape[0]
    n_base = (n + 1) // 2 if antithetic else n
    out = np.empty((n, grid.n_steps, d))
    scale = np.sqrt(grid.deltas)
    for ci, (start, stop) in enumerate(path_chunks(n_base)):
        for i in range(grid.n_steps):
            z = seeds.generator(purpose, i, ci).standard_normal((stop - start, d))
            if factor is not None:
                z = z @ factor.T
            out[start:stop, i, :] = scale[i] * z
    if antithetic:
        out[n_base:] = -out[: n - n_base]
    return out
