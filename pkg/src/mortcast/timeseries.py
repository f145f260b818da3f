"""Random walk with drift: calibration, central projection, and simulation.

The same machinery backs the two-dimensional time processes of the
survival-transform and CBD models and the one-dimensional Lee-Carter time
index: state_{t+1} = state_t + drift + factor @ z with standard normal z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def _psd_cholesky(cov: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T ~= cov for PSD cov.

    Columns whose pivot falls at or below the tolerance are zeroed, so
    semidefinite covariances (deterministic directions) factor cleanly
    instead of failing. An exactly zero covariance gives exactly zero L.
    """
    n = cov.shape[0]
    L = np.zeros_like(cov)
    tol = rel_tol * max(float(np.max(np.abs(np.diag(cov)))), 0.0)
    for j in range(n):
        d = cov[j, j] - L[j, :j] @ L[j, :j]
        if d <= tol:
            continue
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            L[i, j] = (cov[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def _is_triangular(a: np.ndarray) -> bool:
    return np.array_equal(a, np.tril(a)) or np.array_equal(a, np.triu(a))


@dataclass(frozen=True)
class RwdParams:
    """Calibrated random walk with drift.

    ``drift`` is the per-year step; ``innovation_factor`` is a triangular
    matrix A with nonnegative diagonal such that A @ A.T is the innovation
    covariance. ``last_state``/``last_year`` anchor projections.
    """

    dim: int
    drift: np.ndarray
    innovation_factor: np.ndarray
    last_state: np.ndarray
    last_year: int

    def __post_init__(self):
        drift = np.asarray(self.drift, dtype=float)
        factor = np.asarray(self.innovation_factor, dtype=float)
        state = np.asarray(self.last_state, dtype=float)
        if drift.shape != (self.dim,) or state.shape != (self.dim,):
            raise DomainError(f"drift and state must be vectors of length {self.dim}")
        if factor.shape != (self.dim, self.dim):
            raise DomainError(f"innovation factor must be {self.dim}x{self.dim}")
        if not (np.all(np.isfinite(drift)) and np.all(np.isfinite(state)) and np.all(np.isfinite(factor))):
            raise DomainError("drift, state, and innovation factor must be finite")
        if not _is_triangular(factor) or np.any(np.diag(factor) < 0.0):
            raise DomainError("innovation factor must be triangular with nonnegative diagonal")
        for arr in (drift, factor, state):
            arr.setflags(write=False)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "innovation_factor", factor)
        object.__setattr__(self, "last_state", state)


def calibrate_rwd(series, years) -> RwdParams:
    """Gaussian maximum-likelihood calibration on first differences.

    Parameters
    ----------
    series : array_like
        Observed states, shape (n,) for one dimension or (n, dim).
    years : sequence of int
        Calendar years of the observations; must be consecutive.

    The drift is the mean first difference and the innovation factor the
    Cholesky factor of their sample covariance (denominator n-1). A series
    with identical differences therefore calibrates to a zero factor.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise DomainError("series must be a finite (n,) or (n, dim) array")
    n, dim = arr.shape
    yrs = [int(t) for t in years]
    if len(yrs) != n:
        raise DomainError(f"{n} observations but {len(yrs)} years")
    if n < 3:
        raise DomainError("need at least 3 observations to estimate the innovation covariance")
    if any(b - a != 1 for a, b in zip(yrs, yrs[1:])):
        raise DomainError("years must be consecutive")

    diffs = np.diff(arr, axis=0)
    drift = diffs.mean(axis=0)
    centered = diffs - drift
    cov = centered.T @ centered / (diffs.shape[0] - 1)
    return RwdParams(
        dim=dim,
        drift=drift,
        innovation_factor=_psd_cholesky(cov),
        last_state=arr[-1].copy(),
        last_year=yrs[-1],
    )


def project_central(params: RwdParams, horizon: int) -> np.ndarray:
    """Noise-free continuation: state after h steps is last_state + h * drift.

    Returns an array of shape (horizon, dim), one row per step.
    """
    if horizon < 1:
        raise DomainError(f"horizon must be positive, got {horizon}")
    steps = np.arange(1, horizon + 1, dtype=float)
    return params.last_state + steps[:, None] * params.drift


def simulate_paths(params: RwdParams, horizon: int, n_paths: int, seed: int) -> np.ndarray:
    """Simulate seeded sample paths of the walk.

    Each path draws its own RNG stream keyed by (seed, path index), so the
    result is identical regardless of evaluation order and bit-reproducible
    for a fixed seed. Returns shape (n_paths, horizon, dim).
    """
    if horizon < 1:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if n_paths < 1:
        raise DomainError(f"n_paths must be positive, got {n_paths}")
    if seed < 0:
        raise DomainError("seed must be a nonnegative integer")
    out = np.empty((n_paths, horizon, params.dim))
    for p in range(n_paths):
        rng = np.random.default_rng([seed, p])
        z = rng.standard_normal((horizon, params.dim))
        increments = params.drift + z @ params.innovation_factor.T
        out[p] = params.last_state + np.cumsum(increments, axis=0)
    return out


def forecast_states(
    params: RwdParams,
    horizon: int,
    mode: str = "central",
    n_paths: int | None = None,
    seed: int | None = None,
) -> np.ndarray:
    """Projected states for either forecast mode.

    Central mode returns (horizon, dim); sample mode returns
    (n_paths, horizon, dim) and requires ``n_paths`` and ``seed``.
    """
    if mode == "central":
        return project_central(params, horizon)
    if mode == "sample":
        if n_paths is None or seed is None:
            raise DomainError("sample mode requires n_paths and seed")
        return simulate_paths(params, horizon, n_paths, seed)
    raise DomainError(f"unknown forecast mode {mode!r}")
