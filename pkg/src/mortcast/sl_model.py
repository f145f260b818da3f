"""Survival-transform mortality model.

Fits delta_{x,t} = alpha1_t + alpha2_t * kappa_x to an L-difference surface
by damped coordinate descent, then forecasts death probabilities by
projecting (alpha1, alpha2) as a two-dimensional random walk with drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitError
from .lifetable import AgeRange, MortalitySurface, SurfaceKind, YearRange, survival_to_q
from .timeseries import RwdParams, forecast_states
from .transforms import LDiffSurface, invert_l_diff


@dataclass(frozen=True)
class SlParams:
    """Fitted model parameters.

    alpha1/alpha2 are indexed by fit year, kappa by age. Parameters are only
    identified up to an affine gauge; fit_sl returns them normalized to
    sum(kappa) = 0, sum(kappa^2) = 1, kappa at the oldest age nonnegative.
    """

    alpha1: np.ndarray
    alpha2: np.ndarray
    kappa: np.ndarray
    t0: int
    ages: AgeRange
    years: YearRange

    def __post_init__(self):
        a1 = np.asarray(self.alpha1, dtype=float)
        a2 = np.asarray(self.alpha2, dtype=float)
        k = np.asarray(self.kappa, dtype=float)
        n_t, n_x = len(self.years), len(self.ages)
        if a1.shape != (n_t,) or a2.shape != (n_t,):
            raise DomainError(f"alpha1/alpha2 must have one entry per fit year ({n_t})")
        if k.shape != (n_x,):
            raise DomainError(f"kappa must have one entry per age ({n_x})")
        if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2)) and np.all(np.isfinite(k))):
            raise DomainError("parameters must be finite")
        if self.t0 >= self.years.t_min:
            raise DomainError(f"reference year {self.t0} must precede fit years")
        for arr in (a1, a2, k):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)
        object.__setattr__(self, "kappa", k)

    def fitted_surface(self) -> np.ndarray:
        """alpha1_t + alpha2_t * kappa_x as an (n_ages, n_years) array."""
        return self.alpha1[None, :] + self.alpha2[None, :] * self.kappa[:, None]


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the coordinate-descent fit.

    gamma damps each per-parameter Newton step; values in (0, 2) preserve
    descent, values below 1 trade speed for stability. init selects the
    starting kappa: "cbd_linear" uses the centered age ramp x - mean(x),
    or pass an explicit vector.
    """

    gamma: float = 0.5
    epsilon: float = 1e-8
    k_max: int = 5000
    init: object = "cbd_linear"

    def __post_init__(self):
        if not (0.0 < self.gamma < 2.0):
            raise DomainError(f"gamma must lie in (0, 2), got {self.gamma}")
        if self.epsilon <= 0.0:
            raise DomainError("epsilon must be positive")
        if self.k_max < 1:
            raise DomainError("k_max must be a positive integer")
        if isinstance(self.init, str) and self.init != "cbd_linear":
            raise DomainError(f"unknown init scheme {self.init!r}")


@dataclass(frozen=True)
class FitDiagnostics:
    iterations: int
    converged: bool
    final_objective: float
    objective_trace: np.ndarray
    max_param_delta: float


def sl_objective(delta: LDiffSurface, params: SlParams) -> float:
    """Sum of squared residuals of the fitted surface against delta."""
    if params.ages != delta.ages or params.years != delta.years:
        raise DomainError("parameter and surface index ranges do not match")
    resid = delta.values - params.fitted_surface()
    return float(np.sum(resid * resid))


def _initial_kappa(delta: LDiffSurface, config: FitConfig) -> np.ndarray:
    if isinstance(config.init, str):
        x = delta.ages.to_array()
        return x - x.mean()
    k0 = np.asarray(config.init, dtype=float)
    if k0.shape != (len(delta.ages),):
        raise DomainError(f"init vector must have one entry per age ({len(delta.ages)})")
    if not np.all(np.isfinite(k0)):
        raise DomainError("init vector must be finite")
    if np.ptp(k0) == 0.0:
        raise DomainError("init vector must not be constant")
    return k0


def init_sl(delta: LDiffSurface, config: FitConfig | None = None) -> SlParams:
    """Starting point: fixed kappa, per-year regression of delta on it.

    With the default init, kappa is the centered age ramp and each year's
    (alpha1, alpha2) are the OLS intercept and slope of that year's column
    regressed on kappa. A column exactly affine in kappa is reproduced with
    zero residual.
    """
    if config is None:
        config = FitConfig()
    if len(delta.ages) < 2:
        raise DomainError("need at least 2 ages to regress on kappa")
    kappa = _initial_kappa(delta, config)
    centered = kappa - kappa.mean()
    ss = centered @ centered
    # per-year simple OLS, vectorized over columns
    slope = centered @ delta.values / ss
    intercept = delta.values.mean(axis=0) - slope * kappa.mean()
    return SlParams(
        alpha1=intercept,
        alpha2=slope,
        kappa=kappa,
        t0=delta.t0,
        ages=delta.ages,
        years=delta.years,
    )


def normalize_gauge(params: SlParams) -> SlParams:
    """Canonical parameterization leaving all fitted values unchanged.

    kappa' = (kappa - mean)/c, alpha2' = c*alpha2, alpha1' = alpha1 +
    mean(kappa)*alpha2, where c = ||kappa - mean|| signed so that kappa' at
    the oldest age is nonnegative. Afterwards sum(kappa') = 0 and
    sum(kappa'^2) = 1.
    """
    mean = params.kappa.mean()
    centered = params.kappa - mean
    c = float(np.linalg.norm(centered))
    if c == 0.0:
        raise DomainError("gauge undefined for constant kappa")
    if centered[-1] < 0.0:
        c = -c
    return SlParams(
        alpha1=params.alpha1 + mean * params.alpha2,
        alpha2=c * params.alpha2,
        kappa=centered / c,
        t0=params.t0,
        ages=params.ages,
        years=params.years,
    )


def fit_sl(delta: LDiffSurface, config: FitConfig | None = None) -> tuple[SlParams, FitDiagnostics]:
    """Damped elementwise-Newton least squares fit.

    Each sweep updates every alpha1_t, then every alpha2_t, then every
    kappa_x, in that order; every update is the exact one-parameter
    minimizer scaled by gamma, evaluated with all previously updated values.
    Stops once no parameter moved by epsilon or more during a sweep, or
    after k_max sweeps. The returned params are gauge-normalized; the
    diagnostics trace the pre-normalization objective, which is
    non-increasing across sweeps for gamma in (0, 2).

    Raises FitError if kappa collapses to the zero vector mid-fit, which
    makes the alpha2 step undefined; re-initialize with a different kappa.
    """
    if config is None:
        config = FitConfig()
    if len(delta.ages) < 2 or len(delta.years) < 2:
        raise DomainError("need at least 2 ages and 2 fit years")

    start = init_sl(delta, config)
    alpha1 = start.alpha1.copy()
    alpha2 = start.alpha2.copy()
    kappa = start.kappa.copy()
    target = delta.values
    gamma = config.gamma

    def objective():
        r = target - alpha1[None, :] - alpha2[None, :] * kappa[:, None]
        return float(np.sum(r * r))

    trace = [objective()]
    converged = False
    max_delta = np.inf
    sweeps = 0
    for sweeps in range(1, config.k_max + 1):
        resid = target - alpha1[None, :] - alpha2[None, :] * kappa[:, None]

        d1 = gamma * resid.mean(axis=0)
        alpha1 += d1
        resid -= d1[None, :]

        kk = kappa @ kappa
        if kk == 0.0:
            raise FitError(
                "kappa collapsed to zero during fitting; re-initialize with a different init vector"
            )
        d2 = gamma * (kappa @ resid) / kk
        alpha2 += d2
        resid -= kappa[:, None] * d2[None, :]

        aa = alpha2 @ alpha2
        if aa > 0.0:
            dk = gamma * (resid @ alpha2) / aa
            kappa += dk
        else:
            # objective is flat in kappa when alpha2 is identically zero
            dk = np.zeros_like(kappa)

        trace.append(objective())
        max_delta = max(
            float(np.max(np.abs(d1))),
            float(np.max(np.abs(d2))),
            float(np.max(np.abs(dk))),
        )
        if max_delta < config.epsilon:
            converged = True
            break

    raw = SlParams(
        alpha1=alpha1,
        alpha2=alpha2,
        kappa=kappa,
        t0=delta.t0,
        ages=delta.ages,
        years=delta.years,
    )
    diagnostics = FitDiagnostics(
        iterations=sweeps,
        converged=converged,
        final_objective=trace[-1],
        objective_trace=np.asarray(trace),
        max_param_delta=max_delta,
    )
    return normalize_gauge(raw), diagnostics


def sl_forecast(
    params: SlParams,
    rwd: RwdParams,
    base_survival: np.ndarray,
    horizon: int,
    mode: str = "central",
    n_paths: int | None = None,
    seed: int | None = None,
):
    """Death-probability forecast over the given horizon.

    Projects (alpha1, alpha2) by the calibrated walk, rebuilds each future
    year's survival curve through the inverse transform against
    base_survival, and converts to death probabilities. Central mode
    returns one surface with years following the fit window; sample mode
    returns a list of n_paths surfaces.

    A projected curve is always inside (0, 1); if a sampled path produces a
    non-monotone curve the conversion to probabilities raises DomainError.
    """
    if rwd.dim != 2:
        raise DomainError("forecasting needs the two-dimensional (alpha1, alpha2) walk")
    if rwd.last_year != params.years.t_max:
        raise DomainError(
            f"walk calibrated through {rwd.last_year} but fit ends {params.years.t_max}"
        )
    states = forecast_states(rwd, horizon, mode, n_paths=n_paths, seed=seed)
    years = YearRange(params.years.t_max + 1, params.years.t_max + horizon)

    def build(path_states: np.ndarray) -> MortalitySurface:
        q = np.empty((len(params.ages), horizon))
        for h in range(horizon):
            a1, a2 = path_states[h]
            s = invert_l_diff(a1 + a2 * params.kappa, base_survival)
            q[:, h] = survival_to_q(s)
        return MortalitySurface(ages=params.ages, years=years, kind=SurfaceKind.DEATH_PROB, values=q)

    if mode == "central":
        return build(states)
    return [build(states[p]) for p in range(states.shape[0])]
