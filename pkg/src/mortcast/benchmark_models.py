"""Benchmark mortality models: Lee-Carter and Cairns-Blake-Dowd.

Lee-Carter: log m_{x,t} = alpha_x + beta_x * kappa_t, fitted by rank-1 SVD
of the row-centered log rates. CBD: logit q_{x,t} = kappa1_t +
kappa2_t * (x - x_bar), fitted year by year with closed-form least squares.
Both forecast by handing their time indices to the random walk with drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError, FitError
from .lifetable import AgeRange, MortalitySurface, SurfaceKind, YearRange, central_rate_to_q
from .timeseries import RwdParams, forecast_states
from .transforms import logit


@dataclass(frozen=True)
class LcParams:
    """Lee-Carter parameters under sum(beta) = 1, sum(kappa) = 0."""

    alpha_x: np.ndarray
    beta_x: np.ndarray
    kappa_t: np.ndarray
    ages: AgeRange
    years: YearRange

    def __post_init__(self):
        a = np.asarray(self.alpha_x, dtype=float)
        b = np.asarray(self.beta_x, dtype=float)
        k = np.asarray(self.kappa_t, dtype=float)
        if a.shape != (len(self.ages),) or b.shape != (len(self.ages),):
            raise DomainError("alpha_x and beta_x must have one entry per age")
        if k.shape != (len(self.years),):
            raise DomainError("kappa_t must have one entry per fit year")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(k))):
            raise DomainError("parameters must be finite")
        if abs(b.sum() - 1.0) > 1e-10:
            raise DomainError(f"beta_x must sum to 1, got {b.sum()}")
        if abs(k.sum()) > 1e-10:
            raise DomainError(f"kappa_t must sum to 0, got {k.sum()}")
        for arr in (a, b, k):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha_x", a)
        object.__setattr__(self, "beta_x", b)
        object.__setattr__(self, "kappa_t", k)


@dataclass(frozen=True)
class CbdParams:
    """CBD parameters; x_bar is the midpoint of the fitted age window."""

    kappa1_t: np.ndarray
    kappa2_t: np.ndarray
    x_bar: float
    ages: AgeRange
    years: YearRange

    def __post_init__(self):
        k1 = np.asarray(self.kappa1_t, dtype=float)
        k2 = np.asarray(self.kappa2_t, dtype=float)
        n_t = len(self.years)
        if k1.shape != (n_t,) or k2.shape != (n_t,):
            raise DomainError("kappa1_t and kappa2_t must have one entry per fit year")
        if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2)) and np.isfinite(self.x_bar)):
            raise DomainError("parameters must be finite")
        if abs(self.x_bar - (self.ages.x_min + self.ages.x_max) / 2.0) > 1e-12:
            raise DomainError("x_bar must be the midpoint of the age window")
        for arr in (k1, k2):
            arr.setflags(write=False)
        object.__setattr__(self, "kappa1_t", k1)
        object.__setattr__(self, "kappa2_t", k2)


def fit_lc(m_surface: MortalitySurface) -> LcParams:
    """Lee-Carter fit by singular value decomposition.

    alpha_x is the row mean of log m over the fit years; (beta, kappa) come
    from the leading singular triple of the centered matrix, scaled to
    sum(beta) = 1 with the SVD sign fixed by sum(beta) > 0 before scaling.
    Any kappa-mean residual is folded back into alpha so sum(kappa) = 0
    holds exactly. A centered matrix of zeros (rates constant over time)
    yields uniform beta and kappa = 0.
    """
    if m_surface.kind is not SurfaceKind.CENTRAL_RATE:
        raise DomainError(f"expected a central_rate surface, got {m_surface.kind.value}")
    bad = np.argwhere(m_surface.values <= 0.0)
    if bad.size:
        i, j = bad[0]
        raise DomainError(
            f"nonpositive central rate at age {m_surface.ages.x_min + i}, "
            f"year {m_surface.years.t_min + j}: log rate undefined"
        )
    log_m = np.log(m_surface.values)
    alpha = log_m.mean(axis=1)
    centered = log_m - alpha[:, None]

    n_ages = len(m_surface.ages)
    # row-mean centering leaves ulp-level residue on time-constant rows, so
    # the zero-matrix branch must trigger at rounding level, not exact zero
    tol = 16.0 * np.finfo(float).eps * len(m_surface.years) * max(1.0, np.max(np.abs(log_m)))
    if np.max(np.abs(centered)) <= tol:
        beta = np.full(n_ages, 1.0 / n_ages)
        kappa = np.zeros(len(m_surface.years))
    else:
        u, s, vt = np.linalg.svd(centered, full_matrices=False)
        beta = u[:, 0]
        kappa = s[0] * vt[0]
        if beta.sum() < 0.0:
            beta, kappa = -beta, -kappa
        scale = beta.sum()
        if scale == 0.0:
            raise FitError(
                "leading age pattern sums to zero; the sum(beta) = 1 constraint "
                "cannot be imposed on this surface"
            )
        beta = beta / scale
        kappa = kappa * scale
        # rows were centered, so kappa's mean is already rounding-level;
        # fold whatever is left into alpha to make the constraint exact
        shift = kappa.mean()
        alpha = alpha + beta * shift
        kappa = kappa - shift

    return LcParams(
        alpha_x=alpha,
        beta_x=beta,
        kappa_t=kappa,
        ages=m_surface.ages,
        years=m_surface.years,
    )


def fit_cbd(q_surface: MortalitySurface) -> CbdParams:
    """CBD fit: per-year OLS of logit q on centered age.

    With the regressor centered, each year's intercept kappa1_t is the mean
    logit and the slope kappa2_t the usual ratio of cross products. Exact
    for surfaces whose logit is affine in age.
    """
    if q_surface.kind is not SurfaceKind.DEATH_PROB:
        raise DomainError(f"expected a death_prob surface, got {q_surface.kind.value}")
    if len(q_surface.ages) < 2:
        raise DomainError("need at least 2 ages to fit an age slope")
    bad = np.argwhere((q_surface.values <= 0.0) | (q_surface.values >= 1.0))
    if bad.size:
        i, j = bad[0]
        raise DomainError(
            f"death probability outside (0, 1) at age {q_surface.ages.x_min + i}, "
            f"year {q_surface.years.t_min + j}: logit undefined"
        )
    x_bar = (q_surface.ages.x_min + q_surface.ages.x_max) / 2.0
    cx = q_surface.ages.to_array() - x_bar
    y = logit(q_surface.values)
    kappa1 = y.mean(axis=0)
    kappa2 = cx @ y / (cx @ cx)
    return CbdParams(
        kappa1_t=kappa1,
        kappa2_t=kappa2,
        x_bar=x_bar,
        ages=q_surface.ages,
        years=q_surface.years,
    )


def _forecast_years(years: YearRange, horizon: int) -> YearRange:
    return YearRange(years.t_max + 1, years.t_max + horizon)


def _check_rwd(rwd: RwdParams, dim: int, years: YearRange, what: str):
    if rwd.dim != dim:
        raise DomainError(f"{what} forecasting needs a {dim}-dimensional walk, got dim {rwd.dim}")
    if rwd.last_year != years.t_max:
        raise DomainError(f"walk calibrated through {rwd.last_year} but fit ends {years.t_max}")


def lc_forecast(
    params: LcParams,
    rwd1: RwdParams,
    horizon: int,
    mode: str = "central",
    n_paths: int | None = None,
    seed: int | None = None,
):
    """Death-probability forecast from projected kappa_t.

    m at horizon h is exp(alpha_x + beta_x * kappa_{t+h}), converted to q
    under a constant force of mortality within each year. Central mode
    returns one surface, sample mode a list of n_paths surfaces.
    """
    _check_rwd(rwd1, 1, params.years, "Lee-Carter")
    states = forecast_states(rwd1, horizon, mode, n_paths=n_paths, seed=seed)
    years = _forecast_years(params.years, horizon)

    def build(path_states: np.ndarray) -> MortalitySurface:
        m = np.exp(params.alpha_x[:, None] + params.beta_x[:, None] * path_states[:, 0][None, :])
        return MortalitySurface(
            ages=params.ages, years=years, kind=SurfaceKind.DEATH_PROB, values=central_rate_to_q(m)
        )

    if mode == "central":
        return build(states)
    return [build(states[p]) for p in range(states.shape[0])]


def cbd_forecast(
    params: CbdParams,
    rwd2: RwdParams,
    horizon: int,
    mode: str = "central",
    n_paths: int | None = None,
    seed: int | None = None,
):
    """Death-probability forecast from projected (kappa1, kappa2).

    q at horizon h is the logistic of kappa1 + kappa2 * (x - x_bar); always
    inside (0, 1). Central mode returns one surface, sample mode a list.
    """
    _check_rwd(rwd2, 2, params.years, "CBD")
    states = forecast_states(rwd2, horizon, mode, n_paths=n_paths, seed=seed)
    years = _forecast_years(params.years, horizon)
    cx = params.ages.to_array() - params.x_bar

    def build(path_states: np.ndarray) -> MortalitySurface:
        q = expit(path_states[:, 0][None, :] + cx[:, None] * path_states[:, 1][None, :])
        return MortalitySurface(
            ages=params.ages, years=years, kind=SurfaceKind.DEATH_PROB, values=q
        )

    if mode == "central":
        return build(states)
    return [build(states[p]) for p in range(states.shape[0])]
