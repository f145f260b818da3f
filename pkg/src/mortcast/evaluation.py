"""Fit and forecast accuracy metrics and the backtest protocol.

The backtest splits a rate surface into a fit window and a holdout window,
fits each requested model on the first, forecasts the second in central
mode, and scores both against observed death probabilities with MSE and
MAPE. Cumulative mortality-improvement rates at a reference age are
emitted alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .benchmark_models import cbd_forecast, fit_cbd, fit_lc, lc_forecast
from .errors import DomainError
from .lifetable import (
    AgeRange,
    MortalitySurface,
    SurfaceKind,
    YearRange,
    central_rate_to_q,
    surface_q_to_survival,
    survival_to_q,
)
from .sl_model import FitConfig, fit_sl, sl_forecast
from .timeseries import calibrate_rwd
from .transforms import build_l_diff, invert_l_diff

MODEL_ORDER = ("SL", "LC", "CBD")


def mse(observed, estimated) -> float:
    """Mean squared error (1/n) * sum((X - X_hat)^2)."""
    x = np.asarray(observed, dtype=float).ravel()
    xh = np.asarray(estimated, dtype=float).ravel()
    if x.size == 0 or x.shape != xh.shape:
        raise DomainError(f"need equal nonzero lengths, got {x.size} and {xh.size}")
    d = x - xh
    return float(d @ d / x.size)


def mape(observed, estimated, denominator: str = "estimate") -> float:
    """Mean absolute percentage error, in percent.

    Divides each absolute error by the ESTIMATE, the convention used
    throughout the report tables this feeds; pass denominator="observed"
    for the textbook variant.
    """
    x = np.asarray(observed, dtype=float).ravel()
    xh = np.asarray(estimated, dtype=float).ravel()
    if x.size == 0 or x.shape != xh.shape:
        raise DomainError(f"need equal nonzero lengths, got {x.size} and {xh.size}")
    if denominator == "estimate":
        den = xh
    elif denominator == "observed":
        den = x
    else:
        raise DomainError(f"unknown denominator convention {denominator!r}")
    if np.any(den == 0.0):
        raise DomainError("zero denominator in percentage error")
    return float(np.mean(np.abs(x - xh) / den) * 100.0)


def mi_rate(q_series, q_ref: float, scale: float = 100.0):
    """Cumulative mortality-improvement rate against a reference year.

    Delta_t = -log(q_t / q_ref) * scale; positive when mortality improved.
    """
    q = np.asarray(q_series, dtype=float)
    if not (0.0 < q_ref < 1.0):
        raise DomainError(f"reference probability must lie in (0, 1), got {q_ref}")
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    return -np.log(q / q_ref) * scale


def mape_delta_last_two(obs_delta, est_delta) -> float:
    """Two-point percentage error on the last two improvement rates.

    (1/2) * (|o1 - e1|/e1 + |o2 - e2|/e2) * 100. Absolute values sit on
    the numerators only, so a negative estimate yields a negative term.
    """
    o = np.asarray(obs_delta, dtype=float)
    e = np.asarray(est_delta, dtype=float)
    if o.shape != (2,) or e.shape != (2,):
        raise DomainError("expected exactly two observed and two estimated rates")
    if np.any(e == 0.0):
        raise DomainError("zero estimated rate in percentage error")
    return float(np.mean(np.abs(o - e) / e) * 100.0)


@dataclass(frozen=True)
class BacktestConfig:
    """Backtest protocol parameters.

    Defaults reproduce the standard setup: ages 60-94, fit 1960-1989,
    holdout 1990-2009, reference year 1959, all three models, central
    forecasts, improvement rates tracked at age 65 against the final fit
    year.
    """

    ages: AgeRange = AgeRange(60, 94)
    fit_years: YearRange = YearRange(1960, 1989)
    forecast_years: YearRange = YearRange(1990, 2009)
    t0: int = 1959
    models: tuple[str, ...] = MODEL_ORDER
    mode: str = "central"
    mape_denominator: str = "estimate"
    mi_age: int | None = 65
    mi_ref_year: int | None = None
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.forecast_years.t_min != self.fit_years.t_max + 1:
            raise DomainError(
                f"forecast window must start at {self.fit_years.t_max + 1}, "
                f"got {self.forecast_years.t_min}"
            )
        if self.t0 >= self.fit_years.t_min:
            raise DomainError(f"reference year {self.t0} must precede the fit window")
        if not self.models:
            raise DomainError("at least one model required")
        unknown = [m for m in self.models if m not in MODEL_ORDER]
        if unknown:
            raise DomainError(f"unknown models {unknown}; choose from {MODEL_ORDER}")
        if self.mode != "central":
            raise DomainError("backtests score central forecasts only")
        if self.mape_denominator not in ("estimate", "observed"):
            raise DomainError(f"unknown denominator convention {self.mape_denominator!r}")
        if self.mi_age is not None and self.mi_age not in self.ages:
            raise DomainError(f"improvement-rate age {self.mi_age} outside {self.ages}")
        ref = self.mi_ref_year
        if ref is not None and ref not in self.fit_years and ref != self.t0:
            raise DomainError(f"improvement reference year {ref} outside the fitted data")

    @property
    def ref_year(self) -> int:
        return self.fit_years.t_max if self.mi_ref_year is None else self.mi_ref_year


@dataclass(frozen=True)
class ModelMetrics:
    """Accuracy of one model over both windows. MSE* = 10^4 x MSE."""

    model: str
    fit_mse: float
    fit_mape: float
    forecast_mse: float
    forecast_mape: float

    def __post_init__(self):
        for name in ("fit_mse", "fit_mape", "forecast_mse", "forecast_mape"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise DomainError(f"{name} must be finite and nonnegative, got {v}")

    @property
    def fit_mse_star(self) -> float:
        return 1e4 * self.fit_mse

    @property
    def forecast_mse_star(self) -> float:
        return 1e4 * self.forecast_mse


@dataclass(frozen=True)
class BacktestReport:
    country: str
    sex: str
    config: BacktestConfig
    metrics: tuple[ModelMetrics, ...]
    mi_observed: np.ndarray | None
    mi_forecast: dict[str, np.ndarray] | None
    sl_converged: bool | None

    def metrics_for(self, model: str) -> ModelMetrics:
        for m in self.metrics:
            if m.model == model:
                return m
        raise KeyError(model)


def _sl_surfaces(q_surface, config):
    """Fitted and forecast q for the SL model, plus the convergence flag."""
    surv = surface_q_to_survival(q_surface)
    delta = build_l_diff(surv, t0=config.t0, fit_years=config.fit_years)
    params, diag = fit_sl(delta, config.fit)

    fitted_delta = params.fitted_surface()
    q_fit = np.empty_like(fitted_delta)
    for j in range(fitted_delta.shape[1]):
        s = invert_l_diff(fitted_delta[:, j], delta.base_survival)
        q_fit[:, j] = survival_to_q(s)

    rwd = calibrate_rwd(
        np.column_stack([params.alpha1, params.alpha2]), config.fit_years.to_array()
    )
    fc = sl_forecast(params, rwd, delta.base_survival, len(config.forecast_years), mode="central")
    return q_fit, fc.values, diag.converged


def _lc_surfaces(m_fit, config):
    params = fit_lc(m_fit)
    m_hat = np.exp(params.alpha_x[:, None] + params.beta_x[:, None] * params.kappa_t[None, :])
    rwd = calibrate_rwd(params.kappa_t, config.fit_years.to_array())
    fc = lc_forecast(params, rwd, len(config.forecast_years), mode="central")
    return central_rate_to_q(m_hat), fc.values


def _cbd_surfaces(q_fit_obs, config):
    params = fit_cbd(q_fit_obs)
    cx = params.ages.to_array() - params.x_bar
    q_hat = expit(params.kappa1_t[None, :] + cx[:, None] * params.kappa2_t[None, :])
    rwd = calibrate_rwd(
        np.column_stack([params.kappa1_t, params.kappa2_t]), config.fit_years.to_array()
    )
    fc = cbd_forecast(params, rwd, len(config.forecast_years), mode="central")
    return q_hat, fc.values


def run_backtest(
    data: MortalitySurface,
    config: BacktestConfig | None = None,
    country: str = "",
    sex: str = "",
) -> BacktestReport:
    """Fit, forecast, and score every requested model on one rate surface.

    ``data`` must be a central_rate surface covering the age window and the
    years from t0 through the end of the holdout. Observed death
    probabilities are derived under a constant force of mortality within
    each cell.
    """
    if config is None:
        config = BacktestConfig()
    if data.kind is not SurfaceKind.CENTRAL_RATE:
        raise DomainError(f"expected a central_rate surface, got {data.kind.value}")
    span = YearRange(config.t0, config.forecast_years.t_max)
    if not (data.ages.covers(config.ages) and data.years.covers(span)):
        raise DomainError(
            f"data covers ages {data.ages} years {data.years}; "
            f"backtest needs ages {config.ages} years {span}"
        )

    sub = data.subset(ages=config.ages, years=span)
    q_all = MortalitySurface(
        ages=sub.ages, years=sub.years, kind=SurfaceKind.DEATH_PROB,
        values=central_rate_to_q(sub.values),
    )
    q_fit_obs = q_all.subset(years=config.fit_years)
    q_out_obs = q_all.subset(years=config.forecast_years)
    m_fit = sub.subset(years=config.fit_years)

    estimates: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    sl_converged = None
    for model in config.models:
        if model == "SL":
            q_hat_fit, q_hat_out, sl_converged = _sl_surfaces(q_all, config)
        elif model == "LC":
            q_hat_fit, q_hat_out = _lc_surfaces(m_fit, config)
        else:
            q_hat_fit, q_hat_out = _cbd_surfaces(q_fit_obs, config)
        estimates[model] = (q_hat_fit, q_hat_out)

    metrics = []
    for model in MODEL_ORDER:
        if model not in estimates:
            continue
        q_hat_fit, q_hat_out = estimates[model]
        metrics.append(
            ModelMetrics(
                model=model,
                fit_mse=mse(q_fit_obs.values, q_hat_fit),
                fit_mape=mape(q_fit_obs.values, q_hat_fit, config.mape_denominator),
                forecast_mse=mse(q_out_obs.values, q_hat_out),
                forecast_mape=mape(q_out_obs.values, q_hat_out, config.mape_denominator),
            )
        )

    mi_observed = None
    mi_forecast = None
    if config.mi_age is not None:
        i = config.ages.index(config.mi_age)
        ref = config.ref_year
        q_ref = float(q_all.values[i, q_all.years.index(ref)])
        mi_observed = mi_rate(q_out_obs.values[i, :], q_ref)
        mi_forecast = {
            model: mi_rate(estimates[model][1][i, :], q_ref)
            for model in MODEL_ORDER
            if model in estimates
        }

    return BacktestReport(
        country=country,
        sex=sex,
        config=config,
        metrics=tuple(metrics),
        mi_observed=mi_observed,
        mi_forecast=mi_forecast,
        sl_converged=sl_converged,
    )
