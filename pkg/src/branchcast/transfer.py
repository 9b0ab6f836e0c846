"""Model transfer between entities: zero-shot reuse and anchored adaptation."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .data import DailySeries
from .errors import ConfigurationError, DataError
from .fitting import (
    MIN_OBSERVATIONS,
    FitDiagnostics,
    build_design_matrix,
    model_parameters,
    ridge_gradient,
    ridge_objective,
    ridge_solve,
)
from .model import (
    AdditiveModel,
    ChangepointGrid,
    Forecast,
    SeasonalityBlock,
    TimeScale,
    TrendParams,
    predict,
)

ZERO_SHOT = "zero_shot"
ADAPTED = "adapted"

# m is anchored at this fraction of lambda_anchor when adapt_level is on
LEVEL_ANCHOR_FRACTION = 0.1


@dataclass(frozen=True)
class AdaptConfig:
    n_new_changepoints: int = 5
    lambda_anchor: float = 10.0
    adapt_seasonality: bool = True
    adapt_level: bool = True
    lambda_delta: float = 1.0  # penalty on the new changepoints only

    def __post_init__(self):
        if self.lambda_anchor < 0 or self.n_new_changepoints < 0 or self.lambda_delta < 0:
            raise ConfigurationError("adapt config values must be non-negative")

    @classmethod
    def from_dict(cls, d) -> "AdaptConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown adapt config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_new_changepoints": self.n_new_changepoints,
            "lambda_anchor": self.lambda_anchor,
            "adapt_seasonality": self.adapt_seasonality,
            "adapt_level": self.adapt_level,
            "lambda_delta": self.lambda_delta,
        }


@dataclass(frozen=True)
class TransferRecord:
    source_entity: str
    target_entity: str
    mode: str
    adapt_window: tuple | None = None

    def __post_init__(self):
        if self.mode not in (ZERO_SHOT, ADAPTED):
            raise ValueError(f"unknown transfer mode {self.mode!r}")
        if self.mode == ADAPTED and self.adapt_window is None:
            raise ValueError("an adapted transfer needs its adaptation window")

    def to_dict(self) -> dict:
        return {
            "event": "transfer",
            "source_entity": self.source_entity,
            "target_entity": self.target_entity,
            "mode": self.mode,
            "adapt_window": [str(d) for d in self.adapt_window] if self.adapt_window else None,
        }


def zero_shot_model(source: AdditiveModel, target_entity: str = "") -> AdditiveModel:
    """The source model relabelled for ``target_entity``; parameters untouched."""
    rec = TransferRecord(source.entity_id, target_entity, ZERO_SHOT)
    return replace(source.with_lineage(rec.to_dict()), entity_id=target_entity or source.entity_id)


def zero_shot_forecast(source: AdditiveModel, target_dates, target_entity: str = "") -> Forecast:
    return predict(zero_shot_model(source, target_entity), target_dates)


def _rescale(model: AdditiveModel, new_span: float) -> AdditiveModel:
    """Same trend function expressed on a longer scaled-time unit."""
    ts = model.timescale
    if new_span == ts.span_days:
        return model
    r = new_span / ts.span_days
    tr = model.trend
    grid = ChangepointGrid(tr.grid.locations / r, tr.grid.deltas * r)
    trend = TrendParams(tr.k * r, tr.m, grid, None if tr.gamma_bound else tr.gammas)
    return replace(model, trend=trend, timescale=TimeScale(ts.t0, new_span))


def adapt(source: AdditiveModel, target: DailySeries, cfg: AdaptConfig = AdaptConfig()):
    """Re-fit ``source`` on the target window, anchored to the source parameters.

    The time scale is stretched so scaled time 1 is the end of the adaptation
    window (an exact reparametrization of the trend), ``n_new_changepoints``
    fresh changepoints are spread uniformly inside the window, and the
    objective is

        Σ (y - ŷ)² + λ_anchor ||θ_shared - θ_source||² + λ_δ ||δ_new||²

    with the level ``m`` anchored at a tenth of ``λ_anchor``.  Parameters
    switched off by ``adapt_level`` / ``adapt_seasonality`` stay at their
    source values.  Returns ``(model, diagnostics)``.
    """
    started = time.perf_counter()
    if not target.is_log_space:
        raise DataError("adapt expects a log2-transformed target series")
    if target.n_observed < MIN_OBSERVATIONS:
        raise DataError(
            f"{target.entity_id}: {target.n_observed} adaptation observations, "
            f"need >= {MIN_OBSERVATIONS}"
        )
    dates = target.observed_dates()
    y = target.observed_values()
    a0, a1 = dates[0], dates[-1]
    if a0 <= source.training_window[0]:
        raise DataError("adaptation window must start after the source training start")

    ts = source.timescale
    new_span = max(ts.span_days, float((a1 - ts.t0).astype(int)))
    base = _rescale(source, new_span)
    timescale = base.timescale
    free_gamma = not base.trend.gamma_bound

    n_old = len(base.trend.grid)
    n_new = cfg.n_new_changepoints
    width = float((a1 - a0).astype(int))
    if n_new and width < n_new + 1:
        raise DataError(f"adaptation window too short for {n_new} changepoints")
    new_s = (float((a0 - ts.t0).astype(int))
             + np.arange(1, n_new + 1) * width / (n_new + 1)) / new_span
    old_s = base.trend.grid.locations
    all_s = np.concatenate([old_s, new_s])
    order = np.argsort(all_s, kind="stable")
    is_new = np.concatenate([np.zeros(n_old, bool), np.ones(n_new, bool)])[order]
    grid = ChangepointGrid(all_s[order])
    n_cp = len(grid)

    prior_delta = np.concatenate([base.trend.grid.deltas, np.zeros(n_new)])[order]
    prior = [np.array([base.trend.k, base.trend.m]), prior_delta]
    lam = cfg.lambda_anchor
    cp_pen = np.where(is_new, cfg.lambda_delta, lam)
    penalty = [np.array([lam, lam * LEVEL_ANCHOR_FRACTION]), cp_pen]
    free = [np.array([True, cfg.adapt_level]), np.ones(n_cp, bool)]
    if free_gamma:
        prior.append(np.concatenate([base.trend.gammas, np.zeros(n_new)])[order])
        penalty.append(cp_pen)
        free.append(np.ones(n_cp, bool))
    for b in base.seasonalities:
        prior.append(b.coefficients)
        penalty.append(np.full(b.coefficients.size, lam))
        free.append(np.full(b.coefficients.size, cfg.adapt_seasonality))
    prior, penalty, free = map(np.concatenate, (prior, penalty, free))

    X = build_design_matrix(dates, grid, base.seasonalities, timescale, free_gamma)
    theta = prior.copy()
    y_free = y - X[:, ~free] @ prior[~free]
    theta[free], cond = ridge_solve(X[:, free], y_free, penalty[free], prior[free])

    k, m = theta[0], theta[1]
    pos = 2
    deltas = theta[pos:pos + n_cp]
    pos += n_cp
    gammas = None
    if free_gamma:
        gammas = theta[pos:pos + n_cp]
        pos += n_cp
    blocks = []
    for b in base.seasonalities:
        blocks.append(SeasonalityBlock(b.name, b.period_days, b.order, theta[pos:pos + 2 * b.order]))
        pos += 2 * b.order

    rec = TransferRecord(source.entity_id, target.entity_id, ADAPTED, (a0, a1))
    model = replace(
        base,
        trend=TrendParams(k, m, ChangepointGrid(grid.locations, deltas), gammas),
        seasonalities=tuple(blocks),
        training_window=(source.training_window[0], a1),
        entity_id=target.entity_id,
        lineage=base.lineage + (rec.to_dict(),),
    )
    penalty_full = np.where(free, penalty, 0.0)
    diag = FitDiagnostics(
        objective_value=ridge_objective(X, y, theta, penalty_full, prior),
        gradient_inf_norm=float(np.max(np.abs(
            ridge_gradient(X, y, theta, penalty_full, prior)[free]))) if free.any() else 0.0,
        n_rows=int(y.size),
        condition_estimate=cond,
        elapsed=time.perf_counter() - started,
    )
    return model, diag


def changepoint_weight_profile(model: AdditiveModel):
    """``[(date, |δ_j|), ...]`` ordered by changepoint date."""
    ts = model.timescale
    days = np.rint(model.trend.grid.locations * ts.span_days).astype(int)
    dates = ts.t0 + days.astype("timedelta64[D]")
    return [(d, float(abs(w))) for d, w in zip(dates, model.trend.grid.deltas)]
