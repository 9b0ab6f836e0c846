"""Ridge least-squares estimation of the additive model and scenario splits.

With the changepoint offsets bound to ``γ_j = -s_j δ_j`` the trend column for
changepoint ``j`` is ``a_j(t) (t - s_j)`` and the whole model is linear in
``θ = (k, m, δ, seasonal coefficients)``.  Fitting minimizes

    ||y - Xθ||² + Σ_i λ_i (θ_i - μ_i)²

(``μ = 0`` for a plain fit, the source parameters when adapting) through the
penalized normal equations and a Cholesky factorization.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .data import DailySeries, as_day, as_days
from .errors import ConfigurationError, DataError, NumericalError, ScenarioInfeasibleError
from .model import (
    STANDARD_SEASONALITIES,
    AdditiveModel,
    ChangepointGrid,
    SeasonalityBlock,
    TimeScale,
    TrendParams,
    fourier_matrix,
)

MIN_OBSERVATIONS = 14
_MAX_CONDITION = 1e15

DEFAULT_SEASONALITIES = (
    ("weekly", 7.0, 3),
    ("yearly", 365.25, 10),
)


@dataclass(frozen=True)
class FitConfig:
    n_changepoints: int = 25
    changepoint_range: float = 0.8
    lambda_delta: float = 1.0
    lambda_season: float = 0.1
    seasonalities: tuple = DEFAULT_SEASONALITIES
    free_gamma: bool = False

    def __post_init__(self):
        if self.n_changepoints < 0:
            raise ConfigurationError("n_changepoints must be >= 0")
        if not 0 < self.changepoint_range <= 1:
            raise ConfigurationError("changepoint_range must lie in (0, 1]")
        if self.lambda_delta < 0 or self.lambda_season < 0:
            raise ConfigurationError("penalties must be non-negative")
        specs = []
        for spec in self.seasonalities:
            if isinstance(spec, str):
                period, order = STANDARD_SEASONALITIES[spec]
                spec = (spec, period, order)
            name, period, order = spec
            specs.append((str(name), float(period), int(order)))
        object.__setattr__(self, "seasonalities", tuple(specs))

    @classmethod
    def from_dict(cls, d) -> "FitConfig":
        d = dict(d)
        if "seasonalities" in d:
            d["seasonalities"] = tuple(
                s if isinstance(s, str) else (s["name"], s["period_days"], s["order"])
                if isinstance(s, dict) else tuple(s)
                for s in d["seasonalities"]
            )
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown fit config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_changepoints": self.n_changepoints,
            "changepoint_range": self.changepoint_range,
            "lambda_delta": self.lambda_delta,
            "lambda_season": self.lambda_season,
            "seasonalities": [
                {"name": n, "period_days": p, "order": o} for n, p, o in self.seasonalities
            ],
            "free_gamma": self.free_gamma,
        }


@dataclass(frozen=True)
class FitDiagnostics:
    objective_value: float
    gradient_inf_norm: float
    n_rows: int
    condition_estimate: float
    elapsed: float  # seconds

    def to_dict(self) -> dict:
        return {
            "objective_value": self.objective_value,
            "gradient_inf_norm": self.gradient_inf_norm,
            "n_rows": self.n_rows,
            "condition_estimate": self.condition_estimate,
            "elapsed": self.elapsed,
        }


def place_changepoints(window, cfg: FitConfig) -> np.ndarray:
    """Uniform locations ``s_j = j * range / (n + 1)``, j = 1..n, in scaled time."""
    start, end = as_day(window[0]), as_day(window[1])
    n_days = int((end - start).astype(int)) + 1
    if n_days < cfg.n_changepoints + 2:
        raise ConfigurationError(
            f"window of {n_days} days is too short for {cfg.n_changepoints} changepoints"
        )
    j = np.arange(1, cfg.n_changepoints + 1)
    return j * cfg.changepoint_range / (cfg.n_changepoints + 1)


def build_design_matrix(dates, grid: ChangepointGrid, seasonalities, timescale: TimeScale,
                        free_gamma: bool = False) -> np.ndarray:
    """Columns ``[t, 1, changepoint ramps, (changepoint steps), Fourier blocks]``.

    ``seasonalities`` is a sequence of ``(name, period, order)`` tuples or
    :class:`SeasonalityBlock` objects.  The changepoint ramp is
    ``a_j(t) (t - s_j)`` when γ is bound; with ``free_gamma`` the ramp is
    ``a_j(t) t`` and an extra step column ``a_j(t)`` carries γ_j.
    """
    t = timescale.scaled(dates)
    days = timescale.days(dates)
    s = grid.locations
    a = (t[:, None] >= s[None, :]).astype(float)
    cols = [t[:, None], np.ones((t.size, 1))]
    if free_gamma:
        cols += [a * t[:, None], a]
    else:
        cols.append(a * (t[:, None] - s[None, :]))
    for spec in seasonalities:
        if isinstance(spec, SeasonalityBlock):
            period, order = spec.period_days, spec.order
        else:
            _, period, order = spec
        cols.append(fourier_matrix(days, period, order))
    return np.hstack(cols)


def model_parameters(model: AdditiveModel) -> np.ndarray:
    """Parameter vector in design-matrix column order."""
    tr = model.trend
    parts = [[tr.k, tr.m], tr.grid.deltas]
    if not tr.gamma_bound:
        parts.append(tr.gammas)
    parts += [b.coefficients for b in model.seasonalities]
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def _unpack(theta, n_cp, seasonalities, free_gamma):
    k, m = theta[0], theta[1]
    pos = 2
    deltas = theta[pos:pos + n_cp]
    pos += n_cp
    gammas = None
    if free_gamma:
        gammas = theta[pos:pos + n_cp]
        pos += n_cp
    coefs = []
    for _, _, order in seasonalities:
        coefs.append(theta[pos:pos + 2 * order])
        pos += 2 * order
    return k, m, deltas, gammas, coefs


def ridge_objective(X, y, theta, penalty, prior=None) -> float:
    prior = np.zeros_like(theta) if prior is None else prior
    r = y - X @ theta
    return float(r @ r + np.sum(penalty * (theta - prior) ** 2))


def ridge_gradient(X, y, theta, penalty, prior=None) -> np.ndarray:
    prior = np.zeros_like(theta) if prior is None else prior
    return 2.0 * (penalty * (theta - prior) - X.T @ (y - X @ theta))


def ridge_solve(X, y, penalty, prior=None):
    """Minimize ``||y - Xθ||² + Σ penalty_i (θ_i - prior_i)²``.

    Solved for the offset ``θ - prior`` so very large penalties do not swamp
    the right-hand side.  Returns ``(theta, condition_estimate)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    penalty = np.asarray(penalty, dtype=float)
    prior = np.zeros(X.shape[1]) if prior is None else np.asarray(prior, dtype=float)
    A = X.T @ X
    A[np.diag_indices_from(A)] += penalty
    b = X.T @ (y - X @ prior)
    cond = float(np.linalg.cond(A)) if A.size else 1.0
    if not np.isfinite(cond) or cond > _MAX_CONDITION:
        raise NumericalError(
            f"normal equations are ill-conditioned (condition estimate {cond:.3g})", cond
        )
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise NumericalError("normal equations are not positive definite", cond) from None
    step = linalg.cho_solve(factor, b)
    # one round of iterative refinement
    step += linalg.cho_solve(factor, b - A @ step)
    return prior + step, cond


def _penalty_vector(n_cp, seasonalities, cfg: FitConfig) -> np.ndarray:
    n_cp_cols = 2 * n_cp if cfg.free_gamma else n_cp
    n_season = sum(2 * o for _, _, o in seasonalities)
    return np.concatenate([
        [0.0, 0.0],
        np.full(n_cp_cols, cfg.lambda_delta),
        np.full(n_season, cfg.lambda_season),
    ])


def fit(series: DailySeries, cfg: FitConfig = FitConfig()):
    """Fit an :class:`AdditiveModel` to a log-space daily series.

    Gap days are skipped.  The time origin is the first observed day and the
    scaled-time unit is the observed span.  Returns ``(model, diagnostics)``.
    """
    started = time.perf_counter()
    if not series.is_log_space:
        raise DataError("fit expects a log2-transformed series")
    if series.n_observed < MIN_OBSERVATIONS:
        raise DataError(
            f"{series.entity_id}: {series.n_observed} observations, need >= {MIN_OBSERVATIONS}"
        )
    dates = series.observed_dates()
    y = series.observed_values()
    window = (dates[0], dates[-1])
    timescale = TimeScale(dates[0], float((dates[-1] - dates[0]).astype(int)))
    grid = ChangepointGrid(place_changepoints(window, cfg))

    X = build_design_matrix(dates, grid, cfg.seasonalities, timescale, cfg.free_gamma)
    penalty = _penalty_vector(len(grid), cfg.seasonalities, cfg)
    theta, cond = ridge_solve(X, y, penalty)

    k, m, deltas, gammas, coefs = _unpack(theta, len(grid), cfg.seasonalities, cfg.free_gamma)
    trend = TrendParams(k, m, ChangepointGrid(grid.locations, deltas), gammas)
    blocks = [SeasonalityBlock(n, p, o, c) for (n, p, o), c in zip(cfg.seasonalities, coefs)]
    model = AdditiveModel(
        trend=trend,
        seasonalities=blocks,
        timescale=timescale,
        training_window=window,
        entity_id=series.entity_id,
        lineage=({"event": "fit", "entity_id": series.entity_id,
                  "window": [str(window[0]), str(window[1])]},),
        log_offset=series.log_offset,
    )
    diag = FitDiagnostics(
        objective_value=ridge_objective(X, y, theta, penalty),
        gradient_inf_norm=float(np.max(np.abs(ridge_gradient(X, y, theta, penalty)))),
        n_rows=int(y.size),
        condition_estimate=cond,
        elapsed=time.perf_counter() - started,
    )
    return model, diag


# -- scenario windows --------------------------------------------------------

SCENARIO_IDS = ("1a", "1b", "2", "3")


@dataclass(frozen=True)
class ScenarioConfig:
    """Train/adapt/test windows in calendar years.

    ``train_start_year=None`` trains on all history up to ``train_end_year``.
    """

    id: str
    train_end_year: int
    test_year: int
    train_start_year: int | None = None
    adapt_year: int | None = None
    horizon_months: int = 12

    def __post_init__(self):
        if self.id not in SCENARIO_IDS:
            raise ConfigurationError(f"unknown scenario {self.id!r}")
        if self.id == "3" and self.adapt_year is None:
            raise ConfigurationError("scenario 3 needs an adaptation year")
        if self.id in ("1a", "1b", "2") and self.adapt_year is not None:
            raise ConfigurationError(f"scenario {self.id} has no adaptation window")
        if self.horizon_months not in (1, 6, 12):
            raise ConfigurationError("horizon_months must be 1, 6 or 12")

    @classmethod
    def preset(cls, scenario_id: str, test_year: int = 2017, horizon_months: int = 12):
        """The four standard scenarios relative to ``test_year``."""
        y = test_year
        table = {
            "1a": dict(train_start_year=y - 1, train_end_year=y - 1),
            "1b": dict(train_end_year=y - 1),
            "2": dict(train_end_year=y - 1),
            "3": dict(train_end_year=y - 2, adapt_year=y - 1),
        }
        if scenario_id not in table:
            raise ConfigurationError(f"unknown scenario {scenario_id!r}")
        return cls(scenario_id, test_year=y, horizon_months=horizon_months, **table[scenario_id])

    @property
    def is_transfer(self) -> bool:
        return self.id in ("2", "3")

    def train_window(self, series_start=None):
        end = np.datetime64(f"{self.train_end_year}-12-31", "D")
        if self.train_start_year is not None:
            return np.datetime64(f"{self.train_start_year}-01-01", "D"), end
        return (as_day(series_start) if series_start is not None else None), end

    def adapt_window(self):
        if self.adapt_year is None:
            return None
        return (np.datetime64(f"{self.adapt_year}-01-01", "D"),
                np.datetime64(f"{self.adapt_year}-12-31", "D"))

    def test_window(self):
        start = np.datetime64(f"{self.test_year}-01", "M")
        end = start + np.timedelta64(self.horizon_months, "M")
        return start.astype("datetime64[D]"), end.astype("datetime64[D]") - np.timedelta64(1, "D")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "train_start_year": self.train_start_year,
            "train_end_year": self.train_end_year,
            "adapt_year": self.adapt_year,
            "test_year": self.test_year,
            "horizon_months": self.horizon_months,
        }


def _require(series: DailySeries, start, end, what: str):
    if series.dates.size == 0 or series.start_date > start or series.end_date < end:
        have = (f"{series.start_date}..{series.end_date}" if series.dates.size else "nothing")
        raise ScenarioInfeasibleError(
            f"{series.entity_id}: {what} window {start}..{end} not covered (series has {have})"
        )


def split_train_test(series: DailySeries, scenario: ScenarioConfig):
    """Cut ``series`` into ``(train, adapt or None, test)`` for ``scenario``."""
    if series.dates.size == 0:
        raise ScenarioInfeasibleError(f"{series.entity_id}: empty series")
    train_start, train_end = scenario.train_window(series.start_date)
    if train_start > train_end:
        raise ScenarioInfeasibleError(
            f"{series.entity_id}: series starts {series.start_date}, after training end {train_end}"
        )
    _require(series, train_start, train_end, "training")
    train = series.window(train_start, train_end)
    adapt = None
    if scenario.adapt_window() is not None:
        a0, a1 = scenario.adapt_window()
        _require(series, a0, a1, "adaptation")
        adapt = series.window(a0, a1)
    t0, t1 = scenario.test_window()
    _require(series, t0, t1, "test")
    return train, adapt, series.window(t0, t1)
