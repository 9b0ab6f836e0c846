"""Additive log-space model: piecewise-linear trend plus Fourier seasonality.

The trend is

    g(t) = (k + a(t)·δ) t + (m + a(t)·γ)

with scaled time ``t = (date - t0) / span_days`` and ``a_j(t) = 1`` once
``t >= s_j``.  Binding ``γ_j = -s_j δ_j`` makes ``g`` continuous.  Seasonal
features are evaluated on absolute days since ``t0`` so periods stay in
calendar days whatever the training span.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import as_day, as_days

MODEL_FORMAT_VERSION = 1

# name -> (period in days, default Fourier order)
STANDARD_SEASONALITIES = {
    "weekly": (7.0, 3),
    "monthly": (30.4375, 5),
    "yearly": (365.25, 10),
}


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeScale:
    t0: np.datetime64
    span_days: float

    def __post_init__(self):
        object.__setattr__(self, "t0", as_day(self.t0))
        if not self.span_days > 0:
            raise ValueError("span_days must be positive")
        object.__setattr__(self, "span_days", float(self.span_days))

    def days(self, dates) -> np.ndarray:
        return (as_days(np.atleast_1d(dates)) - self.t0).astype(float)

    def scaled(self, dates) -> np.ndarray:
        return self.days(dates) / self.span_days


@dataclass(frozen=True, eq=False)
class ChangepointGrid:
    locations: np.ndarray = field(default_factory=lambda: _frozen([]))
    deltas: np.ndarray = field(default_factory=lambda: _frozen([]))

    def __post_init__(self):
        s = _frozen(self.locations)
        d = _frozen(self.deltas) if len(self.deltas) else _frozen(np.zeros(s.size))
        if s.ndim != 1 or s.shape != d.shape:
            raise ValueError("locations and deltas must be 1-d and equally long")
        if s.size and (np.any(np.diff(s) <= 0) or s[0] <= 0):
            raise ValueError("changepoint locations must be positive and strictly increasing")
        object.__setattr__(self, "locations", s)
        object.__setattr__(self, "deltas", d)

    def __len__(self):
        return self.locations.size


def indicator(t, grid: ChangepointGrid) -> np.ndarray:
    """a(t): 1 where ``t >= s_j``.  Scalar ``t`` gives a vector, array ``t`` a matrix."""
    t_arr = np.asarray(t, dtype=float)
    a = (t_arr[..., None] >= grid.locations).astype(float)
    return a


@dataclass(frozen=True, eq=False)
class TrendParams:
    k: float
    m: float
    grid: ChangepointGrid = field(default_factory=ChangepointGrid)
    gammas: np.ndarray | None = None  # None -> bound to -s * delta

    def __post_init__(self):
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "m", float(self.m))
        if self.gammas is None:
            g = -self.grid.locations * self.grid.deltas
            object.__setattr__(self, "gammas", _frozen(g))
            object.__setattr__(self, "_bound", True)
        else:
            g = _frozen(self.gammas)
            if g.shape != self.grid.locations.shape:
                raise ValueError("gammas must match the changepoint grid")
            object.__setattr__(self, "gammas", g)
            object.__setattr__(self, "_bound", False)

    @property
    def gamma_bound(self) -> bool:
        return self._bound


def trend_value(t, p: TrendParams):
    t_arr = np.asarray(t, dtype=float)
    a = indicator(t_arr, p.grid)
    rate = p.k + a @ p.grid.deltas
    offset = p.m + a @ p.gammas
    out = rate * t_arr + offset
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SeasonalityBlock:
    name: str
    period_days: float
    order: int
    coefficients: np.ndarray | None = None  # [cos_1, sin_1, cos_2, sin_2, ...]

    def __post_init__(self):
        if self.order < 1 or not self.period_days > 0:
            raise ValueError("seasonality needs order >= 1 and a positive period")
        c = np.zeros(2 * self.order) if self.coefficients is None else self.coefficients
        c = _frozen(c)
        if c.shape != (2 * self.order,):
            raise ValueError(f"{self.name}: expected {2 * self.order} coefficients")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "period_days", float(self.period_days))

    @classmethod
    def standard(cls, name: str, order: int | None = None, coefficients=None):
        period, default_order = STANDARD_SEASONALITIES[name]
        return cls(name, period, order or default_order, coefficients)


def fourier_matrix(days, period: float, order: int) -> np.ndarray:
    """Columns cos(2πn d/P), sin(2πn d/P) for n = 1..order."""
    d = np.asarray(days, dtype=float)
    n = np.arange(1, order + 1)
    x = 2.0 * np.pi * d[:, None] * n[None, :] / period
    out = np.empty((d.size, 2 * order))
    out[:, 0::2] = np.cos(x)
    out[:, 1::2] = np.sin(x)
    return out


def fourier_features(day, block: SeasonalityBlock, t0) -> np.ndarray:
    """Feature vector (or matrix for several dates) of ``block`` relative to ``t0``."""
    scalar = np.ndim(day) == 0
    days = (as_days(np.atleast_1d(day)) - as_day(t0)).astype(float)
    out = fourier_matrix(days, block.period_days, block.order)
    return out[0] if scalar else out


@dataclass(frozen=True, eq=False)
class AdditiveModel:
    trend: TrendParams
    seasonalities: tuple
    timescale: TimeScale
    training_window: tuple
    entity_id: str = ""
    lineage: tuple = ()
    log_space: bool = True
    log_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "seasonalities", tuple(self.seasonalities))
        object.__setattr__(self, "training_window", tuple(as_day(d) for d in self.training_window))
        object.__setattr__(self, "lineage", tuple(dict(e) for e in self.lineage))

    def block(self, name: str) -> SeasonalityBlock | None:
        for b in self.seasonalities:
            if b.name == name:
                return b
        return None

    def with_lineage(self, entry: dict) -> "AdditiveModel":
        return replace(self, lineage=self.lineage + (dict(entry),))


@dataclass(frozen=True, eq=False)
class Forecast:
    dates: np.ndarray
    yhat: np.ndarray
    yhat_log: np.ndarray
    entity_id: str = ""
    lineage: tuple = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "yhat", "yhat_log"])
        for d, y, yl in zip(self.dates, self.yhat, self.yhat_log):
            w.writerow([str(d), repr(float(y)), repr(float(yl))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ComponentDecomposition:
    dates: np.ndarray
    trend: np.ndarray
    seasonal: dict  # block name -> series
    total_log: np.ndarray
    total: np.ndarray

    def to_csv(self) -> str:
        """``date,trend,weekly,monthly,yearly,total_log,total``; absent standard
        blocks are written as zeros, custom blocks follow as extra columns."""
        extra = [n for n in self.seasonal if n not in STANDARD_SEASONALITIES]
        zeros = np.zeros(self.dates.size)
        cols = [self.seasonal.get(n, zeros) for n in STANDARD_SEASONALITIES]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "trend", *STANDARD_SEASONALITIES, "total_log", "total", *extra])
        for i, d in enumerate(self.dates):
            row = [self.trend[i], *(c[i] for c in cols), self.total_log[i], self.total[i]]
            row += [self.seasonal[n][i] for n in extra]
            w.writerow([str(d), *(repr(float(x)) for x in row)])
        return buf.getvalue()


def components(model: AdditiveModel, dates) -> ComponentDecomposition:
    dates = as_days(np.atleast_1d(dates))
    if dates.size == 0:
        raise ValueError("dates must be non-empty")
    ts = model.timescale
    trend = trend_value(ts.scaled(dates), model.trend)
    trend = np.atleast_1d(trend)
    days = ts.days(dates)
    seasonal = {}
    total_log = trend.copy()
    for b in model.seasonalities:
        comp = fourier_matrix(days, b.period_days, b.order) @ b.coefficients
        seasonal[b.name] = comp
        total_log = total_log + comp
    total = np.exp2(total_log) - model.log_offset
    return ComponentDecomposition(dates, trend, seasonal, total_log, total)


def predict(model: AdditiveModel, dates) -> Forecast:
    """Log-space sum of components and its ``exp2`` back-transform."""
    c = components(model, dates)
    return Forecast(c.dates, c.total, c.total_log, model.entity_id, model.lineage)


# -- serialization ---------------------------------------------------------

def model_to_dict(model: AdditiveModel) -> dict:
    cps = []
    for j, (s, d) in enumerate(zip(model.trend.grid.locations, model.trend.grid.deltas)):
        cp = {"s": float(s), "delta": float(d)}
        if not model.trend.gamma_bound:
            cp["gamma"] = float(model.trend.gammas[j])
        cps.append(cp)
    return {
        "version": MODEL_FORMAT_VERSION,
        "entity_id": model.entity_id,
        "t0": str(model.timescale.t0),
        "span_days": model.timescale.span_days,
        "k": model.trend.k,
        "m": model.trend.m,
        "changepoints": cps,
        "seasonalities": [
            {
                "name": b.name,
                "period_days": b.period_days,
                "order": b.order,
                "coefficients": [float(c) for c in b.coefficients],
            }
            for b in model.seasonalities
        ],
        "log_space": model.log_space,
        "log_offset": model.log_offset,
        "training_window": [str(d) for d in model.training_window],
        "lineage": [dict(e) for e in model.lineage],
    }


def model_from_dict(d: dict) -> AdditiveModel:
    if d.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    cps = d["changepoints"]
    grid = ChangepointGrid([c["s"] for c in cps], [c["delta"] for c in cps])
    gammas = None
    if cps and all("gamma" in c for c in cps):
        gammas = [c["gamma"] for c in cps]
    trend = TrendParams(d["k"], d["m"], grid, gammas)
    blocks = [
        SeasonalityBlock(b["name"], b["period_days"], b["order"], b["coefficients"])
        for b in d["seasonalities"]
    ]
    return AdditiveModel(
        trend=trend,
        seasonalities=blocks,
        timescale=TimeScale(d["t0"], d["span_days"]),
        training_window=tuple(d["training_window"]),
        entity_id=d.get("entity_id", ""),
        lineage=tuple(d.get("lineage", ())),
        log_space=d.get("log_space", True),
        log_offset=d.get("log_offset", 0.0),
    )


def model_to_json(model: AdditiveModel) -> str:
    # json emits floats via repr, which round-trips exactly
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def model_from_json(text: str) -> AdditiveModel:
    return model_from_dict(json.loads(text))
