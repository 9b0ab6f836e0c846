"""Forecast metrics, the seasonal naive baseline and the scenario runner."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .data import DailySeries, as_day, as_days, log2_transform, normalize
from .errors import (
    BranchcastError,
    EvaluationError,
    ScenarioInfeasibleError,
    UndefinedComparisonError,
)
from .fitting import FitConfig, ScenarioConfig, fit, split_train_test
from .model import AdditiveModel, Forecast, predict
from .transfer import AdaptConfig, adapt, zero_shot_model

logger = logging.getLogger(__name__)

__all__ = [
    "ScenarioConfig", "EvaluationReport", "TransferMatrix", "MatrixSummary", "ScenarioResult",
    "mape", "rmse", "seasonal_naive", "monthly_average_mape", "percentage_change",
    "run_scenario", "transfer_matrix_summary", "compare_scenarios",
]


def _aligned(actual: DailySeries, forecast: Forecast):
    if actual.is_log_space:
        raise EvaluationError("metrics expect observation-space actuals")
    f_dates = as_days(forecast.dates)
    common, ia, jf = np.intersect1d(actual.dates, f_dates, return_indices=True)
    if common.size == 0:
        raise EvaluationError(f"{actual.entity_id}: forecast and actuals share no dates")
    return common, actual.values[ia], np.asarray(forecast.yhat, dtype=float)[jf]


def mape(actual: DailySeries, forecast: Forecast):
    """``(percent, n_excluded)`` over common days with a positive actual."""
    _, y, yhat = _aligned(actual, forecast)
    ok = np.isfinite(y) & (y > 0) & np.isfinite(yhat)
    if not ok.any():
        raise EvaluationError(f"{actual.entity_id}: no valid days for MAPE")
    err = np.abs(y[ok] - yhat[ok]) / y[ok]
    return 100.0 * float(np.mean(err)), int((~ok).sum())


def rmse(actual: DailySeries, forecast: Forecast) -> float:
    _, y, yhat = _aligned(actual, forecast)
    ok = np.isfinite(y) & np.isfinite(yhat)
    if not ok.any():
        raise EvaluationError(f"{actual.entity_id}: no valid days for RMSE")
    return float(np.sqrt(np.mean((y[ok] - yhat[ok]) ** 2)))


def _naive_source(d: date) -> date:
    if d.month == 2 and d.day == 29:
        return date(d.year - 1, 2, 28)
    return date(d.year - 1, d.month, d.day)


def seasonal_naive(history: DailySeries, test_window) -> Forecast:
    """Each day takes the value of the same calendar date one year earlier.

    Feb 29 reads Feb 28.  When that day is a gap the nearest day within
    three days sharing the forecast day's weekday is used instead; otherwise
    the forecast is ``NaN`` (and metrics skip it).
    """
    start, end = as_day(test_window[0]), as_day(test_window[1])
    days = np.arange(start, end + np.timedelta64(1, "D"), dtype="datetime64[D]")
    yhat = np.full(days.size, np.nan)
    for i, d64 in enumerate(days):
        d = d64.astype(date)
        src = _naive_source(d)
        v = history.value_on(src)
        if math.isnan(v):
            for off in (-1, 1, -2, 2, -3, 3):
                cand = src + timedelta(days=off)
                if cand.weekday() == d.weekday():
                    v = history.value_on(cand)
                    if not math.isnan(v):
                        break
        yhat[i] = v
    if np.all(np.isnan(yhat)):
        raise EvaluationError(f"{history.entity_id}: no previous-year values for {start}..{end}")
    with np.errstate(divide="ignore", invalid="ignore"):
        yhat_log = np.where(yhat > 0, np.log2(np.where(yhat > 0, yhat, 1.0)), np.nan)
    return Forecast(days, yhat, yhat_log, history.entity_id,
                    ({"event": "seasonal_naive", "entity_id": history.entity_id},))


def _months(start, end):
    m0 = as_day(start).astype("datetime64[M]")
    m1 = as_day(end).astype("datetime64[M]")
    return np.arange(m0, m1 + np.timedelta64(1, "M"), dtype="datetime64[M]")


def monthly_average_mape(actual: DailySeries, forecast: Forecast, test_window):
    """Per-calendar-month MAPE and their mean.

    Returns ``(monthly, mean)``; months without a valid day are ``NaN`` in
    ``monthly`` and left out of the mean.
    """
    months = _months(*test_window)
    monthly = np.full(months.size, np.nan)
    for i, m in enumerate(months):
        first = m.astype("datetime64[D]")
        last = (m + np.timedelta64(1, "M")).astype("datetime64[D]") - np.timedelta64(1, "D")
        part = actual.window(first, last)
        if part.dates.size == 0:
            logger.warning("%s: no actuals in %s, month skipped", actual.entity_id, m)
            continue
        try:
            monthly[i], _ = mape(part, forecast)
        except EvaluationError:
            logger.warning("%s: no valid days in %s, month skipped", actual.entity_id, m)
    if np.all(np.isnan(monthly)):
        raise EvaluationError(f"{actual.entity_id}: no month with valid days")
    return monthly, float(np.nanmean(monthly))


def percentage_change(perf1: float, perf2: float) -> float:
    """``(perf1 / perf2 - 1) * 100``."""
    if perf2 == 0:
        raise UndefinedComparisonError("comparison against a zero performance is undefined")
    return (perf1 / perf2 - 1.0) * 100.0


@dataclass
class EvaluationReport:
    entity_id: str
    scenario: str
    mape_monthly: list
    mape_mean: float
    mape_pooled: float
    rmse: float
    n_excluded_days: int
    baseline_mape: float
    comparisons: dict = field(default_factory=dict)
    source_entity: str | None = None
    mode: str = "isolated"
    windows: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "scenario": self.scenario,
            "mode": self.mode,
            "source_entity": self.source_entity,
            "mape_monthly": [None if math.isnan(v) else v for v in self.mape_monthly],
            "mape_mean": self.mape_mean,
            "mape_pooled": self.mape_pooled,
            "rmse": self.rmse,
            "n_excluded_days": self.n_excluded_days,
            "baseline_mape": self.baseline_mape,
            "comparisons": dict(self.comparisons),
            "windows": dict(self.windows),
        }


def _sample_sd(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


@dataclass(frozen=True)
class MatrixSummary:
    row_avg: np.ndarray  # per target
    row_sd: np.ndarray
    col_avg: np.ndarray  # per source
    col_sd: np.ndarray
    best_per_target: list  # source label per target row

    def to_dict(self, matrix: "TransferMatrix") -> dict:
        return {
            "row_avg": dict(zip(matrix.targets, map(float, self.row_avg))),
            "row_sd": dict(zip(matrix.targets, map(float, self.row_sd))),
            "col_avg": dict(zip(matrix.sources, map(float, self.col_avg))),
            "col_sd": dict(zip(matrix.sources, map(float, self.col_sd))),
            "best_per_target": dict(zip(matrix.targets, self.best_per_target)),
        }


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """MAPE per (target row, source column); ``NaN`` marks undefined cells."""

    sources: list
    targets: list
    cells: np.ndarray

    def cell(self, source, target) -> float:
        return float(self.cells[self.targets.index(target), self.sources.index(source)])

    def to_csv(self) -> str:
        """Target rows, source columns, trailing AVG/SD and best source, then
        AVG and SD rows over sources."""
        s = transfer_matrix_summary(self)
        fmt = lambda v: "" if math.isnan(v) else repr(float(v))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", *self.sources, "AVG", "SD", "best_source"])
        for i, t in enumerate(self.targets):
            w.writerow([t, *(fmt(v) for v in self.cells[i]), fmt(s.row_avg[i]), fmt(s.row_sd[i]),
                        s.best_per_target[i] or ""])
        w.writerow(["AVG", *(fmt(v) for v in s.col_avg), "", "", ""])
        w.writerow(["SD", *(fmt(v) for v in s.col_sd), "", "", ""])
        return buf.getvalue()


def transfer_matrix_summary(matrix: TransferMatrix) -> MatrixSummary:
    """Row/column averages and sample standard deviations over defined cells,
    plus the best (lowest) source per target; ties go to the earlier source."""
    cells = np.asarray(matrix.cells, dtype=float)

    def stats(vectors):
        avg, sd = [], []
        for v in vectors:
            v = v[~np.isnan(v)]
            avg.append(float(np.mean(v)) if v.size else math.nan)
            sd.append(_sample_sd(v) if v.size else math.nan)
        return np.array(avg), np.array(sd)

    row_avg, row_sd = stats(cells)
    col_avg, col_sd = stats(cells.T)
    best = []
    for row in cells:
        best.append(None if np.all(np.isnan(row)) else matrix.sources[int(np.nanargmin(row))])
    return MatrixSummary(row_avg, row_sd, col_avg, col_sd, best)


@dataclass
class ScenarioResult:
    scenario: ScenarioConfig
    reports: dict  # entity -> EvaluationReport (best case for transfer scenarios)
    models: dict  # entity -> model behind its report
    failures: dict = field(default_factory=dict)  # entity -> message
    matrix: TransferMatrix | None = None
    cell_reports: dict = field(default_factory=dict)  # (source, target) -> EvaluationReport

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario.to_dict(),
            "reports": {e: r.to_dict() for e, r in self.reports.items()},
            "failures": dict(self.failures),
        }
        if self.matrix is not None:
            summary = transfer_matrix_summary(self.matrix)
            out["matrix"] = {
                "sources": list(self.matrix.sources),
                "targets": list(self.matrix.targets),
                "cells": [[None if math.isnan(v) else float(v) for v in row]
                          for row in self.matrix.cells],
                **summary.to_dict(self.matrix),
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _evaluate(model, test, baseline, scenario, test_window, **extra) -> EvaluationReport:
    fc = predict(model, test.dates)
    monthly, mean = monthly_average_mape(test, fc, test_window)
    pooled, n_excl = mape(test, fc)
    _, base_mean = monthly_average_mape(test, baseline, test_window)
    return EvaluationReport(
        entity_id=test.entity_id,
        scenario=scenario.id,
        mape_monthly=[float(v) for v in monthly],
        mape_mean=mean,
        mape_pooled=pooled,
        rmse=rmse(test, fc),
        n_excluded_days=n_excl,
        baseline_mape=base_mean,
        comparisons={"baseline": percentage_change(mean, base_mean)},
        **extra,
    )


def _windows_dict(scenario, train):
    out = {"train": [str(train.start_date), str(train.end_date)]}
    if scenario.adapt_window() is not None:
        out["adapt"] = [str(d) for d in scenario.adapt_window()]
    out["test"] = [str(d) for d in scenario.test_window()]
    return out


def run_scenario(entities: dict, scenario: ScenarioConfig, fit_cfg: FitConfig = FitConfig(),
                 adapt_cfg: AdaptConfig = AdaptConfig(), normalize_series: bool = False) -> ScenarioResult:
    """Run one scenario over ``entities`` (entity id -> observation-space series).

    Isolated scenarios fit each entity on its own training window.  Transfer
    scenarios fit every entity as a source and apply it to every other
    entity, zero-shot (``2``) or after adaptation on the target's adaptation
    window (``3``).  Entities that do not cover the windows are reported in
    ``failures`` and skipped.
    """
    test_window = scenario.test_window()
    parts, failures = {}, {}
    for eid, series in entities.items():
        if normalize_series:
            series, _ = normalize(series)
        try:
            train, adapt_part, test = split_train_test(series, scenario)
            history = series.window(None, test_window[0] - np.timedelta64(1, "D"))
            baseline = seasonal_naive(history, test_window)
        except BranchcastError as exc:
            failures[eid] = str(exc)
            logger.warning("%s", exc)
            continue
        parts[eid] = (train, adapt_part, test, baseline)

    if not scenario.is_transfer:
        reports, models = {}, {}
        for eid, (train, _, test, baseline) in parts.items():
            try:
                model, _ = fit(log2_transform(train), fit_cfg)
                reports[eid] = _evaluate(model, test, baseline, scenario, test_window,
                                         windows=_windows_dict(scenario, train))
                models[eid] = model
            except BranchcastError as exc:
                failures[eid] = str(exc)
        return ScenarioResult(scenario, reports, models, failures)

    sources = {}
    for eid, (train, *_rest) in parts.items():
        try:
            sources[eid], _ = fit(log2_transform(train), fit_cfg)
        except BranchcastError as exc:
            failures[eid] = str(exc)
    ids = [e for e in parts if e not in failures]
    cells = np.full((len(ids), len(ids)), np.nan)
    cell_reports, cell_models = {}, {}
    for j, src in enumerate(ids):
        for i, tgt in enumerate(ids):
            if src == tgt:
                continue
            train, adapt_part, test, baseline = parts[tgt]
            if scenario.id == "2":
                model = zero_shot_model(sources[src], tgt)
                mode = "zero_shot"
            else:
                model, _ = adapt(sources[src], log2_transform(adapt_part), adapt_cfg)
                mode = "adapted"
            rep = _evaluate(model, test, baseline, scenario, test_window,
                            source_entity=src, mode=mode,
                            windows=_windows_dict(scenario, parts[src][0]))
            cells[i, j] = rep.mape_mean
            cell_reports[(src, tgt)] = rep
            cell_models[(src, tgt)] = model
    matrix = TransferMatrix(ids, ids, cells)
    summary = transfer_matrix_summary(matrix)
    reports, models = {}, {}
    for tgt, best in zip(ids, summary.best_per_target):
        if best is not None:
            reports[tgt] = cell_reports[(best, tgt)]
            models[tgt] = cell_models[(best, tgt)]
    return ScenarioResult(scenario, reports, models, failures, matrix, cell_reports)


def compare_scenarios(results: dict) -> None:
    """Add ``"scenario <id>"`` percentage changes between every pair of runs
    (``results`` maps scenario id -> ScenarioResult; reports are updated)."""
    for sid, res in results.items():
        for other_id, other in results.items():
            if other_id == sid:
                continue
            for eid, rep in res.reports.items():
                if eid in other.reports:
                    rep.comparisons[f"scenario {other_id}"] = percentage_change(
                        rep.mape_mean, other.reports[eid].mape_mean)
