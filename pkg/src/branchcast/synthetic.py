"""Synthetic multi-branch daily sales with a known trend/seasonal skeleton.

Values are generated multiplicatively,

    base * growth(d) * weekly[dow(d)] * (1 + A cos(2π (e(d) - phase) / 365.25)) * exp(ε)

where ``e(d)`` is a continuous day count (days since 2000-01-01, so ``phase``
is roughly the day of year of the peak) and ``ε ~ N(0, σ²)``.  In log2 space
the noiseless series is a piecewise-linear trend plus periodic terms, i.e. it
lies inside the additive model class.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DailySeries, as_day, date_range

_EPOCH = np.datetime64("2000-01-01", "D")
DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class BranchSpec:
    entity_id: str
    start: str
    end: str
    base_level: float = 1000.0
    growth_per_year: float = 0.0
    weekly_pattern: tuple = (1.0,) * 7  # Monday first
    yearly_amplitude: float = 0.0
    yearly_phase: float = 0.0  # days
    regime_breaks: tuple = ()  # ((date, new growth per year), ...)
    noise_sigma: float = 0.08
    closed_weekday: int | None = None  # 0 = Monday
    seed: int = 0

    def __post_init__(self):
        if len(self.weekly_pattern) != 7 or min(self.weekly_pattern) <= 0:
            raise ValueError("weekly_pattern needs 7 positive multipliers")
        if self.base_level <= 0:
            raise ValueError("base_level must be positive")
        if not 0 <= self.yearly_amplitude < 1:
            raise ValueError("yearly_amplitude must lie in [0, 1)")
        if (as_day(self.end) - as_day(self.start)).astype(int) < 2 * 365:
            raise ValueError("a branch must span at least two years")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weekly_pattern"] = list(self.weekly_pattern)
        d["regime_breaks"] = [[str(b), g] for b, g in self.regime_breaks]
        return d


def log_growth(spec: BranchSpec, dates) -> np.ndarray:
    """Natural-log growth factor since ``spec.start``; piecewise linear in time."""
    start = as_day(spec.start)
    t = (dates - start).astype(float) / DAYS_PER_YEAR
    knots = [(0.0, spec.growth_per_year)]
    for when, rate in sorted(spec.regime_breaks, key=lambda b: as_day(b[0])):
        knots.append(((as_day(when) - start).astype(float) / DAYS_PER_YEAR, rate))
    out = np.zeros_like(t)
    for i, (t_k, rate) in enumerate(knots):
        t_next = knots[i + 1][0] if i + 1 < len(knots) else np.inf
        seg = np.clip(t, t_k, t_next) - t_k
        out += seg * np.log1p(rate)
    return out


def weekly_log2(spec: BranchSpec, dates) -> np.ndarray:
    dow = ((dates - np.datetime64("1970-01-05", "D")).astype(int)) % 7  # 1970-01-05 was a Monday
    return np.log2(np.asarray(spec.weekly_pattern, dtype=float))[dow]


def yearly_log2(spec: BranchSpec, dates) -> np.ndarray:
    e = (dates - _EPOCH).astype(float)
    return np.log2(1.0 + spec.yearly_amplitude * np.cos(2 * np.pi * (e - spec.yearly_phase) / DAYS_PER_YEAR))


def skeleton_log2(spec: BranchSpec, dates=None) -> np.ndarray:
    """Noise-free log2 values (before closures)."""
    if dates is None:
        dates = date_range(spec.start, spec.end)
    return (np.log2(spec.base_level) + log_growth(spec, dates) / np.log(2)
            + weekly_log2(spec, dates) + yearly_log2(spec, dates))


def generate_branch(spec: BranchSpec) -> DailySeries:
    dates = date_range(spec.start, spec.end)
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.noise_sigma, dates.size) if spec.noise_sigma > 0 else 0.0
    values = np.exp2(skeleton_log2(spec, dates)) * np.exp(noise)
    if spec.closed_weekday is not None:
        dow = ((dates - np.datetime64("1970-01-05", "D")).astype(int)) % 7
        values[dow == spec.closed_weekday] = np.nan
    return DailySeries(spec.entity_id, dates, values)


@dataclass(frozen=True)
class ChainPreset:
    label: str
    weekly_pattern: tuple
    yearly_amplitude: float
    yearly_phase: float
    branches: tuple = field(default_factory=tuple)  # per-branch override dicts


# Chain α: busy Friday/Saturday, weak Sunday.  Chain β: Friday and Sunday
# strong with a Saturday dip.  Per-branch weekly tweaks are fixed so the
# deterministic skeleton does not depend on the seed.
CHAIN_ALPHA = ChainPreset(
    "alpha",
    weekly_pattern=(0.85, 0.88, 0.95, 1.02, 1.30, 1.42, 0.70),
    yearly_amplitude=0.15,
    yearly_phase=196.0,
    branches=(
        dict(entity_id="alpha-1", start="2012-01-01", base_level=3000.0, growth_per_year=0.03,
             weekly_tweak=(1.00, 1.02, 0.99, 1.00, 1.01, 0.98, 1.00)),
        dict(entity_id="alpha-2", start="2013-01-01", base_level=2600.0, growth_per_year=0.05,
             weekly_tweak=(1.02, 0.99, 1.00, 0.98, 1.00, 1.02, 1.03)),
        dict(entity_id="alpha-3", start="2014-01-01", base_level=2100.0, growth_per_year=0.02,
             weekly_tweak=(0.98, 1.00, 1.02, 1.01, 0.99, 1.00, 0.97)),
    ),
)
CHAIN_BETA = ChainPreset(
    "beta",
    weekly_pattern=(0.90, 0.86, 0.92, 1.00, 1.35, 0.92, 1.30),
    yearly_amplitude=0.08,
    yearly_phase=185.0,
    branches=(
        dict(entity_id="beta-4", start="2013-01-01", base_level=5200.0, growth_per_year=0.02,
             regime_breaks=(("2016-04-01", -0.08),),
             weekly_tweak=(1.00, 1.01, 0.98, 1.02, 1.00, 1.03, 0.99)),
        dict(entity_id="beta-5", start="2013-01-01", base_level=3800.0, growth_per_year=0.04,
             weekly_tweak=(1.03, 0.98, 1.00, 0.99, 0.98, 1.00, 1.02)),
        dict(entity_id="beta-6", start="2013-01-01", base_level=4500.0, growth_per_year=0.01,
             weekly_tweak=(0.99, 1.00, 1.01, 1.00, 1.02, 0.97, 1.00)),
    ),
)
PRESET_END = "2017-12-31"


def six_branch_specs(seed: int = 0, noise_sigma: float = 0.08) -> list:
    specs = []
    index = 0
    for chain in (CHAIN_ALPHA, CHAIN_BETA):
        for override in chain.branches:
            o = dict(override)
            tweak = np.asarray(o.pop("weekly_tweak", (1.0,) * 7))
            weekly = tuple(float(x) for x in np.asarray(chain.weekly_pattern) * tweak)
            specs.append(BranchSpec(
                end=PRESET_END,
                weekly_pattern=weekly,
                yearly_amplitude=chain.yearly_amplitude,
                yearly_phase=chain.yearly_phase,
                noise_sigma=noise_sigma,
                seed=seed * 1000 + index,
                **o,
            ))
            index += 1
    return specs


def six_branch_preset(seed: int = 0, noise_sigma: float = 0.08) -> dict:
    """Two chains of three branches, 48 to 72 months ending 2017-12-31."""
    return {s.entity_id: generate_branch(s) for s in six_branch_specs(seed, noise_sigma)}


def manifest_json(specs) -> str:
    return json.dumps({"branches": [s.to_dict() for s in specs]}, indent=2) + "\n"
