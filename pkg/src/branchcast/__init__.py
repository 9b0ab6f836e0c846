"""Additive trend + Fourier-seasonality sales forecasting with model transfer
between entities (zero-shot or anchored adaptation) and a scenario harness."""

__version__ = "0.1.0"

from .data import (
    CleaningConfig,
    CleaningReport,
    DailySeries,
    TransactionRecord,
    aggregate_daily,
    clean_transactions,
    exp2_inverse,
    log2_transform,
    normalize,
    parse_transactions,
    read_series_csv,
    series_to_csv,
)
from .evaluation import (
    EvaluationReport,
    ScenarioResult,
    TransferMatrix,
    compare_scenarios,
    mape,
    monthly_average_mape,
    percentage_change,
    rmse,
    run_scenario,
    seasonal_naive,
    transfer_matrix_summary,
)
from .fitting import (
    FitConfig,
    FitDiagnostics,
    ScenarioConfig,
    build_design_matrix,
    fit,
    place_changepoints,
    split_train_test,
)
from .model import (
    AdditiveModel,
    ChangepointGrid,
    ComponentDecomposition,
    Forecast,
    SeasonalityBlock,
    TimeScale,
    TrendParams,
    components,
    fourier_features,
    indicator,
    model_from_json,
    model_to_json,
    predict,
    trend_value,
)
from .synthetic import BranchSpec, ChainPreset, generate_branch, six_branch_preset
from .transfer import (
    AdaptConfig,
    TransferRecord,
    adapt,
    changepoint_weight_profile,
    zero_shot_forecast,
    zero_shot_model,
)
