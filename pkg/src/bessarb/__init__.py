"""Backtester for battery storage arbitrage on day-ahead and balancing markets.

The package turns quantile price forecasts into battery trade schedules,
settles them against realized prices, and benchmarks the result against a
perfect-foresight run and an exact dynamic-programming bound.  A fleet
economics module projects multi-year returns for catalog batteries.
"""

from bessarb.battery import BatterySpec, BatteryState, unit_trading_spec
from bessarb.market import (
    MarketKind,
    PriceSeries,
    QuantileForecast,
    TradingWindow,
    build_dual_horizon,
    generate_synthetic,
    parse_forecast_csv,
    parse_price_csv,
    validate_and_repair,
)
from bessarb.strategies import (
    QuantilePair,
    Schedule,
    TradeOrder,
    best_ordered_pair,
    best_unordered_pair,
    bottleneck_execute,
    ts1,
    ts2,
    ts3,
    ts3_dual,
)
from bessarb.evaluation import (
    BacktestReport,
    dp_optimal,
    perfect_foresight,
    pinball,
    run_sweep,
    settle,
)
from bessarb.economics import (
    EconScenario,
    annual_return_curve,
    annualize_backtest_revenue,
    breakeven_year,
    implied_base_revenue,
    load_catalog,
)

__version__ = "0.1.0"

__all__ = [
    "BatterySpec",
    "BatteryState",
    "unit_trading_spec",
    "MarketKind",
    "TradingWindow",
    "PriceSeries",
    "QuantileForecast",
    "parse_price_csv",
    "parse_forecast_csv",
    "validate_and_repair",
    "build_dual_horizon",
    "generate_synthetic",
    "QuantilePair",
    "TradeOrder",
    "Schedule",
    "best_ordered_pair",
    "best_unordered_pair",
    "bottleneck_execute",
    "ts1",
    "ts2",
    "ts3",
    "ts3_dual",
    "settle",
    "perfect_foresight",
    "dp_optimal",
    "pinball",
    "run_sweep",
    "BacktestReport",
    "EconScenario",
    "annual_return_curve",
    "implied_base_revenue",
    "breakeven_year",
    "annualize_backtest_revenue",
    "load_catalog",
]
