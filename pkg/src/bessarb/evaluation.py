"""Settlement, benchmarks and backtest reports.

Settlement replays every schedule through the battery bounds before paying
it, so an infeasible schedule raises instead of producing a number.  Two
benchmarks frame each result: the same strategy run on a forecast that
equals the settled prices (perfect foresight), and an exact dynamic program
over the ramp lattice (the best any feasible schedule could have earned).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from bessarb._numeric import format_money, ticks_to_mwh, to_cents
from bessarb.battery import BatterySpec, BatteryState, apply_trade
from bessarb.errors import (
    ConfigError,
    LevelOutOfRange,
    NonCommensurateRamp,
    WindowMismatch,
)
from bessarb.market import (
    DualHorizon,
    MarketKind,
    PriceSeries,
    QuantileForecast,
    build_dual_horizon,
)
from bessarb.strategies import (
    DEFAULT_PAIRS,
    MEDIAN_PAIR,
    QuantilePair,
    Schedule,
    Side,
    ts1,
    ts2,
    ts3,
    ts3_dual,
)

STRATEGY_NAMES = ("TS1", "TS2", "TS3")


@dataclass(frozen=True, slots=True)
class SettleResult:
    cash: Fraction
    final_charge: int


def _start_charge(spec: BatterySpec, initial_charge: int | None) -> int:
    if initial_charge is None:
        return spec.initial_charge
    if not spec.min_charge <= initial_charge <= spec.capacity:
        raise ConfigError(f"initial charge {initial_charge} outside battery bounds")
    return initial_charge


def _leg_cash(spec: BatterySpec, side: Side, price: Fraction, mwh: Fraction) -> Fraction:
    if side is Side.SELL:
        return spec.discharge_eff * price * mwh
    return -price * mwh / spec.charge_eff


def settle(
    schedule: Schedule,
    actuals: PriceSeries,
    spec: BatterySpec,
    initial_charge: int | None = None,
) -> SettleResult:
    """Replay a schedule against settled prices.

    Raises the relevant battery violation if any order breaks a bound, so a
    returned figure is always physically achievable.
    """
    if schedule.window != actuals.window:
        raise WindowMismatch("schedule and prices cover different windows")
    state = BatteryState(_start_charge(spec, initial_charge))
    cash = Fraction(0)
    for order in schedule.orders:
        state = apply_trade(state, spec, order.signed_ticks)
        price = actuals.prices[order.period]
        cash += _leg_cash(spec, order.side, price, order.volume_mwh)
    return SettleResult(cash, state.charge)


def settle_dual(
    dam_schedule: Schedule,
    bm_schedule: Schedule,
    dam_actuals: PriceSeries,
    bm_actuals: PriceSeries,
    spec: BatterySpec,
    initial_charge: int | None = None,
) -> SettleResult:
    """Jointly replay one day-ahead and one balancing schedule."""
    if dam_schedule.window != dam_actuals.window:
        raise WindowMismatch("day-ahead schedule and prices differ")
    if bm_schedule.window != bm_actuals.window:
        raise WindowMismatch("balancing schedule and prices differ")
    horizon = build_dual_horizon(dam_schedule.window, bm_schedule.window)
    dam_orders = {o.period: o for o in dam_schedule.orders}
    bm_orders = {o.period: o for o in bm_schedule.orders}
    state = BatteryState(_start_charge(spec, initial_charge))
    cash = Fraction(0)
    for market, period in horizon.merged_events():
        if market is MarketKind.DAM:
            order, prices = dam_orders.get(period), dam_actuals.prices
        else:
            order, prices = bm_orders.get(period), bm_actuals.prices
        if order is None:
            continue
        state = apply_trade(state, spec, order.signed_ticks)
        cash += _leg_cash(spec, order.side, prices[period], order.volume_mwh)
    return SettleResult(cash, state.charge)


# --- benchmarks -------------------------------------------------------------

def degenerate_forecast(
    actuals: PriceSeries, levels: Sequence = (Fraction(1, 2),)
) -> QuantileForecast:
    """Forecast that pins every quantile level to the settled price."""
    rows = tuple(tuple(p for _ in levels) for p in actuals.prices)
    return QuantileForecast(actuals.window, tuple(levels), rows)


def _run_strategy(
    strategy: str,
    forecast: QuantileForecast,
    pair: QuantilePair,
    spec: BatterySpec,
    allow_stock_buys: bool,
    initial_charge: int | None,
) -> Schedule:
    if strategy == "TS1":
        return ts1(forecast, pair, spec, initial_charge=initial_charge)
    if strategy == "TS2":
        return ts2(forecast, pair, spec, initial_charge=initial_charge)
    if strategy == "TS3":
        return ts3(
            forecast,
            pair,
            spec,
            allow_stock_buys=allow_stock_buys,
            initial_charge=initial_charge,
        )
    raise ConfigError(f"unknown strategy {strategy!r}")


def perfect_foresight(
    actuals: PriceSeries,
    spec: BatterySpec,
    strategy: str = "TS3",
    allow_stock_buys: bool = False,
    initial_charge: int | None = None,
) -> Fraction:
    """Profit of the strategy when the forecast equals the settled prices."""
    forecast = degenerate_forecast(actuals)
    schedule = _run_strategy(
        strategy, forecast, MEDIAN_PAIR, spec, allow_stock_buys, initial_charge
    )
    return settle(schedule, actuals, spec, initial_charge).cash


def perfect_foresight_dual(
    horizon: DualHorizon,
    dam_actuals: PriceSeries,
    bm_actuals: PriceSeries,
    spec: BatterySpec,
    allow_stock_buys: bool = False,
    initial_charge: int | None = None,
) -> Fraction:
    dam_sched, bm_sched = ts3_dual(
        horizon,
        degenerate_forecast(dam_actuals),
        degenerate_forecast(bm_actuals),
        MEDIAN_PAIR,
        spec,
        allow_stock_buys=allow_stock_buys,
        initial_charge=initial_charge,
    )
    return settle_dual(
        dam_sched, bm_sched, dam_actuals, bm_actuals, spec, initial_charge
    ).cash


def _dp_max_cash(
    prices: Sequence[Fraction], spec: BatterySpec, initial_charge: int
) -> Fraction:
    """Exact optimum over all feasible schedules, by ramp-lattice recursion.

    Valid as a bound for fractional volumes too: the feasible set is an
    interval polytope, so some optimum sits on the ramp lattice whenever the
    charge span and starting charge are whole ramps.
    """
    span = spec.capacity - spec.min_charge
    if span % spec.ramp:
        raise NonCommensurateRamp(
            f"charge span {span} is not a whole number of ramps {spec.ramp}"
        )
    if (initial_charge - spec.min_charge) % spec.ramp:
        raise NonCommensurateRamp("starting charge sits off the ramp lattice")
    steps = span // spec.ramp
    k0 = (initial_charge - spec.min_charge) // spec.ramp
    ramp_mwh = ticks_to_mwh(spec.ramp)
    value = [Fraction(0)] * (steps + 1)
    for price in reversed(prices):
        buy_cost = price * ramp_mwh / spec.charge_eff
        sell_gain = spec.discharge_eff * price * ramp_mwh
        nxt = []
        for k in range(steps + 1):
            best = value[k]
            if k < steps and value[k + 1] - buy_cost > best:
                best = value[k + 1] - buy_cost
            if k > 0 and value[k - 1] + sell_gain > best:
                best = value[k - 1] + sell_gain
            nxt.append(best)
        value = nxt
    return value[k0]


def dp_optimal(
    actuals: PriceSeries, spec: BatterySpec, initial_charge: int | None = None
) -> Fraction:
    """Best possible profit for the window given the settled prices."""
    return _dp_max_cash(actuals.prices, spec, _start_charge(spec, initial_charge))


def dp_optimal_dual(
    horizon: DualHorizon,
    dam_actuals: PriceSeries,
    bm_actuals: PriceSeries,
    spec: BatterySpec,
    initial_charge: int | None = None,
) -> Fraction:
    """Best possible profit trading both markets of one dual horizon."""
    if dam_actuals.window != horizon.dam or bm_actuals.window != horizon.bm:
        raise WindowMismatch("price windows do not match the horizon")
    prices = [
        (dam_actuals if market is MarketKind.DAM else bm_actuals).prices[period]
        for market, period in horizon.merged_events()
    ]
    return _dp_max_cash(prices, spec, _start_charge(spec, initial_charge))


# --- forecast scoring -------------------------------------------------------

def pinball(level, actual, predicted) -> Fraction:
    """Quantile regression loss for one prediction, exact."""
    q = level if isinstance(level, Fraction) else Fraction(str(level))
    if not 0 < q < 1:
        raise LevelOutOfRange(f"quantile level {q} outside (0, 1)")
    y = actual if isinstance(actual, Fraction) else Fraction(str(actual))
    z = predicted if isinstance(predicted, Fraction) else Fraction(str(predicted))
    if y >= z:
        return q * (y - z)
    return (1 - q) * (z - y)


@dataclass(frozen=True, slots=True)
class PinballReport:
    per_level: dict
    mean: Fraction
    cells: int


def score_forecasts(
    forecasts: Sequence[QuantileForecast], actuals: Sequence[PriceSeries]
) -> PinballReport:
    """Mean pinball loss per quantile level and over all cells."""
    if len(forecasts) != len(actuals):
        raise WindowMismatch("forecast and price window counts differ")
    sums: dict[Fraction, Fraction] = {}
    counts: dict[Fraction, int] = {}
    for fc, ps in zip(forecasts, actuals):
        if fc.window != ps.window:
            raise WindowMismatch("forecast and price windows differ")
        for t, row in enumerate(fc.values):
            for lv, pred in zip(fc.levels, row):
                sums[lv] = sums.get(lv, Fraction(0)) + pinball(lv, ps.prices[t], pred)
                counts[lv] = counts.get(lv, 0) + 1
    if not sums:
        raise WindowMismatch("nothing to score")
    per_level = {lv: sums[lv] / counts[lv] for lv in sorted(sums)}
    total_cells = sum(counts.values())
    mean = sum(sums.values(), Fraction(0)) / total_cells
    return PinballReport(per_level, mean, total_cells)


# --- sweep ------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class BacktestReport:
    """One report row: a strategy and quantile pair over a set of windows."""

    market: str
    strategy: str
    pair_label: str
    realized: Fraction
    trades: Fraction
    pf: Fraction
    dp: Fraction
    windows: int
    per_window: tuple[Fraction, ...] = ()


def _check_paired(forecasts, actuals, what: str) -> None:
    if len(forecasts) != len(actuals):
        raise WindowMismatch(f"{what}: forecast and price window counts differ")
    for fc, ps in zip(forecasts, actuals):
        if fc.window != ps.window:
            raise WindowMismatch(f"{what}: forecast and price windows differ")


def _cell_report(args) -> BacktestReport:
    market, strategy, pair, payload = args
    spec = payload["spec"]
    allow_stock = payload["allow_stock_buys"]
    realized, trades, pf, dp, per_window = Fraction(0), 0, Fraction(0), Fraction(0), []
    if market in ("DAM", "BM"):
        key = market.lower()
        for fc, ps in zip(payload[f"{key}_forecasts"], payload[f"{key}_actuals"]):
            schedule = _run_strategy(strategy, fc, pair, spec, allow_stock, None)
            cash = settle(schedule, ps, spec).cash
            realized += cash
            per_window.append(cash)
            trades += schedule.trade_count
            pf += perfect_foresight(ps, spec, strategy, allow_stock)
            dp += dp_optimal(ps, spec)
        n = len(payload[f"{key}_actuals"])
    else:
        for di, bi in payload["horizon_pairs"]:
            dam_ps = payload["dam_actuals"][di]
            bm_ps = payload["bm_actuals"][bi]
            horizon = build_dual_horizon(dam_ps.window, bm_ps.window)
            dam_sched, bm_sched = ts3_dual(
                horizon,
                payload["dam_forecasts"][di],
                payload["bm_forecasts"][bi],
                pair,
                spec,
                allow_stock_buys=allow_stock,
            )
            cash = settle_dual(dam_sched, bm_sched, dam_ps, bm_ps, spec).cash
            realized += cash
            per_window.append(cash)
            trades += dam_sched.trade_count + bm_sched.trade_count
            pf += perfect_foresight_dual(horizon, dam_ps, bm_ps, spec, allow_stock)
            dp += dp_optimal_dual(horizon, dam_ps, bm_ps, spec)
        n = len(payload["horizon_pairs"])
    return BacktestReport(
        market, strategy, pair.label, realized, Fraction(trades), pf, dp, n,
        tuple(per_window),
    )


def _average_row(rows: Sequence[BacktestReport]) -> BacktestReport:
    n = len(rows)
    per_window = tuple(
        sum(r.per_window[i] for r in rows) / n
        for i in range(len(rows[0].per_window))
    )
    return BacktestReport(
        rows[0].market,
        rows[0].strategy,
        "average",
        sum(r.realized for r in rows) / n,
        sum(r.trades for r in rows) / n,
        rows[0].pf,
        rows[0].dp,
        rows[0].windows,
        per_window,
    )


def run_sweep(
    spec: BatterySpec,
    dam_actuals: Sequence[PriceSeries],
    dam_forecasts: Sequence[QuantileForecast],
    bm_actuals: Sequence[PriceSeries] | None = None,
    bm_forecasts: Sequence[QuantileForecast] | None = None,
    *,
    pairs: Sequence[QuantilePair] = DEFAULT_PAIRS,
    strategies: Sequence[str] = STRATEGY_NAMES,
    jobs: int = 1,
    allow_stock_buys: bool = False,
    include_average: bool = True,
) -> list[BacktestReport]:
    """Backtest every (market, strategy, quantile pair) combination.

    Day-ahead windows are traded with each requested strategy.  When
    balancing data is supplied its windows are traded alone with the
    work-list strategy, and every balancing window that opens together with
    a day-ahead window is also traded jointly with it.  Rows come back in a
    fixed order with one average row per (market, strategy) block, and are
    identical however many worker processes are used.
    """
    for name in strategies:
        if name not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {name!r}")
    _check_paired(dam_forecasts, dam_actuals, "day-ahead")
    payload = {
        "spec": spec,
        "allow_stock_buys": allow_stock_buys,
        "dam_actuals": list(dam_actuals),
        "dam_forecasts": list(dam_forecasts),
    }
    blocks = [("DAM", s) for s in strategies]
    if bm_actuals is not None:
        if bm_forecasts is None:
            raise ConfigError("balancing prices given without forecasts")
        _check_paired(bm_forecasts, bm_actuals, "balancing")
        payload["bm_actuals"] = list(bm_actuals)
        payload["bm_forecasts"] = list(bm_forecasts)
        bm_by_start = {ps.window.start_epoch_s: i for i, ps in enumerate(bm_actuals)}
        payload["horizon_pairs"] = [
            (di, bm_by_start[ps.window.start_epoch_s])
            for di, ps in enumerate(dam_actuals)
            if ps.window.start_epoch_s in bm_by_start
        ]
        blocks.append(("BM", "TS3"))
        if payload["horizon_pairs"]:
            blocks.append(("DAM+BM", "TS3"))
    cells = [
        (market, strategy, pair, payload)
        for market, strategy in blocks
        for pair in pairs
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_cell_report, cells))
    else:
        rows = [_cell_report(cell) for cell in cells]
    if not include_average:
        return rows
    out: list[BacktestReport] = []
    step = len(pairs)
    for i in range(0, len(rows), step):
        block = rows[i : i + step]
        out.extend(block)
        out.append(_average_row(block))
    return out


# --- report serialization ---------------------------------------------------

def _format_trades(trades: Fraction) -> str:
    """Whole counts verbatim; fractional averages rounded to 2 places."""
    if trades.denominator == 1:
        return str(trades.numerator)
    cents = to_cents(trades)
    whole, rem = divmod(abs(cents), 100)
    text = f"{whole}.{rem:02d}".rstrip("0").rstrip(".")
    return ("-" if cents < 0 else "") + text


def write_report_csv(path: str | Path, reports: Iterable[BacktestReport]) -> None:
    lines = ["market,strategy,pair,profit_eur,trades,pf_eur,dp_eur,windows"]
    for r in reports:
        lines.append(
            ",".join(
                [
                    r.market,
                    r.strategy,
                    r.pair_label,
                    format_money(r.realized),
                    _format_trades(r.trades),
                    format_money(r.pf),
                    format_money(r.dp),
                    str(r.windows),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_json(path: str | Path, reports: Iterable[BacktestReport]) -> None:
    doc = [
        {
            "market": r.market,
            "strategy": r.strategy,
            "pair": r.pair_label,
            "profit_eur": format_money(r.realized),
            "trades": _format_trades(r.trades),
            "pf_eur": format_money(r.pf),
            "dp_eur": format_money(r.dp),
            "windows": r.windows,
            "window_profits_eur": [format_money(x) for x in r.per_window],
        }
        for r in reports
    ]
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_plot_csv(path: str | Path, reports: Iterable[BacktestReport]) -> None:
    """Per-row window profit spread, for plotting profit against pair."""
    lines = ["market,strategy,pair,mean_eur,min_eur,max_eur"]
    for r in reports:
        if r.per_window:
            mean = sum(r.per_window, Fraction(0)) / len(r.per_window)
            lo, hi = min(r.per_window), max(r.per_window)
        else:
            mean = lo = hi = Fraction(0)
        lines.append(
            ",".join(
                [
                    r.market,
                    r.strategy,
                    r.pair_label,
                    format_money(mean),
                    format_money(lo),
                    format_money(hi),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
