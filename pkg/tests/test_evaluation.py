"""Settlement, perfect-foresight and DP benchmarks, scoring and sweeps."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bessarb._numeric import ticks_to_mwh
from bessarb.battery import BatterySpec, unit_trading_spec
from bessarb.errors import (
    ConfigError,
    FloorViolation,
    LevelOutOfRange,
    NonCommensurateRamp,
    WindowMismatch,
)
from bessarb.evaluation import (
    BacktestReport,
    degenerate_forecast,
    dp_optimal,
    dp_optimal_dual,
    perfect_foresight,
    perfect_foresight_dual,
    pinball,
    run_sweep,
    score_forecasts,
    settle,
    settle_dual,
    write_plot_csv,
    write_report_csv,
    write_report_json,
)
from bessarb.market import (
    BASE_EPOCH,
    DEFAULT_LEVELS,
    MarketKind,
    QuantileForecast,
    TradingWindow,
    build_dual_horizon,
    generate_synthetic,
)
from bessarb.strategies import (
    MEDIAN_PAIR,
    QuantilePair,
    Schedule,
    Side,
    TradeOrder,
    ts1,
    ts2,
    ts3,
    ts3_dual,
)

from conftest import flat_forecast, frac, make_prices

UNIT = unit_trading_spec()

price_curves = st.lists(
    st.integers(min_value=1, max_value=99), min_size=2, max_size=10
)


def _schedule(window, orders, strategy="TS3"):
    return Schedule(window, strategy, MEDIAN_PAIR, tuple(orders))


class TestSettle:
    def test_reference_cash(self):
        actuals = make_prices([10, 20, 30, 50])
        sched = _schedule(
            actuals.window,
            [
                TradeOrder(0, Side.BUY, 1000, Fraction(10)),
                TradeOrder(3, Side.SELL, 1000, Fraction(50)),
            ],
        )
        result = settle(sched, actuals, UNIT)
        assert result.cash == Fraction(1460, 49)  # 29.79592 to five decimals
        assert result.final_charge == 0

    def test_empty_schedule_is_zero(self):
        actuals = make_prices([10, 20])
        sched = _schedule(actuals.window, [])
        assert settle(sched, actuals, UNIT).cash == 0

    def test_bad_forecast_pays_negative(self):
        actuals = make_prices([50, 10])
        sched = _schedule(
            actuals.window,
            [
                TradeOrder(0, Side.BUY, 1000, Fraction(10)),
                TradeOrder(1, Side.SELL, 1000, Fraction(45)),
            ],
        )
        assert settle(sched, actuals, UNIT).cash == Fraction(-2108, 49)  # -43.0204

    def test_settles_at_actual_not_expected_prices(self):
        actuals = make_prices([12, 52])
        sched = _schedule(
            actuals.window,
            [
                TradeOrder(0, Side.BUY, 1000, Fraction(99)),
                TradeOrder(1, Side.SELL, 1000, Fraction(1)),
            ],
        )
        expected = Fraction("0.8") * 52 - Fraction(12) / Fraction("0.98")
        assert settle(sched, actuals, UNIT).cash == expected

    def test_window_mismatch(self):
        actuals = make_prices([10, 20])
        other = make_prices([10, 20], start=BASE_EPOCH + 1800)
        sched = _schedule(other.window, [])
        with pytest.raises(WindowMismatch):
            settle(sched, actuals, UNIT)

    def test_infeasible_schedule_raises(self):
        actuals = make_prices([10, 20])
        sched = _schedule(
            actuals.window, [TradeOrder(0, Side.SELL, 1000, Fraction(10))]
        )
        with pytest.raises(FloorViolation):
            settle(sched, actuals, UNIT)

    def test_initial_charge_bounds(self):
        actuals = make_prices([10, 20])
        sched = _schedule(actuals.window, [])
        with pytest.raises(ConfigError):
            settle(sched, actuals, UNIT, initial_charge=1500)


class TestSettleDual:
    def _windows(self):
        dam = TradingWindow(MarketKind.DAM, BASE_EPOCH, 24)
        bm = TradingWindow(MarketKind.BM, BASE_EPOCH, 16)
        return dam, bm

    def test_cross_market_round_trip(self):
        dam, bm = self._windows()
        dam_prices = make_prices([10] * 24, market=MarketKind.DAM)
        bm_prices = make_prices([50] * 16, market=MarketKind.BM)
        dam_sched = _schedule(dam, [TradeOrder(0, Side.BUY, 1000, Fraction(10))])
        bm_sched = _schedule(bm, [TradeOrder(3, Side.SELL, 1000, Fraction(50))])
        result = settle_dual(dam_sched, bm_sched, dam_prices, bm_prices, UNIT)
        assert result.cash == Fraction(1460, 49)
        assert result.final_charge == 0

    def test_wall_clock_order_is_enforced(self):
        dam, bm = self._windows()
        dam_prices = make_prices([10] * 24, market=MarketKind.DAM)
        bm_prices = make_prices([50] * 16, market=MarketKind.BM)
        # balancing slot 0 trades before day-ahead hour 1: selling first
        # from an empty battery must fail even though both legs balance
        dam_sched = _schedule(dam, [TradeOrder(1, Side.BUY, 1000, Fraction(10))])
        bm_sched = _schedule(bm, [TradeOrder(0, Side.SELL, 1000, Fraction(50))])
        with pytest.raises(FloorViolation):
            settle_dual(dam_sched, bm_sched, dam_prices, bm_prices, UNIT)


class TestPerfectForesight:
    def test_two_period_reference(self):
        actuals = make_prices([10, 50])
        assert perfect_foresight(actuals, UNIT, "TS3") == Fraction(1460, 49)

    def test_monotone_increasing_ts1_buys_first_sells_last(self):
        actuals = make_prices([10, 20, 30, 40, 50])
        sched = ts1(degenerate_forecast(actuals), MEDIAN_PAIR, UNIT)
        assert [(o.period, o.side) for o in sched.orders] == [
            (0, Side.BUY),
            (4, Side.SELL),
        ]

    @pytest.mark.parametrize("strategy", ["TS1", "TS2", "TS3"])
    def test_consistency_with_direct_run(self, strategy):
        actuals, _ = generate_synthetic(3, MarketKind.BM, noise_sd=2)
        runner = {"TS1": ts1, "TS2": ts2, "TS3": ts3}[strategy]
        for ps in actuals:
            sched = runner(degenerate_forecast(ps), MEDIAN_PAIR, UNIT)
            assert perfect_foresight(ps, UNIT, strategy) == settle(sched, ps, UNIT).cash

    def test_unknown_strategy(self):
        actuals = make_prices([10, 50])
        with pytest.raises(ConfigError):
            perfect_foresight(actuals, UNIT, "TS9")

    def test_degenerate_forecast_levels(self):
        actuals = make_prices([10, 50])
        fc = degenerate_forecast(actuals, DEFAULT_LEVELS)
        assert fc.levels == DEFAULT_LEVELS
        for lv in DEFAULT_LEVELS:
            assert fc.level_curve(lv) == actuals.prices


def _brute_lattice_best(prices, spec, initial):
    """Enumerate every lattice dispatch path; exponential, tiny inputs only."""
    steps = (spec.capacity - spec.min_charge) // spec.ramp
    ramp_mwh = ticks_to_mwh(spec.ramp)
    best = Fraction(0)

    def rec(t, k, cash):
        nonlocal best
        if t == len(prices):
            best = max(best, cash)
            return
        price = frac(prices[t])
        rec(t + 1, k, cash)
        if k < steps:
            rec(t + 1, k + 1, cash - price * ramp_mwh / spec.charge_eff)
        if k > 0:
            rec(t + 1, k - 1, cash + spec.discharge_eff * price * ramp_mwh)

    rec(0, (initial - spec.min_charge) // spec.ramp, Fraction(0))
    return best


class TestDpOptimal:
    def test_two_period_reference(self):
        assert dp_optimal(make_prices([10, 50]), UNIT) == Fraction(1460, 49)

    def test_constant_prices_idle(self):
        assert dp_optimal(make_prices([30] * 6), UNIT) == 0

    def test_decreasing_prices_idle(self):
        assert dp_optimal(make_prices([50, 10]), UNIT) == 0

    def test_span_must_be_whole_ramps(self):
        spec = BatterySpec.from_mwh("3", "2")
        with pytest.raises(NonCommensurateRamp):
            dp_optimal(make_prices([10, 50]), spec)

    def test_initial_must_sit_on_lattice(self):
        spec = BatterySpec.from_mwh("2", "1")
        with pytest.raises(NonCommensurateRamp):
            dp_optimal(make_prices([10, 50]), spec, initial_charge=500)

    @given(
        st.lists(st.integers(min_value=1, max_value=60), min_size=1, max_size=6),
        st.integers(min_value=0, max_value=3),
    )
    @settings(max_examples=80)
    def test_matches_exhaustive_enumeration(self, curve, k0):
        spec = BatterySpec.from_mwh("3", "1")
        prices = make_prices(curve)
        initial = k0 * spec.ramp
        assert dp_optimal(prices, spec, initial_charge=initial) == (
            _brute_lattice_best(prices.prices, spec, initial)
        )

    @given(price_curves, st.booleans())
    @settings(max_examples=60)
    def test_dominates_every_strategy(self, curve, allow):
        prices = make_prices(curve)
        fc = flat_forecast(curve)
        bound = dp_optimal(prices, UNIT)
        for sched in (
            ts1(fc, MEDIAN_PAIR, UNIT),
            ts2(fc, MEDIAN_PAIR, UNIT),
            ts3(fc, MEDIAN_PAIR, UNIT, allow_stock_buys=allow),
        ):
            assert settle(sched, prices, UNIT).cash <= bound

    @given(price_curves)
    @settings(max_examples=60)
    def test_dominates_perfect_foresight(self, curve):
        prices = make_prices(curve)
        bound = dp_optimal(prices, UNIT)
        for strategy in ("TS1", "TS2", "TS3"):
            assert perfect_foresight(prices, UNIT, strategy) <= bound


class TestDpOptimalDual:
    def test_joint_bound_sees_cross_market_moves(self):
        dam = make_prices([10] + [30] * 23, market=MarketKind.DAM)
        bm = make_prices([30] * 15 + [50], market=MarketKind.BM)
        horizon = build_dual_horizon(dam.window, bm.window)
        joint = dp_optimal_dual(horizon, dam, bm, UNIT)
        # buy the cheap day-ahead hour, sell the dear balancing slot
        assert joint == Fraction("0.8") * 50 - Fraction(10) / Fraction("0.98")
        assert joint > dp_optimal(dam, UNIT)
        assert joint > dp_optimal(bm, UNIT)

    def test_window_mismatch(self):
        dam = make_prices([10] * 24, market=MarketKind.DAM)
        bm = make_prices([10] * 16, market=MarketKind.BM)
        horizon = build_dual_horizon(dam.window, bm.window)
        other = make_prices([10] * 16, market=MarketKind.BM, start=BASE_EPOCH + 3600)
        with pytest.raises(WindowMismatch):
            dp_optimal_dual(horizon, dam, other, UNIT)

    @given(
        st.lists(st.integers(min_value=1, max_value=99), min_size=4, max_size=4),
        st.lists(st.integers(min_value=1, max_value=99), min_size=6, max_size=6),
        st.booleans(),
    )
    @settings(max_examples=40)
    def test_dominates_dual_strategy(self, dam_curve, bm_curve, allow):
        dam_fc = flat_forecast(dam_curve, market=MarketKind.DAM)
        bm_fc = flat_forecast(bm_curve, market=MarketKind.BM)
        dam_ps = make_prices(dam_curve, market=MarketKind.DAM)
        bm_ps = make_prices(bm_curve, market=MarketKind.BM)
        horizon = build_dual_horizon(dam_fc.window, bm_fc.window)
        dam_sched, bm_sched = ts3_dual(
            horizon, dam_fc, bm_fc, MEDIAN_PAIR, UNIT, allow_stock_buys=allow
        )
        realized = settle_dual(dam_sched, bm_sched, dam_ps, bm_ps, UNIT).cash
        assert realized <= dp_optimal_dual(horizon, dam_ps, bm_ps, UNIT)
        pf = perfect_foresight_dual(horizon, dam_ps, bm_ps, UNIT, allow)
        assert pf <= dp_optimal_dual(horizon, dam_ps, bm_ps, UNIT)


class TestPinball:
    def test_reference_value(self):
        assert pinball("0.9", 100, 80) == 18

    def test_overprediction_weighted_by_complement(self):
        assert pinball("0.9", 80, 100) == 2

    @given(
        st.integers(min_value=-1000, max_value=1000),
        st.integers(min_value=-1000, max_value=1000),
    )
    def test_median_loss_is_half_absolute_error(self, y, z):
        assert pinball("0.5", y, z) == Fraction(abs(y - z), 2)

    @given(st.integers(min_value=1, max_value=9), st.integers(-100, 100))
    def test_perfect_prediction_scores_zero(self, tenths, y):
        assert pinball(Fraction(tenths, 10), y, y) == 0

    @pytest.mark.parametrize("level", ["0", "1", "-0.5", "1.5"])
    def test_level_must_be_interior(self, level):
        with pytest.raises(LevelOutOfRange):
            pinball(level, 10, 10)


class TestScoreForecasts:
    def test_degenerate_forecast_scores_zero(self):
        actuals, forecasts = generate_synthetic(1, MarketKind.DAM, noise_sd=0)
        report = score_forecasts(forecasts, actuals)
        assert report.mean == 0
        assert all(v == 0 for v in report.per_level.values())
        assert report.cells == 24 * len(DEFAULT_LEVELS)

    def test_mean_over_all_cells(self):
        actuals = make_prices([10, 20])
        fc = QuantileForecast(
            actuals.window,
            (Fraction(1, 2),),
            ((Fraction(14),), (Fraction(20),)),
        )
        report = score_forecasts([fc], [actuals])
        assert report.per_level[Fraction(1, 2)] == 1  # (2 + 0) / 2
        assert report.mean == 1
        assert report.cells == 2

    def test_window_pairing_checked(self):
        actuals = make_prices([10, 20])
        fc = flat_forecast([10, 20], start=BASE_EPOCH + 1800)
        with pytest.raises(WindowMismatch):
            score_forecasts([fc], [actuals])
        with pytest.raises(WindowMismatch):
            score_forecasts([], [actuals])

    def test_noisier_forecasts_score_worse(self):
        """Mean pinball rises with noise scale, well outside sampling error."""
        actuals, _ = generate_synthetic(9, MarketKind.DAM, days=10, noise_sd=0)
        rng = random.Random(42)
        means = []
        for scale in (0, 2, 6):
            forecasts = []
            for ps in actuals:
                rows = tuple(
                    tuple(
                        p + Fraction(round(rng.gauss(0.0, scale) * 100), 100)
                        for _ in DEFAULT_LEVELS
                    )
                    for p in ps.prices
                )
                forecasts.append(
                    QuantileForecast(ps.window, DEFAULT_LEVELS, rows)
                )
            means.append(score_forecasts(forecasts, actuals).mean)
        assert means[0] == 0
        assert means[0] < means[1] < means[2]
        # scale 6 should roughly triple scale 2's loss; demand a wide gap
        assert means[2] > means[1] * 2


class TestRunSweep:
    def _data(self, days=1, noise="2"):
        dam_a, dam_f = generate_synthetic(4, MarketKind.DAM, days=days,
                                          noise_sd=frac(noise))
        bm_a, bm_f = generate_synthetic(4, MarketKind.BM, days=days,
                                        noise_sd=frac(noise))
        return dam_a, dam_f, bm_a, bm_f

    def test_row_counting_and_order(self):
        dam_a, dam_f, bm_a, bm_f = self._data()
        pairs = (MEDIAN_PAIR, QuantilePair("0.3", "0.7"))
        rows = run_sweep(
            UNIT, dam_a, dam_f, bm_a, bm_f, pairs=pairs, strategies=("TS1", "TS3")
        )
        labels = [(r.market, r.strategy, r.pair_label) for r in rows]
        assert labels == [
            ("DAM", "TS1", "0.5-0.5"),
            ("DAM", "TS1", "0.3-0.7"),
            ("DAM", "TS1", "average"),
            ("DAM", "TS3", "0.5-0.5"),
            ("DAM", "TS3", "0.3-0.7"),
            ("DAM", "TS3", "average"),
            ("BM", "TS3", "0.5-0.5"),
            ("BM", "TS3", "0.3-0.7"),
            ("BM", "TS3", "average"),
            ("DAM+BM", "TS3", "0.5-0.5"),
            ("DAM+BM", "TS3", "0.3-0.7"),
            ("DAM+BM", "TS3", "average"),
        ]

    def test_two_pairs_one_strategy_counting(self):
        dam_a, dam_f, *_ = self._data()
        pairs = (MEDIAN_PAIR, QuantilePair("0.1", "0.9"))
        rows = run_sweep(UNIT, dam_a, dam_f, pairs=pairs, strategies=("TS3",))
        assert len(rows) == 3  # two pair rows plus one average

    def test_degenerate_forecasts_collapse_pairs_to_pf(self):
        dam_a, _, bm_a, _ = self._data()
        dam_f = [degenerate_forecast(ps, DEFAULT_LEVELS) for ps in dam_a]
        bm_f = [degenerate_forecast(ps, DEFAULT_LEVELS) for ps in bm_a]
        rows = run_sweep(UNIT, dam_a, dam_f, bm_a, bm_f, include_average=False)
        for row in rows:
            assert row.realized == row.pf

    def test_average_row_arithmetic(self):
        dam_a, dam_f, *_ = self._data()
        pairs = (MEDIAN_PAIR, QuantilePair("0.1", "0.9"))
        rows = run_sweep(UNIT, dam_a, dam_f, pairs=pairs, strategies=("TS1",))
        cells, avg = rows[:2], rows[2]
        assert avg.pair_label == "average"
        assert avg.realized == sum(r.realized for r in cells) / 2
        assert avg.trades == sum(r.trades for r in cells) / 2
        assert avg.pf == cells[0].pf and avg.dp == cells[0].dp

    def test_parallel_equals_serial(self):
        dam_a, dam_f, bm_a, bm_f = self._data()
        kwargs = dict(pairs=(MEDIAN_PAIR,), strategies=("TS3",))
        serial = run_sweep(UNIT, dam_a, dam_f, bm_a, bm_f, jobs=1, **kwargs)
        parallel = run_sweep(UNIT, dam_a, dam_f, bm_a, bm_f, jobs=2, **kwargs)
        assert serial == parallel

    def test_validation_errors(self):
        dam_a, dam_f, bm_a, bm_f = self._data()
        with pytest.raises(ConfigError):
            run_sweep(UNIT, dam_a, dam_f, strategies=("TS9",))
        with pytest.raises(ConfigError):
            run_sweep(UNIT, dam_a, dam_f, bm_a, None)
        with pytest.raises(WindowMismatch):
            run_sweep(UNIT, dam_a, dam_f[:-1] if len(dam_f) > 1 else [])

    def test_realized_never_beats_dp(self):
        dam_a, dam_f, bm_a, bm_f = self._data(days=2, noise="4")
        for row in run_sweep(UNIT, dam_a, dam_f, bm_a, bm_f):
            assert row.realized <= row.dp
            assert row.pf <= row.dp


class TestReportWriters:
    def _rows(self):
        return [
            BacktestReport(
                "DAM", "TS3", "0.5-0.5",
                Fraction(1460, 49), Fraction(8), Fraction("149.25"),
                Fraction("149.6"), 4,
                (Fraction(10), Fraction("19.7959183673469387755102040816"
                                        "3265306122448979591836734693877551")),
            )
        ]

    def test_csv_layout(self, tmp_path):
        path = tmp_path / "report.csv"
        write_report_csv(path, self._rows())
        lines = path.read_text().splitlines()
        assert lines[0] == "market,strategy,pair,profit_eur,trades,pf_eur,dp_eur,windows"
        assert lines[1] == "DAM,TS3,0.5-0.5,29.80,8,149.25,149.60,4"

    def test_fractional_trades_rounded(self, tmp_path):
        row = BacktestReport(
            "BM", "TS3", "average", Fraction(0), Fraction(116, 7),
            Fraction(0), Fraction(0), 12,
        )
        path = tmp_path / "report.csv"
        write_report_csv(path, [row])
        assert ",16.57," in path.read_text().splitlines()[1]

    def test_json_document(self, tmp_path):
        path = tmp_path / "report.json"
        write_report_json(path, self._rows())
        text = path.read_text()
        assert '"profit_eur": "29.80"' in text
        assert '"window_profits_eur"' in text

    def test_plot_csv_spread(self, tmp_path):
        path = tmp_path / "plot.csv"
        write_plot_csv(path, self._rows())
        lines = path.read_text().splitlines()
        assert lines[0] == "market,strategy,pair,mean_eur,min_eur,max_eur"
        assert lines[1] == "DAM,TS3,0.5-0.5,14.90,10.00,19.80"
