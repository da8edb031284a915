"""Market data containers, CSV ingest/emit and synthetic data generation.

Two market granularities are supported: hourly day-ahead windows of 24
periods and half-hourly balancing windows of 16 periods.  Prices are exact
Fractions of EUR/MWh throughout; floats only appear inside the synthetic
generator before rounding to cents.
"""

from __future__ import annotations

import math
import random
import statistics
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from bessarb._numeric import format_decimal, parse_decimal
from bessarb.errors import (
    LevelMissing,
    LevelOutOfRange,
    MalformedRow,
    MissingPeriod,
    NonMonotonicTimestamps,
    UnknownColumn,
    WindowMismatch,
)


class IngestWarning(UserWarning):
    """Recoverable ingest issue: rows were dropped, parsing continued."""


class MarketKind(str, Enum):
    DAM = "DAM"
    BM = "BM"

    @property
    def period_seconds(self) -> int:
        return 3600 if self is MarketKind.DAM else 1800

    @property
    def periods_per_window(self) -> int:
        return 24 if self is MarketKind.DAM else 16


@dataclass(frozen=True, slots=True)
class TradingWindow:
    """A contiguous run of trading periods in one market."""

    market: MarketKind
    start_epoch_s: int
    period_count: int

    def timestamp_of(self, period: int) -> int:
        if not 0 <= period < self.period_count:
            raise IndexError(f"period {period} outside window")
        return self.start_epoch_s + period * self.market.period_seconds

    @property
    def end_epoch_s(self) -> int:
        return self.start_epoch_s + self.period_count * self.market.period_seconds


def parse_timestamp(text: str, *, line: int = 0) -> int:
    """ISO-8601 UTC timestamp -> epoch seconds.  Accepts Z or +00:00."""
    raw = text.strip()
    normalized = raw[:-1] + "+00:00" if raw.endswith("Z") else raw
    try:
        moment = datetime.fromisoformat(normalized)
    except ValueError:
        raise MalformedRow(line, f"bad timestamp {raw!r}") from None
    if moment.tzinfo is None:
        raise MalformedRow(line, f"timestamp {raw!r} lacks a timezone")
    if moment.microsecond:
        raise MalformedRow(line, f"timestamp {raw!r} has sub-second precision")
    return int(moment.timestamp())


def format_timestamp(epoch_s: int) -> str:
    moment = datetime.fromtimestamp(epoch_s, tz=timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True, slots=True)
class PriceSeries:
    """Settlement prices for one window, EUR/MWh."""

    window: TradingWindow
    prices: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if len(self.prices) != self.window.period_count:
            raise WindowMismatch(
                f"{len(self.prices)} prices for a "
                f"{self.window.period_count}-period window"
            )


def _coerce_level(level) -> Fraction:
    lv = level if isinstance(level, Fraction) else Fraction(str(level))
    if not 0 < lv < 1:
        raise LevelOutOfRange(f"quantile level {lv} outside (0, 1)")
    return lv


@dataclass(frozen=True, slots=True)
class QuantileForecast:
    """Per-period quantile price forecasts for one window.

    values is period-major: values[t][i] is the forecast at levels[i].
    Rows are not required to be monotone in the level; use
    validate_and_repair to sort them.
    """

    window: TradingWindow
    levels: tuple[Fraction, ...]
    values: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        checked = tuple(_coerce_level(lv) for lv in self.levels)
        if list(checked) != sorted(set(checked)):
            raise LevelOutOfRange("quantile levels must be strictly ascending")
        object.__setattr__(self, "levels", checked)
        if len(self.values) != self.window.period_count:
            raise WindowMismatch(
                f"{len(self.values)} forecast rows for a "
                f"{self.window.period_count}-period window"
            )
        for row in self.values:
            if len(row) != len(checked):
                raise WindowMismatch(
                    f"forecast row has {len(row)} values for "
                    f"{len(checked)} levels"
                )

    def level_curve(self, level) -> tuple[Fraction, ...]:
        lv = _coerce_level(level)
        try:
            i = self.levels.index(lv)
        except ValueError:
            have = ", ".join(str(x) for x in self.levels)
            raise LevelMissing(f"level {lv} not among [{have}]") from None
        return tuple(row[i] for row in self.values)


def validate_and_repair(forecast: QuantileForecast) -> tuple[QuantileForecast, int]:
    """Sort each period's quantile row ascending; returns (fixed, n_changed)."""
    repaired = []
    changed = 0
    for row in forecast.values:
        fixed = tuple(sorted(row))
        if fixed != row:
            changed += 1
        repaired.append(fixed)
    if not changed:
        return forecast, 0
    return (
        QuantileForecast(forecast.window, forecast.levels, tuple(repaired)),
        changed,
    )


# --- CSV ingest -----------------------------------------------------------

def _read_rows(path: str | Path) -> list[list[str]]:
    text = Path(path).read_text()
    rows = []
    for n, raw in enumerate(text.splitlines(), start=1):
        if raw.strip() == "":
            continue
        rows.append([n] + [cell.strip() for cell in raw.split(",")])
    if not rows:
        raise MalformedRow(0, f"{path}: empty file")
    return rows


def _chunk_windows(
    stamped: list[tuple[int, int]], market: MarketKind, path
) -> list[list[int]]:
    """Group row indices into full windows anchored at the first loose row."""
    step = market.period_seconds
    count = market.periods_per_window
    prev = None
    for line, ts in stamped:
        if prev is not None and ts <= prev:
            raise NonMonotonicTimestamps(
                f"{path}:{line}: timestamp {format_timestamp(ts)} not after "
                f"{format_timestamp(prev)}"
            )
        prev = ts
    chunks = []
    i = 0
    while i + count <= len(stamped):
        start = stamped[i][1]
        for k in range(count):
            line, ts = stamped[i + k]
            want = start + k * step
            if ts != want:
                raise MissingPeriod(
                    f"{path}:{line}: expected {format_timestamp(want)}, "
                    f"got {format_timestamp(ts)}"
                )
        chunks.append(list(range(i, i + count)))
        i += count
    if i < len(stamped):
        warnings.warn(
            f"{path}: dropping {len(stamped) - i} trailing rows "
            f"(short of a full {count}-period window)",
            IngestWarning,
            stacklevel=3,
        )
    return chunks


def parse_price_csv(path: str | Path, market: MarketKind) -> list[PriceSeries]:
    """Read `timestamp,price` rows into whole trading windows."""
    rows = _read_rows(path)
    header = rows[0]
    if [c.lower() for c in header[1:]] != ["timestamp", "price"]:
        raise UnknownColumn(f"{path}: expected header timestamp,price")
    parsed = []
    for row in rows[1:]:
        line = row[0]
        if len(row) != 3:
            raise MalformedRow(line, f"{path}: expected 2 columns, got {len(row) - 1}")
        ts = parse_timestamp(row[1], line=line)
        parsed.append((line, ts, parse_decimal(row[2], line=line)))
    stamped = [(line, ts) for line, ts, _ in parsed]
    out = []
    for chunk in _chunk_windows(stamped, market, path):
        window = TradingWindow(market, parsed[chunk[0]][1], market.periods_per_window)
        out.append(PriceSeries(window, tuple(parsed[i][2] for i in chunk)))
    return out


def _parse_level_column(name: str, *, path, line: int) -> Fraction:
    if not name.lower().startswith("q") or len(name) < 2:
        raise UnknownColumn(f"{path}: unexpected forecast column {name!r}")
    percent = parse_decimal(name[1:], line=line)
    if not 0 < percent < 100:
        raise LevelOutOfRange(
            f"{path}: column {name!r} implies quantile level outside (0, 1)"
        )
    return percent / 100


def parse_forecast_csv(path: str | Path, market: MarketKind) -> list[QuantileForecast]:
    """Read `timestamp,q10,q50,...` rows into whole forecast windows."""
    rows = _read_rows(path)
    header = rows[0]
    if len(header) < 3 or header[1].lower() != "timestamp":
        raise UnknownColumn(f"{path}: expected header timestamp,q<level>,...")
    levels = tuple(
        _parse_level_column(name, path=path, line=header[0]) for name in header[2:]
    )
    if list(levels) != sorted(set(levels)):
        raise LevelOutOfRange(f"{path}: quantile columns must ascend strictly")
    parsed = []
    for row in rows[1:]:
        line = row[0]
        if len(row) != 2 + len(levels):
            raise MalformedRow(
                line, f"{path}: expected {1 + len(levels)} columns, got {len(row) - 1}"
            )
        ts = parse_timestamp(row[1], line=line)
        values = tuple(parse_decimal(cell, line=line) for cell in row[2:])
        parsed.append((line, ts, values))
    stamped = [(line, ts) for line, ts, _ in parsed]
    out = []
    for chunk in _chunk_windows(stamped, market, path):
        window = TradingWindow(market, parsed[chunk[0]][1], market.periods_per_window)
        out.append(
            QuantileForecast(window, levels, tuple(parsed[i][2] for i in chunk))
        )
    return out


def write_price_csv(path: str | Path, series: Iterable[PriceSeries]) -> None:
    lines = ["timestamp,price"]
    for ps in series:
        for t, price in enumerate(ps.prices):
            stamp = format_timestamp(ps.window.timestamp_of(t))
            lines.append(f"{stamp},{format_decimal(price)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _level_column(level: Fraction) -> str:
    return "q" + format_decimal(level * 100)


def write_forecast_csv(path: str | Path, forecasts: Iterable[QuantileForecast]) -> None:
    forecasts = list(forecasts)
    if not forecasts:
        raise WindowMismatch("nothing to write")
    levels = forecasts[0].levels
    for fc in forecasts:
        if fc.levels != levels:
            raise WindowMismatch("forecast windows disagree on quantile levels")
    lines = ["timestamp," + ",".join(_level_column(lv) for lv in levels)]
    for fc in forecasts:
        for t, row in enumerate(fc.values):
            stamp = format_timestamp(fc.window.timestamp_of(t))
            lines.append(stamp + "," + ",".join(format_decimal(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# --- dual-market horizon --------------------------------------------------

@dataclass(frozen=True, slots=True)
class DualHorizon:
    """One day-ahead window plus the balancing window that opens with it.

    Balancing slot s falls inside day-ahead hour s // 2, so the 16 balancing
    slots cover the first 8 hours of the day-ahead window.
    """

    dam: TradingWindow
    bm: TradingWindow

    def hour_of_slot(self, slot: int) -> int:
        if not 0 <= slot < self.bm.period_count:
            raise IndexError(f"slot {slot} outside balancing window")
        return slot * self.bm.market.period_seconds // self.dam.market.period_seconds

    def merged_events(self) -> tuple[tuple[MarketKind, int], ...]:
        """(market, period) pairs in wall-clock trade order.

        Both markets can trade at the top of an hour; the hourly leg is
        taken first by convention.
        """
        events = []
        for hh in range(self.dam.period_count * 2):
            if hh % 2 == 0:
                events.append((MarketKind.DAM, hh // 2))
            if hh < self.bm.period_count:
                events.append((MarketKind.BM, hh))
        return tuple(events)


def build_dual_horizon(dam: TradingWindow, bm: TradingWindow) -> DualHorizon:
    if dam.market is not MarketKind.DAM or bm.market is not MarketKind.BM:
        raise WindowMismatch("dual horizon needs one DAM and one BM window")
    if dam.start_epoch_s != bm.start_epoch_s:
        raise WindowMismatch(
            f"windows start apart: {format_timestamp(dam.start_epoch_s)} vs "
            f"{format_timestamp(bm.start_epoch_s)}"
        )
    if bm.end_epoch_s > dam.end_epoch_s:
        raise WindowMismatch("balancing window overruns the day-ahead window")
    return DualHorizon(dam, bm)


# --- synthetic data -------------------------------------------------------

BASE_EPOCH = 1704067200  # 2024-01-01T00:00:00Z

DEFAULT_LEVELS = (
    Fraction(1, 10),
    Fraction(3, 10),
    Fraction(1, 2),
    Fraction(7, 10),
    Fraction(9, 10),
)

_BM_DAY_OFFSETS_H = (0, 8, 16)


def _daily_shape(hour: float) -> float:
    """Smooth two-peak daily price shape in EUR/MWh."""

    def bump(center: float, width: float) -> float:
        z = (hour - center) / width
        return math.exp(-z * z / 2)

    return 54.0 - 34.0 * bump(4.0, 2.3) + 7.0 * bump(9.0, 1.6) + 13.0 * bump(18.5, 2.1)


def _to_cents(x: float) -> Fraction:
    return Fraction(round(x * 100), 100)


def generate_synthetic(
    seed: int,
    market: MarketKind,
    days: int = 1,
    noise_sd: float = 0.0,
    levels: Sequence = DEFAULT_LEVELS,
    start_epoch_s: int = BASE_EPOCH,
) -> tuple[list[PriceSeries], list[QuantileForecast]]:
    """Deterministic price days with matching quantile forecasts.

    Each forecast row straddles its period's pre-rounding price, shifted by
    a per-period bias and widened by a per-period uncertainty scale, so
    levels are informative but imperfect and the width of the quantile fan
    varies across periods.  With noise_sd == 0 the forecast equals the
    settled price at every level.
    """
    lvls = tuple(_coerce_level(lv) for lv in levels)
    if list(lvls) != sorted(set(lvls)):
        raise LevelOutOfRange("quantile levels must be strictly ascending")
    z = {lv: statistics.NormalDist().inv_cdf(float(lv)) for lv in lvls}
    rng = random.Random(f"{seed}:{market.value}")
    if market is MarketKind.DAM:
        starts = [start_epoch_s + d * 86400 for d in range(days)]
    else:
        starts = [
            start_epoch_s + d * 86400 + off * 3600
            for d in range(days)
            for off in _BM_DAY_OFFSETS_H
        ]
    actuals, forecasts = [], []
    for start in starts:
        window = TradingWindow(market, start, market.periods_per_window)
        prices, rows = [], []
        for t in range(window.period_count):
            hour = ((window.timestamp_of(t) - start_epoch_s) % 86400) / 3600
            center = _daily_shape(hour) + noise_sd * rng.gauss(0.0, 1.0)
            bias = rng.gauss(0.0, 1.0)
            scale = math.exp(0.35 * rng.gauss(0.0, 1.0))
            prices.append(_to_cents(center))
            rows.append(
                tuple(
                    _to_cents(center + noise_sd * (z[lv] * scale + bias))
                    for lv in lvls
                )
            )
        actuals.append(PriceSeries(window, tuple(prices)))
        forecasts.append(QuantileForecast(window, lvls, tuple(rows)))
    return actuals, forecasts
