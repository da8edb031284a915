"""Nearest-neighbour quantile forecasting baseline.

Forecasts a period's price distribution from the target values of its k
closest historical periods in feature space.  Distances are Euclidean over
train-standardized features; quantiles are read off the sorted neighbour
targets with linear interpolation, exactly in Fractions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from bessarb._numeric import format_decimal, parse_decimal
from bessarb.errors import (
    ConfigError,
    EmptyTrainSet,
    InsufficientHistory,
    KTooLarge,
    MalformedRow,
    MissingPeriod,
    NonMonotonicTimestamps,
    UnknownColumn,
)
from bessarb.market import (
    DEFAULT_LEVELS,
    MarketKind,
    QuantileForecast,
    TradingWindow,
    _coerce_level,
    format_timestamp,
    parse_timestamp,
)


@dataclass(frozen=True)
class FeatureMatrix:
    """Time-ordered feature rows with exact price targets."""

    market: MarketKind
    timestamps: tuple[int, ...]
    feature_names: tuple[str, ...]
    features: np.ndarray
    targets: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "features", np.asarray(self.features, dtype=float)
        )
        n = len(self.timestamps)
        if self.features.shape != (n, len(self.feature_names)):
            raise MalformedRow(0, "feature block shape does not match names/rows")
        if len(self.targets) != n:
            raise MalformedRow(0, "target count does not match rows")
        for prev, cur in zip(self.timestamps, self.timestamps[1:]):
            if cur <= prev:
                raise NonMonotonicTimestamps(
                    f"feature rows out of order at {format_timestamp(cur)}"
                )

    def __len__(self) -> int:
        return len(self.timestamps)

    def slice_by_time(self, start_s: int, end_s: int) -> "FeatureMatrix":
        keep = [i for i, ts in enumerate(self.timestamps) if start_s <= ts < end_s]
        return FeatureMatrix(
            self.market,
            tuple(self.timestamps[i] for i in keep),
            self.feature_names,
            self.features[keep] if keep else self.features[:0],
            tuple(self.targets[i] for i in keep),
        )

    @classmethod
    def from_csv(cls, path: str | Path, market: MarketKind) -> "FeatureMatrix":
        lines = [
            (n, raw)
            for n, raw in enumerate(Path(path).read_text().splitlines(), start=1)
            if raw.strip()
        ]
        if not lines:
            raise MalformedRow(0, f"{path}: empty file")
        header = [c.strip() for c in lines[0][1].split(",")]
        if len(header) < 3 or header[0].lower() != "timestamp" or header[-1].lower() != "target":
            raise UnknownColumn(f"{path}: expected header timestamp,<features...>,target")
        names = tuple(header[1:-1])
        timestamps, rows, targets = [], [], []
        for n, raw in lines[1:]:
            cells = [c.strip() for c in raw.split(",")]
            if len(cells) != len(header):
                raise MalformedRow(n, f"{path}: expected {len(header)} columns")
            timestamps.append(parse_timestamp(cells[0], line=n))
            try:
                rows.append([float(c) for c in cells[1:-1]])
            except ValueError:
                raise MalformedRow(n, f"{path}: non-numeric feature") from None
            targets.append(parse_decimal(cells[-1], line=n))
        return cls(market, tuple(timestamps), names, np.array(rows), tuple(targets))

    def to_csv(self, path: str | Path) -> None:
        lines = ["timestamp," + ",".join(self.feature_names) + ",target"]
        for i, ts in enumerate(self.timestamps):
            feats = ",".join(repr(float(x)) for x in self.features[i])
            lines.append(
                f"{format_timestamp(ts)},{feats},{format_decimal(self.targets[i])}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


def _standardizer(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _empirical_quantile(sorted_targets: Sequence[Fraction], level: Fraction) -> Fraction:
    """Linear interpolation at rank (k - 1) * level over sorted neighbours."""
    k = len(sorted_targets)
    rank = (k - 1) * level
    lo = rank.numerator // rank.denominator
    frac = rank - lo
    if frac == 0:
        return sorted_targets[lo]
    return sorted_targets[lo] + frac * (sorted_targets[lo + 1] - sorted_targets[lo])


def _neighbour_rows(
    train_std: np.ndarray, query_std: np.ndarray, k: int
) -> np.ndarray:
    # stable sort keeps older rows first on distance ties
    d2 = ((train_std - query_std) ** 2).sum(axis=1)
    return np.argsort(d2, kind="stable")[:k]


class KnnQuantileForecaster:
    """k-nearest-neighbour empirical quantile estimator."""

    def __init__(self, k: int = 5, levels: Sequence = DEFAULT_LEVELS):
        self.k = k
        self.levels = tuple(_coerce_level(lv) for lv in levels)

    def get_params(self, deep: bool = True) -> dict:
        return {"k": self.k, "levels": self.levels}

    def set_params(self, **params) -> "KnnQuantileForecaster":
        for name, value in params.items():
            if name not in ("k", "levels"):
                raise ConfigError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        self.levels = tuple(_coerce_level(lv) for lv in self.levels)
        return self

    def fit(self, features, targets) -> "KnnQuantileForecaster":
        feats = np.asarray(features, dtype=float)
        if feats.ndim != 2 or len(feats) == 0:
            raise EmptyTrainSet("training features must be a non-empty 2d block")
        if len(targets) != len(feats):
            raise EmptyTrainSet("feature and target counts differ")
        if not 1 <= self.k <= len(feats):
            raise KTooLarge(f"k={self.k} with {len(feats)} training rows")
        self._mean, self._std = _standardizer(feats)
        self._train = (feats - self._mean) / self._std
        self._targets = tuple(
            t if isinstance(t, Fraction) else Fraction(str(t)) for t in targets
        )
        return self

    def predict(self, features) -> list[tuple[Fraction, ...]]:
        if not hasattr(self, "_train"):
            raise EmptyTrainSet("fit before predict")
        queries = (np.asarray(features, dtype=float) - self._mean) / self._std
        out = []
        for row in queries:
            idx = _neighbour_rows(self._train, row, self.k)
            neighbours = sorted(self._targets[i] for i in idx)
            out.append(
                tuple(_empirical_quantile(neighbours, lv) for lv in self.levels)
            )
        return out


def knn_predict(
    train: FeatureMatrix,
    query_features,
    k: int,
    levels: Sequence,
    window: TradingWindow,
) -> QuantileForecast:
    """One-shot neighbour forecast shaped as a trading-window forecast."""
    model = KnnQuantileForecaster(k, levels).fit(train.features, train.targets)
    rows = model.predict(query_features)
    if len(rows) != window.period_count:
        raise MissingPeriod(
            f"{len(rows)} query rows for a {window.period_count}-period window"
        )
    return QuantileForecast(window, model.levels, tuple(rows))


@dataclass(frozen=True, slots=True)
class WalkForwardPlan:
    """Rolling evaluation recipe over a feature matrix."""

    train_span_s: int
    test_span_s: int
    step_s: int
    retune_every_s: int
    k_grid: tuple[int, ...] = (3, 5, 9, 15)
    levels: tuple = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        if min(self.train_span_s, self.test_span_s, self.step_s) <= 0:
            raise InsufficientHistory("plan spans must be positive")
        if self.retune_every_s <= 0:
            raise InsufficientHistory("retune interval must be positive")
        if not self.k_grid or min(self.k_grid) < 1:
            raise KTooLarge("k grid must hold positive candidates")


@dataclass(frozen=True, slots=True)
class WalkForwardResult:
    forecasts: tuple[QuantileForecast, ...]
    refits: tuple[tuple[int, int], ...]  # (test window start, chosen k)


def _aggregate_pinball(
    model: KnnQuantileForecaster, val: FeatureMatrix
) -> Fraction:
    # local import; evaluation pulls strategies which never import back here
    from bessarb.evaluation import pinball

    rows = model.predict(val.features)
    total = Fraction(0)
    for actual, row in zip(val.targets, rows):
        for lv, pred in zip(model.levels, row):
            total += pinball(lv, actual, pred)
    return total


def _choose_k(train: FeatureMatrix, plan: WalkForwardPlan, train_end_s: int) -> int:
    """Smallest-k minimizer of pinball loss on the tail of the train slice."""
    val_start = train_end_s - plan.test_span_s
    fit = train.slice_by_time(train.timestamps[0], val_start)
    val = train.slice_by_time(val_start, train_end_s)
    if len(fit) == 0 or len(val) == 0:
        raise InsufficientHistory("train slice too short to hold a validation tail")
    best_k, best_loss = None, None
    for k in plan.k_grid:
        if k > len(fit):
            continue
        model = KnnQuantileForecaster(k, plan.levels).fit(fit.features, fit.targets)
        loss = _aggregate_pinball(model, val)
        if best_loss is None or loss < best_loss:
            best_k, best_loss = k, loss
    if best_k is None:
        raise InsufficientHistory(
            f"no k in {plan.k_grid} fits {len(fit)} training rows"
        )
    return best_k


def _window_of(market: MarketKind, slice_: FeatureMatrix, start_s: int) -> None:
    step = market.period_seconds
    for i, ts in enumerate(slice_.timestamps):
        want = start_s + i * step
        if ts != want:
            raise MissingPeriod(
                f"expected {format_timestamp(want)}, got {format_timestamp(ts)}"
            )


def walk_forward(
    matrix: FeatureMatrix, plan: WalkForwardPlan
) -> WalkForwardResult:
    """Roll a train/test split forward, refitting k on a fixed cadence.

    Each step trains on the trailing span, forecasts the next test span, and
    moves on.  k is chosen on the last test-span of the training slice and
    kept until the retune interval has elapsed.  Test spans must line up
    into whole trading windows.
    """
    if len(matrix) == 0:
        raise EmptyTrainSet("empty feature matrix")
    market = matrix.market
    per_window = market.periods_per_window
    window_span = per_window * market.period_seconds
    if plan.test_span_s % window_span:
        raise InsufficientHistory(
            "test span must be a whole number of trading windows"
        )
    test_start = matrix.timestamps[0] + plan.train_span_s
    horizon_end = matrix.timestamps[-1] + market.period_seconds
    forecasts: list[QuantileForecast] = []
    refits: list[tuple[int, int]] = []
    chosen_k: int | None = None
    last_tune: int | None = None
    while test_start + plan.test_span_s <= horizon_end:
        train = matrix.slice_by_time(test_start - plan.train_span_s, test_start)
        test = matrix.slice_by_time(test_start, test_start + plan.test_span_s)
        if len(train) == 0:
            raise EmptyTrainSet("training slice is empty")
        if len(test) != plan.test_span_s // market.period_seconds:
            raise MissingPeriod("test slice has gaps")
        _window_of(market, test, test_start)
        if chosen_k is None or test_start - last_tune >= plan.retune_every_s:
            chosen_k = _choose_k(train, plan, test_start)
            last_tune = test_start
            refits.append((test_start, chosen_k))
        model = KnnQuantileForecaster(chosen_k, plan.levels)
        model.fit(train.features, train.targets)
        rows = model.predict(test.features)
        for w in range(len(test) // per_window):
            window = TradingWindow(
                market, test_start + w * window_span, per_window
            )
            block = tuple(rows[w * per_window : (w + 1) * per_window])
            forecasts.append(QuantileForecast(window, model.levels, block))
        test_start += plan.step_s
    if not forecasts:
        raise InsufficientHistory(
            "matrix too short for one train span plus one test span"
        )
    return WalkForwardResult(tuple(forecasts), tuple(refits))
