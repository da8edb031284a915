"""Battery model: spec, state, clipped trades and schedule replay.

Energy is held as integer milli-MWh ticks so clip comparisons are exact.
Efficiencies affect cash flows only, never the stored energy, so a buy of
x ticks raises the charge by exactly x ticks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from bessarb._numeric import format_decimal, mwh_to_ticks, ticks_to_mwh
from bessarb.errors import (
    CapacityViolation,
    ConfigError,
    FloorViolation,
    RampViolation,
)

_JSON_KEYS = (
    "capacity_mwh",
    "ramp_mwh_per_period",
    "min_charge_mwh",
    "charge_eff",
    "discharge_eff",
    "initial_charge_mwh",
)


@dataclass(frozen=True, slots=True)
class BatterySpec:
    """Physical battery parameters, energy quantities in milli-MWh ticks."""

    capacity: int
    ramp: int
    min_charge: int
    initial_charge: int
    charge_eff: Fraction
    discharge_eff: Fraction

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ConfigError("capacity must be positive")
        if self.ramp <= 0:
            raise ConfigError("ramp must be positive")
        if not 0 <= self.min_charge <= self.capacity:
            raise ConfigError("min_charge must lie in [0, capacity]")
        if not self.min_charge <= self.initial_charge <= self.capacity:
            raise ConfigError("initial_charge must lie in [min_charge, capacity]")
        for name in ("charge_eff", "discharge_eff"):
            eff = getattr(self, name)
            if not 0 < eff <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")

    @classmethod
    def from_mwh(
        cls,
        capacity_mwh,
        ramp_mwh_per_period,
        min_charge_mwh=0,
        charge_eff="0.98",
        discharge_eff="0.8",
        initial_charge_mwh=None,
    ) -> "BatterySpec":
        min_ticks = mwh_to_ticks(min_charge_mwh)
        if initial_charge_mwh is None:
            initial_ticks = min_ticks  # default: start at the floor
        else:
            initial_ticks = mwh_to_ticks(initial_charge_mwh)
        return cls(
            capacity=mwh_to_ticks(capacity_mwh),
            ramp=mwh_to_ticks(ramp_mwh_per_period),
            min_charge=min_ticks,
            initial_charge=initial_ticks,
            charge_eff=Fraction(str(charge_eff)),
            discharge_eff=Fraction(str(discharge_eff)),
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "BatterySpec":
        unknown = set(doc) - set(_JSON_KEYS)
        if unknown:
            raise ConfigError(f"unknown battery spec keys: {sorted(unknown)}")
        missing = {k for k in _JSON_KEYS[:2] if k not in doc}
        if missing:
            raise ConfigError(f"battery spec missing keys: {sorted(missing)}")
        kwargs = {k: doc[k] for k in _JSON_KEYS if k in doc}
        return cls.from_mwh(**{k: str(v) for k, v in kwargs.items()})

    @classmethod
    def from_json_file(cls, path: str | Path) -> "BatterySpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid battery spec JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("battery spec JSON must be an object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "capacity_mwh": format_decimal(ticks_to_mwh(self.capacity)),
            "ramp_mwh_per_period": format_decimal(ticks_to_mwh(self.ramp)),
            "min_charge_mwh": format_decimal(ticks_to_mwh(self.min_charge)),
            "charge_eff": format_decimal(self.charge_eff),
            "discharge_eff": format_decimal(self.discharge_eff),
            "initial_charge_mwh": format_decimal(ticks_to_mwh(self.initial_charge)),
        }

    def digest(self) -> str:
        """sha256 over the canonical JSON form, for schedule provenance."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def unit_trading_spec() -> BatterySpec:
    """1 MWh battery, full-swing ramp, 80%/98% discharge/charge efficiency."""
    return BatterySpec.from_mwh("1", "1", "0", charge_eff="0.98", discharge_eff="0.8")


@dataclass(frozen=True, slots=True)
class BatteryState:
    """Stored energy in ticks."""

    charge: int


def initial_state(spec: BatterySpec) -> BatteryState:
    return BatteryState(spec.initial_charge)


def max_buy(state: BatteryState, spec: BatterySpec) -> int:
    """Largest admissible buy volume from this state, in ticks."""
    return min(spec.ramp, spec.capacity - state.charge)


def max_sell(state: BatteryState, spec: BatterySpec) -> int:
    """Largest admissible sell volume from this state, in ticks."""
    return min(spec.ramp, state.charge - spec.min_charge)


def apply_trade(state: BatteryState, spec: BatterySpec, signed_ticks: int) -> BatteryState:
    """Apply a signed trade (+buy/-sell); raises the named violated bound."""
    if abs(signed_ticks) > spec.ramp:
        raise RampViolation(f"|{signed_ticks}| ticks exceeds ramp {spec.ramp}")
    charge = state.charge + signed_ticks
    if charge > spec.capacity:
        raise CapacityViolation(f"charge {charge} exceeds capacity {spec.capacity}")
    if charge < spec.min_charge:
        raise FloorViolation(f"charge {charge} below floor {spec.min_charge}")
    return BatteryState(charge)


def replay(trades: Iterable[tuple[int, int]], spec: BatterySpec,
           state: BatteryState | None = None) -> BatteryState:
    """Replay (instant, signed_ticks) trades in wall-clock order.

    Raises Ramp/Capacity/FloorViolation if any step breaks a bound.  Ties on
    the instant keep the given order.
    """
    if state is None:
        state = initial_state(spec)
    for _, signed in sorted(trades, key=lambda t: t[0]):
        state = apply_trade(state, spec, signed)
    return state


class ChargeTimeline:
    """Committed charge trajectory over a fixed slot grid.

    Mutable builder used while constructing schedules: volumes are clipped
    against the whole committed future so the finished schedule replays
    cleanly in wall-clock order.  soc(i) is the charge after slot i's trade.
    """

    def __init__(self, spec: BatterySpec, n_slots: int,
                 initial: int | None = None):
        self.spec = spec
        self.n_slots = n_slots
        self.initial = spec.initial_charge if initial is None else initial
        self._deltas = [0] * n_slots

    def path(self) -> list[int]:
        out = []
        charge = self.initial
        for delta in self._deltas:
            charge += delta
            out.append(charge)
        return out

    def charge_before(self, slot: int) -> int:
        return self.initial + sum(self._deltas[:slot])

    def max_buy_between(self, slot: int, end: int) -> int:
        """Buy headroom at `slot` whose effect is undone before `end`."""
        path = self.path()
        segment = path[slot:end] if end > slot else path[slot:slot + 1]
        return min(self.spec.ramp, self.spec.capacity - max(segment))

    def max_buy_from(self, slot: int) -> int:
        """Buy headroom at `slot` that persists to the horizon end."""
        return min(self.spec.ramp, self.spec.capacity - max(self.path()[slot:]))

    def max_sell_from(self, slot: int) -> int:
        """Sell volume available at `slot` against the committed future."""
        return min(self.spec.ramp, min(self.path()[slot:]) - self.spec.min_charge)

    def commit(self, slot: int, signed_ticks: int) -> None:
        self._deltas[slot] += signed_ticks
