"""Tick feed schema, deterministic replay, VWAP accumulation, and synthetic feeds.

Feed files are line-based CSV `ts_us,code,kind,p1,p2` where a quote carries
(ask, bid) and a trade carries (price, volume). Timestamps are integer
microseconds since session open and must be nondecreasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .strategy import Universe

logger = logging.getLogger(__name__)

__all__ = [
    "TickEvent",
    "PriceBuffer",
    "VwapAccumulator",
    "SampledSeries",
    "MarketSession",
    "SynthSpec",
    "apply_event",
    "publish_vwap",
    "sample_vector",
    "replay",
    "write_feed",
    "synth_spec_from_kv",
    "synth_generate",
]

FEED_HEADER = "ts_us,code,kind,p1,p2"
QUOTE = "quote"
TRADE = "trade"
PUBLISH_INTERVAL_US = 1_000_000
SAMPLE_INTERVAL_US = 1_000_000


@dataclass(frozen=True)
class TickEvent:
    ts: int
    code: str
    kind: str
    p1: float
    p2: float

    def __post_init__(self) -> None:
        if self.kind not in (QUOTE, TRADE):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == TRADE and self.p2 <= 0:
            raise ValueError("trade volume must be positive")

    @property
    def ask(self) -> float:
        return self.p1

    @property
    def bid(self) -> float:
        return self.p2

    @property
    def price(self) -> float:
        return self.p1

    @property
    def volume(self) -> float:
        return self.p2


class PriceBuffer:
    """Latest best ask/bid per stock; invalid until the first accepted quote."""

    def __init__(self, n: int) -> None:
        self.ask = np.full(n, np.nan)
        self.bid = np.full(n, np.nan)
        self.valid = np.zeros(n, dtype=bool)
        self.rejected = 0

    def update_quote(self, idx: int, ask: float, bid: float) -> bool:
        """Apply a quote; returns True iff ask or bid actually changed.

        Crossed or nonpositive quotes are rejected (counted, not raised).
        """
        if bid <= 0 or ask < bid:
            self.rejected += 1
            logger.warning("rejected quote #%d: ask=%s bid=%s", self.rejected, ask, bid)
            return False
        changed = not self.valid[idx] or self.ask[idx] != ask or self.bid[idx] != bid
        self.ask[idx] = ask
        self.bid[idx] = bid
        self.valid[idx] = True
        return bool(changed)

    def mid(self) -> np.ndarray:
        return (self.ask + self.bid) / 2.0


class VwapAccumulator:
    """Cumulative sum(price*volume) / sum(volume) per stock, session to date."""

    def __init__(self, n: int) -> None:
        self.value_sum = np.zeros(n)
        self.volume_sum = np.zeros(n)

    def add_trade(self, idx: int, price: float, volume: float) -> None:
        self.value_sum[idx] += price * volume
        self.volume_sum[idx] += volume

    def vwap(self) -> np.ndarray:
        """Instantaneous VWAP; NaN where no volume has traded."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.volume_sum > 0, self.value_sum / self.volume_sum, np.nan)


def apply_event(buffer: PriceBuffer, accumulator: VwapAccumulator, universe: Universe, e: TickEvent) -> bool:
    """Route one event into the market state.

    Returns True only for quotes that changed the buffer; trades update the
    VWAP accumulator silently (they reach the solver at the next publish).
    """
    try:
        idx = universe.index(e.code)
    except KeyError:
        raise ValueError(f"event for unknown code {e.code!r}") from None
    if e.kind == QUOTE:
        return buffer.update_quote(idx, e.ask, e.bid)
    accumulator.add_trade(idx, e.price, e.volume)
    return False


def publish_vwap(
    accumulator: VwapAccumulator,
    base_prices: np.ndarray,
    now_us: int,
    last_publish_us: int | None,
) -> np.ndarray | None:
    """Snapshot VWAP vector, at most once per second.

    Stocks without trades carry their base price, which keeps their deviation
    at zero until they actually trade. Returns None when the publish is not
    yet due.
    """
    if last_publish_us is not None and now_us - last_publish_us < PUBLISH_INTERVAL_US:
        return None
    vwap = accumulator.vwap()
    return np.where(np.isfinite(vwap), vwap, base_prices)


def sample_vector(buffer: PriceBuffer, accumulator: VwapAccumulator) -> np.ndarray:
    """Per-stock (mid - VWAP) sample; NaN where quote or VWAP is undefined."""
    vwap = accumulator.vwap()
    ok = buffer.valid & np.isfinite(vwap)
    return np.where(ok, buffer.mid() - vwap, np.nan)


@dataclass
class SampledSeries:
    """One-second (mid - VWAP) samples for the daily correlation factors."""

    n: int
    rows: list[np.ndarray] = field(default_factory=list)

    def append(self, sample: np.ndarray) -> None:
        self.rows.append(np.asarray(sample, dtype=np.float64))

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, self.n))
        return np.vstack(self.rows)


class MarketSession:
    """Per-day market state with the one-second publish and sample clocks."""

    def __init__(self, universe: Universe) -> None:
        self.universe = universe
        self.buffer = PriceBuffer(universe.n)
        self.accumulator = VwapAccumulator(universe.n)
        self.samples = SampledSeries(universe.n)
        self.vwap_pub: np.ndarray | None = None
        self._last_publish_us: int | None = None
        self._next_sample_us = 0
        self._base = universe.base_prices()

    def advance(self, ts: int) -> None:
        """Take any due samples and publishes using the pre-event state."""
        while self._next_sample_us <= ts:
            self.samples.append(sample_vector(self.buffer, self.accumulator))
            self._next_sample_us += SAMPLE_INTERVAL_US
        published = publish_vwap(self.accumulator, self._base, ts, self._last_publish_us)
        if published is not None:
            self.vwap_pub = published
            self._last_publish_us = ts

    def apply(self, e: TickEvent) -> bool:
        return apply_event(self.buffer, self.accumulator, self.universe, e)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


def write_feed(path, events: list[TickEvent]) -> None:
    with open(path, "w") as fh:
        fh.write(FEED_HEADER + "\n")
        for e in events:
            fh.write(f"{e.ts},{e.code},{e.kind},{_fmt(e.p1)},{_fmt(e.p2)}\n")


def replay(path) -> Iterator[TickEvent]:
    """Stream events from a feed file in order, enforcing nondecreasing timestamps."""
    last_ts = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if lineno == 1:
                if line != FEED_HEADER:
                    raise ValueError(f"{path}:1: expected header {FEED_HEADER!r}")
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields")
            try:
                e = TickEvent(ts=int(parts[0]), code=parts[1], kind=parts[2], p1=float(parts[3]), p2=float(parts[4]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if last_ts is not None and e.ts < last_ts:
                raise ValueError(f"{path}:{lineno}: timestamp regression {e.ts} < {last_ts}")
            last_ts = e.ts
            yield e


@dataclass
class SynthSpec:
    """Synthetic feed shape: Poisson event arrivals, mean-reverting mids.

    Rates are per stock per second; `reversion` of 0 gives a pure random walk
    and `spread_ticks` of 0 gives a locked (ask == bid) market.
    """

    duration_s: float = 300.0
    quote_rate: float = 1.0
    trade_rate: float = 0.2
    spread_ticks: int = 2
    tick: float = 1.0
    vol: float = 0.001
    reversion: float = 0.02
    volume_lots: int = 5

    def __post_init__(self) -> None:
        if self.duration_s <= 0 or self.quote_rate < 0 or self.trade_rate < 0:
            raise ValueError("duration must be positive and rates must be >= 0")
        if self.spread_ticks < 0 or self.tick <= 0 or self.volume_lots < 1:
            raise ValueError("invalid spread/tick/volume specification")
        if self.vol < 0 or self.reversion < 0:
            raise ValueError("vol and reversion must be >= 0")


SYNTH_KEYS = {
    "duration_s": float,
    "quote_rate": float,
    "trade_rate": float,
    "spread_ticks": int,
    "tick": float,
    "vol": float,
    "reversion": float,
    "volume_lots": int,
}


def synth_spec_from_kv(kv: dict[str, str]) -> SynthSpec:
    kwargs = {}
    for key, value in kv.items():
        if key not in SYNTH_KEYS:
            raise ValueError(f"unknown synthetic feed key: {key}")
        kwargs[key] = SYNTH_KEYS[key](value)
    return SynthSpec(**kwargs)


def synth_generate(universe: Universe, spec: SynthSpec, seed: int, path) -> int:
    """Write a deterministic synthetic feed; returns the event count.

    Each stock's mid follows an OU walk around its base price, evaluated at
    Poisson event times; quotes straddle the quantized mid and trades print
    at it with lot-sized volumes.
    """
    rng = np.random.default_rng([int(seed)])
    duration_us = int(spec.duration_s * 1_000_000)
    half_hi = (spec.spread_ticks + 1) // 2
    half_lo = spec.spread_ticks // 2
    events: list[TickEvent] = []
    for stock in universe.stocks:
        n_quotes = int(rng.poisson(spec.quote_rate * spec.duration_s))
        n_trades = int(rng.poisson(spec.trade_rate * spec.duration_s))
        times = rng.integers(0, duration_us, n_quotes + n_trades)
        kinds = [QUOTE] * n_quotes + [TRADE] * n_trades
        order = np.argsort(times, kind="stable")
        mid = float(stock.base_price)
        floor = spec.tick * (spec.spread_ticks + 1)
        last_us = 0
        for k in order:
            ts = int(times[k])
            dt_s = max(ts - last_us, 0) / 1e6
            last_us = ts
            drift = spec.reversion * (stock.base_price - mid) * dt_s
            shock = spec.vol * stock.base_price * np.sqrt(dt_s) * rng.standard_normal()
            mid = max(mid + drift + shock, floor)
            px = round(mid / spec.tick) * spec.tick
            if kinds[k] == QUOTE:
                events.append(
                    TickEvent(ts=ts, code=stock.code, kind=QUOTE, p1=px + half_hi * spec.tick, p2=px - half_lo * spec.tick)
                )
            else:
                volume = stock.min_lot * int(rng.integers(1, spec.volume_lots + 1))
                events.append(TickEvent(ts=ts, code=stock.code, kind=TRADE, p1=px, p2=volume))
    events.sort(key=lambda e: (e.ts, e.code, e.kind))
    write_feed(path, events)
    return len(events)
