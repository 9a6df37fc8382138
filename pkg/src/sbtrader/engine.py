"""Event-driven decision loop: quote changes trigger tick updates, solves, and judgment.

The engine owns one day's market state. On each quote change it rebuilds the
deviation vector (masking open positions), refreshes the O(N) tick side of
the split problem, and runs the solver repeatedly with fresh random initial
states; accepted, judged groups become orders. Closing is driven by the
deviation sign crossing zero (taking the convergence profit) and by a forced
unwind window before session close.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .feed import MarketSession, TickEvent
from .sb import DivergenceError, SbParams, run as sb_run, substream, update_tick
from .strategy import (
    STRATEGY_KEYS,
    CorrelationMatrix,
    DeviationVector,
    StrategyParams,
    Universe,
    build_split,
    compute_deviation,
    evaluate_candidate,
    lot_size,
    read_kv,
)

logger = logging.getLogger(__name__)

__all__ = [
    "LONG",
    "SHORT",
    "Order",
    "Fill",
    "Position",
    "EngineConfig",
    "TradingEngine",
    "engine_config_from_kv",
    "load_engine_config",
    "ORDER_LOG_HEADER",
]

LONG = "long"
SHORT = "short"
OPEN_ACTION = "open"
CLOSE_ACTION = "close"

PENDING_OPEN = "pending_open"
OPEN = "open"
PENDING_CLOSE = "pending_close"
CLOSED = "closed"
_NEXT_STATE = {PENDING_OPEN: OPEN, OPEN: PENDING_CLOSE, PENDING_CLOSE: CLOSED}

ORDER_LOG_HEADER = "ts_us,code,side,lots,price,action"


@dataclass(frozen=True)
class Order:
    order_id: int
    ts: int
    code: str
    side: str
    action: str
    lots: int
    intended_price: float


@dataclass(frozen=True)
class Fill:
    order_id: int
    ts: int
    price: float


@dataclass
class Position:
    code: str
    side: str
    lots: int
    state: str = PENDING_OPEN
    open_price: float | None = None
    open_ts: int | None = None
    close_price: float | None = None
    close_ts: int | None = None

    def advance_state(self, new_state: str) -> None:
        if _NEXT_STATE.get(self.state) != new_state:
            raise ValueError(f"illegal position transition {self.state} -> {new_state}")
        self.state = new_state


@dataclass
class EngineConfig:
    """Strategy parameters plus session timing and solver settings."""

    strategy: StrategyParams = field(default_factory=StrategyParams)
    session_close_us: int = 9_000_000_000
    t_force_us: int = 60_000_000
    n_step: int = 300
    dt: float = 0.02
    restarts: int = 10
    a0: float = 10.0
    c0: float | None = None
    commission_rate: float = 0.0
    corr_window: int = 5
    warmup_days: int = 5

    def sb_params(self) -> SbParams:
        return SbParams(n_step=self.n_step, dt=self.dt, a0=self.a0, c0=self.c0, restarts=self.restarts)


_ENGINE_KEYS = {
    "session_close_s": float,
    "t_force_s": float,
    "n_step": int,
    "dt": float,
    "restarts": int,
    "a0": float,
    "c0": float,
    "commission_rate": float,
    "corr_window": int,
    "warmup_days": int,
}


def engine_config_from_kv(kv: dict[str, str]) -> EngineConfig:
    for key in kv:
        if key not in STRATEGY_KEYS and key not in _ENGINE_KEYS:
            raise ValueError(f"unknown config key: {key}")
    strategy_kwargs = {k: STRATEGY_KEYS[k](kv[k]) for k in STRATEGY_KEYS if k in kv}
    cfg = EngineConfig(strategy=StrategyParams(**strategy_kwargs))
    if "session_close_s" in kv:
        cfg.session_close_us = int(float(kv["session_close_s"]) * 1e6)
    if "t_force_s" in kv:
        cfg.t_force_us = int(float(kv["t_force_s"]) * 1e6)
    for key in ("n_step", "restarts", "corr_window", "warmup_days"):
        if key in kv:
            setattr(cfg, key, int(kv[key]))
    for key in ("dt", "a0", "c0", "commission_rate"):
        if key in kv:
            setattr(cfg, key, float(kv[key]))
    return cfg


def load_engine_config(path) -> EngineConfig:
    return engine_config_from_kv(read_kv(path))


class TradingEngine:
    """One day's event loop over a totally ordered feed.

    `fill_handler` maps an issued Order to a Fill (the backcast uses
    fill-at-intended-price); fills are applied synchronously so backcast runs
    are strictly sequential and deterministic.
    """

    def __init__(
        self,
        universe: Universe,
        corr: CorrelationMatrix,
        config: EngineConfig,
        seed: int = 0,
        day_key: int = 0,
        fill_handler=None,
    ) -> None:
        if corr.n != universe.n:
            raise ValueError("correlation matrix size must match the universe")
        self.universe = universe
        self.corr = corr
        self.config = config
        self.seed = int(seed)
        self.day_key = int(day_key)
        self.fill_handler = fill_handler
        self.session = MarketSession(universe)
        empty = DeviationVector(dp=np.zeros(universe.n), mask=np.zeros(universe.n, dtype=bool))
        self.split = build_split(empty, corr, config.strategy)
        self.positions: list[Position] = []
        self.open_codes: set[str] = set()
        self.fills: list[tuple[Order, Fill]] = []
        self.event_index = 0
        self.skipped_events = 0
        self._outstanding: dict[int, tuple[Order, Position]] = {}
        self._next_order_id = 0
        self._base = universe.base_prices()
        self._params = config.sb_params()

    # -- event flow ---------------------------------------------------------

    def process(self, e: TickEvent) -> None:
        self.session.advance(e.ts)
        changed = self.session.apply(e)
        self.close_policy(e.ts)
        if changed:
            self.on_quote_change(e.ts, e.code)
        self.event_index += 1

    def finalize(self, ts: int) -> None:
        """Force-close everything still open at the last known quotes."""
        for pos in self.positions:
            if pos.state == OPEN:
                self._issue_close(pos, ts)
        still_open = [p.code for p in self.positions if p.state not in (CLOSED,)]
        if still_open:
            raise RuntimeError(f"positions not closed at session end: {still_open}")

    # -- opening ------------------------------------------------------------

    def on_quote_change(self, ts: int, code: str | None = None) -> list[Order]:
        """Re-solve after a quote change; returns any orders issued.

        The solve repeats up to the restart budget with fresh initial states,
        redoing the preprocessing (deviation + tick update) only after a run
        that issued orders, since opening changes the open-list mask.
        """
        if ts >= self.config.session_close_us - self.config.t_force_us:
            return []  # inside the forced-unwind window; judgment would reject
        issued: list[Order] = []
        dev: DeviationVector | None = None
        need_preprocess = True
        for run_index in range(self.config.restarts):
            if need_preprocess:
                dev = self._deviation()
                self.split = update_tick(self.split, dev.sgn(), np.abs(dev.dp))
                need_preprocess = False
                if dev.mask.all():
                    break
            rng = substream(self.seed, self.day_key, self.event_index, run_index)
            try:
                sol = sb_run(self.split, self._params, rng, run_index=run_index)
            except DivergenceError as exc:
                self.skipped_events += 1
                logger.warning("solver diverged at ts=%d (%s); skipping event", ts, exc)
                break
            verdict = evaluate_candidate(sol, dev, self.corr, self.config.strategy)
            if not verdict.accepted:
                continue
            selected = np.flatnonzero(np.asarray(sol.spins) > 0)
            if any(self.universe.codes[i] in self.open_codes for i in selected):
                # compute_deviation masks open stocks, so the solver can never
                # select one; reaching this means the mask was bypassed
                raise RuntimeError("accepted candidate contains an already-open code")
            orders = self.judge_open(selected, dev, ts)
            if orders:
                issued.extend(orders)
                need_preprocess = True
        return issued

    def judge_open(self, selected: np.ndarray, dev: DeviationVector, ts: int) -> list[Order]:
        """Open the whole group or nothing; register before issuing orders."""
        codes = [self.universe.codes[i] for i in selected]
        if len(self.open_codes) + len(codes) > self.config.strategy.p_max:
            return []
        if any(code in self.open_codes for code in codes):
            return []  # duplicate pair positions are not allowed
        sgn = dev.sgn()
        if any(sgn[i] == 0 for i in selected):
            return []  # zero deviation leaves the position direction undefined
        orders = []
        for i in selected:
            stock = self.universe.stocks[int(i)]
            side = LONG if sgn[i] < 0 else SHORT
            lots = lot_size(self.config.strategy.a_trans, stock.min_lot, stock.base_price)
            price = float(self.session.buffer.ask[i] if side == LONG else self.session.buffer.bid[i])
            pos = Position(code=stock.code, side=side, lots=lots)
            self.positions.append(pos)
            self.open_codes.add(stock.code)
            orders.append(self._issue(pos, OPEN_ACTION, ts, price))
        if len(self.open_codes) > self.config.strategy.p_max:
            raise RuntimeError("open list exceeded p_max")
        return orders

    # -- closing ------------------------------------------------------------

    def close_policy(self, now: int) -> list[Order]:
        """Close on deviation sign-cross (convergence take-profit) or forced unwind."""
        forced = now >= self.config.session_close_us - self.config.t_force_us
        vwap = self.session.vwap_pub
        orders = []
        for pos in self.positions:
            if pos.state != OPEN:
                continue
            i = self.universe.index(pos.code)
            if not self.session.buffer.valid[i]:
                continue
            crossed = False
            if vwap is not None and np.isfinite(vwap[i]):
                dp = (float(self.session.buffer.mid()[i]) - float(vwap[i])) / self._base[i]
                crossed = dp >= 0.0 if pos.side == LONG else dp <= 0.0
            if forced or crossed:
                orders.append(self._issue_close(pos, now))
        return orders

    def _issue_close(self, pos: Position, ts: int) -> Order:
        i = self.universe.index(pos.code)
        price = float(self.session.buffer.bid[i] if pos.side == LONG else self.session.buffer.ask[i])
        return self._issue(pos, CLOSE_ACTION, ts, price)

    # -- order/fill plumbing --------------------------------------------------

    def _issue(self, pos: Position, action: str, ts: int, price: float) -> Order:
        order = Order(
            order_id=self._next_order_id,
            ts=ts,
            code=pos.code,
            side=pos.side,
            action=action,
            lots=pos.lots,
            intended_price=price,
        )
        self._next_order_id += 1
        if action == CLOSE_ACTION:
            pos.advance_state(PENDING_CLOSE)
        self._outstanding[order.order_id] = (order, pos)
        if self.fill_handler is not None:
            fill = self.fill_handler(order)
            if fill is not None:
                self.on_fill(fill)
        return order

    def on_fill(self, fill: Fill) -> None:
        try:
            order, pos = self._outstanding.pop(fill.order_id)
        except KeyError:
            raise ValueError(f"fill for unknown order {fill.order_id}") from None
        if order.action == OPEN_ACTION:
            pos.advance_state(OPEN)
            pos.open_price = fill.price
            pos.open_ts = fill.ts
        else:
            pos.advance_state(CLOSED)
            pos.close_price = fill.price
            pos.close_ts = fill.ts
            self.open_codes.discard(pos.code)
        self.fills.append((order, fill))

    # -- helpers --------------------------------------------------------------

    def _deviation(self) -> DeviationVector:
        open_mask = np.array([c in self.open_codes for c in self.universe.codes], dtype=bool)
        return compute_deviation(
            self.universe,
            self.session.buffer.ask,
            self.session.buffer.bid,
            self.session.buffer.valid,
            self.session.vwap_pub,
            open_mask,
            self.config.strategy.a_trans,
        )
