"""Shared fixtures: the engineered convergence scenario and oracle-calibrated instances."""

import itertools

import numpy as np

from sbtrader.engine import EngineConfig
from sbtrader.feed import TickEvent, write_feed
from sbtrader.ising import qubo_energy
from sbtrader.strategy import (
    CorrelationMatrix,
    Stock,
    StrategyParams,
    Universe,
    random_instance,
    save_correlation,
    save_universe,
)

BASE = 5000.0
MIN_LOT = 100
LOTS = 8  # floor(4e6 / (100 * 5000))
SHARES = LOTS * MIN_LOT


def make_universe(n=6):
    return Universe([Stock(code=f"10{i:02d}", base_price=BASE, min_lot=MIN_LOT) for i in range(1, n + 1)])


def convergence_events(codes):
    """Feed whose optimal group is codes[0:2] long, codes[2:4] short.

    All VWAPs pin at the base price; the four signal stocks deviate at 2.5 s
    and converge exactly back to VWAP at 100 s, which triggers the take-profit
    close of every leg.
    """
    events = []
    for i, c in enumerate(codes):
        events.append(TickEvent(100_000 + i, c, "trade", BASE, 100))
    for i, c in enumerate(codes):
        events.append(TickEvent(150_000 + i, c, "quote", BASE + 1, BASE - 1))
    signal = {
        codes[0]: (BASE - 20, BASE - 22),
        codes[1]: (BASE - 19, BASE - 21),
        codes[2]: (BASE + 22, BASE + 20),
        codes[3]: (BASE + 21, BASE + 19),
    }
    t = 2_500_000
    for c, (a, b) in signal.items():
        events.append(TickEvent(t, c, "quote", a, b))
        t += 100
    t = 100_000_000
    for c in codes[:4]:
        events.append(TickEvent(t, c, "quote", BASE + 1, BASE - 1))
        t += 100
    events.sort(key=lambda e: (e.ts, e.code, e.kind))
    return events


def convergence_params(commission_rate=0.0, restarts=3):
    params = StrategyParams(
        n_s=4, p_max=4, a_trans=4_000_000.0, c1=1000.0, c2=30.0, c3=30.0, accept_threshold=0.0
    )
    return EngineConfig(strategy=params, restarts=restarts, commission_rate=commission_rate)


def convergence_corr(n=6):
    return CorrelationMatrix(np.full((n, n), 0.5))


def convergence_expected(commission_rate=0.0):
    """Hand accounting of the four legs at the constructed quote prices."""
    opens = {"long": [BASE - 20, BASE - 19], "short": [BASE + 20, BASE + 19]}
    closes = {"long": BASE - 1, "short": BASE + 1}
    pnl = 0.0
    transactions = 0.0
    for price in opens["long"]:
        pnl += (closes["long"] - price) * SHARES
        transactions += (price + closes["long"]) * SHARES
    for price in opens["short"]:
        pnl += (price - closes["short"]) * SHARES
        transactions += (price + closes["short"]) * SHARES
    return transactions, pnl - commission_rate * transactions


def write_convergence_fixture(dirpath, commission_rate=0.0, restarts=3):
    """Materialize universe/feed/corr/config files for CLI-level runs."""
    uni = make_universe()
    feed_dir = dirpath / "days"
    feed_dir.mkdir(parents=True, exist_ok=True)
    write_feed(feed_dir / "2023-02-24.csv", convergence_events(uni.codes))
    save_universe(dirpath / "universe.csv", uni)
    save_correlation(dirpath / "corr.txt", convergence_corr(), ["seed"])
    config = dirpath / "engine.cfg"
    config.write_text(
        "n_s=4\np_max=4\na_trans=4000000\nc1=1000\nc2=30\nc3=30\naccept_threshold=0\n"
        f"restarts={restarts}\ncommission_rate={commission_rate}\n"
    )
    return {
        "universe": dirpath / "universe.csv",
        "feed_dir": feed_dir,
        "corr": dirpath / "corr.txt",
        "config": config,
    }


def tight_instance(n, n_s, seed, c1=300.0, dp_scale=0.0075, margin=0.5):
    """Random instance with the smallest penalties that still make every
    constraint violation cost more than the best feasible group (checked by
    full enumeration), so the global QUBO minimum is feasible by construction."""
    rng = np.random.default_rng(seed)
    dev, corr, _ = random_instance(n, n_s, rng, dp_scale=dp_scale, c1=c1, penalty=1.0)
    sgn = dev.sgn()
    ks = np.arange(1 << n, dtype=np.uint64)
    bits = ((ks[:, None] >> np.arange(n, dtype=np.uint64)) & 1).astype(np.float64)
    sigma_off = corr.sigma.copy()
    np.fill_diagonal(sigma_off, 0.0)
    h_cost = -(c1 * np.abs(dev.dp)) @ bits.T + np.einsum("ki,ij,kj->k", bits, sigma_off, bits)
    violation = (bits.sum(axis=1) - n_s) ** 2 + (bits @ sgn) ** 2
    feasible = violation == 0
    f_min = float(h_cost[feasible].min())
    needed = (f_min - h_cost[~feasible]) / violation[~feasible]
    c2 = max(float(needed.max()) + margin, margin)
    params = StrategyParams(
        n_s=n_s, p_max=n_s, c1=c1, c2=c2, c3=c2, accept_threshold=float("inf")
    )
    return dev, corr, params


def feasible_qubo_energies(dev, corr, params, qubo):
    """Energies of every feasible selection, for optimality-gap checks."""
    sgn = dev.sgn()
    energies = []
    for combo in itertools.combinations(range(dev.n), params.n_s):
        if abs(float(sgn[list(combo)].sum())) > 1e-9:
            continue
        b = np.zeros(dev.n)
        b[list(combo)] = 1.0
        energies.append(qubo_energy(qubo, b))
    return np.array(energies)
