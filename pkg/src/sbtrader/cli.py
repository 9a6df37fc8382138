"""Command-line entry points: solve, gen-feed, corr, backcast, bench.

Exit codes: 0 success, 1 usage or input errors, 2 solver finished but found
no acceptable (feasible and below-threshold) selection.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import backcast as bc
from . import engine as eng
from . import feed as fd
from . import ising
from . import sb
from . import strategy as st

__all__ = ["main"]


def _load_deviations(path, n: int) -> st.DeviationVector:
    """One line per stock: `dp` or `dp,mask` (mask 1 excludes the stock)."""
    dp = []
    mask = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (1, 2):
                raise ValueError(f"{path}:{lineno}: expected `dp` or `dp,mask`")
            try:
                dp.append(float(parts[0]))
                mask.append(bool(int(parts[1])) if len(parts) == 2 else False)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: cannot parse deviation entry") from None
    if len(dp) != n:
        raise ValueError(f"{path}: {len(dp)} deviations for a universe of {n}")
    dp_arr = np.array(dp)
    mask_arr = np.array(mask)
    dp_arr[mask_arr] = 0.0
    return st.DeviationVector(dp=dp_arr, mask=mask_arr)


def _sb_params(args, restarts_default: int = 10) -> sb.SbParams:
    return sb.SbParams(
        n_step=args.n_step,
        dt=args.dt,
        restarts=args.restarts if args.restarts is not None else restarts_default,
        seed=args.seed,
    )


def _spin_string(spins: np.ndarray) -> str:
    return "".join("+" if s > 0 else "-" for s in spins)


def cmd_solve(args) -> int:
    params = _sb_params(args)
    if args.qubo:
        problem = ising.QuboProblem(ising.load_matrix(args.qubo)).symmetrized()
        split = sb.split_from_ising(ising.qubo_to_ising(problem))
        sol = sb.solve(split, params)
        print(f"spins={_spin_string(sol.spins)}")
        print(f"bits={''.join(str(int((s + 1) // 2)) for s in sol.spins)}")
        print(f"energy={sol.energy!r}")
        print(f"run_index={sol.run_index}")
        print(f"elapsed_s={sol.elapsed:.6f}")
        return 0
    universe = st.load_universe(args.universe)
    corr = st.load_correlation(args.corr)
    sparams = st.strategy_params_from_kv(st.read_kv(args.config)) if args.config else st.StrategyParams()
    dev = _load_deviations(args.deviations, universe.n)
    split = st.build_split(dev, corr, sparams)
    sol = sb.solve(split, params)
    bits = (np.asarray(sol.spins) + 1.0) / 2.0
    report = st.check_constraints(bits, dev, sparams.n_s)
    verdict = st.evaluate_candidate(sol, dev, corr, sparams)
    selected = np.flatnonzero(bits > 0)
    sides = ["long" if dev.dp[i] < 0 else "short" for i in selected]
    print(f"spins={_spin_string(sol.spins)}")
    print("selected=" + ",".join(f"{universe.codes[i]}:{side}" for i, side in zip(selected, sides)))
    print(f"energy={sol.energy!r}")
    print(f"feasible={report.ok}")
    for reason in report.reasons:
        print(f"reason={reason}")
    print(f"h_cost={verdict.h_cost!r}")
    print(f"accepted={verdict.accepted}")
    print(f"elapsed_s={sol.elapsed:.6f}")
    return 0 if verdict.accepted else 2


def cmd_gen_feed(args) -> int:
    universe = st.load_universe(args.universe)
    spec = fd.synth_spec_from_kv(st.read_kv(args.spec)) if args.spec else fd.SynthSpec()
    count = fd.synth_generate(universe, spec, args.seed, args.out)
    print(f"events={count}")
    print(f"out={args.out}")
    return 0


def cmd_corr(args) -> int:
    universe = st.load_universe(args.universe)
    daily = []
    days = []
    for path in args.feeds:
        session = fd.MarketSession(universe)
        for e in fd.replay(path):
            session.advance(e.ts)
            session.apply(e)
        daily.append(st.day_sigma_matrix(session.samples.matrix()))
        days.append(Path(path).stem)
    corr = st.correlation_matrix(daily, window=args.window)
    st.save_correlation(args.out, corr, days)
    print(f"days={','.join(days)}")
    print(f"out={args.out}")
    return 0


def cmd_backcast(args) -> int:
    universe = st.load_universe(args.universe)
    config = eng.load_engine_config(args.config) if args.config else eng.EngineConfig()
    feed_dir = Path(args.feed_dir)
    if not feed_dir.is_dir():
        raise ValueError(f"feed directory not found: {feed_dir}")
    day_feeds = [(p.stem, str(p)) for p in sorted(feed_dir.glob("*.csv"))]
    corr_override = st.load_correlation(args.corr) if args.corr else None
    report = bc.run_backcast(day_feeds, universe, config, seed=args.seed, corr_override=corr_override)
    report.write(args.out)
    print(f"days={len(report.days)}")
    print(f"total_transactions={report.total_transactions()!r}")
    print(f"total_pnl={report.total_pnl()!r}")
    print(f"sharpe={report.stats.sharpe!r}")
    print(f"out={args.out}")
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng([args.seed])
    dev, corr, sparams = st.random_instance(args.n, args.n_s, rng)
    split = st.build_split(dev, corr, sparams)
    params = _sb_params(args)
    timings = []
    for i in range(params.restarts):
        sol = sb.run(split, params, sb.substream(args.seed, i), run_index=i)
        timings.append(sol.elapsed)
    tick_counter = sb.WriteCounter()
    sb.update_tick(split, dev.sgn(), np.abs(dev.dp), counter=tick_counter)
    day_counter = sb.WriteCounter()
    st.build_split(dev, corr, sparams, counter=day_counter)
    print(f"n={args.n} n_step={params.n_step} runs={params.restarts}")
    print(f"mean_run_ms={1e3 * float(np.mean(timings)):.3f}")
    print(f"min_run_ms={1e3 * float(np.min(timings)):.3f}")
    print(f"tick_update_writes={tick_counter.elements}")
    print(f"day_rebuild_writes={day_counter.elements}")
    print(f"write_ratio={day_counter.elements / tick_counter.elements:.2f}")
    if args.oracle_instances:
        hits = 0
        for k in range(args.oracle_instances):
            dev_k, corr_k, sp_k = st.random_instance(16, 4, np.random.default_rng([args.seed, k]))
            split_k = st.build_split(dev_k, corr_k, sp_k)
            sol = sb.solve(split_k, sb.SbParams(n_step=params.n_step, dt=params.dt, restarts=params.restarts, seed=k))
            _, best = ising.brute_force_min(st.build_qubo(dev_k, corr_k, sp_k))
            bits = (np.asarray(sol.spins) + 1.0) / 2.0
            if abs(ising.qubo_energy(st.build_qubo(dev_k, corr_k, sp_k), bits) - best) <= 1e-9:
                hits += 1
        print(f"oracle_instances={args.oracle_instances}")
        print(f"oracle_exact_rate={hits / args.oracle_instances:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbtrader", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_solver_flags(p, restarts_default=None):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=restarts_default)
        p.add_argument("--n-step", type=int, default=300, dest="n_step")
        p.add_argument("--dt", type=float, default=0.02)

    p = sub.add_parser("solve", help="solve a QUBO file or a strategy instance")
    p.add_argument("--qubo", help="matrix text file (first line n, then n rows)")
    p.add_argument("--universe", help="universe CSV (code,base_price,min_lot)")
    p.add_argument("--deviations", help="per-stock deviation file (dp[,mask] per line)")
    p.add_argument("--corr", help="correlation matrix text file")
    p.add_argument("--config", help="strategy key=value config file")
    add_solver_flags(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("gen-feed", help="generate a deterministic synthetic tick feed")
    p.add_argument("--universe", required=True)
    p.add_argument("--spec", help="synthetic feed key=value spec file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_feed)

    p = sub.add_parser("corr", help="build a correlation matrix from day feeds")
    p.add_argument("feeds", nargs="+", help="feed CSVs, one per day, oldest first")
    p.add_argument("--universe", required=True)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_corr)

    p = sub.add_parser("backcast", help="replay day feeds through the trading engine")
    p.add_argument("--feed-dir", required=True, dest="feed_dir")
    p.add_argument("--universe", required=True)
    p.add_argument("--config", help="engine key=value config file")
    p.add_argument("--corr", help="correlation matrix override (skips warm-up)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_backcast)

    p = sub.add_parser("bench", help="time solver runs and measure update write counts")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--n-s", type=int, default=4, dest="n_s")
    p.add_argument("--oracle-instances", type=int, default=0, dest="oracle_instances")
    add_solver_flags(p, restarts_default=10)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.fn is cmd_solve:
        strategy_inputs = (args.universe, args.deviations, args.corr)
        if args.qubo and any(strategy_inputs):
            parser.error("--qubo and strategy inputs are mutually exclusive")
        if not args.qubo and not all(strategy_inputs):
            parser.error("provide --qubo or all of --universe/--deviations/--corr")
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
