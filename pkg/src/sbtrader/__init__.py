"""Simulated-bifurcation stock selection, event-driven trading, and backcasting."""

from .ising import (
    IsingProblem,
    QuboProblem,
    brute_force_min,
    ising_energy,
    qubo_energy,
    qubo_to_ising,
)
from .sb import (
    SbParams,
    SbSolution,
    SplitProblem,
    dense_reconstruct,
    run,
    solve,
    step,
    update_tick,
)
from .strategy import (
    CorrelationMatrix,
    DeviationVector,
    StrategyParams,
    Universe,
    build_qubo,
    build_split,
    check_constraints,
    correlation_matrix,
    daily_correlation,
    evaluate_candidate,
)
from .feed import SynthSpec, TickEvent, replay, synth_generate
from .engine import EngineConfig, TradingEngine
from .backcast import BackcastReport, run_backcast, sharpe

__version__ = "0.1.0"
