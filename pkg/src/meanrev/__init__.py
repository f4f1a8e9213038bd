"""Optimal trading boundaries for mean-reverting diffusions with sequential
entry/exit deadlines and fixed transaction costs.

The library solves backward Volterra integral equations for the exit,
entry, and chooser free boundaries, evaluates the matching value
functions, and verifies everything against independent finite-difference
and Monte Carlo oracles.
"""

__version__ = "0.1.0"

from .chooser import ChooserSolution, chooser_payoff, find_m, solve_chooser
from .entry_problems import (
    EntrySolution,
    ValueTable,
    build_value_table,
    entry_payoff,
    find_gamma_long,
    find_gamma_short,
    solve_entry_long,
    solve_entry_short,
    terminal_expectation,
)
from .exit_problems import (
    DegeneratePolicy,
    ExitSolution,
    TradeSide,
    solve_exit_long,
    solve_exit_short,
)
from .kernels import (
    AffinePiece,
    IntegrandSpec,
    KernelSpec,
    Truncation,
    eval_kernel,
    kernel_for_problem,
    make_integrand,
)
from .model import (
    CriticalLevels,
    Degeneracy,
    EntryThresholds,
    Family,
    Interval,
    MarketSpec,
    ModelSpec,
    Problem,
    Side,
    TransitionLaw,
    classify_degenerate,
    critical_levels,
    mean_m,
    sample_transition,
    simulate_step,
    transition_law,
    truncated_affine_expectation,
)
from .oracles import (
    FDGrid,
    FDResult,
    MCEstimate,
    PolicySpec,
    Scheme,
    fd_value,
    mc_policy_value,
    perturbation_optimality_test,
)
from .strategy_sim import (
    PnlSummary,
    Strategy,
    StrategyBoundaries,
    TradeRecord,
    pnl_statistics,
    simulate_round_trip,
    simulate_round_trips,
)
from .volterra import (
    Boundary,
    EquationSpec,
    Monotonicity,
    QuadratureRule,
    SolverConfig,
    TimeGrid,
    residual_report,
    solve_backward,
    solve_backward_coupled,
)
