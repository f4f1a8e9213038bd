"""Entry timing with the option to open either a long or a short position.

The chooser payoff is the best of the two one-sided entry payoffs and
zero. A constant crossover level marks where the two sides break even
against each other; together with the break-even levels it pins the
terminal values of a coupled pair of entry boundaries, solved backward as
a system. The value representation mirrors the one-sided entries with the
two-sided (outside-pair) kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ModelDomainError
from .entry_problems import (
    ValueTable,
    build_value_table,
    find_gamma_long,
    find_gamma_short,
    terminal_expectation,
)
from .exit_problems import DegeneratePolicy, ExitSolution, TradeSide
from .kernels import KernelSpec, eval_kernel, kernel_for_problem, piece_value_closed
from .model import (
    Degeneracy,
    EntryThresholds,
    MarketSpec,
    ModelSpec,
    Problem,
    classify_degenerate,
    critical_levels,
)
from .volterra import (
    Boundary,
    EquationSpec,
    Monotonicity,
    QuadratureRule,
    SolverConfig,
    TimeGrid,
    quadrature_weights,
    solve_backward_coupled,
    value_quadrature,
)

_M_TOL = 1e-9


def find_m(
    table_long: ValueTable,
    table_short: ValueTable,
    bracket: tuple[float, float],
    c: float = 0.0,
) -> float:
    """Crossover level where the long- and short-entry payoffs are equal.

    Solves V_long(x) + V_short(x) = 2x on the given bracket (both payoffs
    carry the same cost c, which cancels). No sign change means an
    upstream solve failed: the difference function is monotone and must
    cross between the two time-zero exit boundaries.
    """

    def g(q):
        return table_long(q) + table_short(q) - 2.0 * q

    lo, hi = bracket
    if not lo < hi:
        raise ModelDomainError(f"invalid crossover bracket ({lo}, {hi})")
    if np.sign(g(lo)) == np.sign(g(hi)) and g(lo) != 0.0 and g(hi) != 0.0:
        raise ModelDomainError(
            f"no crossover sign change on ({lo:.6g}, {hi:.6g}): g={g(lo):.3e}/{g(hi):.3e}"
        )
    root = brentq(g, lo, hi, xtol=1e-13, rtol=8.9e-16)
    if abs(g(root)) > _M_TOL:
        raise ModelDomainError(f"crossover residual {g(root):.2e} exceeds {_M_TOL}")
    return float(root)


def chooser_payoff(table_long: ValueTable, table_short: ValueTable, c: float, x):
    """max(long entry payoff, short entry payoff, 0)."""
    x = np.asarray(x, dtype=float)
    out = np.maximum.reduce(
        [table_long(x) - x - c, x - c - table_short(x), np.zeros_like(x)]
    )
    return out if out.ndim else float(out)


def chooser_payoff_indicator(
    table_long: ValueTable,
    table_short: ValueTable,
    c: float,
    thresholds: EntryThresholds,
    x,
):
    """Indicator decomposition of the chooser payoff (equivalent form).

    Long piece below min(crossover, long break-even), short piece above
    max(crossover, short break-even); used to cross-check the max form.
    """
    x = np.asarray(x, dtype=float)
    left = min(thresholds.crossover, thresholds.break_even_long)
    right = max(thresholds.crossover, thresholds.break_even_short)
    out = np.where(x <= left, table_long(x) - x - c, 0.0) + np.where(
        x > right, x - c - table_short(x), 0.0
    )
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ChooserSolution:
    """Coupled lower/upper entry boundaries with the chooser value.

    ``long_first`` records which payoff branch is active at the crossover:
    True when the short break-even lies below the long one (both sides
    profitable in the middle band), False when a dead band separates them.
    """

    model: ModelSpec
    market: MarketSpec
    m: float
    gamma_long: float
    gamma_short: float
    lower: Boundary
    upper: Boundary
    exit_long: ExitSolution
    exit_short: ExitSolution
    table_long: ValueTable
    table_short: ValueTable
    kernel: KernelSpec
    quadrature: QuadratureRule

    @property
    def long_first(self) -> bool:
        return self.gamma_short < self.gamma_long

    @property
    def thresholds(self) -> EntryThresholds:
        return EntryThresholds(self.gamma_long, self.gamma_short, self.m)

    def payoff(self, x):
        return chooser_payoff(self.table_long, self.table_short, self.market.c, x)

    def _payoff_kinks(self):
        return (self.gamma_long, self.gamma_short, self.m)

    def value(self, t: float, x):
        """Chooser entry value at t <= T, pinned to the payoff on the entry region."""
        T = self.market.T
        if t < 0 or t > T + 1e-12:
            raise ModelDomainError("t must lie in the entry window")
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = terminal_expectation(
            self.payoff, self.model, self.market.r, t, x, T, self._payoff_kinks()
        )
        out = np.atleast_1d(np.asarray(out, dtype=float))
        if T - t > 1e-14:
            u, w = value_quadrature(self.lower.grid.nodes, t)
            k = eval_kernel(
                self.kernel,
                self.model,
                t,
                u[:, None],
                x[None, :],
                self.lower(u)[:, None],
                self.upper(u)[:, None],
            )
            out = out + w @ k
        payoff = self.payoff(x)
        in_region = (x <= self.lower(t)) | (x >= self.upper(t))
        out = np.where(in_region, payoff, np.maximum(out, payoff))
        return float(out[0]) if scalar else out


def solve_chooser(
    model: ModelSpec,
    market: MarketSpec,
    exit_long: ExitSolution,
    exit_short: ExitSolution,
    grid: TimeGrid | None = None,
    cfg: SolverConfig | None = None,
    table_long: ValueTable | None = None,
    table_short: ValueTable | None = None,
):
    """Coupled solve of the chooser entry boundary pair."""
    table_long = table_long if table_long is not None else build_value_table(exit_long)
    table_short = table_short if table_short is not None else build_value_table(exit_short)
    gamma_long = find_gamma_long(exit_long, table_long)
    gamma_short = find_gamma_short(exit_short, table_short)
    if gamma_long is None or gamma_short is None:
        thresholds = EntryThresholds(gamma_long, gamma_short, None)
        cls = classify_degenerate(Problem.CHOOSER, model, market, thresholds)
        return DegeneratePolicy(Problem.CHOOSER, cls, "one entry side never breaks even")
    m = find_m(
        table_long,
        table_short,
        (exit_short.boundary.values[0], exit_long.boundary.values[0]),
        market.c,
    )
    thresholds = EntryThresholds(gamma_long, gamma_short, m)
    classification = classify_degenerate(Problem.CHOOSER, model, market, thresholds)
    if classification is not Degeneracy.NON_DEGENERATE:
        return DegeneratePolicy(Problem.CHOOSER, classification, "threshold outside state space")

    grid = grid if grid is not None else TimeGrid.uniform(market.T, 500)
    _ = grid.horizon  # validated below against the entry deadline
    if abs(grid.horizon - market.T) > 1e-12 * max(1.0, market.T):
        raise ModelDomainError("grid horizon must match the entry deadline")
    cfg = cfg if cfg is not None else SolverConfig()
    levels = critical_levels(model, market)
    terminal_lower = min(m, gamma_long, levels.x_star_lower)
    terminal_upper = max(m, gamma_short, levels.x_star_upper)
    kspec = kernel_for_problem(Problem.CHOOSER, model, market, thresholds)
    nodes = grid.nodes
    T, c = market.T, market.c
    kinks = (gamma_long, gamma_short, m)

    def payoff_fn(q):
        return chooser_payoff(table_long, table_short, c, q)

    def lhs_lower(t, y):
        return table_long(y) - y - c

    def lhs_upper(t, y):
        return y - c - table_short(y)

    def make_rhs(own_is_lower):
        # Degenerate left endpoint as in the one-sided entries: half-mass
        # kernel limit of the equation's own integrand piece, evaluated at
        # the neighboring node's boundary value (keeps the coupled
        # recursion stable; the other side's region carries no mass there).
        piece = kspec.integrand.pieces[0 if own_is_lower else 1]

        def rhs(i, y, future, other):
            t = nodes[i]
            u = nodes[i:]
            z, z_tilde = (future, other[1:]) if own_is_lower else (other[1:], future)
            term = terminal_expectation(payoff_fn, model, market.r, t, y, T, kinks)
            if len(future) == 0:
                return term
            k = eval_kernel(kspec, model, t, u[1:], y, z, z_tilde)
            w = quadrature_weights(u, cfg.quadrature)
            head = -0.5 * piece_value_closed(piece, future[0])
            return term + float(w[1:] @ k) + float(w[0]) * head

        return rhs

    scale = model.stationary_scale()
    eq_lower = EquationSpec(
        lhs_lower, make_rhs(True), terminal_lower, Monotonicity.INCREASING, scale
    )
    eq_upper = EquationSpec(
        lhs_upper, make_rhs(False), terminal_upper, Monotonicity.DECREASING, scale
    )
    lower, upper = solve_backward_coupled(eq_lower, eq_upper, grid, cfg)
    return ChooserSolution(
        model,
        market,
        m,
        gamma_long,
        gamma_short,
        lower,
        upper,
        exit_long,
        exit_short,
        table_long,
        table_short,
        kspec,
        cfg.quadrature,
    )
