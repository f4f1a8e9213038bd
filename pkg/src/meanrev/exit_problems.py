"""Optimal liquidation of an open long or short position within a fixed window.

A long position is sold for X - c when X first rises to a decreasing
boundary; a short position is bought back for X + c when X first falls to
an increasing boundary. Both boundaries solve backward Volterra equations
anchored at the analytic critical levels, and both value functions combine
a discounted terminal-mean term with a time integral of the matching
kernel along the solved boundary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ModelDomainError
from .kernels import KernelSpec, Truncation, eval_kernel, kernel_for_problem
from .model import (
    Degeneracy,
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
    solve_backward,
    value_quadrature,
)


class TradeSide(enum.Enum):
    LONG = "long"
    SHORT = "short"


@dataclass(frozen=True)
class DegeneratePolicy:
    """Structured result for configurations that need no boundary solve."""

    problem: Problem
    classification: Degeneracy
    note: str


def _check_grid(grid: TimeGrid, horizon: float):
    if abs(grid.horizon - horizon) > 1e-12 * max(1.0, horizon):
        raise ModelDomainError("grid horizon must match the problem deadline")


@dataclass(frozen=True)
class ExitSolution:
    """Solved exit problem: boundary plus value evaluator.

    ``cost_sign`` is -1 for the long side (receive X - c) and +1 for the
    short side (pay X + c). ``kernel`` is the problem's defining kernel;
    the value evaluator integrates the complementary truncation so that
    the discounted terminal-mean leg cancels analytically against the
    full-expectation part of the kernel (the payoff identity V = x -+ c on
    the stopping region then holds exactly instead of to quadrature error).
    """

    side: TradeSide
    model: ModelSpec
    market: MarketSpec
    boundary: Boundary
    kernel: KernelSpec
    quadrature: QuadratureRule

    @property
    def cost_sign(self) -> float:
        return -1.0 if self.side is TradeSide.LONG else 1.0

    @property
    def complement_kernel(self) -> KernelSpec:
        trunc = (
            Truncation.BELOW_Z if self.side is TradeSide.LONG else Truncation.ABOVE_Z
        )
        return KernelSpec(self.kernel.integrand, trunc)

    def payoff(self, x):
        out = np.asarray(x, dtype=float) + self.cost_sign * self.market.c
        return out if out.ndim else float(out)

    def value(self, t: float, x):
        """Value of the open position at time t in the exit window.

        The long value is clamped from below by the payoff x - c, the short
        value from above by x + c; the true value functions satisfy these
        bounds and the clamp removes residual quadrature noise around them.
        """
        horizon = self.market.T_prime
        if t < 0 or t > horizon + 1e-12:
            raise ModelDomainError("t must lie in the exit window")
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s = max(horizon - t, 0.0)
        out = x + self.cost_sign * self.market.c
        if s > 0.0:
            u, w = value_quadrature(self.boundary.grid.nodes, t)
            z = self.boundary(u)
            k = eval_kernel(
                self.complement_kernel, self.model, t, u[:, None], x[None, :], z[:, None]
            )
            out = out - w @ k
        payoff = x + self.cost_sign * self.market.c
        bt = self.boundary(t)
        if self.side is TradeSide.LONG:
            out = np.where(x >= bt, payoff, np.maximum(out, payoff))
        else:
            out = np.where(x <= bt, payoff, np.minimum(out, payoff))
        return float(out[0]) if scalar else out


def _solve_exit(
    problem: Problem,
    side: TradeSide,
    model: ModelSpec,
    market: MarketSpec,
    grid: TimeGrid | None,
    cfg: SolverConfig | None,
):
    classification = classify_degenerate(problem, model, market)
    if classification is not Degeneracy.NON_DEGENERATE:
        action = (
            "liquidate at t=0"
            if classification is Degeneracy.STOP_IMMEDIATELY
            else "hold until the window end"
        )
        return DegeneratePolicy(problem, classification, action)

    grid = grid if grid is not None else TimeGrid.uniform(market.T_prime, 500)
    _check_grid(grid, market.T_prime)
    cfg = cfg if cfg is not None else SolverConfig()
    levels = critical_levels(model, market)
    if side is TradeSide.LONG:
        terminal = levels.x_star_upper
        cost_sign = -1.0
        monotonicity = Monotonicity.DECREASING
    else:
        terminal = levels.x_star_lower
        cost_sign = 1.0
        monotonicity = Monotonicity.INCREASING
    kspec = kernel_for_problem(problem, model, market)
    eq = _exit_equation(kspec, cost_sign, model, market, grid, cfg, terminal, monotonicity)
    boundary = solve_backward(eq, grid, cfg)
    return ExitSolution(side, model, market, boundary, kspec, cfg.quadrature)


def _exit_equation(kspec, cost_sign, model, market, grid, cfg, terminal, monotonicity):
    """Node equation payoff = euro-leg + kernel integral, with the euro leg
    and the kernel's full-expectation part combined analytically (they
    telescope to the payoff itself, removing a stiff exponential from the
    time quadrature)."""
    comp_trunc = Truncation.BELOW_Z if cost_sign < 0 else Truncation.ABOVE_Z
    comp = KernelSpec(kspec.integrand, comp_trunc)
    nodes = grid.nodes
    c = market.c

    def lhs(t, y):
        return y + cost_sign * c

    def rhs(i, y, future):
        t = nodes[i]
        u = nodes[i:]
        z = np.concatenate(([y], future))
        k = eval_kernel(comp, model, t, u, y, z)
        w = quadrature_weights(u, cfg.quadrature)
        return y + cost_sign * c - float(w @ k)

    return EquationSpec(lhs, rhs, terminal, monotonicity, model.stationary_scale())


def solve_exit_long(model, market, grid=None, cfg=None):
    """Boundary and value of the long-exit problem; terminal level x_star_upper."""
    return _solve_exit(Problem.EXIT_LONG, TradeSide.LONG, model, market, grid, cfg)


def solve_exit_short(model, market, grid=None, cfg=None):
    """Boundary and value of the short-exit problem; terminal level x_star_lower."""
    return _solve_exit(Problem.EXIT_SHORT, TradeSide.SHORT, model, market, grid, cfg)


def exit_equation_spec(solution: ExitSolution, cfg: SolverConfig | None = None) -> EquationSpec:
    """Rebuild the defining equation of a solved exit problem (residual checks)."""
    cfg = cfg if cfg is not None else SolverConfig(quadrature=solution.quadrature)
    return _exit_equation(
        solution.kernel,
        solution.cost_sign,
        solution.model,
        solution.market,
        solution.boundary.grid,
        cfg,
        solution.boundary.terminal_value,
        solution.boundary.monotonicity,
    )
