"""Market-entry timing for the long-short and short-long strategies.

The entry payoff prices an immediate round-trip start: the freshly opened
position's exit value net of the entry cash flow, floored at zero. Its
break-even level bounds the region where entering can pay. The entry
boundary solves a backward equation combining a discounted expectation of
the terminal payoff with the entry kernel integrated along the boundary;
the exit value's time-zero slice enters everywhere and is tabulated once
on a dense grid with cubic interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import ModelDomainError, QuadratureError
from .exit_problems import DegeneratePolicy, ExitSolution, TradeSide, _check_grid
from .kernels import KernelSpec, eval_kernel, kernel_for_problem, piece_value_closed
from .model import (
    Degeneracy,
    EntryThresholds,
    MarketSpec,
    ModelSpec,
    Problem,
    classify_degenerate,
    critical_levels,
    transition_law,
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

_GAMMA_TOL = 1e-9


@dataclass(frozen=True)
class ValueTable:
    """Dense tabulation of an exit value's time-zero slice.

    Cubic interpolation inside the span; linear continuation outside it
    (the exit value is affine above the exit boundary and asymptotically
    flat on the far side, so edge slopes extend it faithfully).
    """

    x: np.ndarray
    values: np.ndarray
    spline: CubicSpline
    slope_lo: float
    slope_hi: float

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        qc = np.clip(q, self.x[0], self.x[-1])
        out = self.spline(qc)
        out = out + np.where(q < self.x[0], self.slope_lo * (q - self.x[0]), 0.0)
        out = out + np.where(q > self.x[-1], self.slope_hi * (q - self.x[-1]), 0.0)
        return out if out.ndim else float(out)


def build_value_table(
    exit_solution: ExitSolution, n_points: int = 2001, half_width: float = 8.0
) -> ValueTable:
    """Tabulate V(0, x) of a solved exit problem around the long-run mean."""
    model = exit_solution.model
    scale = model.stationary_scale()
    space = model.state_space
    lo = model.theta - half_width * scale
    hi = model.theta + half_width * scale
    if np.isfinite(space.lo):
        lo = max(lo, space.lo + 1e-9 * (model.theta - space.lo))
    if np.isfinite(space.hi):
        hi = min(hi, space.hi - 1e-9 * (space.hi - model.theta))
    xs = np.linspace(lo, hi, n_points)
    vals = exit_solution.value(0.0, xs)
    spline = CubicSpline(xs, vals)
    return ValueTable(xs, vals, spline, float(spline(xs[0], 1)), float(spline(xs[-1], 1)))


def find_gamma_long(exit_solution: ExitSolution, table: ValueTable | None = None):
    """Break-even level of the long-entry payoff V(0,x) - x - c.

    Scans the tabulation from below for the first sign change and refines
    it inside the bracketing cell; returns ``None`` when the payoff is
    never positive on the span (degenerate entry).
    """
    table = table if table is not None else build_value_table(exit_solution)
    c = exit_solution.market.c
    top = exit_solution.boundary.values[0]

    def f(q):
        return table(q) - q - c

    data = table.values - table.x - c
    return _first_crossing(f, table.x, data, upward=False, stop=top)


def find_gamma_short(exit_solution: ExitSolution, table: ValueTable | None = None):
    """Break-even level of the short-entry payoff x - c - V(0,x)."""
    table = table if table is not None else build_value_table(exit_solution)
    c = exit_solution.market.c
    bottom = exit_solution.boundary.values[0]

    def f(q):
        return q - c - table(q)

    data = table.x - c - table.values
    return _first_crossing(f, table.x, data, upward=True, stop=bottom)


def _first_crossing(f, grid, data, upward, stop):
    """First zero of f along the grid, scanning away from the profitable side.

    The scan runs on the tabulated data (which is exactly clamped at the
    payoff inside the stopping region, so the zero-cost tangential case
    lands deterministically); ``f`` refines inside the bracketing cell.
    ``upward=False``: f starts positive at the low end and decreases (long
    side); ``upward=True``: f ends positive at the high end and the scan
    runs from ``stop`` upward (short side).
    """
    if upward:
        keep = grid >= stop - 1e-15
    else:
        keep = grid <= stop + 1e-15
    xs, vals = grid[keep], data[keep]
    if len(xs) == 0:
        return None
    if not upward:
        # long side: approach from below, where the payoff is positive
        if vals[0] < 0:
            return None
        idx = np.nonzero(vals <= 0)[0]
        if len(idx) == 0:
            return None
        k = idx[0]
        if k == 0 or vals[k] == 0.0:
            return float(xs[k])
        lo, hi = xs[k - 1], xs[k]
    else:
        # short side: approach from above (mirror of the long convention)
        if vals[-1] < 0:
            return None
        idx = np.nonzero(vals <= 0)[0]
        if len(idx) == 0:
            return float(xs[0])
        k = idx[-1]
        if k == len(xs) - 1 or vals[k] == 0.0:
            return float(xs[k])
        lo, hi = xs[k], xs[k + 1]
    root = brentq(f, lo, hi, xtol=1e-13, rtol=8.9e-16)
    if abs(f(root)) > _GAMMA_TOL:
        raise ModelDomainError(f"break-even residual {f(root):.2e} exceeds {_GAMMA_TOL}")
    return float(root)


def entry_payoff(side: TradeSide, table: ValueTable, gamma, c: float, x):
    """Entry payoff of one side, zero beyond its break-even level."""
    x = np.asarray(x, dtype=float)
    if gamma is None:
        out = np.zeros_like(x)
        return out if out.ndim else float(out)
    if side is TradeSide.LONG:
        out = np.where(x < gamma, table(x) - x - c, 0.0)
    else:
        out = np.where(x > gamma, x - c - table(x), 0.0)
    return out if out.ndim else float(out)


def terminal_expectation(
    payoff,
    model: ModelSpec,
    rate: float,
    t: float,
    x,
    T: float,
    kinks=(),
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_refine: int = 7,
):
    """Discounted expectation e^{-r(T-t)} E[payoff(X_T) | X_t = x].

    Composite Gauss-Legendre panels split at the payoff's kink points,
    refined by panel doubling until two successive levels agree; raises
    QuadratureError when the refinement budget is exhausted. ``x`` may be
    an array.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = T - t
    if s < 0:
        raise ModelDomainError("terminal expectation requires t <= T")
    if s < 1e-14:
        out = np.asarray(payoff(x), dtype=float)
        return float(out[0]) if scalar else out
    law = transition_law(model, s, x)
    sd = np.sqrt(law.variance)
    sd_ref = float(np.min(sd))
    lo = float(np.min(law.mean - 14.0 * sd))
    hi = float(np.max(law.mean + 14.0 * sd))
    space = model.state_space
    lo, hi = max(lo, space.lo), min(hi, space.hi)
    edges = np.array(sorted({lo, hi} | {float(k) for k in kinks if lo < float(k) < hi}))

    gl_x, gl_w = np.polynomial.legendre.leggauss(16)
    prev = None
    for level in range(max_refine + 1):
        nodes = []
        weights = []
        for a, b in zip(edges[:-1], edges[1:]):
            n_sub = int(np.clip(np.ceil((b - a) / max(sd_ref, 1e-300)), 1, 512))
            n_sub *= 2**level
            sub = np.linspace(a, b, n_sub + 1)
            mid, rad = 0.5 * (sub[1:] + sub[:-1]), 0.5 * (sub[1:] - sub[:-1])
            nodes.append((mid[:, None] + rad[:, None] * gl_x[None, :]).ravel())
            weights.append((rad[:, None] * gl_w[None, :]).ravel())
        y = np.concatenate(nodes)
        w = np.concatenate(weights)
        g = np.asarray(payoff(y), dtype=float)
        dens = law.pdf(y[:, None])
        integral = (w * g) @ dens
        if prev is not None and np.max(np.abs(integral - prev)) <= atol + rtol * max(
            1.0, float(np.max(np.abs(integral)))
        ):
            out = np.exp(-rate * s) * integral
            return float(out[0]) if scalar else out
        prev = integral
    raise QuadratureError(
        f"terminal expectation did not converge in {max_refine} refinements "
        f"(s={s:.3g}, span=({lo:.4g},{hi:.4g}))"
    )


@dataclass(frozen=True)
class EntrySolution:
    """Solved entry problem for one side.

    ``gamma`` is the side's break-even level; the boundary lives on [0, T]
    and the value evaluator implements the terminal-expectation plus
    kernel-integral representation, pinned to the payoff on the entry
    region.
    """

    side: TradeSide
    model: ModelSpec
    market: MarketSpec
    gamma: float
    boundary: Boundary
    exit: ExitSolution
    table: ValueTable
    kernel: KernelSpec
    quadrature: QuadratureRule

    def payoff(self, x):
        return entry_payoff(self.side, self.table, self.gamma, self.market.c, x)

    def _payoff_kinks(self):
        return (self.gamma,)

    def value(self, t: float, x):
        """Entry-opportunity value at time t <= T (clamped to the payoff)."""
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
            u, w = value_quadrature(self.boundary.grid.nodes, t)
            z = self.boundary(u)
            k = eval_kernel(self.kernel, self.model, t, u[:, None], x[None, :], z[:, None])
            out = out + w @ k
        payoff = self.payoff(x)
        bt = self.boundary(t)
        in_region = x <= bt if self.side is TradeSide.LONG else x >= bt
        out = np.where(in_region, payoff, np.maximum(out, payoff))
        return float(out[0]) if scalar else out


def _solve_entry(problem, side, model, market, exit_solution, grid, cfg, table):
    if isinstance(exit_solution, DegeneratePolicy):
        raise ModelDomainError("entry solve needs a non-degenerate exit solution")
    table = table if table is not None else build_value_table(exit_solution)
    if side is TradeSide.LONG:
        gamma = find_gamma_long(exit_solution, table)
        thresholds = EntryThresholds(break_even_long=gamma)
    else:
        gamma = find_gamma_short(exit_solution, table)
        thresholds = EntryThresholds(break_even_short=gamma)
    classification = classify_degenerate(problem, model, market, thresholds)
    if gamma is None or classification is not Degeneracy.NON_DEGENERATE:
        note = (
            "entry payoff never positive on the tabulated span"
            if gamma is None
            else (
                "enter immediately at t=0"
                if classification is Degeneracy.STOP_IMMEDIATELY
                else "wait until the deadline"
            )
        )
        return DegeneratePolicy(problem, classification, note)

    grid = grid if grid is not None else TimeGrid.uniform(market.T, 500)
    _check_grid(grid, market.T)
    cfg = cfg if cfg is not None else SolverConfig()
    levels = critical_levels(model, market)
    if side is TradeSide.LONG:
        terminal = min(gamma, levels.x_star_lower)
        monotonicity = Monotonicity.INCREASING
    else:
        terminal = max(gamma, levels.x_star_upper)
        monotonicity = Monotonicity.DECREASING
    kspec = kernel_for_problem(problem, model, market, thresholds)
    c = market.c
    nodes = grid.nodes
    T = market.T

    def payoff_fn(q):
        return entry_payoff(side, table, gamma, c, q)

    sign = 1.0 if side is TradeSide.LONG else -1.0

    def lhs(t, y):
        # payoff without the indicator: the boundary stays on the paying side
        return sign * (table(y) - y) - c

    # The degenerate left quadrature endpoint takes the half-mass kernel
    # limit evaluated at the neighboring node's boundary value instead of
    # the candidate's: same leading-order consistency, but without the
    # derivative that destabilizes the short-side backward recursion.
    piece = kspec.integrand.pieces[0]

    def rhs(i, y, future):
        t = nodes[i]
        u = nodes[i:]
        term = terminal_expectation(payoff_fn, model, market.r, t, y, T, (gamma,))
        if len(future) == 0:
            return term
        k = eval_kernel(kspec, model, t, u[1:], y, future)
        w = quadrature_weights(u, cfg.quadrature)
        head = -0.5 * piece_value_closed(piece, future[0])
        return term + float(w[1:] @ k) + float(w[0]) * head

    eq = EquationSpec(lhs, rhs, terminal, monotonicity, model.stationary_scale())
    boundary = solve_backward(eq, grid, cfg)
    return EntrySolution(
        side, model, market, gamma, boundary, exit_solution, table, kspec, cfg.quadrature
    )


def solve_entry_long(model, market, exit_solution, grid=None, cfg=None, table=None):
    """Entry boundary/value for the long-short strategy (enter from below)."""
    return _solve_entry(
        Problem.ENTRY_LONG, TradeSide.LONG, model, market, exit_solution, grid, cfg, table
    )


def solve_entry_short(model, market, exit_solution, grid=None, cfg=None, table=None):
    """Entry boundary/value for the short-long strategy (enter from above)."""
    return _solve_entry(
        Problem.ENTRY_SHORT, TradeSide.SHORT, model, market, exit_solution, grid, cfg, table
    )
