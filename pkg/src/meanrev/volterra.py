"""Backward-in-time solver for boundary curves of Volterra integral equations.

The boundary is known at the horizon; each earlier grid node yields a
scalar nonlinear equation lhs(t, y) = rhs(t, y, tail) whose time integral
runs over the already-solved tail with the candidate value at the left
endpoint. Nodes are solved by bracketed bisection (Brent) with automatic
bracket expansion; the coupled two-boundary variant alternates lower/upper
updates per node with damping on oscillation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import BoundaryCrossingError, BracketFailureError, ConvergenceError, ModelDomainError


class Monotonicity(enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"


class QuadratureRule(enum.Enum):
    TRAPEZOID = "trapezoid"
    RIGHT_ENDPOINT = "right_endpoint"


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int
    nodes: np.ndarray

    def __post_init__(self):
        if self.n_steps < 2:
            raise ModelDomainError("time grid needs at least 2 steps")
        if len(self.nodes) != self.n_steps + 1:
            raise ModelDomainError("node count must equal n_steps + 1")
        if np.any(np.diff(self.nodes) <= 0):
            raise ModelDomainError("grid nodes must be strictly increasing")

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        return cls(horizon, n_steps, np.linspace(0.0, horizon, n_steps + 1))


def quadrature_weights(nodes: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Integration weights over ``nodes`` for the configured rule."""
    d = np.diff(nodes)
    w = np.zeros(len(nodes))
    if rule is QuadratureRule.TRAPEZOID:
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    else:
        w[1:] = d
    return w


_GL_HEAD = np.polynomial.legendre.leggauss(32)
_GL_CELL = np.polynomial.legendre.leggauss(6)
_GL_NODE_HEAD = np.polynomial.legendre.leggauss(16)


def head_cell_quadrature(t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes/weights for one time cell, taken in w = sqrt(u - t0).

    Resolves the square-root transition of the kernel integrand next to
    its own evaluation point, where the law degenerates.
    """
    q, w = _GL_NODE_HEAD
    half = 0.5 * math.sqrt(t1 - t0)
    wn = half * (q + 1.0)
    return t0 + wn**2, w * half * 2.0 * wn


def value_quadrature(nodes: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights on [t, horizon] for value evaluation.

    The kernel integrand varies on the sqrt(u - t) scale near u = t when
    the query point sits close to the boundary, so the head cell is
    integrated by Gauss-Legendre in w = sqrt(u - t) (where the integrand
    is smooth); the remaining solver cells each get a short Gauss rule,
    respecting the kinks of the linearly interpolated boundary at the
    solver nodes.
    """
    tail = nodes[nodes > t + 1e-14]
    if len(tail) == 0:
        return np.asarray([t]), np.asarray([0.0])
    wq, ww = _GL_HEAD
    half = 0.5 * math.sqrt(tail[0] - t)
    w_nodes = half * (wq + 1.0)
    u_head = t + w_nodes**2
    w_head = ww * half * 2.0 * w_nodes  # Jacobian du = 2 w dw
    if len(tail) == 1:
        return u_head, w_head
    cq, cw = _GL_CELL
    lo, hi = tail[:-1], tail[1:]
    mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
    u_cells = (mid[:, None] + rad[:, None] * cq[None, :]).ravel()
    w_cells = (rad[:, None] * cw[None, :]).ravel()
    return np.concatenate((u_head, u_cells)), np.concatenate((w_head, w_cells))


_MONOTONE_TOL = 1e-6


@dataclass(frozen=True)
class Boundary:
    """Time-gridded free-boundary curve with linear interpolation.

    Queries outside the grid clamp to the end values; monotonicity
    violations beyond tolerance are rejected at construction.
    """

    grid: TimeGrid
    values: np.ndarray
    monotonicity: Monotonicity
    terminal_value: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) != len(self.grid.nodes):
            raise ModelDomainError("boundary needs one value per grid node")
        if abs(v[-1] - self.terminal_value) > 1e-12:
            raise ModelDomainError("boundary must end at its terminal value")
        d = np.diff(v)
        if self.monotonicity is Monotonicity.INCREASING and np.any(d < -_MONOTONE_TOL):
            raise ModelDomainError("boundary violates its increasing tag")
        if self.monotonicity is Monotonicity.DECREASING and np.any(d > _MONOTONE_TOL):
            raise ModelDomainError("boundary violates its decreasing tag")

    def __call__(self, t):
        return np.interp(t, self.grid.nodes, self.values)


@dataclass(frozen=True)
class SolverConfig:
    quadrature: QuadratureRule = QuadratureRule.TRAPEZOID
    fixed_point_tol: float = 1e-9
    max_iters: int = 60
    damping: float = 1.0
    bracket_width: float | None = None  # defaults to 0.2 * problem scale

    def __post_init__(self):
        if self.fixed_point_tol <= 0:
            raise ModelDomainError("fixed_point_tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ModelDomainError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class EquationSpec:
    """One boundary's defining equation.

    ``lhs(t, y)`` is the stopping payoff at the candidate boundary point;
    ``rhs(i, y, future)`` evaluates the terminal-expectation term plus the
    kernel quadrature at node index i, where ``future`` holds the solved
    values at nodes i+1..N. Coupled equations take a fourth argument with
    the other boundary's values at nodes i..N (current candidate first).
    """

    lhs: Callable
    rhs: Callable
    terminal_value: float
    monotonicity: Monotonicity
    bracket_scale: float = 1.0


def _solve_node(fun, center: float, width: float, tol: float, label: str) -> float:
    """Root of ``fun`` near ``center`` by bracketed Brent with expansion."""
    w = width
    tried = []
    for _ in range(9):
        lo, hi = center - w, center + w
        flo, fhi = fun(lo), fun(hi)
        if np.sign(flo) != np.sign(fhi):
            root = optimize.brentq(fun, lo, hi, xtol=1e-13, rtol=8.9e-16)
            resid = fun(root)
            if abs(resid) > tol:
                raise ConvergenceError(
                    f"{label}: node residual {resid:.3e} exceeds tolerance {tol:.1e}"
                )
            return root
        tried.append((w, flo, fhi))
        w *= 2.0
    detail = ", ".join(f"w={w:.3g}: f={flo:.3g}/{fhi:.3g}" for w, flo, fhi in tried[-3:])
    raise BracketFailureError(f"{label}: no sign change around {center:.6g} ({detail})")


def solve_backward(eq: EquationSpec, grid: TimeGrid, cfg: SolverConfig) -> Boundary:
    """Solve one boundary backward from its terminal value."""
    n = grid.n_steps
    vals = np.empty(n + 1)
    vals[n] = eq.terminal_value
    width = cfg.bracket_width if cfg.bracket_width is not None else 0.2 * eq.bracket_scale
    for i in range(n - 1, -1, -1):
        t = grid.nodes[i]
        future = vals[i + 1 :]

        def fun(y, i=i, t=t, future=future):
            return eq.lhs(t, y) - eq.rhs(i, y, future)

        vals[i] = _solve_node(fun, vals[i + 1], width, cfg.fixed_point_tol, f"node t={t:.6g}")
    return Boundary(grid, vals, eq.monotonicity, eq.terminal_value)


def solve_backward_coupled(
    eq_lower: EquationSpec,
    eq_upper: EquationSpec,
    grid: TimeGrid,
    cfg: SolverConfig,
) -> tuple[Boundary, Boundary]:
    """Solve a coupled lower/upper boundary pair backward.

    At each node the lower and upper scalar equations are re-solved
    alternately until the joint update stalls. The terminal values may
    coincide (the symmetric zero-cost configuration); iterates must stay
    ordered strictly before the horizon.
    """
    if eq_lower.terminal_value > eq_upper.terminal_value:
        raise ModelDomainError("lower terminal value must not exceed the upper one")
    n = grid.n_steps
    lo_vals = np.empty(n + 1)
    up_vals = np.empty(n + 1)
    lo_vals[n] = eq_lower.terminal_value
    up_vals[n] = eq_upper.terminal_value
    width_lo = cfg.bracket_width if cfg.bracket_width is not None else 0.2 * eq_lower.bracket_scale
    width_up = cfg.bracket_width if cfg.bracket_width is not None else 0.2 * eq_upper.bracket_scale

    for i in range(n - 1, -1, -1):
        t = grid.nodes[i]
        lo_future, up_future = lo_vals[i + 1 :], up_vals[i + 1 :]
        y_lo, y_up = lo_vals[i + 1], up_vals[i + 1]
        damping = cfg.damping
        prev_step_lo = prev_step_up = 0.0
        for it in range(cfg.max_iters):
            other_up = np.concatenate(([y_up], up_future))

            def fun_lo(y, t=t, i=i):
                return eq_lower.lhs(t, y) - eq_lower.rhs(i, y, lo_future, other_up)

            new_lo = _solve_node(fun_lo, y_lo, width_lo, cfg.fixed_point_tol, f"lower t={t:.6g}")
            other_lo = np.concatenate(([new_lo], lo_future))

            def fun_up(y, t=t, i=i):
                return eq_upper.lhs(t, y) - eq_upper.rhs(i, y, up_future, other_lo)

            new_up = _solve_node(fun_up, y_up, width_up, cfg.fixed_point_tol, f"upper t={t:.6g}")

            step_lo, step_up = new_lo - y_lo, new_up - y_up
            if step_lo * prev_step_lo < 0 or step_up * prev_step_up < 0:
                damping = max(0.5 * damping, 1.0 / 16.0)
            y_lo += damping * step_lo
            y_up += damping * step_up
            prev_step_lo, prev_step_up = step_lo, step_up
            if abs(step_lo) < 1e-12 and abs(step_up) < 1e-12:
                break
        else:
            raise ConvergenceError(f"coupled solve stalled at t={t:.6g}")
        if y_lo > y_up:
            raise BoundaryCrossingError(f"boundaries crossed at t={t:.6g}: {y_lo} > {y_up}")
        lo_vals[i], up_vals[i] = y_lo, y_up

    lower = Boundary(grid, lo_vals, eq_lower.monotonicity, eq_lower.terminal_value)
    upper = Boundary(grid, up_vals, eq_upper.monotonicity, eq_upper.terminal_value)
    return lower, upper


def residual_report(eq: EquationSpec, boundary: Boundary, other: Boundary | None = None):
    """Re-evaluate the defining equation at every node: list of (t, residual)."""
    nodes = boundary.grid.nodes
    vals = boundary.values
    out = []
    for i, t in enumerate(nodes):
        future = vals[i + 1 :]
        if other is None:
            r = eq.lhs(t, vals[i]) - eq.rhs(i, vals[i], future)
        else:
            r = eq.lhs(t, vals[i]) - eq.rhs(i, vals[i], future, other.values[i:])
        out.append((float(t), float(r)))
    return out
