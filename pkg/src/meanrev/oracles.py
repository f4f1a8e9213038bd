"""Independent verification engines for the boundary solvers.

Two routes that share nothing with the integral-equation path: a
finite-difference solver for the parabolic obstacle (linear
complementarity) formulation of each stopping problem, with the free
boundary extracted as the contact frontier, and a Monte Carlo policy
evaluator that prices a fixed boundary policy by simulation. A
boundary-perturbation test checks empirically that solved boundaries are
maximizers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from .errors import ConvergenceError, ModelDomainError
from .model import Family, MarketSpec, ModelSpec, Problem, mean_m
from .strategy_sim import Strategy, StrategyBoundaries, simulate_batch_arrays


class Scheme(enum.Enum):
    IMPLICIT = "implicit"
    CRANK_NICOLSON = "crank_nicolson"


@dataclass(frozen=True)
class FDGrid:
    """Space-time grid for the obstacle-problem solver."""

    x_lo: float
    x_hi: float
    n_x: int
    n_t: int
    scheme: Scheme = Scheme.CRANK_NICOLSON

    def __post_init__(self):
        if self.n_x < 100 or self.n_t < 100:
            raise ModelDomainError("FD grids need at least 100 nodes per axis")
        if not self.x_lo < self.x_hi:
            raise ModelDomainError("empty FD space interval")

    @classmethod
    def for_model(cls, model: ModelSpec, n_x: int = 2000, n_t: int = 2000,
                  half_width: float = 8.0, scheme: Scheme = Scheme.CRANK_NICOLSON):
        """Domain theta +- half_width stationary deviations, clipped to the state space."""
        scale = model.stationary_scale()
        space = model.state_space
        lo = model.theta - half_width * scale
        hi = model.theta + half_width * scale
        if np.isfinite(space.lo):
            lo = max(lo, space.lo + 1e-9 * (model.theta - space.lo))
        if np.isfinite(space.hi):
            hi = min(hi, space.hi - 1e-9 * (space.hi - model.theta))
        return cls(lo, hi, n_x, n_t, scheme)


@dataclass(frozen=True)
class FDResult:
    """Value surface on the grid plus extracted contact frontiers.

    ``values[k, j]`` is the value at time node k and space node j.
    ``boundary`` holds the problem's main frontier per time node (NaN when
    a slice has no contact); ``upper_boundary`` is the second frontier of
    two-sided problems.
    """

    t: np.ndarray
    x: np.ndarray
    values: np.ndarray
    boundary: np.ndarray | None = None
    upper_boundary: np.ndarray | None = None

    def value_at(self, t, x):
        interp = RegularGridInterpolator((self.t, self.x), self.values)
        pts = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        out = interp(np.stack([p.ravel() for p in pts], axis=-1)).reshape(pts[0].shape)
        return out if out.ndim else float(out)


def _operator_bands(model: ModelSpec, x: np.ndarray):
    """Tridiagonal central-difference bands of the generator minus r (interior)."""
    dx = x[1] - x[0]
    xi = x[1:-1]
    drift = model.mu * (model.theta - xi)
    diff = 0.5 * model.diffusion(xi) ** 2
    lower = diff / dx**2 - drift / (2.0 * dx)
    upper = diff / dx**2 + drift / (2.0 * dx)
    diag = -2.0 * diff / dx**2
    return lower, diag, upper


def _psor_sweep(ml, md, mu_, rhs, v, psi, omega):
    """One projected red-black SOR sweep in place; returns max update."""
    delta = 0.0
    n = len(v)
    for start in (0, 1):
        idx = np.arange(start, n, 2)
        left = np.where(idx > 0, v[np.maximum(idx - 1, 0)], 0.0)
        left[idx == 0] = 0.0
        right = np.where(idx < n - 1, v[np.minimum(idx + 1, n - 1)], 0.0)
        right[idx == n - 1] = 0.0
        gs = (rhs[idx] - ml[idx] * left - mu_[idx] * right) / md[idx]
        new = np.maximum(psi[idx], v[idx] + omega * (gs - v[idx]))
        delta = max(delta, float(np.max(np.abs(new - v[idx]))) if len(idx) else 0.0)
        v[idx] = new
    return delta


def _solve_lcp_step(ml, md, mu_, rhs, v0, psi, omega, tol, max_sweeps):
    v = np.maximum(v0.copy(), psi)
    for _ in range(max_sweeps):
        if _psor_sweep(ml, md, mu_, rhs, v, psi, omega) <= tol:
            return v
    raise ConvergenceError("PSOR failed to converge within the sweep budget")


def fd_value(
    problem: Problem | None,
    model: ModelSpec,
    market: MarketSpec,
    grid: FDGrid,
    obstacle=None,
    terminal=None,
    horizon: float | None = None,
    psor_tol: float = 1e-11,
    psor_max_sweeps: int = 200_000,
    omega: float | None = None,
) -> FDResult:
    """Solve one stopping problem (or a European terminal-value problem).

    ``problem`` fixes the horizon, default payoff, contact side, and
    orientation; the short-exit minimization is solved as the negated
    maximization. ``problem=None`` solves the plain terminal-value PDE
    with ``terminal`` (no obstacle). Dirichlet values at the space edges
    are taken from the obstacle (stopping problems) or propagated from the
    terminal function along the conditional mean (European).
    """
    c = market.c
    negate = False
    contact = None
    if problem is Problem.EXIT_LONG:
        horizon = market.T_prime if horizon is None else horizon
        obstacle = obstacle if obstacle is not None else (lambda x: x - c)
        contact = "above"
    elif problem is Problem.EXIT_SHORT:
        horizon = market.T_prime if horizon is None else horizon
        obstacle = obstacle if obstacle is not None else (lambda x: x + c)
        contact = "below"
        negate = True
    elif problem in (Problem.ENTRY_LONG, Problem.ENTRY_SHORT, Problem.CHOOSER):
        horizon = market.T if horizon is None else horizon
        if obstacle is None:
            raise ModelDomainError("entry problems need an explicit obstacle")
        contact = {
            Problem.ENTRY_LONG: "below",
            Problem.ENTRY_SHORT: "above",
            Problem.CHOOSER: "pair",
        }[problem]
    elif problem is None:
        if terminal is None or horizon is None:
            raise ModelDomainError("European solve needs terminal payoff and horizon")
    else:
        raise ModelDomainError(f"unsupported problem {problem}")
    if terminal is None:
        terminal = obstacle

    x = np.linspace(grid.x_lo, grid.x_hi, grid.n_x)
    t = np.linspace(0.0, horizon, grid.n_t + 1)
    dt = horizon / grid.n_t
    lower, diag, upper = _operator_bands(model, x)
    diag = diag - market.r

    sign = -1.0 if negate else 1.0
    psi_full = sign * np.asarray(obstacle(x), dtype=float) if obstacle is not None else None
    term_full = sign * np.asarray(terminal(x), dtype=float)

    values = np.empty((grid.n_t + 1, grid.n_x))
    values[grid.n_t] = term_full
    v = term_full.copy()

    def euro_bc(k_time):
        s = horizon - t[k_time]
        ends = np.array([x[0], x[-1]])
        return sign * np.asarray(terminal(mean_m(model, s, ends)), dtype=float) * math.exp(
            -market.r * s
        )

    def theta_step(v_prev, theta_w, dt_w, bc_lo, bc_hi, psi):
        # (I - theta*dt*A) v = (I + (1-theta)*dt*A) v_prev + boundary terms
        interior = v_prev[1:-1]
        rhs = interior + (1.0 - theta_w) * dt_w * (
            lower * v_prev[:-2] + diag * interior + upper * v_prev[2:]
        )
        ml = -theta_w * dt_w * lower
        md = 1.0 - theta_w * dt_w * diag
        mu_ = -theta_w * dt_w * upper
        rhs = rhs.copy()
        rhs[0] -= ml[0] * bc_lo
        rhs[-1] -= mu_[-1] * bc_hi
        if psi is None:
            ab = np.zeros((3, grid.n_x - 2))
            ab[0, 1:] = mu_[:-1]
            ab[1] = md
            ab[2, :-1] = ml[1:]
            sol = solve_banded((1, 1), ab, rhs)
        else:
            ml2 = np.concatenate(([0.0], ml[1:]))
            mu2 = np.concatenate((mu_[:-1], [0.0]))
            if omega is None:
                # SOR factor from the Jacobi radius of the tridiagonal system
                rho = min(float(np.max((np.abs(ml2) + np.abs(mu2)) / md)), 1.0 - 1e-12)
                w_opt = 2.0 / (1.0 + math.sqrt(1.0 - rho * rho))
            else:
                w_opt = omega
            sol = _solve_lcp_step(
                ml2, md, mu2, rhs, interior, psi[1:-1], w_opt, psor_tol, psor_max_sweeps
            )
        out = np.empty_like(v_prev)
        out[0], out[-1] = bc_lo, bc_hi
        out[1:-1] = sol
        return out

    for k in range(grid.n_t - 1, -1, -1):
        if psi_full is not None:
            bc_lo, bc_hi = psi_full[0], psi_full[-1]
        else:
            bc_lo, bc_hi = euro_bc(k)
        if grid.scheme is Scheme.CRANK_NICOLSON and k >= grid.n_t - 2:
            # Rannacher start: the two steps next to the terminal run as
            # pairs of implicit half-steps to damp the payoff kink.
            v = theta_step(v, 1.0, 0.5 * dt, bc_lo, bc_hi, psi_full)
            v = theta_step(v, 1.0, 0.5 * dt, bc_lo, bc_hi, psi_full)
        elif grid.scheme is Scheme.CRANK_NICOLSON:
            v = theta_step(v, 0.5, dt, bc_lo, bc_hi, psi_full)
        else:
            v = theta_step(v, 1.0, dt, bc_lo, bc_hi, psi_full)
        values[k] = v

    values = sign * values
    boundary = upper_b = None
    if contact is not None:
        # Frontiers are read off a window clear of the space edges: the
        # obstacle-valued Dirichlet rows pollute a strip of a few
        # stationary deviations, breaking contact detection there.
        margin = 3.0 * model.stationary_scale()
        win = np.nonzero((x >= x[0] + margin) & (x <= x[-1] - margin))[0]
        psi_orig = np.asarray(obstacle(x), dtype=float)
        gap = np.abs(values - psi_orig[None, :])
        tolc = 1e-9 * max(1.0, float(np.max(np.abs(values))))
        contact_mask = gap[:, win] <= tolc
        xw = x[win]
        nw = len(win)
        if contact in ("above", "pair"):
            ub = np.full(grid.n_t + 1, np.nan)
            for k in range(grid.n_t + 1):
                notc = np.nonzero(~contact_mask[k])[0]
                if len(notc) == 0:
                    ub[k] = xw[0]
                elif notc[-1] + 1 <= nw - 1 and contact_mask[k, -1]:
                    ub[k] = xw[notc[-1] + 1]
            upper_b = ub
        if contact in ("below", "pair"):
            lb = np.full(grid.n_t + 1, np.nan)
            for k in range(grid.n_t + 1):
                notc = np.nonzero(~contact_mask[k])[0]
                if len(notc) == 0:
                    lb[k] = xw[-1]
                elif notc[0] - 1 >= 0 and contact_mask[k, 0]:
                    lb[k] = xw[notc[0] - 1]
            boundary = lb
        if contact == "above":
            boundary, upper_b = upper_b, None
    return FDResult(t, x, values, boundary, upper_b)


@dataclass(frozen=True)
class PolicySpec:
    """A fixed entry/exit boundary policy to price by simulation.

    Boundaries are callables of time (the exit clock restarts at entry).
    Exit problems leave the entry side empty; the chooser carries a pair
    of entry boundaries and both exit boundaries. The deadline levels are
    the thresholds applied at the entry deadline itself (break-even levels
    rather than the boundary's terminal value); None falls back to
    first-hitting only.
    """

    problem: Problem
    exit_boundary: object | None = None
    entry_boundary: object | None = None
    entry_upper_boundary: object | None = None
    exit_short_boundary: object | None = None
    deadline_level: float | None = None
    deadline_upper_level: float | None = None

    @property
    def maximizing(self) -> bool:
        return self.problem is not Problem.EXIT_SHORT


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_error: float
    n_paths: int


def _exit_only_mc(policy, model, market, x0, n_paths, steps_per_unit, rng, shift=0.0):
    long_side = policy.problem is Problem.EXIT_LONG
    c, r = market.c, market.r
    n_steps = max(1, round(market.T_prime * steps_per_unit))
    dt = market.T_prime / n_steps

    def bound(ss):
        lvl = policy.exit_boundary(ss)
        off = shift * float(model.diffusion(lvl)) * math.sqrt(dt)
        return lvl - off if long_side else lvl + off
    payoff = np.empty(n_paths)
    x = np.full(n_paths, float(x0))
    level = bound(0.0)
    hit = x >= level if long_side else x <= level
    payoff[hit] = x[hit] - c if long_side else x[hit] + c
    idx = np.nonzero(~hit)[0]
    x = x[~hit]
    from .model import simulate_step

    for k in range(1, n_steps + 1):
        if len(idx) == 0:
            break
        x = simulate_step(model, x, dt, rng)
        tk = k * dt
        level = bound(tk)
        hit = x >= level if long_side else x <= level
        if k == n_steps:
            hit = np.ones_like(hit)
        if hit.any():
            disc = math.exp(-r * tk)
            payoff[idx[hit]] = disc * (x[hit] - c) if long_side else disc * (x[hit] + c)
            idx = idx[~hit]
            x = x[~hit]
    return payoff


_STRATEGY_FOR = {
    Problem.ENTRY_LONG: Strategy.LONG_SHORT,
    Problem.ENTRY_SHORT: Strategy.SHORT_LONG,
    Problem.CHOOSER: Strategy.CHOOSER,
}


def mc_policy_value(
    policy: PolicySpec,
    model: ModelSpec,
    market: MarketSpec,
    x0: float,
    n_paths: int,
    steps_per_unit: int = 2000,
    seed: int = 0,
    continuity_correction: bool = False,
) -> MCEstimate:
    """Mean discounted payoff and standard error of a fixed policy.

    Exact transitions for OU/CIR, Euler steps otherwise; boundary hits are
    monitored on the discrete grid (hit times are detected late, a bias
    that shrinks linearly in the step size). Entry policies realize a full
    round trip with forced liquidation at the window end; paths that never
    enter contribute zero. ``continuity_correction`` shifts each hitting
    level toward the continuation side by 0.5826*sigma*sqrt(dt) to cancel
    the leading discrete-monitoring bias.
    """
    if n_paths < 10_000:
        raise ModelDomainError("policy pricing needs at least 1e4 paths")
    shift = 0.5826 if continuity_correction else 0.0
    rng = np.random.default_rng(seed)
    if policy.problem in (Problem.EXIT_LONG, Problem.EXIT_SHORT):
        payoff = _exit_only_mc(policy, model, market, x0, n_paths, steps_per_unit, rng, shift)
    else:
        strategy = _STRATEGY_FOR[policy.problem]
        if strategy is Strategy.CHOOSER:
            bounds = StrategyBoundaries(
                strategy,
                entry_lower=policy.entry_boundary,
                entry_upper=policy.entry_upper_boundary,
                exit_long=policy.exit_boundary,
                exit_short=policy.exit_short_boundary,
                deadline_lower=policy.deadline_level,
                deadline_upper=policy.deadline_upper_level,
            )
        elif strategy is Strategy.LONG_SHORT:
            bounds = StrategyBoundaries(
                strategy,
                entry_lower=policy.entry_boundary,
                exit_long=policy.exit_boundary,
                deadline_lower=policy.deadline_level,
            )
        else:
            bounds = StrategyBoundaries(
                strategy,
                entry_upper=policy.entry_boundary,
                exit_short=policy.exit_boundary,
                deadline_upper=policy.deadline_level,
            )
        payoff = simulate_batch_arrays(
            model, market, bounds, rng, n_paths, steps_per_unit, x0, shift
        )["pnl"]
    return MCEstimate(float(payoff.mean()), float(payoff.std() / math.sqrt(n_paths)), n_paths)


def _shift(bound, offset):
    return (lambda tt, b=bound, o=offset: b(tt) + o) if bound is not None else None


def _shifted_policy(policy: PolicySpec, offset: float) -> PolicySpec:
    def move(level):
        return level + offset if level is not None else None

    if policy.problem in (Problem.EXIT_LONG, Problem.EXIT_SHORT):
        return replace(policy, exit_boundary=_shift(policy.exit_boundary, offset))
    if policy.problem is Problem.CHOOSER:
        return replace(
            policy,
            entry_boundary=_shift(policy.entry_boundary, offset),
            entry_upper_boundary=_shift(policy.entry_upper_boundary, offset),
            deadline_level=move(policy.deadline_level),
            deadline_upper_level=move(policy.deadline_upper_level),
        )
    return replace(
        policy,
        entry_boundary=_shift(policy.entry_boundary, offset),
        deadline_level=move(policy.deadline_level),
    )


@dataclass(frozen=True)
class PerturbationOutcome:
    offset: float
    estimate: MCEstimate
    within_tolerance: bool


@dataclass(frozen=True)
class PerturbationReport:
    baseline: MCEstimate
    outcomes: tuple[PerturbationOutcome, ...]
    passed: bool


def perturbation_optimality_test(
    policy: PolicySpec,
    model: ModelSpec,
    market: MarketSpec,
    x0: float,
    perturbation: float = 0.02,
    n_paths: int = 100_000,
    steps_per_unit: int = 2000,
    seed: int = 0,
) -> PerturbationReport:
    """Check that shifting the solved boundary does not beat the baseline.

    For maximizing problems each shifted policy must estimate at most the
    baseline plus three standard errors (at least, minus three, for the
    short-exit cost minimization). The same seed drives all runs.
    """
    base = mc_policy_value(policy, model, market, x0, n_paths, steps_per_unit, seed)
    outcomes = []
    for offset in (perturbation, -perturbation):
        est = mc_policy_value(
            _shifted_policy(policy, offset), model, market, x0, n_paths, steps_per_unit, seed
        )
        band = 3.0 * max(base.std_error, est.std_error)
        if policy.maximizing:
            ok = est.value <= base.value + band
        else:
            ok = est.value >= base.value - band
        outcomes.append(PerturbationOutcome(offset, est, ok))
    return PerturbationReport(base, tuple(outcomes), all(o.within_tolerance for o in outcomes))
