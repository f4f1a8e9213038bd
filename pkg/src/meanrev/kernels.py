"""Discounted truncated-expectation kernels built from affine integrands.

Each stopping problem contributes a piecewise-affine integrand H and a
truncation region (above a level, below a level, or outside a pair of
levels). The kernel value is -exp(-r*(u-t)) * E[H(X_u) * 1{region}],
assembled from the model layer's closed-form truncated expectations with
interval-intersection bookkeeping between integrand pieces and the
truncation region.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelDomainError
from .model import (
    EntryThresholds,
    MarketSpec,
    ModelSpec,
    Problem,
    Side,
    transition_law,
    truncated_affine_expectation,
)


class Truncation(enum.Enum):
    ABOVE_Z = "above_z"
    BELOW_Z = "below_z"
    OUTSIDE_PAIR = "outside_pair"


@dataclass(frozen=True)
class AffinePiece:
    """(a0 + a1*x) restricted to the open interval (lower, upper)."""

    a0: float
    a1: float
    lower: float
    upper: float


@dataclass(frozen=True)
class IntegrandSpec:
    """Piecewise-affine integrand H(x) = sum of pieces, with discount rate."""

    pieces: tuple[AffinePiece, ...]
    rate: float

    def __post_init__(self):
        intervals = sorted((p.lower, p.upper) for p in self.pieces)
        for (l1, u1), (l2, u2) in zip(intervals, intervals[1:]):
            if l2 < u1:
                raise ModelDomainError("integrand pieces must have disjoint interiors")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p in self.pieces:
            out += (p.a0 + p.a1 * x) * ((x > p.lower) & (x < p.upper))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelSpec:
    integrand: IntegrandSpec
    truncation: Truncation


def piece_value_closed(piece: AffinePiece, q: float) -> float:
    """Affine piece evaluated with closed interval endpoints."""
    return (piece.a0 + piece.a1 * q) * float(piece.lower <= q <= piece.upper)


_TRUNCATIONS = {
    Problem.EXIT_LONG: Truncation.ABOVE_Z,
    Problem.EXIT_SHORT: Truncation.BELOW_Z,
    Problem.ENTRY_LONG: Truncation.BELOW_Z,
    Problem.ENTRY_SHORT: Truncation.ABOVE_Z,
    Problem.CHOOSER: Truncation.OUTSIDE_PAIR,
}


def make_integrand(
    problem: Problem,
    model: ModelSpec,
    market: MarketSpec,
    thresholds: EntryThresholds | None = None,
) -> IntegrandSpec:
    """Affine integrand of the given stopping problem.

    Exit problems use -(mu+r)x + mu*theta +- r*c on the whole state space.
    Entry problems restrict the mirrored affine form to the side where the
    entry payoff can be positive. The chooser combines the long piece below
    min(crossover, long break-even) with the short piece above
    max(crossover, short break-even); the short piece carries +r*c in its
    constant term so that it matches the long-exit integrand.
    """
    mu, r, c, theta = model.mu, market.r, market.c, model.theta
    a, b = model.state_space.lo, model.state_space.hi
    slope = mu + r

    if problem is Problem.EXIT_LONG:
        pieces = (AffinePiece(mu * theta + r * c, -slope, a, b),)
    elif problem is Problem.EXIT_SHORT:
        pieces = (AffinePiece(mu * theta - r * c, -slope, a, b),)
    elif problem is Problem.ENTRY_LONG:
        if thresholds is None or thresholds.break_even_long is None:
            raise ModelDomainError("entry-long integrand needs the long break-even level")
        pieces = (AffinePiece(-mu * theta + r * c, slope, a, thresholds.break_even_long),)
    elif problem is Problem.ENTRY_SHORT:
        if thresholds is None or thresholds.break_even_short is None:
            raise ModelDomainError("entry-short integrand needs the short break-even level")
        pieces = (AffinePiece(mu * theta + r * c, -slope, thresholds.break_even_short, b),)
    else:
        if (
            thresholds is None
            or thresholds.break_even_long is None
            or thresholds.break_even_short is None
            or thresholds.crossover is None
        ):
            raise ModelDomainError("chooser integrand needs both break-evens and the crossover")
        left = min(thresholds.crossover, thresholds.break_even_long)
        right = max(thresholds.crossover, thresholds.break_even_short)
        pieces = (
            AffinePiece(-mu * theta + r * c, slope, a, left),
            AffinePiece(mu * theta + r * c, -slope, right, b),
        )
    return IntegrandSpec(pieces, r)


def kernel_for_problem(
    problem: Problem,
    model: ModelSpec,
    market: MarketSpec,
    thresholds: EntryThresholds | None = None,
) -> KernelSpec:
    return KernelSpec(make_integrand(problem, model, market, thresholds), _TRUNCATIONS[problem])


def _degenerate_interval_mass(x, lo, hi, tie_mass):
    """Limit weight of 1{lo < X < hi} as the law collapses onto x.

    A tie at an endpoint carries ``tie_mass``: 1/2 is the limit of the
    truncated expectation when the truncation level rides on the
    collapsing law's center (the boundary solver's left quadrature
    endpoint); callers may lower it to stabilize the backward recursion.
    """
    inside = ((x > lo) & (x < hi)).astype(float)
    tie = tie_mass * (((x == lo) | (x == hi)) & (lo < hi)).astype(float)
    return inside + tie


def eval_kernel(spec: KernelSpec, model: ModelSpec, t, u, x, z, z_tilde=None, tie_mass=0.5):
    """Kernel value -exp(-r*(u-t)) * E[H(X_u^{t,x}) * 1{truncation region}].

    ``u`` and the truncation levels may be numpy arrays; all array inputs
    broadcast together. ``u == t`` entries use the degenerate-law limit
    with ``tie_mass`` weight when x sits exactly on a truncation level.
    """
    if spec.truncation is Truncation.OUTSIDE_PAIR and z_tilde is None:
        raise ModelDomainError("outside_pair truncation needs both levels z < z_tilde")
    u = np.asarray(u, dtype=float)
    if np.any(u < t - 1e-14):
        raise ModelDomainError("kernel evaluation requires u >= t")
    s = np.maximum(u - t, 0.0)

    if spec.truncation is Truncation.ABOVE_Z:
        regions = [(np.asarray(z, dtype=float), np.inf)]
    elif spec.truncation is Truncation.BELOW_Z:
        regions = [(-np.inf, np.asarray(z, dtype=float))]
    else:
        regions = [
            (-np.inf, np.asarray(z, dtype=float)),
            (np.asarray(z_tilde, dtype=float), np.inf),
        ]

    shape = np.broadcast_shapes(
        s.shape,
        np.shape(x),
        *(np.shape(lo) for lo, _ in regions),
        *(np.shape(hi) for _, hi in regions),
    )
    s = np.broadcast_to(s, shape)
    xb = np.broadcast_to(np.asarray(x, dtype=float), shape)
    positive = s > 0.0
    law = transition_law(model, s[positive], xb[positive]) if np.any(positive) else None

    total = np.zeros(shape)
    for reg_lo, reg_hi in regions:
        reg_lo = np.broadcast_to(reg_lo, shape)
        reg_hi = np.broadcast_to(np.asarray(reg_hi, dtype=float), shape)
        for piece in spec.integrand.pieces:
            lo = np.maximum(reg_lo, piece.lower)
            hi = np.minimum(reg_hi, piece.upper)
            nonempty = lo < hi
            if not np.any(nonempty):
                continue
            part = np.zeros(shape)
            if law is not None:
                # E[(a0+a1 X) 1{lo < X < hi}] as a difference of upper truncations.
                above_lo = truncated_affine_expectation(
                    law, piece.a0, piece.a1, lo[positive], Side.ABOVE
                )
                above_hi = truncated_affine_expectation(
                    law, piece.a0, piece.a1, hi[positive], Side.ABOVE
                )
                part[positive] = above_lo - above_hi
            degenerate = ~positive
            if np.any(degenerate):
                xd = xb[degenerate]
                w = _degenerate_interval_mass(xd, lo[degenerate], hi[degenerate], tie_mass)
                part[degenerate] = (piece.a0 + piece.a1 * xd) * w
            total += np.where(nonempty, part, 0.0)

    out = -np.exp(-spec.integrand.rate * s) * total
    return out if out.ndim else float(out)
