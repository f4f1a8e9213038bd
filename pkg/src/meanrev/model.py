"""Mean-reverting diffusion families with affine drift mu*(theta - x).

Provides the model/market specifications, closed-form transition laws
(OU: normal, CIR: scaled noncentral chi-square), truncated affine
expectations used by the discounted kernels, exact transition sampling,
the analytic critical levels, and the degenerate-case classification
that routes trivial configurations away from the boundary solvers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ModelDomainError, UnsupportedLawError

_SQRT2PI = math.sqrt(2.0 * math.pi)


class Family(enum.Enum):
    OU = "OU"
    CIR = "CIR"
    IGBM = "IGBM"
    JACOBI = "Jacobi"


class Side(enum.Enum):
    """Which side of the truncation level an indicator keeps."""

    ABOVE = "above"
    BELOW = "below"


class Problem(enum.Enum):
    EXIT_LONG = "exit_long"
    EXIT_SHORT = "exit_short"
    ENTRY_LONG = "entry_long"
    ENTRY_SHORT = "entry_short"
    CHOOSER = "chooser"


class Degeneracy(enum.Enum):
    NON_DEGENERATE = "non_degenerate"
    STOP_IMMEDIATELY = "stop_immediately"
    WAIT_UNTIL_DEADLINE = "wait_until_deadline"


@dataclass(frozen=True)
class Interval:
    """State-space interval with extended-real endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ModelDomainError(f"empty interval ({self.lo}, {self.hi})")

    def contains(self, x, closed: bool = False) -> bool:
        x = np.asarray(x, dtype=float)
        if closed:
            ok = (x >= self.lo) & (x <= self.hi)
        else:
            ok = (x > self.lo) & (x < self.hi)
        return bool(np.all(ok))

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)


@dataclass(frozen=True)
class ModelSpec:
    """Diffusion family dX = mu*(theta - X) dt + sigma(X) dB on (a, b).

    ``a``/``b`` are only read for the Jacobi family; the other families
    imply their own state space.
    """

    family: Family
    mu: float
    theta: float
    sigma: float
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ModelDomainError("mean-reversion speed mu must be positive")
        if self.sigma <= 0:
            raise ModelDomainError("volatility scale sigma must be positive")
        if self.family is Family.JACOBI:
            if self.a is None or self.b is None:
                raise ModelDomainError("Jacobi model requires finite bounds a < b")
            if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
                raise ModelDomainError("Jacobi bounds must be finite with a < b")
        if self.family is Family.CIR and 2.0 * self.mu * self.theta < self.sigma**2:
            # Feller condition: keeps the CIR process strictly positive.
            raise ModelDomainError(
                "CIR requires 2*mu*theta >= sigma^2 so the process stays positive"
            )
        if not self.state_space.contains(self.theta):
            raise ModelDomainError("long-run mean theta must lie strictly inside (a, b)")

    @property
    def state_space(self) -> Interval:
        if self.family is Family.OU:
            return Interval(-math.inf, math.inf)
        if self.family in (Family.CIR, Family.IGBM):
            return Interval(0.0, math.inf)
        return Interval(self.a, self.b)

    def diffusion(self, x):
        """Diffusion coefficient sigma(x) of the family."""
        x = np.asarray(x, dtype=float)
        if self.family is Family.OU:
            return np.full_like(x, self.sigma)
        if self.family is Family.CIR:
            return self.sigma * np.sqrt(np.maximum(x, 0.0))
        if self.family is Family.IGBM:
            return self.sigma * x
        scale = math.sqrt(self.b) - math.sqrt(self.a)
        return self.sigma * np.sqrt(np.maximum((x - self.a) * (self.b - x), 0.0)) / scale

    def stationary_scale(self) -> float:
        """Local stationary standard deviation sigma(theta)/sqrt(2*mu).

        Exact for OU; used as a generic state-space scale otherwise.
        """
        return float(self.diffusion(self.theta)) / math.sqrt(2.0 * self.mu)


@dataclass(frozen=True)
class MarketSpec:
    """Discount rate, per-trade fixed cost, and the two sequential deadlines.

    ``T`` is the entry deadline; a position opened at time tau must be
    closed within the separate window [tau, tau + T_prime].
    """

    r: float
    c: float
    T: float
    T_prime: float

    def __post_init__(self):
        if self.r < 0:
            raise ModelDomainError("discount rate r must be nonnegative")
        if self.c < 0:
            raise ModelDomainError("transaction cost c must be nonnegative")
        if self.T <= 0 or self.T_prime <= 0:
            raise ModelDomainError("deadlines T and T_prime must be positive")


def mean_m(model: ModelSpec, s, x):
    """Conditional mean of X after elapsed time s >= 0 starting from x."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(s < 0):
        raise ModelDomainError("elapsed time must be nonnegative")
    if not model.state_space.contains(x, closed=True):
        raise ModelDomainError("start value outside the state space")
    decay = np.exp(-model.mu * s)
    out = x * decay + model.theta * (1.0 - decay)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TransitionLaw:
    """Law of X_u given X_t = x with s = u - t; fields may be numpy arrays.

    OU: normal with the stored mean/sd. CIR: ``scale`` times a noncentral
    chi-square with ``df`` degrees of freedom and noncentrality ``nonc``.
    """

    family: Family
    s: np.ndarray
    x: np.ndarray
    mean: np.ndarray
    sd: np.ndarray | None = None
    df: float | None = None
    scale: np.ndarray | None = None
    nonc: np.ndarray | None = None

    @property
    def variance(self):
        if self.family is Family.OU:
            return self.sd**2
        return self.scale**2 * (2.0 * self.df + 4.0 * self.nonc)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.family is Family.OU:
            z = (y - self.mean) / self.sd
            return np.exp(-0.5 * z * z) / (self.sd * _SQRT2PI)
        from scipy import stats

        return stats.ncx2.pdf(y / self.scale, self.df, self.nonc) / self.scale

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.family is Family.OU:
            return special.ndtr((y - self.mean) / self.sd)
        return special.chndtr(np.maximum(y, 0.0) / self.scale, self.df, self.nonc)


def transition_law(model: ModelSpec, s, x) -> TransitionLaw:
    """Closed-form transition law for OU/CIR; other families have none."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(s <= 0):
        raise ModelDomainError("transition law requires elapsed time s > 0")
    if not model.state_space.contains(x, closed=True):
        raise ModelDomainError("start value outside the state space")
    mu, theta, sigma = model.mu, model.theta, model.sigma
    decay = np.exp(-mu * s)
    mean = x * decay + theta * (1.0 - decay)
    if model.family is Family.OU:
        sd = sigma * np.sqrt((1.0 - decay**2) / (2.0 * mu))
        return TransitionLaw(Family.OU, s, x, mean, sd=sd)
    if model.family is Family.CIR:
        scale = sigma**2 * (1.0 - decay) / (4.0 * mu)
        df = 4.0 * mu * theta / sigma**2
        nonc = x * decay / scale
        return TransitionLaw(Family.CIR, s, x, mean, df=df, scale=scale, nonc=nonc)
    raise UnsupportedLawError(
        f"{model.family.value} has no closed-form transition law; "
        "use the finite-difference or simulation routes"
    )


def _ncx2_sf(y, df, nonc):
    return 1.0 - special.chndtr(y, df, nonc)


def truncated_affine_expectation(law: TransitionLaw, a0, a1, z, side: Side):
    """E[(a0 + a1*X) * 1{X >= z}] (side=ABOVE) or 1{X <= z} (side=BELOW).

    Closed form: normal cdf/pdf identities for OU, the shifted
    degrees-of-freedom identity (df -> df+2, df+4) for CIR. ``z`` may be
    +-inf and broadcasts against the law's array fields.
    """
    z = np.asarray(z, dtype=float)
    full = a0 + a1 * law.mean
    if law.family is Family.OU:
        with np.errstate(invalid="ignore"):
            d = (z - law.mean) / law.sd
        d = np.where(np.isneginf(z), -np.inf, np.where(np.isposinf(z), np.inf, d))
        q = special.ndtr(-d)  # P(X >= z)
        phi = np.where(np.isinf(d), 0.0, np.exp(-0.5 * d * d) / _SQRT2PI)
        above = a0 * q + a1 * (law.mean * q + law.sd * phi)
    elif law.family is Family.CIR:
        y = np.maximum(z, 0.0) / law.scale
        y = np.where(np.isposinf(z), np.inf, y)
        q0 = _ncx2_sf(y, law.df, law.nonc)
        q2 = _ncx2_sf(y, law.df + 2.0, law.nonc)
        q4 = _ncx2_sf(y, law.df + 4.0, law.nonc)
        # scale*df and scale*nonc recover the mean-reverting and initial parts
        # of the conditional mean.
        above = a0 * q0 + a1 * (law.scale * law.df * q2 + law.scale * law.nonc * q4)
        above = np.where(np.isposinf(z), 0.0, above)
    else:
        raise UnsupportedLawError(f"no truncated expectation for {law.family.value}")
    out = above if side is Side.ABOVE else full - above
    return out if np.ndim(out) else float(out)


def sample_transition(law: TransitionLaw, rng: np.random.Generator, size=None):
    """One exact draw (or ``size`` draws) from the transition law."""
    if law.family is Family.OU:
        return rng.normal(law.mean, law.sd, size=size)
    if law.family is Family.CIR:
        return law.scale * rng.noncentral_chisquare(law.df, law.nonc, size=size)
    raise UnsupportedLawError(f"no exact sampler for {law.family.value}")


def simulate_step(model: ModelSpec, x, dt: float, rng: np.random.Generator):
    """Advance states by dt: exact transition for OU/CIR, Euler otherwise.

    Euler steps are clamped just inside the state space (IGBM/Jacobi have
    no closed-form law; the clamp keeps the scheme on the model's domain).
    """
    if model.family in (Family.OU, Family.CIR):
        return sample_transition(transition_law(model, dt, x), rng)
    x = np.asarray(x, dtype=float)
    drift = model.mu * (model.theta - x)
    vol = model.diffusion(x)
    nxt = x + drift * dt + vol * math.sqrt(dt) * rng.standard_normal(np.shape(x) or None)
    space = model.state_space
    lo = space.lo + 1e-12 * (model.theta - space.lo) if math.isfinite(space.lo) else -math.inf
    hi = space.hi - 1e-12 * (space.hi - model.theta) if math.isfinite(space.hi) else math.inf
    return np.clip(nxt, lo, hi)


@dataclass(frozen=True)
class CriticalLevels:
    """Roots of the exit-side affine integrands.

    x_star_upper = (mu*theta + r*c)/(mu + r) is the long-exit terminal level;
    x_star_lower = (mu*theta - r*c)/(mu + r) the short-exit one. They are
    independent of the volatility specification.
    """

    x_star_upper: float
    x_star_lower: float


def critical_levels(model: ModelSpec, market: MarketSpec) -> CriticalLevels:
    denom = model.mu + market.r
    num = model.mu * model.theta
    rc = market.r * market.c
    return CriticalLevels((num + rc) / denom, (num - rc) / denom)


@dataclass(frozen=True)
class EntryThresholds:
    """Break-even levels for the entry payoffs and the chooser crossover.

    ``None`` marks a side whose entry payoff is never positive (no
    break-even root exists in the state space).
    """

    break_even_long: float | None = None
    break_even_short: float | None = None
    crossover: float | None = None


def classify_degenerate(
    problem: Problem,
    model: ModelSpec,
    market: MarketSpec,
    thresholds: EntryThresholds | None = None,
) -> Degeneracy:
    """Route configurations whose optimal rule needs no boundary solve.

    Exit problems degenerate when the relevant critical level leaves the
    state space; entry problems when the min/max of the critical level and
    the break-even level does. Classification is total: every input maps
    to one of the three outcomes.
    """
    a, b = model.state_space.lo, model.state_space.hi
    levels = critical_levels(model, market)

    if problem is Problem.EXIT_LONG:
        if levels.x_star_upper <= a:
            return Degeneracy.STOP_IMMEDIATELY
        if levels.x_star_upper >= b:
            return Degeneracy.WAIT_UNTIL_DEADLINE
        return Degeneracy.NON_DEGENERATE

    if problem is Problem.EXIT_SHORT:
        if levels.x_star_lower <= a:
            return Degeneracy.WAIT_UNTIL_DEADLINE
        if levels.x_star_lower >= b:
            return Degeneracy.STOP_IMMEDIATELY
        return Degeneracy.NON_DEGENERATE

    if problem is Problem.ENTRY_LONG:
        if thresholds is None:
            raise ModelDomainError("entry classification needs thresholds")
        gamma = thresholds.break_even_long if thresholds.break_even_long is not None else a
        level = min(levels.x_star_lower, gamma)
        if level <= a:
            return Degeneracy.WAIT_UNTIL_DEADLINE
        if level >= b:
            return Degeneracy.STOP_IMMEDIATELY
        return Degeneracy.NON_DEGENERATE

    if problem is Problem.ENTRY_SHORT:
        if thresholds is None:
            raise ModelDomainError("entry classification needs thresholds")
        gamma = thresholds.break_even_short if thresholds.break_even_short is not None else b
        level = max(levels.x_star_upper, gamma)
        if level >= b:
            return Degeneracy.WAIT_UNTIL_DEADLINE
        if level <= a:
            return Degeneracy.STOP_IMMEDIATELY
        return Degeneracy.NON_DEGENERATE

    # Chooser: both entry sides must be live. If one side's threshold set
    # leaves the state space, report that side's one-sided degeneracy.
    if thresholds is None:
        raise ModelDomainError("chooser classification needs thresholds")
    g1 = thresholds.break_even_long if thresholds.break_even_long is not None else a
    g2 = thresholds.break_even_short if thresholds.break_even_short is not None else b
    m = thresholds.crossover
    if m is None or not model.state_space.contains(np.asarray([g1, g2, m])):
        left = min(m if m is not None else a, g1, levels.x_star_lower)
        right = max(m if m is not None else b, g2, levels.x_star_upper)
        if left <= a and right >= b:
            return Degeneracy.WAIT_UNTIL_DEADLINE
        if left <= a:
            return classify_degenerate(Problem.ENTRY_SHORT, model, market, thresholds)
        return classify_degenerate(Problem.ENTRY_LONG, model, market, thresholds)
    return Degeneracy.NON_DEGENERATE
