"""Trade-lifecycle engine: entry by the deadline, exit on a restarted clock.

Simulates price paths, applies the entry rule of the chosen strategy up to
the entry deadline, then runs the matching exit rule over a fresh window
of fixed length starting at the entry time (forced liquidation at its
end), and records the round trip. The exit clock is independent of the
entry time by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelDomainError
from .model import MarketSpec, ModelSpec, simulate_step


class Strategy(enum.Enum):
    LONG_SHORT = "long_short"
    SHORT_LONG = "short_long"
    CHOOSER = "chooser"


@dataclass(frozen=True)
class StrategyBoundaries:
    """Boundary callables needed by one strategy.

    ``entry_lower`` triggers a long entry from below, ``entry_upper`` a
    short entry from above; each side's exit boundary closes that
    position. The chooser needs all four, the one-sided strategies two.

    ``deadline_lower``/``deadline_upper`` are the thresholds applied at
    the entry deadline itself: there the optimal rule enters whenever the
    entry payoff is still positive (the break-even level for one-sided
    strategies, the crossover/break-even combination for the chooser),
    which is wider than the boundary's terminal value. When None, the
    deadline check falls back to the entry boundary (pure first-hitting).
    """

    strategy: Strategy
    entry_lower: object | None = None
    entry_upper: object | None = None
    exit_long: object | None = None
    exit_short: object | None = None
    deadline_lower: float | None = None
    deadline_upper: float | None = None

    def __post_init__(self):
        need = {
            Strategy.LONG_SHORT: ("entry_lower", "exit_long"),
            Strategy.SHORT_LONG: ("entry_upper", "exit_short"),
            Strategy.CHOOSER: ("entry_lower", "entry_upper", "exit_long", "exit_short"),
        }[self.strategy]
        for name in need:
            if getattr(self, name) is None:
                raise ModelDomainError(f"{self.strategy.value} strategy needs {name}")

    def lower_level(self, t, deadline: bool):
        if self.entry_lower is None:
            return None
        if deadline and self.deadline_lower is not None:
            return self.deadline_lower
        return self.entry_lower(t)

    def upper_level(self, t, deadline: bool):
        if self.entry_upper is None:
            return None
        if deadline and self.deadline_upper is not None:
            return self.deadline_upper
        return self.entry_upper(t)


@dataclass(frozen=True)
class TradeRecord:
    """One simulated round trip (all times absolute, from the sim start)."""

    entered: bool
    side: str | None = None
    entry_time: float | None = None
    entry_price: float | None = None
    exit_time: float | None = None
    exit_price: float | None = None
    forced_exit: bool = False
    discounted_pnl: float = 0.0


@dataclass(frozen=True)
class PnlSummary:
    mean_pnl: float
    std_error: float
    entry_frequency: float
    forced_exit_frequency: float
    mean_holding_time: float
    n_records: int


def _entry_phase(model, market, bounds, rng, n_paths, steps_per_unit, x0, shift=0.0):
    """Vectorized first-hitting of the entry rule on [0, T]."""
    n_steps = max(1, round(market.T * steps_per_unit))
    dt = market.T / n_steps
    x = np.full(n_paths, float(x0))
    side = np.zeros(n_paths, dtype=np.int8)  # +1 long, -1 short, 0 none
    tau = np.full(n_paths, np.nan)
    entry_px = np.full(n_paths, np.nan)
    idx = np.arange(n_paths)

    def triggers(xx, tt, deadline=False):
        long_hit = np.zeros(len(xx), dtype=bool)
        short_hit = np.zeros(len(xx), dtype=bool)
        lo = bounds.lower_level(tt, deadline)
        up = bounds.upper_level(tt, deadline)
        if lo is not None:
            if not deadline:
                long_hit = xx <= lo + shift * float(model.diffusion(lo)) * math.sqrt(dt)
            else:
                long_hit = xx < lo
        if up is not None:
            if not deadline:
                short_hit = xx >= up - shift * float(model.diffusion(up)) * math.sqrt(dt)
            else:
                short_hit = xx > up
        return long_hit, short_hit

    long_hit, short_hit = triggers(x, 0.0)
    hit = long_hit | short_hit
    side[idx[hit]] = np.where(long_hit[hit], 1, -1)
    tau[idx[hit]] = 0.0
    entry_px[idx[hit]] = x[hit]
    idx, x = idx[~hit], x[~hit]
    for k in range(1, n_steps + 1):
        if len(idx) == 0:
            break
        x = simulate_step(model, x, dt, rng)
        tk = k * dt
        long_hit, short_hit = triggers(x, tk, deadline=(k == n_steps))
        hit = long_hit | short_hit
        if hit.any():
            side[idx[hit]] = np.where(long_hit[hit], 1, -1)
            tau[idx[hit]] = tk
            entry_px[idx[hit]] = x[hit]
            idx, x = idx[~hit], x[~hit]
    return side, tau, entry_px


def _exit_phase(model, market, boundary, long_side, rng, states, steps_per_unit, shift=0.0):
    """Vectorized exit on the restarted clock [0, T_prime] for one side."""
    n_steps = max(1, round(market.T_prime * steps_per_unit))
    dt = market.T_prime / n_steps

    def level_at(ss):
        lvl = boundary(ss)
        off = shift * float(model.diffusion(lvl)) * math.sqrt(dt)
        return lvl - off if long_side else lvl + off
    n = len(states)
    s_exit = np.full(n, market.T_prime)
    px_exit = np.empty(n)
    forced = np.ones(n, dtype=bool)
    x = states.copy()
    idx = np.arange(n)
    level = level_at(0.0)
    hit = x >= level if long_side else x <= level
    s_exit[idx[hit]] = 0.0
    px_exit[idx[hit]] = x[hit]
    forced[idx[hit]] = False
    idx, x = idx[~hit], x[~hit]
    for k in range(1, n_steps + 1):
        if len(idx) == 0:
            break
        x = simulate_step(model, x, dt, rng)
        sk = k * dt
        level = level_at(sk)
        hit = x >= level if long_side else x <= level
        last = k == n_steps
        take = hit | last
        if take.any():
            s_exit[idx[take]] = sk
            px_exit[idx[take]] = x[take]
            forced[idx[take]] = ~hit[take]
            idx, x = idx[~take], x[~take]
    return s_exit, px_exit, forced


def simulate_batch_arrays(
    model: ModelSpec,
    market: MarketSpec,
    bounds: StrategyBoundaries,
    rng: np.random.Generator,
    n_paths: int,
    steps_per_unit: int = 2000,
    x0: float | None = None,
    monitoring_shift: float = 0.0,
):
    """Vectorized round trips; returns a dict of per-path arrays.

    ``monitoring_shift`` (in units of sigma(level)*sqrt(dt)) moves every
    hitting level toward the continuation side, compensating the late
    detection of discretely monitored crossings; zero means plain
    monitoring.
    """
    if steps_per_unit < 100:
        raise ModelDomainError("need at least 100 monitoring steps per unit time")
    x0 = model.theta if x0 is None else x0
    side, tau, entry_px = _entry_phase(
        model, market, bounds, rng, n_paths, steps_per_unit, x0, monitoring_shift
    )
    zeta = np.full(n_paths, np.nan)
    exit_px = np.full(n_paths, np.nan)
    forced = np.zeros(n_paths, dtype=bool)
    pnl = np.zeros(n_paths)
    r, c = market.r, market.c
    for sgn, boundary in ((1, bounds.exit_long), (-1, bounds.exit_short)):
        sel = np.nonzero(side == sgn)[0]
        if len(sel) == 0 or boundary is None:
            continue
        s_exit, px, forc = _exit_phase(
            model, market, boundary, sgn == 1, rng, entry_px[sel], steps_per_unit,
            monitoring_shift,
        )
        zeta[sel] = tau[sel] + s_exit
        exit_px[sel] = px
        forced[sel] = forc
        disc_in = np.exp(-r * tau[sel])
        disc_out = np.exp(-r * zeta[sel])
        if sgn == 1:
            pnl[sel] = disc_out * (px - c) - disc_in * (entry_px[sel] + c)
        else:
            pnl[sel] = disc_in * (entry_px[sel] - c) - disc_out * (px + c)
    return {
        "entered": side != 0,
        "side": side,
        "tau": tau,
        "entry_price": entry_px,
        "zeta": zeta,
        "exit_price": exit_px,
        "forced": forced,
        "pnl": pnl,
    }


def simulate_round_trips(
    model, market, bounds, rng, n_paths, steps_per_unit: int = 2000, x0=None
) -> list[TradeRecord]:
    """Batch of round trips as TradeRecords."""
    arrays = simulate_batch_arrays(model, market, bounds, rng, n_paths, steps_per_unit, x0)
    records = []
    for i in range(n_paths):
        if not arrays["entered"][i]:
            records.append(TradeRecord(False))
            continue
        records.append(
            TradeRecord(
                True,
                "long" if arrays["side"][i] > 0 else "short",
                float(arrays["tau"][i]),
                float(arrays["entry_price"][i]),
                float(arrays["zeta"][i]),
                float(arrays["exit_price"][i]),
                bool(arrays["forced"][i]),
                float(arrays["pnl"][i]),
            )
        )
    return records


def simulate_round_trip(
    model, market, bounds, rng, steps_per_unit: int = 2000, x0=None
) -> tuple[TradeRecord, tuple[np.ndarray, np.ndarray]]:
    """One round trip with the full simulated path (entry + exit phases).

    The path continues through the exit window when a position opens; an
    untouched entry rule yields a no-trade record and the entry-phase path.
    """
    if steps_per_unit < 100:
        raise ModelDomainError("need at least 100 monitoring steps per unit time")
    x0 = model.theta if x0 is None else x0
    n_entry = max(1, round(market.T * steps_per_unit))
    dt = market.T / n_entry
    times = [0.0]
    path = [float(x0)]

    def entry_trigger(xx, tt, deadline=False):
        lo = bounds.lower_level(tt, deadline)
        up = bounds.upper_level(tt, deadline)
        if lo is not None and (xx < lo if deadline else xx <= lo):
            return 1
        if up is not None and (xx > up if deadline else xx >= up):
            return -1
        return 0

    side = entry_trigger(x0, 0.0)
    k = 0
    while side == 0 and k < n_entry:
        k += 1
        path.append(float(simulate_step(model, np.asarray(path[-1]), dt, rng)))
        times.append(k * dt)
        side = entry_trigger(path[-1], times[-1], deadline=(k == n_entry))
    if side == 0:
        return TradeRecord(False), (np.asarray(times), np.asarray(path))

    tau, entry_price = times[-1], path[-1]
    boundary = bounds.exit_long if side > 0 else bounds.exit_short
    n_exit = max(1, round(market.T_prime * steps_per_unit))
    dte = market.T_prime / n_exit
    s, xx = 0.0, entry_price
    hit = (xx >= boundary(0.0)) if side > 0 else (xx <= boundary(0.0))
    j = 0
    while not hit and j < n_exit:
        j += 1
        xx = float(simulate_step(model, np.asarray(xx), dte, rng))
        s = j * dte
        times.append(tau + s)
        path.append(xx)
        hit = (xx >= boundary(s)) if side > 0 else (xx <= boundary(s))
    forced = not hit
    zeta = tau + s
    r, c = market.r, market.c
    if side > 0:
        pnl = math.exp(-r * zeta) * (xx - c) - math.exp(-r * tau) * (entry_price + c)
    else:
        pnl = math.exp(-r * tau) * (entry_price - c) - math.exp(-r * zeta) * (xx + c)
    record = TradeRecord(
        True,
        "long" if side > 0 else "short",
        tau,
        entry_price,
        zeta,
        float(xx),
        forced,
        pnl,
    )
    return record, (np.asarray(times), np.asarray(path))


def pnl_statistics(records) -> PnlSummary:
    """Summary statistics of a batch of trade records."""
    records = list(records)
    if not records:
        raise ModelDomainError("pnl statistics need at least one record")
    pnl = np.asarray([rec.discounted_pnl for rec in records])
    entered = np.asarray([rec.entered for rec in records])
    n = len(records)
    n_in = int(entered.sum())
    forced = sum(1 for rec in records if rec.entered and rec.forced_exit)
    hold = [rec.exit_time - rec.entry_time for rec in records if rec.entered]
    return PnlSummary(
        float(pnl.mean()),
        float(pnl.std() / math.sqrt(n)),
        n_in / n,
        (forced / n_in) if n_in else 0.0,
        float(np.mean(hold)) if hold else 0.0,
        n,
    )
