"""Trade lifecycle: entry by deadline, restarted exit clock, round trips."""

import numpy as np
import pytest

from meanrev import (
    MarketSpec,
    Strategy,
    StrategyBoundaries,
    TradeRecord,
    pnl_statistics,
    simulate_round_trip,
    simulate_round_trips,
)
from meanrev.errors import ModelDomainError
from meanrev.strategy_sim import simulate_batch_arrays


@pytest.fixture(scope="module")
def long_short(exit_long_500, entry_long_500):
    return StrategyBoundaries(
        Strategy.LONG_SHORT,
        entry_lower=entry_long_500.boundary,
        exit_long=exit_long_500.boundary,
        deadline_lower=entry_long_500.gamma,
    )


class TestSingleRoundTrip:
    def test_immediate_trigger_at_zero(self, paper_model, paper_market, long_short):
        rng = np.random.default_rng(0)
        x0 = long_short.entry_lower(0.0) - 0.01
        record, (times, path) = simulate_round_trip(
            paper_model, paper_market, long_short, rng, 200, x0=x0
        )
        assert record.entered and record.entry_time == 0.0
        assert record.entry_price == x0

    def test_no_entry_path(self, paper_model, paper_market, exit_long_500, entry_long_500):
        # with the deadline threshold below every simulated point, a path
        # that never touches the boundary produces the empty record
        bounds = StrategyBoundaries(
            Strategy.LONG_SHORT,
            entry_lower=lambda t: -1e9,
            exit_long=exit_long_500.boundary,
            deadline_lower=-1e9,
        )
        rng = np.random.default_rng(1)
        record, (times, path) = simulate_round_trip(
            paper_model, paper_market, bounds, rng, 200
        )
        assert record == TradeRecord(False)
        assert len(times) == len(path) == 201

    def test_round_trip_well_formed(self, paper_model, paper_market, long_short):
        rng = np.random.default_rng(7)
        for _ in range(20):
            record, (times, path) = simulate_round_trip(
                paper_model, paper_market, long_short, rng, 200
            )
            if not record.entered:
                continue
            assert record.entry_time <= paper_market.T + 1e-12
            assert record.exit_time - record.entry_time <= paper_market.T_prime + 1e-12
            assert record.side == "long"
            assert times[-1] == pytest.approx(record.exit_time)

    def test_exit_window_independent_of_entry_time(self, paper_model, long_short):
        # two different entry deadlines leave the exit window length alone
        rng = np.random.default_rng(3)
        for T in (0.25, 1.0):
            market = MarketSpec(r=0.01, c=0.01, T=T, T_prime=1.0)
            for _ in range(10):
                record, _ = simulate_round_trip(paper_model, market, long_short, rng, 200)
                if record.entered:
                    assert record.exit_time - record.entry_time <= 1.0 + 1e-12


class TestBatch:
    def test_mean_pnl_matches_entry_value(self, paper_model, paper_market,
                                          long_short, entry_long_500):
        # 1e5 round trips against the entry value function, 3 SE
        rng = np.random.default_rng(17)
        records = simulate_round_trips(
            paper_model, paper_market, long_short, rng, 100_000, 2000, x0=0.54
        )
        stats = pnl_statistics(records)
        ie = entry_long_500.value(0.0, 0.54)
        # plain discrete monitoring detects hits late; its documented bias
        # at 2000 steps per unit is within one standard error here
        assert abs(stats.mean_pnl - ie) < 3 * stats.std_error + 3e-4

    def test_entry_frequency_matches_counts(self, paper_model, paper_market, long_short):
        rng = np.random.default_rng(23)
        records = simulate_round_trips(paper_model, paper_market, long_short, rng, 2_000, 300)
        stats = pnl_statistics(records)
        n_in = sum(1 for r in records if r.entered)
        assert stats.entry_frequency == n_in / len(records)
        assert 0.0 < stats.entry_frequency <= 1.0

    def test_forced_exit_rarer_with_longer_window(self, paper_model, long_short):
        rng = np.random.default_rng(29)
        freqs = []
        for t_prime in (0.5, 1.0):
            market = MarketSpec(r=0.01, c=0.01, T=1.0, T_prime=t_prime)
            records = simulate_round_trips(paper_model, market, long_short, rng, 20_000, 500)
            freqs.append(pnl_statistics(records).forced_exit_frequency)
        assert freqs[1] < freqs[0]

    def test_chooser_replays_matching_side(self, paper_model, paper_market, chooser_500,
                                           exit_long_500, exit_short_500):
        # under one seed the chooser's trade equals the one-sided strategy's
        # whenever it enters on the same side at the same time (the
        # single-path engine consumes one draw per step for any policy)
        chooser_bounds = StrategyBoundaries(
            Strategy.CHOOSER,
            entry_lower=chooser_500.lower,
            entry_upper=chooser_500.upper,
            exit_long=exit_long_500.boundary,
            exit_short=exit_short_500.boundary,
        )
        long_bounds = StrategyBoundaries(
            Strategy.LONG_SHORT,
            entry_lower=chooser_500.lower,
            exit_long=exit_long_500.boundary,
        )
        matched = 0
        for seed in range(40):
            rec_c, _ = simulate_round_trip(
                paper_model, paper_market, chooser_bounds,
                np.random.default_rng(seed), 200,
            )
            rec_l, _ = simulate_round_trip(
                paper_model, paper_market, long_bounds,
                np.random.default_rng(seed), 200,
            )
            if (
                rec_c.entered
                and rec_l.entered
                and rec_c.side == "long"
                and rec_c.entry_time == rec_l.entry_time
            ):
                matched += 1
                assert rec_c.discounted_pnl == rec_l.discounted_pnl
                assert rec_c.exit_time == rec_l.exit_time
        assert matched > 0


class TestPnlStatistics:
    def test_identical_records_zero_se(self):
        rec = TradeRecord(True, "long", 0.1, 0.5, 0.3, 0.56, False, 0.05)
        stats = pnl_statistics([rec] * 10)
        assert stats.std_error == 0.0
        assert stats.mean_pnl == 0.05
        assert stats.mean_holding_time == pytest.approx(0.2)

    def test_mixture_frequencies(self):
        recs = [TradeRecord(False)] * 3 + [
            TradeRecord(True, "long", 0.1, 0.5, 0.4, 0.56, True, 0.05)
        ] * 2
        stats = pnl_statistics(recs)
        assert stats.entry_frequency == pytest.approx(0.4)
        assert stats.forced_exit_frequency == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ModelDomainError):
            pnl_statistics([])


class TestValidation:
    def test_missing_boundary_rejected(self):
        with pytest.raises(ModelDomainError):
            StrategyBoundaries(Strategy.LONG_SHORT, entry_lower=lambda t: 0.5)

    def test_step_floor(self, paper_model, paper_market, long_short):
        with pytest.raises(ModelDomainError):
            simulate_round_trip(paper_model, paper_market, long_short,
                                np.random.default_rng(0), 50)
