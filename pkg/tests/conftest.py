"""Shared fixtures: the heavy solves are session-scoped and computed once."""

import numpy as np
import pytest

from meanrev import (
    FDGrid,
    Family,
    MarketSpec,
    ModelSpec,
    Problem,
    TimeGrid,
    build_value_table,
    fd_value,
    solve_chooser,
    solve_entry_long,
    solve_entry_short,
    solve_exit_long,
    solve_exit_short,
)

PAPER_MU = 16.0
PAPER_THETA = 0.54
PAPER_SIGMA = 0.16
STAT_SD = PAPER_SIGMA / np.sqrt(2.0 * PAPER_MU)


@pytest.fixture(scope="session")
def paper_model():
    return ModelSpec(Family.OU, mu=PAPER_MU, theta=PAPER_THETA, sigma=PAPER_SIGMA)


@pytest.fixture(scope="session")
def paper_market():
    return MarketSpec(r=0.01, c=0.01, T=1.0, T_prime=1.0)


@pytest.fixture(scope="session")
def exit_long_500(paper_model, paper_market):
    return solve_exit_long(paper_model, paper_market, TimeGrid.uniform(1.0, 500))


@pytest.fixture(scope="session")
def exit_short_500(paper_model, paper_market):
    return solve_exit_short(paper_model, paper_market, TimeGrid.uniform(1.0, 500))


@pytest.fixture(scope="session")
def table_long(exit_long_500):
    return build_value_table(exit_long_500)


@pytest.fixture(scope="session")
def table_short(exit_short_500):
    return build_value_table(exit_short_500)


@pytest.fixture(scope="session")
def entry_long_500(paper_model, paper_market, exit_long_500, table_long):
    return solve_entry_long(
        paper_model, paper_market, exit_long_500, TimeGrid.uniform(1.0, 500), table=table_long
    )


@pytest.fixture(scope="session")
def entry_short_500(paper_model, paper_market, exit_short_500, table_short):
    return solve_entry_short(
        paper_model, paper_market, exit_short_500, TimeGrid.uniform(1.0, 500), table=table_short
    )


@pytest.fixture(scope="session")
def chooser_500(paper_model, paper_market, exit_long_500, exit_short_500, table_long, table_short):
    return solve_chooser(
        paper_model,
        paper_market,
        exit_long_500,
        exit_short_500,
        TimeGrid.uniform(1.0, 500),
        table_long=table_long,
        table_short=table_short,
    )


@pytest.fixture(scope="session")
def sym_market():
    return MarketSpec(r=0.0, c=0.0, T=1.0, T_prime=1.0)


@pytest.fixture(scope="session")
def sym_solutions(paper_model, sym_market):
    """Exit/entry/chooser family at r = c = 0 (exact mirror symmetry)."""
    grid = TimeGrid.uniform(1.0, 200)
    exit_long = solve_exit_long(paper_model, sym_market, grid)
    exit_short = solve_exit_short(paper_model, sym_market, grid)
    table_l = build_value_table(exit_long)
    table_s = build_value_table(exit_short)
    entry_long = solve_entry_long(paper_model, sym_market, exit_long, grid, table=table_l)
    entry_short = solve_entry_short(paper_model, sym_market, exit_short, grid, table=table_s)
    chooser = solve_chooser(
        paper_model, sym_market, exit_long, exit_short, grid,
        table_long=table_l, table_short=table_s,
    )
    return {
        "exit_long": exit_long,
        "exit_short": exit_short,
        "entry_long": entry_long,
        "entry_short": entry_short,
        "chooser": chooser,
    }


@pytest.fixture(scope="session")
def fd_references(paper_model, paper_market):
    """FD solutions of all five problems at paper parameters (2000x2000)."""
    from scipy.interpolate import CubicSpline

    grid = FDGrid.for_model(paper_model, n_x=2000, n_t=2000)
    c = paper_market.c
    fd = {}
    fd[Problem.EXIT_LONG] = fd_value(Problem.EXIT_LONG, paper_model, paper_market, grid)
    fd[Problem.EXIT_SHORT] = fd_value(Problem.EXIT_SHORT, paper_model, paper_market, grid)
    v1l = CubicSpline(fd[Problem.EXIT_LONG].x, fd[Problem.EXIT_LONG].values[0])
    v2l = CubicSpline(fd[Problem.EXIT_SHORT].x, fd[Problem.EXIT_SHORT].values[0])

    def g_long(x):
        return np.maximum(v1l(x) - x - c, 0.0)

    def g_short(x):
        return np.maximum(x - c - v2l(x), 0.0)

    def g_chooser(x):
        x = np.asarray(x, dtype=float)
        return np.maximum.reduce([v1l(x) - x - c, x - c - v2l(x), np.zeros_like(x)])

    fd[Problem.ENTRY_LONG] = fd_value(
        Problem.ENTRY_LONG, paper_model, paper_market, grid, obstacle=g_long
    )
    fd[Problem.ENTRY_SHORT] = fd_value(
        Problem.ENTRY_SHORT, paper_model, paper_market, grid, obstacle=g_short
    )
    fd[Problem.CHOOSER] = fd_value(
        Problem.CHOOSER, paper_model, paper_market, grid, obstacle=g_chooser
    )
    fd["v1l_slice"] = v1l
    fd["v2l_slice"] = v2l
    return fd
