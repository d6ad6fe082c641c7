import csv
from itertools import product

import numpy as np
import pytest

from helpers import make_pop
from oracles import all_memberships, coarsen_by_hand
from sampledefect.errors import PopulationError
from sampledefect.grid import GridPopulation, aggregate, diagnostics_by_resolution, write_resolution_table
from sampledefect.metrics import diagnose
from sampledefect.population import Population, SampleMembership


def grid_pop(cells, y):
    cells = np.asarray(cells, dtype=np.int64)
    return GridPopulation(make_pop(y, cells=cells))


def square(n):
    return [(r, c) for r in range(n) for c in range(n)]


def test_requires_cells_and_unique():
    with pytest.raises(PopulationError, match="not gridded"):
        GridPopulation(make_pop([0, 1]))
    with pytest.raises(PopulationError, match="unique"):
        grid_pop([(0, 0), (0, 0)], [0, 1])


def test_identity_factor():
    gp = grid_pop(square(3), [1, 0, 0, 1, 0, 1, 0, 0, 1])
    m = SampleMembership([1, 1, 0, 0, 0, 0, 0, 1, 0])
    cgp, cm = aggregate(gp, m, 1)
    assert cgp is gp and cm == m


def test_single_block_union():
    gp = grid_pop(square(2), [0, 0, 0, 0])
    cgp, cm = aggregate(gp, SampleMembership([0, 0, 1, 0]), 2)
    assert cgp.N == 1
    assert list(cgp.population.y) == [0.0]
    assert list(cm.flags) == [True]


def test_diagonal_and_row_k5():
    cells = square(10)
    y = [1 if r == c else 0 for r, c in cells]
    sampled = [1 if r == 7 else 0 for r, c in cells]
    cgp, cm = aggregate(grid_pop(cells, y), SampleMembership(sampled), 5)
    # blocks (0,0) and (1,1) hold the diagonal; row 7 crosses blocks (1,0) and (1,1)
    assert cgp.N == 4
    assert [tuple(c) for c in cgp.population.cells] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert list(cgp.population.y) == [1, 0, 0, 1]
    assert list(cm.flags) == [False, False, True, True]
    assert cm.n == 2
    assert float(np.mean(cgp.population.y)) == 0.5
    ref = coarsen_by_hand(cells, y, sampled, 5)
    assert ref == {(0, 0): (1, 0), (0, 1): (0, 0), (1, 0): (0, 1), (1, 1): (1, 1)}


def test_errors():
    gp = grid_pop(square(2), [0, 1, 0, 1])
    m = SampleMembership([1, 0, 0, 0])
    for k in (0, -1, 1.5, True):
        with pytest.raises(PopulationError):
            aggregate(gp, m, k)
    with pytest.raises(PopulationError, match="binary"):
        aggregate(grid_pop(square(2), [0, 0.5, 0, 1]), m, 2)
    with pytest.raises(PopulationError):
        diagnostics_by_resolution(gp, m, [])


def test_factors_one_matches_diagnose(calluna):
    pop, m = calluna
    (row,) = diagnostics_by_resolution(GridPopulation(pop), m, [1])
    d = diagnose(pop, m)
    assert row["status"] == "ok"
    assert (row["N"], row["n"]) == (d.N, d.n)
    assert row["rho"] == d.rho
    assert row["n_eff"] == d.n_eff
    assert row["actual_error"] == d.actual_error
    assert row["f"] == d.f


def test_calluna_coarsening_raises_f(calluna):
    pop, m = calluna
    fine, coarse = diagnostics_by_resolution(GridPopulation(pop), m, [1, 10])
    assert coarse["f"] > fine["f"]
    assert coarse["N"] < fine["N"]
    assert coarse["n"] <= fine["n"]


def test_counterexample_f_decreases():
    # one fully sampled 5x5 block plus three lone unsampled land cells elsewhere
    cells = square(5) + [(7, 7), (2, 12), (12, 2)]
    y = [1 if (r + c) % 4 == 0 else 0 for r, c in cells]
    sampled = [1] * 25 + [0, 0, 0]
    gp = grid_pop(cells, y)
    fine, coarse = diagnostics_by_resolution(gp, SampleMembership(sampled), [1, 5])
    assert fine["f"] == pytest.approx(25 / 28)
    assert coarse["f"] == pytest.approx(1 / 4)
    assert coarse["f"] < fine["f"]


def test_degenerate_row_keeps_counts():
    gp = grid_pop(square(4), [1] * 8 + [0] * 8)
    m = SampleMembership([1, 0] * 8)
    rows = diagnostics_by_resolution(gp, m, [1, 4])
    assert rows[0]["status"] == "ok"
    assert rows[1]["N"] == 1 and rows[1]["n"] == 1
    assert rows[1]["rho"] is None
    assert rows[1]["status"].startswith("degenerate")


def test_idempotent_under_unit_factor():
    rng = np.random.default_rng(1)
    cells = square(12)
    gp = grid_pop(cells, rng.integers(0, 2, 144))
    m = SampleMembership(rng.random(144) < 0.3)
    cgp, cm = aggregate(gp, m, 3)
    again, cm2 = aggregate(cgp, cm, 1)
    assert np.array_equal(again.population.y, cgp.population.y)
    assert np.array_equal(again.population.cells, cgp.population.cells)
    assert cm2 == cm


@pytest.mark.parametrize("k", [2, 3, 5, 7])
def test_monotone_counts(k):
    rng = np.random.default_rng(k)
    keep = rng.random(400) < 0.7
    cells = [c for c, kp in zip(square(20), keep) if kp]
    y = rng.integers(0, 2, len(cells))
    gp = grid_pop(cells, y)
    m = SampleMembership(rng.random(len(cells)) < 0.2)
    cgp, cm = aggregate(gp, m, k)
    assert cgp.N <= gp.N
    assert cm.n <= m.n
    assert np.mean(cgp.population.y) >= np.mean(gp.population.y)
    assert cgp.resolution_label == f"1x{k}"


def test_whole_grid_collapse():
    rng = np.random.default_rng(9)
    y = rng.integers(0, 2, 36)
    flags = rng.random(36) < 0.2
    cgp, cm = aggregate(grid_pop(square(6), y), SampleMembership(flags), 6)
    assert cgp.N == 1
    assert cgp.population.y[0] == y.max()
    assert cm.flags[0] == flags.max()


def test_exhaustive_small_grids():
    # every occupancy pattern and membership of a 2x3 grid at k = 2 and 3
    cells = [(r, c) for r in range(2) for c in range(3)]
    gp_cache = {}
    for y in product((0, 1), repeat=6):
        gp = gp_cache.setdefault(y, grid_pop(cells, y))
        for r in all_memberships(6):
            m = SampleMembership(r)
            for k in (2, 3):
                cgp, cm = aggregate(gp, m, k)
                ref = coarsen_by_hand(cells, y, r, k)
                got = {tuple(int(v) for v in c): (int(yy), int(ss))
                       for c, yy, ss in zip(cgp.population.cells, cgp.population.y, cm.flags)}
                assert got == ref


def test_resolution_table_csv(calluna, tmp_path):
    pop, m = calluna
    rows = diagnostics_by_resolution(GridPopulation(pop), m, [1, 10])
    path = write_resolution_table(rows, tmp_path / "res.csv")
    with open(path, newline="") as fh:
        out = list(csv.DictReader(fh))
    assert [int(r["k"]) for r in out] == [1, 10]
    assert float(out[0]["rho"]) == rows[0]["rho"]
    assert list(out[0]) == ["k", "N", "n", "f", "rho", "n_eff", "actual_error", "status"]


def test_coarse_ids_and_no_covariates():
    pop = Population(["a", "b", "c", "d"], [0, 1, 0, 1], cells=np.array([[0, 0], [0, 1], [3, 3], [2, 3]]),
                     covariates=np.ones((4, 1)), covariate_names=["x"])
    cgp, _ = aggregate(GridPopulation(pop), SampleMembership([1, 0, 0, 0]), 2)
    assert list(cgp.population.ids) == ["0_0", "1_1"]
    assert cgp.population.covariates is None
