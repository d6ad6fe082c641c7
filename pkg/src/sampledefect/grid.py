"""Coarsen gridded occupancy populations and compare diagnostics across resolutions.

A coarse cell ``(row // k, col // k)`` exists when at least one fine cell
maps to it. It is occupied if any constituent fine cell is occupied and
sampled if any constituent fine cell was sampled.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DegenerateStatisticError, PopulationError
from .metrics import diagnose
from .population import Population, SampleMembership


@dataclass(frozen=True)
class GridPopulation:
    population: Population
    resolution_label: str = "1"

    def __post_init__(self):
        cells = self.population.cells
        if cells is None:
            raise PopulationError("population is not gridded: no row/col coordinates")
        keys = cells[:, 0].astype(np.int64) * (int(cells[:, 1].max()) + 1) + cells[:, 1]
        if np.unique(keys).shape[0] != cells.shape[0]:
            raise PopulationError("grid cells must be unique (row, col) pairs")

    @property
    def N(self) -> int:
        return self.population.N


def aggregate(
    gp: GridPopulation, m: SampleMembership, k: int
) -> tuple[GridPopulation, SampleMembership]:
    """Coarsen by factor ``k``; coarse cells come out sorted by (row, col)."""
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise PopulationError(f"aggregation factor must be a positive integer, got {k!r}")
    pop = gp.population
    pop.require_binary("grid aggregation")
    m.check_against(pop)
    if k == 1:
        return gp, m

    coarse = pop.cells // k
    uniq, inverse = np.unique(coarse, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_cells = uniq.shape[0]
    occupied = np.zeros(n_cells, dtype=bool)
    np.logical_or.at(occupied, inverse, pop.y == 1.0)
    sampled = np.zeros(n_cells, dtype=bool)
    np.logical_or.at(sampled, inverse, m.flags)

    ids = [f"{r}_{c}" for r, c in uniq]
    label = f"{gp.resolution_label}x{k}"
    cpop = Population(ids, occupied.astype(np.float64), cells=uniq)
    return GridPopulation(cpop, resolution_label=label), SampleMembership(sampled)


ROW_FIELDS = ("k", "N", "n", "f", "rho", "n_eff", "actual_error", "status")


def diagnostics_by_resolution(
    gp: GridPopulation, m: SampleMembership, factors: Iterable[int]
) -> list[dict]:
    """One row per factor with ``k, N, n, f, rho, n_eff, actual_error, status``.

    Rows whose diagnostics are undefined keep their counts, leave the
    statistics as ``None`` and name the problem in ``status``.
    """
    factors = list(factors)
    if not factors:
        raise PopulationError("no aggregation factors given")
    rows = []
    for k in factors:
        cgp, cm = aggregate(gp, m, k)
        N, n = cgp.N, cm.n
        row = {"k": int(k), "N": N, "n": n, "f": n / N}
        try:
            d = diagnose(cgp.population, cm)
        except DegenerateStatisticError as exc:
            row.update(rho=None, n_eff=None, actual_error=None, status=f"degenerate: {exc}")
        else:
            row.update(rho=d.rho, n_eff=d.n_eff, actual_error=d.actual_error, status="ok")
        rows.append(row)
    return rows


def write_resolution_table(rows: list[dict], path: str | os.PathLike) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for row in rows:
            w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in ROW_FIELDS])
    return path
