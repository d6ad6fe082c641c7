"""Synthetic populations that stand in for data we do not ship.

The heather-occupancy population reproduces the published summary
statistics of the worked example (229,772 one-kilometre land cells, mean
occupancy 0.299). The exact number of occupied cells is not published;
68,702 is the count that rounds to that mean, and is a reconstruction.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .population import Population, SampleMembership
from .rng import make_generator
from .sampler import targeted_rho_sample

CALLUNA_N = 229_772
CALLUNA_OCCUPIED = 68_702
CALLUNA_SAMPLE_N = 19_419
CALLUNA_RHO = -0.058
CALLUNA_NEFF = 28
CALLUNA_SEED = 20_240_001
CALLUNA_SAMPLE_SEED = 58

_GRID_ROWS, _GRID_COLS = 700, 460


def _smooth_field(rows: np.ndarray, cols: np.ndarray, rng: np.random.Generator, terms: int) -> np.ndarray:
    """Sum of random low-frequency plane waves, evaluated per cell."""
    out = np.zeros(rows.shape[0])
    for _ in range(terms):
        kr, kc = rng.uniform(-0.05, 0.05, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        out += rng.uniform(0.5, 1.0) * np.cos(kr * rows + kc * cols + phase)
    return out


@lru_cache(maxsize=4)
def calluna_population(seed: int = CALLUNA_SEED) -> Population:
    """Gridded binary population with N = 229,772 and 68,702 occupied cells.

    Land is an irregular blob on a 700 x 460 grid; occupancy is spatially
    clustered. Deterministic given ``seed``.
    """
    rng = make_generator(seed)
    rr, cc = np.meshgrid(np.arange(_GRID_ROWS), np.arange(_GRID_COLS), indexing="ij")
    rows, cols = rr.ravel(), cc.ravel()

    # elliptical island with a wobbly coastline; keep the N most inland cells
    u = (rows - _GRID_ROWS / 2) / (_GRID_ROWS / 2)
    v = (cols - _GRID_COLS / 2) / (_GRID_COLS / 2)
    landness = u**2 + v**2 + 0.25 * _smooth_field(rows, cols, rng, 6)
    land = np.sort(np.argsort(landness, kind="stable")[:CALLUNA_N])
    rows, cols = rows[land], cols[land]

    suitability = _smooth_field(rows, cols, rng, 8) + 0.3 * rng.standard_normal(rows.shape[0])
    occupied = np.argsort(-suitability, kind="stable")[:CALLUNA_OCCUPIED]
    y = np.zeros(CALLUNA_N)
    y[occupied] = 1.0

    ids = [f"{r}_{c}" for r, c in zip(rows, cols)]
    return Population(ids, y, cells=np.column_stack([rows, cols]))


@lru_cache(maxsize=4)
def calluna_sample(seed: int = CALLUNA_SAMPLE_SEED) -> SampleMembership:
    """The 19,419-cell biased sample with defect correlation -0.058."""
    return targeted_rho_sample(calluna_population(), CALLUNA_SAMPLE_N, CALLUNA_RHO, seed)


def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def logistic_selection_population(
    N: int = 50_000,
    selection: tuple[float, float] = (-2.0, 1.5),
    outcome: tuple[float, float] = (-0.8, 1.2),
    seed: int = 7,
) -> tuple[Population, SampleMembership]:
    """Population where one covariate drives both occupancy and sample inclusion.

    ``x ~ N(0, 1)``; ``y ~ Bernoulli(expit(a + b x))`` with ``(a, b) =
    outcome``; ``R ~ Bernoulli(expit(c + d x))`` with ``(c, d) = selection``.
    Given x, R is independent of y, so weighting by the true or a well-fitted
    propensity removes the selection bias.
    """
    rng = make_generator(seed)
    x = rng.standard_normal(N)
    y = (rng.random(N) < _expit(outcome[0] + outcome[1] * x)).astype(np.float64)
    r = rng.random(N) < _expit(selection[0] + selection[1] * x)
    pop = Population([f"u{i}" for i in range(N)], y, covariates=x.reshape(-1, 1), covariate_names=["x"])
    return pop, SampleMembership(r)


def null_covariate_population(
    N: int = 50_000, n: int = 5_000, rho: float = -0.1, seed: int = 11
) -> tuple[Population, SampleMembership]:
    """Biased sample whose only covariate is pure noise, unrelated to R and y."""
    rng = make_generator(seed)
    y = (rng.random(N) < 0.3).astype(np.float64)
    x = rng.standard_normal(N)
    base = Population([f"u{i}" for i in range(N)], y)
    m = targeted_rho_sample(base, n, rho, seed + 1)
    pop = Population(base.ids, y, covariates=x.reshape(-1, 1), covariate_names=["noise"])
    return pop, m


def separable_population() -> tuple[Population, SampleMembership]:
    """20 units where ``x > 10`` exactly predicts inclusion."""
    x = np.arange(1, 21, dtype=np.float64)
    y = (x % 3 == 0).astype(np.float64)
    pop = Population([f"s{i}" for i in range(20)], y, covariates=x.reshape(-1, 1), covariate_names=["x"])
    return pop, SampleMembership(x > 10)
