"""Data-defect correlation, error decomposition and effective sample size.

The error of a sample mean against the finite-population mean factors
exactly as::

    Ybar_n - Ybar_N = rho(R, Y) * sqrt((1 - f) / f) * sigma_Y

where ``R`` is the inclusion indicator, ``f = n/N`` and ``sigma_Y`` is the
divide-by-N population standard deviation. Replacing the expected squared
correlation with the realized one, the simple-random-sample size with the
same mean squared error is ``n_eff = f / (1 - f) / rho**2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateStatisticError, PopulationError
from .population import Population, SampleMembership, population_stats, sample_stats

NO_VARIATION = "correlation undefined: no sampling variation"
CONSTANT_Y = "correlation undefined: constant study variable"


@dataclass(frozen=True)
class DefectDiagnostics:
    """Everything the error identity and effective sample size say about one sample.

    ``required_z`` and ``relative_reduction`` are computed from
    ``n_eff_ceil``, the integer view of ``n_eff`` that gets reported.
    When the sample beats an SRS of the same size (``n_eff_ceil > n``) the
    formulas are kept as-is, so ``required_z < 1`` and the reduction is
    negative.
    """

    rho: float
    f: float
    sigma_y: float
    dropout_factor: float
    actual_error: float
    n_eff: float
    n_eff_clamped: bool
    required_z: float
    relative_reduction: float
    n: int
    N: int
    n_eff_ceil: int
    population_mean: float
    sample_mean: float

    @property
    def decomposed_error(self) -> float:
        return self.rho * self.dropout_factor * self.sigma_y

    def to_dict(self) -> dict:
        return asdict(self)


def _check_nondegenerate(n: int, N: int, sigma_y: float) -> None:
    if n == 0 or n == N:
        raise DegenerateStatisticError(NO_VARIATION)
    if sigma_y == 0.0:
        raise DegenerateStatisticError(CONSTANT_Y)


def defect_correlation(pop: Population, m: SampleMembership) -> float:
    """Pearson correlation between the inclusion indicator and y over all N units."""
    m.check_against(pop)
    N, mean_y, sigma_y = population_stats(pop)
    _check_nondegenerate(m.n, N, sigma_y)
    f = m.n / N
    # cov(R, y) = f * (sample mean - population mean); the centered gap keeps
    # the subtraction from cancelling when the error is small next to the mean
    cov = f * _centered_gap(pop, m, mean_y)
    sigma_r = math.sqrt(f * (1.0 - f))
    rho = cov / (sigma_r * sigma_y)
    return min(1.0, max(-1.0, rho))


def _centered_gap(pop: Population, m: SampleMembership, center: float) -> float:
    """Sample mean minus population mean, both taken about ``center``."""
    dy = pop.y - center
    return math.fsum(dy[m.flags]) / m.n - math.fsum(dy) / pop.N


def error_decomposition(pop: Population, m: SampleMembership) -> dict:
    """Return the three factors of the error identity plus the directly computed error.

    Keys: ``rho, f, sigma_y, dropout_factor, actual_error, population_mean,
    sample_mean``. ``rho * dropout_factor * sigma_y`` reproduces
    ``actual_error`` up to floating-point rounding.
    """
    rho = defect_correlation(pop, m)
    N, mean_y, sigma_y = population_stats(pop)
    n, mean_s = sample_stats(pop, m)
    f = n / N
    return {
        "rho": rho,
        "f": f,
        "sigma_y": sigma_y,
        "dropout_factor": math.sqrt((N - n) / n),
        "actual_error": _centered_gap(pop, m, mean_y),
        "population_mean": mean_y,
        "sample_mean": mean_s,
    }


def effective_sample_size(rho: float, n: int, N: int) -> tuple[float, bool]:
    """Size of the SRS whose mean has the same MSE as a sample with defect ``rho``.

    Returns ``(n_eff, clamped)``. The value is capped at ``N`` (a census
    cannot be beaten), which also covers ``rho == 0`` and ``n == N``.
    """
    if n <= 0:
        raise PopulationError("empty sample")
    if n > N:
        raise PopulationError(f"sample size n={n} exceeds population size N={N}")
    if not abs(rho) <= 1.0:
        raise ValueError(f"|rho| must be at most 1, got {rho}")
    if n == N or rho == 0.0:
        return float(N), True
    # n/(N-n) == f/(1-f) without the cancellation in 1 - f for huge N
    value = (n / (N - n)) / (rho * rho)
    if value > N:
        return float(N), True
    return value, False


def n_eff_ceiling(n_eff: float) -> int:
    """Integer view of n_eff. Rounded up, so 27.44 is reported as 28."""
    return math.ceil(n_eff)


def required_z(n: int, n_eff: float) -> float:
    """Half-width multiplier a normal interval needs to cover the truth: sqrt(n / n_eff)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not n_eff > 0:
        raise ValueError("n_eff must be positive")
    return math.sqrt(n / n_eff)


def relative_reduction(n: int, n_eff: float) -> float:
    """Fraction by which n_eff falls short of n."""
    if not n_eff > 0:
        raise ValueError("n_eff must be positive")
    if n_eff > n:
        raise ValueError(
            f"n_eff={n_eff} exceeds n={n}; a clamped n_eff cannot be read as a reduction"
        )
    return 1.0 - n_eff / n


def diagnose(pop: Population, m: SampleMembership) -> DefectDiagnostics:
    parts = error_decomposition(pop, m)
    n, N = m.n, pop.N
    n_eff, clamped = effective_sample_size(parts["rho"], n, N)
    n_int = n_eff_ceiling(n_eff)
    return DefectDiagnostics(
        rho=parts["rho"],
        f=parts["f"],
        sigma_y=parts["sigma_y"],
        dropout_factor=parts["dropout_factor"],
        actual_error=parts["actual_error"],
        n_eff=n_eff,
        n_eff_clamped=clamped,
        required_z=required_z(n, n_int),
        relative_reduction=1.0 - n_int / n,
        n=n,
        N=N,
        n_eff_ceil=n_int,
        population_mean=parts["population_mean"],
        sample_mean=parts["sample_mean"],
    )
