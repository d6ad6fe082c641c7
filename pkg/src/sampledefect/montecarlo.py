"""Replicated sampling experiments: normal-theory intervals, empirical
coverage against the finite-population mean, and MSE comparisons between a
small simple random sample and a large biased one.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .errors import ConfigError
from .metrics import effective_sample_size, n_eff_ceiling
from .population import Population, population_stats
from .rng import MASK64, derive_seed, make_generator
from .sampler import SamplerSpec, allocation_rho, check_feasible, draw_with, targeted_allocation

DEFAULT_BINS = 40


@dataclass(frozen=True)
class ExperimentConfig:
    sampler: SamplerSpec
    replicates: int
    ci_level: float = 0.95
    master_seed: int = 0

    def __post_init__(self):
        if isinstance(self.replicates, bool) or not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError(f"replicates must be a positive integer, got {self.replicates!r}")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError(f"ci_level must lie in (0, 1), got {self.ci_level}")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed <= MASK64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "sampler": self.sampler.to_dict(),
            "replicates": self.replicates,
            "ci_level": self.ci_level,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        unknown = set(d) - {"sampler", "replicates", "ci_level", "master_seed"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "sampler" not in d or "replicates" not in d:
            raise ConfigError("config needs 'sampler' and 'replicates'")
        if not isinstance(d["sampler"], dict):
            raise ConfigError("'sampler' must be an object")
        return cls(
            sampler=SamplerSpec.from_dict(d["sampler"]),
            replicates=d["replicates"],
            ci_level=float(d.get("ci_level", 0.95)),
            master_seed=d.get("master_seed", 0),
        )


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)


def z_quantile(level: float) -> float:
    """Two-sided standard-normal critical value (1.959964... for 0.95)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def normal_ci(estimate: float, sd_est: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval ``estimate ± z * sd_est / sqrt(n)``, no FPC."""
    if n < 2:
        raise ValueError("a normal interval needs n >= 2")
    if sd_est < 0:
        raise ValueError("sd_est must be non-negative")
    half = z_quantile(level) * sd_est / math.sqrt(n)
    return estimate - half, estimate + half


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    sd: float
    min: float
    max: float
    bin_edges: tuple[float, ...]
    bin_counts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "sd": self.sd,
            "min": self.min,
            "max": self.max,
            "bin_edges": list(self.bin_edges),
            "bin_counts": list(self.bin_counts),
        }


def summarize(values: np.ndarray, bins: int = DEFAULT_BINS) -> Summary:
    """Count, mean, sd (divide-by-count) and an equal-width histogram over the observed range."""
    values = np.asarray(values, dtype=np.float64)
    count = values.shape[0]
    mean = math.fsum(values) / count
    sd = math.sqrt(math.fsum((values - mean) ** 2) / count)
    lo, hi = float(values.min()), float(values.max())
    # numpy widens a zero-width range to [v - 0.5, v + 0.5]
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return Summary(
        count=count,
        mean=mean,
        sd=sd,
        min=lo,
        max=hi,
        bin_edges=tuple(float(e) for e in edges),
        bin_counts=tuple(int(c) for c in counts),
    )


@dataclass
class CoverageResult:
    """Per-replicate detail and aggregates of one experiment."""

    config: ExperimentConfig
    true_mean: float
    estimates: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    bins: int = DEFAULT_BINS
    covers: np.ndarray = field(init=False)
    squared_errors: np.ndarray = field(init=False)

    def __post_init__(self):
        self.covers = (self.lower <= self.true_mean) & (self.true_mean <= self.upper)
        self.squared_errors = (self.estimates - self.true_mean) ** 2

    @property
    def replicates(self) -> int:
        return int(self.estimates.shape[0])

    @property
    def covered(self) -> int:
        return int(np.count_nonzero(self.covers))

    @property
    def coverage(self) -> float:
        return self.covered / self.replicates

    @property
    def mse(self) -> float:
        return math.fsum(self.squared_errors) / self.replicates

    @property
    def mean_estimate(self) -> float:
        return math.fsum(self.estimates) / self.replicates

    def estimates_summary(self) -> Summary:
        return summarize(self.estimates, self.bins)

    def squared_errors_summary(self) -> Summary:
        return summarize(self.squared_errors, self.bins)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "true_mean": self.true_mean,
            "replicates": self.replicates,
            "covered": self.covered,
            "coverage": self.coverage,
            "mse": self.mse,
            "mean_estimate": self.mean_estimate,
            "mean_interval_width": math.fsum(self.upper - self.lower) / self.replicates,
            "estimates": self.estimates_summary().to_dict(),
            "squared_errors": self.squared_errors_summary().to_dict(),
        }


def _one_replicate(pop: Population, cfg: ExperimentConfig, r: int) -> tuple[float, float, float]:
    rng = make_generator(derive_seed(cfg.master_seed, r))
    m = draw_with(pop, cfg.sampler, rng)
    ys = pop.y[m.flags]
    n = ys.shape[0]
    est = math.fsum(ys) / n
    sd = math.sqrt(math.fsum((ys - est) ** 2) / (n - 1))
    lo, hi = normal_ci(est, sd, n, cfg.ci_level)
    return est, lo, hi


def run_experiment(
    pop: Population, cfg: ExperimentConfig, workers: int = 1, bins: int = DEFAULT_BINS
) -> CoverageResult:
    """Draw ``cfg.replicates`` samples and score each interval against the population mean.

    Replicate ``r`` is seeded with ``derive_seed(cfg.master_seed, r)``, so
    ``workers > 1`` gives the same result as a sequential run.
    """
    if cfg.sampler.n < 2:
        raise ConfigError("coverage experiments need samples of size n >= 2")
    check_feasible(pop, cfg.sampler)
    true_mean = population_stats(pop)[1]
    reps = range(cfg.replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda r: _one_replicate(pop, cfg, r), reps))
    else:
        rows = [_one_replicate(pop, cfg, r) for r in reps]
    arr = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return CoverageResult(
        config=cfg,
        true_mean=true_mean,
        estimates=arr[:, 0].copy(),
        lower=arr[:, 1].copy(),
        upper=arr[:, 2].copy(),
        bins=bins,
    )


@dataclass
class MSEParity:
    mse_small: float
    mse_biased: float
    ratio: float
    small: CoverageResult
    biased: CoverageResult

    def to_dict(self) -> dict:
        return {"mse_small_srs": self.mse_small, "mse_biased": self.mse_biased, "ratio": self.ratio}


def design_n_eff(pop: Population, spec: SamplerSpec) -> float:
    """n_eff implied by a sampler design (an SRS design is taken as rho = 0)."""
    if spec.kind == "srs":
        return effective_sample_size(0.0, spec.n, pop.N)[0]
    n1, _ = targeted_allocation(pop, spec.n, spec.target_rho)
    rho = allocation_rho(pop, spec.n, n1)
    return effective_sample_size(rho, spec.n, pop.N)[0]


def mse_parity(
    pop: Population,
    small_srs_cfg: ExperimentConfig,
    biased_cfg: ExperimentConfig,
    require_matched: bool = True,
    workers: int = 1,
) -> MSEParity:
    """Run both designs and return their MSEs and ``mse_biased / mse_small``.

    With ``require_matched`` the small SRS must have size ``ceil(n_eff)`` of
    the biased design, which is the comparison the two MSEs are expected to
    agree on.
    """
    if small_srs_cfg.sampler.kind != "srs":
        raise ConfigError("the small arm of an MSE comparison must be an SRS")
    if require_matched:
        want = n_eff_ceiling(design_n_eff(pop, biased_cfg.sampler))
        if small_srs_cfg.sampler.n != want:
            raise ConfigError(
                f"small SRS has n={small_srs_cfg.sampler.n} but the biased design has ceil(n_eff)={want}"
            )
    small = run_experiment(pop, small_srs_cfg, workers=workers)
    biased = run_experiment(pop, biased_cfg, workers=workers)
    mse_a, mse_b = small.mse, biased.mse
    ratio = mse_b / mse_a if mse_a > 0 else math.inf
    return MSEParity(mse_small=mse_a, mse_biased=mse_b, ratio=ratio, small=small, biased=biased)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_replicates_csv(result: CoverageResult, path: str | os.PathLike) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "estimate", "squared_error", "ci_lower", "ci_upper", "covers"])
        for r in range(result.replicates):
            w.writerow([
                r,
                _fmt(result.estimates[r]),
                _fmt(result.squared_errors[r]),
                _fmt(result.lower[r]),
                _fmt(result.upper[r]),
                int(result.covers[r]),
            ])
    return path


def write_histogram_csv(result: CoverageResult, path: str | os.PathLike) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "bin", "bin_lower", "bin_upper", "count"])
        for name, summ in (
            ("estimate", result.estimates_summary()),
            ("squared_error", result.squared_errors_summary()),
        ):
            for b, count in enumerate(summ.bin_counts):
                w.writerow([name, b, _fmt(summ.bin_edges[b]), _fmt(summ.bin_edges[b + 1]), count])
    return path


def export_distributions(result: CoverageResult, directory: str | os.PathLike) -> dict[str, Path]:
    """Write ``replicates.csv`` and ``histogram.csv`` for external plotting."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return {
        "replicates": write_replicates_csv(result, directory / "replicates.csv"),
        "histogram": write_histogram_csv(result, directory / "histogram.csv"),
    }
