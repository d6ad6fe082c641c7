"""Membership generators: simple random samples and fixed-size samples of a
binary population built to hit a chosen defect correlation.

Targeted sampling splits the population into its ones and zeros and draws a
fixed count from each. With ``p`` the population proportion of ones,
``f = n/N``, ``sd_r = sqrt(f(1-f))`` and ``sd_y = sqrt(p(1-p))``, the
correlation between R and Y for a sample holding ``n1`` ones is::

    rho(n1) = (n1 / N - f * p) / (sd_r * sd_y)

so the target is met by ``n1 = round(N * (f * p + target * sd_r * sd_y))``.
Rounding n1 to an integer moves rho by at most ``1 / (N * sd_r * sd_y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError, DegenerateStatisticError, InfeasibleTargetError, PopulationError
from .metrics import CONSTANT_Y
from .population import Population, SampleMembership
from .rng import MASK64, make_generator

SamplerKind = Literal["srs", "targeted_rho"]


@dataclass(frozen=True)
class SamplerSpec:
    kind: SamplerKind
    n: int
    target_rho: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("srs", "targeted_rho"):
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"sampler n must be a positive integer, got {self.n!r}")
        if self.kind == "targeted_rho":
            if self.target_rho is None:
                raise ConfigError("targeted_rho sampler needs target_rho")
            if not abs(self.target_rho) <= 1.0:
                raise ConfigError(f"|target_rho| must be at most 1, got {self.target_rho}")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= MASK64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n}
        if self.kind == "targeted_rho":
            d["target_rho"] = self.target_rho
        d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerSpec":
        unknown = set(d) - {"kind", "n", "target_rho", "seed"}
        if unknown:
            raise ConfigError(f"unknown sampler fields: {sorted(unknown)}")
        try:
            return cls(
                kind=d["kind"],
                n=d["n"],
                target_rho=None if d.get("target_rho") is None else float(d["target_rho"]),
                seed=d.get("seed", 0),
            )
        except KeyError as exc:
            raise ConfigError(f"sampler spec missing field {exc.args[0]!r}") from None


def srs(pop: Population, n: int, seed: int) -> SampleMembership:
    """Simple random sample of exactly ``n`` units, without replacement."""
    return _srs(pop, n, make_generator(seed))


def _srs(pop: Population, n: int, rng: np.random.Generator) -> SampleMembership:
    if n < 1 or n > pop.N:
        raise PopulationError(f"SRS size n={n} must lie in [1, N={pop.N}]")
    idx = rng.choice(pop.N, size=n, replace=False)
    return SampleMembership.from_indices(pop.N, idx)


@dataclass(frozen=True)
class _BinaryFrame:
    N: int
    ones: int
    p: float
    sd_y: float


def _binary_frame(pop: Population, n: int) -> _BinaryFrame:
    pop.require_binary("targeted sampling")
    N = pop.N
    if not 0 < n < N:
        raise PopulationError(f"targeted sampling needs 0 < n < N (n={n}, N={N})")
    ones = int(np.count_nonzero(pop.y))
    if ones == 0 or ones == N:
        raise DegenerateStatisticError(CONSTANT_Y)
    p = ones / N
    return _BinaryFrame(N=N, ones=ones, p=p, sd_y=math.sqrt(p * (1.0 - p)))


def _rho_for_ones(frame: _BinaryFrame, n: int, n1: int) -> float:
    f = n / frame.N
    sd_r = math.sqrt(f * (1.0 - f))
    return (n1 / frame.N - f * frame.p) / (sd_r * frame.sd_y)


def _ones_bounds(frame: _BinaryFrame, n: int) -> tuple[int, int]:
    zeros = frame.N - frame.ones
    return max(0, n - zeros), min(n, frame.ones)


def feasible_rho_range(pop: Population, n: int) -> tuple[float, float]:
    """Smallest and largest defect correlation any size-``n`` sample can have."""
    frame = _binary_frame(pop, n)
    lo, hi = _ones_bounds(frame, n)
    return _rho_for_ones(frame, n, lo), _rho_for_ones(frame, n, hi)


def targeted_allocation(pop: Population, n: int, target_rho: float) -> tuple[int, int]:
    """Return ``(n1, n0)``: how many ones and zeros a sample needs to hit ``target_rho``."""
    frame = _binary_frame(pop, n)
    f = n / frame.N
    sd_r = math.sqrt(f * (1.0 - f))
    # builtin round() is half-to-even
    n1 = round(frame.N * (f * frame.p + target_rho * sd_r * frame.sd_y))
    lo, hi = _ones_bounds(frame, n)
    if not lo <= n1 <= hi:
        rmin, rmax = _rho_for_ones(frame, n, lo), _rho_for_ones(frame, n, hi)
        raise InfeasibleTargetError(
            f"target rho {target_rho} is not attainable with n={n}: "
            f"attainable range is [{rmin:.6g}, {rmax:.6g}]"
        )
    return n1, n - n1


def allocation_rho(pop: Population, n: int, n1: int) -> float:
    """Defect correlation of any size-``n`` sample containing ``n1`` ones."""
    return _rho_for_ones(_binary_frame(pop, n), n, n1)


def rounding_bound(pop: Population, n: int) -> float:
    """Largest gap between a feasible target and the rho the sampler realizes."""
    frame = _binary_frame(pop, n)
    f = n / frame.N
    return 1.0 / (frame.N * math.sqrt(f * (1.0 - f)) * frame.sd_y)


def targeted_rho_sample(
    pop: Population, n: int, target_rho: float, seed: int
) -> SampleMembership:
    """Fixed-size sample whose defect correlation is within rounding of ``target_rho``."""
    return _targeted(pop, n, target_rho, make_generator(seed))


def _targeted(
    pop: Population, n: int, target_rho: float, rng: np.random.Generator
) -> SampleMembership:
    n1, n0 = targeted_allocation(pop, n, target_rho)
    ones_idx = np.flatnonzero(pop.y == 1.0)
    zeros_idx = np.flatnonzero(pop.y == 0.0)
    pick1 = rng.choice(ones_idx.shape[0], size=n1, replace=False)
    pick0 = rng.choice(zeros_idx.shape[0], size=n0, replace=False)
    flags = np.zeros(pop.N, dtype=bool)
    flags[ones_idx[pick1]] = True
    flags[zeros_idx[pick0]] = True
    return SampleMembership(flags)


def draw(pop: Population, spec: SamplerSpec, seed: int | None = None) -> SampleMembership:
    """Draw one membership according to ``spec``; ``seed`` overrides ``spec.seed``."""
    rng = make_generator(spec.seed if seed is None else seed)
    return draw_with(pop, spec, rng)


def draw_with(pop: Population, spec: SamplerSpec, rng: np.random.Generator) -> SampleMembership:
    if spec.n > pop.N:
        raise PopulationError(f"sampler n={spec.n} exceeds population size N={pop.N}")
    if spec.kind == "srs":
        return _srs(pop, spec.n, rng)
    return _targeted(pop, spec.n, spec.target_rho, rng)


def check_feasible(pop: Population, spec: SamplerSpec) -> None:
    """Raise the error ``draw`` would raise, without drawing."""
    if spec.n > pop.N:
        raise PopulationError(f"sampler n={spec.n} exceeds population size N={pop.N}")
    if spec.kind == "targeted_rho":
        targeted_allocation(pop, spec.n, spec.target_rho)
