"""Quasi-randomization: model each unit's chance of being in the sample from
design variables, then treat the inverse fitted chances as design weights.

The propensity model is a logistic regression of the inclusion indicator on
the covariates of the *whole* population frame (sampled and unsampled
units), fitted by iteratively reweighted least squares with a small ridge
penalty on the slopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateStatisticError, PopulationError
from .metrics import NO_VARIATION
from .population import Population, SampleMembership, population_stats

Normalization = Literal["hajek", "horvitz_thompson"]

DEFAULT_RIDGE = 1e-6
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
_OBJ_SLACK = 1e-14
_P_MIN = np.finfo(np.float64).tiny
_P_MAX = np.nextafter(1.0, 0.0)


@dataclass
class PropensityModel:
    """Fitted logistic inclusion model. ``coefficients[0]`` is the intercept."""

    coefficients: np.ndarray
    std_errors: np.ndarray
    converged: bool
    iterations: int
    ridge: float
    tol: float
    gradient_max_norm: float
    covariate_names: tuple[str, ...]
    objective_history: list[float] = field(default_factory=list)

    def linear_predictor(self, covariates: np.ndarray | None) -> np.ndarray:
        X = _design_matrix(covariates, len(self.covariate_names))
        return X @ self.coefficients

    def predict(self, pop: Population) -> np.ndarray:
        """Fitted inclusion probabilities for every unit in ``pop``.

        Values are kept strictly inside (0, 1); a near-separable fit would
        otherwise round to exactly 1.0 in double precision.
        """
        prob = _expit(self.linear_predictor(_select(pop, self.covariate_names)))
        return np.clip(prob, _P_MIN, _P_MAX)

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "std_errors": [float(s) for s in self.std_errors],
            "terms": ["(intercept)", *self.covariate_names],
            "converged": self.converged,
            "iterations": self.iterations,
            "ridge": self.ridge,
            "tol": self.tol,
            "gradient_max_norm": self.gradient_max_norm,
        }


def _expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta, dtype=np.float64)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _design_matrix(covariates: np.ndarray | None, p: int) -> np.ndarray:
    if p == 0:
        n = 1 if covariates is None else covariates.shape[0]
        return np.ones((n, 1))
    return np.column_stack([np.ones(covariates.shape[0]), covariates])


def _select(pop: Population, names: Sequence[str]) -> np.ndarray | None:
    if not names:
        return np.empty((pop.N, 0))
    if pop.covariates is None:
        raise PopulationError("population has no covariates")
    missing = [c for c in names if c not in pop.covariate_names]
    if missing:
        raise PopulationError(f"population lacks covariate(s) {missing}")
    cols = [pop.covariate_names.index(c) for c in names]
    return pop.covariates[:, cols]


def _objective(X, r, beta, ridge) -> float:
    eta = X @ beta
    # mean log-likelihood, logaddexp keeps large |eta| finite
    ll = math.fsum(r * eta - np.logaddexp(0.0, eta)) / X.shape[0]
    return ll - 0.5 * ridge * float(beta[1:] @ beta[1:])


def fit_propensity(
    pop: Population,
    m: SampleMembership,
    ridge: float = DEFAULT_RIDGE,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    covariates: Sequence[str] | None = None,
) -> PropensityModel:
    """Fit P(R=1 | x) by penalized IRLS over the full population frame.

    Parameters
    ----------
    pop : Population
        Frame with covariates for every unit, sampled or not.
    m : SampleMembership
        Observed inclusion indicator.
    ridge : float
        Penalty on the slope coefficients of the mean log-likelihood. The
        intercept is never penalized, so the fitted probabilities average
        to ``n/N`` at convergence.
    tol : float
        Convergence threshold on the max-norm of the penalized gradient.
    max_iter : int
        Newton iterations before giving up. A model that hits the limit is
        still returned, with ``converged=False``.
    covariates : sequence of str, optional
        Subset of ``pop.covariate_names`` to use; ``[]`` fits intercept only.
    """
    m.check_against(pop)
    if covariates is None:
        if pop.covariates is None:
            raise PopulationError("propensity fitting needs covariates on the population frame")
        covariates = pop.covariate_names
    names = tuple(covariates)
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    if m.n == 0 or m.n == pop.N:
        raise DegenerateStatisticError(NO_VARIATION)

    X = _design_matrix(_select(pop, names), len(names))
    r = m.flags.astype(np.float64)
    N, k = X.shape
    penalty = np.full(k, ridge)
    penalty[0] = 0.0

    beta = np.zeros(k)
    beta[0] = math.log(m.n / (N - m.n))
    obj = _objective(X, r, beta, ridge)
    history = [obj]
    converged = False
    iterations = 0
    grad = np.zeros(k)
    for iterations in range(1, max_iter + 1):
        prob = _expit(X @ beta)
        grad = X.T @ (r - prob) / N - penalty * beta
        if np.max(np.abs(grad)) <= tol:
            converged = True
            iterations -= 1
            break
        w = prob * (1.0 - prob)
        H = (X.T * w) @ X / N + np.diag(penalty)
        step = np.linalg.solve(H, grad)
        # halve until the penalized objective does not drop; near the optimum
        # the gain is below float resolution, hence the rounding allowance
        slack = _OBJ_SLACK * max(1.0, abs(obj))
        t = 1.0
        while True:
            cand = beta + t * step
            cand_obj = _objective(X, r, cand, ridge)
            if cand_obj >= obj - slack or t < 1e-10:
                break
            t *= 0.5
        if cand_obj < obj - slack:
            break
        beta, obj = cand, cand_obj
        history.append(obj)
    else:
        prob = _expit(X @ beta)
        grad = X.T @ (r - prob) / N - penalty * beta
        converged = bool(np.max(np.abs(grad)) <= tol)

    prob = _expit(X @ beta)
    info = (X.T * (prob * (1.0 - prob))) @ X + N * np.diag(penalty)
    try:
        se = np.sqrt(np.diag(np.linalg.inv(info)))
    except np.linalg.LinAlgError:
        se = np.full(k, np.nan)

    return PropensityModel(
        coefficients=beta,
        std_errors=se,
        converged=converged,
        iterations=iterations,
        ridge=ridge,
        tol=tol,
        gradient_max_norm=float(np.max(np.abs(grad))),
        covariate_names=names,
        objective_history=history,
    )


@dataclass
class WeightSet:
    weights: np.ndarray
    normalization: Normalization
    cap: float | None = None
    n_capped: int = 0

    def summary(self) -> dict:
        w = self.weights
        mean = math.fsum(w) / w.shape[0]
        sd = math.sqrt(math.fsum((w - mean) ** 2) / w.shape[0])
        return {
            "count": int(w.shape[0]),
            "min": float(w.min()),
            "max": float(w.max()),
            "sum": math.fsum(w),
            "cv": sd / mean,
            "normalization": self.normalization,
            "cap": self.cap,
            "n_capped": self.n_capped,
        }


def weights_from_propensities(
    probs, normalization: Normalization = "hajek", cap: float | None = None
) -> WeightSet:
    """Inverse-probability weights for the sampled units.

    ``cap`` truncates the raw inverse probabilities before any
    normalization. Hájek weights are rescaled to average 1.
    """
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if probs.size == 0:
        raise ValueError("no probabilities given")
    if np.any(~np.isfinite(probs)) or np.any(probs <= 0.0):
        raise ValueError("inclusion probabilities must be positive")
    if np.any(probs > 1.0):
        raise ValueError("inclusion probabilities cannot exceed 1")
    if normalization not in ("hajek", "horvitz_thompson"):
        raise ValueError(f"unknown normalization {normalization!r}")
    w = 1.0 / probs
    n_capped = 0
    if cap is not None:
        if not cap > 0:
            raise ValueError("cap must be positive")
        n_capped = int(np.count_nonzero(w > cap))
        w = np.minimum(w, cap)
    if normalization == "hajek":
        w = w / (math.fsum(w) / w.shape[0])
    return WeightSet(weights=w, normalization=normalization, cap=cap, n_capped=n_capped)


def _weight_array(w) -> np.ndarray:
    return np.asarray(w.weights if isinstance(w, WeightSet) else w, dtype=np.float64)


def weighted_mean(y, w) -> float:
    """Hájek mean ``sum(w*y) / sum(w)``."""
    y = np.asarray(y, dtype=np.float64)
    wa = _weight_array(w)
    if y.shape != wa.shape:
        raise ValueError(f"length mismatch: {y.shape[0]} values, {wa.shape[0]} weights")
    total = math.fsum(wa)
    if not total > 0:
        raise ValueError("weights must have a positive sum")
    return math.fsum(wa * y) / total


def ht_total(y, w: WeightSet) -> float:
    """Horvitz-Thompson total ``sum(y / pi)``; needs unnormalized weights."""
    if w.normalization != "horvitz_thompson":
        raise ValueError("Horvitz-Thompson totals need unnormalized inverse-probability weights")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != w.weights.shape:
        raise ValueError("length mismatch between values and weights")
    return math.fsum(w.weights * y)


def stratum_inclusion_probabilities(pop: Population, m: SampleMembership) -> np.ndarray:
    """Exact per-unit inclusion probabilities of a fixed-count design stratified on y.

    Each sampled unit gets ``(sampled in its y-stratum) / (stratum size)``.
    Returned over the sampled units, in population order.
    """
    m.check_against(pop)
    values, inverse = np.unique(pop.y, return_inverse=True)
    sizes = np.bincount(inverse)
    taken = np.bincount(inverse[m.flags], minlength=values.shape[0])
    rate = taken / sizes
    return rate[inverse[m.flags]]


@dataclass
class MitigationReport:
    unweighted_estimate: float
    weighted_estimate: float
    true_mean: float | None
    bias_reduction_pct: float | None
    weights_summary: dict
    model: dict | None
    n: int
    N: int

    @property
    def unweighted_error(self) -> float | None:
        return None if self.true_mean is None else self.unweighted_estimate - self.true_mean

    @property
    def weighted_error(self) -> float | None:
        return None if self.true_mean is None else self.weighted_estimate - self.true_mean

    def to_dict(self) -> dict:
        return {
            "unweighted_estimate": self.unweighted_estimate,
            "weighted_estimate": self.weighted_estimate,
            "true_mean": self.true_mean,
            "unweighted_error": self.unweighted_error,
            "weighted_error": self.weighted_error,
            "bias_reduction_pct": self.bias_reduction_pct,
            "weights_summary": self.weights_summary,
            "model": self.model,
            "n": self.n,
            "N": self.N,
        }


def _reduction_pct(unweighted_err: float, weighted_err: float) -> float | None:
    if unweighted_err == 0.0:
        return 0.0 if weighted_err == 0.0 else None
    return 100.0 * (1.0 - abs(weighted_err) / abs(unweighted_err))


def evaluate_weights(
    pop: Population,
    m: SampleMembership,
    probs,
    normalization: Normalization = "hajek",
    cap: float | None = None,
    true_mean: float | None = None,
    model: PropensityModel | None = None,
) -> MitigationReport:
    """Compare unweighted and weighted sample means given inclusion probabilities of the sampled units."""
    m.check_against(pop)
    if m.n == 0:
        raise PopulationError("empty sample")
    y = pop.y[m.flags]
    ws = weights_from_propensities(probs, normalization=normalization, cap=cap)
    if normalization == "horvitz_thompson":
        weighted = ht_total(y, ws) / pop.N
    else:
        weighted = weighted_mean(y, ws)
    unweighted = math.fsum(y) / y.shape[0]
    reduction = None
    if true_mean is not None:
        reduction = _reduction_pct(unweighted - true_mean, weighted - true_mean)
    return MitigationReport(
        unweighted_estimate=unweighted,
        weighted_estimate=weighted,
        true_mean=true_mean,
        bias_reduction_pct=reduction,
        weights_summary=ws.summary(),
        model=None if model is None else model.to_dict(),
        n=m.n,
        N=pop.N,
    )


def evaluate_mitigation(
    pop: Population,
    m: SampleMembership,
    model: PropensityModel,
    normalization: Normalization = "hajek",
    cap: float | None = None,
    true_mean: float | None = None,
) -> MitigationReport:
    """Weight the sample by ``model``'s fitted propensities and report the shift.

    The bias reduction is only stated when ``true_mean`` is supplied.
    """
    probs = model.predict(pop)[m.flags]
    return evaluate_weights(
        pop, m, probs, normalization=normalization, cap=cap, true_mean=true_mean, model=model
    )


def population_truth(pop: Population) -> float:
    return population_stats(pop)[1]
