"""Independent reference computations used by the tests.

Nothing here imports the package's statistics; correlations are done in
exact rational arithmetic straight from the definition.
"""

from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product
import math


def exact_rho(y, r):
    """Pearson correlation of two equal-length sequences, exact until the final sqrt."""
    N = len(y)
    ys = [Fraction(v) for v in y]
    s_r = sum(int(v) for v in r)
    s_y = sum(ys)
    s_ry = sum(b for a, b in zip(r, ys) if a)
    s_yy = sum(b * b for b in ys)
    cov = Fraction(s_ry, 1) / N - Fraction(s_r, N) * s_y / N
    vr = Fraction(s_r, N) - Fraction(s_r, N) ** 2
    vy = s_yy / N - (s_y / N) ** 2
    if vr == 0 or vy == 0:
        return None
    # sign * sqrt(cov^2 / (vr vy)) keeps the division exact
    return math.copysign(math.sqrt(cov * cov / (vr * vy)), cov) if cov != 0 else 0.0


def exact_error(y, r):
    N = len(y)
    n = sum(int(v) for v in r)
    ys = [Fraction(v) for v in y]
    return sum(b for a, b in zip(r, ys) if a) / n - sum(ys) / N


def all_memberships(N):
    """Every 0/1 inclusion vector of length N."""
    return product((0, 1), repeat=N)


def memberships_of_size(N, n):
    for idx in combinations(range(N), n):
        r = [0] * N
        for i in idx:
            r[i] = 1
        yield r


def neff_formula(rho, n, N):
    """n/(N-n)/rho^2 with no clamping, or None when it diverges."""
    if n == N or rho == 0:
        return None
    return Fraction(n, N - n) / Fraction(rho) ** 2


@lru_cache(maxsize=None)
def _rho_values(y, n):
    vals = {exact_rho(y, r) for r in memberships_of_size(len(y), n)}
    return tuple(sorted(v for v in vals if v is not None))


def rho_range_by_enumeration(y, n):
    vals = _rho_values(tuple(int(v) if float(v).is_integer() else v for v in y), n)
    return vals[0], vals[-1]


def best_rho_by_enumeration(y, n, target):
    """Realized rho of the size-n membership closest to target (ties: all returned)."""
    vals = _rho_values(tuple(int(v) if float(v).is_integer() else v for v in y), n)
    best = min(abs(v - target) for v in vals)
    return [v for v in vals if abs(abs(v - target) - best) < 1e-9]


def coarsen_by_hand(cells, y, r, k):
    """Dict from coarse (row, col) to (occupied, sampled) using plain loops."""
    blocks = {}
    for (row, col), yi, ri in zip(cells, y, r):
        key = (row // k, col // k)
        occ, smp = blocks.get(key, (0, 0))
        blocks[key] = (max(occ, int(yi)), max(smp, int(ri)))
    return blocks
