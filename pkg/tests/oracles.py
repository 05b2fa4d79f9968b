"""
Independent reference implementations used by the tests.

Everything here is written with plain Python loops over replicated units,
without the mass bookkeeping of the library.
"""

from itertools import combinations
from math import comb


def qn(values):
    h = len(values) // 2 + 1
    diffs = sorted(abs(a - b) for a, b in combinations(values, 2))
    return 2.2219 * diffs[comb(h, 2) - 1]


def mad(values):
    a = sorted(abs(v) for v in values)
    m = len(a) // 2
    med = a[m] if len(a) % 2 else (a[m - 1] + a[m]) / 2
    return 1.4826 * med


def psi(r, c, gamma=1.0):
    lo = 2 / (gamma ** 2 + 1)
    hi = 2 * gamma ** 2 / (gamma ** 2 + 1)
    if r <= -c:
        return -c * lo
    if r < 0:
        return lo * r
    if r < c:
        return hi * r
    return c * hi


def bounded(resid, c, gamma, scale="qn", w=None):
    if c == float("inf") and gamma == 1.0:
        return list(resid)
    if all(r == 0 for r in resid):
        return [0.0] * len(resid)
    if w is None:
        w = qn(resid) if scale == "qn" else mad(resid)
    return [w * psi(r / w, c, gamma) for r in resid]


class IndicatorCdf:
    """Replicated-unit CDF: ``F(t) = #{v <= t} / len(values)`` (or a given denominator)."""

    def __init__(self, weighted_values):
        # list of (value, count_numerator, denominator)
        self.items = weighted_values

    def __call__(self, t):
        total = 0.0
        for v, num, den in self.items:
            if v <= t:
                total += num / den
        return total

    def support(self):
        return sorted({v for v, _, _ in self.items})


def naive(y, pred, N):
    return IndicatorCdf([(v, 1, N) for v in list(y) + list(pred)])


def cd(y, fitted, pred, N, terms=None):
    n = len(y)
    res = [yi - fi for yi, fi in zip(y, fitted)] if terms is None else terms
    items = [(v, 1, N) for v in y]
    for k in pred:
        for e in res:
            items.append((k + e, 1, N * n))
    return IndicatorCdf(items)


def bc(y, fitted, pred, N, terms=None):
    n = len(y)
    res = [yi - fi for yi, fi in zip(y, fitted)] if terms is None else terms
    den = n * (N - n + 1)
    values = list(y) + [k + e for k in pred for e in res]
    return IndicatorCdf([(v, 1, den) for v in values])


def full_bc(y, pred, N, pooled_terms):
    den = len(y) + len(pooled_terms) * (N - len(y))
    values = list(y) + [k + e for k in pred for e in pooled_terms]
    return IndicatorCdf([(v, 1, den) for v in values])


def gini_equal_mass(values):
    """Gini ``2 I / mu - 1`` with ``F(y_(i)) = i / N`` on replicated units."""
    v = sorted(values)
    N = len(v)
    mu = sum(v) / N
    I = sum(x * (i + 1) / N for i, x in enumerate(v)) / N
    return 2 * I / mu - 1


def pseudo_values_sorted(values):
    """``z_(i) = (1/N) sum_{h >= i} y_(h) + (i/N) y_(i)`` on the ascending sort."""
    v = sorted(values)
    N = len(v)
    return [sum(v[i:]) / N + (i + 1) / N * v[i] for i in range(N)]


def z_at(y, values):
    """``(1/N) sum_{v >= y} v + y #{v <= y} / N`` against equal-mass ``values``."""
    N = len(values)
    return sum(v for v in values if v >= y) / N + y * sum(1 for v in values if v <= y) / N


def if_gini(y, fitted, pred, c, gamma, scale="qn"):
    """IF-calibrated Gini of one area written out term by term."""
    n, N = len(y), len(y) + len(pred)
    ytil = list(y) + list(pred)
    mu = sum(ytil) / N
    T = gini_equal_mass(ytil)
    z_obs = [z_at(v, ytil) for v in y]
    z_pred = [z_at(v, ytil) for v in pred]
    yhat = list(fitted) + list(pred)
    zeta = [z_at(v, ytil) - z_at(f, yhat) for v, f in zip(y, fitted)]
    corr = (N - n) / n * sum(bounded(zeta, c, gamma, scale))
    return -T - 2 + 2 / mu * (sum(z_obs) + sum(z_pred) + corr) / N
