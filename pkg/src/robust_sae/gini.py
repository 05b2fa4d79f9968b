"""
Gini estimation through influence-function linearisation.

The Gini functional ``T(F) = 2 I(F) / mu(F) - 1`` with
``I(F) = int t F(t) dF(t)`` is linear in the pseudo-values

    z(y) = int_{t >= y} t dF(t) + y F(y),

since ``T(F) = -T(F) - 2 + (2 / mu) int z dF``. Replacing ``F`` by the
distribution of observed outcomes and robust predictions, and adding a
bounded correction built from the pseudo-residuals ``z(y_i) - z(yhat_i)``,
gives the IF-SBC / IF-ABC estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cdf import gini_sorted
from .exceptions import EstimationError
from .fit import AreaPrediction
from .psi import bounded_terms


def empirical_gini(values):
    """Gini of equal-mass values with ``F(y_(i)) = i / N``."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EstimationError("empty vector")
    return gini_sorted(v, np.full(v.size, 1.0 / v.size))


def _sorted_dist(points, weights=None):
    points = np.asarray(points, dtype=float).ravel()
    if weights is None:
        weights = np.full(points.size, 1.0 / points.size)
    order = np.argsort(points, kind="stable")
    return points[order], np.asarray(weights, dtype=float).ravel()[order]


def _moments(t, w):
    mu = float(t @ w)
    if not mu > 0:
        raise EstimationError("functional needs a positive mean")
    I = float(np.sum(t * w * np.cumsum(w)))
    return mu, I


def z_function(y, points, weights=None):
    """
    Pseudo-value function of the distribution ``(points, weights)``,

        z(y) = sum_{t >= y} w t + y * sum_{t <= y} w,

    which at a support point equals its rank-based pseudo-value.
    """
    t, w = _sorted_dist(points, weights)
    y = np.asarray(y, dtype=float)
    upper = np.concatenate([np.cumsum((t * w)[::-1])[::-1], [0.0]])
    F = np.concatenate([[0.0], np.cumsum(w)])
    out = upper[np.searchsorted(t, y, side="left")] + y * F[np.searchsorted(t, y, side="right")]
    return float(out) if np.ndim(out) == 0 else out


def gini_influence(y, values, weights=None):
    """
    Influence function of the Gini at ``y`` against the empirical
    distribution of ``values``:

        2 / mu * (int_{t > y} t dF - I) + 2 y / mu * (F(y) - I / mu)

    This is the derivative for a new atom at ``y``; a tie with existing
    values is ordered after them.
    """
    t, w = _sorted_dist(values, weights)
    mu, I = _moments(t, w)
    y = np.asarray(y, dtype=float)
    upper = np.concatenate([np.cumsum((t * w)[::-1])[::-1], [0.0]])
    F = np.concatenate([[0.0], np.cumsum(w)])
    hi = np.searchsorted(t, y, side="right")
    tail = upper[hi]
    Fy = F[hi]
    out = 2.0 / mu * (tail - I) + 2.0 * y / mu * (Fy - I / mu)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class PseudoValues:
    """Pseudo-values on the ascending sort of the combined outcome vector."""

    z: np.ndarray
    sorted_values: np.ndarray
    weights: np.ndarray
    mu_tilde: float
    t_tilde: float


def pseudo_values(y_tilde, weights=None):
    """
    ``z_(i) = sum_{h >= i} w_h y_(h) + y_(i) * sum_{h <= i} w_h`` on the
    ascending sort; with equal masses ``1/N`` this is
    ``(1/N) sum_{h >= i} y_(h) + (i/N) y_(i)``.
    """
    t, w = _sorted_dist(y_tilde, weights)
    if t.size == 0:
        raise EstimationError("empty vector")
    mu, I = _moments(t, w)
    if t[0] < 0:
        raise EstimationError("Gini needs non-negative values")
    z = np.cumsum((t * w)[::-1])[::-1] + t * np.cumsum(w)
    return PseudoValues(z, t, w, mu, 2.0 * I / mu - 1.0)


# ---------------------------------------------------------------------------
# calibrated estimators


def combined_outcomes(ap: AreaPrediction):
    """Observed outcomes plus robust predictions with their masses."""
    pts = np.concatenate([ap.y, ap.pred])
    wts = np.concatenate([np.full(ap.n, 1.0 / ap.N), np.full(ap.pred.size, ap.pred_mass / ap.N)])
    return pts, wts


def fitted_outcomes(ap: AreaPrediction):
    """As :func:`combined_outcomes` with observed outcomes replaced by fitted values."""
    pts = np.concatenate([ap.fitted, ap.pred])
    wts = np.concatenate([np.full(ap.n, 1.0 / ap.N), np.full(ap.pred.size, ap.pred_mass / ap.N)])
    return pts, wts


def pseudo_residuals(ap: AreaPrediction):
    """
    ``zeta_i = z_i - zhat_i`` for the sampled units.

    ``z_i`` is the rank-based pseudo-value of ``y_i`` among the observed
    outcomes and predictions; ``zhat_i`` that of the fitted value ``yhat_i``
    among the fitted values and predictions, i.e. the same construction with
    every sampled outcome replaced by its fit.
    """
    if ap.n == 0:
        return np.empty(0)
    return z_function(ap.y, *combined_outcomes(ap)) - z_function(ap.fitted, *fitted_outcomes(ap))


def if_calibrated_gini(ap: AreaPrediction, c=2.0, gamma=1.0, scale="qn"):
    """
    IF-calibrated Gini of one area (partial calibration).

        T = -T~ - 2 + (2 / mu~) (1/N) [sum_s z_i + sum_r zhat_k
                                       + (N - n)/n sum_s w psi_{c,gamma}(zeta_i / w)]

    ``gamma = 1`` is IF-SBC, ``c = inf, gamma = 1`` leaves the raw
    pseudo-residual correction. The result is not clamped to [0, 1].
    """
    if ap.n == 0:
        raise EstimationError(f"area {ap.area_id} has no sampled units; use full calibration")
    pts, wts = combined_outcomes(ap)
    pv = pseudo_values(pts, wts)
    zeta = pseudo_residuals(ap)
    terms, _ = bounded_terms(zeta, c, gamma, scale)
    total = float(pv.z @ pv.weights)
    corr = (ap.N - ap.n) / (ap.n * ap.N) * float(np.sum(terms))
    return -pv.t_tilde - 2.0 + 2.0 / pv.mu_tilde * (total + corr)


def if_calibrated_gini_full(ap: AreaPrediction, pooled_zeta, c=2.0, gamma=1.0,
                            scale="qn", w=None):
    """
    Fully calibrated IF Gini: the correction averages the bounded
    pseudo-residuals of every sampled unit in every area (``pooled_zeta``,
    each computed against its own area's distribution) with one scale.
    Valid for areas without sample.
    """
    pooled = np.asarray(pooled_zeta, dtype=float)
    if pooled.size == 0:
        raise EstimationError("no pooled pseudo-residuals")
    pts, wts = combined_outcomes(ap)
    pv = pseudo_values(pts, wts)
    terms, _ = bounded_terms(pooled, c, gamma, scale, w=w)
    total = float(pv.z @ pv.weights)
    corr = ap.n_unsampled / (pooled.size * ap.N) * float(np.sum(terms))
    return -pv.t_tilde - 2.0 + 2.0 / pv.mu_tilde * (total + corr)


# ---------------------------------------------------------------------------
# generic linearised calibration


@dataclass(frozen=True)
class Linearized:
    """``T ~ offset + slope * int pseudo dF`` at a reference distribution."""

    offset: float
    slope: float
    total: float
    pseudo: object  # callable y -> pseudo-values


class GiniLinearization:
    """Gini through the pseudo-values ``z``: offset ``-T - 2``, slope ``2 / mu``."""

    def value(self, points, weights):
        t, w = _sorted_dist(points, weights)
        return gini_sorted(t, w)

    def linearize(self, points, weights):
        pv = pseudo_values(points, weights)
        t, w = pv.sorted_values, pv.weights
        return Linearized(-pv.t_tilde - 2.0, 2.0 / pv.mu_tilde, float(pv.z @ w),
                          lambda y: z_function(y, t, w))

    def pseudo_residuals(self, ap):
        return pseudo_residuals(ap)


class InfluenceLinearization:
    """
    Any functional given by its value and influence function on a discrete
    distribution: offset ``T``, slope 1, pseudo-values ``IF(y)``. Only the
    calibration term is added to the plug-in value.

    Parameters
    ----------
    value : callable (points, weights) -> float
    influence : callable (y, points, weights) -> array
    """

    def __init__(self, value, influence):
        self._value = value
        self._influence = influence

    def value(self, points, weights):
        return self._value(*_sorted_dist(points, weights))

    def linearize(self, points, weights):
        t, w = _sorted_dist(points, weights)
        T = self._value(t, w)
        # the plug-in value already carries the zeroth-order term
        return Linearized(T, 1.0, 0.0, lambda y: self._influence(y, t, w))

    def pseudo_residuals(self, ap):
        """``IF(y_i) - IF(yhat_i)`` against the observed-plus-predicted distribution."""
        t, w = _sorted_dist(*combined_outcomes(ap))
        return self._influence(ap.y, t, w) - self._influence(ap.fitted, t, w)


MEAN = InfluenceLinearization(
    lambda t, w: float(t @ w),
    lambda y, t, w: np.asarray(y, dtype=float) - float(t @ w),
)

GINI_IF = InfluenceLinearization(
    lambda t, w: gini_sorted(t, w),
    lambda y, t, w: gini_influence(y, t, w),
)

GINI = GiniLinearization()


def linearized_calibrate(functional, ap: AreaPrediction, c=2.0, gamma=1.0, scale="qn",
                         pooled_zeta=None, w=None):
    """
    Bias-calibrated estimate of ``functional`` for one area.

    The functional is linearised at the combined outcome distribution; the
    correction adds ``(N - n) / (n N)`` times the bounded pseudo-residual sum
    of the area (partial scope) or ``(N - n) / (n_pool N)`` times the pooled
    sum when ``pooled_zeta`` is given (full scope).
    """
    pts, wts = combined_outcomes(ap)
    lin = functional.linearize(pts, wts)
    if pooled_zeta is None:
        if ap.n == 0:
            raise EstimationError(f"area {ap.area_id} has no sampled units")
        zeta = functional.pseudo_residuals(ap)
        terms, _ = bounded_terms(zeta, c, gamma, scale)
        corr = (ap.N - ap.n) / (ap.n * ap.N) * float(np.sum(terms))
    else:
        pooled = np.asarray(pooled_zeta, dtype=float)
        terms, _ = bounded_terms(pooled, c, gamma, scale, w=w)
        corr = ap.n_unsampled / (pooled.size * ap.N) * float(np.sum(terms))
    return lin.offset + lin.slope * (lin.total + corr)
