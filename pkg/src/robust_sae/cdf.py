"""
Area-level estimators of the finite-population distribution function.

Every estimator returns a :class:`WeightedCdf`: sorted support points with
probability masses. The predictive grids ``yhat_k + term_i`` are represented
by one support point per grid cell with its mass, never by replicating units.

==========  =========================================================
naive       plug-in: observed outcomes plus point predictions
cd          predictions shifted by every raw residual
wr          predictions shifted by Huber-bounded residuals
bc          predictive distribution, denominator n (N - n + 1)
sbc         ``bc`` with Huber-bounded residuals
abc         ``bc`` with asymmetric-Huber-bounded residuals
full_abc    ``abc`` using the pooled residuals of all sampled areas
==========  =========================================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EstimationError
from .fit import AreaPrediction
from .psi import bounded_terms

CDF_METHODS = ("naive", "cd", "wr", "bc", "sbc", "abc")


@dataclass(frozen=True, eq=False)
class WeightedCdf:
    """
    Right-continuous step CDF with strictly increasing support.

    ``sq_weights`` holds, per support point, the sum of squared masses of the
    atoms merged into it. Distribution values ignore it; the Gini uses it so
    that merging tied atoms does not change the estimate.
    """

    points: np.ndarray
    weights: np.ndarray
    sq_weights: np.ndarray | None = None

    @classmethod
    def from_masses(cls, points, weights, sq_weights=None):
        """Sort, merge tied support points and check total mass."""
        points = np.asarray(points, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if points.shape != weights.shape:
            raise ValueError("points and weights differ in length")
        if points.size == 0:
            raise EstimationError("empty distribution")
        if np.any(weights < 0):
            raise ValueError("negative probability mass")
        sq = weights * weights if sq_weights is None else np.asarray(sq_weights, dtype=float)
        uniq, inv = np.unique(points, return_inverse=True)
        if uniq.size != points.size:
            weights = np.bincount(inv, weights)
            sq = np.bincount(inv, sq)
        else:
            order = np.argsort(points, kind="stable")
            weights, sq = weights[order], sq[order]
        total = weights.sum()
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"masses sum to {total!r}, not 1")
        return cls(uniq, weights, sq)

    def __call__(self, t):
        cum = np.cumsum(self.weights)
        idx = np.searchsorted(self.points, np.asarray(t, dtype=float), side="right") - 1
        out = np.where(idx >= 0, cum[np.maximum(idx, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def cumulative(self):
        return np.cumsum(self.weights)

    def mean(self):
        return float(self.points @ self.weights)

    def __len__(self):
        return self.points.size


def gini_sorted(points, weights):
    """
    Gini ``2 I / mu - 1`` of a discrete distribution with ascending ``points``.

    ``I = sum_i t_i w_i F_i`` with ``F_i`` the cumulative mass up to and
    including point ``i``; for ``N`` equal masses this is ``F(y_(i)) = i / N``.
    """
    if points.size and points[0] < 0:
        raise EstimationError("Gini needs non-negative support")
    mu = float(points @ weights)
    if not mu > 0:
        raise EstimationError("Gini needs a positive mean")
    F = np.cumsum(weights)
    I = float(np.sum(points * weights * F))
    return 2.0 * I / mu - 1.0


def gini_from_cdf(cdf: WeightedCdf):
    """
    Gini coefficient of a weighted CDF (inclusive cumulative convention).

    A support point built from atoms ``w_1..w_k`` contributes as the atoms
    would separately, ``t (W F_before + (W^2 + sum w_i^2) / 2)``, which does
    not depend on the order of the tied atoms.
    """
    t, w = cdf.points, cdf.weights
    sq = w * w if cdf.sq_weights is None else cdf.sq_weights
    if t.size and t[0] < 0:
        raise EstimationError("Gini needs non-negative support")
    mu = float(t @ w)
    if not mu > 0:
        raise EstimationError("Gini needs a positive mean")
    before = np.cumsum(w) - w
    I = float(np.sum(t * (w * before + 0.5 * (w * w + sq))))
    return 2.0 * I / mu - 1.0


# ---------------------------------------------------------------------------
# estimators


def _need_sample(ap):
    if ap.n == 0:
        raise EstimationError(f"area {ap.area_id} has no sampled units; use full calibration")


def _grid(pred, terms):
    return (pred[:, None] + terms[None, :]).ravel()


def _assemble(ap, terms, denom, per_cell):
    pts = np.concatenate([ap.y, _grid(ap.pred, terms)])
    wts = np.concatenate([np.full(ap.n, 1.0 / denom),
                          np.full(ap.pred.size * terms.size, per_cell)])
    return WeightedCdf.from_masses(pts, wts)


def cdf_naive(ap: AreaPrediction):
    """Observed outcomes and point predictions, each a unit of mass ``1/N``."""
    if ap.N == 0:
        raise EstimationError("area without population units")
    pts = np.concatenate([ap.y, ap.pred])
    wts = np.concatenate([np.full(ap.n, 1.0 / ap.N), np.full(ap.pred.size, ap.pred_mass / ap.N)])
    return WeightedCdf.from_masses(pts, wts)


def cdf_cd(ap: AreaPrediction):
    """Each prediction shifted by every raw residual, averaged over residuals."""
    _need_sample(ap)
    return _assemble(ap, ap.resid, ap.N, ap.pred_mass / (ap.N * ap.n))


def cdf_wr(ap: AreaPrediction, c=3.0, scale="qn"):
    """As :func:`cdf_cd` with residuals bounded by the Huber psi."""
    _need_sample(ap)
    terms, _ = bounded_terms(ap.resid, c, 1.0, scale)
    return _assemble(ap, terms, ap.N, ap.pred_mass / (ap.N * ap.n))


def _bc_denominator(ap):
    return ap.n * (ap.N - ap.n + 1)


def cdf_bc(ap: AreaPrediction):
    """
    Predictive-distribution CDF: ``n`` observed units and the
    ``n (N - n)`` cells ``yhat_k + e_i``, each with mass ``1 / (n (N - n + 1))``.
    """
    _need_sample(ap)
    D = _bc_denominator(ap)
    return _assemble(ap, ap.resid, D, ap.pred_mass / D)


def cdf_sbc(ap: AreaPrediction, c=3.0, scale="qn"):
    """:func:`cdf_bc` with residuals replaced by ``w * huber_psi(e / w)``."""
    return cdf_abc(ap, c, 1.0, scale)


def cdf_abc(ap: AreaPrediction, c=3.0, gamma=1.0, scale="qn"):
    """:func:`cdf_bc` with residuals replaced by ``w * psi_{c,gamma}(e / w)``."""
    _need_sample(ap)
    terms, _ = bounded_terms(ap.resid, c, gamma, scale)
    D = _bc_denominator(ap)
    return _assemble(ap, terms, D, ap.pred_mass / D)


def cdf_full_abc(ap: AreaPrediction, pooled_resid, c=3.0, gamma=1.0, scale="qn", w=None):
    """
    Full calibration: the grid uses the pooled residuals of all sampled areas
    with one scale ``w`` and one ``(c, gamma)``. Valid for areas without
    sample, whose CDF is the grid alone.

    Parameters
    ----------
    ap : AreaPrediction
    pooled_resid : array_like
        Residuals of every sampled unit in every area (length ``n``).
    w : float, optional
        Pooled robust scale; computed from ``pooled_resid`` when omitted.
    """
    pooled = np.asarray(pooled_resid, dtype=float)
    if pooled.size == 0:
        raise EstimationError("no pooled residuals")
    terms, _ = bounded_terms(pooled, c, gamma, scale, w=w)
    D = ap.n + pooled.size * ap.n_unsampled
    return _assemble(ap, terms, D, ap.pred_mass / D)


def area_cdf(ap, method, c=3.0, gamma=1.0, scale="qn"):
    """Dispatch on a method name from :data:`CDF_METHODS` (partial scope)."""
    if method == "naive":
        return cdf_naive(ap)
    if method == "cd":
        return cdf_cd(ap)
    if method == "wr":
        return cdf_wr(ap, c, scale)
    if method == "bc":
        return cdf_bc(ap)
    if method == "sbc":
        return cdf_sbc(ap, c, scale)
    if method == "abc":
        return cdf_abc(ap, c, gamma, scale)
    raise ValueError(f"unknown CDF method {method!r}")
