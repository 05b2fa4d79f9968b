"""
Influence functions and robust scale estimators.

psi functions
-------------
huber_psi        - classical Huber psi, clipping at +/- c.
asym_huber_psi   - skewed Huber psi with window (c, gamma); gamma=1 is Huber.
mq_psi           - M-quantile psi, 2 * huber_psi * (q or 1-q).

Scale estimators
----------------
mad_scale        - 1.4826 * median(|r|) of already centred residuals.
qn_scale         - Rousseeuw-Croux Qn from pairwise absolute differences.

All functions are vectorised over numpy arrays and pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import stats

from .exceptions import ZeroScaleError

MAD_CONSTANT = 1.4826
QN_CONSTANT = 2.2219

SCALE_KINDS = ("mad", "qn")


@dataclass(frozen=True)
class HuberConfig:
    c: float = 1.345

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"Huber constant must be positive, got {self.c}")


@dataclass(frozen=True)
class AsymHuberConfig:
    c: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"Huber constant must be positive, got {self.c}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class RobustScale:
    kind: str
    value: float

    def __float__(self):
        return float(self.value)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def huber_psi(r, c):
    """Huber psi: ``r`` clipped to ``[-c, c]``."""
    return _out(np.clip(np.asarray(r, dtype=float), -c, c))


def asym_huber_psi(r, c, gamma=1.0):
    """
    Asymmetric Huber psi with truncation window ``c`` and skewness ``gamma``.

    Negative residuals have slope ``2 / (gamma**2 + 1)`` and are floored at
    ``-c`` times that slope; non-negative residuals have slope
    ``2 * gamma**2 / (gamma**2 + 1)`` and are capped at ``c`` times that slope.
    ``gamma > 1`` widens the right side of the window, ``gamma < 1`` the left.

    Parameters
    ----------
    r : array_like
        Standardised residuals.
    c : float
        Truncation half-width, ``c > 0`` (``np.inf`` disables clipping).
    gamma : float
        Skewness, ``gamma > 0``.

    Returns
    -------
    float or ndarray
    """
    r = np.asarray(r, dtype=float)
    if gamma == 1.0:
        return _out(np.clip(r, -c, c))
    g2 = gamma * gamma
    lo = 2.0 / (g2 + 1.0)
    hi = 2.0 * g2 / (g2 + 1.0)
    out = np.where(r < 0, lo * np.maximum(r, -c), hi * np.minimum(r, c))
    return _out(out)


def mq_psi(r, c, q):
    """M-quantile psi: ``2 * huber_psi(r) * (q if r > 0 else 1 - q)``."""
    r = np.asarray(r, dtype=float)
    return _out(2.0 * np.clip(r, -c, c) * np.where(r > 0, q, 1.0 - q))


def huber_weights(r, c):
    # psi(r)/r with the limit 1 at r = 0
    r = np.abs(np.asarray(r, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(r <= c, 1.0, c / r)
    return w


def huber_k2(c):
    """E[psi_c(Z)^2] for standard normal Z (consistency factor)."""
    if not np.isfinite(c):
        return 1.0
    phi = stats.norm.pdf(c)
    tail = stats.norm.sf(c)
    return float(1.0 - 2.0 * tail - 2.0 * c * phi + 2.0 * c * c * tail)


def gamma_to_q(gamma):
    """Quantile index equivalent to skewness ``gamma``: ``g^2 / (g^2 + 1)``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    g2 = gamma * gamma
    return _out(g2 / (g2 + 1.0))


def q_to_gamma(q):
    """Inverse of :func:`gamma_to_q`."""
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("q must lie in (0, 1)")
    return _out(np.sqrt(q / (1.0 - q)))


def _checked(kind, value):
    if not np.isfinite(value) or value <= 0:
        raise ZeroScaleError(f"{kind} scale of residuals is {value}; cannot standardise")
    return RobustScale(kind, float(value))


def mad_scale(residuals):
    """``1.4826 * median(|r|)``; residuals are assumed centred already."""
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size < 2:
        raise ValueError("need at least two residuals for a scale estimate")
    return _checked("mad", MAD_CONSTANT * np.median(np.abs(r)))


def qn_scale(residuals):
    """
    Rousseeuw-Croux Qn scale.

    The k-th order statistic of the ``n(n-1)/2`` pairwise absolute differences,
    ``k = C(h, 2)`` with ``h = n // 2 + 1``, times 2.2219. Location free.
    Memory is quadratic in ``n``.
    """
    r = np.asarray(residuals, dtype=float).ravel()
    n = r.size
    if n < 2:
        raise ValueError("need at least two residuals for a scale estimate")
    h = n // 2 + 1
    k = comb(h, 2)
    iu = np.triu_indices(n, 1)
    diffs = np.abs(r[iu[0]] - r[iu[1]])
    kth = np.partition(diffs, k - 1)[k - 1]
    return _checked("qn", QN_CONSTANT * kth)


def robust_scale(residuals, kind="qn"):
    if kind == "mad":
        return mad_scale(residuals)
    if kind == "qn":
        return qn_scale(residuals)
    raise ValueError(f"unknown scale kind {kind!r}; expected one of {SCALE_KINDS}")


def bounded_terms(residuals, c, gamma=1.0, scale="qn", w=None):
    """
    Calibration contributions ``w * psi_{c,gamma}(r / w)``.

    ``w`` is the robust scale of ``residuals`` (of kind ``scale``) unless
    given. With ``c = inf`` and ``gamma = 1`` the residuals pass through
    unchanged. All-zero residuals give zero contributions without a scale;
    an estimated scale of zero (more than half the residuals tied) gives the
    zero-scale limit, which is also all zeros.

    Returns
    -------
    terms : ndarray
    w : float or None
        The scale used (None when no standardisation happened).
    """
    r = np.asarray(residuals, dtype=float)
    if not np.isfinite(c) and gamma == 1.0:
        return r.copy(), None
    if r.size and not np.any(r):
        return np.zeros_like(r), None
    if w is None:
        try:
            w = float(robust_scale(r, scale))
        except ZeroScaleError:
            # w * psi(r / w) -> 0 as w -> 0 for every r
            return np.zeros_like(r), 0.0
    elif not w > 0:
        raise ZeroScaleError(f"calibration scale must be positive, got {w}")
    return w * asym_huber_psi(r / w, c, gamma), w
