"""Area-level Gini estimation for a chosen calibration method and scope."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import cdf as _cdf
from . import gini as _gini
from .exceptions import EstimationError
from .fit import area_predictions
from .tuning import estimate_gamma

CDF_METHODS = _cdf.CDF_METHODS
IF_METHODS = ("if-sbc", "if-abc")
METHODS = CDF_METHODS + IF_METHODS
SCOPES = ("partial", "full")
FULL_METHODS = ("naive", "bc", "sbc", "abc") + IF_METHODS

# rule-of-thumb truncation constants
DEFAULT_C = {"wr": 3.0, "sbc": 3.0, "abc": 3.0, "if-sbc": 2.0, "if-abc": 2.0}


@dataclass(frozen=True)
class CalibrationSpec:
    """
    How to turn a fitted model into area Gini estimates.

    ``c`` and ``gamma`` are a number (shared) or a mapping area -> value.
    ``gamma="auto"`` derives it from the residuals (pseudo-residuals for
    IF methods): per area in partial scope, pooled in full scope. Methods
    other than ``abc``/``if-abc`` always use ``gamma = 1``.

    The automatic value is ``sqrt(n_plus / n_minus)``, the reciprocal of
    :func:`~robust_sae.tuning.estimate_gamma`. The sign-count estimator is
    parametrised so that ``gamma > 1`` means a heavier left side, whereas
    ``psi_{c,gamma}`` widens its right window for ``gamma > 1``; taking the
    reciprocal makes a right-heavy residual set widen the right window.
    """

    method: str = "abc"
    c: object = None
    gamma: object = 1.0
    scale: str = "qn"
    scope: str = "partial"
    centering: str = "none"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.scale not in ("qn", "mad"):
            raise ValueError(f"unknown scale {self.scale!r}; expected qn or mad")
        if self.centering not in ("none", "mean", "median"):
            raise ValueError(f"unknown centering {self.centering!r}")
        if self.scope == "full" and self.method not in FULL_METHODS:
            raise ValueError(f"method {self.method!r} has no full-calibration form")
        if self.c is None:
            object.__setattr__(self, "c", DEFAULT_C.get(self.method, np.inf))
        if self.method not in ("abc", "if-abc"):
            object.__setattr__(self, "gamma", 1.0)
        for name in ("c", "gamma"):
            v = getattr(self, name)
            if isinstance(v, dict):
                if any(not x > 0 for x in v.values()):
                    raise ValueError(f"{name} values must be positive")
            elif not (v == "auto" and name == "gamma") and not float(v) > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")

    def with_(self, **kw):
        return replace(self, **kw)

    @property
    def is_if(self):
        return self.method in IF_METHODS


@dataclass
class AreaEstimate:
    area_id: int
    gini: float
    n: int
    N: int
    c: float
    gamma: float
    flags: list = field(default_factory=list)


def _pick(value, area_id):
    if isinstance(value, dict):
        if area_id not in value:
            raise EstimationError(f"no tuning constant for area {area_id}")
        return float(value[area_id])
    return float(value)


def _partial_gamma(spec, preds):
    if spec.gamma != "auto":
        return {}, {}
    res = {}
    for a, ap in preds.items():
        if ap.n == 0:
            continue
        res[a] = _gini.pseudo_residuals(ap) if spec.is_if else ap.resid
    est = estimate_gamma(res, centering=spec.centering)
    return {a: psi_gamma(g) for a, g in est.per_area.items()}, est.flags


def psi_gamma(density_gamma):
    """Window skewness of ``psi`` matching a sign-count estimate."""
    return 1.0 / density_gamma


def estimate_ginis(model, sample, population, spec: CalibrationSpec, areas=None):
    """
    Gini estimates for the population areas (or ``areas``).

    Partial scope needs every requested area to be sampled; full scope
    covers out-of-sample areas too.

    Returns
    -------
    dict
        area id -> :class:`AreaEstimate`; calibrated values are not clamped
        and carry an ``out_of_range`` flag outside [0, 1].
    """
    ids = population.area_ids if areas is None else [int(a) for a in areas]
    preds = area_predictions(model, sample, population, ids)
    if spec.scope == "partial":
        missing = [a for a, ap in preds.items() if ap.n == 0 and spec.method != "naive"]
        if missing:
            raise EstimationError(
                f"partial calibration needs sampled areas; unsampled: {missing}")
        return _partial(spec, preds)
    # pooled quantities use every sampled area, not only the requested ones
    all_preds = area_predictions(model, sample, population, sample.area_ids)
    return _full(spec, preds, all_preds)


def _finish(a, g, ap, c, gamma, flags):
    flags = list(flags)
    if not 0.0 <= g <= 1.0:
        flags.append("out_of_range")
    return AreaEstimate(a, float(g), ap.n, ap.N, c, gamma, flags)


def _cdf_gini(cdf, flags):
    """Gini of a calibrated CDF; negative support points are floored at 0."""
    if cdf.points[0] < 0:
        flags.append("negative_support_floored")
        cdf = _cdf.WeightedCdf.from_masses(np.maximum(cdf.points, 0.0), cdf.weights,
                                           cdf.sq_weights)
    return _cdf.gini_from_cdf(cdf)


def _partial(spec, preds):
    gammas, gflags = _partial_gamma(spec, preds)
    out = {}
    for a, ap in preds.items():
        c = _pick(spec.c, a)
        gamma = gammas[a] if spec.gamma == "auto" else _pick(spec.gamma, a)
        flags = list(gflags.get(a, []))
        if spec.is_if:
            g = _gini.if_calibrated_gini(ap, c, gamma, spec.scale)
        else:
            g = _cdf_gini(_cdf.area_cdf(ap, spec.method, c, gamma, spec.scale), flags)
        out[a] = _finish(a, g, ap, c, gamma, flags)
    return out


def _full(spec, preds, all_preds):
    from .psi import robust_scale

    if spec.is_if:
        pooled = np.concatenate([_gini.pseudo_residuals(ap) for ap in all_preds.values()])
    else:
        pooled = np.concatenate([ap.resid for ap in all_preds.values()])
    flags = []
    if spec.gamma == "auto":
        est = estimate_gamma({0: pooled}, centering=spec.centering)
        gamma = psi_gamma(est.pooled)
        flags = est.flags.get(0, [])
    else:
        gamma = float(spec.gamma) if not isinstance(spec.gamma, dict) else None
    c = float(spec.c) if not isinstance(spec.c, dict) else None
    if c is None or gamma is None:
        raise EstimationError("full calibration uses one (c, gamma) for all areas")
    w = None
    if np.isfinite(c) and np.any(pooled):
        w = float(robust_scale(pooled, spec.scale))
    out = {}
    for a, ap in preds.items():
        aflags = list(flags)
        if spec.method == "naive":
            g = _cdf_gini(_cdf.cdf_naive(ap), aflags)
        elif spec.is_if:
            g = _gini.if_calibrated_gini_full(ap, pooled, c, gamma, spec.scale, w=w)
        else:
            cc = np.inf if spec.method == "bc" else c
            ww = None if spec.method == "bc" else w
            g = _cdf_gini(_cdf.cdf_full_abc(ap, pooled, cc, gamma, spec.scale, w=ww), aflags)
        out[a] = _finish(a, g, ap, c, gamma, aflags)
    return out


def estimate_cdfs(model, sample, population, spec: CalibrationSpec, estimates):
    """
    Calibrated CDFs behind CDF-type ``estimates`` (same ``c``/``gamma``).

    Returns area id -> :class:`~robust_sae.cdf.WeightedCdf`.
    """
    if spec.is_if:
        raise EstimationError("IF methods do not produce a distribution function")
    preds = area_predictions(model, sample, population, list(estimates))
    out = {}
    if spec.scope == "partial":
        for a, ap in preds.items():
            e = estimates[a]
            out[a] = _cdf.area_cdf(ap, spec.method, e.c, e.gamma, spec.scale)
        return out
    from .psi import robust_scale

    all_preds = area_predictions(model, sample, population, sample.area_ids)
    pooled = np.concatenate([ap.resid for ap in all_preds.values()])
    for a, ap in preds.items():
        e = estimates[a]
        if spec.method == "naive":
            out[a] = _cdf.cdf_naive(ap)
            continue
        c = np.inf if spec.method == "bc" else e.c
        w = float(robust_scale(pooled, spec.scale)) if np.isfinite(c) and np.any(pooled) else None
        out[a] = _cdf.cdf_full_abc(ap, pooled, c, e.gamma, spec.scale, w=w)
    return out
