"""
Data-driven choice of the calibration constants.

``estimate_gamma``
    Closed-form skewness estimate ``sqrt(n_minus / n_plus)`` from the signs of
    the residuals of each area (or of the pooled residuals).
``bootstrap_tune``
    Residual bootstrap over a (c, gamma) mesh; picks, per area, the pair with
    the smallest bootstrap relative MSE.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EstimationError, SAEError
from .psi import bounded_terms

log = logging.getLogger(__name__)

GAMMA_CLAMP = (0.2, 5.0)
DEFAULT_C_GRID = (1.0, 2.0, 3.0)
DEFAULT_GAMMA_GRID = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)


@dataclass
class GammaEstimate:
    per_area: dict
    pooled: float
    flags: dict = field(default_factory=dict)


def _center(r, centering):
    if centering == "none":
        return r
    if centering == "mean":
        return r - r.mean()
    if centering == "median":
        return r - np.median(r)
    raise ValueError(f"unknown centering {centering!r}")


def _gamma_hat(r):
    """sqrt(n-/n+) with exact zeros split evenly; returns (gamma, flags)."""
    zeros = np.count_nonzero(r == 0)
    n_minus = np.count_nonzero(r < 0) + 0.5 * zeros
    n_plus = np.count_nonzero(r > 0) + 0.5 * zeros
    lo, hi = GAMMA_CLAMP
    if n_plus == 0:
        return (hi, ["gamma_clamped"]) if n_minus else (1.0, [])
    g = float(np.sqrt(n_minus / n_plus))
    if g < lo or g > hi:
        return float(np.clip(g, lo, hi)), ["gamma_clamped"]
    return g, []


def estimate_gamma(residuals, centering="none"):
    """
    Skewness of the calibration window from residual signs.

    Parameters
    ----------
    residuals : dict
        area id -> residual vector (non-empty).
    centering : {"none", "mean", "median"}
        Shift applied to each area block before counting signs. Robust-fit
        residuals are already centred by the fit; median centring forces
        ``n_minus == n_plus``.

    Returns
    -------
    GammaEstimate
        Per-area values, the pooled value over the concatenated centred
        blocks, and ``gamma_clamped`` flags where the [0.2, 5] clamp acted.
    """
    per_area, flags, blocks = {}, {}, []
    for a, r in residuals.items():
        r = np.asarray(r, dtype=float)
        if r.size == 0:
            raise EstimationError(f"area {a} has no residuals")
        r = _center(r, centering)
        blocks.append(r)
        per_area[a], f = _gamma_hat(r)
        if f:
            flags[a] = f
    pooled, f = _gamma_hat(np.concatenate(blocks)) if blocks else (1.0, [])
    if f:
        flags["pooled"] = f
    return GammaEstimate(per_area, pooled, flags)


# ---------------------------------------------------------------------------
# bootstrap


@dataclass
class TuningResult:
    grid: list
    B: int
    c2: float
    surfaces: dict  # (c, gamma) -> {area: (rrmse, bias)}
    chosen: dict  # area -> (c, gamma)
    n_dropped: int = 0
    excluded: dict = field(default_factory=dict)  # area -> reason

    def rrmse_root(self, cell, area):
        return float(np.sqrt(self.surfaces[cell][area][0]))

    def rows(self):
        """Long-format rows ``(area, c, gamma, rrmse, bias, chosen, rrmse_root)``."""
        out = []
        areas = sorted({a for s in self.surfaces.values() for a in s})
        for a in areas:
            for cell in self.grid:
                if a not in self.surfaces[cell]:
                    continue
                ms, bias = self.surfaces[cell][a]
                out.append((a, cell[0], cell[1], ms, bias,
                            int(self.chosen.get(a) == cell), float(np.sqrt(ms))))
        return out

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["area_id", "c", "gamma", "rrmse", "bias", "chosen", "rrmse_root"])
            for a, c, g, ms, bias, ch, root in self.rows():
                w.writerow([a, repr(float(c)), repr(float(g)), repr(float(ms)),
                            repr(float(bias)), ch, repr(root)])


def make_grid(c_values=DEFAULT_C_GRID, gamma_values=DEFAULT_GAMMA_GRID):
    return [(float(c), float(g)) for c in c_values for g in gamma_values]


def winsorize_residuals(resid, c2, w=None):
    """``w * psi_{c2,1}(e / w)`` with ``w = 1.4826 median|e|`` unless given."""
    terms, _ = bounded_terms(resid, c2, 1.0, "mad", w=w)
    return terms


def bootstrap_replicates(model, sample, population, c2, B, seed, refit="full"):
    """
    Yield ``(b, preds)``: bootstrap area predictions for replicate ``b``.

    Each replicate resamples the winsorised residuals within each area,
    rebuilds ``y* = yhat + e*``, refits, and pairs the original observed
    outcomes with the refitted predictions and bootstrap residuals. Failed
    refits yield ``preds = None``.
    """
    from .fit import AreaPrediction, area_predictions, fit_reblup, refit_fixed_variance

    orig = area_predictions(model, sample, population, sample.area_ids)
    wins = {a: winsorize_residuals(ap.resid, c2) for a, ap in orig.items()}
    fitted_all = np.empty(len(sample))
    for a, ap in orig.items():
        fitted_all[sample.rows(a)] = ap.fitted
    streams = np.random.SeedSequence(seed).spawn(B)
    for b, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        ystar = fitted_all.copy()
        for a in sample.area_ids:
            rows = sample.rows(a)
            pool = wins[int(a)]
            ystar[rows] += pool[rng.integers(0, pool.size, rows.size)]
        boot = sample.replace_y(ystar)
        try:
            if refit == "full":
                m = fit_reblup(boot, model.fit_c)
            elif refit == "approx":
                m = refit_fixed_variance(model, boot)
            else:
                raise ValueError(f"unknown refit mode {refit!r}")
            bp = area_predictions(m, boot, population, population.area_ids)
        except (SAEError, np.linalg.LinAlgError) as exc:
            log.debug("bootstrap replicate %d failed: %s", b, exc)
            yield b, None
            continue
        preds = {}
        for a, ap in bp.items():
            y_orig = orig[a].y if a in orig else ap.y
            preds[a] = AreaPrediction(a, y_orig, ap.fitted, ap.pred, ap.n_unsampled,
                                      resid=ap.y - ap.fitted)
        yield b, preds


def _cell_estimates(spec, preds):
    from .estimators import _full, _partial

    if spec.scope == "partial":
        return _partial(spec, {a: p for a, p in preds.items() if p.n > 0})
    sampled = {a: p for a, p in preds.items() if p.n > 0}
    return _full(spec, preds, sampled)


def bootstrap_tune(sample, population, model, grid=None, template=None, B=100,
                   c2=None, seed=0, refit="full", max_drop=0.10):
    """
    Choose (c, gamma) per area by a nonparametric residual bootstrap.

    For every cell of ``grid`` the calibrated estimator ``template`` (a
    :class:`~robust_sae.estimators.CalibrationSpec`; its ``c``/``gamma`` are
    overridden by the cell) is applied to the original data and to ``B``
    bootstrap populations. Residuals are winsorised at ``c2`` robust scales
    before resampling within areas. Bootstrap replicates are shared by all
    cells, so cell comparisons use common random numbers.

    Returns
    -------
    TuningResult
        ``surfaces[cell][area] = (rrmse, bias)`` where ``rrmse`` is the mean
        squared relative error (its root is ``TuningResult.rrmse_root``);
        ``chosen[area]`` is the cell with the smallest ``rrmse``.
    """
    from .estimators import CalibrationSpec

    grid = make_grid() if grid is None else [(float(c), float(g)) for c, g in grid]
    if not grid:
        raise EstimationError("empty tuning grid")
    if B < 1:
        raise ValueError("B must be at least 1")
    cmax = max(c for c, _ in grid)
    c2 = cmax + 1.0 if c2 is None else float(c2)
    if not c2 > cmax:
        raise ValueError(f"c2={c2} must exceed every grid c (max {cmax})")
    template = CalibrationSpec("abc") if template is None else template
    if template.method not in ("abc", "if-abc", "sbc", "if-sbc"):
        raise ValueError("bootstrap tuning needs an sbc/abc-type estimator")
    specs = {cell: template.with_(method=template.method.replace("sbc", "abc"),
                                  c=cell[0], gamma=cell[1]) for cell in grid}

    orig_preds = {int(a): ap for a, ap in
                  _area_preds(model, sample, population).items()}
    original = {cell: {a: e.gini for a, e in _cell_estimates(spec, orig_preds).items()}
                for cell, spec in specs.items()}

    sq = {cell: {} for cell in grid}
    lin = {cell: {} for cell in grid}
    dropped = used = 0
    for b, preds in bootstrap_replicates(model, sample, population, c2, B, seed, refit):
        if preds is None:
            dropped += 1
            continue
        try:
            boot = {cell: _cell_estimates(spec, preds) for cell, spec in specs.items()}
        except (SAEError, np.linalg.LinAlgError):
            dropped += 1
            continue
        used += 1
        for cell in grid:
            for a, g0 in original[cell].items():
                if g0 == 0 or a not in boot[cell]:
                    continue
                rel = (boot[cell][a].gini - g0) / g0
                sq[cell][a] = sq[cell].get(a, 0.0) + rel * rel
                lin[cell][a] = lin[cell].get(a, 0.0) + rel
    if dropped > max_drop * B:
        raise EstimationError(f"{dropped} of {B} bootstrap replicates failed")
    if used == 0:
        raise EstimationError("no usable bootstrap replicates")

    excluded = {}
    surfaces = {cell: {} for cell in grid}
    for cell in grid:
        for a, g0 in original[cell].items():
            if g0 == 0:
                excluded[a] = "zero original estimate"
                continue
            surfaces[cell][a] = (sq[cell][a] / used, lin[cell][a] / used)
    chosen = {}
    for a in sorted({a for s in surfaces.values() for a in s}):
        if a in excluded:
            continue
        cells = [cell for cell in grid if a in surfaces[cell]]
        chosen[a] = min(cells, key=lambda cell: surfaces[cell][a][0])
    return TuningResult(grid, B, c2, surfaces, chosen, dropped, excluded)


def _area_preds(model, sample, population):
    from .fit import area_predictions

    return area_predictions(model, sample, population, population.area_ids)
