"""
Robust fitting of the nested-error model and area-level predictions.

Two fitters are provided:

``fit_reblup``
    Robust EBLUP. Fixed effects and the variance components solve the
    Huber-robustified maximum likelihood estimating equations of the model
    ``y_ij = x_ij' beta + u_j + e_ij``; area effects solve the robustified
    mixed-model (Fellner) equations given the variance components.
``fit_mq``
    M-quantile regression over a grid of quantile indices; each area is
    represented by the average quantile index of its sampled units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Population, Sample
from .exceptions import ConvergenceError, EstimationError, RankDeficientError
from .psi import HuberConfig, huber_k2, huber_weights

log = logging.getLogger(__name__)

DEFAULT_MQ_GRID = np.round(np.arange(1, 100) / 100.0, 2)


@dataclass(frozen=True, eq=False)
class FittedModel:
    """
    Result of a robust fit.

    For ``fit_kind == "reblup"`` predictions are ``x' beta + u[area]``; areas
    without sample use the median of the predicted area effects. For
    ``fit_kind == "mq"`` predictions use the area's M-quantile coefficients
    ``area_beta[area]``; areas without sample use the q = 0.5 plane, which is
    ``beta``.
    """

    beta: np.ndarray
    sigma_u: float
    sigma_e: float
    u: dict
    fit_kind: str = "reblup"
    fit_c: float = 1.345
    mq_theta: dict | None = None
    area_beta: dict | None = None
    n_iter: int = 0
    converged: bool = True
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def areas(self):
        return sorted(self.mq_theta if self.fit_kind == "mq" else self.u)

    def area_effect(self, area_id):
        """Predicted area effect; the median effect for out-of-sample areas."""
        area_id = int(area_id)
        if area_id in self.u:
            return self.u[area_id]
        if not self.u:
            return 0.0
        return float(np.median(list(self.u.values())))

    def coefficients(self, area_id):
        if self.fit_kind == "mq":
            return self.area_beta.get(int(area_id), self.beta)
        return self.beta

    def predict(self, X, area_id):
        """Point predictions for covariate rows ``X`` in ``area_id``."""
        X = np.asarray(X, dtype=float)
        if self.fit_kind == "mq":
            return X @ self.coefficients(area_id)
        return X @ self.beta + self.area_effect(area_id)


# ---------------------------------------------------------------------------
# REBLUP


def _codes(area):
    ids, codes = np.unique(area, return_inverse=True)
    return ids, codes


def _check_design(X):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError("design matrix does not have full column rank")


class _NestedV:
    """Inverse covariance of the nested-error model, applied blockwise."""

    def __init__(self, codes, n_g, se2, su2):
        self.codes = codes
        self.n_g = n_g
        self.a = 1.0 / se2
        self.b = su2 / (se2 * (se2 + n_g * su2))

    def apply(self, M):
        # V_j^{-1} = a I - b_j 1 1'
        if M.ndim == 1:
            gs = np.bincount(self.codes, M, minlength=self.n_g.size)
            return self.a * M - (self.b * gs)[self.codes]
        gs = np.stack([np.bincount(self.codes, col, minlength=self.n_g.size)
                       for col in M.T], axis=1)
        return self.a * M - (self.b[:, None] * gs)[self.codes]

    def trace_matrix(self):
        a, b, n = self.a, self.b, self.n_g
        s = a - b * n  # eigenvalue of V_j^{-1} along the ones vector
        ee = np.sum(n * a * a - 2 * a * b * n + b * b * n * n)
        eu = np.sum(n * s * s)
        uu = np.sum(n * n * s * s)
        return np.array([[ee, eu], [eu, uu]])


def _moment_start(y, X, codes, n_g):
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    e = y - X @ beta
    d = n_g.size
    gmean = np.bincount(codes, e) / n_g
    within = e - gmean[codes]
    dof = max(y.size - d, 1)
    se2 = float(within @ within) / dof
    su2 = max(0.0, float(np.var(gmean, ddof=1)) - se2 * float(np.mean(1.0 / n_g))) if d > 1 else 0.0
    return beta, se2, su2


def _beta_step(y, X, V, s, c, beta, tol, max_iter=100):
    for it in range(max_iter):
        r = (y - X @ beta) / s
        w = huber_weights(r, c)
        A = X.T @ V.apply(w[:, None] * X)
        rhs = X.T @ V.apply(w * y)
        new = np.linalg.solve(A, rhs)
        if np.max(np.abs(new - beta) / (1.0 + np.abs(beta))) <= tol:
            return new
        beta = new
    return beta


def _fellner(e, codes, n_g, se2, su2, c, tol, max_iter=200):
    d = n_g.size
    if su2 <= 0:
        return np.zeros(d), True
    se, su = np.sqrt(se2), np.sqrt(su2)
    u = np.bincount(codes, e) / n_g * (su2 / (su2 + se2 / n_g))
    for it in range(max_iter):
        w = huber_weights((e - u[codes]) / se, c)
        wu = huber_weights(u / su, c)
        new = np.bincount(codes, w * e, minlength=d) / (
            np.bincount(codes, w, minlength=d) + wu * se2 / su2)
        if np.max(np.abs(new - u)) <= tol * (1.0 + se):
            return new, True
        u = new
    return u, False


def fit_reblup(sample: Sample, fit_c=HuberConfig(), tol=1e-6, max_iter=200,
               strict=False):
    """
    Robust EBLUP fit of the nested-error model.

    Parameters
    ----------
    sample : Sample
        Sampled units; every area needs at least two units.
    fit_c : HuberConfig or float
        Huber constant of the estimating equations. Large values (1e6)
        reproduce classical ML / EBLUP.
    tol : float
        Convergence tolerance on the relative max-norm of parameter updates.
    max_iter : int
        Outer iterations (variance-component updates).
    strict : bool
        Raise :class:`ConvergenceError` instead of returning a model flagged
        ``converged=False``.

    Returns
    -------
    FittedModel
    """
    c = fit_c.c if isinstance(fit_c, HuberConfig) else float(fit_c)
    y, X = sample.y, sample.X
    ids, codes = _codes(sample.area)
    n_g = np.bincount(codes).astype(float)
    if np.any(n_g < 2):
        raise EstimationError("every sampled area needs at least two units")
    _check_design(X)
    K = huber_k2(c)

    beta, se2, su2 = _moment_start(y, X, codes, n_g)
    scale_y = max(float(np.max(np.abs(y))), 1.0)
    if se2 <= (1e-10 * scale_y) ** 2:
        log.debug("residual variance vanished; returning degenerate fit")
        u = np.bincount(codes, y - X @ beta) / n_g
        return FittedModel(beta, 0.0, 0.0, {int(a): float(v) for a, v in zip(ids, u)},
                           fit_kind="reblup", fit_c=c, n_iter=0, converged=True,
                           flags=("degenerate",))

    flags = set()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        V = _NestedV(codes, n_g, se2, su2)
        s = np.sqrt(se2 + su2)
        new_beta = _beta_step(y, X, V, s, c, beta, tol * 1e-2)
        psi = np.clip((y - X @ new_beta) / s, -c, c)
        phi = V.apply(psi)
        b = s * s * np.array([phi @ phi, np.sum(np.bincount(codes, phi) ** 2)])
        theta = np.linalg.solve(K * V.trace_matrix(), b)
        if theta[1] < 0:
            theta[1] = 0.0
            flags.add("sigma_u_clamped")
        if theta[0] <= 0:
            raise EstimationError("error variance iterate is not positive")
        old = np.concatenate([beta, np.sqrt([se2, su2])])
        new = np.concatenate([new_beta, np.sqrt(theta)])
        beta, se2, su2 = new_beta, float(theta[0]), float(theta[1])
        if np.max(np.abs(new - old) / (1.0 + np.abs(old))) <= tol:
            converged = True
            break
    if su2 > 0:
        flags.discard("sigma_u_clamped")

    u, u_ok = _fellner(y - X @ beta, codes, n_g, se2, su2, c, tol)
    if not u_ok:
        flags.add("area_effects_not_converged")
        converged = False
    if not converged:
        flags.add("not_converged")
        if strict:
            raise ConvergenceError(f"REBLUP did not converge in {max_iter} iterations",
                                   diagnostics={"n_iter": it, "flags": sorted(flags)})
    return FittedModel(
        beta=beta, sigma_u=float(np.sqrt(su2)), sigma_e=float(np.sqrt(se2)),
        u={int(a): float(v) for a, v in zip(ids, u)},
        fit_kind="reblup", fit_c=c, n_iter=it, converged=converged,
        flags=tuple(sorted(flags)),
    )


def refit_fixed_variance(model: FittedModel, sample: Sample, tol=1e-6):
    """
    Re-estimate fixed and area effects on new outcomes, keeping the variance
    components of ``model``. A cheap approximation to a full refit.
    """
    if model.fit_kind != "reblup":
        raise EstimationError("variance components are only defined for REBLUP fits")
    if model.sigma_e <= 0:
        raise EstimationError("model has a degenerate error variance")
    ids, codes = _codes(sample.area)
    n_g = np.bincount(codes).astype(float)
    se2, su2 = model.sigma_e ** 2, model.sigma_u ** 2
    V = _NestedV(codes, n_g, se2, su2)
    beta = _beta_step(sample.y, sample.X, V, np.sqrt(se2 + su2), model.fit_c,
                      np.array(model.beta, dtype=float), tol * 1e-2)
    u, ok = _fellner(sample.y - sample.X @ beta, codes, n_g, se2, su2, model.fit_c, tol)
    return FittedModel(beta, model.sigma_u, model.sigma_e,
                       {int(a): float(v) for a, v in zip(ids, u)}, fit_kind="reblup",
                       fit_c=model.fit_c, converged=ok, flags=("approximate",))


# ---------------------------------------------------------------------------
# M-quantile


def _mad0(r):
    return np.median(np.abs(r)) / 0.6745


def mq_regression(y, X, q, c=1.345, beta0=None, tol=1e-10, max_iter=200):
    """
    M-quantile regression at index ``q`` by iteratively reweighted least
    squares, re-estimating the residual scale ``median|r| / 0.6745`` each step.

    Returns ``(beta, converged)``.
    """
    beta = np.linalg.lstsq(X, y, rcond=None)[0] if beta0 is None else np.array(beta0, dtype=float)
    for it in range(max_iter):
        r = y - X @ beta
        s = _mad0(r)
        if s <= 0:
            return beta, True
        z = r / s
        w = 2.0 * huber_weights(z, c) * np.where(z > 0, q, 1.0 - q)
        WX = w[:, None] * X
        new = np.linalg.solve(X.T @ WX, WX.T @ y)
        if np.max(np.abs(new - beta) / (1.0 + np.abs(beta))) <= tol:
            return new, True
        beta = new
    return beta, False


def fit_mq(sample: Sample, grid=None, fit_c=HuberConfig(), tol=1e-8, max_iter=200,
           strict=False):
    """
    M-quantile fit: one regression per grid index, unit-level quantile
    indices by interpolation, area index ``theta_j`` as their mean.

    Parameters
    ----------
    sample : Sample
    grid : sequence of float, optional
        Sorted quantile indices in (0, 1) including 0.5. Defaults to
        0.01, 0.02, ..., 0.99.
    fit_c : HuberConfig or float

    Returns
    -------
    FittedModel
        ``beta`` is the q = 0.5 fit; ``area_beta`` the coefficients at each
        area's ``theta_j``.
    """
    c = fit_c.c if isinstance(fit_c, HuberConfig) else float(fit_c)
    grid = DEFAULT_MQ_GRID if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EstimationError("empty quantile grid")
    if np.any(np.diff(grid) < 0) or grid[0] <= 0 or grid[-1] >= 1:
        raise EstimationError("quantile grid must be sorted inside (0, 1)")
    if not np.any(grid == 0.5):
        raise EstimationError("quantile grid must contain 0.5")
    y, X = sample.y, sample.X
    _check_design(X)

    # warm-start outward from the median
    mid = int(np.flatnonzero(grid == 0.5)[0])
    coefs = np.empty((grid.size, X.shape[1]))
    failed = []
    b_mid, ok = mq_regression(y, X, 0.5, c, tol=tol, max_iter=max_iter)
    coefs[mid] = b_mid
    if not ok:
        failed.append(0.5)
    for order in (range(mid + 1, grid.size), range(mid - 1, -1, -1)):
        prev = b_mid
        for g in order:
            prev, ok = mq_regression(y, X, grid[g], c, beta0=prev, tol=tol, max_iter=max_iter)
            coefs[g] = prev
            if not ok:
                failed.append(float(grid[g]))
    if failed and strict:
        raise ConvergenceError(f"IRLS failed at quantiles {failed}")

    fitted = X @ coefs.T  # (n, G)
    fitted = np.maximum.accumulate(fitted, axis=1)
    q_unit = np.array([np.interp(yi, fi, grid) for yi, fi in zip(y, fitted)])

    theta, area_beta = {}, {}
    for a in sample.area_ids:
        rows = sample.rows(a)
        th = float(np.mean(q_unit[rows]))
        theta[int(a)] = th
        k = int(np.argmin(np.abs(grid - th)))
        if grid[k] == th:
            area_beta[int(a)] = coefs[k].copy()
        else:
            b, ok = mq_regression(y, X, th, c, beta0=coefs[k], tol=tol, max_iter=max_iter)
            if not ok:
                failed.append(th)
            area_beta[int(a)] = b
    flags = ("not_converged",) if failed else ()
    return FittedModel(
        beta=coefs[mid].copy(), sigma_u=0.0, sigma_e=float(_mad0(y - X @ coefs[mid])),
        u={}, fit_kind="mq", fit_c=c, mq_theta=theta, area_beta=area_beta,
        n_iter=0, converged=not failed, flags=flags,
        extra={"grid": grid, "grid_coefs": coefs, "q_unit": q_unit},
    )


# ---------------------------------------------------------------------------
# residuals and predictions


def residuals(model: FittedModel, sample: Sample):
    """Per-area residuals ``y_ij - yhat_ij`` of the sampled units."""
    out = {}
    known = set(model.areas)
    for a in sample.area_ids:
        a = int(a)
        if a not in known:
            raise EstimationError(f"area {a} is not part of the fitted model")
        rows = sample.rows(a)
        out[a] = sample.y[rows] - model.predict(sample.X[rows], a)
    return out


def unsampled_rows(population: Population, area_id, sample: Sample | None = None):
    """Population rows of the non-sampled units of ``area_id``."""
    rows = population.rows(area_id)
    if sample is None or sample.pop_index is None:
        return rows
    return np.setdiff1d(rows, sample.pop_index, assume_unique=True)


def predict_unsampled(model: FittedModel, population: Population, area_id,
                      sample: Sample | None = None):
    """Robust predictions for the non-sampled units of ``area_id``."""
    rows = unsampled_rows(population, area_id, sample)
    return model.predict(population.X[rows], area_id)


@dataclass(frozen=True, eq=False)
class AreaPrediction:
    """
    Everything an area-level estimator needs.

    ``pred`` holds predictions standing for the ``n_unsampled`` non-sampled
    units; when its length differs from ``n_unsampled`` (unlinked sample),
    each prediction carries ``n_unsampled / len(pred)`` units of mass.
    ``resid`` defaults to ``y - fitted``.
    """

    area_id: int
    y: np.ndarray
    fitted: np.ndarray
    pred: np.ndarray
    n_unsampled: int
    resid: np.ndarray | None = None

    def __post_init__(self):
        for name in ("y", "fitted", "pred"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.y.shape != self.fitted.shape:
            raise EstimationError("observed and fitted vectors differ in length")
        if self.resid is None:
            object.__setattr__(self, "resid", self.y - self.fitted)
        else:
            object.__setattr__(self, "resid", np.asarray(self.resid, dtype=float))
        if self.n_unsampled > 0 and self.pred.size == 0:
            raise EstimationError(f"area {self.area_id}: no covariates for non-sampled units")
        if self.n_unsampled < 0:
            raise EstimationError("negative number of non-sampled units")

    @property
    def n(self):
        return self.y.size

    @property
    def N(self):
        return self.n + self.n_unsampled

    @property
    def pred_mass(self):
        """Number of population units each prediction stands for."""
        return self.n_unsampled / self.pred.size if self.pred.size else 0.0


def area_prediction(model: FittedModel, sample: Sample, population: Population, area_id):
    """
    Assemble observed outcomes, fitted values and predictions of one area.

    ``N_j`` is the population count of the area. With a linked sample the
    non-sampled units are exactly the unmatched population rows; otherwise
    all population rows of the area are predicted and share the mass of the
    ``N_j - n_j`` non-sampled units.
    """
    area_id = int(area_id)
    srows = sample.rows(area_id)
    N = population.size(area_id)
    n = srows.size
    if N == 0:
        raise EstimationError(f"area {area_id} has no population units")
    if n > N:
        raise EstimationError(f"area {area_id}: sample larger than population")
    y = sample.y[srows]
    fitted = model.predict(sample.X[srows], area_id) if n else np.empty(0)
    pred = predict_unsampled(model, population, area_id, sample)
    return AreaPrediction(area_id, y, fitted, pred, N - n)


def area_predictions(model, sample, population, area_ids=None):
    ids = population.area_ids if area_ids is None else area_ids
    return {int(a): area_prediction(model, sample, population, a) for a in ids}
