"""Shared generators and loop-based reference implementations for the tests."""

from importlib import resources

import numpy as np

from robust_sae.cdf import cdf_abc, gini_from_cdf, gini_sorted
from robust_sae.fit import AreaPrediction, area_predictions, fit_reblup
from robust_sae.io import read_population, read_sample


def tiny_instance(rng, n=None, N=None):
    """Random area with n <= 5 sampled and N <= 10 units; values on a coarse grid."""
    n = int(rng.integers(2, 6)) if n is None else n
    N = int(rng.integers(n, 11)) if N is None else N
    while True:
        y = np.round(rng.uniform(5, 30, n), 1)
        fitted = np.round(y + rng.normal(0, 3, n), 1)
        if np.unique(y - fitted).size >= 2:
            break
    pred = np.round(rng.uniform(8, 25, N - n), 1)
    return AreaPrediction(1, y, fitted, pred, N - n)


def mixture_gini(values, y, eps):
    """Gini of (1 - eps) * empirical(values) + eps * delta_y."""
    pts = np.append(values, y)
    w = np.append(np.full(values.size, (1 - eps) / values.size), eps)
    order = np.argsort(pts, kind="stable")
    return gini_sorted(pts[order], w[order])


def toy():
    base = resources.files("robust_sae") / "toy"
    sample, cov = read_sample(base / "sample.csv")
    return sample, read_population(base / "population.csv", cov)


def two_piece(gamma, n, rng):
    """Draws with density proportional to f(e / gamma) for e < 0 and f(gamma e) for e >= 0."""
    t = np.abs(rng.standard_normal(n))
    neg = rng.random(n) < gamma ** 2 / (1 + gamma ** 2)
    return np.where(neg, -gamma * t, t / gamma)


def oracle_surface(sample, pop, model, grid, B, c2, seed):
    """Steps 4-10 of the residual bootstrap written out with loops."""
    orig = area_predictions(model, sample, pop, sample.area_ids)
    g0 = {cell: {a: gini_from_cdf(cdf_abc(ap, cell[0], cell[1])) for a, ap in orig.items()}
          for cell in grid}
    wins = {}
    for a, ap in orig.items():
        w = 1.4826 * np.median(np.abs(ap.resid))
        wins[a] = np.clip(ap.resid, -c2 * w, c2 * w)
    sums = {cell: {a: [0.0, 0.0] for a in orig} for cell in grid}
    for ss in np.random.SeedSequence(seed).spawn(B):
        rng = np.random.default_rng(ss)
        ystar = np.empty(len(sample))
        for a in sample.area_ids:
            rows = sample.rows(a)
            draw = rng.integers(0, wins[int(a)].size, rows.size)
            ystar[rows] = orig[int(a)].fitted + wins[int(a)][draw]
        boot = sample.replace_y(ystar)
        m = fit_reblup(boot, model.fit_c)
        for a, bp in area_predictions(m, boot, pop, sample.area_ids).items():
            ap = AreaPrediction(a, orig[a].y, bp.fitted, bp.pred, bp.n_unsampled,
                                resid=bp.y - bp.fitted)
            for cell in grid:
                rel = (gini_from_cdf(cdf_abc(ap, cell[0], cell[1])) - g0[cell][a]) / g0[cell][a]
                sums[cell][a][0] += rel * rel
                sums[cell][a][1] += rel
    return {cell: {a: (s[0] / B, s[1] / B) for a, s in v.items()} for cell, v in sums.items()}
