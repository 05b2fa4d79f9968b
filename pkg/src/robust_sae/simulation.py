"""
Monte-Carlo simulation of area Gini estimation under skewed errors.

One finite population is generated per scenario from

    y_ij = 100 + 5 x_ij + u_j + e_ij,   x ~ logNormal(1, 0.5),  u_j ~ N(0, 1),

with two-piece skewed-t errors ``e``. Repeated SRSWOR samples are drawn
from it, every estimator is applied, and per-area relative bias and RRMSE
are aggregated over replicates.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from math import gamma as _gamma_fn, pi, sqrt

import numpy as np

from .data import Population, Sample, add_intercept
from .estimators import CalibrationSpec, estimate_ginis
from .exceptions import EstimationError, SAEError
from .fit import fit_mq, fit_reblup
from .gini import empirical_gini
from .tuning import bootstrap_tune

log = logging.getLogger(__name__)

METHODS = ("EBLUP", "REBLUP", "REBLUP-SBC", "REBLUP-ABC",
           "MQ-SBC", "MQ-ABC", "IF-SBC", "IF-ABC")

EBLUP_C = 1e6
FLOOR_FLAG_SHARE = 0.001


@dataclass(frozen=True)
class Scenario:
    """Population design and Monte-Carlo settings of one simulation scenario."""

    name: str = "custom"
    d: int = 40
    N_j: int = 300
    n_j: int = 15
    beta: tuple = (100.0, 5.0)
    x_meanlog: float = 1.0
    x_sdlog: float = 0.5
    sigma_u: float = 1.0
    nu: float = 3.0
    lam: float = 1.0
    centered: bool = False
    reps: int = 100
    seed: int = 20240101
    noise: bool = True

    def __post_init__(self):
        if self.d < 1 or self.N_j < 1:
            raise ValueError("need at least one area with one unit")
        if not 1 <= self.n_j <= self.N_j:
            raise ValueError(f"n_j={self.n_j} must lie in [1, N_j={self.N_j}]")
        if not self.lam > 0:
            raise ValueError("skewness lambda must be positive")
        if not self.nu > 2:
            raise ValueError("degrees of freedom must exceed 2")
        if self.reps < 1:
            raise ValueError("reps must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


PUBLISHED_SCENARIOS = {
    "1a": Scenario("1a", lam=40.0, centered=True),
    "1b": Scenario("1b", lam=70.0, centered=True),
    "1c": Scenario("1c", lam=100.0, centered=True),
    "2a": Scenario("2a", lam=70.0, centered=False),
    "2b": Scenario("2b", lam=150.0, centered=False),
    "2c": Scenario("2c", lam=400.0, centered=False),
}

# medians over areas reported for the published study
REFERENCE_TRUE_GINI = {"1a": 0.20, "1b": 0.34, "1c": 0.49, "2a": 0.20, "2b": 0.30, "2c": 0.40}


# ---------------------------------------------------------------------------
# data generation


def abs_t_mean(nu):
    """``E|t_nu|`` for ``nu > 1``."""
    if not nu > 1:
        raise ValueError("E|t| is finite only for nu > 1")
    return 2.0 * sqrt(nu) * _gamma_fn((nu + 1) / 2) / ((nu - 1) * sqrt(pi) * _gamma_fn(nu / 2))


def skew_t_mean(nu, lam):
    """Mean of the two-piece skewed t with skewness ``lam``."""
    return abs_t_mean(nu) * (lam - 1.0 / lam)


def skew_t_sample(nu, lam, rng, n, centered=False):
    """
    Two-piece skewed t draws.

    With probability ``lam^2 / (1 + lam^2)`` a draw is ``lam |t|``, otherwise
    ``-|t| / lam``. ``centered`` subtracts the analytic mean.
    """
    if not nu > 2:
        raise ValueError("nu must exceed 2")
    if not lam > 0:
        raise ValueError("lam must be positive")
    t = np.abs(rng.standard_t(nu, size=n))
    pos = rng.random(n) < lam * lam / (1.0 + lam * lam)
    out = np.where(pos, lam * t, -t / lam)
    if centered:
        out -= skew_t_mean(nu, lam)
    return out


@dataclass(frozen=True, eq=False)
class SimPopulation:
    population: Population
    true_gini: dict
    n_floored: int
    flags: tuple = ()


def gen_population(scenario: Scenario, rng):
    """Generate the population of ``scenario`` and its true area Ginis."""
    d, Nj = scenario.d, scenario.N_j
    area = np.repeat(np.arange(1, d + 1), Nj)
    x = rng.lognormal(scenario.x_meanlog, scenario.x_sdlog, d * Nj)
    y = scenario.beta[0] + scenario.beta[1] * x
    if scenario.noise:
        u = rng.normal(0.0, scenario.sigma_u, d)
        e = skew_t_sample(scenario.nu, scenario.lam, rng, d * Nj, scenario.centered)
        y = y + u[area - 1] + e
    neg = y < 0
    n_floored = int(np.count_nonzero(neg))
    y = np.where(neg, 0.0, y)
    flags = ("negative_outcomes_floored",) if n_floored > FLOOR_FLAG_SHARE * y.size else ()
    if n_floored:
        log.info("scenario %s: %d negative outcomes floored at 0", scenario.name, n_floored)
    pop = Population(area, add_intercept(x), y)
    true = {int(a): empirical_gini(y[pop.rows(a)]) for a in pop.area_ids}
    return SimPopulation(pop, true, n_floored, flags)


def srswor(population: Population, n_j, rng):
    """Simple random sample without replacement of ``n_j`` units per area."""
    idx = []
    for a in population.area_ids:
        rows = population.rows(a)
        if n_j > rows.size:
            raise ValueError(f"area {a}: n_j={n_j} exceeds N_j={rows.size}")
        idx.append(np.sort(rng.choice(rows, size=n_j, replace=False)))
    return Sample.from_population(population, np.concatenate(idx))


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class MethodSettings:
    """Tuning constants used by :func:`run_replicate`."""

    c_reblup: float = 3.0
    c_if: float = 2.0
    gamma: object = "auto"
    scale: str = "qn"
    centering: str = "none"
    tuning: str = "heuristic"  # or "bootstrap"
    boot_B: int = 50
    fit_c: float = 1.345


def _specs(settings):
    common = dict(scale=settings.scale, centering=settings.centering)
    return {
        "SBC": CalibrationSpec("sbc", c=settings.c_reblup, **common),
        "ABC": CalibrationSpec("abc", c=settings.c_reblup, gamma=settings.gamma, **common),
        "IF-SBC": CalibrationSpec("if-sbc", c=settings.c_if, **common),
        "IF-ABC": CalibrationSpec("if-abc", c=settings.c_if, gamma=settings.gamma, **common),
    }


def _ginis(model, sample, population, spec):
    return {a: e.gini for a, e in estimate_ginis(model, sample, population, spec).items()}


def _tuned(spec, model, sample, population, settings, seed):
    res = bootstrap_tune(sample, population, model, template=spec, B=settings.boot_B, seed=seed)
    return spec.with_(c={a: cg[0] for a, cg in res.chosen.items()},
                      gamma={a: cg[1] for a, cg in res.chosen.items()})


def run_replicate(sim: SimPopulation, sample: Sample, methods, settings=MethodSettings(),
                  seed=0):
    """
    Area Gini predictions of every method on one sample.

    Returns ``{method: {area: gini}}``; a method whose fit or estimation fails
    maps to ``None``.
    """
    pop = sim.population
    specs = _specs(settings)
    out = {}
    models = {}

    def model(kind):
        if kind not in models:
            try:
                if kind == "eblup":
                    models[kind] = fit_reblup(sample, EBLUP_C)
                elif kind == "reblup":
                    models[kind] = fit_reblup(sample, settings.fit_c)
                else:
                    models[kind] = fit_mq(sample, fit_c=settings.fit_c)
            except (SAEError, np.linalg.LinAlgError) as exc:
                log.debug("%s fit failed: %s", kind, exc)
                models[kind] = None
        return models[kind]

    naive = CalibrationSpec("naive")
    plan = {
        "EBLUP": ("eblup", naive), "REBLUP": ("reblup", naive),
        "REBLUP-SBC": ("reblup", specs["SBC"]), "REBLUP-ABC": ("reblup", specs["ABC"]),
        "MQ-SBC": ("mq", specs["SBC"]), "MQ-ABC": ("mq", specs["ABC"]),
        "IF-SBC": ("reblup", specs["IF-SBC"]), "IF-ABC": ("reblup", specs["IF-ABC"]),
    }
    for m in methods:
        if m not in plan:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
        kind, spec = plan[m]
        fitted = model(kind)
        if fitted is None:
            out[m] = None
            continue
        try:
            if settings.tuning == "bootstrap" and m.endswith("ABC") and kind == "reblup":
                spec = _tuned(spec, fitted, sample, pop, settings, seed)
            out[m] = _ginis(fitted, sample, pop, spec)
        except (SAEError, np.linalg.LinAlgError) as exc:
            log.debug("%s failed: %s", m, exc)
            out[m] = None
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo driver


@dataclass
class ScenarioResult:
    """
    Per-area accuracy of every method over the Monte-Carlo replicates.

    ``predictions[method]`` is a ``(reps, d)`` array (NaN for failed
    replicates); ``rel_bias``/``rrmse`` map method -> per-area arrays.
    """

    scenario: Scenario
    methods: tuple
    areas: np.ndarray
    true_gini: np.ndarray
    predictions: dict
    failures: dict
    n_floored: int = 0
    flags: tuple = ()
    rel_bias: dict = field(default_factory=dict)
    rrmse: dict = field(default_factory=dict)
    aborted: tuple = ()

    def __post_init__(self):
        for m in self.methods:
            if m in self.aborted:
                continue
            p = self.predictions[m]
            ok = ~np.isnan(p).any(axis=1)
            rel = (p[ok] - self.true_gini) / self.true_gini
            self.rel_bias[m] = rel.mean(axis=0)
            self.rrmse[m] = np.sqrt((rel ** 2).mean(axis=0))

    def median(self, stat, method):
        table = self.rel_bias if stat == "rel_bias" else self.rrmse
        return float(np.median(table[method]))

    def summary(self):
        """Rows ``(method, median rel_bias, median rrmse, failures)``."""
        return [(m, self.median("rel_bias", m), self.median("rrmse", m), self.failures[m])
                for m in self.methods if m not in self.aborted]

    def long_rows(self):
        rows = []
        for m in self.methods:
            if m in self.aborted:
                continue
            for k, a in enumerate(self.areas):
                rows.append((self.scenario.name, int(a), m,
                             float(self.rel_bias[m][k]), float(self.rrmse[m][k])))
        return rows

    def write_long(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario", "area", "method", "rel_bias", "rrmse"])
            for s, a, m, b, r in self.long_rows():
                w.writerow([s, a, m, repr(b), repr(r)])

    def write_summary(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario", "method", "median_rel_bias", "median_rrmse", "failures"])
            w.writerow([self.scenario.name, "TRUE", repr(float(np.median(self.true_gini))), "", 0])
            for m, b, r, f in self.summary():
                w.writerow([self.scenario.name, m, repr(b), repr(r), f])


def _replicate_job(args):
    sim, scenario, methods, settings, ss = args
    rng = np.random.default_rng(ss)
    sample = srswor(sim.population, scenario.n_j, rng)
    boot_seed = int(rng.integers(0, 2**63 - 1))
    return run_replicate(sim, sample, methods, settings, seed=boot_seed)


def run_scenario(scenario: Scenario, methods=METHODS, settings=MethodSettings(),
                 threads=1, max_fail=0.10):
    """
    Generate the scenario population once and evaluate ``methods`` on
    ``scenario.reps`` independent samples.

    Seeds: the master seed is split into one stream for the population and
    one per replicate, so results do not depend on ``threads``.
    """
    methods = tuple(methods)
    streams = np.random.SeedSequence(scenario.seed).spawn(scenario.reps + 1)
    sim = gen_population(scenario, np.random.default_rng(streams[0]))
    jobs = [(sim, scenario, methods, settings, ss) for ss in streams[1:]]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]

    areas = sim.population.area_ids
    true = np.array([sim.true_gini[int(a)] for a in areas])
    if np.any(true == 0):
        raise EstimationError("an area has a zero true Gini; relative errors undefined")
    preds, fails, aborted = {}, {}, []
    for m in methods:
        arr = np.full((scenario.reps, areas.size), np.nan)
        for r, res in enumerate(results):
            if res[m] is not None:
                arr[r] = [res[m][int(a)] for a in areas]
        preds[m] = arr
        fails[m] = int(np.isnan(arr).any(axis=1).sum())
        if fails[m] > max_fail * scenario.reps or fails[m] == scenario.reps:
            log.warning("method %s aborted: %d of %d replicates failed",
                        m, fails[m], scenario.reps)
            aborted.append(m)
    return ScenarioResult(scenario, methods, areas, true, preds, fails,
                          sim.n_floored, sim.flags, aborted=tuple(aborted))


def format_table(results):
    """Plain-text table of median relative bias and RRMSE per method and scenario."""
    results = list(results)
    names = [r.scenario.name for r in results]
    methods = [m for m in results[0].methods] if results else []
    width = max([len(m) for m in methods] + [16])
    lines = ["".ljust(width) + "".join(f"{n:>18}" for n in names),
             "median(true Gini)".ljust(width)
             + "".join(f"{np.median(r.true_gini):>18.3f}" for r in results)]
    for m in methods:
        cells = []
        for r in results:
            if m in r.aborted:
                cells.append(f"{'aborted':>18}")
            else:
                cells.append(f"{r.median('rel_bias', m):>9.3f}{r.median('rrmse', m):>9.3f}")
        lines.append(m.ljust(width) + "".join(cells))
    lines.append("(cells: median relative bias, median RRMSE)")
    return "\n".join(lines)
