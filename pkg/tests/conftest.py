import numpy as np
import pytest

from robust_sae.data import Population, Sample, add_intercept


def nested_population(seed, d=8, N_j=40, beta=(10.0, 2.0), sigma_u=1.0, sigma_e=2.0,
                      errors=None):
    rng = np.random.default_rng(seed)
    area = np.repeat(np.arange(1, d + 1), N_j)
    x = rng.uniform(0, 5, area.size)
    u = rng.normal(0, sigma_u, d)
    e = rng.normal(0, sigma_e, area.size) if errors is None else errors(rng, area.size)
    y = beta[0] + beta[1] * x + u[area - 1] + e
    return Population(area, add_intercept(x), y)


def draw_sample(pop, n_j, seed):
    rng = np.random.default_rng(seed)
    idx = np.concatenate([np.sort(rng.choice(pop.rows(a), n_j, replace=False))
                          for a in pop.area_ids])
    return Sample.from_population(pop, idx)


@pytest.fixture
def small_pop():
    # strictly positive outcomes so Gini estimators are defined
    return nested_population(11, d=6, N_j=30, beta=(50.0, 3.0))


@pytest.fixture
def small_sample(small_pop):
    return draw_sample(small_pop, 6, 12)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance_report():
    def report(k, passed, notes):
        _ACCEPTANCE[k] = (passed, notes)
        print(f"criterion {k}: {'PASS' if passed else 'FAIL'}")
    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, (passed, notes) in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'} "
                                    f"({'; '.join(notes)})")
