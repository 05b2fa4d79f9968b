"""
Why area Gini coefficients need bias calibration.

A robust fit down-weights large residuals, so the plug-in distribution of
predictions is far too concentrated and its Gini coefficient badly
understates inequality. This script draws one skewed population, fits the
robust nested error model, and compares the plug-in with the calibrated
estimators area by area.

Run: python demos/01_calibration_walkthrough.py
"""

import numpy as np

from robust_sae.estimators import CalibrationSpec, estimate_ginis
from robust_sae.fit import fit_reblup
from robust_sae.simulation import PUBLISHED_SCENARIOS, gen_population, srswor

# %% One population from the mildest skewed design, 15 units sampled per area
scenario = PUBLISHED_SCENARIOS["1a"].with_(d=12)
sim = gen_population(scenario, np.random.default_rng(1))
sample = srswor(sim.population, scenario.n_j, np.random.default_rng(2))
model = fit_reblup(sample)
print(f"{len(sim.population)} units in {scenario.d} areas, {len(sample)} sampled")
print(f"robust fit: beta = {np.round(model.beta, 2)}, sigma_u = {model.sigma_u:.2f}, "
      f"sigma_e = {model.sigma_e:.2f}")

# %% Plug-in versus calibrated estimates
specs = {
    "plug-in": CalibrationSpec("naive"),
    "SBC": CalibrationSpec("sbc", c=3.0),
    "ABC": CalibrationSpec("abc", c=3.0, gamma="auto"),
    "IF-ABC": CalibrationSpec("if-abc", c=2.0, gamma="auto"),
}
est = {name: estimate_ginis(model, sample, sim.population, spec) for name, spec in specs.items()}

print(f"\n{'area':>4} {'true':>7}" + "".join(f"{name:>9}" for name in specs))
for a in sim.population.area_ids:
    a = int(a)
    print(f"{a:>4} {sim.true_gini[a]:7.3f}" + "".join(f"{est[n][a].gini:9.3f}" for n in specs))

# %% Median relative error per estimator
truth = np.array([sim.true_gini[int(a)] for a in sim.population.area_ids])
print()
for name in specs:
    g = np.array([est[name][int(a)].gini for a in sim.population.area_ids])
    print(f"{name:>8}: median relative error {np.median((g - truth) / truth):+.3f}")

# IF-ABC corrects through the mean of about 15 bounded pseudo-residuals per
# area, so it is far more volatile than the CDF-based calibrations.

# %% The asymmetric window adapts to the skew of each area's residuals
print("\nABC window skewness per area:",
      " ".join(f"{est['ABC'][int(a)].gamma:.2f}" for a in sim.population.area_ids))
