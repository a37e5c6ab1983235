"""The 1/n rate of the Fisher estimate, and checking the ESS estimator.

First we feed exact scores from a Gaussian into the stochastic Fisher
recursion and watch the mean-squared error fall.  With a harmonic learning
rate the log-log slope should sit near -1.

Then we calibrate the effective sample size on an AR(1) series, whose
integrated autocorrelation time is known in closed form:
tau = (1 + phi) / (1 - phi).

Run with ``python demos/rate_and_diagnostics.py``.
"""

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from fishermala.diagnostics import acf, ess
from fishermala.experiments import load_config, output_root, run_rate

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "gaussian-rate.ini")
cfg.replicates = 30
art = run_rate(cfg, output_root() / "demo-rate")
curve = art.chains["curve"]
for n, e in list(zip(curve.n, curve.errors))[::6]:
    print(f"  n = {n:6d}: mean squared error {e:.3e}")
print(f"fitted slope {curve.slope:.3f} (results in {art.directory})")

for phi in (0.5, 0.9, 0.98):
    x = lfilter([1.0], [1.0, -phi], np.random.default_rng(0).standard_normal(400_000))
    rep = ess(x, 1000)
    print(f"phi = {phi}: IAT {rep.iat[0]:7.2f}, exact {(1 + phi) / (1 - phi):7.2f}, "
          f"ACF at lag 1 {acf(x, 1).rho[1]:.3f}")
