"""Does the estimation error shrink like 1/sqrt(n)?  A quick check.

Draws replicated pools at four sizes, measures the normalizer error and
the worst-case gap between debiased empirical risk and population risk
over a fixed model grid, and fits log-log slopes.  Root-n behaviour
means slopes near -0.5.  Kept small (40 replicates) to finish quickly;
the test suite runs the full-strength version.
"""

from dataclasses import replace

import numpy as np

from debias import preset, rate_check

spec = replace(preset("b"), seed=99)
n_grid = (250, 500, 1000, 2000)

print("scenario:", spec.name, " grid:", n_grid, " replicates: 40")
result = rate_check(spec, n_grid=n_grid, replicates=40)

print()
print("%8s %22s %22s" % ("n", "mean normalizer err", "mean sup risk gap"))
for i, n in enumerate(result.n_grid):
    print("%8d %22.6f %22.6f"
          % (n, result.mean_normalizer_err[i], result.mean_sup_deviation[i]))

print()
print("log-log slope, normalizer error: %+.3f" % result.slope_normalizer_err)
print("log-log slope, sup risk gap:     %+.3f" % result.slope_sup_deviation)
print()

ratio = result.mean_normalizer_err[0] / result.mean_normalizer_err[-1]
expect = np.sqrt(n_grid[-1] / n_grid[0])
print("error ratio over an 8x size increase: %.2f (sqrt(8) would be %.2f)"
      % (ratio, expect))
