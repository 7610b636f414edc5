"""Statistics of a Gibbs-distributed orbit.

Sample return segments from the equilibrium state at t = 0.8, glue them into an orbit
of the map, and look at its Lyapunov exponent, the decay of autocorrelations of the
x coordinate, and the Gaussian fluctuations of block sums.
"""

import math
import warnings

import numpy as np

from henon_thermo import analysis as an
from henon_thermo import inducing as ind
from henon_thermo.henon_core import MapParams
from henon_thermo.manifolds import find_first_bifurcation

warnings.simplefilter("ignore", RuntimeWarning)

a_star, _ = find_first_bifurcation(MapParams(2.0, 1e-4))
params = MapParams(a_star, 1e-4)
sys = ind.first_return_branches(ind.build_geometry(params), depth=40)

# 1-D check first: the logistic-type map at a = 2, b = 0 has exponent log 2
lam = an.lyapunov_u(MapParams(2.0, 0.0), (0.3, 0.0), 200000)
print("1-D exponent %.5f +- %.5f  (log 2 = %.5f)" % (lam.value, lam.stderr, math.log(2)))

g, P = an.equilibrium_gibbs(sys, 0.8)
orb = an.sample_gibbs_orbit(sys, g, 2 ** 18, seed=0, induced_map=ind.InducedMap(sys))
print("\nGibbs state at t = 0.8: pressure %.5f, mean return time %.3f" % (P, g.mean_tau))
print("empirical mean return time %.3f over %d segments" % (orb.taus.mean(), orb.taus.size))
est = orb.lyapunov()
print("orbit exponent %.5f +- %.5f" % (est.value, est.stderr))

x = an.observable_x(orb)
rep = an.correlation_decay(x, range(1, 21), an.OBSERVABLES["x"])
print("\nlag   acf(x)")
for lag, c in zip(rep.lags[:8], rep.acf[:8]):
    print("%3d  %+.5f" % (lag, c))
lo, hi = rep.rate_ci
print("decay rate %.3f [%.3f, %.3f], so r = %.3f; R^2 %.3f"
      % (rep.rate, lo, hi, math.exp(-rep.rate), rep.r2))

clt = an.clt_test(x, 256, 500)
print("\nblock sums of x: sigma %.4f, KS p-value %.3f" % (clt["sigma"], clt["p_value"]))

# a coboundary u - u o f has degenerate variance: block sums telescope
cb = an.observable_coboundary(x)
for n_block in (16, 64, 256, 1024):
    print("coboundary, block %4d: sigma %.4f" % (n_block, an.clt_test(cb, n_block, 200)["sigma"]))
