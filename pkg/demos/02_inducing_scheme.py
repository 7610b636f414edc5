"""The first-return inducing scheme on the unstable leaf through the fold.

Build the region, the alpha curves and the Theta tower at (a*, 1e-4), then enumerate
return branches up to depth 40 and audit them: how many branches of each return time,
whether the derivative stays inside the sigma_1^tau .. sigma_2^tau envelope, and how
much the branch count grows.
"""

import math
import warnings

from henon_thermo import inducing as ind
from henon_thermo.henon_core import MapParams
from henon_thermo.manifolds import find_first_bifurcation

warnings.simplefilter("ignore", RuntimeWarning)

a_star, _ = find_first_bifurcation(MapParams(2.0, 1e-4))
params = MapParams(a_star, 1e-4, epsilon=0.5, cap_n=22)
geom = ind.build_geometry(params)
x0, y0, x1, y1 = geom.region.bbox
print("region R: x in [%.4f, %.4f], y in [%.4f, %.4f]" % (x0, x1, y0, y1))

sys = ind.first_return_branches(geom, depth=40)
print("base [zeta0, alpha_1+] has arclength %.6f" % sys.base_length)
print("%d branches, resolved depth %d, flags %s" % (len(sys.branches), sys.n_res, sys.flags))

census = ind.branch_census(sys)
S = census["S"]
print("\n  n  S(n)")
for n in range(1, 13):
    print("%3d  %4d" % (n, S[n]))
print("max (1/n) log S(n) for n >= 10: %.4f  (eps = %.2f)" % (census["growth_rate"], params.epsilon))

# the two shortest returns straddle the fold
short = [br for br in sys.branches if br.tau == 2]
for br in short:
    print("tau = 2 branch on [%.5f, %.5f]" % tuple(sorted((br.t_lo, br.t_hi))))

audit = ind.hyperbolicity_audit(params, sys)
print("\nenvelope [sigma1^tau, sigma2^tau] with sigma1 = %.3f, sigma2 = %.3f"
      % (params.sigma1, params.sigma2))
print("violations: %d of %d branches" % (len(audit["violations"]), audit["n_branches"]))
print("distortion constant %.4f (doubled sampling %.4f)" % (audit["C_dist"], audit["C_dist_doubled"]))

# the branch weights act as a countable alphabet; (1/tau) log(base/length) ~ log 2
rates = sys.length_weights / sys.taus
print("\nmean log-expansion per step over branches: %.4f  (log 2 = %.4f)"
      % (rates.mean(), math.log(2)))
