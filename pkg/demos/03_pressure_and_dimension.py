"""Pressure of the geometric potential and the dimension of the unstable slice.

t -> P(t) is computed as the shift pressure of the induced system, lifted back to the
map. Its zero t^u in (0, 1) should match the box-counting dimension of the invariant
set traced on the leaf through the fold.
"""

import math
import warnings

import numpy as np

from henon_thermo import analysis as an
from henon_thermo import inducing as ind
from henon_thermo import shift_thermo as st
from henon_thermo.henon_core import MapParams
from henon_thermo.manifolds import find_first_bifurcation

warnings.simplefilter("ignore", RuntimeWarning)

a_star, _ = find_first_bifurcation(MapParams(2.0, 1e-4))
params = MapParams(a_star, 1e-4)
geom = ind.build_geometry(params)
sys = ind.first_return_branches(geom, depth=40)

curve = st.pressure_curve(sys, np.round(np.arange(-0.4, 1.01, 0.2), 10))
print("   t      P(t)")
for t, P in zip(curve.t, curve.P):
    print("%5.2f  %+.6f" % (t, P))
print("convex on the grid:", curve.is_convex())
print("P(0) = %.6f vs log 2 = %.6f" % (curve.P[np.argmin(abs(curve.t))], math.log(2)))

print("\nt^u = %.10f" % curve.t_u)
print("Kac Lyapunov exponent at t^u: %.6f" % curve.lambda_u_at_root)
print("interval (t-, t+) = (%.4f, %.4f) at eps = %.2f"
      % (curve.t_minus, curve.t_plus, params.epsilon))

# the Gibbs state at t^u: finite entropy, h = t^u * lambda up to the pressure
g, _ = an.equilibrium_gibbs(sys, curve.t_u)
dm = an.dimension_of_measure(g, sys)
print("entropy %.6f, t^u * lambda %.6f" % (dm["entropy"], curve.t_u * dm["lambda_u"]))

# box counting on the nested Omega sets along the leaf
om = ind.omega_sets(geom, n_max=30, n_samples=2 ** 20)
fit = an.box_dimension(an.SliceSample.from_omega(om), np.geomspace(1e-2, 1e-5, 13))
print("\nbox dimension of the slice: %.4f (R^2 %.4f)" % (fit.dimension, fit.r2))
print("difference from t^u: %.4f" % abs(fit.dimension - curve.t_u))

# sanity: the same estimator on the middle-thirds Cantor set
cantor = an.SliceSample(an.cantor_intervals(12))
ref = an.box_dimension(cantor, 3.0 ** -np.arange(2, 10))
print("middle thirds Cantor set: %.4f (exact %.4f)" % (ref.dimension, math.log(2) / math.log(3)))
