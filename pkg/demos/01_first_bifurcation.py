"""Locating the first bifurcation parameter a*(b).

Below a* the unstable manifold of the fixed saddle and the stable leaves stay apart;
at a* they touch quadratically, and above it they cross. We bracket the sign change
of the tangency gap, solve for a*, and look at the shape of the contact.
"""

import warnings

from henon_thermo.henon_core import MapParams, fixed_saddles
from henon_thermo.manifolds import (find_first_bifurcation, gap_1d, quadratic_signature,
                                    tangency_gap)

warnings.simplefilter("ignore", RuntimeWarning)

b = 1e-4
template = MapParams(2.0, b)

# the 1-D limit is exact: a* = 2, where the critical orbit lands on the fixed point
print("b = 0 oracle: gap(1.99) = %.4f  gap(2.01) = %.4f" % (gap_1d(1.99), gap_1d(2.01)))
a0, _ = find_first_bifurcation(MapParams(2.0, 0.0))
print("a*(0) =", a0)

# the gap changes sign across a*
for a in (1.99, 2.0, 2.01):
    print("a = %.3f  gap = %+.3e" % (a, tangency_gap(MapParams(a, b))[0]))

a_star, rep = find_first_bifurcation(template, tol_a=1e-12)
print("\na*(%g) = %.15f" % (b, a_star))
p = MapParams(a_star, b)
for s in fixed_saddles(p):
    print("saddle %s at (%.6f, %.6f)  eigenvalues %.6f, %.6f"
          % (s.label, s.location.x, s.location.y, s.lambda_u, s.lambda_s))

# at a* the normal distance is d(s) ~ alpha + beta s^2 with alpha ~ 0
sig = quadratic_signature(p)
print("\nquadratic fit: alpha = %.2e  beta = %.2f  relative residual = %.1e"
      % (sig["alpha"], sig["beta"], sig["relative_residual"]))
