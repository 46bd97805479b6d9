"""
Area flow on the unit square
============================

The area integrand ``sqrt(1 + |xi|^2)`` has linear growth, so the flow is
only well posed with a bounded slope condition on the boundary data.  We
check the condition for a saddle, run the flow and verify some of the
structural properties of the discrete solution.
"""
import numpy as np

from bscflow import ConvexDomain, InitialDatum, SchemeConfig, make_builtin, run_scheme, triangulate
from bscflow.analysis import (check_comparison, check_gradient_bound,
                              check_variational_inequality)
from bscflow.scheme import energy_report

mesh = triangulate(ConvexDomain.unit_square(), 0.125)
u_o = InitialDatum.from_function(mesh, lambda p: p[:, 0] * p[:, 1])
rep = u_o.bsc_certificate
print(f"BSC holds with Q = {rep.q_min:.4f} (sqrt 2 = {np.sqrt(2):.4f})")

sol = run_scheme(make_builtin("area"), u_o, SchemeConfig(m=16, T=0.2))
print(f"gradient cap L = {sol.L:.3f}, {sol.m} steps of size {sol.h:.4f}")

# The gradient never exceeds max{Q, |Du_o|}.
gb = check_gradient_bound(sol)
print(f"max |Du| = {gb.measured:.4f} <= {gb.bound:.4f}")

# Affine supports from the certificate stay above or below the solution.
w = rep.witnesses[len(rep.witnesses) // 3]
up = check_comparison(sol, w.upper_at(mesh.nodes))
lo = check_comparison(sol, w.lower_at(mesh.nodes))
print(f"upper support at {w.touch_point}: {up.details['order']}, pass = {up.passed}")
print(f"lower support at {w.touch_point}: {lo.details['order']}, pass = {lo.passed}")

# Energy estimate and the discrete variational inequality.
er = energy_report(sol)
print(f"energy: {er.lhs_increments:.4g} <= {er.rhs_increments:.4g}")
vi = check_variational_inequality(sol, {"datum": u_o.values, "own": sol.slices})
print(f"variational inequality passes: {vi.passed}")
