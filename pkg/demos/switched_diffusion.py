"""
Diffusivity that jumps in time
==============================

An integrand that is only integrable in time cannot be frozen pointwise.
Averaging forward over a window ``eps`` restores a time derivative, and the
price is a gap of ``eps / 2`` times the jump, which we measure directly.
"""
import numpy as np

from bscflow import ConvexDomain, InitialDatum, SchemeConfig, make_builtin, run_scheme, triangulate
from bscflow.integrand import steklov_convergence_gap

params = {"t_o": 0.05, "T": 0.1,
          "f1": {"family": "quadratic"}, "f2": {"family": "quadratic", "c": 2}}
f = make_builtin("switched", params)

# Averaging gap on |xi| <= 1: the jump is 1/2, so the gap is eps / 4.
for eps in (0.02, 0.01, 0.005):
    print(f"eps = {eps:<6} gap = {steklov_convergence_gap(f, eps, 1.0, dim=1):.6f}"
          f"   eps/4 = {eps / 4:.6f}")

# The flow itself: diffusivity 1 up to t_o, then 2.
mesh = triangulate(ConvexDomain.interval(0.0, 1.0), 1 / 127)
u_o = InitialDatum.from_function(mesh, lambda p: np.sin(np.pi * p[:, 0]))
x = mesh.nodes[:, 0]
exact = np.sin(np.pi * x) * np.exp(-np.pi ** 2 * 0.05 - 2 * np.pi ** 2 * 0.05)
for m in (16, 32, 64):
    sol = run_scheme(f, u_o, SchemeConfig(m=m, T=0.1, mode="steklov", epsilon="h"))
    print(f"m = {m:3d}   L2 error at T = {mesh.l2_norm(sol.slices[-1] - exact):.5f}")
