"""Drift singularity on a plane of equilibria: x' = x y1, y1' = x y2, y2' = x.

The reduced chart dynamics is a cusp z2' = z0 + z1 z2 + z2^3/6 in which
z0, z1 are first integrals.  The fold of the cusp is the curve gamma of
transcritical points; orbits leaving gamma land again on a second curve
sigma, tangent to gamma at the singular point.
"""
import numpy as np

from eqmanifold import build_chart, builtin, classify, divide_by_x, phase_to_chart
from eqmanifold.classify import normalized_germ
from eqmanifold.dynamics import (
    cusp_fold_curve,
    heteroclinic_targets,
    tangent_angle,
    transcritical_curve,
)

model = builtin("driftsing")
rep = classify(model)
print(f"ell = {rep.ell}, sign = {rep.sign:+d}, rank = {rep.unfolding_rank}")
print("coefficients:", rep.coefficients)
print("germ h0(0, 0, s):", np.round(rep.germ_coefficients, 12))

chart = build_chart(divide_by_x(model))
zeta, shift, sign = normalized_germ(rep.germ_coefficients, rep.ell)
print(f"normalized germ: {sign:+d} w^3 + ({zeta[1]:.3g}) w + ({zeta[0]:.3g}), shift {shift:.2g}")

# Fold curve in chart coordinates against z1 = -z2^2/2, z0 = z2^3/3
fold = cusp_fold_curve(chart, np.linspace(-0.3, 0.3, 7))
for z0, z1, z2 in fold.points:
    print(f"  z2 {z2:+.2f}: z1 {z1:+.6f} ({-z2**2 / 2:+.6f})  z0 {z0:+.6f} ({z2**3 / 3:+.6f})")

# gamma in phase space, then the heteroclinic landing points
gamma = transcritical_curve(model)
print("gamma: ", len(gamma.points), "points, max |y1| =", np.max(np.abs(gamma.points[:, 0])))
ys = np.array([[0.0, s] for s in (-0.3, -0.2, -0.1, 0.1, 0.2, 0.3)])
targets = heteroclinic_targets(model, ys, sign=rep.sign, germ_scale=rep.germ_coefficients[3])
sigma = []
for y, t in zip(ys, targets):
    land = np.array(t.landing)
    z = phase_to_chart(chart, land)
    ratio = z[2] ** 3 / (z[0] / rep.germ_coefficients[3])
    sigma.append(land[1:])
    print(f"  from y2 = {y[1]:+.1f} (side {t.side:+d}) lands at y = {np.round(land[1:], 5)}, "
          f"z2^3 / zeta0 = {ratio:+.4f}")
sigma = np.vstack([np.array(sigma), np.zeros(2)])
print("tangent angle gamma/sigma at 0: %.2e deg" % tangent_angle(gamma.points, sigma, [0, 0], 0.7))
