"""A line of equilibria with a transcritical point: x' = x y, y' = x.

The line {x = 0} loses normal hyperbolicity at the origin.  Orbits are
parabolas x = y^2/2 + c that touch the line, and the motion reverses
direction when crossing it.
"""
import numpy as np

from eqmanifold import build_chart, builtin, classify, divide_by_x, integrate, phase_to_chart

model = builtin("transcritical")
print(model.describe())

# Factor out x and look at the drift along the line
reduced = divide_by_x(model)
print("F~ =", [str(c) for c in reduced.components], " F~(0) =", reduced.rhs(np.zeros(2)))

# Flow-box chart: the first chart coordinate is a first integral
chart = build_chart(reduced)
p = np.array([0.2, 0.4])
print("chart coordinates of", p, "->", phase_to_chart(chart, p), "(exact: z0 = x - y^2/2 = 0.12)")

rep = classify(model)
print(f"order ell = {rep.ell}, sign = {rep.sign:+d}, unfolding rank = {rep.unfolding_rank}")
for name, cond in rep.conditions.items():
    print(f"  {name:14s} value {cond.value:+.3g}  {'ok' if cond.passed else 'FAILS'}")

# A few orbits: the conserved quantity stays put
for seed in ([0.1, 0.0], [-0.1, 0.3], [0.02, -0.5]):
    for t_end in (100.0, -100.0):
        tr = integrate(model, seed, t_end)
        c = tr.states[:, 0] - tr.states[:, 1] ** 2 / 2
        print(f"seed {seed} t_end {t_end:+.0f}: {tr.termination:20s} "
              f"x - y^2/2 drift {np.ptp(c):.1e}")
