"""One-parameter drift singularity on a line of equilibria.

Near lam = 0 an equilibrium of F~ crosses the line; its type (saddle, focus
or node) follows from delta = ad - bc and tau = a + d.
"""
import numpy as np

from eqmanifold import builtin, divide_by_x
from eqmanifold.classify import parameter_case_classify
from eqmanifold.dynamics import locate_equilibrium

for name in ("paramdrift", "paramdrift-focus", "paramdrift-node"):
    model = builtin(name)
    rep = parameter_case_classify(model)
    print(f"{name}: (a, b, c, d, sigma) = {(rep.a, rep.b, rep.c, rep.d, rep.sigma)}, "
          f"delta = {rep.delta:g}, tau = {rep.tau:g} -> {rep.kind}")
    for lam in (-0.1, 0.05, 0.1):
        predicted = rep.bifurcating_equilibrium(lam)
        reduced = divide_by_x(model.at_parameter(lam))
        eq = locate_equilibrium(lambda p: reduced.rhs(p), [0.0, 0.0])
        side = "x > 0" if eq.point[0] > 0 else "x < 0"
        print(f"   lam {lam:+.2f}: equilibrium {np.round(eq.point, 6)} ({side}), predicted "
              f"{np.round(predicted['original'], 6)}, eigenvalues {np.round(eq.eigenvalues, 4)}")
