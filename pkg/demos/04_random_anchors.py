"""Singularity orders at random anchors.

For random fields with a plane of equilibria the order at a point is 0
(normally hyperbolic), 1 along the curve of transcritical points and 2 at
isolated drift singularities; higher orders need extra conditions and are
flagged when they occur.
"""
from collections import Counter

import numpy as np

from eqmanifold import FieldModel, classify

rng = np.random.default_rng(0)


def quadratic(names, zero_constant=False):
    terms = ["1", *names, *[f"{a}*{b}" for i, a in enumerate(names) for b in names[i:]]]
    c = rng.uniform(-1, 1, len(terms))
    if zero_constant:
        c[0] = 0.0
    return " + ".join(f"({v:.6f})*{t}" for v, t in zip(c, terms))


names = ["x", "y1", "y2"]
tally = Counter()
for i in range(30):
    f = quadratic(names, zero_constant=i % 2 == 1)
    g = [quadratic(names) for _ in range(2)]
    model = FieldModel.from_strings(f"x*({f})", [f"x*({gi})" for gi in g], domain_radius=0.5)
    rep = classify(model)
    tally[(rep.ell, tuple(rep.flags))] += 1
for (ell, flags), n in sorted(tally.items(), key=str):
    print(f"ell = {ell}, flags = {list(flags)}: {n} anchors")
