import numpy as np
import pytest

from eqmanifold import FieldModel, build_chart, builtin, classify, divide_by_x, jet
from eqmanifold.classify import (
    ManifoldViolation,
    cusp_coefficients,
    genericity_m1,
    genericity_m2,
    normalized_germ,
    parameter_case_classify,
    singularity_order,
    unfolding_rank,
)
from eqmanifold.errors import Degenerate, NonHyperbolic, NotABifurcationPoint, NotOnManifold


def chart(f, g, **kw):
    return build_chart(divide_by_x(FieldModel.from_strings(f, g, **kw)))


@pytest.mark.parametrize(
    "f, g, ell, sign",
    [
        ("x*y1", ["x*y2", "x"], 2, 1),
        ("x*y1", ["x"], 1, 1),
        ("x*(2 + y1)", ["x"], 0, 1),
        ("x*(-3 + y1)", ["x"], 0, -1),
        ("x*y1^2", ["x"], 2, 1),
        ("-x*y1", ["x"], 1, -1),
    ],
)
def test_singularity_order_examples(f, g, ell, sign):
    got_ell, got_sign, c = singularity_order(chart(f, g))
    assert (got_ell, got_sign) == (ell, sign)


def test_degenerate_germ():
    with pytest.raises(Degenerate):
        singularity_order(chart("x*x", ["x"]), max_order=4)


def test_unfolding_rank_examples():
    c = chart("x*y1", ["x*y2", "x"])
    rank, sv, J = unfolding_rank(c, 2)
    assert rank == 2
    assert np.allclose(J, np.eye(2), atol=1e-8)
    rank, _, J = unfolding_rank(chart("x*y1", ["x"]), 1)
    assert rank == 1 and J[0, 0] == pytest.approx(1.0, abs=1e-8)
    rank, _, _ = unfolding_rank(chart("x*y1^2", ["x"]), 2)
    assert rank == 1


def test_normalized_germ():
    # 2 (z + 1)^3 - 6 (z + 1) + 4 = 2 z^3 + 6 z^2 + 0 z + 0
    zeta, shift, sign = normalized_germ([0.0, 0.0, 6.0, 2.0], 2)
    assert shift == pytest.approx(1.0)
    assert sign == 1
    assert np.allclose(zeta, [2.0, -3.0])


def _jet(f, g):
    return jet(FieldModel.from_strings(f, g), order=4)


def test_genericity_m1_examples():
    v = genericity_m1(_jet("x*y", ["x"]))
    assert v["crossing"].passed and v["drift"].passed
    v = genericity_m1(_jet("x*y", ["x*y"]))
    assert v["crossing"].passed and not v["drift"].passed
    v = genericity_m1(_jet("x*y^2", ["x"]))
    assert not v["crossing"].passed and v["drift"].passed
    with pytest.raises(NotABifurcationPoint):
        genericity_m1(_jet("x*(1 + y)", ["x"]))


def test_genericity_m2_examples():
    v = genericity_m2(_jet("x*y1", ["x*y2", "x"]))
    assert v.all_passed and v.conditions["v"].value == 1.0
    v = genericity_m2(_jet("x*y1", ["x*y1", "x"]))
    assert v.conditions["iv"].passed and not v.conditions["v"].passed
    assert v.conditions["v"].value == 0.0
    v = genericity_m2(_jet("x*y1", ["x", "x"]))
    assert not v.conditions["iv"].passed


def test_genericity_m2_rotation():
    # gradient of d_x f along -y2: rotated so it points along +y1
    v = genericity_m2(_jet("-x*y2", ["x", "x*y1"]))
    R = v.rotation
    assert np.allclose(R @ R.T, np.eye(2))
    assert v.conditions["iii"].passed and v.conditions["iv"].passed and v.conditions["vi"].passed


@pytest.mark.parametrize(
    "f, g, a, b",
    [
        ("x*y1", ["x*y2", "x"], 1.0, 1.0),
        ("x*(y1 + y2^2)", ["0*x", "x"], 2.0, 1.0),
        ("x*y1", ["-x*y2", "x"], -1.0, 1.0),
    ],
)
def test_cusp_coefficients(f, g, a, b):
    assert cusp_coefficients(_jet(f, g)) == pytest.approx((a, b), abs=1e-12)


@pytest.mark.parametrize(
    "coeffs, kind, delta, tau",
    [
        ((0, 1, 1, 0), "saddle", -1.0, 0.0),
        ((1, 1, -1, 1), "focus", 2.0, 2.0),
        ((1, 1, 0, 3), "node", 3.0, 4.0),
    ],
)
def test_parameter_case_examples(coeffs, kind, delta, tau):
    a, b, c, d = coeffs
    m = FieldModel.from_strings(f"x*({a}*x + {b}*y)", [f"x*({c}*x + {d}*y + lam)"], parameter=True)
    rep = parameter_case_classify(m)
    assert rep.kind == kind
    assert (rep.delta, rep.tau) == (delta, tau)
    ev = np.linalg.eigvals(rep.matrix)
    assert abs(np.prod(ev) - rep.delta) <= 1e-12
    assert abs(np.sum(ev) - rep.tau) <= 1e-12


def test_parameter_case_reflections_and_hyperbolicity():
    m = FieldModel.from_strings("x*(x - y)", ["x*(x + 2*y - 3*lam)"], parameter=True)
    rep = parameter_case_classify(m)
    assert rep.b > 0 and rep.sigma > 0
    assert rep.reflections == ("y",)  # y -> -y also flips sigma
    rep = parameter_case_classify(
        FieldModel.from_strings("x*(x + y)", ["x*(x + 2*y - 3*lam)"], parameter=True))
    assert rep.reflections == ("lam",) and rep.sigma == 3.0
    m = FieldModel.from_strings("x*y", ["x*(-x + lam)"], parameter=True)
    with pytest.raises(NonHyperbolic):
        parameter_case_classify(m)


def test_classify_pipeline_builtins():
    rep = classify(builtin("driftsing"))
    assert (rep.ell, rep.sign, rep.unfolding_rank) == (2, 1, 2)
    assert rep.coefficients["a"] == 1 and rep.coefficients["b"] == 1
    assert all(c.passed for c in rep.conditions.values())
    assert rep.coefficients["cubic_fitted"] == pytest.approx(1 / 6, abs=1e-9)
    assert rep.generic

    rep = classify(builtin("transcritical"))
    assert (rep.ell, rep.sign, rep.unfolding_rank) == (1, 1, 1)
    assert rep.conditions["crossing"].passed and rep.conditions["drift"].passed

    rep = classify(builtin("paramdrift"))
    assert rep.mode == "parameter-dependent" and rep.extra["type"] == "saddle"


def test_classify_flags_and_errors():
    rep = classify(FieldModel.from_strings("x*y1^2", ["x"]))
    assert rep.ell == 2 and "order_exceeds_dimension" in rep.flags and not rep.generic
    rep = classify(FieldModel.from_strings("x*y1", ["x*y2", "x*y2"]))
    assert "vanishing_drift" in rep.flags
    with pytest.raises(NotOnManifold):
        classify(builtin("driftsing"), anchor=[0.1, 0, 0])
    with pytest.raises(ManifoldViolation):
        classify(FieldModel.from_strings("x*y1 + 0.001", ["x*y2", "x"]))


def test_classify_report_serializes():
    d = classify(builtin("driftsing")).to_dict()
    assert d["conditions"]["v"] == {"value": 1.0, "passed": True, "description": d["conditions"]["v"]["description"]}
    assert isinstance(d["conditions"]["iii"]["passed"], bool)


def random_drift_singular(rng):
    """Random field satisfying (i)-(vi) up to a rotation/reflection of y."""
    b = rng.uniform(0.5, 1.5) * rng.choice([-1, 1])
    p, q = rng.uniform(-1, 1, 2)
    s = rng.uniform(0.5, 1.5) * rng.choice([-1, 1])
    while abs(b * p + 2 * q * s) < 0.2:
        p = rng.uniform(-1, 1)
    c = rng.uniform(-0.3, 0.3, 8)
    theta = rng.uniform(0, 2 * np.pi)
    co, si = np.cos(theta), np.sin(theta)
    # u1, u2 are rotated y-coordinates
    u1 = f"({co:.17g}*y1 + {si:.17g}*y2)"
    u2 = f"({-si:.17g}*y1 + {co:.17g}*y2)"
    ft = f"{b:.17g}*{u1} + {q:.17g}*{u2}^2 + {c[0]:.17g}*x + {c[1]:.17g}*{u1}*{u2}"
    g1 = f"{p:.17g}*{u2} + {c[2]:.17g}*{u1} + {c[3]:.17g}*x + {c[4]:.17g}*{u2}^2"
    g2 = f"{s:.17g} + {c[5]:.17g}*{u1} + {c[6]:.17g}*{u2} + {c[7]:.17g}*x"
    # velocity in y is R^T (g1, g2)
    gy1 = f"{co:.17g}*({g1}) - {si:.17g}*({g2})"
    gy2 = f"{si:.17g}*({g1}) + {co:.17g}*({g2})"
    model = FieldModel.from_strings(f"x*({ft})", [f"x*({gy1})", f"x*({gy2})"], domain_radius=0.5)
    return model


def test_sign_consistency_random_drift_singularities(rng):
    for _ in range(10):
        m = random_drift_singular(rng)
        rep = classify(m)
        assert all(c.passed for c in rep.conditions.values()), rep.to_dict()["conditions"]
        assert rep.ell == 2
        assert rep.sign == np.sign(rep.coefficients["a"])
        assert rep.unfolding_rank == 2


def test_chart_independence(driftsing, rng):
    red = divide_by_x(driftsing)
    for _ in range(10):
        th = rng.uniform(0, 2 * np.pi)
        frame = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)], [0, 0]])
        c = build_chart(red, section_frame=frame)
        ell, sign, _ = singularity_order(c)
        assert (ell, sign) == (2, 1)
