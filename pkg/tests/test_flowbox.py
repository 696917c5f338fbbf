import numpy as np
import pytest

from eqmanifold import FieldModel, build_chart, chart_to_phase, divide_by_x, phase_to_chart
from eqmanifold.errors import LeftDomain, VanishingDrift
from eqmanifold.flowbox import conserved_coordinates, reduced_rhs


def chart_of(m, **kw):
    return build_chart(divide_by_x(m), **kw)


def closed_form_cusp(Z):
    z0, z1, z2 = Z.T
    return np.column_stack([z0 + z1 * z2 + z2**3 / 6, z1 + z2**2 / 2, z2])


def test_frames(driftsing, transcritical):
    c = chart_of(driftsing)
    assert c.drift.tolist() == [0, 0, 1]
    assert np.allclose(c.frame, [[1, 0], [0, 1], [0, 0]])
    c = chart_of(transcritical)
    assert c.drift.tolist() == [0, 1]
    assert np.allclose(c.frame, [[1], [0]])
    with pytest.raises(VanishingDrift):
        chart_of(FieldModel.from_strings("x*y1", ["x*y2", "x*y2"]))


def test_frame_invariants_for_oblique_drift():
    m = FieldModel.from_strings("x*(0.3 + y1)", ["x*(0.5 - y2)", "x*(2 + y1)"])
    c = chart_of(m)
    F = c.frame
    assert np.max(np.abs(F.T @ F - np.eye(2))) <= 1e-12
    assert np.max(np.abs(F.T @ c.drift)) <= 1e-12
    assert np.array_equal(c.section(np.zeros(2)), c.anchor)


def test_closed_form_charts(driftsing, transcritical):
    c = chart_of(driftsing)
    g = np.linspace(-0.25, 0.25, 10)
    Z = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    assert np.max(np.abs(chart_to_phase(c, Z) - closed_form_cusp(Z))) <= 1e-8
    assert np.max(np.abs(reduced_rhs(c, Z) - closed_form_cusp(Z)[:, 0])) <= 1e-8

    c = chart_of(transcritical)
    Z = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    exact = np.column_stack([Z[:, 0] + Z[:, 1] ** 2 / 2, Z[:, 1]])
    assert np.max(np.abs(chart_to_phase(c, Z) - exact)) <= 1e-8
    assert np.array_equal(chart_to_phase(c, np.zeros(2)), np.zeros(2))


def test_inverse_closed_forms(driftsing, transcritical, rng):
    c = chart_of(driftsing)
    P = rng.uniform(-0.3, 0.3, (50, 3))
    x, y1, y2 = P.T
    expected = np.column_stack([x - y1 * y2 + y2**3 / 3, y1 - y2**2 / 2, y2])
    assert np.max(np.abs(phase_to_chart(c, P) - expected)) <= 1e-8
    c = chart_of(transcritical)
    P = rng.uniform(-0.5, 0.5, (50, 2))
    expected = np.column_stack([P[:, 0] - P[:, 1] ** 2 / 2, P[:, 1]])
    assert np.max(np.abs(phase_to_chart(c, P) - expected)) <= 1e-8
    assert np.max(np.abs(phase_to_chart(c, np.zeros(2)))) <= 1e-15


def test_round_trip_general_field(rng):
    m = FieldModel.from_strings("x*(y1 + y2^2 + sin(x))", ["x*(y2 - 0.2*y1)", "x*(1 + 0.3*y1^2)"])
    c = chart_of(m, chart_radius=0.5)
    P = rng.normal(size=(200, 3))
    P *= (0.5 * rng.uniform(0, 1, 200) ** (1 / 3) / np.linalg.norm(P, axis=1))[:, None]
    Z = phase_to_chart(c, P)
    back = chart_to_phase(c, Z, check_radius=False)
    assert np.max(np.linalg.norm(back - P, axis=1)) <= 1e-8


def test_jacobian_matches_finite_differences():
    m = FieldModel.from_strings("x*(y1 + y2^2)", ["x*(y2 + x)", "x*(1 + y1)"])
    c = chart_of(m)
    z = np.array([0.05, -0.1, 0.2])
    _, D = chart_to_phase(c, z, jacobian=True)
    h = 1e-6
    fd = np.column_stack([
        (chart_to_phase(c, z + h * e) - chart_to_phase(c, z - h * e)) / (2 * h) for e in np.eye(3)
    ])
    assert np.allclose(D, fd, atol=1e-7)


def test_chart_radius_enforced(driftsing):
    c = chart_of(driftsing, chart_radius=0.5)
    with pytest.raises(LeftDomain):
        chart_to_phase(c, [0.6, 0, 0])
    with pytest.raises(LeftDomain):
        phase_to_chart(c, [0, 0.6, 0])


def test_conserved_on_manifold_section(driftsing):
    c = chart_of(driftsing)
    p = np.array([0.0, 0.3, 0.0])
    assert np.allclose(conserved_coordinates(c, p), [0.0, 0.3], atol=1e-14)


def test_custom_section_frame_validation(driftsing):
    red = divide_by_x(driftsing)
    ok = np.array([[0, 1], [1, 0], [0, 0]], float)
    build_chart(red, section_frame=ok)
    with pytest.raises(ValueError):
        build_chart(red, section_frame=np.array([[1, 0], [0, 1], [0, 1]], float))
    with pytest.raises(ValueError):
        build_chart(red, section_frame=np.array([[1, 0], [0, 0.6], [0, 0.8]], float))


def test_zero_set_lies_on_manifold(rng):
    m = FieldModel.from_strings("x*(y1 + 0.5*y2^2)", ["x*(y2 + 0.3*y1)", "x*(1 + 0.2*y2)"])
    c = chart_of(m)
    # solve h_0 = 0 for z_0 at random (z_1, z_2) by secant iteration
    for z1, z2 in rng.uniform(-0.3, 0.3, (10, 2)):
        a, b = -0.2, 0.2
        fa = reduced_rhs(c, [a, z1, z2])
        fb = reduced_rhs(c, [b, z1, z2])
        for _ in range(40):
            s = b - fb * (b - a) / (fb - fa)
            a, fa, b, fb = b, fb, s, reduced_rhs(c, [s, z1, z2])
            if abs(fb) <= 1e-12:
                break
        assert abs(fb) <= 1e-10
        assert abs(chart_to_phase(c, [b, z1, z2])[0]) <= 1e-7
