"""Singularity order, genericity conditions and explicit coefficients.

Two complementary routes are used.  The chart route fits the Taylor
coefficients of ``h_0(z', .)`` along the straightened flow and yields the
order ``ell``, its sign and the rank of the unfolding map.  The jet route
evaluates the closed-form conditions and coefficients for ``m = 1`` and
``m = 2`` (and the one-parameter line case) from exact derivatives of F.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .desingular import divide_by_x, drift_at, verify_manifold
from .errors import (
    Degenerate,
    DegenerateCoefficient,
    EqManifoldError,
    NonHyperbolic,
    NotABifurcationPoint,
    NotOnManifold,
)
from .field import FieldModel, MultiJet, jet
from .flowbox import FlowBoxChart, build_chart, chart_to_phase

__all__ = [
    "GermFit",
    "fit_germ",
    "singularity_order",
    "unfolding_rank",
    "normalized_germ",
    "Condition",
    "genericity_m1",
    "M2Verdicts",
    "genericity_m2",
    "cusp_coefficients",
    "ParameterCaseReport",
    "parameter_case_classify",
    "ClassificationReport",
    "classify",
]


class ManifoldViolation(EqManifoldError):
    kind = "ManifoldViolation"

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"F(0, y) does not vanish: residual {report.max_residual:.3g} at {report.worst_point}"
        )


# ---------------------------------------------------------------------------
# germ fitting along the chart


@dataclass(frozen=True)
class GermFit:
    """Taylor coefficients of ``s -> h_0(z', s)``, optionally with ``d/dz'``."""

    zp: np.ndarray
    coefficients: np.ndarray  # c_0 .. c_N
    gradient: np.ndarray | None  # (N + 1, m) derivatives of c_k w.r.t. z'
    radius: float


def _chebyshev_nodes(n: int) -> np.ndarray:
    return np.cos(np.pi * (np.arange(n) + 0.5) / n)


def fit_germ(
    chart: FlowBoxChart,
    zp=None,
    max_order: int = 6,
    radius: float | None = None,
    *,
    gradient: bool = False,
) -> GermFit:
    """Fit ``h_0(z', s) = sum_k c_k s^k`` for ``k <= max_order``.

    Interpolates on Chebyshev stencils of degree ``max_order + 3`` at radii
    ``r`` and ``r/2``; the pair is Richardson-extrapolated coefficientwise
    against the leading aliasing term ``O(r^(D+1-k))``.
    """
    m = chart.m
    zp = np.zeros(m) if zp is None else np.asarray(zp, float)
    deg = max_order + 3
    r = 0.2 * chart.chart_radius if radius is None else float(radius)
    u = _chebyshev_nodes(deg + 1)
    V = np.vander(u, deg + 1, increasing=True)
    radii = (r, r / 2)
    s = np.concatenate([rr * u for rr in radii])
    Z = np.column_stack([np.tile(zp, (s.size, 1)), s])
    if gradient:
        P, D = chart_to_phase(chart, Z, jacobian=True)
        values = np.column_stack([P[:, 0], D[:, 0, :m]])
    else:
        values = chart_to_phase(chart, Z)[:, :1]
    fits = []
    for i, rr in enumerate(radii):
        block = values[i * u.size:(i + 1) * u.size]
        coef = np.linalg.solve(V, block)
        fits.append(coef / rr ** np.arange(deg + 1)[:, None])
    k = np.arange(deg + 1)[:, None]
    w = 2.0 ** (deg + 1 - k)
    extrapolated = (w * fits[1] - fits[0]) / (w - 1.0)
    out = extrapolated[: max_order + 1]
    return GermFit(
        zp=zp,
        coefficients=out[:, 0].copy(),
        gradient=out[:, 1:].copy() if gradient else None,
        radius=r,
    )


def singularity_order(
    chart: FlowBoxChart,
    max_order: int = 6,
    tol: float | None = None,
    radius: float | None = None,
) -> tuple[int, int, np.ndarray]:
    """Order ``ell`` and sign of the germ ``h_0(0, ..., 0, s)``.

    ``ell + 1`` is the index of the first Taylor coefficient exceeding
    ``tol * max(1, max|c_k|)``.  Returns ``(ell, sign, coefficients)``.
    """
    tol = chart.reduced.tolerances.order if tol is None else tol
    fit = fit_germ(chart, max_order=max_order, radius=radius)
    c = fit.coefficients
    threshold = tol * max(1.0, float(np.max(np.abs(c[1:]))))
    for k in range(1, max_order + 1):
        if abs(c[k]) > threshold:
            return k - 1, int(np.sign(c[k])), c
    raise Degenerate(f"all germ coefficients up to order {max_order} vanish (<= {threshold:.2g})")


def unfolding_rank(
    chart: FlowBoxChart,
    ell: int,
    max_order: int | None = None,
    radius: float | None = None,
    rel_tol: float = 1e-6,
) -> tuple[int, np.ndarray, np.ndarray]:
    """Rank of ``(z_0..z_{m-1}) -> (zeta_0..zeta_{ell-1})`` at the section origin.

    The Jacobian is obtained by applying the germ fit to the variational
    derivatives of the chart.  Returns ``(rank, singular values, jacobian)``.
    """
    if ell < 1:
        raise ValueError("unfolding rank needs ell >= 1")
    order = max(ell + 1, max_order or 0)
    fit = fit_germ(chart, max_order=order, radius=radius, gradient=True)
    J = fit.gradient[:ell]
    sv = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(sv > rel_tol * sv[0])) if sv.size and sv[0] > 0 else 0
    return rank, sv, J


def normalized_germ(coefficients, ell: int) -> tuple[np.ndarray, float, int]:
    """Normalize ``sum c_k w^k`` to ``+-w^(ell+1) + sum_{k<ell} zeta_k w^k``.

    Removes the ``w^ell`` term by the shift ``w = z + c_ell / ((ell+1) c_{ell+1})``
    and rescales time by ``|c_{ell+1}|``.  Higher-order terms are dropped.
    Returns ``(zeta_0..zeta_{ell-1}, shift, sign)``.
    """
    c = np.asarray(coefficients, float)[: ell + 2]
    lead = c[ell + 1]
    shift = c[ell] / ((ell + 1) * lead)
    # coefficients of the polynomial in w = z + shift, i.e. z = w - shift
    poly = np.polynomial.Polynomial(c)
    shifted = poly(np.polynomial.Polynomial([-shift, 1.0])).coef
    shifted = np.pad(shifted, (0, max(0, ell + 2 - shifted.size)))
    return shifted[:ell] / abs(lead), float(shift), int(np.sign(lead))


# ---------------------------------------------------------------------------
# jet conditions


@dataclass(frozen=True)
class Condition:
    name: str
    value: float
    passed: bool
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "passed", bool(self.passed))

    def to_dict(self) -> dict:
        return {"value": self.value, "passed": self.passed, "description": self.description}


def _zero_tol(j: MultiJet, rel: float) -> float:
    return rel * (1.0 + j.max_norm())


def _manifold_condition(j: MultiJet, tol: float) -> Condition:
    worst = 0.0
    for alpha, c in j.coefficients.items():
        if alpha[0] == 0:
            worst = max(worst, float(np.max(np.abs(c))))
    return Condition("i", worst, worst <= tol, "F(0, y) = 0 (jet entries without x vanish)")


def genericity_m1(j: MultiJet, rel_tol: float = 1e-9) -> dict[str, Condition]:
    """Transcritical point on a line of equilibria: crossing and drift."""
    if j.ncomp != 2:
        raise ValueError("genericity_m1 needs m = 1")
    tol = _zero_tol(j, rel_tol)
    fx = j.d(0, x=1)
    if abs(fx) > tol:
        raise NotABifurcationPoint(f"d_x f = {fx!r} != 0: the line is normally hyperbolic here")
    crossing = j.d(0, x=1, y1=1)
    drift = j.d(1, x=1)
    return {
        "manifold": _manifold_condition(j, tol),
        "transcritical": Condition("transcritical", fx, True, "d_x f = 0"),
        "crossing": Condition("crossing", crossing, abs(crossing) > tol, "d_y d_x f != 0"),
        "drift": Condition("drift", drift, abs(drift) > tol, "d_x g != 0"),
    }


@dataclass(frozen=True)
class M2Verdicts:
    conditions: dict[str, Condition]
    rotation: np.ndarray  # y_new = rotation @ y
    a: float
    b: float
    partials: dict[str, float] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())


def genericity_m2(j: MultiJet, rel_tol: float = 1e-9) -> M2Verdicts:
    """Conditions (i)-(vi) of a drift singularity on a plane of equilibria.

    The y-plane is first rotated so the gradient of ``d_x f`` points along
    ``+y1``, then ``y2`` is reflected if needed to make ``d_x g_2 >= 0``.
    """
    if j.ncomp != 3:
        raise ValueError("genericity_m2 needs m = 2")
    tol = _zero_tol(j, rel_tol)
    fx = j.d(0, x=1)
    if abs(fx) > tol:
        raise NotABifurcationPoint(f"d_x f = {fx!r} != 0: the plane is normally hyperbolic here")
    grad = np.array([j.d(0, x=1, y1=1), j.d(0, x=1, y2=1)])
    hess = np.array([
        [j.d(0, x=1, y1=2), j.d(0, x=1, y1=1, y2=1)],
        [j.d(0, x=1, y1=1, y2=1), j.d(0, x=1, y2=2)],
    ])
    gx = np.array([j.d(1, x=1), j.d(2, x=1)])
    G = np.array([
        [j.d(1, x=1, y1=1), j.d(1, x=1, y2=1)],
        [j.d(2, x=1, y1=1), j.d(2, x=1, y2=1)],
    ])
    norm = float(np.hypot(*grad))
    R = np.eye(2) if norm <= tol else np.array([[grad[0], grad[1]], [-grad[1], grad[0]]]) / norm
    if (R @ gx)[1] < 0:
        R = np.diag([1.0, -1.0]) @ R
    grad_r = R @ grad
    hess_r = R @ hess @ R.T
    gx_r = R @ gx
    G_r = R @ G @ R.T
    b = float(grad_r[0])
    v = float(b * G_r[0, 1] + hess_r[1, 1] * gx_r[1])
    a = v * float(gx_r[1])
    conds = {
        "i": _manifold_condition(j, tol),
        "ii": Condition("ii", fx, True, "d_x f(0) = 0 (transcritical point)"),
        "iii": Condition("iii", b, b > tol, "d_y1 d_x f(0) > 0 after rotation"),
        "iv": Condition("iv", float(gx_r[0]), abs(gx_r[0]) <= tol, "d_x g_1(0) = 0"),
        "v": Condition(
            "v", v, abs(v) > tol,
            "d_y1 d_x f d_y2 d_x g_1 + d_y2^2 d_x f d_x g_2 != 0",
        ),
        "vi": Condition("vi", float(gx_r[1]), gx_r[1] > tol, "d_x g_2(0) > 0 after reflection"),
    }
    partials = {
        "dx_f": fx,
        "dy1_dx_f": b,
        "dy2_dx_f": float(grad_r[1]),
        "dy2dy2_dx_f": float(hess_r[1, 1]),
        "dx_g1": float(gx_r[0]),
        "dx_g2": float(gx_r[1]),
        "dy2_dx_g1": float(G_r[0, 1]),
    }
    return M2Verdicts(conditions=conds, rotation=R, a=a, b=b, partials=partials)


def cusp_coefficients(j: MultiJet, rel_tol: float = 1e-9) -> tuple[float, float]:
    """``(a, b)`` of the reduced cubic expansion at a drift singularity."""
    verdicts = genericity_m2(j, rel_tol)
    tol = _zero_tol(j, rel_tol)
    a, b = verdicts.a, verdicts.b
    if abs(a) <= tol or abs(b) <= tol:
        failed = [k for k, c in verdicts.conditions.items() if not c.passed]
        raise DegenerateCoefficient(
            f"a = {a!r}, b = {b!r} (failed conditions: {failed or 'none'})"
        )
    return a, b


# ---------------------------------------------------------------------------
# one-parameter family on a line of equilibria


@dataclass(frozen=True)
class ParameterCaseReport:
    a: float
    b: float
    c: float
    d: float
    sigma: float
    delta: float
    tau: float
    kind: str  # saddle | focus | node
    conditions: dict[str, Condition]
    reflections: tuple[str, ...]

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def bifurcating_equilibrium(self, lam: float) -> dict[str, list[float]]:
        """Predicted equilibrium of ``F~`` for parameter ``lam`` (leading order)."""
        lam_t = self.b * self.sigma * (-lam if "lam" in self.reflections else lam)
        xt = lam_t / self.delta
        y = -self.a * xt / self.b
        if "y" in self.reflections:
            y = -y
        return {"transformed": [xt, 0.0], "original": [xt, y], "lambda_tilde": lam_t}

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "c": self.c, "d": self.d, "sigma": self.sigma,
            "delta": self.delta, "tau": self.tau, "type": self.kind,
            "conditions": {k: c.to_dict() for k, c in self.conditions.items()},
            "reflections": list(self.reflections),
        }


def parameter_case_classify(model: FieldModel, anchor=None) -> ParameterCaseReport:
    """Classify the bifurcating equilibrium of ``F = x F~(x, y, lam)`` at ``lam = 0``.

    Extracts ``F~ = (a x + b y, c x + d y + sigma lam) + O(2)`` from the exact
    jet, normalizes ``b, sigma > 0`` by reflections and labels the
    equilibrium ``(lam~/delta, 0)`` as saddle, focus or node.
    """
    if model.parameter is None or model.m != 1:
        raise ValueError("parameter case needs m = 1 and a parameter")
    base = model.anchor if anchor is None else np.asarray(anchor, float)
    if abs(base[0]) > model.tolerances.manifold:
        raise NotOnManifold("anchor is not on {x = 0}")
    j = jet(model, np.append(base, 0.0), order=3)
    tol = _zero_tol(j, model.tolerances.zero)

    def coef(comp, alpha):
        return float(j.coefficient(alpha)[comp])

    a, b = coef(0, (2, 0, 0)), coef(0, (1, 1, 0))
    c, d, sigma = coef(1, (2, 0, 0)), coef(1, (1, 1, 0)), coef(1, (1, 0, 1))
    fx = coef(0, (1, 0, 0))
    f_lam = max(abs(coef(0, (1, 0, k))) for k in (1, 2))
    gx = coef(1, (1, 0, 0))
    conds = {
        "i": _manifold_condition(j, tol),
        "ii": Condition("ii", max(abs(fx), f_lam), abs(fx) <= tol and f_lam <= tol,
                        "d_x f(0, 0, lam) = 0 for all lam"),
        "iii": Condition("iii", b, abs(b) > tol, "d_y d_x f(0) != 0"),
        "iv": Condition("iv", gx, abs(gx) <= tol, "d_x g(0) = 0"),
        "v": Condition("v", sigma, abs(sigma) > tol, "d_lam d_x g(0) != 0"),
    }
    failed = [k for k, cnd in conds.items() if not cnd.passed]
    if failed:
        raise NotABifurcationPoint(f"parameter-case conditions failed: {failed}")
    reflections = []
    if b < 0:
        b, c, sigma = -b, -c, -sigma
        reflections.append("y")
    if sigma < 0:
        sigma = -sigma
        reflections.append("lam")
    delta = a * d - b * c
    tau = a + d
    hyperbolic = abs(delta) > tol and (delta < 0 or abs(tau) > tol)
    conds["vi"] = Condition("vi", delta, hyperbolic, "linearization of F~ is hyperbolic")
    if not hyperbolic:
        raise NonHyperbolic(f"delta = {delta!r}, tau = {tau!r}: purely imaginary eigenvalues")
    if delta < 0:
        kind = "saddle"
    elif tau * tau < 4 * delta:
        kind = "focus"
    else:
        kind = "node"
    return ParameterCaseReport(a, b, c, d, sigma, delta, tau, kind, conds, tuple(reflections))


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class ClassificationReport:
    mode: str
    m: int
    anchor: list[float]
    ell: int | None = None
    sign: int | None = None
    germ_coefficients: list[float] = field(default_factory=list)
    conditions: dict[str, Condition] = field(default_factory=dict)
    coefficients: dict[str, float] = field(default_factory=dict)
    unfolding_rank: int | None = None
    unfolding_singular_values: list[float] = field(default_factory=list)
    generic: bool = False
    flags: list[str] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "m": self.m,
            "anchor": self.anchor,
            "ell": self.ell,
            "sign": self.sign,
            "germ_coefficients": self.germ_coefficients,
            "conditions": {k: c.to_dict() for k, c in self.conditions.items()},
            "coefficients": self.coefficients,
            "unfolding_rank": self.unfolding_rank,
            "unfolding_singular_values": self.unfolding_singular_values,
            "generic": self.generic,
            "flags": self.flags,
            "diagnostics": self.diagnostics,
            **self.extra,
        }


def classify(
    model: FieldModel,
    anchor=None,
    max_order: int = 6,
    *,
    section_frame: np.ndarray | None = None,
    samples: int = 64,
) -> ClassificationReport:
    """Verify, desingularize, chart and classify the anchor point."""
    base = model.anchor if anchor is None else np.asarray(anchor, float)
    if base.shape != (model.dim,):
        raise ValueError(f"anchor must have {model.dim} entries")
    if abs(base[0]) > model.tolerances.manifold:
        raise NotOnManifold(f"anchor x-coordinate {float(base[0])!r} is not 0")
    if np.linalg.norm(base - model.anchor) > model.domain_radius:
        raise NotOnManifold("anchor lies outside the domain ball")

    manifold = verify_manifold(model, samples=samples)
    if not manifold.passed:
        raise ManifoldViolation(manifold)

    if model.parameter is not None:
        return _classify_parameter_case(model, base, manifold)

    report = ClassificationReport(mode="parameterless", m=model.m, anchor=base.tolist())
    report.extra["manifold"] = manifold.to_dict()
    reduced = divide_by_x(model, check=False).replace(anchor=base)
    report.extra["division_routes"] = list(reduced.division_routes)
    drift = drift_at(reduced, base)
    report.extra["drift"] = drift.to_dict()
    if drift.vanishing:
        report.flags.append("vanishing_drift")
        report.diagnostics.append("F~ vanishes at the anchor; the flow box is not available")
        return report

    chart = build_chart(reduced, base, section_frame=section_frame)
    report.extra["chart"] = chart.describe()
    try:
        ell, sign, coeffs = singularity_order(chart, max_order)
    except Degenerate as exc:
        report.flags.append("degenerate")
        report.diagnostics.append(str(exc))
        return report
    report.ell, report.sign = ell, sign
    report.germ_coefficients = [float(v) for v in coeffs[: ell + 2]]

    j = jet(model, base, order=4)
    tol = model.tolerances.zero
    if ell >= 1:
        try:
            if model.m == 1:
                report.conditions = genericity_m1(j, tol)
            elif model.m == 2:
                verdicts = genericity_m2(j, tol)
                report.conditions = verdicts.conditions
                report.extra["rotation"] = verdicts.rotation.tolist()
                report.extra["partials"] = verdicts.partials
                report.coefficients = {"a": verdicts.a, "b": verdicts.b}
                if verdicts.all_passed:
                    report.coefficients["sign_a"] = float(np.sign(verdicts.a))
                    if ell == 2:
                        report.coefficients["cubic_fitted"] = float(coeffs[3])
                        report.coefficients["a_over_6"] = verdicts.a / 6.0
                        if np.sign(verdicts.a) != sign:
                            report.diagnostics.append(
                                "sign of a disagrees with the fitted cubic coefficient"
                            )
        except NotABifurcationPoint as exc:
            report.diagnostics.append(f"jet route: {exc}")
        rank, sv, _ = unfolding_rank(chart, ell, max_order)
        report.unfolding_rank = rank
        report.unfolding_singular_values = [float(v) for v in sv]
    if ell > model.m:
        report.flags.append("order_exceeds_dimension")
    if ell >= 1 and report.unfolding_rank != min(ell, model.m):
        report.flags.append("unfolding_rank_deficient")
    report.generic = ell <= model.m and not report.flags
    return report


def _classify_parameter_case(model, base, manifold) -> ClassificationReport:
    report = ClassificationReport(mode="parameter-dependent", m=model.m, anchor=base.tolist())
    report.extra["manifold"] = manifold.to_dict()
    case = parameter_case_classify(model, base)
    report.conditions = case.conditions
    report.coefficients = {k: getattr(case, k) for k in ("a", "b", "c", "d", "sigma", "delta", "tau")}
    report.extra["type"] = case.kind
    report.extra["reflections"] = list(case.reflections)
    report.generic = True
    return report
