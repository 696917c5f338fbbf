"""Equilibrium-manifold verification and division of the field by ``x``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import EvaluationError, NotDivisible
from .expr import Expression, factor_out, from_polynomial, quadrature_quotient, to_polynomial
from .field import FieldModel, MultiJet

__all__ = [
    "ManifoldReport",
    "verify_manifold",
    "divide_by_x",
    "quotient",
    "divide_jet_by_x",
    "DriftReport",
    "drift_at",
]


@dataclass(frozen=True)
class ManifoldReport:
    passed: bool
    max_residual: float
    worst_point: list[float]
    samples: int
    tol: float
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "max_residual": self.max_residual,
            "worst_point": self.worst_point,
            "samples": self.samples,
            "tol": self.tol,
            "message": self.message,
        }


def manifold_samples(model: FieldModel, samples: int) -> np.ndarray:
    """Deterministic quasi-random points of {x = 0} inside the domain ball.

    Rows are full variable vectors (x, y, [lam]); the anchor comes first.
    In parameter mode the parameter is sampled in ``[-R, R]`` as well.
    """
    extra = 1 if model.parameter else 0
    d = model.m + extra
    center = np.concatenate([model.anchor[1:], np.zeros(extra)])
    pts = [center]
    sampler = qmc.Halton(d=d, scramble=False)
    sampler.fast_forward(1)
    while len(pts) < samples:
        u = 2.0 * sampler.random(max(16, 2 * samples)) - 1.0
        inside = u[np.linalg.norm(u, axis=1) <= 1.0]
        pts.extend(center + model.domain_radius * inside)
    ys = np.array(pts[:samples])
    return np.hstack([np.zeros((samples, 1)), ys])


def verify_manifold(model: FieldModel, samples: int = 64, tol: float | None = None) -> ManifoldReport:
    """Check ``F(0, y) = 0`` at quasi-random ``y`` of the domain ball."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    tol = model.tolerances.manifold if tol is None else float(tol)
    worst, worst_pt, message = -1.0, None, ""
    for p in manifold_samples(model, samples):
        try:
            r = float(np.max(np.abs(model.evaluate(p))))
        except EvaluationError as exc:
            r, message = float("inf"), f"evaluation failed at {p.tolist()}: {exc}"
        if r > worst:
            worst, worst_pt = r, p
        if r == float("inf"):
            break
    return ManifoldReport(
        passed=worst <= tol,
        max_residual=worst,
        worst_point=[float(v) for v in worst_pt],
        samples=samples,
        tol=tol,
        message=message,
    )


def quotient(expr: Expression, tol: float = 1e-10) -> tuple[Expression, str]:
    """``expr / x`` and the route used: ``symbolic``, ``polynomial`` or ``quadrature``."""
    q = factor_out(expr, 0)
    if q is not None:
        return q, "symbolic"
    poly = to_polynomial(expr)
    if poly is not None:
        bad = {k: v for k, v in poly.items() if k[0] == 0 and abs(v) > tol}
        if bad:
            mono, coef = max(bad.items(), key=lambda kv: abs(kv[1]))
            raise NotDivisible(
                f"term {coef!r} * {dict(zip(expr.variables, mono))} carries no factor x"
            )
        shifted = {(k[0] - 1,) + k[1:]: v for k, v in poly.items() if k[0] > 0}
        return from_polynomial(shifted, expr.variables), "polynomial"
    return quadrature_quotient(expr, 0), "quadrature"


def divide_by_x(model: FieldModel, *, check: bool = True) -> FieldModel:
    """Desingularized field ``F~`` with ``F = x F~``.

    Non-polynomial components that resist structural factoring fall back to
    the quadrature form ``int_0^1 d_x F(s x, y) ds``; those are only accepted
    when the manifold residual check passes.
    """
    tol = model.tolerances.manifold
    parts, routes = [], []
    for comp in model.components:
        q, route = quotient(comp, tol)
        parts.append(q)
        routes.append(route)
    if check and "quadrature" in routes:
        report = verify_manifold(model)
        if not report.passed:
            raise NotDivisible(
                f"F(0, y) does not vanish: residual {report.max_residual:.3g} "
                f"at {report.worst_point}"
            )
    reduced = FieldModel(
        m=model.m,
        f=parts[0],
        g=tuple(parts[1:]),
        parameter=model.parameter,
        anchor=model.anchor,
        domain_radius=model.domain_radius,
        tolerances=model.tolerances,
        name=f"{model.name}/x" if model.name else "",
        division_routes=tuple(routes),
    )
    return reduced


def divide_jet_by_x(j: MultiJet, tol: float = 1e-10) -> MultiJet:
    """Shift every x-exponent down by one; entries without x must vanish."""
    coefficients = {}
    scale = 1.0 + j.max_norm()
    for alpha, c in j.coefficients.items():
        if alpha[0] == 0:
            if np.max(np.abs(c)) > tol * scale:
                raise NotDivisible(f"jet entry {alpha} = {c.tolist()} has no factor x")
            continue
        coefficients[(alpha[0] - 1,) + alpha[1:]] = np.array(c)
    return MultiJet(base=j.base, order=j.order - 1, coefficients=coefficients,
                    variables=j.variables, ncomp=j.ncomp)


@dataclass(frozen=True)
class DriftReport:
    point: list[float]
    drift: list[float]
    norm: float
    vanishing: bool

    def to_dict(self) -> dict:
        return {"point": self.point, "drift": self.drift, "norm": self.norm,
                "vanishing": self.vanishing}


def drift_at(reduced: FieldModel, point=None, tol: float | None = None) -> DriftReport:
    """Value of ``F~`` at a point of {x = 0}; flags a vanishing drift."""
    p = reduced.anchor if point is None else np.asarray(point, float)
    if p.shape[0] == reduced.dim and reduced.parameter:
        p = np.append(p, 0.0)
    if p[0] != 0.0:
        raise ValueError("drift is only defined on the manifold {x = 0}")
    tol = reduced.tolerances.drift if tol is None else tol
    v = reduced.evaluate(p)
    norm = float(np.linalg.norm(v))
    return DriftReport(point=[float(t) for t in p], drift=[float(t) for t in v],
                       norm=norm, vanishing=norm < tol)
