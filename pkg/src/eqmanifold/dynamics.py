"""Trajectories, transcritical curves, heteroclinic targets and fold curves."""
from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .classify import fit_germ, normalized_germ
from .errors import (
    EqManifoldError,
    EvaluationError,
    FoldInCurve,
    IntegrationError,
    NoConvergence,
    NoLanding,
    NoSeedConvergence,
)
from .expr import differentiate, substitute
from .field import FieldModel
from .flowbox import FlowBoxChart, chart_to_phase
from .ode import Event, dopri5

__all__ = [
    "TrajectoryOptions",
    "Trajectory",
    "integrate",
    "phase_portrait",
    "recurrence",
    "TranscriticalCurve",
    "transcritical_curve",
    "HeteroclinicTarget",
    "heteroclinic_targets",
    "fold_curve",
    "cusp_fold_curve",
    "germ_fold_curve",
    "Equilibrium",
    "locate_equilibrium",
    "parameter_normal_form",
    "tangent_direction",
    "tangent_angle",
]

TERMINATIONS = ("TimeLimit", "LeftDomain", "ConvergedToManifold", "SectionCrossed", "StepFailure")


@dataclass(frozen=True)
class TrajectoryOptions:
    rtol: float = 1e-9
    atol: float = 1e-12
    t_max: float = 1e4
    max_steps: int = 200_000
    max_step: float = np.inf
    eq_threshold: float = 1e-10  # |F(p)| for convergence to the manifold ...
    x_threshold: float = 1e-8  # ... together with |x|
    domain_center: Sequence[float] | None = None  # default: model anchor
    domain_radius: float | None = None  # default: model domain radius
    section: tuple[Sequence[float], Sequence[float]] | None = None  # (point, normal)

    @classmethod
    def for_model(cls, model: FieldModel, **kw) -> "TrajectoryOptions":
        tol = model.tolerances
        kw.setdefault("rtol", tol.traj_rtol)
        kw.setdefault("atol", tol.traj_atol)
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "rtol": self.rtol, "atol": self.atol, "t_max": self.t_max,
            "max_steps": self.max_steps, "eq_threshold": self.eq_threshold,
            "x_threshold": self.x_threshold,
        }


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (n, dim)
    termination: str
    events: list[tuple[float, str, list[float]]] = field(default_factory=list)
    error: str | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.t)


def integrate(model: FieldModel, p0, t_end: float | None = None,
              opts: TrajectoryOptions | None = None) -> Trajectory:
    """Integrate ``p' = F(p)`` from ``p0`` to ``t_end`` (negative: backward).

    Terminates on convergence to the manifold, leaving the domain ball,
    crossing the optional section, the time limit or a step failure; the
    crossing of ``x = 0`` is logged without stopping.
    """
    if model.parameter is not None:
        raise ValueError("freeze the parameter (FieldModel.at_parameter) before integrating")
    opts = opts or TrajectoryOptions.for_model(model)
    t_end = opts.t_max if t_end is None else float(t_end)
    p0 = np.asarray(p0, float)
    center = model.anchor if opts.domain_center is None else np.asarray(opts.domain_center, float)
    radius = model.domain_radius if opts.domain_radius is None else opts.domain_radius
    if np.linalg.norm(p0 - center) > radius:
        raise ValueError("initial point lies outside the domain ball")

    events = [
        Event(lambda t, p: max(np.max(np.abs(model.rhs(p))) / opts.eq_threshold,
                               abs(p[0]) / opts.x_threshold) - 1.0,
              "ConvergedToManifold"),
        Event(lambda t, p: radius - np.linalg.norm(p - center), "LeftDomain"),
        Event(lambda t, p: p[0], "XCrossing", terminal=False, both_directions=True),
    ]
    if opts.section is not None:
        sp, sn = (np.asarray(v, float) for v in opts.section)
        side0 = np.sign((p0 - sp) @ sn) or 1.0
        events.append(Event(lambda t, p: side0 * ((p - sp) @ sn), "SectionCrossed"))

    def rhs(t, p):
        return model.rhs(p)

    try:
        sol = dopri5(rhs, 0.0, p0, t_end, rtol=opts.rtol, atol=opts.atol,
                     max_step=opts.max_step, max_steps=opts.max_steps, events=events)
    except (IntegrationError, EvaluationError) as exc:
        return Trajectory(np.array([0.0]), p0[None, :].copy(), "StepFailure", [], str(exc))
    log = [(float(t), kind, [float(v) for v in y]) for t, kind, y in sol.events]
    if sol.status == "event":
        termination = sol.terminal_kind
    else:
        termination = "TimeLimit"
        if sol.status == "max_steps":
            log.append((sol.t_final, "MaxSteps", sol.y_final.tolist()))
    return Trajectory(sol.t, sol.y, termination, log)


@dataclass
class PortraitEntry:
    seed: list[float]
    forward: Trajectory | None
    backward: Trajectory | None
    error: str | None = None


def phase_portrait(
    model: FieldModel,
    seeds,
    opts: TrajectoryOptions | None = None,
    threads: int | None = None,
) -> list[PortraitEntry]:
    """Integrate every seed forward and backward; results follow seed order."""
    seeds = np.atleast_2d(np.asarray(seeds, float))
    if seeds.size == 0:
        raise ValueError("seed list is empty")
    opts = opts or TrajectoryOptions.for_model(model)

    def run(seed):
        try:
            fw = integrate(model, seed, opts.t_max, opts)
            bw = integrate(model, seed, -opts.t_max, opts)
            return PortraitEntry(seed.tolist(), fw, bw)
        except (EqManifoldError, ValueError) as exc:
            return PortraitEntry(seed.tolist(), None, None, str(exc))

    workers = threads or os.cpu_count() or 1
    if workers <= 1 or len(seeds) == 1:
        return [run(s) for s in seeds]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, seeds))


def recurrence(model: FieldModel, traj: Trajectory, radius: float = 1e-3,
               max_angle_deg: float = 10.0) -> bool:
    """True if the trajectory re-enters the ball around its start with aligned velocity."""
    p0 = traj.states[0]
    v0 = model.rhs(p0)
    n0 = np.linalg.norm(v0)
    d = np.linalg.norm(traj.states - p0, axis=1)
    left = np.nonzero(d > radius)[0]
    if n0 == 0 or left.size == 0:
        return False
    cos_max = np.cos(np.radians(max_angle_deg))
    for i in np.nonzero(d[left[0]:] <= radius)[0] + left[0]:
        v = model.rhs(traj.states[i])
        nv = np.linalg.norm(v)
        if nv > 0 and (v @ v0) / (nv * n0) >= cos_max:
            return True
    return False


# ---------------------------------------------------------------------------
# curve of transcritical points on a plane of equilibria


@dataclass
class TranscriticalCurve:
    points: np.ndarray  # (n, m) points y on the manifold, ordered along the curve
    seed_index: int
    crossing: np.ndarray  # |grad_y d_x f| per point
    drift_normal: np.ndarray  # <d_x g, grad/|grad|>: drift across the curve
    transversal: np.ndarray  # bool flags: crossing and drift_normal both nonzero
    stops: tuple[str, str]

    def phase_points(self) -> np.ndarray:
        return np.column_stack([np.zeros(len(self.points)), self.points])


def transcritical_curve(
    model: FieldModel,
    seed=None,
    arc_steps: int = 200,
    step: float | None = None,
    tol: float = 1e-12,
) -> TranscriticalCurve:
    """Pseudo-arclength continuation of ``d_x f(0, y) = 0`` in the y-plane."""
    if model.m != 2 or model.parameter is not None:
        raise ValueError("transcritical curves are traced for m = 2 without parameter")
    ys = ("y1", "y2")
    fx = substitute(differentiate(model.f, "x"), {"x": 0.0}, ys)
    grad_e = [differentiate(fx, v) for v in ys]
    gx_e = [substitute(differentiate(c, "x"), {"x": 0.0}, ys) for c in model.g]
    q = fx.compiled
    grads = [e.compiled for e in grad_e]
    gxs = [e.compiled for e in gx_e]

    def qv(y):
        return float(q(*y))

    def grad(y):
        return np.array([float(gf(*y)) for gf in grads])

    R = model.domain_radius
    ds0 = 1e-2 * R if step is None else step
    center = model.anchor[1:]
    y = center.copy() if seed is None else np.asarray(seed, float)
    y0 = y.copy()
    for _ in range(20):
        r = qv(y)
        gr = grad(y)
        if abs(r) <= tol:
            break
        gn = gr @ gr
        if gn < 1e-24:
            raise NoSeedConvergence("gradient of d_x f vanishes at the seed")
        y = y - r * gr / gn
    if abs(qv(y)) > tol or np.linalg.norm(y - y0) > 10 * ds0:
        raise NoSeedConvergence(
            f"no transcritical point near the seed (d_x f = {qv(y0):.3g} at the seed)"
        )

    def tangent(yy, prev=None):
        gr = grad(yy)
        n = np.linalg.norm(gr)
        if n < 1e-14:
            raise FoldInCurve(f"gradient of d_x f vanishes at {yy.tolist()}")
        t = np.array([-gr[1], gr[0]]) / n
        if prev is not None and t @ prev < 0:
            t = -t
        return t

    def branch(direction):
        pts = []
        cur = y.copy()
        t = direction * tangent(cur)
        ds = ds0
        for _ in range(arc_steps):
            pred = cur + ds * t
            z = pred.copy()
            ok = False
            for _ in range(4):
                r = qv(z)
                J = np.array([grad(z), t])
                if abs(np.linalg.det(J)) < 1e-14:
                    return pts, "FoldInCurve"
                z = z - np.linalg.solve(J, [r, t @ (z - pred)])
                if abs(qv(z)) <= tol:
                    ok = True
                    break
            if not ok:
                ds *= 0.5
                if ds < 1e-8 * R:
                    return pts, "CorrectorFailure"
                continue
            if np.linalg.norm(z - center) > R:
                return pts, "LeftDomain"
            try:
                t = tangent(z, t)
            except FoldInCurve:
                pts.append(z)
                return pts, "FoldInCurve"
            pts.append(z)
            cur = z
            ds = min(ds0, 2 * ds)
        return pts, "MaxSteps"

    back, stop_b = branch(-1.0)
    fwd, stop_f = branch(1.0)
    pts = np.array(back[::-1] + [y] + fwd)
    gr = np.array([grad(p) for p in pts])
    gn = np.linalg.norm(gr, axis=1)
    gx = np.array([[float(c(*p)) for c in gxs] for p in pts])
    normal = np.einsum("ij,ij->i", gx, gr) / np.where(gn > 0, gn, 1.0)
    ztol = model.tolerances.zero * (1.0 + np.max(np.abs(gx)) + np.max(gn))
    flags = (gn > ztol) & (np.abs(normal) > ztol)
    return TranscriticalCurve(pts, len(back), gn, normal, flags, (stop_b, stop_f))


# ---------------------------------------------------------------------------
# heteroclinic targets of transcritical points


@dataclass
class HeteroclinicTarget:
    gamma_point: list[float]
    side: int
    time_direction: int
    eps: float
    landing: list[float] | None = None  # extrapolated landing point (phase space)
    raw_landings: list[list[float]] = field(default_factory=list)
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "gamma_point": self.gamma_point, "side": self.side,
            "time_direction": self.time_direction, "eps": self.eps,
            "landing": self.landing, "raw_landings": self.raw_landings, "status": self.status,
        }


def drift_side(model: FieldModel, y) -> int:
    """Side of the manifold carrying the F~-orbit tangent at a transcritical point.

    Along ``F~`` through ``(0, y)`` one has ``x'' = <grad_y d_x f, d_x g>``.
    """
    p = np.concatenate([[0.0], np.asarray(y, float)])
    J = model.jacobian(p)  # J[i, 0] = d_x F_i(0, y)
    fx_expr = differentiate(model.f, "x")
    grad = np.array([
        float(differentiate(fx_expr, v).compiled(*p)) for v in model.phase_variables[1:]
    ])
    value = float(grad @ J[1:, 0])
    return 1 if value >= 0 else -1


def heteroclinic_targets(
    model: FieldModel,
    gamma_points,
    sign: int,
    *,
    side: int | str = "auto",
    eps: float = 1e-3,
    relative_eps: float | None = 0.05,
    germ_scale: float = 1.0,
    ell: int = 2,
    opts: TrajectoryOptions | None = None,
    threads: int | None = 1,
) -> list[HeteroclinicTarget]:
    """Landing points of the heteroclinic orbits leaving the given transcritical points.

    From each ``(0, y_gamma)`` step ``eps`` off the manifold on ``side`` and
    integrate F in the direction ``-sign`` (backward for ``sign = +1``)
    until it converges to the manifold.  Runs with ``eps`` and ``eps/2``
    are combined by linear Richardson extrapolation.  With
    ``relative_eps`` the offset is capped at
    ``relative_eps * germ_scale * d^(ell+1)``, ``d`` being the distance to
    the anchor, the height scale of heteroclinic orbits near the cusp.
    """
    opts = opts or TrajectoryOptions(rtol=1e-11, atol=1e-15, t_max=1e7, max_steps=400_000)
    direction = -1 if sign > 0 else 1
    pts = np.atleast_2d(np.asarray(gamma_points, float))
    center = model.anchor[1:]

    def run(y):
        d = float(np.linalg.norm(y - center))
        if d == 0.0:
            raise ValueError("the anchor itself has no heteroclinic target")
        e = eps
        if relative_eps is not None:
            e = min(eps, relative_eps * abs(germ_scale) * d ** (ell + 1))
        s = drift_side(model, y) if side == "auto" else int(side)
        target = HeteroclinicTarget(gamma_point=[0.0, *y.tolist()], side=s,
                                    time_direction=direction, eps=e)
        landings = []
        for ee in (e, e / 2):
            p0 = np.concatenate([[s * ee], y])
            traj = integrate(model, p0, direction * opts.t_max, opts)
            if traj.termination != "ConvergedToManifold":
                target.status = f"NoLanding:{traj.termination}"
                return target
            landings.append(traj.final)
        target.raw_landings = [v.tolist() for v in landings]
        land = 2 * landings[1] - landings[0]
        land[0] = 0.0
        target.landing = land.tolist()
        return target

    if threads and threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, pts))
    return [run(y) for y in pts]


def require_landing(targets: Sequence[HeteroclinicTarget]) -> np.ndarray:
    bad = [t for t in targets if t.landing is None]
    if bad:
        raise NoLanding(f"{len(bad)} heteroclinic shots did not land: {bad[0].status}")
    return np.array([t.landing for t in targets])


# ---------------------------------------------------------------------------
# fold curves


def fold_curve(
    residual: Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray | None]],
    z_values: Sequence[float],
    guess,
    tol: float = 1e-13,
    max_iter: int = 30,
    fd_step: float = 1e-7,
) -> np.ndarray:
    """Solve ``h(u, z) = d_z h(u, z) = 0`` for ``u`` along ``z_values`` (Newton continuation).

    ``residual(u, z)`` returns the 2-vector ``(h, d_z h)`` and optionally its
    Jacobian in ``u``; finite differences are used when that is ``None``.
    Values are processed in the given order, each warm-started from the previous.
    """
    u = np.asarray(guess, float)
    out = []
    for z in z_values:
        for _ in range(max_iter):
            r, J = residual(u, z)
            if J is None:
                J = np.empty((2, u.size))
                for i in range(u.size):
                    du = np.zeros_like(u)
                    du[i] = fd_step * max(1.0, abs(u[i]))
                    J[:, i] = (residual(u + du, z)[0] - residual(u - du, z)[0]) / (2 * du[i])
            step = np.linalg.lstsq(J, r, rcond=None)[0]
            u = u - step
            if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(u))):
                break
        else:
            raise NoConvergence(f"fold Newton failed at z = {z!r}")
        out.append(np.concatenate([u, [z]]))
    return np.array(out)


@dataclass
class FoldCurve:
    points: np.ndarray  # rows (z_0, ..., z_{m-1}, z_m) in chart coordinates
    predicted: np.ndarray  # same rows from the fitted cubic's discriminant
    max_deviation: float


def cusp_fold_curve(chart: FlowBoxChart, z_values=None, *, max_order: int = 6) -> FoldCurve:
    """Fold curve ``h_0 = d_{z_2} h_0 = 0`` of a cusp chart (``m = 2``).

    Continued outward from ``z_2 = 0`` in both directions; cross-checked
    against the fold of the cubic ``c_3 w^3 + zeta_1 w + zeta_0`` with
    ``zeta`` linearized from the germ fit at the section origin.
    """
    if chart.m != 2:
        raise ValueError("cusp fold curves are computed for m = 2 charts")
    if z_values is None:
        z_values = np.linspace(-0.3, 0.3, 25) * chart.chart_radius
    z_values = np.asarray(z_values, float)
    reduced = chart.reduced

    def residual(u, z):
        p, D = chart_to_phase(chart, np.array([u[0], u[1], z]), jacobian=True)
        J = reduced.jacobian(p)
        ftilde = reduced.rhs(p)[0]
        r = np.array([p[0], ftilde])
        jac = np.array([D[0, :2], J[0] @ D[:, :2]])
        return r, jac

    neg = np.sort(z_values[z_values < 0])[::-1]
    pos = np.sort(z_values[z_values >= 0])
    parts = []
    if neg.size:
        parts.append(fold_curve(residual, neg, np.zeros(2))[::-1])
    if pos.size:
        parts.append(fold_curve(residual, pos, np.zeros(2)))
    pts = np.vstack(parts)

    fit = fit_germ(chart, max_order=max_order, gradient=True)
    c3 = fit.coefficients[3]
    Jz = fit.gradient[:2]
    shift = normalized_germ(fit.coefficients, 2)[1]
    w = pts[:, 2] + shift
    zeta = np.column_stack([2 * c3 * w**3, -3 * c3 * w**2])
    pred_u = np.linalg.solve(Jz, zeta.T).T
    predicted = np.column_stack([pred_u, pts[:, 2]])
    scale = np.maximum(np.abs(pts[:, :2]), 1e-12)
    dev = float(np.max(np.abs(predicted[:, :2] - pts[:, :2]) / scale)) if len(pts) else 0.0
    return FoldCurve(pts, predicted, dev)


def germ_fold_curve(w_values, sign: int = -1) -> np.ndarray:
    """Fold of the normalized cusp germ ``z' = sign z^3 + z_1 z + z_0``.

    Rows ``(z_0, z_1, w)`` where ``w`` is the double root, found by Newton
    continuation on ``(germ, d germ / dz) = 0`` in ``(z_0, z_1)``.
    """
    def residual(u, w):
        z0, z1 = u
        r = np.array([sign * w**3 + z1 * w + z0, 3 * sign * w**2 + z1])
        return r, np.array([[1.0, w], [0.0, 1.0]])

    w_values = np.asarray(w_values, float)
    return fold_curve(residual, w_values, np.zeros(2))


# ---------------------------------------------------------------------------
# equilibria of planar fields (parameter case)


@dataclass
class Equilibrium:
    point: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    residual: float

    @property
    def kind(self) -> str:
        ev = self.eigenvalues
        if np.max(np.abs(ev.imag)) > 1e-9 * max(1.0, np.max(np.abs(ev))):
            return "focus"
        re = np.sort(ev.real)
        return "saddle" if re[0] * re[-1] < 0 else "node"


def _fd_jacobian(fun, p, h=1e-6):
    n = p.size
    J = np.empty((n, n))
    for i in range(n):
        dp = np.zeros(n)
        dp[i] = h * max(1.0, abs(p[i]))
        J[:, i] = (fun(p + dp) - fun(p - dp)) / (2 * dp[i])
    return J


def locate_equilibrium(fun: Callable[[np.ndarray], np.ndarray], guess, *,
                       tol: float = 1e-14, max_iter: int = 50) -> Equilibrium:
    """Newton iteration for ``fun(p) = 0`` with a finite-difference Jacobian.

    The linearization returned is also estimated by central differences.
    """
    p = np.asarray(guess, float).copy()
    for _ in range(max_iter):
        r = np.asarray(fun(p), float)
        J = _fd_jacobian(fun, p)
        step = np.linalg.solve(J, r)
        p -= step
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(p))):
            break
    else:
        raise NoConvergence("equilibrium Newton iteration did not converge")
    J = _fd_jacobian(fun, p)
    return Equilibrium(p, J, np.linalg.eigvals(J), float(np.max(np.abs(fun(p)))))


def parameter_normal_form(delta: float, tau: float, lam_tilde: float):
    """Right-hand side ``(y, -delta x + tau y + lam_tilde)`` of the planar normal form."""
    def rhs(p):
        p = np.asarray(p, float)
        return np.array([p[1], -delta * p[0] + tau * p[1] + lam_tilde])
    return rhs


# ---------------------------------------------------------------------------
# tangents of planar curves at the anchor


def tangent_direction(points, center, radius: float) -> np.ndarray:
    """Unit tangent at ``center`` of a curve through (or ending near) it.

    Points within ``radius`` are projected on their principal axis and the
    normal offset is fitted by ``c_1 s + c_2 s^2 + c_3 s^3`` in the axial
    coordinate ``s``; the slope ``c_1`` gives the tangent.
    """
    P = np.asarray(points, float) - np.asarray(center, float)
    P = P[np.linalg.norm(P, axis=1) <= radius]
    if len(P) < 4:
        raise ValueError("need at least four curve points near the anchor")
    _, _, vt = np.linalg.svd(P, full_matrices=False)
    u, n = vt[0], vt[1]
    s, h = P @ u, P @ n
    A = np.column_stack([s, s**2, s**3])
    c1 = np.linalg.lstsq(A, h, rcond=None)[0][0]
    t = u + c1 * n
    return t / np.linalg.norm(t)


def tangent_angle(curve_a, curve_b, center, radius: float) -> float:
    """Angle in degrees between the tangent lines of two curves at ``center``."""
    ta = tangent_direction(curve_a, center, radius)
    tb = tangent_direction(curve_b, center, radius)
    c = abs(float(ta @ tb))
    return float(np.degrees(np.arccos(min(1.0, c))))
