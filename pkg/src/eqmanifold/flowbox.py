"""Flow-box charts of the desingularized field.

A chart straightens ``F~`` near an anchor on {x = 0}:

    h(z_0, ..., z_m) = Phi~_{z_m}(anchor + frame @ (z_0, ..., z_{m-1}))

where ``frame`` spans the hyperplane through the anchor orthogonal to the
drift ``F~(anchor)``.  In these coordinates the original field becomes
``z_m' = h_0(z)`` with the remaining coordinates conserved, ``h_0`` being
the x-component of ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LeftDomain, NoConvergence, VanishingDrift
from .field import FieldModel
from .ode import dopri5

__all__ = [
    "FlowBoxChart",
    "build_chart",
    "chart_to_phase",
    "phase_to_chart",
    "reduced_rhs",
    "conserved_coordinates",
    "flow",
]


@dataclass(frozen=True, eq=False)
class FlowBoxChart:
    reduced: FieldModel
    anchor: np.ndarray
    drift: np.ndarray  # unit vector along F~(anchor)
    drift_norm: float
    frame: np.ndarray  # (dim, m), orthonormal columns orthogonal to drift
    chart_radius: float
    escape_radius: float
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = np.inf

    @property
    def m(self) -> int:
        return self.reduced.m

    @property
    def dim(self) -> int:
        return self.reduced.dim

    def section(self, zp) -> np.ndarray:
        """Section point(s) ``anchor + frame @ zp``; rows in, rows out."""
        zp = np.asarray(zp, float)
        return self.anchor + zp @ self.frame.T

    def to_phase(self, z, jacobian: bool = False):
        return chart_to_phase(self, z, jacobian=jacobian)

    def to_chart(self, p):
        return phase_to_chart(self, p)

    def describe(self) -> dict:
        return {
            "anchor": self.anchor.tolist(),
            "drift": self.drift.tolist(),
            "drift_norm": self.drift_norm,
            "section_frame": self.frame.T.tolist(),
            "chart_radius": self.chart_radius,
            "rtol": self.rtol,
            "atol": self.atol,
        }


def _default_frame(drift: np.ndarray) -> np.ndarray:
    dim = drift.size
    drop = int(np.argmax(np.abs(drift)))
    basis = [drift]
    for i in range(dim):
        if i == drop:
            continue
        v = np.zeros(dim)
        v[i] = 1.0
        for b in basis:
            v = v - (v @ b) * b
        basis.append(v / np.linalg.norm(v))
    return np.column_stack(basis[1:])


def build_chart(
    reduced: FieldModel,
    anchor=None,
    chart_radius: float | None = None,
    *,
    section_frame: np.ndarray | None = None,
    rtol: float | None = None,
    atol: float | None = None,
    max_step: float = np.inf,
    escape_factor: float = 2.0,
) -> FlowBoxChart:
    """Chart at ``anchor`` (default: the model anchor) for the field ``F~``.

    ``section_frame`` optionally replaces the Gram-Schmidt frame; it must be
    ``(dim, m)`` with orthonormal columns orthogonal to the drift.
    """
    if reduced.parameter is not None:
        raise ValueError("freeze the parameter (FieldModel.at_parameter) before charting")
    a = reduced.anchor if anchor is None else np.asarray(anchor, float)
    if a.shape != (reduced.dim,):
        raise ValueError(f"anchor must have {reduced.dim} entries")
    v = reduced.rhs(a)
    norm = float(np.linalg.norm(v))
    if norm < reduced.tolerances.drift:
        raise VanishingDrift(f"|F~(anchor)| = {norm:.3g} below {reduced.tolerances.drift:g}")
    drift = v / norm
    if section_frame is None:
        frame = _default_frame(drift)
    else:
        frame = np.asarray(section_frame, float)
        if frame.shape != (reduced.dim, reduced.m):
            raise ValueError(f"section frame must have shape {(reduced.dim, reduced.m)}")
        if np.max(np.abs(frame.T @ frame - np.eye(reduced.m))) > 1e-12:
            raise ValueError("section frame is not orthonormal")
        if np.max(np.abs(frame.T @ drift)) > 1e-12:
            raise ValueError("section frame is not orthogonal to the drift")
    radius = reduced.domain_radius if chart_radius is None else float(chart_radius)
    tol = reduced.tolerances
    a = a.copy()
    for arr in (a, drift, frame):
        arr.setflags(write=False)
    return FlowBoxChart(
        reduced=reduced,
        anchor=a,
        drift=drift,
        drift_norm=norm,
        frame=frame,
        chart_radius=radius,
        escape_radius=escape_factor * max(radius, reduced.domain_radius),
        rtol=tol.chart_rtol if rtol is None else rtol,
        atol=tol.chart_atol if atol is None else atol,
        max_step=max_step,
    )


def flow(chart: FlowBoxChart, points, times, jacobian_of: np.ndarray | None = None):
    """Flow each row of ``points`` under ``F~`` for its own time.

    Integrates ``q' = t F~(q)`` over unit pseudo-time so a batch with mixed
    signs and lengths shares one vectorised integration.  With
    ``jacobian_of`` (dim, k) the variational equation is carried along and
    ``DPhi @ jacobian_of`` is returned per point, shape (n, dim, k).
    """
    field = chart.reduced
    dim = chart.dim
    P = np.atleast_2d(np.asarray(points, float))
    n = P.shape[0]
    t = np.broadcast_to(np.asarray(times, float), (n,)).copy()
    center = chart.anchor[:, None]
    k = 0 if jacobian_of is None else jacobian_of.shape[1]

    y0 = P.T.copy()
    if k:
        M0 = np.repeat(np.asarray(jacobian_of, float)[:, :, None], n, axis=2)
        y0 = np.concatenate([y0, M0.reshape(dim * k, n)])

    def rhs(_, y):
        q = y[:dim]
        dq = t * field.rhs(q)
        if not k:
            return dq
        M = y[dim:].reshape(dim, k, n)
        J = field.jacobian(q)
        dM = t * np.einsum("ijn,jkn->ikn", J, M)
        return np.concatenate([dq, dM.reshape(dim * k, n)])

    def check(_, y):
        d = np.linalg.norm(y[:dim] - center, axis=0)
        if np.any(d > chart.escape_radius):
            raise LeftDomain(f"flow left the chart domain (|q - anchor| = {d.max():.3g})")

    sol = dopri5(rhs, 0.0, y0, 1.0, rtol=chart.rtol, atol=chart.atol,
                 max_step=chart.max_step, step_check=check, record=False)
    if sol.status != "done":
        raise NoConvergence(f"flow integration stopped: {sol.status}")
    y = sol.y_final
    Q = y[:dim].T
    if not k:
        return Q
    return Q, np.moveaxis(y[dim:].reshape(dim, k, n), 2, 0)


def _rows(z, width: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[1] != width:
        raise ValueError(f"expected {width} coordinates per point, got {z.shape[1]}")
    return z, single


def chart_to_phase(chart: FlowBoxChart, z, *, jacobian: bool = False, check_radius: bool = True):
    """``h(z)``; with ``jacobian=True`` also ``Dh(z)`` of shape (dim, dim).

    Chart coordinates of a point in the chart ball may themselves exceed
    the radius; ``check_radius=False`` admits them, leaving only the
    escape-radius guard of the flow.
    """
    Z, single = _rows(z, chart.dim)
    norms = np.linalg.norm(Z, axis=1)
    if check_radius and np.any(norms > chart.chart_radius * (1 + 1e-12)):
        raise LeftDomain(f"|z| = {norms.max():.3g} exceeds chart radius {chart.chart_radius:g}")
    start = chart.section(Z[:, :-1])
    if jacobian:
        P, dP = flow(chart, start, Z[:, -1], jacobian_of=chart.frame)
        vel = chart.reduced.rhs(P.T).T
        D = np.concatenate([dP, vel[:, :, None]], axis=2)
        return (P[0], D[0]) if single else (P, D)
    P = flow(chart, start, Z[:, -1])
    return P[0] if single else P


def phase_to_chart(chart: FlowBoxChart, p, *, max_iter: int = 50, tol: float = 1e-14):
    """Invert the chart by backward shooting onto the section.

    Newton iteration on ``t`` for ``<Phi~_{-t}(p) - anchor, drift> = 0``.
    """
    P, single = _rows(p, chart.dim)
    dist = np.linalg.norm(P - chart.anchor, axis=1)
    if np.any(dist > chart.chart_radius * (1 + 1e-12)):
        raise LeftDomain(f"|p - anchor| = {dist.max():.3g} exceeds chart radius")
    a, e = chart.anchor, chart.drift
    t = (P - a) @ e / chart.drift_norm
    Q = flow(chart, P, -t)
    for _ in range(max_iter):
        r = (Q - a) @ e
        if np.all(np.abs(r) <= tol * max(1.0, chart.chart_radius)):
            break
        speed = chart.reduced.rhs(Q.T).T @ e  # d/dt <Phi_{-t}(p), e> = -speed
        if np.any(np.abs(speed) < 1e-14):
            raise NoConvergence("section is not transverse along the backward orbit")
        dt = r / speed
        Q = flow(chart, Q, -dt)
        t = t + dt
    else:
        raise NoConvergence(f"chart inversion did not converge in {max_iter} iterations")
    zp = (Q - a) @ chart.frame
    Z = np.column_stack([zp, t])
    return Z[0] if single else Z


def reduced_rhs(chart: FlowBoxChart, z):
    """``h_0(z)``: right-hand side of ``z_m' = h_0(z)``."""
    P = chart_to_phase(chart, z)
    return P[..., 0]


def conserved_coordinates(chart: FlowBoxChart, p):
    """Section coordinates ``(z_0..z_{m-1})``; first integrals of F in the chart."""
    Z = phase_to_chart(chart, p)
    return Z[..., :-1]
