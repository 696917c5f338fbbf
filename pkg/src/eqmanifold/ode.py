"""Dormand-Prince 5(4) integrator with PI step control, dense output and events.

The state may be any float array; error control uses the max norm over
all entries, so a batch of independent initial conditions stacked along a
trailing axis is integrated with every member held to the tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationError

__all__ = ["Event", "OdeSolution", "dopri5"]

# Dormand & Prince (1980) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# b - b_hat, the embedded error estimator weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# continuous extension (Hairer, Norsett & Wanner, DOPRI5 contd5)
_D = (
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
)

_SAFE = 0.9
_FAC_MIN = 0.2  # largest allowed shrink is 1/5 ...
_FAC_MAX = 10.0  # ... and largest growth 10x
_BETA = 0.04  # PI stabilisation exponent
_EXPO = 0.2 - 0.75 * _BETA


@dataclass
class Event:
    """Scalar event function ``g(t, y)``; fires when ``g`` drops to ``<= 0``.

    ``terminal`` events stop the integration at the localized time.  With
    ``both_directions`` a sign change either way fires (logging only).
    """

    func: Callable[[float, np.ndarray], float]
    kind: str
    terminal: bool = True
    both_directions: bool = False


@dataclass
class OdeSolution:
    t: np.ndarray
    y: np.ndarray
    status: str  # "done", "event", "max_steps"
    terminal_kind: str | None = None
    events: list[tuple[float, str, np.ndarray]] = field(default_factory=list)
    nfev: int = 0
    nsteps: int = 0

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]


def _norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.max(np.abs(err) / scale)) if err.size else 0.0


def _initial_step(fun, t0, y0, f0, direction, rtol, atol, max_step) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + direction * h0 * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


class _Step:
    """One accepted step with its dense-output polynomial."""

    __slots__ = ("t0", "h", "r")

    def __init__(self, t0, h, y0, y1, k):
        self.t0, self.h = t0, h
        r2 = y1 - y0
        r3 = h * k[0] - r2
        r4 = r2 - h * k[6] - r3
        r5 = h * sum(d * kk for d, kk in zip(_D, k) if d)
        self.r = (y0, r2, r3, r4, r5)

    def __call__(self, t: float) -> np.ndarray:
        th = (t - self.t0) / self.h
        r1, r2, r3, r4, r5 = self.r
        th1 = 1.0 - th
        return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))


def _localize(g, step: _Step, ta, tb, ga, time_tol=1e-12, max_iter=200):
    """Bisection for the first root of ``g`` on [ta, tb] using dense output."""
    for _ in range(max_iter):
        if abs(tb - ta) <= time_tol:
            break
        tm = 0.5 * (ta + tb)
        if tm == ta or tm == tb:
            break
        gm = g(tm, step(tm))
        if (gm <= 0) == (ga <= 0):
            ta, ga = tm, gm
        else:
            tb = tm
    return tb


def dopri5(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_end: float,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_step: float = np.inf,
    first_step: float | None = None,
    max_steps: int = 100_000,
    events: Sequence[Event] = (),
    step_check: Callable[[float, np.ndarray], None] | None = None,
    record: bool = True,
) -> OdeSolution:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end`` (either direction).

    ``step_check`` is called on every accepted state and may raise to abort.
    Raises :class:`IntegrationError` on step-size underflow or a
    non-finite right-hand side that cannot be stepped around.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    t_end = float(t_end)
    direction = 1.0 if t_end >= t else -1.0
    ts, ys = [t], [y.copy()]
    log: list[tuple[float, str, np.ndarray]] = []
    nfev = 0

    def f(tt, yy):
        nonlocal nfev
        nfev += 1
        return fun(tt, yy)

    g_prev = [ev.func(t, y) for ev in events]
    for ev, g0 in zip(events, g_prev):
        if ev.terminal and not ev.both_directions and g0 <= 0:
            log.append((t, ev.kind, y.copy()))
            return OdeSolution(np.array(ts), np.array(ys), "event", ev.kind, log, nfev, 0)

    if t == t_end:
        return OdeSolution(np.array(ts), np.array(ys), "done", None, log, nfev, 0)

    k1 = f(t, y)
    if not np.all(np.isfinite(k1)):
        raise IntegrationError(f"non-finite right-hand side at t={t}")
    h = first_step or _initial_step(f, t, y, k1, direction, rtol, atol, max_step)
    h = min(abs(h), abs(t_end - t), max_step)
    facold = 1e-4
    nsteps = 0
    rejected_last = False

    while True:
        if nsteps >= max_steps:
            return OdeSolution(np.array(ts), np.array(ys), "max_steps", None, log, nfev, nsteps)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t}")
        hs = direction * h
        k = [k1]
        for i in range(1, 7):
            yi = y + hs * sum(a * kk for a, kk in zip(_A[i], k) if a)
            k.append(f(t + _C[i] * hs, yi))
        y_new = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(k[6]))):
            h *= 0.25
            rejected_last = True
            continue
        err = hs * sum(e * kk for e, kk in zip(_E, k) if e)
        en = _norm(err, y, y_new, rtol, atol)
        if en <= 1.0:
            t_new = t + hs
            if direction * (t_new - t_end) > 0 or abs(t_end - t_new) < 1e-14 * max(1.0, abs(t_end)):
                t_new = t_end
            nsteps += 1
            step = _Step(t, t_new - t, y, y_new, k)
            if step_check is not None:
                step_check(t_new, y_new)
            fired = None
            for i, ev in enumerate(events):
                g_new = ev.func(t_new, y_new)
                if ev.both_directions:
                    crossed = (g_prev[i] > 0) != (g_new > 0)
                else:
                    crossed = g_prev[i] > 0 and g_new <= 0
                if crossed:
                    te = _localize(ev.func, step, t, t_new, g_prev[i])
                    if ev.terminal and (fired is None or direction * (te - fired[0]) < 0):
                        fired = (te, ev)
                    if not ev.terminal:
                        log.append((te, ev.kind, step(te)))
                g_prev[i] = g_new
            if fired is not None:
                te, ev = fired
                ye = step(te)
                if te != t:
                    ts.append(te)
                    ys.append(ye)
                log.append((te, ev.kind, ye.copy()))
                return OdeSolution(np.array(ts), np.array(ys), "event", ev.kind, log, nfev, nsteps)
            t, y, k1 = t_new, y_new, k[6]
            if record:
                ts.append(t)
                ys.append(y.copy())
            if t == t_end:
                if not record:
                    ts.append(t)
                    ys.append(y.copy())
                return OdeSolution(np.array(ts), np.array(ys), "done", None, log, nfev, nsteps)
            fac11 = max(en, 1e-16) ** _EXPO
            fac = fac11 / facold**_BETA
            fac = min(1 / _FAC_MIN, max(1 / _FAC_MAX, fac / _SAFE))
            h_new = h / fac
            if rejected_last:
                h_new = min(h_new, h)
            facold = max(en, 1e-4)
            rejected_last = False
            h = min(h_new, max_step, abs(t_end - t))
        else:
            fac11 = en**_EXPO
            h = h / min(1 / _FAC_MIN, fac11 / _SAFE)
            rejected_last = True
