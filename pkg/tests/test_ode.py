import numpy as np
import pytest

from eqmanifold.errors import IntegrationError
from eqmanifold.ode import Event, dopri5


def osc(t, y):
    return np.array([y[1], -y[0]])


@pytest.mark.parametrize("t_end", [10.0, -10.0])
def test_harmonic_oscillator(t_end):
    sol = dopri5(osc, 0.0, [1.0, 0.0], t_end, rtol=1e-10, atol=1e-12)
    assert sol.status == "done" and sol.t_final == t_end
    assert np.allclose(sol.y_final, [np.cos(t_end), -np.sin(t_end)], atol=1e-8)
    assert np.all(np.diff(sol.t) * np.sign(t_end) > 0)


def test_batch_columns_held_to_tolerance():
    y0 = np.array([[1.0, 2.0, 1e-6], [0.0, 0.0, 0.0]])
    sol = dopri5(osc, 0.0, y0, 5.0, rtol=1e-10, atol=1e-14)
    exact = y0[0] * np.array([[np.cos(5.0)], [-np.sin(5.0)]])
    assert np.all(np.abs(sol.y_final - exact) <= 1e-8 * np.abs(y0[0]) + 1e-13)


def test_terminal_event_localization():
    ev = Event(lambda t, y: y[0], "zero")
    sol = dopri5(osc, 0.0, [1.0, 0.0], 10.0, rtol=1e-10, atol=1e-12, events=[ev])
    assert sol.status == "event" and sol.terminal_kind == "zero"
    assert sol.t_final == pytest.approx(np.pi / 2, abs=1e-10)


def test_logging_event_both_directions():
    ev = Event(lambda t, y: y[0], "cross", terminal=False, both_directions=True)
    sol = dopri5(osc, 0.0, [1.0, 0.0], 10.0, rtol=1e-10, atol=1e-12, events=[ev])
    times = [t for t, kind, _ in sol.events]
    assert np.allclose(times, [np.pi / 2, 3 * np.pi / 2, 5 * np.pi / 2], atol=1e-10)


def test_max_steps_and_underflow():
    sol = dopri5(osc, 0.0, [1.0, 0.0], 100.0, max_steps=5)
    assert sol.status == "max_steps"
    with pytest.raises(IntegrationError):
        dopri5(lambda t, y: y**2, 0.0, np.array([1.0]), 2.0)
