"""Fixed-step classical Runge-Kutta used on both time axes."""

from __future__ import annotations


def rk4_stages(f, y, h):
    """One RK4 step of ``y' = f(y)``.

    Returns the four stage points and the advanced value, so that callers can
    evaluate auxiliary rates at exactly the stage states the step uses.
    """
    k1 = f(y)
    y2 = y + h / 2.0 * k1
    k2 = f(y2)
    y3 = y + h / 2.0 * k2
    k3 = f(y3)
    y4 = y + h * k3
    k4 = f(y4)
    return (y, y2, y3, y4), y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(f, y, h):
    return rk4_stages(f, y, h)[1]
