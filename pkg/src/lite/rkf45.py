"""Runge-Kutta-Fehlberg 4(5) tableau and a generic adaptive driver.

The fifth-order solution is propagated; the embedded fourth-order result
supplies the local error estimate. The step controller uses safety factor
0.9, exponent 1/5, and growth clamped to [0.2, 5].
"""

from __future__ import annotations

from typing import Callable

import numpy as np

C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])

A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]

B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
ERR = B5 - B4

N_STAGES = 6
SAFETY = 0.9
GROW_MIN = 0.2
GROW_MAX = 5.0
ORDER_EXP = 0.2


def next_dt(dt: float, err: float, tol: float) -> float:
    """Step-size update from the embedded error estimate."""
    if err == 0.0:
        return dt * GROW_MAX
    return dt * min(GROW_MAX, max(GROW_MIN, SAFETY * (tol / err) ** ORDER_EXP))


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_final: float,
    tol: float,
    dt0: float = 1e-3,
    dt_min: float = 1e-12,
) -> np.ndarray:
    """Adaptive integration of dy/dt = f(y) (autonomous) to t_final.

    The error estimate is the max-abs entry of the 4th/5th order difference.
    """
    y = np.array(y0, dtype=complex)
    t = 0.0
    dt = min(dt0, t_final) if t_final > 0 else dt0
    while t < t_final - 1e-15:
        dt = min(dt, t_final - t)
        k = [f(y)]
        for s in range(1, N_STAGES):
            ys = y + dt * sum(a * ks for a, ks in zip(A[s], k))
            k.append(f(ys))
        err_mat = dt * sum(e * ks for e, ks in zip(ERR, k))
        err = float(np.max(np.abs(err_mat)))
        if err <= tol:
            y = y + dt * sum(b * ks for b, ks in zip(B5, k))
            t += dt
        dt = next_dt(dt, err, tol)
        if dt < dt_min:
            raise RuntimeError(f"step size underflow at t={t:.6g}")
    return y
