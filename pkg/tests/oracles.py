"""Independent reference computations used to check the package."""

import math

import numpy as np
from scipy.integrate import solve_ivp


def esr_charge_time_ode(q_target: float, c: float, r: float, p_ch: float) -> float:
    """Integrate constant-power charging of C through series R until the charge reaches ``q_target``.

    The source holds P = I (V_C + I R). Solving the quadratic for I gives the
    charging current as a function of stored charge alone; the time to reach
    ``q_target`` comes from a terminal event on dQ/dt = I(Q).
    """
    if q_target <= 0:
        return 0.0

    def current(q):
        v = q / c
        return 2.0 * p_ch / (v + math.sqrt(v * v + 4.0 * r * p_ch))

    def rhs(_t, y):
        return [current(y[0])]

    def reached(_t, y):
        return y[0] - q_target
    reached.terminal = True
    reached.direction = 1

    # generous upper bound: the loss-free time plus the slowest-start allowance
    t_hi = 4.0 * (q_target ** 2 / (2 * c * p_ch) + q_target / current(0.0)) + 1e-12
    sol = solve_ivp(rhs, (0.0, t_hi), [0.0], method="DOP853", events=reached, rtol=1e-11, atol=q_target * 1e-14)
    if not sol.t_events[0].size:
        raise RuntimeError("ODE oracle did not reach the target charge")
    return float(sol.t_events[0][0])


def closed_form_lifetime_hours(capacity_mah: float, soc: float, current_a: float) -> float:
    return capacity_mah * 1e-3 * soc / current_a


def brute_force_argmax(values) -> int:
    best = 0
    for i in range(len(values)):
        if values[i] > values[best]:
            best = i
    return best


def local_minima(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    idx = [i for i in range(1, len(y) - 1) if y[i] < y[i - 1] and y[i] <= y[i + 1]]
    return np.asarray(idx, dtype=int)
