"""
Attempt-stream kernels.

A stream is a run of authentication attempts against the implant. Each
attempt charges the reservoir (if the strategy needs it), executes the
protocol steps, and settles the outcome: success, failure, brownout, a
lockout rejection, or battery death. All state lives in flat float64
vectors so the loop compiles under numba.

Two backends share one contract:

* ``numba``  - ``_run_attempts`` compiled with ``@njit``, walks every attempt.
* ``numpy``  - walks attempts in Python until the stream is stationary
  (every further attempt is a time-shifted copy of the last one), then
  advances whole runs of attempts with vectorised cumulative sums.

Set ``ZPDSIM_BACKEND=numpy`` to force the fallback.
"""

import math
import os

import numpy as np

try:
    from numba import njit
    from numba.extending import register_jitable
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def register_jitable(fn):
        return fn

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn

from ..reservoir import _esr_time

# state vector slots
(T, VC, BATT_Q, FAILS, WINDOW_UNTIL, LOCKOUT_UNTIL, DEPLETED_AT,
 E_PREAUTH, E_POSTAUTH, E_IDLE, E_HARVEST, E_ESR, E_LOAD,
 WAKEUPS, BROWNOUTS, ATTEMPTS, REJECTED, LAST_START, LAST_END, LAST_OUTCOME,
 SUCCESSES, FAILURES, SEGMENTS, LOCKOUTS) = range(24)
N_STATE = 24

# parameter vector slots
(P_ACTIVE, I_THERAPY, I_IDLE, V_SUPPLY, P_CH, CAP, ESR, USE_ESR, V_MAX, V_MIN,
 V_THR_H, V_THR_L, WAKE_LAT, WINDOW, MAX_FAILS, LOCKOUT, STRATEGY, POST_AUTH_E, V_NOM,
 HORIZON) = range(20)
N_PARAM = 20

S_BASELINE, S_FULL, S_COMPARATOR, S_PER_STEP, S_GRADUAL, S_TIMEOUT = range(6)

(EV_START, EV_WAKE, EV_SLEEP, EV_STEP, EV_AUTH_OK, EV_AUTH_FAIL, EV_REJECT,
 EV_DEPLETED, EV_BROWNOUT, EV_POST_AUTH, EV_LOCKOUT, EV_LOCKOUT_END) = range(12)
EVENT_NAMES = ("start", "wake", "sleep", "step", "auth-ok", "auth-fail", "reject",
               "depleted", "brownout", "post-auth", "lockout", "lockout-end")

OUT_NONE, OUT_SUCCESS, OUT_FAILED, OUT_REJECTED, OUT_BROWNOUT, OUT_DEAD = range(6)

PH_IDLE, PH_CHALLENGED, PH_READER_AUTH, PH_MUTUAL, PH_FAILED = range(5)
PHASE_NAMES = ("idle", "challenged", "reader-authenticated", "mutually-authenticated", "failed")

# trace buffer columns
B_T, B_EV, B_VC, B_BATT, B_PHASE = range(5)
N_COLS = 5

_REL_TOL = 1e-12

_esr_time_jit = register_jitable(_esr_time)


def new_state():
    s = np.zeros(N_STATE)
    s[DEPLETED_AT] = np.nan
    s[WINDOW_UNTIL] = -np.inf
    s[LOCKOUT_UNTIL] = -np.inf
    return s


@register_jitable
def _record(buf, nbuf, t, ev, vc, batt_j, phase):
    i = nbuf[0]
    if i < buf.shape[0]:
        buf[i, B_T] = t
        buf[i, B_EV] = ev
        buf[i, B_VC] = vc
        buf[i, B_BATT] = batt_j
        buf[i, B_PHASE] = phase
        nbuf[0] = i + 1
    else:
        nbuf[1] += 1


@register_jitable
def _drain(S, P, q, slot):
    """Take ``q`` coulombs from the battery. Returns the fraction delivered."""
    avail = S[BATT_Q]
    if q < avail:
        S[BATT_Q] = avail - q
        e = q * P[V_SUPPLY]
        S[slot] += e
        S[E_LOAD] += e
        return 1.0
    e = avail * P[V_SUPPLY]
    S[slot] += e
    S[E_LOAD] += e
    S[BATT_Q] = 0.0
    if q > 0.0:
        return avail / q
    return 1.0


@register_jitable
def _pass_time(S, P, dt):
    """Advance the clock while the battery feeds only the idle loads."""
    if dt <= 0.0:
        return True
    if P[I_IDLE] > 0.0:
        f = _drain(S, P, P[I_IDLE] * dt, E_IDLE)
        if f < 1.0:
            S[T] += dt * f
            S[DEPLETED_AT] = S[T]
            return False
    S[T] += dt
    return True


@register_jitable
def _battery_step(S, P, e, slot):
    """Run ``e`` joules of protocol work from the battery at full active power."""
    d = e / P[P_ACTIVE]
    f = _drain(S, P, e / P[V_SUPPLY], slot)
    if f == 1.0 and P[I_THERAPY] > 0.0:
        f = _drain(S, P, P[I_THERAPY] * d, E_IDLE)
    S[T] += d * f
    if f < 1.0:
        S[DEPLETED_AT] = S[T]
        return False
    return True


@register_jitable
def _charge_to(S, P, v_to, buf, nbuf, phase):
    """Sleep until the harvester has lifted the reservoir to ``v_to``, then wake."""
    v0 = S[VC]
    if v0 >= v_to:
        return True
    c = P[CAP]
    stored = 0.5 * c * (v_to * v_to - v0 * v0)
    if P[USE_ESR] > 0.0:
        dt = _esr_time_jit(c * v_to, c, P[ESR], P[P_CH]) - _esr_time_jit(c * v0, c, P[ESR], P[P_CH])
    else:
        dt = stored / P[P_CH]
    if not _pass_time(S, P, dt):
        return False
    harvested = P[P_CH] * dt
    S[E_HARVEST] += harvested
    S[E_ESR] += harvested - stored
    S[VC] = v_to
    S[WAKEUPS] += 1.0
    if not _pass_time(S, P, P[WAKE_LAT]):
        return False
    _record(buf, nbuf, S[T], EV_WAKE, S[VC], S[BATT_Q] * P[V_NOM], phase)
    return True


# _reservoir_draw return codes
R_OK, R_BROWNOUT, R_DEAD = 0, 1, 2


@register_jitable
def _reservoir_draw(S, P, e):
    c = P[CAP]
    v0 = S[VC]
    vmin = P[V_MIN]
    v2 = v0 * v0 - 2.0 * e / c
    if v2 < vmin * vmin - _REL_TOL * P[V_MAX] * P[V_MAX]:
        usable = 0.5 * c * (v0 * v0 - vmin * vmin)
        if usable < 0.0:
            usable = 0.0
        S[E_LOAD] += usable
        S[VC] = vmin if vmin < v0 else v0
        if not _pass_time(S, P, usable / P[P_ACTIVE]):
            return R_DEAD
        return R_BROWNOUT
    S[VC] = math.sqrt(v2) if v2 > 0.0 else 0.0
    S[E_LOAD] += e
    if not _pass_time(S, P, e / P[P_ACTIVE]):
        return R_DEAD
    return R_OK


@register_jitable
def _comparator_step(S, P, e, buf, nbuf, phase):
    """Run one step, sleeping at V_THR_L and waking at V_THR_H as often as needed."""
    c = P[CAP]
    vh = P[V_THR_H]
    vl = P[V_THR_L]
    rem = e
    while True:
        v0 = S[VC]
        avail = 0.5 * c * (v0 * v0 - vl * vl)
        if avail < 0.0:
            avail = 0.0
        if rem <= avail * (1.0 + _REL_TOL):
            v2 = v0 * v0 - 2.0 * rem / c
            S[VC] = math.sqrt(v2) if v2 > vl * vl else vl
            S[E_LOAD] += rem
            return _pass_time(S, P, rem / P[P_ACTIVE])
        if avail > 0.0:
            S[VC] = vl
            S[E_LOAD] += avail
            rem -= avail
            if not _pass_time(S, P, avail / P[P_ACTIVE]):
                return False
        _record(buf, nbuf, S[T], EV_SLEEP, S[VC], S[BATT_Q] * P[V_NOM], phase)
        if not _charge_to(S, P, vh, buf, nbuf, phase):
            return False
        S[SEGMENTS] += 1.0


def _run_attempts(arrivals, n_max, t_limit, step_e, phase_after, n_exec, success, P, S, buf, nbuf):
    """Process up to ``n_max`` attempts; returns how many arrivals were consumed.

    ``arrivals`` empty means back-to-back: each attempt starts the moment the
    implant is free. Stops early when the next arrival is at or past
    ``t_limit`` or the battery is dead.
    """
    back_to_back = arrivals.shape[0] == 0
    strat = int(P[STRATEGY])
    direct = P[CAP] <= 0.0
    done = 0
    while done < n_max:
        if S[DEPLETED_AT] == S[DEPLETED_AT]:
            break
        deferred = False
        if back_to_back:
            arr = S[T]
            if strat == S_TIMEOUT and arr < S[LOCKOUT_UNTIL]:
                arr = S[LOCKOUT_UNTIL]
                deferred = True
        else:
            arr = arrivals[done]
        if arr >= t_limit:
            break
        start = arr if arr > S[T] else S[T]
        if start >= P[HORIZON]:
            # queued work that would only begin after the end of the run
            break
        if strat == S_TIMEOUT and start < S[LOCKOUT_UNTIL]:
            S[REJECTED] += 1.0
            S[LAST_START] = start
            S[LAST_END] = start
            S[LAST_OUTCOME] = OUT_REJECTED
            _record(buf, nbuf, start, EV_REJECT, S[VC], S[BATT_Q] * P[V_NOM], PH_IDLE)
            done += 1
            continue
        if not _pass_time(S, P, start - S[T]):
            _record(buf, nbuf, S[T], EV_DEPLETED, S[VC], 0.0, PH_IDLE)
            break
        if deferred:
            _record(buf, nbuf, S[T], EV_LOCKOUT_END, S[VC], S[BATT_Q] * P[V_NOM], PH_IDLE)

        S[ATTEMPTS] += 1.0
        S[LAST_START] = S[T]
        _record(buf, nbuf, S[T], EV_START, S[VC], S[BATT_Q] * P[V_NOM], PH_IDLE)
        mode = strat
        if strat == S_GRADUAL:
            mode = S_FULL if S[T] < S[WINDOW_UNTIL] else S_BASELINE
        elif strat == S_TIMEOUT:
            mode = S_BASELINE

        alive = True
        browned = False
        phase = PH_IDLE
        for i in range(n_exec):
            e = step_e[i]
            if mode == S_BASELINE:
                alive = _battery_step(S, P, e, E_PREAUTH)
            elif direct:
                S[E_HARVEST] += e
                S[E_LOAD] += e
                alive = _pass_time(S, P, e / P[P_ACTIVE])
            elif mode == S_COMPARATOR:
                if i == 0 and S[VC] < P[V_THR_H]:
                    alive = _charge_to(S, P, P[V_THR_H], buf, nbuf, phase)
                if i == 0:
                    S[SEGMENTS] += 1.0
                if alive:
                    alive = _comparator_step(S, P, e, buf, nbuf, phase)
            else:
                if mode == S_PER_STEP or i == 0:
                    if S[VC] < P[V_MAX]:
                        alive = _charge_to(S, P, P[V_MAX], buf, nbuf, phase)
                    S[SEGMENTS] += 1.0
                if alive:
                    code = _reservoir_draw(S, P, e)
                    if code == R_DEAD:
                        alive = False
                    elif code == R_BROWNOUT:
                        browned = True
            if not alive or browned:
                break
            phase = phase_after[i]
            _record(buf, nbuf, S[T], EV_STEP, S[VC], S[BATT_Q] * P[V_NOM], phase)

        if not alive:
            _record(buf, nbuf, S[T], EV_DEPLETED, S[VC], 0.0, phase)
            S[LAST_OUTCOME] = OUT_DEAD
            S[LAST_END] = S[T]
            done += 1
            break
        failed = True
        if browned:
            S[BROWNOUTS] += 1.0
            S[FAILURES] += 1.0
            S[LAST_OUTCOME] = OUT_BROWNOUT
            _record(buf, nbuf, S[T], EV_BROWNOUT, S[VC], S[BATT_Q] * P[V_NOM], PH_FAILED)
        elif success:
            failed = False
            S[SUCCESSES] += 1.0
            S[FAILS] = 0.0
            S[LAST_OUTCOME] = OUT_SUCCESS
            _record(buf, nbuf, S[T], EV_AUTH_OK, S[VC], S[BATT_Q] * P[V_NOM], PH_MUTUAL)
            if P[POST_AUTH_E] > 0.0:
                if not _battery_step(S, P, P[POST_AUTH_E], E_POSTAUTH):
                    _record(buf, nbuf, S[T], EV_DEPLETED, S[VC], 0.0, PH_MUTUAL)
                    S[LAST_END] = S[T]
                    done += 1
                    break
                _record(buf, nbuf, S[T], EV_POST_AUTH, S[VC], S[BATT_Q] * P[V_NOM], PH_MUTUAL)
        else:
            S[FAILURES] += 1.0
            S[LAST_OUTCOME] = OUT_FAILED
            _record(buf, nbuf, S[T], EV_AUTH_FAIL, S[VC], S[BATT_Q] * P[V_NOM], PH_FAILED)
        if failed:
            if strat == S_GRADUAL:
                S[WINDOW_UNTIL] = S[T] + P[WINDOW]
            elif strat == S_TIMEOUT:
                S[FAILS] += 1.0
                if S[FAILS] >= P[MAX_FAILS]:
                    S[LOCKOUT_UNTIL] = S[T] + P[LOCKOUT]
                    S[FAILS] = 0.0
                    S[LOCKOUTS] += 1.0
                    _record(buf, nbuf, S[T], EV_LOCKOUT, S[VC], S[BATT_Q] * P[V_NOM], PH_FAILED)
        S[LAST_END] = S[T]
        done += 1
    return done


if HAVE_NUMBA:
    _run_attempts_jit = njit(cache=True)(_run_attempts)
else:  # pragma: no cover
    _run_attempts_jit = _run_attempts


# --- numpy backend ------------------------------------------------------------

_PROBE_ROWS = 1 << 16
_CHUNK = 1 << 16
_ACCUMULATORS = (E_PREAUTH, E_POSTAUTH, E_IDLE, E_HARVEST, E_ESR, E_LOAD,
                 WAKEUPS, BROWNOUTS, SUCCESSES, FAILURES, SEGMENTS)


def _probe(kernel, S, P, step_e, phase_after, n_exec, success):
    """One back-to-back attempt from the current state, on a clock starting at 0."""
    s = S.copy()
    s[T] = 0.0
    s[WINDOW_UNTIL] = S[WINDOW_UNTIL] - S[T]
    s[LOCKOUT_UNTIL] = S[LOCKOUT_UNTIL] - S[T]
    for k in _ACCUMULATORS:
        s[k] = 0.0
    s[ATTEMPTS] = 0.0
    p = P.copy()
    p[HORIZON] = np.inf
    buf = np.empty((_PROBE_ROWS, N_COLS))
    nbuf = np.zeros(2, dtype=np.int64)
    done = kernel(np.empty(0), 1, np.inf, step_e, phase_after, n_exec, success, p, s, buf, nbuf)
    if done != 1 or nbuf[1] > 0 or s[DEPLETED_AT] == s[DEPLETED_AT]:
        return None
    return s, buf[:nbuf[0]].copy()


def _bulk_limit(S, P, probe_state, success):
    """Attempts that may be skipped ahead without crossing a strategy transition."""
    strat = int(P[STRATEGY])
    failed = probe_state[LAST_OUTCOME] != OUT_SUCCESS
    if probe_state[LAST_OUTCOME] not in (OUT_SUCCESS, OUT_FAILED):
        return 0
    limit = np.iinfo(np.int64).max
    if strat == S_TIMEOUT:
        if S[LOCKOUT_UNTIL] > S[T]:
            return 0
        if failed:
            limit = int(P[MAX_FAILS] - S[FAILS]) - 1
    if strat == S_GRADUAL and failed and probe_state[E_PREAUTH] > 0.0:
        # a failure on battery opens the harvesting window: not stationary
        return 0
    return max(limit, 0)


def _rows_wanted(buf, nbuf, pattern, n):
    """How many of ``n`` bulk attempts still have room in the trace buffer."""
    free = buf.shape[0] - nbuf[0]
    if pattern.shape[0] == 0 or free <= 0:
        return 0
    return min(n, -(-free // pattern.shape[0]))


def _emit_pattern(buf, nbuf, pattern, n, starts, batt_start, probe_batt0, v_nom):
    """Tile the probe attempt's trace rows onto ``n`` bulk attempts.

    ``starts``/``batt_start`` only need to cover the attempts that fit.
    """
    rows_per = pattern.shape[0]
    total = rows_per * n
    m = _rows_wanted(buf, nbuf, pattern, n)
    if m == 0:
        nbuf[1] += total
        return
    free = buf.shape[0] - nbuf[0]
    block = np.repeat(pattern[None, :, :], m, axis=0)
    block[:, :, B_T] += starts[:m, None]
    block[:, :, B_BATT] -= (probe_batt0 - batt_start[:m, None]) * v_nom
    flat = block.reshape(-1, N_COLS)[:free]
    buf[nbuf[0]:nbuf[0] + flat.shape[0]] = flat
    nbuf[0] += flat.shape[0]
    nbuf[1] += total - flat.shape[0]


def _drive(kernel, scalar_chunk, arrivals, n_max, t_limit, step_e, phase_after, n_exec, success,
           P, S, buf, nbuf):
    """Alternate exact kernel calls with arithmetic fast-forward over stationary runs."""
    back_to_back = arrivals.shape[0] == 0
    strat = int(P[STRATEGY])
    v_supply = P[V_SUPPLY]
    done = 0
    while done < n_max:
        chunk = min(scalar_chunk, n_max - done)
        arr_slice = arrivals if back_to_back else arrivals[done:done + chunk]
        k = kernel(arr_slice, chunk, t_limit, step_e, phase_after, n_exec, success, P, S, buf, nbuf)
        if k == 0:
            break
        done += k
        if S[DEPLETED_AT] == S[DEPLETED_AT] or S[LAST_OUTCOME] == OUT_REJECTED:
            continue
        remaining = n_max - done
        if remaining < 2:
            continue
        probe = _probe(kernel, S, P, step_e, phase_after, n_exec, success)
        if probe is None:
            continue
        ps, pattern = probe
        if ps[VC] != S[VC] or ps[LAST_OUTCOME] != S[LAST_OUTCOME]:
            continue
        limit = min(remaining, _bulk_limit(S, P, ps, success))
        if limit < 1:
            continue
        busy = ps[T]
        q_att = (ps[E_PREAUTH] + ps[E_POSTAUTH] + ps[E_IDLE]) / v_supply
        failed = ps[LAST_OUTCOME] != OUT_SUCCESS
        full_mode = ps[E_PREAUTH] == 0.0

        if back_to_back:
            n = limit
            if busy > 0.0:
                n = min(n, int(math.floor((min(t_limit, P[HORIZON]) - S[T]) / busy)) - 1)
            if q_att > 0.0:
                n = min(n, int(math.floor(S[BATT_Q] / q_att)) - 1)
            if strat == S_GRADUAL and full_mode and not failed:
                n = min(n, int(math.floor((S[WINDOW_UNTIL] - S[T]) / busy)) - 1 if busy > 0 else 0)
            if n < 1:
                continue
            j = np.arange(_rows_wanted(buf, nbuf, pattern, n), dtype=np.float64)
            starts = S[T] + j * busy
            batt_start = S[BATT_Q] - j * q_att
            gaps_total = 0.0
            last_start = S[T] + (n - 1) * busy
        else:
            a = arrivals[done:done + min(limit, _CHUNK)]
            n = int(np.searchsorted(a, t_limit, side="left"))
            a = a[:n]
            if n == 0:
                continue
            j = np.arange(n, dtype=np.float64)
            starts = j * busy + np.maximum(S[T], np.maximum.accumulate(a - j * busy))
            n = int(np.searchsorted(starts, P[HORIZON], side="left"))
            if n == 0:
                continue
            a, j, starts = a[:n], j[:n], starts[:n]
            ends_prev = np.concatenate(([S[T]], starts[:-1] + busy))
            gaps = starts - ends_prev
            q_step = q_att + P[I_IDLE] * gaps
            q_cum = np.cumsum(q_step)
            ok = q_cum < S[BATT_Q] * (1.0 - 1e-9)
            n = int(np.argmin(ok)) if not ok.all() else n
            if strat == S_GRADUAL and full_mode:
                if failed:
                    win_ok = np.concatenate(([starts[0] < S[WINDOW_UNTIL]], gaps[1:] < P[WINDOW]))
                else:
                    win_ok = starts < S[WINDOW_UNTIL]
                if not win_ok.all():
                    n = min(n, int(np.argmin(win_ok)))
            if n < 1:
                continue
            starts = starts[:n]
            gaps = gaps[:n]
            batt_start = S[BATT_Q] - np.concatenate(([0.0], q_cum[:n - 1])) - P[I_IDLE] * gaps
            gaps_total = float(gaps.sum())
            last_start = starts[-1]

        _emit_pattern(buf, nbuf, pattern, n, starts, batt_start, S[BATT_Q], P[V_NOM])
        q_total = n * q_att + P[I_IDLE] * gaps_total
        for slot in _ACCUMULATORS:
            S[slot] += n * ps[slot]
        S[E_IDLE] += P[I_IDLE] * gaps_total * v_supply
        S[E_LOAD] += P[I_IDLE] * gaps_total * v_supply
        S[BATT_Q] -= q_total
        S[ATTEMPTS] += n
        S[LAST_START] = last_start
        S[T] = last_start + busy
        S[LAST_END] = S[T]
        if failed:
            if strat == S_GRADUAL:
                S[WINDOW_UNTIL] = S[T] + P[WINDOW]
            elif strat == S_TIMEOUT:
                S[FAILS] += n
        done += n
    return done


_NUMBA_CHUNK = 4096


def run_attempts_numpy(arrivals, n_max, t_limit, step_e, phase_after, n_exec, success, P, S, buf, nbuf):
    """Pure Python/numpy backend: one interpreted attempt, then vectorised fast-forward."""
    return _drive(_run_attempts, 1, arrivals, n_max, t_limit, step_e, phase_after, n_exec, success,
                  P, S, buf, nbuf)


def run_attempts_numba(arrivals, n_max, t_limit, step_e, phase_after, n_exec, success, P, S, buf, nbuf):
    """Compiled backend: jitted attempt chunks, then the same fast-forward."""
    if not HAVE_NUMBA:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    return _drive(_run_attempts_jit, _NUMBA_CHUNK, arrivals, n_max, t_limit, step_e, phase_after,
                  n_exec, success, P, S, buf, nbuf)


def run_attempts_exact(arrivals, n_max, t_limit, step_e, phase_after, n_exec, success, P, S, buf, nbuf):
    """Every attempt walked individually, no fast-forward. Reference for parity checks."""
    return _run_attempts_jit(arrivals, n_max, t_limit, step_e, phase_after, n_exec, success, P, S, buf, nbuf)


def default_backend():
    choice = os.environ.get("ZPDSIM_BACKEND", "").strip().lower()
    if choice in ("numpy", "python", "fallback"):
        return "numpy"
    if choice == "numba" and not HAVE_NUMBA:
        raise RuntimeError("ZPDSIM_BACKEND=numba but numba is not installed")
    return "numba" if HAVE_NUMBA else "numpy"


def get_runner(backend=None):
    backend = backend or default_backend()
    if backend == "numba":
        return run_attempts_numba
    if backend == "numpy":
        return run_attempts_numpy
    if backend == "exact":
        return run_attempts_exact
    raise ValueError(f"unknown backend {backend!r}")
