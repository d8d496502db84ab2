"""Discrete-event engine: plays a scenario's workload against the implant."""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..powerpath import WPT_CATALOG, RangeRejected, range_gate, select_wpt
from ..protocol import STEP_ROLES, ReaderSession, run_handshake
from ..units import Energy, TimeSpan
from . import _kernels as K
from .scenario import Actor, Credentials, RepeatMode, Request, Scenario
from .strategies import DefenseStrategy, StrategyKind

__all__ = [
    "Trace",
    "SimReport",
    "run",
    "trace_voltage",
    "compare_strategies",
    "ComparisonRow",
    "comparison_csv",
    "phase_after_steps",
    "report_schema",
]

_POISSON_CHUNK = 1 << 16
_MAX_MISSED = 1 << 20
_ATTACKER_KEY_SALT = b"zpdsim-attacker-key"


def phase_after_steps() -> np.ndarray:
    """Session phase reached once each protocol step has completed (successful run)."""
    out = []
    for i, role in enumerate(STEP_ROLES):
        if role == "verify-tag":
            out.append(K.PH_READER_AUTH)
        elif i == len(STEP_ROLES) - 1:
            out.append(K.PH_MUTUAL)
        else:
            out.append(K.PH_CHALLENGED)
    return np.array(out, dtype=np.float64)


@dataclass(frozen=True)
class Trace:
    """Event log: one row per recorded event, columns as in ``CSV_HEADER``."""

    rows: np.ndarray
    dropped: int = 0

    CSV_HEADER = ("time_s", "event", "V_C", "battery_J", "phase")

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def time(self) -> np.ndarray:
        return self.rows[:, K.B_T]

    @property
    def v_c(self) -> np.ndarray:
        return self.rows[:, K.B_VC]

    @property
    def battery_j(self) -> np.ndarray:
        return self.rows[:, K.B_BATT]

    @property
    def event_codes(self) -> np.ndarray:
        return self.rows[:, K.B_EV].astype(np.int64)

    def events(self) -> List[str]:
        return [K.EVENT_NAMES[c] for c in self.event_codes]

    def where(self, event: str) -> np.ndarray:
        return self.rows[self.event_codes == K.EVENT_NAMES.index(event)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for t, ev, vc, batt, ph in self.rows.tolist():
            w.writerow([repr(t), K.EVENT_NAMES[int(ev)], repr(vc), repr(batt), K.PHASE_NAMES[int(ph)]])
        return buf.getvalue()


@dataclass(frozen=True)
class SimReport:
    strategy: str
    seed: int
    horizon: TimeSpan
    battery_depletion_time: Optional[TimeSpan]
    battery_energy_spent_preauth: Energy
    battery_energy_spent_postauth: Energy
    battery_energy_spent_idle: Energy
    legit_auth_latency: Tuple[Optional[float], ...]
    availability: float
    initial_soc: float
    final_soc: float
    counters: Dict[str, int]
    energy: Dict[str, float]
    trace: Trace = field(repr=False, compare=False)
    used_reservoir: bool = False
    # the clock when the run stopped: past the horizon if a session was still finishing
    end_time: float = 0.0
    v_thresholds: Tuple[Optional[float], Optional[float]] = (None, None)

    def conservation_error(self) -> float:
        """Relative mismatch of battery + harvest - losses - reservoir gain against the load."""
        e = self.energy
        supplied = (e["battery_drawn_J"] + e["harvested_J"] - e["esr_loss_J"]
                    - (e["reservoir_final_J"] - e["reservoir_initial_J"]))
        scale = max(abs(e["load_J"]), abs(supplied), 1e-300)
        return abs(supplied - e["load_J"]) / scale

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "horizon_s": float(self.horizon),
            "end_time_s": float(self.end_time),
            "battery_depletion_time_s": None if self.battery_depletion_time is None
            else float(self.battery_depletion_time),
            "battery_energy_spent_preauth_J": float(self.battery_energy_spent_preauth),
            "battery_energy_spent_postauth_J": float(self.battery_energy_spent_postauth),
            "battery_energy_spent_idle_J": float(self.battery_energy_spent_idle),
            "legit_auth_latency_s": list(self.legit_auth_latency),
            "availability": self.availability,
            "initial_soc": self.initial_soc,
            "final_soc": self.final_soc,
            "counters": dict(self.counters),
            "energy": dict(self.energy),
            "trace_rows": len(self.trace),
            "trace_dropped": self.trace.dropped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@lru_cache(maxsize=None)
def report_schema() -> dict:
    """JSON schema that :meth:`SimReport.to_json` output conforms to."""
    text = resources.files("zpdsim").joinpath("data/report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


# --- engine internals ---------------------------------------------------------

def _params(sc: Scenario) -> np.ndarray:
    imd = sc.imd
    st = sc.strategy
    res = sc.reservoir
    P = np.zeros(K.N_PARAM)
    P[K.P_ACTIVE] = imd.active_power
    P[K.I_THERAPY] = imd.therapy_current
    P[K.I_IDLE] = imd.idle_current
    P[K.V_SUPPLY] = imd.mcu.supply
    P[K.V_NOM] = imd.battery.nominal_voltage
    if res is not None:
        P[K.CAP] = res.capacitance
        P[K.ESR] = res.esr
        P[K.V_MAX] = res.v_max
        P[K.V_MIN] = res.v_min
    P[K.USE_ESR] = 1.0 if sc.options.use_esr else 0.0
    P[K.V_THR_H] = st.v_thr_h if st.v_thr_h is not None else P[K.V_MAX]
    P[K.V_THR_L] = st.v_thr_l if st.v_thr_l is not None else P[K.V_MIN]
    P[K.WAKE_LAT] = sc.options.wake_latency
    P[K.WINDOW] = st.window
    P[K.MAX_FAILS] = st.max_failures
    P[K.LOCKOUT] = st.lockout
    P[K.STRATEGY] = st.code
    P[K.POST_AUTH_E] = sc.post_auth_energy
    P[K.HORIZON] = sc.horizon
    return P


class _Rng:
    """Deterministic byte source for nonces, seeded per request."""

    def __init__(self, seed_seq: np.random.SeedSequence):
        self._gen = np.random.default_rng(seed_seq)

    def __call__(self, n: int) -> bytes:
        return self._gen.bytes(n)


def _attacker_key(seed: int, real_key: bytes) -> bytes:
    gen = np.random.default_rng(np.random.SeedSequence([seed, int.from_bytes(_ATTACKER_KEY_SALT[:8], "big")]))
    key = gen.bytes(16)
    return key if key != real_key else bytes(b ^ 0xFF for b in key)


def _handshake(sc: Scenario, req: Request, seed_seq: np.random.SeedSequence) -> Tuple[int, bool]:
    """Run the real exchange once and return (steps executed, mutual success)."""
    spec = sc.protocol
    key = spec.key if req.credentials is Credentials.VALID else _attacker_key(sc.seed, spec.key)
    imd_rng, reader_rng = (_Rng(s) for s in seed_seq.spawn(2))
    reader = ReaderSession(key, reader_id=spec.reader_id, expected_imd_id=spec.imd_id,
                           nonce_length=spec.nonce_length, nonce_source=reader_rng)
    t = run_handshake(spec, reader, nonce_source=imd_rng, insist=req.actor is Actor.ATTACKER)
    steps = t.session.steps_executed
    if tuple(steps) != tuple(range(len(steps))):
        raise RuntimeError(f"protocol executed steps out of order: {steps}")
    if t.success and not t.session.reader_verified:
        raise RuntimeError("session accepted without verifying the reader")
    return len(steps), t.success


@dataclass
class _Item:
    """One workload entry: a single request or a stream of them."""

    seq: int
    req: Request
    next_time: float
    until: float
    remaining: int
    p_ch: float
    n_exec: int
    success: bool
    gen: Optional[np.random.Generator] = None
    index: int = 0
    pending: Optional[np.ndarray] = None
    started: bool = False
    rejected: bool = False

    @property
    def mode(self) -> Optional[RepeatMode]:
        return None if self.req.repeat is None else self.req.repeat.mode

    def key(self):
        return (self.next_time, 0 if self.mode is None else 1, self.seq)

    def _draw(self, start: float, first_at_start: bool) -> np.ndarray:
        gaps = self.gen.exponential(1.0 / self.req.repeat.rate, _POISSON_CHUNK)
        if first_at_start:
            gaps[0] = 0.0
        return start + np.cumsum(gaps)

    def peek(self, limit: float, max_n: int) -> np.ndarray:
        """Upcoming explicit arrival times strictly before ``limit``."""
        limit = min(limit, self.until)
        cap = min(max_n, self.remaining, _POISSON_CHUNK * 16)
        if self.mode is None:
            return np.array([self.next_time]) if self.next_time < limit else np.empty(0)
        if self.mode is RepeatMode.PERIODIC:
            t0 = float(self.req.time)
            period = float(self.req.repeat.period)
            n = cap
            if limit < math.inf:
                n = min(cap, max(0, int(math.ceil((limit - t0) / period)) - self.index))
            times = t0 + period * np.arange(self.index, self.index + n, dtype=np.float64)
            return times[times < limit]
        times = self.pending[:cap]
        return times[:int(np.searchsorted(times, limit, side="left"))]

    def consume(self, k: int, now: float, lockout_until: float):
        self.remaining -= k
        if self.mode is None:
            self.remaining = 0
        elif self.mode is RepeatMode.BACK_TO_BACK:
            self.next_time = max(now, lockout_until)
        elif self.mode is RepeatMode.PERIODIC:
            self.index += k
            self.next_time = float(self.req.time) + float(self.req.repeat.period) * self.index
        else:
            last = float(self.pending[-1])
            self.pending = self.pending[k:]
            if self.pending.shape[0] == 0:
                self.pending = self._draw(last, False)
            self.next_time = float(self.pending[0])

    @property
    def finished(self) -> bool:
        return self.remaining <= 0 or self.next_time >= self.until


def _charging_power(sc: Scenario, req: Request) -> Optional[float]:
    """Harvested power for this reader, or None when it may not power the implant."""
    table = sc.wpt.power_table()
    if sc.wpt.adaptive:
        try:
            sel = select_wpt(req.reader, powers=table)
        except (RangeRejected, ValueError):
            return None
        technique = sel.technique
    else:
        if not range_gate(req.reader):
            return None
        technique = sc.wpt.technique
    if req.reader.distance > WPT_CATALOG[technique].max_range:
        return None
    return table[technique]


def run(scenario: Scenario, backend: Optional[str] = None) -> SimReport:
    """Simulate ``scenario`` up to its horizon (or battery death)."""
    sc = scenario.validate()
    runner = K.get_runner(backend)
    P0 = _params(sc)
    horizon = float(sc.horizon)
    step_e = np.asarray(sc.protocol.step_energies, dtype=np.float64)
    phases = phase_after_steps()

    S = K.new_state()
    batt_q0 = float(sc.imd.battery.available_charge)
    S[K.BATT_Q] = batt_q0
    S[K.VC] = sc.initial_voltage if sc.reservoir is not None else 0.0
    cap = sc.reservoir.capacitance if sc.reservoir is not None else 0.0
    res_e0 = 0.5 * cap * S[K.VC] ** 2
    buf = np.empty((sc.options.trace_capacity, K.N_COLS))
    nbuf = np.zeros(2, dtype=np.int64)

    root = np.random.SeedSequence(sc.seed)
    children = root.spawn(len(sc.workload))
    heap: List[Tuple[Tuple[float, int, int], _Item]] = []
    items: List[_Item] = []
    legit_latency: Dict[int, List[Optional[float]]] = {}
    out_of_range = 0
    class_cache: Dict[Tuple[Actor, Credentials], Tuple[int, bool]] = {}
    timeout = sc.strategy.kind is StrategyKind.TIMEOUT

    for seq, (req, child) in enumerate(zip(sc.workload, children)):
        crypto_seed, stream_seed = child.spawn(2)
        rep = req.repeat
        legit = req.actor is Actor.LEGITIMATE
        if legit:
            legit_latency[seq] = [] if rep is not None else [None]
        if float(req.time) >= horizon:
            continue
        if legit and rep is None:
            n_exec, success = _handshake(sc, req, crypto_seed)
        else:
            cls = (req.actor, req.credentials)
            if cls not in class_cache:
                class_cache[cls] = _handshake(sc, req, crypto_seed)
            n_exec, success = class_cache[cls]
        p_ch = _charging_power(sc, req) if sc.strategy.harvests else 0.0
        until = horizon if rep is None or rep.until is None else min(horizon, float(rep.until))
        count = 1 if rep is None else (rep.count if rep.count is not None else np.iinfo(np.int64).max)
        if p_ch is None:
            # the reader is out of reach: the whole entry is turned away on arrival
            item = _Item(seq, req, float(req.time), horizon, 1, 0.0, 0, False, rejected=True)
            heapq.heappush(heap, (item.key(), item))
            continue
        item = _Item(seq, req, float(req.time), until, count, p_ch, n_exec, success)
        items.append(item)
        if rep is not None and rep.mode is RepeatMode.POISSON:
            item.gen = np.random.default_rng(stream_seed)
            item.pending = item._draw(float(req.time), True)
        heapq.heappush(heap, (item.key(), item))

    def idle_until(t: float) -> bool:
        if S[K.T] < t and not K._pass_time(S, P0, t - S[K.T]):
            K._record(buf, nbuf, S[K.T], K.EV_DEPLETED, S[K.VC], 0.0, K.PH_IDLE)
            return False
        return True

    dead = False
    while heap and not dead:
        _, item = heapq.heappop(heap)
        if item.finished:
            continue
        if item.rejected:
            dead = not idle_until(item.next_time)
            if not dead:
                out_of_range += 1
                K._record(buf, nbuf, S[K.T], K.EV_REJECT, S[K.VC], S[K.BATT_Q] * P0[K.V_NOM], K.PH_IDLE)
            continue
        legit = item.req.actor is Actor.LEGITIMATE
        t_limit = min(heap[0][1].next_time if heap else math.inf, item.until)
        n_cap = 1 if legit else item.remaining
        if item.next_time >= t_limit:
            # tie with another item: make progress with a single request
            n_cap, t_limit = 1, item.until
        P = P0.copy()
        P[K.P_CH] = item.p_ch
        if item.mode is RepeatMode.BACK_TO_BACK:
            if not item.started and not idle_until(item.next_time):
                dead = True
                break
            arrival = S[K.T]
            k = runner(np.empty(0), n_cap, t_limit, step_e, phases, item.n_exec, item.success, P, S, buf, nbuf)
        else:
            arr = item.peek(t_limit, n_cap)
            if arr.shape[0] == 0:
                arr = item.peek(math.inf, 1)
            arrival = float(arr[0])
            k = runner(arr, arr.shape[0], math.inf, step_e, phases, item.n_exec, item.success, P, S, buf, nbuf)
        item.started = True
        if legit and k:
            ok = S[K.LAST_OUTCOME] == K.OUT_SUCCESS
            value = float(S[K.LAST_END] - arrival) if ok else None
            if item.mode is None:
                legit_latency[item.seq] = [value]
            else:
                legit_latency[item.seq].append(value)
        item.consume(k, S[K.T], S[K.LOCKOUT_UNTIL] if timeout else -math.inf)
        dead = S[K.DEPLETED_AT] == S[K.DEPLETED_AT]
        if S[K.T] >= horizon:
            # nothing else may start; whatever is still queued goes unserved
            break
        if not item.finished and not dead:
            heapq.heappush(heap, (item.key(), item))

    if not dead:
        dead = not idle_until(horizon)
    depletion = TimeSpan(S[K.DEPLETED_AT]) if dead else None

    for item in items:
        # legitimate stream requests that arrived but were never served
        if (item.req.actor is Actor.LEGITIMATE and not item.finished
                and item.mode in (RepeatMode.PERIODIC, RepeatMode.POISSON)):
            missed = item.peek(horizon, _MAX_MISSED)
            legit_latency[item.seq].extend([None] * int(missed.shape[0]))

    latencies: List[Optional[float]] = []
    for seq in sorted(legit_latency):
        values = legit_latency[seq]
        latencies.extend(values if values else [None])
    deadline = float(sc.options.deadline)
    if latencies:
        availability = sum(1 for x in latencies if x is not None and x <= deadline) / len(latencies)
    else:
        availability = 1.0

    rows = buf[:nbuf[0]].copy()
    if dead and rows.shape[0] and rows[-1, K.B_EV] != K.EV_DEPLETED:
        # a full buffer swallowed the depletion row; it matters more than the row before it
        rows[-1] = (S[K.DEPLETED_AT], K.EV_DEPLETED, S[K.VC], 0.0, K.PH_IDLE)
    v_supply = P0[K.V_SUPPLY]
    res_e1 = 0.5 * cap * S[K.VC] ** 2
    energy = {
        "battery_initial_J": batt_q0 * v_supply,
        "battery_final_J": S[K.BATT_Q] * v_supply,
        "battery_drawn_J": S[K.E_PREAUTH] + S[K.E_POSTAUTH] + S[K.E_IDLE],
        "harvested_J": S[K.E_HARVEST],
        "esr_loss_J": S[K.E_ESR],
        "reservoir_initial_J": res_e0,
        "reservoir_final_J": res_e1,
        "load_J": S[K.E_LOAD],
    }
    counters = {
        "attempts": int(S[K.ATTEMPTS]),
        "successes": int(S[K.SUCCESSES]),
        "failures": int(S[K.FAILURES]),
        "brownouts": int(S[K.BROWNOUTS]),
        "wakeups": int(S[K.WAKEUPS]),
        "rejected": int(S[K.REJECTED]),
        "lockouts": int(S[K.LOCKOUTS]),
        "discharge_segments": int(S[K.SEGMENTS]),
        "out_of_range": out_of_range,
        "legit_requests": len(latencies),
    }
    capacity = float(sc.imd.battery.capacity)
    return SimReport(
        strategy=sc.strategy.label,
        seed=sc.seed,
        horizon=sc.horizon,
        battery_depletion_time=depletion,
        battery_energy_spent_preauth=Energy(S[K.E_PREAUTH]),
        battery_energy_spent_postauth=Energy(S[K.E_POSTAUTH]),
        battery_energy_spent_idle=Energy(S[K.E_IDLE]),
        legit_auth_latency=tuple(latencies),
        availability=availability,
        initial_soc=batt_q0 / capacity,
        final_soc=S[K.BATT_Q] / capacity,
        counters=counters,
        energy=energy,
        trace=Trace(rows, int(nbuf[1])),
        used_reservoir=sc.reservoir is not None,
        end_time=float(S[K.T]),
        v_thresholds=(sc.strategy.v_thr_h, sc.strategy.v_thr_l),
    )


def trace_voltage(report: SimReport) -> Tuple[np.ndarray, np.ndarray]:
    """(time, V_C) samples of the reservoir voltage."""
    if not report.used_reservoir:
        raise ValueError("the scenario ran without a reservoir; there is no V_C to trace")
    return report.trace.time.copy(), report.trace.v_c.copy()


@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    availability: float
    battery_depletion_time_s: Optional[float]
    battery_energy_spent_preauth_J: float
    attempts: int
    successes: int
    wakeups: int
    brownouts: int
    lockouts: int
    max_legit_latency_s: Optional[float]


def compare_strategies(base: Scenario, strategies: Sequence[DefenseStrategy],
                       backend: Optional[str] = None) -> List[ComparisonRow]:
    """Run the same workload and seed under each strategy."""
    if not strategies:
        raise ValueError("need at least one strategy")
    rows = []
    for st in strategies:
        rep = run(base.with_strategy(st), backend)
        done = [x for x in rep.legit_auth_latency if x is not None]
        rows.append(ComparisonRow(
            rep.strategy, rep.availability,
            None if rep.battery_depletion_time is None else float(rep.battery_depletion_time),
            float(rep.battery_energy_spent_preauth), rep.counters["attempts"], rep.counters["successes"],
            rep.counters["wakeups"], rep.counters["brownouts"], rep.counters["lockouts"],
            max(done) if done else None))
    return rows


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(ComparisonRow.__dataclass_fields__)
    w.writerow(names)
    for r in rows:
        w.writerow(["" if getattr(r, n) is None else (repr(getattr(r, n)) if isinstance(getattr(r, n), float)
                                                     else getattr(r, n)) for n in names])
    return buf.getvalue()
