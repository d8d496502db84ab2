"""Scenario builders shared by the simulation tests."""

import numpy as np

from zpdsim.device import BatterySpec, ImdConfig
from zpdsim.reservoir import ReservoirSpec
from zpdsim.simulate import DefenseStrategy, Request, Scenario, SimOptions

REF_RESERVOIR = ReservoirSpec(10e-6, 3.3, 2.1)
P_ACTIVE = 3.3 * (0.78e-3 + 4.9e-3)

ALL_STRATEGIES = (
    DefenseStrategy.baseline(),
    DefenseStrategy.full_reservoir(),
    DefenseStrategy.comparator(3.0, 2.4),
    DefenseStrategy.per_step(),
    DefenseStrategy.gradual(5.0),
    DefenseStrategy.timeout(3, 10.0),
)
ZPD_STRATEGIES = tuple(s for s in ALL_STRATEGIES if s.is_zpd)


def imd(mah=1000.0, soc=1.0, therapy=0.0):
    return ImdConfig(BatterySpec.from_mah(mah, initial_soc=soc), therapy_current=therapy)


def scenario(strategy, workload, horizon, mah=1000.0, soc=1.0, reservoir=REF_RESERVOIR, seed=0, **kw):
    return Scenario(imd(mah, soc, kw.pop("therapy", 0.0)), reservoir, strategy, tuple(workload), horizon,
                    seed=seed, **kw)


def random_attack_workload(rng: np.random.Generator, horizon: float):
    """A mix of attack streams and single probes, sorted by start time."""
    out = []
    for _ in range(int(rng.integers(1, 5))):
        t = float(rng.uniform(0, horizon * 0.8))
        kind = int(rng.integers(0, 4))
        if kind == 0:
            out.append(Request.attack(t, "back-to-back", until=t + float(rng.uniform(0.01, horizon))))
        elif kind == 1:
            out.append(Request.attack(t, "poisson", rate=float(rng.uniform(1, 500)), until=horizon))
        elif kind == 2:
            out.append(Request.attack(t, "periodic", period=float(rng.uniform(1e-3, 1.0))))
        else:
            out.append(Request.attack(t, "back-to-back", count=int(rng.integers(1, 20))))
    out.sort(key=lambda r: float(r.time))
    return out


def mixed_workload(rng: np.random.Generator, horizon: float):
    out = random_attack_workload(rng, horizon)
    for _ in range(int(rng.integers(1, 4))):
        out.append(Request.legitimate(float(rng.uniform(0, horizon))))
    out.sort(key=lambda r: float(r.time))
    return out


def big_trace():
    return SimOptions(trace_capacity=1_000_000)
