"""Wall-clock comparison of the simulation backends.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--skip-exact]

The numba backend is warmed up once before timing so compilation is excluded.
"""

import argparse
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from zpdsim.device import BatterySpec, ImdConfig
from zpdsim.reservoir import ReservoirSpec
from zpdsim.simulate import DefenseStrategy, Request, Scenario, load_scenario, run
from zpdsim.simulate import _kernels as K

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "tests" / "fixtures" / "scenarios"


def poisson_mix(seed: int = 5) -> Scenario:
    """Overlapping random attack streams: few long runs, so the scalar paths dominate."""
    rng = np.random.default_rng(seed)
    workload = [Request.attack(float(rng.uniform(0, 60)), "poisson", rate=float(rng.uniform(5, 200)), until=600.0)
                for _ in range(8)]
    workload += [Request.legitimate(float(t)) for t in np.sort(rng.uniform(0, 600, 20))]
    workload.sort(key=lambda r: float(r.time))
    return Scenario(ImdConfig(BatterySpec.from_mah(1000, initial_soc=1.0)), ReservoirSpec(10e-6, 3.3, 2.1),
                    DefenseStrategy.comparator(3.0, 2.4), tuple(workload), 600.0, seed=seed)


def cases():
    yield "baseline 400 h back-to-back", load_scenario(SCENARIOS / "baseline_attack.json")
    yield "zpd-full 400 h back-to-back", load_scenario(SCENARIOS / "zpd_full_attack.json")
    yield "comparator 10 min poisson mix", poisson_mix()
    base = load_scenario(SCENARIOS / "baseline_attack.json")
    yield "timeout 400 h, 60 s lockout", base.with_strategy(DefenseStrategy.timeout(3, 60.0))
    # lockout cycles are not fast-forwarded, so this one exercises the scalar attempt loop
    short = replace(base.with_strategy(DefenseStrategy.timeout(3, 0.05)), horizon=3600.0)
    yield "timeout 1 h, 50 ms lockout", short


def timed(sc, backend, repeat):
    samples, rep = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        rep = run(sc, backend)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), rep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-exact", action="store_true", help="the exact walk takes minutes on the long runs")
    args = ap.parse_args(argv)

    backends = ["numba", "numpy"] if K.HAVE_NUMBA else ["numpy"]
    if not args.skip_exact:
        backends.append("exact")
    if K.HAVE_NUMBA:
        t0 = time.perf_counter()
        run(poisson_mix(), "numba")
        print(f"numba warm-up (JIT compile): {time.perf_counter() - t0:.2f} s")

    header = f"{'case':32s} " + " ".join(f"{b:>12s}" for b in backends) + f" {'attempts':>12s}"
    print(header)
    print("-" * len(header))
    for name, sc in cases():
        cells, attempts = [], None
        for backend in backends:
            seconds, rep = timed(sc, backend, 1 if backend == "exact" else args.repeat)
            cells.append(f"{seconds * 1e3:10.1f}ms")
            attempts = rep.counters["attempts"] if attempts is None else attempts
        print(f"{name:32s} " + " ".join(f"{c:>12s}" for c in cells) + f" {attempts:12d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
