"""``zpd-sim`` command-line front end.

Exit codes: 0 success, 2 usage or unit-parse error, 3 domain constraint violated.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from . import device, powerpath, reservoir, survey
from .units import (Capacitance, Charge, Energy, Power, Resistance, TimeSpan, UnitError, DimensionError,
                    Voltage, parse_quantity)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3

DEFAULT_DUTIES = (0.01, 0.02, 0.05, 0.10, 0.15, 0.20)
DEFAULT_CAPACITIES_MAH = (100.0, 200.0, 500.0, 1000.0, 1500.0, 2000.0)
FIG4_BATTERY_MAH = 1000.0


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


def _quantity(kind) -> Callable[[str], float]:
    def parse(text: str):
        try:
            return parse_quantity(text, expect=kind)
        except (UnitError, DimensionError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    parse.__name__ = kind.__name__.lower()
    return parse


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _capacity_list(text: str) -> List[float]:
    """``500,1000,2000mAh``: the unit on the last item applies to bare numbers."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty capacity list")
    unit = ""
    tail = parts[-1].lstrip("0123456789.eE+-")
    if tail:
        unit = tail
    out = []
    for p in parts:
        token = p if p.lstrip("0123456789.eE+-") else p + (unit or "mAh")
        try:
            q = parse_quantity(token, expect=Charge)
        except (UnitError, DimensionError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
        out.append(q / 3.6)
    return out


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --- commands ------------------------------------------------------------------

def cmd_size_capacitor(args) -> int:
    if not args.v_min < args.v_max:
        raise DomainError(f"need v_min < v_max (got {args.v_min:g} V and {args.v_max:g} V)")
    verdict = reservoir.required_capacitance(args.e_auth, args.v_max, args.v_min, args.margin)
    stock = reservoir.required_capacitance(args.e_auth, args.v_max, args.v_min, reservoir.SIZING_MARGIN)
    result = {
        "e_auth_J": float(args.e_auth),
        "v_max_V": float(args.v_max),
        "v_min_V": float(args.v_min),
        "margin": args.margin,
        "required_capacitance_F": float(verdict.required_capacitance),
        "required_capacitance_uF": float(verdict.required_capacitance) * 1e6,
        "ceramic_feasible": verdict.ceramic_feasible,
        "note": verdict.note,
        "suggested_capacitance_F": float(stock.required_capacitance),
        "suggested_margin": reservoir.SIZING_MARGIN,
    }
    if args.p_ch is not None:
        spec = reservoir.ReservoirSpec(verdict.required_capacitance, args.v_max, args.v_min)
        t_init, t_rep = reservoir.charge_times(spec, args.p_ch)
        result.update({"p_ch_W": float(args.p_ch), "t_initial_s": float(t_init), "t_repeat_s": float(t_rep)})
    if not verdict.ceramic_feasible:
        sys.stderr.write(f"warning: not feasible with ceramic capacitors: {verdict.note}\n")
    if args.json:
        sys.stdout.write(_dump(result))
    else:
        lines = [f"required capacitance: {result['required_capacitance_uF']:.4g} uF (margin {args.margin:g})",
                 f"ceramic feasible: {'yes' if verdict.ceramic_feasible else 'no'} ({verdict.note})",
                 f"suggested with x{reservoir.SIZING_MARGIN:g} margin: "
                 f"{result['suggested_capacitance_F'] * 1e6:.4g} uF"]
        if args.p_ch is not None:
            lines.append(f"t_initial: {result['t_initial_s'] * 1e3:.4g} ms, t_repeat: {result['t_repeat_s'] * 1e3:.4g} ms")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_charge_time(args) -> int:
    if not args.v_min < args.v_max:
        raise DomainError(f"need v_min < v_max (got {args.v_min:g} V and {args.v_max:g} V)")
    if not args.p_ch > 0 or not args.capacitance > 0:
        raise DomainError("capacitance and p_ch must be positive")
    spec = reservoir.ReservoirSpec(args.capacitance, args.v_max, args.v_min, args.esr)
    t_init, t_rep = reservoir.charge_times(spec, args.p_ch)
    result = {
        "capacitance_F": float(args.capacitance),
        "p_ch_W": float(args.p_ch),
        "t_initial_s": float(t_init),
        "t_repeat_s": float(t_rep),
    }
    if args.esr > 0:
        c, r = float(args.capacitance), float(args.esr)
        full = reservoir.charge_time_esr(c * args.v_max, c, r, args.p_ch)
        low = reservoir.charge_time_esr(c * args.v_min, c, r, args.p_ch)
        result.update({"esr_Ohm": r, "t_initial_esr_s": float(full), "t_repeat_esr_s": float(full - low)})
    if args.json:
        sys.stdout.write(_dump(result))
    else:
        out = f"t_initial: {t_init * 1e3:.4g} ms\nt_repeat: {t_rep * 1e3:.4g} ms\n"
        if "t_initial_esr_s" in result:
            out += (f"with ESR {args.esr:g} Ohm: t_initial {result['t_initial_esr_s'] * 1e3:.4g} ms, "
                    f"t_repeat {result['t_repeat_esr_s'] * 1e3:.4g} ms\n")
        sys.stdout.write(out)
    return EXIT_OK


def _figure7(args, comparator: bool) -> str:
    from .simulate import DefenseStrategy, Request, Scenario, run
    from .device import BatterySpec, ImdConfig
    from .simulate.scenario import SimOptions, WptConfig
    from .powerpath import WptTechnique
    spec = reservoir.ReservoirSpec(args.capacitance, args.v_max, args.v_min)
    strategy = (DefenseStrategy.comparator(args.v_thr_h, args.v_thr_l) if comparator
                else DefenseStrategy.per_step())
    workload = tuple(Request.legitimate(i * args.period) for i in range(args.sessions))
    scenario = Scenario(ImdConfig(BatterySpec.from_mah(FIG4_BATTERY_MAH)), spec, strategy, workload,
                        TimeSpan(args.sessions * args.period), wpt=WptConfig(WptTechnique.IPT, args.p_ch),
                        options=SimOptions(trace_capacity=200_000))
    return run(scenario).trace.to_csv()


def cmd_figure(args) -> int:
    which = args.which
    if which == "4":
        batt = device.BatterySpec.from_mah(args.battery_mah, initial_soc=1.0)
        rows = device.lifetime_sweep(args.duties, batt, radio_duty=args.radio_duty)
        text = device.lifetime_csv(rows)
    elif which == "5":
        rows = device.depletion_sweep(args.capacities, soc=args.soc)
        text = device.depletion_csv(rows)
    elif which in ("7a", "7b"):
        try:
            text = _figure7(args, which == "7a")
        except ValueError as exc:
            raise DomainError(str(exc)) from exc
    else:  # argparse restricts choices; kept for direct callers
        raise UsageError(f"unknown figure {which!r}")
    _emit(text, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import ScenarioError, load_scenario, run
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        for v in exc.violations:
            sys.stderr.write(f"scenario: {v}\n")
        return EXIT_DOMAIN
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    report = run(scenario, backend=args.backend)
    _emit(report.to_json(), args.out)
    if args.trace:
        Path(args.trace).write_text(report.trace.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_check(args) -> int:
    limits = powerpath.RegulatoryLimits()
    if args.config:
        try:
            section = json.loads(Path(args.config).read_text(encoding="utf-8")).get("regulatory", {})
            limits = powerpath.RegulatoryLimits.from_mapping(section)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {args.config}: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise DomainError(f"bad regulatory section: {exc}") from exc
    proposal = powerpath.Proposal(args.band, None if args.eirp is None else float(args.eirp), args.sar,
                                  args.environment, args.i_spta, args.i_sppa)
    try:
        verdicts = powerpath.check_regulatory(limits, proposal)
    except powerpath.LimitNotConfigured as exc:
        raise DomainError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sys.stdout.write(_dump([v.as_dict() for v in verdicts]))
    return EXIT_OK if all(v.passed for v in verdicts) else EXIT_DOMAIN


def cmd_catalog(args) -> int:
    text = powerpath.catalog_json() if args.what == "wpt" else powerpath.schemes_json()
    sys.stdout.write(text)
    return EXIT_OK


def cmd_survey(args) -> int:
    try:
        filters = survey.parse_filters(args.filter or [])
    except (survey.UnknownField, ValueError) as exc:
        raise UsageError(exc.args[0]) from exc
    entries = survey.filter_catalog(filters)
    if args.format == "json":
        sys.stdout.write(survey.catalog_json(entries))
    else:
        for e in entries:
            sys.stdout.write(f"{e.technique}\tmutual_auth={e.mutual_auth}\temergency_access={e.emergency_access}"
                             f"\twpt={e.wpt_type}\tscheme={e.comm_scheme}\n")
    return EXIT_OK


# --- parser --------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zpd-sim", description="Battery-DoS and zero-power-defense toolkit for implants.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("size-capacitor", help="minimum reservoir capacitance for one authentication")
    s.add_argument("--e-auth", type=_quantity(Energy), required=True)
    s.add_argument("--v-max", type=_quantity(Voltage), required=True)
    s.add_argument("--v-min", type=_quantity(Voltage), required=True)
    s.add_argument("--margin", type=float, default=1.0)
    s.add_argument("--p-ch", type=_quantity(Power))
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_size_capacitor)

    s = sub.add_parser("charge-time", help="constant-power charging delays")
    s.add_argument("--capacitance", type=_quantity(Capacitance), required=True)
    s.add_argument("--p-ch", type=_quantity(Power), required=True)
    s.add_argument("--v-max", type=_quantity(Voltage), default=Voltage(3.3))
    s.add_argument("--v-min", type=_quantity(Voltage), default=Voltage(2.1))
    s.add_argument("--esr", type=_quantity(Resistance), default=Resistance(0.0))
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_charge_time)

    s = sub.add_parser("figure", help="plot-ready CSV for the lifetime, depletion and trace figures")
    s.add_argument("--which", choices=("4", "5", "7a", "7b"), required=True)
    s.add_argument("--duties", type=_float_list, default=list(DEFAULT_DUTIES))
    s.add_argument("--radio-duty", type=float, default=0.0021)
    s.add_argument("--battery-mah", type=float, default=FIG4_BATTERY_MAH)
    s.add_argument("--capacities", type=_capacity_list, default=list(DEFAULT_CAPACITIES_MAH))
    s.add_argument("--soc", type=float, default=device.HALF_FULL)
    s.add_argument("--capacitance", type=_quantity(Capacitance), default=Capacitance(4.7e-6))
    s.add_argument("--v-max", type=_quantity(Voltage), default=Voltage(3.3))
    s.add_argument("--v-min", type=_quantity(Voltage), default=Voltage(2.1))
    s.add_argument("--v-thr-h", type=_quantity(Voltage), default=Voltage(3.0))
    s.add_argument("--v-thr-l", type=_quantity(Voltage), default=Voltage(2.4))
    s.add_argument("--p-ch", type=_quantity(Power), default=Power(6.15e-3))
    s.add_argument("--sessions", type=int, default=1)
    s.add_argument("--period", type=_quantity(TimeSpan), default=TimeSpan(0.05))
    s.add_argument("--out")
    s.set_defaults(func=cmd_figure)

    s = sub.add_parser("simulate", help="run a scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out")
    s.add_argument("--trace")
    s.add_argument("--backend", choices=("numba", "numpy", "exact"))
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("check", help="regulatory limit checks")
    s.add_argument("--band", required=True)
    s.add_argument("--eirp", type=_quantity(Power))
    s.add_argument("--sar", type=float, help="W/kg")
    s.add_argument("--environment", default="public", choices=("public", "controlled"))
    s.add_argument("--i-spta", type=float)
    s.add_argument("--i-sppa", type=float)
    s.add_argument("--config", help="JSON file with a 'regulatory' section overriding the limits")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("catalog", help="WPT technique or passive-scheme catalog as JSON")
    s.add_argument("what", choices=("wpt", "schemes"))
    s.set_defaults(func=cmd_catalog)

    s = sub.add_parser("survey", help="catalog of published zero-power defense designs")
    s.add_argument("--filter", action="append", metavar="KEY=VALUE")
    s.add_argument("--format", choices=("json", "table"), default="json")
    s.set_defaults(func=cmd_survey)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"zpd-sim: error: {exc}\n")
        return EXIT_USAGE
    except DomainError as exc:
        sys.stderr.write(f"zpd-sim: {exc}\n")
        return EXIT_DOMAIN
    except ValueError as exc:
        sys.stderr.write(f"zpd-sim: {exc}\n")
        return EXIT_DOMAIN


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
