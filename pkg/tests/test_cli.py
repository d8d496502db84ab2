import csv
import io
import json

import jsonschema
import numpy as np
import pytest

from oracles import closed_form_lifetime_hours
from zpdsim import powerpath, survey
from zpdsim.cli import main
from zpdsim.simulate import report_schema

# MCU active plus radio transmit, the draw of a back-to-back attacked implant
ATTACK_CURRENT = 0.78e-3 + 4.9e-3


def invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- size-capacitor / charge-time --------------------------------------------

def test_size_capacitor_worked_example(capsys):
    code, out, _ = invoke(capsys, "size-capacitor", "--e-auth", "20.07uJ", "--v-max", "3.3V", "--v-min", "2.1V",
                          "--json")
    assert code == 0
    result = json.loads(out)
    assert result["required_capacitance_uF"] == pytest.approx(6.19, abs=0.005)
    assert result["ceramic_feasible"] is True


def test_size_capacitor_text_with_charge_times(capsys):
    code, out, _ = invoke(capsys, "size-capacitor", "--e-auth", "20.07uJ", "--v-max", "3.3V", "--v-min", "2.1V",
                          "--p-ch", "6.15mW")
    assert code == 0
    assert "6.194 uF" in out and "t_initial" in out


def test_size_capacitor_degenerate_window(capsys):
    code, _, err = invoke(capsys, "size-capacitor", "--e-auth", "20.07uJ", "--v-max", "3.3V", "--v-min", "3.3V")
    assert code == 3 and err


def test_size_capacitor_infeasible_warns(capsys):
    code, out, err = invoke(capsys, "size-capacitor", "--e-auth", "1J", "--v-max", "3.3V", "--v-min", "2.1V",
                            "--json")
    assert code == 0
    assert "warning" in err
    result = json.loads(out)
    assert result["ceramic_feasible"] is False
    assert result["required_capacitance_F"] == pytest.approx(2 * 1.0 / (3.3 ** 2 - 2.1 ** 2))


@pytest.mark.parametrize("bad", ["20.07uF", "twenty", "20.07 parsecs"])
def test_size_capacitor_bad_units(capsys, bad):
    with pytest.raises(SystemExit) as exc:
        main(["size-capacitor", "--e-auth", bad, "--v-max", "3.3V", "--v-min", "2.1V"])
    assert exc.value.code == 2


def test_charge_time(capsys):
    code, out, _ = invoke(capsys, "charge-time", "--capacitance", "10uF", "--p-ch", "6.15mW", "--json")
    assert code == 0
    result = json.loads(out)
    assert result["t_initial_s"] == pytest.approx(10e-6 * 3.3 ** 2 / (2 * 6.15e-3))
    assert result["t_repeat_s"] == pytest.approx(10e-6 * (3.3 ** 2 - 2.1 ** 2) / (2 * 6.15e-3))
    assert round(result["t_initial_s"] * 1e3, 2) == 8.85
    assert round(result["t_repeat_s"] * 1e3, 2) == 5.27


def test_charge_time_esr_is_slower(capsys):
    code, out, _ = invoke(capsys, "charge-time", "--capacitance", "10uF", "--p-ch", "6.15mW", "--esr", "0.5",
                          "--json")
    assert code == 0
    result = json.loads(out)
    assert result["t_initial_esr_s"] > result["t_initial_s"]


def test_charge_time_inverted_window(capsys):
    code, _, _ = invoke(capsys, "charge-time", "--capacitance", "10uF", "--p-ch", "6.15mW", "--v-max", "2V",
                        "--v-min", "3V")
    assert code == 3


# --- figures -------------------------------------------------------------------

def test_figure5_matches_closed_form(capsys):
    code, out, _ = invoke(capsys, "figure", "--which", "5", "--capacities", "500,1000,2000mAh")
    assert code == 0
    table = rows(out)
    hours = [float(r["depletion_hours"]) for r in table]
    assert all(a < b for a, b in zip(hours, hours[1:]))
    for r in table:
        expected = closed_form_lifetime_hours(float(r["capacity_mAh"]), 0.5, ATTACK_CURRENT)
        assert float(r["depletion_hours"]) == pytest.approx(expected, rel=1e-3)


def test_figure4_decreasing(capsys):
    code, out, _ = invoke(capsys, "figure", "--which", "4", "--duties", "0.01,0.05,0.10")
    assert code == 0
    life = [float(r["lifetime_hours"]) for r in rows(out)]
    assert len(life) == 3 and all(a > b for a, b in zip(life, life[1:]))


def test_figure7a_sawtooth_peaks_at_upper_threshold(capsys):
    code, out, _ = invoke(capsys, "figure", "--which", "7a")
    assert code == 0
    table = rows(out)
    v = np.array([float(r["V_C"]) for r in table])
    wakes = [float(r["V_C"]) for r in table if r["event"] == "wake"]
    assert wakes and all(w == pytest.approx(3.0) for w in wakes)
    assert v.max() == pytest.approx(3.0)
    assert v[1:].min() >= 2.4 - 1e-9
    assert table[-1]["event"] == "auth-ok"


def test_figure7b_one_segment_per_step(capsys):
    code, out, _ = invoke(capsys, "figure", "--which", "7b")
    assert code == 0
    table = rows(out)
    steps = [i for i, r in enumerate(table) if r["event"] == "step"]
    assert len(steps) == 6
    for i in steps:
        assert table[i - 1]["event"] == "wake" and float(table[i - 1]["V_C"]) == pytest.approx(3.3)
        assert float(table[i]["V_C"]) >= 2.1
    assert table[-1]["event"] == "auth-ok"


def test_figure_to_file(capsys, tmp_path):
    target = tmp_path / "fig5.csv"
    assert invoke(capsys, "figure", "--which", "5", "--out", str(target))[0] == 0
    assert target.read_text().startswith("capacity_mAh,depletion_hours")


def test_unknown_figure(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["figure", "--which", "9"])
    assert exc.value.code == 2


# --- simulate ----------------------------------------------------------------------

@pytest.mark.parametrize("name", ["baseline_attack", "zpd_full_attack", "legit_programmer",
                                  "availability_burst"])
def test_simulate_report_validates(capsys, tmp_path, scenario_path, name):
    out, trace = tmp_path / "report.json", tmp_path / "trace.csv"
    code, _, _ = invoke(capsys, "simulate", "--scenario", str(scenario_path(name)), "--out", str(out),
                        "--trace", str(trace))
    assert code == 0
    report = json.loads(out.read_text())
    jsonschema.validate(report, report_schema())
    assert report["trace_rows"] == len(rows(trace.read_text()))


def test_simulate_baseline_fixture_depletes(capsys, scenario_path):
    code, out, _ = invoke(capsys, "simulate", "--scenario", str(scenario_path("baseline_attack")))
    assert code == 0
    report = json.loads(out)
    assert report["battery_depletion_time_s"] / 3600 == pytest.approx(88.03, abs=0.01)


def test_simulate_invalid_scenario(capsys, tmp_path, scenario_path):
    data = json.loads(scenario_path("zpd_full_attack").read_text())
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(data, schema_version=7)))
    code, out, err = invoke(capsys, "simulate", "--scenario", str(bad))
    assert code == 3 and out == "" and "schema_version" in err

    data["horizon"] = "-5s"
    data["reservoir"]["v_min"] = "4V"
    bad.write_text(json.dumps(data))
    code, out, err = invoke(capsys, "simulate", "--scenario", str(bad))
    assert code == 3 and out == ""
    assert len([line for line in err.splitlines() if line.startswith("scenario:")]) >= 2


def test_simulate_missing_file(capsys, tmp_path):
    assert invoke(capsys, "simulate", "--scenario", str(tmp_path / "absent.json"))[0] == 2


# --- check -------------------------------------------------------------------------

def test_check_medradio_eirp(capsys):
    code, out, _ = invoke(capsys, "check", "--band", "MedRadio", "--eirp", "30uW")
    assert code == 3
    [verdict] = json.loads(out)
    assert verdict["passed"] is False and verdict["limit"] == pytest.approx(25e-6)
    assert invoke(capsys, "check", "--band", "MedRadio", "--eirp", "25uW")[0] == 0


def test_check_sar_boundaries(capsys):
    assert invoke(capsys, "check", "--band", "ISM", "--sar", "2", "--environment", "public")[0] == 0
    assert invoke(capsys, "check", "--band", "ISM", "--sar", "2.01", "--environment", "public")[0] == 3
    assert invoke(capsys, "check", "--band", "ISM", "--sar", "10", "--environment", "controlled")[0] == 0


def test_check_ism_eirp_not_applicable(capsys):
    code, out, _ = invoke(capsys, "check", "--band", "ISM", "--eirp", "30uW")
    assert code == 0
    assert json.loads(out)[0]["applicable"] is False


def test_check_acoustic(capsys, tmp_path):
    code, _, err = invoke(capsys, "check", "--band", "ultrasound", "--i-spta", "0.1")
    assert code == 3 and "not configured" in err
    cfg = tmp_path / "limits.json"
    cfg.write_text(json.dumps({"regulatory": {"acoustic_i_spta_max": 0.72}}))
    assert invoke(capsys, "check", "--band", "ultrasound", "--i-spta", "0.1", "--config", str(cfg))[0] == 0


# --- catalogs ------------------------------------------------------------------------

def test_catalog_goldens(capsys, fixtures_dir):
    assert invoke(capsys, "catalog", "wpt")[1].encode() == (fixtures_dir / "wpt_catalog.json").read_bytes()
    assert invoke(capsys, "catalog", "schemes")[1].encode() == (fixtures_dir / "comm_schemes.json").read_bytes()


def test_survey_unfiltered(capsys):
    code, out, _ = invoke(capsys, "survey")
    assert code == 0
    assert out.encode() == survey.raw_catalog()
    assert len(json.loads(out)) == 6


@pytest.mark.parametrize("spec,expected", [
    ("mutual_auth=yes", {"Strydis", "Ellouze", "Yang"}),
    ("mutual_auth=no", {"Halperin", "Liu"}),
    ("emergency_access=yes", {"Halperin", "Ellouze"}),
])
def test_survey_filter(capsys, spec, expected):
    code, out, _ = invoke(capsys, "survey", "--filter", spec)
    assert code == 0
    assert {r["technique"].split()[0] for r in json.loads(out)} == expected


def test_survey_table_format(capsys):
    code, out, _ = invoke(capsys, "survey", "--format", "table", "--filter", "mutual_auth=no")
    assert code == 0 and len(out.splitlines()) == 2


def test_survey_unknown_field(capsys):
    code, _, err = invoke(capsys, "survey", "--filter", "colour=red")
    assert code == 2 and "colour" in err


# --- purity ------------------------------------------------------------------------------

PURE_COMMANDS = [
    ("size-capacitor", "--e-auth", "20.07uJ", "--v-max", "3.3V", "--v-min", "2.1V", "--json"),
    ("charge-time", "--capacitance", "10uF", "--p-ch", "6.15mW"),
    ("figure", "--which", "4"),
    ("figure", "--which", "5"),
    ("figure", "--which", "7a"),
    ("figure", "--which", "7b"),
    ("check", "--band", "MedRadio", "--eirp", "30uW"),
    ("catalog", "wpt"),
    ("survey", "--format", "table"),
]


@pytest.mark.parametrize("argv", PURE_COMMANDS, ids=lambda a: "-".join(a[:3]))
def test_repeated_invocation_is_byte_identical(capsys, argv):
    first = invoke(capsys, *argv)
    second = invoke(capsys, *argv)
    assert first == second


def test_simulate_is_pure(capsys, scenario_path):
    argv = ("simulate", "--scenario", str(scenario_path("availability_burst")))
    assert invoke(capsys, *argv) == invoke(capsys, *argv)
