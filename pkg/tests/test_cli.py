import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsskit import cli
from rsskit.cli import (
    EXIT_BLOWUP,
    EXIT_OK,
    EXIT_USAGE,
    OUTDIR_ENV,
    SCHEMA,
    main,
    read_field,
    read_history,
    read_report,
    read_table,
    write_field,
    write_history,
    write_json,
    write_table,
)


@pytest.fixture(autouse=True)
def _no_env_outdir(monkeypatch):
    monkeypatch.delenv(OUTDIR_ENV, raising=False)


def _strip_timing(path):
    d = json.loads(path.read_text())
    d.pop("timing", None)
    return json.dumps(d, sort_keys=True)


# -- exit codes ------------------------------------------------------------------------


def test_usage_errors(tmp_path):
    assert main(["nonsense"]) == EXIT_USAGE
    assert main(["poisson", "--dim", "4", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["poisson", "--side", "middle"]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_unknown_config_key(tmp_path):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"bogus": 1}))
    assert main(["poisson", "--config", str(c), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_heat_blowup_exit_code(tmp_path):
    rc = main(["heat", "--n", "31", "--tau", "0", "--dt", "0.01", "--T-final", "1", "--out", str(tmp_path)])
    assert rc == EXIT_BLOWUP
    assert read_report(tmp_path / "report.json")["outcome"] == "BlowUp"


def test_console_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "rsskit", "poisson", "--n", "6", "--runs", "1", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
    assert "max iterations" in r.stdout


# -- poisson ---------------------------------------------------------------------------


def test_poisson_identity_one_iteration(tmp_path):
    assert main(["poisson", "--n", "4", "--operator", "identity", "--out", str(tmp_path)]) == EXIT_OK
    rep = read_report(tmp_path / "report.json")
    assert rep["max_iterations"] == 1 and rep["iterations"] == [1] * 5


def test_poisson_report_and_config_echo(tmp_path):
    assert main(["poisson", "--n", "15", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
    rep = read_report(tmp_path / "report.json")
    assert rep["schema"] == SCHEMA and rep["command"] == "poisson"
    assert rep["config"]["seed"] == 3
    assert json.loads((tmp_path / "config.json").read_text()) == rep["config"]
    assert max(rep["true_relative_residuals"]) < 1e-10


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["poisson", "--n", "15", "--seed", "7", "--out", str(d)]) == EXIT_OK
    assert _strip_timing(a / "report.json") == _strip_timing(b / "report.json")
    assert (a / "config.json").read_bytes() == (b / "config.json").read_bytes()


def test_env_outdir_overrides(tmp_path, monkeypatch):
    env = tmp_path / "env"
    monkeypatch.setenv(OUTDIR_ENV, str(env))
    assert main(["poisson", "--n", "6", "--runs", "1", "--out", str(tmp_path / "flag")]) == EXIT_OK
    assert (env / "report.json").exists() and not (tmp_path / "flag").exists()


def test_config_file_and_flag_precedence(tmp_path):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"n": 6, "runs": 2, "seed": 5}))
    assert main(["poisson", "--config", str(c), "--runs", "3", "--out", str(tmp_path / "o")]) == EXIT_OK
    cfg = read_report(tmp_path / "o" / "report.json")["config"]
    assert cfg["n"] == 6 and cfg["seed"] == 5 and cfg["runs"] == 3


# -- heat / allen-cahn -------------------------------------------------------------------


def test_heat_tau_influence(tmp_path):
    rc = main(["heat", "--n", "127", "--tau", "1", "100", "--dt", "0.004", "--T-final", "0.4", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    t1, e1 = read_history(tmp_path / "error_tau1.csv")
    t100, e100 = read_history(tmp_path / "error_tau100.csv")
    assert np.array_equal(t1, t100)
    assert np.all(e100[1:] > e1[1:])


def test_heat_decays(tmp_path):
    assert main(["heat", "--n", "31", "--T-final", "2", "--dt", "0.004", "--out", str(tmp_path)]) == EXIT_OK
    rep = read_report(tmp_path / "report.json")
    assert rep["runs"][0]["final_norm"] < 1e-6


def test_allen_cahn_energy_monotone(tmp_path):
    assert main(["allen-cahn", "--eps", "0.1", "--steps", "300", "--out", str(tmp_path)]) == EXIT_OK
    rep = read_report(tmp_path / "report.json")
    assert rep["energy_non_increasing"] is True
    t, E = read_history(tmp_path / "energy.csv")
    assert len(E) == 301 and np.all(np.diff(E) <= 1e-10 * np.maximum(1, np.abs(E[:-1])))


# -- stability -------------------------------------------------------------------------


def test_stability_table(tmp_path, capsys):
    assert main(["stability", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_report(tmp_path / "report.json")["rows"]
    kappa = [r["kappa"] for r in rows]
    assert kappa[0] == 1 and kappa[1] == pytest.approx(2) and kappa[2] == "inf"
    assert rows[2]["label_linear"] == "Inc. Stab."
    for r in rows:
        emp = r["dt_max_empirical"]
        emp = np.inf if emp == "inf" else emp
        lin = np.inf if r["dt_max_linear"] == "inf" else r["dt_max_linear"]
        assert emp >= lin * (1 - 1e-2)
    assert "Inc. Stab." in capsys.readouterr().out


# -- sweep -----------------------------------------------------------------------------


def test_empty_sweep(tmp_path):
    assert main(["sweep", "--out", str(tmp_path)]) == EXIT_OK
    assert read_table(tmp_path / "sweep.csv") == []
    assert read_report(tmp_path / "report.json")["rows"] == []


def test_small_sweep(tmp_path):
    rc = main(["sweep", "--N", "15", "--eps-stop", "1e-4", "--row", "1,0.01", "--row", "10,0.1",
               "--row", "0,1.0", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rows = read_table(tmp_path / "sweep.csv")
    assert [r["outcome"] for r in rows] == ["Converged", "Converged", "BlowUp"]
    assert rows[0]["speedup"] == "1.00" and float(rows[1]["speedup"]) > 1
    assert rows[2]["T_c"] == "***" and rows[2]["NT"] == ""
    rep = read_report(tmp_path / "report.json")
    assert [r["outcome"] for r in rep["rows"]] == [r["outcome"] for r in rows]


def test_bad_sweep_row(tmp_path):
    assert main(["sweep", "--row", "1", "--out", str(tmp_path)]) == EXIT_USAGE


def test_cavity_command(tmp_path):
    rc = main(["cavity", "--N", "15", "--eps-stop", "1e-4", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rep = read_report(tmp_path / "report.json")
    psi, h = read_field(tmp_path / "psi.txt")
    assert psi.shape == (15, 15) and h == 1 / 16
    v = rep["vortices"]["primary"]
    assert v["value"] == pytest.approx(psi.max())
    t, r = read_history(tmp_path / "residual.csv")
    assert len(r) == rep["steps"] and r[-1] <= 1e-4


def test_cavity_preset_records_expected(tmp_path):
    parser = cli.build_parser()
    args = parser.parse_args(["cavity", "--preset", "re100"])
    cc, expected = cli._cavity_config(vars(args))
    assert cc.N == 127 and cc.extrapolate
    assert expected["intensity"] == 0.1026


# -- round trips ---------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(ny=st.integers(1, 6), nx=st.integers(1, 6), seed=st.integers(0, 10**6))
def test_field_round_trip(tmp_path_factory, ny, nx, seed):
    p = tmp_path_factory.mktemp("f") / "u.txt"
    u = np.random.default_rng(seed).standard_normal((ny, nx)) * 10.0 ** np.random.default_rng(seed).integers(-300, 300)
    write_field(p, u, 1 / 7)
    v, h = read_field(p)
    assert np.array_equal(u, v) and h == 1 / 7


def test_field_format_exact(tmp_path):
    p = tmp_path / "u.txt"
    write_field(p, np.array([[1.0, 0.1], [-2.5, 3.0], [0.0, 1e-300]]), 0.25)
    assert p.read_text() == "nx 2\nny 3\nh 0.25\n1 0.10000000000000001\n-2.5 3\n0 1e-300\n"


@settings(max_examples=25, deadline=None)
@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_history_round_trip(tmp_path_factory, vals):
    p = tmp_path_factory.mktemp("h") / "h.csv"
    t = np.arange(len(vals)) * 0.1
    write_history(p, t, vals, "energy")
    assert p.read_text().splitlines()[0] == "t,energy"
    t2, v2 = read_history(p)
    assert np.array_equal(t2, t) and np.array_equal(v2, np.array(vals))


def test_table_round_trip(tmp_path):
    rows = [
        {"tau": 1.0, "dt": 0.014, "scheme": "rss", "extrapolate": False, "dt_max": "", "T_c": "35.01",
         "outcome": "Converged", "NT": 2501, "speedup": "1.00"},
        {"tau": 30.0, "dt": 0.6, "scheme": "rss", "extrapolate": False, "dt_max": "", "T_c": "***",
         "outcome": "BlowUp", "NT": "", "speedup": ""},
    ]
    write_table(tmp_path / "t.csv", tmp_path / "t.txt", rows)
    back = read_table(tmp_path / "t.csv")
    assert back == [{k: str(r[k]) for k in cli.TABLE_COLUMNS} for r in rows]
    lines = (tmp_path / "t.txt").read_text().splitlines()
    assert len(lines) == 3 and len({len(x) for x in lines}) == 1


def test_report_round_trip_and_schema(tmp_path):
    rep = {"schema": SCHEMA, "x": [1.5, float("inf")], "y": np.float64(2.0), "z": np.arange(3)}
    write_json(tmp_path / "r.json", rep)
    back = read_report(tmp_path / "r.json")
    assert back == {"schema": SCHEMA, "x": [1.5, "inf"], "y": 2.0, "z": [0, 1, 2]}
    (tmp_path / "bad.json").write_text('{"schema": "other"}')
    with pytest.raises(ValueError):
        read_report(tmp_path / "bad.json")
