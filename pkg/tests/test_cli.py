import json
import math
import subprocess
import sys

import pytest

from nld.cli import main
from nld.config import parse_config
from nld.errors import ConfigError

LATTICE = {
    "name": "lattice",
    "measure": {"type": "integer-lattice", "power": 2, "K": 200},
    "domain": {"type": "interval", "a": 0.0, "b": 1.0},
    "grid": {"h": 0.0625, "R_trunc": 1.0, "basis": "P0"},
    "problem": {"f": {"type": "constant", "value": 1.0}, "g": {"type": "constant", "value": 0.0}},
    "tasks": ["solve"],
    "seed": 1,
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2))
    return str(p)


def test_solve_writes_constant_csv(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", _write(tmp_path, LATTICE), "--out", str(out)]) == 0
    lines = (out / "solution.csv").read_text().splitlines()
    assert lines[0] == "x1,value"
    rows = [tuple(map(float, ln.split(","))) for ln in lines[1:]]
    inside = [v for x, v in rows if 0 < x < 1]
    assert len(inside) == 16 and all(abs(v - 3 / math.pi ** 2) < 1e-6 for v in inside)
    assert (out / "summary.txt").read_text().startswith("PASS")


def test_csv_round_trips_exactly(tmp_path):
    out = tmp_path / "out"
    main(["solve", "--config", _write(tmp_path, LATTICE), "--out", str(out)])
    for ln in (out / "solution.csv").read_text().splitlines()[1:]:
        for field in ln.split(","):
            assert float(field) == float(repr(float(field)))
            assert f"{float(field):.17g}" == field


def test_report_is_byte_identical(tmp_path):
    cfg = dict(LATTICE, tasks=["solve", "poincare", "bounds"])
    path = _write(tmp_path, cfg)
    main(["run", "--config", path, "--out", str(tmp_path / "a")])
    main(["run", "--config", path, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert "timings" not in json.loads((tmp_path / "a" / "report.json").read_text())


def test_mc_report_deterministic_under_seed(tmp_path):
    cfg = dict(LATTICE, tasks=["mc"], mc={"x0": [0.5], "n_paths": 2000})
    path = _write(tmp_path, cfg)
    main(["mc", "--config", path, "--seed", "5", "--out", str(tmp_path / "a")])
    main(["mc", "--config", path, "--seed", "5", "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["mc"]["estimate"] == b["mc"]["estimate"] and a["mc"]["seed"] == 5


def test_empty_task_list_is_noop(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", _write(tmp_path, dict(LATTICE, tasks=[])), "--out", str(out)]) == 0
    assert not (out / "solution.csv").exists()


def test_alpha_out_of_range_is_parse_error(tmp_path, capsys):
    cfg = dict(LATTICE, measure={"type": "fractional", "alpha": 2.5})
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "alpha" in err and "line" in err


def test_parse_error_reports_position():
    text = '{\n  "name": "x",\n  "measure": {"type": "fractional", "alpha": 2.5},\n' \
           '  "domain": {"type": "interval", "a": 0, "b": 1}\n}'
    with pytest.raises(ConfigError) as info:
        parse_config(text, "inline")
    assert "line 3" in str(info.value)


def test_malformed_json_is_parse_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"name": "x",\n "measure": }')
    assert main(["solve", "--config", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_function_type_is_parse_error(tmp_path):
    cfg = dict(LATTICE, problem={"f": {"type": "sinusoid"}})
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_inadmissible_basis_exit_code(tmp_path):
    cfg = dict(LATTICE, measure={"type": "fractional", "alpha": 1.5})
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


def test_path_cap_exit_code(tmp_path):
    cfg = dict(LATTICE, measure={"type": "atomic", "atoms": [[0.001, 1.0]]}, tasks=["mc"],
               mc={"x0": [0.5], "n_paths": 10, "max_jumps": 20, "compare": False})
    assert main(["mc", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 4


def test_failed_expectation_exit_code(tmp_path, capsys):
    cfg = dict(LATTICE, expect={"solve.max_value": {"value": 0.5, "tol": 1e-6}})
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert "FAIL lattice expect.solve.max_value" in capsys.readouterr().out


def test_config_required_for_single_tasks(tmp_path):
    assert main(["solve", "--out", str(tmp_path)]) == 2


def test_directory_of_configs(tmp_path):
    d = tmp_path / "cfgs"
    d.mkdir()
    _write(d, dict(LATTICE, name="one"), "one.json")
    _write(d, dict(LATTICE, name="two", tasks=["poincare"]), "two.json")
    assert main(["run", "--config", str(d), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "one" / "report.json").exists()
    assert (tmp_path / "o" / "two" / "report.json").exists()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "nld.cli", "solve", "--config", _write(tmp_path, LATTICE),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout


@pytest.mark.slow
def test_verify_all_on_shipped_corpus(tmp_path, capsys):
    assert main(["verify-all", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert len({ln.split()[1] for ln in out.splitlines() if ln.startswith("PASS")}) >= 6
