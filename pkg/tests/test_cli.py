import csv
import io
import math

import pytest

from semigroup_lab.cli import ConfigError, main, parse_config, render_csv, execute


def _write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


ENTROPY = """[experiment]
kind = entropy
seed = 0
output = {out}

[system]
name = shift2

[params]
epsilons = 1.0
n_min = 4
n_max = 16
"""


def test_entropy_run_ends_with_log2(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["run", _write(tmp_path, ENTROPY.format(out=out))]) == 0
    text = out.read_text()
    assert text.startswith("epsilon,") and "\r" not in text and text.endswith("\n")
    last = _rows(text)[-1]
    assert last["epsilon"] == "plateau"
    assert abs(float(last["fit_slope"]) - math.log(2)) < 0.02


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", _write(tmp_path, ENTROPY.format(out=a), "a.ini")])
    main(["run", _write(tmp_path, ENTROPY.format(out=b), "b.ini")])
    assert a.read_bytes() == b.read_bytes()


def test_malformed_key_exits_1(tmp_path, capsys):
    bad = ENTROPY.format(out="-").replace("n_min", "n_mni")
    assert main(["run", _write(tmp_path, bad)]) == 1
    assert "line 11, column 1" in capsys.readouterr().err


@pytest.mark.parametrize("text,where", [
    ("[experiment]\nkind = entropy\nthis line has no equals\n", "line 3"),
    ("[experiment]\nkind = nope\n[system]\nname = shift2\n[params]\n", "line 2"),
    ("[bogus]\nx = 1\n", "line 1"),
    ("[experiment]\nkind = trace\n[system]\nname = shift2\n[params]\nepsilons = 0.1\n", "seed"),
])
def test_config_errors(text, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert where in str(exc.value)


def test_missing_required_param():
    with pytest.raises(ConfigError, match="n_max"):
        parse_config("[experiment]\nkind = entropy\n[system]\nname = shift2\n[params]\nepsilons = 1\nn_min = 2\n")


def test_stationary_residual(tmp_path, capsys):
    cfg = """[experiment]
kind = stationary
[system]
kind = circle
degrees = 2,3
[params]
probabilities = 0.3,0.7
resolution = 6144
"""
    assert main(["run", _write(tmp_path, cfg)]) == 0
    rows = _rows(capsys.readouterr().out)
    summary = rows[-1]
    assert summary["cell_id"] == "summary"
    assert float(summary["uniform_residual"]) <= 1e-12
    assert float(summary["residual"]) <= 1e-12


def test_precondition_error_exits_2(tmp_path, capsys):
    cfg = ENTROPY.format(out="-").replace("epsilons = 1.0", "epsilons = -1.0")
    assert main(["run", _write(tmp_path, cfg)]) == 2
    assert "precondition" in capsys.readouterr().err


def test_nonconvergence_exits_3(tmp_path):
    cfg = """[experiment]
kind = stationary
[system]
kind = finite
tables = 1,2,2;1,2,2
[params]
probabilities = 0.5,0.5
resolution = 0
max_iter = 1
"""
    assert main(["run", _write(tmp_path, cfg)]) == 3


def test_capacity_bracket_failure_exits_3(tmp_path):
    cfg = """[experiment]
kind = capacity
[system]
name = shift2
[params]
delta = 1.0
n_min = 2
n_max = 6
gamma_low = 1.5
gamma_high = 3.0
"""
    assert main(["run", _write(tmp_path, cfg)]) == 3


def test_trace_and_verify(tmp_path, capsys):
    out = tmp_path / "cert.csv"
    cfg = f"""[experiment]
kind = trace
seed = 3
output = {out}
[system]
name = shift2
[params]
instances = 3
epsilons = 0.2,0.1
"""
    assert main(["run", _write(tmp_path, cfg)]) == 0
    rows = _rows(out.read_text())
    assert rows and all(r["pass"] == "true" for r in rows)
    assert all({"epsilon", "snapped_epsilon"} <= set(r) for r in rows)
    capsys.readouterr()
    assert main(["verify", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "pass"
    lines = out.read_text().splitlines()
    head = lines[0].split(",")
    first = lines[1].split(",")
    first[head.index("count")] = first[head.index("bound")]
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join([lines[0], ",".join(first)] + lines[2:]) + "\n")
    assert main(["verify", str(bad)]) == 3
    nohead = tmp_path / "nohead.csv"
    nohead.write_text("a,b\n1,2\n")
    assert main(["verify", str(nohead)]) == 1


def test_list_systems(capsys):
    assert main(["list-systems"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert {"shift2", "e2e3", "doubling"} <= set(names)


def test_case_zoo_and_recurrence_rows_carry_scales():
    cfg = parse_config("[experiment]\nkind = case-zoo\n[params]\ncases = 3\nhorizons = 1000\n")
    out = execute(cfg)
    assert out.status == 0 and "threshold" in out.header
    cfg = parse_config("[experiment]\nkind = recurrence\n[system]\nname = shift2\n[params]\n"
                       "point = oscillating\nepsilons = 1.0\nhorizons = 4096\n")
    out = execute(cfg)
    assert {"epsilon", "horizon", "threshold"} <= set(out.header)


def _gap(pairs, flt=None):
    text = ("[experiment]\nkind = gap-entropy\nseed = 0\n[system]\nname = shift2\n[params]\n"
            f"pairs = {pairs}\n" + (f"filter = {flt}\n" if flt else ""))
    return {r["pair"]: float(r["difference"]) for r in _rows(render_csv(execute(parse_config(text))))}


def test_gap_entropy_examples():
    d = _gap("QW|BR;|T3;singleton")
    assert d["QW|BR"] <= 0.2 and d["|T3"] <= 0.2
    assert abs(d["singleton"] - math.log(2)) < 0.05
    assert _gap("|Tran", "irregular")["|Tran"] <= 0.2


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "semigroup_lab", "list-systems"], capture_output=True, text=True)
    assert res.returncode == 0 and "shift2" in res.stdout
