import csv
import math

import numpy as np
import pytest

from rhpe.bench import (
    CSV_HEADER,
    Row,
    RunSpec,
    SweepSummary,
    compare,
    fit_slope,
    read_csv,
    run,
    trace_paths,
    verify_outputs,
)
from rhpe.cli import main
from rhpe.exceptions import InvalidComparisonError, InvalidConfigError
from rhpe.hpe_core import TRACE_COLUMNS

GRID = "1e-2,1e-3,1e-4"


def _run(tmp_path, *extra, name="out.csv"):
    out = tmp_path / name
    code = main(["run", "--problem", "skew-rotation", "--rho-bar", GRID, "--sigma", "0.9",
                 "--out", str(out), "--no-timing", *extra])
    return code, out


def test_csv_header_and_rows(tmp_path, capsys):
    code, out = _run(tmp_path, "--method", "baseline")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[0] == ("problem,method,engine,rho_bar,eps_bar,sigma,rho,mu_final,d0_oracle,"
                        "outer_iters,inner_iters,b_norm,eps_final,terminated,wall_ms")
    rows = read_csv(out)
    assert [r.rho_bar for r in rows] == [1e-2, 1e-3, 1e-4]
    assert all(r.converged and r.b_norm <= r.rho_bar for r in rows)
    assert "slope" in capsys.readouterr().out


def test_csv_deterministic(tmp_path):
    _, a = _run(tmp_path, "--method", "dr-hpe", name="a.csv")
    _, b = _run(tmp_path, "--method", "dr-hpe", "--jobs", "2", name="b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_start_at_solution_one_iteration(tmp_path):
    for method in ("baseline", "static", "dr-hpe"):
        code, out = _run(tmp_path, "--method", method, "--start", "solution", name=f"{method}.csv")
        assert code == 0
        assert all(r.inner_iters == 1 for r in read_csv(out))


@pytest.mark.parametrize("method", ["baseline", "static", "dr-hpe"])
@pytest.mark.parametrize("engine", ["tseng", "korpelevich"])
def test_methods_and_engines(tmp_path, method, engine):
    out = tmp_path / "r.csv"
    code = main(["run", "--problem", "l1", "--dim", "6", "--method", method, "--engine", engine,
                 "--rho-bar", "1e-3,1e-4", "--eps-bar", "1e-6", "--sigma", "0.7",
                 "--out", str(out), "--certs", str(tmp_path / "c.json"), "--strict", "--no-timing"])
    assert code == 0
    assert verify_outputs(str(out), str(tmp_path / "c.json")) == []


def test_trace_output_and_verify(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    code, out = _run(tmp_path, "--trace", str(trace), "--certs", str(tmp_path / "c.json"))
    assert code == 0
    files = [tmp_path / f"t_{i}.csv" for i in (1, 2, 3)]
    for f in files:
        with open(f) as fh:
            assert next(csv.reader(fh)) == list(TRACE_COLUMNS)
    assert main(["verify", str(out), "--certs", str(tmp_path / "c.json"), "--trace", *map(str, files)]) == 0
    assert "verified" in capsys.readouterr().out


def test_verify_detects_tampering(tmp_path):
    _, out = _run(tmp_path)
    text = out.read_text().splitlines()
    fields = text[1].split(",")
    fields[CSV_HEADER.index("b_norm")] = "1.0"
    text[1] = ",".join(fields)
    out.write_text("\n".join(text) + "\n")
    assert main(["verify", str(out)]) == 4


def test_strict_nonconvergence(tmp_path):
    code, _ = _run(tmp_path, "--method", "baseline", "--max-inner", "3", "--strict")
    assert code == 3
    code, _ = _run(tmp_path, "--method", "baseline", "--max-inner", "3")
    assert code == 0


@pytest.mark.parametrize("args", [
    ["--rho-frac", "1.0"],
    ["--rho-bar", "1e-2,1e-2"],
    ["--rho-bar", "-1"],
    ["--sigma", "1.5"],
    ["--start", "1,2,3"],
])
def test_invalid_config_exit_2(tmp_path, args):
    base = ["run", "--problem", "skew-rotation", "--rho-bar", GRID, "--out", str(tmp_path / "x.csv")]
    assert main(base + args) == 2


def test_unknown_problem_and_bad_choice(tmp_path):
    assert main(["run", "--problem", "nope", "--rho-bar", "1e-2"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["run", "--problem", "skew-rotation", "--rho-bar", "1e-2", "--method", "newton"])
    assert e.value.code == 2


def test_json_problem_input(tmp_path):
    path = tmp_path / "p.json"
    assert main(["dump", "--problem", "affine-box", "--dim", "4", "--seed", "3", "--out", str(path)]) == 0
    out = tmp_path / "o.csv"
    assert main(["run", "--problem", str(path), "--rho-bar", "1e-3,1e-4", "--sigma", "0.5",
                 "--out", str(out), "--no-timing"]) == 0
    rows = read_csv(out)
    assert rows[0].problem == "affine-box-n4-s3" and not math.isnan(rows[0].d0_oracle)


def test_compare_command(tmp_path, capsys):
    _, a = _run(tmp_path, "--method", "baseline", name="a.csv")
    _, b = _run(tmp_path, "--method", "dr-hpe", name="b.csv")
    assert main(["compare", str(a), str(a)]) == 0
    assert "flat" in capsys.readouterr().out
    assert main(["compare", str(a), str(b)]) == 0
    out = tmp_path / "c.csv"
    main(["run", "--problem", "skew-rotation", "--rho-bar", "1e-2,1e-3", "--out", str(out)])
    assert main(["compare", str(a), str(out)]) == 2


def _row(rb, inner, term="converged", problem="p"):
    return Row(problem, "baseline", "tseng", rb, 1e-6, 0.9, rb / 2, 0.0, 1.0, 1, inner, rb / 2, 0.0, term, 0.0)


def test_fit_slope():
    rows = [_row(10.0 ** -k, int(10 ** (2 * k))) for k in range(1, 5)]
    assert fit_slope(rows) == pytest.approx(2.0, abs=1e-3)
    assert math.isnan(fit_slope(rows[:2]))
    rows[0] = _row(1e-1, 5, "inner_cap")
    assert fit_slope(rows) == pytest.approx(2.0, abs=1e-3)


def test_compare_ratios():
    a = SweepSummary([_row(1e-2, 10), _row(1e-3, 40), _row(1e-4, 160)], math.nan)
    b = SweepSummary([_row(1e-2, 10), _row(1e-3, 20), _row(1e-4, 40)], math.nan)
    c = compare(a, b)
    assert c.ratios == (1.0, 2.0, 4.0) and c.trend == "increasing"
    assert compare(a, a).ratios == (1.0, 1.0, 1.0)
    with pytest.raises(InvalidComparisonError):
        compare(a, SweepSummary([_row(1e-2, 1, problem="q"), _row(1e-3, 1, problem="q"), _row(1e-4, 1, problem="q")], 0))
    with pytest.raises(InvalidComparisonError):
        compare(a, SweepSummary([_row(1e-2, 10)], math.nan))


def test_runspec_validation():
    with pytest.raises(InvalidConfigError):
        RunSpec("skew-rotation", rho_bars=())
    with pytest.raises(InvalidConfigError):
        RunSpec("skew-rotation", engine="adam")


def test_trace_paths():
    assert trace_paths(None, 2) == [None, None]
    assert trace_paths("t.csv", 1) == ["t.csv"]
    assert trace_paths("d/t.csv", 2) == ["d/t_1.csv", "d/t_2.csv"]


def test_run_api_summary():
    s = run(RunSpec("skew-rotation", "baseline", rho_bars=(1e-2, 1e-3, 1e-4), timing=False))
    assert len(s.rows) == 3 and 0 < s.slope < 0.5
