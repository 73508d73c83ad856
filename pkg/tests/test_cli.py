import csv
import io
import json
import subprocess
import sys

import pytest

from rademacher_stein import __version__
from rademacher_stein.cli import InputError, main, parse_n_list, parse_tgrid


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_parsers():
    assert parse_n_list("4,16,64") == [4, 16, 64]
    assert parse_n_list("1..3,10") == [1, 2, 3, 10]
    assert parse_tgrid("-1:1:0.5") == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert len(parse_tgrid("-3:3:0.25")) == 25
    assert parse_tgrid("2") == [2.0]
    for bad in ("x", "3..1", "0"):
        with pytest.raises(InputError):
            parse_n_list(bad)
    for bad in ("1:0:1", "0:1:0", "a:b:c"):
        with pytest.raises(InputError):
            parse_tgrid(bad)


def test_verify_symmetric(capsys):
    code, out, _ = run(capsys, "verify", "--symmetric", "8", "--seed", "7")
    doc = json.loads(out)
    assert code == 0 and doc["passed"]
    assert 80 <= len(doc["rows"]) <= 200
    assert doc["version"] == __version__ and len(doc["config_hash"]) == 64
    assert all({"lhs", "rhs", "tol"} <= set(r) for r in doc["rows"])


def test_verify_bad_probability(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"p": [1.2]}')
    code, out, err = run(capsys, "verify", "--space", str(bad))
    assert code == 2 and out == ""
    assert "1.2" in err and "p[1]" in err


def test_verify_tampered_kernel(tmp_path, capsys):
    path = tmp_path / "k.json"
    path.write_text(json.dumps({"order": 2, "support_bound": 4, "entries": [
        {"idx": [1, 2], "val": 0.5}, {"idx": [3, 3], "val": 0.1}]}))
    code, _, err = run(capsys, "verify", "--symmetric", "4", "--kernel", str(path))
    assert code == 2 and "diagonal" in err


def test_verify_with_kernel_file(tmp_path, capsys):
    path = tmp_path / "k.json"
    path.write_text(json.dumps({"order": 2, "support_bound": 4, "entries": [
        {"idx": [1, 2], "val": 0.5}, {"idx": [3, 4], "val": -0.25}]}))
    code, out, _ = run(capsys, "verify", "--symmetric", "5", "--kernel", str(path), "--seed", "3")
    assert code == 0
    names = [r["name"] for r in json.loads(out)["rows"]]
    assert sum("Var J_2" in n for n in names) >= 3


def test_missing_files(capsys):
    assert run(capsys, "verify", "--space", "/nonexistent.json")[0] == 2
    assert run(capsys, "bound", "--kernel", "/nonexistent.json", "--symmetric")[0] == 2
    assert run(capsys, "bound", "--symmetric")[0] == 2
    assert run(capsys, "bound", "--kernel", "sum1")[0] == 2
    assert run(capsys, "bound", "--kernel", "builtin:nope:3")[0] == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--format", "xml"])
    assert exc.value.code == 2


def test_bound_sum_rates(capsys):
    code, out, _ = run(capsys, "bound", "--kernel", "sum1", "--n", "4,16,64", "--symmetric")
    assert code == 0
    assert out.startswith(f"# rademacher-stein {__version__} config_hash=")
    rows = [r for r in read_csv(out) if r["bound"] == "wasserstein"]
    assert [float(r["total"]) for r in rows] == [1.0, 0.5, 0.25]
    assert all(float(r["oracle"]) <= float(r["total"]) for r in rows)


def test_bound_space_file_and_second_order(tmp_path, capsys):
    sp = tmp_path / "s.json"
    sp.write_text('{"p": [0.3, 0.5, 0.6, 0.4]}')
    code, out, _ = run(capsys, "bound", "--kernel", "builtin:sum1:4", "--space", str(sp), "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert {r["bound"] for r in doc["rows"]} == {"wasserstein", "kolmogorov"}
    code, out, _ = run(capsys, "bound", "--kernel", "builtin:example2:2", "--symmetric")
    assert code == 0
    assert {"second_order_wasserstein", "second_order_kolmogorov"} <= {r["bound"] for r in read_csv(out)}
    # space smaller than the kernel support
    assert run(capsys, "bound", "--kernel", "builtin:sum1:6", "--space", str(sp))[0] == 2
    # order 2 beyond the enumeration cap
    assert run(capsys, "bound", "--kernel", "builtin:example2:13", "--symmetric")[0] == 2


def test_charfn_grid(capsys):
    code, out, _ = run(capsys, "charfn", "--kernel", "builtin:sum1:4", "--symmetric", "--tgrid", "-3:3:0.25")
    rows = read_csv(out)
    assert code == 0 and len(rows) == 50
    spot = [r for r in rows if r["t"] == "1" and r["bound"] == "charfn"][0]
    assert float(spot["gap"]) == pytest.approx(0.013397861346956, abs=1e-12)


def test_example_table(capsys):
    code, out, _ = run(capsys, "example", "--n", "1..1000")
    rows = read_csv(out)
    assert code == 0 and len(rows) == 1000
    assert max(float(r["contraction_diff"]) for r in rows) <= 1e-12
    assert list(rows[0]) == ["n", "two_norm_sq", "contraction_norm", "closed_form",
                             "norm_diff", "contraction_diff", "equal"]


def test_asclt_logavg(capsys):
    code, out, _ = run(capsys, "asclt", "--n", "10000", "--seeds", "3", "--f", "cos")
    rows = read_csv(out)
    assert code == 0 and [r["seed"] for r in rows] == ["1", "2", "3"]
    assert sum(r["within"] == "true" for r in rows) >= 2


def test_asclt_delta_and_series(capsys):
    code, out, _ = run(capsys, "asclt", "--mode", "delta", "--n", "10,100", "--paths", "20")
    rows = read_csv(out)
    assert code == 0 and list(rows[0]) == ["n", "t", "statistic", "stderr"]
    code, out, _ = run(capsys, "asclt", "--mode", "series", "--which", "C2", "--m", "1", "--n", "500",
                       "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["summary"]["bounded"] is True
    assert len(doc["rows"]) == 499
    assert run(capsys, "asclt", "--mode", "series", "--which", "C2", "--n", "500")[0] == 2
    assert run(capsys, "asclt", "--kernel", "builtin:sum1:3")[0] == 2


def test_output_file_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["verify", "--symmetric", "5", "--seed", "2", "--out", str(a)]) == 0
    assert main(["verify", "--symmetric", "5", "--seed", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    main(["verify", "--symmetric", "5", "--seed", "3", "--out", str(b)])
    assert json.loads(a.read_text())["config_hash"] != json.loads(b.read_text())["config_hash"]


def test_tol_must_be_positive(capsys):
    assert run(capsys, "example", "--n", "3", "--tol", "0")[0] == 2


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "rademacher_stein.cli", "example", "--n", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "closed_form" in res.stdout


def test_failed_invariant_exits_1(monkeypatch, capsys):
    from rademacher_stein import cli
    from rademacher_stein.verification import Check

    monkeypatch.setattr(cli, "run_battery", lambda *a, **k: [Check("broken", 1.0, 0.0, 1e-12, "eq")])
    code, out, err = run(capsys, "verify", "--symmetric", "3")
    assert code == 1 and json.loads(out)["passed"] is False
    assert "failures" in err


def test_failed_bound_exits_1(monkeypatch, capsys):
    from rademacher_stein import cli
    from rademacher_stein.stein import BoundReport

    monkeypatch.setattr(cli, "wasserstein_bound", lambda F: BoundReport.build("wasserstein", {"x": 0.0}, 1.0))
    code, out, _ = run(capsys, "bound", "--kernel", "builtin:sum1:3", "--symmetric")
    assert code == 1
    assert "false" in out
