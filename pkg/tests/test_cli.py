import csv

import pytest

from cmpsced.cli import GridSearchSpec, main
from cmpsced.network import write_case

from conftest import make_two_bus


@pytest.fixture
def case_file(tmp_path):
    write_case(make_two_bus(demand=80.0, periods=3), tmp_path / "two_bus.case")
    return str(tmp_path / "two_bus.case")


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_strict_summary(case_file, tmp_path, capsys):
    code = main(["run", "--case", case_file, "--mode", "strict",
                 "--out", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "total_cost=91500.00" in out
    assert "zones=1.000 / 0.000 / 0.000" in out
    rows = read_rows(tmp_path / "out" / "periods.csv")
    assert len(rows) == 3
    assert float(rows[0]["operating_cost"]) == pytest.approx(30500.0, abs=1e-4)


def test_run_cmp_zone_counts_sum(case_file, tmp_path, capsys):
    code = main(["run", "--case", case_file, "--mode", "cmp",
                 "--epsilon", "0.1", "--gamma-l", "0.5", "--gamma-s", "0.5",
                 "--out", str(tmp_path / "out")])
    assert code == 0
    rows = read_rows(tmp_path / "out" / "periods.csv")
    for row in rows:
        total = (int(row["lines_normal"]) + int(row["lines_lte"])
                 + int(row["lines_ste"]))
        assert total == 1
    lmp_rows = read_rows(tmp_path / "out" / "lmps.csv")
    assert set(lmp_rows[0]) == {"period", "bus1", "bus2"}


def test_missing_case_exits_2(capsys):
    code = main(["run", "--case", "no_such.case", "--mode", "strict"])
    assert code == 2
    assert "no_such.case" in capsys.readouterr().err


def test_compare(case_file, tmp_path, capsys):
    code = main(["compare", "--case", case_file, "--out", str(tmp_path / "out")])
    assert code == 0
    rows = read_rows(tmp_path / "out" / "compare.csv")
    assert len(rows) == 1
    row = rows[0]
    assert float(row["cmp_total_cost"]) < float(row["strict_total_cost"])
    assert float(row["cmp_shed_mwh"]) <= float(row["strict_shed_mwh"])
    assert float(row["strict_avg_normal"]) == 1.0
    assert float(row["strict_avg_lte"]) == 0.0
    assert float(row["strict_avg_ste"]) == 0.0


def test_grid_search_tiny(case_file, tmp_path, capsys):
    code = main(["grid-search", "--case", case_file,
                 "--epsilons", "0.0001,1.0", "--gamma-l-grid", "0.5",
                 "--gamma-s-grid", "0.5", "--jobs", "1",
                 "--out", str(tmp_path / "out")])
    assert code == 0
    rows = read_rows(tmp_path / "out" / "grid_search.csv")
    assert len(rows) == 2
    assert all(row["status"] == "ok" for row in rows)
    out = capsys.readouterr().out
    assert "tradeoff" in out


def test_grid_single_combo_matches_run(case_file, tmp_path, capsys):
    assert main(["run", "--case", case_file, "--mode", "cmp",
                 "--out", str(tmp_path / "r")]) == 0
    run_out = capsys.readouterr().out
    total = float(run_out.split("total_cost=")[1].split()[0])
    assert main(["grid-search", "--case", case_file, "--epsilons", "0.1",
                 "--gamma-l-grid", "0.5", "--gamma-s-grid", "0.5",
                 "--jobs", "1", "--out", str(tmp_path / "g")]) == 0
    capsys.readouterr()
    row = read_rows(tmp_path / "g" / "grid_search.csv")[0]
    assert float(row["total_cost"]) == pytest.approx(total, abs=0.01)


def test_default_grid_spec_is_paper_protocol():
    spec = GridSearchSpec.default()
    assert spec.epsilons == [1e-4, 1e-3, 1e-2, 1e-1, 1e0]
    assert spec.gamma_ls == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    assert spec.gamma_ss == spec.gamma_ls
    assert len(spec.epsilons) * len(spec.gamma_ls) * len(spec.gamma_ss) == 500


def test_default_grid_produces_500_rows():
    from cmpsced.cli import run_grid_search
    from cmpsced.dca import DcaConfig
    case = make_two_bus(demand=80.0, periods=2)
    rows = run_grid_search(case, GridSearchSpec.default(), DcaConfig(), jobs=1)
    assert len(rows) == 500
    assert all(r["status"] == "ok" for r in rows)
    costs = [r["total_cost"] for r in rows]
    assert costs == sorted(costs)


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSearchSpec(epsilons=[], gamma_ls=[0.5], gamma_ss=[0.5])
    with pytest.raises(ValueError):
        GridSearchSpec(epsilons=[0.1], gamma_ls=[-0.5], gamma_ss=[0.5])


def test_oracle_command_gap_zero(case_file, capsys):
    code = main(["oracle", "--case", case_file])
    assert code == 0
    out = capsys.readouterr().out
    assert "oracle_objective=801.000000" in out
    assert "dca_objective=801.000000" in out


def test_oracle_budget_refusal(tmp_path, capsys):
    from cmpsced.network import synthetic_case
    case = synthetic_case(8, 20, 4, seed=0)
    write_case(case, tmp_path / "big.case")
    code = main(["oracle", "--case", str(tmp_path / "big.case")])
    assert code == 2
    assert "enumeration budget" in capsys.readouterr().err


def test_reruns_byte_identical(case_file, tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["run", "--case", case_file, "--mode", "cmp",
                     "--out", str(tmp_path / d)]) == 0
    capsys.readouterr()
    assert ((tmp_path / "a" / "periods.csv").read_bytes()
            == (tmp_path / "b" / "periods.csv").read_bytes())
    assert ((tmp_path / "a" / "lmps.csv").read_bytes()
            == (tmp_path / "b" / "lmps.csv").read_bytes())


def test_dt_override(case_file, tmp_path, capsys):
    code = main(["run", "--case", case_file, "--mode", "strict", "--dt", "0.5",
                 "--out", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "total_cost=45750.00" in out  # 3 periods x 30500 x 0.5


def test_lmp_source_resolve(case_file, tmp_path, capsys):
    code = main(["run", "--case", case_file, "--mode", "cmp",
                 "--lmp-source", "resolve", "--out", str(tmp_path / "out")])
    assert code == 0
    rows = read_rows(tmp_path / "out" / "lmps.csv")
    assert len(rows) == 3


def test_grid_search_parallel_jobs(case_file, tmp_path, capsys):
    args = ["grid-search", "--case", case_file, "--epsilons", "0.01,0.1",
            "--gamma-l-grid", "0.3,0.6", "--gamma-s-grid", "0.5",
            "--out", str(tmp_path / "p")]
    assert main(args + ["--jobs", "2"]) == 0
    rows_par = read_rows(tmp_path / "p" / "grid_search.csv")
    args[-1] = str(tmp_path / "s")
    assert main(args + ["--jobs", "1"]) == 0
    rows_seq = read_rows(tmp_path / "s" / "grid_search.csv")
    assert rows_par == rows_seq
    assert len(rows_par) == 4


def test_log_env_var(case_file, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CMP_SCED_LOG", "debug")
    code = main(["run", "--case", case_file, "--mode", "cmp",
                 "--out", str(tmp_path / "out")])
    assert code == 0
