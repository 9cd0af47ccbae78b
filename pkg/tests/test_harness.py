import json
from dataclasses import replace

import numpy as np
import pytest

from decentopt.cli import main
from decentopt.graph import Graph
from decentopt.scenarios import (
    BUILTIN,
    CSV_COLUMNS,
    ConfigError,
    build_problem,
    execute,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)

SMALL = """
# tiny least-squares run
name = small
n = 5
r = 0.6
objective = ls
m = 2
p = 3
normalize = true
solvers = extra, dgd-fixed
alpha.dgd-fixed = 0.3
budget = 40
"""


def test_parse_examples():
    s = parse_scenario(SMALL)
    assert (s.n, s.r, s.m, s.p, s.budget) == (5, 0.6, 2, 3, 40)
    assert s.normalize is True and s.solvers == ("extra", "dgd-fixed")
    assert s.alphas == {"dgd-fixed": 0.3}
    assert s.mixing == "metropolis" and s.wtilde == "default"


@pytest.mark.parametrize("text, needle", [
    ("name = a\nn = 5\nr = 0.5\nobjective = ls\nm = 1\n", "p"),
    (SMALL + "bogus = 1\n", "bogus"),
    (SMALL + "n = five\n", "n"),
    (SMALL + "just words\n", "key = value"),
    (SMALL.replace("alpha.dgd-fixed = 0.3\n", ""), "alpha.dgd-fixed"),
    (SMALL.replace("objective = ls", "objective = svm"), "svm"),
])
def test_malformed_configs_are_rejected(text, needle):
    with pytest.raises(ConfigError, match=needle.replace(".", r"\.")):
        parse_scenario(text)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_config_round_trip(tmp_path, name):
    p = tmp_path / "c.txt"
    p.write_text(serialize_scenario(BUILTIN[name]))
    once = load_scenario(p)
    p.write_text(serialize_scenario(once))
    assert load_scenario(p) == once == BUILTIN[name]


def test_builtin_constants():
    ls, hub, lg = BUILTIN["ls"], BUILTIN["huber"], BUILTIN["logistic"]
    assert (ls.n, ls.m, ls.p, ls.r, ls.normalize) == (10, 1, 5, 0.5, True)
    assert ls.alphas["dgd-fixed"] == 0.5276 and ls.alphas["extra"] == 0.5276
    assert hub.xi == 2.0
    assert (lg.n, lg.r, lg.m, lg.p, lg.mixing, lg.eps, lg.wtilde) == (200, 0.2, 10, 20, "metropolis", 1.0, "default")
    assert lg.alphas["dgd-fixed"] == 0.0059


def test_execute_writes_deterministic_artifacts(tmp_path):
    s = parse_scenario(SMALL)
    a = execute(replace(s, out=str(tmp_path / "a")))
    b = execute(replace(s, out=str(tmp_path / "b")))
    configs = [(tmp_path / d / "config.txt").read_text().splitlines() for d in "ab"]
    assert [c for c in configs[0] if not c.startswith("out =")] == \
        [c for c in configs[1] if not c.startswith("out =")]
    for f in ("extra.csv", "dgd-fixed.csv", "summary.json", "assumptions.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    lines = (tmp_path / "a" / "extra.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 42
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert set(summary["solvers"]) == {"extra", "dgd-fixed"}
    assert summary["solvers"]["extra"]["grad_evals"] == 40
    assert a.summary == b.summary


def test_rerun_from_written_config_is_identical(tmp_path):
    execute(replace(parse_scenario(SMALL), out=str(tmp_path / "a")))
    s = replace(load_scenario(tmp_path / "a" / "config.txt"), out=str(tmp_path / "b"))
    execute(s)
    assert (tmp_path / "a" / "extra.csv").read_bytes() == (tmp_path / "b" / "extra.csv").read_bytes()


def test_empty_solver_list_writes_summary_only(tmp_path):
    s = replace(parse_scenario(SMALL), solvers=(), alphas={}, out=str(tmp_path / "o"))
    art = execute(s)
    assert art.summary["solvers"] == {}
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["assumptions.txt", "config.txt", "summary.json"]


def test_failed_solver_is_recorded(tmp_path):
    s = replace(parse_scenario(SMALL), alphas={"dgd-fixed": 0.3, "extra": 10.0}, out=str(tmp_path / "o"))
    art = execute(s)
    assert art.summary["solvers"]["extra"]["status"] == "failed"
    assert art.summary["solvers"]["dgd-fixed"]["status"] == "budget"


def test_desk_problem_builds():
    prob = build_problem(BUILTIN["huber-desk"])
    assert prob.report.passed
    assert np.linalg.norm(prob.x0[0] - prob.x_star) >= 100.0


def test_cli_gen_graph_and_check_matrix(tmp_path, capsys):
    out = tmp_path / "g.txt"
    assert main(["gen-graph", "--n", "8", "--r", "0.4", "--seed", "3", "--out", str(out)]) == 0
    g = Graph.from_edge_list(out.read_text())
    assert g.n == 8
    assert main(["check-matrix", "--graph", str(out), "--export", str(tmp_path / "m")]) == 0
    text = capsys.readouterr().out
    assert text.count("PASS") == 5 and "overall: PASS" in text
    w = np.loadtxt(tmp_path / "m" / "W.csv", delimiter=",")
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_cli_check_matrix_laplacian(capsys):
    assert main(["check-matrix", "--n", "12", "--r", "0.3", "--strategy", "laplacian"]) == 0
    assert "overall: PASS" in capsys.readouterr().out


def test_cli_check_matrix_fails_on_disconnected_graph(tmp_path, capsys):
    p = tmp_path / "d.txt"
    p.write_text("4 2\n0 1\n2 3\n")
    assert main(["check-matrix", "--graph", str(p)]) == 1
    assert "overall: FAIL" in capsys.readouterr().out


def test_cli_run_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text(SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "9"]) == 0
    assert load_scenario(tmp_path / "o" / "config.txt").graph_seed == 9
    cfg.write_text("name = x\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "missing" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "nope.txt")]) == 2
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code != 0


def test_cli_reproduce_print_config(capsys):
    assert main(["reproduce", "logistic", "--print-config"]) == 0
    s = parse_scenario(capsys.readouterr().out)
    assert s == BUILTIN["logistic"]


@pytest.mark.slow
def test_cli_reproduce_ls_desk(tmp_path):
    assert main(["reproduce", "ls-desk", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    info = summary["solvers"]
    assert info["dgd-fixed"]["final_relative_residual"] >= 100 * info["extra"]["final_relative_residual"]


@pytest.mark.slow
def test_full_scale_huber_phase_boundary():
    from decentopt.diagnostics import huber_phase_boundary

    art = execute(BUILTIN["huber"], write=False)
    assert art.summary["x0_distance"] >= 300.0
    k = huber_phase_boundary(art.traces["extra"].iterate_list(), art.problem.obj)
    assert k is not None and 0 < k < 5000
