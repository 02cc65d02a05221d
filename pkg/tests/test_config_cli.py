"""Configuration schema and the command-line workflows."""

import json

import numpy as np
import pytest

from sovdebt.cli import main
from sovdebt.config import ConfigError, load_config

BASE_INI = """\
[model]
r = 0.05
lambda = 0.2
mu = 0.02
sigma = 0.3
B = 5.0
x_star = 1.5
v_max = 0.5

[costs]
alpha_L = 0.5
alpha_c = 0.1

[risk]
kappa = 1.0
q = 0.5

[salvage]
m = 0.4

[solver]
n = 201
eps_schedule = 1e-1,1e-2,1e-3

[sim]
dt = 1e-3
horizon = 5.0
n_paths = 500
seed = 7
x0 = 0.75
"""

REGIME1_INI = """\
[model]
r = 0.1
lambda = 0.2
mu = 0.02
sigma = 0.1
B = 100.0
x_star = 1.5
v_max = 0.1

[costs]
alpha_L = 0.1
alpha_c = 0.1

[risk]
kappa = 0.2
q = 0.5

[salvage]
m = 0.2

[solver]
n = 201
"""


@pytest.fixture
def base_ini(tmp_path):
    path = tmp_path / "base.ini"
    path.write_text(BASE_INI)
    return path


class TestConfig:
    def test_round_trip(self, base_ini):
        run = load_config(base_ini)
        assert run.params.B == 5.0 and run.params.lam == 0.2
        assert run.solver.n == 201
        assert run.solver.epsilon_schedule == (1e-1, 1e-2, 1e-3)
        assert run.sim.n_paths == 500 and run.sim.horizon == 5.0

    def test_unknown_key_reports_line(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(BASE_INI.replace("[risk]\nkappa",
                                         "[risk]\nbogus = 1\nkappa"))
        with pytest.raises(ConfigError) as err:
            load_config(path)
        msg = str(err.value)
        assert "bogus" in msg
        line = int(msg.split(":")[1])
        assert path.read_text().splitlines()[line - 1].startswith("bogus")

    def test_unknown_section_is_error(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(BASE_INI + "\n[extra]\nfoo = 1\n")
        with pytest.raises(ConfigError, match="extra"):
            load_config(path)

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(BASE_INI.replace("sigma = 0.3\n", ""))
        with pytest.raises(ConfigError, match="sigma"):
            load_config(path)

    def test_invalid_value_message(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(BASE_INI.replace("sigma = 0.3", "sigma = 0.0"))
        with pytest.raises(ConfigError, match="sigma"):
            load_config(path)


class TestSolveCommand:
    def test_solve_and_artifacts(self, base_ini, tmp_path):
        out = tmp_path / "run"
        code = main(["solve", str(base_ini), "--out", str(out)])
        assert code == 0
        lines = (out / "solution.csv").read_text().splitlines()
        header = json.loads(lines[0])
        assert header["converged"] is True
        first = lines[2].split(",")
        last = lines[-1].split(",")
        assert float(first[0]) == 0.0 and float(first[1]) == 0.0
        assert float(first[3]) == 1.0
        assert float(last[0]) == 1.5 and float(last[1]) == 5.0
        assert float(last[3]) == pytest.approx(0.6, abs=1e-15)
        trace = json.loads((out / "trace.json").read_text())
        assert trace["converged"] is True

    def test_invalid_sigma_exits_one(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(BASE_INI.replace("sigma = 0.3", "sigma = 0"))
        code = main(["solve", str(path), "--out", str(tmp_path / "o")])
        assert code == 1

    def test_grid_refinement_flag(self, base_ini, tmp_path, capsys):
        out1, out2 = tmp_path / "n201", tmp_path / "n401"
        assert main(["solve", str(base_ini), "--n", "201",
                     "--eps-final", "1e-3", "--out", str(out1)]) == 0
        assert main(["solve", str(base_ini), "--n", "401",
                     "--eps-final", "1e-3", "--out", str(out2)]) == 0
        from sovdebt.solver import load_solution
        a = load_solution(out1 / "solution.csv")
        b = load_solution(out2 / "solution.csv")
        xs = a.grid.nodes
        interior = (xs >= 0.05 * 1.5) & (xs <= 0.95 * 1.5)
        diff = np.max(np.abs(a.V - b.V[::2])[interior])
        assert diff < 5e-3 * 5.0

    def test_idempotent_artifacts(self, base_ini, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["solve", str(base_ini), "--out", str(out1)])
        main(["solve", str(base_ini), "--out", str(out2)])
        assert ((out1 / "solution.csv").read_bytes()
                == (out2 / "solution.csv").read_bytes())
        assert ((out1 / "trace.json").read_bytes()
                == (out2 / "trace.json").read_bytes())


class TestVerifyCommand:
    def test_verify_solved_artifact(self, base_ini, tmp_path):
        out = tmp_path / "run"
        main(["solve", str(base_ini), "--out", str(out)])
        code = main(["verify", str(out / "solution.csv"), str(base_ini),
                     "--out", str(out)])
        assert code == 0
        report = json.loads((out / "verification.json").read_text())
        assert report["passed"] is True

    def test_corrupted_solution_exits_three(self, base_ini, tmp_path, capsys):
        out = tmp_path / "run"
        main(["solve", str(base_ini), "--out", str(out)])
        lines = (out / "solution.csv").read_text().splitlines()
        row = lines[60].split(",")
        row[1] = repr(float(row[1]) + 1.0)   # bump one V entry
        lines[60] = ",".join(row)
        corrupted = out / "corrupted.csv"
        corrupted.write_text("\n".join(lines) + "\n")
        code = main(["verify", str(corrupted), str(base_ini),
                     "--out", str(out)])
        assert code == 3
        report = json.loads((out / "verification.json").read_text())
        failed = [it["name"] for it in report["items"]
                  if it["passed"] is False]
        assert failed   # the report names the failing checks

    def test_mismatched_config_exits_one(self, base_ini, tmp_path):
        out = tmp_path / "run"
        main(["solve", str(base_ini), "--out", str(out)])
        other = tmp_path / "other.ini"
        other.write_text(BASE_INI.replace("x_star = 1.5", "x_star = 2.0"))
        code = main(["verify", str(out / "solution.csv"), str(other),
                     "--out", str(out)])
        assert code == 1


class TestSimulateCommand:
    def test_simulate_artifact(self, base_ini, tmp_path):
        out = tmp_path / "run"
        main(["solve", str(base_ini), "--out", str(out)])
        code = main(["simulate", str(base_ini), "--solution",
                     str(out / "solution.csv"), "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "simulation.json").read_text())
        assert payload["x0"] == 0.75
        assert payload["value"]["n_paths"] == 500
        assert 0 < payload["bond"]["mean"] <= 1.0


class TestClassifyAndBounds:
    def test_classify_regime1(self, tmp_path):
        path = tmp_path / "r1.ini"
        path.write_text(REGIME1_INI)
        out = tmp_path / "out"
        assert main(["classify", str(path), "--out", str(out)]) == 0
        payload = json.loads((out / "classification.json").read_text())
        assert payload["label"] == "DevaluePay"

    def test_bounds_base_values(self, base_ini, tmp_path):
        out = tmp_path / "out"
        assert main(["bounds", str(base_ini), "--out", str(out)]) == 0
        payload = json.loads((out / "bounds.json").read_text())
        assert payload["theta_min"] == pytest.approx(1 / 3, rel=1e-12)
        assert payload["K1"] == pytest.approx(4.08, rel=1e-12)
        assert payload["gamma"] == pytest.approx(0.29762, abs=1e-5)

    def test_bounds_idempotent(self, base_ini, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["bounds", str(base_ini), "--out", str(out1)])
        main(["bounds", str(base_ini), "--out", str(out2)])
        assert ((out1 / "bounds.json").read_bytes()
                == (out2 / "bounds.json").read_bytes())


class TestSweepCommand:
    def test_sweep_q_changes_regime(self, tmp_path):
        # wide domain so that q = 3 lands in the fast-blow-up regime
        ini = tmp_path / "sweep.ini"
        ini.write_text(BASE_INI.replace("x_star = 1.5", "x_star = 8.0")
                       .replace("B = 5.0", "B = 1.0")
                       .replace("n = 201", "n = 151"))
        out = tmp_path / "sweep"
        code = main(["sweep", str(ini), "--param", "risk.q",
                     "--values", "0.5,3.0", "--out", str(out)])
        assert code == 0
        index = json.loads((out / "sweep_index.json").read_text())
        labels = [pt["label"] for pt in index["points"]]
        assert len(set(labels)) == 2
        assert "NoAction" in labels
        assert all((out / pt["dir"] / "solution.csv").exists()
                   for pt in index["points"])

    def test_sweep_bad_param_exits_one(self, base_ini, tmp_path):
        code = main(["sweep", str(base_ini), "--param", "nope.q",
                     "--values", "1", "--out", str(tmp_path / "s")])
        assert code == 1
