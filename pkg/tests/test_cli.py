import subprocess
import sys

import numpy as np
import pytest

from dnrsim.cli import main
from dnrsim.linear_sim import simulate_linear
from dnrsim.outputs import read_matrix_dump, read_trajectory_csv
from dnrsim.scenario import load_scenario


def test_passive_linearize_is_singular(tmp_path, capsys):
    assert main(["linearize", "--scenario", "passive", "--output", str(tmp_path)]) == 4
    assert "singular" in capsys.readouterr().err


def test_bad_scenario_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("nodes: [a]\nloads:\n  - {node: a, p: 1, q: 0, zip_p: [1, 1, 1]}\nschedule: {t_end: 1}\n")
    assert main(["simulate", "--scenario", str(bad), "--output", str(tmp_path / "o")]) == 2


def test_no_generator_exit_code(tmp_path):
    assert main(["simulate", "--scenario", "passive", "--output", str(tmp_path)]) == 6


def test_linearize_outputs(tmp_path):
    assert main(["linearize", "--scenario", "two-node", "--output", str(tmp_path), "--dump-matrices"]) == 0
    report = (tmp_path / "linearize.txt").read_text()
    assert "[stage 0]" in report and "[stage 1]" in report and "stable: yes" in report
    dump = read_matrix_dump(tmp_path / "matrices.txt")
    traj = simulate_linear(load_scenario("two-node").feeder, load_scenario("two-node").schedule)
    for k, (_, system, u) in enumerate(traj.models):
        np.testing.assert_array_equal(dump[f"stage{k}.A"], system.a)
        np.testing.assert_array_equal(dump[f"stage{k}.Z"], system.z)
        np.testing.assert_array_equal(dump[f"stage{k}.dI_T"][:, 0], u)
        assert dump[f"stage{k}.eigenvalues"].shape == (system.n_states, 2)


def test_simulate_half_step(tmp_path):
    runs = {}
    for dt in ("0.001", "0.0005"):
        out = tmp_path / dt
        assert main(["simulate", "--scenario", "two-node", "--dt", dt, "--output", str(out)]) == 0
        runs[dt] = read_trajectory_csv(out / "linear.csv")
        assert (out / "linear.svg").stat().st_size > 0
    t1, f1, ids, v1 = runs["0.001"]
    t2, f2, _, v2 = runs["0.0005"]
    np.testing.assert_allclose(t2[::2], t1, atol=1e-12)
    assert ids == ("1", "2")
    scale = np.max(np.abs(f1))
    # fourth-order: (1 ms)^4 times the modal rates stays far below the signal
    assert 0 < np.max(np.abs(f2[::2] - f1)) < 1e-6 * scale
    assert np.max(np.abs(v2[:, ::2] - v1)) < 1e-6 * np.max(np.abs(v1))


def test_oracle_and_compare_files(tmp_path):
    assert main(["oracle", "--scenario", "two-node", "--output", str(tmp_path / "o"), "--stride", "10"]) == 0
    t, f, ids, v = read_trajectory_csv(tmp_path / "o" / "nonlinear.csv")
    assert len(t) == 301 and t[1] == pytest.approx(0.01)
    assert main(["compare", "--scenario", "two-node", "--output", str(tmp_path / "c")]) == 0
    report = (tmp_path / "c" / "rmse.txt").read_text()
    assert "voltage_rmse_average_pu" in report and "voltage_rmse_maximum_pu" in report
    assert (tmp_path / "c" / "compare.svg").read_text().startswith("<?xml")


def test_deenergized_cells_are_blank(tmp_path):
    args = ["simulate", "--scenario", "ieee37-dnr", "--t-end", "21.5", "--stride", "500",
            "--output", str(tmp_path)]
    assert main(args) == 0
    t, _, ids, v = read_trajectory_csv(tmp_path / "linear.csv")
    assert len(ids) == 37
    assert np.isnan(v[:, t < 21.0]).any(axis=1).sum() == 12
    assert not np.isnan(v[:, t >= 21.0]).any()


def test_multiple_scenarios_in_parallel(tmp_path):
    args = ["simulate", "--scenario", "two-node", "--scenario", "ieee37-dnr", "--t-end", "0.5",
            "--jobs", "2", "--output", str(tmp_path)]
    assert main(args) == 0
    assert (tmp_path / "two-node" / "linear.csv").exists()
    assert (tmp_path / "ieee37-dnr" / "linear.csv").exists()


def test_argument_errors(tmp_path):
    assert main(["simulate", "--scenario", "two-node", "--jobs", "0", "--output", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["simulate", "--scenario", "two-node", "--dt", "-1"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dnrsim", "linearize", "--scenario", "passive",
                           "--output", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 4
