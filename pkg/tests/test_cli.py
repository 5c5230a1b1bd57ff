import json
import os

import numpy as np
import pytest

from hardedge.cli import main, read_trajectory_csv


def run_cli(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


class TestSimulate:
    def test_trajectory_roundtrip_full_precision(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(
            json.dumps(
                {
                    "initial": [3.0, 2.0, 1.0],
                    "horizon": 0.02,
                    "save_times": [0.01, 0.02],
                    "eta": 0.5,
                }
            )
        )
        code = run_cli(tmp_path, "simulate", "--config", str(cfg), "--seed", "7")
        assert code == 0
        header, times, states = read_trajectory_csv(tmp_path / "trajectory.csv")
        assert header == ["t", "x1", "x2", "x3"]
        np.testing.assert_array_equal(times, [0.0, 0.01, 0.02])
        # the written digits round-trip to the exact in-memory doubles
        from hardedge.core import OrderedConfig, SdeParams
        from hardedge.rng import RandomSource
        from hardedge.sde import simulate as sim

        traj = sim(
            OrderedConfig([3.0, 2.0, 1.0]),
            SdeParams(eta=0.5),
            0.02,
            [0.01, 0.02],
            RandomSource(7, 0),
        )
        np.testing.assert_array_equal(states, np.array([s.values for s in traj.states]))
        # rerun in a second directory: identical bytes, full precision survives
        second = tmp_path / "again"
        code = main(
            ["simulate", "--config", str(cfg), "--seed", "7", "--out", str(second)]
        )
        assert code == 0
        assert (tmp_path / "trajectory.csv").read_bytes() == (
            second / "trajectory.csv"
        ).read_bytes()
        _, _, states2 = read_trajectory_csv(second / "trajectory.csv")
        np.testing.assert_array_equal(states, states2)

    def test_set_override_wins(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(
            json.dumps({"initial": [1.0], "horizon": 0.01, "save_times": [0.01]})
        )
        code = run_cli(
            tmp_path, "simulate", "--config", str(cfg), "--set", "horizon=0.005",
            "--set", "save_times=[0.005]",
        )
        assert code == 0
        _, times, _ = read_trajectory_csv(tmp_path / "trajectory.csv")
        np.testing.assert_array_equal(times, [0.0, 0.005])

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"initial": [1.0], "horizon": 0.01, "save_times": [0.01], "bogus": 1}))
        assert run_cli(tmp_path, "simulate", "--config", str(cfg)) == 1

    def test_missing_required_key(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"horizon": 0.01, "save_times": [0.01]}))
        assert run_cli(tmp_path, "simulate", "--config", str(cfg)) == 1


class TestSamplers:
    def test_sample_kernel(self, tmp_path):
        code = run_cli(
            tmp_path, "sample-kernel", "--seed", "3",
            "--set", "x=[5,4,3,2,1]", "--set", "K=2", "--set", "n=50",
        )
        assert code == 0
        body = (tmp_path / "samples.csv").read_text().splitlines()
        assert body[0] == "y1,y2"
        assert len(body) == 51

    def test_sample_equilibrium(self, tmp_path):
        code = run_cli(
            tmp_path, "sample-equilibrium", "--seed", "4",
            "--set", "N=3", "--set", "eta=1.0", "--set", "n=20",
        )
        assert code == 0
        rows = (tmp_path / "samples.csv").read_text().splitlines()
        assert rows[0] == "x1,x2,x3"
        vals = np.array([list(map(float, r.split(","))) for r in rows[1:]])
        assert np.all(np.diff(vals, axis=1) < 0)


class TestKernelTable:
    def test_single_point(self, tmp_path):
        code = run_cli(tmp_path, "kernel-table", "--set", "eta=1.0", "--set", "grid=[0.5]")
        assert code == 0
        rows = (tmp_path / "kernel.csv").read_text().splitlines()
        assert rows[0] == "x,y,value"
        assert len(rows) == 2

    def test_symmetric_grid(self, tmp_path):
        code = run_cli(
            tmp_path, "kernel-table", "--set", "eta=0.5", "--set", "grid=[0.4,0.9,1.7]"
        )
        assert code == 0
        rows = (tmp_path / "kernel.csv").read_text().splitlines()[1:]
        table = {}
        for r in rows:
            x, y, v = r.split(",")
            table[(x, y)] = v
        assert len(rows) == 9
        for (x, y), v in table.items():
            assert table[(y, x)] == v
        diag = [float(v) for (x, y), v in table.items() if x == y]
        assert all(d > 0 for d in diag)

    def test_bad_grid(self, tmp_path):
        assert run_cli(tmp_path, "kernel-table", "--set", "eta=1.0", "--set", "grid=[2,1]") == 1


class TestExperimentCommand:
    def test_pass_and_exit_zero(self, tmp_path):
        code = run_cli(
            tmp_path, "experiment", "intertwining", "--seed", "11",
            "--set", "x=[3,2,1]", "--set", "t=0.0", "--set", "n=800",
            "--set", "dt=0.002", "--set", "n_perm=200",
        )
        assert code == 0
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["passed"] is True
        assert doc["config"]["x"] == [3, 2, 1]
        assert doc["version"]
        assert os.path.exists(tmp_path / "intertwining_statistics.csv")

    def test_failing_experiment_exits_two(self, tmp_path):
        # eta mismatch between pipelines: the negative control must fail
        code = run_cli(
            tmp_path, "experiment", "intertwining", "--seed", "12",
            "--set", "x=[3,2,1]", "--set", "t=0.25", "--set", "n=2500",
            "--set", "dt=0.002", "--set", "n_perm=200", "--set", "eta=0.0",
            "--set", "eta_corner_side=2.0",
        )
        assert code == 2
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["passed"] is False

    def test_unknown_experiment(self, tmp_path):
        assert run_cli(tmp_path, "experiment", "nope") == 1

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HARDEDGE_SEED", "99")
        code = run_cli(
            tmp_path, "experiment", "collision-bound",
            "--set", "sizes=[2]", "--set", "delta=0.05", "--set", "eps=0.1",
            "--set", "t=0.01", "--set", "n=100",
        )
        assert code == 0
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["seeds"] == [99, 0]

    def test_report_identical_across_thread_counts(self, tmp_path):
        args = [
            "experiment", "equilibrium", "--seed", "5",
            "--set", "N=1", "--set", "eta=1.0", "--set", "t_grid=[1.0]",
            "--set", "n=1500", "--set", "dt=0.002", "--set", "n_perm=200",
        ]
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        assert main([*args, "--threads", "1", "--out", str(a_dir)]) in (0, 2)
        assert main([*args, "--threads", "8", "--out", str(b_dir)]) in (0, 2)
        assert (a_dir / "report.json").read_bytes() == (b_dir / "report.json").read_bytes()
