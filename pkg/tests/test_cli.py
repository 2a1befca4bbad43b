import json
import socket
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest

from simbus.cli import main
from simbus.broker import Broker, BrokerConfig


def write_scenario(tmp_path: Path, name: str, doc: dict) -> str:
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return str(path)


def echo_doc(**over) -> dict:
    doc = {
        "experiment": "echo_bench",
        "transport": "broker",
        "sync": "sim_time",
        "tasks": 3,
        "samples": 5,
        "period_ms": 50,
        "step": {"comm_step_ms": 10},
        "profile": "lan",
        "seed": 7,
    }
    doc.update(over)
    return doc


class TestRunEcho:
    def test_sim_time_writes_artifacts(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, "echo", echo_doc())
        out = tmp_path / "out"
        assert main(["run", scenario, "--out", str(out)]) == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["count"] == 15
        assert stats["lost"] == 0
        summary = (out / "summary.txt").read_text()
        assert summary.startswith("Min: ")
        assert "@99%:" in summary
        lines = (out / "samples.csv").read_text().splitlines()
        assert lines[0] == "task_id,value,t_out_ns,t_in_ns,rtt_ns"
        assert len(lines) == 16
        hist = (out / "histogram.csv").read_text().splitlines()
        assert hist[0] == "bin_start_ms,count"
        assert capsys.readouterr().out.startswith("Min: ")

    def test_sim_time_deterministic_across_runs(self, tmp_path):
        scenario = write_scenario(tmp_path, "echo", echo_doc(profile="3g"))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["run", scenario, "--out", str(out_a)]) == 0
        assert main(["run", scenario, "--out", str(out_b)]) == 0
        assert (out_a / "stats.json").read_bytes() == (out_b / "stats.json").read_bytes()
        assert (out_a / "samples.csv").read_bytes() == (out_b / "samples.csv").read_bytes()

    def test_real_time_p2p(self, tmp_path):
        scenario = write_scenario(
            tmp_path, "echo",
            echo_doc(transport="p2p", sync="real_time", tasks=2, samples=3,
                     period_ms=20, profile="none"))
        out = tmp_path / "out"
        assert main(["run", scenario, "--out", str(out)]) == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["count"] == 6

    def test_seed_flag_overrides_scenario(self, tmp_path):
        scenario = write_scenario(tmp_path, "echo", echo_doc(profile="3g"))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["run", scenario, "--out", str(out_a)]) == 0
        assert main(["run", scenario, "--out", str(out_b), "--seed", "99"]) == 0
        assert (out_a / "stats.json").read_bytes() != (out_b / "stats.json").read_bytes()


class TestRunOpf:
    def test_default_network(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, "opf", {
            "experiment": "opf_run",
            "network": "default27",
            "admm": {"rho": 1.0, "tol": 1e-4, "max_iter": 20000},
        })
        out = tmp_path / "out"
        assert main(["run", scenario, "--out", str(out)]) == 0
        sol = json.loads((out / "solution.json").read_text())
        assert sol["converged"] is True
        assert len(sol["v"]) == 27
        residuals = (out / "residuals.csv").read_text().splitlines()
        assert residuals[0] == "iteration,residual"
        assert len(residuals) == sol["iterations"] + 1
        assert "converged" in capsys.readouterr().out

    def test_inline_network(self, tmp_path):
        scenario = write_scenario(tmp_path, "opf", {
            "experiment": "opf_run",
            "network": {
                "nodes": [
                    {"id": 1, "kind": "generator", "a": 0.5, "b": 1.0,
                     "pmin": 0.0, "pmax": 2.0},
                    {"id": 2, "kind": "load", "d": 1.0},
                ],
                "edges": [{"i": 1, "j": 2, "g": 10.0}],
            },
            "admm": {"tol": 1e-6, "max_iter": 5000},
        })
        out = tmp_path / "out"
        assert main(["run", scenario, "--out", str(out)]) == 0
        sol = json.loads((out / "solution.json").read_text())
        assert sol["objective"] == pytest.approx(1.5, abs=1e-3)


class TestCompare:
    def test_identical_echo_runs(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, "echo", echo_doc())
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", scenario, "--out", str(out_a)])
        main(["run", scenario, "--out", str(out_b)])
        capsys.readouterr()
        assert main(["compare", str(out_a), str(out_b)]) == 0
        table = capsys.readouterr().out
        for line in table.splitlines()[1:]:
            ratio = line.split()[-1]
            assert ratio in ("1.000", "-")

    def test_incompatible_kinds_exit_1(self, tmp_path, capsys):
        echo = write_scenario(tmp_path, "echo", echo_doc())
        opf = write_scenario(tmp_path, "opf", {
            "experiment": "opf_run",
            "network": {
                "nodes": [
                    {"id": 1, "kind": "generator", "a": 0.5, "b": 1.0,
                     "pmin": 0.0, "pmax": 2.0},
                    {"id": 2, "kind": "load", "d": 1.0},
                ],
                "edges": [{"i": 1, "j": 2, "g": 10.0}],
            },
        })
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", echo, "--out", str(out_a)])
        main(["run", opf, "--out", str(out_b)])
        capsys.readouterr()
        assert main(["compare", str(out_a), str(out_b)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_empty_dir_exit_1(self, tmp_path, capsys):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 1
        assert "error:" in capsys.readouterr().err


class TestBadScenarios:
    def test_missing_file_exit_2(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.json")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_malformed_json_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["run", str(path)]) == 2
        capsys.readouterr()

    def test_unknown_experiment_exit_2(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, "bad", {"experiment": "frobnicate"})
        assert main(["run", scenario]) == 2
        capsys.readouterr()

    def test_unknown_transport_exit_2(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, "bad", echo_doc(transport="carrier-pigeon"))
        assert main(["run", scenario]) == 2
        capsys.readouterr()

    def test_bad_profile_exit_2(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, "bad", echo_doc(profile="5g"))
        assert main(["run", scenario]) == 2
        capsys.readouterr()

    def test_spawn_rejects_p2p(self, tmp_path, capsys):
        scenario = write_scenario(
            tmp_path, "bad", echo_doc(transport="p2p", sync="real_time",
                                      profile="none"))
        assert main(["run", scenario, "--spawn", "--out", str(tmp_path / "o")]) == 2
        capsys.readouterr()

    def test_spawn_rejects_shaped_profile(self, tmp_path, capsys):
        scenario = write_scenario(
            tmp_path, "bad", echo_doc(sync="real_time", profile="lan"))
        assert main(["run", scenario, "--spawn", "--out", str(tmp_path / "o")]) == 2
        capsys.readouterr()


class TestEchoTask:
    def test_zero_samples_header_only_csv(self, tmp_path):
        broker = Broker(BrokerConfig(listen_address="127.0.0.1:0")).start()
        try:
            csv = tmp_path / "t.csv"
            rc = main(["echo-task", "--broker", f"127.0.0.1:{broker.port}",
                       "--id", "1", "--period-ms", "10", "--samples", "0",
                       "--csv", str(csv)])
            assert rc == 0
            assert csv.read_text() == "task_id,value,t_out_ns,t_in_ns,rtt_ns\n"
        finally:
            broker.stop()

    def test_tcp_round_trip_with_drts(self, tmp_path):
        # A real broker plus an in-process DRTS responder; the task should
        # get every sample back.
        from simbus.runtime import BrokerDrtsPort, DrtsConfig, run_drts
        from simbus.broker import BrokerClient

        broker = Broker(BrokerConfig(listen_address="127.0.0.1:0")).start()
        drts_client = BrokerClient.connect(f"127.0.0.1:{broker.port}")
        drts = run_drts(DrtsConfig(model_step_ns=1_000_000,
                                   comm_step_ns=2_000_000, n_io_pairs=5),
                        BrokerDrtsPort(drts_client, 5), drts_client.clock)
        try:
            csv = tmp_path / "t.csv"
            rc = main(["echo-task", "--broker", f"127.0.0.1:{broker.port}",
                       "--id", "3", "--period-ms", "10", "--samples", "5",
                       "--csv", str(csv)])
            assert rc == 0
            lines = csv.read_text().splitlines()
            assert len(lines) == 6
            for line in lines[1:]:
                fields = line.split(",")
                assert fields[0] == "3"
                assert int(fields[4]) > 0
        finally:
            drts.stop()
            broker.stop()


class TestInstalledEntryPoint:
    def test_module_invocation(self, tmp_path):
        scenario = write_scenario(tmp_path, "echo", echo_doc(tasks=1, samples=2))
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "simbus.cli", "run", scenario,
             "--out", str(out)],
            capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0, proc.stderr
        assert (out / "stats.json").is_file()
