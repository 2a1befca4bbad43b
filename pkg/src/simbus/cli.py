"""Command line entry points: scenario runner, run comparison, broker daemon.

Scenarios are single JSON files. Two experiment kinds are supported:

* echo_bench — offline tasks against the emulated DRTS over a transport
  (real_time pacing) or through the conservative sim-time kernel.
* opf_run — distributed consensus OPF on a dc network spec.

Artifacts land in the output directory: stats.json / histogram.csv /
summary.txt for benchmarks, solution.json / residuals.csv for OPF runs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench
from .broker import Broker, BrokerClient, BrokerConfig
from .core import MS, WallClock
from .errors import ConfigInvalid, ExperimentFailed, IncompatibleRuns, SimbusError
from .experiments import EchoBenchConfig, run_echo_bench
from .netem import NetProfile, preset, profile_from_config
from .opf.admm import AdmmConfig
from .opf.network import build_network, default_27_node
from .opf.run import DEFAULT_PACE_NS, run_distributed_opf
from .runtime import BrokerTaskPort, run_echo_task
from .simtime import run_sim_echo

log = logging.getLogger("simbus")


def _setup_logging() -> None:
    level = os.environ.get("SMB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


# ---------------------------------------------------------------------------
# Scenario loading


def _load_scenario(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigInvalid(f"scenario file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigInvalid("scenario must be a JSON object")
    if doc.get("experiment") not in ("echo_bench", "opf_run"):
        raise ConfigInvalid("experiment must be 'echo_bench' or 'opf_run'")
    doc.setdefault("name", p.stem)
    doc["_dir"] = str(p.parent)
    return doc


def _scenario_profile(doc: dict) -> NetProfile:
    spec = doc.get("profile", "none")
    try:
        if isinstance(spec, str):
            prof = preset(spec)
        elif isinstance(spec, dict):
            if "preset" in spec:
                prof = preset(spec["preset"])
                if "scale" in spec:
                    prof = prof.scaled(float(spec["scale"]))
                if "loss" in spec:
                    prof = prof.with_loss(float(spec["loss"]))
            else:
                prof = profile_from_config(spec)
        else:
            raise ConfigInvalid("profile must be a name or an object")
    except ConfigInvalid:
        raise
    except (KeyError, ValueError, TypeError, SimbusError) as exc:
        raise ConfigInvalid(f"bad profile: {exc}") from exc
    return prof


def _int_field(doc: dict, key: str, default: int, minimum: int = 0) -> int:
    value = doc.get(key, default)
    if not isinstance(value, int) or value < minimum:
        raise ConfigInvalid(f"{key} must be an integer >= {minimum}")
    return value


# ---------------------------------------------------------------------------
# run: echo_bench


def _write(out_dir: Path, name: str, data) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)
    return path


def _samples_csv(samples) -> str:
    lines = ["task_id,value,t_out_ns,t_in_ns,rtt_ns"]
    for s in samples:
        lines.append(f"{s.task_id},{s.value},{s.t_out.nanos},{s.t_in.nanos},{s.rtt_ns}")
    return "\n".join(lines) + "\n"


def _run_echo_scenario(doc: dict, out_dir: Path, seed: int, spawn: bool) -> int:
    transport = doc.get("transport", "broker")
    sync = doc.get("sync", "real_time")
    if transport not in ("broker", "p2p"):
        raise ConfigInvalid(f"unknown transport {transport!r}")
    if sync not in ("real_time", "sim_time"):
        raise ConfigInvalid(f"unknown sync {sync!r}")
    n_tasks = _int_field(doc, "tasks", 20, minimum=1)
    n_samples = _int_field(doc, "samples", 1000, minimum=0)
    period_ns = _int_field(doc, "period_ms", 500, minimum=1) * MS
    step = doc.get("step", {})
    comm_step_ns = _int_field(step, "comm_step_ms", 10, minimum=1) * MS
    profile = _scenario_profile(doc)

    if sync == "sim_time":
        if spawn:
            raise ConfigInvalid("--spawn requires real_time sync")
        result = run_sim_echo(n_tasks=n_tasks, period_ns=period_ns,
                              n_samples=n_samples, comm_step_ns=comm_step_ns,
                              profile=profile, seed=seed)
        stats = bench.compute_stats(result.samples, lost=result.lost)
        samples = result.samples
    elif spawn:
        if transport != "broker":
            raise ConfigInvalid("--spawn is only supported on the broker transport")
        if not profile.is_passthrough:
            raise ConfigInvalid("--spawn uses real sockets; profile must be 'none'")
        stats, samples = _run_spawned_bench(n_tasks, n_samples, period_ns,
                                            comm_step_ns, out_dir)
    else:
        cfg = EchoBenchConfig(transport=transport, n_tasks=n_tasks,
                              n_samples=n_samples, period_ns=period_ns,
                              comm_step_ns=comm_step_ns, profile=profile,
                              seed=seed)
        try:
            res = run_echo_bench(cfg)
        except SimbusError as exc:
            raise ExperimentFailed(str(exc)) from exc
        stats, samples = res.stats, res.samples

    summary = bench.render_summary(stats)
    _write(out_dir, "stats.json", stats.to_json_bytes())
    _write(out_dir, "histogram.csv", bench.render_histogram_csv(stats))
    _write(out_dir, "summary.txt", summary + "\n")
    _write(out_dir, "samples.csv", _samples_csv(samples))
    print(summary)
    print(f"{stats.count} samples, {stats.lost} lost -> {out_dir}")
    return 0


def _run_spawned_bench(n_tasks: int, n_samples: int, period_ns: int,
                       comm_step_ns: int, out_dir: Path):
    import csv
    import subprocess

    from .bench import compute_stats, make_sample
    from .core import Timestamp, WALL
    from .runtime import BrokerDrtsPort, DrtsConfig, DrtsHandle

    broker = Broker(BrokerConfig(listen_address="127.0.0.1:0",
                                 max_clients=n_tasks + 4)).start()
    address = f"127.0.0.1:{broker.port}"
    drts = None
    procs = []
    try:
        drts_client = BrokerClient.connect(address)
        drts = DrtsHandle(DrtsConfig(comm_step_ns=comm_step_ns,
                                     n_io_pairs=n_tasks),
                          BrokerDrtsPort(drts_client, n_tasks), drts_client.clock)
        task_dir = out_dir / "tasks"
        task_dir.mkdir(parents=True, exist_ok=True)
        for i in range(1, n_tasks + 1):
            csv_path = task_dir / f"task{i:02d}.csv"
            procs.append((i, csv_path, subprocess.Popen(
                [sys.executable, "-m", "simbus.cli", "echo-task",
                 "--broker", address, "--id", str(i),
                 "--period-ms", str(period_ns // MS),
                 "--samples", str(n_samples), "--csv", str(csv_path)])))
        samples = []
        lost = 0
        for i, csv_path, proc in procs:
            code = proc.wait()
            if code not in (0, 3):
                raise ExperimentFailed(f"task {i} worker exited with {code}")
            with open(csv_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    samples.append(make_sample(
                        int(row["task_id"]), float(row["value"]),
                        Timestamp(WALL, int(row["t_out_ns"])),
                        Timestamp(WALL, int(row["t_in_ns"]))))
            lost += n_samples - sum(1 for s in samples if s.task_id == i)
    finally:
        for _, _, proc in procs:
            if proc.poll() is None:
                proc.kill()
        if drts is not None:
            drts.stop()
        broker.stop()
    samples.sort(key=lambda s: (s.task_id, s.t_out.nanos))
    return compute_stats(samples, lost=lost), samples


# ---------------------------------------------------------------------------
# run: opf_run


def _load_network(doc: dict):
    spec = doc.get("network")
    if spec is None:
        raise ConfigInvalid("opf_run scenario needs a 'network'")
    try:
        if spec == "default27":
            return default_27_node()
        if isinstance(spec, dict):
            return build_network(spec)
        path = Path(spec)
        if not path.is_absolute():
            path = Path(doc["_dir"]) / path
        return build_network(path)
    except SimbusError:
        raise
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"bad network spec: {exc}") from exc


def _run_opf_scenario(doc: dict, out_dir: Path, seed: int) -> int:
    net = _load_network(doc)
    admm = doc.get("admm", {})
    try:
        cfg = AdmmConfig(rho=float(admm.get("rho", 1.0)),
                         tol=float(admm.get("tol", 1e-4)),
                         max_iter=int(admm.get("max_iter", 1000)))
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad admm config: {exc}") from exc
    mode = doc.get("mode", "sequential")
    if mode not in ("sequential", "threads"):
        raise ConfigInvalid(f"unknown mode {mode!r}")
    iterations = doc.get("iterations")
    if iterations is not None:
        iterations = int(iterations)
    pace_ns = int(doc.get("pace_ms", DEFAULT_PACE_NS // MS)) * MS
    profile = _scenario_profile(doc).with_seed(seed)

    try:
        result = run_distributed_opf(net, cfg, profile=profile, mode=mode,
                                     iterations=iterations, pace_ns=pace_ns,
                                     raise_on_divergence=False)
    except SimbusError as exc:
        raise ExperimentFailed(str(exc)) from exc

    solution = {
        "experiment": "opf_run",
        "objective": result.objective,
        "iterations": result.iterations,
        "wall_time_s": result.wall_time_s,
        "converged": result.converged,
        "v": {str(k): result.v[k] for k in sorted(result.v)},
        "p": {str(k): result.p[k] for k in sorted(result.p)},
    }
    _write(out_dir, "solution.json",
           json.dumps(solution, indent=2, sort_keys=True) + "\n")
    residuals = "iteration,residual\n" + "".join(
        f"{k + 1},{r:.12e}\n" for k, r in enumerate(result.residuals))
    _write(out_dir, "residuals.csv", residuals)
    status = "converged" if result.converged else "not converged"
    print(f"{status} after {result.iterations} iterations, "
          f"objective {result.objective:.6f}, wall {result.wall_time_s:.3f} s")
    if not result.converged and iterations is None:
        raise ExperimentFailed(
            f"residual {result.residuals[-1]:.2e} after {result.iterations} iterations")
    return 0


# ---------------------------------------------------------------------------
# compare


def _load_run(path: str) -> tuple[str, dict]:
    base = Path(path)
    stats = base / "stats.json"
    solution = base / "solution.json"
    try:
        if stats.is_file():
            return "echo_bench", json.loads(stats.read_text())
        if solution.is_file():
            return "opf_run", json.loads(solution.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IncompatibleRuns(f"cannot read run dir {path}: {exc}") from exc
    raise IncompatibleRuns(f"{path} contains neither stats.json nor solution.json")


def _ratio(a: float, b: float) -> str:
    if a == 0:
        return "-"
    return f"{b / a:.3f}"


def cmd_compare(args) -> int:
    kind_a, a = _load_run(args.run_a)
    kind_b, b = _load_run(args.run_b)
    if kind_a != kind_b:
        raise IncompatibleRuns(f"cannot compare {kind_a} with {kind_b}")
    if kind_a == "echo_bench":
        metrics = ["min_ms", "mean_ms", "max_ms", "p99_ms", "count", "lost"]
    else:
        metrics = ["objective", "iterations", "wall_time_s"]
    print(f"{'metric':<12} {'A':>14} {'B':>14} {'B/A':>8}")
    for key in metrics:
        va, vb = a.get(key), b.get(key)
        if va is None or vb is None:
            raise IncompatibleRuns(f"metric {key} missing from one run")
        print(f"{key:<12} {va:>14} {vb:>14} {_ratio(float(va), float(vb)):>8}")
    return 0


# ---------------------------------------------------------------------------
# workers / daemon


def cmd_echo_task(args) -> int:
    """Single echo task over TCP against a standalone broker (used by
    --spawn and by cross-language interop runs)."""
    client = BrokerClient.connect(args.broker)
    port = BrokerTaskPort(client, args.id)
    try:
        result = run_echo_task(args.id, args.period_ms * MS, args.samples,
                               port, client.clock)
    finally:
        port.close()
    lines = ["task_id,value,t_out_ns,t_in_ns,rtt_ns"]
    for s in result.samples:
        lines.append(f"{s.task_id},{s.value},{s.t_out.nanos},{s.t_in.nanos},{s.rtt_ns}")
    text = "\n".join(lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        sys.stdout.write(text)
    if result.samples or args.samples == 0:
        return 0
    return 3  # sent but received nothing back


def cmd_broker_serve(args) -> int:
    broker = Broker(BrokerConfig(listen_address=args.listen)).start()
    print(f"broker listening on {args.listen} (port {broker.port})")
    try:
        import threading
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        broker.stop()
    return 0


def cmd_run(args) -> int:
    doc = _load_scenario(args.scenario)
    out_dir = Path(args.out or doc.get("out") or f"runs/{doc['name']}")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    if doc["experiment"] == "echo_bench":
        return _run_echo_scenario(doc, out_dir, seed, args.spawn)
    return _run_opf_scenario(doc, out_dir, seed)


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simbus",
                                     description="simulation message bus runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--spawn", action="store_true",
                       help="run echo tasks as separate OS processes")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two run directories")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    p_cmp.set_defaults(fn=cmd_compare)

    p_broker = sub.add_parser("broker", help="broker daemon")
    broker_sub = p_broker.add_subparsers(dest="broker_command", required=True)
    p_serve = broker_sub.add_parser("serve", help="run a standalone broker")
    p_serve.add_argument("--listen", required=True, metavar="HOST:PORT")
    p_serve.set_defaults(fn=cmd_broker_serve)

    p_task = sub.add_parser("echo-task", help=argparse.SUPPRESS)
    p_task.add_argument("--broker", required=True, metavar="HOST:PORT")
    p_task.add_argument("--id", type=int, required=True)
    p_task.add_argument("--period-ms", type=int, default=500)
    p_task.add_argument("--samples", type=int, default=1000)
    p_task.add_argument("--csv", default=None)
    p_task.set_defaults(fn=cmd_echo_task)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimbusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
