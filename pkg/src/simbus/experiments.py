"""End-to-end experiment assembly: echo benchmarks over either transport.

Wires tasks, the emulated DRTS, and a transport together, runs the
benchmark, and returns collected RTT samples. The CLI and the test suite
both drive experiments through this module so they measure the same code
path.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

from .bench import LatencyStats, RttSample, compute_stats
from .broker import Broker, BrokerConfig, BrokerClient
from .core import MS, WallClock
from .netem import NetProfile
from .p2p import PeerClient, PeerDirectory, PeerServer
from .runtime import (
    BrokerDrtsPort,
    BrokerTaskPort,
    DrtsConfig,
    DrtsHandle,
    EchoResult,
    P2pDrtsPort,
    P2pTaskPort,
    drts_in_topic,
    run_echo_task,
    task_in_topic,
)

_bench_counter = itertools.count(1)


@dataclass(frozen=True)
class EchoBenchConfig:
    transport: str = "broker"          # broker | p2p
    n_tasks: int = 20
    n_samples: int = 1000
    period_ns: int = 500 * MS
    comm_step_ns: int = 10 * MS
    model_step_ns: int = 1 * MS
    profile: NetProfile = NetProfile("none")
    seed: int = 0
    timeout_factor: int = 10

    def __post_init__(self):
        if self.transport not in ("broker", "p2p"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.n_tasks < 1:
            raise ValueError("n_tasks must be >= 1")


@dataclass
class EchoBenchResult:
    stats: LatencyStats
    samples: list[RttSample]
    per_task: list[EchoResult] = field(default_factory=list)


def _run_tasks(cfg: EchoBenchConfig, ports: dict, clock: WallClock) -> list[EchoResult]:
    results: dict[int, EchoResult] = {}

    def body(task_id: int):
        results[task_id] = run_echo_task(
            task_id, cfg.period_ns, cfg.n_samples, ports[task_id], clock,
            timeout_factor=cfg.timeout_factor)

    threads = [threading.Thread(target=body, args=(i,), daemon=True,
                                name=f"echo-task-{i}")
               for i in ports]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return [results[i] for i in sorted(results)]


def _collect(cfg: EchoBenchConfig, per_task: list[EchoResult]) -> EchoBenchResult:
    samples: list[RttSample] = []
    lost = 0
    for res in per_task:
        samples.extend(res.samples)
        lost += res.lost
    samples.sort(key=lambda s: (s.task_id, s.t_out.nanos))
    return EchoBenchResult(compute_stats(samples, lost=lost), samples, per_task)


def _run_broker_bench(cfg: EchoBenchConfig, broker: Broker | None) -> EchoBenchResult:
    own_broker = broker is None
    if own_broker:
        broker = Broker(BrokerConfig(max_clients=cfg.n_tasks + 4)).start()
    clock = broker.clock
    prof = cfg.profile.with_seed(cfg.seed)
    shaped = None if prof.is_passthrough else prof
    run_id = next(_bench_counter)

    ports = {}
    try:
        for i in range(1, cfg.n_tasks + 1):
            client = broker.connect_memory(to_broker=shaped, from_broker=shaped,
                                           link_id=f"bench{run_id}-task{i:02d}")
            ports[i] = BrokerTaskPort(client, i)
        drts_client = broker.connect_memory(to_broker=shaped, from_broker=shaped,
                                            link_id=f"bench{run_id}-drts")
        drts = DrtsHandle(
            DrtsConfig(model_step_ns=cfg.model_step_ns,
                       comm_step_ns=cfg.comm_step_ns,
                       n_io_pairs=cfg.n_tasks),
            BrokerDrtsPort(drts_client, cfg.n_tasks), clock)
        try:
            per_task = _run_tasks(cfg, ports, clock)
        finally:
            drts.stop()
    finally:
        for port in ports.values():
            port.close()
        if own_broker:
            broker.stop()
    return _collect(cfg, per_task)


def _run_p2p_bench(cfg: EchoBenchConfig) -> EchoBenchResult:
    clock = WallClock()
    prof = cfg.profile.with_seed(cfg.seed)
    shaped = None if prof.is_passthrough else prof
    run_id = next(_bench_counter)

    task_servers = {
        i: PeerServer({task_in_topic(i)}, mem_name=f"bench{run_id}-t{i:02d}",
                      clock=clock)
        for i in range(1, cfg.n_tasks + 1)
    }
    drts_server = PeerServer({drts_in_topic(i) for i in range(1, cfg.n_tasks + 1)},
                             mem_name=f"bench{run_id}-drts", clock=clock)
    owners = {drts_in_topic(i): f"mem:bench{run_id}-drts"
              for i in range(1, cfg.n_tasks + 1)}
    owners.update({task_in_topic(i): f"mem:bench{run_id}-t{i:02d}"
                   for i in range(1, cfg.n_tasks + 1)})
    directory = PeerDirectory(owners)

    ports = {}
    drts = None
    try:
        for i in range(1, cfg.n_tasks + 1):
            client = PeerClient(directory, profile_to=shaped,
                                link_id=f"bench{run_id}-task{i:02d}")
            ports[i] = P2pTaskPort(client, task_servers[i], i, clock)
        drts_client = PeerClient(directory, profile_to=shaped,
                                 link_id=f"bench{run_id}-drts")
        drts = DrtsHandle(
            DrtsConfig(model_step_ns=cfg.model_step_ns,
                       comm_step_ns=cfg.comm_step_ns,
                       n_io_pairs=cfg.n_tasks),
            P2pDrtsPort(drts_server, drts_client, cfg.n_tasks), clock)
        per_task = _run_tasks(cfg, ports, clock)
    finally:
        if drts is not None:
            drts.stop()
        for port in ports.values():
            port.close()
        for server in task_servers.values():
            server.stop()
        drts_server.stop()
    return _collect(cfg, per_task)


def run_echo_bench(cfg: EchoBenchConfig,
                   broker: Broker | None = None) -> EchoBenchResult:
    """Run the full echo benchmark in-process and return stats + samples."""
    if cfg.transport == "broker":
        return _run_broker_bench(cfg, broker)
    return _run_p2p_bench(cfg)
