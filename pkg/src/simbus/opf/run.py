"""Distributed OPF run drivers and the latency budget oracle.

Two execution modes share the same agent math:

* sequential -- one thread steps all agents in lockstep rounds; messages
  still flow only between electrical neighbors. Fast and deterministic;
  used for convergence/correctness runs.
* threads -- one thread per agent exchanging scalar claims through
  peer-to-peer signal cells shaped by a NetProfile; used for wall-time
  measurements under emulated network conditions.

Both produce bit-identical iterates: per-agent computation order is fixed
and consensus averaging sums claims in sorted neighbor order, so delays
change timing, never values.
"""

from __future__ import annotations

import itertools
import queue
import threading
import time
from dataclasses import dataclass, field

from ..core import MS, WallClock, SignalRecord, Timestamp, WALL
from ..errors import MissingNeighborMessage, NotConverged
from ..netem import NetProfile
from ..p2p import PeerClient, PeerDirectory, PeerServer
from .admm import Agent, AdmmConfig, make_agents, objective_of
from .network import DcNetwork

_run_counter = itertools.count(1)

# per-iteration minimum duration in threaded runs: models agent compute and
# polling cadence (nominal; scale together with the profile for fast runs)
DEFAULT_PACE_NS = 40 * MS


@dataclass
class OpfRunResult:
    v: dict
    p: dict
    objective: float
    iterations: int
    wall_time_s: float
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    message_log: list[tuple[int, int]] = field(default_factory=list)


def _claim_cell(owner: int, sender: int) -> str:
    return f"n{owner:02d}/claim/from{sender:02d}"


def _z_cell(owner: int, sender: int) -> str:
    return f"n{owner:02d}/z/from{sender:02d}"


def _finish(net: DcNetwork, agents: dict[int, Agent], residuals, wall, converged,
            log=None) -> OpfRunResult:
    p = {i: agents[i].p for i in agents}
    return OpfRunResult(
        v={i: agents[i].v for i in agents},
        p=p,
        objective=objective_of(net, p),
        iterations=len(residuals),
        wall_time_s=wall,
        residuals=residuals,
        converged=converged,
        message_log=log or [],
    )


def _run_sequential(net: DcNetwork, cfg: AdmmConfig,
                    iterations: int | None) -> OpfRunResult:
    agents = make_agents(net, cfg)
    residuals: list[float] = []
    log: list[tuple[int, int]] = []
    start = time.monotonic()
    cap = iterations if iterations is not None else cfg.max_iter
    converged = False
    for _ in range(cap):
        claims: dict[int, dict[int, float]] = {i: {} for i in agents}
        for i, agent in agents.items():
            for j, claim in agent.local_step().items():
                claims[j][i] = claim
                log.append((i, j))
        z = {i: agents[i].compute_z(claims[i]) for i in agents}
        residual = 0.0
        for i, agent in agents.items():
            neighbor_z = {j: z[j] for j in agent.neighbors}
            for j in agent.neighbors:
                log.append((j, i))
            residual = max(residual, agent.correct_step(neighbor_z))
        residuals.append(residual)
        if iterations is None and residual < cfg.tol:
            converged = True
            break
    else:
        converged = residuals[-1] < cfg.tol if residuals else False
    return _finish(net, agents, residuals, time.monotonic() - start, converged, log)


class _CellWaiter:
    """Blocks until each watched cell has reached a target seq."""

    def __init__(self, server: PeerServer, names: list[str]):
        self._cond = threading.Condition()
        self._seq: dict[str, int] = {name: 0 for name in names}
        self._values: dict[str, float] = {}
        for name in names:
            cell = server.cell(name)
            cell.add_listener(self._on_write)
            # a peer may have written before we subscribed; replay it
            current = cell.read_or_none()
            if current is not None:
                self._on_write(current)

    def _on_write(self, rec: SignalRecord) -> None:
        with self._cond:
            self._seq[rec.signal] = rec.seq
            self._values[rec.signal] = rec.value
            self._cond.notify_all()

    def wait_all(self, seq: int, timeout: float) -> dict[str, float]:
        deadline = time.monotonic() + timeout
        with self._cond:
            while any(s < seq for s in self._seq.values()):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    missing = [n for n, s in self._seq.items() if s < seq]
                    raise MissingNeighborMessage(
                        f"iteration {seq}: no message on {missing}")
                self._cond.wait(timeout=remaining)
            return dict(self._values)


def _run_threads(net: DcNetwork, cfg: AdmmConfig, profile: NetProfile,
                 iterations: int, pace_ns: int,
                 timeout_s: float = 30.0) -> OpfRunResult:
    # message loss is disabled for OPF runs: convergence, not robustness
    profile = profile.with_loss(0.0)
    agents = make_agents(net, cfg)
    run_id = next(_run_counter)
    clock = WallClock()
    monitor: queue.Queue = queue.Queue()
    log_lock = threading.Lock()
    log: list[tuple[int, int]] = []

    servers: dict[int, PeerServer] = {}
    for i, agent in agents.items():
        owned = {_claim_cell(i, j) for j in agent.neighbors}
        owned |= {_z_cell(i, j) for j in agent.neighbors}
        servers[i] = PeerServer(owned, mem_name=f"opf{run_id}-n{i}", clock=clock)

    directory = PeerDirectory({
        name: f"mem:opf{run_id}-n{i}"
        for i in agents for name in servers[i].cells
    })

    errors: list[Exception] = []
    clients: list[PeerClient] = []
    clients_lock = threading.Lock()

    def agent_body(i: int, agent: Agent):
        client = PeerClient(directory, timeout=timeout_s,
                            profile_to=profile, link_id=f"opf{run_id}-a{i}")
        # closed after join: peers may still be waiting on our last frames
        with clients_lock:
            clients.append(client)
        claim_waiter = _CellWaiter(servers[i], [_claim_cell(i, j)
                                                for j in agent.neighbors])
        z_waiter = _CellWaiter(servers[i], [_z_cell(i, j)
                                            for j in agent.neighbors])
        try:
            for it in range(1, iterations + 1):
                if pace_ns > 0:  # compute allowance, ahead of the exchange
                    time.sleep(pace_ns / 1e9)
                claims_out = agent.local_step()
                for j, claim in claims_out.items():
                    rec = SignalRecord(_claim_cell(j, i), claim,
                                       Timestamp(WALL, clock.nanos()), it)
                    client.set(rec, wait=False)
                    with log_lock:
                        log.append((i, j))
                claims_in = claim_waiter.wait_all(it, timeout_s)
                z_own = agent.compute_z(
                    {j: claims_in[_claim_cell(i, j)] for j in agent.neighbors})
                for j in agent.neighbors:
                    rec = SignalRecord(_z_cell(j, i), z_own,
                                       Timestamp(WALL, clock.nanos()), it)
                    client.set(rec, wait=False)
                    with log_lock:
                        log.append((i, j))
                z_in = z_waiter.wait_all(it, timeout_s)
                residual = agent.correct_step(
                    {j: z_in[_z_cell(i, j)] for j in agent.neighbors})
                monitor.put((it, i, residual))
        except Exception as exc:  # surfaced after join
            errors.append(exc)

    threads = [threading.Thread(target=agent_body, args=(i, agent),
                                name=f"opf-agent-{i}", daemon=True)
               for i, agent in agents.items()]
    start = time.monotonic()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    wall = time.monotonic() - start
    for client in clients:
        client.close()
    for server in servers.values():
        server.stop()
    if errors:
        raise errors[0]

    per_iter: dict[int, float] = {}
    while True:
        try:
            it, _, residual = monitor.get_nowait()
        except queue.Empty:
            break
        per_iter[it] = max(per_iter.get(it, 0.0), residual)
    residuals = [per_iter[k] for k in sorted(per_iter)]
    converged = bool(residuals) and residuals[-1] < cfg.tol
    return _finish(net, agents, residuals, wall, converged, log)


def run_distributed_opf(net: DcNetwork, cfg: AdmmConfig | None = None,
                        profile: NetProfile | None = None,
                        mode: str = "sequential",
                        iterations: int | None = None,
                        pace_ns: int = DEFAULT_PACE_NS,
                        raise_on_divergence: bool = True) -> OpfRunResult:
    """Run the three-step ADMM loop over the chosen execution mode.

    sequential mode iterates until the primal residual drops below
    cfg.tol (or max_iter, raising NotConverged with the partial result);
    threads mode runs a fixed number of synchronous iterations under the
    given NetProfile and reports measured wall time.
    """
    cfg = cfg or AdmmConfig()
    profile = profile or NetProfile("none")
    if mode == "sequential":
        result = _run_sequential(net, cfg, iterations)
    elif mode == "threads":
        result = _run_threads(net, cfg, profile,
                              iterations if iterations is not None else cfg.max_iter,
                              pace_ns)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if raise_on_divergence and iterations is None and not result.converged:
        raise NotConverged(
            f"residual {result.residuals[-1]:.2e} after {result.iterations} iterations",
            result=result)
    return result


def latency_budget_oracle(profile: NetProfile, iterations: int,
                          net: DcNetwork, pace_ns: int = DEFAULT_PACE_NS) -> int:
    """Predicted wall time (ns) for a threaded run: per iteration, one
    claim exchange plus one consensus broadcast (two shaped legs on the
    critical path) on top of the per-iteration compute allowance."""
    if profile.jitter == "normal":
        margin = int(1.5 * profile.jitter_ns)
    elif profile.jitter == "uniform":
        margin = profile.jitter_ns // 2
    else:
        margin = 0
    leg = profile.base_delay_ns + margin
    return iterations * (pace_ns + 2 * leg)
