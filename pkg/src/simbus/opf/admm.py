"""Consensus-ADMM agent for the distributed dc OPF.

Each node agent keeps its own voltage estimate plus copies of its
electrical neighbors' voltages. One iteration:

  (i)   local step: exact minimization of local cost + quadratic penalty
        pulling the closed-neighborhood voltages toward the consensus
        values, subject to the node's flow balance and injection limits;
  (ii)  exchange: each agent sends, for every neighbor j, its claim on
        node j's voltage (copy + dual) to j, the variable's owner; owners
        average the claims into a new consensus value and broadcast it back;
  (iii) correction: dual ascent on every copy against the new consensus.

All messages are scalars addressed only to electrical neighbors.

The quadratic penalty is weighted per variable: the copy of node k's
voltage is penalized with rho * (total line conductance incident at k).
Voltage gaps translate into power errors through the conductances, so an
unweighted penalty conditions badly on stiff networks; the weighting makes
a single rho work across network scales. The Lagrange multiplier for the
consensus constraint on variable k is recovered as weight_k * dual_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import LocalInfeasible
from .network import DcNetwork, GENERATOR, Node


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    tol: float = 1e-4          # max primal residual threshold, pu
    max_iter: int = 1000
    linearized: bool = True    # v1 always uses the linearized dc model

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


class Agent:
    """Per-node ADMM state and the three iteration steps (pure math)."""

    def __init__(self, net: DcNetwork, node_id: int, cfg: AdmmConfig):
        node = net.by_id[node_id]
        self.node: Node = node
        self.cfg = cfg
        self.is_ref = node_id == net.ref_node
        self.neighbors = sorted(net.neighbors[node_id])
        self.gains = [net.neighbors[node_id][j] for j in self.neighbors]
        self.closed = [node_id] + self.neighbors  # keys of copies/duals/z
        # flow balance p = d + c . y over y = (v_self, w_nbr...)
        self.c = [sum(self.gains)] + [-g for g in self.gains]
        # per-variable penalty weights: rho scaled by the conductance mass
        # hanging off each voltage variable
        self.weights = [cfg.rho * sum(net.neighbors[k].values()) for k in self.closed]
        self.c_dot_c = sum(ci * ci / wi for ci, wi in zip(self.c, self.weights))
        if self.c_dot_c <= 0:
            raise LocalInfeasible(f"node {node_id} has no network coupling")
        if node.kind == GENERATOR:
            self.a, self.b = node.a, node.b
            self.pmin, self.pmax = node.pmin, node.pmax
            self.demand = 0.0
        else:
            self.a = self.b = 0.0
            self.pmin = self.pmax = 0.0  # loads inject nothing
            self.demand = node.d
        # state
        self.v = 1.0
        self.p = 0.0
        self.copies = {k: 1.0 for k in self.closed}
        self.duals = {k: 0.0 for k in self.closed}
        self.z = {k: 1.0 for k in self.closed}
        self.k = 0

    # -- step (i) -------------------------------------------------------------

    def local_step(self) -> dict[int, float]:
        """Optimize the local variables; returns the claim to send to each
        neighbor (that neighbor's voltage copy plus the current dual)."""
        t = [self.z[k] - self.duals[k] for k in self.closed]
        beta = 2.0 * self.a * self.demand + self.b
        # y = M^-1 (D t - beta c), M = 2a c c^T + D (Sherman-Morrison),
        # D = diag(weights)
        rhs = [wk * tk - beta * ck for wk, tk, ck in zip(self.weights, t, self.c)]
        dinv_rhs = [rk / wk for rk, wk in zip(rhs, self.weights)]
        c_dot_rhs = sum(ck * rk for ck, rk in zip(self.c, dinv_rhs))
        factor = (2.0 * self.a * c_dot_rhs) / (1.0 + 2.0 * self.a * self.c_dot_c)
        y = [rk - factor * ck / wk for rk, ck, wk in zip(dinv_rhs, self.c, self.weights)]
        p = self.demand + sum(ck * yk for ck, yk in zip(self.c, y))
        if p < self.pmin or p > self.pmax:
            # clamp the injection, re-project onto the flow-balance plane
            # (weighted least change)
            p = min(max(p, self.pmin), self.pmax)
            shift = (p - self.demand - sum(ck * tk for ck, tk in zip(self.c, t)))
            y = [tk + ck * shift / (self.c_dot_c * wk)
                 for tk, ck, wk in zip(t, self.c, self.weights)]
        self.p = p
        self.v = y[0]
        for idx, k in enumerate(self.closed):
            self.copies[k] = y[idx] if idx > 0 else y[0]
        self.copies[self.node.id] = y[0]
        return {j: self.copies[j] + self.duals[j] for j in self.neighbors}

    def own_claim(self) -> float:
        return self.copies[self.node.id] + self.duals[self.node.id]

    # -- step (ii), owner side -----------------------------------------------

    def compute_z(self, neighbor_claims: dict[int, float]) -> float:
        """Average all claims on this node's voltage (deterministic order)."""
        if self.is_ref:
            z = 1.0
        else:
            total = self.own_claim()
            for j in sorted(neighbor_claims):
                total += neighbor_claims[j]
            z = total / (1 + len(neighbor_claims))
        self.z[self.node.id] = z
        return z

    # -- step (iii) -------------------------------------------------------------

    def correct_step(self, neighbor_z: dict[int, float]) -> float:
        """Dual ascent against the fresh consensus; returns the local primal
        residual (max copy-to-consensus gap)."""
        for j, zj in neighbor_z.items():
            self.z[j] = zj
        residual = 0.0
        for k in self.closed:
            gap = self.copies[k] - self.z[k]
            self.duals[k] += gap
            residual = max(residual, abs(gap))
        self.k += 1
        return residual


def make_agents(net: DcNetwork, cfg: AdmmConfig) -> dict[int, Agent]:
    return {node.id: Agent(net, node.id, cfg) for node in net.nodes}


def objective_of(net: DcNetwork, p: dict[int, float]) -> float:
    return sum(n.a * p[n.id] ** 2 + n.b * p[n.id]
               for n in net.nodes if n.kind == GENERATOR)
