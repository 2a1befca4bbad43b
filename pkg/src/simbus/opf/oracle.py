"""Centralized dc-OPF oracle: exact KKT solve with active-set bound handling.

Model: minimize sum(a_i p_i^2 + b_i p_i) over generators, subject to the
linearized flow balance p_i - d_i = sum_j g_ij (v_i - v_j) at every node,
reference voltage fixed at 1.0 pu, and box limits on generator injections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Infeasible, Unbounded
from .network import DcNetwork, GENERATOR

_EPS = 1e-9


@dataclass(frozen=True)
class OpfSolution:
    v: dict          # node id -> voltage (pu)
    p: dict          # node id -> injection (pu); 0 for loads
    objective: float
    prices: dict     # node id -> flow-balance multiplier


def _laplacian(net: DcNetwork, index: dict[int, int]) -> np.ndarray:
    n = len(net.nodes)
    lap = np.zeros((n, n))
    for node in net.nodes:
        i = index[node.id]
        for nbr, g in net.neighbors[node.id].items():
            j = index[nbr]
            lap[i, i] += g
            lap[i, j] -= g
    return lap


def centralized_opf_oracle(net: DcNetwork) -> OpfSolution:
    """Solve the convex QP exactly; raises Infeasible / Unbounded."""
    gens = net.generators()
    if sum(g.pmax for g in gens) + _EPS < net.total_demand():
        raise Infeasible("total demand exceeds generation capacity")
    for g in gens:
        if g.a <= 0 and not (np.isfinite(g.pmin) and np.isfinite(g.pmax)):
            raise Unbounded(f"generator {g.id} has no curvature and open bounds")

    index = {node.id: i for i, node in enumerate(net.nodes)}
    n = len(net.nodes)
    lap = _laplacian(net, index)
    demand = np.array([node.d for node in net.nodes])

    # active set: generator id -> fixed bound value
    active: dict[int, float] = {}
    for _ in range(4 * len(gens) + 8):
        free = [g for g in gens if g.id not in active]
        nf = len(free)
        rhs_bal = -demand.copy()
        for gid, val in active.items():
            rhs_bal[index[gid]] += val

        # variables z = [v (n), p_free (nf)]; constraints: balance rows + ref
        a_rows = np.zeros((n + 1, n + nf))
        a_rows[:n, :n] = lap
        for k, g in enumerate(free):
            a_rows[index[g.id], n + k] = -1.0
        a_rows[n, index[net.ref_node]] = 1.0
        rhs = np.concatenate([rhs_bal, [1.0]])

        hess = np.zeros((n + nf, n + nf))
        lin = np.zeros(n + nf)
        for k, g in enumerate(free):
            hess[n + k, n + k] = 2.0 * g.a
            lin[n + k] = g.b

        m = n + 1
        kkt = np.zeros((n + nf + m, n + nf + m))
        kkt[: n + nf, : n + nf] = hess
        kkt[: n + nf, n + nf:] = a_rows.T
        kkt[n + nf:, : n + nf] = a_rows
        full_rhs = np.concatenate([-lin, rhs])
        try:
            sol = np.linalg.solve(kkt, full_rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, full_rhs, rcond=None)
            if np.linalg.norm(kkt @ sol - full_rhs) > 1e-6 * (1 + np.linalg.norm(full_rhs)):
                raise Infeasible("inconsistent KKT system (demand unservable)") from None

        v = sol[:n]
        p_free = sol[n: n + nf]
        lam = sol[n + nf: n + nf + n]  # balance multipliers per node

        # worst bound violation among free generators
        worst = None
        for k, g in enumerate(free):
            if p_free[k] > g.pmax + _EPS:
                over = p_free[k] - g.pmax
                if worst is None or over > worst[1]:
                    worst = (g, over, g.pmax)
            elif p_free[k] < g.pmin - _EPS:
                over = g.pmin - p_free[k]
                if worst is None or over > worst[1]:
                    worst = (g, over, g.pmin)
        if worst is not None:
            active[worst[0].id] = worst[2]
            continue

        # release a clamped generator whose bound multiplier went negative
        release = None
        for gid, val in active.items():
            g = net.by_id[gid]
            grad = 2.0 * g.a * val + g.b - lam[index[gid]]
            if abs(val - g.pmax) < abs(val - g.pmin):
                mult = -grad  # upper bound
            else:
                mult = grad   # lower bound
            if mult < -1e-7:
                release = gid
                break
        if release is not None:
            del active[release]
            continue

        p = {node.id: 0.0 for node in net.nodes}
        for k, g in enumerate(free):
            p[g.id] = float(p_free[k])
        for gid, val in active.items():
            p[gid] = float(val)
        objective = sum(net.by_id[g.id].a * p[g.id] ** 2 + net.by_id[g.id].b * p[g.id]
                        for g in gens)
        return OpfSolution(
            v={node.id: float(v[index[node.id]]) for node in net.nodes},
            p=p,
            objective=float(objective),
            prices={node.id: float(lam[index[node.id]]) for node in net.nodes},
        )
    raise Infeasible("active-set iteration did not settle")
