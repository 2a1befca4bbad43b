"""Resistive dc network graph with generator and load nodes."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources

from ..errors import Disconnected, InfeasibleDemand, NoGenerator

GENERATOR = "generator"
LOAD = "load"


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    d: float = 0.0      # demand, per-unit (loads)
    a: float = 0.0      # quadratic cost coefficient (generators)
    b: float = 0.0      # linear cost coefficient (generators)
    pmin: float = 0.0
    pmax: float = 0.0

    def __post_init__(self):
        if self.kind not in (GENERATOR, LOAD):
            raise ValueError(f"bad node kind {self.kind!r}")
        if self.kind == GENERATOR and self.pmax < self.pmin:
            raise ValueError("pmax < pmin")
        if self.kind == LOAD and self.d < 0:
            raise ValueError("negative demand")


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    g: float  # conductance, > 0

    def __post_init__(self):
        if self.g <= 0:
            raise ValueError("conductance must be > 0")
        if self.i == self.j:
            raise ValueError("self-loop edge")


class DcNetwork:
    """Validated network: connected, at least one generator, feasible demand."""

    def __init__(self, nodes: list[Node], edges: list[Edge]):
        self.nodes = sorted(nodes, key=lambda n: n.id)
        self.edges = list(edges)
        self.by_id = {n.id: n for n in self.nodes}
        if len(self.by_id) != len(self.nodes):
            raise ValueError("duplicate node ids")
        self.neighbors: dict[int, dict[int, float]] = {n.id: {} for n in self.nodes}
        for e in self.edges:
            if e.i not in self.by_id or e.j not in self.by_id:
                raise ValueError(f"edge references unknown node ({e.i},{e.j})")
            self.neighbors[e.i][e.j] = self.neighbors[e.i].get(e.j, 0.0) + e.g
            self.neighbors[e.j][e.i] = self.neighbors[e.j].get(e.i, 0.0) + e.g
        self._validate()
        gens = self.generators()
        # reference node: lowest-id generator, voltage pinned at 1.0 pu
        self.ref_node = min(g.id for g in gens)

    def _validate(self) -> None:
        gens = self.generators()
        if not gens:
            raise NoGenerator("network has no generator node")
        start = self.nodes[0].id
        seen = {start}
        stack = [start]
        while stack:
            for nbr in self.neighbors[stack.pop()]:
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        if len(seen) != len(self.nodes):
            missing = sorted(set(self.by_id) - seen)
            raise Disconnected(f"nodes unreachable from {start}: {missing}")
        if sum(g.pmax for g in gens) < self.total_demand():
            raise InfeasibleDemand("sum of generator pmax below total demand")

    def generators(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == GENERATOR]

    def loads(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == LOAD]

    def total_demand(self) -> float:
        return sum(n.d for n in self.nodes)

    def degree(self, node_id: int) -> int:
        return len(self.neighbors[node_id])

    def max_degree(self) -> int:
        return max(self.degree(n.id) for n in self.nodes)

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            if n.kind == GENERATOR:
                nodes.append({"id": n.id, "kind": n.kind, "a": n.a, "b": n.b,
                              "pmin": n.pmin, "pmax": n.pmax})
            else:
                nodes.append({"id": n.id, "kind": n.kind, "d": n.d})
        edges = [{"i": e.i, "j": e.j, "g": e.g} for e in self.edges]
        return {"nodes": nodes, "edges": edges}


def _network_from_dict(doc: dict) -> DcNetwork:
    nodes = []
    for item in doc["nodes"]:
        kind = item["kind"]
        if kind == GENERATOR:
            nodes.append(Node(id=item["id"], kind=kind,
                              a=float(item.get("a", 0.0)),
                              b=float(item.get("b", 0.0)),
                              pmin=float(item.get("pmin", 0.0)),
                              pmax=float(item.get("pmax", 0.0))))
        else:
            nodes.append(Node(id=item["id"], kind=kind, d=float(item.get("d", 0.0))))
    edges = [Edge(e["i"], e["j"], float(e["g"])) for e in doc["edges"]]
    return DcNetwork(nodes, edges)


def build_network(source) -> DcNetwork:
    """Build from a dict, a JSON file path, or a file object."""
    if isinstance(source, dict):
        return _network_from_dict(source)
    if hasattr(source, "read"):
        return _network_from_dict(json.load(source))
    with open(source, encoding="utf-8") as fh:
        return _network_from_dict(json.load(fh))


def default_27_node() -> DcNetwork:
    """The shipped 27-terminal MTDC study case (representative topology)."""
    with resources.files("simbus.data").joinpath("mtdc27.json").open("r") as fh:
        return build_network(fh)


def random_network(seed: int, n_nodes: int | None = None) -> DcNetwork:
    """Seeded random connected network for the oracle-equivalence suite."""
    rng = random.Random(seed)
    n = n_nodes if n_nodes is not None else rng.randint(3, 10)
    ids = list(range(1, n + 1))
    # at least one generator; roughly 40% generators
    n_gen = max(1, round(0.4 * n))
    gen_ids = set(rng.sample(ids, n_gen))
    nodes = []
    total_demand = 0.0
    for i in ids:
        if i in gen_ids:
            nodes.append(Node(i, GENERATOR,
                              a=rng.uniform(0.2, 2.0),
                              b=rng.uniform(0.5, 3.0),
                              pmin=0.0,
                              pmax=rng.uniform(1.0, 3.0)))
        else:
            d = rng.uniform(0.1, 0.6)
            total_demand += d
            nodes.append(Node(i, LOAD, d=d))
    # demand never exceeds 80% of capacity
    cap = sum(nd.pmax for nd in nodes if nd.kind == GENERATOR)
    if total_demand > 0.8 * cap:
        scale = 0.8 * cap / total_demand
        nodes = [Node(nd.id, nd.kind, d=nd.d * scale) if nd.kind == LOAD else nd
                 for nd in nodes]
    # random spanning tree plus extra edges
    edges = []
    shuffled = ids[:]
    rng.shuffle(shuffled)
    for idx in range(1, n):
        a = shuffled[idx]
        bnode = shuffled[rng.randrange(idx)]
        edges.append(Edge(min(a, bnode), max(a, bnode), rng.uniform(5.0, 20.0)))
    present = {(e.i, e.j) for e in edges}
    extra = max(0, round(0.3 * n))
    attempts = 0
    while extra > 0 and attempts < 50:
        attempts += 1
        a, bnode = rng.sample(ids, 2)
        key = (min(a, bnode), max(a, bnode))
        if key not in present:
            present.add(key)
            edges.append(Edge(key[0], key[1], rng.uniform(5.0, 20.0)))
            extra -= 1
    return DcNetwork(nodes, edges)
