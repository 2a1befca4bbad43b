import json

import pytest

from simbus.errors import InfeasibleDemand, NoGenerator
from simbus.opf.network import build_network, default_27_node, random_network
from simbus.opf.oracle import centralized_opf_oracle


def two_node():
    return build_network({
        "nodes": [
            {"id": 1, "kind": "generator", "a": 0.5, "b": 1.0,
             "pmin": 0.0, "pmax": 2.0},
            {"id": 2, "kind": "load", "d": 1.0},
        ],
        "edges": [{"i": 1, "j": 2, "g": 10.0}],
    })


class TestTwoNodeByHand:
    """Closed-form KKT solution: v1 = 1 (ref), flow balance at the load
    gives 1 = 10 (v1 - v2) so v2 = 0.9, p1 = 1, cost = 0.5 + 1 = 1.5,
    price = 2 a p + b = 2."""

    def test_solution(self):
        sol = centralized_opf_oracle(two_node())
        assert sol.v[1] == pytest.approx(1.0, abs=1e-12)
        assert sol.v[2] == pytest.approx(0.9, abs=1e-9)
        assert sol.p[1] == pytest.approx(1.0, abs=1e-9)
        assert sol.p[2] == pytest.approx(0.0, abs=1e-12)
        assert sol.objective == pytest.approx(1.5, abs=1e-9)
        assert sol.prices[1] == pytest.approx(2.0, abs=1e-9)
        assert sol.prices[2] == pytest.approx(2.0, abs=1e-9)


class TestBindingLimitByHand:
    """Line of three nodes g=10: gen1 (a=0.5, b=1, pmax=0.6), load d=1,
    gen3 (a=1, b=1). Equal marginal cost wants p1 = 2/3 > pmax, so p1
    clamps to 0.6, p3 = 0.4, price = 2*1*0.4 + 1 = 1.8, and voltages
    v = (1, 0.94, 0.98) follow from per-node flow balance."""

    def net(self):
        return build_network({
            "nodes": [
                {"id": 1, "kind": "generator", "a": 0.5, "b": 1.0,
                 "pmin": 0.0, "pmax": 0.6},
                {"id": 2, "kind": "load", "d": 1.0},
                {"id": 3, "kind": "generator", "a": 1.0, "b": 1.0,
                 "pmin": 0.0, "pmax": 2.0},
            ],
            "edges": [{"i": 1, "j": 2, "g": 10.0},
                      {"i": 2, "j": 3, "g": 10.0}],
        })

    def test_clamped_dispatch(self):
        sol = centralized_opf_oracle(self.net())
        assert sol.p[1] == pytest.approx(0.6, abs=1e-9)
        assert sol.p[3] == pytest.approx(0.4, abs=1e-9)
        assert sol.v[2] == pytest.approx(0.94, abs=1e-9)
        assert sol.v[3] == pytest.approx(0.98, abs=1e-9)
        assert sol.prices[2] == pytest.approx(1.8, abs=1e-9)


class TestValidation:
    def test_power_balance_on_random_networks(self):
        for seed in range(20):
            net = random_network(seed)
            sol = centralized_opf_oracle(net)
            total_gen = sum(sol.p.values())
            total_load = sum(n.d for n in net.nodes if n.kind == "load")
            assert total_gen == pytest.approx(total_load, abs=1e-7)
            for node in net.nodes:
                if node.kind == "generator":
                    assert node.pmin - 1e-9 <= sol.p[node.id] <= node.pmax + 1e-9

    def test_ref_voltage_pinned(self):
        for seed in range(5):
            net = random_network(seed)
            sol = centralized_opf_oracle(net)
            assert sol.v[net.ref_node] == pytest.approx(1.0, abs=1e-12)

    def test_no_generator(self):
        with pytest.raises(NoGenerator):
            build_network({"nodes": [{"id": 1, "kind": "load", "d": 1.0},
                                     {"id": 2, "kind": "load", "d": 1.0}],
                           "edges": [{"i": 1, "j": 2, "g": 1.0}]})

    def test_infeasible_demand(self):
        with pytest.raises(InfeasibleDemand):
            build_network({"nodes": [
                {"id": 1, "kind": "generator", "a": 1.0, "b": 1.0,
                 "pmin": 0.0, "pmax": 0.5},
                {"id": 2, "kind": "load", "d": 1.0}],
                "edges": [{"i": 1, "j": 2, "g": 1.0}]})

    def test_disconnected_rejected(self):
        with pytest.raises(Exception):
            build_network({"nodes": [
                {"id": 1, "kind": "generator", "a": 1.0, "b": 1.0,
                 "pmin": 0.0, "pmax": 3.0},
                {"id": 2, "kind": "load", "d": 1.0},
                {"id": 3, "kind": "load", "d": 0.5}],
                "edges": [{"i": 1, "j": 2, "g": 1.0}]})


class TestDefaultNetwork:
    def test_shape(self):
        net = default_27_node()
        assert len(net.nodes) == 27
        assert sum(1 for n in net.nodes if n.kind == "generator") == 9

    def test_solves(self):
        sol = centralized_opf_oracle(default_27_node())
        assert sol.objective == pytest.approx(13.4768, abs=1e-3)
        assert all(0.9 < v < 1.1 for v in sol.v.values())
