from .network import DcNetwork, Node, Edge, build_network, default_27_node, random_network
from .oracle import OpfSolution, centralized_opf_oracle
from .admm import Agent, AdmmConfig
from .run import OpfRunResult, run_distributed_opf, latency_budget_oracle

__all__ = [
    "DcNetwork", "Node", "Edge", "build_network", "default_27_node",
    "random_network", "OpfSolution", "centralized_opf_oracle",
    "Agent", "AdmmConfig", "OpfRunResult", "run_distributed_opf",
    "latency_budget_oracle",
]
