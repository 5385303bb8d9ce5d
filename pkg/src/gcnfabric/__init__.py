"""Hypercube message-passing fabric simulator and GCN training dataflow."""

from .graphprep import BlockMessage, CooMatrix
from .gcn_dataflow import ExecOrder, LayerSpec
from .router import RoutingTable, route, route_vectors

__all__ = ["BlockMessage", "CooMatrix", "ExecOrder", "LayerSpec", "RoutingTable", "route", "route_vectors"]
__version__ = "0.1.0"
