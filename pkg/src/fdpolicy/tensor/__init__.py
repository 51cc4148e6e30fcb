"""Dense float64 arrays with a static reverse-mode graph."""
from .graph import Graph, GraphError, Node, NonFiniteError
from .gradcheck import grad_check
from .io import dumps_array, load_array, loads_array, save_array
from .ops import ShapeError, sinusoid_table

__all__ = [
    "Graph", "GraphError", "Node", "NonFiniteError", "ShapeError", "grad_check",
    "dumps_array", "loads_array", "save_array", "load_array", "sinusoid_table",
]
