"""Spectral augmentation schemes for graph contrastive learning, at desk scale."""

__version__ = "0.1.0"

from .graph import Graph, generate_random_geometric, generate_sbm, load_graph, save_graph  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["Graph", "generate_sbm", "generate_random_geometric", "load_graph", "save_graph", "BACKEND",
           "__version__"]
