"""Meta-graph based node embedding for heterogeneous typed graphs.

Typed graph storage, meta-path and meta-graph queries, instance-count
relevance (StructCount, PathSim, GraphSim), tensor utilities and CP-ALS,
the coupled tensor-matrix decomposition solver behind MEGA / MEGA++, and
an evaluation harness for clustering and classification.
"""

__version__ = "0.1.0"

from .ctmd import CtmdConfig, EmbeddingResult, ctmd, mega, mega_pp, meta_graph_slices, stack_similarity_tensor
from .errors import (
    CountOverflowError,
    DanglingEdgeError,
    GraphParseError,
    HinError,
    MetaGraphError,
    SchemaError,
    SizeGuardError,
    SolverDivergence,
)
from .evaluation import cluster_evaluate, kmeans, knn_classify, macro_f1, micro_f1, nmi, purity
from .graph import Edge, EdgeType, Node, Schema, TypedGraph, load_graph
from .metagraph import MetaGraph, MetaPath, embedded_meta_paths, is_symmetric, load_meta_graph, parse_meta_path
from .relevance import commuting_count, enumerate_instances, graphsim, pathsim, struct_count
from .tensor import cp_als, fold, khatri_rao, unfold
