"""Structure augmentation for cross-graph node classification.

Low-weight edge dropping keeps the heavy edges of ``D^{-1/2} A D^{-1/2}``
and samples the rest; spectral-clustering edge adding connects nodes whose
features fall in the same cluster.
"""

__version__ = "0.1.0"

from .graph import Graph, SparseSymMatrix, degree_vector, load_graph, normalized_adjacency, save_graph
from .weighting import edge_weight_matrix, laplacian, total_variation
from .sampling import (
    DropConfig,
    DropStrategy,
    apply_drop,
    bernoulli_mask,
    drop_probabilities_cdf,
    drop_probabilities_division,
    drop_probabilities_threshold,
    threshold_tau,
)
from .spectral import (
    AffinityConfig,
    ClusterAssignment,
    affinity_laplacian,
    kmeans,
    rbf_affinity,
    smallest_eigenpairs,
    spectral_cluster,
)
from .cluster_augment import (
    AddConfig,
    AddVariant,
    MergeMode,
    add_probabilities,
    augment,
    cluster_edge_weights,
    cluster_graph,
    incidence_matrix,
    merge_mixup,
    merge_union,
    sample_cluster_edges,
)
