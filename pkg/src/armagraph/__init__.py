"""Graph spectral filtering with rational (ARMA) and polynomial filters.

Sparse recursive implementations, exact dense oracles, trainable layers on
a small reverse-mode tape, an empirical frequency-response probe, and a
training harness for node/signal/graph tasks.
"""

from armagraph._backend import backend_name
from armagraph.sparse import (
    CsrMatrix,
    SpectralDecomposition,
    build_csr,
    estimate_lambda_max,
    gcn_adjacency,
    normalized_laplacian,
    propagation_matrix,
    scaled_laplacian,
    spmm,
    symmetric_eig,
)

__version__ = "0.1.0"

__all__ = [
    "CsrMatrix",
    "SpectralDecomposition",
    "backend_name",
    "build_csr",
    "estimate_lambda_max",
    "gcn_adjacency",
    "normalized_laplacian",
    "propagation_matrix",
    "scaled_laplacian",
    "spmm",
    "symmetric_eig",
    "__version__",
]
