"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when the
extension is unavailable or when ``ARMAGRAPH_PURE_PYTHON`` is set to a
non-empty value other than ``0``. ``benchmarks/backend_bench.py`` compares
the two.
"""

import os

_force_py = os.environ.get("ARMAGRAPH_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    from armagraph import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from armagraph import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from armagraph import _kernels_py as _impl

        BACKEND = "python"

csr_dense_matmul = _impl.csr_dense_matmul
jacobi_sweeps = _impl.jacobi_sweeps


def backend_name() -> str:
    return BACKEND
