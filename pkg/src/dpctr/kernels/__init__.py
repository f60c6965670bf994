"""Hot-loop kernels with a compiled fast path and a pure-numpy fallback.

The Cython extension (``dpctr.kernels._core``) implements the embedding
scatter-add and the per-unit squared-norm reductions that sit inside the
two-pass clipping backward; everything matmul-shaped stays on BLAS. The
numpy module produces identical results when the extension is missing or
when ``DPCTR_KERNELS=python`` is set. ``backend_name()`` reports the active
implementation and ``use()`` / ``forced_backend()`` switch it.
"""

import contextlib
import os

import numpy as np

from . import _numpy

_BACKENDS = {"python": _numpy}
try:
    from . import _core  # compiled extension, optional

    _BACKENDS["compiled"] = _core
except ImportError:
    _core = None

if _core is not None and os.environ.get("DPCTR_KERNELS", "") != "python":
    _active = _BACKENDS["compiled"]
else:
    _active = _BACKENDS["python"]


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend_name() -> str:
    return "compiled" if _core is not None and _active is _core else "python"


def use(name: str) -> str:
    """Select the kernel backend ('python', 'compiled', or 'auto')."""
    global _active
    if name == "auto":
        name = "compiled" if "compiled" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    _active = _BACKENDS[name]
    return backend_name()


@contextlib.contextmanager
def forced_backend(name: str):
    previous = backend_name()
    use(name)
    try:
        yield
    finally:
        use(previous)


def dense_sq_norms(inputs, grads, microbatch_size: int, out) -> None:
    """Add each unit's squared weight+bias gradient norm for one dense layer.

    For the unit u of size m holding rows i, adds
    (1/m^2) * sum_{i,j in u} (g_i . g_j) * (a_i . a_j + 1) to out[u], which is
    the squared Frobenius norm of the unit-mean weight gradient plus the
    squared norm of the unit-mean bias gradient.
    """
    _active.dense_sq_norms(
        np.ascontiguousarray(inputs), np.ascontiguousarray(grads), microbatch_size, out
    )


def embedding_sq_norms(grads, ids, microbatch_size: int, out) -> None:
    """Add each unit's squared embedding-table gradient norm for one feature.

    Rows of the same unit that hit the same table row accumulate before the
    norm is taken, so adds (1/m^2) * sum_{i,j in u, id_i == id_j} g_i . g_j.
    """
    _active.embedding_sq_norms(
        np.ascontiguousarray(grads), np.ascontiguousarray(ids), microbatch_size, out
    )


def scatter_add_rows(table, ids, rows) -> None:
    """table[ids[i]] += rows[i] with repeated ids accumulating."""
    _active.scatter_add_rows(table, np.ascontiguousarray(ids), np.ascontiguousarray(rows))
