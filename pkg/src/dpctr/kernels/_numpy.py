"""Pure-numpy kernel implementations (fallback backend).

Semantics match dpctr.kernels._core exactly; see the package docstring for
the contracts. Units are contiguous groups of `microbatch_size` rows in
batch order, the last group possibly smaller.
"""

import numpy as np


def dense_sq_norms(inputs, grads, microbatch_size, out):
    n = inputs.shape[0]
    if n == 0:
        return
    m = microbatch_size
    if m == 1:
        out += np.einsum("bd,bd->b", grads, grads) * (
            np.einsum("bd,bd->b", inputs, inputs) + 1.0
        )
        return
    full = (n // m) * m
    n_full = full // m
    if n_full:
        a = inputs[:full].reshape(n_full, m, -1)
        g = grads[:full].reshape(n_full, m, -1)
        gram_a = np.einsum("uid,ujd->uij", a, a)
        gram_g = np.einsum("uid,ujd->uij", g, g)
        out[:n_full] += np.einsum("uij,uij->u", gram_g, gram_a + 1.0) / (m * m)
    if full < n:
        a = inputs[full:]
        g = grads[full:]
        m_tail = n - full
        gram_a = a @ a.T
        gram_g = g @ g.T
        out[n_full] += float((gram_g * (gram_a + 1.0)).sum()) / (m_tail * m_tail)


def embedding_sq_norms(grads, ids, microbatch_size, out):
    n = grads.shape[0]
    if n == 0:
        return
    m = microbatch_size
    if m == 1:
        out += np.einsum("bd,bd->b", grads, grads)
        return
    full = (n // m) * m
    n_full = full // m
    if n_full:
        g = grads[:full].reshape(n_full, m, -1)
        i = ids[:full].reshape(n_full, m)
        same = i[:, :, None] == i[:, None, :]
        gram_g = np.einsum("uid,ujd->uij", g, g)
        out[:n_full] += np.einsum("uij,uij->u", gram_g, same.astype(np.float64)) / (m * m)
    if full < n:
        g = grads[full:]
        i = ids[full:]
        m_tail = n - full
        same = i[:, None] == i[None, :]
        gram_g = g @ g.T
        out[n_full] += float(gram_g[same].sum()) / (m_tail * m_tail)


def scatter_add_rows(table, ids, rows):
    np.add.at(table, ids, rows)
