"""Exact grid-quadrature posterior for tiny one-dimensional instances.

Every latent scalar is integrated over a fixed grid.  Attributes are
conditionally independent given the persons, so each attribute is summed out
for every person configuration before the person configurations are summed.
Configurations are processed in chunks (first person's grid index fixed).
"""
import itertools

import numpy as np
from scipy.special import expit, log_expit


def _chunk(yi, yia, tables, log_prior_u, log_prior_v, idx):
    """Log weights and conditional link-probability means for one chunk.

    ``tables`` hold every link quantity on grid-index pairs, so the chunk
    only gathers rows from them.
    """
    soc_ll1, soc_ll0, soc_p, att_ll1, att_ll0, att_p = tables
    n, m = yia.shape
    logw = log_prior_u[idx].sum(axis=1)
    soc = np.zeros((len(idx), n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                ki, kj = idx[:, i], idx[:, j]
                logw += np.where(yi[i, j] == 1, soc_ll1[ki, kj], soc_ll0[ki, kj])
                soc[:, i, j] = soc_p[ki, kj]
    cond = np.empty((len(idx), n, m))
    for a in range(m):
        ll = log_prior_v[None, :].repeat(len(idx), axis=0)
        for i in range(n):
            ll += (att_ll1 if yia[i, a] == 1 else att_ll0)[idx[:, i]]
        mx = ll.max(axis=1, keepdims=True)
        wv = np.exp(ll - mx)
        z = wv.sum(axis=1)
        logw += np.log(z) + mx[:, 0]
        for i in range(n):
            cond[:, i, a] = np.einsum("cl,cl->c", att_p[idx[:, i]], wv) / z
    return logw, soc, cond


def grid_posterior_link_means(yi, yia, alpha0, alpha1, prior_var_person=1.0,
                              prior_var_attribute=1.0, lo=-4.0, hi=4.0,
                              n_grid=41):
    """Posterior means of every link probability, D = 1, intercepts fixed.

    ``yi`` is an N x N 0/1 matrix (ordered pairs i != j all enter the
    likelihood), ``yia`` is N x M.  Returns ``(social N x N, attr N x M)``.
    """
    yi = np.asarray(yi, float)
    yia = np.asarray(yia, float)
    n, m = yia.shape
    grid = np.linspace(lo, hi, n_grid)
    log_prior_u = -0.5 * grid ** 2 / prior_var_person
    log_prior_v = -0.5 * grid ** 2 / prior_var_attribute
    gap = (grid[:, None] - grid[None, :]) ** 2
    tables = (log_expit(alpha0 - gap), log_expit(gap - alpha0), expit(alpha0 - gap),
              log_expit(alpha1 - gap), log_expit(gap - alpha1), expit(alpha1 - gap))
    rest = np.array(list(itertools.product(range(n_grid), repeat=n - 1)))

    running_max = -np.inf
    total = 0.0
    acc_soc = np.zeros((n, n))
    acc_attr = np.zeros((n, m))
    for k in range(n_grid):
        idx = np.column_stack([np.full(len(rest), k), rest])
        logw, soc, cond = _chunk(yi, yia, tables, log_prior_u, log_prior_v,
                                 idx)
        mx = logw.max()
        if mx > running_max:
            scale = np.exp(running_max - mx)
            total *= scale
            acc_soc *= scale
            acc_attr *= scale
            running_max = mx
        w = np.exp(logw - running_max)
        total += w.sum()
        acc_soc += np.einsum("c,cij->ij", w, soc)
        acc_attr += np.einsum("c,cia->ia", w, cond)
    social = acc_soc / total
    np.fill_diagonal(social, np.nan)
    return social, acc_attr / total
