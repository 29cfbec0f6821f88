"""Vectorised numpy implementation of the batched SATA loss kernel.

Used when the compiled extension is unavailable, and as its cross-check.
"""

import numpy as np


def batch_loss_grad(E, labels, plain, scene, tau, delta, lambda_scene, lambda_action, aux_temperature=1.0):
    """Per-sample loss components and d(l_total)/d(e_i).

    Args:
        E: (B, F) video embeddings, non-zero rows.
        labels: (B,) ground-truth indices into the rows of ``plain``.
        plain: (K, F) unit-norm plain-prompt embeddings.
        scene: (B, N, F) unit-norm scene-encoded embeddings of each sample's
            ground-truth action; N may be 0.
        tau, delta, lambda_scene, lambda_action, aux_temperature: scalars.

    Returns:
        (l_vta, l_scene, l_action, grad), the first three of shape (B,), the
        gradient of shape (B, F). ``l_action`` is 0 where it is undefined
        (N == 0 or K == 1).
    """
    E = np.asarray(E, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B, F = E.shape
    K = plain.shape[0]
    N = scene.shape[1]
    rows = np.arange(B)

    ne = np.sqrt(np.einsum("bf,bf->b", E, E))
    if np.any(ne == 0.0):
        raise ValueError("zero-norm video embedding")
    eh = E / ne[:, None]

    c = np.clip(eh @ plain.T, -1.0, 1.0)  # (B, K)
    z = c / tau
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sz = ez.sum(axis=1)
    l_vta = zmax[:, 0] + np.log(sz) - z[rows, labels]
    dc = ez / sz[:, None]
    dc[rows, labels] -= 1.0
    dc /= tau

    l_scene = np.zeros(B)
    l_action = np.zeros(B)
    if N > 0:
        cs = np.clip(np.einsum("bf,bnf->bn", eh, scene), -1.0, 1.0)  # (B, N)
        cpos = c[rows, labels]
        u = np.concatenate([cpos[:, None], cs], axis=1) / aux_temperature
        umax = u.max(axis=1, keepdims=True)
        eu = np.exp(u - umax)
        su = eu.sum(axis=1)
        l_scene = umax[:, 0] + np.log(su) - u[:, 0]
        q = eu / su[:, None]
        d_pos_scene = (q[:, 0] - 1.0) / aux_temperature
        d_cs_scene = q[:, 1:] / aux_temperature

        if K > 1:
            h = delta - (cs[:, :, None] - c[:, None, :]) / aux_temperature  # (B, N, K)
            active = h > 0.0
            active[rows, :, labels] = False
            norm_ = 1.0 / (N * (K - 1))
            l_action = np.where(active, h, 0.0).sum(axis=(1, 2)) * norm_
            d_cs_action = -active.sum(axis=2) * (norm_ / aux_temperature)
            d_c_action = active.sum(axis=1) * (norm_ / aux_temperature)
        else:
            d_cs_action = np.zeros((B, N))
            d_c_action = np.zeros((B, K))

        dc = dc + lambda_action * d_c_action
        dc[rows, labels] += lambda_scene * d_pos_scene
        dcs = lambda_scene * d_cs_scene + lambda_action * d_cs_action
        g = dc @ plain + np.einsum("bn,bnf->bf", dcs, scene)
        radial = np.einsum("bk,bk->b", dc, c) + np.einsum("bn,bn->b", dcs, cs)
    else:
        g = dc @ plain
        radial = np.einsum("bk,bk->b", dc, c)
    grad = (g - radial[:, None] * eh) / ne[:, None]
    return l_vta, l_scene, l_action, grad
