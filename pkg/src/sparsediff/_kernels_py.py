"""NumPy reference for the diffusion simulation kernel, vectorized over trials.

Must stay call-compatible with ``_kernels.pyx``.
"""

import numpy as np

ATTRACTOR_NONE, ATTRACTOR_ZA, ATTRACTOR_RZA = 0, 1, 2


def _attract(w, attractor, eps):
    if attractor == ATTRACTOR_ZA:
        return np.sign(w)
    return np.sign(w) / (1.0 + eps * np.abs(w))


def simulate_batch(x_pad, d, indptr, indices, weights, wo_table, stage_of,
                   mu, gamma, rho, eps, attractor, cta, history=None):
    """Run one diffusion variant over a batch of independent trials.

    Parameters
    ----------
    x_pad : ndarray, shape (B, N, T + M - 1)
        Scalar input sequences with ``M - 1`` leading zeros, so the regressor
        of node ``k`` at time ``i`` is ``x_pad[b, k, i:i + M][::-1]``.
    d : ndarray, shape (B, N, T)
        Desired samples.
    indptr, indices, weights : ndarray
        Column-compressed combination matrix: node ``k`` averages
        ``weights[j] * phi[indices[j]]`` for ``j`` in ``indptr[k]:indptr[k+1]``.
    wo_table : ndarray, shape (S, M)
        True system for each schedule stage.
    stage_of : ndarray of int64, shape (T,)
        Stage index active at each iteration.
    mu, gamma, rho, eps : float
    attractor : int
        0 none, 1 sign, 2 reweighted sign.
    cta : bool
        Combine-then-adapt when true, else adapt-then-combine.
    history : ndarray, shape (B, T, N, M), optional
        Filled with the weights after every iteration.

    Returns
    -------
    msd : ndarray, shape (B, T)
        Network MSD per iteration; NaN from the divergence point on.
    w : ndarray, shape (B, N, M)
        Final weights.
    diverged_at : ndarray of int64, shape (B,)
        First iteration with a non-finite MSD, or -1.
    """
    x_pad = np.asarray(x_pad, dtype=float)
    d = np.asarray(d, dtype=float)
    B, N, T = d.shape
    M = wo_table.shape[1]
    leak = 1.0 - mu * gamma
    use_attractor = attractor != ATTRACTOR_NONE and rho != 0.0

    cols = [(indices[indptr[k]:indptr[k + 1]], weights[indptr[k]:indptr[k + 1]]) for k in range(N)]

    def combine(src):
        out = np.empty_like(src)
        for k, (ls, ws) in enumerate(cols):
            acc = ws[0] * src[:, ls[0]]
            for l, a in zip(ls[1:], ws[1:]):
                acc = acc + a * src[:, l]
            out[:, k] = acc
        return out

    def adapt(base, u, dk):
        e = dk - np.einsum("bnm,bnm->bn", u, base)
        out = leak * base + (mu * e)[..., None] * u
        if use_attractor:
            out = out - rho * _attract(base, attractor, eps)
        return out

    w = np.zeros((B, N, M))
    msd = np.empty((B, T))
    with np.errstate(all="ignore"):
        for i in range(T):
            u = x_pad[:, :, i:i + M][..., ::-1]
            if cta:
                w = adapt(combine(w), u, d[:, :, i])
            else:
                w = combine(adapt(w, u, d[:, :, i]))
            dev = wo_table[stage_of[i]] - w
            msd[:, i] = np.einsum("bnm,bnm->b", dev, dev) / N
            if history is not None:
                history[:, i] = w

    bad = ~np.isfinite(msd)
    diverged_at = np.where(bad.any(axis=1), bad.argmax(axis=1), -1).astype(np.int64)
    for b in np.flatnonzero(diverged_at >= 0):
        msd[b, diverged_at[b]:] = np.nan
    return msd, w, diverged_at
