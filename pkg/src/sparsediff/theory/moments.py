"""Gaussian moment formulas for the attractor expectations and the regressor fourth moment.

Each weight coefficient is modeled as ``w ~ N(w_o - mean_err, variance)``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

SQRT2 = np.sqrt(2.0)
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def expected_sign(true_coef, mean_err, variance):
    """``E[sign(w)] = -erf((mean_err - w_o) / sqrt(2 variance))``.

    Degenerates to ``sign(w_o - mean_err)`` at zero variance, with ``sign(0) = 0``.
    """
    true_coef, mean_err, variance = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (true_coef, mean_err, variance)))
    if np.any(variance < 0):
        raise ValueError("variance must be >= 0")
    sd = np.sqrt(variance)
    out = np.sign(true_coef - mean_err)
    pos = sd > 0
    out = np.where(pos, -erf((-true_coef + mean_err) / (SQRT2 * np.where(pos, sd, 1.0))), out)
    return out[()] if out.ndim == 0 else out


def expected_abs(true_coef, mean_err, variance):
    """Folded-normal mean ``E|w|``; ``|w_o - mean_err|`` at zero variance."""
    true_coef, mean_err, variance = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (true_coef, mean_err, variance)))
    if np.any(variance < 0):
        raise ValueError("variance must be >= 0")
    m = true_coef - mean_err
    sd = np.sqrt(variance)
    pos = sd > 0
    s = np.where(pos, sd, 1.0)
    folded = m * erf(m / (SQRT2 * s)) + SQRT_2_OVER_PI * s * np.exp(-(m * m) / (2.0 * s * s))
    out = np.where(pos, folded, np.abs(m))
    return out[()] if out.ndim == 0 else out


def gaussian_fourth_moment(variances, taps: int) -> np.ndarray:
    """``E[(U^T U) kron (U^T U)]`` for white Gaussian regressors.

    ``U = blockdiag(u_1, ..., u_N)`` with ``u_k`` a row of ``taps`` i.i.d.
    ``N(0, variances[k])`` entries. Entry ``[(p, q), (r, s)]`` is
    ``E[X_pr X_qs]`` with ``X = U^T U``: nodes are independent, and within one
    node Isserlis' theorem gives ``s^4 (d_pr d_qs + d_pq d_rs + d_ps d_qr)``.
    """
    var = np.asarray(variances, dtype=float).ravel()
    n = var.size
    dim = n * taps
    s = np.repeat(var, taps)
    out = np.diag(np.outer(s, s).ravel())
    for k in range(n):
        idx = np.arange(k * taps, (k + 1) * taps)
        s4 = var[k] ** 2
        p, q = np.meshgrid(idx, idx, indexing="ij")
        # d_pq d_rs: rows (p, p), cols (r, r)
        diag_pairs = idx * dim + idx
        out[np.ix_(diag_pairs, diag_pairs)] += s4
        # d_ps d_qr: row (p, q), col (q, p)
        out[(p * dim + q).ravel(), (q * dim + p).ravel()] += s4
    return out


def sample_regressors(rng: np.random.Generator, variances, taps: int, size: int, ar_pole: float | None = None) -> np.ndarray:
    """Draw ``size`` independent stationary regressor sets, shape ``(size, N, taps)``."""
    var = np.asarray(variances, dtype=float).ravel()
    n = var.size
    z = rng.standard_normal((size, n, taps)) * np.sqrt(var)[None, :, None]
    if ar_pole is None:
        return z
    # oldest tap first from the stationary law, then run the recursion forward
    y = np.empty_like(z)
    y[..., taps - 1] = z[..., taps - 1] / np.sqrt(1.0 - ar_pole**2)
    for m in range(taps - 2, -1, -1):
        y[..., m] = z[..., m] + ar_pole * y[..., m + 1]
    return y


def sample_fourth_moment(
    rng: np.random.Generator,
    variances,
    taps: int,
    samples: int = 1_000_000,
    ar_pole: float | None = None,
    batch: int = 100_000,
) -> np.ndarray:
    """Sample-mean estimate of ``E[(U^T U) kron (U^T U)]``; covers colored inputs too."""
    var = np.asarray(variances, dtype=float).ravel()
    n = var.size
    dim = n * taps
    acc = np.zeros((dim * dim, dim * dim))
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        u = sample_regressors(rng, var, taps, b, ar_pole)
        x = np.zeros((b, dim, dim))
        for k in range(n):
            sl = slice(k * taps, (k + 1) * taps)
            x[:, sl, sl] = u[:, k, :, None] * u[:, k, None, :]
        flat = x.reshape(b, dim * dim)
        acc += flat.T @ flat  # [(p, r), (q, s)]
        done += b
    acc /= samples
    # reorder [(p, r), (q, s)] -> [(p, q), (r, s)]
    return acc.reshape(dim, dim, dim, dim).transpose(0, 2, 1, 3).reshape(dim * dim, dim * dim)
