"""Closed-form steady-state network MSD for ATC variants.

In steady state the attractor is evaluated at the true system,
``E[g g^T] ~ g(w_o) g(w_o)^T`` and ``E[wt g^T] ~ E[wt] g(w_o)^T`` (and
``E[w g^T] ~ E[w] g(w_o)^T`` consistently), which turns the mean fixed point
into one linear solve and the second moment into

    Tr(Wt_inf) = vec(I)^T Phi y,   Phi = (I - F)^-1,
    F = A^T(x)A^T + B^T(x)B^T - B^T(x)A^T - A^T(x)B^T

with ``y`` collecting the driving terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..algorithms import Attractor
from .recursion import StackedOperators, TheoryError, vec

STEADY_STATE_MAX_DIM = 64


class UnstableError(TheoryError):
    def __init__(self, radius: float):
        super().__init__(f"mean-square operator unstable: spectral radius {radius:.6g} >= 1")
        self.radius = radius


def trace_via_vec(X, Y) -> float:
    """``vec(X)^T vec(Y)``, which equals ``Tr(X^T Y)`` (``Tr(X Y)`` for symmetric ``X``)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"need two square matrices of equal size, got {X.shape} and {Y.shape}")
    return float(vec(X) @ vec(Y))


def _kt(X, Y):
    """``X^T kron Y^T``."""
    return np.kron(X.T, Y.T)


def ms_operator(ops: StackedOperators) -> np.ndarray:
    """Homogeneous mean-square operator ``F`` acting on ``vec(Wt)``."""
    A, B = ops.A, ops.B
    return _kt(A, A) + _kt(B, B) - _kt(B, A) - _kt(A, B)


def ms_spectral_radius(ops: StackedOperators) -> float:
    # F = (A - B)^T kron (A - B)^T, so its spectral radius is rho(A - B)^2
    r = np.max(np.abs(np.linalg.eigvals((ops.A - ops.B).T)))
    return float(r * r)


def _guard(ops: StackedOperators):
    if ops.dim > STEADY_STATE_MAX_DIM:
        raise TheoryError(f"steady-state closed form limited to M*N <= {STEADY_STATE_MAX_DIM}, got {ops.dim}")
    radius = ms_spectral_radius(ops)
    if radius >= 1.0:
        raise UnstableError(radius)


def _phi_t_vec_i(ops: StackedOperators) -> np.ndarray:
    """``Phi^T vec(I)``, so that ``vec(I)^T Phi y = (Phi^T vec(I)) . y``."""
    F = ms_operator(ops)
    n2 = F.shape[0]
    try:
        return np.linalg.solve((np.eye(n2) - F).T, vec(np.eye(ops.dim)))
    except np.linalg.LinAlgError as exc:
        raise TheoryError("I - F is singular; steady state undefined") from exc


def attractor_at(w_opt: np.ndarray, kind: Attractor, eps: float) -> np.ndarray:
    if kind is Attractor.ZA:
        return np.sign(w_opt)
    if kind is Attractor.RZA:
        return np.sign(w_opt) / (1.0 + eps * np.abs(w_opt))
    return np.zeros_like(w_opt)


@dataclass
class SteadyState:
    msd: float
    mean_err: np.ndarray
    trace: float

    @property
    def msd_db(self) -> float:
        return float(10.0 * np.log10(max(self.msd, 1e-32)))


def steady_state_general(ops: StackedOperators, w_o) -> SteadyState:
    """Full eleven-term closed form, attractor included."""
    _guard(ops)
    w_opt = np.tile(np.asarray(w_o, dtype=float), ops.nodes)
    At, Bt, Dt = ops.A.T, ops.B.T, ops.D.T
    I = np.eye(ops.dim)
    g_o = attractor_at(w_opt, ops.attractor, ops.eps) if ops.rho else np.zeros(ops.dim)
    # E[wt] = A^T E[wt] + B^T (w_opt - E[wt]) + D^T g(w_o)
    mt = np.linalg.solve(I - At + Bt, Bt @ w_opt + Dt @ g_o)

    def sandwich(X, Y, Z):
        # (X^T kron Y^T) vec(Z) = vec(Y^T Z X)
        return Y.T @ Z @ X

    A, B, C, D = ops.A, ops.B, ops.C, ops.D
    Wo = np.outer(w_opt, w_opt)
    w_mt = np.outer(w_opt, mt)
    mt_w = np.outer(mt, w_opt)
    E_w_g = np.outer(w_opt - mt, g_o)
    Y = (sandwich(B, B, Wo - w_mt - mt_w)
         + sandwich(C, C, ops.G_noise)
         + sandwich(D, D, np.outer(g_o, g_o))
         + sandwich(B, A, mt_w)
         + sandwich(D, A, np.outer(mt, g_o))
         + sandwich(A, B, w_mt)
         + sandwich(D, B, E_w_g)
         + sandwich(A, D, np.outer(g_o, mt))
         + sandwich(B, D, E_w_g.T))
    tr = float(_phi_t_vec_i(ops) @ vec(Y))
    return SteadyState(tr / ops.nodes, mt, tr)


def steady_state_leaky(ops: StackedOperators, w_o) -> SteadyState:
    """Reduced closed form without attractor, assembled from explicit Kronecker products."""
    _guard(ops)
    w_opt = np.tile(np.asarray(w_o, dtype=float), ops.nodes)
    I = np.eye(ops.dim)
    PQG = ops.P @ ops.Q @ ops.Gam
    # E[wt] = (I - A^T)^-1 P Q Gam (w_opt - E[wt])
    mt = np.linalg.solve(I - ops.A.T + PQG, PQG @ w_opt)
    A, B, C = ops.A, ops.B, ops.C
    Wo = np.outer(w_opt, w_opt)
    y = (_kt(B, B) @ vec(Wo)
         - _kt(B, B) @ vec(np.outer(w_opt, mt))
         - _kt(B, B) @ vec(np.outer(mt, w_opt))
         + _kt(B, A) @ vec(np.outer(mt, w_opt))
         + _kt(C, C) @ vec(ops.G_noise)
         + _kt(A, B) @ vec(np.outer(w_opt, mt)))
    F = ms_operator(ops)
    try:
        Phi = np.linalg.inv(np.eye(F.shape[0]) - F)
    except np.linalg.LinAlgError as exc:
        raise TheoryError("I - F is singular; steady state undefined") from exc
    tr = float(vec(np.eye(ops.dim)) @ Phi @ y)
    return SteadyState(tr / ops.nodes, mt, tr)


def steady_state_msd(ops: StackedOperators, w_o) -> SteadyState:
    """Steady-state network MSD; the attractor-free case takes the reduced path."""
    if ops.rho == 0.0 or ops.attractor is Attractor.NONE:
        return steady_state_leaky(ops, w_o)
    return steady_state_general(ops, w_o)
