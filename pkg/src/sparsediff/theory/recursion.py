"""Mean and mean-square moment recursions for ATC diffusion with leak and zero attractor.

Stacked quantities use node-major order: coefficient ``m`` of node ``k`` sits
at index ``k*M + m``. With ``P`` the stacked combination operator and
``Q = mu I``, ``Gam = gamma I``, ``Rho = rho I``, ``S_u = E[U^T U]``::

    A = (I - S_u Q^T) P^T      B = Gam^T Q^T P^T
    C = Q^T P^T                D = Rho^T P^T

so that ``A^T = P (I - Q S_u)``, ``B^T = P Q Gam`` and so on. The weight error
``wt = w_opt - w`` then obeys, in the mean,

    E[wt_i] = A^T E[wt] + B^T E[w] + D^T E[g(w)]

and the second moment ``Wt = E[wt wt^T]`` follows the ten-term recursion
implemented in :func:`mean_square_terms`.

``P`` is ``Gamma^T kron I_M``: node ``k`` combines with column ``k`` of
``Gamma``, so row ``k`` of the stacked operator is column ``k`` of ``Gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..algorithms import AlgorithmVariant, Attractor, DivergenceError, Strategy
from ..network import CombinationMatrix
from ..signal import SignalProfile
from .moments import expected_abs, expected_sign

TRANSIENT_MAX_DIM = 256
VARIANCE_CLAMP = 1e-9


class TheoryError(ValueError):
    """Raised for configurations the moment analysis does not cover."""


@dataclass(frozen=True, eq=False)
class StackedOperators:
    nodes: int
    taps: int
    attractor: Attractor
    eps: float
    mu: float
    gamma: float
    rho: float
    P: np.ndarray
    Q: np.ndarray
    Gam: np.ndarray
    Rho: np.ndarray
    S_u: np.ndarray
    G_noise: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def dim(self) -> int:
        return self.nodes * self.taps

    @classmethod
    def build(cls, combiner: CombinationMatrix, profile: SignalProfile, variant: AlgorithmVariant, taps: int) -> "StackedOperators":
        if variant.strategy is not Strategy.ATC:
            raise TheoryError("moment analysis is only available for ATC variants")
        if profile.colored:
            raise TheoryError("moment analysis assumes white regressors (E[U^T U] diagonal)")
        n = profile.node_count
        if combiner.node_count != n:
            raise ValueError("combiner and profile disagree on the node count")
        dim = n * taps
        eye_m = np.eye(taps)
        p = variant.params
        P = np.kron(combiner.entries.T, eye_m)
        Q = np.kron(np.diag(np.full(n, p.step_size)), eye_m)
        Gam = np.kron(np.diag(np.full(n, p.leak)), eye_m)
        rho = p.attractor_strength if variant.attractor is not Attractor.NONE else 0.0
        Rho = np.kron(np.diag(np.full(n, rho)), eye_m)
        var_u = np.asarray(profile.input_variances)
        var_v = np.asarray(profile.noise_variances)
        S_u = np.kron(np.diag(var_u), eye_m)
        G_noise = np.kron(np.diag(var_u * var_v), eye_m)
        I = np.eye(dim)
        A = (I - S_u @ Q.T) @ P.T
        B = Gam.T @ Q.T @ P.T
        C = Q.T @ P.T
        D = Rho.T @ P.T
        return cls(n, taps, variant.attractor, p.reweight_scale, p.step_size, p.leak, rho,
                   P, Q, Gam, Rho, S_u, G_noise, A, B, C, D)


@dataclass(frozen=True, eq=False)
class GlobalMoments:
    mean_err: np.ndarray  # E[wt], (MN,)
    second_moment: np.ndarray  # E[wt wt^T], (MN, MN)
    w_opt: np.ndarray  # col{w_o, ..., w_o}

    @classmethod
    def initial(cls, w_o, nodes: int) -> "GlobalMoments":
        """Moments of the zero-initialized network: ``wt = w_opt`` deterministically."""
        w_opt = np.tile(np.asarray(w_o, dtype=float), nodes)
        return cls(w_opt.copy(), np.outer(w_opt, w_opt), w_opt)

    @property
    def mean_weights(self) -> np.ndarray:
        return self.w_opt - self.mean_err

    def variances(self) -> np.ndarray:
        var = np.diag(self.second_moment) - self.mean_err**2
        if np.any(var < -VARIANCE_CLAMP):
            j = int(np.argmin(var))
            raise DivergenceError(f"negative coefficient variance {var[j]:.3e} at index {j}; recursion unstable")
        return np.maximum(var, 0.0)

    def msd(self, nodes: int) -> float:
        return float(np.trace(self.second_moment)) / nodes


def _attractor_moments(moments: GlobalMoments, kind: Attractor, eps: float):
    """Per-coefficient ``E[g]``, ``E[g^2]`` and ``E[w g]``."""
    var = moments.variances()
    w_o = moments.w_opt
    mw = moments.mean_weights
    s = expected_sign(w_o, moments.mean_err, var)
    a = expected_abs(w_o, moments.mean_err, var)
    nonzero = np.where(var > 0, 1.0, (mw != 0).astype(float))
    if kind is Attractor.ZA:
        return s, nonzero, a
    if kind is Attractor.RZA:
        r = 1.0 / (1.0 + eps * a)
        return s * r, nonzero * r * r, a * r
    z = np.zeros_like(w_o)
    return z, z, z


def expected_attractor(moments: GlobalMoments, kind: Attractor | str, eps: float = 1.0) -> np.ndarray:
    """``E[g(w)]`` per stacked coefficient; the reweighted ratio is taken outside the expectation."""
    return _attractor_moments(moments, Attractor(kind), eps)[0]


def attractor_second_moments(moments: GlobalMoments, kind: Attractor | str, eps: float = 1.0):
    """``E[g g^T]`` and ``E[w g^T]``: products of means off the diagonal, exact diagonals."""
    eg, eg2, ewg = _attractor_moments(moments, Attractor(kind), eps)
    Egg = np.outer(eg, eg)
    np.fill_diagonal(Egg, eg2)
    Ewg = np.outer(moments.mean_weights, eg)
    np.fill_diagonal(Ewg, ewg)
    return Egg, Ewg


def _check_dims(moments: GlobalMoments, ops: StackedOperators):
    if moments.mean_err.shape != (ops.dim,) or moments.second_moment.shape != (ops.dim, ops.dim):
        raise ValueError(f"moments of dimension {moments.mean_err.shape[0]} do not match operators of dimension {ops.dim}")


def mean_step(moments: GlobalMoments, ops: StackedOperators) -> np.ndarray:
    """One step of the first-moment recursion."""
    _check_dims(moments, ops)
    eg = expected_attractor(moments, ops.attractor, ops.eps) if ops.rho else np.zeros(ops.dim)
    I = np.eye(ops.dim)
    return (ops.P @ (I - ops.Q @ ops.S_u) @ moments.mean_err
            + ops.P @ ops.Q @ ops.Gam @ moments.mean_weights
            + ops.P @ ops.Rho @ eg)


def mean_square_terms(moments: GlobalMoments, ops: StackedOperators, fourth_order: bool = False) -> dict[str, np.ndarray]:
    """The ten matrix terms whose sum is the next ``E[wt wt^T]``.

    Keys name the expectation each term carries. ``fourth_order`` adds the
    Gaussian fourth-order regressor term dropped by the separation
    approximation (off by default).
    """
    _check_dims(moments, ops)
    At, Bt, Ct, Dt = ops.A.T, ops.B.T, ops.C.T, ops.D.T
    A, B, C, D = ops.A, ops.B, ops.C, ops.D
    Wt = moments.second_moment
    mt = moments.mean_err
    w_opt = moments.w_opt
    W = np.outer(w_opt, w_opt) - np.outer(w_opt, mt) - np.outer(mt, w_opt) + Wt
    E_wt_w = np.outer(mt, w_opt) - Wt
    terms = {
        "wt_wt": At @ Wt @ A,
        "w_w": Bt @ W @ B,
        "noise": Ct @ ops.G_noise @ C,
        "wt_w": At @ E_wt_w @ B,
        "w_wt": Bt @ E_wt_w.T @ A,
    }
    if ops.rho:
        Egg, Ewg = attractor_second_moments(moments, ops.attractor, ops.eps)
        eg = expected_attractor(moments, ops.attractor, ops.eps)
        E_wt_g = np.outer(w_opt, eg) - Ewg
        terms.update({
            "g_g": Dt @ Egg @ D,
            "wt_g": At @ E_wt_g @ D,
            "w_g": Bt @ Ewg @ D,
            "g_wt": Dt @ E_wt_g.T @ A,
            "g_w": Dt @ Ewg.T @ B,
        })
    if fourth_order:
        terms["fourth_order"] = Ct @ _fourth_order_excess(Wt, ops) @ C
    return terms


def _fourth_order_excess(X: np.ndarray, ops: StackedOperators) -> np.ndarray:
    """``E[U^T U X U^T U] - S_u X S_u`` for white Gaussian regressors.

    Only same-node blocks differ: ``s^4 (X_kk^T + Tr(X_kk) I)``.
    """
    out = np.zeros_like(X)
    m = ops.taps
    var = np.diag(ops.S_u)[::m]
    for k in range(ops.nodes):
        sl = slice(k * m, (k + 1) * m)
        blk = X[sl, sl]
        out[sl, sl] = var[k] ** 2 * (blk.T + np.trace(blk) * np.eye(m))
    return out


def mean_square_step(moments: GlobalMoments, ops: StackedOperators, symmetrize: bool = True, fourth_order: bool = False) -> np.ndarray:
    """One step of the second-moment recursion."""
    terms = mean_square_terms(moments, ops, fourth_order)
    Wn = sum(terms.values())
    if not np.all(np.isfinite(Wn)):
        raise DivergenceError("second-moment recursion produced non-finite entries")
    if symmetrize:
        Wn = 0.5 * (Wn + Wn.T)
    return Wn


def vec(X: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization, so ``vec(X Y Z) = (Z^T kron X) vec(Y)``."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape(n, n, order="F")


def mean_square_step_kron(moments: GlobalMoments, ops: StackedOperators) -> np.ndarray:
    """Literal Kronecker/vec evaluation of the second-moment recursion (small sizes only)."""
    if ops.dim > 32:
        raise TheoryError("Kronecker form limited to M*N <= 32")
    A, B, C, D = ops.A, ops.B, ops.C, ops.D
    Wt, mt, w_opt = moments.second_moment, moments.mean_err, moments.w_opt
    W = np.outer(w_opt - mt, w_opt - mt) + Wt - np.outer(mt, mt)
    E_wt_w = np.outer(mt, w_opt) - Wt
    v = (np.kron(A.T, A.T) @ vec(Wt)
         + np.kron(B.T, B.T) @ vec(W)
         + np.kron(C.T, C.T) @ vec(ops.G_noise)
         + np.kron(B.T, A.T) @ vec(E_wt_w)
         + np.kron(A.T, B.T) @ vec(E_wt_w.T))
    if ops.rho:
        Egg, Ewg = attractor_second_moments(moments, ops.attractor, ops.eps)
        eg = expected_attractor(moments, ops.attractor, ops.eps)
        E_wt_g = np.outer(w_opt, eg) - Ewg
        v = v + (np.kron(D.T, D.T) @ vec(Egg)
                 + np.kron(D.T, A.T) @ vec(E_wt_g)
                 + np.kron(D.T, B.T) @ vec(Ewg)
                 + np.kron(A.T, D.T) @ vec(E_wt_g.T)
                 + np.kron(B.T, D.T) @ vec(Ewg.T))
    return unvec(v, ops.dim)


@dataclass
class TheoryTrace:
    """Theoretical network MSD after each iteration (index 0 = after the first update)."""

    msd: np.ndarray
    mean_err: np.ndarray | None = field(default=None, repr=False)  # (T, MN) when recorded
    final: GlobalMoments | None = field(default=None, repr=False)

    @property
    def msd_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.msd, 1e-32))


def transient(ops: StackedOperators, w_o, iterations: int, record_means: bool = False, fourth_order: bool = False) -> TheoryTrace:
    """Iterate both moment recursions from the zero-initialized network."""
    if ops.dim > TRANSIENT_MAX_DIM:
        raise TheoryError(f"transient recursion limited to M*N <= {TRANSIENT_MAX_DIM}, got {ops.dim}")
    w_o = np.asarray(w_o, dtype=float)
    if w_o.shape != (ops.taps,):
        raise ValueError(f"w_o must have {ops.taps} taps, got shape {w_o.shape}")
    mom = GlobalMoments.initial(w_o, ops.nodes)
    msd = np.empty(iterations)
    means = np.empty((iterations, ops.dim)) if record_means else None
    for i in range(iterations):
        m_next = mean_step(mom, ops)
        W_next = mean_square_step(mom, ops, fourth_order=fourth_order)
        mom = GlobalMoments(m_next, W_next, mom.w_opt)
        msd[i] = mom.msd(ops.nodes)
        if means is not None:
            means[i] = m_next
    return TheoryTrace(msd, means, mom)
