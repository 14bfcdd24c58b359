"""Step-size bounds for convergence in the mean and in the mean square."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .moments import gaussian_fourth_moment
from .recursion import StackedOperators, TheoryError

STABILITY_MAX_DIM = 64


@dataclass(frozen=True)
class StabilityBounds:
    mean_bound: float
    jk_bound: float
    h_bound: float

    @property
    def ms_bound(self) -> float:
        return min(self.jk_bound, self.h_bound)

    @property
    def combined(self) -> float:
        return min(self.mean_bound, self.ms_bound)

    def as_dict(self) -> dict:
        return {
            "mean_bound": self.mean_bound,
            "ms_bound": self.ms_bound,
            "combined": self.combined,
            "jk_bound": self.jk_bound,
            "h_bound": self.h_bound,
        }


def bound_matrices(ops: StackedOperators, fourth_moment: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``K`` and ``J`` with ``mu^2 K - mu J + I`` the mean-square iteration matrix (up to ``P kron P``)."""
    S = ops.S_u
    Gam = ops.Gam
    I = np.eye(ops.dim)
    K = fourth_moment + np.kron(Gam, Gam) + np.kron(Gam, S) + np.kron(S, Gam)
    J = np.kron(I, S) + np.kron(S, I) + np.kron(Gam, I) + np.kron(I, Gam)
    return K, J


def _positive_real(eigs: np.ndarray) -> np.ndarray:
    radius = np.max(np.abs(eigs)) if eigs.size else 0.0
    real = np.abs(eigs.imag) <= 1e-9 * max(radius, 1e-300)
    return eigs.real[real & (eigs.real > 0)]


def stability_bounds(ops: StackedOperators, fourth_moment: np.ndarray | None = None) -> StabilityBounds:
    """Mean bound ``(2 - gamma)/lambda_max(S_u)`` and the two mean-square bounds.

    ``fourth_moment`` is ``E[(U^T U) kron (U^T U)]``; the white Gaussian
    closed form is used when omitted.
    """
    if ops.dim > STABILITY_MAX_DIM:
        raise TheoryError(f"stability analysis limited to M*N <= {STABILITY_MAX_DIM}, got {ops.dim}")
    if fourth_moment is None:
        fourth_moment = gaussian_fourth_moment(np.diag(ops.S_u)[:: ops.taps], ops.taps)
    lam = float(np.max(np.linalg.eigvalsh(ops.S_u)))
    if not lam > 0:
        raise TheoryError("E[U^T U] must be positive definite")
    mean_bound = (2.0 - ops.gamma) / lam

    K, J = bound_matrices(ops, fourth_moment)
    try:
        JinvK = np.linalg.solve(J, K)
    except np.linalg.LinAlgError as exc:
        raise TheoryError("J is singular; check the input variances") from exc
    eig_jk = scipy.linalg.eigvals(JinvK)
    lam_jk = float(np.max(eig_jk.real))
    jk_bound = 1.0 / lam_jk if lam_jk > 0 else np.inf

    n2 = J.shape[0]
    H = np.block([[J / 2.0, -K / 2.0], [np.eye(n2), np.zeros((n2, n2))]])
    pos = _positive_real(scipy.linalg.eigvals(H))
    h_bound = 1.0 / float(pos.max()) if pos.size else np.inf
    return StabilityBounds(mean_bound, jk_bound, h_bound)


def is_stable(ops: StackedOperators, fourth_moment: np.ndarray | None = None) -> bool:
    """Whether the configured step size lies strictly below the combined bound."""
    return ops.mu < stability_bounds(ops, fourth_moment).combined
