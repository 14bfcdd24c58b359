"""Diffusion LMS family: plain, leaky, zero-attracting and reweighted, ATC and CTA.

One update covers every combination. With step size ``mu``, leak ``gamma``,
attractor strength ``rho`` and attractor ``g``:

ATC::

    phi_k = (1 - mu*gamma) w_k + mu u_k^T (d_k - u_k w_k) - rho g(w_k)
    w_k   = sum_l a_{l,k} phi_l

CTA::

    phi_k = sum_l a_{l,k} w_l
    w_k   = (1 - mu*gamma) phi_k + mu u_k^T (d_k - u_k phi_k) - rho g(phi_k)

``g`` is ``sign(w)`` (ZA), ``sign(w) / (1 + eps|w|)`` (RZA) or zero. The RZA
pair ``(rho, eps)`` relates to the log-sum penalty weights ``(rho', eps')``
through ``rho = mu*rho'/eps'`` and ``eps = 1/eps'``; see
:meth:`HyperParams.from_log_sum_penalty`.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .network import CombinationMatrix
from .signal import SignalProfile, SystemSchedule, generate_trial_data


class DivergenceError(FloatingPointError):
    """Raised when a network state contains non-finite weights."""


class Strategy(str, enum.Enum):
    ATC = "atc"
    CTA = "cta"


class Attractor(str, enum.Enum):
    NONE = "none"
    ZA = "za"
    RZA = "rza"


_KERNEL_CODE = {Attractor.NONE: kernels.ATTRACTOR_NONE, Attractor.ZA: kernels.ATTRACTOR_ZA, Attractor.RZA: kernels.ATTRACTOR_RZA}


@dataclass(frozen=True)
class HyperParams:
    step_size: float
    leak: float = 0.0
    attractor_strength: float = 0.0
    reweight_scale: float = 1.0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.leak < 0 or self.attractor_strength < 0:
            raise ValueError("leak and attractor_strength must be >= 0")
        if not self.reweight_scale > 0:
            raise ValueError(f"reweight_scale must be > 0, got {self.reweight_scale}")

    @classmethod
    def from_log_sum_penalty(cls, step_size: float, leak: float, rho_prime: float, eps_prime: float) -> "HyperParams":
        """Map the log-sum penalty weights ``(rho', eps')`` onto ``(rho, eps)``."""
        return cls(step_size, leak, step_size * rho_prime / eps_prime, 1.0 / eps_prime)


@dataclass(frozen=True)
class AlgorithmVariant:
    strategy: Strategy
    attractor: Attractor
    params: HyperParams

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "attractor", Attractor(self.attractor))

    @property
    def family(self) -> str:
        leaky = self.params.leak > 0
        if self.attractor is Attractor.NONE:
            return "leaky-DLMS" if leaky else "DLMS"
        base = self.attractor.value.upper()
        return f"L{base}-DLMS" if leaky else f"{base}-DLMS"

    @property
    def name(self) -> str:
        return f"{self.strategy.value.upper()}-{self.family}"

    def to_dict(self) -> dict:
        p = self.params
        return {
            "strategy": self.strategy.value,
            "attractor": self.attractor.value,
            "mu": p.step_size,
            "gamma": p.leak,
            "rho": p.attractor_strength,
            "eps": p.reweight_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlgorithmVariant":
        return cls(
            Strategy(d.get("strategy", "atc")),
            Attractor(d.get("attractor", "none")),
            HyperParams(float(d["mu"]), float(d.get("gamma", 0.0)), float(d.get("rho", 0.0)), float(d.get("eps", 1.0))),
        )

    def kernel_args(self) -> dict:
        p = self.params
        return dict(
            mu=p.step_size,
            gamma=p.leak,
            rho=p.attractor_strength,
            eps=p.reweight_scale,
            attractor=_KERNEL_CODE[self.attractor],
            cta=self.strategy is Strategy.CTA,
        )


def atc(attractor="none", mu=0.01, gamma=0.0, rho=0.0, eps=1.0) -> AlgorithmVariant:
    return AlgorithmVariant(Strategy.ATC, Attractor(attractor), HyperParams(mu, gamma, rho, eps))


def cta(attractor="none", mu=0.01, gamma=0.0, rho=0.0, eps=1.0) -> AlgorithmVariant:
    return AlgorithmVariant(Strategy.CTA, Attractor(attractor), HyperParams(mu, gamma, rho, eps))


@dataclass(frozen=True, eq=False)
class NetworkState:
    weights: np.ndarray  # (N, M)
    intermediates: np.ndarray  # (N, M)
    iteration: int = 0

    @classmethod
    def zeros(cls, nodes: int, taps: int) -> "NetworkState":
        return cls(np.zeros((nodes, taps)), np.zeros((nodes, taps)), 0)


def zero_attractor(w, kind: Attractor | str, eps: float = 1.0) -> np.ndarray:
    """Elementwise ``sign(w)`` (ZA) or ``sign(w) / (1 + eps|w|)`` (RZA); ``sign(0) = 0``."""
    kind = Attractor(kind)
    w = np.asarray(w, dtype=float)
    if kind is Attractor.NONE:
        return np.zeros_like(w)
    if kind is Attractor.ZA:
        return np.sign(w)
    return np.sign(w) / (1.0 + eps * np.abs(w))


def _adapt(base, u, d, variant):
    p = variant.params
    e = d - np.einsum("km,km->k", u, base)
    out = (1.0 - p.step_size * p.leak) * base + (p.step_size * e)[:, None] * u
    if variant.attractor is not Attractor.NONE and p.attractor_strength:
        out = out - p.attractor_strength * zero_attractor(base, variant.attractor, p.reweight_scale)
    return out


def _combine(src, combiner):
    return combiner.entries.T @ src


def _check(state, combiner, regressors, desired):
    n, m = state.weights.shape
    if combiner.node_count != n or regressors.shape != (n, m) or desired.shape != (n,):
        raise ValueError(
            f"dimension mismatch: state {state.weights.shape}, combiner {combiner.entries.shape}, "
            f"regressors {regressors.shape}, desired {desired.shape}"
        )
    if not np.all(np.isfinite(state.weights)):
        raise DivergenceError(f"non-finite weights at iteration {state.iteration}")


def atc_step(state: NetworkState, combiner: CombinationMatrix, variant: AlgorithmVariant, regressors, desired) -> NetworkState:
    """Adapt every node from the pre-step weights, then combine the intermediates."""
    u = np.asarray(regressors, dtype=float)
    d = np.asarray(desired, dtype=float)
    _check(state, combiner, u, d)
    phi = _adapt(state.weights, u, d, variant)
    return NetworkState(_combine(phi, combiner), phi, state.iteration + 1)


def cta_step(state: NetworkState, combiner: CombinationMatrix, variant: AlgorithmVariant, regressors, desired) -> NetworkState:
    """Combine the pre-step weights, then adapt from the combined estimate."""
    u = np.asarray(regressors, dtype=float)
    d = np.asarray(desired, dtype=float)
    _check(state, combiner, u, d)
    phi = _combine(state.weights, combiner)
    return NetworkState(_adapt(phi, u, d, variant), phi, state.iteration + 1)


def step(state, combiner, variant, regressors, desired) -> NetworkState:
    fn = atc_step if variant.strategy is Strategy.ATC else cta_step
    return fn(state, combiner, variant, regressors, desired)


def combiner_columns(combiner: CombinationMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-compressed nonzeros of ``combiner``: ``(indptr, indices, weights)``."""
    a = combiner.entries
    indptr = [0]
    indices, weights = [], []
    for k in range(a.shape[1]):
        nz = np.flatnonzero(a[:, k])
        if nz.size == 0:
            raise ValueError(f"column {k} of the combination matrix is empty")
        indices.extend(nz.tolist())
        weights.extend(a[nz, k].tolist())
        indptr.append(len(indices))
    return np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64), np.asarray(weights)


def simulate(
    variant: AlgorithmVariant,
    combiner: CombinationMatrix,
    schedule: SystemSchedule,
    x_pad: np.ndarray,
    d: np.ndarray,
    history: np.ndarray | None = None,
    backend: str | None = None,
):
    """Run ``variant`` on a batch of trial data; see ``_kernels_py.simulate_batch``."""
    kernel = kernels.get_kernel(backend)
    indptr, indices, weights = combiner_columns(combiner)
    stage_of = schedule.stage_of(d.shape[-1])
    return kernel(x_pad, d, indptr, indices, weights, np.ascontiguousarray(schedule.vectors), stage_of,
                  history=history, **variant.kernel_args())


@dataclass(frozen=True)
class TrialSpec:
    combiner: CombinationMatrix
    profile: SignalProfile
    variant: AlgorithmVariant
    schedule: SystemSchedule
    iterations: int
    seed: int
    trial: int = 0
    record_history: bool = False


@dataclass
class TrialResult:
    msd: np.ndarray
    diverged: bool = False
    diverged_at: int | None = None
    history: np.ndarray | None = field(default=None, repr=False)


def run_trial(spec: TrialSpec, backend: str | None = None) -> TrialResult:
    """Simulate one trial and record the network MSD ``(1/N) sum_k |w_o - w_k|^2``.

    A divergent run returns the trace truncated at the first non-finite value.
    """
    if spec.combiner.node_count != spec.profile.node_count:
        raise ValueError("combiner and signal profile disagree on the node count")
    data = generate_trial_data(spec.profile, spec.schedule, spec.iterations, spec.seed, spec.trial)
    n, m = spec.profile.node_count, spec.schedule.taps
    hist = np.zeros((1, spec.iterations, n, m)) if spec.record_history else None
    msd, _, div = simulate(spec.variant, spec.combiner, spec.schedule, data.x_pad[None], data.d[None], hist, backend)
    at = int(div[0])
    if at >= 0:
        return TrialResult(msd[0, :at].copy(), True, at, None if hist is None else hist[0, :at])
    return TrialResult(msd[0], False, None, None if hist is None else hist[0])


def write_weight_history(history: np.ndarray, path: str | Path) -> None:
    """Dump a ``(T, N, M)`` weight history as ``iteration,node,tap_index,weight_value`` rows."""
    t, n, m = history.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "node", "tap_index", "weight_value"])
        for i in range(t):
            for k in range(n):
                for j in range(m):
                    w.writerow([i, k + 1, j + 1, repr(float(history[i, k, j]))])
