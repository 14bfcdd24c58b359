"""Regressors, noise and desired signals under the linear data model.

Colored inputs follow ``y(i) = x(i) + a * y(i-1)`` (the transfer function
``1 / (1 - a z^-1)``) with no renormalization, so a colored stream driven by
white variance ``s2`` has stationary variance ``s2 / (1 - a**2)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class SignalProfile:
    """Per-node input and noise variances plus optional AR(1) coloring.

    ``input_variances`` are the variances of the white Gaussian driving
    sequence; with ``ar_pole`` set they are the variances *before* coloring.
    """

    input_variances: tuple[float, ...]
    noise_variances: tuple[float, ...]
    ar_pole: float | None = None

    def __post_init__(self):
        iv = tuple(float(v) for v in self.input_variances)
        nv = tuple(float(v) for v in self.noise_variances)
        if len(iv) != len(nv):
            raise ValueError(f"{len(iv)} input variances but {len(nv)} noise variances")
        if not iv:
            raise ValueError("profile needs at least one node")
        if any(not v > 0 for v in iv):
            raise ValueError("input variances must be strictly positive")
        # zero noise is allowed for noise-free checks
        if any(not v >= 0 for v in nv):
            raise ValueError("noise variances must be non-negative")
        if self.ar_pole is not None and not -1 < self.ar_pole < 1:
            raise ValueError(f"AR(1) pole must lie in (-1, 1), got {self.ar_pole}")
        object.__setattr__(self, "input_variances", iv)
        object.__setattr__(self, "noise_variances", nv)

    @property
    def node_count(self) -> int:
        return len(self.input_variances)

    @property
    def colored(self) -> bool:
        return self.ar_pole is not None

    def to_dict(self) -> dict:
        return {
            "input_variances": list(self.input_variances),
            "noise_variances": list(self.noise_variances),
            "ar_pole": self.ar_pole,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SignalProfile":
        return cls(tuple(d["input_variances"]), tuple(d["noise_variances"]), d.get("ar_pole"))

    def with_coloring(self, ar_pole: float | None) -> "SignalProfile":
        return SignalProfile(self.input_variances, self.noise_variances, ar_pole)


def sample_profile(
    n: int,
    input_range: Sequence[float],
    noise_range: Sequence[float],
    seed: int,
    ar_pole: float | None = None,
) -> SignalProfile:
    """Draw per-node variances uniformly from the given ranges."""
    for name, (lo, hi) in (("input_range", input_range), ("noise_range", noise_range)):
        if not 0 < lo <= hi:
            raise ValueError(f"{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    iv = rng.uniform(input_range[0], input_range[1], size=n)
    nv = rng.uniform(noise_range[0], noise_range[1], size=n)
    return SignalProfile(tuple(iv.tolist()), tuple(nv.tolist()), ar_pole)


class RegressorStream:
    """Tapped delay line producing ``u_i = [u(i), u(i-1), ..., u(i-M+1)]``."""

    def __init__(self, taps: int, variance: float, ar_pole: float | None = None):
        if taps < 1:
            raise ValueError("taps must be >= 1")
        if not variance > 0:
            raise ValueError("variance must be positive")
        self.taps = taps
        self.std = float(np.sqrt(variance))
        self.ar_pole = ar_pole
        self._line = np.zeros(taps)
        self._y = 0.0

    def next_regressor(self, rng: np.random.Generator) -> np.ndarray:
        x = self.std * rng.standard_normal()
        if self.ar_pole is not None:
            x = x + self.ar_pole * self._y
            self._y = x
        self._line[1:] = self._line[:-1]
        self._line[0] = x
        return self._line.copy()


def next_regressor(stream: RegressorStream, rng: np.random.Generator) -> np.ndarray:
    return stream.next_regressor(rng)


def input_sequence(rng: np.random.Generator, length: int, variance: float, ar_pole: float | None = None) -> np.ndarray:
    """Scalar input sequence ``u(0..length-1)``; same draws as :class:`RegressorStream`."""
    x = np.sqrt(variance) * rng.standard_normal(length)
    if ar_pole is not None:
        x = lfilter([1.0], [1.0, -ar_pole], x)
    return x


def desired_sample(u: np.ndarray, w_o: np.ndarray, noise_std: float, rng: np.random.Generator) -> float:
    u = np.asarray(u, dtype=float)
    w_o = np.asarray(w_o, dtype=float)
    if u.shape != w_o.shape:
        raise ValueError(f"regressor length {u.shape} does not match system length {w_o.shape}")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    return float(u @ w_o + noise_std * rng.standard_normal())


def filter_output(x: np.ndarray, w_o: np.ndarray) -> np.ndarray:
    """Noise-free ``u_i . w_o`` for every ``i`` of the zero-initialized line over ``x``."""
    return lfilter(np.asarray(w_o, dtype=float), [1.0], x)


# Substream roles for seed derivation.
ROLE_INPUT, ROLE_NOISE, ROLE_SCENARIO = 0, 1, 2


def substream(master_seed: int, trial: int, node: int, role: int) -> np.random.Generator:
    """Independent PCG64 generator keyed by ``(master_seed, trial, node, role)``.

    The key is hashed by :class:`numpy.random.SeedSequence` (``spawn_key``),
    so every (trial, node, role) triple gets its own stream and trials can be
    generated in any order.
    """
    ss = np.random.SeedSequence(int(master_seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(trial), int(node), int(role)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class SystemSchedule:
    """Piecewise-constant true system: ``vectors[s]`` is active from ``starts[s]``."""

    starts: tuple[int, ...]
    vectors: np.ndarray

    def __post_init__(self):
        starts = tuple(int(s) for s in self.starts)
        vec = np.array(self.vectors, dtype=float, ndmin=2)
        if not starts or starts[0] != 0:
            raise ValueError("schedule must start at iteration 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("schedule starts must be strictly increasing")
        if vec.shape[0] != len(starts):
            raise ValueError(f"{len(starts)} starts but {vec.shape[0]} vectors")
        vec.setflags(write=False)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def fixed(cls, w_o) -> "SystemSchedule":
        return cls((0,), np.asarray(w_o, dtype=float)[np.newaxis, :])

    @property
    def taps(self) -> int:
        return self.vectors.shape[1]

    def stage_of(self, iterations: int) -> np.ndarray:
        return (np.searchsorted(np.asarray(self.starts), np.arange(iterations), side="right") - 1).astype(np.int64)

    def vector_at(self, i: int) -> np.ndarray:
        return self.vectors[int(np.searchsorted(self.starts, i, side="right")) - 1]


@dataclass
class TrialData:
    """Inputs and desired samples of one trial for every node."""

    x_pad: np.ndarray  # (N, T + M - 1), M - 1 leading zeros
    d: np.ndarray  # (N, T)

    def regressor(self, k: int, i: int) -> np.ndarray:
        m = self.x_pad.shape[1] - self.d.shape[1] + 1
        return self.x_pad[k, i:i + m][::-1].copy()

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x_pad).tobytes())
        h.update(np.ascontiguousarray(self.d).tobytes())
        return h.hexdigest()


def generate_trial_data(
    profile: SignalProfile,
    schedule: SystemSchedule,
    iterations: int,
    master_seed: int,
    trial: int,
) -> TrialData:
    """Draw the input and noise streams of one trial and form the desired samples."""
    n, m, t = profile.node_count, schedule.taps, iterations
    x_pad = np.zeros((n, t + m - 1))
    d = np.empty((n, t))
    bounds = list(schedule.starts) + [t]
    for k in range(n):
        x = input_sequence(substream(master_seed, trial, k, ROLE_INPUT), t, profile.input_variances[k], profile.ar_pole)
        v = np.sqrt(profile.noise_variances[k]) * substream(master_seed, trial, k, ROLE_NOISE).standard_normal(t)
        for s, vec in enumerate(schedule.vectors):
            lo, hi = bounds[s], min(bounds[s + 1], t)
            if lo >= hi:
                continue
            d[k, lo:hi] = filter_output(x[:hi], vec)[lo:hi]
        d[k] += v
        x_pad[k, m - 1:] = x
    return TrialData(x_pad, d)
