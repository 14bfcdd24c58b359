"""Monte Carlo harness, scenario definitions and theory-vs-simulation reports.

Every trial regenerates its input and noise streams from
``substream(master_seed, trial, node, role)`` and runs all variants of the
spec on the same data, so variant comparisons are paired. Trial traces are
summed in trial order regardless of how chunks were scheduled, which keeps
the averaged trace independent of ``jobs``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import algorithms as alg
from .algorithms import AlgorithmVariant, Strategy
from .network import (
    CombinationMatrix,
    Topology,
    build_metropolis_combiner,
    build_uniform_combiner,
    random_geometric_topology,
)
from .signal import (
    ROLE_SCENARIO,
    SignalProfile,
    SystemSchedule,
    generate_trial_data,
    sample_profile,
    substream,
)

DB_FLOOR = -320.0
DIVERGENCE_THRESHOLD = 1e6
DEFAULT_TAIL_FRACTION = 0.1

COMBINERS = {"uniform": build_uniform_combiner, "metropolis": build_metropolis_combiner}


def to_db(msd) -> np.ndarray:
    """``10 log10(msd)`` with exact zeros mapped to ``DB_FLOOR``; NaN passes through."""
    msd = np.asarray(msd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10.0 * np.log10(msd)
    out = np.where(msd == 0.0, DB_FLOOR, out)
    return np.where(np.isnan(out), out, np.maximum(out, DB_FLOOR))


# ---------------------------------------------------------------------------
# specs and scenarios


@dataclass(frozen=True)
class SparsityScenario:
    """Piecewise true system whose active positions (1-indexed) hold 1."""

    taps: int
    starts: tuple[int, ...]
    positions: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        starts = tuple(int(s) for s in self.starts)
        pos = tuple(tuple(sorted(int(p) for p in grp)) for grp in self.positions)
        if not starts or starts[0] != 0:
            raise ValueError("first stage must start at iteration 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("stage starts must be strictly increasing")
        if len(pos) != len(starts):
            raise ValueError(f"{len(starts)} starts but {len(pos)} position sets")
        for grp in pos:
            if any(not 1 <= p <= self.taps for p in grp):
                raise ValueError(f"active positions must lie in [1, {self.taps}], got {grp}")
            if len(set(grp)) != len(grp):
                raise ValueError(f"duplicate active positions in {grp}")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def seeded(cls, taps: int, starts: Sequence[int], counts: Sequence[int], seed: int, nested: bool = True) -> "SparsityScenario":
        """Draw ``counts[s]`` active positions per stage from the scenario substream.

        With ``nested`` every stage keeps the previous stage's positions and
        adds new ones; otherwise each stage draws afresh.
        """
        if len(starts) != len(counts):
            raise ValueError("starts and counts differ in length")
        if any(not 0 <= c <= taps for c in counts):
            raise ValueError(f"active counts must lie in [0, {taps}]")
        if nested and any(b < a for a, b in zip(counts, counts[1:])):
            raise ValueError("nested stages need non-decreasing counts")
        rng = substream(seed, 0, 0, ROLE_SCENARIO)
        if nested:
            order = rng.permutation(taps) + 1
            groups = [order[:c] for c in counts]
        else:
            groups = [rng.choice(taps, size=c, replace=False) + 1 for c in counts]
        return cls(taps, tuple(starts), tuple(tuple(g.tolist()) for g in groups))

    def schedule(self) -> SystemSchedule:
        vecs = np.zeros((len(self.starts), self.taps))
        for s, grp in enumerate(self.positions):
            vecs[s, np.asarray(grp, dtype=int) - 1] = 1.0
        return SystemSchedule(self.starts, vecs)

    def sparsity_ratios(self) -> list[float]:
        return [len(g) / self.taps for g in self.positions]


def variant_labels(variants: Sequence[AlgorithmVariant]) -> list[str]:
    """Column labels: the variant name, qualified by parameters when names collide."""
    names = [v.name for v in variants]
    out = []
    for v, n in zip(variants, names):
        if names.count(n) == 1:
            out.append(n)
            continue
        p = v.params
        parts = [f"mu={p.step_size:g}", f"gamma={p.leak:g}"]
        if v.attractor is not alg.Attractor.NONE:
            parts.append(f"rho={p.attractor_strength:g}")
            if v.attractor is alg.Attractor.RZA:
                parts.append(f"eps={p.reweight_scale:g}")
        out.append(f"{n}({' '.join(parts)})")
    if len(set(out)) != len(out):
        raise ValueError("duplicate variants in spec")
    return out


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """Everything a Monte Carlo run depends on."""

    topology: Topology
    profile: SignalProfile
    schedule: SystemSchedule
    variants: tuple[AlgorithmVariant, ...]
    iterations: int
    trials: int
    master_seed: int
    combiner_rule: str = "uniform"
    scenario: SparsityScenario | None = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        if self.iterations < 1 or self.trials < 1:
            raise ValueError("iterations and trials must be positive")
        if not self.variants:
            raise ValueError("spec needs at least one variant")
        if self.combiner_rule not in COMBINERS:
            raise ValueError(f"unknown combiner rule {self.combiner_rule!r}; choose from {sorted(COMBINERS)}")
        if self.topology.node_count != self.profile.node_count:
            raise ValueError("topology and signal profile disagree on the node count")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        variant_labels(self.variants)

    @property
    def combiner(self) -> CombinationMatrix:
        return COMBINERS[self.combiner_rule](self.topology)

    @property
    def taps(self) -> int:
        return self.schedule.taps

    @property
    def labels(self) -> list[str]:
        return variant_labels(self.variants)

    def replace(self, **changes) -> "ExperimentSpec":
        fields_ = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields_.update(changes)
        return ExperimentSpec(**fields_)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes": self.topology.node_count,
            "edges": [[l + 1, k + 1] for l, k in self.topology.edges()],
            "combiner": self.combiner_rule,
            "profile": self.profile.to_dict(),
            "taps": self.taps,
            "schedule": {"starts": list(self.schedule.starts), "vectors": self.schedule.vectors.tolist()},
            "variants": [v.to_dict() for v in self.variants],
            "iterations": self.iterations,
            "trials": self.trials,
            "master_seed": int(self.master_seed),
        }


FIVE_NODE_EDGES = ((1, 2), (2, 3), (3, 4), (4, 5), (1, 3), (2, 4))
SCENARIO_43_WO = (0.0, 0.0, 1.0, 0.0, 0.0)


def five_node_topology() -> Topology:
    """Connected 5-node graph used for the theory validation runs."""
    return Topology.from_edges(5, [(l - 1, k - 1) for l, k in FIVE_NODE_EDGES])


# 20-node runs: unit-scale inputs and noise within 0-10 dB below them (low SNR)
WIDE_INPUT_RANGE = (0.5, 1.5)
WIDE_NOISE_RANGE = (0.1, 1.0)
WIDE_RADIUS = 0.35


def connected_geometric_topology(n: int, radius: float, seed: int, max_attempts: int = 1000) -> Topology:
    """First connected draw of ``random_geometric_topology`` over seeds ``seed, seed + 1, ...``."""
    for j in range(max_attempts):
        topo = random_geometric_topology(n, radius, seed + j)
        if topo.is_connected():
            return topo
    raise ValueError(f"no connected {n}-node graph with radius {radius} in {max_attempts} draws")


def scenario_41(seed: int = 41, colored: bool = False, nested: bool = True, trials: int = 100) -> ExperimentSpec:
    """20-node time-varying sparsity run: 1, 16 then 32 active taps of 64."""
    topo = connected_geometric_topology(20, WIDE_RADIUS, seed)
    profile = sample_profile(20, WIDE_INPUT_RANGE, WIDE_NOISE_RANGE, seed, 0.7 if colored else None)
    scen = SparsityScenario.seeded(64, (0, 3000, 6000), (1, 16, 32), seed, nested)
    variants = []
    for make in (alg.atc, alg.cta):
        variants += [make("none", 0.01, 0.002), make("za", 0.01, 0.002, 0.0005), make("rza", 0.01, 0.002, 0.0005, 1.0)]
    return ExperimentSpec(topo, profile, scen.schedule(), tuple(variants), 9000, trials, seed,
                          scenario=scen, name="4.1-colored" if colored else "4.1-white")


def load_fir_fixture() -> np.ndarray:
    """Frozen synthetic 128-tap impulse response (see ``data/fir128.txt``)."""
    text = resources.files("sparsediff").joinpath("data/fir128.txt").read_text()
    return np.loadtxt(io.StringIO(text), comments="#")


def scenario_42(seed: int = 42, trials: int = 100, switch: int = 10000, iterations: int = 20000) -> ExperimentSpec:
    """Colored-input identification of a 128-tap path after a one-tap sparse stage.

    The second-stage path is the frozen synthetic fixture, a stand-in for an
    unpublished acoustic response.
    """
    topo = connected_geometric_topology(20, WIDE_RADIUS, seed)
    profile = sample_profile(20, WIDE_INPUT_RANGE, WIDE_NOISE_RANGE, seed, 0.7)
    first = np.zeros(128)
    first[0] = 1.0
    schedule = SystemSchedule((0, switch), np.vstack([first, load_fir_fixture()]))
    variants = []
    for make in (alg.atc, alg.cta):
        variants += [
            make("none", 0.01),
            make("none", 0.01, 0.002),
            make("za", 0.01, 0.0, 0.0005),
            make("rza", 0.01, 0.0, 0.0005, 1.0),
            make("za", 0.01, 0.002, 0.0005),
            make("rza", 0.01, 0.002, 0.0005, 1.0),
        ]
    return ExperimentSpec(topo, profile, schedule, tuple(variants), iterations, trials, seed, name="4.2")


# parameter grids for the 5-node validation figures
SCENARIO_43_SWEEPS = {
    "lza-mu": ("za", "mu", (0.01, 0.02, 0.03), dict(gamma=0.001, rho=0.005)),
    "lza-gamma": ("za", "gamma", (0.001, 0.01, 0.1), dict(mu=0.03, rho=0.001)),
    "lza-rho": ("za", "rho", (0.001, 0.002, 0.003), dict(mu=0.03, gamma=0.001)),
    "lrza-mu": ("rza", "mu", (0.004, 0.008, 0.012), dict(gamma=0.001, rho=0.005, eps=1.0)),
    "lrza-gamma": ("rza", "gamma", (0.001, 0.01, 0.1), dict(mu=0.008, rho=0.001, eps=1.0)),
    "lrza-rho": ("rza", "rho", (0.001, 0.003, 0.005), dict(mu=0.008, gamma=0.001, eps=1.0)),
}
SCENARIO_43_LZA = dict(mu=0.03, gamma=0.001, rho=0.001)
SCENARIO_43_LRZA = dict(mu=0.008, gamma=0.001, rho=0.001, eps=1.0)


def scenario_43(seed: int = 43, sweep: str | None = None, trials: int = 500, iterations: int = 3000) -> ExperimentSpec:
    """5-node, 5-tap theory validation setup with ``w_o = [0, 0, 1, 0, 0]``.

    ``sweep`` selects one of ``SCENARIO_43_SWEEPS``; without it the result holds
    the two anchor variants, ATC-LZA and ATC-LRZA.
    """
    profile = sample_profile(5, (0.5, 1.5), (0.01, 0.1), seed)
    schedule = SystemSchedule.fixed(SCENARIO_43_WO)
    if sweep is None:
        variants = (alg.atc("za", **SCENARIO_43_LZA), alg.atc("rza", **SCENARIO_43_LRZA))
        name = "4.3"
    else:
        if sweep not in SCENARIO_43_SWEEPS:
            raise ValueError(f"unknown sweep {sweep!r}; choose from {sorted(SCENARIO_43_SWEEPS)}")
        kind, key, values, fixed = SCENARIO_43_SWEEPS[sweep]
        variants = tuple(alg.atc(kind, **{**fixed, key: v}) for v in values)
        name = f"4.3-{sweep}"
    return ExperimentSpec(five_node_topology(), profile, schedule, variants, iterations, trials, seed, name=name)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MSDReport:
    """Trial-averaged network MSD per variant plus optional theory traces.

    ``msd`` holds linear averages over the trials that stayed bounded;
    ``diverged`` counts the trials that did not. A variant whose trials all
    diverged has an all-NaN trace.
    """

    labels: list[str]
    msd: np.ndarray  # (V, T)
    diverged: np.ndarray  # (V,)
    trials: int
    theory: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return self.msd.shape[1]

    @property
    def msd_db(self) -> np.ndarray:
        return to_db(self.msd)

    def trace_db(self, label: str) -> np.ndarray:
        return self.msd_db[self.labels.index(label)]

    def flags(self) -> dict[str, bool]:
        return {lab: bool(n) for lab, n in zip(self.labels, self.diverged)}

    def all_diverged(self) -> list[str]:
        return [lab for lab, n in zip(self.labels, self.diverged) if n == self.trials]

    def steady_state(self, label: str, window: tuple[int, int] | None = None,
                     tail_fraction: float = DEFAULT_TAIL_FRACTION) -> float:
        """Mean dB over ``window`` (0-based, half-open) or the final ``tail_fraction``."""
        tr = self.trace_db(label)
        if window is None:
            n = max(1, int(round(tail_fraction * tr.size)))
            window = (tr.size - n, tr.size)
        lo, hi = window
        if not 0 <= lo < hi <= tr.size:
            raise ValueError(f"window {window} outside [0, {tr.size}]")
        return float(np.mean(tr[lo:hi]))

    # -- CSV -----------------------------------------------------------------

    def header(self) -> list[str]:
        cols = ["iteration"] + [f"msd_db[{lab}]" for lab in self.labels]
        cols += [f"theory_msd_db[{lab}]" for lab in self.theory]
        return cols

    def write_csv(self, path_or_buf, timestamp: bool = True) -> None:
        meta = dict(self.metadata)
        meta.setdefault("trials", self.trials)
        meta["diverged_trials"] = {lab: int(n) for lab, n in zip(self.labels, self.diverged)}
        own = isinstance(path_or_buf, (str, Path))
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            fh.write("# sparsediff msd report\n")
            if timestamp:
                fh.write(f"# created: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
            for key in sorted(meta):
                fh.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            db = self.msd_db
            th = [to_db(t) for t in self.theory.values()]
            for i in range(self.iterations):
                w.writerow([i + 1] + [_fmt(x) for x in db[:, i]] + [_fmt(t[i]) for t in th])
        finally:
            if own:
                fh.close()

    @classmethod
    def read_csv(cls, path) -> "MSDReport":
        table = read_csv_table(path)
        labels, theory, vals = [], {}, []
        for name, col in table.columns.items():
            if name.startswith("msd_db[") and name.endswith("]"):
                labels.append(name[7:-1])
                vals.append(col)
            elif name.startswith("theory_msd_db[") and name.endswith("]"):
                theory[name[14:-1]] = 10.0 ** (col / 10.0)
        if not labels:
            raise ValueError(f"{path}: no msd_db[...] columns")
        meta = table.metadata
        div = meta.pop("diverged_trials", {})
        trials = int(meta.get("trials", 0))
        msd = 10.0 ** (np.vstack(vals) / 10.0)
        return cls(labels, msd, np.array([div.get(lab, 0) for lab in labels]), trials, theory, meta)


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else repr(float(x))


@dataclass
class CsvTable:
    columns: dict[str, np.ndarray]
    metadata: dict


def read_csv_table(path) -> CsvTable:
    """Parse a CSV with ``# key: json`` comment metadata into float columns."""
    meta: dict = {}
    body = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition(": ")
                if sep:
                    try:
                        meta[key] = json.loads(value)
                    except json.JSONDecodeError:
                        meta[key] = value
            elif line.strip():
                body.append(line)
    if not body:
        raise ValueError(f"{path}: no CSV header or rows")
    rows = list(csv.reader(body))
    head, data = rows[0], rows[1:]
    if not data:
        raise ValueError(f"{path}: CSV has a header but no rows")
    if head[0] != "iteration":
        raise ValueError(f"{path}: first column must be 'iteration', got {head[0]!r}")
    if any(len(r) != len(head) for r in data):
        raise ValueError(f"{path}: ragged rows")
    arr = np.array(data, dtype=float)
    return CsvTable({h: arr[:, j] for j, h in enumerate(head)}, meta)


def _default_chunk(spec: ExperimentSpec) -> int:
    # keep one chunk's input and desired arrays near 64 MB
    per_trial = 16 * spec.profile.node_count * (spec.iterations + spec.taps)
    return max(1, min(spec.trials, (64 << 20) // per_trial))


def _run_chunk(spec: ExperimentSpec, trials: range, backend: str | None):
    data = [generate_trial_data(spec.profile, spec.schedule, spec.iterations, spec.master_seed, t) for t in trials]
    x = np.stack([td.x_pad for td in data])
    d = np.stack([td.d for td in data])
    combiner = spec.combiner
    out = []
    for v in spec.variants:
        msd, _, _ = alg.simulate(v, combiner, spec.schedule, x, d, backend=backend)
        out.append(msd)
    return np.stack(out)  # (V, B, T)


def run_monte_carlo(
    spec: ExperimentSpec,
    jobs: int = 1,
    chunk: int | None = None,
    backend: str | None = None,
    divergence_threshold: float = DIVERGENCE_THRESHOLD,
    progress: Callable[[int, int], None] | None = None,
) -> MSDReport:
    """Average the network MSD of every variant over ``spec.trials`` paired trials.

    A trial counts as divergent once its MSD is non-finite or exceeds
    ``divergence_threshold``; divergent trials are excluded from the average.
    """
    chunk = chunk or _default_chunk(spec)
    ranges = [range(s, min(s + chunk, spec.trials)) for s in range(0, spec.trials, chunk)]
    V, T = len(spec.variants), spec.iterations
    acc = np.zeros((V, T))
    kept = np.zeros(V, dtype=np.int64)
    done = 0

    def reduce(block):
        nonlocal done
        bad = ~np.all(np.isfinite(block) & (block <= divergence_threshold), axis=2)  # (V, B)
        for b in range(block.shape[1]):  # trial order
            for v in range(V):
                if not bad[v, b]:
                    acc[v] += block[v, b]
                    kept[v] += 1
        done += block.shape[1]
        if progress:
            progress(done, spec.trials)

    if jobs <= 1 or len(ranges) == 1:
        for r in ranges:
            reduce(_run_chunk(spec, r, backend))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            # map preserves submission order, so the reduction order is fixed
            for block in pool.map(lambda r: _run_chunk(spec, r, backend), ranges):
                reduce(block)

    with np.errstate(invalid="ignore", divide="ignore"):
        msd = np.where(kept[:, None] > 0, acc / np.maximum(kept, 1)[:, None], np.nan)
    meta = {"spec": spec.to_dict(), "master_seed": int(spec.master_seed),
            "seed_derivation": "SeedSequence(master_seed, spawn_key=(trial, node, role)); roles input=0 noise=1 scenario=2"}
    return MSDReport(spec.labels, msd, spec.trials - kept, spec.trials, {}, meta)


def trial_digests(spec: ExperimentSpec, trial: int) -> str:
    """Checksum of the (u, d) streams a trial feeds to every variant."""
    return generate_trial_data(spec.profile, spec.schedule, spec.iterations, spec.master_seed, trial).digest()


# ---------------------------------------------------------------------------
# theory comparison and empirical stability


@dataclass
class TheoryComparison:
    label: str
    mc_db: np.ndarray
    theory_db: np.ndarray
    burn_in: int
    tail: int
    steady_state_db: float | None = None

    @property
    def gap_db(self) -> np.ndarray:
        return self.theory_db - self.mc_db

    @property
    def max_gap_after_burn_in(self) -> float:
        return float(np.max(np.abs(self.gap_db[self.burn_in:])))

    @property
    def tail_gap(self) -> float:
        return float(np.mean(self.theory_db[-self.tail:]) - np.mean(self.mc_db[-self.tail:]))

    @property
    def mc_tail_db(self) -> float:
        return float(np.mean(self.mc_db[-self.tail:]))

    @property
    def steady_state_gap(self) -> float | None:
        if self.steady_state_db is None:
            return None
        return self.steady_state_db - self.mc_tail_db


def compare_theory_simulation(spec: ExperimentSpec, variant: int | AlgorithmVariant = 0, burn_in: int = 100,
                              tail: int = 500, jobs: int = 1, report: MSDReport | None = None) -> TheoryComparison:
    """Run (or reuse) the Monte Carlo average and set it against the moment theory."""
    from .theory import StackedOperators, TheoryError, steady_state_msd, transient
    from .theory.steady_state import STEADY_STATE_MAX_DIM

    v = spec.variants[variant] if isinstance(variant, int) else variant
    if v.strategy is not Strategy.ATC:
        raise TheoryError(f"{v.name}: moment theory covers ATC variants only")
    if len(spec.schedule.starts) != 1:
        raise TheoryError("moment theory assumes a fixed true system")
    ops = StackedOperators.build(spec.combiner, spec.profile, v, spec.taps)
    w_o = spec.schedule.vectors[0]
    th = transient(ops, w_o, spec.iterations)
    if report is None or v not in spec.variants:
        sub = spec.replace(variants=(v,))
        report = run_monte_carlo(sub, jobs=jobs)
        label = report.labels[0]
    else:
        label = report.labels[list(spec.variants).index(v)]
    ss = steady_state_msd(ops, w_o).msd_db if ops.dim <= STEADY_STATE_MAX_DIM else None
    return TheoryComparison(label, report.trace_db(label), th.msd_db, burn_in, min(tail, spec.iterations), ss)


def trials_diverge(spec: ExperimentSpec, variant: AlgorithmVariant, threshold: float = DIVERGENCE_THRESHOLD,
                   backend: str | None = None) -> np.ndarray:
    """Per-trial divergence flags (MSD above ``threshold`` or non-finite at any point)."""
    block = _run_chunk(spec.replace(variants=(variant,)), range(spec.trials), backend)[0]
    return ~np.all(np.isfinite(block) & (block <= threshold), axis=1)


@dataclass(frozen=True)
class EmpiricalThreshold:
    stable: float  # largest step size seen converging in every trial
    unstable: float  # smallest step size seen diverging in some trial

    @property
    def estimate(self) -> float:
        return math.sqrt(self.stable * self.unstable)


def empirical_threshold(spec: ExperimentSpec, variant: AlgorithmVariant, lo: float, hi: float, steps: int = 10,
                        threshold: float = DIVERGENCE_THRESHOLD) -> EmpiricalThreshold:
    """Geometric bisection on the step size between a converging ``lo`` and a diverging ``hi``.

    A step size is classified unstable when any trial of ``spec`` diverges.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")

    def unstable(mu):
        p = variant.params
        v = AlgorithmVariant(variant.strategy, variant.attractor,
                             alg.HyperParams(mu, p.leak, p.attractor_strength, p.reweight_scale))
        return bool(np.any(trials_diverge(spec, v, threshold)))

    if unstable(lo):
        raise ValueError(f"lower step size {lo:g} already diverges")
    while not unstable(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise ValueError("no divergence found below mu = 1e6")
    for _ in range(steps):
        mid = math.sqrt(lo * hi)
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return EmpiricalThreshold(lo, hi)


def write_theory_csv(path_or_buf, msd: np.ndarray, steady_state_db: float | None = None,
                     mean_err: np.ndarray | None = None, nodes: int | None = None,
                     metadata: dict | None = None, timestamp: bool = True) -> None:
    """Theory trace as ``iteration, msd_db[, steady_state_msd_db][, mean_err[k,m]...]``.

    ``mean_err`` is the ``(T, M*N)`` record of ``E[w_o - w]``; columns are
    labeled with 1-indexed node and tap.
    """
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write("# sparsediff theory trace\n")
        if timestamp:
            fh.write(f"# created: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        for key in sorted(metadata or {}):
            fh.write(f"# {key}: {json.dumps(metadata[key], sort_keys=True)}\n")
        head = ["iteration", "msd_db"]
        if steady_state_db is not None:
            head.append("steady_state_msd_db")
        if mean_err is not None:
            dim = mean_err.shape[1]
            n = nodes or 1
            m = dim // n
            head += [f"mean_err[{j // m + 1},{j % m + 1}]" for j in range(dim)]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        db = to_db(msd)
        for i in range(db.size):
            row = [i + 1, _fmt(db[i])]
            if steady_state_db is not None:
                row.append(_fmt(steady_state_db))
            if mean_err is not None:
                row += [_fmt(x) for x in mean_err[i]]
            w.writerow(row)
    finally:
        if own:
            fh.close()
