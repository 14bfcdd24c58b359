"""Run configuration: a YAML (or JSON) document mirroring :class:`ExperimentSpec`.

Resolution order is defaults, then the named preset, then the file, then
command-line overrides. Unknown keys are rejected with their dotted path.

Sections (all optional)::

    scenario: 4.3                # preset name, see PRESETS
    name: custom
    topology:   {kind: edges|geometric|file, nodes, edges, radius, seed, path, combiner}
    signals:    {input_range, noise_range, seed, input_variances, noise_variances, ar_pole}
    system:     {taps, w_o, stages, nested, seed}
    variants:   [{strategy, attractor, mu, gamma, rho, eps}, ...]
    trials, iterations, seed
    analysis:   {burn_in, tail_fraction, theory, fourth_order, mean_errors,
                 bisect, bisect_trials, bisect_iterations, bisect_steps,
                 divergence_threshold}
    output:     {dir, msd_csv, theory_csv, timestamp}

``system.stages`` entries are ``{start, positions}`` (1-indexed active taps),
``{start, count}`` (seeded positions), ``{start, vector}`` or
``{start, fixture: fir128}``. ``system.w_o`` is shorthand for one fixed stage.
"""

from __future__ import annotations

import copy
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import experiments as ex
from .algorithms import AlgorithmVariant
from .network import Topology
from .signal import SignalProfile, SystemSchedule, sample_profile

OUTPUT_DIR_ENV = "SPARSEDIFF_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


DEFAULTS: dict = {
    "scenario": None,
    "name": "custom",
    "topology": {
        "kind": "edges",
        "nodes": 5,
        "edges": [list(e) for e in ex.FIVE_NODE_EDGES],
        "radius": ex.WIDE_RADIUS,
        "seed": 41,
        "path": None,
        "combiner": "uniform",
    },
    "signals": {
        "input_range": [0.5, 1.5],
        "noise_range": [0.01, 0.1],
        "seed": 43,
        "input_variances": None,
        "noise_variances": None,
        "ar_pole": None,
    },
    "system": {
        "taps": None,
        "w_o": list(ex.SCENARIO_43_WO),
        "stages": None,
        "nested": True,
        "seed": None,
    },
    "variants": [{"strategy": "atc", "attractor": "za", **ex.SCENARIO_43_LZA}],
    "trials": 100,
    "iterations": 3000,
    "seed": 2024,
    "analysis": {
        "burn_in": 100,
        "tail_fraction": ex.DEFAULT_TAIL_FRACTION,
        "theory": False,
        "fourth_order": False,
        "mean_errors": False,
        "bisect": False,
        "bisect_trials": 20,
        "bisect_iterations": 5000,
        "bisect_steps": 10,
        "divergence_threshold": ex.DIVERGENCE_THRESHOLD,
    },
    "output": {
        "dir": None,
        "msd_csv": "msd.csv",
        "theory_csv": "theory.csv",
        "timestamp": True,
    },
}

VARIANT_KEYS = {"strategy", "attractor", "mu", "gamma", "rho", "eps"}
STAGE_KEYS = {"start", "positions", "count", "vector", "fixture"}
FIXTURES = {"fir128": ex.load_fir_fixture}


# ---------------------------------------------------------------------------
# presets


def _wide(seed: int, colored: bool) -> dict:
    return {
        "topology": {"kind": "geometric", "nodes": 20, "radius": ex.WIDE_RADIUS, "seed": seed, "edges": None},
        "signals": {"input_range": list(ex.WIDE_INPUT_RANGE), "noise_range": list(ex.WIDE_NOISE_RANGE),
                    "seed": seed, "ar_pole": 0.7 if colored else None},
    }


def _variants(spec: ex.ExperimentSpec) -> list[dict]:
    return [v.to_dict() for v in spec.variants]


def _preset_41(colored: bool) -> dict:
    spec = ex.scenario_41(colored=colored)
    cfg = _wide(41, colored)
    cfg.update({
        "name": spec.name,
        "system": {"taps": 64, "w_o": None, "nested": True, "seed": 41,
                   "stages": [{"start": 0, "count": 1}, {"start": 3000, "count": 16}, {"start": 6000, "count": 32}]},
        "variants": _variants(spec), "trials": spec.trials, "iterations": spec.iterations, "seed": 41,
    })
    return cfg


def _preset_42() -> dict:
    spec = ex.scenario_42()
    cfg = _wide(42, True)
    cfg.update({
        "name": spec.name,
        "system": {"taps": 128, "w_o": None, "seed": 42,
                   "stages": [{"start": 0, "positions": [1]}, {"start": spec.schedule.starts[1], "fixture": "fir128"}]},
        "variants": _variants(spec), "trials": spec.trials, "iterations": spec.iterations, "seed": 42,
    })
    return cfg


def _preset_43(sweep: str | None) -> dict:
    spec = ex.scenario_43(sweep=sweep)
    return {
        "name": spec.name,
        "signals": {"seed": 43},
        "variants": _variants(spec), "trials": spec.trials, "iterations": spec.iterations, "seed": 43,
        "analysis": {"theory": True},
    }


PRESETS = {
    "4.1-white": lambda: _preset_41(False),
    "4.1-colored": lambda: _preset_41(True),
    "4.2": _preset_42,
    "4.3": lambda: _preset_43(None),
    **{f"4.3-{k}": (lambda k=k: _preset_43(k)) for k in ex.SCENARIO_43_SWEEPS},
}


# ---------------------------------------------------------------------------
# merging and validation


def deep_merge(base: dict, over: dict, path: str = "") -> dict:
    """Recursive merge; dict values merge, everything else (lists included) replaces."""
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown key '{where}'")
        if isinstance(base[key], dict) and val is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = deep_merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def set_path(dotted: str, value) -> dict:
    """Return a sparse override document with ``value`` at ``dotted``."""
    keys = dotted.split(".")
    over: dict = {}
    cur = over
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value
    return over


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def parse_text(text: str, source: str = "<config>") -> dict:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return doc


def _int(value, where, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"'{where}' must be an integer, got {value!r}")
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(f"'{where}' = {value} outside [{lo}, {hi}]")
    return int(value)


def _num(value, where, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}' must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"'{where}' must be > 0, got {value}")
    if nonneg and value < 0:
        raise ConfigError(f"'{where}' must be >= 0, got {value}")
    return float(value)


def _range(value, where):
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigError(f"'{where}' must be [lo, hi]")
    lo, hi = (_num(v, where, positive=True) for v in value)
    if lo > hi:
        raise ConfigError(f"'{where}' needs lo <= hi")
    return lo, hi


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved configuration document."""

    doc: dict

    @classmethod
    def from_dict(cls, doc: dict | None = None, overrides: dict | None = None, scenario: str | None = None) -> "RunConfig":
        doc = doc or {}
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a mapping")
        name = scenario or doc.get("scenario") or (overrides or {}).get("scenario")
        base = copy.deepcopy(DEFAULTS)
        if name is not None:
            if name not in PRESETS:
                raise ConfigError(f"unknown scenario '{name}'; choose from {', '.join(sorted(PRESETS))}")
            base = deep_merge(base, PRESETS[name]())
            base["scenario"] = name
        merged = deep_merge(base, doc)
        if overrides:
            merged = deep_merge(merged, overrides)
        if name is not None:
            merged["scenario"] = name
        cfg = cls(merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None, scenario: str | None = None) -> "RunConfig":
        doc = {}
        if path is not None:
            path = Path(path)
            doc = parse_text(path.read_text(), str(path))
        return cls.from_dict(doc, overrides, scenario)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def to_json(self) -> str:
        return json.dumps(self.doc, sort_keys=True)

    def __getitem__(self, key):
        return self.doc[key]

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        d = self.doc
        _int(d["trials"], "trials", 1)
        _int(d["iterations"], "iterations", 1)
        _int(d["seed"], "seed", 0, 2**64 - 1)
        if not isinstance(d["variants"], list) or not d["variants"]:
            raise ConfigError("'variants' must be a non-empty list")
        for j, v in enumerate(d["variants"]):
            if not isinstance(v, dict):
                raise ConfigError(f"'variants[{j}]' must be a mapping")
            extra = set(v) - VARIANT_KEYS
            if extra:
                raise ConfigError(f"unknown key 'variants[{j}].{sorted(extra)[0]}'")
            if "mu" not in v:
                raise ConfigError(f"'variants[{j}].mu' is required")
        a = d["analysis"]
        _int(a["burn_in"], "analysis.burn_in", 0)
        if not 0 < _num(a["tail_fraction"], "analysis.tail_fraction") <= 1:
            raise ConfigError("'analysis.tail_fraction' must lie in (0, 1]")
        for key in ("bisect_trials", "bisect_iterations", "bisect_steps"):
            _int(a[key], f"analysis.{key}", 1)
        _num(a["divergence_threshold"], "analysis.divergence_threshold", positive=True)
        # building the ExperimentSpec checks everything else
        self.to_spec()

    # -- construction --------------------------------------------------------

    def topology(self) -> Topology:
        t = self.doc["topology"]
        kind = t["kind"]
        if kind == "edges":
            n = _int(t["nodes"], "topology.nodes", 1)
            edges = t["edges"] or []
            pairs = []
            for j, e in enumerate(edges):
                if not (isinstance(e, list) and len(e) == 2):
                    raise ConfigError(f"'topology.edges[{j}]' must be a pair [l, k]")
                l, k = (_int(x, f"topology.edges[{j}]", 1, n) for x in e)
                pairs.append((l - 1, k - 1))
            return Topology.from_edges(n, pairs)
        if kind == "geometric":
            n = _int(t["nodes"], "topology.nodes", 1)
            r = _num(t["radius"], "topology.radius", positive=True)
            if r > np.sqrt(2.0) + 1e-12:
                raise ConfigError("'topology.radius' must lie in (0, sqrt(2)]")
            try:
                return ex.connected_geometric_topology(n, r, _int(t["seed"], "topology.seed", 0))
            except ValueError as exc:
                raise ConfigError(f"topology: {exc}") from exc
        if kind == "file":
            if not t["path"]:
                raise ConfigError("'topology.path' is required for kind 'file'")
            try:
                return Topology.load(t["path"])
            except ValueError as exc:
                raise ConfigError(f"topology.path: {exc}") from exc
        raise ConfigError(f"'topology.kind' must be edges, geometric or file, got {kind!r}")

    def profile(self, nodes: int) -> SignalProfile:
        s = self.doc["signals"]
        ar = s["ar_pole"]
        if ar is not None:
            ar = _num(ar, "signals.ar_pole")
        try:
            if s["input_variances"] is not None or s["noise_variances"] is not None:
                iv, nv = s["input_variances"], s["noise_variances"]
                if iv is None or nv is None:
                    raise ConfigError("give both 'signals.input_variances' and 'signals.noise_variances'")
                if len(iv) != nodes or len(nv) != nodes:
                    raise ConfigError(f"explicit variances need {nodes} entries per list")
                return SignalProfile(tuple(iv), tuple(nv), ar)
            return sample_profile(nodes, _range(s["input_range"], "signals.input_range"),
                                  _range(s["noise_range"], "signals.noise_range"),
                                  _int(s["seed"], "signals.seed", 0), ar)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"signals: {exc}") from exc

    def schedule(self) -> tuple[SystemSchedule, ex.SparsityScenario | None]:
        s = self.doc["system"]
        stages = s["stages"]
        if stages is None:
            if s["w_o"] is None:
                raise ConfigError("set 'system.w_o' or 'system.stages'")
            w = np.asarray(s["w_o"], dtype=float)
            if s["taps"] is not None and _int(s["taps"], "system.taps", 1) != w.size:
                raise ConfigError(f"'system.taps' = {s['taps']} but 'system.w_o' has {w.size} entries")
            return SystemSchedule.fixed(w), None
        if s["w_o"] is not None:
            raise ConfigError("'system.w_o' and 'system.stages' are mutually exclusive")
        if not isinstance(stages, list) or not stages:
            raise ConfigError("'system.stages' must be a non-empty list")
        taps = s["taps"]
        starts, vectors, counts, explicit = [], [], [], []
        for j, st in enumerate(stages):
            where = f"system.stages[{j}]"
            if not isinstance(st, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            extra = set(st) - STAGE_KEYS
            if extra:
                raise ConfigError(f"unknown key '{where}.{sorted(extra)[0]}'")
            kinds = [k for k in ("positions", "count", "vector", "fixture") if k in st]
            if len(kinds) != 1:
                raise ConfigError(f"'{where}' needs exactly one of positions, count, vector, fixture")
            starts.append(_int(st.get("start", 0), f"{where}.start", 0))
            kind = kinds[0]
            if kind == "vector":
                vectors.append(np.asarray(st["vector"], dtype=float))
            elif kind == "fixture":
                if st["fixture"] not in FIXTURES:
                    raise ConfigError(f"'{where}.fixture' must be one of {sorted(FIXTURES)}")
                vectors.append(FIXTURES[st["fixture"]]())
            else:
                vectors.append(None)
            counts.append(st.get("count"))
            explicit.append(st.get("positions"))
        sizes = {v.size for v in vectors if v is not None}
        if taps is None:
            if len(sizes) != 1:
                raise ConfigError("'system.taps' is required when no stage fixes the length")
            taps = sizes.pop()
        taps = _int(taps, "system.taps", 1)
        if any(v is not None and v.size != taps for v in vectors):
            raise ConfigError(f"stage vectors must have {taps} taps")
        scen = None
        if all(c is not None for c in counts):
            seed = self.doc["seed"] if s["seed"] is None else s["seed"]
            try:
                scen = ex.SparsityScenario.seeded(taps, starts, [_int(c, "system.stages.count", 0) for c in counts],
                                                  _int(seed, "system.seed", 0), bool(s["nested"]))
            except ValueError as exc:
                raise ConfigError(f"system: {exc}") from exc
            return scen.schedule(), scen
        for j, (c, p) in enumerate(zip(counts, explicit)):
            if c is not None:
                raise ConfigError(f"'system.stages[{j}].count' cannot mix with explicit stages")
            if p is not None:
                v = np.zeros(taps)
                for q in p:
                    v[_int(q, f"system.stages[{j}].positions", 1, taps) - 1] = 1.0
                vectors[j] = v
        try:
            return SystemSchedule(tuple(starts), np.vstack(vectors)), None
        except ValueError as exc:
            raise ConfigError(f"system.stages: {exc}") from exc

    def variants(self) -> tuple[AlgorithmVariant, ...]:
        out = []
        for j, v in enumerate(self.doc["variants"]):
            try:
                out.append(AlgorithmVariant.from_dict(v))
            except (ValueError, TypeError, KeyError) as exc:
                raise ConfigError(f"variants[{j}]: {exc}") from exc
        return tuple(out)

    def to_spec(self) -> ex.ExperimentSpec:
        topo = self.topology()
        profile = self.profile(topo.node_count)
        schedule, scen = self.schedule()
        try:
            return ex.ExperimentSpec(topo, profile, schedule, self.variants(), int(self.doc["iterations"]),
                                     int(self.doc["trials"]), int(self.doc["seed"]),
                                     combiner_rule=self.doc["topology"]["combiner"], scenario=scen,
                                     name=str(self.doc["name"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def output_dir(self) -> Path:
        d = self.doc["output"]["dir"] or os.environ.get(OUTPUT_DIR_ENV) or "."
        return Path(d)
