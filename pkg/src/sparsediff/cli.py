"""Command-line front end.

Subcommands: ``simulate``, ``theory``, ``stability``, ``plot`` and
``validate``. Exit codes: 0 success, 1 usage or configuration error,
2 numerical failure (divergence or instability), 3 I/O error. The default
output directory can be set with ``SPARSEDIFF_OUTPUT_DIR``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from . import __version__, experiments as ex, kernels
from .algorithms import DivergenceError, Strategy
from .config import OUTPUT_DIR_ENV, PRESETS, ConfigError, RunConfig, set_path
from .network import validate_combiner
from .theory import StackedOperators, TheoryError, UnstableError, stability_bounds, steady_state_msd, transient
from .theory.steady_state import STEADY_STATE_MAX_DIM, ms_spectral_radius

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="YAML or JSON run configuration")
    p.add_argument("--scenario", choices=sorted(PRESETS), help="start from a named preset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field by dotted path, e.g. --set analysis.burn_in=200")
    p.add_argument("--trials", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int, help="master seed for the Monte Carlo streams")
    p.add_argument("-o", "--output-dir", help=f"output directory (default: config, then ${OUTPUT_DIR_ENV}, then .)")
    p.add_argument("--no-timestamp", action="store_true", help="omit the creation time comment from CSV output")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker threads for Monte Carlo trials")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsediff", description="Sparse-aware leaky diffusion LMS simulations and theory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Monte Carlo MSD traces to CSV")
    _common(p)
    p.add_argument("--strict", action="store_true", help="exit 2 if any variant had divergent trials")
    p.add_argument("--theory", action="store_true", help="add theory columns for ATC variants")
    p.add_argument("--backend", choices=["cython", "python"], help="simulation kernel (default: best available)")

    p = sub.add_parser("theory", help="transient and steady-state theory to CSV")
    _common(p)
    p.add_argument("--mean-errors", action="store_true", help="add per-coefficient mean-error columns")

    p = sub.add_parser("stability", help="step-size bounds, optionally with empirical bisection")
    _common(p)
    p.add_argument("--bisect", action="store_true", help="locate the empirical divergence threshold")
    p.add_argument("--json", action="store_true", help="print the report as JSON")

    p = sub.add_parser("plot", help="write a matplotlib script for a CSV produced by this tool")
    p.add_argument("csv", help="MSD or theory CSV")
    p.add_argument("-o", "--output", help="script path (default: <csv stem>_plot.py)")

    p = sub.add_parser("validate", help="resolve and check a configuration, echo it as JSON")
    _common(p)
    return parser


def _overrides(args) -> dict:
    over: dict = {}
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"--set {key}: cannot parse {raw!r}") from exc
        over = _merge_sparse(over, set_path(key, value))
    for flag, key in (("trials", "trials"), ("iterations", "iterations"), ("seed", "seed")):
        if getattr(args, flag, None) is not None:
            over[key] = getattr(args, flag)
    if getattr(args, "output_dir", None):
        over = _merge_sparse(over, {"output": {"dir": args.output_dir}})
    if getattr(args, "no_timestamp", False):
        over = _merge_sparse(over, {"output": {"timestamp": False}})
    if getattr(args, "theory", False):
        over = _merge_sparse(over, {"analysis": {"theory": True}})
    if getattr(args, "mean_errors", False):
        over = _merge_sparse(over, {"analysis": {"mean_errors": True}})
    if getattr(args, "bisect", False):
        over = _merge_sparse(over, {"analysis": {"bisect": True}})
    return over


def _merge_sparse(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _merge_sparse(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _load(args) -> RunConfig:
    return RunConfig.load(args.config, _overrides(args), args.scenario)


def _outdir(cfg: RunConfig) -> Path:
    d = cfg.output_dir()
    d.mkdir(parents=True, exist_ok=True)
    return d


def _metadata(cfg: RunConfig, spec: ex.ExperimentSpec) -> dict:
    return {
        "config": cfg.to_dict(),
        "master_seed": int(spec.master_seed),
        "seed_derivation": "SeedSequence(master_seed, spawn_key=(trial, node, role)); roles input=0 noise=1 scenario=2",
        "tool": f"sparsediff {__version__}",
    }


def _ops(spec: ex.ExperimentSpec, variant) -> StackedOperators:
    if variant.strategy is not Strategy.ATC:
        raise TheoryError(f"{variant.name}: moment theory covers ATC variants only")
    if len(spec.schedule.starts) != 1:
        raise TheoryError("moment theory assumes a fixed true system (single schedule stage)")
    return StackedOperators.build(spec.combiner, spec.profile, variant, spec.taps)


def _check_radius(ops: StackedOperators) -> None:
    radius = ms_spectral_radius(ops)
    if radius >= 1.0:
        raise UnstableError(radius)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    spec = cfg.to_spec()
    a = cfg["analysis"]
    rep = ex.run_monte_carlo(spec, jobs=max(1, args.jobs), backend=args.backend,
                             divergence_threshold=a["divergence_threshold"])
    rep.metadata = _metadata(cfg, spec)
    if a["theory"]:
        for v, lab in zip(spec.variants, rep.labels):
            try:
                ops = _ops(spec, v)
                _check_radius(ops)
                rep.theory[lab] = transient(ops, spec.schedule.vectors[0], spec.iterations,
                                            fourth_order=a["fourth_order"]).msd
            except (TheoryError, UnstableError, DivergenceError) as exc:
                print(f"note: no theory for {lab}: {exc}", file=sys.stderr)
    out = _outdir(cfg) / cfg["output"]["msd_csv"]
    rep.write_csv(out, timestamp=cfg["output"]["timestamp"])
    for lab, n in zip(rep.labels, rep.diverged):
        ss = rep.steady_state(lab, tail_fraction=a["tail_fraction"])
        status = f"{n}/{rep.trials} trials diverged" if n else "ok"
        print(f"{lab:48s} steady state {ss:9.3f} dB  {status}")
    print(f"wrote {out}")
    bad = [lab for lab, n in zip(rep.labels, rep.diverged) if n]
    if bad and args.strict:
        print(f"error: divergent trials in {', '.join(bad)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_theory(args) -> int:
    cfg = _load(args)
    spec = cfg.to_spec()
    a = cfg["analysis"]
    base = _outdir(cfg) / cfg["output"]["theory_csv"]
    ops_all = [(v, lab, _ops(spec, v)) for v, lab in zip(spec.variants, spec.labels)]
    for j, (v, lab, ops) in enumerate(ops_all):
        _check_radius(ops)
        w_o = spec.schedule.vectors[0]
        tr = transient(ops, w_o, spec.iterations, record_means=a["mean_errors"], fourth_order=a["fourth_order"])
        ss = steady_state_msd(ops, w_o).msd_db if ops.dim <= STEADY_STATE_MAX_DIM else None
        out = base if len(ops_all) == 1 else base.with_name(f"{base.stem}-{j + 1}{base.suffix}")
        meta = _metadata(cfg, spec)
        meta["variant"] = {"label": lab, **v.to_dict()}
        ex.write_theory_csv(out, tr.msd, ss, tr.mean_err, spec.profile.node_count, meta, cfg["output"]["timestamp"])
        ss_txt = f"{ss:9.3f} dB" if ss is not None else "n/a (M*N > 64)"
        print(f"{lab:48s} final {tr.msd_db[-1]:9.3f} dB  steady state {ss_txt}  -> {out}")
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _load(args)
    spec = cfg.to_spec()
    a = cfg["analysis"]
    rows = []
    for v, lab in zip(spec.variants, spec.labels):
        ops = _ops(spec, v)
        b = stability_bounds(ops)
        row = {"variant": lab, "mu": v.params.step_size, **b.as_dict(), "mu_within_bound": v.params.step_size < b.combined}
        if a["bisect"]:
            sub = spec.replace(trials=a["bisect_trials"], iterations=a["bisect_iterations"])
            th = ex.empirical_threshold(sub, v, 0.5 * b.combined, 4.0 * b.combined, a["bisect_steps"],
                                        a["divergence_threshold"])
            row.update({"empirical_stable": th.stable, "empirical_unstable": th.unstable,
                        "empirical_threshold": th.estimate, "empirical_over_combined": th.estimate / b.combined})
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2, default=float))
        return EXIT_OK
    for r in rows:
        print(r["variant"])
        print(f"  mean bound          {r['mean_bound']:.6g}")
        print(f"  mean-square bound   {r['ms_bound']:.6g}")
        print(f"  combined bound      {r['combined']:.6g}   (configured mu = {r['mu']:g})")
        if "empirical_threshold" in r:
            print(f"  empirical threshold {r['empirical_threshold']:.6g}   "
                  f"(stable {r['empirical_stable']:.6g}, diverging {r['empirical_unstable']:.6g}, "
                  f"{r['empirical_over_combined']:.3g} x combined)")
    return EXIT_OK


PLOT_TEMPLATE = '''\
"""MSD curves from {csv_name}; generated by sparsediff, edit freely."""

import csv

import matplotlib.pyplot as plt

CSV_PATH = {csv_path!r}
SERIES = {series!r}  # (column, dashed)


def main(out=None):
    with open(CSV_PATH, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    head, body = rows[0], rows[1:]
    x = [float(r[0]) for r in body]
    fig, ax = plt.subplots(figsize=(8, 5))
    for name, dashed in SERIES:
        j = head.index(name)
        ax.plot(x, [float(r[j]) for r in body], "--" if dashed else "-", label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("network MSD (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    if out:
        fig.savefig(out)
    else:
        plt.show()


if __name__ == "__main__":
    import sys

    main(sys.argv[1] if len(sys.argv) > 1 else None)
'''


def plot_script(csv_path: str | Path) -> str:
    """Source of a matplotlib script drawing every dB column of ``csv_path``."""
    table = ex.read_csv_table(csv_path)
    theory_file = "sparsediff theory trace" in Path(csv_path).read_text().split("\n", 1)[0]
    series = []
    for name in table.columns:
        if name == "iteration":
            continue
        if name.startswith("msd_db[") or name.startswith("theory_msd_db[") or name in ("msd_db", "steady_state_msd_db"):
            dashed = name.startswith("theory") or name.startswith("steady_state") or theory_file
            series.append((name, dashed))
    if not series:
        raise ValueError(f"{csv_path}: no MSD columns recognized")
    path = Path(csv_path).resolve()
    return PLOT_TEMPLATE.format(csv_name=path.name, csv_path=str(path), series=series)


def cmd_plot(args) -> int:
    src = Path(args.csv)
    if not src.exists():
        raise FileNotFoundError(f"{src}: no such file")
    try:
        text = plot_script(src)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.output) if args.output else src.with_name(f"{src.stem}_plot.py")
    out.write_text(text)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    spec = cfg.to_spec()
    report = validate_combiner(spec.combiner, spec.topology)
    print(cfg.to_json())
    print(f"# nodes {spec.topology.node_count}, taps {spec.taps}, variants {len(spec.variants)}, "
          f"connected {spec.topology.is_connected()}, backend {kernels.BACKEND}", file=sys.stderr)
    if not report.ok:
        print(str(report), file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "theory": cmd_theory, "stability": cmd_stability,
            "plot": cmd_plot, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnstableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DivergenceError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, TheoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
