"""Acceptance criteria, one test each, at their stated tolerances and time budgets.

Every test appends a PASS/FAIL line to the terminal summary.
"""

import io
import math
import os
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE_LINES
from sparsediff import experiments as ex
from sparsediff.algorithms import atc, simulate
from sparsediff.network import build_metropolis_combiner, build_uniform_combiner, random_geometric_topology
from sparsediff.signal import SystemSchedule, generate_trial_data, sample_profile
from sparsediff.theory import (
    GlobalMoments,
    StackedOperators,
    expected_abs,
    expected_sign,
    gaussian_fourth_moment,
    mean_square_step,
    mean_step,
    sample_fourth_moment,
    stability_bounds,
    steady_state_msd,
    trace_via_vec,
    transient,
)
from sparsediff.theory.recursion import mean_square_step_kron
from sparsediff.theory.steady_state import steady_state_general, steady_state_leaky

JOBS = os.cpu_count() or 1
pytestmark = pytest.mark.slow


class Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.checks = []
        self.start = time.perf_counter()

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check(elapsed < self.budget, f"runtime {elapsed:.1f} s < {self.budget:g} s")
        ok = all(c for c, _ in self.checks)
        details = "; ".join(f"{'ok' if c else 'FAILED'}: {d}" for c, d in self.checks)
        line = f"{'PASS' if ok else 'FAIL'} criterion {self.number} ({self.title}): {details}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line


def _quad_expect(f, mean, sd):
    scale = 1.0 / (sd * math.sqrt(2.0 * math.pi))

    def pdf(w):
        z = (w - mean) / sd
        return scale * math.exp(-0.5 * z * z)

    lo, hi = mean - 40 * sd, mean + 40 * sd
    pieces = [(lo, 0.0), (0.0, hi)] if lo < 0 < hi else [(lo, hi)]
    return sum(integrate.quad(lambda w: f(w) * pdf(w), a, b, epsabs=1e-14, epsrel=1e-13, limit=400)[0]
               for a, b in pieces)


def test_criterion_1_attractor_moments_vs_quadrature():
    c = Criterion(1, "E[sign] and E|w| vs adaptive quadrature", 5.0)
    worst_s = worst_a = 0.0
    for m in np.linspace(-3.0, 3.0, 13):  # m = w_o - mean error
        for sd in np.sqrt(np.geomspace(1e-4, 3.0, 13)):
            worst_s = max(worst_s, abs(expected_sign(m, 0.0, sd * sd) - _quad_expect(np.sign, m, sd)))
            worst_a = max(worst_a, abs(expected_abs(m, 0.0, sd * sd) - _quad_expect(abs, m, sd)))
    c.check(worst_s <= 1e-8, f"max |E[sign] error| {worst_s:.2e} <= 1e-8")
    c.check(worst_a <= 1e-8, f"max |E|w| error| {worst_a:.2e} <= 1e-8")
    c.finish()


def _reference_atc(a, mu, x_pad, d, iterations, taps):
    """Straight-line adapt-then-combine DLMS on plain Python floats."""
    n = len(a)
    w = [[0.0] * taps for _ in range(n)]
    out = []
    for i in range(iterations):
        phi = []
        for k in range(n):
            u = [float(x_pad[k, i + taps - 1 - j]) for j in range(taps)]
            e = float(d[k, i])
            for j in range(taps):
                e -= u[j] * w[k][j]
            phi.append([w[k][j] + mu * e * u[j] for j in range(taps)])
        w = [[sum(a[l][k] * phi[l][j] for l in range(n)) for j in range(taps)] for k in range(n)]
        out.append([row[:] for row in w])
    return np.array(out)


def test_criterion_2_plain_atc_matches_reference():
    c = Criterion(2, "ATC with gamma = rho = 0 vs straight-line reference", 5.0)
    rng = np.random.default_rng(2)
    spec = ex.scenario_43()
    w_o = rng.standard_normal(5)
    sched = SystemSchedule.fixed(w_o)
    data = generate_trial_data(spec.profile, sched, 1000, 2, 0)
    hist = np.zeros((1, 1000, 5, 5))
    simulate(atc("za", 0.03, 0.0, 0.0), spec.combiner, sched, data.x_pad[None], data.d[None], hist)
    ref = _reference_atc(spec.combiner.entries.tolist(), 0.03, data.x_pad, data.d, 1000, 5)
    denom = np.maximum(np.abs(ref), np.finfo(float).tiny)
    rel = float(np.max(np.abs(hist[0] - ref) / denom))
    c.check(rel <= 1e-12, f"max relative weight error {rel:.2e} <= 1e-12 over 1000 iterations")
    c.finish()


def test_criterion_3_transient_theory_tracks_monte_carlo():
    c = Criterion(3, "ATC-LZA transient theory vs 500-trial Monte Carlo", 120.0)
    spec = ex.scenario_43(trials=500, iterations=3000)
    cmp = ex.compare_theory_simulation(spec, variant=0, burn_in=100, tail=500, jobs=JOBS)
    c.check(cmp.max_gap_after_burn_in <= 1.5, f"max gap after burn-in {cmp.max_gap_after_burn_in:.3f} dB <= 1.5")
    c.check(abs(cmp.tail_gap) <= 1.0, f"final-500 mean gap {cmp.tail_gap:+.3f} dB within 1.0")
    c.finish()


def test_criterion_4_steady_state_closed_form():
    c = Criterion(4, "closed-form steady state vs transient at 20000 and Monte Carlo tail", 180.0)
    spec = ex.scenario_43(trials=500, iterations=3000)
    rep = ex.run_monte_carlo(spec, jobs=JOBS)
    w_o = spec.schedule.vectors[0]
    for v, label in zip(spec.variants, spec.labels):
        ops = StackedOperators.build(spec.combiner, spec.profile, v, spec.taps)
        ss = steady_state_msd(ops, w_o).msd_db
        tr = transient(ops, w_o, 20000).msd_db[-1]
        mc = float(np.mean(rep.trace_db(label)[-500:]))
        c.check(abs(ss - tr) <= 0.5, f"{label} closed form {ss:.3f} vs recursion {tr:.3f} dB, gap {ss - tr:+.3f} <= 0.5")
        c.check(abs(ss - mc) <= 1.0, f"{label} closed form vs MC tail {mc:.3f} dB, gap {ss - mc:+.3f} <= 1.0")
    c.finish()


def test_criterion_5_general_path_reduces_to_leaky():
    c = Criterion(5, "general steady state with rho = 0 vs reduced leaky form", 10.0)
    spec = ex.scenario_43()
    w_o = spec.schedule.vectors[0]
    worst = 0.0
    for kind in ("za", "rza", "none"):
        for mu, gamma in ((0.03, 0.001), (0.008, 0.001), (0.05, 0.1)):
            ops = StackedOperators.build(spec.combiner, spec.profile, atc(kind, mu, gamma, 0.0), spec.taps)
            g, lk = steady_state_general(ops, w_o), steady_state_leaky(ops, w_o)
            worst = max(worst, abs(g.msd - lk.msd) / abs(lk.msd),
                        float(np.max(np.abs(g.mean_err - lk.mean_err)) / np.max(np.abs(lk.mean_err))))
    c.check(worst <= 1e-10, f"max relative difference {worst:.2e} <= 1e-10 over 9 settings")
    c.finish()


def test_criterion_6_combined_bound_separates_behaviour():
    c = Criterion(6, "empirical stability around the combined bound", 60.0)
    spec = ex.scenario_43(trials=20, iterations=5000)
    base = spec.variants[0]
    ops = StackedOperators.build(spec.combiner, spec.profile, base, spec.taps)
    combined = stability_bounds(ops).combined
    p = base.params
    lo = atc("za", 0.5 * combined, p.leak, p.attractor_strength)
    hi = atc("za", 4.0 * combined, p.leak, p.attractor_strength)
    stable = ex.run_monte_carlo(spec.replace(variants=(lo,)), jobs=JOBS)
    tail = float(np.mean(stable.msd_db[0, -500:]))
    c.check(stable.diverged[0] == 0 and tail < 0.0,
            f"mu = {lo.params.step_size:.4g}: {20 - stable.diverged[0]}/20 converge, final MSD {tail:.2f} dB")
    n_div = int(ex.trials_diverge(spec, hi).sum())
    c.check(n_div >= 19, f"mu = {hi.params.step_size:.4g}: {n_div}/20 diverge (>= 19)")
    c.finish()


def test_criterion_7_sparse_variants_order():
    c = Criterion(7, "white-input 20-node ordering of leaky, LZA and LRZA", 300.0)
    spec = ex.scenario_41(trials=100)
    spec = spec.replace(variants=spec.variants[:3])  # ATC leaky, LZA, LRZA
    rep = ex.run_monte_carlo(spec, jobs=JOBS)
    leaky, lza, lrza = rep.labels
    s = {lab: rep.steady_state(lab, window=(2500, 3000)) for lab in rep.labels}
    f = {lab: rep.steady_state(lab, window=(8500, 9000)) for lab in rep.labels}
    c.check(s[lrza] <= s[lza] - 1.0 and s[lza] <= s[leaky] - 1.0,
            f"2500-2999: LRZA {s[lrza]:.2f} <= LZA {s[lza]:.2f} <= leaky {s[leaky]:.2f} dB, gaps >= 1 dB")
    c.check(f[leaky] <= f[lza], f"8500-8999: leaky {f[leaky]:.2f} <= LZA {f[lza]:.2f} dB")
    c.finish()


def test_criterion_8_fourth_moment_vs_sampling():
    c = Criterion(8, "analytic regressor fourth moment vs 1e6 samples", 30.0)
    rng = np.random.default_rng(8)
    var = rng.uniform(0.5, 1.5, 2)
    exact = gaussian_fourth_moment(var, 3)
    est = sample_fourth_moment(rng, var, 3, samples=1_000_000)
    err = float(np.linalg.norm(est - exact) / np.linalg.norm(exact))
    c.check(err <= 0.02, f"relative Frobenius error {err:.4f} <= 0.02 (N=2, M=3)")
    c.finish()


def test_criterion_9_structural_invariants():
    c = Criterion(9, "structural invariants", 10.0)
    graphs = [ex.five_node_topology(), ex.scenario_41().topology,
              *(random_geometric_topology(n, 0.4, s) for n, s in ((8, 1), (15, 2), (30, 3)))]
    worst = max(float(np.max(np.abs(b(t).entries.sum(axis=0) - 1.0)))
                for t in graphs for b in (build_uniform_combiner, build_metropolis_combiner))
    c.check(worst <= 1e-12, f"combiner column sums off by {worst:.1e} <= 1e-12")

    spec = ex.scenario_43()
    asym = 0.0
    for v in spec.variants:
        ops = StackedOperators.build(spec.combiner, spec.profile, v, spec.taps)
        mom = GlobalMoments.initial(spec.schedule.vectors[0], 5)
        for _ in range(200):
            W = mean_square_step(mom, ops, symmetrize=False)
            Wk = mean_square_step_kron(mom, ops) if _ < 3 else W
            asym = max(asym, float(np.max(np.abs(W - W.T))), float(np.max(np.abs(Wk - Wk.T))))
            mom = GlobalMoments(mean_step(mom, ops), W, mom.w_opt)
    c.check(asym <= 1e-10, f"max |W - W^T| {asym:.1e} <= 1e-10 over 200 recursion steps")

    rng = np.random.default_rng(9)
    tr_err = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 30))
        X = rng.standard_normal((n, n))
        X = X + X.T
        Y = rng.standard_normal((n, n))
        direct = float(np.trace(X @ Y))
        tr_err = max(tr_err, abs(trace_via_vec(X, Y) - direct) / max(1.0, abs(direct)))
    c.check(tr_err <= 1e-12, f"trace_via_vec vs trace relative error {tr_err:.1e} <= 1e-12 on 100 pairs")

    small = ex.scenario_43(trials=6, iterations=400)
    bodies = []
    for jobs, chunk in ((1, None), (3, 2)):
        buf = io.StringIO()
        rep = ex.run_monte_carlo(small, jobs=jobs, chunk=chunk)
        rep.write_csv(buf, timestamp=True)
        bodies.append("".join(ln for ln in buf.getvalue().splitlines(keepends=True) if not ln.startswith("#")))
    c.check(bodies[0] == bodies[1], "identical seeds give byte-identical CSV bodies")
    c.finish()
