import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from sparsediff import experiments as ex
from sparsediff.algorithms import DivergenceError, atc, cta
from sparsediff.network import CombinationMatrix, build_uniform_combiner, fully_connected_topology
from sparsediff.signal import SignalProfile
from sparsediff.theory import (
    GlobalMoments,
    StackedOperators,
    TheoryError,
    UnstableError,
    expected_abs,
    expected_sign,
    gaussian_fourth_moment,
    mean_square_step,
    mean_step,
    sample_fourth_moment,
    is_stable,
    stability_bounds,
    steady_state_msd,
    trace_via_vec,
    transient,
    unvec,
    vec,
)
from sparsediff.theory.recursion import mean_square_step_kron
from sparsediff.theory.steady_state import steady_state_general, steady_state_leaky


def _quad(f, m, s):
    pdf = stats.norm(m, s).pdf
    lo, hi = m - 40 * s, m + 40 * s
    if lo < 0 < hi:
        return (integrate.quad(lambda w: f(w) * pdf(w), lo, 0, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
                + integrate.quad(lambda w: f(w) * pdf(w), 0, hi, epsabs=1e-13, epsrel=1e-13, limit=200)[0])
    return integrate.quad(lambda w: f(w) * pdf(w), lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


@pytest.mark.parametrize("m", [-1.2, -0.01, 0.0, 0.3, 2.0])
@pytest.mark.parametrize("s", [0.05, 0.7, 2.0])
def test_moments_match_quadrature(m, s):
    # w = w_o - mean_err ~ N(m, s^2); put it all in w_o
    assert expected_sign(m, 0.0, s * s) == pytest.approx(_quad(np.sign, m, s), abs=1e-9)
    assert expected_abs(m, 0.0, s * s) == pytest.approx(_quad(abs, m, s), abs=1e-9)
    assert expected_sign(0.5, 0.5 - m, s * s) == pytest.approx(expected_sign(m, 0.0, s * s), abs=1e-15)


def test_moments_zero_variance_and_errors():
    assert expected_sign(0.4, 0.1, 0.0) == 1.0
    assert expected_sign(0.1, 0.1, 0.0) == 0.0
    assert expected_abs(-0.4, 0.1, 0.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        expected_sign(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        expected_abs(0.0, 0.0, -1.0)


def test_moments_vectorized():
    out = expected_abs(np.zeros(4), np.zeros(4), np.array([0.0, 1.0, 4.0, 9.0]))
    np.testing.assert_allclose(out, np.sqrt(2 / np.pi) * np.array([0, 1, 2, 3]))


def _ops(variant, n=3, m=2, seed=0):
    topo = fully_connected_topology(n) if n > 1 else None
    comb = build_uniform_combiner(topo) if topo else CombinationMatrix(np.ones((1, 1)))
    rng = np.random.default_rng(seed)
    prof = SignalProfile(tuple(rng.uniform(0.5, 1.5, n)), tuple(rng.uniform(0.01, 0.1, n)))
    return StackedOperators.build(comb, prof, variant, m)


@pytest.mark.parametrize("variant", [atc("none", 0.05, 0.02), atc("za", 0.05, 0.02, 0.003),
                                     atc("rza", 0.05, 0.02, 0.003, 3.0)], ids=lambda v: v.name)
def test_matrix_recursion_matches_kronecker_form(variant):
    spec = ex.scenario_43()
    ops = StackedOperators.build(spec.combiner, spec.profile, variant, spec.taps)
    mom = GlobalMoments.initial(ex.SCENARIO_43_WO, 5)
    for _ in range(5):
        W = mean_square_step(mom, ops, symmetrize=False)
        np.testing.assert_allclose(W, mean_square_step_kron(mom, ops), rtol=1e-10, atol=1e-14)
        mom = GlobalMoments(mean_step(mom, ops), mean_square_step(mom, ops), mom.w_opt)


def test_vec_is_column_major():
    X = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(vec(X), [0, 3, 1, 4, 2, 5])
    Z = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(unvec(vec(Z), 3), Z)
    rng = np.random.default_rng(0)
    A, B, C = rng.standard_normal((3, 3, 3))
    np.testing.assert_allclose(np.kron(A.T, B.T) @ vec(C), vec(B.T @ C @ A))


def test_scalar_bounds():
    ops = _ops(atc("none", 0.1), n=1, m=1)
    var = ops.S_u[0, 0]
    b = stability_bounds(ops)
    assert b.mean_bound == pytest.approx(2.0 / var)
    assert b.jk_bound == pytest.approx(2.0 / (3.0 * var))
    assert b.combined == pytest.approx(2.0 / (3.0 * var))


def test_mean_bound_unit_scalar():
    ops = StackedOperators.build(CombinationMatrix(np.ones((1, 1))), SignalProfile((1.0,), (0.1,)),
                                 atc("none", 0.1), 1)
    assert stability_bounds(ops).mean_bound == pytest.approx(2.0)


def test_gaussian_fourth_moment_monte_carlo_small():
    rng = np.random.default_rng(1)
    exact = gaussian_fourth_moment([0.8, 1.3], 2)
    est = sample_fourth_moment(rng, [0.8, 1.3], 2, samples=200_000)
    assert np.linalg.norm(est - exact) / np.linalg.norm(exact) < 0.03


def test_leaky_steady_state_matches_long_transient():
    ops = _ops(atc("none", 0.05, 0.05), n=3, m=2)
    w_o = np.array([0.7, -0.2])
    ss = steady_state_msd(ops, w_o)
    tr = transient(ops, w_o, 4000)
    assert ss.msd == pytest.approx(tr.msd[-1], rel=1e-8)
    np.testing.assert_allclose(ss.mean_err, tr.final.mean_err, rtol=1e-8, atol=1e-14)


def test_general_equals_leaky_without_attractor():
    ops = _ops(atc("za", 0.05, 0.05, 0.0), n=3, m=2)
    w_o = np.array([0.7, -0.2])
    assert steady_state_general(ops, w_o).msd == pytest.approx(steady_state_leaky(ops, w_o).msd, rel=1e-10)


def test_unstable_raises_with_radius():
    ops = _ops(atc("none", 5.0), n=2, m=2)
    with pytest.raises(UnstableError) as info:
        steady_state_msd(ops, np.ones(2))
    assert info.value.radius >= 1.0 and "spectral radius" in str(info.value)


def test_guards():
    big = _ops(atc("none", 0.01), n=5, m=13)  # MN = 65
    with pytest.raises(TheoryError, match="64"):
        steady_state_msd(big, np.zeros(13))
    with pytest.raises(TheoryError, match="64"):
        stability_bounds(big)
    huge = _ops(atc("none", 0.01), n=1, m=257)
    with pytest.raises(TheoryError, match="256"):
        transient(huge, np.zeros(257), 2)


def test_scope_errors():
    comb = build_uniform_combiner(fully_connected_topology(2))
    with pytest.raises(TheoryError):
        StackedOperators.build(comb, SignalProfile((1.0, 1.0), (0.1, 0.1)), cta("none", 0.01), 2)
    with pytest.raises(TheoryError):
        StackedOperators.build(comb, SignalProfile((1.0, 1.0), (0.1, 0.1), 0.5), atc("none", 0.01), 2)


def test_variance_clamp():
    mom = GlobalMoments(np.array([1.0, 0.0]), np.diag([1.0 - 5e-10, 0.5]), np.zeros(2))
    np.testing.assert_array_equal(mom.variances(), [0.0, 0.5])
    bad = GlobalMoments(np.array([1.0, 0.0]), np.diag([0.5, 0.5]), np.zeros(2))
    with pytest.raises(DivergenceError):
        bad.variances()


@settings(max_examples=30, deadline=None)
@given(mu1=st.floats(1e-4, 3.0), mu2=st.floats(1e-4, 3.0), seed=st.integers(0, 1000))
def test_stability_predicate_monotone(mu1, mu2, seed):
    lo, hi = sorted((mu1, mu2))
    a, b = _ops(atc("za", lo, 0.01, 0.001), 3, 2, seed), _ops(atc("za", hi, 0.01, 0.001), 3, 2, seed)
    assert not (is_stable(b) and not is_stable(a))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_trace_via_vec(seed, n):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((2, n, n))
    X = X + X.T
    assert trace_via_vec(X, Y) == pytest.approx(np.trace(X @ Y), rel=1e-12, abs=1e-12)


def test_trace_via_vec_shape_check():
    with pytest.raises(ValueError):
        trace_via_vec(np.eye(2), np.eye(3))
