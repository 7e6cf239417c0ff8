import math
import random

import numpy as np
import pytest

from impulsive_chaos import matops
from impulsive_chaos.errors import DecayRateError, HypothesisViolation, ParameterError
from impulsive_chaos.schedule import ImpulseSchedule
from impulsive_chaos.signals import VectorSequence
from impulsive_chaos.system import (
    PiecewiseFunction,
    QuasilinearImpulsiveSystem,
    SystemConstants,
    assemble_constants,
    cauchy_matrix,
    check_hypotheses,
    compute_derived_constants,
    decay_rate,
    default_lambda,
    estimate_function_constants,
    fit_decay_bound,
    gronwall_bound,
)
from conftest import A_EX, B_EX, F_EX, H_EX, example_schedule, example_system, example_constants
from gronwall_oracle import brute_force, random_instance, smooth

PI = math.pi
P = np.array([[0.0, 1.0], [math.sqrt(15) / 4, 7 / 4]])
DELTA0 = 0.5388


def closed_form_U(t, s, n_imp):
    w = math.sqrt(15) / 2
    tau = t - s
    R = np.array([[math.cos(w * tau), -math.sin(w * tau)], [math.sin(w * tau), math.cos(w * tau)]])
    return math.exp(-2.5 * tau) * (1 / 3) ** n_imp * P @ R @ np.linalg.inv(P)


def test_system_validation():
    seq = VectorSequence.constant([1.0, 2.0], 10)
    sched = example_schedule()
    with pytest.raises(ParameterError):
        QuasilinearImpulsiveSystem(A_EX, np.eye(3), F_EX, H_EX, sched, seq)
    with pytest.raises(ParameterError):
        QuasilinearImpulsiveSystem(A_EX, B_EX, ("sin(t)", "0"), H_EX, sched, seq)
    with pytest.raises(ParameterError):
        QuasilinearImpulsiveSystem(A_EX, B_EX, F_EX, H_EX, sched, seq, f_period=1.0)
    with pytest.raises(ParameterError):
        QuasilinearImpulsiveSystem(A_EX, B_EX, F_EX, H_EX, sched, VectorSequence.constant([1.0], 10))
    with pytest.raises(Exception):
        QuasilinearImpulsiveSystem(A_EX, B_EX, F_EX, ("t", "0"), sched, seq)


def test_jump_and_forcing(ex_sys):
    x = np.array([0.3, 0.8])
    want = np.array([0.1 + 0.05 * math.atan(0.3) + 0.4, 0.8 / 3 + 0.04 * math.sin(0.8)])
    assert np.allclose(ex_sys.jump(x), want, rtol=1e-15)
    th2 = ex_sys.schedule.theta(2)
    assert np.allclose(ex_sys.g(1.0), [1.035, 1.860867], atol=1e-12)
    assert np.array_equal(ex_sys.g(th2), ex_sys.g(1.0))
    assert not np.array_equal(ex_sys.g(th2 + 1e-9), ex_sys.g(1.0))


def test_estimated_sup_norms_match_oracles(ex_sys):
    fc = estimate_function_constants(ex_sys)
    oracle_f = math.hypot(0.4, 0.2)
    oracle_h = math.hypot(0.05 * PI / 2 + 0.4, 0.04)
    # the 1% inflation applied to an exactly attained maximum sits on the
    # boundary, so allow for float rounding only
    assert abs(fc.M_f / oracle_f - 1) <= 0.01 + 1e-12
    assert abs(fc.M_h / oracle_h - 1) <= 0.01 + 1e-12
    assert abs(fc.M_f / 0.4473 - 1) <= 0.01
    assert abs(fc.M_h / 0.4803 - 1) <= 0.01
    # difference quotients between grid neighbours can only underestimate
    assert 0 < fc.L_f <= 0.2 * 1.01
    assert 0 < fc.L_h <= 0.05 * 1.01


def test_zero_function_is_floored():
    seq = VectorSequence.constant([1.0, 2.0], 10)
    sys = QuasilinearImpulsiveSystem(A_EX, B_EX, ("0", "0"), ("0", "0"), example_schedule(), seq)
    fc = estimate_function_constants(sys)
    assert fc.M_f == fc.L_f == 1e-12
    assert len(fc.flags) == 4
    with pytest.raises(ParameterError):
        estimate_function_constants(sys, grid=5)


def test_overrides_win_and_are_recorded(ex_sys):
    fc = estimate_function_constants(ex_sys, overrides={"L_f": 0.2})
    assert fc.L_f == 0.2
    assert fc.provided == {"L_f"}


def test_hypotheses_with_example_constants(ex_sys):
    rep = check_hypotheses(ex_sys, example_constants())
    assert rep.all_pass
    assert [c.name for c in rep.checks] == ["A1", "A2", "A3", "A4", "A5", "A6", "A7"]
    # arithmetic oracle for the displayed inequalities
    a5 = 4.9625 * (0.2 / 2.5 + 2 * 0.05 / (1 - math.exp(-2.5 * PI)))
    a6 = 4.9625 * 0.2 + (2 / PI) * math.log(1 + 4.9625 * 0.05)
    assert rep["A5"].lhs == pytest.approx(a5, rel=1e-12)
    assert rep["A6"].lhs == pytest.approx(a6, rel=1e-12)
    assert abs(rep["A5"].lhs - 0.8934) <= 1e-3
    assert abs(rep["A6"].lhs - 1.1336) <= 1e-3
    assert abs(rep["A7"].lhs - 0.15) <= 1e-3
    assert rep["A2"].lhs == pytest.approx(-2.5 - (2 / PI) * math.log(3), abs=1e-9)
    d = rep.to_dict()
    assert d["all_pass"] is True and len(d["checks"]) == 7


def test_large_jump_lipschitz_flips_only_a7(ex_sys):
    c = example_constants()
    c.L_h = 0.34
    rep = check_hypotheses(ex_sys, c)
    failed = [ch.name for ch in rep.checks if ch.verdict is not True]
    # (A5) and (A6) also depend on L_h, so list exactly which verdicts move
    assert "A7" in failed
    assert rep["A7"].lhs == pytest.approx(1.02, abs=1e-12)
    assert all(rep[n].verdict for n in ("A1", "A2", "A3", "A4"))


def test_a7_alone_flips_when_other_inequalities_hold(ex_sys):
    # with a small N the L_h terms in (A5) and (A6) stay below their bounds
    c = SystemConstants(M_f=0.4473, M_h=0.4803, L_f=0.01, L_h=0.34, M_sigma=9.17878, N=1.0, lam=2.5)
    rep = check_hypotheses(ex_sys, c)
    assert [ch.name for ch in rep.checks if ch.verdict is not True] == ["A7"]


def test_non_commuting_and_singular_jump():
    seq = VectorSequence.constant([1.0, 2.0], 10)
    B = np.array([[0.0, 1.0], [0.0, 0.0]])
    sys = QuasilinearImpulsiveSystem(A_EX, B, F_EX, H_EX, example_schedule(), seq)
    assert check_hypotheses(sys, example_constants())["A1"].verdict is False
    sys = QuasilinearImpulsiveSystem(A_EX, -np.eye(2), F_EX, H_EX, example_schedule(), seq)
    rep = check_hypotheses(sys, example_constants())
    assert rep["A1"].verdict is False
    assert rep["A2"].verdict is None and "not checkable" in rep["A2"].detail
    assert rep["A7"].verdict is False


def test_cauchy_identity_and_no_impulse(ex_sys):
    for s in (0.0, 0.5, 1.0, 7.3):
        assert np.array_equal(cauchy_matrix(ex_sys, s, s), np.eye(2))
    # no moment lies in [0.6, 0.6 + 0.25)
    U = cauchy_matrix(ex_sys, 0.85, 0.6)
    assert np.array_equal(U, matops.mat_exp(A_EX * (0.85 - 0.6)))
    with pytest.raises(ParameterError):
        cauchy_matrix(ex_sys, 0.0, 1.0)


def test_cauchy_closed_form(ex_sys):
    sched = ex_sys.schedule
    for s, t in [(0.0, 2.0), (0.5, 3.0), (0.4999, 9.7), (1.2, 1.9)]:
        n = sched.count_impulses(s, t, include_left=True)
        assert np.max(np.abs(cauchy_matrix(ex_sys, t, s) - closed_form_U(t, s, n))) <= 1e-9


def test_cocycle(ex_sys):
    rng = random.Random(17)
    for _ in range(100):
        s, r, t = sorted(rng.uniform(0, 5 * PI) for _ in range(3))
        lhs = cauchy_matrix(ex_sys, t, s)
        rhs = cauchy_matrix(ex_sys, t, r) @ cauchy_matrix(ex_sys, r, s)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_decay_rate_and_default_lambda(ex_sys):
    rate = 2.5 + (2 / PI) * math.log(3)
    assert decay_rate(ex_sys) == pytest.approx(rate, abs=1e-9)
    assert default_lambda(ex_sys) == pytest.approx(0.8 * rate, abs=1e-9)


def test_fit_decay_bound_scalar_decay():
    seq = VectorSequence.constant([0.0], 10)
    sys = QuasilinearImpulsiveSystem([[-1.0]], [[0.0]], ("0",), ("0",), ImpulseSchedule(1, 1.0, (0.5,)), seq)
    assert fit_decay_bound(sys, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_fit_decay_bound_example(ex_sys):
    N_fit, samples = fit_decay_bound(ex_sys, 2.5, return_samples=True)
    assert 1.0 <= N_fit <= 4.9625 * 1.001
    assert np.all(samples[:, 2] <= 4.9625 * (1 + 1e-6))
    assert samples[:, 0].min() >= 0 and samples[:, 0].max() < PI
    assert samples[:, 1].max() == pytest.approx(20.0)
    with pytest.raises(DecayRateError):
        fit_decay_bound(ex_sys, 3.5)
    with pytest.raises(ParameterError):
        fit_decay_bound(ex_sys, 2.5, horizon=PI)
    with pytest.raises(ParameterError):
        fit_decay_bound(ex_sys, 0.0)


def test_conditioning_oracle():
    cond = np.linalg.norm(P, 2) * np.linalg.norm(np.linalg.inv(P), 2)
    assert abs(cond - 4.9625) <= 1e-3


def test_derived_constants_frozen(ex_sys):
    # values produced by the arithmetic oracle below, frozen at 1e-4 relative
    d = compute_derived_constants(example_constants(), ex_sys, DELTA0)
    frozen = dict(gamma=1.36640, K1=74.3907, K2=118.0555, M_phi=23.8766, R_0=253.166,
                  H_0=0.033150, epsilon_0=0.0023482, r=4.6376e-6)
    for k, v in frozen.items():
        assert getattr(d, k) == pytest.approx(v, rel=1e-4), k
    assert d.theta_bar == pytest.approx(PI / 2 - 1)
    assert d.epsilon_0 <= d.H_0 / 2
    assert d.r <= d.theta_bar / 3


def test_derived_constants_arithmetic_oracle(ex_sys):
    N, lam, Mf, Mh, Lf, Lh, Ms, p, w = 4.9625, 2.5, 0.4473, 0.4803, 0.2, 0.05, 9.17878, 2, PI
    d = compute_derived_constants(example_constants(), ex_sys, DELTA0)
    gamma = 2.5 - 0.9925 - (2 / PI) * math.log(1.248125)
    assert d.gamma == pytest.approx(gamma, rel=1e-12)
    q = 1 - math.exp(-lam * w)
    assert d.M_phi == pytest.approx(N * (Mf + Ms) / lam + p * N * Mh / q, rel=1e-12)
    assert abs(d.M_phi - 23.877) <= 0.01
    normA = np.linalg.norm(A_EX, 2)
    assert d.R_0 == pytest.approx(normA * d.M_phi + Mf + Ms, rel=1e-12)
    H0 = w * DELTA0 / ((2 + w * (normA + Lf) + p * (2 / 3 + Lh)) * math.sqrt(2))
    assert d.H_0 == pytest.approx(H0, rel=1e-12)
    eps0 = H0 / 2 * min(1.0, (1 - Lh * 3) / (2 * 3), 1 / (2 * (1 / 3 + Lh)))
    assert d.epsilon_0 == pytest.approx(eps0, rel=1e-12)


def test_derived_constants_scale_with_delta0(ex_sys):
    d1 = compute_derived_constants(example_constants(), ex_sys, 0.5)
    d2 = compute_derived_constants(example_constants(), ex_sys, 1.0)
    assert d2.H_0 == 2 * d1.H_0
    assert d2.epsilon_0 == 2 * d1.epsilon_0
    with pytest.raises(ParameterError):
        compute_derived_constants(example_constants(), ex_sys, 0.0)


def test_derived_constants_reject_nonpositive_gamma(ex_sys):
    c = example_constants()
    c.L_f = 1.0
    with pytest.raises(HypothesisViolation):
        compute_derived_constants(c, ex_sys, DELTA0)


def test_assemble_constants_prefers_overrides(ex_sys):
    c = assemble_constants(ex_sys, {"lam": 2.5, "N": 4.9625, "M_sigma": 9.17878, "L_f": 0.2, "L_h": 0.05})
    assert (c.lam, c.N, c.M_sigma, c.L_f, c.L_h) == (2.5, 4.9625, 9.17878, 0.2, 0.05)
    assert {"lam", "N", "M_sigma", "L_f", "L_h"} <= c.provided
    assert "M_f" not in c.provided


def test_gronwall_trivial_and_classical():
    a = lambda x: 1.7
    zero = lambda x: 0.0
    assert gronwall_bound(0.0, 2.0, a, zero, []) == pytest.approx(1.7, rel=1e-14)
    got = gronwall_bound(0.0, 1.0, lambda x: 1.5, lambda x: 1.4, [])
    assert got == pytest.approx(1.5 * math.exp(1.4), rel=1e-9)


def test_gronwall_single_impulse_against_brute_force():
    a = PiecewiseFunction([1.0], [smooth(1.0, 0.1, 0.0, 1.0), smooth(2.0, 0.0, 0.2, 1.0)])
    b = PiecewiseFunction([1.0], [smooth(0.5, 0.0, 0.0, 1.0), smooth(0.8, 0.0, 0.1, 2.0)])
    betas = [(1.0, 0.7)]
    got = gronwall_bound(0.0, 2.0, a, b, betas)
    assert got == pytest.approx(brute_force(0.0, 2.0, a, b, betas), rel=1e-8)


def test_gronwall_random_against_brute_force():
    rng = random.Random(41)
    for _ in range(20):
        inst = random_instance(rng)
        assert gronwall_bound(*inst) == pytest.approx(brute_force(*inst), rel=1e-6)


def test_gronwall_monotone_in_beta_and_b():
    rng = random.Random(8)
    for _ in range(8):
        t1, t, a, b, betas = random_instance(rng)
        base = gronwall_bound(t1, t, a, b, betas)
        bigger = [(th, be + 0.3) for th, be in betas]
        assert gronwall_bound(t1, t, a, b, bigger) >= base
        b_up = PiecewiseFunction(b.breaks, [lambda x, f=f: f(x) + 0.2 for f in b.pieces])
        assert gronwall_bound(t1, t, a, b_up, betas) >= base


def test_gronwall_preconditions():
    one = lambda x: 1.0
    with pytest.raises(ParameterError):
        gronwall_bound(1.0, 0.0, one, one, [])
    with pytest.raises(ParameterError):
        gronwall_bound(0.0, 1.0, one, one, [(0.5, -0.1)])
    with pytest.raises(ParameterError):
        gronwall_bound(0.0, 1.0, one, lambda x: -1.0, [])
    with pytest.raises(ParameterError):
        PiecewiseFunction([1.0, 0.5], [one, one, one])
