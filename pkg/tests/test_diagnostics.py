import math

import numpy as np
import pytest

from impulsive_chaos.diagnostics import (
    difference_series,
    paired_differences,
    periodicity_defect,
    prepare_run,
    score_window_for,
    separation_scan,
    shift_convergence,
)
from impulsive_chaos.errors import CoverageError, ParameterError
from impulsive_chaos.integrate import Segment, Trajectory, bounded_solution, integrate
from impulsive_chaos.signals import Witness, WitnessReport, convergence_score

PI = math.pi
COMPACT = (0.0, 10.0)


def test_score_window_covers_warmup(full_sys):
    lo, hi = score_window_for(full_sys, COMPACT, 10)
    sched = full_sys.schedule
    assert sched.block_start(lo) < -10 * PI <= sched.block_start(lo + 1)
    assert sched.block_start(hi - 1) < 10.0 <= sched.block_start(hi)


def test_witness_search_on_example(diag):
    wit, derived, _ = diag
    assert len(wit.witnesses) == 5
    assert all(a > b for a, b in zip(wit.scores, wit.scores[1:]))
    assert wit.delta0_est >= 0.5
    assert derived.epsilon_0 > 0


def test_shift_convergence_within_caps(full_sys, consts, diag):
    wit, derived, run = diag
    rep = shift_convergence(full_sys, consts, derived, wit, COMPACT, 10, run=run)
    assert rep.all_within_caps and rep.flagged == []
    window = score_window_for(full_sys, COMPACT, 10)
    for e, w in zip(rep.entries, wit.witnesses):
        assert e.mu == PI * w.zeta
        assert e.score == convergence_score(full_sys.perturbation, w.zeta, window)
        head = derived.K1 * math.exp(-derived.gamma * PI * 10)
        assert e.cap == pytest.approx(head + derived.K2 * e.score, rel=1e-14)
    sups = [e.sup_difference for e in rep.entries]
    assert sups[-1] == min(sups)
    d = rep.to_dict()
    assert d["all_within_caps"] is True and len(d["entries"]) == 5


def test_sup_difference_survives_denser_resampling(diag):
    wit, _, run = diag
    mu = PI * wit.witnesses[-1].zeta
    ts, ds = difference_series(run, mu, *COMPACT)
    # midpoints between nodes double the sampling density
    mids = 0.5 * (ts[1:] + ts[:-1])
    mids = mids[np.diff(ts) > 0]
    base, moved = run.base(), run.moved(mu)
    dense = np.linalg.norm(moved.sample(mids + mu) - base.sample(mids), axis=1)
    assert max(ds.max(), dense.max()) <= 1.02 * ds.max()


def test_zero_shift_has_zero_difference(full_sys, consts, diag):
    _, derived, run = diag
    rep0 = WitnessReport([Witness(0, 0.0, 1, 1.0)], 1.0, (0, 10), 0.5)
    rep = shift_convergence(full_sys, consts, derived, rep0, COMPACT, 10, run=run)
    assert rep.entries[0].sup_difference == 0.0


def test_constant_forcing_shift_is_periodic(long_constant_sys, consts, diag):
    wit, derived, _ = diag
    run = prepare_run(long_constant_sys, consts, derived, wit, COMPACT)
    rep = shift_convergence(long_constant_sys, consts, derived, wit, COMPACT, 10, run=run)
    assert all(e.score == 0.0 for e in rep.entries)
    assert all(e.sup_difference <= 2e-6 for e in rep.entries)
    sep = separation_scan(long_constant_sys, derived, wit, run)
    assert sep.none_found


def test_separation_windows_found(full_sys, diag):
    wit, derived, run = diag
    rep = separation_scan(full_sys, derived, wit, run)
    assert rep.all_found
    for e in rep.entries:
        assert e.inf_difference >= derived.epsilon_0
        assert e.scanned[0] <= e.tau - e.r and e.tau + e.r <= e.scanned[1]
        # independent re-sampling of the window at twice the density
        ts = np.linspace(e.tau - e.r, e.tau + e.r, 201)
        side = "right" if ts[0] == run.base().segments[run.base().segment_index(e.tau)].start else "left"
        d = np.linalg.norm(run.moved(e.mu).sample(ts + e.mu, side) - run.base().sample(ts, side), axis=1)
        assert d.min() == pytest.approx(e.inf_difference, rel=0.02)
    assert rep.to_dict()["r"] == derived.r


def test_impossible_threshold_finds_nothing(full_sys, diag):
    wit, derived, run = diag
    rep = separation_scan(full_sys, derived, wit, run, epsilon=2 * derived.M_phi)
    assert rep.none_found and not rep.all_found


def test_separation_argument_errors(full_sys, diag):
    wit, derived, run = diag
    with pytest.raises(ParameterError):
        separation_scan(full_sys, derived, wit, run, sample_step=2 * derived.r)
    with pytest.raises(ParameterError):
        separation_scan(full_sys, derived, wit, run, epsilon=0.0)
    far = WitnessReport([Witness(wit.zetas[0], 0.0, 10_000, 1.0)], 1.0, (0, 10), 0.5)
    with pytest.raises(CoverageError):
        separation_scan(full_sys, derived, far, run)


def test_paired_differences_need_matching_segments(diag):
    _, _, run = diag
    with pytest.raises(CoverageError):
        paired_differences(run.base(), run.base(), 0.3, *COMPACT)


def test_periodicity_defect_chaotic_vs_constant(ex_sys, constant_sys, consts):
    traj = integrate(ex_sys, 0.6, [0.3, 0.8], 60.0)
    assert periodicity_defect(traj, PI, (10.0, 60.0 - PI)) >= 0.05
    per = bounded_solution(constant_sys, consts, 0.0, 6 * PI)
    assert periodicity_defect(per, PI) <= 2e-6


def test_periodicity_defect_of_tiled_copy_is_zero(constant_sys, consts):
    one = bounded_solution(constant_sys, consts, 0.0, PI)
    segs, jumps = [], []
    for q in range(4):
        for s in one.segments:
            segs.append(Segment(s.t + q * PI, s.x.copy(), s.dx.copy()))
        jumps.extend(one.jumps)
    # the tiled copy repeats node for node, so every compared pair is identical
    tiled = Trajectory(segs, jumps, {})
    assert periodicity_defect(tiled, PI, (0.0, 2 * PI)) == 0.0


def test_periodicity_defect_errors(ex_sys):
    traj = integrate(ex_sys, 0.6, [0.3, 0.8], 5.0)
    with pytest.raises(CoverageError):
        periodicity_defect(traj, PI)
    with pytest.raises(ParameterError):
        periodicity_defect(traj, 0.0)
