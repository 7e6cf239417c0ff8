"""Numerical unpredictability diagnostics for the bounded solution: convergence
along time shifts on a compact interval, separation windows, and the
periodicity defect."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, ParameterError
from .integrate import Segment, Trajectory, _require_existence, bounded_solution, default_step
from .signals import WitnessReport, convergence_score
from .system import DerivedConstants, QuasilinearImpulsiveSystem, SystemConstants

# how many of the largest node differences are tried as window centres
MAX_WINDOW_CANDIDATES = 25
DENSE_PER_HALF_WINDOW = 50


class SolutionCache:
    """Memoized bounded-solution windows over one system.

    Shifted windows are integrated independently with the same transient
    length, so nodes of a window and of its copy moved by whole periods line
    up one to one.
    """

    def __init__(self, sys: QuasilinearImpulsiveSystem, consts: SystemConstants,
                 tol: float = 1e-6, step: float | None = None, check: bool = True):
        if check:
            _require_existence(sys, consts)
        self.sys = sys
        self.consts = consts
        self.tol = tol
        self.step = default_step(sys) if step is None else step
        self._store: dict[tuple[float, float], Trajectory] = {}

    def window(self, lo: float, hi: float) -> Trajectory:
        key = (float(lo), float(hi))
        traj = self._store.get(key)
        if traj is None:
            traj = bounded_solution(self.sys, self.consts, lo, hi, self.tol, self.step, check=False)
            self._store[key] = traj
        return traj


def _match_tol(t: float) -> float:
    return 1e-9 * max(1.0, abs(t))


def _partner(traj: Trajectory, start: float, end: float) -> Segment | None:
    for seg in traj.segments:
        if abs(seg.start - start) <= _match_tol(start) and abs(seg.end - end) <= _match_tol(end):
            return seg
    return None


def paired_differences(base: Trajectory, moved: Trajectory, shift: float, lo: float, hi: float):
    """Node times t in [lo, hi] of ``base`` with ||moved(t + shift) - base(t)||.

    Both one-sided values appear at impulse moments because every segment
    contributes its first and last node. Returns a list of (segment of base,
    segment of moved, times, differences).
    """
    out = []
    for seg in base.segments:
        if seg.end < lo or seg.start > hi:
            continue
        other = _partner(moved, seg.start + shift, seg.end + shift)
        if other is None:
            raise CoverageError(f"no shifted segment matching [{seg.start}, {seg.end}] + {shift}")
        if len(other.t) == len(seg.t):
            diff = other.x - seg.x
        else:
            diff = other.hermite(seg.t - seg.start + other.start) - seg.x
        mask = (seg.t >= lo) & (seg.t <= hi)
        out.append((seg, other, seg.t[mask], np.linalg.norm(diff[mask], axis=1)))
    if not out:
        raise CoverageError("no trajectory nodes inside the requested interval")
    return out


@dataclass
class ShiftEntry:
    zeta: int
    mu: float
    score: float
    sup_difference: float
    cap: float

    @property
    def within_cap(self) -> bool:
        return self.sup_difference <= self.cap


@dataclass
class ShiftConvergenceReport:
    entries: list[ShiftEntry]
    compact: tuple[float, float]
    warmup_periods: int
    score_window: tuple[int, int]

    @property
    def all_within_caps(self) -> bool:
        return all(e.within_cap for e in self.entries)

    @property
    def flagged(self) -> list[int]:
        return [e.zeta for e in self.entries if not e.within_cap]

    def to_dict(self) -> dict:
        return {
            "compact": list(self.compact),
            "warmup_periods": self.warmup_periods,
            "score_window": list(self.score_window),
            "all_within_caps": self.all_within_caps,
            "entries": [
                {"zeta": e.zeta, "mu": e.mu, "score": e.score, "sup_difference": e.sup_difference,
                 "cap": e.cap, "within_cap": e.within_cap}
                for e in self.entries
            ],
        }


def score_window_for(sys: QuasilinearImpulsiveSystem, compact, warmup_periods: int) -> tuple[int, int]:
    """Index window of the forcing blocks that meet [a - J omega, b]."""
    a, b = compact
    sched = sys.schedule
    return sched.block_index(a - warmup_periods * sched.omega), sched.block_index(b) + 1


def _span(sys, witnesses, compact, r):
    a, b = compact
    sched = sys.schedule
    lo, hi = a, b
    for w in witnesses.witnesses:
        lo = min(lo, sched.block_start(w.eta) - 2 * r)
        hi = max(hi, sched.block_start(w.eta + 1) + 2 * r)
    return lo, hi


@dataclass
class DiagnosticRun:
    """Shared trajectory windows so that convergence and separation reports
    are measured on the very same samples."""

    cache: SolutionCache
    span: tuple[float, float]

    def base(self) -> Trajectory:
        return self.cache.window(*self.span)

    def moved(self, mu: float) -> Trajectory:
        if mu == 0:
            return self.base()
        return self.cache.window(self.span[0] + mu, self.span[1] + mu)


def prepare_run(sys, consts, derived: DerivedConstants, witnesses: WitnessReport, compact,
                tol: float = 1e-6, step: float | None = None) -> DiagnosticRun:
    cache = SolutionCache(sys, consts, tol, step)
    return DiagnosticRun(cache, _span(sys, witnesses, compact, derived.r))


def shift_convergence(
    sys: QuasilinearImpulsiveSystem,
    consts: SystemConstants,
    derived: DerivedConstants,
    witnesses: WitnessReport,
    compact: tuple[float, float],
    warmup_periods: int,
    run: DiagnosticRun | None = None,
    tol: float = 1e-6,
    step: float | None = None,
) -> ShiftConvergenceReport:
    """sup over [a, b] of ||phi(t + omega zeta) - phi(t)|| against the cap
    K1 exp(-gamma omega J) + K2 s, with s the sequence score over the blocks
    meeting [a - J omega, b]."""
    a, b = compact
    if not b > a:
        raise ParameterError("compact interval must have b > a")
    if warmup_periods < 0:
        raise ParameterError("warmup_periods must be non-negative")
    run = run or prepare_run(sys, consts, derived, witnesses, compact, tol, step)
    omega = sys.schedule.omega
    window = score_window_for(sys, compact, warmup_periods)
    base = run.base()
    head = derived.K1 * math.exp(-derived.gamma * omega * warmup_periods)
    entries = []
    for w in witnesses.witnesses:
        mu = omega * w.zeta
        score = convergence_score(sys.perturbation, w.zeta, window) if w.zeta else 0.0
        pieces = paired_differences(base, run.moved(mu), mu, a, b)
        sup = max(float(d.max()) for *_, d in pieces if d.size)
        entries.append(ShiftEntry(w.zeta, mu, score, sup, head + derived.K2 * score))
    return ShiftConvergenceReport(entries, (a, b), warmup_periods, window)


@dataclass
class SeparationEntry:
    zeta: int
    eta: int
    mu: float
    tau: float | None
    r: float
    inf_difference: float | None
    threshold: float
    scanned: tuple[float, float]

    @property
    def found(self) -> bool:
        return self.tau is not None


@dataclass
class SeparationReport:
    entries: list[SeparationEntry]
    epsilon: float
    r: float
    samples_per_window: int = field(default=2 * DENSE_PER_HALF_WINDOW + 1)

    @property
    def all_found(self) -> bool:
        return bool(self.entries) and all(e.found for e in self.entries)

    @property
    def none_found(self) -> bool:
        return not any(e.found for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "epsilon_0": self.epsilon,
            "r": self.r,
            "samples_per_window": self.samples_per_window,
            "entries": [
                {"zeta": e.zeta, "eta": e.eta, "mu": e.mu, "found": e.found, "tau": e.tau,
                 "inf_difference": e.inf_difference, "threshold": e.threshold,
                 "scanned": list(e.scanned)}
                for e in self.entries
            ],
        }


def _dense_inf(seg: Segment, other: Segment, tau: float, r: float, spacing: float) -> float:
    n = max(2 * DENSE_PER_HALF_WINDOW, int(math.ceil(2 * r / spacing)))
    ts = np.linspace(tau - r, tau + r, n + 1)
    diff = other.hermite(ts - seg.start + other.start) - seg.hermite(ts)
    return float(np.linalg.norm(diff, axis=1).min())


def separation_scan(
    sys: QuasilinearImpulsiveSystem,
    derived: DerivedConstants,
    witnesses: WitnessReport,
    run: DiagnosticRun,
    scan_range: tuple[float, float] | None = None,
    sample_step: float | None = None,
    epsilon: float | None = None,
) -> SeparationReport:
    """For each witness look for tau with ||phi(t + mu) - phi(t)|| >= epsilon_0
    on all of [tau - r, tau + r], scanning the forcing block eta extended by r."""
    eps = derived.epsilon_0 if epsilon is None else float(epsilon)
    r = derived.r
    if not eps > 0:
        raise ParameterError("epsilon_0 must be positive")
    spacing = r / DENSE_PER_HALF_WINDOW if sample_step is None else float(sample_step)
    if not r > spacing:
        raise ParameterError("window half-length r must exceed the sample step")
    sched = sys.schedule
    omega = sched.omega
    base = run.base()
    entries = []
    for w in witnesses.witnesses:
        mu = omega * w.zeta
        lo = sched.block_start(w.eta) - r
        hi = sched.block_start(w.eta + 1) + r
        if scan_range is not None:
            lo, hi = max(lo, scan_range[0]), min(hi, scan_range[1])
        if lo < base.t0 or hi > base.t1:
            raise CoverageError("scan range outside the computed trajectory")
        candidates = []
        for seg, other, ts, d in paired_differences(base, run.moved(mu), mu, lo, hi):
            ok = (ts - r >= max(seg.start, lo)) & (ts + r <= min(seg.end, hi)) & (d >= eps)
            for t, v in zip(ts[ok], d[ok]):
                candidates.append((-float(v), float(t), seg, other))
        candidates.sort(key=lambda c: (c[0], c[1]))
        best_tau, best_inf = None, None
        for _, tau, seg, other in candidates[:MAX_WINDOW_CANDIDATES]:
            inf = _dense_inf(seg, other, tau, r, spacing)
            if inf >= eps and (best_inf is None or inf > best_inf):
                best_tau, best_inf = tau, inf
        entries.append(SeparationEntry(w.zeta, w.eta, mu, best_tau, r, best_inf, eps, (lo, hi)))
    return SeparationReport(entries, eps, r)


def difference_series(run: DiagnosticRun, mu: float, lo: float, hi: float):
    """(t, ||phi(t + mu) - phi(t)||) on trajectory nodes, for plotting."""
    pieces = paired_differences(run.base(), run.moved(mu), mu, lo, hi)
    ts = np.concatenate([p[2] for p in pieces])
    ds = np.concatenate([p[3] for p in pieces])
    return ts, ds


def periodicity_defect(traj: Trajectory, period: float, window: tuple[float, float] | None = None) -> float:
    """sup over nodes t in the window of ||x(t + period) - x(t)||.

    Defaults to every t with t + period inside the trajectory. At an impulse
    moment both one-sided values are compared with their counterparts.
    """
    if not period > 0:
        raise ParameterError("period must be positive")
    if traj.t1 - traj.t0 < 2 * period:
        raise CoverageError("trajectory shorter than two periods")
    lo, hi = window if window is not None else (traj.t0, traj.t1 - period)
    if lo < traj.t0 or hi + period > traj.t1 + _match_tol(traj.t1):
        raise CoverageError("window plus period exceeds the trajectory")
    best = 0.0
    for seg in traj.segments:
        if seg.end < lo or seg.start > hi:
            continue
        mask = (seg.t >= lo) & (seg.t <= hi)
        if not mask.any():
            continue
        other = _partner(traj, seg.start + period, seg.end + period)
        if other is not None and len(other.t) == len(seg.t):
            diff = (other.x - seg.x)[mask]
        else:
            ts = seg.t[mask]
            first = ts == seg.start
            moved = np.array([
                traj.at(min(t + period, traj.t1), "right" if is_first else "left")
                for t, is_first in zip(ts, first)
            ])
            diff = moved - seg.x[mask]
        best = max(best, float(np.linalg.norm(diff, axis=1).max()))
    return best
