"""Piecewise RK4 integration with exact jumps, the bounded solution, the
integral-equation residual and a stability probe."""
from __future__ import annotations

import bisect
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import matops
from .errors import CoverageError, HypothesisViolation, IntegrationError, ParameterError
from .quadrature import adaptive_simpson
from .system import (
    QuasilinearImpulsiveSystem,
    SystemConstants,
    check_hypotheses,
    compute_derived_constants,
)

DEFAULT_STEPS_PER_PERIOD = 2000
# a step count within this relative distance of an integer is not rounded up
STEP_ROUNDING = 1e-9


def default_step(sys: QuasilinearImpulsiveSystem) -> float:
    return sys.schedule.omega / DEFAULT_STEPS_PER_PERIOD


def system_fingerprint(sys: QuasilinearImpulsiveSystem) -> str:
    """Short hash of everything that determines a trajectory."""
    payload = {
        "A": sys.A.tolist(),
        "B": sys.B.tolist(),
        "f": [ex.to_text(e) for e in sys.f],
        "h": [ex.to_text(e) for e in sys.h],
        "schedule": sys.schedule.to_dict(),
        "extension": sys.perturbation.extension,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
    seq = sys.perturbation
    digest.update(np.ascontiguousarray(seq.values).tobytes())
    digest.update(np.ascontiguousarray(seq.past).tobytes())
    return digest.hexdigest()[:16]


@dataclass
class Segment:
    """Nodes of one continuity interval [t[0], t[-1]].

    ``x[0]`` is the state just after the left end (the post-jump value when
    the left end is an impulse moment) and ``x[-1]`` is the left limit at the
    right end. ``dx`` holds the vector field at every node.
    """

    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray

    @property
    def start(self) -> float:
        return float(self.t[0])

    @property
    def end(self) -> float:
        return float(self.t[-1])

    def hermite(self, ts) -> np.ndarray:
        """Cubic Hermite interpolation at times inside [start, end]."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.clip(np.searchsorted(self.t, ts, side="right") - 1, 0, len(self.t) - 2)
        t0 = self.t[idx]
        h = self.t[idx + 1] - t0
        u = ((ts - t0) / h)[:, None]
        h = h[:, None]
        x0, x1 = self.x[idx], self.x[idx + 1]
        d0, d1 = self.dx[idx], self.dx[idx + 1]
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        return h00 * x0 + h10 * h * d0 + h01 * x1 + h11 * h * d1


@dataclass
class Jump:
    k: int
    theta: float
    left: np.ndarray
    right: np.ndarray


@dataclass
class Trajectory:
    segments: list[Segment]
    jumps: list[Jump]
    meta: dict = field(default_factory=dict)

    @property
    def t0(self) -> float:
        return self.segments[0].start

    @property
    def t1(self) -> float:
        return self.segments[-1].end

    @property
    def dim(self) -> int:
        return self.segments[0].x.shape[1]

    @property
    def times(self) -> np.ndarray:
        """Strictly increasing sample times; at an impulse moment the sample
        is the left value and the right value lives in ``jumps``."""
        parts = [self.segments[0].t] + [s.t[1:] for s in self.segments[1:]]
        return np.concatenate(parts)

    @property
    def states(self) -> np.ndarray:
        parts = [self.segments[0].x] + [s.x[1:] for s in self.segments[1:]]
        return np.concatenate(parts)

    def all_states(self) -> np.ndarray:
        """Every node value including right limits at impulse moments."""
        return np.concatenate([s.x for s in self.segments])

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.all_states(), axis=1).max())

    def segment_index(self, t: float, side: str = "left") -> int:
        """Segment used for the ``side`` limit at t."""
        if not (self.t0 <= t <= self.t1):
            raise CoverageError(f"time {t} outside trajectory range [{self.t0}, {self.t1}]")
        starts = [s.start for s in self.segments]
        if side == "left":
            i = bisect.bisect_left(starts, t) - 1
        elif side == "right":
            i = bisect.bisect_right(starts, t) - 1
        else:
            raise ParameterError("side must be 'left' or 'right'")
        i = min(max(i, 0), len(self.segments) - 1)
        # t beyond the final node of the last segment is impossible here
        return i

    def segment_covering(self, lo: float, hi: float) -> Segment:
        """The segment whose closed range contains [lo, hi]."""
        mid = 0.5 * (lo + hi)
        seg = self.segments[self.segment_index(mid, "left" if mid > self.t0 else "right")]
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if lo < seg.start - tol or hi > seg.end + tol:
            raise CoverageError(f"[{lo}, {hi}] crosses an impulse moment")
        return seg

    def at(self, t: float, side: str = "left") -> np.ndarray:
        seg = self.segments[self.segment_index(t, side)]
        return seg.hermite([min(max(t, seg.start), seg.end)])[0]

    def sample(self, ts, side: str = "left") -> np.ndarray:
        return np.array([self.at(float(t), side) for t in np.atleast_1d(ts)])

    def max_slope(self) -> float:
        """Largest finite-difference slope between neighbouring nodes inside
        any continuity interval."""
        best = 0.0
        for s in self.segments:
            if len(s.t) > 1:
                q = np.linalg.norm(np.diff(s.x, axis=0), axis=1) / np.diff(s.t)
                best = max(best, float(q.max()))
        return best


def _segment_steps(length: float, step: float) -> int:
    return max(1, math.ceil(length / step - STEP_ROUNDING))


def _make_rhs(sys: QuasilinearImpulsiveSystem):
    A = sys.A.tolist()
    m = sys.m
    f = sys.f_fn.raw
    rows = range(m)

    if m == 2:
        (a00, a01), (a10, a11) = A

        def rhs(t, x, g):
            f0, f1 = f(t, x[0], x[1])
            return [a00 * x[0] + a01 * x[1] + f0 + g[0], a10 * x[0] + a11 * x[1] + f1 + g[1]]

        return rhs

    def rhs(t, x, g):
        fx = f(t, *x)
        return [sum(A[i][j] * x[j] for j in rows) + fx[i] + g[i] for i in rows]

    return rhs


def _rk4_segment(rhs, lo: float, hi: float, n: int, x0: list, g: list):
    h = (hi - lo) / n
    ts = [lo + i * h for i in range(n)] + [hi]
    xs = [x0]
    dxs = []
    x = x0
    m = len(x0)
    rng = range(m)
    for i in range(n):
        t = ts[i]
        k1 = rhs(t, x, g)
        k2 = rhs(t + 0.5 * h, [x[j] + 0.5 * h * k1[j] for j in rng], g)
        k3 = rhs(t + 0.5 * h, [x[j] + 0.5 * h * k2[j] for j in rng], g)
        k4 = rhs(ts[i + 1], [x[j] + h * k3[j] for j in rng], g)
        x = [x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) for j in rng]
        if not all(math.isfinite(v) for v in x):
            raise IntegrationError(f"state became non-finite after t={t}", last_good_time=t)
        dxs.append(k1)
        xs.append(x)
    dxs.append(rhs(hi, x, g))
    return ts, xs, dxs


def _integrate_core(sys, t0, x0, t1, step, rhs, jump) -> Trajectory:
    sched = sys.schedule
    seq = sys.perturbation
    gaps = [sched.theta(r + 1) - sched.theta(r) for r in range(sched.p)]
    ks = list(sched.moments_between(t0, t1))
    edges = [t0] + [sched.theta(k) for k in ks] + [t1]
    segments, jumps = [], []
    x = x0
    try:
        for j, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            # interior segments use the exact base gap so that runs shifted by
            # whole periods get identical step counts
            full = 0 < j < len(edges) - 2
            length = gaps[ks[j - 1] % sched.p] if full else hi - lo
            n = _segment_steps(length, step)
            g = seq[sched.block_index(0.5 * (lo + hi))].tolist()
            ts, xs, dxs = _rk4_segment(rhs, lo, hi, n, x, g)
            segments.append(Segment(np.array(ts), np.array(xs), np.array(dxs)))
            if j < len(ks):
                left = np.array(xs[-1])
                right = jump(left)
                if not np.all(np.isfinite(right)):
                    raise IntegrationError(f"jump at t={hi} produced a non-finite state", last_good_time=hi)
                jumps.append(Jump(ks[j], hi, left, right))
                x = right.tolist()
    except (ValueError, OverflowError, ZeroDivisionError, ex.ExprEvalError) as exc:
        last = segments[-1].end if segments else t0
        raise IntegrationError(f"right-hand side failed: {exc}", last_good_time=last) from None
    k0 = sched.first_index_after(t0, inclusive=True)
    meta = {
        "step": step,
        "system": system_fingerprint(sys),
        "extension": seq.extension,
        "t0_is_impulse": sched.theta(k0) == t0,
        "jump_at_t0": "not applied; x0 is the post-jump state",
        "jump_at_t1": "not applied; final node is the left limit",
    }
    return Trajectory(segments, jumps, meta)


def _check_run(sys, t0, x0, t1, step):
    step = default_step(sys) if step is None else float(step)
    if not t1 > t0:
        raise ParameterError("t1 must exceed t0")
    if not (step > 0 and math.isfinite(step)):
        raise ParameterError("step must be positive")
    x = [float(v) for v in np.asarray(x0, dtype=float).ravel()]
    if len(x) != sys.m or not all(math.isfinite(v) for v in x):
        raise ParameterError(f"x0 must be a finite vector of length {sys.m}")
    return x, step


def integrate(sys: QuasilinearImpulsiveSystem, t0: float, x0, t1: float, step: float | None = None) -> Trajectory:
    """Fixed-step RK4 between impulse moments with the jump map applied at
    every theta_k in (t0, t1).

    x0 is taken as the state just after t0 even when t0 is an impulse moment.
    The jump at t1 is not applied; the final node is the left limit there.
    """
    x, step = _check_run(sys, t0, x0, t1, step)
    return _integrate_core(sys, t0, x, t1, step, _make_rhs(sys), sys.jump)


def transient_time(sys: QuasilinearImpulsiveSystem, consts: SystemConstants, tol: float) -> float:
    """ln(C/tol)/gamma rounded up to whole periods, C = 2 M_phi N (1+N L_h)^p."""
    derived = compute_derived_constants(consts, sys, delta0=1.0)
    p, omega = sys.schedule.p, sys.schedule.omega
    C = 2.0 * derived.M_phi * consts.N * (1.0 + consts.N * consts.L_h) ** p
    raw = max(math.log(C / tol), 0.0) / derived.gamma
    return omega * max(1, math.ceil(raw / omega - STEP_ROUNDING))


def _require_existence(sys, consts) -> None:
    report = check_hypotheses(sys, consts)
    failed = [c.name for c in report.checks if c.name != "A7" and c.verdict is not True]
    if failed:
        raise HypothesisViolation("hypotheses not satisfied: " + ", ".join(failed))


def bounded_solution(
    sys: QuasilinearImpulsiveSystem,
    consts: SystemConstants,
    t_start: float,
    t_end: float,
    tol: float = 1e-6,
    step: float | None = None,
    transient: float | None = None,
    check: bool = True,
) -> Trajectory:
    """Approximation of the solution bounded on the whole axis, on [t_start, t_end].

    The system is integrated from 0 at t_start - T_transient; the discarded
    prefix decays below ``tol`` by asymptotic stability.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if not t_end > t_start:
        raise ParameterError("t_end must exceed t_start")
    if check:
        _require_existence(sys, consts)
    omega = sys.schedule.omega
    T = transient_time(sys, consts, tol) if transient is None else omega * math.ceil(transient / omega - STEP_ROUNDING)
    warm = integrate(sys, t_start - T, np.zeros(sys.m), t_start, step)
    x_start = warm.segments[-1].x[-1]
    start_is_impulse = False
    sched = sys.schedule
    k = sched.first_index_after(t_start, inclusive=True)
    if sched.theta(k) == t_start:
        start_is_impulse = True
        x_start = sys.jump(x_start)
    traj = integrate(sys, t_start, x_start, t_end, step)
    traj.meta.update({
        "transient": T,
        "transient_start": t_start - T,
        "tol": tol,
        "start_is_impulse": start_is_impulse,
        "past_forcing": f"indices below the stored orbit use the '{sys.perturbation.extension}' extension",
    })
    if start_is_impulse:
        traj.meta["left_value_at_start"] = warm.segments[-1].x[-1].tolist()
    return traj


def integral_equation_residual(
    traj: Trajectory,
    sys: QuasilinearImpulsiveSystem,
    consts: SystemConstants,
    sample_times,
    T_tail: float,
    quad_tol: float = 1e-9,
) -> float:
    """max_t ||x(t) - RHS(t)|| where RHS is the integral representation of the
    bounded solution truncated to (t - T_tail, t]."""
    sample_times = [float(t) for t in sample_times]
    if not sample_times:
        raise ParameterError("no sample times")
    if min(sample_times) - T_tail < traj.t0 - 1e-12 or max(sample_times) > traj.t1:
        raise CoverageError("trajectory does not cover the truncation window")
    sched = sys.schedule
    IB = sys.I_plus_B
    seq = sys.perturbation
    f = sys.f_fn
    worst = 0.0
    for t in sample_times:
        lo_t = t - T_tail
        ks = list(sched.moments_between(lo_t, t))
        edges = [lo_t] + [sched.theta(k) for k in ks] + [t]
        total = np.zeros(sys.m)
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi <= lo:
                continue
            seg = traj.segment_covering(lo, hi)
            n = sched.count_impulses(hi, t, include_left=True)
            outer = matops.mat_exp(sys.A * (t - hi)) @ matops.mat_power(IB, n)
            g = seq[sched.block_index(0.5 * (lo + hi))]

            def integrand(s, seg=seg, hi=hi, g=g):
                x = seg.hermite([s])[0]
                return matops.mat_exp(sys.A * (hi - s)) @ (np.array(f(s, *x)) + g)

            total += outer @ adaptive_simpson(integrand, lo, hi, quad_tol, rel=False)
        for k in ks:
            th = sched.theta(k)
            left = traj.at(th, "left")
            n = sched.count_impulses(th, t, include_left=False)
            total += matops.mat_exp(sys.A * (t - th)) @ matops.mat_power(IB, n) @ sys.h_value(left)
        worst = max(worst, float(np.linalg.norm(traj.at(t, "left") - total)))
    return worst


def tail_bound(consts: SystemConstants, sys: QuasilinearImpulsiveSystem, T_tail: float) -> float:
    """Analytic bound on the part of the integral representation older than T_tail."""
    p, omega = sys.schedule.p, sys.schedule.omega
    N, lam = consts.N, consts.lam
    return N * math.exp(-lam * T_tail) * (
        (consts.M_f + consts.M_sigma) / lam + p * consts.M_h / (1.0 - math.exp(-lam * omega)))


def tail_for_tolerance(consts: SystemConstants, sys: QuasilinearImpulsiveSystem, tol: float) -> float:
    """Smallest T_tail with tail_bound <= tol."""
    base = tail_bound(consts, sys, 0.0)
    return max(0.0, math.log(base / tol) / consts.lam)


@dataclass
class ProbeResult:
    slope: float
    times: np.ndarray
    log_distance: np.ndarray
    degenerate: bool = False
    message: str = ""


def _difference_run(sys, t0, xa, xb, t1, step) -> Trajectory:
    """Integrate (x_a, y = x_b - x_a) together.

    Carrying the difference as a state keeps it free of the cancellation
    that limits ||x_b - x_a|| to about 1e-16 ||x|| when both are integrated
    separately.
    """
    m = sys.m
    base = _make_rhs(sys)
    A = sys.A.tolist()
    f = sys.f_fn.raw
    rows = range(m)

    def rhs(t, z, g):
        x, y = z[:m], z[m:]
        fa, fb = f(t, *x), f(t, *[x[i] + y[i] for i in rows])
        return base(t, x, g) + [sum(A[i][j] * y[j] for j in rows) + (fb[i] - fa[i]) for i in rows]

    IB = sys.I_plus_B

    def jump(z):
        x, y = z[:m], z[m:]
        ha, hb = sys.h_value(x), sys.h_value(x + y)
        return np.concatenate([IB @ x + ha, IB @ y + (hb - ha)])

    z0 = list(xa) + [b - a for a, b in zip(xa, xb)]
    return _integrate_core(sys, t0, z0, t1, step, rhs, jump)


def stability_probe(
    sys: QuasilinearImpulsiveSystem,
    x0_a,
    x0_b,
    t0: float,
    t1: float,
    step: float | None = None,
    fit_window: tuple[float, float] | None = None,
    samples_per_period: int = 1,
) -> ProbeResult:
    """Least-squares slope of ln||x_a(t) - x_b(t)|| for two solutions.

    By default the fit uses [t0 + (t1 - t0)/4, t1] sampled once per period.
    """
    xa, step = _check_run(sys, t0, x0_a, t1, step)
    xb, _ = _check_run(sys, t0, x0_b, t1, step)
    if xa == xb:
        return ProbeResult(math.nan, np.empty(0), np.empty(0), True, "identical initial states")
    if samples_per_period < 1:
        raise ParameterError("samples_per_period must be positive")
    run = _difference_run(sys, t0, xa, xb, t1, step)
    lo, hi = fit_window if fit_window is not None else (t0 + 0.25 * (t1 - t0), t1)
    if not (t0 <= lo < hi <= t1):
        raise ParameterError("fit window must lie inside [t0, t1]")
    dt = sys.schedule.omega / samples_per_period
    ts = lo + dt * np.arange(int(math.floor((hi - lo) / dt + STEP_ROUNDING)) + 1)
    d = np.linalg.norm(run.sample(ts)[:, sys.m:], axis=1)
    zero = np.nonzero(d <= 0.0)[0]
    degenerate, message = False, ""
    if zero.size:
        ts, d = ts[:zero[0]], d[:zero[0]]
        degenerate, message = True, "distance underflowed; slope from the measurable prefix"
    if ts.size < 2:
        return ProbeResult(math.nan, ts, np.log(d), True, message or "too few samples")
    logd = np.log(d)
    slope = float(np.polyfit(ts, logd, 1)[0])
    return ProbeResult(slope, ts, logd, degenerate, message)


def csv_rows(traj: Trajectory):
    """Rows (t, state, event) in the documented CSV layout."""
    jumps = iter(traj.jumps)
    for i, seg in enumerate(traj.segments):
        first = 0
        if i > 0:
            jump = next(jumps)
            yield seg.t[0], jump.left, "jump-left"
            yield seg.t[0], jump.right, "jump-right"
            first = 1
        for t, x in zip(seg.t[first:], seg.x[first:]):
            yield t, x, ""


def _fmt(v: float) -> str:
    return "%.17g" % v


def write_csv(traj: Trajectory, path) -> None:
    m = traj.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *["x%d" % (i + 1) for i in range(m)], "event"])
        for t, x, event in csv_rows(traj):
            w.writerow([_fmt(float(t)), *(_fmt(float(v)) for v in x), event])


@dataclass
class TrajectoryTable:
    """Plain rows read back from a trajectory CSV."""

    t: np.ndarray
    x: np.ndarray
    events: list[str]
    names: list[str]

    def pieces(self):
        """Index ranges of continuity intervals, split at jump rows."""
        start = 0
        for i, ev in enumerate(self.events):
            if ev == "jump-left":
                yield start, i + 1
                start = i + 1
        yield start, len(self.events)


def read_csv(path) -> TrajectoryTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParameterError("empty CSV file")
    header = rows[0]
    if len(header) < 3 or header[0] != "t" or header[-1] != "event":
        raise ParameterError("CSV header must be t,x1,...,xm,event")
    names = header[1:-1]
    ts, xs, events = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParameterError(f"line {lineno}: expected {len(header)} fields")
        try:
            ts.append(float(row[0]))
            xs.append([float(v) for v in row[1:-1]])
        except ValueError:
            raise ParameterError(f"line {lineno}: malformed number") from None
        events.append(row[-1])
    if not ts:
        raise ParameterError("CSV file has no data rows")
    return TrajectoryTable(np.array(ts), np.array(xs), events, names)
