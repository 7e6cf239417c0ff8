"""Quasilinear impulsive systems

    x' = A x + f(t, x) + g(t),              t != theta_k
    x(theta_k+) = (I + B) x(theta_k) + h(x(theta_k))

with hypothesis checks, the Cauchy matrix, the exponential decay fit and the
constants that control boundedness, convergence under shifts and separation.
"""
from __future__ import annotations

import bisect
import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from . import matops
from .errors import DecayRateError, HypothesisViolation, NoPrincipalLogError, ParameterError
from .quadrature import adaptive_simpson
from .schedule import ImpulseSchedule
from .signals import VectorSequence

COMMUTE_TOL = 1e-9
DET_TOL = 1e-12
PERIODIC_TOL = 1e-9
CONSTANT_INFLATION = 1.01
CONSTANT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class QuasilinearImpulsiveSystem:
    A: np.ndarray
    B: np.ndarray
    f: tuple
    h: tuple
    schedule: ImpulseSchedule
    perturbation: VectorSequence
    f_period: float | None = None
    check_periodic: bool = True

    def __post_init__(self):
        A = matops.as_matrix(self.A)
        B = matops.as_matrix(self.B)
        m = A.shape[0]
        if B.shape != A.shape:
            raise ParameterError("A and B must have the same shape")
        state_vars = ["x%d" % (i + 1) for i in range(m)]
        f = tuple(ex.parse(e, variables={"t", *state_vars}) if isinstance(e, str) else e for e in self.f)
        h = tuple(ex.parse(e, variables=set(state_vars)) if isinstance(e, str) else e for e in self.h)
        if len(f) != m or len(h) != m:
            raise ParameterError(f"f and h must each have {m} components")
        for e in f:
            if not ex.free_variables(e) <= {"t", *state_vars}:
                raise ParameterError("f may only depend on t, x1..xm")
        for e in h:
            if not ex.free_variables(e) <= set(state_vars):
                raise ParameterError("h may only depend on x1..xm")
        if self.perturbation.dim != m:
            raise ParameterError("perturbation dimension does not match the system")
        period = self.schedule.omega if self.f_period is None else float(self.f_period)
        if abs(period - self.schedule.omega) > 1e-12 * self.schedule.omega:
            raise ParameterError("f_period must equal the schedule period omega")
        for name, value in (("A", A), ("B", B), ("f", f), ("h", h), ("f_period", period)):
            object.__setattr__(self, name, value)
        if self.check_periodic:
            self._verify_periodic()

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def state_vars(self) -> list[str]:
        return ["x%d" % (i + 1) for i in range(self.m)]

    @cached_property
    def f_fn(self) -> Callable:
        return ex.compile_vector(list(self.f), ["t", *self.state_vars])

    @cached_property
    def h_fn(self) -> Callable:
        return ex.compile_vector(list(self.h), self.state_vars)

    @cached_property
    def f_vec(self) -> Callable:
        return ex.compile_vector(list(self.f), ["t", *self.state_vars], vectorized=True)

    @cached_property
    def h_vec(self) -> Callable:
        return ex.compile_vector(list(self.h), self.state_vars, vectorized=True)

    @cached_property
    def I_plus_B(self) -> np.ndarray:
        return np.eye(self.m) + self.B

    def f_value(self, t: float, x) -> np.ndarray:
        return np.array(self.f_fn(t, *x))

    def h_value(self, x) -> np.ndarray:
        return np.array(self.h_fn(*x))

    def jump(self, x) -> np.ndarray:
        """Right limit at an impulse moment from the left value."""
        x = np.asarray(x, dtype=float)
        return self.I_plus_B @ x + self.h_value(x)

    def g(self, t: float) -> np.ndarray:
        return self.perturbation[self.schedule.block_index(t)]

    def _verify_periodic(self) -> None:
        rng = np.random.default_rng(12345)
        fn = self.f_fn
        for _ in range(64):
            t = float(rng.uniform(-10 * self.f_period, 10 * self.f_period))
            x = rng.uniform(-5.0, 5.0, size=self.m)
            try:
                a = fn(t, *x)
                b = fn(t + self.f_period, *x)
            except ex.ExprEvalError:
                continue
            if max(abs(u - v) for u, v in zip(a, b)) > PERIODIC_TOL * max(1.0, *map(abs, a)):
                raise ParameterError("f is not periodic in t with the schedule period")

    def replace(self, **changes) -> "QuasilinearImpulsiveSystem":
        return dataclasses.replace(self, **changes)

    def linear_part(self) -> "QuasilinearImpulsiveSystem":
        zero = ["0"] * self.m
        return self.replace(f=tuple(zero), h=tuple(zero))


@dataclass
class SystemConstants:
    M_f: float
    M_h: float
    L_f: float
    L_h: float
    M_sigma: float
    N: float
    lam: float
    provided: set = field(default_factory=set)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("M_f", "M_h", "L_f", "L_h", "M_sigma", "N", "lam")}
        d["provided"] = sorted(self.provided)
        d["flags"] = list(self.flags)
        return d


@dataclass
class FunctionConstants:
    M_f: float
    M_h: float
    L_f: float
    L_h: float
    provided: set = field(default_factory=set)
    flags: list = field(default_factory=list)


def estimate_function_constants(
    sys: QuasilinearImpulsiveSystem,
    box: Sequence[tuple[float, float]] | None = None,
    grid: int = 41,
    t_grid: int = 64,
    overrides: dict | None = None,
) -> FunctionConstants:
    """Sup norms and Lipschitz constants of f and h sampled on a grid.

    t runs over one period, x over ``box`` (default [-50, 50]^m). Lipschitz
    constants are the largest difference quotients between neighbouring grid
    points along each axis. Every sampled value is inflated by 1%; values in
    ``overrides`` win and are recorded as provided.
    """
    if grid < 10:
        raise ParameterError("at least 10 grid points per axis are required")
    overrides = dict(overrides or {})
    m = sys.m
    if box is None:
        box = [(-50.0, 50.0)] * m
    axes = [np.linspace(lo, hi, grid) for lo, hi in box]
    ts = np.arange(t_grid) * (sys.f_period / t_grid)
    mesh = np.meshgrid(ts, *axes, indexing="ij")
    flags = []

    def stack(fn, args):
        with np.errstate(all="ignore"):
            out = fn(*args)
        arrs = [np.broadcast_to(np.asarray(c, dtype=float), args[0].shape) for c in out]
        res = np.stack(arrs, axis=-1)
        if not np.all(np.isfinite(res)):
            raise ex.ExprEvalError("function is not finite on the sampling box")
        return res

    F = stack(sys.f_vec, mesh)
    Hmesh = np.meshgrid(*axes, indexing="ij")
    H = stack(sys.h_vec, Hmesh)

    def lipschitz(values, offset):
        best = 0.0
        for i, ax in enumerate(axes):
            d = np.diff(values, axis=i + offset)
            step = np.diff(ax)
            shape = [1] * (values.ndim - 1)
            shape[i + offset] = step.size
            q = np.linalg.norm(d, axis=-1) / step.reshape(shape)
            best = max(best, float(q.max()))
        return best

    est = {
        "M_f": float(np.linalg.norm(F, axis=-1).max()) * CONSTANT_INFLATION,
        "M_h": float(np.linalg.norm(H, axis=-1).max()) * CONSTANT_INFLATION,
        "L_f": lipschitz(F, 1) * CONSTANT_INFLATION,
        "L_h": lipschitz(H, 0) * CONSTANT_INFLATION,
    }
    provided = set()
    for k in list(est):
        if k in overrides and overrides[k] is not None:
            est[k] = float(overrides[k])
            provided.add(k)
        elif est[k] <= 0.0:
            est[k] = CONSTANT_FLOOR
            flags.append(f"{k} sampled as zero; floored at {CONSTANT_FLOOR}")
    return FunctionConstants(provided=provided, flags=flags, **est)


@dataclass
class Check:
    name: str
    verdict: bool | None
    lhs: float | None
    rhs: float | None
    detail: str = ""


@dataclass
class HypothesisReport:
    checks: list[Check]
    constants: SystemConstants

    @property
    def all_pass(self) -> bool:
        return all(c.verdict is True for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "all_pass": self.all_pass,
            "checks": [dataclasses.asdict(c) for c in self.checks],
            "constants": self.constants.to_dict(),
        }


def log_drift_matrix(sys: QuasilinearImpulsiveSystem) -> np.ndarray:
    """A + (p/omega) log(I + B)."""
    return sys.A + (sys.schedule.p / sys.schedule.omega) * matops.mat_log_principal(sys.I_plus_B)


def decay_rate(sys: QuasilinearImpulsiveSystem) -> float:
    """-max Re of the eigenvalues of A + (p/omega) log(I+B)."""
    return -max(z.real for z in matops.eigenvalues(log_drift_matrix(sys)))


def check_hypotheses(sys: QuasilinearImpulsiveSystem, consts: SystemConstants) -> HypothesisReport:
    A, B = sys.A, sys.B
    p, omega = sys.schedule.p, sys.schedule.omega
    N, lam = consts.N, consts.lam
    checks = []

    comm = matops.spectral_norm(A @ B - B @ A)
    comm_tol = COMMUTE_TOL * matops.spectral_norm(A) * matops.spectral_norm(B)
    d = matops.det(sys.I_plus_B)
    ok1 = bool(comm <= comm_tol and abs(d) > DET_TOL)
    checks.append(Check("A1", ok1, comm, comm_tol, f"||AB-BA||={comm:.3e}, det(I+B)={d:.6g}"))

    try:
        eigs = matops.eigenvalues(log_drift_matrix(sys))
        top = max(z.real for z in eigs)
        checks.append(Check("A2", top < 0.0, top, 0.0,
                            "eigenvalues " + ", ".join(f"{z.real:.6g}{z.imag:+.6g}i" for z in eigs)))
    except NoPrincipalLogError as exc:
        checks.append(Check("A2", None, None, 0.0, f"not checkable: {exc}"))

    ok3 = all(math.isfinite(v) and v > 0 for v in (consts.M_f, consts.M_h))
    checks.append(Check("A3", ok3, None, None, f"M_f={consts.M_f}, M_h={consts.M_h}"))
    ok4 = all(math.isfinite(v) and v > 0 for v in (consts.L_f, consts.L_h))
    checks.append(Check("A4", ok4, None, None, f"L_f={consts.L_f}, L_h={consts.L_h}"))

    a5 = N * (consts.L_f / lam + p * consts.L_h / (1.0 - math.exp(-lam * omega)))
    checks.append(Check("A5", a5 < 1.0, a5, 1.0))
    a6 = N * consts.L_f + (p / omega) * math.log(1.0 + N * consts.L_h)
    checks.append(Check("A6", a6 < lam, a6, lam))
    try:
        inv_norm = matops.spectral_norm(matops.inverse(sys.I_plus_B))
        a7 = consts.L_h * inv_norm
        checks.append(Check("A7", a7 < 1.0, a7, 1.0))
    except matops.SingularMatrixError:
        checks.append(Check("A7", False, math.inf, 1.0, "I+B is singular"))
    return HypothesisReport(checks, consts)


def cauchy_matrix(sys: QuasilinearImpulsiveSystem, t: float, s: float) -> np.ndarray:
    """U(t, s) = exp(A (t - s)) (I + B)^{i([s, t))}."""
    if t < s:
        raise ParameterError("cauchy_matrix requires t >= s")
    if t == s:
        return np.eye(sys.m)
    n = sys.schedule.count_impulses(s, t, include_left=True)
    return matops.mat_exp(sys.A * (t - s)) @ matops.mat_power(sys.I_plus_B, n)


def fit_decay_bound(
    sys: QuasilinearImpulsiveSystem,
    lambda_candidate: float,
    horizon: float | None = None,
    grid: int = 48,
    tau_step: float | None = None,
    return_samples: bool = False,
):
    """Smallest N with ||U(t,s)|| <= N exp(-lambda (t-s)) on a sample grid.

    s runs over [0, omega) plus both sides of every impulse moment in it;
    t - s runs over [0, horizon] plus both sides of every impulse moment
    reached. Raises DecayRateError when the scaled norm grows over the last
    tenth of the horizon.
    """
    sched = sys.schedule
    omega = sched.omega
    if lambda_candidate <= 0:
        raise ParameterError("lambda must be positive")
    horizon = 20.0 if horizon is None else float(horizon)
    if horizon < 5 * omega:
        raise ParameterError("horizon must be at least five periods")
    eps = 1e-9
    s_pts = set(np.arange(grid) * (omega / grid))
    for k in sched.moments_between(0.0, omega, include_left=True):
        th = sched.theta(k)
        s_pts.update(x for x in (th - eps, th, th + eps) if 0.0 <= x < omega)
    s_pts = sorted(s_pts)
    tau_step = omega / 200 if tau_step is None else tau_step
    base_taus = np.linspace(0.0, horizon, int(math.ceil(horizon / tau_step)) + 1)
    exp_cache: dict[float, np.ndarray] = {}

    def expA(tau):
        val = exp_cache.get(tau)
        if val is None:
            val = matops.mat_exp(sys.A * tau)
            exp_cache[tau] = val
        return val

    IB = sys.I_plus_B
    pow_cache = {0: np.eye(sys.m)}

    def powIB(n):
        if n not in pow_cache:
            pow_cache[n] = matops.mat_power(IB, n)
        return pow_cache[n]

    samples = []
    for s in s_pts:
        taus = set(base_taus.tolist())
        for k in sched.moments_between(s, s + horizon, include_left=False, include_right=True):
            th = sched.theta(k)
            taus.update(x for x in (th - s - eps, th - s + eps) if 0.0 <= x <= horizon)
        for tau in sorted(taus):
            n = sched.count_impulses(s, s + tau, include_left=True)
            U = np.eye(sys.m) if tau == 0.0 else expA(tau) @ powIB(n)
            samples.append((s, tau, matops.spectral_norm(U) * math.exp(lambda_candidate * tau)))
    arr = np.array(samples)
    N_fit = float(arr[:, 2].max())
    width = max(horizon / 10.0, omega)
    last = arr[arr[:, 1] >= horizon - width, 2].max()
    prev = arr[(arr[:, 1] >= horizon - 2 * width) & (arr[:, 1] < horizon - width), 2].max()
    if last > prev:
        raise DecayRateError("lambda exceeds the decay rate of the Cauchy matrix")
    return (N_fit, arr) if return_samples else N_fit


@dataclass
class DerivedConstants:
    gamma: float
    K1: float
    K2: float
    M_phi: float
    R_0: float
    theta_bar: float
    H_0: float
    epsilon_0: float
    r: float
    delta0: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def compute_derived_constants(consts: SystemConstants, sys: QuasilinearImpulsiveSystem, delta0: float) -> DerivedConstants:
    if not delta0 > 0:
        raise ParameterError("delta0 must be positive")
    N, lam = consts.N, consts.lam
    M_f, M_h, L_f, L_h, M_s = consts.M_f, consts.M_h, consts.L_f, consts.L_h, consts.M_sigma
    p, omega, m = sys.schedule.p, sys.schedule.omega, sys.m
    gamma = lam - N * L_f - (p / omega) * math.log(1.0 + N * L_h)
    if gamma <= 0:
        raise HypothesisViolation("(A6) violated: gamma <= 0")
    q = 1.0 - math.exp(-lam * omega)
    growth = (1.0 + N * L_h) ** p
    K1 = (2 * N * (M_f + M_s) / lam + 2 * p * N * M_h / q) * growth
    K2 = (N / lam
          + N ** 2 * L_f * growth / (lam * gamma)
          + N ** 2 * p * L_h * growth * math.exp(gamma * omega) / (lam * (1.0 - math.exp(-gamma * omega))))
    M_phi = N * (M_f + M_s) / lam + p * N * M_h / q
    normA = matops.spectral_norm(sys.A)
    normB = matops.spectral_norm(sys.B)
    normIB = matops.spectral_norm(sys.I_plus_B)
    normIBinv = matops.spectral_norm(matops.inverse(sys.I_plus_B))
    R_0 = normA * M_phi + M_f + M_s
    theta_bar = sys.schedule.theta_bar
    H_0 = omega * delta0 / ((2.0 + omega * (normA + L_f) + p * (normB + L_h)) * math.sqrt(m))
    jump_keep = (1.0 - L_h * normIBinv) / normIBinv
    eps0 = 0.5 * H_0 * min(1.0, jump_keep / 2.0, 1.0 / (2.0 * (normIB + L_h)))
    r = min(theta_bar / 3.0,
            H_0 / (4.0 * R_0),
            H_0 * jump_keep / (8.0 * R_0),
            H_0 / (8.0 * R_0 * (normIB + L_h)))
    return DerivedConstants(gamma, K1, K2, M_phi, R_0, theta_bar, H_0, eps0, r, float(delta0))


def default_lambda(sys: QuasilinearImpulsiveSystem) -> float:
    return 0.8 * decay_rate(sys)


def assemble_constants(
    sys: QuasilinearImpulsiveSystem,
    overrides: dict | None = None,
    box=None,
    grid: int = 41,
) -> SystemConstants:
    """Fill every constant, preferring explicit overrides to estimates."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    fc = estimate_function_constants(sys, box=box, grid=grid, overrides=overrides)
    provided = set(fc.provided)
    lam = overrides.get("lam", overrides.get("lambda"))
    if lam is None:
        lam = default_lambda(sys)
    else:
        provided.add("lam")
    N = overrides.get("N")
    if N is None:
        N = fit_decay_bound(sys, lam)
    else:
        provided.add("N")
    M_sigma = overrides.get("M_sigma")
    if M_sigma is None:
        M_sigma = sys.perturbation.M_sigma
    else:
        provided.add("M_sigma")
    return SystemConstants(fc.M_f, fc.M_h, fc.L_f, fc.L_h, float(M_sigma), float(N), float(lam),
                           provided=provided, flags=list(fc.flags))


class PiecewiseFunction:
    """Left-continuous piecewise function: ``pieces[i]`` is used on
    (breaks[i-1], breaks[i]], with open ends at +-infinity."""

    def __init__(self, breaks: Sequence[float], pieces: Sequence[Callable[[float], float]]):
        if len(pieces) != len(breaks) + 1:
            raise ParameterError("need exactly one more piece than breakpoints")
        self.breaks = [float(b) for b in breaks]
        if any(a >= b for a, b in zip(self.breaks, self.breaks[1:])):
            raise ParameterError("breakpoints must be strictly increasing")
        self.pieces = list(pieces)

    def piece_index(self, x: float) -> int:
        return bisect.bisect_left(self.breaks, x)

    def __call__(self, x: float) -> float:
        return self.pieces[self.piece_index(x)](x)


def _on_segment(fn, lo: float, hi: float) -> Callable[[float], float]:
    """Continuous extension of ``fn`` restricted to (lo, hi] onto [lo, hi]."""
    if isinstance(fn, PiecewiseFunction):
        return fn.pieces[fn.piece_index(0.5 * (lo + hi))]
    return fn


def gronwall_bound(t1: float, t: float, a, b, betas: Sequence[tuple[float, float]], tol: float = 1e-10) -> float:
    """Right-hand side of the piecewise Gronwall-Bellman inequality:

    a(t) + int_{t1}^t a(s) b(s) prod_{s<theta_k<t}(1+beta_k) exp(int_s^t b) ds
         + sum_{t1<theta_k<t} a(theta_k) beta_k prod_{theta_k<theta_j<t}(1+beta_j) exp(int_{theta_k}^t b)
    """
    if t < t1:
        raise ParameterError("gronwall_bound requires t1 <= t")
    moments = sorted((float(th), float(beta)) for th, beta in betas)
    for _, beta in moments:
        if beta < 0:
            raise ParameterError("impulse factors beta_k must be non-negative")
    inside = [(th, beta) for th, beta in moments if t1 < th < t]
    cuts = {th for th, _ in inside}
    for fn in (a, b):
        if isinstance(fn, PiecewiseFunction):
            cuts.update(x for x in fn.breaks if t1 < x < t)
    edges = [t1, *sorted(cuts), t]
    segs = list(zip(edges[:-1], edges[1:]))

    b_pieces = [_on_segment(b, lo, hi) for lo, hi in segs]
    a_pieces = [_on_segment(a, lo, hi) for lo, hi in segs]
    for (lo, hi), bp in zip(segs, b_pieces):
        for x in (lo, 0.5 * (lo + hi), hi):
            if bp(x) < 0:
                raise ParameterError("b must be non-negative")

    # cumulative int_{t1}^{edge} b
    cum = [0.0]
    for (lo, hi), bp in zip(segs, b_pieces):
        cum.append(cum[-1] + adaptive_simpson(bp, lo, hi, tol))
    total_b = cum[-1]

    def prod_after(x: float, strict_left: bool = True) -> float:
        out = 1.0
        for th, beta in inside:
            if th > x or (not strict_left and th >= x):
                out *= 1.0 + beta
        return out

    integral = 0.0
    for j, ((lo, hi), ap, bp) in enumerate(zip(segs, a_pieces, b_pieces)):
        if hi <= lo:
            continue
        # for s in (lo, hi) the jumps with s < theta_k < t are those at or after hi
        factor = prod_after(hi, strict_left=False)
        base = cum[j]

        def integrand(s, lo=lo, ap=ap, bp=bp, base=base):
            inner = base + (adaptive_simpson(bp, lo, s, tol) if s > lo else 0.0)
            return ap(s) * bp(s) * math.exp(total_b - inner)

        integral += factor * adaptive_simpson(integrand, lo, hi, tol)

    jumps = 0.0
    for idx, (th, beta) in enumerate(inside):
        j = edges.index(th)
        jumps += a(th) * beta * prod_after(th) * math.exp(total_b - cum[j])
    return a(t) + integral + jumps
