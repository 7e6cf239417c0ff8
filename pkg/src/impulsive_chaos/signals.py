"""Logistic-map orbits, vector lifts, the piecewise-constant forcing g(t),
and a search for shift/separation witnesses of an unpredictable sequence."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import ParameterError, SequenceRangeError
from .schedule import ImpulseSchedule

log = logging.getLogger(__name__)

MAX_ORBIT = 10 ** 8
LIFT_GRID = 100_000
LIFT_INFLATION = 1.001


@dataclass(frozen=True)
class ScalarOrbit:
    """Orbit z_0..z_{L-1} of z -> gamma z (1 - z).

    ``past`` optionally holds a backward orbit z_{-1}, z_{-2}, ... built from
    preimages, so that the sequence is defined on negative indices too.
    """

    gamma: float
    z0: float
    values: np.ndarray
    past: np.ndarray = field(default_factory=lambda: np.empty(0))


def logistic_orbit(gamma: float, z0: float, length: int) -> ScalarOrbit:
    if not (0.0 < gamma <= 4.0):
        raise ParameterError("gamma must lie in (0, 4]")
    if not (0.0 <= z0 <= 1.0):
        raise ParameterError("z0 must lie in [0, 1]")
    if not (1 <= length <= MAX_ORBIT):
        raise ParameterError("orbit length must be in [1, 1e8]")
    out = [0.0] * length
    z = float(z0)
    for k in range(length):
        out[k] = z
        z = gamma * z * (1.0 - z)
    return ScalarOrbit(gamma=float(gamma), z0=float(z0), values=np.array(out))


def logistic_preimages(gamma: float, z0: float, count: int) -> np.ndarray:
    """Backward orbit z_{-1}, ..., z_{-count} using the upper preimage branch.

    The upper branch contracts onto the fixed point 1 - 1/gamma, so the
    backward orbit is numerically stable. Returns fewer points if some value
    exceeds gamma/4 and has no real preimage.
    """
    out = []
    y = float(z0)
    for _ in range(count):
        disc = 1.0 - 4.0 * y / gamma
        if disc < 0.0:
            break
        y = 0.5 * (1.0 + math.sqrt(disc))
        out.append(y)
    return np.array(out)


def with_backward_orbit(orbit: ScalarOrbit, count: int = 256) -> ScalarOrbit:
    past = logistic_preimages(orbit.gamma, orbit.z0, count)
    return ScalarOrbit(orbit.gamma, orbit.z0, orbit.values, past)


@dataclass(frozen=True)
class VectorSequence:
    """sigma_k for k in [-len(past), len(values)); ``past[j]`` is sigma_{-1-j}.

    Indices below the stored past repeat the oldest stored value (sigma_0
    when there is no past).
    """

    values: np.ndarray
    M_sigma: float
    past: np.ndarray = None
    extension: str = "constant"

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.shape[0] == 0:
            raise ParameterError("sequence must be non-empty")
        object.__setattr__(self, "values", vals)
        past = self.past
        past = np.empty((0, vals.shape[1])) if past is None else np.atleast_2d(np.asarray(past, dtype=float))
        if past.size == 0:
            past = np.empty((0, vals.shape[1]))
        object.__setattr__(self, "past", past)
        norms = np.linalg.norm(vals, axis=1)
        top = float(norms.max())
        if past.shape[0]:
            top = max(top, float(np.linalg.norm(past, axis=1).max()))
        if self.M_sigma < top:
            raise ParameterError(f"M_sigma {self.M_sigma} below stored maximum norm {top}")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def first_index(self) -> int:
        return -self.past.shape[0]

    def __getitem__(self, k: int) -> np.ndarray:
        k = int(k)
        if k >= 0:
            if k >= len(self):
                raise SequenceRangeError(f"sequence index {k} beyond stored length {len(self)}")
            return self.values[k]
        j = -k - 1
        if j < self.past.shape[0]:
            return self.past[j]
        return self.past[-1] if self.past.shape[0] else self.values[0]

    def block(self, lo: int, hi: int) -> np.ndarray:
        """sigma_k for lo <= k < hi as a 2-D array."""
        return np.array([self[k] for k in range(lo, hi)]) if lo < 0 else self.values[lo:hi]

    @classmethod
    def constant(cls, value, length: int = 1) -> "VectorSequence":
        v = np.asarray(value, dtype=float)
        return cls(values=np.tile(v, (length, 1)), M_sigma=float(np.linalg.norm(v)))


def lift_sequence(orbit: ScalarOrbit, maps: list, extension: str | None = None) -> VectorSequence:
    """sigma_k = (map_1(z_k), ..., map_m(z_k)) with maps written in ``s``.

    M_sigma is the maximum map-vector norm over a 1e5-point grid of [0, 1],
    inflated by 0.1%, and never below the largest stored norm.
    """
    if not maps:
        raise ParameterError("at least one lift map is required")
    parsed = [ex.parse(m, variables={"s"}) if isinstance(m, str) else m for m in maps]
    fn = ex.compile_vector(parsed, ["s"], vectorized=True)

    def apply(z: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            cols = [np.broadcast_to(np.asarray(c, dtype=float), z.shape) for c in fn(z)]
        out = np.column_stack(cols) if z.size else np.empty((0, len(cols)))
        if not np.all(np.isfinite(out)):
            raise ex.ExprEvalError("lift map produced a non-finite value")
        return out

    values = apply(orbit.values)
    past = apply(orbit.past) if orbit.past.size else None
    grid = apply(np.linspace(0.0, 1.0, LIFT_GRID))
    bound = float(np.linalg.norm(grid, axis=1).max()) * LIFT_INFLATION
    stored = float(np.linalg.norm(values, axis=1).max())
    if past is not None:
        stored = max(stored, float(np.linalg.norm(past, axis=1).max()))
    if extension is None:
        extension = "preimage" if past is not None else "constant"
    return VectorSequence(values=values, M_sigma=max(bound, stored), past=past, extension=extension)


def perturbation_value(seq: VectorSequence, sched: ImpulseSchedule, t: float) -> np.ndarray:
    """g(t) = sigma_k for t in (theta_{kp}, theta_{(k+1)p}]."""
    return seq[sched.block_index(t)]


def convergence_score(seq: VectorSequence, shift: int, window: tuple[int, int]) -> float:
    """max_{k in [lo, hi)} ||sigma_{k+shift} - sigma_k||."""
    lo, hi = window
    if hi <= lo:
        raise ParameterError("empty window")
    if hi + shift > len(seq) or lo + shift < seq.first_index:
        raise SequenceRangeError("shifted window beyond stored range")
    a = seq.block(lo + shift, hi + shift)
    b = seq.block(lo, hi)
    return float(np.linalg.norm(a - b, axis=1).max())


def _all_scores(seq: VectorSequence, window: tuple[int, int], shifts: np.ndarray) -> np.ndarray:
    lo, hi = window
    scores = np.zeros(shifts.shape[0])
    for k in range(lo, hi):
        ref = seq[k]
        diff = seq.values[shifts + k] - ref
        np.maximum(scores, np.sqrt(np.einsum("ij,ij->i", diff, diff)), out=scores)
    return scores


MAX_ETA_ATTEMPTS = 200


def _first_separation(seq: VectorSequence, zeta: int, floor: float):
    """Smallest eta >= 1 with ||sigma_{zeta+eta} - sigma_eta|| >= floor."""
    n = len(seq)
    start, chunk = 1, 256
    while start + zeta < n:
        stop = min(start + chunk, n - zeta)
        d = np.linalg.norm(seq.values[start + zeta:stop + zeta] - seq.values[start:stop], axis=1)
        hits = np.nonzero(d >= floor)[0]
        if hits.size:
            return start + int(hits[0]), float(d[hits[0]])
        start, chunk = stop, chunk * 4
    return None


@dataclass
class Witness:
    zeta: int
    score: float
    eta: int
    separation: float


@dataclass
class WitnessReport:
    witnesses: list[Witness]
    delta0_est: float | None
    window: tuple[int, int]
    delta0_floor: float
    incomplete: bool = False

    @property
    def zetas(self) -> list[int]:
        return [w.zeta for w in self.witnesses]

    @property
    def etas(self) -> list[int]:
        return [w.eta for w in self.witnesses]

    @property
    def scores(self) -> list[float]:
        return [w.score for w in self.witnesses]

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "delta0_floor": self.delta0_floor,
            "delta0_est": self.delta0_est,
            "incomplete": self.incomplete,
            "witnesses": [
                {"zeta": w.zeta, "score": w.score, "eta": w.eta, "separation": w.separation}
                for w in self.witnesses
            ],
        }


def find_witnesses(
    seq: VectorSequence,
    window_len: int,
    num: int,
    delta0_floor: float = 0.5,
    window_start: int = 0,
) -> WitnessReport:
    """Exhaustive search for shifts zeta along which the sequence nearly repeats
    on the index window, each paired with the first eta >= 1 where
    ||sigma_{zeta+eta} - sigma_eta|| >= delta0_floor.

    Returns up to ``num`` witnesses ordered by strictly decreasing score.
    """
    if window_len < 1 or num < 1:
        raise ParameterError("window_len and num must be positive")
    window = (window_start, window_start + window_len)
    if window_start < seq.first_index and seq.extension == "preimage":
        log.warning("score window starts below the stored backward orbit")
    max_shift = len(seq) - window[1]
    if max_shift <= 1:
        raise SequenceRangeError("sequence too short for the requested window")
    # shifted indices must land in the forward part of the sequence
    shifts = np.arange(max(1, -window_start), max_shift)
    if shifts.size == 0:
        raise SequenceRangeError("sequence too short for the requested window")
    scores = _all_scores(seq, window, shifts)
    order = np.lexsort((shifts, scores))

    chosen: list[Witness] = []
    used_scores: set[float] = set()
    attempts = 0
    for idx in order:
        if len(chosen) == num or attempts >= MAX_ETA_ATTEMPTS:
            break
        zeta = int(shifts[idx])
        score = float(scores[idx])
        if score in used_scores:
            continue
        attempts += 1
        found = _first_separation(seq, zeta, delta0_floor)
        if found is None:
            continue
        eta, sep = found
        used_scores.add(score)
        chosen.append(Witness(zeta=zeta, score=score, eta=eta, separation=sep))
    chosen.sort(key=lambda w: -w.score)
    incomplete = len(chosen) < num
    if incomplete:
        log.warning("only %d of %d witnesses found", len(chosen), num)
    delta0 = min((w.separation for w in chosen), default=None)
    return WitnessReport(chosen, delta0, window, float(delta0_floor), incomplete)
