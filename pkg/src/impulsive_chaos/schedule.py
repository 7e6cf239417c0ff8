"""Regular impulse moments: theta_{k+p} = theta_k + omega."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class ImpulseSchedule:
    """p impulse moments per period omega, repeating forever in both directions.

    ``base`` holds theta_0 < ... < theta_{p-1} with theta_{p-1} < theta_0 + omega.
    """

    p: int
    omega: float
    base: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(b) for b in self.base))
        if self.p < 1 or int(self.p) != self.p:
            raise ParameterError("p must be a positive integer")
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ParameterError("omega must be positive and finite")
        if len(self.base) != self.p:
            raise ParameterError(f"expected {self.p} base moments, got {len(self.base)}")
        if not all(math.isfinite(b) for b in self.base):
            raise ParameterError("base moments must be finite")
        for a, b in zip(self.base, self.base[1:]):
            if not a < b:
                raise ParameterError("base moments must be strictly increasing")
        if not self.base[-1] < self.base[0] + self.omega:
            raise ParameterError("base moments must fit inside one period")

    @classmethod
    def from_dict(cls, d: dict) -> "ImpulseSchedule":
        return cls(p=int(d["p"]), omega=float(d["omega"]), base=tuple(d["base_thetas"]))

    def to_dict(self) -> dict:
        return {"omega": self.omega, "p": self.p, "base_thetas": list(self.base)}

    def theta(self, k: int) -> float:
        q, r = divmod(int(k), self.p)
        return self.base[r] + self.omega * q

    @property
    def theta_bar(self) -> float:
        """Smallest gap between consecutive moments."""
        gaps = [self.theta(k + 1) - self.theta(k) for k in range(self.p)]
        return min(gaps)

    def first_index_after(self, a: float, inclusive: bool = False) -> int:
        """Smallest k with theta_k > a (or >= a when ``inclusive``)."""
        # start one period below a; at most 2p+1 forward steps follow
        k = (math.floor((a - self.base[0]) / self.omega) - 1) * self.p
        while True:
            th = self.theta(k)
            if th > a or (inclusive and th == a):
                return k
            k += 1

    def last_index_before(self, b: float, inclusive: bool = True) -> int:
        """Largest k with theta_k <= b (or < b when not ``inclusive``)."""
        return self.first_index_after(b, inclusive=not inclusive) - 1

    def moments_between(self, a: float, b: float, include_left=False, include_right=False):
        """Indices k with theta_k in the interval between a and b."""
        if b < a:
            return range(0)
        lo = self.first_index_after(a, inclusive=include_left)
        hi = self.last_index_before(b, inclusive=include_right)
        return range(lo, max(lo, hi + 1))

    def count_impulses(self, a: float, b: float, include_left: bool = False) -> int:
        """Number of theta_k in (a, b), or in [a, b) with ``include_left``."""
        if b <= a:
            return 0
        return len(self.moments_between(a, b, include_left=include_left, include_right=False))

    def block_index(self, t: float) -> int:
        """The k with theta_{kp} < t <= theta_{(k+1)p}."""
        k = math.floor((t - self.base[0]) / self.omega)
        while self.theta(k * self.p) >= t:
            k -= 1
        while self.theta((k + 1) * self.p) < t:
            k += 1
        return k

    def block_start(self, k: int) -> float:
        return self.theta(k * self.p)
