"""Brute-force evaluation of the piecewise Gronwall bound by fine trapezoid
quadrature, written independently of the library's adaptive scheme."""
import math
import random

import numpy as np

from impulsive_chaos.system import PiecewiseFunction

STEP = 1e-5


def smooth(c0, c1, c2, c3):
    """c0 + c1 x + c2 sin(c3 x), usable on floats and arrays."""
    def fn(x):
        return c0 + c1 * x + c2 * np.sin(c3 * x)
    fn.coeffs = (c0, c1, c2, c3)
    return fn


def random_instance(rng: random.Random):
    t1 = rng.uniform(-1.0, 1.0)
    t = t1 + rng.uniform(0.5, 4.0)
    n_imp = rng.randint(0, 4)
    thetas = sorted(rng.uniform(t1 + 0.05, t - 0.05) for _ in range(n_imp))
    thetas = [th for i, th in enumerate(thetas) if i == 0 or th - thetas[i - 1] > 0.02]
    betas = [(th, rng.uniform(0.0, 1.5)) for th in thetas]
    a_pieces = [smooth(rng.uniform(0.5, 2.0), rng.uniform(-0.1, 0.1), rng.uniform(-0.3, 0.3), rng.uniform(0.5, 3.0))
                for _ in range(len(thetas) + 1)]
    b_pieces = [smooth(rng.uniform(0.5, 1.0), 0.0, rng.uniform(0.0, 0.4), rng.uniform(0.5, 3.0))
                for _ in range(len(thetas) + 1)]
    return t1, t, PiecewiseFunction(thetas, a_pieces), PiecewiseFunction(thetas, b_pieces), betas


def brute_force(t1, t, a: PiecewiseFunction, b: PiecewiseFunction, betas):
    inside = [(th, be) for th, be in betas if t1 < th < t]
    edges = [t1] + [th for th, _ in inside] + [t]
    grids, avals, bvals = [], [], []
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        n = max(int(math.ceil((hi - lo) / STEP)), 2)
        xs = np.linspace(lo, hi, n + 1)
        # segment i lies between the breakpoints, so piece i applies on it
        grids.append(xs)
        avals.append(a.pieces[i](xs))
        bvals.append(b.pieces[i](xs))
    # cumulative integral of b from t1 to every grid point
    cum_b, offset = [], 0.0
    for xs, bv in zip(grids, bvals):
        c = np.concatenate([[0.0], np.cumsum(0.5 * (bv[1:] + bv[:-1]) * np.diff(xs))])
        cum_b.append(offset + c)
        offset += c[-1]
    total = offset
    integral = 0.0
    for i, (xs, av, bv, cb) in enumerate(zip(grids, avals, bvals, cum_b)):
        factor = 1.0
        for th, be in inside[i:]:
            factor *= 1.0 + be
        y = av * bv * factor * np.exp(total - cb)
        integral += float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(xs)))
    jumps = 0.0
    for j, (th, be) in enumerate(inside):
        after = 1.0
        for _, be2 in inside[j + 1:]:
            after *= 1.0 + be2
        a_left = float(avals[j][-1])
        jumps += a_left * be * after * math.exp(total - cum_b[j][-1])
    return float(avals[-1][-1]) + integral + jumps
