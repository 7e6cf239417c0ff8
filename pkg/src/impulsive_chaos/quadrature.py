"""Adaptive Simpson quadrature for scalar or vector integrands."""
from __future__ import annotations

import numpy as np


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 48, rel: bool = True):
    """Integrate ``f`` over [a, b]; ``f`` may return a float or a numpy vector.

    With ``rel`` the tolerance is relative to the magnitude of the coarse
    estimate (with an absolute floor of ``tol * 1e-6``).
    """
    if b == a:
        fa = np.asarray(f(a), dtype=float)
        return np.zeros_like(fa) if fa.ndim else 0.0
    fa = np.asarray(f(a), dtype=float)
    fb = np.asarray(f(b), dtype=float)
    m = 0.5 * (a + b)
    fm = np.asarray(f(m), dtype=float)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    eps = tol * max(float(np.max(np.abs(whole))), 1e-6) if rel else tol
    total = np.zeros_like(whole)
    stack = [(a, b, fa, fm, fb, whole, eps, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, e, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = np.asarray(f(lm), dtype=float)
        frm = np.asarray(f(rm), dtype=float)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - est
        if depth >= max_depth or float(np.max(np.abs(delta))) <= 15.0 * e:
            total = total + left + right + delta / 15.0
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, e / 2.0, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, e / 2.0, depth + 1))
    return total if np.ndim(total) else float(total)
