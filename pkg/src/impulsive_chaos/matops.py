"""Dense real linear algebra for small square matrices.

Matrices are plain ``numpy`` float arrays of shape ``(m, m)``; numpy is used
for storage and elementwise/matmul arithmetic only. Exponential, logarithm,
eigenvalues, spectral norm and inverse are computed here.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    MatrixOverflowError,
    NoPrincipalLogError,
    ParameterError,
    SingularMatrixError,
)


@dataclass(frozen=True)
class Tolerances:
    """Numerical constants used by this module (and asserted on by tests)."""

    qr_max_iter: int = 10_000
    qr_deflation: float = 1e-13
    pivot_rel: float = 1e-13
    power_max_iter: int = 20_000
    power_rel_change: float = 1e-15
    eigvec_cond_max: float = 1e8
    log_iss_radius: float = 0.25
    log_max_sqrt: int = 64
    overflow_limit: float = 1e300


TOL = Tolerances()

# Padé [13/13] coefficients and the 1-norm bound under which it is accurate
# to double precision.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def as_matrix(M) -> np.ndarray:
    """Validate and convert to a finite square float matrix."""
    arr = np.array(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ParameterError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("matrix has non-finite entries")
    return arr


def norm1(M: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(M), axis=0)))


def _lu_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting (works for complex too)."""
    n = M.shape[0]
    dtype = np.result_type(M, rhs, float)
    a = np.array(M, dtype=dtype)
    b = np.array(rhs, dtype=dtype)
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    scale = float(np.max(np.sum(np.abs(a), axis=1)))
    if scale == 0.0:
        raise SingularMatrixError("singular matrix")
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) <= TOL.pivot_rel * scale:
            raise SingularMatrixError("singular matrix")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        factors = a[col + 1:, col] / a[col, col]
        a[col + 1:, col:] -= np.outer(factors, a[col, col:])
        b[col + 1:] -= np.outer(factors, b[col])
    x = np.empty_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x[:, 0] if vec else x


def solve(M, rhs) -> np.ndarray:
    return _lu_solve(np.asarray(M), np.asarray(rhs))


def inverse(M) -> np.ndarray:
    """Inverse by Gaussian elimination with partial pivoting.

    Raises SingularMatrixError when a pivot drops below ``1e-13 * ||M||``.
    """
    M = as_matrix(M)
    return _lu_solve(M, np.eye(M.shape[0]))


def mat_power(M: np.ndarray, n: int) -> np.ndarray:
    """Non-negative integer power by binary exponentiation."""
    if n < 0:
        raise ParameterError("negative matrix power")
    result = np.eye(M.shape[0])
    base = np.array(M, dtype=float)
    while n:
        if n & 1:
            result = result @ base
        n >>= 1
        if n:
            base = base @ base
    return result


def mat_exp(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Padé [13/13] kernel."""
    M = as_matrix(M)
    n = M.shape[0]
    nrm = norm1(M)
    s = 0
    if nrm > _THETA13:
        s = max(0, int(math.ceil(math.log2(nrm / _THETA13))))
    X = M / (2.0 ** s)
    b = _PADE13
    ident = np.eye(n)
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X2 @ X4
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * ident)
    V = X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * ident
    R = _lu_solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
        if not np.all(np.isfinite(R)) or np.max(np.abs(R)) > TOL.overflow_limit:
            raise MatrixOverflowError("matrix exponential overflows double range")
    if not np.all(np.isfinite(R)):
        raise MatrixOverflowError("matrix exponential overflows double range")
    return R


def _eig2(a, b, c, d):
    peak = max(abs(a), abs(b), abs(c), abs(d))
    if peak == 0.0:
        return 0j, 0j
    pw = 2.0 ** math.frexp(peak)[1]
    r1, r2 = _eig2_unit(complex(a) / pw, complex(b) / pw, complex(c) / pw, complex(d) / pw)
    return r1 * pw, r2 * pw


def _eig2_unit(a, b, c, d):
    tr = a + d
    det = a * d - b * c
    disc = cmath.sqrt(tr * tr / 4.0 - det)
    half = tr / 2.0
    # pick the larger-magnitude root first, recover the other from det
    r1 = half + disc if abs(half + disc) >= abs(half - disc) else half - disc
    # recovering r2 from det is only safe when r1 is not itself tiny
    r2 = det / r1 if abs(r1) > 1e-150 else half - disc
    return r1, r2


def hessenberg(M) -> np.ndarray:
    """Upper Hessenberg form via Householder similarity transforms."""
    H = np.array(M, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _hessenberg_qr_eigs(H: np.ndarray) -> list[complex]:
    H = np.array(H, dtype=complex)
    hi = H.shape[0] - 1
    eigs: list[complex] = []
    total = 0
    since = 0
    scale = max(float(np.max(np.abs(H))), 1e-300)
    while hi >= 0:
        if hi == 0:
            eigs.append(complex(H[0, 0]))
            break
        lo = hi
        while lo > 0:
            sub = abs(H[lo, lo - 1])
            if sub <= TOL.qr_deflation * (abs(H[lo, lo]) + abs(H[lo - 1, lo - 1])) or sub <= 1e-300 * scale:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(complex(H[hi, hi]))
            hi -= 1
            since = 0
            continue
        if lo == hi - 1:
            eigs.extend(_eig2(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi]))
            hi -= 2
            since = 0
            continue
        total += 1
        since += 1
        if total > TOL.qr_max_iter:
            raise ConvergenceError("shifted QR iteration did not converge")
        if since % 11 == 0:
            mu = H[hi, hi] + 0.75 * abs(H[hi, hi - 1]) * (1 + 1j)
        else:
            r1, r2 = _eig2(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi])
            mu = r1 if abs(r1 - H[hi, hi]) < abs(r2 - H[hi, hi]) else r2
        # one shifted QR sweep on the active block via Givens rotations
        rot = []
        for k in range(lo, hi + 1):
            H[k, k] -= mu
        for k in range(lo, hi):
            x, y = H[k, k], H[k + 1, k]
            r = math.hypot(abs(x), abs(y))
            if r == 0.0:
                c, s = 1.0, 0.0
            else:
                c, s = x / r, y / r
            rot.append((c, s))
            row_k = H[k, k:hi + 1].copy()
            row_k1 = H[k + 1, k:hi + 1].copy()
            H[k, k:hi + 1] = np.conj(c) * row_k + np.conj(s) * row_k1
            H[k + 1, k:hi + 1] = -s * row_k + c * row_k1
        for k, (c, s) in zip(range(lo, hi), rot):
            top = min(k + 2, hi)
            col_k = H[lo:top + 1, k].copy()
            col_k1 = H[lo:top + 1, k + 1].copy()
            H[lo:top + 1, k] = col_k * c + col_k1 * s
            H[lo:top + 1, k + 1] = -col_k * np.conj(s) + col_k1 * np.conj(c)
        for k in range(lo, hi + 1):
            H[k, k] += mu
    return eigs


def eigenvalues(M) -> list[complex]:
    """All eigenvalues with multiplicity, sorted by (real, imag).

    Closed-form quadratic for m <= 2; Hessenberg reduction followed by
    Wilkinson-shifted QR otherwise.
    """
    M = as_matrix(M)
    n = M.shape[0]
    # work on a power-of-two rescaling so tiny or huge entries neither
    # underflow nor overflow; the rescaling is exact in binary
    peak = float(np.max(np.abs(M)))
    if peak == 0.0:
        return [0j] * n
    pw = 2.0 ** math.frexp(peak)[1]
    M = M / pw
    if n == 1:
        eigs = [complex(M[0, 0])]
    elif n == 2:
        eigs = list(_eig2(complex(M[0, 0]), complex(M[0, 1]), complex(M[1, 0]), complex(M[1, 1])))
    else:
        eigs = _hessenberg_qr_eigs(hessenberg(M))
    scale = float(np.max(np.abs(M)))
    cleaned = []
    for lam in eigs:
        lam = complex(lam)
        if abs(lam.imag) <= 1e-14 * scale:
            lam = complex(lam.real, 0.0)
        cleaned.append(lam * pw)
    return sorted(cleaned, key=lambda z: (z.real, z.imag))


def spectral_norm(M) -> float:
    """Largest singular value: closed form up to 2x2, else power iteration on ``M^T M``."""
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise ParameterError("expected a matrix")
    if not np.any(M):
        return 0.0
    if M.shape == (1, 1):
        return abs(float(M[0, 0]))
    # exact power-of-two rescaling keeps squares clear of underflow and overflow
    pw = 2.0 ** math.frexp(float(np.max(np.abs(M))))[1]
    M = M / pw
    if M.shape == (2, 2):
        # sigma_max^2 = (F + sqrt(F^2 - 4 det^2)) / 2 with F the squared Frobenius norm
        a, b, c, d = (float(v) for v in (M[0, 0], M[0, 1], M[1, 0], M[1, 1]))
        fro = a * a + b * b + c * c + d * d
        dt = a * d - b * c
        disc = max(fro * fro - 4.0 * dt * dt, 0.0)
        return pw * math.sqrt(0.5 * (fro + math.sqrt(disc)))
    G = M.T @ M
    n = G.shape[1]
    # deterministic start with irrational-ratio components
    v = np.sqrt(np.arange(2, n + 2, dtype=float))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(TOL.power_max_iter):
        w = G @ v
        new = float(v @ w)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            # start vector in the null space; restart from a basis vector
            v = np.roll(v, 1)
            continue
        v = w / wn
        if abs(new - est) <= TOL.power_rel_change * abs(new):
            est = new
            break
        est = new
    return pw * math.sqrt(max(est, 0.0))


def _principal_log_scalar(lam: complex) -> complex:
    return cmath.log(lam)


def _check_log_domain(eigs: list[complex], scale: float) -> None:
    for lam in eigs:
        if abs(lam) <= TOL.pivot_rel * scale:
            raise NoPrincipalLogError("no principal logarithm: singular matrix")
        if abs(lam.imag) <= 1e-14 * max(scale, abs(lam)) and lam.real < 0:
            raise NoPrincipalLogError("no principal logarithm: eigenvalue on the negative real axis")


def _eigvec(M: np.ndarray, lam: complex) -> np.ndarray:
    n = M.shape[0]
    shift = lam + (abs(lam) + 1.0) * 1e-10
    A = M.astype(complex) - shift * np.eye(n)
    v = np.ones(n, dtype=complex) / math.sqrt(n) + 1j * np.arange(n) / (10.0 * n)
    for _ in range(3):
        v = _lu_solve(A, v)
        v /= np.linalg.norm(v)
    return v


def _sqrtm_db(X: np.ndarray) -> np.ndarray:
    """Denman-Beavers square root iteration."""
    Y = X.copy()
    Z = np.eye(X.shape[0])
    for _ in range(100):
        Yn = 0.5 * (Y + _lu_solve(Z, np.eye(X.shape[0])))
        Zn = 0.5 * (Z + _lu_solve(Y, np.eye(X.shape[0])))
        done = norm1(Yn - Y) <= 1e-15 * norm1(Yn)
        Y, Z = Yn, Zn
        if done:
            return Y
    raise ConvergenceError("square-root iteration did not converge")


def _log_iss(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    ident = np.eye(n)
    X = M.copy()
    k = 0
    while norm1(X - ident) > TOL.log_iss_radius:
        X = _sqrtm_db(X)
        k += 1
        if k > TOL.log_max_sqrt:
            raise ConvergenceError("inverse scaling and squaring did not converge")
    Y = X - ident
    term = Y.copy()
    L = np.zeros_like(Y)
    for j in range(1, 200):
        L += ((-1) ** (j + 1)) / j * term
        term = term @ Y
        if norm1(term) / (j + 1) < 1e-18 * max(norm1(L), 1e-300):
            break
    return L * (2.0 ** k)


def mat_log_principal(M) -> np.ndarray:
    """Principal matrix logarithm of a real matrix.

    Diagonal input is handled entrywise; distinct, well-conditioned
    eigenvectors use an eigendecomposition; anything else falls back to
    inverse scaling and squaring.
    """
    M = as_matrix(M)
    n = M.shape[0]
    scale = max(float(np.max(np.abs(M))), 1e-300)
    eigs = eigenvalues(M)
    _check_log_domain(eigs, scale)
    if not np.any(M - np.diag(np.diag(M))):
        return np.diag(np.log(np.diag(M)))
    gap = min((abs(a - b) for i, a in enumerate(eigs) for b in eigs[i + 1:]), default=math.inf)
    if gap > 1e-8 * scale:
        try:
            V = np.column_stack([_eigvec(M, lam) for lam in eigs])
            Vinv = _lu_solve(V, np.eye(n, dtype=complex))
        except SingularMatrixError:
            # a nearly defective split eigenvalue; the eigenbasis is unusable
            Vinv = None
        if Vinv is not None and norm1(V) * norm1(Vinv) <= TOL.eigvec_cond_max:
            D = np.diag([_principal_log_scalar(lam) for lam in eigs])
            L = V @ D @ Vinv
            if np.max(np.abs(L.imag)) <= 1e-8 * max(1.0, np.max(np.abs(L.real))):
                return np.real(L).copy()
    return _log_iss(M)


def det(M) -> float:
    """Determinant by partial-pivoting elimination (no singularity threshold)."""
    a = as_matrix(M).copy()
    n = a.shape[0]
    sign = 1.0
    prod = 1.0
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if a[piv, col] == 0.0:
            return 0.0
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            sign = -sign
        prod *= a[col, col]
        a[col + 1:, col:] -= np.outer(a[col + 1:, col] / a[col, col], a[col, col:])
    return sign * prod
