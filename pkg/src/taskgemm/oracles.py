"""Independent reference computations used by ``taskgemm verify`` and the tests.

None of these share code with the kernels they check: GEMM is a pure-Python
triple loop, the reduced density matrix is built by explicit index summation,
and spectra come from LAPACK (``numpy.linalg.eigvalsh``) or from bisection on
the characteristic polynomial.
"""
from __future__ import annotations

import math

import numpy as np


def naive_gemm(alpha, a, b, beta, c):
    """alpha*a@b + beta*c with Python complex arithmetic, ascending-k sums."""
    a = np.asarray(a)
    b = np.asarray(b)
    c = np.asarray(c)
    m, depth = a.shape
    n = b.shape[1]
    al = complex(alpha)
    be = complex(beta)
    out = np.empty((m, n), dtype=np.complex128)
    for i in range(m):
        for j in range(n):
            s = 0j
            for p in range(depth):
                s += complex(a[i, p]) * complex(b[p, j])
            out[i, j] = al * s + be * complex(c[i, j])
    return out


def frobenius_by_summation(a):
    total = 0.0
    for z in np.asarray(a).ravel():
        total += abs(complex(z)) ** 2
    return math.sqrt(total)


def reduced_density_by_summation(amplitudes, spins):
    """rho_A[a, a'] = sum_b psi[a + b*d_a] * conj(psi[a' + b*d_a])."""
    psi = np.asarray(amplitudes)
    d_a = 1 << (spins // 2)
    d_b = 1 << (spins - spins // 2)
    rho = np.zeros((d_a, d_a), dtype=np.complex128)
    for a in range(d_a):
        for a2 in range(d_a):
            s = 0j
            for bb in range(d_b):
                s += psi[a + bb * d_a] * np.conj(psi[a2 + bb * d_a])
            rho[a, a2] = s
    return rho


def von_neumann_dense(rho, cutoff=1e-15):
    lam = np.linalg.eigvalsh(rho)
    lam = lam[lam > cutoff]
    return max(0.0, -float(np.sum(lam * np.log(lam))))


def reference_entropy(amplitudes, spins):
    return von_neumann_dense(reduced_density_by_summation(amplitudes, spins))


def kron_two_site_operator(spins, site, u):
    """Dense 2**S x 2**S operator I (x) U (x) I acting on (site, site+1)."""
    high = np.eye(1 << (spins - site - 2))
    low = np.eye(1 << site)
    return np.kron(high, np.kron(np.asarray(u), low))


def _det(m):
    # Gaussian elimination with partial pivoting, Python complex
    a = [[complex(x) for x in row] for row in m]
    n = len(a)
    det = 1 + 0j
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[piv][col]) == 0:
            return 0j
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for k in range(col, n):
                a[r][k] -= f * a[col][k]
    return det


def charpoly_eigenvalues(h, grid=4000, iters=200):
    """Eigenvalues of a Hermitian matrix as sign changes of det(H - x I), refined by bisection.

    Assumes simple, reasonably separated eigenvalues (true for random matrices).
    """
    h = np.asarray(h, dtype=np.complex128)
    n = h.shape[0]
    bound = float(np.sqrt(np.sum(np.abs(h) ** 2))) + 1.0
    eye = np.eye(n)

    def f(x):
        return _det(h - x * eye).real

    xs = np.linspace(-bound, bound, grid)
    vals = [f(x) for x in xs]
    roots = []
    for i in range(grid - 1):
        lo, hi, flo = xs[i], xs[i + 1], vals[i]
        if flo == 0.0:
            roots.append(lo)
            continue
        if flo * vals[i + 1] < 0:
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if fm == 0.0 or mid in (lo, hi):
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    return np.array(sorted(roots))
