"""Dense complex linear algebra: GEMM (plain and tiled), Hermitian eigenvalues, norms.

Matrices are stored column-major. Every GEMM output element is accumulated
in ascending-k order by the same scalar code path, so the plain kernel, the
tiled kernel and any executor that calls them agree bitwise.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import PreconditionError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 30
HERMITIAN_TOL = 1e-10

# test-only hook, see fault_injection()
_fault = False


class ComplexMatrix:
    """Immutable dense complex128 matrix in column-major (Fortran) layout."""

    __slots__ = ("_a",)

    def __init__(self, array):
        a = np.array(array, dtype=np.complex128, order="F", copy=True, ndmin=2)
        if a.ndim != 2:
            raise PreconditionError(f"expected a 2-D array, got ndim={a.ndim}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise PreconditionError(f"matrix must be at least 1x1, got {a.shape}")
        a.flags.writeable = False
        self._a = a

    @classmethod
    def _wrap(cls, a):
        # takes ownership of a fresh F-ordered complex128 array without copying
        m = cls.__new__(cls)
        a.flags.writeable = False
        m._a = a
        return m

    @classmethod
    def from_data(cls, rows, cols, data):
        """Build from a flat column-major sequence of length rows*cols."""
        flat = np.asarray(data, dtype=np.complex128).ravel()
        if flat.size != rows * cols:
            raise PreconditionError(
                f"data length {flat.size} does not match {rows}x{cols}"
            )
        return cls(flat.reshape((rows, cols), order="F"))

    @classmethod
    def zeros(cls, rows, cols):
        return cls._wrap(np.zeros((rows, cols), dtype=np.complex128, order="F"))

    @classmethod
    def identity(cls, n):
        return cls._wrap(np.asfortranarray(np.eye(n, dtype=np.complex128)))

    @classmethod
    def random(cls, rows, cols, rng):
        """Standard complex Gaussian entries from a numpy Generator (test helper)."""
        z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
        return cls._wrap(np.asfortranarray(z))

    @property
    def rows(self):
        return self._a.shape[0]

    @property
    def cols(self):
        return self._a.shape[1]

    @property
    def shape(self):
        return self._a.shape

    @property
    def array(self):
        """Read-only 2-D view."""
        return self._a

    @property
    def data(self):
        """Read-only flat column-major view of length rows*cols."""
        return self._a.ravel(order="F")

    def conj_transpose(self):
        return ComplexMatrix._wrap(np.asfortranarray(self._a.conj().T))

    def identical(self, other):
        """Bitwise equality of shape and every real/imaginary component."""
        return (
            self.shape == other.shape
            and self._a.tobytes(order="F") == other._a.tobytes(order="F")
        )

    def __eq__(self, other):
        if not isinstance(other, ComplexMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._a, other._a))

    __hash__ = None

    def __repr__(self):
        return f"ComplexMatrix({self.rows}x{self.cols})"


@njit(nogil=True, cache=True, inline="always")
def _mac(sr, si, x, y):
    return (
        sr + (x.real * y.real - x.imag * y.imag),
        si + (x.real * y.imag + x.imag * y.real),
    )


@njit(nogil=True, cache=True, inline="always")
def _finish(alpha, sr, si, beta, z):
    re = (alpha.real * sr - alpha.imag * si) + (beta.real * z.real - beta.imag * z.imag)
    im = (alpha.real * si + alpha.imag * sr) + (beta.real * z.imag + beta.imag * z.real)
    return complex(re, im)


@njit(nogil=True, cache=True)
def _gemm_kernel(alpha, a_rows, b, beta, c, out, fault):
    # a_rows is C-ordered so a row of A is contiguous; b and c are F-ordered
    m, depth = a_rows.shape
    n = b.shape[1]
    for j in range(n):
        for i in range(m):
            sr = 0.0
            si = 0.0
            for p in range(depth):
                sr, si = _mac(sr, si, a_rows[i, p], b[p, j])
            if fault and i == 0 and j == 0:
                sr = -sr
            out[i, j] = _finish(alpha, sr, si, beta, c[i, j])


@njit(nogil=True, cache=True)
def _gemm_tiled_kernel(alpha, a_rows, b, beta, c, out, tile, fault):
    m, depth = a_rows.shape
    n = b.shape[1]
    tm = min(tile, m)
    tn = min(tile, n)
    acc_r = np.empty((tm, tn))
    acc_i = np.empty((tm, tn))
    for j0 in range(0, n, tile):
        j1 = min(j0 + tile, n)
        for i0 in range(0, m, tile):
            i1 = min(i0 + tile, m)
            acc_r[:, :] = 0.0
            acc_i[:, :] = 0.0
            for p0 in range(0, depth, tile):
                p1 = min(p0 + tile, depth)
                for j in range(j0, j1):
                    for i in range(i0, i1):
                        sr = acc_r[i - i0, j - j0]
                        si = acc_i[i - i0, j - j0]
                        for p in range(p0, p1):
                            sr, si = _mac(sr, si, a_rows[i, p], b[p, j])
                        acc_r[i - i0, j - j0] = sr
                        acc_i[i - i0, j - j0] = si
            for j in range(j0, j1):
                for i in range(i0, i1):
                    sr = acc_r[i - i0, j - j0]
                    si = acc_i[i - i0, j - j0]
                    if fault and i == 0 and j == 0:
                        sr = -sr
                    out[i, j] = _finish(alpha, sr, si, beta, c[i, j])


def _check_conformant(A, B, C):
    if A.cols != B.rows:
        raise PreconditionError(f"A.cols={A.cols} != B.rows={B.rows} (A, B)")
    if C.rows != A.rows:
        raise PreconditionError(f"C.rows={C.rows} != A.rows={A.rows} (C, A)")
    if C.cols != B.cols:
        raise PreconditionError(f"C.cols={C.cols} != B.cols={B.cols} (C, B)")


def gemm(alpha, A, B, beta, C):
    """Return alpha*A@B + beta*C as a new matrix; inputs are not modified."""
    _check_conformant(A, B, C)
    out = np.empty((A.rows, B.cols), dtype=np.complex128, order="F")
    _gemm_kernel(
        complex(alpha), np.ascontiguousarray(A.array), B.array,
        complex(beta), C.array, out, _fault,
    )
    return ComplexMatrix._wrap(out)


def gemm_tiled(alpha, A, B, beta, C, tile):
    """Tiled GEMM over a 2-D grid of output tiles with k-blocks of the same width.

    Bitwise-identical to :func:`gemm` for every tile size.
    """
    _check_conformant(A, B, C)
    if int(tile) < 1:
        raise PreconditionError(f"tile must be >= 1, got {tile}")
    out = np.empty((A.rows, B.cols), dtype=np.complex128, order="F")
    _gemm_tiled_kernel(
        complex(alpha), np.ascontiguousarray(A.array), B.array,
        complex(beta), C.array, out, int(tile), _fault,
    )
    return ComplexMatrix._wrap(out)


def gemm_flops(m, n, k):
    """Real flop count of a complex GEMM: 8 per complex multiply-add."""
    if m < 1 or n < 1 or k < 1:
        raise PreconditionError(f"dimensions must be >= 1, got {(m, n, k)}")
    return 8 * m * n * k


def frobenius_norm(A):
    a = A.array if isinstance(A, ComplexMatrix) else np.asarray(A)
    return math.sqrt(float(np.sum(a.real * a.real + a.imag * a.imag)))


@njit(nogil=True, cache=True)
def _jacobi_eigenvalues(h, tol, max_sweeps):
    n = h.shape[0]
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                z = h[p, q]
                off += 2.0 * (z.real * z.real + z.imag * z.imag)
        if math.sqrt(off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                hpq = h[p, q]
                g = abs(hpq)
                if g == 0.0:
                    continue
                theta = (h[q, q].real - h[p, p].real) / (2.0 * g)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                # phase rotation making h[p, q] real, then a real Givens rotation
                ph = (hpq / g).conjugate()
                u00 = complex(cs, 0.0)
                u01 = complex(sn, 0.0)
                u10 = -sn * ph
                u11 = cs * ph
                for k in range(n):
                    x = h[k, p]
                    y = h[k, q]
                    h[k, p] = x * u00 + y * u10
                    h[k, q] = x * u01 + y * u11
                for k in range(n):
                    x = h[p, k]
                    y = h[q, k]
                    h[p, k] = u00.conjugate() * x + u10.conjugate() * y
                    h[q, k] = u01.conjugate() * x + u11.conjugate() * y
                h[p, q] = 0.0
                h[q, p] = 0.0
                h[p, p] = h[p, p].real
                h[q, q] = h[q, q].real
    out = np.empty(n)
    for i in range(n):
        out[i] = h[i, i].real
    return np.sort(out)


def hermitian_eigenvalues(H):
    """Ascending eigenvalues of a Hermitian matrix by cyclic complex Jacobi.

    Converges once the off-diagonal Frobenius norm falls to 1e-12 * ||H||_F,
    or after 30 sweeps.
    """
    a = H.array if isinstance(H, ComplexMatrix) else np.asarray(H, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError(f"hermitian_eigenvalues needs a square matrix, got {a.shape}")
    norm = frobenius_norm(a)
    skew = frobenius_norm(a - a.conj().T)
    if skew > HERMITIAN_TOL * norm:
        raise PreconditionError(
            f"matrix is not Hermitian: ||H - H^dagger||_F = {skew:.3e} "
            f"exceeds {HERMITIAN_TOL:g} * ||H||_F"
        )
    if norm == 0.0:
        return np.zeros(a.shape[0])
    work = np.ascontiguousarray(0.5 * (a + a.conj().T))
    return _jacobi_eigenvalues(work, JACOBI_TOL * norm, JACOBI_MAX_SWEEPS)


class fault_injection:
    """Context manager that makes every GEMM flip the sign of one accumulation.

    Test-only: used to prove the verification suites detect a broken kernel.
    """

    def __enter__(self):
        global _fault
        self._prev = _fault
        _fault = True
        return self

    def __exit__(self, *exc):
        global _fault
        _fault = self._prev
        return False
