"""Sparse symmetric-indefinite LDL^T factorization with Bunch-Kaufman pivoting.

The matrix is first reordered by reverse Cuthill-McKee.  Elimination then runs
as a frontal method: a dense window covering the rows that are coupled to the
current pivot is held in memory, Bunch-Kaufman 1x1/2x2 pivots are chosen inside
that window, and the window is extended with original rows whenever a pivot
candidate reaches further down the envelope.  The block-diagonal factor gives
the inertia of ``K - shift*M`` (Sylvester's law).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu, spsolve_triangular

BK_ALPHA = (1.0 + math.sqrt(17.0)) / 8.0


class SingularPivotError(ArithmeticError):
    """Raised when the pivot chain breaks down (the shift is an eigenvalue)."""

    def __init__(self, index: int, shift: float):
        super().__init__(f"zero pivot at step {index} for shift {shift!r}")
        self.index = index
        self.shift = shift


@dataclass(frozen=True)
class Inertia:
    n_neg: int
    n_zero: int
    n_pos: int

    def __iter__(self):
        return iter((self.n_neg, self.n_zero, self.n_pos))


class IndefiniteFactorization:
    """``P (K - shift*M) P^T = L D L^T`` with unit lower ``L`` and block diagonal ``D``.

    ``perm[i]`` is the original index of row ``i`` of the permuted matrix.
    """

    def __init__(self, perm, L, d_diag, d_off, shift, matrix):
        self.perm = perm
        self.L = L.tocsc()
        self.L.sort_indices()
        self._Lt = self.L.T.tocsr()
        self._tri = _triangular_engine(self.L)
        self.d_diag = d_diag      # D[i, i]
        self.d_off = d_off        # D[i, i+1] (nonzero only at 2x2 blocks)
        self.shift = shift
        self.matrix = matrix      # the factored matrix, full CSR
        self.n = len(perm)
        self._blocks()

    def _blocks(self):
        n = self.n
        two = np.flatnonzero(self.d_off != 0)
        in_two = np.zeros(n, dtype=bool)
        in_two[two] = in_two[two + 1] = True
        neg = int(np.sum(self.d_diag[~in_two] < 0))
        pos = int(np.sum(self.d_diag[~in_two] > 0))
        zero = int(np.sum(self.d_diag[~in_two] == 0))
        a, c, b = self.d_diag[two], self.d_diag[two + 1], self.d_off[two]
        det = a * c - b * b
        tr = a + c
        for dt, t in zip(det, tr):
            if dt < 0:
                neg += 1
                pos += 1
            elif dt > 0:
                if t > 0:
                    pos += 2
                else:
                    neg += 2
            else:
                zero += 1
                if t > 0:
                    pos += 1
                elif t < 0:
                    neg += 1
                else:
                    zero += 1
        self.inertia = Inertia(neg, zero, pos)
        self._two = two
        self._det = det

    @property
    def nnz_L(self) -> int:
        return self.L.nnz - self.n

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        y = b[self.perm]
        if self._tri is not None:
            y = self._tri.solve(y)
        else:
            y = spsolve_triangular(self.L, y, lower=True, unit_diagonal=True, overwrite_A=True)
        # block-diagonal solve
        z = y / np.where(self.d_diag == 0, 1.0, self.d_diag)
        if self._two.size:
            i = self._two
            a, c, off = self.d_diag[i], self.d_diag[i + 1], self.d_off[i]
            y0, y1 = y[i], y[i + 1]
            z[i] = (c * y0 - off * y1) / self._det
            z[i + 1] = (a * y1 - off * y0) / self._det
        if self._tri is not None:
            x = self._tri.solve(z, trans="T")
        else:
            x = spsolve_triangular(self._Lt, z, lower=False, unit_diagonal=True, overwrite_A=True)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def reconstruction_error(self, n_samples: int = 2000, seed: int = 0) -> float:
        """Max relative error of ``P A P^T - L D L^T`` over sampled entries
        (all stored entries of sampled rows, plus their diagonals)."""
        rng = np.random.default_rng(seed)
        n = self.n
        rows = np.unique(rng.integers(0, n, size=min(n_samples, n)))
        A = self.matrix[self.perm][:, self.perm].tocsr()
        D = sp.diags([self.d_off[:-1], self.d_diag, self.d_off[:-1]], [-1, 0, 1], format="csr")
        Lr = self.L.tocsr()[rows]
        R = (Lr @ D @ self.L.T).tocsr()
        Ar = A[rows]
        diff = (R - Ar)
        scale = abs(A).max()
        return float(abs(diff).max() / scale) if diff.nnz else 0.0


def _triangular_engine(L: sp.csc_matrix):
    """Wrap the unit lower factor in a SuperLU object so repeated solves with
    ``L`` and ``L^T`` run in compiled code.

    With natural ordering and no pivoting SuperLU reproduces ``L`` itself
    (``U = I``); if it reorders anyway, fall back to ``spsolve_triangular``.
    """
    try:
        lu = splu(L, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": False})
    except RuntimeError:
        return None
    n = L.shape[0]
    ident = np.arange(n)
    if not (np.array_equal(lu.perm_r, ident) and np.array_equal(lu.perm_c, ident)):
        return None
    return lu


def _bandwidth(A: sp.csr_matrix) -> np.ndarray:
    """last[i] = largest column index in row i (at least i)."""
    n = A.shape[0]
    last = np.arange(n)
    counts = np.diff(A.indptr)
    nz = counts > 0
    ends = A.indptr[1:] - 1
    last[nz] = np.maximum(last[nz], A.indices[ends[nz]])
    return last


def factorize_matrix(C, shift: float = 0.0, pivot_tol: float = 1e-13) -> IndefiniteFactorization:
    """Factor a symmetric sparse matrix (full storage)."""
    C = sp.csr_matrix(C, dtype=float)
    C.sum_duplicates()
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("matrix must be square")
    rcm = np.asarray(reverse_cuthill_mckee(C, symmetric_mode=True), dtype=np.int64)
    A = C[rcm][:, rcm].tocsr()
    A.sort_indices()
    last = _bandwidth(A)
    indptr, indices, data = A.indptr, A.indices, A.data
    anorm = float(abs(A).max()) if A.nnz else 0.0
    tiny = pivot_tol * anorm

    order = np.arange(n)          # position -> rcm label
    pos = np.arange(n)            # rcm label -> position
    band = int(np.max(last - np.arange(n))) + 1 if n else 1
    cap = max(16, 2 * band + 8)
    F = np.zeros((cap, cap))
    base = 0
    hi = 0

    d_diag = np.zeros(n)
    d_off = np.zeros(n)
    col_k, lab_k, val_k = [], [], []  # L entries: pivot position, row label, value

    k = 0

    def extend(need):
        nonlocal F, base, hi, cap
        if need <= hi:
            return
        need = min(need, n)
        if need - base > cap:
            width = hi - k
            newcap = max(cap, 2 * (need - k))
            G = np.zeros((newcap, newcap))
            G[:width, :width] = F[k - base:hi - base, k - base:hi - base]
            F, cap, base = G, newcap, k
        lo_ptr, hi_ptr = indptr[hi], indptr[need]
        rows = np.repeat(np.arange(hi, need), np.diff(indptr[hi:need + 1]))
        cols = indices[lo_ptr:hi_ptr]
        vals = data[lo_ptr:hi_ptr]
        keep = cols < need
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        pcols = pos[cols]
        F[rows - base, pcols - base] = vals
        F[pcols - base, rows - base] = vals
        hi = need

    def swap(p, q):
        if p == q:
            return
        a, b = p - base, q - base
        lo, up = k - base, hi - base
        F[[a, b], lo:up] = F[[b, a], lo:up]
        F[lo:up, [a, b]] = F[lo:up, [b, a]]
        order[p], order[q] = order[q], order[p]
        pos[order[p]] = p
        pos[order[q]] = q

    while k < n:
        extend(last[order[k]] + 1)
        r = k - base
        width = hi - k
        akk = F[r, r]
        abs_akk = abs(akk)
        if width > 1:
            col = np.abs(F[r + 1:r + width, r])
            j = int(np.argmax(col))
            colmax = col[j]
            imax = k + 1 + j
        else:
            colmax, imax = 0.0, k
        step = 1
        if max(abs_akk, colmax) <= tiny:
            raise SingularPivotError(k, shift)
        if abs_akk < BK_ALPHA * colmax:
            extend(last[order[imax]] + 1)
            r = k - base
            ri = imax - base
            row = np.abs(F[ri, r:hi - base])
            row[ri - r] = 0.0
            rowmax = row.max()
            if abs_akk * rowmax >= BK_ALPHA * colmax * colmax:
                pass
            elif abs(F[ri, ri]) >= BK_ALPHA * rowmax:
                swap(k, imax)
            else:
                swap(k + 1, imax)
                step = 2
        r = k - base
        up = hi - base
        if step == 1:
            d = F[r, r]
            if abs(d) <= tiny:
                raise SingularPivotError(k, shift)
            d_diag[k] = d
            w = F[r + 1:up, r]
            nz = np.flatnonzero(w)
            if nz.size:
                s, e = nz[0], nz[-1] + 1
                ws = w[s:e].copy()
                ls = ws / d
                F[r + 1 + s:r + 1 + e, r + 1 + s:r + 1 + e] -= np.outer(ws, ls)
                m = ls != 0
                lab_k.append(order[k + 1 + s:k + 1 + e][m])
                val_k.append(ls[m])
                col_k.append(np.full(int(m.sum()), k))
        else:
            E = F[r:r + 2, r:r + 2].copy()
            det = E[0, 0] * E[1, 1] - E[0, 1] * E[1, 0]
            if abs(det) <= tiny * tiny:
                raise SingularPivotError(k, shift)
            d_diag[k], d_diag[k + 1], d_off[k] = E[0, 0], E[1, 1], E[0, 1]
            W = F[r + 2:up, r:r + 2]
            nz = np.flatnonzero(np.any(W != 0, axis=1))
            if nz.size:
                s, e = nz[0], nz[-1] + 1
                Ws = W[s:e].copy()
                Einv = np.array([[E[1, 1], -E[0, 1]], [-E[1, 0], E[0, 0]]]) / det
                Ls = Ws @ Einv
                F[r + 2 + s:r + 2 + e, r + 2 + s:r + 2 + e] -= Ls @ Ws.T
                labs = order[k + 2 + s:k + 2 + e]
                for c in range(2):
                    m = Ls[:, c] != 0
                    lab_k.append(labs[m])
                    val_k.append(Ls[m, c])
                    col_k.append(np.full(int(m.sum()), k + c))
        k += step

    if col_k:
        labels = np.concatenate(lab_k)
        rows = pos[labels]
        cols = np.concatenate(col_k)
        vals = np.concatenate(val_k)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = np.concatenate([vals, np.ones(n)])
    L = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    perm = rcm[order]
    return IndefiniteFactorization(perm, L, d_diag, d_off, shift, C)


def factorize(K, M, shift: float = 0.0) -> IndefiniteFactorization:
    """Factor ``K - shift*M``; ``K`` and ``M`` may be SparseSym or scipy sparse."""
    Kf = K.full() if hasattr(K, "full") else sp.csr_matrix(K)
    Mf = M.full() if hasattr(M, "full") else sp.csr_matrix(M)
    if Kf.shape != Mf.shape:
        raise ValueError(f"dimension mismatch: {Kf.shape} vs {Mf.shape}")
    C = Kf - shift * Mf if shift != 0 else Kf
    return factorize_matrix(C, shift)
