"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``min c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and
``0 <= x <= upper``. Intended for small models where determinism matters more
than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SimplexError(RuntimeError):
    pass


class Infeasible(SimplexError):
    pass


class Unbounded(SimplexError):
    pass


class IterationLimit(SimplexError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(T: np.ndarray, basis: list, row: int, col: int):
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])
    basis[row] = col


def _run(T: np.ndarray, basis: list, allowed: int, tol: float, max_iter: int, it0: int) -> int:
    """Pivot until optimal. The last row of ``T`` holds reduced costs; only
    columns ``< allowed`` may enter."""
    it = it0
    m = T.shape[0] - 1
    while True:
        red = T[-1, :allowed]
        enter = np.flatnonzero(red < -tol)
        if enter.size == 0:
            return it
        col = int(enter[0])
        colv = T[:m, col]
        pos = np.flatnonzero(colv > tol)
        if pos.size == 0:
            raise Unbounded("objective unbounded below")
        ratios = T[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, basis, row, col)
        it += 1
        if it > max_iter:
            raise IterationLimit(f"simplex exceeded {max_iter} pivots")


def solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, upper=None, tol: float = 1e-9, max_iter: int = 50_000) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_ub = np.zeros((0, nv)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, nv)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, nv)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    upper = np.full(nv, np.inf) if upper is None else np.asarray(upper, dtype=float)

    ub_idx = np.flatnonzero(np.isfinite(upper))
    A_bnd = np.zeros((ub_idx.size, nv))
    A_bnd[np.arange(ub_idx.size), ub_idx] = 1.0
    A_le = np.vstack([A_ub, A_bnd])
    b_le = np.concatenate([b_ub, upper[ub_idx]])
    n_le, n_eq = A_le.shape[0], A_eq.shape[0]
    m = n_le + n_eq

    # columns: structural | slacks (one per <= row) | artificials (as needed)
    A = np.zeros((m, nv + n_le))
    A[:n_le, :nv] = A_le
    A[:n_le, nv:] = np.eye(n_le)
    A[n_le:, :nv] = A_eq
    b = np.concatenate([b_le, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    basis = [-1] * m
    for r in range(n_le):
        if not neg[r]:
            basis[r] = nv + r
    art_rows = [r for r in range(m) if basis[r] < 0]
    n_real = nv + n_le
    ncol = n_real + len(art_rows)
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :n_real] = A
    T[:m, -1] = b
    for k, r in enumerate(art_rows):
        T[r, n_real + k] = 1.0
        basis[r] = n_real + k

    it = 0
    if art_rows:
        T[-1, n_real:ncol] = 1.0
        for r in art_rows:
            T[-1] -= T[r]
        it = _run(T, basis, ncol, tol, max_iter, it)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if -T[-1, -1] > tol * 1e3 * scale:
            raise Infeasible(f"phase one ended with infeasibility {-T[-1, -1]:.3e}")
        # drive remaining artificials out of the basis
        for r in range(m):
            if basis[r] >= n_real:
                cand = np.flatnonzero(np.abs(T[r, :n_real]) > tol)
                if cand.size:
                    _pivot(T, basis, r, int(cand[0]))
        keep = [r for r in range(m) if basis[r] < n_real]
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[r] for r in keep]
        T = np.hstack([T[:, :n_real], T[:, -1:]])
        m = len(keep)

    T[-1] = 0.0
    T[-1, :nv] = c
    for r, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    it = _run(T, basis, n_real, tol, max_iter, it)

    x = np.zeros(n_real)
    for r, j in enumerate(basis):
        x[j] = T[r, -1]
    x = x[:nv]
    return SimplexResult(x=x, objective=float(c @ x), iterations=it)
