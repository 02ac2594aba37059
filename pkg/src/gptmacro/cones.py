"""Dual cones of finitely generated cones by the double-description method.

``dual_cone_rays(G)`` returns the extreme rays of ``{y : G @ y >= 0}``, the
dual of the cone spanned by the rows of ``G``.  The cone must be full
dimensional so that its dual is pointed.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateCone

DD_TOL = 1e-9


def _normalize_rows(A: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(A, axis=1)
    keep = n > DD_TOL
    return A[keep] / n[keep, None]


def _independent_rows(A: np.ndarray, tol: float) -> list:
    """Greedy choice of ``dim`` linearly independent rows."""
    chosen: list = []
    basis = np.zeros((0, A.shape[1]))
    for i, a in enumerate(A):
        r = a - basis.T @ (basis @ a) if len(basis) else a.copy()
        nr = np.linalg.norm(r)
        if nr > 1e3 * tol:
            chosen.append(i)
            basis = np.vstack([basis, r / nr])
            if len(chosen) == A.shape[1]:
                break
    return chosen


def dual_cone_rays(generators, tol: float = DD_TOL) -> np.ndarray:
    """Extreme rays (unit length) of the dual of ``cone(generators)``.

    Raises :class:`DegenerateCone` when the generators do not span the space.
    The result is empty (shape ``(0, dim)``) when the cone is the whole space.
    """
    A = _normalize_rows(np.atleast_2d(np.asarray(generators, dtype=float)))
    dim = A.shape[1]
    if dim == 1:
        signs = np.sign(A[:, 0])
        if np.all(signs > 0):
            return np.array([[1.0]])
        if np.all(signs < 0):
            return np.array([[-1.0]])
        raise DegenerateCone("one-dimensional cone is not pointed")
    basis = _independent_rows(A, tol)
    if len(basis) < dim:
        raise DegenerateCone(f"generators span {len(basis)} of {dim} dimensions")
    R = np.linalg.inv(A[basis])  # columns are the initial rays
    rays = [R[:, i] / np.linalg.norm(R[:, i]) for i in range(dim)]
    # zero sets as bitmasks over constraint indices
    zeros = [sum(1 << basis[j] for j in range(dim) if j != i) for i in range(dim)]
    order = basis + [i for i in range(len(A)) if i not in set(basis)]
    for idx in order[dim:]:
        a = A[idx]
        vals = np.array([a @ r for r in rays])
        pos = [i for i, v in enumerate(vals) if v > tol]
        neg = [i for i, v in enumerate(vals) if v < -tol]
        zer = [i for i, v in enumerate(vals) if -tol <= v <= tol]
        bit = 1 << idx
        if not neg:
            for i in zer:
                zeros[i] |= bit
            continue
        new_rays, new_zeros = [], []
        for p in pos:
            for n in neg:
                common = zeros[p] & zeros[n]
                if bin(common).count("1") < dim - 2:
                    continue
                adjacent = True
                for o in range(len(rays)):
                    if o != p and o != n and (zeros[o] & common) == common:
                        adjacent = False
                        break
                if not adjacent:
                    continue
                r = vals[p] * rays[n] - vals[n] * rays[p]
                r /= np.linalg.norm(r)
                new_rays.append(r)
                new_zeros.append(common | bit)
        keep = pos + zer
        for i in zer:
            zeros[i] |= bit
        rays = [rays[i] for i in keep] + new_rays
        zeros = [zeros[i] for i in keep] + new_zeros
    out = np.array(rays)
    # drop numerical duplicates
    uniq: list = []
    for r in out:
        if all(np.max(np.abs(r - q)) > 1e3 * tol for q in uniq):
            uniq.append(r)
    return np.array(uniq).reshape(len(uniq), dim)


def extreme_rays(generators, tol: float = DD_TOL) -> np.ndarray:
    """Extreme rays of ``cone(generators)`` (unit length), via the double dual."""
    return dual_cone_rays(dual_cone_rays(generators, tol), tol)
