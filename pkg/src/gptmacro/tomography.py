"""Theory-agnostic tomography of prepare-measure data.

The frequency matrix ``F`` (preparations x effects, column 0 the unit effect)
is factored as ``F ~ S @ E`` with ``S`` of shape (m, k) and ``E`` of shape
(k, n) by alternating weighted least squares.  The rank ``k`` is the smallest
one whose weighted fit is statistically acceptable.  The fitted factors are
then put in a canonical gauge: the unit effect becomes ``(1, 0, ..., 0)``,
every state has first coordinate 1, the states are centred on their mean and
rotated onto their principal axes.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares

from .core import in_convex_hull
from .errors import ConvergenceFailure, DegenerateMatrix
from .simulator import FrequencyMatrix

EXACT_VARIANCE = 1e-12
MAX_ITER = 5000
REL_STOP = 1e-10
HULL_TOL = 1e-7
ALS_BURN_IN = 200


class RankSelectionWarning(UserWarning):
    """No rank up to ``k_max`` passed the goodness-of-fit threshold."""


@dataclass(frozen=True)
class FitDiagnostics:
    chi2: float
    chi2_per_dof: float
    dof: int
    residual_max: float
    # (k, chi2, chi2_per_dof) for every rank tried
    rank_scan: tuple = ()
    n_iterations: int = 0
    converged: bool = True
    rank_warning: bool = False


@dataclass(frozen=True)
class RealizedGpt:
    """Fitted state and effect vectors; ``effects[0]`` is the unit effect."""

    states: np.ndarray
    effects: np.ndarray
    state_ids: tuple = ()
    effect_ids: tuple = ()
    fit: FitDiagnostics | None = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.states, dtype=float))
        E = np.atleast_2d(np.asarray(self.effects, dtype=float))
        if S.shape[1] != E.shape[1]:
            raise ValueError(f"states have dimension {S.shape[1]}, effects {E.shape[1]}")
        object.__setattr__(self, "states", S)
        object.__setattr__(self, "effects", E)
        if not self.state_ids:
            object.__setattr__(self, "state_ids", tuple(f"s{i}" for i in range(len(S))))
        if not self.effect_ids:
            object.__setattr__(self, "effect_ids", ("u",) + tuple(f"e{j}" for j in range(1, len(E))))

    @property
    def k(self) -> int:
        return self.states.shape[1]

    @property
    def unit(self) -> np.ndarray:
        return self.effects[0]

    def probabilities(self) -> np.ndarray:
        """Predicted probability table, states x effects."""
        return self.states @ self.effects.T

    @classmethod
    def from_vectors(cls, states, effects, unit, state_ids=(), effect_ids=()) -> "RealizedGpt":
        """Build a realized GPT directly from known vectors (unit is prepended)."""
        E = np.vstack([np.asarray(unit, dtype=float)[None, :], np.asarray(effects, dtype=float)])
        eids = ("u",) + tuple(effect_ids) if effect_ids else ()
        return cls(np.asarray(states, dtype=float), E, tuple(state_ids), eids)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "id"] + [f"c{i}" for i in range(self.k)])
            for sid, s in zip(self.state_ids, self.states):
                w.writerow(["state", sid] + [format(x, ".17g") for x in s])
            for j, (eid, e) in enumerate(zip(self.effect_ids, self.effects)):
                w.writerow(["unit" if j == 0 else "effect", eid] + [format(x, ".17g") for x in e])

    @classmethod
    def from_csv(cls, path) -> "RealizedGpt":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        if header[:2] != ["kind", "id"]:
            raise ValueError(f"{path}: not a realized-GPT file")
        states, sids, effects, eids, unit = [], [], [], [], None
        for row in rows[1:]:
            kind, rid, coords = row[0], row[1], [float(x) for x in row[2:]]
            if kind == "state":
                states.append(coords)
                sids.append(rid)
            elif kind == "effect":
                effects.append(coords)
                eids.append(rid)
            elif kind == "unit":
                unit = (rid, coords)
            else:
                raise ValueError(f"{path}: unknown row kind {kind!r}")
        if unit is None:
            raise ValueError(f"{path}: no unit row")
        E = np.array([unit[1]] + effects)
        return cls(np.array(states), E, tuple(sids), (unit[0],) + tuple(eids))


def binomial_variance(F: np.ndarray, trials: np.ndarray) -> np.ndarray:
    """``max(F(1-F)/n, 1/(4 n^2))`` per cell; cells with ``n = 0`` are exact."""
    F = np.asarray(F, dtype=float)
    n = np.asarray(trials, dtype=float)
    V = np.full(F.shape, EXACT_VARIANCE)
    live = n > 0
    V[live] = np.maximum(F[live] * (1 - F[live]) / n[live], 1.0 / (4 * n[live] ** 2))
    return V


def degrees_of_freedom(m: int, n: int, k: int) -> int:
    return m * n - k * (m + n - k)


def default_threshold(dof: int) -> float:
    """Chi-square-per-dof cut at roughly three standard deviations above 1."""
    return 1.0 + 3.0 * math.sqrt(2.0 / max(dof, 1))


def _objective(F, W, S, E) -> float:
    R = F - S @ E
    return float(np.sum(W * R * R))


def _solve_rows(F, W, E):
    # rows of S given E: (E W_i E^T) s_i = E W_i F_i
    A = np.einsum("kj,ij,lj->ikl", E, W, E)
    b = np.einsum("kj,ij->ik", E, W * F)
    return np.einsum("ikl,il->ik", np.linalg.pinv(A, rcond=1e-13), b)


def _polish(F, W, S, E):
    """Joint Levenberg-Marquardt refinement of both factors."""
    m, k = S.shape
    n = E.shape[1]
    sw = np.sqrt(W)

    def resid(x):
        Sx, Ex = x[: m * k].reshape(m, k), x[m * k:].reshape(k, n)
        return (sw * (F - Sx @ Ex)).ravel()

    def jac(x):
        Sx, Ex = x[: m * k].reshape(m, k), x[m * k:].reshape(k, n)
        J = np.zeros((m, n, m * k + k * n))
        for a in range(k):
            J[np.arange(m)[:, None], np.arange(n)[None, :], np.arange(m)[:, None] * k + a] = -sw * Ex[a][None, :]
            J[np.arange(m)[:, None], np.arange(n)[None, :], m * k + a * n + np.arange(n)[None, :]] = -sw * Sx[:, a][:, None]
        return J.reshape(m * n, -1)

    x0 = np.concatenate([S.ravel(), E.ravel()])
    if m * n < x0.size:
        return S, E
    res = least_squares(resid, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    return res.x[: m * k].reshape(m, k), res.x[m * k:].reshape(k, n)


def _als(F, W, S, E, max_iter, rel_stop, abs_stop, burn_in=ALS_BURN_IN):
    """Alternating weighted least squares.

    If the plain iteration has not met the stopping rule after ``burn_in``
    sweeps, both factors are refined jointly by Levenberg-Marquardt and the
    alternating sweeps resume; the stopping rule is unchanged.
    """
    obj = _objective(F, W, S, E)
    best = (obj, S, E)
    it = 0
    converged = obj <= abs_stop
    polished = False
    while not converged and it < max_iter:
        it += 1
        if it == burn_in and not polished:
            polished = True
            S, E = _polish(F, W, S, E)
        S = _solve_rows(F, W, E)
        E = _solve_rows(F.T, W.T, S.T).T
        new = _objective(F, W, S, E)
        if new < best[0]:
            best = (new, S, E)
        if new <= abs_stop or (obj - new) <= rel_stop * max(obj, 1e-300):
            converged = True
        obj = new
    return best[1], best[2], best[0], it, converged


def _svd_init(F, k):
    U, s, Vt = np.linalg.svd(F, full_matrices=False)
    r = np.sqrt(s[:k])
    return U[:, :k] * r, r[:, None] * Vt[:k]


def _warm_start(F, W, S, E):
    """Pad a rank-(k-1) fit with the best multiple of the residual's leading component."""
    R = F - S @ E
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    a, b = U[:, 0] * math.sqrt(s[0]), math.sqrt(s[0]) * Vt[0]
    ab = np.outer(a, b)
    den = float(np.sum(W * ab * ab))
    t = float(np.sum(W * R * ab)) / den if den > 0 else 0.0
    return np.column_stack([S, t * a]), np.vstack([E, b])


def _check_inputs(F, V):
    F = np.asarray(F, dtype=float)
    V = np.asarray(V, dtype=float)
    if F.ndim != 2 or F.size == 0:
        raise DegenerateMatrix("frequency matrix must be a non-empty 2-D array")
    if F.shape != V.shape:
        raise DegenerateMatrix(f"F has shape {F.shape} but V has shape {V.shape}")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(V))):
        raise DegenerateMatrix("non-finite entries in F or V")
    if np.any(V <= 0):
        raise DegenerateMatrix("variances must be positive")
    return F, V


@dataclass(frozen=True)
class RankFit:
    k: int
    S: np.ndarray
    E: np.ndarray
    chi2: float
    dof: int
    n_iterations: int
    converged: bool

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / max(self.dof, 1)


def rank_scan(
    F,
    V,
    k_max: int | None = None,
    max_iter: int = MAX_ITER,
    rel_stop: float = REL_STOP,
    stop_when_fit: bool = False,
    threshold: float | None = None,
) -> list:
    """Weighted fits for ``k = 1 .. k_max``; chi2 is nonincreasing in ``k``.

    Each rank is fitted from the truncated SVD and from the previous rank's
    solution padded with one residual component; the better fit is kept.  The
    padded start never has a higher objective than the previous rank, and the
    alternating updates never increase it.  With ``stop_when_fit`` the scan
    ends at the first rank passing ``threshold`` (default per-rank cut).
    """
    F, V = _check_inputs(F, V)
    m, n = F.shape
    k_max = min(m, n) if k_max is None else k_max
    if not 1 <= k_max <= min(m, n):
        raise DegenerateMatrix(f"k_max must lie in [1, {min(m, n)}], got {k_max}")
    W = 1.0 / V
    fits = []
    for k in range(1, k_max + 1):
        dof = degrees_of_freedom(m, n, k)
        abs_stop = 1e-12 * max(dof, 1)
        S0, E0 = _svd_init(F, k)
        cands = [_als(F, W, S0, E0, max_iter, rel_stop, abs_stop)]
        if fits:
            S1, E1 = _warm_start(F, W, fits[-1].S, fits[-1].E)
            cands.append(_als(F, W, S1, E1, max_iter, rel_stop, abs_stop))
        S, E, obj, it, conv = min(cands, key=lambda c: c[2])
        fits.append(RankFit(k, S, E, obj, dof, it, conv))
        if stop_when_fit:
            cut = default_threshold(dof) if threshold is None else threshold
            if fits[-1].chi2_per_dof <= cut:
                break
    return fits


def select_rank(F, V, k_max: int | None = None, threshold: float | None = None) -> int:
    """Smallest rank whose weighted fit has ``chi2/dof <= threshold``.

    ``threshold`` defaults to ``1 + 3 sqrt(2/dof)`` evaluated per rank.  If no
    rank qualifies, ``k_max`` is returned and a :class:`RankSelectionWarning`
    is issued.
    """
    return _select(rank_scan(F, V, k_max), threshold)[0]


def _select(fits, threshold):
    for f in fits:
        cut = default_threshold(f.dof) if threshold is None else threshold
        if f.chi2_per_dof <= cut:
            return f.k, False
    warnings.warn(f"no rank up to {fits[-1].k} passes the fit threshold", RankSelectionWarning, stacklevel=3)
    return fits[-1].k, True


def gauge_fix(S: np.ndarray, E: np.ndarray):
    """Canonical gauge for a factorization ``F ~ S @ E`` whose column 0 is the unit effect.

    Returns ``(states, effects)`` as row arrays of shape (m, k) and (n, k).
    """
    S = np.asarray(S, dtype=float)
    E = np.asarray(E, dtype=float)
    k = S.shape[1]
    u = E[:, 0]
    if np.linalg.norm(u) == 0:
        raise DegenerateMatrix("fitted unit effect vanishes")
    # B e1 = u, remaining columns span the orthogonal complement of u
    Q, _ = np.linalg.qr(np.column_stack([u, np.eye(k)]))
    B = np.column_stack([u, Q[:, 1:k]])
    S1 = S @ B
    E1 = np.linalg.solve(B, E)
    norms = S1[:, 0]
    if np.any(norms <= 0):
        raise DegenerateMatrix("a fitted state has nonpositive normalization")
    S1 = S1 / norms[:, None]
    if k > 1:
        c = S1[:, 1:].mean(axis=0)
        _, _, Vt = np.linalg.svd(S1[:, 1:] - c, full_matrices=True)
        X = (S1[:, 1:] - c) @ Vt.T
        for a in range(k - 1):
            col = X[:, a]
            j = int(np.argmax(np.abs(col) > 1e-9 * max(1.0, np.abs(col).max()))) if np.any(col) else 0
            if col[j] < 0:
                Vt[a] *= -1
        M = np.eye(k)
        M[1:, 1:] = Vt
        M[1:, 0] = -Vt @ c
        S1 = S1 @ M.T
        E1 = np.linalg.solve(M.T, E1)
    return S1, E1.T


def fit_realized_gpt(
    F,
    V,
    k: int,
    row_ids: Sequence[str] = (),
    col_ids: Sequence[str] = (),
    max_iter: int = MAX_ITER,
    rel_stop: float = REL_STOP,
    scan: list | None = None,
) -> RealizedGpt:
    """Fit rank-``k`` state and effect vectors and fix the gauge.

    A fit that hits ``max_iter`` is returned with ``converged=False`` and a
    :class:`ConvergenceFailure` warning.
    """
    F, V = _check_inputs(F, V)
    if k < 1:
        raise ValueError("k must be at least 1")
    fits = scan if scan is not None else rank_scan(F, V, k, max_iter=max_iter, rel_stop=rel_stop)
    fit = next(f for f in fits if f.k == k)
    if not fit.converged:
        warnings.warn(f"rank-{k} fit did not converge in {max_iter} iterations", ConvergenceFailure, stacklevel=2)
    states, effects = gauge_fix(fit.S, fit.E)
    resid = float(np.max(np.abs(F - states @ effects.T)))
    diag = FitDiagnostics(
        chi2=fit.chi2,
        chi2_per_dof=fit.chi2_per_dof,
        dof=fit.dof,
        residual_max=resid,
        rank_scan=tuple((f.k, f.chi2, f.chi2_per_dof) for f in fits),
        n_iterations=fit.n_iterations,
        converged=fit.converged,
    )
    return RealizedGpt(states, effects, tuple(row_ids), tuple(col_ids), diag)


def reconstruct(fm: FrequencyMatrix, k_max: int | None = None, threshold: float | None = None) -> RealizedGpt:
    """Rank selection plus fit for an assembled frequency matrix."""
    V = binomial_variance(fm.F, fm.trials)
    fits = rank_scan(fm.F, V, k_max, stop_when_fit=True, threshold=threshold)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        k, flagged = _select(fits, threshold)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    col_ids = tuple("u" if c == ("u", "u") else f"{c[0]}:{c[1]}" for c in fm.col_ids)
    rg = fit_realized_gpt(fm.F, V, k, fm.row_ids, col_ids, scan=fits[:k])
    if flagged:
        object.__setattr__(rg, "fit", _with_flag(rg.fit))
    return rg


def _with_flag(d: FitDiagnostics) -> FitDiagnostics:
    return replace(d, rank_warning=True)


class Hulls(NamedTuple):
    states: np.ndarray
    effects: np.ndarray


def extreme_indices(points, tol: float = HULL_TOL) -> list:
    """Indices of points that are not convex combinations of the others.

    Near-duplicates (sup-norm distance <= ``tol``) collapse onto their first
    occurrence.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    keep = []
    for i, p in enumerate(P):
        if all(np.max(np.abs(p - P[j])) > tol for j in keep):
            keep.append(i)
    changed = True
    while changed and len(keep) > 1:
        changed = False
        for i in list(keep):
            others = [P[j] for j in keep if j != i]
            if in_convex_hull(P[i], others, tol=tol):
                keep.remove(i)
                changed = True
                break
    return keep


def inner_approx(realized: RealizedGpt, tol: float = HULL_TOL) -> Hulls:
    """Generators of the realized state and effect polytopes."""
    si = extreme_indices(realized.states, tol)
    ei = extreme_indices(realized.effects, tol)
    return Hulls(realized.states[si], realized.effects[ei])
