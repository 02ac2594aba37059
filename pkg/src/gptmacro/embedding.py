"""Simplex embeddings of realized GPTs.

Two questions are asked of a realized GPT with states ``S`` and effects ``E``:

* noncontextuality: do linear maps into *some* simplex (and its dual
  hypercube) exist that keep every probability?  This is a linear program
  over products of extreme rays of the two dual cones.
* strict classicality (macrorealism): does such an embedding exist into a
  simplex whose dimension equals the GPT dimension?  At ``k = 2`` this is
  decided exactly; for ``k >= 3`` a search is run and infeasibility is
  reported only when certified.

All computation happens in the span of the realized data.  When states or
effects do not span the ambient space the vectors are first projected onto
a basis of the realized span, so that both cones are full dimensional.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from .cones import DD_TOL, dual_cone_rays
from .errors import DegenerateCone, DimensionTooLarge
from .tomography import RealizedGpt

TOL_EMBED = 1e-6
MAX_DIM = 6
SPAN_TOL = 1e-9

FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Certificate:
    """Linear embedding maps in the realized coordinates.

    ``iota @ s`` gives the simplex coordinates of a state and ``kappa @ e``
    the response-function values of an effect, so that
    ``(kappa @ e) @ (iota @ s) == e @ s``.
    """

    iota: np.ndarray
    kappa: np.ndarray
    weights: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.iota.shape[0]

    def to_dict(self) -> dict:
        d = {"iota": self.iota.tolist(), "kappa": self.kappa.tolist()}
        if self.weights is not None:
            d["weights"] = self.weights.tolist()
        return d


@dataclass(frozen=True)
class EmbeddingResult:
    verdict: str
    certificate: Certificate | None
    max_probability_error: float
    dimension_used: int
    method: str
    details: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.verdict == FEASIBLE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "method": self.method,
            "dimension_used": int(self.dimension_used),
            "max_probability_error": float(self.max_probability_error),
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "details": _jsonable(self.details),
        }


@dataclass(frozen=True)
class ConePair:
    """State and effect cones of a realized GPT, in reduced coordinates.

    ``basis`` (k x q, orthonormal columns) maps realized coordinates to the
    reduced ones: ``s_red = basis.T @ s``.
    """

    state_rays: np.ndarray
    effect_rays: np.ndarray
    dual_state_rays: np.ndarray
    dual_effect_rays: np.ndarray
    projector: np.ndarray
    basis: np.ndarray
    unit: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _row_basis(X: np.ndarray, tol: float = SPAN_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the row span of ``X``."""
    if X.size == 0:
        return np.zeros((X.shape[1], 0))
    _, sv, vt = np.linalg.svd(X, full_matrices=False)
    r = int(np.sum(sv > tol * max(1.0, sv[0])))
    return vt[:r].T


def realized_basis(realized: RealizedGpt) -> np.ndarray:
    """Orthonormal basis of the span in which states and effects are both full rank."""
    S, E = realized.states, realized.effects
    Qs = _row_basis(S)
    Qe = _row_basis(E @ Qs)
    return Qs @ Qe


def _complements(E: np.ndarray, u: np.ndarray) -> np.ndarray:
    C = u[None, :] - E
    keep = np.linalg.norm(C, axis=1) > SPAN_TOL
    return C[keep]


def build_cones(realized: RealizedGpt) -> ConePair:
    """State cone, effect cone (with complements) and their duals."""
    k = realized.k
    if k > MAX_DIM:
        raise DimensionTooLarge(f"realized dimension {k} exceeds {MAX_DIM}")
    if realized.states.shape[0] == 1 and k > 1:
        raise DegenerateCone("a single state cannot span a cone of dimension > 1")
    T = realized_basis(realized)
    if T.shape[1] == 0:
        raise DegenerateCone("realized data has rank 0")
    S = realized.states @ T
    u = realized.unit @ T
    E = realized.effects @ T
    E = E[np.linalg.norm(E, axis=1) > SPAN_TOL]
    effect_gens = np.vstack([E, _complements(E, u)])
    H = dual_cone_rays(S, DD_TOL)
    sig = dual_cone_rays(effect_gens, DD_TOL)
    if len(sig):
        sig = sig / (sig @ u)[:, None]
    return ConePair(S, effect_gens, H, sig, T @ T.T, T, u)


# ---------------------------------------------------------------------------
# certificate checks


def _barycenter(S: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.mean(S / (S @ u)[:, None], axis=0)


def certificate_error(realized: RealizedGpt, cert: Certificate) -> float:
    """Largest deviation between embedded and realized probabilities."""
    S, E = realized.states, realized.effects
    emb = (S @ cert.iota.T) @ (E @ cert.kappa.T).T
    return float(np.max(np.abs(emb - realized.probabilities())))


def certificate_violations(realized: RealizedGpt, cert: Certificate, tol: float = TOL_EMBED) -> list:
    """Names of violated certificate conditions (empty when sound)."""
    S, E, u = realized.states, realized.effects, realized.unit
    out = []
    Sn = S / (S @ u)[:, None]
    I = Sn @ cert.iota.T
    K = E @ cert.kappa.T
    if certificate_error(realized, cert) > tol:
        out.append("probability")
    if I.min() < -tol:
        out.append("state-negative")
    if np.max(np.abs(I.sum(axis=1) - 1.0)) > tol:
        out.append("state-normalization")
    if K.min() < -tol or K.max() > 1 + tol:
        out.append("effect-range")
    if np.max(np.abs(cert.kappa @ u - 1.0)) > tol:
        out.append("unit")
    return out


def _result_from_certificate(realized, cert, tol, method, details) -> EmbeddingResult:
    bad = certificate_violations(realized, cert, tol)
    err = certificate_error(realized, cert)
    if bad:
        details = dict(details, certificate_violations=bad)
        return EmbeddingResult(UNDETERMINED, None, err, cert.size, method, details)
    return EmbeddingResult(FEASIBLE, cert, err, cert.size, method, details)


# ---------------------------------------------------------------------------
# noncontextuality


def _product_matrix(sig: np.ndarray, H: np.ndarray) -> np.ndarray:
    q = sig.shape[1]
    return np.einsum("ai,bj->ijab", sig, H).reshape(q * q, sig.shape[0] * H.shape[0])


def _minimax_lp(C: np.ndarray, target: np.ndarray):
    """min t s.t. |C w - target| <= t, w >= 0.  Returns (t, w)."""
    n_rows, n_cols = C.shape
    ones = np.ones((n_rows, 1))
    A_ub = np.block([[C, -ones], [-C, -ones]])
    b_ub = np.concatenate([target, -target])
    c = np.zeros(n_cols + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status != 0:
        return np.inf, None
    return float(res.x[-1]), res.x[:-1]


def _farkas_lp(C: np.ndarray, target: np.ndarray):
    """min <y, target> s.t. C^T y >= 0, ||y||_1 <= 1.  Returns (value, y)."""
    n_rows, n_cols = C.shape
    A_ub = np.vstack([np.hstack([-C.T, C.T]), np.ones((1, 2 * n_rows))])
    b_ub = np.concatenate([np.zeros(n_cols), [1.0]])
    c = np.concatenate([target, -target])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status != 0:
        return 0.0, None
    return float(res.fun), res.x[:n_rows] - res.x[n_rows:]


def _fr(x) -> Fraction:
    return Fraction(float(x))


def _exact_residual(sig, H, pairs, w, q) -> Fraction:
    """Sup-norm of sum_r w_r sigma_a h_b^T - I in exact arithmetic."""
    acc = [[Fraction(0)] * q for _ in range(q)]
    for (a, b), wr in zip(pairs, w):
        fw = Fraction(wr).limit_denominator(10**12)
        sa = [_fr(x) for x in sig[a]]
        hb = [_fr(x) for x in H[b]]
        for i in range(q):
            for j in range(q):
                acc[i][j] += fw * sa[i] * hb[j]
    return max(abs(acc[i][j] - (1 if i == j else 0)) for i in range(q) for j in range(q))


def _exact_farkas_bound(sig, H, y, u, sbar) -> Fraction:
    """Certified lower bound on the LP residual from a dual vector ``y``.

    ``Y`` is repaired by adding a multiple of ``u sbar^T`` (strictly positive
    on every ray product) until it is nonnegative on every product exactly.
    """
    q = sig.shape[1]
    Y = [[Fraction(y[i * q + j]).limit_denominator(10**12) for j in range(q)] for i in range(q)]
    S = [[_fr(x) for x in r] for r in sig]
    Hs = [[_fr(x) for x in r] for r in H]
    uf = [_fr(x) for x in u]
    sf = [_fr(x) for x in sbar]
    Yh = [[sum(Y[i][j] * h[j] for j in range(q)) for i in range(q)] for h in Hs]
    su = [sum(a[i] * uf[i] for i in range(q)) for a in S]
    hs = [sum(h[j] * sf[j] for j in range(q)) for h in Hs]
    lam = Fraction(0)
    for a, sa in enumerate(S):
        for b, yh in enumerate(Yh):
            g = sum(sa[i] * yh[i] for i in range(q))
            if g < 0:
                lam = max(lam, -g / (su[a] * hs[b]))
    Yp = [[Y[i][j] + lam * uf[i] * sf[j] for j in range(q)] for i in range(q)]
    trace = sum(Yp[i][i] for i in range(q))
    norm1 = sum(abs(Yp[i][j]) for i in range(q) for j in range(q))
    if norm1 == 0:
        return Fraction(0)
    return -trace / norm1


def _nc_certificate(cp: ConePair, w: np.ndarray, cutoff: float) -> Certificate:
    nb = cp.dual_state_rays.shape[0]
    idx = np.nonzero(w > cutoff)[0]
    a, b = idx // nb, idx % nb
    # sigma rays are normalized to sigma.u = 1; the weight goes on the state side
    kappa = cp.dual_effect_rays[a] @ cp.basis.T
    iota = (w[idx, None] * cp.dual_state_rays[b]) @ cp.basis.T
    return Certificate(iota=iota, kappa=kappa, weights=w[idx])


def _unpointed_effects(cp: ConePair) -> EmbeddingResult | None:
    # -u lies in the effect cone, so no nonnegative response map can send u to all-ones
    if len(cp.dual_effect_rays) == 0:
        return EmbeddingResult(INFEASIBLE, None, np.inf, 0, "effect-cone-unpointed", {"reduced_dim": cp.dim})
    return None


def test_noncontextuality(realized: RealizedGpt, tol_embed: float = TOL_EMBED) -> EmbeddingResult:
    """Decide embeddability into a simplex of any dimension."""
    cp = build_cones(realized)
    if (bad := _unpointed_effects(cp)) is not None:
        return bad
    q = cp.dim
    sig, H = cp.dual_effect_rays, cp.dual_state_rays
    C = _product_matrix(sig, H)
    target = np.eye(q).ravel()
    t, w = _minimax_lp(C, target)
    details = {"lp_residual": t, "n_sigma_rays": len(sig), "n_h_rays": len(H), "reduced_dim": q}
    method = "ray-product-lp"
    if w is not None and t <= tol_embed / 10:
        cert = _nc_certificate(cp, w, 1e-12 * max(1.0, w.max()))
        res = _result_from_certificate(realized, cert, tol_embed, method, details)
        if res.feasible:
            return res
    if t >= 10 * tol_embed:
        value, y = _farkas_lp(C, target)
        details["farkas_bound"] = -value
        return EmbeddingResult(INFEASIBLE, None, t, 0, method, details)
    # borderline: decide in exact arithmetic
    details["exact"] = True
    method = "ray-product-lp+exact"
    if w is not None:
        cutoff = 1e-12 * max(1.0, w.max())
        nb = H.shape[0]
        idx = np.nonzero(w > cutoff)[0]
        pairs = [(i // nb, i % nb) for i in idx]
        resid = _exact_residual(sig, H, pairs, w[idx], q)
        details["exact_residual"] = float(resid)
        if resid <= Fraction(tol_embed):
            res = _result_from_certificate(realized, _nc_certificate(cp, w, cutoff), tol_embed, method, details)
            if res.feasible:
                return res
    _, y = _farkas_lp(C, target)
    if y is not None:
        sbar = _barycenter(cp.state_rays, cp.unit)
        bound = _exact_farkas_bound(sig, H, y, cp.unit, sbar)
        details["exact_farkas_bound"] = float(bound)
        if bound > Fraction(tol_embed):
            return EmbeddingResult(INFEASIBLE, None, t, 0, method, details)
    return EmbeddingResult(UNDETERMINED, None, t, 0, method, details)


# ---------------------------------------------------------------------------
# strict classicality


def _vertex_certificate(V: np.ndarray, T: np.ndarray) -> Certificate:
    """Certificate for the simplex with vertices the columns of ``V`` (reduced coords)."""
    Vinv = np.linalg.inv(V)
    return Certificate(iota=Vinv @ T.T, kappa=V.T @ T.T)


def _strict_k2(realized: RealizedGpt, cp: ConePair, tol: float) -> EmbeddingResult:
    """Exact endpoint program on the one-dimensional normalized slice."""
    u = cp.unit
    w = np.array([-u[1], u[0]])
    M = np.column_stack([u, w])
    Minv = np.linalg.inv(M)
    S = cp.state_rays @ M  # (u.s, w.s)
    E = cp.effect_rays @ Minv.T  # unit -> (1, 0)
    xs = [_fr(s1) / _fr(s0) for s0, s1 in S]
    lo, hi = min(xs), max(xs)
    ft = Fraction(tol)
    ok = True
    L, U = None, None
    for a, b in E:
        fa, fb = _fr(a), _fr(b)
        if fb == 0:
            if not (-ft <= fa <= 1 + ft):
                ok = False
            continue
        e1, e2 = (-ft - fa) / fb, (1 + ft - fa) / fb
        if e1 > e2:
            e1, e2 = e2, e1
        L = e1 if L is None else max(L, e1)
        U = e2 if U is None else min(U, e2)
    if L is not None and (L > lo or U < hi):
        ok = False
    details = {"segment": [float(lo), float(hi)], "effect_interval": [None if L is None else float(L), None if U is None else float(U)]}
    if not ok:
        return EmbeddingResult(INFEASIBLE, None, np.inf, 0, "endpoint-exact", details)
    V = np.linalg.solve(M.T, np.array([[1.0, 1.0], [float(lo), float(hi)]]))
    return _result_from_certificate(realized, _vertex_certificate(V, cp.basis), tol, "endpoint-exact", details)


def _subset_search(cp: ConePair, tol: float, max_subsets: int, chunk: int = 4096):
    q = cp.dim
    Qv = cp.dual_effect_rays
    Sn = cp.state_rays / (cp.state_rays @ cp.unit)[:, None]
    combos = itertools.combinations(range(len(Qv)), q)
    seen = 0
    while seen < max_subsets:
        batch = list(itertools.islice(combos, min(chunk, max_subsets - seen)))
        if not batch:
            break
        seen += len(batch)
        idx = np.array(batch)
        V = np.transpose(Qv[idx], (0, 2, 1))  # (b, q, q) columns are vertices
        dets = np.abs(np.linalg.det(V))
        good = dets > 1e-10
        if not np.any(good):
            continue
        V = V[good]
        lam = np.linalg.solve(V, np.broadcast_to(Sn.T, (len(V),) + Sn.T.shape))
        ok = np.all(lam >= -tol / 10, axis=(1, 2))
        if np.any(ok):
            return V[np.argmax(ok)], seen
    return None, seen


def _fit_vertices(Lam: np.ndarray, cp: ConePair):
    """Given barycentric weights, best vertex matrix under effect constraints."""
    q, m = Lam.shape
    St = (cp.state_rays / (cp.state_rays @ cp.unit)[:, None]).T  # q x m
    nv = q * q  # V[i, alpha] at i*q + alpha
    # |V Lam - St| <= t
    A = np.zeros((q * m, nv))
    for i in range(q):
        A[i * m:(i + 1) * m, i * q:(i + 1) * q] = Lam.T
    ones = np.ones((q * m, 1))
    G = cp.effect_rays
    # e . v_alpha >= 0 for all generators
    Ae = np.zeros((len(G) * q, nv))
    for al in range(q):
        for i in range(q):
            Ae[al * len(G):(al + 1) * len(G), i * q + al] = -G[:, i]
    A_ub = np.vstack([np.hstack([A, -ones]), np.hstack([-A, -ones]), np.hstack([Ae, np.zeros((len(Ae), 1))])])
    b_ub = np.concatenate([St.ravel(), -St.ravel(), np.zeros(len(Ae))])
    A_eq = np.zeros((q, nv + 1))
    for al in range(q):
        for i in range(q):
            A_eq[al, i * q + al] = cp.unit[i]
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    bounds = [(None, None)] * nv + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.ones(q), bounds=bounds, method="highs")
    if res.status != 0:
        return None, np.inf
    return res.x[:nv].reshape(q, q), float(res.x[-1])


def _weights(V: np.ndarray, cp: ConePair) -> np.ndarray:
    Sn = (cp.state_rays / (cp.state_rays @ cp.unit)[:, None]).T
    lam = np.linalg.lstsq(V, Sn, rcond=None)[0]
    lam = np.clip(lam, 0, None)
    s = lam.sum(axis=0)
    s[s == 0] = 1.0
    return lam / s


def _alternating(cp: ConePair, tol: float, n_restarts: int, max_iter: int, seed: int):
    q = cp.dim
    Qv = cp.dual_effect_rays
    for r in range(n_restarts):
        rng = np.random.default_rng([seed, r])
        mix = rng.dirichlet(np.full(len(Qv), 0.3), size=q)
        V = (mix @ Qv).T
        t_prev = np.inf
        for _ in range(max_iter):
            Lam = _weights(V, cp)
            Vn, t = _fit_vertices(Lam, cp)
            if Vn is None:
                break
            V = Vn
            if t <= tol / 10 and abs(np.linalg.det(V)) > 1e-10:
                return V, r
            if t > t_prev * (1 - 1e-3):
                break  # stalled
            t_prev = t
    return None, n_restarts


def boolean_rank_exceeds(support: np.ndarray, k: int, max_nodes: int = 200000) -> bool | None:
    """Whether the 0/1 matrix ``support`` needs more than ``k`` rectangles to cover.

    Returns True or False when decided, or None if the search budget ran out.
    """
    B = np.asarray(support, dtype=bool)
    B = B[B.any(axis=1)][:, B.any(axis=0)]
    if B.size == 0:
        return False
    B = np.unique(B, axis=0)
    B = np.unique(B, axis=1)
    nr, nc = B.shape
    rows = [sum(1 << j for j in range(nc) if B[i, j]) for i in range(nr)]
    # maximal rectangles = closed column sets (intersections of row supports)
    concepts = set()
    frontier = set(rows)
    while frontier:
        concepts |= frontier
        nxt = set()
        for c in frontier:
            for r in rows:
                x = c & r
                if x and x not in concepts:
                    nxt.add(x)
        frontier = nxt
        if len(concepts) > 20000:
            return None
    rects = []
    for cols in concepts:
        rs = sum(1 << i for i in range(nr) if rows[i] & cols == cols)
        rects.append((rs, cols))
    cells = [(i, j) for i in range(nr) for j in range(nc) if B[i, j]]
    nodes = [0]

    def covers(rect, cell):
        return (rect[0] >> cell[0]) & 1 and (rect[1] >> cell[1]) & 1

    def search(uncovered, depth):
        if not uncovered:
            return True
        if depth == k:
            return False
        nodes[0] += 1
        if nodes[0] > max_nodes:
            raise TimeoutError
        best = None
        for cell in uncovered:
            opts = [r for r in rects if covers(r, cell)]
            if best is None or len(opts) < len(best):
                best = opts
        for r in best:
            if search([c for c in uncovered if not covers(r, c)], depth + 1):
                return True
        return False

    try:
        return not search(cells, 0)
    except TimeoutError:
        return None


def support_pattern(realized: RealizedGpt, tol: float = TOL_EMBED) -> np.ndarray:
    """Nonzero pattern of effects (with complements) on normalized states."""
    S, u = realized.states, realized.unit
    Sn = S / (S @ u)[:, None]
    E = np.vstack([realized.effects, _complements(realized.effects, u)])
    return (E @ Sn.T) > tol


def test_strict_classicality(
    realized: RealizedGpt,
    tol_embed: float = TOL_EMBED,
    budget: int = 20,
    max_iter: int = 50,
    max_subsets: int = 100000,
    seed: int = 0,
) -> EmbeddingResult:
    """Decide embeddability into a simplex of the realized dimension.

    ``budget`` is the number of random restarts of the alternating search.
    """
    cp = build_cones(realized)
    if (bad := _unpointed_effects(cp)) is not None:
        return bad
    q = cp.dim
    if q == 1:
        sbar = _barycenter(realized.states, realized.unit)
        cert = Certificate(iota=realized.unit[None, :].copy(), kappa=sbar[None, :])
        return _result_from_certificate(realized, cert, tol_embed, "trivial", {})
    if q == 2:
        return _strict_k2(realized, cp, tol_embed)
    details: dict = {"reduced_dim": q}
    # a same-dimension embedding is in particular an embedding, so the LP is a cheap first filter
    nc = test_noncontextuality(realized, tol_embed)
    if nc.verdict == INFEASIBLE:
        return EmbeddingResult(INFEASIBLE, None, nc.max_probability_error, 0, "noncontextuality-lp", details)
    V, n = _subset_search(cp, tol_embed, max_subsets)
    details["subsets_checked"] = n
    if V is not None:
        res = _result_from_certificate(realized, _vertex_certificate(V, cp.basis), tol_embed, "vertex-subset", details)
        if res.feasible:
            return res
    V, r = _alternating(cp, tol_embed, budget, max_iter, seed)
    details["restarts_used"] = r
    if V is not None:
        res = _result_from_certificate(realized, _vertex_certificate(V, cp.basis), tol_embed, "alternating", details)
        if res.feasible:
            return res
    exceeds = boolean_rank_exceeds(support_pattern(realized, tol_embed), q)
    details["rectangle_bound_exceeds"] = exceeds
    if exceeds:
        return EmbeddingResult(INFEASIBLE, None, np.inf, 0, "rectangle-cover", details)
    return EmbeddingResult(UNDETERMINED, None, np.inf, 0, "search", details)


# ---------------------------------------------------------------------------
# robustness and classification


# keep pytest from collecting these when imported into test modules
test_noncontextuality.__test__ = False
test_strict_classicality.__test__ = False


def depolarize_realized(realized: RealizedGpt, r: float) -> RealizedGpt:
    """Mix every realized state toward the barycenter of the normalized states."""
    S, u = realized.states, realized.unit
    norm = S @ u
    sbar = _barycenter(S, u)
    states = (1 - r) * S + r * norm[:, None] * sbar[None, :]
    return RealizedGpt(states, realized.effects, realized.state_ids, realized.effect_ids, realized.fit)


def robustness_depolarizing(
    realized: RealizedGpt,
    test: str = "noncontextuality",
    tol_embed: float = TOL_EMBED,
    iterations: int = 20,
) -> float:
    """Smallest depolarizing weight making ``test`` Feasible (bisection)."""
    fn = {"noncontextuality": test_noncontextuality, "strict_classicality": test_strict_classicality}[test]

    def ok(r):
        return fn(depolarize_realized(realized, r), tol_embed).feasible

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


CONSISTENT = "ConsistentWithMacrorealism"
NONCONTEXTUAL = "NoncontextualNotMacrorealist"
CONTEXTUAL = "Contextual"


@dataclass(frozen=True)
class Classification:
    label: str
    noncontextuality: EmbeddingResult
    strict_classicality: EmbeddingResult

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "noncontextuality": self.noncontextuality.to_dict(),
            "strict_classicality": self.strict_classicality.to_dict(),
        }


def classification_label(nc_verdict: str, sc_verdict: str) -> str:
    """The three-way rule applied to two sub-verdicts."""
    if sc_verdict == FEASIBLE:
        return CONSISTENT
    if nc_verdict == INFEASIBLE:
        return CONTEXTUAL
    if nc_verdict == FEASIBLE and sc_verdict == INFEASIBLE:
        return NONCONTEXTUAL
    return UNDETERMINED


def classify(realized: RealizedGpt, tol_embed: float = TOL_EMBED, budget: int = 20) -> Classification:
    nc = test_noncontextuality(realized, tol_embed)
    if nc.verdict == INFEASIBLE:
        sc = EmbeddingResult(INFEASIBLE, None, nc.max_probability_error, 0, "noncontextuality-lp", {})
    else:
        sc = test_strict_classicality(realized, tol_embed, budget)
    return Classification(classification_label(nc.verdict, sc.verdict), nc, sc)
