"""Value types and exact operations for single GPT systems.

States and effects share one coordinate space and probabilities are dot
products.  Simplicial systems use the vertex-indicator basis: vertex ``j`` is
the ``j``-th standard unit vector, the unit effect is the all-ones covector and
the effect hypercube consists of all 0/1 vectors.

A ``GptVector`` is represented as a read-only, finite, one-dimensional float
``numpy`` array; :func:`gpt_vector` builds one.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DimensionMismatch,
    EmptyGeneratorList,
    NotSimplicial,
    ProbabilityOutOfRange,
)

__all__ = [
    "ABS_TOL",
    "REL_TOL",
    "GptState",
    "GptEffect",
    "GptTransformation",
    "Instrument",
    "GptSystem",
    "SimplicialGpt",
    "Violation",
    "ValidationReport",
    "gpt_vector",
    "probability",
    "apply_transform",
    "make_simplicial",
    "in_convex_hull",
    "hull_distance",
    "validate_system",
    "check_state",
    "check_effect",
    "check_transformation",
    "check_instrument",
    "discriminator_instrument",
    "is_stochastic",
]

ABS_TOL = 1e-9
REL_TOL = 1e-12
IMPLICIT_HYPERCUBE_DIM = 12


def gpt_vector(coords) -> np.ndarray:
    """Return a read-only float copy of ``coords``; reject non-finite entries."""
    v = np.array(coords, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-D coordinate list, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    v.setflags(write=False)
    return v


def _matrix(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GptState:
    """A (possibly subnormalized) state; ``normalization`` is the unit-effect value."""

    vector: np.ndarray
    normalization: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "vector", gpt_vector(self.vector))
        object.__setattr__(self, "normalization", float(self.normalization))

    @property
    def dim(self) -> int:
        return self.vector.size

    def mix(self, other: "GptState", alpha: float) -> "GptState":
        """Convex mixture ``alpha * self + (1 - alpha) * other``."""
        _same_dim(self.vector, other.vector)
        return GptState(
            alpha * self.vector + (1 - alpha) * other.vector,
            alpha * self.normalization + (1 - alpha) * other.normalization,
        )


@dataclass(frozen=True)
class GptEffect:
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", gpt_vector(self.vector))

    @property
    def dim(self) -> int:
        return self.vector.size

    def complement(self, unit: "GptEffect") -> "GptEffect":
        _same_dim(self.vector, unit.vector)
        return GptEffect(unit.vector - self.vector)


@dataclass(frozen=True)
class GptTransformation:
    """Linear map on state coordinates.

    ``kind`` is ``"preserving"`` for elements of the normalization-preserving
    set and ``"nonincreasing"`` for instrument branches and other
    substochastic-type maps.
    """

    matrix: np.ndarray
    kind: str = "preserving"

    def __post_init__(self):
        object.__setattr__(self, "matrix", _matrix(self.matrix))
        if self.kind not in ("preserving", "nonincreasing"):
            raise ValueError(f"unknown transformation kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def adjoint_effect(self, effect: GptEffect) -> GptEffect:
        """Effect obtained by applying this map before ``effect``."""
        _same_dim(self.matrix[0], effect.vector)
        return GptEffect(self.matrix.T @ effect.vector)


@dataclass(frozen=True)
class Instrument:
    branches: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        if len(self.branches) != len(self.labels):
            raise ValueError("instrument needs one label per branch")
        if not self.branches:
            raise ValueError("instrument needs at least one branch")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("instrument outcome labels must be distinct")
        dims = {b.dim for b in self.branches}
        if len(dims) != 1:
            raise DimensionMismatch(f"instrument branches have dimensions {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.branches[0].dim

    def total(self) -> GptTransformation:
        """Sum of all branch maps (the unconditioned channel)."""
        return GptTransformation(sum(b.matrix for b in self.branches), kind="preserving")

    def branch(self, label: str) -> GptTransformation:
        return self.branches[self.labels.index(label)]


@dataclass(frozen=True)
class GptSystem:
    """A single GPT system described by generators of its convex sets.

    ``raw_fragment`` switches off the pairwise-distinguishability check, which
    an experimentally realized fragment need not satisfy.  When
    ``implicit_hypercube`` is set the effect set is the 0/1 hypercube in the
    vertex basis and ``effect_generators`` is left empty.
    """

    dim: int
    state_generators: tuple
    effect_generators: tuple
    unit: GptEffect
    zero: GptEffect
    transformations: tuple = ()
    instruments: tuple = ()
    raw_fragment: bool = False
    implicit_hypercube: bool = False

    def __post_init__(self):
        for name in ("state_generators", "effect_generators", "transformations", "instruments"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        vecs = [s.vector for s in self.state_generators] + [e.vector for e in self.effect_generators]
        vecs += [self.unit.vector, self.zero.vector]
        vecs += [t.matrix[0] for t in self.transformations]
        vecs += [i.branches[0].matrix[0] for i in self.instruments]
        for v in vecs:
            if v.size != self.dim:
                raise DimensionMismatch(f"system has dimension {self.dim}, got object of dimension {v.size}")

    def state_matrix(self) -> np.ndarray:
        """Rows are the state generator vectors."""
        return np.array([s.vector for s in self.state_generators])

    def effect_matrix(self) -> np.ndarray:
        if self.implicit_hypercube:
            raise ValueError("effect generators are implicit for this system")
        return np.array([e.vector for e in self.effect_generators])

    def maximally_mixed(self) -> GptState:
        """Barycenter of the normalized state generators."""
        gens = [s for s in self.state_generators if abs(s.normalization - 1.0) <= ABS_TOL]
        if not gens:
            raise EmptyGeneratorList("system has no normalized state generators")
        return GptState(np.mean([s.vector for s in gens], axis=0), 1.0)

    def state(self, coords) -> GptState:
        v = gpt_vector(coords)
        _same_dim(v, self.unit.vector)
        return GptState(v, float(self.unit.vector @ v))

    def effect(self, coords) -> GptEffect:
        e = GptEffect(coords)
        _same_dim(e.vector, self.unit.vector)
        return e


@dataclass(frozen=True)
class SimplicialGpt(GptSystem):
    """Strictly classical system of dimension ``dim`` in the vertex basis."""

    @property
    def d(self) -> int:
        return self.dim

    @property
    def discriminator(self) -> Instrument:
        return self.instruments[0]

    def vertex(self, j: int) -> GptState:
        """Vertex ``j`` (zero-based) of the simplex."""
        return self.state_generators[j]

    def mixture(self, weights: Sequence[float]) -> GptState:
        w = gpt_vector(weights)
        _same_dim(w, self.unit.vector)
        return GptState(w, float(w.sum()))


@dataclass(frozen=True)
class Violation:
    kind: str
    indices: tuple
    magnitude: float
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    unchecked: tuple = ("complete positivity",)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def kinds(self) -> set:
        return {v.kind for v in self.violations}

    def extend(self, items: Iterable[Violation]) -> None:
        self.violations.extend(items)


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.size != b.size:
        raise DimensionMismatch(f"dimension {a.size} does not match {b.size}")


def _vec(x) -> np.ndarray:
    if isinstance(x, (GptState, GptEffect)):
        return x.vector
    return gpt_vector(x)


def probability(e, s, tol: float = ABS_TOL) -> float:
    """Probability of effect ``e`` on state ``s``.

    Values within ``tol`` of ``[0, 1]`` are clamped into it; anything further
    out means ``e`` and ``s`` cannot belong to one valid system and raises
    :class:`ProbabilityOutOfRange`.
    """
    ev, sv = _vec(e), _vec(s)
    _same_dim(ev, sv)
    p = float(ev @ sv)
    if p < -tol or p > 1.0 + tol:
        raise ProbabilityOutOfRange(f"e.s = {p!r} lies outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def apply_transform(T: GptTransformation, s: GptState, unit: GptEffect | None = None) -> GptState:
    """Image of ``s`` under ``T``.

    The normalization is recomputed from ``unit`` when given.  Without a unit
    effect a preserving map keeps the input normalization; a nonincreasing
    map then needs ``unit``.
    """
    _same_dim(T.matrix[0], s.vector)
    out = T.matrix @ s.vector
    if unit is not None:
        _same_dim(unit.vector, out)
        norm = float(unit.vector @ out)
    elif T.kind == "preserving":
        norm = s.normalization
    else:
        raise ValueError("a unit effect is needed to renormalize under a nonincreasing map")
    return GptState(out, norm)


def is_stochastic(matrix, tol: float = ABS_TOL) -> bool:
    """Column-stochastic check for maps in the vertex basis."""
    m = np.asarray(matrix, dtype=float)
    return bool(np.all(m >= -tol) and np.allclose(m.sum(axis=0), 1.0, atol=tol))


def _discriminator(d: int) -> Instrument:
    branches = []
    for j in range(d):
        m = np.zeros((d, d))
        m[j, j] = 1.0
        branches.append(GptTransformation(m, kind="nonincreasing"))
    return Instrument(tuple(branches), tuple(str(j + 1) for j in range(d)))


def make_simplicial(d: int) -> SimplicialGpt:
    """Strictly classical system of dimension ``d`` with its discriminating instrument.

    For ``d > 12`` the ``2**d`` hypercube effects are not enumerated; the system
    is flagged ``implicit_hypercube`` and membership is tested by coordinate
    bounds.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    eye = np.eye(d)
    states = tuple(GptState(eye[j], 1.0) for j in range(d))
    implicit = d > IMPLICIT_HYPERCUBE_DIM
    if implicit:
        effects = ()
    else:
        effects = tuple(GptEffect(bits) for bits in itertools.product((0.0, 1.0), repeat=d))
    return SimplicialGpt(
        dim=d,
        state_generators=states,
        effect_generators=effects,
        unit=GptEffect(np.ones(d)),
        zero=GptEffect(np.zeros(d)),
        transformations=(GptTransformation(eye, kind="preserving"),),
        instruments=(_discriminator(d),),
        implicit_hypercube=implicit,
    )


def discriminator_instrument(G: GptSystem) -> Instrument:
    """Measure-vertex-``j``-then-reprepare-vertex-``j`` instrument of a simplicial system."""
    if not isinstance(G, SimplicialGpt):
        raise NotSimplicial(f"{type(G).__name__} has no discriminating instrument")
    return G.discriminator


def hull_distance(point, generators) -> float:
    """Smallest sup-norm distance from ``point`` to the convex hull of ``generators``."""
    p = _vec(point)
    gens = [_vec(g) for g in generators]
    if not gens:
        raise EmptyGeneratorList("convex hull of an empty set")
    for g in gens:
        _same_dim(g, p)
    G = np.array(gens).T  # dim x n
    dim, n = G.shape
    # variables: lambda (n), t ; minimise t
    c = np.zeros(n + 1)
    c[-1] = 1.0
    ones = np.ones((dim, 1))
    A_ub = np.block([[G, -ones], [-G, -ones]])
    b_ub = np.concatenate([p, -p])
    A_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (n + 1), method="highs")
    if res.status != 0:
        raise RuntimeError(f"hull LP failed: {res.message}")
    return max(float(res.x[-1]), 0.0)


def in_convex_hull(point, generators, tol: float = ABS_TOL) -> bool:
    """True iff some convex combination of ``generators`` matches ``point`` within ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = _vec(point)
    gens = [_vec(g) for g in generators]
    if not gens:
        raise EmptyGeneratorList("convex hull of an empty set")
    for g in gens:
        _same_dim(g, p)
        if np.max(np.abs(g - p)) <= tol:
            return True
    return hull_distance(p, gens) <= tol


# --- validation -------------------------------------------------------------

def _effect_range_on(system: GptSystem, s: np.ndarray):
    """(min, max) of e.s over the effect set of ``system``."""
    if system.implicit_hypercube:
        return float(np.minimum(s, 0).sum()), float(np.maximum(s, 0).sum())
    vals = system.effect_matrix() @ s
    return float(vals.min()), float(vals.max())


def check_state(system: GptSystem, state: GptState, index=None, tol: float = ABS_TOL) -> list:
    """Violations of ``state`` against the system's unit, zero and effect set."""
    idx = () if index is None else (index,)
    out = []
    s = state.vector
    if s.size != system.dim:
        return [Violation("DimensionMismatch", idx, float(abs(s.size - system.dim)))]
    gap = abs(float(system.unit.vector @ s) - state.normalization)
    if gap > tol:
        out.append(Violation("UnitMismatch", idx, gap, "u.s differs from the declared normalization"))
    z = abs(float(system.zero.vector @ s))
    if z > tol:
        out.append(Violation("ZeroEffectNonzero", idx, z))
    if system.implicit_hypercube:
        lo, hi = _effect_range_on(system, s)
        excess = max(-lo, hi - 1.0, 0.0)
        if excess > tol:
            out.append(Violation("ProbabilityOutOfRange", idx, excess, "hypercube effect"))
    else:
        for j, e in enumerate(system.effect_generators):
            p = float(e.vector @ s)
            excess = max(-p, p - 1.0, 0.0)
            if excess > tol:
                out.append(Violation("ProbabilityOutOfRange", (j,) + idx, excess,
                                     f"effect {j} on state gives {p:.6g}"))
    return out


def check_effect(system: GptSystem, effect: GptEffect, index=None, tol: float = ABS_TOL) -> list:
    """Violations of ``effect`` against every state generator of ``system``."""
    idx = () if index is None else (index,)
    if effect.vector.size != system.dim:
        return [Violation("DimensionMismatch", idx, float(abs(effect.vector.size - system.dim)))]
    out = []
    for i, s in enumerate(system.state_generators):
        p = float(effect.vector @ s.vector)
        excess = max(-p, p - 1.0, 0.0)
        if excess > tol:
            out.append(Violation("ProbabilityOutOfRange", idx + (i,), excess,
                                 f"effect on state {i} gives {p:.6g}"))
    return out


def _image_violations(system, matrix, s_index, s, allowed_max, tol):
    out = []
    img = matrix @ s.vector
    lo, hi = _effect_range_on(system, img)
    excess = max(-lo, hi - 1.0, 0.0)
    if excess > tol:
        out.append(Violation("TransformationPositivity", (s_index,), excess,
                             "an effect is out of range on the image state"))
    n_img = float(system.unit.vector @ img)
    if n_img < -tol or n_img > allowed_max + tol:
        out.append(Violation("NormalizationIncrease", (s_index,), max(-n_img, n_img - allowed_max)))
    return out, n_img


def check_transformation(system: GptSystem, T: GptTransformation, index=None, tol: float = ABS_TOL) -> list:
    idx = () if index is None else (index,)
    if T.dim != system.dim:
        return [Violation("DimensionMismatch", idx, float(abs(T.dim - system.dim)))]
    out = []
    for i, s in enumerate(system.state_generators):
        v, n_img = _image_violations(system, T.matrix, i, s, s.normalization, tol)
        out.extend(Violation(x.kind, idx + x.indices, x.magnitude, x.detail) for x in v)
        if T.kind == "preserving":
            gap = abs(n_img - s.normalization)
            if gap > tol:
                out.append(Violation("NormalizationViolation", idx + (i,), gap,
                                     "preserving map changes u.s"))
    return out


def check_instrument(system: GptSystem, instrument: Instrument, index=None, tol: float = ABS_TOL) -> list:
    idx = () if index is None else (index,)
    out = []
    for b, branch in enumerate(instrument.branches):
        if branch.kind != "nonincreasing":
            out.append(Violation("BranchKind", idx + (b,), 0.0, "instrument branches must be nonincreasing"))
        for v in check_transformation(system, branch, tol=tol):
            out.append(Violation(v.kind, idx + (b,) + v.indices, v.magnitude, v.detail))
    total = sum(br.matrix for br in instrument.branches)
    for i, s in enumerate(system.state_generators):
        deficit = s.normalization - float(system.unit.vector @ (total @ s.vector))
        if deficit > tol:
            out.append(Violation("NormalizationDeficit", idx + (i,), deficit,
                                 "branches sum to less than a preserving map"))
        elif deficit < -tol:
            out.append(Violation("NormalizationExcess", idx + (i,), -deficit,
                                 "branches sum to more than a preserving map"))
    return out


def _indistinguishable(rows: np.ndarray, probes: np.ndarray, tol: float):
    """Pairs (i, j) of rows that no probe separates by more than ``tol``."""
    vals = rows @ probes.T
    pairs = []
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            sep = float(np.max(np.abs(vals[i] - vals[j]))) if probes.size else 0.0
            if sep <= tol:
                pairs.append((i, j, sep))
    return pairs


def validate_system(G: GptSystem, tol: float = ABS_TOL) -> ValidationReport:
    """Report every violated structural invariant of ``G``.

    The report is empty iff the system is valid.  Complete positivity is not
    checked and is listed in ``report.unchecked``.
    """
    report = ValidationReport()
    for i, s in enumerate(G.state_generators):
        report.extend(check_state(G, s, index=i, tol=tol))
    if not G.implicit_hypercube:
        effects = G.effect_matrix() if G.effect_generators else np.zeros((0, G.dim))
        for j, e in enumerate(G.effect_generators):
            comp = G.unit.vector - e.vector
            if not in_convex_hull(comp, list(effects), tol=tol):
                report.extend([Violation("ComplementNotInEffectSet", (j,),
                                         hull_distance(comp, list(effects)))])
        if not G.raw_fragment and len(G.state_generators) > 1:
            states = G.state_matrix()
            for i, j, sep in _indistinguishable(states, effects, tol):
                report.extend([Violation("IndistinguishableStates", (i, j), sep)])
            for i, j, sep in _indistinguishable(effects, states, tol):
                report.extend([Violation("IndistinguishableEffects", (i, j), sep)])
    for t, T in enumerate(G.transformations):
        report.extend(check_transformation(G, T, index=t, tol=tol))
    for k, inst in enumerate(G.instruments):
        report.extend(check_instrument(G, inst, index=k, tol=tol))
    return report
