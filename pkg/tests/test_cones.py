import itertools

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from gptmacro.cones import dual_cone_rays, extreme_rays
from gptmacro.errors import DegenerateCone


def _hull_facets(P):
    """Facet normals of conv(P) from qhull, deduplicated (qhull triangulates)."""
    eq = ConvexHull(P).equations[:, :-1]
    eq /= np.linalg.norm(eq, axis=1)[:, None]
    return np.unique(np.round(eq, 8), axis=0)


def _lift(P):
    # cone over a polytope in the hyperplane x0 = 1
    return np.hstack([np.ones((len(P), 1)), P])


@pytest.mark.parametrize("d", [3, 4, 5])
def test_dual_ray_count_matches_convex_hull(d):
    rng = np.random.default_rng(d)
    P = rng.normal(size=(12, d - 1))
    P /= np.linalg.norm(P, axis=1)[:, None]
    rays = dual_cone_rays(_lift(P))
    if d == 3:
        assert len(rays) == len(ConvexHull(P).vertices)
    else:
        assert len(rays) == len(_hull_facets(P))
    assert np.min(_lift(P) @ rays.T) >= -1e-9


def test_simplicial_dual_is_coordinate_functionals():
    rays = dual_cone_rays(np.eye(2))
    assert sorted(map(tuple, np.round(rays, 12))) == [(0.0, 1.0), (1.0, 0.0)]


def test_octahedron_dual_is_cube():
    oct_pts = np.vstack([np.eye(3), -np.eye(3)])
    rays = dual_cone_rays(_lift(oct_pts))
    assert len(rays) == 8
    # facets of the octahedron are the sign vectors, so rays ∝ (1, ±1, ±1, ±1)
    scaled = rays / rays[:, :1]
    signs = {tuple(np.round(r[1:]).astype(int)) for r in -scaled}
    assert signs == set(itertools.product((-1, 1), repeat=3))


def test_cube_facets():
    cube = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
    assert len(dual_cone_rays(_lift(cube))) == 6


def test_extreme_rays_drop_interior_generators():
    sq = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1], [0, 0], [0.5, 0.2]], dtype=float)
    rays = extreme_rays(_lift(sq))
    assert len(rays) == 4


def test_degenerate_inputs():
    with pytest.raises(DegenerateCone):
        dual_cone_rays(np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
    with pytest.raises(DegenerateCone):
        dual_cone_rays(np.array([[1.0], [-1.0]]))
    assert np.allclose(dual_cone_rays(np.array([[3.0]])), [[1.0]])


def test_rays_are_nonnegative_on_generators(rng):
    for _ in range(20):
        G = _lift(rng.normal(size=(8, 3)))
        rays = dual_cone_rays(G)
        assert np.min(G @ rays.T) >= -1e-9
        assert np.allclose(np.linalg.norm(rays, axis=1), 1.0)
        # each ray is tight on at least dim-1 independent generators
        for r in rays:
            tight = G[np.abs(G @ r) < 1e-7]
            assert np.linalg.matrix_rank(tight) == G.shape[1] - 1
