import math

import numpy as np
import pytest
from scipy.spatial import Delaunay as QhullDelaunay

from .context import pylifestyles as pls
from pylifestyles import geo
from pylifestyles.state import global_state as state
from pylifestyles.types import TowerRecord
from pylifestyles.types import TowerSite


@pytest.fixture(autouse=True)
def default_state():
    state.set_defaults()
    yield
    state.set_defaults()


def sites_of(points):
    return [TowerSite(f"t{i}", float(x), float(y)) for i, (x, y) in enumerate(points)]


def unit_square():
    return sites_of([(0, 0), (1, 0), (1, 1), (0, 1)])


def voronoi_neighbors(points, resolution=400):
    """Site pairs whose nearest-site regions meet on a fine grid, away from Voronoi vertices."""
    center = (points.min(axis=0) + points.max(axis=0)) / 2
    span = float((points.max(axis=0) - points.min(axis=0)).max())
    axis = np.linspace(-1.5 * span, 1.5 * span, resolution)
    step = axis[1] - axis[0]
    gx, gy = np.meshgrid(center[0] + axis, center[1] + axis, indexing='ij')
    dist = np.hypot(gx[..., None] - points[:, 0], gy[..., None] - points[:, 1])
    order = np.argsort(dist, axis=-1)[..., :3]
    near = np.take_along_axis(dist, order, axis=-1)
    first, second = order[..., 0], order[..., 1]
    clear = near[..., 2] - near[..., 1] > 2 * step
    pairs = set()
    for here, there in (((slice(None, -1), slice(None)), (slice(1, None), slice(None))),
                        ((slice(None), slice(None, -1)), (slice(None), slice(1, None)))):
        crossing = ((first[here] != first[there]) & (second[here] == first[there]) & (second[there] == first[here])
                    & clear[here] & clear[there])
        for a, b in zip(first[here][crossing].tolist(), first[there][crossing].tolist()):
            pairs.add((min(a, b), max(a, b)))
    return pairs


# predicates
def test_orient():
    assert geo.orient((0, 0), (1, 0), (0, 1)) == 1
    assert geo.orient((0, 0), (0, 1), (1, 0)) == -1
    assert geo.orient((0, 0), (1, 1), (3, 3)) == 0
    assert geo.orient((0.1, 0.1), (0.2, 0.2), (0.3, 0.3)) == geo._orient_exact((0.1, 0.1), (0.2, 0.2), (0.3, 0.3))


def test_incircle():
    a, b, c = (0, 0), (1, 0), (0, 1)
    assert geo.incircle(a, b, c, (0.5, 0.5)) == 1
    assert geo.incircle(a, b, c, (5, 5)) == -1
    assert geo.incircle(a, b, c, (1, 1)) == 0


def test_incircle_tie_break_is_antisymmetric_across_a_diagonal():
    points = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
    # across diagonal (0, 2) the opposite vertices are 1 and 3; exactly one orientation wants the flip
    keep_02 = geo._incircle_sos(points, 0, 2, 3, 1)
    keep_13 = geo._incircle_sos(points, 1, 3, 0, 2)
    assert keep_02 != 0 and keep_13 != 0
    assert keep_02 == -keep_13


# triangulation
def test_unit_square_resolves_to_one_diagonal():
    tri = geo.delaunay(unit_square())
    assert tri.edges == {(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)}
    assert len(tri.triangles) == 2


def test_triangles_are_counter_clockwise():
    points = np.random.default_rng(3).uniform(0, 1000, size=(40, 2))
    tri = geo.delaunay(sites_of(points))
    for a, b, c in tri.triangles:
        assert geo.orient(points[a], points[b], points[c]) == 1


def test_matches_qhull_in_general_position():
    points = np.random.default_rng(0).uniform(0, 5000, size=(60, 2))
    tri = geo.delaunay(sites_of(points))
    expected = set()
    for simplex in QhullDelaunay(points).simplices:
        for u, v in ((0, 1), (1, 2), (2, 0)):
            a, b = int(simplex[u]), int(simplex[v])
            expected.add((min(a, b), max(a, b)))
    assert tri.edges == expected


def test_empty_circle_property():
    points = np.random.default_rng(1).uniform(-100, 100, size=(30, 2))
    tri = geo.delaunay(sites_of(points))
    for a, b, c in tri.triangles:
        for d in range(len(points)):
            if d not in (a, b, c):
                assert geo.incircle(points[a], points[b], points[c], points[d]) <= 0


def test_cocircular_grid_is_deterministic():
    grid = [(x, y) for x in range(3) for y in range(3)]
    first = geo.delaunay(sites_of(grid))
    second = geo.delaunay(sites_of(grid))
    assert first.edges == second.edges
    assert len(first.triangles) == 8
    assert len(first.edges) == 16
    for u, v in first.edges:
        length = math.dist(grid[u], grid[v])
        assert length == pytest.approx(1.0) or length == pytest.approx(math.sqrt(2))


def test_collinear_and_tiny_inputs_are_degenerate():
    with pytest.raises(pls.LifestyleError) as e:
        geo.delaunay(sites_of([(0, 0), (1, 1), (2, 2), (3, 3)]))
    assert e.value.error_code == pls.ERROR_CODE.DEGENERATE_GEOMETRY
    with pytest.raises(pls.LifestyleError) as e:
        geo.delaunay(sites_of([(0, 0), (1, 0), (0, 0)]))
    assert e.value.error_code == pls.ERROR_CODE.DEGENERATE_GEOMETRY


def test_collinear_prefix_then_offset_point():
    tri = geo.delaunay(sites_of([(0, 0), (1, 0), (2, 0), (1, 5)]))
    assert tri.edges == {(0, 1), (1, 2), (0, 3), (1, 3), (2, 3)}


def test_duplicate_sites_become_aliases():
    sites = unit_square() + [TowerSite('dup', 1.0, 1.0)]
    tri = geo.delaunay(sites)
    assert tri.aliases == {'dup': 't2'}
    assert tri.tower_ids == ['t0', 't1', 't2', 't3']
    radii = geo.crawl_radii(tri)
    assert radii['dup'] == radii['t2']


def test_duplicate_sites_raise_in_strict_session():
    with pls.session(raise_on_errors=True):
        with pytest.raises(pls.LifestyleError):
            geo.delaunay(unit_square() + [TowerSite('dup', 0.0, 0.0)])


# crawl radius
def test_crawl_radius_is_half_mean_neighbor_distance():
    tri = geo.delaunay(unit_square())
    assert tri.neighbors(0) == [1, 3]
    assert geo.crawl_radius(tri, 0) == pytest.approx(0.5)
    assert tri.neighbors(1) == [0, 2, 3]
    assert geo.crawl_radius(tri, 1) == pytest.approx(0.5 * (2 + math.sqrt(2)) / 3)
    with pytest.raises(pls.LifestyleError):
        tri.neighbors(9)


def test_empty_circle_property_on_small_instances():
    rng = np.random.default_rng(21)
    for _ in range(100):
        points = rng.uniform(0, 100, size=(int(rng.integers(3, 13)), 2))
        tri = geo.delaunay(sites_of(points))
        violations = [(a, b, c, d) for a, b, c in tri.triangles for d in range(len(points))
                      if d not in (a, b, c) and geo.incircle(points[a], points[b], points[c], points[d]) > 0]
        assert violations == []


def test_crawl_radius_on_random_sites():
    points = np.random.default_rng(22).uniform(0, 500, size=(12, 2))
    tri = geo.delaunay(sites_of(points))
    for site in range(12):
        distances = [math.dist(points[site], points[j]) for j in tri.neighbors(site)]
        assert geo.crawl_radius(tri, site) == pytest.approx(0.5 * sum(distances) / len(distances), abs=1e-12)


def test_delaunay_edges_are_voronoi_neighbors():
    rng = np.random.default_rng(23)
    found, total = 0, 0
    for _ in range(20):
        points = rng.uniform(0, 100, size=(int(rng.integers(4, 13)), 2))
        edges = geo.delaunay(sites_of(points)).edges
        neighbors = voronoi_neighbors(points)
        assert neighbors <= edges
        found += len(neighbors)
        total += len(edges)
    # short Voronoi edges and edges far outside the grid window can be missed
    assert found >= 0.85 * total


# projection
def test_project_about_origin():
    x, y = geo.project([19.0, 20.0], [-99.0, -99.0], origin=(19.0, -99.0))
    assert x[0] == pytest.approx(0.0) and y[0] == pytest.approx(0.0)
    assert y[1] == pytest.approx(pls.EARTH_RADIUS_M * math.pi / 180)
    assert x[1] == pytest.approx(0.0)


def test_tower_sites_from_records():
    records = [TowerRecord('a', 19.4, -99.1), TowerRecord('b', 19.5, -99.1)]
    sites = geo.tower_sites(records)
    assert [s.tower_id for s in sites] == ['a', 'b']
    assert sites[0].y == pytest.approx(-sites[1].y)
    with pytest.raises(pls.LifestyleError):
        geo.project([float('nan')], [0.0])


# POI documents
POIS = {
    't0': ['cafe', 'establishment', 'bank'],
    't1': ['school', 'establishment'],
    't2': ['bank', 'establishment', 'cafe', 'cafe'],
    't3': ['gym', 'establishment'],
}


def test_poi_documents_count_multisets():
    docs = geo.poi_documents(POIS)
    assert list(docs.rows) == ['t0', 't1', 't2', 't3']
    assert list(docs.cols) == ['bank', 'cafe', 'establishment', 'gym', 'school']
    assert docs.toarray()[2].tolist() == [1, 2, 1, 0, 0]


def test_filter_is_strict_at_threshold():
    vocabulary, filtered = geo.filter_frequent_categories(POIS, threshold=0.25)
    # bank and cafe are at half the towers, establishment at all of them
    assert vocabulary == ['gym', 'school']
    assert filtered.shape == (4, 2)
    vocabulary, _ = geo.filter_frequent_categories(POIS, threshold=0.5)
    assert vocabulary == ['bank', 'cafe', 'gym', 'school']


def test_filter_that_empties_everything():
    with pytest.raises(pls.LifestyleError) as e:
        geo.filter_frequent_categories({'t0': ['establishment'], 't1': ['establishment']}, threshold=0.5)
    assert e.value.error_code == pls.ERROR_CODE.EMPTY_INPUT


# tower classes
def test_tower_classes_are_row_stochastic():
    _, docs = geo.filter_frequent_categories(POIS, threshold=0.5)
    classes = geo.tower_classes(docs, d=2, iterations=20, seed=0)
    assert classes.C.shape == (4, 2)
    assert np.allclose(classes.C.sum(axis=1), 1.0)
    assert classes.classes == ['class_0', 'class_1']
    frame = classes.to_frame()
    assert list(frame.index) == ['t0', 't1', 't2', 't3']
    restored = geo.TowerClassMatrix.from_frame(frame)
    assert np.array_equal(restored.C, classes.C)


def test_tower_class_matrix_rejects_non_stochastic_rows():
    with pytest.raises(pls.LifestyleError) as e:
        geo.TowerClassMatrix(np.array([[0.5, 0.4]]), ['t0'])
    assert e.value.error_code == pls.ERROR_CODE.INVALID_PARAMS
