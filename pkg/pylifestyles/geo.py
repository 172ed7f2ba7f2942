"""Tower geometry: planar projection, Delaunay neighbors, crawl radii, POI category filtering and tower classes.

The triangulation is built by a lexicographic sweep over the convex hull followed by Lawson edge flips. Both
predicates are evaluated exactly (float filter, then rational arithmetic), and points on a common circle are
resolved by symbolic perturbation of the lifted heights keyed to site index, so the edge set is a deterministic
function of the input.
"""
from fractions import Fraction

import numpy as np
import pandas as pd

from . import const as _const
from . import lda as _lda
from .core import _logged_operation
from .core import flag
from .core import LifestyleError
from .core import log_info
from .core import require
from .matrix import SparseCountMatrix
from .types import *

_ORIENT_ERR = 1e-15
_INCIRCLE_ERR = 1e-14


def project(lat: Union[Sequence[float], Array],
            lon: Union[Sequence[float], Array],
            origin: Tuple[float, float] = None,
            ) -> Tuple[Array, Array]:
    """Local equirectangular projection to meters about origin (lat, lon), the centroid by default."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    require(lat.shape == lon.shape, _const.ERROR_CODE.SHAPE_MISMATCH, "lat and lon differ in length")
    require(bool(np.isfinite(lat).all() and np.isfinite(lon).all()), _const.ERROR_CODE.INVALID_PARAMS,
            "Coordinates must be finite")
    lat0, lon0 = origin if origin is not None else (float(lat.mean()), float(lon.mean()))
    x = _const.EARTH_RADIUS_M * np.radians(lon - lon0) * np.cos(np.radians(lat0))
    y = _const.EARTH_RADIUS_M * np.radians(lat - lat0)
    return x, y


def tower_sites(records: Sequence[TowerRecord], origin: Tuple[float, float] = None) -> List[TowerSite]:
    require(len(records) > 0, _const.ERROR_CODE.EMPTY_INPUT, "No tower records")
    x, y = project([r.lat for r in records], [r.lon for r in records], origin)
    return [TowerSite(r.tower_id, float(xi), float(yi)) for r, xi, yi in zip(records, x, y)]


def _orient_exact(a, b, c) -> int:
    ax, ay = Fraction(a[0]), Fraction(a[1])
    d = (Fraction(b[0]) - ax) * (Fraction(c[1]) - ay) - (Fraction(b[1]) - ay) * (Fraction(c[0]) - ax)
    return (d > 0) - (d < 0)


def orient(a, b, c) -> int:
    """+1 if a, b, c turn counter-clockwise, -1 if clockwise, 0 if collinear."""
    t1 = (b[0] - a[0]) * (c[1] - a[1])
    t2 = (b[1] - a[1]) * (c[0] - a[0])
    d = t1 - t2
    if abs(d) > _ORIENT_ERR * (abs(t1) + abs(t2)):
        return 1 if d > 0 else -1
    return _orient_exact(a, b, c)


def _incircle_exact(a, b, c, d) -> int:
    dx, dy = Fraction(d[0]), Fraction(d[1])
    rows = []
    for p in (a, b, c):
        px, py = Fraction(p[0]) - dx, Fraction(p[1]) - dy
        rows.append((px, py, px * px + py * py))
    (a0, a1, a2), (b0, b1, b2), (c0, c1, c2) = rows
    det = a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0)
    return (det > 0) - (det < 0)


def incircle(a, b, c, d) -> int:
    """+1 if d lies strictly inside the circle through counter-clockwise a, b, c, -1 outside, 0 on it."""
    rows = []
    for p in (a, b, c):
        px, py = p[0] - d[0], p[1] - d[1]
        rows.append((px, py, px * px + py * py))
    (a0, a1, a2), (b0, b1, b2), (c0, c1, c2) = rows
    det = a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0)
    permanent = (abs(a0) * (abs(b1 * c2) + abs(b2 * c1)) + abs(a1) * (abs(b0 * c2) + abs(b2 * c0))
                 + abs(a2) * (abs(b0 * c1) + abs(b1 * c0)))
    if abs(det) > _INCIRCLE_ERR * permanent:
        return 1 if det > 0 else -1
    return _incircle_exact(a, b, c, d)


def _incircle_sos(points: Array, i: int, j: int, k: int, l: int) -> int:
    """Incircle sign with ties broken as if each lifted height were raised by an infinitesimal that is larger for
    smaller site indices. Never returns 0 for four distinct non-collinear sites."""
    quad = (i, j, k, l)
    s = incircle(points[i], points[j], points[k], points[l])
    if s:
        return s
    for row in sorted(range(4), key=lambda r: quad[r]):
        others = [points[quad[r]] for r in range(4) if r != row]
        cofactor = orient(*others)
        if cofactor:
            return cofactor if row % 2 == 0 else -cofactor
    return 0


class Triangulation:
    """Delaunay triangulation over deduplicated tower sites.

    :ivar sites: Sites with unique coordinates, in input order of first occurrence.
    :ivar triangles: (m, 3) site indices, each row counter-clockwise.
    :ivar aliases: tower_id of a dropped duplicate -> tower_id of the site kept at the same coordinates.
    """

    def __init__(self, sites: List[TowerSite], triangles: Array, aliases: Dict[str, str] = None):
        self.sites = list(sites)
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        self.aliases = dict(aliases or {})
        edges = set()
        for a, b, c in self.triangles.tolist():
            for u, v in ((a, b), (b, c), (c, a)):
                edges.add((min(u, v), max(u, v)))
        self.edges = edges
        adjacency = [[] for _ in self.sites]
        for u, v in sorted(edges):
            adjacency[u].append(v)
            adjacency[v].append(u)
        self._adjacency = [sorted(a) for a in adjacency]

    @property
    def points(self) -> Array:
        return np.asarray([(s.x, s.y) for s in self.sites], dtype=float).reshape(-1, 2)

    @property
    def tower_ids(self) -> List[str]:
        return [s.tower_id for s in self.sites]

    def neighbors(self, site: int) -> List[int]:
        require(0 <= site < len(self.sites), _const.ERROR_CODE.INVALID_PARAMS, f"site {site} out of range")
        return list(self._adjacency[site])

    def __repr__(self):
        return f"Triangulation(sites={len(self.sites)}, edges={len(self.edges)}, triangles={len(self.triangles)})"


def _dedup(sites: Sequence[TowerSite]) -> Tuple[List[TowerSite], Dict[str, str]]:
    kept = {}
    unique, aliases = [], {}
    for s in sites:
        require(np.isfinite(s.x) and np.isfinite(s.y), _const.ERROR_CODE.INVALID_PARAMS,
                f"Site {s.tower_id} has non-finite coordinates")
        key = (float(s.x), float(s.y))
        if key in kept:
            aliases[s.tower_id] = kept[key]
            continue
        kept[key] = s.tower_id
        unique.append(s)
    ids = [s.tower_id for s in unique]
    if len(set(ids)) != len(ids) or set(aliases) & set(ids):
        raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, "tower_ids must be unique")
    return unique, aliases


def _sweep_triangulate(points: Array) -> List[Tuple[int, int, int]]:
    """Any valid triangulation: insert sites in lexicographic order, fanning each to the visible hull edges."""
    n = len(points)
    order = sorted(range(n), key=lambda i: (points[i][0], points[i][1]))
    k = 2
    while k < n and orient(points[order[0]], points[order[1]], points[order[k]]) == 0:
        k += 1
    if k >= n:
        raise LifestyleError(_const.ERROR_CODE.DEGENERATE_GEOMETRY, "All sites are collinear")
    line, q = order[:k], order[k]
    side = orient(points[line[0]], points[line[1]], points[q])
    triangles = []
    if side > 0:
        triangles.extend((line[i], line[i + 1], q) for i in range(k - 1))
        hull = line + [q]
    else:
        triangles.extend((line[i + 1], line[i], q) for i in range(k - 1))
        hull = line[::-1] + [q]
    for p in order[k + 1:]:
        h = len(hull)
        visible = [orient(points[hull[i]], points[hull[(i + 1) % h]], points[p]) < 0 for i in range(h)]
        start = next(i for i in range(h) if visible[i] and not visible[i - 1])
        count = 0
        while visible[(start + count) % h]:
            u, v = hull[(start + count) % h], hull[(start + count + 1) % h]
            triangles.append((v, u, p))
            count += 1
        end = (start + count) % h
        rotated = [hull[(end + j) % h] for j in range(h)]
        hull = rotated[:h - (count - 1)] + [p]
    return triangles


def _lawson_flip(points: Array, triangles: List[Tuple[int, int, int]]) -> List[Tuple[int, int, int]]:
    tris = [list(t) for t in triangles]
    owner = {}
    for t, (a, b, c) in enumerate(tris):
        owner[(a, b)] = owner[(b, c)] = owner[(c, a)] = t
    stack = [(u, v) for (u, v) in owner if u < v and (v, u) in owner]
    flips = 0
    while stack:
        u, v = stack.pop()
        t1, t2 = owner.get((u, v)), owner.get((v, u))
        if t1 is None or t2 is None:
            continue
        c = next(w for w in tris[t1] if w != u and w != v)
        d = next(w for w in tris[t2] if w != u and w != v)
        if _incircle_sos(points, u, v, c, d) <= 0:
            continue
        # (u, v, c) and (v, u, d) become (u, d, c) and (d, v, c)
        for e in ((u, v), (v, c), (c, u), (v, u), (u, d), (d, v)):
            del owner[e]
        tris[t1] = [u, d, c]
        tris[t2] = [d, v, c]
        for t in (t1, t2):
            a, b, w = tris[t]
            owner[(a, b)] = owner[(b, w)] = owner[(w, a)] = t
        stack.extend(((u, d), (d, v), (v, c), (c, u)))
        flips += 1
    log_info('Lawson Flips', 'delaunay_flips', flips=flips, triangles=len(tris))
    return [tuple(t) for t in tris]


@_logged_operation()
def delaunay(sites: Sequence[TowerSite]) -> Triangulation:
    """Delaunay triangulation of tower sites.

    Exact-duplicate coordinates are merged into the first site seen and recorded in ``aliases``.

    :raises LifestyleError: DEGENERATE_GEOMETRY with fewer than 3 distinct sites or when all sites are collinear.
    """
    unique, aliases = _dedup(sites)
    if len(unique) < 3:
        raise LifestyleError(_const.ERROR_CODE.DEGENERATE_GEOMETRY,
                             f"Need at least 3 distinct sites, got {len(unique)}")
    if aliases:
        flag(_const.ERROR_CODE.INVALID_PARAMS, f'{len(aliases)} towers share coordinates with another tower',
             aliases=dict(sorted(aliases.items())[:10]))
    points = np.asarray([(s.x, s.y) for s in unique], dtype=float)
    triangles = _lawson_flip(points, _sweep_triangulate(points))
    return Triangulation(unique, sorted(triangles), aliases)


@_logged_operation()
def crawl_radius(triangulation: Triangulation, site: int) -> float:
    """Half the mean Euclidean distance from a site to its Delaunay neighbors."""
    nbrs = triangulation.neighbors(site)
    if not nbrs:
        raise LifestyleError(_const.ERROR_CODE.DEGENERATE_GEOMETRY, f"Site {site} has no Delaunay neighbors")
    points = triangulation.points
    return 0.5 * float(np.linalg.norm(points[nbrs] - points[site], axis=1).mean())


def crawl_radii(triangulation: Triangulation) -> Dict[str, float]:
    """Crawl radius per tower_id, aliases included."""
    radii = {s.tower_id: crawl_radius(triangulation, i) for i, s in enumerate(triangulation.sites)}
    for alias, kept in triangulation.aliases.items():
        radii[alias] = radii[kept]
    return radii


def poi_documents(pois: Mapping[str, Sequence[str]], towers: Sequence[str] = None) -> SparseCountMatrix:
    """Towers x categories counts from a tower -> category multiset mapping."""
    towers = list(pois) if towers is None else [str(t) for t in towers]
    row_ids, col_ids = [], []
    for t in towers:
        for category in pois.get(t, ()):
            row_ids.append(t)
            col_ids.append(str(category))
    return SparseCountMatrix.from_triplets(row_ids, col_ids, np.ones(len(row_ids), dtype=np.int64), rows=towers,
                                           cols=sorted(set(col_ids)))


@_logged_operation()
def filter_frequent_categories(poi_docs: Union[SparseCountMatrix, Mapping[str, Sequence[str]]],
                               threshold: float = _const.POI_FREQUENCY_THRESHOLD,
                               ) -> Tuple[List[str], SparseCountMatrix]:
    """Drop every category found at more than ``threshold`` of the towers.

    The comparison is strict: a category at exactly the threshold survives.

    :return: (surviving vocabulary, filtered towers x categories counts)
    """
    require(0 < threshold <= 1, _const.ERROR_CODE.INVALID_PARAMS, f"threshold must be in (0, 1], got {threshold}")
    docs = poi_docs if isinstance(poi_docs, SparseCountMatrix) else poi_documents(poi_docs)
    require(docs.shape[0] > 0, _const.ERROR_CODE.EMPTY_INPUT, "No POI documents")
    present = docs.values.copy()
    present.data = np.ones_like(present.data)
    frequency = np.asarray(present.sum(axis=0)).ravel() / docs.shape[0]
    keep = np.flatnonzero(frequency <= threshold)
    dropped = [str(docs.cols[j]) for j in np.flatnonzero(frequency > threshold)]
    filtered = docs.take_cols(keep)
    if filtered.total() == 0:
        raise LifestyleError(_const.ERROR_CODE.EMPTY_INPUT,
                             f"Filtering at {threshold} removed every POI from every tower")
    log_info('POI Categories Filtered', 'poi_filter', threshold=threshold, dropped=dropped,
             kept=int(keep.size))
    return [str(c) for c in filtered.cols], filtered


class TowerClassMatrix:
    """Row-stochastic towers x classes matrix C, with the topic model that produced it."""

    def __init__(self, C: Array, towers: Iterable[str], model: '_lda.TopicModel' = None):
        self.C = np.asarray(C, dtype=float)
        self.towers = pd.Index([str(t) for t in towers], dtype=object, name='tower_id')
        self.model = model
        require(self.C.shape[0] == len(self.towers), _const.ERROR_CODE.SHAPE_MISMATCH,
                f"C has {self.C.shape[0]} rows for {len(self.towers)} towers")
        require(bool(np.allclose(self.C.sum(axis=1), 1.0, atol=_const.ROW_STOCHASTIC_TOL, rtol=0)),
                _const.ERROR_CODE.INVALID_PARAMS, "C rows must sum to 1")

    @property
    def d(self) -> int:
        return self.C.shape[1]

    @property
    def classes(self) -> List[str]:
        return [f"class_{k}" for k in range(self.d)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.C, index=self.towers, columns=self.classes)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'TowerClassMatrix':
        return cls(frame.to_numpy(dtype=float), frame.index)

    def __repr__(self):
        return f"TowerClassMatrix(towers={len(self.towers)}, d={self.d})"


@_logged_operation()
def tower_classes(docs: SparseCountMatrix,
                  d: int = _const.TOWER_CLASSES,
                  alpha: float = None,
                  beta: float = _const.LDA_BETA,
                  iterations: int = _const.LDA_TRAIN_ITERATIONS,
                  seed: int = 0,
                  ) -> TowerClassMatrix:
    """LDA over towers-as-documents; C is the trained theta. Towers with no POIs get a uniform row."""
    model = _lda.train(docs, d, alpha=alpha, beta=beta, iterations=iterations, seed=seed)
    return TowerClassMatrix(model.theta, docs.rows, model)
