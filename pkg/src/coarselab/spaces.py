"""Finite bounded-degree graph windows onto model geometries.

A :class:`SpaceGraph` is an immutable snapshot of a net inside one of the
supported models: the upper half-plane/half-space, the 3-regular tree,
the integer line, combs, l1-products, and explicit small metric graphs.
Points carry model coordinates; the graph carries exact shortest-path
queries; the window descriptor remembers how the region was generated so
that boundary effects (truncation) can be flagged.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import EmptySpaceError, PreconditionError, SizeCapError

__all__ = [
    "HalfPlane",
    "HalfSpace",
    "TreeAddress",
    "ZPoint",
    "CombNode",
    "TuplePoint",
    "ModelPoint",
    "SpaceGraph",
    "GrowthReport",
    "point_distance",
    "point_key",
    "model_distance",
    "generate_net",
    "ball",
    "build_product",
    "metric_graph",
    "growth_report",
]

# Stratified half-space nets: layers at y = exp(k*sep), horizontal grid
# step 2*sinh(sep)*y, i.e. exactly 2*sep of hyperbolic distance within a
# layer (arcosh(1+2*sinh(u)^2) = 2u).  The whole stream is then pairwise
# >= sep apart, so greedy insertion keeps every candidate and the net
# density stays near one point per 2*sep^2 of area.
_LAYER_STEP = 1.0  # vertical layer spacing, in units of sep
_X_STEP_SCALE = 1.0  # horizontal step = 2*sinh(_X_STEP_SCALE*sep) * y

PRODUCT_CAP = 2_000_000


# ---------------------------------------------------------------------------
# model points


@dataclass(frozen=True, slots=True)
class HalfPlane:
    """Point (x, y) of the upper half-plane, y > 0."""

    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"half-plane point needs y > 0, got y={self.y}")


@dataclass(frozen=True, slots=True)
class HalfSpace:
    """Point (x_1..x_{d-1}; y) of upper half-space, y > 0."""

    xs: tuple[float, ...]
    y: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"half-space point needs y > 0, got y={self.y}")


@dataclass(frozen=True, slots=True)
class TreeAddress:
    """Reduced word over {0,1,2}: no letter repeats its predecessor."""

    word: tuple[int, ...]

    def __post_init__(self):
        w = self.word
        for i, a in enumerate(w):
            if a not in (0, 1, 2):
                raise ValueError(f"tree letters must be 0/1/2, got {a}")
            if i and a == w[i - 1]:
                raise ValueError(f"word not reduced at position {i}: {w}")


@dataclass(frozen=True, slots=True)
class ZPoint:
    n: int


@dataclass(frozen=True, slots=True)
class CombNode:
    """Comb vertex: base position plus offsets along successive hairs.

    ``offsets[i] >= 1`` is the position along the generation-(i+1) hair;
    the hair of generation i+1 is rooted at the node with offsets[:i+1]
    truncated, except that generation-(g+1) hairs never attach at roots.
    """

    base: int
    offsets: tuple[int, ...] = ()

    def __post_init__(self):
        if any(o < 1 for o in self.offsets):
            raise ValueError(f"hair offsets must be >= 1, got {self.offsets}")

    @property
    def level(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True, slots=True)
class TuplePoint:
    parts: tuple["ModelPoint", ...]


ModelPoint = Union[HalfPlane, HalfSpace, TreeAddress, ZPoint, CombNode, TuplePoint]


def point_key(p: ModelPoint):
    """Hashable canonical key of a model point."""
    if isinstance(p, HalfPlane):
        return ("h2", p.x, p.y)
    if isinstance(p, HalfSpace):
        return ("hd", p.xs, p.y)
    if isinstance(p, TreeAddress):
        return ("t3", p.word)
    if isinstance(p, ZPoint):
        return ("z", p.n)
    if isinstance(p, CombNode):
        return ("comb", p.base, p.offsets)
    if isinstance(p, TuplePoint):
        return ("prod",) + tuple(point_key(q) for q in p.parts)
    raise TypeError(f"not a model point: {p!r}")


def _acosh1p(t: float) -> float:
    # acosh(1 + t) with clamping for tiny negative rounding noise
    if t <= 0.0:
        return 0.0
    return math.acosh(1.0 + t)


def _word_distance(u: tuple[int, ...], v: tuple[int, ...]) -> int:
    m = min(len(u), len(v))
    k = 0
    while k < m and u[k] == v[k]:
        k += 1
    return len(u) + len(v) - 2 * k


def _comb_distance(p: CombNode, q: CombNode) -> int:
    if p.base != q.base:
        return sum(p.offsets) + abs(p.base - q.base) + sum(q.offsets)
    u, v = p.offsets, q.offsets
    m = min(len(u), len(v))
    k = 0
    while k < m and u[k] == v[k]:
        k += 1
    if k < len(u) and k < len(v):
        # diverge along a shared hair at generation k+1
        return sum(u[k + 1 :]) + abs(u[k] - v[k]) + sum(v[k + 1 :])
    return sum(u[k:]) + sum(v[k:])


def point_distance(p: ModelPoint, q: ModelPoint) -> float:
    """Continuous-model distance between two points of the same variant."""
    if isinstance(p, HalfPlane) and isinstance(q, HalfPlane):
        dx = p.x - q.x
        dy = p.y - q.y
        return _acosh1p((dx * dx + dy * dy) / (2.0 * p.y * q.y))
    if isinstance(p, HalfSpace) and isinstance(q, HalfSpace):
        dx2 = sum((a - b) ** 2 for a, b in zip(p.xs, q.xs))
        dy = p.y - q.y
        return _acosh1p((dx2 + dy * dy) / (2.0 * p.y * q.y))
    if isinstance(p, TreeAddress) and isinstance(q, TreeAddress):
        return float(_word_distance(p.word, q.word))
    if isinstance(p, ZPoint) and isinstance(q, ZPoint):
        return float(abs(p.n - q.n))
    if isinstance(p, CombNode) and isinstance(q, CombNode):
        return float(_comb_distance(p, q))
    if isinstance(p, TuplePoint) and isinstance(q, TuplePoint):
        if len(p.parts) != len(q.parts):
            raise ValueError("product points of different arity")
        return sum(point_distance(a, b) for a, b in zip(p.parts, q.parts))
    raise TypeError(f"incomparable points: {type(p).__name__} vs {type(q).__name__}")


# ---------------------------------------------------------------------------
# growth report


@dataclass
class GrowthReport:
    """Ball cardinalities around a center, with boundary-truncation flags."""

    center: int
    radii: list[int]
    counts: list[int]
    truncated: list[bool]
    fitted_exponent: Optional[float] = None
    fit_residual: Optional[float] = None
    subexp_stat: Optional[float] = None

    def untruncated(self, r_min: int = 0) -> tuple[list[int], list[int]]:
        rs, cs = [], []
        for r, c, t in zip(self.radii, self.counts, self.truncated):
            if not t and r >= r_min:
                rs.append(r)
                cs.append(c)
        return rs, cs


# ---------------------------------------------------------------------------
# the space graph


@dataclass
class SpaceGraph:
    """Immutable net graph with model-coordinate payloads.

    ``adj`` holds sorted adjacency tuples; edges join points at model
    distance <= ``edge_threshold``.  All queries are read-only.
    """

    model: str
    points: list[ModelPoint]
    adj: list[tuple[int, ...]]
    sep: float
    edge_threshold: float
    window: dict
    degree_bound: int = 0
    _index: dict = field(default_factory=dict, repr=False)
    _dist_matrix: Optional[np.ndarray] = field(default=None, repr=False)
    _csr: object = field(default=None, repr=False)
    _grid: object = field(default=None, repr=False)

    def __post_init__(self):
        if not self.points:
            raise EmptySpaceError(f"window produced no points: {self.window}")
        if not self.degree_bound:
            self.degree_bound = max((len(a) for a in self.adj), default=0)
        if not self._index:
            self._index = {point_key(p): i for i, p in enumerate(self.points)}

    # -- basic queries ----------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.points)

    def index_of(self, p: ModelPoint) -> int:
        return self._index[point_key(p)]

    def model_distance(self, i: int, j: int) -> float:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"point index out of range: {i}, {j}")
        if self._dist_matrix is not None:
            return float(self._dist_matrix[i, j])
        return point_distance(self.points[i], self.points[j])

    def margin(self, i: int) -> float:
        """Model-metric distance from point i to the window boundary."""
        w = self.window
        kind = w.get("kind")
        p = self.points[i]
        if kind == "ball":
            base = self.points[w["basepoint"]]
            return w["radius"] - point_distance(p, base)
        if kind == "range":  # integer interval
            return float(min(p.n - w["lo"], w["hi"] - p.n))
        if kind == "tree_ball":
            return float(w["radius"] - len(p.word))
        if kind == "comb_extent":
            coords = [abs(p.base), *p.offsets]
            return float(w["extent"] - max(coords))
        if kind == "birad":
            # window {sum_i d_i(proj_i, o_i) <= radius} for half-space nets;
            # the sum grows at rate <= 2 per unit moved (vertical moves count
            # in every projection), so half the budget bounds the distance
            # to the boundary from below
            return (w["radius"] - self._birad_sum(p)) / 2.0
        if kind == "l1_ball":
            total = w["radius"] - self._l1_center_distance(p)
            return min([total] + [
                f.margin(f.index_of(part))
                for f, part in zip(self.window["factors"], p.parts)
            ])
        if kind == "full" and self.model == "product":
            return min(f.margin(f.index_of(part))
                       for f, part in zip(w["factors"], p.parts))
        return math.inf

    def _birad_sum(self, p: HalfSpace) -> float:
        total = 0.0
        for x in p.xs:
            total += _acosh1p((x * x + (p.y - 1.0) ** 2) / (2.0 * p.y))
        return total

    def _l1_center_distance(self, p: TuplePoint) -> float:
        factors = self.window["factors"]
        centers = self.window["centers"]
        return sum(
            f.model_distance(f.index_of(part), c)
            for f, part, c in zip(factors, p.parts, centers)
        )

    # -- graph metric -----------------------------------------------------

    def _as_csr(self):
        if self._csr is None:
            from scipy.sparse import csr_matrix

            indptr = np.zeros(self.n + 1, dtype=np.int64)
            for i, nbrs in enumerate(self.adj):
                indptr[i + 1] = indptr[i] + len(nbrs)
            indices = np.empty(indptr[-1], dtype=np.int32)
            for i, nbrs in enumerate(self.adj):
                indices[indptr[i] : indptr[i + 1]] = nbrs
            data = np.ones(indptr[-1], dtype=np.int8)
            self._csr = csr_matrix((data, indices, indptr), shape=(self.n, self.n))
        return self._csr

    def graph_distances(self, center: int, limit: Optional[int] = None) -> np.ndarray:
        """Shortest-path distances from center; -1 where unreachable/over limit."""
        if not 0 <= center < self.n:
            raise IndexError(f"point index out of range: {center}")
        if self.n > 3000:
            from scipy.sparse.csgraph import dijkstra

            lim = np.inf if limit is None else float(limit)
            d = dijkstra(self._as_csr(), directed=False, unweighted=True,
                         indices=center, limit=lim)
            out = np.full(self.n, -1, dtype=np.int64)
            finite = np.isfinite(d)
            out[finite] = d[finite].astype(np.int64)
            return out
        return self._bfs(center, limit)

    def _bfs(self, center: int, limit: Optional[int] = None) -> np.ndarray:
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[center] = 0
        dq = deque([center])
        while dq:
            v = dq.popleft()
            dv = dist[v]
            if limit is not None and dv >= limit:
                continue
            for w in self.adj[v]:
                if dist[w] < 0:
                    dist[w] = dv + 1
                    dq.append(w)
        return dist

    def multi_source_distances(self, sources: Sequence[int],
                               limit: Optional[int] = None) -> np.ndarray:
        if self.n > 3000 and len(sources) > 1:
            from scipy.sparse.csgraph import dijkstra

            lim = np.inf if limit is None else float(limit)
            d = dijkstra(self._as_csr(), directed=False, unweighted=True,
                         indices=list(sources), limit=lim, min_only=True)
            out = np.full(self.n, -1, dtype=np.int64)
            finite = np.isfinite(d)
            out[finite] = d[finite].astype(np.int64)
            return out
        dist = np.full(self.n, -1, dtype=np.int64)
        dq = deque()
        for s in sources:
            if dist[s] != 0:
                dist[s] = 0
                dq.append(s)
        while dq:
            v = dq.popleft()
            dv = dist[v]
            if limit is not None and dv >= limit:
                continue
            for w in self.adj[v]:
                if dist[w] < 0:
                    dist[w] = dv + 1
                    dq.append(w)
        return dist

    # -- model-metric range queries ---------------------------------------

    def points_within(self, i: int, radius: float) -> list[int]:
        """Indices of points at model distance <= radius of point i."""
        p = self.points[i]
        if self.model in ("h2", "hd") and self.n > 400:
            coords = (p.x,) if self.model == "h2" else p.xs
            return self.points_near_coords(coords, p.y, radius)
        if self.model == "z":
            return [j for j in range(self.n)
                    if abs(self.points[j].n - p.n) <= radius]
        out = []
        for j in range(self.n):
            if self.model_distance(i, j) <= radius:
                out.append(j)
        return out

    def _coords(self) -> tuple[np.ndarray, np.ndarray]:
        # cached (xs, y) arrays for half-plane/half-space nets
        if getattr(self, "_coord_cache", None) is None:
            if self.model == "h2":
                xs = np.array([[p.x] for p in self.points])
            else:
                xs = np.array([list(p.xs) for p in self.points])
            ys = np.array([p.y for p in self.points])
            self._coord_cache = (xs, ys)
        return self._coord_cache

    def margins(self) -> np.ndarray:
        """Cached per-point distance to the window boundary."""
        if getattr(self, "_margin_cache", None) is None:
            w = self.window
            if w.get("kind") == "ball" and self.model in ("h2", "hd"):
                xs, ys = self._coords()
                bi = w["basepoint"]
                bx, by = xs[bi], ys[bi]
                t = (((xs - bx) ** 2).sum(axis=1) + (ys - by) ** 2) / (2 * ys * by)
                self._margin_cache = w["radius"] - np.arccosh(np.maximum(1.0, 1 + t))
            else:
                self._margin_cache = np.array([self.margin(i) for i in range(self.n)])
        return self._margin_cache

    def _ensure_grid(self):
        if self._grid is None:
            xs, ys = self._coords()
            h = self.sep * _LAYER_STEP
            layer = np.rint(np.log(ys) / h).astype(np.int64)
            w = 2.0 * math.sinh(_X_STEP_SCALE * self.sep)
            cells: dict = {}
            for i in range(self.n):
                cell_w = w * ys[i]
                key = (int(layer[i]),) + tuple(
                    int(math.floor(x / cell_w)) for x in xs[i])
                cells.setdefault(key, []).append(i)
            self._grid = (cells, h, w)
        return self._grid

    def points_near_coords(self, coords: tuple[float, ...], y: float,
                           radius: float) -> list[int]:
        """Net points within model distance ``radius`` of arbitrary coords."""
        cells, h, w = self._ensure_grid()
        out = []
        k0 = math.log(y) / h
        kspan = radius / h + 0.5
        cosh_r = math.cosh(radius)
        for k in range(int(math.ceil(k0 - kspan)) - 1, int(math.floor(k0 + kspan)) + 2):
            y1 = math.exp(k * h)
            bound2 = 2.0 * y * y1 * (cosh_r - 1.0) - (y1 - y) ** 2
            if bound2 < 0:
                continue
            half = math.sqrt(bound2)
            cell_w = w * y1
            ranges = [range(int(math.floor((c - half) / cell_w)) - 1,
                            int(math.floor((c + half) / cell_w)) + 2)
                      for c in coords]
            if len(coords) == 1:
                keys = [(k, j) for j in ranges[0]]
            else:
                keys = [(k, j1, j2) for j1 in ranges[0] for j2 in ranges[1]]
            for key in keys:
                for c in cells.get(key, ()):
                    p = self.points[c]
                    px = (p.x,) if self.model == "h2" else p.xs
                    dx2 = sum((a - b) ** 2 for a, b in zip(px, coords))
                    t = (dx2 + (p.y - y) ** 2) / (2.0 * p.y * y)
                    if _acosh1p(t) <= radius:
                        out.append(c)
        return sorted(set(out))

    def nearest_point(self, coords: tuple[float, ...], y: float) -> int:
        """Index of the net point nearest to the given model coordinates."""
        radius = self.sep
        for _ in range(40):
            found = self.points_near_coords(coords, y, radius)
            if found:
                best = None
                for c in found:
                    p = self.points[c]
                    px = (p.x,) if self.model == "h2" else p.xs
                    dx2 = sum((a - b) ** 2 for a, b in zip(px, coords))
                    d = _acosh1p((dx2 + (p.y - y) ** 2) / (2.0 * p.y * y))
                    if best is None or d < best[0] - 1e-12 or (
                            abs(d - best[0]) <= 1e-12 and c < best[1]):
                        best = (d, c)
                # re-query at the achieved distance to rule out missed cells
                sure = self.points_near_coords(coords, y, best[0] + 1e-9)
                if sure:
                    best2 = min(
                        ((self._coord_dist(c, coords, y), c) for c in sure),
                        key=lambda t: (round(t[0], 12), t[1]))
                    return best2[1]
            radius *= 2.0
        raise EmptySpaceError("nearest-point query found nothing")

    def _coord_dist(self, c: int, coords: tuple[float, ...], y: float) -> float:
        p = self.points[c]
        px = (p.x,) if self.model == "h2" else p.xs
        dx2 = sum((a - b) ** 2 for a, b in zip(px, coords))
        return _acosh1p((dx2 + (p.y - y) ** 2) / (2.0 * p.y * y))

    def pairwise_model_distances(self, idx_a: Sequence[int],
                                 idx_b: Sequence[int]) -> np.ndarray:
        """Dense |A| x |B| matrix of model distances (vectorised where possible)."""
        if self.model in ("h2", "hd"):
            xs, ys = self._coords()
            a = np.asarray(idx_a)
            b = np.asarray(idx_b)
            dx2 = ((xs[a][:, None, :] - xs[b][None, :, :]) ** 2).sum(axis=2)
            dy = ys[a][:, None] - ys[b][None, :]
            t = (dx2 + dy * dy) / (2.0 * ys[a][:, None] * ys[b][None, :])
            return np.arccosh(np.maximum(1.0, 1.0 + t))
        out = np.empty((len(idx_a), len(idx_b)))
        for r, i in enumerate(idx_a):
            for c, j in enumerate(idx_b):
                out[r, c] = self.model_distance(i, j)
        return out

    def set_distance(self, a: Iterable[int], b: Iterable[int],
                     upper: Optional[float] = None) -> float:
        """Min model distance between two point sets; exact.

        ``upper`` lets callers stop caring above a threshold: the exact
        minimum is still returned whenever it is <= upper.
        """
        ia, ib = list(a), list(b)
        if not ia or not ib:
            return math.inf
        if self.model in ("h2", "hd"):
            xs, ys = self._coords()
            # quick reject via log-height gap: d >= |log y1 - log y2|
            if upper is not None:
                la = np.log(ys[ia])
                lb = np.log(ys[ib])
                gap = max(la.min() - lb.max(), lb.min() - la.max())
                if gap > upper:
                    return float(gap)  # a valid lower bound > upper
            best = math.inf
            chunk = max(1, 2_000_000 // max(1, len(ib)))
            for s in range(0, len(ia), chunk):
                d = self.pairwise_model_distances(ia[s : s + chunk], ib)
                best = min(best, float(d.min()))
            return best
        best = math.inf
        for i in ia:
            for j in ib:
                d = self.model_distance(i, j)
                if d < best:
                    best = d
        return best

    def set_diameter(self, idx: Sequence[int]) -> float:
        idx = list(idx)
        if len(idx) < 2:
            return 0.0
        if self.model == "z":
            vals = [self.points[i].n for i in idx]
            return float(max(vals) - min(vals))
        if self.model in ("h2", "hd"):
            best = 0.0
            chunk = max(1, 2_000_000 // max(1, len(idx)))
            for s in range(0, len(idx), chunk):
                d = self.pairwise_model_distances(idx[s : s + chunk], idx)
                best = max(best, float(d.max()))
            return best
        best = 0.0
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                d = self.model_distance(idx[a], idx[b])
                if d > best:
                    best = d
        return best


# ---------------------------------------------------------------------------
# operations


def model_distance(space: SpaceGraph, p: int, q: int) -> float:
    """Model distance between points p and q of a space (by index)."""
    return space.model_distance(p, q)


def ball(space: SpaceGraph, center: int, r: int) -> tuple[frozenset[int], bool]:
    """Exact closed graph-metric ball; flags truncation at the window edge.

    Truncated means some frontier vertex (graph distance exactly r) lies
    within ``edge_threshold`` of the window boundary, so a larger window
    could add points at radius r+1 that this one cannot see.
    """
    if r < 0:
        raise ValueError("radius must be >= 0")
    dist = space.graph_distances(center, limit=r)
    members = np.nonzero((dist >= 0) & (dist <= r))[0]
    frontier = members[dist[members] == r]
    margins = space.margins()
    truncated = bool(len(frontier)) and bool(
        margins[frontier].min() <= space.edge_threshold)
    return frozenset(int(v) for v in members), truncated


def growth_report(space: SpaceGraph, center: int,
                  r_max: Optional[int] = None,
                  subset: Optional[Iterable[int]] = None) -> GrowthReport:
    """Ball-count table around ``center``, truncation-flagged per radius.

    With ``subset`` given, counts are of subset points inside ambient
    balls (the subset as a metric subspace).  Flags are cumulative: once
    a frontier touches the boundary, all larger radii stay flagged.
    """
    dist = space.graph_distances(center, limit=r_max)
    reach = dist[dist >= 0]
    top = int(reach.max()) if len(reach) else 0
    if r_max is not None:
        top = min(top, r_max)
    margins = space.margins()
    sub_mask = None
    if subset is not None:
        sub_mask = np.zeros(space.n, dtype=bool)
        sub_mask[list(subset)] = True
    radii, counts, trunc = [], [], []
    hit_boundary = False
    running = 0
    for r in range(top + 1):
        at_r = np.nonzero(dist == r)[0]
        if len(at_r) and margins[at_r].min() <= space.edge_threshold:
            hit_boundary = True
        if sub_mask is not None:
            running += int(sub_mask[at_r].sum())
        else:
            running += len(at_r)
        radii.append(r)
        counts.append(running)
        trunc.append(hit_boundary)
    return GrowthReport(center=center, radii=radii, counts=counts, truncated=trunc)


# -- net generation ---------------------------------------------------------


def generate_net(model: str, window: dict, sep: float = 1.0,
                 edge_threshold: Optional[float] = None) -> SpaceGraph:
    """Deterministic net of a model region.

    Discrete models (z, t3, comb) default to edge_threshold = sep, which
    reproduces their native graphs.  Half-space models default to 3*sep
    and require edge_threshold >= 2*sep so the interior stays connected.
    """
    if sep <= 0:
        raise ValueError("sep must be positive")
    if model == "z":
        return _net_z(window, sep, edge_threshold)
    if model == "t3":
        return _net_t3(window, sep, edge_threshold)
    if model == "h2":
        return _net_halfspace(window, sep, edge_threshold, dim=2)
    if model == "hd":
        return _net_halfspace(window, sep, edge_threshold, dim=int(window["d"]))
    if model == "comb":
        return _net_comb(window, sep, edge_threshold)
    raise ValueError(f"unknown model: {model}")


def _greedy_select(candidates: list[ModelPoint], sep: float) -> list[ModelPoint]:
    """Greedy maximal sep-separated subsequence, in stream order."""
    chosen: list[ModelPoint] = []
    for cand in candidates:
        if all(point_distance(cand, p) >= sep for p in chosen):
            chosen.append(cand)
    return chosen


def _net_z(window: dict, sep: float, edge_threshold: Optional[float]) -> SpaceGraph:
    lo, hi = int(window["lo"]), int(window["hi"])
    if hi < lo:
        raise EmptySpaceError(f"empty integer window [{lo}, {hi}]")
    thr = sep if edge_threshold is None else edge_threshold
    # integers step >= ceil(sep) apart are sep-separated by construction
    step = max(1, int(math.ceil(sep)))
    pts = [ZPoint(n) for n in range(lo, hi + 1, step)]
    adj = _edges_by_scan(pts, thr)
    mid = (lo + hi) // 2
    base = min(range(len(pts)), key=lambda i: (abs(pts[i].n - mid), i))
    return SpaceGraph(model="z", points=pts, adj=adj, sep=sep, edge_threshold=thr,
                      window={"kind": "range", "lo": lo, "hi": hi,
                              "basepoint": base})


def _net_t3(window: dict, sep: float, edge_threshold: Optional[float]) -> SpaceGraph:
    radius = int(window["radius"])
    if radius < 0:
        raise EmptySpaceError("negative tree radius")
    thr = sep if edge_threshold is None else edge_threshold
    pts: list[TreeAddress] = [TreeAddress(())]
    frontier: list[tuple[int, ...]] = [()]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            letters = (0, 1, 2) if not w else tuple(a for a in (0, 1, 2) if a != w[-1])
            for a in letters:
                nxt.append(w + (a,))
        pts.extend(TreeAddress(w) for w in nxt)
        frontier = nxt
    if sep > 1.0:
        pts = _greedy_select(pts, sep)
    if thr < 2.0 and sep <= 1.0:
        # edges are exactly parent/child word pairs
        index = {p.word: i for i, p in enumerate(pts)}
        adj_l: list[list[int]] = [[] for _ in pts]
        for i, p in enumerate(pts):
            if p.word:
                j = index[p.word[:-1]]
                adj_l[i].append(j)
                adj_l[j].append(i)
        adj = [tuple(sorted(a)) for a in adj_l]
    else:
        adj = _edges_brute(pts, thr)
    return SpaceGraph(model="t3", points=pts, adj=adj, sep=sep, edge_threshold=thr,
                      window={"kind": "tree_ball", "radius": radius,
                              "basepoint": 0})


def _net_comb(window: dict, sep: float, edge_threshold: Optional[float]) -> SpaceGraph:
    d = int(window["d"])
    extent = int(window["extent"])
    if d < 1 or extent < 1:
        raise ValueError("comb needs d >= 1 and extent >= 1")
    cap = window.get("cap", PRODUCT_CAP)
    thr = sep if edge_threshold is None else edge_threshold
    pts: list[CombNode] = [CombNode(b) for b in range(-extent, extent + 1)]
    layer = pts
    for _ in range(d - 1):
        nxt = []
        for node in layer:
            for o in range(1, extent + 1):
                nxt.append(CombNode(node.base, node.offsets + (o,)))
        pts = pts + nxt
        if len(pts) > cap:
            raise SizeCapError(f"comb size {len(pts)} exceeds cap {cap}")
        # next generation of hairs attaches along the new hairs only
        layer = nxt
    adj = _comb_edges(pts)
    base = next(i for i, p in enumerate(pts) if p.base == 0 and not p.offsets)
    return SpaceGraph(model="comb", points=pts, adj=adj, sep=sep, edge_threshold=thr,
                      window={"kind": "comb_extent", "d": d, "extent": extent,
                              "basepoint": base})


def _comb_edges(pts: list[CombNode]) -> list[tuple[int, ...]]:
    index = {(p.base, p.offsets): i for i, p in enumerate(pts)}
    adj: list[list[int]] = [[] for _ in pts]
    for i, p in enumerate(pts):
        if p.offsets:
            # parent along own hair, or the hair's root one generation down
            *head, last = p.offsets
            if last > 1:
                j = index[(p.base, tuple(head) + (last - 1,))]
            else:
                j = index[(p.base, tuple(head))]
            adj[i].append(j)
            adj[j].append(i)
        else:
            j = index.get((p.base + 1, ()))
            if j is not None:
                adj[i].append(j)
                adj[j].append(i)
    return [tuple(sorted(set(a))) for a in adj]


def _edges_by_scan(pts: list[ZPoint], thr: float) -> list[tuple[int, ...]]:
    adj: list[list[int]] = [[] for _ in pts]
    for i, p in enumerate(pts):
        j = i + 1
        while j < len(pts) and pts[j].n - p.n <= thr:
            adj[i].append(j)
            adj[j].append(i)
            j += 1
    return [tuple(sorted(a)) for a in adj]


def _edges_brute(pts: list[ModelPoint], thr: float) -> list[tuple[int, ...]]:
    adj: list[list[int]] = [[] for _ in pts]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if point_distance(pts[i], pts[j]) <= thr:
                adj[i].append(j)
                adj[j].append(i)
    return [tuple(sorted(a)) for a in adj]


def _net_halfspace(window: dict, sep: float, edge_threshold: Optional[float],
                   dim: int) -> SpaceGraph:
    """Stratified net of a half-space region.

    Layers sit at y = exp(k*sep); within a layer the grid step is
    2*sinh(1.2*sep)*y, so the whole stream is pairwise >= sep apart and
    greedy insertion keeps every candidate.
    """
    thr = 3.0 * sep if edge_threshold is None else edge_threshold
    if thr < 2.0 * sep:
        raise PreconditionError(
            f"edge_threshold {thr} < 2*sep {2 * sep}: net may disconnect")
    kind = window.get("kind", "ball")
    radius = float(window["radius"])
    if radius <= 0:
        raise EmptySpaceError("window radius must be positive")
    h = sep * _LAYER_STEP
    w = 2.0 * math.sinh(_X_STEP_SCALE * sep)
    kmax = int(math.floor(radius / h))
    model = "h2" if dim == 2 else "hd"
    pts: list[ModelPoint] = []
    for k in range(-kmax, kmax + 1):
        y = math.exp(k * h)
        # horizontal budget at height y inside a hyperbolic ball about (0;1)
        bound2 = 2.0 * y * (math.cosh(radius) - 1.0) - (y - 1.0) ** 2
        if bound2 <= 0:
            continue
        step = w * y
        jmax = int(math.floor(math.sqrt(bound2) / step))
        xs = step * np.arange(-jmax, jmax + 1)
        if dim == 2:
            keep = xs[xs * xs <= bound2]
            pts.extend(HalfPlane(float(x), y) for x in keep)
        elif kind == "ball":
            for x1 in xs:
                rem = bound2 - x1 * x1
                if rem < 0:
                    continue
                m = int(math.floor(math.sqrt(rem) / step))
                for j2 in range(-m, m + 1):
                    pts.append(HalfSpace((float(x1), j2 * step), y))
        else:  # birad: sum of per-plane distances to (0;1) stays <= radius
            daxis = np.arccosh(1.0 + np.maximum(
                0.0, (xs * xs + (y - 1.0) ** 2) / (2.0 * y)))
            for i1, x1 in enumerate(xs):
                budget = radius - daxis[i1]
                if budget < 0:
                    continue
                m = int(np.searchsorted(daxis[jmax:], budget, side="right")) - 1
                for j2 in range(-m, m + 1):
                    pts.append(HalfSpace((float(x1), j2 * step), y))
    if not pts:
        raise EmptySpaceError(f"window produced no points: {window}")
    if window.get("greedy_check"):
        # the stream is sep-separated by construction; this guard proves it
        pts = _greedy_select(pts, sep)
    adj = _halfspace_edges(pts, thr, h, w, dim)
    space = SpaceGraph(model=model, points=pts, adj=adj, sep=sep, edge_threshold=thr,
                       window={"kind": kind, "radius": radius, "basepoint": 0,
                               "d": dim})
    # basepoint = index of the point nearest (0,..,0;1)
    origin = HalfPlane(0.0, 1.0) if dim == 2 else HalfSpace((0.0,) * (dim - 1), 1.0)
    base = min(range(space.n), key=lambda i: (point_distance(space.points[i], origin), i))
    space.window["basepoint"] = base
    return space


def _halfspace_edges(pts: list[ModelPoint], thr: float, h: float, w: float,
                     dim: int) -> list[tuple[int, ...]]:
    """Edges of a stratified half-space net, by grid index arithmetic.

    Points sit exactly at x = j * (w * y_k), y_k = exp(k*h), so the
    neighbour window in the other layer is a closed-form index range.
    """
    n = len(pts)
    if dim == 2:
        xs = [(p.x,) for p in pts]
        ys = [p.y for p in pts]
    else:
        xs = [p.xs for p in pts]
        ys = [p.y for p in pts]
    layer = [int(round(math.log(y) / h)) for y in ys]
    by_layer: dict[int, dict[tuple[int, ...], int]] = {}
    for i in range(n):
        cell = w * ys[i]
        j = tuple(int(round(x / cell)) for x in xs[i])
        by_layer.setdefault(layer[i], {})[j] = i
    adj: list[list[int]] = [[] for _ in range(n)]
    kspan = int(math.floor(thr / h + 1e-9))
    cosh_thr = math.cosh(thr)
    for i in range(n):
        k = layer[i]
        for dk in range(0, kspan + 1):
            grid = by_layer.get(k + dk)
            if grid is None:
                continue
            yb = math.exp((k + dk) * h)
            bound2 = 2.0 * ys[i] * yb * (cosh_thr - 1.0) - (yb - ys[i]) ** 2
            # exactly-at-threshold verticals can round bound2 slightly below 0
            if bound2 < -1e-6 * ys[i] * yb:
                continue
            half = math.sqrt(max(bound2, 0.0)) / (w * yb)
            centers = tuple(x / (w * yb) for x in xs[i])
            ranges = [range(int(math.ceil(c - half - 1e-9)),
                            int(math.floor(c + half + 1e-9)) + 1)
                      for c in centers]
            if dim == 2:
                cand = [(j,) for j in ranges[0]]
            else:
                cand = [(j1, j2) for j1 in ranges[0] for j2 in ranges[1]]
            for key in cand:
                j = grid.get(key)
                if j is None or j == i or (dk == 0 and j < i):
                    continue
                if point_distance(pts[i], pts[j]) <= thr + 1e-12:
                    adj[i].append(j)
                    adj[j].append(i)
    return [tuple(sorted(set(a))) for a in adj]


# -- products ---------------------------------------------------------------


def build_product(spaces: Sequence[SpaceGraph], window: Optional[dict] = None,
                  cap: int = PRODUCT_CAP) -> SpaceGraph:
    """l1-product of nets, restricted to a product window.

    window = None takes the full cartesian product (subject to ``cap``);
    window = {"kind": "l1_ball", "radius": R, "centers": [i...]} keeps
    tuples whose summed factor distances to the centers are <= R.
    """
    if not spaces:
        raise ValueError("need at least one factor")
    for s in spaces:
        if s.n == 0:
            raise EmptySpaceError("empty factor space")
    if len(spaces) == 1:
        s = spaces[0]
        pts = [TuplePoint((p,)) for p in s.points]
        return SpaceGraph(model="product", points=pts, adj=list(s.adj), sep=s.sep,
                          edge_threshold=s.edge_threshold,
                          window={"kind": "full", "factors": list(spaces)})
    if window is None:
        size = 1
        for s in spaces:
            size *= s.n
        if size > cap:
            raise SizeCapError(f"product size {size} exceeds cap {cap}")
        combos = [()]
        for s in spaces:
            combos = [c + (i,) for c in combos for i in range(s.n)]
        wdesc = {"kind": "full", "factors": list(spaces)}
    else:
        radius = float(window["radius"])
        centers = list(window["centers"])
        dists = []
        for s, c in zip(spaces, centers):
            dists.append(np.array([s.model_distance(i, c) for i in range(s.n)]))
        combos = []
        if len(spaces) == 2:
            d0, d1 = dists
            ok1 = np.argsort(d1, kind="stable")
            for i in range(spaces[0].n):
                budget = radius - d0[i]
                if budget < 0:
                    continue
                js = ok1[: int(np.searchsorted(d1[ok1], budget, side="right"))]
                combos.extend((i, int(j)) for j in sorted(js))
            if len(combos) > cap:
                raise SizeCapError(f"product size {len(combos)} exceeds cap {cap}")
        else:
            stack = [((), 0.0)]
            for s, dv in zip(spaces, dists):
                nxt = []
                for combo, used in stack:
                    for i in range(s.n):
                        t = used + dv[i]
                        if t <= radius:
                            nxt.append((combo + (i,), t))
                stack = nxt
                if len(stack) > cap:
                    raise SizeCapError(f"product size {len(stack)} exceeds cap {cap}")
            combos = [c for c, _ in stack]
        wdesc = {"kind": "l1_ball", "radius": radius, "centers": centers,
                 "factors": list(spaces)}
    index = {c: i for i, c in enumerate(combos)}
    pts = [TuplePoint(tuple(s.points[i] for s, i in zip(spaces, combo)))
           for combo in combos]
    adj: list[list[int]] = [[] for _ in combos]
    for idx, combo in enumerate(combos):
        for f, s in enumerate(spaces):
            for nb in s.adj[combo[f]]:
                if nb > combo[f] or wdesc["kind"] != "full":
                    other = combo[:f] + (nb,) + combo[f + 1 :]
                    j = index.get(other)
                    if j is not None and j != idx:
                        adj[idx].append(j)
                        adj[j].append(idx)
    adj_t = [tuple(sorted(set(a))) for a in adj]
    sep = min(s.sep for s in spaces)
    thr = max(s.edge_threshold for s in spaces)
    return SpaceGraph(model="product", points=pts, adj=adj_t, sep=sep,
                      edge_threshold=thr, window=wdesc)


# -- explicit metric graphs (for oracles and small experiments) -------------


def metric_graph(n: int, edges: Iterable[tuple[int, int]]) -> SpaceGraph:
    """Small explicit graph whose model metric is its own path metric."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        if a == b:
            continue
        adj[a].append(b)
        adj[b].append(a)
    adj_t = [tuple(sorted(set(x))) for x in adj]
    pts = [ZPoint(i) for i in range(n)]
    g = SpaceGraph(model="metric_graph", points=pts, adj=adj_t, sep=1.0,
                   edge_threshold=1.0, window={"kind": "explicit"})
    dist = np.full((n, n), np.inf)
    for i in range(n):
        d = g._bfs(i)
        row = np.where(d < 0, np.inf, d.astype(float))
        dist[i] = row
    g._dist_matrix = dist
    # identical ZPoint payloads across graphs are fine; keys stay local
    g._index = {("z", i): i for i in range(n)}
    return g
