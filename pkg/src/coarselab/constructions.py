"""Explicit geometric constructions on half-plane and tree windows.

Contents: the two-coloured wedge/scallop tiling of the upper half-plane,
the depth-first spine walk of the integer line into the 3-regular tree,
the coordinate-sharing embedding of half-space into products of planes
(with its induced cover), combs, barycentric nerve maps, and exact
level-set profiles of geodesic combs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .covers import (ColoredDecomposition, Cover, kolmogorov_amplify,
                     product_decomposition, pullback_decomposition)
from .errors import (ArityError, AssignmentError, DomainError, NumericError,
                     PreconditionError)
from .spaces import (HalfPlane, SpaceGraph, TreeAddress, build_product,
                     generate_net, point_distance)

__all__ = [
    "MapRecord",
    "hd_cover_pipeline",
    "Tiling",
    "TileRecord",
    "NerveComplex",
    "build_h2_tiling",
    "assign_tile",
    "tiling_to_decomposition",
    "tree_walk",
    "brady_farb",
    "hd_cover",
    "build_comb",
    "nerve_map",
    "GeodesicComb",
    "comb_level_points",
    "comb_level_bound",
]


# ---------------------------------------------------------------------------
# map records


@dataclass
class MapRecord:
    """Total point map between two space graphs, with measured behaviour.

    ``measured_lipschitz`` is the worst model-distance stretch over source
    edges; ``measured_max_fiber`` the largest preimage cardinality.  Both
    are recomputed at construction time, never trusted from files.
    """

    source: SpaceGraph
    target: SpaceGraph
    assignment: list[int]
    provenance: dict = field(default_factory=dict)
    measured_lipschitz: float = 0.0
    measured_max_fiber: int = 0

    def __post_init__(self):
        if len(self.assignment) != self.source.n:
            raise DomainError(
                f"assignment covers {len(self.assignment)} of {self.source.n} points")
        for y in self.assignment:
            if not 0 <= y < self.target.n:
                raise DomainError(f"target index {y} out of range")
        self.remeasure()

    def remeasure(self) -> None:
        lip = 0.0
        for i, nbrs in enumerate(self.source.adj):
            for j in nbrs:
                if j < i:
                    continue
                ds = self.source.model_distance(i, j)
                dt = self.target.model_distance(self.assignment[i],
                                                self.assignment[j])
                if ds > 0:
                    lip = max(lip, dt / ds)
        fibers = np.bincount(np.array(self.assignment, dtype=np.int64),
                             minlength=self.target.n)
        self.measured_lipschitz = lip
        self.measured_max_fiber = int(fibers.max()) if len(fibers) else 0

    def fiber_sizes(self) -> np.ndarray:
        return np.bincount(np.array(self.assignment, dtype=np.int64),
                           minlength=self.target.n)


# ---------------------------------------------------------------------------
# the half-plane tiling


@dataclass(frozen=True)
class TileRecord:
    kind: str            # "A" | "B" | "B1"
    matrix: tuple        # ((a, b), (c, d)), det = 1
    depth: int
    mirrored: bool       # composed with reflection in the y-axis


@dataclass
class Tiling:
    """Two-coloured tiling of the half-plane at scale r.

    The fundamental strip splits at slopes lam1/lam3 into a near band,
    a wedge, and a scallop region bounded below by semicircles S_n with
    feet at dilation^n; each semicircle bounds a half-disk carrying a
    rescaled copy of the whole picture.
    """

    r: float
    lambdas: list[float]             # sinh(k*r), k = 0..4
    dilation: float                  # semicircle period x
    window: dict
    tiles: list[TileRecord]
    coloring: dict = field(default_factory=lambda: {"A": 0, "B": 1, "B1": 1})

    @property
    def circle0(self) -> tuple[float, float]:
        c = (1.0 + self.dilation) / 2.0
        return c, (self.dilation - 1.0) / 2.0


def _solve_dilation(r: float, tol: float = 1e-12) -> float:
    """Dilation factor x > 1 making S0 = ((1,0),(x,0)) tangent to the
    slope-sinh(4r) ray, found by bisection on the tangency residual."""
    cosh4r = math.cosh(4.0 * r)

    def residual(x: float) -> float:
        return (1.0 + x) / 2.0 - ((x - 1.0) / 2.0) * cosh4r

    lo, hi = 1.0, 2.0
    while residual(hi) > 0:
        hi *= 2.0
        if hi > 1e9:
            raise NumericError("tangency bracket not found")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    else:
        raise NumericError("tangency bisection did not converge")
    return 0.5 * (lo + hi)


def _mobius_apply(m: tuple, z: complex) -> complex:
    (a, b), (c, d) = m
    return (a * z + b) / (c * z + d)


def _mobius_mul(m1: tuple, m2: tuple) -> tuple:
    (a, b), (c, d) = m1
    (e, f), (g, h) = m2
    return ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))


def _descend_matrix(x: float, n: int) -> tuple:
    """Orientation-preserving map of the right half-plane onto the open
    half-disk under S_n: 0 -> x^n, infinity -> x^{n+1}, normalised."""
    s = math.sqrt(x ** n * (x - 1.0))
    return ((x ** (n + 1) / s, x ** n / s), (1.0 / s, 1.0 / s))


def _ascend(z: complex, x: float, n: int) -> complex:
    # inverse of _descend_matrix(x, n) applied to z
    (a, b), (c, d) = _descend_matrix(x, n)
    return (d * z - b) / (-c * z + a)


def assign_tile(tiling: Tiling, px: float, py: float,
                max_depth: int = 200) -> tuple:
    """Tile id of a half-plane point: ("B1m",) for the merged near band,
    otherwise (kind, side, descent prefix).  Deterministic; points on a
    bounding circle stay with the outer level."""
    lam1, lam3 = tiling.lambdas[1], tiling.lambdas[3]
    x = tiling.dilation
    logx = math.log(x)
    c0 = (1.0 + x) / 2.0
    rho0 = (x - 1.0) / 2.0
    side = "L" if px < 0 else "R"
    z = complex(abs(px), py)
    prefix: list[int] = []
    for _ in range(max_depth):
        if z.real > 0:
            n_guess = math.floor(math.log(z.real) / logx)
            inside = None
            for n in (int(n_guess) - 1, int(n_guess), int(n_guess) + 1):
                scale = x ** n
                dz = z - complex(scale * c0, 0.0)
                if abs(dz) < scale * rho0:
                    inside = n
                    break
            if inside is not None:
                z = _ascend(z, x, inside)
                prefix.append(inside)
                continue
        slope = z.real / z.imag
        if slope <= lam1:
            if not prefix:
                return ("B1m",)
            return ("B", side, tuple(prefix[:-1]))
        if slope <= lam3:
            return ("A", side, tuple(prefix))
        return ("B", side, tuple(prefix))
    raise AssignmentError(f"descent did not terminate at ({px}, {py})",
                          point=(px, py))


def build_h2_tiling(r: float, window: dict) -> Tiling:
    """Two-coloured tiling at scale r, with tiles enumerated down to the
    window's Euclidean resolution."""
    if r <= 0:
        raise ValueError("r must be positive")
    lambdas = [math.sinh(k * r) for k in range(5)]
    x = _solve_dilation(r)
    radius = float(window.get("radius", 8.0))
    # export resolution only bounds the enumerated tile list; point-to-tile
    # assignment descends analytically and ignores it
    resolution = float(window.get("resolution", math.exp(-radius / 2.0)))
    x_extent = window.get("x_extent", math.sinh(radius) * 1.05 + 2.0)
    rho0 = (x - 1.0) / 2.0
    logx = math.log(x)
    # Euclidean disk of the hyperbolic window ball about (0; 1)
    ball_c, ball_r = math.cosh(radius), math.sinh(radius)

    def meets_window(c: float, rho: float) -> bool:
        return math.hypot(c, ball_c) <= rho + ball_r + resolution

    tiles: list[TileRecord] = [TileRecord("B1", _identity(), 0, False)]
    ident = _identity()
    for mirrored in (False, True):
        tiles.append(TileRecord("A", ident, 0, mirrored))
        tiles.append(TileRecord("B", ident, 0, mirrored))
    # enumerate descended copies that are wide enough to resolve and whose
    # half-disk meets the window ball
    stack: list[tuple[tuple, float, int, bool]] = []
    n_hi = int(math.floor(math.log(x_extent) / logx)) + 1
    n_lo = int(math.ceil(math.log(max(resolution / rho0, 1e-300)) / logx)) - 1
    for mirrored in (False, True):
        for n in range(n_lo, n_hi + 1):
            rho = x ** n * rho0
            c = x ** n * c_center(x)
            if meets_window(c, rho):
                stack.append((_descend_matrix(x, n), rho, 1, mirrored))
    while stack:
        m, rho, depth, mirrored = stack.pop()
        if 2.0 * rho < resolution or depth > 60:
            continue
        tiles.append(TileRecord("A", m, depth, mirrored))
        tiles.append(TileRecord("B", m, depth, mirrored))
        for n in range(n_lo, n_hi + 1):
            child = _mobius_mul(m, _descend_matrix(x, n))
            crho, cc = _image_circle(child)
            if crho >= resolution / 2.0 and meets_window(cc, crho):
                stack.append((child, crho, depth + 1, mirrored))
    return Tiling(r=r, lambdas=lambdas, dilation=x,
                  window=dict(window), tiles=tiles)


def c_center(x: float) -> float:
    return (1.0 + x) / 2.0


def _identity() -> tuple:
    return ((1.0, 0.0), (0.0, 1.0))


def _image_circle(m: tuple) -> tuple[float, float]:
    # image of the right half-plane boundary (the y-axis) under m is the
    # circle through m(0) and m(inf) centred on the real axis
    (a, b), (c, d) = m
    z0 = b / d if d != 0 else math.inf
    zinf = a / c if c != 0 else math.inf
    if not (math.isfinite(z0) and math.isfinite(zinf)):
        return math.inf, 0.0
    return abs(zinf - z0) / 2.0, (z0 + zinf) / 2.0


def tiling_to_decomposition(tiling: Tiling, net: SpaceGraph) -> ColoredDecomposition:
    """Assign every net point to its tile; colours: wedges 0, scallops 1."""
    if net.model != "h2":
        raise ValueError("tiling decompositions need a half-plane net")
    groups: dict[tuple, set[int]] = {}
    for i, p in enumerate(net.points):
        tid = assign_tile(tiling, p.x, p.y)
        groups.setdefault(tid, set()).add(i)
    pieces, colors, labels = [], [], []
    for tid in sorted(groups, key=_tile_sort_key):
        pieces.append(frozenset(groups[tid]))
        kind = "B1" if tid[0] == "B1m" else tid[0]
        colors.append(tiling.coloring[kind])
        labels.append(repr(tid))
    return ColoredDecomposition(
        space=net, pieces=pieces, colors=colors, r=tiling.r, d=1,
        partition=True,
        provenance={"construction": "h2_tiling", "r": tiling.r,
                    "dilation": tiling.dilation, "labels": labels},
    )


def _tile_sort_key(tid: tuple):
    if tid[0] == "B1m":
        return (0, "", 0, ())
    kind, side, prefix = tid
    return (1, kind, len(prefix), (side,) + prefix)


# ---------------------------------------------------------------------------
# the spine walk into the 3-regular tree


def _spine_word(k: int) -> tuple[int, ...]:
    if k >= 0:
        return tuple(0 if i % 2 == 0 else 1 for i in range(k))
    return tuple(1 if i % 2 == 0 else 0 for i in range(-k))


def _child_letters(word: tuple[int, ...]) -> tuple[int, int]:
    if not word:
        return (0, 1)
    a, b = tuple(l for l in (0, 1, 2) if l != word[-1])
    return a, b


def _binary_walk(root: tuple[int, ...], depth: int) -> list[tuple[int, ...]]:
    """Closed depth-first walk below ``root``: every edge of the depth-d
    binary tree twice, leaves visited in lexicographic order."""
    if depth == 0:
        return [root]
    lo, hi = _child_letters(root)
    left = _binary_walk(root + (lo,), depth - 1)
    right = _binary_walk(root + (hi,), depth - 1)
    return [root] + left + [root] + right + [root]


def tree_walk(n_max: int) -> MapRecord:
    """Adjacent-step walk of an integer window through the 3-regular tree.

    Spine vertices carry alternating words, vertex k hangs a depth-|k|
    binary tree off its third direction; the walk closes a depth-first
    tour of each hung tree before stepping to the next spine vertex.
    Every tree vertex is met at most three times.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    seq: list[tuple[int, ...]] = []
    zero_pos: Optional[int] = None
    for k in range(-n_max, n_max):
        root = _spine_word(k) + (2,)
        if k == 0:
            zero_pos = len(seq)
        seq.extend(_binary_walk(root, abs(k)))
        # step root -> spine k -> spine k+1; the next tour starts at (k+1)'
        seq.append(_spine_word(k))
        seq.append(_spine_word(k + 1))
    final_root = _spine_word(n_max) + (2,)
    seq.append(final_root)
    if zero_pos is None:
        raise RuntimeError("walk never crossed zero")

    addr_index: dict[tuple[int, ...], int] = {}
    points: list[TreeAddress] = []
    adj: list[set[int]] = []
    for w in seq:
        if w not in addr_index:
            addr_index[w] = len(points)
            points.append(TreeAddress(w))
            adj.append(set())
    for a, b in zip(seq, seq[1:]):
        ia, ib = addr_index[a], addr_index[b]
        adj[ia].add(ib)
        adj[ib].add(ia)
    target = SpaceGraph(
        model="t3", points=points, adj=[tuple(sorted(s)) for s in adj],
        sep=1.0, edge_threshold=1.0,
        window={"kind": "walk_subtree", "n_max": n_max,
                "spine": {k: addr_index[_spine_word(k)]
                          for k in range(-n_max, n_max + 1)},
                "roots": {k: addr_index[_spine_word(k) + (2,)]
                          for k in range(-n_max, n_max + 1)
                          if _spine_word(k) + (2,) in addr_index}},
    )
    lo = -zero_pos
    hi = len(seq) - 1 - zero_pos
    source = generate_net("z", {"lo": lo, "hi": hi})
    assignment = [addr_index[w] for w in seq]
    return MapRecord(
        source=source, target=target, assignment=assignment,
        provenance={"construction": "tree_walk", "n_max": n_max,
                    "domain": [lo, hi]},
    )


def walk_value(walk: MapRecord, b: int) -> int:
    """Target index of integer b under the walk."""
    lo = walk.provenance["domain"][0]
    return walk.assignment[b - lo]


# ---------------------------------------------------------------------------
# coordinate-sharing embedding into products of planes


def brady_farb(source: SpaceGraph, factors: Sequence[SpaceGraph],
               product: Optional[SpaceGraph] = None) -> MapRecord:
    """Snap (x_1..x_{d-1}; y) onto the tuple of nearest factor net points
    ((x_i; y))_i.  With ``product`` given, the image is indexed there."""
    d = source.window.get("d", 2)
    if len(factors) != d - 1:
        raise ArityError(f"need {d - 1} plane factors, got {len(factors)}")
    pairs: list[tuple[int, ...]] = []
    for p in source.points:
        if isinstance(p, HalfPlane):
            coords = [(p.x, p.y)]
        else:
            coords = [(xi, p.y) for xi in p.xs]
        snapped = []
        for (xi, y), f in zip(coords, factors):
            fwin = f.window
            if fwin.get("kind") == "ball":
                base = f.points[fwin["basepoint"]]
                if point_distance(HalfPlane(xi, y), base) > fwin["radius"] + f.sep:
                    raise DomainError(
                        f"projection ({xi:.3f}; {y:.3f}) falls outside a"
                        f" radius-{fwin['radius']} factor window")
            snapped.append(f.nearest_point((xi,), y))
        pairs.append(tuple(snapped))
    if product is None:
        if len(factors) == 1:
            target = factors[0]
            assignment = [c[0] for c in pairs]
        else:
            raise ValueError("multi-factor images need a product space")
    else:
        target = product
        index = {}
        fspaces = product.window["factors"]
        for idx, tp in enumerate(product.points):
            key = tuple(f.index_of(part) for f, part in zip(fspaces, tp.parts))
            index[key] = idx
        assignment = []
        for c in pairs:
            j = index.get(c)
            if j is None:
                raise DomainError(
                    f"image tuple {c} outside the product window")
            assignment.append(j)
    return MapRecord(source=source, target=target, assignment=assignment,
                     provenance={"construction": "brady_farb", "d": d})


def hd_cover(d: int, radius: float, r: float, *,
             source_sep: float = 0.35, factor_sep: float = 1.0,
             snap_slack: float = 2.5) -> ColoredDecomposition:
    """Coloured decomposition of a half-space window, pulled back through
    the plane-product embedding of amplified factor tilings.

    d = 2 degenerates to the plane tiling itself.  Use
    :func:`hd_cover_pipeline` to also get every intermediate artifact.
    """
    return hd_cover_pipeline(d, radius, r, source_sep=source_sep,
                             factor_sep=factor_sep,
                             snap_slack=snap_slack)["decomposition"]


def hd_cover_pipeline(d: int, radius: float, r: float, *,
                      source_sep: float = 0.35, factor_sep: float = 1.0,
                      snap_slack: float = 2.5) -> dict:
    """As :func:`hd_cover`, returning the full artifact bundle: the
    decomposition plus the source net, tiling, factor nets and
    decompositions, product space and embedding map."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if d == 2:
        net = generate_net("h2", {"kind": "ball", "radius": radius},
                           sep=factor_sep)
        tiling = build_h2_tiling(r, {"radius": radius})
        decomp = tiling_to_decomposition(tiling, net)
        return {"decomposition": decomp, "net": net, "tiling": tiling,
                "map": None, "product": None, "factors": [net]}
    if d != 3:
        raise ValueError("only d in {2, 3} windows are generated")
    factors = [generate_net("h2", {"kind": "ball", "radius": radius},
                            sep=factor_sep) for _ in range(d - 1)]
    tiling = build_h2_tiling(r, {"radius": radius})
    decomps = [tiling_to_decomposition(tiling, f) for f in factors]
    amplified = [kolmogorov_amplify(dc) for dc in decomps]
    product = build_product(
        factors,
        window={"kind": "l1_ball", "radius": radius + snap_slack,
                "centers": [f.window["basepoint"] for f in factors]})
    prod_decomp = product_decomposition(amplified[0], amplified[1], product)
    source = generate_net("hd", {"kind": "birad", "radius": radius, "d": d},
                          sep=source_sep, edge_threshold=2 * source_sep)
    emb = brady_farb(source, factors, product)
    pulled = pullback_decomposition(emb, prod_decomp)
    return {"decomposition": pulled, "net": source, "tiling": tiling,
            "map": emb, "product": product, "product_decomposition": prod_decomp,
            "factors": factors, "factor_decompositions": amplified}


# ---------------------------------------------------------------------------
# combs


def build_comb(d: int, extent: int) -> SpaceGraph:
    """Simplicial comb of step d, truncated at ``extent`` along the base
    and every hair; hair roots are implicit in the node payloads."""
    return generate_net("comb", {"d": d, "extent": extent})


# ---------------------------------------------------------------------------
# nerve complexes


@dataclass
class NerveComplex:
    vertices: list[int]
    simplices: set[frozenset[int]]
    coordinates: list[dict[int, float]]
    dimension: int


def nerve_map(space: SpaceGraph, cover: Cover) -> NerveComplex:
    """Barycentric map of a cover: each point weighs pieces by its graph
    distance to their complements, normalised to sum 1."""
    n = space.n
    numerators: list[dict[int, float]] = [dict() for _ in range(n)]
    for pid, piece in enumerate(cover.pieces):
        complement = [i for i in range(n) if i not in piece]
        if not complement:
            # piece is everything: distance to the empty complement is
            # read as 1 + eccentricity so the weight stays finite
            dist_in = space.multi_source_distances(sorted(piece))
            far = int(dist_in.max()) + 1
            for x in piece:
                numerators[x][pid] = float(far)
            continue
        d = space.multi_source_distances(complement)
        for x in piece:
            numerators[x][pid] = float(d[x])
    coords: list[dict[int, float]] = []
    simplices: set[frozenset[int]] = set()
    for x in range(n):
        total = sum(numerators[x].values())
        if total <= 0:
            raise PreconditionError(f"point {x} has all-zero nerve numerators",
                                    witness=x)
        coords.append({pid: v / total for pid, v in numerators[x].items()})
        simplices.add(frozenset(numerators[x]))
    dim = max(len(s) for s in simplices) - 1
    return NerveComplex(vertices=list(range(len(cover.pieces))),
                        simplices=simplices, coordinates=coords, dimension=dim)


def nerve_lipschitz(space: SpaceGraph, nerve: NerveComplex) -> float:
    """Max l2 displacement of barycentric coordinates over graph edges."""
    worst = 0.0
    for i, nbrs in enumerate(space.adj):
        ci = nerve.coordinates[i]
        for j in nbrs:
            if j < i:
                continue
            cj = nerve.coordinates[j]
            keys = set(ci) | set(cj)
            disp = math.sqrt(sum((ci.get(k, 0.0) - cj.get(k, 0.0)) ** 2
                                 for k in keys))
            worst = max(worst, disp)
    return worst


# ---------------------------------------------------------------------------
# geodesic combs in the half-plane, with exact level-set counting


@dataclass
class GeodesicComb:
    """Spine geodesic with orthogonal hair geodesics every D units.

    The spine is the semicircle of Euclidean radius R about the origin;
    hairs hang inside the dome (each descends monotonically from its
    root to a foot on the x-axis), so every horizontal line meets each
    hair at most once.  ``phase`` shifts the arclength parametrisation.
    """

    R: float
    D: float
    i_range: tuple[int, int]
    phase: float = 0.0

    def root_angle(self, i: int) -> float:
        # arclength s along the spine: s = log(tan(theta/2)), theta from
        # the positive x-axis; gudermannian inversion gives theta(s)
        s = self.phase + i * self.D
        if s > 700.0:
            return math.pi
        return 2.0 * math.atan(math.exp(s))

    def hair_heights(self) -> list[tuple[int, float]]:
        """Height of each hair's root point (its maximum inside the dome);
        sin(theta(s)) = sech(s), so the height is R / cosh(s)."""
        out = []
        for i in range(self.i_range[0], self.i_range[1] + 1):
            s = self.phase + i * self.D
            e = math.exp(-abs(s))
            out.append((i, self.R * 2.0 * e / (1.0 + e * e)))
        return out


def comb_level_points(comb: GeodesicComb, c: float,
                      a: float) -> tuple[int, float]:
    """Exact number of comb points at height e^c within the part of the
    comb at heights <= e^a (dome case: the cut sits above the spine apex,
    so that part is connected).  Returns (count, a0) where e^{a0} is the
    top height the component reaches."""
    if math.exp(a) < comb.R:
        raise ValueError("cut below the apex: the region is not connected")
    level = math.exp(c)
    a0 = math.log(comb.R)  # the spine apex is the highest point
    count = 2 if level < comb.R else (1 if level == comb.R else 0)
    for _i, h in comb.hair_heights():
        # hairs descend monotonically from their root height to the axis
        if level <= h:
            count += 1
    return count, a0


def comb_level_bound(comb: GeodesicComb, c: float, a0: float) -> float:
    return 3.0 + 2.0 * math.log(2.0) / comb.D + 2.0 * max(0.0, a0 - c) / comb.D
