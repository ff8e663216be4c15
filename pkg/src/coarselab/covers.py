"""Covers, coloured decompositions, and the algebra between them.

Pieces are plain index sets over a :class:`~coarselab.spaces.SpaceGraph`.
Separation and disjointness are judged in the model metric (the window
is a sample of a continuous space); multiplicity is judged with graph
balls unless a caller asks for the model metric.  Every constructive
operation re-verifies its own postconditions before returning.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .errors import ArityError, DomainError, PreconditionError
from .spaces import SpaceGraph

__all__ = [
    "Cover",
    "ColoredDecomposition",
    "NeighborhoodChain",
    "Violation",
    "r_multiplicity",
    "check_disjointness",
    "iterated_neighborhood",
    "greedy_decomposition",
    "kolmogorov_amplify",
    "product_decomposition",
    "pullback_cover",
    "pullback_decomposition",
    "refine_connected",
    "mesh_ball_cover",
]


@dataclass
class Cover:
    """Indexed family of point sets whose union is the whole space."""

    space: SpaceGraph
    pieces: list[frozenset[int]]
    labels: Optional[list[str]] = None

    def __post_init__(self):
        self.pieces = [frozenset(p) for p in self.pieces]
        if any(not p for p in self.pieces):
            raise ValueError("cover pieces must be non-empty")
        covered = set().union(*self.pieces) if self.pieces else set()
        if len(covered) != self.space.n:
            missing = next(i for i in range(self.space.n) if i not in covered)
            raise ValueError(f"cover misses point {missing}")

    def piece_of(self) -> list[list[int]]:
        """For each point, the sorted list of piece ids containing it."""
        owner: list[list[int]] = [[] for _ in range(self.space.n)]
        for pid, piece in enumerate(self.pieces):
            for x in piece:
                owner[x].append(pid)
        return owner


@dataclass
class ColoredDecomposition:
    """Pieces with colours 0..d; same-colour pieces claimed r-disjoint."""

    space: SpaceGraph
    pieces: list[frozenset[int]]
    colors: list[int]
    r: float
    d: int
    partition: bool = True
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pieces = [frozenset(p) for p in self.pieces]
        if len(self.pieces) != len(self.colors):
            raise ValueError("one colour per piece required")
        if any(not 0 <= c <= self.d for c in self.colors):
            raise ValueError("colours must lie in 0..d")
        counts = np.zeros(self.space.n, dtype=np.int64)
        for piece in self.pieces:
            for x in piece:
                counts[x] += 1
        if (counts == 0).any():
            missing = int(np.nonzero(counts == 0)[0][0])
            raise ValueError(f"decomposition misses point {missing}")
        if self.partition and (counts > 1).any():
            dup = int(np.nonzero(counts > 1)[0][0])
            raise ValueError(f"point {dup} lies in several pieces of a partition")

    def color_classes(self) -> list[set[int]]:
        """Union of pieces per colour, as point sets."""
        cls: list[set[int]] = [set() for _ in range(self.d + 1)]
        for piece, c in zip(self.pieces, self.colors):
            cls[c].update(piece)
        return cls

    def as_cover(self) -> Cover:
        return Cover(self.space, list(self.pieces))

    def coverage_counts(self) -> np.ndarray:
        """Number of colour classes (as point sets) containing each point."""
        out = np.zeros(self.space.n, dtype=np.int64)
        for cls in self.color_classes():
            for x in cls:
                out[x] += 1
        return out


@dataclass
class NeighborhoodChain:
    """Nested absorption levels of one piece under nearby-piece union."""

    base_piece: int
    s: float
    levels: list[frozenset[int]]
    truncated: bool


@dataclass
class Violation:
    piece_a: int
    piece_b: int
    distance: float


PieceFamily = Union[Cover, ColoredDecomposition]


# ---------------------------------------------------------------------------
# mesh ball covers


def mesh_ball_cover(space: SpaceGraph, R: int) -> Cover:
    """Cover by closed graph R-balls around a maximal R-separated vertex
    set, selected greedily in index order.  Maximality makes the centers
    an R-covering, so the R-balls cover the space."""
    if R < 1:
        raise ValueError("R must be >= 1")
    from collections import deque

    blocked = np.zeros(space.n, dtype=bool)
    centers: list[int] = []
    for v in range(space.n):
        if blocked[v]:
            continue
        centers.append(v)
        # block everything within R-1 (their distance to v is < R)
        dq = deque([(v, 0)])
        seen = {v}
        blocked[v] = True
        while dq:
            u, d = dq.popleft()
            if d >= R - 1:
                continue
            for nb in space.adj[u]:
                if nb not in seen:
                    seen.add(nb)
                    blocked[nb] = True
                    dq.append((nb, d + 1))
    pieces = []
    for c in centers:
        dq = deque([(c, 0)])
        seen = {c}
        while dq:
            u, d = dq.popleft()
            if d >= R:
                continue
            for nb in space.adj[u]:
                if nb not in seen:
                    seen.add(nb)
                    dq.append((nb, d + 1))
        pieces.append(frozenset(seen))
    return Cover(space=space, pieces=pieces,
                 labels=[f"ball:{c}:{R}" for c in centers])


# ---------------------------------------------------------------------------
# multiplicity


def r_multiplicity(cover: PieceFamily, R: float,
                   metric: str = "graph") -> tuple[int, int]:
    """Max number of pieces met by a closed R-ball; returns (count, witness).

    ``metric="graph"`` uses graph balls of integer radius floor(R);
    ``metric="model"`` uses model-metric balls (useful at sub-edge scales).
    """
    if R < 0:
        raise ValueError("R must be >= 0")
    space = cover.space
    pieces = cover.pieces
    hit = np.zeros(space.n, dtype=np.int64)
    if metric == "graph":
        from collections import deque

        rad = int(math.floor(R))
        for piece in pieces:
            seen = set(piece)
            dq = deque((x, 0) for x in sorted(piece))
            for x in piece:
                hit[x] += 1
            while dq:
                v, d = dq.popleft()
                if d >= rad:
                    continue
                for w in space.adj[v]:
                    if w not in seen:
                        seen.add(w)
                        hit[w] += 1
                        dq.append((w, d + 1))
        best = int(hit.argmax())
        return int(hit[best]), best
    if metric != "model":
        raise ValueError(f"unknown metric {metric!r}")
    owner: list[list[int]] = [[] for _ in range(space.n)]
    for pid, piece in enumerate(pieces):
        for x in piece:
            owner[x].append(pid)
    best_count, best_center = 0, 0
    for x in range(space.n):
        nearby = space.points_within(x, R)
        met = set()
        for y in nearby:
            met.update(owner[y])
        if len(met) > best_count:
            best_count, best_center = len(met), x
    return best_count, best_center


# ---------------------------------------------------------------------------
# disjointness


def check_disjointness(decomp: ColoredDecomposition,
                       r: Optional[float] = None) -> list[Violation]:
    """Exhaustively verify same-colour pieces sit >= r apart (model metric,
    default r = decomp.r).

    On gridded nets this scans every point's r-neighbourhood for foreign
    same-colour points, which finds exactly the violating pairs; smaller
    spaces fall back to exhaustive pairwise piece distances.
    """
    if r is None:
        r = decomp.r
    space = decomp.space
    if space.model in ("h2", "hd") and space.n > 500:
        member: list[list[tuple[int, int]]] = [[] for _ in range(space.n)]
        for pid, piece in enumerate(decomp.pieces):
            c = decomp.colors[pid]
            for x in piece:
                member[x].append((pid, c))
        found: dict[tuple[int, int], float] = {}
        for x in range(space.n):
            near = space.points_within(x, r)
            for px, cx in member[x]:
                for y in near:
                    if y < x:
                        continue
                    d = None
                    for py, cy in member[y]:
                        if cy != cx or py == px:
                            continue
                        if d is None:
                            d = space.model_distance(x, y)
                        if d < r:
                            key = (min(px, py), max(px, py))
                            if key not in found or d < found[key]:
                                found[key] = d
        return [Violation(a, b, d) for (a, b), d in sorted(found.items())]
    out: list[Violation] = []
    by_color: dict[int, list[int]] = {}
    for pid, c in enumerate(decomp.colors):
        by_color.setdefault(c, []).append(pid)
    for pids in by_color.values():
        for a, b in itertools.combinations(pids, 2):
            d = space.set_distance(decomp.pieces[a], decomp.pieces[b], upper=r)
            if d < r:
                out.append(Violation(a, b, d))
    return out


# ---------------------------------------------------------------------------
# iterated neighbourhoods


def _model_neighborhood(space: SpaceGraph, pts: Iterable[int], s: float) -> set[int]:
    out: set[int] = set()
    for x in pts:
        out.update(space.points_within(x, s))
    return out


def iterated_neighborhood(family: PieceFamily, piece: int, s: float,
                          m: int) -> NeighborhoodChain:
    """Levels N^0..N^m: each next level unions all pieces meeting the
    closed s-neighbourhood of the previous one (model metric)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if s < 1:
        raise ValueError("s must be >= 1")
    space = family.space
    owner: list[list[int]] = [[] for _ in range(space.n)]
    for pid, pc in enumerate(family.pieces):
        for x in pc:
            owner[x].append(pid)
    margins = space.margins()
    thr = max(s, space.edge_threshold)
    level = set(family.pieces[piece])
    levels = [frozenset(level)]
    absorbed = {piece}
    truncated = bool(min((margins[x] for x in level), default=math.inf) <= thr)
    for _ in range(m):
        hood = _model_neighborhood(space, level, s)
        for x in hood:
            for pid in owner[x]:
                if pid not in absorbed:
                    absorbed.add(pid)
                    level.update(family.pieces[pid])
        levels.append(frozenset(level))
        if min((margins[x] for x in level), default=math.inf) <= thr:
            truncated = True
    return NeighborhoodChain(base_piece=piece, s=s, levels=levels,
                             truncated=truncated)


# ---------------------------------------------------------------------------
# greedy decomposition from a bounded-multiplicity cover


def _piece_model_ball(space: SpaceGraph, x: int, R: float) -> set[int]:
    return set(space.points_within(x, R))


def greedy_decomposition(cover: Cover, R: float, n: int) -> ColoredDecomposition:
    """Extract an (R, n) coloured decomposition from a cover.

    Requires the cover to have 2R-multiplicity at most n+1 (model balls).
    Colour classes are maximal R-separated collections of whole pieces,
    taken in piece-index order; points still uncovered are patched with
    clipped pieces V \\cap B(x, R), processed in point-index order.
    """
    space = cover.space
    mult, witness = r_multiplicity(cover, 2 * R, metric="model")
    if mult > n + 1:
        raise PreconditionError(
            f"cover has 2R-multiplicity {mult} > n+1 = {n + 1}", witness=witness)

    piece_sets = [set(p) for p in cover.pieces]
    assigned: list[Optional[int]] = [None] * len(piece_sets)  # piece -> colour

    def separated(pid: int, members: list[int]) -> bool:
        return all(
            space.set_distance(piece_sets[pid], piece_sets[q], upper=R) >= R
            for q in members)

    classes: list[list[int]] = []
    for color in range(n + 1):
        members: list[int] = []
        for pid in range(len(piece_sets)):
            if assigned[pid] is None and separated(pid, members):
                assigned[pid] = color
                members.append(pid)
        classes.append(members)

    out_pieces: list[set[int]] = []
    out_colors: list[int] = []
    out_sources: list[int] = []
    class_points: list[set[int]] = []
    for members in classes:
        pts: set[int] = set()
        for pid in members:
            out_pieces.append(set(piece_sets[pid]))
            out_colors.append(len(class_points))
            out_sources.append(pid)
            pts |= piece_sets[pid]
        class_points.append(pts)

    covered = set().union(*class_points) if class_points else set()
    owner = cover.piece_of()
    for x in range(space.n):
        if x in covered:
            continue
        vid = owner[x][0]
        ball2 = _piece_model_ball(space, x, 2 * R)
        free = None
        for i, pts in enumerate(class_points):
            if not (ball2 & pts):
                free = i
                break
        if free is None:
            raise PreconditionError(
                f"no colour class avoids the 2R-ball of point {x}", witness=x)
        clipped = piece_sets[vid] & _piece_model_ball(space, x, R)
        out_pieces.append(clipped)
        out_colors.append(free)
        out_sources.append(vid)
        class_points[free] |= clipped
        covered |= clipped

    decomp = ColoredDecomposition(
        space=space,
        pieces=[frozenset(p) for p in out_pieces],
        colors=out_colors,
        r=R,
        d=n,
        partition=False,
        provenance={"construction": "greedy_decomposition", "R": R, "n": n,
                    "source_pieces": out_sources},
    )
    _verify_greedy(decomp, cover)
    return decomp


def _verify_greedy(decomp: ColoredDecomposition, cover: Cover) -> None:
    bad = check_disjointness(decomp)
    if bad:
        v = bad[0]
        raise PreconditionError(
            f"greedy output violates R-disjointness: pieces {v.piece_a},"
            f" {v.piece_b} at distance {v.distance}", witness=v)
    sources = decomp.provenance["source_pieces"]
    for piece, src in zip(decomp.pieces, sources):
        if not piece <= cover.pieces[src]:
            raise PreconditionError("greedy piece escapes its source piece",
                                    witness=src)


# ---------------------------------------------------------------------------
# colour amplification


def kolmogorov_amplify(decomp: ColoredDecomposition,
                       k: Optional[int] = None) -> ColoredDecomposition:
    """Trade separation for redundancy: (3r, k) in, (r, k+1) out.

    The input's colour classes must cover every point at least
    (k+1)-n times for some n; the output's k+2 classes then cover every
    point at least (k+2)-n times.  Classes 0..k are the old pieces
    fattened by r; the new class collects, per point, the colour sets
    that already contained it away from all fattened others.
    """
    if k is None:
        k = decomp.d
    if k != decomp.d:
        raise ArityError(f"decomposition has top colour {decomp.d}, not {k}")
    space = decomp.space
    r_new = decomp.r / 3.0
    counts = decomp.coverage_counts()
    c_min = int(counts.min())
    if c_min < 1:
        raise PreconditionError("input classes do not cover the space",
                                witness=int(np.argmin(counts)))
    n = (k + 1) - c_min

    # fatten each piece by r_new in the model metric
    fat_pieces: list[set[int]] = []
    for piece in decomp.pieces:
        fat = set(piece)
        for x in piece:
            fat.update(space.points_within(x, r_new))
        fat_pieces.append(fat)

    in_class = [set() for _ in range(space.n)]   # colours whose class has x
    fat_class = [set() for _ in range(space.n)]  # colours whose fattening has x
    for pid, c in enumerate(decomp.colors):
        for x in decomp.pieces[pid]:
            in_class[x].add(c)
        for x in fat_pieces[pid]:
            fat_class[x].add(c)

    out_pieces: list[frozenset[int]] = []
    out_colors: list[int] = []
    trace: list[tuple[str, int]] = []
    for pid, c in enumerate(decomp.colors):
        out_pieces.append(frozenset(fat_pieces[pid]))
        out_colors.append(c)
        trace.append(("fattened", pid))

    # new colour k+1: points whose exact colour set S (|S| = c_min) is clear
    # of every fattened foreign class; split along the pieces of min(S)
    groups: dict[tuple[tuple[int, ...], int], set[int]] = {}
    piece_by_color: dict[int, list[int]] = {}
    for pid, c in enumerate(decomp.colors):
        piece_by_color.setdefault(c, []).append(pid)
    for x in range(space.n):
        S = in_class[x]
        if len(S) != c_min or fat_class[x] - S:
            continue
        s = min(S)
        for pid in piece_by_color[s]:
            if x in decomp.pieces[pid]:
                groups.setdefault((tuple(sorted(S)), pid), set()).add(x)
                break
    for (S, pid), pts in sorted(groups.items()):
        out_pieces.append(frozenset(pts))
        out_colors.append(k + 1)
        trace.append(("selected", pid))

    out = ColoredDecomposition(
        space=space, pieces=out_pieces, colors=out_colors, r=r_new, d=k + 1,
        partition=False,
        provenance={"construction": "kolmogorov_amplify", "n": n,
                    "trace": trace, "input_r": decomp.r},
    )
    new_counts = out.coverage_counts()
    need = (k + 2) - n
    if int(new_counts.min()) < need:
        raise PreconditionError(
            f"amplified coverage {int(new_counts.min())} < required {need}",
            witness=int(np.argmin(new_counts)))
    bad = check_disjointness(out)
    if bad:
        v = bad[0]
        raise PreconditionError(
            f"amplified output violates r-disjointness: {v}", witness=v)
    return out


# ---------------------------------------------------------------------------
# products


def product_decomposition(dx: ColoredDecomposition, dy: ColoredDecomposition,
                          product: SpaceGraph) -> ColoredDecomposition:
    """Colour-diagonal product decomposition on an l1-product space."""
    if dx.d != dy.d:
        raise ArityError(f"colour counts differ: {dx.d + 1} vs {dy.d + 1}")
    k = dx.d
    cx = dx.coverage_counts()
    cy = dy.coverage_counts()
    if int(cx.min()) + int(cy.min()) < k + 2:
        raise PreconditionError(
            "factor coverage counts too small for the counting argument",
            witness=(int(cx.min()), int(cy.min())))
    factors = product.window.get("factors")
    if factors is None or len(factors) != 2:
        raise ArityError("product space must have exactly two factors")
    fx, fy = factors
    combo_index: dict[tuple[int, int], int] = {}
    for idx, p in enumerate(product.points):
        ix = fx.index_of(p.parts[0])
        iy = fy.index_of(p.parts[1])
        combo_index[(ix, iy)] = idx

    pieces: list[frozenset[int]] = []
    colors: list[int] = []
    trace: list[tuple[int, int]] = []
    by_color_x: dict[int, list[int]] = {}
    by_color_y: dict[int, list[int]] = {}
    for pid, c in enumerate(dx.colors):
        by_color_x.setdefault(c, []).append(pid)
    for pid, c in enumerate(dy.colors):
        by_color_y.setdefault(c, []).append(pid)
    for c in range(k + 1):
        for pa in by_color_x.get(c, ()):
            xs = sorted(dx.pieces[pa])
            for pb in by_color_y.get(c, ()):
                pts = set()
                for ix in xs:
                    for iy in dy.pieces[pb]:
                        j = combo_index.get((ix, iy))
                        if j is not None:
                            pts.add(j)
                if pts:
                    pieces.append(frozenset(pts))
                    colors.append(c)
                    trace.append((pa, pb))

    out = ColoredDecomposition(
        space=product, pieces=pieces, colors=colors,
        r=min(dx.r, dy.r), d=k, partition=False,
        provenance={"construction": "product_decomposition", "factor_pieces": trace},
    )
    covered = np.zeros(product.n, dtype=bool)
    for piece in pieces:
        for x in piece:
            covered[x] = True
    if not covered.all():
        raise PreconditionError("product decomposition misses a point",
                                witness=int(np.argmin(covered)))
    return out


# ---------------------------------------------------------------------------
# pullbacks and refinement


def pullback_cover(f, cover: Cover) -> Cover:
    """Cover of the map's source by nonempty preimages of target pieces."""
    if len(f.assignment) != f.source.n:
        raise DomainError("map is not total on its source window")
    buckets: dict[int, set[int]] = {}
    for pid in range(len(cover.pieces)):
        buckets[pid] = set()
    membership: list[list[int]] = [[] for _ in range(f.target.n)]
    for pid, piece in enumerate(cover.pieces):
        for y in piece:
            membership[y].append(pid)
    for x, y in enumerate(f.assignment):
        for pid in membership[y]:
            buckets[pid].add(x)
    pieces = []
    labels = []
    for pid in sorted(buckets):
        if buckets[pid]:
            pieces.append(frozenset(buckets[pid]))
            labels.append(f"pre:{pid}")
    return Cover(space=f.source, pieces=pieces, labels=labels)


def pullback_decomposition(f, decomp: ColoredDecomposition,
                           r: Optional[float] = None) -> ColoredDecomposition:
    """Preimage decomposition with colours carried over; separation is
    re-measured, never assumed."""
    if len(f.assignment) != f.source.n:
        raise DomainError("map is not total on its source window")
    membership: list[list[int]] = [[] for _ in range(f.target.n)]
    for pid, piece in enumerate(decomp.pieces):
        for y in piece:
            membership[y].append(pid)
    buckets: dict[int, set[int]] = {pid: set() for pid in range(len(decomp.pieces))}
    for x, y in enumerate(f.assignment):
        for pid in membership[y]:
            buckets[pid].add(x)
    pieces, colors, sources = [], [], []
    for pid in sorted(buckets):
        if buckets[pid]:
            pieces.append(frozenset(buckets[pid]))
            colors.append(decomp.colors[pid])
            sources.append(pid)
    if r is None:
        lip = max(f.measured_lipschitz, 1e-12)
        r = decomp.r / lip
    return ColoredDecomposition(
        space=f.source, pieces=pieces, colors=colors, r=r, d=decomp.d,
        partition=decomp.partition and f.measured_max_fiber == 1,
        provenance={"construction": "pullback", "target_pieces": sources,
                    "target_r": decomp.r,
                    "measured_lipschitz": f.measured_lipschitz},
    )


def refine_connected(cover: Cover, R: float, verify: bool = True) -> Cover:
    """Split every piece into its R-connected components (model metric).

    A closed ball of radius R/2 cannot meet two R-components of one
    piece, so multiplicity at that scale is preserved; this is verified
    on every run unless ``verify`` is disabled.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    space = cover.space
    pieces_out: list[frozenset[int]] = []
    labels: list[str] = []
    for pid, piece in enumerate(cover.pieces):
        for comp_i, comp in enumerate(_components(space, sorted(piece), R)):
            pieces_out.append(frozenset(comp))
            labels.append(f"{pid}.{comp_i}")
    out = Cover(space=space, pieces=pieces_out, labels=labels)
    if verify:
        rho = math.floor(R / 2)
        before, _ = r_multiplicity(cover, rho)
        after, w = r_multiplicity(out, rho)
        if after > before:
            raise PreconditionError(
                f"refinement raised {rho}-multiplicity {before} -> {after}",
                witness=w)
    return out


def _components(space: SpaceGraph, idx: list[int], R: float) -> list[list[int]]:
    if space.model == "z":
        vals = sorted((space.points[i].n, i) for i in idx)
        comps: list[list[int]] = []
        cur: list[int] = []
        last = None
        for v, i in vals:
            if last is not None and v - last > R:
                comps.append(cur)
                cur = []
            cur.append(i)
            last = v
        if cur:
            comps.append(cur)
        return comps
    parent = {i: i for i in idx}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    local = set(idx)
    for i in idx:
        for j in space.points_within(i, R):
            if j in local and j != i:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for i in idx:
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)]
