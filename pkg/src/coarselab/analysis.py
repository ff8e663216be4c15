"""Measurement tools: growth fits, distortion profiles, cover metrology.

Everything here is a window-scale statistic.  Fits are ordinary least
squares on log-transformed data and always come with a residual, so the
thresholds used by callers stay auditable.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .covers import ColoredDecomposition, Cover, iterated_neighborhood
from .errors import DataError, PreconditionError, TruncationError
from .spaces import GrowthReport, SpaceGraph, growth_report

__all__ = [
    "fit_growth",
    "subexp_stat",
    "DistortionProfile",
    "distortion_profile",
    "SublinearityReport",
    "radial_sublinearity",
    "quasi_convexity_defect",
    "escalation",
    "piece_growth",
    "set_growth",
]

SUBEXP_TAIL_SLOPE = 0.05  # declared subexponential-at-window-scale below this


# ---------------------------------------------------------------------------
# growth fitting


def fit_growth(report: GrowthReport, r_min: int = 1) -> tuple[float, float]:
    """Least-squares slope of log counts against log radii.

    Only untruncated radii >= r_min participate; at least four are
    required.  Returns (exponent, rms residual) and stores both on the
    report.
    """
    rs, cs = report.untruncated(r_min=max(1, r_min))
    if len(rs) < 4:
        raise DataError(
            f"need >= 4 untruncated radii >= {r_min}, have {len(rs)}")
    lx = np.log(np.array(rs, dtype=float))
    ly = np.log(np.array(cs, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    report.fitted_exponent = float(slope)
    report.fit_residual = resid
    return float(slope), resid


def subexp_stat(report: GrowthReport) -> float:
    """log |B(r_max)| / r_max over the untruncated range; near zero means
    subexponential at window scale, log 2 per unit means binary blowup."""
    rs, cs = report.untruncated(r_min=1)
    if not rs:
        raise DataError("no untruncated radii")
    stat = math.log(cs[-1]) / rs[-1]
    report.subexp_stat = stat
    return stat


def tail_slope(report: GrowthReport) -> float:
    """Slope of log counts vs radius over the top half of the untruncated
    range; the per-step exponential rate."""
    rs, cs = report.untruncated(r_min=1)
    if len(rs) < 4:
        raise DataError("need >= 4 untruncated radii")
    half = len(rs) // 2
    x = np.array(rs[half:], dtype=float)
    y = np.log(np.array(cs[half:], dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def set_growth(space: SpaceGraph, subset: Iterable[int],
               center: Optional[int] = None,
               r_max: Optional[int] = None,
               metric: str = "ambient") -> GrowthReport:
    """Growth of a point set, as ball-count table around a center.

    ``metric="ambient"`` counts subset points inside ambient graph balls
    (the subset as a metric subspace).  ``metric="intrinsic"`` runs BFS in
    the subset's induced subgraph instead; this removes the additive
    detour cost ambient balls pay to reach a thin set's far side, which
    otherwise biases window-scale exponent fits upward.  Default center:
    the subset point with the largest window margin.
    """
    subset = sorted(subset)
    if not subset:
        raise DataError("empty subset")
    if center is None:
        margins = space.margins()
        center = max(subset, key=lambda i: (margins[i], -i))
    if metric == "ambient":
        return growth_report(space, center, r_max=r_max, subset=subset)
    if metric != "intrinsic":
        raise ValueError(f"unknown metric {metric!r}")
    from collections import deque

    sset = set(subset)
    margins = space.margins()
    dist = {center: 0}
    dq = deque([center])
    while dq:
        v = dq.popleft()
        if r_max is not None and dist[v] >= r_max:
            continue
        for w in space.adj[v]:
            if w in sset and w not in dist:
                dist[w] = dist[v] + 1
                dq.append(w)
    by_r: dict[int, list[int]] = {}
    for v, d in dist.items():
        by_r.setdefault(d, []).append(v)
    radii, counts, trunc = [], [], []
    running, hit = 0, False
    for r in range(max(dist.values()) + 1):
        at = by_r.get(r, [])
        if at and min(margins[v] for v in at) <= space.edge_threshold:
            hit = True
        running += len(at)
        radii.append(r)
        counts.append(running)
        trunc.append(hit)
    return GrowthReport(center=center, radii=radii, counts=counts,
                        truncated=trunc)


def piece_growth(decomp_or_cover: Union[Cover, ColoredDecomposition],
                 piece: int, r_max: Optional[int] = None,
                 metric: str = "ambient") -> GrowthReport:
    return set_growth(decomp_or_cover.space, decomp_or_cover.pieces[piece],
                      r_max=r_max, metric=metric)


# ---------------------------------------------------------------------------
# distortion profiles


@dataclass
class DistortionProfile:
    """Distance comparison of a map over sampled point pairs.

    ``buckets`` maps geometric source-distance ranges to (min, mean, max)
    target distance.  ``fitted_log_C`` is the least-squares C in
    target ~ C * (log(1 + source) + 1); ``envelope_log_C`` the smallest C
    that bounds every sample.  ``fitted_affine`` is the (L, D) of an
    ordinary linear fit.  ``log_fit_ok`` is False when the log model
    explains the data no better than scatter (e.g. for the identity).
    """

    map_provenance: dict
    pair_count: int
    anchored: Optional[int]
    buckets: list[tuple[float, float, float, float, float]]
    fitted_log_C: float
    envelope_log_C: float
    fitted_affine: tuple[float, float]
    log_fit_ok: bool
    samples: Optional[np.ndarray] = field(default=None, repr=False)


def _sample_pairs(n: int, cap: int, seed: int,
                  anchored: Optional[int]) -> list[tuple[int, int]]:
    if anchored is not None:
        return [(anchored, b) for b in range(n) if b != anchored]
    total = n * (n - 1) // 2
    if total <= cap:
        return [(a, b) for a in range(n) for b in range(a + 1, n)]
    rng = random.Random(seed)
    seen = set()
    out = []
    while len(out) < cap:
        a = rng.randrange(n)
        b = rng.randrange(n)
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        out.append(key)
    return out


def distortion_profile(f, pair_cap: int = 200_000, seed: int = 0,
                       anchored: Optional[int] = None,
                       metric: str = "model") -> DistortionProfile:
    """Source-vs-target distance profile of a map record.

    Pairs are exhaustive below ``pair_cap``, else seeded uniform samples.
    ``anchored`` fixes the first coordinate and varies the second over
    the whole window.
    """
    src, tgt = f.source, f.target
    pairs = _sample_pairs(src.n, pair_cap, seed, anchored)
    ds = np.empty(len(pairs))
    dt = np.empty(len(pairs))
    for i, (a, b) in enumerate(pairs):
        if metric == "model":
            ds[i] = src.model_distance(a, b)
            dt[i] = tgt.model_distance(f.assignment[a], f.assignment[b])
        else:
            raise ValueError("only the model metric is profiled")
    pos = ds > 0
    ds, dt = ds[pos], dt[pos]
    if len(ds) == 0:
        raise DataError("no distinct pairs to profile")

    # geometric buckets on source distance
    lo = ds.min()
    hi = ds.max()
    edges = np.geomspace(max(lo, 1e-9), hi * (1 + 1e-9),
                         num=min(24, max(2, int(math.log2(hi / max(lo, 1e-9))) + 2)))
    buckets = []
    for a, b in zip(edges, edges[1:]):
        m = (ds >= a) & (ds < b)
        if m.any():
            buckets.append((float(a), float(b), float(dt[m].min()),
                            float(dt[m].mean()), float(dt[m].max())))

    basis = np.log1p(ds) + 1.0
    fitted_log_C = float(np.dot(dt, basis) / np.dot(basis, basis))
    envelope_log_C = float(np.max(dt / basis))
    L, D = np.polyfit(ds, dt, 1)
    # the log model is only meaningful if it tracks the upper range better
    # than a plain affine fit does
    log_resid = float(np.mean((dt - fitted_log_C * basis) ** 2))
    aff_resid = float(np.mean((dt - (L * ds + D)) ** 2))
    log_fit_ok = log_resid <= 4.0 * aff_resid
    return DistortionProfile(
        map_provenance=dict(f.provenance), pair_count=len(ds),
        anchored=anchored, buckets=buckets, fitted_log_C=fitted_log_C,
        envelope_log_C=envelope_log_C, fitted_affine=(float(L), float(D)),
        log_fit_ok=log_fit_ok, samples=np.stack([ds, dt]))


# ---------------------------------------------------------------------------
# radial sublinearity


@dataclass
class SublinearityReport:
    basepoint: int
    m_grid: list[int]
    max_diam: list[float]
    ratios: list[float]
    trend: float
    consistent: bool


def radial_sublinearity(family: Union[Cover, ColoredDecomposition],
                        basepoint: int,
                        m_grid: Sequence[int]) -> SublinearityReport:
    """max piece diameter within distance m of the basepoint, against m.

    Declared consistent with radial sublinearity when the ratio
    max_diam(m)/m decreases across the top half of the grid.
    """
    space = family.space
    m_grid = sorted(m_grid)
    if not m_grid or m_grid[0] <= 0:
        raise ValueError("m grid must be positive")
    dists = []
    diams = []
    for piece in family.pieces:
        dists.append(space.set_distance([basepoint], piece))
        diams.append(space.set_diameter(piece))
    dists = np.array(dists)
    diams = np.array(diams)
    max_diam = []
    running = 0.0
    for m in m_grid:
        sel = dists <= m
        val = float(diams[sel].max()) if sel.any() else 0.0
        running = max(running, val)
        max_diam.append(running)
    ratios = [d / m for d, m in zip(max_diam, m_grid)]
    half = len(m_grid) // 2
    top_m = np.array(m_grid[half:], dtype=float)
    top_r = np.array(ratios[half:], dtype=float)
    if len(top_m) >= 2:
        trend = float(np.polyfit(top_m, top_r, 1)[0])
        consistent = bool(all(top_r[i + 1] <= top_r[i] + 1e-12
                              for i in range(len(top_r) - 1)))
    else:
        trend = 0.0
        consistent = False
    return SublinearityReport(basepoint=basepoint, m_grid=list(m_grid),
                              max_diam=max_diam, ratios=ratios, trend=trend,
                              consistent=consistent)


# ---------------------------------------------------------------------------
# quasi-convexity defect


def _geodesic_samples(p: tuple[float, float], q: tuple[float, float],
                      step: float) -> list[tuple[float, float]]:
    """Points spaced ~step (hyperbolic) along the geodesic [p, q]."""
    (x1, y1), (x2, y2) = p, q
    if abs(x1 - x2) < 1e-12:
        a, b = math.log(min(y1, y2)), math.log(max(y1, y2))
        k = max(2, int(math.ceil((b - a) / step)) + 1)
        return [(x1, math.exp(a + (b - a) * t / (k - 1))) for t in range(k)]
    c = (x2 * x2 + y2 * y2 - x1 * x1 - y1 * y1) / (2.0 * (x2 - x1))
    rho = math.hypot(x1 - c, y1)
    a1 = math.atan2(y1, x1 - c)
    a2 = math.atan2(y2, x2 - c)
    # uniform in arclength: s = log tan(theta/2)
    s1, s2 = (math.log(math.tan(a / 2.0)) for a in sorted((a1, a2)))
    k = max(2, int(math.ceil((s2 - s1) / step)) + 1)
    out = []
    for t in range(k):
        s = s1 + (s2 - s1) * t / (k - 1)
        theta = 2.0 * math.atan(math.exp(s))
        out.append((c + rho * math.cos(theta), rho * math.sin(theta)))
    return out


def quasi_convexity_defect(space: SpaceGraph, subset: Iterable[int], r: float,
                           pair_cap: int = 4000, seed: int = 0) -> float:
    """Worst model distance from a geodesic between subset points back to
    the subset, over sampled endpoint pairs.

    The subset must be r-connected; otherwise the two farthest components
    are reported as the witness.  Enlarging the sampled pair set can only
    increase the value.
    """
    if space.model != "h2":
        raise ValueError("defect measurement works on half-plane nets")
    idx = sorted(subset)
    members = frozenset(idx)
    comps = _connected_components(space, idx, r)
    if len(comps) > 1:
        worst = max(
            ((space.set_distance(a, b), (i, j))
             for i, a in enumerate(comps) for j, b in enumerate(comps) if i < j),
            key=lambda t: t[0])
        raise PreconditionError(
            f"subset is not {r}-connected: components at distance {worst[0]:.3f}",
            witness=worst[1])
    pairs = _sample_pairs(len(idx), pair_cap, seed, None)
    step = space.sep / 2.0
    defect = 0.0
    for a, b in pairs:
        pa, pb = space.points[idx[a]], space.points[idx[b]]
        for (gx, gy) in _geodesic_samples((pa.x, pa.y), (pb.x, pb.y), step):
            defect = max(defect,
                         _distance_to_subset(space, members, gx, gy,
                                             start=max(space.sep, defect)))
    return defect


def _distance_to_subset(space: SpaceGraph, members: frozenset, gx: float,
                        gy: float, start: float) -> float:
    radius = start
    while radius < 1e9:
        cand = [c for c in space.points_near_coords((gx,), gy, radius)
                if c in members]
        if cand:
            return min(space._coord_dist(c, (gx,), gy) for c in cand)
        radius *= 2.0
    raise DataError("no subset point within reach of a geodesic sample")


def _connected_components(space: SpaceGraph, idx: list[int],
                          r: float) -> list[list[int]]:
    from .covers import _components

    return _components(space, idx, r)


# ---------------------------------------------------------------------------
# neighbourhood growth escalation


def escalation(decomp: ColoredDecomposition, s: float, m_max: int,
               piece: Optional[int] = None, r_min: int = 1,
               metric: str = "ambient") -> list[dict]:
    """Fitted growth exponent of the m-fold neighbourhood closure of a
    piece, for m = 0..m_max.  Default piece: the one nearest the window
    basepoint.  Raises when every radius of some level is truncated."""
    space = decomp.space
    if piece is None:
        base = space.window.get("basepoint", 0)
        piece = min(range(len(decomp.pieces)),
                    key=lambda p: (space.set_distance([base], decomp.pieces[p]), p))
    chain = iterated_neighborhood(decomp, piece, s, m_max)
    out = []
    for m, level in enumerate(chain.levels):
        rep = set_growth(space, level, metric=metric)
        try:
            exp, resid = fit_growth(rep, r_min=r_min)
        except DataError as e:
            raise TruncationError(
                f"level {m} of piece {piece}: {e}; enlarge the window or"
                f" reduce m_max") from e
        out.append({"m": m, "exponent": exp, "residual": resid,
                    "level_size": len(level), "center": rep.center,
                    "truncated_chain": chain.truncated})
    return out
