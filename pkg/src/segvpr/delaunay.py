"""Robust 2-D Delaunay triangulation (incremental Bowyer-Watson).

The hull is handled with ghost triangles (a symbolic vertex at infinity)
instead of a coordinate super-triangle, so no "far enough" bounding box is
needed. Orientation and in-circle predicates run in floating point with a
conservative error filter and fall back to exact rational arithmetic, which
keeps the triangulation correct on degenerate inputs (collinear chains,
points exactly on edges or circles).

Deterministic tie policy for exactly cocircular quadruples: a final pass
flips each cocircular quad to its lexicographically smallest diagonal.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

GHOST = -1

# Conservative relative error bounds for the floating-point filters
# (looser than Shewchuk's tight constants; correctness comes from the
# exact fallback, the bound only gates how often we take it).
_ORIENT_EPS = 1e-12
_INCIRCLE_EPS = 1e-10


def orient2d(ax, ay, bx, by, cx, cy) -> int:
    """Sign of the signed area of triangle (a, b, c): +1 ccw, -1 cw, 0 collinear."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    bound = _ORIENT_EPS * (abs(detleft) + abs(detright))
    if det > bound:
        return 1
    if det < -bound:
        return -1
    return _orient2d_exact(ax, ay, bx, by, cx, cy)


def _orient2d_exact(ax, ay, bx, by, cx, cy) -> int:
    ax, ay, bx, by, cx, cy = (Fraction(v) for v in (ax, ay, bx, by, cx, cy))
    det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return (det > 0) - (det < 0)


def incircle(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    """+1 if d lies strictly inside the circumcircle of ccw triangle (a, b, c),
    -1 if strictly outside, 0 if cocircular."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = (
        alift * (bdx * cdy - cdx * bdy)
        + blift * (cdx * ady - adx * cdy)
        + clift * (adx * bdy - bdx * ady)
    )
    permanent = (
        alift * (abs(bdx * cdy) + abs(cdx * bdy))
        + blift * (abs(cdx * ady) + abs(adx * cdy))
        + clift * (abs(adx * bdy) + abs(bdx * ady))
    )
    bound = _INCIRCLE_EPS * permanent
    if det > bound:
        return 1
    if det < -bound:
        return -1
    return _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy)


def _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    ax, ay, bx, by, cx, cy, dx, dy = (
        Fraction(v) for v in (ax, ay, bx, by, cx, cy, dx, dy)
    )
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return (det > 0) - (det < 0)


class _Triangulation:
    """Triangle soup keyed by directed edges; ghost triangles close the hull."""

    def __init__(self, points: np.ndarray):
        self.pts = points
        # edge_tri[(u, v)] = triangle (as a frozen vertex triple) left of u->v
        self.edge_tri: dict[tuple[int, int], tuple[int, int, int]] = {}
        self.triangles: set[tuple[int, int, int]] = set()

    def _add(self, a: int, b: int, c: int) -> None:
        tri = (a, b, c)
        self.triangles.add(tri)
        self.edge_tri[(a, b)] = tri
        self.edge_tri[(b, c)] = tri
        self.edge_tri[(c, a)] = tri

    def _remove(self, tri: tuple[int, int, int]) -> None:
        a, b, c = tri
        self.triangles.discard(tri)
        for e in ((a, b), (b, c), (c, a)):
            if self.edge_tri.get(e) == tri:
                del self.edge_tri[e]

    def init_triangle(self, i: int, j: int, k: int) -> None:
        x = self.pts
        if orient2d(x[i, 0], x[i, 1], x[j, 0], x[j, 1], x[k, 0], x[k, 1]) < 0:
            j, k = k, j
        self._add(i, j, k)
        self._add(j, i, GHOST)
        self._add(k, j, GHOST)
        self._add(i, k, GHOST)

    def _conflicts(self, tri: tuple[int, int, int], p: int) -> bool:
        x = self.pts
        if GHOST not in tri:
            a, b, c = tri
            return (
                incircle(
                    x[a, 0], x[a, 1], x[b, 0], x[b, 1],
                    x[c, 0], x[c, 1], x[p, 0], x[p, 1],
                )
                > 0
            )
        # Ghost (v, u, GHOST) guards hull edge u->v; conflict when p is
        # strictly outside that edge, or exactly on its open segment.
        idx = tri.index(GHOST)
        v, u = tri[(idx + 1) % 3], tri[(idx + 2) % 3]
        s = orient2d(x[u, 0], x[u, 1], x[v, 0], x[v, 1], x[p, 0], x[p, 1])
        if s < 0:
            return True
        if s > 0:
            return False
        lo, hi = sorted(
            [(x[u, 0], x[u, 1]), (x[v, 0], x[v, 1])]
        )
        return lo < (x[p, 0], x[p, 1]) < hi

    def insert(self, p: int) -> None:
        cavity = {t for t in self.triangles if self._conflicts(t, p)}
        if not cavity:
            raise RuntimeError("insertion point conflicts with no triangle")
        boundary: list[tuple[int, int]] = []
        for tri in cavity:
            a, b, c = tri
            for u, v in ((a, b), (b, c), (c, a)):
                twin = self.edge_tri.get((v, u))
                if twin is None or twin not in cavity:
                    boundary.append((v, u))
        for tri in cavity:
            self._remove(tri)
        for v, u in boundary:
            self._add(u, v, p)

    def real_triangles(self) -> list[tuple[int, int, int]]:
        return sorted(
            tuple(sorted(t)) for t in self.triangles if GHOST not in t
        )


def _all_collinear(points: np.ndarray) -> bool:
    if len(points) < 3:
        return True
    a = points[0]
    b = None
    for cand in points[1:]:
        if cand[0] != a[0] or cand[1] != a[1]:
            b = cand
            break
    if b is None:
        return True
    for c in points[1:]:
        if orient2d(a[0], a[1], b[0], b[1], c[0], c[1]) != 0:
            return False
    return True


def _first_noncollinear_triple(points: np.ndarray) -> tuple[int, int, int]:
    a = 0
    b = next(
        i for i in range(1, len(points)) if tuple(points[i]) != tuple(points[a])
    )
    for c in range(1, len(points)):
        if c == b:
            continue
        if (
            orient2d(
                points[a, 0], points[a, 1],
                points[b, 0], points[b, 1],
                points[c, 0], points[c, 1],
            )
            != 0
        ):
            return a, b, c
    raise RuntimeError("no non-collinear triple found")


def _normalize_cocircular_ties(tri: _Triangulation) -> None:
    """Flip exactly-cocircular quads to the lexicographically smallest diagonal."""
    x = tri.pts
    max_flips = 1000 + 8 * len(tri.pts) ** 2
    for _ in range(max_flips):
        flipped = False
        for (u, v), t1 in sorted(tri.edge_tri.items()):
            if u > v or GHOST in (u, v) or GHOST in t1:
                continue
            t2 = tri.edge_tri.get((v, u))
            if t2 is None or GHOST in t2:
                continue
            c = next(w for w in t1 if w not in (u, v))
            d = next(w for w in t2 if w not in (u, v))
            if (
                incircle(
                    x[u, 0], x[u, 1], x[v, 0], x[v, 1],
                    x[c, 0], x[c, 1], x[d, 0], x[d, 1],
                )
                != 0
            ):
                continue
            if tuple(sorted((c, d))) < (u, v):
                tri._remove(t1)
                tri._remove(t2)
                tri._add(c, u, d)
                tri._add(d, v, c)
                flipped = True
                break
        if not flipped:
            return
    raise RuntimeError("cocircular tie normalization did not converge")


def delaunay_triangles(points: np.ndarray) -> list[tuple[int, int, int]]:
    """Delaunay triangles of unique, non-collinear points as sorted index triples."""
    tri = _Triangulation(np.asarray(points, dtype=float))
    a, b, c = _first_noncollinear_triple(tri.pts)
    tri.init_triangle(a, b, c)
    for p in range(len(tri.pts)):
        if p in (a, b, c):
            continue
        tri.insert(p)
    _normalize_cocircular_ties(tri)
    return tri.real_triangles()


def delaunay_edges(points: np.ndarray) -> set[tuple[int, int]]:
    """Delaunay graph edges over arbitrary points, degenerate cases included.

    Fallbacks keep the result total: 1 point -> no edges; 2 points -> one
    edge; all collinear -> chain in coordinate order. Duplicate coordinates
    are collapsed for triangulation; duplicates inherit their
    representative's edges and connect to each other.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n == 0:
        return set()

    coords: dict[tuple[float, float], list[int]] = {}
    for i, (px, py) in enumerate(points):
        coords.setdefault((float(px), float(py)), []).append(i)
    unique = sorted(coords)
    rep = {xy: members[0] for xy, members in coords.items()}
    upts = np.array(unique, dtype=float)
    uidx = [rep[xy] for xy in unique]

    edges: set[tuple[int, int]] = set()
    if len(upts) == 1:
        pass
    elif len(upts) == 2:
        edges.add(tuple(sorted((uidx[0], uidx[1]))))
    elif _all_collinear(upts):
        # unique points are already sorted by (x, y); chain them
        for a, b in zip(uidx, uidx[1:]):
            edges.add(tuple(sorted((a, b))))
    else:
        for a, b, c in delaunay_triangles(upts):
            for u, v in ((a, b), (b, c), (a, c)):
                edges.add(tuple(sorted((uidx[u], uidx[v]))))

    # expand edges to duplicate members and connect co-located duplicates
    for xy, members in coords.items():
        r = members[0]
        for m in members[1:]:
            for u, v in list(edges):
                if u == r or v == r:
                    other = v if u == r else u
                    if other != m:
                        edges.add(tuple(sorted((m, other))))
            edges.add(tuple(sorted((r, m))))
    return edges
