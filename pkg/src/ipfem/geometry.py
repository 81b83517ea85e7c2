"""Parametric interface curves and their interaction with a structured mesh.

The interface is a regular C^2 curve given by a parameterization r(t) together
with a scalar side function (negative inside the first subdomain).  A closed
curve must lie strictly inside the mesh domain; the one supported open curve is
a straight vertical line spanning the domain exactly (the edge-aligned
configuration).  Classification produces, per element, a pure/cut label, the
area fraction of each side, and at most one interface segment whose parameter
intervals tile the whole curve.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from .mesh import Mesh


class GeometryError(Exception):
    """Base class for interface-geometry failures."""


class MultiIntersection(GeometryError):
    """The curve crosses one element's boundary at more than 2 points."""


class TangencyUnresolved(GeometryError):
    """An intersection with a mesh line could not be bracketed reliably."""


class UnresolvedTopology(GeometryError):
    """Curve topology outside the supported single-segment-per-element regime."""


class OnInterface(GeometryError):
    """A point queried for its side lies on the interface within tolerance."""


_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])  # tangent -> outward normal of side 1


class InterfaceCurve:
    """Base class; subclasses provide point/tangent/signed_distance."""

    name = "curve"
    closed = True
    period = 0.0
    curvature_bound = 0.0
    length_scale = 1.0

    def point(self, t):
        raise NotImplementedError

    def tangent(self, t):
        raise NotImplementedError

    def signed_distance(self, x, y):
        """Approximate signed distance, negative on side 1."""
        raise NotImplementedError

    def distance_gradient(self, x, y):
        """Unit ascent direction of the signed distance (side 1 -> side 2)."""
        h = 1e-7 * max(1.0, self.length_scale)
        gx = (self.signed_distance(x + h, y) - self.signed_distance(x - h, y)) / (2 * h)
        gy = (self.signed_distance(x, y + h) - self.signed_distance(x, y - h)) / (2 * h)
        n = np.hypot(gx, gy)
        return gx / n, gy / n

    def normal(self, t):
        """Unit normal pointing from side 1 into side 2 (fixed rotation of r')."""
        tv = np.asarray(self.tangent(t), dtype=float)
        tv = tv / np.linalg.norm(tv, axis=-1, keepdims=True)
        return tv @ _ROT.T

    def arclength(self, t0: float, t1: float, npts: int = 32) -> float:
        xg, wg = leggauss(npts)
        tm = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * xg
        speed = np.linalg.norm(self.tangent(tm), axis=-1)
        return float(0.5 * (t1 - t0) * np.dot(wg, speed))

    def speed_range(self, nsamples: int = 512):
        ts = np.linspace(0.0, self.period, nsamples, endpoint=not self.closed)
        s = np.linalg.norm(self.tangent(ts), axis=-1)
        return float(s.min()), float(s.max())


class Circle(InterfaceCurve):
    def __init__(self, cx: float, cy: float, radius: float):
        if radius <= 0:
            raise ValueError("circle radius must be positive")
        self.center = np.array([cx, cy], dtype=float)
        self.radius = float(radius)
        self.name = f"circle({cx},{cy},{radius})"
        self.closed = True
        self.period = 2.0 * np.pi
        self.curvature_bound = 1.0 / radius
        self.length_scale = radius

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack(
            [
                self.center[0] + self.radius * np.cos(t),
                self.center[1] + self.radius * np.sin(t),
            ],
            axis=-1,
        )

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack(
            [-self.radius * np.sin(t), self.radius * np.cos(t)], axis=-1
        )

    def signed_distance(self, x, y):
        return np.hypot(np.asarray(x) - self.center[0], np.asarray(y) - self.center[1]) - self.radius

    def distance_gradient(self, x, y):
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        r = np.maximum(np.hypot(dx, dy), 1e-300)
        return dx / r, dy / r


class Ellipse(InterfaceCurve):
    def __init__(self, cx: float, cy: float, a: float, b: float):
        if a <= 0 or b <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        self.center = np.array([cx, cy], dtype=float)
        self.a = float(a)
        self.b = float(b)
        self.name = f"ellipse({cx},{cy},{a},{b})"
        self.closed = True
        self.period = 2.0 * np.pi
        self.curvature_bound = max(a / b**2, b / a**2)
        self.length_scale = min(a, b)

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack(
            [self.center[0] + self.a * np.cos(t), self.center[1] + self.b * np.sin(t)],
            axis=-1,
        )

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([-self.a * np.sin(t), self.b * np.cos(t)], axis=-1)

    def signed_distance(self, x, y):
        # first-order accurate near the curve, which is all the side tests need
        u = (np.asarray(x) - self.center[0]) / self.a
        v = (np.asarray(y) - self.center[1]) / self.b
        q = u * u + v * v - 1.0
        gn = 2.0 * np.hypot(u / self.a, v / self.b)
        return q / np.maximum(gn, 1e-300)

    def distance_gradient(self, x, y):
        u = (np.asarray(x) - self.center[0]) / self.a
        v = (np.asarray(y) - self.center[1]) / self.b
        gx = 2.0 * u / self.a
        gy = 2.0 * v / self.b
        n = np.maximum(np.hypot(gx, gy), 1e-300)
        return gx / n, gy / n


class VerticalLine(InterfaceCurve):
    """Open straight interface x = x0 spanning [y_lo, y_hi]; side 1 is x < x0."""

    def __init__(self, x0: float, y_lo: float, y_hi: float):
        if y_hi <= y_lo:
            raise ValueError("vertical line needs y_hi > y_lo")
        self.x0 = float(x0)
        self.y_lo = float(y_lo)
        self.y_hi = float(y_hi)
        self.name = f"vline({x0})"
        self.closed = False
        self.period = y_hi - y_lo
        self.curvature_bound = 0.0
        self.length_scale = y_hi - y_lo

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.full_like(t, self.x0), self.y_lo + t], axis=-1)

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.zeros_like(t), np.ones_like(t)], axis=-1)

    def signed_distance(self, x, y):
        return np.asarray(x, dtype=float) - self.x0 + 0.0 * np.asarray(y)

    def distance_gradient(self, x, y):
        z = 0.0 * (np.asarray(x) + np.asarray(y))
        return 1.0 + z, z


def parse_curve(text: str) -> InterfaceCurve:
    """Parse 'circle:cx,cy,R' / 'ellipse:cx,cy,a,b' / 'vline:x0,ylo,yhi'."""
    kind, _, rest = text.partition(":")
    args = [float(v) for v in rest.split(",")] if rest else []
    kind = kind.strip().lower()
    if kind == "circle" and len(args) == 3:
        return Circle(*args)
    if kind == "ellipse" and len(args) == 4:
        return Ellipse(*args)
    if kind == "vline" and len(args) == 3:
        return VerticalLine(*args)
    raise ValueError(f"unknown curve descriptor {text!r}")


def signed_side(point, curve: InterfaceCurve, tol: float | None = None) -> int:
    """Side of the interface containing ``point``: 1 or 2.

    Raises OnInterface when the point is within ``tol`` of the curve.
    """
    if tol is None:
        tol = 1e-12 * max(1.0, curve.length_scale)
    d = float(curve.signed_distance(point[0], point[1]))
    if abs(d) <= tol:
        raise OnInterface(f"point {tuple(point)} lies on the interface (d={d:.3e})")
    return 1 if d < 0.0 else 2


@dataclass(frozen=True)
class InterfaceSegment:
    """Portion of the curve hosted by one element.

    For a segment lying on a shared mesh edge the host is the side-1 element
    and ``neighbor`` the side-2 element; otherwise ``neighbor == element``.
    """

    element: int
    t_lo: float
    t_hi: float
    on_edge: bool = False
    neighbor: int = -1
    analysis_side: int = 0  # i_e, filled during classification

    @property
    def t_mid(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)


@dataclass(frozen=True, eq=False)
class CutTopology:
    """Element classification against the interface plus the induced segments."""

    mesh: Mesh
    curve: InterfaceCurve
    labels: np.ndarray  # (n_elements,) 0 = cut, 1 = pure side 1, 2 = pure side 2
    fractions: np.ndarray  # (n_elements, 2) area fraction of each side
    segments: tuple
    dropped_arclength: float = 0.0

    def segment_for(self, element: int) -> InterfaceSegment | None:
        for seg in self.segments:
            if not seg.on_edge and seg.element == element:
                return seg
        return None

    @property
    def cut_elements(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)


# ---------------------------------------------------------------------------
# crossing detection


def _refine_crossing(f, df, lo, hi, flo, fhi, xtol):
    """Bisection to xtol followed by a short Newton polish inside the bracket."""
    a, b, fa, fb = lo, hi, flo, fhi
    for _ in range(80):
        if b - a <= xtol:
            break
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            a = b = m
            break
        if (fa < 0.0) != (fm < 0.0):
            b, fb = m, fm
        else:
            a, fa = m, fm
    t = 0.5 * (a + b)
    for _ in range(3):
        d = df(t)
        if d == 0.0:
            break
        step = f(t) / d
        tn = t - step
        if not (lo <= tn <= hi):
            break
        t = tn
    return t


def _grid_crossings(curve, ts, pts, value, axis, xtol, tol_edge):
    """Parameters where coordinate ``axis`` of r(t) crosses ``value``, paired
    with the transversality strength |d coord / dt| at the crossing.

    Crossings beyond the grid line's physical extent are kept anyway; they are
    legitimate breakpoints when the curve leaves the domain and the caller
    filters intervals by their midpoints.  Tangential touches produce weak
    near-duplicate roots that the caller collapses by strength.
    """
    g = pts[:, axis] - value
    if np.max(np.abs(g)) < tol_edge:
        return []  # the whole curve lies on this grid line
    roots = []

    def f(t):
        return float(curve.point(t)[axis] - value)

    def df(t):
        return float(curve.tangent(t)[axis])

    n = len(ts)
    last = n - 1 if curve.closed else n - 2
    for k in range(last + 1):
        k2 = (k + 1) % n
        a, b = ts[k], ts[k2]
        if k2 == 0:
            b = ts[0] + curve.period
        ga, gb = g[k], g[k2]
        if ga == 0.0:
            roots.append((a, abs(df(a))))
            continue
        if (ga < 0.0) != (gb < 0.0):
            t = _refine_crossing(f, df, a, b, ga, gb, xtol)
            roots.append((t, abs(df(t))))
    return roots


def _perimeter_coord(box, p, tol):
    x0, y0, x1, y1 = box
    w, h = x1 - x0, y1 - y0
    x, y = p
    if abs(y - y0) <= tol:
        return min(max(x - x0, 0.0), w)
    if abs(x - x1) <= tol:
        return w + min(max(y - y0, 0.0), h)
    if abs(y - y1) <= tol:
        return w + h + min(max(x1 - x, 0.0), w)
    if abs(x - x0) <= tol:
        return 2 * w + h + min(max(y1 - y, 0.0), h)
    raise GeometryError(f"point {p} not on the element boundary")


def boundary_chain_ccw(box, p_from, p_to, tol):
    """Element corners passed when walking the boundary counterclockwise
    from p_from to p_to, in walk order (endpoints excluded)."""
    x0, y0, x1, y1 = box
    w, h = x1 - x0, y1 - y0
    perim = 2 * (w + h)
    s_a = _perimeter_coord(box, p_from, tol)
    s_b = _perimeter_coord(box, p_to, tol)
    span = (s_b - s_a) % perim
    if span <= tol:
        span = perim if span == 0.0 else span
    corners = [
        (0.0, (x0, y0)),
        (w, (x1, y0)),
        (w + h, (x1, y1)),
        (2 * w + h, (x0, y1)),
    ]
    chain = []
    for s_c, c in corners:
        d = (s_c - s_a) % perim
        if tol < d < span - tol:
            chain.append((d, np.array(c)))
    chain.sort(key=lambda item: item[0])
    return [c for _, c in chain]


def _side1_fraction(mesh, curve, seg: InterfaceSegment, npts: int = 32) -> float:
    """Area fraction of the side-1 part of the host element via Green's theorem."""
    box = mesh.element_box(seg.element)
    tol = 1e-9 * mesh.h
    xg, wg = leggauss(npts)
    tq = seg.t_mid + 0.5 * (seg.t_hi - seg.t_lo) * xg
    r = curve.point(tq)
    dr = curve.tangent(tq)
    cross = r[:, 0] * dr[:, 1] - r[:, 1] * dr[:, 0]
    area = 0.25 * (seg.t_hi - seg.t_lo) * float(np.dot(wg, cross))
    a_pt = curve.point(seg.t_lo)
    b_pt = curve.point(seg.t_hi)
    loop = [b_pt] + boundary_chain_ccw(box, b_pt, a_pt, tol) + [a_pt]
    for p, q in zip(loop[:-1], loop[1:]):
        area += 0.5 * (p[0] * q[1] - q[0] * p[1])
    elem_area = (box[2] - box[0]) * (box[3] - box[1])
    return min(max(area / elem_area, 0.0), 1.0)


def select_analysis_side(segment: InterfaceSegment, mesh: Mesh, curve: InterfaceCurve) -> int:
    """Side of the host element containing the corner farthest from the tangent
    line at the segment midpoint (ties broken by smallest corner index)."""
    tm = segment.t_mid
    p0 = curve.point(tm)
    d = curve.tangent(tm)
    d = d / np.linalg.norm(d)
    corners = mesh.vertices[mesh.elements[segment.element]]
    rel = corners - p0
    dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0])
    order = np.argsort(-dist, kind="stable")  # farthest first, smallest index on ties
    tol = 1e-12 * mesh.h
    for idx in order:
        try:
            return signed_side(corners[idx], curve, tol=tol)
        except OnInterface:
            continue
    raise GeometryError("all host-element corners lie on the interface")


def classify_elements(mesh: Mesh, curve: InterfaceCurve, cut_threshold: float = 1e-12) -> CutTopology:
    """Classify every element against the curve and extract interface segments.

    Raises MultiIntersection when the curve meets one element's boundary in
    more than two points, TangencyUnresolved when a crossing cannot be
    bracketed, and UnresolvedTopology for interior loops or curves leaving
    the domain; all three indicate the mesh is too coarse for the curve.
    """
    dom = mesh.domain
    n_elem = mesh.n_elements
    labels = np.empty(n_elem, dtype=np.int8)
    fractions = np.zeros((n_elem, 2))

    smin, smax = curve.speed_range()
    if smin <= 0.0:
        raise GeometryError("degenerate parameterization: |r'| vanishes")
    arclen = smax * curve.period
    min_side = min(mesh.dx, mesh.dy)
    n_samp = int(min(max(1024, 16 * arclen / min_side), 2**18))
    ts = np.linspace(0.0, curve.period, n_samp, endpoint=not curve.closed)
    pts = curve.point(ts)

    xtol = max(1e-14 * mesh.h / smin, 8 * np.finfo(float).eps * curve.period)
    tol_edge = 1e-10 * mesh.h
    tol_geo = 1e-12 * mesh.h

    roots = []
    xs = dom.x0 + mesh.dx * np.arange(mesh.nx + 1)
    ys = dom.y0 + mesh.dy * np.arange(mesh.ny + 1)
    for value in xs:
        roots += _grid_crossings(curve, ts, pts, value, 0, xtol, tol_edge)
    for value in ys:
        roots += _grid_crossings(curve, ts, pts, value, 1, xtol, tol_edge)

    # Collapse clusters of near-coincident breakpoints (tangential touches of a
    # grid line leave weak duplicate roots a few 1e-9 apart); keep the most
    # transversal root of each cluster so true crossings stay machine-accurate.
    t_micro = max(2e-7 * curve.period, 4 * xtol)
    t_dedupe = max(1e-13 * curve.period, 2 * xtol)
    roots = sorted(
        ((r % curve.period if curve.closed else r), s) for r, s in roots
    )
    merged = []
    cluster = []
    for r, s in roots:
        if cluster and r - cluster[-1][0] > t_micro:
            merged.append(max(cluster, key=lambda item: item[1])[0])
            cluster = []
        cluster.append((r, s))
    if cluster:
        merged.append(max(cluster, key=lambda item: item[1])[0])
    if curve.closed and len(merged) >= 2 and (merged[0] + curve.period) - merged[-1] <= t_micro:
        merged.pop()

    intervals = []
    if curve.closed:
        if not merged:
            intervals.append((0.0, curve.period))
        else:
            for k in range(len(merged)):
                a = merged[k]
                b = merged[(k + 1) % len(merged)]
                if (k + 1) % len(merged) == 0:
                    b += curve.period
                intervals.append((a, b))
    else:
        knots = [0.0] + [r for r in merged if t_dedupe < r < curve.period - t_dedupe] + [curve.period]
        intervals = [(a, b) for a, b in zip(knots[:-1], knots[1:]) if b - a > t_dedupe]

    if not intervals:
        raise UnresolvedTopology("curve produced no parameter intervals")

    # classify each interval: outside the domain / on a mesh edge / inside one element
    records = []  # (t_lo, t_hi, host, on_edge, neighbor)
    any_inside = False
    any_outside = False
    for (a, b) in intervals:
        tm = 0.5 * (a + b)
        pm = curve.point(tm)
        if not bool(dom.contains(pm[0], pm[1], tol=-tol_geo)):
            any_outside = True
            continue
        any_inside = True
        t_check = np.linspace(a, b, 7)[1:-1]
        p_check = curve.point(t_check)
        dist_v = np.min(np.abs(p_check[:, 0][:, None] - xs[None, :]), axis=1)
        dist_h = np.min(np.abs(p_check[:, 1][:, None] - ys[None, :]), axis=1)
        long_enough = curve.arclength(a, b, npts=8) >= 0.1 * min_side
        if long_enough and (np.all(dist_v < tol_edge) or np.all(dist_h < tol_edge)):
            nrm = curve.normal(tm)
            delta = min_side / 3.0
            p_host = pm - delta * nrm
            p_nb = pm + delta * nrm
            if not (dom.contains(p_host[0], p_host[1]) and dom.contains(p_nb[0], p_nb[1])):
                raise UnresolvedTopology("edge-aligned interface runs along the domain boundary")
            records.append((a, b, mesh.locate(*p_host), True, mesh.locate(*p_nb)))
        else:
            host = mesh.locate(pm[0], pm[1])
            box = mesh.element_box(host)
            pad = 10.0 * tol_geo + tol_edge
            ok = (
                (p_check[:, 0] >= box[0] - pad)
                & (p_check[:, 0] <= box[2] + pad)
                & (p_check[:, 1] >= box[1] - pad)
                & (p_check[:, 1] <= box[3] + pad)
            )
            if not np.all(ok):
                raise TangencyUnresolved(
                    f"interval [{a:.6g},{b:.6g}] leaves element {host} without a "
                    "bracketed crossing; refine the mesh"
                )
            records.append((a, b, host, False, host))

    if any_outside and any_inside:
        raise UnresolvedTopology("curve crosses the domain boundary; unsupported")
    if not any_inside:
        # curve entirely outside: all elements pure
        centers_x = dom.x0 + mesh.dx * (np.arange(mesh.nx) + 0.5)
        centers_y = dom.y0 + mesh.dy * (np.arange(mesh.ny) + 0.5)
        cx, cy = np.meshgrid(centers_x, centers_y, indexing="xy")
        d = curve.signed_distance(cx.ravel(), cy.ravel())
        labels[:] = np.where(d < 0.0, 1, 2)
        fractions[labels == 1, 0] = 1.0
        fractions[labels == 2, 1] = 1.0
        return CutTopology(mesh, curve, labels, fractions, ())

    if curve.closed and not merged:
        raise UnresolvedTopology(
            "closed curve never crosses a mesh line (interior loop inside one "
            "element); refine the mesh"
        )

    # merge consecutive intervals sharing a host (grazing breakpoints)
    records.sort(key=lambda rec: rec[0])
    mergedrec = []
    for rec in records:
        if mergedrec and mergedrec[-1][2] == rec[2] and mergedrec[-1][3] == rec[3] and abs(mergedrec[-1][1] - rec[0]) <= t_dedupe:
            prev = mergedrec.pop()
            mergedrec.append((prev[0], rec[1], prev[2], prev[3], prev[4]))
        else:
            mergedrec.append(rec)
    if curve.closed and len(mergedrec) >= 2:
        first, last = mergedrec[0], mergedrec[-1]
        if first[2] == last[2] and first[3] == last[3] and abs((last[1] % curve.period) - first[0]) <= t_dedupe:
            mergedrec = mergedrec[1:-1] + [(last[0], last[1] + (first[1] - first[0]), last[2], last[3], last[4])]

    hosts_seen = {}
    for rec in mergedrec:
        key = rec[2]
        hosts_seen[key] = hosts_seen.get(key, 0) + 1
    bad = [k for k, c in hosts_seen.items() if c > 1]
    if bad:
        raise MultiIntersection(
            f"element(s) {bad} meet the curve in more than two boundary points; "
            "refine the mesh"
        )

    segments = []
    dropped = 0.0
    cut_hosts = set()
    for (a, b, host, on_edge, nb) in mergedrec:
        seg = InterfaceSegment(element=host, t_lo=a, t_hi=b, on_edge=on_edge, neighbor=nb)
        if on_edge:
            segments.append(seg)
            continue
        f1 = _side1_fraction(mesh, curve, seg)
        if f1 < cut_threshold or (1.0 - f1) < cut_threshold:
            dropped += curve.arclength(a, b)
            continue
        fractions[host] = (f1, 1.0 - f1)
        cut_hosts.add(host)
        segments.append(seg)

    edge_hosts = {s.element for s in segments if s.on_edge}
    if edge_hosts & cut_hosts:
        raise MultiIntersection(
            f"element(s) {sorted(edge_hosts & cut_hosts)} host both an edge-aligned "
            "segment and a cut; refine the mesh"
        )

    for k in range(n_elem):
        if k in cut_hosts:
            labels[k] = 0
        else:
            i, j = mesh.element_cell(k)
            cx = dom.x0 + mesh.dx * (i + 0.5)
            cy = dom.y0 + mesh.dy * (j + 0.5)
            side = 1 if float(curve.signed_distance(cx, cy)) < 0.0 else 2
            labels[k] = side
            fractions[k, side - 1] = 1.0

    segments.sort(key=lambda s: s.t_lo)
    segments = tuple(
        replace(s, analysis_side=select_analysis_side(s, mesh, curve)) for s in segments
    )
    labels.setflags(write=False)
    fractions.setflags(write=False)
    return CutTopology(mesh, curve, labels, fractions, segments, dropped_arclength=dropped)
