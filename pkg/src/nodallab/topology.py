"""Counting nodal components, nodal domains and flips on sampled grids.

The zero set is reconstructed cell by cell with marching squares.  Grid
edges whose endpoints carry opposite signs are the vertices of an
"interface graph"; two such edges are joined when the zero curve runs
from one to the other inside a common cell.  Saddle cells (all four edges
crossed) are disambiguated by the sign of the field at the cell centre,
evaluated exactly from the trigonometric sum when it is available.

Connected components of the interface graph are the nodal components.
A component is compact when every one of its edges is closed off on both
sides by counted cells; otherwise it runs into the boundary of the
counting region.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.csgraph import connected_components

from nodallab.synthesis import FieldSample, SynthesisError

log = logging.getLogger(__name__)

ZERO_NUDGE = 1e-13
FLIP_TOL = 1e-9


class CountingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ComponentCount:
    compact_zero_components: int
    boundary_zero_components: int
    positive_domains: int
    negative_domains: int
    region: str
    R: Optional[float] = None
    flips: Optional[int] = None

    @property
    def zero_components(self) -> int:
        return self.compact_zero_components + self.boundary_zero_components


def grid_sample(values, x1=None, x2=None, evaluator=None, R=None, kind: str = "grid") -> FieldSample:
    """Wrap an arbitrary grid (e.g. a test function) as a FieldSample.

    ``kind="grid"`` counts over the whole rectangle; ``kind="planar"`` clips
    to the disk of radius ``R``.
    """
    values = np.asarray(values, dtype=float)
    if x1 is None:
        x1 = np.arange(values.shape[0], dtype=float)
    if x2 is None:
        x2 = np.arange(values.shape[1], dtype=float)
    h = float(x1[1] - x1[0]) if len(x1) > 1 else None
    return FieldSample(kind, values, np.asarray(x1, float), np.asarray(x2, float),
                       R=R, h=h, evaluator=evaluator, measure_label="synthetic")


def nudged(values: np.ndarray) -> np.ndarray:
    """Replace |f| < 1e-13 by +1e-13 so that every node has a strict sign."""
    v = np.array(values, dtype=float)
    v[np.abs(v) < ZERO_NUDGE] = ZERO_NUDGE
    return v


# ---------------------------------------------------------------------------
# cell geometry


class _Cells:
    """Crossed cells of a (possibly periodic) grid, in compressed form.

    Only cells that are counted (``active``) and crossed by the zero set are
    kept.  Edge ids: E0 edges join (i, j)-(i+1, j) and get ``i * n2 + j``;
    E1 edges join (i, j)-(i, j+1) and get ``off1 + i * m2 + j``.
    """

    def __init__(self, pos: np.ndarray, periodic: bool, active: Optional[np.ndarray] = None):
        n1, n2 = pos.shape
        self.n1, self.n2 = n1, n2
        self.periodic = periodic
        m1 = n1 if periodic else n1 - 1
        m2 = n2 if periodic else n2 - 1
        self.m1, self.m2 = m1, m2
        if periodic:
            s00 = pos
            s10 = np.roll(pos, -1, axis=0)
            s01 = np.roll(pos, -1, axis=1)
            s11 = np.roll(s10, -1, axis=1)
        else:
            s00, s10, s01, s11 = pos[:-1, :-1], pos[1:, :-1], pos[:-1, 1:], pos[1:, 1:]
        xa = s00 != s10
        xc = s01 != s11
        crossed = xa | xc | (s00 != s01)
        if active is not None:
            crossed &= active
        idx = np.flatnonzero(crossed)
        I, J = np.divmod(idx, m2)
        self.I, self.J = I, J
        self.s00 = s00[I, J]
        s10, s01, s11 = s10[I, J], s01[I, J], s11[I, J]
        self.xa = self.s00 != s10
        self.xb = s10 != s11
        self.xc = s01 != s11
        self.xd = self.s00 != s01
        self.saddle = self.xa & self.xb & self.xc & self.xd
        ip = (I + 1) % n1
        jp = (J + 1) % n2
        self.ip, self.jp = ip, jp
        self.off1 = m1 * n2
        self.num_edges = m1 * n2 + n1 * m2
        self.ea = I * n2 + J
        self.eb = self.off1 + ip * m2 + J
        self.ec = I * n2 + jp
        self.ed = self.off1 + I * m2 + J

    def edge_endpoints(self, eid: np.ndarray):
        """Node indices (i0, j0, i1, j1) of edges."""
        eid = np.asarray(eid)
        is0 = eid < self.off1
        i0 = np.where(is0, eid // self.n2, (eid - self.off1) // self.m2)
        j0 = np.where(is0, eid % self.n2, (eid - self.off1) % self.m2)
        i1 = np.where(is0, (i0 + 1) % self.n1, i0)
        j1 = np.where(is0, j0, (j0 + 1) % self.n2)
        return i0, j0, i1, j1

    def segments(self, center_pos: np.ndarray):
        """Edge pairs (u, v) joined by a zero-curve segment.

        ``center_pos`` is the centre sign of every kept cell (only read on
        saddle cells).
        """
        xa, xb, xc, xd = self.xa, self.xb, self.xc, self.xd
        plain = ~self.saddle
        us, vs = [], []
        for xp, xq, ep, eq in ((xa, xb, self.ea, self.eb), (xa, xc, self.ea, self.ec),
                               (xa, xd, self.ea, self.ed), (xb, xc, self.eb, self.ec),
                               (xb, xd, self.eb, self.ed), (xc, xd, self.ec, self.ed)):
            m = plain & xp & xq
            us.append(ep[m])
            vs.append(eq[m])
        # centre agrees with corner 00: corners 00 and 11 connect, so the
        # curves cut off corners 10 (edges a, b) and 01 (edges c, d)
        join_00_11 = self.saddle & (center_pos == self.s00)
        join_10_01 = self.saddle & (center_pos != self.s00)
        for m, pairs in ((join_00_11, ((self.ea, self.eb), (self.ec, self.ed))),
                         (join_10_01, ((self.ea, self.ed), (self.eb, self.ec)))):
            for ep, eq in pairs:
                us.append(ep[m])
                vs.append(eq[m])
        return np.concatenate(us), np.concatenate(vs)


def _center_signs(sample: FieldSample, cells: _Cells, values: np.ndarray) -> np.ndarray:
    """Sign (True = positive) at the centre of every saddle cell; other
    entries are left False and never read."""
    out = np.zeros(len(cells.I), dtype=bool)
    k = np.flatnonzero(cells.saddle)
    if len(k) == 0:
        return out
    ci, cj = cells.I[k], cells.J[k]
    if sample.freqs is not None or sample.evaluator is not None:
        x1, x2 = sample.x1, sample.x2
        c1 = x1[ci] + 0.5 * (x1[1] - x1[0])
        c2 = x2[cj] + 0.5 * (x2[1] - x2[0])
        cv = sample.evaluate(c1, c2)
    else:
        ip, jp = cells.ip[k], cells.jp[k]
        cv = 0.25 * (values[ci, cj] + values[ip, cj] + values[ci, jp] + values[ip, jp])
    out[k] = nudged(cv) > 0
    return out


def _region(sample: FieldSample, radius: Optional[float]):
    """Cells to build, counted nodes (None meaning everything), region name
    and clipping radius."""
    if sample.periodic:
        return None, None, "torus", None
    if sample.domain_kind == "grid" and radius is None:
        return None, None, "window", None
    R = radius if radius is not None else sample.R
    if R is None:
        raise CountingError("planar counting needs a radius")
    r2 = sample.x1[:, None] ** 2 + sample.x2[None, :] ** 2
    inside = r2 <= R * R * (1 + 1e-12)
    # every cell with an edge that can carry a crossing inside the disk
    near = r2 <= (R + 2 * (sample.x1[1] - sample.x1[0])) ** 2
    cells_near = near[:-1, :-1] | near[1:, :-1] | near[:-1, 1:] | near[1:, 1:]
    return cells_near, inside, "ball", float(R)


def _count_domains(pos: np.ndarray, nodes: Optional[np.ndarray], cells: _Cells, center_pos):
    """Numbers of positive and negative nodal domains among counted nodes."""
    counts = []
    struct = ndimage.generate_binary_structure(2, 1)
    for sign in (True, False):
        mask = pos if sign else ~pos
        if nodes is not None:
            mask = mask & nodes
        lab, nlab = ndimage.label(mask, structure=struct)
        if nlab == 0:
            counts.append(0)
            continue
        us, vs = [], []
        # saddle diagonals whose centre carries this sign
        k = np.flatnonzero(cells.saddle & (center_pos == sign))
        I, J, ip, jp = cells.I[k], cells.J[k], cells.ip[k], cells.jp[k]
        diag00 = cells.s00[k] == sign
        a = np.where(diag00, lab[I, J], lab[ip, J])
        b = np.where(diag00, lab[ip, jp], lab[I, jp])
        ok = (a > 0) & (b > 0)
        us.append(a[ok])
        vs.append(b[ok])
        if cells.periodic:
            for a, b in ((lab[0, :], lab[-1, :]), (lab[:, 0], lab[:, -1])):
                ok = (a > 0) & (b > 0)
                us.append(a[ok])
                vs.append(b[ok])
        u = np.concatenate(us) - 1
        v = np.concatenate(vs) - 1
        g = sp.coo_matrix((np.ones(len(u), dtype=np.int8), (u, v)), shape=(nlab, nlab))
        counts.append(connected_components(g, directed=False)[0])
    return counts[0], counts[1]


def _compress(u: np.ndarray, v: np.ndarray, num_edges: int):
    """Renumber the edge ids occurring in (u, v) as 0..M-1."""
    mark = np.zeros(num_edges, dtype=bool)
    mark[u] = True
    mark[v] = True
    used = np.flatnonzero(mark)
    mp = np.empty(num_edges, dtype=np.int64 if len(used) >= 2**31 else np.int32)
    mp[used] = np.arange(len(used))
    return used, mp[u], mp[v]


def count_components(sample: FieldSample, radius: Optional[float] = None) -> ComponentCount:
    """Census of the zero set of one sampled field.

    Planar samples are counted in the disk B(0, R) (``radius`` overrides
    the sample's own R, e.g. to clip a larger window); components meeting
    the circle are reported as boundary components.  The zero set is
    clipped at the interpolated edge crossings, so the split between compact
    and boundary components does not depend on how the grid meets the
    circle.  Torus samples use wrap-around adjacency and every component is
    counted as compact.
    """
    values = nudged(sample.values)
    if not np.all(np.isfinite(values)):
        raise CountingError("non-finite field values")
    pos = values > 0
    active, nodes, region, R = _region(sample, radius)
    cells = _Cells(pos, sample.periodic, active)
    center_pos = _center_signs(sample, cells, values)

    u, v = cells.segments(center_pos)
    compact = boundary = 0
    if len(u):
        used, cu, cv = _compress(u, v, cells.num_edges)
        M = len(used)
        degree = np.bincount(cu, minlength=M) + np.bincount(cv, minlength=M)
        if np.any(degree > 2):
            raise CountingError("interface edge joined more than twice")
        # an interface edge with fewer than two joins ends at the window edge
        open_end = degree < 2
        if R is not None:
            keep = _crossings_inside(sample, cells, values, used, R)
            # a segment leaving the disk makes its inner end a boundary touch
            cut = keep[cu] != keep[cv]
            open_end[cu[cut]] = True
            open_end[cv[cut]] = True
            both = keep[cu] & keep[cv]
            cu, cv = cu[both], cv[both]
        else:
            keep = np.ones(M, dtype=bool)
        g = sp.coo_matrix((np.ones(len(cu), dtype=np.int8), (cu, cv)), shape=(M, M))
        ncomp, labels = connected_components(g, directed=False)
        counted = np.zeros(ncomp, dtype=bool)
        counted[labels[keep]] = True
        open_comp = np.zeros(ncomp, dtype=bool)
        open_comp[labels[open_end & keep]] = True
        boundary = int((open_comp & counted).sum())
        compact = int((counted & ~open_comp).sum())
    npos, nneg = _count_domains(pos, nodes, cells, center_pos)
    return ComponentCount(compact, boundary, int(npos), int(nneg), region, R)


def _crossings_inside(sample: FieldSample, cells: _Cells, values: np.ndarray, used, R: float):
    """Whether the linearly interpolated zero crossing on each edge lies in
    the closed disk of radius R."""
    i0, j0, i1, j1 = cells.edge_endpoints(used)
    v0, v1 = values[i0, j0], values[i1, j1]
    t = v0 / (v0 - v1)
    x1 = sample.x1[i0] + t * (sample.x1[i1] - sample.x1[i0])
    x2 = sample.x2[j0] + t * (sample.x2[j1] - sample.x2[j0])
    return x1 * x1 + x2 * x2 <= R * R


def count_wrapping(sample: FieldSample) -> int:
    """Number of non-contractible zero components of a torus sample.

    Counts on the doubly-covering 2N x 2N torus: a contractible component
    lifts to four copies, a wrapping (primitive class) one to two.
    """
    tiled = np.tile(sample.values, (2, 2))
    N = sample.values.shape[0]
    x = np.arange(2 * N) / N
    big = FieldSample("torus", tiled, x, x.copy(), freqs=sample.freqs, coeffs=sample.coeffs)
    c1 = count_components(sample).compact_zero_components
    c2 = count_components(big).compact_zero_components
    return (4 * c1 - c2) // 2


# ---------------------------------------------------------------------------
# flips


@dataclass
class FlipDiagnostics:
    degenerate: list = field(default_factory=list)
    candidates: int = 0


def _edge_zero(sample: FieldSample, p0, p1, iters: int = 45):
    """Bisection for f = 0 on the segments p0 -> p1 (f(p0) f(p1) < 0)."""
    f0 = sample.evaluate(p0[0], p0[1])
    lo = np.zeros(len(f0))
    hi = np.ones(len(f0))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = sample.evaluate(p0[0] + mid * (p1[0] - p0[0]), p0[1] + mid * (p1[1] - p0[1]))
        same = np.sign(fm) == np.sign(f0)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    t = 0.5 * (lo + hi)
    return p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])


def count_flips(sample: FieldSample, radius: Optional[float] = None,
                diagnostics: Optional[FlipDiagnostics] = None) -> int:
    """Number of transversal solutions of f = d/dx1 f = 0 in the counting region.

    Every zero-curve segment of every cell is checked for a sign change of
    d/dx1 f between its two end points; such segments are refined to the
    simultaneous zero and accepted when it is transversal.
    """
    if sample.grad1 is None:
        raise SynthesisError("count_flips needs a sample with gradient grids")
    if sample.freqs is None:
        raise SynthesisError("count_flips needs an exactly evaluable sample")
    values = nudged(sample.values)
    pos = values > 0
    cells = _Cells(pos, sample.periodic)
    center_pos = _center_signs(sample, cells, values)
    u, v = cells.segments(center_pos)
    if len(u) == 0:
        return 0
    used, inv = np.unique(np.concatenate([u, v]), return_inverse=True)

    i0, j0, i1, j1 = cells.edge_endpoints(used)
    x1, x2 = sample.x1, sample.x2
    a1, a2 = x1[i0], x2[j0]
    b1, b2 = x1[i1], x2[j1]
    if sample.periodic:
        # wrapped edges continue past 1
        b1 = np.where(i1 < i0, b1 + 1.0, b1)
        b2 = np.where(j1 < j0, b2 + 1.0, b2)
    z1, z2 = _edge_zero(sample, (a1, a2), (b1, b2))
    g = sample.evaluate(z1, z2, (1, 0))

    k = len(u)
    pu, pv = inv[:k], inv[k:]
    # periodic: bring both crossing points of a segment into one chart
    q1, q2 = z1[pv], z2[pv]
    if sample.periodic:
        q1 = q1 + np.round(z1[pu] - q1)
        q2 = q2 + np.round(z2[pu] - q2)
    # strict sign classes, so an exact zero of d1 f on a shared edge is
    # claimed by only one of the two adjacent segments
    cand = (g[pu] > 0) != (g[pv] > 0)
    diag = diagnostics if diagnostics is not None else FlipDiagnostics()
    diag.candidates += int(cand.sum())
    if not cand.any():
        return 0
    s1, s2 = z1[pu][cand], z2[pu][cand]
    e1, e2 = q1[cand], q2[cand]
    gs = g[pu][cand]
    # bisection on d/dx1 f along the chord between the two crossings
    lo = np.zeros(len(s1))
    hi = np.ones(len(s1))
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        gm = sample.evaluate(s1 + mid * (e1 - s1), s2 + mid * (e2 - s2), (1, 0))
        same = (gm > 0) == (gs > 0)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    t = 0.5 * (lo + hi)
    p1 = s1 + t * (e1 - s1)
    p2 = s2 + t * (e2 - s2)
    # Newton polish of (f, d1 f) = 0
    for _ in range(8):
        f = sample.evaluate(p1, p2)
        f1 = sample.evaluate(p1, p2, (1, 0))
        f2 = sample.evaluate(p1, p2, (0, 1))
        f11 = sample.evaluate(p1, p2, (2, 0))
        f12 = sample.evaluate(p1, p2, (1, 1))
        det = f1 * f12 - f2 * f11
        safe = np.abs(det) > 1e-300
        d1 = np.where(safe, (f * f12 - f2 * f1) / np.where(safe, det, 1.0), 0.0)
        d2 = np.where(safe, (f1 * f1 - f * f11) / np.where(safe, det, 1.0), 0.0)
        step = np.hypot(d1, d2)
        # never let a step leave the neighbourhood of the segment
        cap = np.minimum(1.0, 0.5 * (sample.h or 1.0 / cells.n1) / np.maximum(step, 1e-300))
        p1 = p1 - cap * d1
        p2 = p2 - cap * d2
    f = sample.evaluate(p1, p2)
    f1 = sample.evaluate(p1, p2, (1, 0))
    f2 = sample.evaluate(p1, p2, (0, 1))
    f11 = sample.evaluate(p1, p2, (2, 0))
    f12 = sample.evaluate(p1, p2, (1, 1))
    det = f1 * f12 - f2 * f11
    ok = (np.abs(f) < FLIP_TOL) & (np.abs(f1) < FLIP_TOL) & (np.abs(det) > FLIP_TOL)
    for k_bad in np.flatnonzero(~ok):
        diag.degenerate.append((float(p1[k_bad]), float(p2[k_bad]), float(f[k_bad]),
                                float(f1[k_bad]), float(det[k_bad])))
        log.info("flip=degenerate x1=%.6g x2=%.6g f=%.3g d1f=%.3g det=%.3g",
                 p1[k_bad], p2[k_bad], f[k_bad], f1[k_bad], det[k_bad])
    if not sample.periodic:
        R = radius if radius is not None else sample.R
        if R is not None:
            ok &= p1 * p1 + p2 * p2 <= R * R
    return int(ok.sum())


# ---------------------------------------------------------------------------
# independent oracle


@dataclass(frozen=True)
class OracleCount:
    zero_components: int
    positive_domains: int
    negative_domains: int
    compact_zero_components: int

    def __iter__(self):
        return iter((self.zero_components, self.positive_domains, self.negative_domains))


def saddle_center_rule(values: np.ndarray) -> np.ndarray:
    """Declared saddle rule for bare grids: sign of the mean of the four
    corner values, with zero resolved to positive."""
    v = np.asarray(values, float)
    m = 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])
    return nudged(m) > 0


def _raster(signs: np.ndarray, center_pos: np.ndarray, scale: int) -> np.ndarray:
    """Piecewise-linear rasterization: each cell split into four triangles
    through its centre, sampled at ``scale`` x ``scale`` pixel centres."""
    s = np.where(signs, 1.0, -1.0)
    n1, n2 = s.shape
    f00, f10, f01, f11 = s[:-1, :-1], s[1:, :-1], s[:-1, 1:], s[1:, 1:]
    sad = (f00 == f11) & (f10 == f01) & (f00 != f10)
    fc = np.where(sad, np.where(center_pos, 0.5, -0.5), 0.25 * (f00 + f10 + f01 + f11))
    t = (np.arange(scale) + 0.5) / scale
    out = np.empty(((n1 - 1) * scale, (n2 - 1) * scale))
    for a, uu in enumerate(t):
        for b, vv in enumerate(t):
            # triangle by nearest cell side: a (v small), b (u large), c (v large), d (u small)
            side = int(np.argmin([vv, 1 - uu, 1 - vv, uu]))
            if side == 0:
                val = f00 + (f10 - f00) * uu + (2 * fc - f00 - f10) * vv
            elif side == 1:
                val = f10 + (f11 - f10) * vv + (2 * fc - f10 - f11) * (1 - uu)
            elif side == 2:
                val = f01 + (f11 - f01) * uu + (2 * fc - f01 - f11) * (1 - vv)
            else:
                val = f00 + (f01 - f00) * vv + (2 * fc - f00 - f01) * uu
            out[a::scale, b::scale] = val
    return out


def _flood(mask: np.ndarray):
    lab = np.zeros(mask.shape, dtype=np.int64)
    n = 0
    H, W = mask.shape
    for i in range(H):
        for j in range(W):
            if mask[i, j] and lab[i, j] == 0:
                n += 1
                lab[i, j] = n
                q = deque([(i, j)])
                while q:
                    a, b = q.popleft()
                    for c, d in ((a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)):
                        if 0 <= c < H and 0 <= d < W and mask[c, d] and lab[c, d] == 0:
                            lab[c, d] = n
                            q.append((c, d))
    return lab, n


def components_oracle(grid, center_pos: Optional[np.ndarray] = None, scale: int = 4) -> OracleCount:
    """Brute-force census of a small grid over the full rectangle.

    The marching-squares picture is rasterized at ``scale`` x subdivision
    and flood filled.  Zero components are then the edges of the domain
    adjacency graph, which is a tree on a rectangle.
    """
    v = nudged(np.asarray(grid, dtype=float))
    if v.shape[0] > 32 or v.shape[1] > 32:
        raise ValueError("oracle grids are limited to 32 x 32")
    signs = v > 0
    if v.shape[0] < 2 or v.shape[1] < 2:
        raise ValueError("oracle grids need at least 2 x 2 nodes")
    if center_pos is None:
        center_pos = saddle_center_rule(v)
    img = _raster(signs, center_pos, scale)
    plab, npos = _flood(img > 0)
    nlab, nneg = _flood(img <= 0)
    lab = np.where(img > 0, plab, nlab + npos)
    D = npos + nneg
    pairs = set()
    for a, b in ((lab[1:, :], lab[:-1, :]), (lab[:, 1:], lab[:, :-1])):
        diff = a != b
        for x, y in zip(a[diff].tolist(), b[diff].tolist()):
            pairs.add((min(x, y), max(x, y)))
    if len(pairs) != D - 1:
        raise AssertionError("domain adjacency graph is not a tree")
    border = np.zeros(D + 1, dtype=bool)
    for edge in (lab[0, :], lab[-1, :], lab[:, 0], lab[:, -1]):
        border[edge] = True
    adj = {k: [] for k in range(1, D + 1)}
    for x, y in pairs:
        adj[x].append(y)
        adj[y].append(x)
    # subtree border counts from root 1
    parent = {1: 0}
    order = [1]
    for node in order:
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                order.append(nb)
    sub = {k: int(border[k]) for k in adj}
    for node in reversed(order[1:]):
        sub[parent[node]] += sub[node]
    total = sub[1]
    closed = sum(1 for node in order[1:] if sub[node] == 0 or sub[node] == total)
    return OracleCount(len(pairs), npos, nneg, closed)
