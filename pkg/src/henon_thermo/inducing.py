"""Geometry near the first tangency and the first-return inducing scheme.

Everything lives on the lower unstable side of R, the leaf through the
tangency point zeta0. Curves transverse to it (the alpha families) are stored
as Chebyshev graphs x = A(y) over a thin band |y| <= 1.3 sqrt(b); points on the
leaf are addressed by a local branch parameter t, and lengths by arclength s
measured from the leaf's left end.

Return branches are built in the quotient that identifies the two halves of
the leaf along the stable foliation (points with equal x(f z) are glued), so
the base is the right half [zeta0, alpha_1^+]. A point w of the right half has
return time tau(w) = n when f(w) lies between beta_{n-1} and beta_n, the right
preimages of tilde alpha_{n-2} and tilde alpha_{n-1}. Points of each piece
gamma_n whose (n+1)-st image leaves R form a hole; the hole (or, if empty, the
fold point) splits gamma_n into two full branches.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import (DepthError, GeometryError, NotFoundError, RefinementError,
                     SingularMapError)
from .henon_core import fixed_saddles, step
from .manifolds import (H_MIN, Curve, StableGraph, TangencyProblem, bisect_graph,
                        c2b_check, fit_graph, graph_alpha_hat_minus, graph_tilde_alpha0,
                        grow_stable)

Y_BAND = 1.3        # graphs are fitted on |y| <= Y_BAND * sqrt(b)
N_GRAPHS = 40       # tilde alpha_n and beta_n are fitted up to this index
RES_MARGIN = 1e-14  # beta_n counts as resolved while A+ - beta_n exceeds this
LEAF_TABLE = 4097


# transverse curve families ------------------------------------------------

def preimage_graph(params, G, side, y_half, name="", deg=12, iters=30):
    """Graph of the component of f^-1(G) near x = side * 0.5..1.

    Solves x = side * sqrt((1 + sqrt(b) y - G(s sqrt(b) x)) / a) by fixed-point
    iteration, which contracts strongly away from x = 0.
    """
    p = params
    rb = p.sqrt_b

    def f(y):
        y = np.asarray(y, float)
        x = side * np.sqrt(np.maximum((1.0 + rb * y - G(0.0 * y)) / p.a, 0.0))
        for _ in range(iters):
            arg = np.clip(p.s * rb * x, G.y0, G.y1)
            x = side * np.sqrt(np.maximum((1.0 + rb * y - G(arg)) / p.a, 0.0))
        return x

    return fit_graph(f, -y_half, y_half, deg, name)


def vertex_curve(params, B, side, y_lo, y_hi, n=65, name=""):
    """The arm x = side * X(y) of the parabola {z : f(z) in graph B} near x = 0.

    Root found by vectorised bisection on 0 < |x| < 0.6; only heights where
    the arm exists (above its vertex) are kept.
    """
    p = params
    rb = p.sqrt_b
    yy = np.linspace(y_lo, y_hi, n)
    g = lambda x: 1.0 - p.a * x * x + rb * yy - B(np.clip(p.s * rb * side * x, B.y0, B.y1))
    lo = np.zeros(n)
    hi = np.full(n, 0.6)
    ok = g(lo) > 0
    for _ in range(80):
        m = 0.5 * (lo + hi)
        pos = g(m) > 0
        lo = np.where(pos, m, lo)
        hi = np.where(pos, hi, m)
    x = side * 0.5 * (lo + hi)
    if ok.sum() < 2:
        return None
    return Curve.from_points(np.column_stack([x[ok], yy[ok]]), "alpha", flags=(name,))


# region R ------------------------------------------------------------------

@dataclass
class RegionR:
    """The rectangle bounded by the two stable sides and the two unstable sides."""
    params: object
    left: StableGraph     # hat alpha_0^-, the component of W^s(Q) through Q
    right: StableGraph    # hat alpha_0^+, the other component of f^-1 hat alpha_0^-
    bottom: Curve         # lower unstable side, containing the tangency point
    top: Curve
    y_half: float
    problem: TangencyProblem = field(repr=False)
    corner_gaps: tuple = ()
    flags: tuple = ()

    def contains(self, x, y):
        return _inside(x, y, self.left, self.right, self.y_half)

    @property
    def bbox(self):
        v = np.vstack([self.bottom.vertices, self.top.vertices])
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))

    def to_dict(self):
        return {"bbox": list(self.bbox), "y_half": self.y_half,
                "corner_gaps": list(self.corner_gaps), "flags": list(self.flags),
                "tangency": self.problem.report().to_dict()}


def _top_side(params, problem, left, right, y_half, n=60001):
    """Components of f(gamma0) inside R other than the tangent arm, joined by x."""
    best = problem.best
    pieces = []
    for br in problem.branches:
        th = np.linspace(0.0, 30.0, 30 * 2000 + 1)
        x, y = br.points(th)
        inside = _inside(x, y, left, right, y_half)
        if not inside[0]:
            continue
        first_out = np.argmin(inside) if not inside.all() else len(th)
        th = np.linspace(0.0, th[min(first_out, len(th) - 1)], n)
        X, Y = step(params, *br.points(th))
        ins = _inside(X, Y, left, right, y_half)
        edges = np.flatnonzero(np.diff(ins.astype(int))) + 1
        def f_in(t):
            Xt, Yt = step(params, *br.points(t))
            return _inside(Xt, Yt, left, right, y_half)[0], Xt[0], Yt[0]

        def refine(t_in, t_out):
            for _ in range(60):
                m = 0.5 * (t_in + t_out)
                if f_in(m)[0]:
                    t_in = m
                else:
                    t_out = m
            return f_in(t_in)[1:]

        for seg in np.split(np.arange(len(X)), edges):
            if ins[seg[0]] and len(seg) > 10:
                pc = np.column_stack([X[seg], Y[seg]])
                if seg[0] > 0:
                    pc = np.vstack([refine(th[seg[0]], th[seg[0] - 1]), pc])
                if seg[-1] + 1 < len(th):
                    pc = np.vstack([pc, refine(th[seg[-1]], th[seg[-1] + 1])])
                pieces.append(pc)
    y_bottom = best.y_cross
    keep = [pc for pc in pieces if abs(np.interp(0.0, *_sorted_xy(pc)) - y_bottom)
            > 0.25 * params.sqrt_b]
    if not keep:
        raise NotFoundError("top unstable side of R not found: the unstable manifold is too short")
    pts = np.vstack(keep)
    pts = pts[np.argsort(pts[:, 0])]
    if len(pts) > 4001:
        idx = np.unique(np.r_[np.linspace(0, len(pts) - 1, 4001).astype(int), len(pts) - 1])
        pts = pts[idx]
    return Curve.from_points(pts, "unstable")


def _sorted_xy(pc):
    o = np.argsort(pc[:, 0])
    return pc[o, 0], pc[o, 1]


def _inside(x, y, left, right, y_half):
    with np.errstate(invalid="ignore"):
        return ((np.abs(y) <= y_half) & (left.compare(x, y) >= 0)
                & (right.compare(x, y) <= 0))


def build_region(params, wu=None, wsP=None, wsQ=None, problem=None):
    """Assemble R. Optional grown curves are only used for cross-checks."""
    if params.b <= 0:
        raise SingularMapError("the region R needs b > 0")
    p = params
    y_half = Y_BAND * p.sqrt_b
    tp = problem or TangencyProblem(p)
    if not hasattr(tp, "best"):
        tp.gap()
    left = graph_alpha_hat_minus(p, y_half)
    right = tp.a_plus
    flags = []
    if wsQ is not None:
        _, Q = fixed_saddles(p)
        near = wsQ.vertices[np.abs(wsQ.vertices[:, 0] - Q.location.x) < 0.05]
        if near.size == 0 or near[:, 1].max() < y_half or near[:, 1].min() > -y_half:
            raise NotFoundError("left stable side: W^s(Q) curve is too short near Q")
        d = np.abs(left(np.clip(near[:, 1], -y_half, y_half)) - near[:, 0])
        if np.min(d) > 1e-6:
            flags.append("left_side_mismatch")
    if wu is not None and wu.length < 2.0:
        raise NotFoundError("bottom side: unstable curve too short to span R")
    bottom_leaf = _make_leaf(p, tp, left, right)
    tt = np.linspace(bottom_leaf.t_left, bottom_leaf.t_right, 2001)
    bottom = Curve.from_points(np.column_stack(bottom_leaf.xy(tt)), "unstable")
    top = _top_side(p, tp, left, right, y_half)
    gaps = []
    for c in (bottom, top):
        for v in (c.vertices[0], c.vertices[-1]):
            side = left if v[0] < 0 else right
            gaps.append(float(abs(v[0] - side(np.clip(v[1], -y_half, y_half)))))
    reg = RegionR(p, left, right, bottom, top, y_half, tp, tuple(gaps), tuple(flags))
    reg._leaf = bottom_leaf
    return reg


def stable_side_slope(params, n=41):
    """Max |dx/dy| of hat alpha_0^- over |y| <= b^(1/4) (bisection samples)."""
    _, Q = fixed_saddles(params)
    qx = Q.location.x
    yy = np.linspace(-params.b ** 0.25, params.b ** 0.25, n)
    xx = bisect_graph(params, yy, qx - 0.04, qx + 0.04, qx, right_inside=True)
    return float(np.max(np.abs(np.diff(xx) / np.diff(yy))))


# the leaf ------------------------------------------------------------------

class Leaf:
    """A piece of an unstable branch addressed by the local parameter t (theta = k0 + t)."""

    def __init__(self, params, branch, k0, t_left, t_right, t_zeta):
        self.params, self.branch, self.k0 = params, branch, int(k0)
        self.t_left, self.t_right, self.t_zeta = float(t_left), float(t_right), float(t_zeta)
        tt = np.linspace(t_left, t_right, LEAF_TABLE)
        x, y = self.xy(tt)
        self._tt, self._xt, self._yt = tt, x, y
        self._st = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))])
        self.length = float(self._st[-1])
        self.s_zeta = float(np.ravel(self.s_of(self.t_zeta))[0])

    def xy(self, t):
        return self.branch.points(t, self.k0)

    def xyv(self, t):
        return self.branch.points_and_tangents(t, self.k0)

    def s_of(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        dt = (self.t_right - self.t_left) / (LEAF_TABLE - 1)
        i = np.clip(np.floor((t - self.t_left) / dt).astype(int), 0, LEAF_TABLE - 2)
        x, y = self.xy(t)
        d = np.hypot(x - self._xt[i], y - self._yt[i])
        return self._st[i] + np.where((t - self._tt[i]) / dt >= 0, d, -d)

    def t_of(self, s):
        s = np.atleast_1d(np.asarray(s, float))
        t = np.interp(s, self._st, self._tt)
        for _ in range(2):
            _, _, vx, vy = self.xyv(t)
            sp = np.hypot(vx, vy) * np.sign(self.t_right - self.t_left)
            t = t - (self.s_of(t) - s) / sp
        return t

    def length_between(self, t1, t2):
        return float(abs(self.s_of(t2)[0] - self.s_of(t1)[0]))

    def fx(self, t):
        """x and y of f(leaf(t))."""
        return step(self.params, *self.xy(t))

    def root(self, func, t1, t2):
        """Scalar root of func(t) between t1 and t2."""
        g = lambda t: float(func(np.array([t]))[0])
        g1, g2 = g(t1), g(t2)
        if g1 == 0:
            return t1
        if g2 == 0:
            return t2
        if np.sign(g1) == np.sign(g2):
            raise GeometryError(f"no sign change on [{t1}, {t2}]")
        return brentq(g, min(t1, t2), max(t1, t2), xtol=1e-16, rtol=8.9e-16, maxiter=200)

    def curve(self, t1=None, t2=None, n=2001):
        t1 = self.t_left if t1 is None else t1
        t2 = self.t_right if t2 is None else t2
        x, y = self.xy(np.linspace(t1, t2, n))
        return Curve.from_points(np.column_stack([x, y]), "unstable")


def _march(func, t0, direction, span=1.0, n=20001):
    """Dense scan from t0 for the first sign change of func; returns a bracket.

    The leaf overshoots the right stable side only on a short parameter
    interval near the fold, so a coarse march could step over it.
    """
    t = t0 + direction * np.linspace(0.0, span, n)
    g = func(t)
    ch = np.flatnonzero(np.isfinite(g[1:]) & (np.sign(g[1:]) != np.sign(g[0])))
    if ch.size == 0:
        raise NotFoundError("leaf end not found along the branch")
    k = ch[0] + 1
    return t[k - 1], t[k]


def _make_leaf(params, tp, left, right):
    st = tp.best
    k0 = math.floor(st.th_cross)
    br = st.branch
    tz = st.th_min - k0
    h = 1e-6
    xa, _ = br.points(tz - h, k0)
    xb, _ = br.points(tz + h, k0)
    orient = 1.0 if xb[0] > xa[0] else -1.0
    y_half = Y_BAND * params.sqrt_b

    def side_fun(G):
        def g(t):
            x, y = br.points(t, k0)
            return x - G(np.clip(y, -y_half, y_half))
        return g

    gl, gr = side_fun(left), side_fun(right)
    a, b_ = _march(gl, tz, -orient)
    t_left = brentq(lambda t: float(gl(np.array([t]))[0]), min(a, b_), max(a, b_), xtol=1e-15)
    a, b_ = _march(gr, tz, orient)
    t_right = brentq(lambda t: float(gr(np.array([t]))[0]), min(a, b_), max(a, b_), xtol=1e-15)
    return Leaf(params, br, k0, t_left, t_right, tz)


# alpha families ------------------------------------------------------------

@dataclass
class AlphaFamily:
    """tilde alpha_n (left accumulation) and beta_n = f(alpha_n^pm) (right accumulation)."""
    params: object
    tilde: list            # StableGraph, index n >= 0
    beta: dict             # StableGraph, index n >= 1
    a_plus: StableGraph
    n_res: int
    identity_error: float
    flags: tuple = ()

    def B(self, n):
        """Graph beta_n; indices past the resolvable depth fall back to hat alpha_0^+."""
        if n <= self.n_res:
            return self.beta[n]
        return self.a_plus

    def resolved(self, n):
        return n <= self.n_res

    def alpha_curves(self, n, y_lo, y_hi, samples=65):
        """alpha_n^- and alpha_n^+ as Curves (the two arms of f^-1 beta_n near x = 0)."""
        B = self.B(n)
        return (vertex_curve(self.params, B, -1, y_lo, y_hi, samples, f"alpha_{n}^-"),
                vertex_curve(self.params, B, +1, y_lo, y_hi, samples, f"alpha_{n}^+"))

    def tilde_curve(self, n, samples=65):
        return self.tilde[n].curve(samples)

    def accumulation(self, y=0.0):
        """Horizontal gaps A+ - beta_n and tilde alpha_n - hat alpha_0^- side at height y."""
        return {n: float(self.a_plus(y) - self.beta[n](y)) for n in sorted(self.beta)}


def build_alpha(params, region, n_max=N_GRAPHS):
    if n_max < 2:
        raise DepthError("n_max must be at least 2")
    p = params
    yh = region.y_half
    tilde = [graph_tilde_alpha0(p, yh)]
    for n in range(1, n_max + 1):
        tilde.append(preimage_graph(p, tilde[-1], -1, yh, f"tilde_alpha_{n}"))
    beta = {n: preimage_graph(p, tilde[n - 1], +1, yh, f"beta_{n}") for n in range(1, n_max + 1)}
    yy = np.linspace(-yh, yh, 101)
    n_res = 1
    for n in range(2, n_max + 1):
        gap = np.min(region.right(yy) - beta[n](yy))
        step_ = np.min(beta[n](yy) - beta[n - 1](yy))
        if gap > RES_MARGIN and step_ > 0:
            n_res = n
        else:
            break
    # alpha_1^+ = tilde alpha_0: the right preimage of tilde alpha_0 is tilde alpha_0 itself
    ident = float(np.max(np.abs(beta[1](yy) - tilde[0](yy))))
    flags = () if n_res >= p.N else ("theta0_unresolved",)
    return AlphaFamily(p, tilde, beta, region.right, n_res, ident, flags)


# Theta tower ---------------------------------------------------------------

@dataclass
class ThetaTower:
    params: object
    alpha: AlphaFamily
    K: int
    extents: list      # x-extent of Theta (index 0) and Theta_k (index k + 1) on the leaf
    flags: tuple = ()

    def index(self, k):
        return self.params.xi * k + self.params.N

    def in_theta(self, x, y):
        a = self.alpha
        with np.errstate(invalid="ignore"):
            return ((a.tilde[1].compare(x, y) >= 0) & (a.tilde[0].compare(x, y) <= 0)
                    & (np.abs(y) <= a.a_plus.y1))

    def in_theta_k(self, x, y, k):
        """Membership in Theta_k; past the resolved depth only the escaping core remains."""
        X, Y = step(self.params, x, y)
        B = self.alpha.B(self.index(k))
        with np.errstate(invalid="ignore"):
            return self.in_theta(x, y) & (B.compare(X, Y) > 0)

    def widths(self):
        return [e[1] - e[0] for e in self.extents]

    def to_dict(self):
        return {"K": self.K, "xi": self.params.xi, "N": self.params.N,
                "indices": [self.index(k) for k in range(self.K + 1)],
                "extents": [list(e) for e in self.extents], "flags": list(self.flags)}


def build_theta(params, alpha, K=None, leaf=None):
    """Theta from alpha_1^-+, Theta_k from alpha_{xi k + N}^-+ for k <= K."""
    k_avail = (alpha.n_res - params.N) // params.xi if alpha.n_res >= params.N else -1
    if K is None:
        K = max(k_avail, 0)
    if K > k_avail:
        raise DepthError(f"Theta_{K} needs alpha_{params.xi * K + params.N}; "
                         f"only depth {alpha.n_res} is resolvable")
    tower = ThetaTower(params, alpha, K, [])
    if leaf is not None:
        tower.extents = [leaf_extent(leaf, alpha, 1)] + [
            leaf_extent(leaf, alpha, tower.index(k)) for k in range(K + 1)]
        w = tower.widths()
        if any(w[i + 1] >= w[i] for i in range(len(w) - 1)):
            raise GeometryError("Theta tower is not strictly nested")
    return tower


def leaf_extent(leaf, alpha, n):
    """x-coordinates where alpha_n^- and alpha_n^+ cross the leaf."""
    tl, tr = leaf_crossings(leaf, alpha, n)
    return (float(leaf.xy(tl)[0][0]), float(leaf.xy(tr)[0][0]))


def leaf_crossings(leaf, alpha, n):
    """Leaf parameters (left, right) of alpha_n^-+ crossings."""
    if n == 1:
        return _tilde_cross(leaf, alpha.tilde[1], -1), _tilde_cross(leaf, alpha.tilde[0], +1)
    B = alpha.B(n)
    g = lambda t: _beta_fun(leaf, B, t)
    return (leaf.root(g, leaf.t_zeta, _tilde_cross(leaf, alpha.tilde[1], -1)),
            leaf.root(g, leaf.t_zeta, _tilde_cross(leaf, alpha.tilde[0], +1)))


def _beta_fun(leaf, B, t):
    X, Y = leaf.fx(t)
    return X - B(np.clip(Y, B.y0, B.y1))


def _tilde_cross(leaf, G, side):
    key = (id(G), side)
    cache = leaf.__dict__.setdefault("_tilde_cache", {})
    if key not in cache:
        end = leaf.t_right if side > 0 else leaf.t_left

        def g(t):
            x, y = leaf.xy(t)
            return x - G(np.clip(y, G.y0, G.y1))
        cache[key] = leaf.root(g, leaf.t_zeta, end)
    return cache[key]


# geometry bundle -------------------------------------------------------------

@dataclass
class Geometry:
    params: object
    region: RegionR
    alpha: AlphaFamily
    theta: ThetaTower
    leaf: Leaf

    @property
    def t_zeta(self):
        return self.leaf.t_zeta

    @property
    def t_alpha1_plus(self):
        return _tilde_cross(self.leaf, self.alpha.tilde[0], +1)

    @property
    def t_alpha1_minus(self):
        return _tilde_cross(self.leaf, self.alpha.tilde[1], -1)

    def D(self, x, y):
        """Signed distance of f(z) to the right stable side; negative means f(z) left R."""
        X, Y = step(self.params, x, y)
        A = self.region.right
        return A(np.clip(Y, A.y0, A.y1)) - X

    def to_dict(self):
        return {"region": self.region.to_dict(), "theta": self.theta.to_dict(),
                "n_res": self.alpha.n_res, "leaf_length": self.leaf.length,
                "alpha_identity_error": self.alpha.identity_error,
                "s_zeta": self.leaf.s_zeta}


def build_geometry(params, problem=None):
    region = build_region(params, problem=problem)
    alpha = build_alpha(params, region)
    leaf = region._leaf
    theta = build_theta(params, alpha, leaf=leaf)
    return Geometry(params, region, alpha, theta, leaf)


# partitions ----------------------------------------------------------------

@dataclass(frozen=True)
class Piece:
    n: int
    side: str          # "-" left of zeta0, "+" right of it
    curve: Curve


def partition_curve(params, gamma, alpha, n_max=None):
    """Split a horizontal curve at its crossings with alpha_n^-+, n = 1..n_max.

    The curve is a polyline through the tangency region; each alpha_n^pm must
    meet it exactly once.
    """
    n_max = alpha.n_res if n_max is None else min(n_max, alpha.n_res)
    v = gamma.vertices
    X, Y = step(params, v[:, 0], v[:, 1])
    i0 = int(np.argmax(X))
    cuts = {}
    for n in range(1, n_max + 1):
        B = alpha.B(n)
        h = X - B(np.clip(Y, B.y0, B.y1))
        for side, idx in (("-", np.arange(i0, 0, -1)), ("+", np.arange(i0, len(v) - 1))):
            step_ = -1 if side == "-" else 1
            hs = h[idx]
            hn = h[idx + step_]
            ch = np.flatnonzero(np.sign(hs) != np.sign(hn))
            if len(ch) != 1:
                raise GeometryError(f"alpha_{n}^{side} meets the curve {len(ch)} times")
            j = idx[ch[0]]
            r = hs[ch[0]] / (hs[ch[0]] - hn[ch[0]])
            cuts[(n, side)] = (j, j + step_, r)

    def point(c):
        j, k, r = c
        return v[j] + r * (v[k] - v[j])

    pieces = []
    for side in ("-", "+"):
        for n in range(1, n_max + 1):
            if n == 1:
                continue
            c_in, c_out = cuts[(n, side)], cuts[(n - 1, side)]
            lo, hi = sorted((c_in[0], c_out[0]))
            # a cut (j, k, r) lies between v[j] and v[k]; k = j - 1 on the left side
            inner = v[lo:hi] if side == "-" else v[lo + 1:hi + 1]
            pts = np.vstack([point(c_in), inner, point(c_out)])
            pts = pts[np.argsort(pts[:, 0])]
            pieces.append(Piece(n, side, Curve.from_points(pts, "other")))
    # the core between alpha_{n_max}^- and alpha_{n_max}^+
    a, b_ = point(cuts[(n_max, "-")]), point(cuts[(n_max, "+")])
    lo, hi = cuts[(n_max, "-")][0], cuts[(n_max, "+")][0]
    core = np.vstack([a, v[lo:hi + 1], b_])
    pieces.append(Piece(n_max + 1, "core", Curve.from_points(core[np.argsort(core[:, 0])], "other")))
    return pieces


def recommend_check(geom, n, samples=257):
    """Image f^n gamma_n of the right piece: spans Theta and is C^2(b)."""
    leaf, alpha = geom.leaf, geom.alpha
    t_out = leaf_crossings(leaf, alpha, n - 1)[1]
    t_in = leaf_crossings(leaf, alpha, n)[1]
    x, y = leaf.xy(np.linspace(t_in, t_out, samples))
    for _ in range(n):
        x, y = step(geom.params, x, y)
    c = Curve.from_points(np.column_stack([x, y]), "other")
    ends = sorted([x[0], x[-1]])
    yc = np.clip(y[[0, -1]], -geom.region.y_half, geom.region.y_half)
    span_err = max(abs(ends[0] - alpha.tilde[1](yc).min()), abs(ends[1] - alpha.tilde[0](yc).max()))
    ch = c2b_check(c, geom.params.b)
    return {"n": n, "span_error": float(span_err), "max_slope": ch["max_slope"],
            "c2b": ch["pass"]}


# first-return branches ---------------------------------------------------------

@dataclass(frozen=True)
class ReturnBranch:
    tau: int
    piece: str           # "inner" (towards zeta0) or "outer" (towards alpha_1^+)
    t_lo: float
    t_hi: float
    s_lo: float          # domain is the half-open arclength interval [s_lo, s_hi)
    s_hi: float
    marked: tuple        # (x, y) of the marked point
    weight: float        # log ||Df^tau | T gamma|| at the marked point
    min_deriv: float
    max_deriv: float
    distortion: float
    image_tag: str
    flags: tuple = ()

    @property
    def length(self):
        return self.s_hi - self.s_lo

    def to_dict(self):
        return {"tau": self.tau, "piece": self.piece, "t_lo": self.t_lo, "t_hi": self.t_hi,
                "s_lo": self.s_lo, "s_hi": self.s_hi, "marked": list(self.marked),
                "weight": self.weight, "min_deriv": self.min_deriv,
                "max_deriv": self.max_deriv, "distortion": self.distortion,
                "image_tag": self.image_tag, "flags": list(self.flags)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["marked"] = tuple(d["marked"])
        d["flags"] = tuple(d.get("flags", ()))
        return cls(**d)


@dataclass
class InducedSystem:
    params: object
    branches: list
    base: tuple          # arclength interval of the base [zeta0, alpha_1^+]
    depth: int
    n_res: int
    flags: tuple = ()
    geometry: object = field(default=None, repr=False, compare=False)

    @property
    def base_length(self):
        return self.base[1] - self.base[0]

    @property
    def taus(self):
        return np.array([br.tau for br in self.branches], int)

    @property
    def lengths(self):
        return np.array([br.length for br in self.branches])

    @property
    def length_weights(self):
        """log of base length over branch length: the mean log-expansion of each branch."""
        return np.log(self.base_length / self.lengths)

    @property
    def weights(self):
        return np.array([br.weight for br in self.branches])

    def counts(self):
        S = {}
        for br in self.branches:
            S[br.tau] = S.get(br.tau, 0) + 1
        return {n: S.get(n, 0) for n in range(1, self.depth + 1)}

    def truncate(self, cutoff):
        """Branches with tau <= cutoff."""
        return [br for br in self.branches if br.tau <= cutoff]

    def to_dict(self):
        return {"params": self.params.to_dict(), "base": list(self.base), "depth": self.depth,
                "n_res": self.n_res, "flags": list(self.flags),
                "counts": {str(k): v for k, v in self.counts().items()},
                "branches": [br.to_dict() for br in self.branches]}

    @classmethod
    def from_dict(cls, d, params_cls=None):
        from .henon_core import MapParams
        params = (params_cls or MapParams).from_dict(d["params"])
        brs = [ReturnBranch.from_dict(b) for b in d["branches"]]
        return cls(params, brs, tuple(d["base"]), int(d["depth"]), int(d["n_res"]),
                   tuple(d.get("flags", ())))

    def counts_csv(self):
        lines = ["n,S"] + [f"{n},{c}" for n, c in self.counts().items()]
        return "\n".join(lines) + "\n"


def push_tangent(params, x, y, vx, vy, n):
    """Push tangent vectors n steps; returns end points, unit vectors and summed log-norms."""
    x, y = np.array(x, float), np.array(y, float)
    nv = np.hypot(vx, vy)
    vx, vy = vx / nv, vy / nv
    logn = np.zeros_like(x)
    rb = params.sqrt_b
    for _ in range(n):
        vx, vy = -2.0 * params.a * x * vx + rb * vy, params.s * rb * vx
        x, y = step(params, x, y)
        nv = np.hypot(vx, vy)
        logn += np.log(nv)
        vx, vy = vx / nv, vy / nv
    return x, y, vx, vy, logn


def _branch_samples(geom, t1, t2, tau, k):
    leaf = geom.leaf
    u = 0.5 - 0.5 * np.cos(np.linspace(0.0, math.pi, k))
    t = t1 + (t2 - t1) * (1e-9 + (1 - 2e-9) * u)
    x, y, vx, vy = leaf.xyv(t)
    X, Y, _, _, logn = push_tangent(geom.params, x, y, vx, vy, tau)
    return t, logn, np.column_stack([X, Y])


def _distortion(logn, img):
    d = np.hypot(*(img[:, None, :] - img[None, :, :]).transpose(2, 0, 1))
    dl = np.abs(logn[:, None] - logn[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(d > 0, dl / d, 0.0)
    return float(np.max(r))


def _make_branch(geom, tau, piece, t1, t2, samples, flags=()):
    leaf = geom.leaf
    s1, s2 = leaf.s_of(t1)[0], leaf.s_of(t2)[0]
    if s1 > s2:
        t1, t2, s1, s2 = t2, t1, s2, s1
    t, logn, img = _branch_samples(geom, t1, t2, tau, samples)
    tm = 0.5 * (t1 + t2)
    xm, ym = leaf.xy(tm)
    _, _, _, _, wm = push_tangent(geom.params, xm, ym, *leaf.xyv(tm)[2:], tau)
    Xm = img[len(img) // 2, 0]
    tag = "theta_left" if Xm < 0 else "theta_right"
    fl = list(flags)
    if s2 - s1 < H_MIN:
        fl.append("below_resolution")
    return ReturnBranch(int(tau), piece, float(t1), float(t2), float(s1), float(s2),
                        (float(xm[0]), float(ym[0])), float(wm[0]),
                        float(np.exp(logn.min())), float(np.exp(logn.max())),
                        _distortion(logn, img), tag, tuple(fl))


def _hole(geom, n, ta, tb, grid=65):
    """Minimum of D(f^n w) over the piece and the hole endpoints (None if no hole)."""
    leaf = geom.leaf

    def Dn(t):
        x, y = leaf.xy(t)
        for _ in range(n):
            x, y = step(geom.params, x, y)
        return geom.D(x, y)

    tt = np.linspace(ta, tb, grid)
    dd = Dn(tt)
    i = int(np.argmin(dd))
    lo, hi = tt[max(i - 1, 0)], tt[min(i + 1, grid - 1)]
    r = minimize_scalar(lambda t: float(Dn(np.array([t]))[0]), bounds=(min(lo, hi), max(lo, hi)),
                        method="bounded", options={"xatol": 1e-15})
    tm, dm = (r.x, r.fun) if r.fun < dd[i] else (tt[i], dd[i])
    if dm >= 0:
        return tm, tm, dm
    h1 = leaf.root(Dn, ta, tm)
    h2 = leaf.root(Dn, tm, tb)
    return h1, h2, dm


def trusted_depth(params, hole_minima, n_res):
    """Deepest level whose hole geometry is above the round-off floor.

    Orbits of the piece gamma_n shadow Q for about n steps, so an absolute
    error eps * |lambda_u(Q)|^(n-1) reaches D(f^n w); a hole of depth |D| has
    width ~ sqrt|D|, and we ask the induced relative error to stay below 1e-3.
    """
    _, Q = fixed_saddles(params)
    lam = abs(Q.lambda_u)
    eps = np.finfo(float).eps
    n_ok = 1
    for n in range(2, n_res + 1):
        noise = eps * lam ** (n - 1)
        if noise > 1e-3 * math.sqrt(max(abs(hole_minima[n]), noise)):
            break
        n_ok = n
    return n_ok


def first_return_branches(geom, depth=40, samples_per_branch=9):
    """Enumerate the quotient first-return branches on the right half of the leaf."""
    p = geom.params
    leaf, alpha = geom.leaf, geom.alpha
    if depth < 2:
        raise DepthError("depth must be at least 2")
    tz, t1 = leaf.t_zeta, geom.t_alpha1_plus
    tn = {1: t1}
    n_top = min(alpha.n_res, depth)
    for n in range(2, n_top + 1):
        tn[n] = leaf.root(lambda t, B=alpha.B(n): _beta_fun(leaf, B, t), tz, tn[n - 1])
    holes = {}
    cuts = {}
    for n in range(2, n_top + 1):
        h1, h2, dm = _hole(geom, n, tn[n], tn[n - 1])
        holes[n], cuts[n] = dm, (h1, h2)
    n_trust = max(trusted_depth(p, holes, n_top), min(n_top, 5))
    branches = []
    for n in range(2, n_trust + 1):
        h1, h2 = cuts[n]
        fl_out = ("boundary_alpha1",) if n == 2 else ()
        branches.append(_make_branch(geom, n, "inner", tn[n], h1, samples_per_branch))
        branches.append(_make_branch(geom, n, "outer", h2, tn[n - 1], samples_per_branch, fl_out))
    flags = ["truncated_at_depth"]
    if depth > n_trust:
        branches += _extrapolate(geom, branches, tn, n_trust, depth)
        flags.append("extrapolated_beyond_%d" % n_trust)
    base = tuple(sorted((leaf.s_zeta, float(leaf.s_of(t1)[0]))))
    sys = InducedSystem(p, branches, base, depth, alpha.n_res, tuple(flags), geom)
    sys.hole_minima = holes
    sys.t_boundaries = tn
    sys.n_trust = n_trust
    return sys


def _extrapolate(geom, branches, tn, n_top, depth, n_fit=4):
    """Geometric continuation of the branch ladder past the trusted depth."""
    leaf = geom.leaf
    by = {(b.tau, b.piece): b for b in branches}
    sz = leaf.s_zeta
    base_len = abs(leaf.s_of(tn[1])[0] - sz)
    sgn = 1.0 if leaf.s_of(tn[1])[0] > sz else -1.0
    dist = {n: abs(leaf.s_of(tn[n])[0] - sz) for n in tn}
    ks = list(range(max(3, n_top - n_fit + 1), n_top + 1))
    gmean = lambda v: float(np.exp(np.mean(np.log(v))))
    r_d = gmean([dist[n] / dist[n - 1] for n in ks])
    ratio = {pc: gmean([by[(n, pc)].length / by[(n - 1, pc)].length for n in ks])
             for pc in ("inner", "outer")}
    # marked-point weight minus length weight settles to a constant along the ladder
    off = {pc: float(np.mean([by[(n, pc)].weight - math.log(base_len / by[(n, pc)].length)
                              for n in ks])) for pc in ("inner", "outer")}
    out = []
    d_prev = dist[n_top]
    ln = {pc: by[(n_top, pc)].length for pc in ("inner", "outer")}
    for n in range(n_top + 1, depth + 1):
        d_n = d_prev * r_d
        for pc in ln:
            ln[pc] *= ratio[pc]
        spare = d_prev - d_n
        if ln["inner"] + ln["outer"] > spare:
            sc = spare / (ln["inner"] + ln["outer"])
            ln = {pc: v * sc for pc, v in ln.items()}
        for pc, lo, hi in (("inner", d_n, d_n + ln["inner"]),
                           ("outer", d_prev - ln["outer"], d_prev)):
            s_lo, s_hi = sorted((sz + sgn * lo, sz + sgn * hi))
            tl, tm, th = leaf.t_of(np.array([s_lo, 0.5 * (s_lo + s_hi), s_hi]))
            x, y = leaf.xy(tm)
            w = math.log(base_len / (s_hi - s_lo)) + off[pc]
            out.append(ReturnBranch(n, pc, float(tl), float(th), float(s_lo), float(s_hi),
                                    (float(x[0]), float(y[0])), w, math.exp(w), math.exp(w),
                                    float("nan"), by[(n_top, pc)].image_tag,
                                    ("extrapolated", "below_resolution")))
        d_prev = d_n
    return out


def branch_census(sys, n0=10):
    S = sys.counts()
    hi = sys.depth
    rates = [math.log(S[n]) / n for n in range(max(n0, 1), hi + 1) if S.get(n, 0) > 0]
    return {"S": S, "growth_rate": max(rates) if rates else -math.inf, "n0": n0}


def hyperbolicity_audit(params, sys, samples_per_branch=9, tol=0.05):
    """Check the expansion envelope and distortion on every branch; failures are collected."""
    geom = sys.geometry
    s1, s2 = params.sigma1, params.sigma2
    bad = []
    cd = []
    cd2 = []
    for i, br in enumerate(sys.branches):
        lo = (1 - tol) * s1 ** br.tau
        hi = (1 + tol) * s2 ** br.tau
        if "extrapolated" in br.flags or geom is None:
            mn, mx = br.min_deriv, br.max_deriv
        else:
            _, logn, img = _branch_samples(geom, br.t_lo, br.t_hi, br.tau, samples_per_branch)
            mn, mx = float(np.exp(logn.min())), float(np.exp(logn.max()))
            if br.tau <= 12:
                cd.append(_distortion(logn, img))
                _, logn2, img2 = _branch_samples(geom, br.t_lo, br.t_hi, br.tau,
                                                 2 * samples_per_branch - 1)
                cd2.append(_distortion(logn2, img2))
        if not (lo <= mn and mx <= hi):
            bad.append({"index": i, "tau": br.tau, "piece": br.piece,
                        "min_deriv": mn, "max_deriv": mx, "lower": lo, "upper": hi})
    c1 = max(cd) if cd else math.nan
    c2 = max(cd2) if cd2 else math.nan
    out = {"n_branches": len(sys.branches), "violations": bad, "envelope_pass": not bad,
           "C_dist": c1, "C_dist_doubled": c2,
           "distortion_stable": bool(abs(c2 - c1) <= 0.2 * c1) if cd else False}
    if geom is not None:
        out.update(_backward_and_stable_audit(geom))
    return out


def _backward_and_stable_audit(geom, n=12):
    """(P2)-style backward contraction along the leaf and stable contraction across it."""
    p = geom.params
    leaf = geom.leaf
    t = np.linspace(geom.t_alpha1_minus, geom.t_alpha1_plus, 33)
    x, y, vx, vy = leaf.xyv(t)
    # pulling the leaf back along the branch: theta -> theta - k has contracting tangents
    _, _, vx2, vy2 = leaf.branch.points_and_tangents(t, leaf.k0 - 1)
    back = float(np.max(np.hypot(vx2, vy2) / np.hypot(vx, vy)))
    # two points on a vertical segment: separation after n steps vs (C b)^(n/2)
    dz = 1e-3 * p.sqrt_b
    xa, ya = x.copy(), y.copy()
    xb, yb = x.copy(), y + dz
    worst = 0.0
    for k in range(1, n + 1):
        xa, ya = step(p, xa, ya)
        xb, yb = step(p, xb, yb)
        sep = np.hypot(xa - xb, ya - yb) / dz
        worst = max(worst, float(np.max(sep ** (2.0 / k))) / p.b)
    return {"backward_contraction": back, "stable_C": worst}


def first_return_check(geom, sys, samples=5):
    """Intermediate iterates avoid Theta; the tau-th iterate lies in it."""
    p = geom.params
    viol = []
    for i, br in enumerate(sys.branches):
        if "extrapolated" in br.flags:
            continue
        t = np.linspace(br.t_lo, br.t_hi, samples + 2)[1:-1]
        x, y = geom.leaf.xy(t)
        for k in range(1, br.tau + 1):
            x, y = step(p, x, y)
            inside = geom.theta.in_theta(x, y)
            if (k < br.tau and inside.any()) or (k == br.tau and not inside.all()):
                viol.append((i, k))
                break
    return viol


# induced map tables -----------------------------------------------------------

class InducedMap:
    """Tabulated quotient first-return map F on branches with tau <= tau_max.

    Base points are addressed by sigma, the arclength from zeta0 along the
    right half. A point z is projected to the base by matching D(z), the
    signed distance of f z to the right stable side; this glues each stable
    leaf to its mirror and follows the stable foliation to O(b).
    """

    def __init__(self, sys, tau_max=12, grid=257, base_grid=8193):
        geom = sys.geometry
        if geom is None:
            raise GeometryError("the induced map needs the geometry the system was built from")
        self.sys, self.geom = sys, geom
        leaf = geom.leaf
        p = geom.params
        tb = np.linspace(geom.t_zeta, geom.t_alpha1_plus, base_grid)
        d = geom.D(*leaf.xy(tb))
        self.d_min = float(d.min())
        key = np.sqrt(np.maximum(d - self.d_min, 0.0))
        sig = np.abs(leaf.s_of(tb) - leaf.s_zeta)
        o = np.argsort(key)
        self._key, self._sig = key[o], sig[o]
        self.base_length = float(sig.max())
        self.index = [i for i, br in enumerate(sys.branches)
                      if br.tau <= tau_max and "extrapolated" not in br.flags]
        self.tables = {}
        for i in self.index:
            br = sys.branches[i]
            s = np.linspace(br.s_lo, br.s_hi, grid)
            t = leaf.t_of(s)
            x, y, vx, vy = leaf.xyv(t)
            X1, Y1, _, _, logn = push_tangent(p, x, y, vx, vy, br.tau)
            F = self.project(X1, Y1)
            if F[-1] < F[0]:
                s, F, logn, t = s[::-1], F[::-1], logn[::-1], t[::-1]
            self.tables[i] = (s, F, logn, t)

    def project(self, x, y):
        k = np.sqrt(np.maximum(self.geom.D(x, y) - self.d_min, 0.0))
        return np.interp(k, self._key, self._sig)

    def to_base(self, s):
        """Leaf arclength on the right half -> base coordinate sigma."""
        return np.abs(np.asarray(s, float) - self.geom.leaf.s_zeta)

    def from_base(self, sigma):
        leaf = self.geom.leaf
        sgn = 1.0 if self.sys.base[1] > leaf.s_zeta + 1e-15 else -1.0
        return leaf.s_zeta + sgn * np.asarray(sigma, float)

    def pullback(self, i, sigma):
        """Leaf arclength of the point of branch i whose image has base coordinate sigma."""
        s, F, _, _ = self.tables[i]
        return np.interp(sigma, F, s)

    def forward(self, i, s_pts):
        s, F, _, _ = self.tables[i]
        o = np.argsort(s)
        return np.interp(s_pts, s[o], F[o])

    def log_deriv(self, i, s_pts):
        s, _, logn, _ = self.tables[i]
        o = np.argsort(s)
        return np.interp(s_pts, s[o], logn[o])


# slow-recurrence sets --------------------------------------------------------

@dataclass
class OmegaSets:
    """Omega_0 > Omega_1 > ... as arclength interval unions on the leaf inside Theta."""
    levels: list         # level n: (m, 2) array of [s_lo, s_hi]
    gaps: list           # (order n, s_lo, s_hi)
    resolution: float
    s_range: tuple
    flags: tuple = ()

    def nested(self):
        for a, b in zip(self.levels, self.levels[1:]):
            if not intervals_contain(a, b):
                return False
        return True


def intervals_from_mask(s, mask):
    """Runs of True samples as closed intervals between first and last sample."""
    if not mask.any():
        return np.empty((0, 2))
    m = np.concatenate([[False], mask, [False]]).astype(int)
    d = np.diff(m)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return np.column_stack([s[starts], s[ends]])


def intervals_contain(outer, inner):
    """Every interval of inner lies inside some interval of outer."""
    if len(inner) == 0:
        return True
    if len(outer) == 0:
        return False
    i = np.searchsorted(outer[:, 0], inner[:, 0], side="right") - 1
    ok = i >= 0
    ii = np.clip(i, 0, None)
    return bool(np.all(ok & (inner[:, 1] <= outer[ii, 1]) & (inner[:, 0] >= outer[ii, 0])))


def omega_sets(geom, n_max=24, n_samples=2 ** 21):
    """Omega_n on the part of the leaf inside Theta, sampled uniformly in arclength."""
    p = geom.params
    leaf, tower = geom.leaf, geom.theta
    sa = leaf.s_of(geom.t_alpha1_minus)[0]
    sb = leaf.s_of(geom.t_alpha1_plus)[0]
    s_lo, s_hi = min(sa, sb), max(sa, sb)
    s = np.linspace(s_lo, s_hi, n_samples)
    t = np.interp(s, leaf._st, leaf._tt)
    x, y = leaf.xy(t)
    alive = ~tower.in_theta_k(x, y, 0)
    levels = [intervals_from_mask(s, alive)]
    gaps = [(0, a, b) for a, b in intervals_from_mask(s, ~alive)]
    flags = set()
    for n in range(1, n_max + 1):
        with np.errstate(over="ignore", invalid="ignore"):  # escaped samples blow up
            x, y = step(p, x, y)
            ok = geom.region.contains(x, y) & ~tower.in_theta_k(x, y, n)
        if tower.index(n) > geom.alpha.n_res:
            flags.add("theta_k_core_only")
        new = alive & ok
        for a, b in intervals_from_mask(s, alive & ~new):
            gaps.append((n, a, b))
        alive = new
        levels.append(intervals_from_mask(s, alive))
        if not alive.any():
            flags.add("empty_at_resolution")
            break
    return OmegaSets(levels, gaps, float(s[1] - s[0]), (s_lo, s_hi), tuple(sorted(flags)))


def gap_fold_check(geom, order, s_lo, s_hi, samples=33):
    """Turning of f^{order+1} applied to a gap; a fold turns by more than pi/2."""
    leaf = geom.leaf
    pad = 0.5 * (s_hi - s_lo) + 1e-9
    t = leaf.t_of(np.linspace(s_lo - pad, s_hi + pad, samples))
    x, y, vx, vy = leaf.xyv(t)
    _, _, ux, uy, _ = push_tangent(geom.params, x, y, vx, vy, order + 1)
    ang = np.unwrap(np.arctan2(uy, ux))
    return float(ang.max() - ang.min())


__all__ = [
    "RegionR", "AlphaFamily", "ThetaTower", "Leaf", "Geometry", "Piece", "ReturnBranch",
    "InducedSystem", "InducedMap", "OmegaSets", "build_region", "build_alpha", "build_theta",
    "build_geometry", "partition_curve", "recommend_check", "first_return_branches",
    "branch_census", "hyperbolicity_audit", "first_return_check", "omega_sets",
    "gap_fold_check", "intervals_from_mask", "intervals_contain", "push_tangent",
    "preimage_graph", "vertex_curve", "leaf_crossings", "stable_side_slope", "grow_stable",
]
