"""Stable and unstable manifolds of the fixed saddles, tangency detection and a*(b).

Manifold branches are parameterised by theta = k + u (k integer, u in [0, 1)):
the point g^k(seg(u)) where seg is a short linear seed along the eigenvector
with geometric spacing, so that theta -> point is continuous. g is f (or f^-1)
and is replaced by its square when the relevant eigenvalue is negative. All
iterates are carried as displacements from the saddle, which keeps points
near the saddle free of cancellation error.

The precise tangency gap uses the stable side alpha0+ of the region R (the
component of f^-1 W^s(Q) near x = 1, written as a graph x = A+(y)). For a
strand w of the unstable manifold crossing x = 0, D(w) = A+(y(fw)) - x(fw)
is positive when f(w) sits inside A+ and negative when it has crossed.
The strand whose minimum of D is largest is the tangency candidate.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial import cKDTree

from .errors import (BracketError, ConvergenceError, NotFoundError,
                     ResourceError, SingularMapError)
from .henon_core import BOX, MapParams, fixed_saddles, step

H_MAX = 1e-2
H_MIN = 1e-7
ANGLE_TOL = 0.05
WINDOW_HALF_WIDTH = 0.3
WINDOW_HALF_HEIGHT = 5.0  # in units of sqrt(b)


# curves -------------------------------------------------------------------

def _turning(d):
    """Turning angles between consecutive segment vectors."""
    t1, t2 = d[:-1], d[1:]
    cross = t1[:, 0] * t2[:, 1] - t1[:, 1] * t2[:, 0]
    dot = (t1 * t2).sum(1)
    return np.abs(np.arctan2(cross, dot))


@dataclass(frozen=True)
class Curve:
    vertices: np.ndarray
    tangent: np.ndarray
    curvature: np.ndarray
    arclength: np.ndarray
    provenance: str = "other"
    theta: np.ndarray = None
    flags: tuple = ()

    @classmethod
    def from_points(cls, pts, provenance="other", theta=None, flags=()):
        pts = np.asarray(pts, float).reshape(-1, 2)
        if len(pts) > 1:
            seg = np.hypot(*np.diff(pts, axis=0).T)
            keep = np.concatenate([[True], seg > 0])
            pts = pts[keep]
            if theta is not None:
                theta = np.asarray(theta, float)[keep]
        n = len(pts)
        if n == 0:
            raise NotFoundError("empty curve")
        if n == 1:
            return cls(pts, np.array([[1.0, 0.0]]), np.zeros(1), np.zeros(1),
                       provenance, theta, tuple(flags))
        d = np.diff(pts, axis=0)
        L = np.hypot(*d.T)
        s = np.concatenate([[0.0], np.cumsum(L)])
        tan = np.empty_like(pts)
        tan[1:-1] = pts[2:] - pts[:-2]
        tan[0] = d[0]
        tan[-1] = d[-1]
        tan /= np.hypot(*tan.T)[:, None]
        kap = np.zeros(n)
        if n > 2:
            kap[1:-1] = _turning(d) / (0.5 * (L[:-1] + L[1:]))
            kap[0], kap[-1] = kap[1], kap[-2]
        return cls(pts, tan, kap, s, provenance, theta, tuple(flags))

    def __len__(self):
        return len(self.vertices)

    @property
    def x(self):
        return self.vertices[:, 0]

    @property
    def y(self):
        return self.vertices[:, 1]

    @property
    def length(self):
        return float(self.arclength[-1])

    def subset(self, mask, provenance=None):
        th = None if self.theta is None else self.theta[mask]
        return Curve.from_points(self.vertices[mask], provenance or self.provenance, th, self.flags)

    def distance_to(self, pts):
        """Distance from each point to the polyline."""
        pts = np.atleast_2d(np.asarray(pts, float))
        v = self.vertices
        if len(v) == 1:
            return np.hypot(*(pts - v[0]).T)
        tree = cKDTree(v)
        _, idx = tree.query(pts, k=min(4, len(v)))
        idx = np.atleast_2d(idx)
        best = np.full(len(pts), np.inf)
        for col in range(idx.shape[1]):
            for off in (-1, 0):
                i = np.clip(idx[:, col] + off, 0, len(v) - 2)
                a, b = v[i], v[i + 1]
                ab = b - a
                t = np.clip(((pts - a) * ab).sum(1) / np.maximum((ab * ab).sum(1), 1e-300), 0, 1)
                d = np.hypot(*(a + t[:, None] * ab - pts).T)
                best = np.minimum(best, d)
        return best

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "x", "y", "tx", "ty", "kappa"])
        for i in range(len(self)):
            w.writerow([format(float(v), ".17g") for v in
                        (self.arclength[i], *self.vertices[i], *self.tangent[i], self.curvature[i])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="\n", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        return {"provenance": self.provenance, "flags": list(self.flags),
                "s": self.arclength.tolist(), "x": self.x.tolist(), "y": self.y.tolist(),
                "tx": self.tangent[:, 0].tolist(), "ty": self.tangent[:, 1].tolist(),
                "kappa": self.curvature.tolist()}

    @classmethod
    def from_dict(cls, d):
        pts = np.column_stack([d["x"], d["y"]])
        return cls.from_points(pts, d.get("provenance", "other"), flags=tuple(d.get("flags", ())))


# manifold branches --------------------------------------------------------

class ManifoldBranch:
    """theta-parameterised branch of W^u or W^s of a fixed saddle."""

    def __init__(self, params, saddle, kind="u", sign=1, seed=1e-8):
        if kind not in ("u", "s"):
            raise ValueError("kind must be 'u' or 's'")
        if kind == "s" and params.b == 0:
            raise SingularMapError("stable manifolds need the inverse map (b > 0)")
        self.params, self.saddle, self.kind, self.sign = params, saddle, kind, sign
        lam = saddle.lambda_u if kind == "u" else saddle.lambda_s
        v = saddle.v_u if kind == "u" else saddle.v_s
        self.negative = lam < 0
        rate = abs(lam) if kind == "u" else 1.0 / abs(lam)
        self.rate = rate * rate if self.negative else rate
        self.Sx, self.Sy = saddle.location
        # the seed segment d0 -> g(d0) has length about `seed`
        d0 = sign * seed / self.rate * np.asarray(v, float)
        d1 = self._g(np.array([d0[0]]), np.array([d0[1]]))
        self.d0 = d0
        self.d1 = np.array([d1[0][0], d1[1][0]])

    def _f(self, dx, dy):
        p = self.params
        if self.kind == "u":
            return (-2.0 * p.a * self.Sx * dx - p.a * dx * dx + p.sqrt_b * dy,
                    p.s * p.sqrt_b * dx)
        dX = dy / (p.s * p.sqrt_b)
        return dX, (dx + 2.0 * p.a * self.Sx * dX + p.a * dX * dX) / p.sqrt_b

    def _g(self, dx, dy):
        dx, dy = self._f(dx, dy)
        if self.negative:
            dx, dy = self._f(dx, dy)
        return dx, dy

    def points(self, theta, k0=0):
        """Points at parameters k0 + theta; a local offset keeps full precision in theta."""
        theta = np.atleast_1d(np.asarray(theta, float))
        k = np.floor(theta).astype(int)
        u = theta - k
        k = k + int(k0)
        w = (self.rate ** u - 1.0) / (self.rate - 1.0)
        dx = self.d0[0] + (self.d1[0] - self.d0[0]) * w
        dy = self.d0[1] + (self.d1[1] - self.d0[1]) * w
        kmax = int(k.max()) if k.size else 0
        with np.errstate(over="ignore", invalid="ignore"):
            for j in range(kmax):
                sel = k > j
                if not sel.any():
                    break
                nx, ny = self._g(dx[sel], dy[sel])
                dx[sel], dy[sel] = nx, ny
                # freeze escaped points so they stay non-finite instead of overflowing further
                bad = sel & ~(np.abs(dx) < 1e6)
                dx[bad] = np.inf
        return self.Sx + dx, self.Sy + dy

    def points_and_tangents(self, theta, k0=0):
        """Points and d(point)/d(theta) at k0 + theta (unstable branches only)."""
        if self.kind != "u":
            raise NotImplementedError("tangents are only propagated along unstable branches")
        p = self.params
        theta = np.atleast_1d(np.asarray(theta, float))
        k = np.floor(theta).astype(int)
        u = theta - k
        k = k + int(k0)
        lr = math.log(self.rate)
        w = (self.rate ** u - 1.0) / (self.rate - 1.0)
        dw = lr * self.rate ** u / (self.rate - 1.0)
        ex, ey = self.d1[0] - self.d0[0], self.d1[1] - self.d0[1]
        dx, dy = self.d0[0] + ex * w, self.d0[1] + ey * w
        vx, vy = ex * dw, ey * dw
        nsub = 2 if self.negative else 1
        kmax = int(k.max()) if k.size else 0
        for j in range(kmax):
            sel = k > j
            if not sel.any():
                break
            for _ in range(nsub):
                x = self.Sx + dx[sel]
                nvx = -2.0 * p.a * x * vx[sel] + p.sqrt_b * vy[sel]
                nvy = p.s * p.sqrt_b * vx[sel]
                ndx, ndy = self._f(dx[sel], dy[sel])
                dx[sel], dy[sel], vx[sel], vy[sel] = ndx, ndy, nvx, nvy
        return self.Sx + dx, self.Sy + dy, vx, vy


def _needs_refine(pts, theta, h_max, angle_tol, sag_tol, h_min=H_MIN):
    d = np.diff(pts, axis=0)
    L = np.hypot(*d.T)
    bad = L > h_max
    if len(d) > 1:
        ang = _turning(d)
        wide = np.zeros(len(d))
        wide[:-1] = np.maximum(wide[:-1], ang)
        wide[1:] = np.maximum(wide[1:], ang)
        bad |= wide > angle_tol
        if sag_tol is not None:
            bad |= L * wide / 8.0 > sag_tol
        # below h_min the turning angle is dominated by round-off
        bad &= (L > h_min) | (L > h_max)
    bad &= np.diff(theta) > 4e-15 * np.maximum(1.0, np.abs(theta[1:]))
    bad |= ~np.isfinite(L) & (np.diff(theta) > 1e-13)
    return bad


def sample_adaptive(func, t0, t1, h_max=H_MAX, angle_tol=ANGLE_TOL, sag_tol=None,
                    n0=33, max_vertices=2_000_000, max_pass=80):
    """Adaptively sample a parameterised curve func(theta) -> (x, y) on [t0, t1]."""
    th = np.linspace(t0, t1, n0)
    x, y = func(th)
    pts = np.column_stack([x, y])
    for _ in range(max_pass):
        fin = np.isfinite(pts).all(1) & (np.abs(pts) <= 10 * BOX).all(1)
        # only refine segments that are still meaningful
        bad = _needs_refine(np.where(fin[:, None], pts, 1e9), th, h_max, angle_tol, sag_tol)
        bad &= fin[:-1] | fin[1:]
        if not bad.any():
            break
        mids = 0.5 * (th[:-1] + th[1:])[bad]
        mx, my = func(mids)
        th = np.concatenate([th, mids])
        pts = np.concatenate([pts, np.column_stack([mx, my])])
        order = np.argsort(th, kind="stable")
        th, pts = th[order], pts[order]
        if len(th) > max_vertices:
            raise ResourceError(f"vertex count {len(th)} exceeds cap {max_vertices}")
    return th, pts


def _prune(th, pts, h_min):
    keep = [0]
    for i in range(1, len(pts) - 1):
        if math.hypot(*(pts[i] - pts[keep[-1]])) >= h_min:
            keep.append(i)
    if len(pts) > 1:
        keep.append(len(pts) - 1)
    keep = np.array(keep)
    return th[keep], pts[keep]


def grow_branch(branch, arclength_budget, h_max=H_MAX, angle_tol=ANGLE_TOL,
                h_min=H_MIN, sag_tol=None, max_vertices=2_000_000, k_max=400,
                provenance=None):
    """Grow a manifold branch until the arclength budget or the box edge is reached."""
    if arclength_budget <= 0:
        raise ValueError("arclength budget must be positive")
    th_all, pts_all = np.empty(0), np.empty((0, 2))
    flags = []
    total = 0.0
    for K in range(k_max):
        th, pts = sample_adaptive(branch.points, K, K + 1, h_max, angle_tol, sag_tol,
                                  max_vertices=max_vertices)
        if K > 0:
            th, pts = th[1:], pts[1:]
        th_all = np.concatenate([th_all, th])
        pts_all = np.concatenate([pts_all, pts])
        if len(th_all) > max_vertices:
            raise ResourceError(f"vertex count {len(th_all)} exceeds cap {max_vertices}")
        out = ~(np.isfinite(pts_all).all(1) & (np.abs(pts_all) <= BOX).all(1))
        if out.any():
            cut = int(np.argmax(out))
            th_all, pts_all = th_all[:cut], pts_all[:cut]
            flags.append("escaped")
            break
        seg = np.hypot(*np.diff(pts_all, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        if total >= arclength_budget:
            keep = cum <= arclength_budget
            th_all, pts_all = th_all[keep], pts_all[keep]
            break
    else:
        flags.append("k_max_reached")
    if len(pts_all) < 2:
        flags.append("degenerate")
    th_all, pts_all = _prune(th_all, pts_all, h_min)
    tx = np.diff(pts_all[:, 0])
    if not (np.any(tx > 0) and np.any(tx < 0)):
        flags.append("no_fold")
    prov = provenance or ("unstable" if branch.kind == "u" else "stable")
    return Curve.from_points(pts_all, prov, th_all, tuple(flags))


def grow_unstable(params, saddle, arclength_budget, tol=1e-6, sign=1, **kw):
    """Grow one branch of W^u(saddle); ``tol`` is the seed length and chord tolerance."""
    br = ManifoldBranch(params, saddle, "u", sign, seed=tol)
    return grow_branch(br, arclength_budget, sag_tol=tol / 4.0, **kw)


def grow_stable(params, saddle, arclength_budget, tol=1e-6, sign=1, **kw):
    if params.b == 0:
        raise SingularMapError("grow_stable needs b > 0")
    br = ManifoldBranch(params, saddle, "s", sign, seed=tol)
    return grow_branch(br, arclength_budget, sag_tol=tol / 4.0, **kw)


def invariance_residual(params, curve):
    """Max distance from f(v) to the curve over vertices whose image lies inside the grown part."""
    x, y = step(params, curve.x, curve.y)
    img = np.column_stack([x, y])
    d = curve.distance_to(img)
    # images of the far end leave the grown piece; only test the first part
    lim = np.searchsorted(curve.arclength, curve.length / 8.0)
    return float(d[:max(lim, 1)].max())


# polyline tangency detection ----------------------------------------------

@dataclass(frozen=True)
class TangencyReport:
    location: tuple
    gap: float
    tangent_misalignment: float
    side: str
    crossings: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"location": [float(self.location[0]), float(self.location[1])],
                "gap": float(self.gap), "tangent_misalignment": float(self.tangent_misalignment),
                "side": self.side, "crossings": int(self.crossings), "details": self.details}


def _in_window(v, window):
    (cx, cy), (hw, hh) = window
    return (np.abs(v[:, 0] - cx) <= hw) & (np.abs(v[:, 1] - cy) <= hh)


def _segment_crossings(P, Q):
    """All (i, j) with segment P[i]P[i+1] crossing Q[j]Q[j+1]."""
    a, b = P[:-1], P[1:]
    c, d = Q[:-1], Q[1:]
    out = []
    for i in range(len(a)):
        r = b[i] - a[i]
        s = d - c
        den = r[0] * s[:, 1] - r[1] * s[:, 0]
        qp = c - a[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / den
            u = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / den
        hit = (den != 0) & (t >= 0) & (t < 1) & (u >= 0) & (u < 1)
        for j in np.nonzero(hit)[0]:
            out.append((i, int(j), float(t[j])))
    return out


def detect_tangency(wu, ws, window=((0.0, 0.0), (WINDOW_HALF_WIDTH, 0.05)), side=""):
    """Closest approach or crossing lens between two polylines inside a window.

    gap > 0: the curves are separated and gap is their minimum distance.
    gap < 0: the curves cross; |gap| is the largest distance from the
    unstable curve to the stable one between the first and last crossing.
    """
    mu = _in_window(wu.vertices, window)
    ms = _in_window(ws.vertices, window)
    if mu.sum() < 2 or ms.sum() < 2:
        raise NotFoundError("a curve does not meet the tangency window")

    def runs(mask):
        # pad each in-window run with one neighbour so edge segments are kept
        m = mask.copy()
        m[:-1] |= mask[1:]
        m[1:] |= mask[:-1]
        return m

    U = wu.vertices[runs(mu)]
    Ut = wu.tangent[runs(mu)]
    S = ws.vertices[runs(ms)]
    St = ws.tangent[runs(ms)]
    cr = _segment_crossings(U, S)
    dist = Curve.from_points(S).distance_to(U)
    if cr:
        i0 = min(c[0] for c in cr)
        i1 = max(c[0] for c in cr)
        k = i0 + int(np.argmax(dist[i0:i1 + 2]))
        gap = -float(dist[k])
    else:
        k = int(np.argmin(dist))
        gap = float(dist[k])
    _, j = cKDTree(S).query(U[k])
    c = abs(Ut[k, 0] * St[j, 1] - Ut[k, 1] * St[j, 0])
    mis = float(math.asin(min(1.0, c)))
    loc = tuple(0.5 * (U[k] + S[j]))
    return TangencyReport(loc, gap, mis, side, len(cr))


# stable graphs x = A(y) ------------------------------------------------------

def classify_departure(params, X, Y, center, negative=False, delta=0.05, n_max=120):
    """Side (+1 right / -1 left) on which orbits first leave a delta-strip around x = center.

    With ``negative`` the side alternates each step, which handles the saddle P
    whose unstable eigenvalue is negative.
    """
    x = np.array(X, float, copy=True)
    y = np.array(Y, float, copy=True)
    out = np.zeros(x.shape)
    done = np.zeros(x.shape, bool)
    for n in range(1, n_max + 1):
        x, y = step(params, x, y)
        d = x - center
        hit = (~done) & (np.abs(d) > delta)
        sgn = np.sign(d) * ((-1.0) ** n if negative else 1.0)
        out[hit] = sgn[hit]
        done |= hit
        if done.all():
            break
        x = np.where(done, 0.0, x)
        y = np.where(done, 0.0, y)
    return out


def bisect_graph(params, Y, lo, hi, center, negative=False, right_inside=False, iters=64):
    """Solve for the boundary x = A(Y) between the two departure classes on [lo, hi].

    ``right_inside`` says which class lies to the right of the boundary.
    """
    Y = np.atleast_1d(np.asarray(Y, float))
    lo = np.full(Y.shape, float(lo))
    hi = np.full(Y.shape, float(hi))
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        c = classify_departure(params, m, Y, center, negative)
        # right class sign: +1 if right_inside else -1
        right = c > 0 if right_inside else c < 0
        hi = np.where(right, m, hi)
        lo = np.where(right, lo, m)
    return 0.5 * (lo + hi)


@dataclass
class StableGraph:
    """A near-vertical curve stored as a Chebyshev series x = A(y) on [y0, y1]."""
    cheb: Chebyshev
    y0: float
    y1: float
    name: str = ""
    flags: tuple = ()

    def __call__(self, y):
        return self.cheb(np.asarray(y, float))

    def x_range(self):
        if not hasattr(self, "_xr"):
            v = self(np.linspace(self.y0, self.y1, 513))
            pad = 1e-9 + 1e-3 * float(v.max() - v.min())
            self._xr = (float(v.min()) - pad, float(v.max()) + pad)
        return self._xr

    def compare(self, x, y):
        """x - A(y) with y clipped to the domain; the series is only evaluated
        for points inside the graph's x-band, elsewhere the sign is already known."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        lo, hi = self.x_range()
        out = x - 0.5 * (lo + hi)
        with np.errstate(invalid="ignore"):
            near = (x >= lo) & (x <= hi)
        if near.any():
            out = np.array(out, copy=True)
            out[near] = x[near] - self(np.clip(y[near], self.y0, self.y1))
        return out

    def curve(self, n=201, provenance="alpha"):
        yy = np.linspace(self.y0, self.y1, n)
        return Curve.from_points(np.column_stack([self(yy), yy]), provenance)

    def slope_max(self):
        yy = np.linspace(self.y0, self.y1, 401)
        return float(np.max(np.abs(self.cheb.deriv()(yy))))


def fit_graph(func, y0, y1, deg=12, name=""):
    if y1 <= y0:
        y0, y1 = y0 - 1e-12, y0 + 1e-12
    cheb = Chebyshev.interpolate(lambda y: func(np.asarray(y, float)), deg, domain=[y0, y1])
    return StableGraph(cheb, y0, y1, name)


def graph_alpha_hat_minus(params, y_half, deg=12):
    """The component of W^s(Q) through Q, as x = A(y) for |y| <= y_half."""
    _, Q = fixed_saddles(params)
    qx = Q.location.x
    f = lambda y: bisect_graph(params, y, qx - 0.04, qx + 0.04, qx, right_inside=True)
    return fit_graph(f, -y_half, y_half, deg, "alpha_hat_0_minus")


def graph_alpha_hat_plus(params, y_half, deg=12):
    """The component of f^-1 W^s(Q) near x = 1 (right stable side of R)."""
    _, Q = fixed_saddles(params)
    qx = Q.location.x
    f = lambda y: bisect_graph(params, y, 0.6, 1.4, qx, right_inside=False)
    return fit_graph(f, -y_half, y_half, deg, "alpha_hat_0_plus")


def graph_tilde_alpha0(params, y_half, deg=12):
    """The component of W^s(P) through P."""
    P, _ = fixed_saddles(params)
    px = P.location.x
    f = lambda y: bisect_graph(params, y, px - 0.04, px + 0.04, px, negative=True,
                               right_inside=True)
    return fit_graph(f, -y_half, y_half, deg, "tilde_alpha_0")


# precise tangency gap -----------------------------------------------------

def side_label(params):
    if params.orientation == "preserving":
        return "W^u(Q) vs W^s(Q)"
    return "W^u(P) vs W^s(Q)"


def tangency_saddle(params):
    P, Q = fixed_saddles(params)
    return Q if params.orientation == "preserving" else P


@dataclass
class Strand:
    branch: ManifoldBranch
    th_lo: float
    th_hi: float
    th_cross: float
    y_cross: float
    d_min: float = math.nan
    th_min: float = math.nan

    def point(self, theta):
        x, y = self.branch.points(theta)
        return x, y


class TangencyProblem:
    """Everything needed to evaluate the signed tangency gap at one parameter value."""

    def __init__(self, params, budget=5.0, half_width=WINDOW_HALF_WIDTH,
                 half_height=WINDOW_HALF_HEIGHT, seed=1e-8):
        if params.b <= 0:
            raise SingularMapError("the two-dimensional tangency problem needs b > 0")
        self.params = params
        self.saddle = tangency_saddle(params)
        self.side = side_label(params)
        self.budget = budget
        self.half_width = half_width
        self.half_height = half_height * params.sqrt_b
        self.branches = [ManifoldBranch(params, self.saddle, "u", sg, seed) for sg in (1, -1)]
        self.a_plus = graph_alpha_hat_plus(params, 1.3 * params.sqrt_b)
        self._strands = None

    def D(self, x, y):
        X, Y = step(self.params, x, y)
        return self.a_plus(Y) - X

    def strands(self):
        if self._strands is not None:
            return self._strands
        out = []
        for br in self.branches:
            c = grow_branch(br, self.budget, h_max=2e-2, angle_tol=0.1)
            v, th = c.vertices, c.theta
            inwin = (np.abs(v[:, 0]) <= self.half_width) & (np.abs(v[:, 1]) <= self.half_height)
            for i in range(len(v) - 1):
                if v[i, 0] == 0 or np.sign(v[i, 0]) != np.sign(v[i + 1, 0]):
                    if not (inwin[i] and inwin[i + 1]):
                        continue
                    lo = i
                    while lo > 0 and inwin[lo - 1]:
                        lo -= 1
                    hi = i + 1
                    while hi < len(v) - 1 and inwin[hi + 1]:
                        hi += 1
                    out.append(Strand(br, th[lo], th[hi], 0.5 * (th[i] + th[i + 1]), v[i, 1]))
        self._strands = out
        return out

    def strand_min(self, st):
        fun = lambda t: float(self.D(*st.point(t))[0])
        r = minimize_scalar(fun, bounds=(st.th_lo, st.th_hi), method="bounded",
                            options={"xatol": 1e-13 * max(1.0, abs(st.th_hi)), "maxiter": 500})
        # golden search can stop at a bracket end; compare with the crossing sample
        cand = [(r.fun, r.x), (fun(st.th_cross), st.th_cross)]
        st.d_min, st.th_min = min(cand)
        return st.d_min

    def gap(self):
        sts = self.strands()
        if not sts:
            raise NotFoundError("no unstable strand crosses the tangency window")
        best = None
        for st in sts:
            self.strand_min(st)
            if best is None or st.d_min > best.d_min:
                best = st
        self.best = best
        return best.d_min

    def report(self):
        """TangencyReport for the current best strand (call gap() first)."""
        st = self.best
        p = self.params
        x, y = st.point(st.th_min)
        x, y = float(x[0]), float(y[0])
        h = 1e-6 * max(1.0, abs(st.th_min))
        xa, ya = st.point(st.th_min - h)
        xb, yb = st.point(st.th_min + h)
        tu = np.array([xb[0] - xa[0], yb[0] - ya[0]])
        tu /= np.linalg.norm(tu)
        # slope of the stable curve P0(x) = (A+(s rb x) - 1 + a x^2)/rb at x
        da = self.a_plus.cheb.deriv()(p.s * p.sqrt_b * x)
        slope = (da * p.s * p.sqrt_b + 2 * p.a * x) / p.sqrt_b
        ts = np.array([1.0, slope]) / math.hypot(1.0, slope)
        mis = math.asin(min(1.0, abs(tu[0] * ts[1] - tu[1] * ts[0])))
        det = {"d_min": st.d_min, "theta": st.th_min, "branch_sign": st.branch.sign,
               "strand_y_at_crossing": st.y_cross,
               "strands": [{"y_cross": s.y_cross, "d_min": s.d_min, "branch_sign": s.branch.sign}
                           for s in self._strands]}
        return TangencyReport((x, y), st.d_min / p.sqrt_b, mis, self.side,
                              0 if st.d_min > 0 else 2, det)


def gap_1d(a):
    """b = 0 limit: T(1) - x_Q with T(x) = 1 - a x^2; zero exactly at a = 2."""
    q = -0.5 * (1.0 + math.sqrt(1.0 + 4.0 * a))
    return (1.0 - a) - q / a


def tangency_gap(params):
    """Signed gap (positive: separated) at params.a; returns (gap, problem or None)."""
    if params.b == 0:
        return gap_1d(params.a), None
    tp = TangencyProblem(params)
    return tp.gap(), tp


def find_first_bifurcation(params_template, bracket=(1.9, 2.1), tol_a=1e-10, max_iter=200):
    """Locate a*(b) by a bracketing root search on the tangency gap.

    The gap is positive below a* (curves separated) and negative above it.
    Brent's method is bisection safeguarded by secant/inverse-quadratic steps.
    """
    lo, hi = map(float, bracket)
    trace = []

    def g(a):
        val, _ = tangency_gap(params_template.with_a(a))
        trace.append((a, val))
        return val

    g_lo, g_hi = g(lo), g(hi)
    if not (np.sign(g_lo) * np.sign(g_hi) < 0 or g_lo == 0 or g_hi == 0):
        raise BracketError(f"no sign change of the tangency gap: gap({lo})={g_lo:+.3e}, "
                           f"gap({hi})={g_hi:+.3e}")
    if params_template.b == 0:
        # one-dimensional mode: plain bisection, which also detects exact zeros
        for _ in range(max_iter):
            if hi - lo < tol_a:
                break
            m = 0.5 * (lo + hi)
            gm = g(m)
            if gm == 0:
                lo = hi = m
                break
            if np.sign(gm) == np.sign(g_lo):
                lo, g_lo = m, gm
            else:
                hi = m
        else:
            raise ConvergenceError("bisection did not converge", trace)
        a_star = 0.5 * (lo + hi)
        rep = TangencyReport((0.0, 0.0), gap_1d(a_star), 0.0, side_label(params_template), 0,
                             {"mode": "one-dimensional", "trace": trace})
        return a_star, rep
    if g_lo == 0:
        a_star = lo
    elif g_hi == 0:
        a_star = hi
    else:
        try:
            a_star = brentq(g, lo, hi, xtol=tol_a, rtol=8.9e-16, maxiter=max_iter)
        except RuntimeError as exc:
            raise ConvergenceError(f"root search failed: {exc}", trace) from exc
    tp = TangencyProblem(params_template.with_a(a_star))
    tp.gap()
    rep = tp.report()
    rep.details["trace"] = [list(t) for t in trace]
    return a_star, rep


def quadratic_signature(params, half_width=0.02, n=81):
    """Fit d(s) = alpha + beta s^2 to the vertical gap between the tangent strand and
    f^-1(alpha0+) around the closest approach, s = signed arclength from it."""
    tp = TangencyProblem(params)
    tp.gap()
    st = tp.best
    x0, _ = st.point(st.th_min)
    # theta offsets that give |x - x0| <= half_width
    h = 1e-6
    xa, _ = st.point(st.th_min + h)
    dxdt = (xa[0] - x0[0]) / h
    dt = half_width / abs(dxdt)
    th = st.th_min + np.linspace(-dt, dt, n)
    x, y = st.point(th)
    d = tp.D(x, y) / params.sqrt_b
    seg = np.hypot(np.diff(x), np.diff(y))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    s -= np.interp(0.0, np.arange(n) - (n - 1) / 2, s)
    A = np.column_stack([np.ones(n), s * s])
    coef, *_ = np.linalg.lstsq(A, d, rcond=None)
    resid = d - A @ coef
    rel = float(np.linalg.norm(resid) / np.linalg.norm(d - coef[0]))
    return {"alpha": float(coef[0]), "beta": float(coef[1]), "relative_residual": rel,
            "s": s, "d": d}


def c2b_check(curve, b):
    """Slope and curvature bounds of a C^2(b)-curve (both at most sqrt(b))."""
    t = curve.tangent
    with np.errstate(divide="ignore"):
        slope = np.where(t[:, 0] != 0, np.abs(t[:, 1] / t[:, 0]), np.inf)
    ms = float(slope.max())
    mk = float(np.abs(curve.curvature).max())
    rb = math.sqrt(b)
    return {"max_slope": ms, "max_curvature": mk, "pass": bool(ms <= rb and mk <= rb)}
