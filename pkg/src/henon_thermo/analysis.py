"""Dimension estimates and statistical checks on the induced system.

Box counting on interval unions stands in for Hausdorff dimension. The E_k
ladder gives a mass-distribution lower bound. Orbits sampled from Gibbs
measures of the induced shift feed Lyapunov, correlation and CLT estimates.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (DegenerateError, EscapeError, InvalidInputError, RefinementError)
from .henon_core import BOX, as_point, jacobian, step, unstable_direction
from .inducing import InducedMap, intervals_contain, push_tangent
from .shift_thermo import (CUTOFFS, SymbolPotential, TruncatedShift, gibbs_truncated,
                           lift_stats, pressure_at, symbols_of)


# slices and box counting -------------------------------------------------------

@dataclass
class SliceSample:
    """Closed arclength intervals approximating a slice of the invariant set."""
    intervals: np.ndarray
    depth: int = 0
    resolution: float = 0.0
    leaf_id: str = "gamma_zeta0"

    def __post_init__(self):
        iv = np.asarray(self.intervals, float).reshape(-1, 2)
        if len(iv) == 0:
            raise DegenerateError("empty slice")
        if np.any(iv[:, 1] < iv[:, 0]):
            raise InvalidInputError("interval ends must not precede starts")
        o = np.argsort(iv[:, 0], kind="stable")
        self.intervals = iv[o]

    @classmethod
    def from_points(cls, points, resolution=0.0, depth=0):
        p = np.sort(np.asarray(points, float))
        return cls(np.column_stack([p, p]), depth, resolution)

    @classmethod
    def from_omega(cls, omega, n=None):
        n = len(omega.levels) - 1 if n is None else n
        return cls(omega.levels[n], n, omega.resolution)

    @property
    def positions(self):
        return self.intervals.ravel()

    @property
    def span(self):
        return float(self.intervals[-1, 1] - self.intervals[0, 0])


def box_count(intervals, delta):
    """Number of grid boxes of side delta meeting a sorted union of intervals."""
    iv = np.asarray(intervals, float)
    lo = np.floor(iv[:, 0] / delta).astype(np.int64)
    hi = np.floor(iv[:, 1] / delta).astype(np.int64)
    hi = np.maximum.accumulate(hi)
    lo = np.maximum(lo, np.concatenate([[lo[0]], hi[:-1] + 1]))
    return int(np.sum(np.maximum(hi - lo + 1, 0)))


@dataclass
class DimensionFit:
    dimension: float
    r2: float
    scales: np.ndarray
    counts: np.ndarray
    stderr: float

    def to_dict(self):
        return {"dimension": self.dimension, "r2": self.r2, "stderr": self.stderr,
                "scales": self.scales.tolist(), "counts": self.counts.tolist()}

    def to_csv(self):
        rows = ["log_inv_delta,log_N"]
        rows += [f"{-math.log(d):.17g},{math.log(c):.17g}" for d, c in zip(self.scales, self.counts)]
        return "\n".join(rows) + "\n"


def box_dimension(sample, scales=None, n_scales=13):
    """Least-squares slope of log N(delta) against log(1/delta)."""
    if not isinstance(sample, SliceSample):
        sample = SliceSample(sample)
    if scales is None:
        top = 1e-2 * sample.span
        scales = np.geomspace(top, top * 1e-3, n_scales)
    scales = np.sort(np.asarray(scales, float))[::-1]
    if scales.size < 3 or math.log10(scales[0] / scales[-1]) < 2 - 1e-9:
        raise InvalidInputError("box counting needs at least two decades of scales")
    if sample.resolution > scales[-1]:
        raise InvalidInputError(f"sample resolution {sample.resolution:g} is coarser than "
                                f"the smallest scale {scales[-1]:g}")
    counts = np.array([box_count(sample.intervals, d) for d in scales], float)
    X, Y = -np.log(scales), np.log(counts)
    res = stats.linregress(X, Y)
    return DimensionFit(float(res.slope), float(res.rvalue ** 2), scales, counts,
                        float(res.stderr))


def cantor_intervals(depth, keep=(0.0, 2.0 / 3.0), ratio=1.0 / 3.0):
    """Level-depth intervals of a self-similar Cantor set in [0, 1]."""
    lo = np.array([0.0])
    for k in range(depth):
        lo = (lo[:, None] + np.asarray(keep)[None, :] * ratio ** k).ravel()
    lo = np.sort(lo)
    return np.column_stack([lo, lo + ratio ** depth])


# E_k ladder ------------------------------------------------------------------------

@dataclass
class CantorLadder:
    levels: list              # level k: (m, 2) arclength intervals
    removed_fraction: list    # l(E_k minus E_{k+1}) / l(E_k)
    min_length: list
    max_length: list
    rate: float               # fitted geometric length rate
    constants: dict
    rho: float
    lower_bound: float
    diam_theta0: float
    flags: tuple = ()

    def nested(self):
        return all(intervals_contain(a, b) for a, b in zip(self.levels, self.levels[1:]))

    def to_dict(self):
        return {"counts": [len(l) for l in self.levels],
                "removed_fraction": self.removed_fraction, "min_length": self.min_length,
                "max_length": self.max_length, "rate": self.rate,
                "constants": self.constants, "rho": self.rho,
                "lower_bound": self.lower_bound, "diam_theta0": self.diam_theta0,
                "nested": self.nested(), "flags": list(self.flags)}


def _golden_max(f, a, b, iters=80):
    """Vectorised golden-section search for maxima of f on [a, b] (arrays)."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c2 = b - g * (b - a)
        d2 = a + g * (b - a)
        c_new = np.where(left, c2, d)
        d_new = np.where(left, c, d2)
        fc_new = np.where(left, np.nan, fd)
        fd_new = np.where(left, fc, np.nan)
        need_c, need_d = np.isnan(fc_new), np.isnan(fd_new)
        if need_c.any():
            fc_new[need_c] = f(c_new)[need_c]
        if need_d.any():
            fd_new[need_d] = f(d_new)[need_d]
        c, d, fc, fd = c_new, d_new, fc_new, fd_new
    x = 0.5 * (a + b)
    return x, f(x)


def _bisect(f, a, b, iters=80):
    """Vectorised bisection; f(a) and f(b) must have opposite signs."""
    fa = f(a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = f(m)
        same = np.sign(fm) == np.sign(fa)
        a = np.where(same, m, a)
        fa = np.where(same, fm, fa)
        b = np.where(same, b, m)
    return 0.5 * (a + b)


def theta0_diameter(geom, n=4001):
    """Diameter of Theta_0 from its corners on the two unstable sides of Theta.

    On the lower side (the tangency leaf) Theta_0 is a sliver around zeta0;
    on the upper side it is the much wider band whose image overshoots beta_N.
    """
    p = geom.params
    B = geom.alpha.B(geom.theta.index(0))
    tl, tr = geom.t_alpha1_minus, geom.t_alpha1_plus
    corners = []
    for side in ("bottom", "top"):
        if side == "bottom":
            t = np.linspace(min(tl, tr), max(tl, tr), n)
            x, y = geom.leaf.xy(t)
        else:
            v = geom.region.top.vertices
            x0, x1 = geom.leaf.xy(np.array([tl, tr]))[0]
            sel = (v[:, 0] >= min(x0, x1)) & (v[:, 0] <= max(x0, x1))
            x, y = v[sel, 0], v[sel, 1]
            o = np.argsort(x)
            x, y = x[o], y[o]
        g = B.compare(*step(p, x, y))
        inside = np.flatnonzero(g > 0)
        if inside.size == 0:
            continue
        for i, j in ((inside[0] - 1, inside[0]), (inside[-1], inside[-1] + 1)):
            i, j = max(i, 0), min(j, len(x) - 1)
            w = 0.0 if g[j] == g[i] else g[i] / (g[i] - g[j])
            corners.append((x[i] + w * (x[j] - x[i]), y[i] + w * (y[j] - y[i])))
    if len(corners) < 2:
        raise RefinementError("Theta_0 not resolved on either side of Theta", step=0)
    c = np.array(corners)
    return float(np.max(np.hypot(*(c[:, None, :] - c[None, :, :]).transpose(2, 0, 1))))


def ek_ladder(geom, k_max=12, grid=65, k_fit=(4, 12)):
    """E_0 = the lower unstable side of Theta, E_k = E_{k-1} minus f^{-(k-1)} Theta_0.

    A point w of E_{k-1} has f^{k-1} w in Theta_0 exactly when f^k w lies to
    the right of beta_N; along each component that set is the superlevel set
    of one parabola-like bump, so it is cut out by a maximum search and two
    root solves.
    """
    p, leaf = geom.params, geom.leaf
    B = geom.alpha.B(geom.theta.index(0))

    def g_k(k):
        def g(t):
            x, y = leaf.xy(t)
            for _ in range(k):
                x, y = step(p, x, y)
            return B.compare(x, y)
        return g

    comps = np.array([[geom.t_alpha1_minus, geom.t_alpha1_plus]])
    if comps[0, 0] > comps[0, 1]:
        comps = comps[:, ::-1]
    levels_t = [comps]
    flags = set()
    for k in range(1, k_max + 1):
        g = g_k(k)
        a, b = comps[:, 0], comps[:, 1]
        u = np.linspace(0.0, 1.0, grid)
        tt = a[:, None] + (b - a)[:, None] * u[None, :]
        vals = g(tt.ravel()).reshape(tt.shape)
        i = np.argmax(vals, axis=1)
        lo = tt[np.arange(len(a)), np.maximum(i - 1, 0)]
        hi = tt[np.arange(len(a)), np.minimum(i + 1, grid - 1)]
        tm, gm = _golden_max(g, lo, hi)
        better = vals[np.arange(len(a)), i] > gm
        tm = np.where(better, tt[np.arange(len(a)), i], tm)
        gm = np.where(better, vals[np.arange(len(a)), i], gm)
        hit = gm > 0
        out = [comps[~hit]]
        if hit.any():
            ah, bh, th = a[hit], b[hit], tm[hit]
            ga, gb = g(ah), g(bh)
            # a bump reaching past an end of the component removes that end outright
            left_ok, right_ok = ga < 0, gb < 0
            c1 = np.where(left_ok, _bisect(g, np.where(left_ok, ah, th), th), ah)
            c2 = np.where(right_ok, _bisect(g, th, np.where(right_ok, bh, th)), bh)
            lefts = np.column_stack([ah, c1])[left_ok]
            rights = np.column_stack([c2, bh])[right_ok]
            out += [lefts, rights]
        comps = np.concatenate(out)
        comps = comps[np.argsort(comps[:, 0])]
        s = leaf.s_of(comps.ravel()).reshape(comps.shape)
        if np.any(np.abs(s[:, 1] - s[:, 0]) < 1e-13):
            raise RefinementError(f"E_{k} component fell below resolution", step=k)
        levels_t.append(comps)
    levels = []
    for c in levels_t:
        s = leaf.s_of(c.ravel()).reshape(c.shape)
        s = np.sort(s, axis=1)
        levels.append(s[np.argsort(s[:, 0])])
    total = [float(np.sum(l[:, 1] - l[:, 0])) for l in levels]
    removed = [1.0 - total[k + 1] / total[k] for k in range(k_max)]
    mins = [float(np.min(l[:, 1] - l[:, 0])) for l in levels]
    maxs = [float(np.max(l[:, 1] - l[:, 0])) for l in levels]
    k0, k1 = k_fit
    ks = np.arange(k0, min(k1, k_max) + 1)
    mean_len = [total[k] / len(levels[k]) for k in ks]
    rate = float(math.exp(-np.polyfit(ks, np.log(mean_len), 1)[0]))
    eps = p.epsilon
    # tightest constants for the sandwich with rates 2 -+ eps over the window [k0, k]
    lo_k = np.array([mins[k] * (2 + eps) ** k for k in ks])
    hi_k = np.array([maxs[k] * (2 - eps) ** k for k in ks])
    C_b = [float(1.0 / lo_k[: j + 1].min()) for j in range(len(ks))]
    C_N = [float(1.0 / hi_k[: j + 1].max()) for j in range(len(ks))]
    half = len(ks) // 2
    spread = lambda v: float((max(v) - min(v)) / min(v))
    diam = theta0_diameter(geom)
    C = max(removed) / diam
    rho = (2 - eps) * (1 - C * diam)
    lb = math.log(rho) / math.log(2 + eps) if rho > 0 else -math.inf
    constants = {
        "C_b": C_b[-1], "C_N": C_N[-1], "C_b_window": C_b, "C_N_window": C_N,
        "variation_C_b": spread(C_b[half:]), "variation_C_N": spread(C_N[half:]),
        "sandwich_holds": bool(np.all(lo_k * C_b[-1] >= 1 - 1e-12)
                               and np.all(hi_k * C_N[-1] <= 1 + 1e-12)),
        "per_level_low": (np.array(mins)[ks] * rate ** ks).tolist(),
        "per_level_high": (np.array(maxs)[ks] * rate ** ks).tolist(),
        "C_removed": C, "k_range": [int(ks[0]), int(ks[-1])]}
    return CantorLadder(levels, removed, mins, maxs, rate, constants, rho, lb, diam,
                        tuple(sorted(flags)))


# Lyapunov exponents ---------------------------------------------------------------

@dataclass
class LyapunovEstimate:
    value: float
    stderr: float
    n: int
    batches: int

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "batches": self.batches}


def batch_means(values, batches=20):
    v = np.asarray(values, float)
    m = v.size // batches
    if m < 1:
        raise InvalidInputError("not enough samples for batch means")
    bm = v[: m * batches].reshape(batches, m).mean(axis=1)
    return float(v.mean()), float(bm.std(ddof=1) / math.sqrt(batches))


def lyapunov_u(params, z0, n, burn_in=100, batches=20):
    """Birkhoff average of log J^u along an orbit (tangent vector renormalised each step)."""
    x, y = as_point(z0)
    for k in range(burn_in):
        x, y = step(params, x, y)
        if not (abs(x) <= BOX and abs(y) <= BOX):
            raise EscapeError(f"orbit left the box during burn-in at step {k + 1}", step=k + 1)
    v = unstable_direction(params, (x, y)).direction if params.b > 0 else np.array([1.0, 0.0])
    vx, vy = float(v[0]), float(v[1])
    rb, a, s = params.sqrt_b, params.a, params.s
    logs = np.empty(n)
    for k in range(n):
        vx, vy = -2.0 * a * x * vx + rb * vy, s * rb * vx
        nv = math.hypot(vx, vy)
        if nv == 0.0:
            raise DegenerateError(f"tangent vector vanished at step {burn_in + k + 1}")
        logs[k] = math.log(nv)
        vx, vy = vx / nv, vy / nv
        x, y = step(params, x, y)
        if not (abs(x) <= BOX and abs(y) <= BOX):
            raise EscapeError(f"orbit left the box at step {burn_in + k + 1}",
                              step=burn_in + k + 1)
    m, se = batch_means(logs, batches)
    return LyapunovEstimate(m, se, n, batches)


def branch_lyapunov(sys, include_extrapolated=False):
    """Per-branch average expansion log||Df^tau|| / tau at the marked points."""
    out = []
    for br in sys.branches:
        if "extrapolated" in br.flags and not include_extrapolated:
            continue
        out.append(br.weight / br.tau)
    return np.array(out)


# Gibbs measures and sampled orbits ---------------------------------------------------

def equilibrium_gibbs(sys, t, cutoff=CUTOFFS[-1], kind="length"):
    """Gibbs measure of -t w - P tau on the truncation, P the root at this cutoff."""
    ss = symbols_of(sys, kind)
    P = pressure_at(ss, t, (cutoff,), kind, check_tail=False).P
    pot = SymbolPotential(-t * ss.weights, ss.taus)
    shift = TruncatedShift.from_potential(pot.shifted(P), cutoff)
    return gibbs_truncated(shift), P


def dimension_of_measure(g, sys, kind="length"):
    """dim^u = h / lambda^u of the lifted measure."""
    ss = symbols_of(sys, kind)
    w = ss.weights[g.alphabet]
    ls = lift_stats(g, phi_bar=w)
    lam = ls["integral_lifted"]
    if not lam > 0:
        raise InvalidInputError(f"unstable exponent must be positive, got {lam}")
    return {"dimension": ls["entropy_lifted"] / lam, "entropy": ls["entropy_lifted"],
            "lambda_u": lam, "mean_tau": ls["mean_tau"]}


@dataclass
class GibbsOrbit:
    points: np.ndarray        # (n, 2)
    log_ju: np.ndarray        # log J^u at each point
    symbols: np.ndarray       # branch indices of the segments
    taus: np.ndarray
    weights: np.ndarray       # sampling distribution over the symbol alphabet
    alphabet: np.ndarray
    alphabet_taus: np.ndarray
    seed: int

    @property
    def mean_tau(self):
        return float(self.weights @ self.alphabet_taus)

    def lyapunov(self, batches=20):
        m, se = batch_means(self.log_ju, batches)
        return LyapunovEstimate(m, se, len(self.log_ju), batches)


def sample_gibbs_orbit(sys, g, length, seed=0, depth=8, induced_map=None, tau_max=12):
    """Orbit of the lifted Gibbs measure, built from i.i.d. symbols.

    Each segment starts at the point of its branch coded by the next
    ``depth`` symbols (a uniform base point pulled back through them) and runs
    for tau steps along the leaf's forward orbit.
    """
    im = induced_map or InducedMap(sys, tau_max=tau_max)
    allowed = {i for i in im.index}
    alph = np.asarray(g.alphabet)
    keep = np.array([a in allowed for a in alph])
    if not keep.any():
        raise DegenerateError("no tabulated branch carries Gibbs mass")
    symbols_all = alph[keep]
    w = g.weights[keep] / g.weights[keep].sum()
    taus_all = np.array([sys.branches[i].tau for i in symbols_all])
    rng = np.random.default_rng(seed)
    mean_tau = float(w @ taus_all)
    n_seg = int(math.ceil(length / mean_tau * 1.1)) + depth + 16
    while True:
        code = rng.choice(len(symbols_all), size=n_seg + depth, p=w)
        if taus_all[code[:n_seg]].sum() >= length:
            break
        n_seg *= 2
    u = rng.random(n_seg)
    sigma = u * im.base_length
    # pull back through code[j + depth - 1], ..., code[j]
    for m in range(depth - 1, -1, -1):
        c = code[m: m + n_seg]
        s = np.empty(n_seg)
        for k, i in enumerate(symbols_all):
            sel = c == k
            if sel.any():
                s[sel] = im.pullback(i, sigma[sel])
        sigma = im.to_base(s) if m > 0 else s
    s0 = sigma
    syms = code[:n_seg]
    taus = taus_all[syms]
    cum = np.cumsum(taus)
    n_seg = int(np.searchsorted(cum, length) + 1)
    syms, taus, s0 = syms[:n_seg], taus[:n_seg], s0[:n_seg]
    leaf = sys.geometry.leaf
    x, y, vx, vy = leaf.xyv(leaf.t_of(s0))
    nv = np.hypot(vx, vy)
    vx, vy = vx / nv, vy / nv
    T = int(taus.max())
    X = np.full((n_seg, T), np.nan)
    Y = np.full((n_seg, T), np.nan)
    L = np.full((n_seg, T), np.nan)
    p = sys.params
    rb = p.sqrt_b
    for k in range(T):
        X[:, k], Y[:, k] = x, y
        vx, vy = -2.0 * p.a * x * vx + rb * vy, p.s * rb * vx
        nv = np.hypot(vx, vy)
        L[:, k] = np.log(nv)
        vx, vy = vx / nv, vy / nv
        x, y = step(p, x, y)
    mask = np.arange(T)[None, :] < taus[:, None]
    pts = np.column_stack([X[mask], Y[mask]])[:length]
    logj = L[mask][:length]
    return GibbsOrbit(pts, logj, symbols_all[syms], taus, w, symbols_all, taus_all, int(seed))


# observables -------------------------------------------------------------------------

def observable_x(orbit):
    return np.asarray(orbit.points)[:, 0].copy()


def observable_fold_distance(orbit, zeta0):
    """|z - zeta0|^(1/2): Holder but not Lipschitz at the tangency point."""
    P = np.asarray(orbit.points)
    return np.sqrt(np.hypot(P[:, 0] - zeta0[0], P[:, 1] - zeta0[1]))


def observable_coboundary(values):
    """psi o f - psi along an orbit, for psi given by its values on the orbit."""
    v = np.asarray(values, float)
    return v[1:] - v[:-1]


OBSERVABLES = {
    "x": {"holder": 1.0, "tag": "x-coordinate"},
    "fold_distance": {"holder": 0.5, "tag": "|z - zeta0|^(1/2)"},
    "coboundary": {"holder": 1.0, "tag": "x o f - x"},
}


# correlations and CLT -----------------------------------------------------------------

@dataclass
class StatReport:
    observable: dict
    lags: np.ndarray = field(default_factory=lambda: np.array([], int))
    acf: np.ndarray = field(default_factory=lambda: np.array([]))
    rate: float = math.nan
    rate_ci: tuple = (math.nan, math.nan)
    r2: float = math.nan
    fit_lags: np.ndarray = field(default_factory=lambda: np.array([], int))
    noise_floor: float = math.nan
    n: int = 0
    clt: dict = field(default_factory=dict)
    envelope: np.ndarray = field(default_factory=lambda: np.array([]))

    def to_dict(self):
        return {"observable": self.observable, "lags": np.asarray(self.lags).tolist(),
                "acf": np.asarray(self.acf).tolist(), "rate": self.rate,
                "rate_ci": list(self.rate_ci), "r2": self.r2,
                "fit_lags": np.asarray(self.fit_lags).tolist(),
                "envelope": np.asarray(self.envelope).tolist(),
                "noise_floor": self.noise_floor, "n": self.n, "clt": self.clt}

    def acf_csv(self):
        rows = ["lag,acf"] + [f"{int(l)},{a:.17g}" for l, a in zip(self.lags, self.acf)]
        return "\n".join(rows) + "\n"


def autocorrelation(values, max_lag):
    """Normalised autocorrelation by FFT, lags 0..max_lag."""
    v = np.asarray(values, float)
    v = v - v.mean()
    var = float(v @ v)
    if not var > 0:
        raise DegenerateError("observable has zero variance")
    n = v.size
    m = 1 << int(math.ceil(math.log2(2 * n)))
    F = np.fft.rfft(v, m)
    ac = np.fft.irfft(F * np.conj(F), m)[: max_lag + 1]
    return ac / ac[0]


def correlation_decay(values, lags=range(1, 31), observable=None, min_points=3):
    """ACF at the given lags and an exponential bound |ACF(n)| <= A r^n.

    The fit is made to the smallest non-increasing majorant of |ACF| (the
    bound is an envelope, and even/odd lags can alternate in size), over the
    leading run of lags whose majorant clears the 3/sqrt(n) noise floor.
    The confidence interval reflects sampling noise only (Bartlett variances
    of the ACF), so it narrows like 1/sqrt(n).
    """
    lags = np.asarray(list(lags), int)
    v = np.asarray(values, float)
    if v.size < 100 * lags.max():
        raise InvalidInputError("orbit must be at least 100 times the largest lag")
    ac = autocorrelation(v, int(lags.max()))
    vals = ac[lags]
    floor = 3.0 / math.sqrt(v.size)
    env = np.maximum.accumulate(np.abs(vals)[::-1])[::-1]
    above = env > floor
    run = int(np.argmin(above)) if not above.all() else above.size
    rep = StatReport(observable or {}, lags, vals, n=v.size, noise_floor=floor, envelope=env)
    fl = lags[:run]
    rep.fit_lags = fl
    if run >= min_points:
        res = stats.linregress(fl, np.log(env[:run]))
        rep.rate = math.exp(res.slope)
        rep.r2 = float(res.rvalue ** 2)
        # sampling error: Bartlett variances of the ACF, carried through the slope
        full = ac[1:]
        se = np.sqrt((1.0 + 2.0 * np.concatenate([[0.0], np.cumsum(full ** 2)[:-1]])) / v.size)
        se_log = se[fl - 1] / env[:run]
        dx = fl - fl.mean()
        half = 1.96 * math.sqrt(float(np.sum(dx ** 2 * se_log ** 2))) / float(np.sum(dx ** 2))
        rep.rate_ci = (math.exp(res.slope - half), math.exp(res.slope + half))
    elif run >= 1:
        # decay too fast to resolve more than a couple of lags: report a bound only
        rep.rate = float(env[run - 1] ** (1.0 / fl[-1]))
        rep.rate_ci = (0.0, float(floor ** (1.0 / (fl[-1] + 1))))
    return rep


def clt_test(values, n_block, n_samples, center=True):
    """KS test of normalised block sums against N(0, sigma_hat)."""
    v = np.asarray(values, float)
    if n_block * n_samples > v.size:
        raise InvalidInputError("n_block * n_samples exceeds the orbit length")
    if n_block < 1 or n_samples < 2:
        raise InvalidInputError("need n_block >= 1 and n_samples >= 2")
    v = v[: n_block * n_samples]
    if center:
        v = v - v.mean()
    S = v.reshape(n_samples, n_block).sum(axis=1) / math.sqrt(n_block)
    sig = float(S.std(ddof=1))
    if not sig > 0:
        raise DegenerateError("block sums have zero variance")
    ks = stats.kstest(S, "norm", args=(0.0, sig))
    return {"n_block": int(n_block), "n_samples": int(n_samples), "sigma": sig,
            "ks": float(ks.statistic), "p_value": float(ks.pvalue)}


def clt_control(seeds=100, n_block=256, n_samples=500):
    """Fraction of seeded i.i.d. +-1 runs that pass the KS test at p > 0.01."""
    ok = 0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        v = rng.choice([-1.0, 1.0], size=n_block * n_samples)
        ok += clt_test(v, n_block, n_samples)["p_value"] > 0.01
    return ok / seeds


__all__ = [
    "SliceSample", "DimensionFit", "CantorLadder", "LyapunovEstimate", "GibbsOrbit",
    "StatReport", "theta0_diameter", "box_count", "box_dimension", "cantor_intervals", "ek_ladder",
    "lyapunov_u", "branch_lyapunov", "batch_means", "equilibrium_gibbs",
    "dimension_of_measure", "sample_gibbs_orbit", "observable_x", "observable_fold_distance",
    "observable_coboundary", "OBSERVABLES", "autocorrelation", "correlation_decay",
    "clt_test", "clt_control",
]
