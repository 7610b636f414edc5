"""Thermodynamic formalism on the induced full shift.

Symbols are return branches. A symbol carries a return time tau and a weight
w (its log-expansion), and the induced potential of phi_t = -t log J^u is
-t w. Finite truncations keep the symbols with tau <= cutoff; all pressures
are computed on those and extrapolated in the cutoff.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import (BracketError, ConvergenceError, DegenerateError, DepthError,
                     DivergenceError, InvalidInputError, TailError)

CUTOFFS = (10, 15, 20, 25)


# symbol data -----------------------------------------------------------------

@dataclass(frozen=True)
class SymbolSystem:
    """Minimal countable-alphabet data: per-symbol weight, return time and length."""
    weights: np.ndarray
    taus: np.ndarray
    lengths: np.ndarray = None

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        t = np.asarray(self.taus, int)
        if w.shape != t.shape:
            raise InvalidInputError("weights and taus must have the same length")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "taus", t)
        if self.lengths is not None:
            object.__setattr__(self, "lengths", np.asarray(self.lengths, float))

    def counts(self):
        if self.taus.size == 0:
            return {}
        return {n: int(np.sum(self.taus == n)) for n in range(1, int(self.taus.max()) + 1)}


def symbols_of(sys, kind="length"):
    """SymbolSystem view of an InducedSystem (or pass a SymbolSystem through).

    kind="length" uses log(base length / branch length), the mean log-expansion
    of the quotient return map over the branch; kind="marked" uses the
    tangent expansion at the marked point.
    """
    if isinstance(sys, SymbolSystem):
        return sys
    if kind == "length":
        w = sys.length_weights
    elif kind == "marked":
        w = sys.weights
    else:
        raise InvalidInputError(f"unknown weight kind {kind!r}")
    return SymbolSystem(w, sys.taus, sys.lengths)


@dataclass(frozen=True)
class SymbolPotential:
    """Depth-1 potential with optional depth-2 corrections c[i, j] (i followed by j)."""
    values: np.ndarray
    tau: np.ndarray
    corrections: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("potential values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tau", np.asarray(self.tau, int))
        if self.corrections is not None:
            c = np.asarray(self.corrections, float)
            if c.shape != (v.size, v.size) or not np.all(np.isfinite(c)):
                raise InvalidInputError("corrections must be a finite k x k matrix")
            object.__setattr__(self, "corrections", c)

    @classmethod
    def from_system(cls, sys, t, kind="length"):
        ss = symbols_of(sys, kind)
        return cls(-t * ss.weights, ss.taus)

    @property
    def depth(self):
        return 1 if self.corrections is None else 2

    def shifted(self, c):
        """Phi - c tau."""
        return SymbolPotential(self.values - c * self.tau, self.tau, self.corrections)

    def restrict(self, idx):
        idx = np.asarray(idx, int)
        corr = None if self.corrections is None else self.corrections[np.ix_(idx, idx)]
        return SymbolPotential(self.values[idx], self.tau[idx], corr)

    def matrix_log(self):
        """log of the transfer matrix M[i, j] = exp(Phi_i + c_ij)."""
        k = self.values.size
        L = np.repeat(self.values[:, None], k, axis=1)
        if self.corrections is not None:
            L = L + self.corrections
        return L


@dataclass(frozen=True)
class TruncatedShift:
    """Full shift on the symbols with tau <= cutoff."""
    alphabet: np.ndarray
    potential: SymbolPotential
    cutoff: int = None

    def __post_init__(self):
        if len(self.alphabet) == 0:
            raise DegenerateError("empty alphabet")

    @classmethod
    def from_potential(cls, potential, cutoff=None):
        idx = np.arange(potential.values.size) if cutoff is None else \
            np.flatnonzero(potential.tau <= cutoff)
        return cls(idx, potential.restrict(idx), cutoff)

    @classmethod
    def from_system(cls, sys, t, cutoff=None, kind="length"):
        return cls.from_potential(SymbolPotential.from_system(sys, t, kind), cutoff)

    @property
    def size(self):
        return len(self.alphabet)


# Gurevich pressure -------------------------------------------------------------

def gurevich_pressure(shift, n_max=12, symbol=0):
    """Growth rate of weighted periodic words through a fixed symbol.

    Z_n = (M^n)_{bb}; the trace records log(Z_n / Z_{n-1}), which is constant
    for locally constant potentials, and the last entry is returned.
    """
    if shift.size == 0:
        raise DegenerateError("empty alphabet")
    if n_max < 2:
        raise DepthError("n_max must be at least 2")
    L = shift.potential.matrix_log()
    shift_ = L.max()
    M = np.exp(L - shift_)
    b = int(symbol)
    row = np.zeros(shift.size)
    row[b] = 1.0
    log_scale = 0.0
    logZ = []
    for n in range(1, n_max + 1):
        row = row @ M
        m = row.max()
        if not m > 0:
            raise DegenerateError("transfer matrix iteration underflowed")
        row = row / m
        log_scale += math.log(m)
        z = row[b]
        logZ.append(log_scale + math.log(z) + n * shift_ if z > 0 else -math.inf)
    trace = [logZ[i] - logZ[i - 1] for i in range(1, len(logZ))]
    return {"pressure": trace[-1], "trace": trace,
            "raw": [lz / (i + 1) for i, lz in enumerate(logZ)]}


# Gibbs measures on truncations ----------------------------------------------------

@dataclass
class GibbsResult:
    weights: np.ndarray        # stationary symbol marginals
    pressure: float
    gibbs_constant: float
    entropy: float
    mean_tau: float
    transition: np.ndarray = field(repr=False)
    potential: SymbolPotential = field(repr=False, default=None)
    alphabet: np.ndarray = field(repr=False, default=None)

    def cylinder(self, word):
        w = list(word)
        m = self.weights[w[0]]
        for a, b in zip(w, w[1:]):
            m *= self.transition[a, b]
        return m

    def to_dict(self):
        return {"weights": self.weights.tolist(), "pressure": self.pressure,
                "gibbs_constant": self.gibbs_constant, "entropy": self.entropy,
                "mean_tau": self.mean_tau}


def gibbs_truncated(shift, max_iter=10000, tol=1e-15, depth=3):
    """Leading eigen-data of the transfer matrix and the associated Markov measure."""
    pot = shift.potential
    L = pot.matrix_log()
    s = L.max()
    M = np.exp(L - s)
    k = shift.size
    r = np.ones(k) / k
    l = np.ones(k) / k
    lam = None
    for it in range(max_iter):
        r2 = M @ r
        l2 = l @ M
        lam2 = r2.sum() / r.sum()
        r2 /= r2.sum()
        l2 /= l2.sum()
        done = np.max(np.abs(r2 - r)) < tol and np.max(np.abs(l2 - l)) < tol
        r, l = r2, l2
        if done:
            lam = lam2
            break
    if lam is None:
        raise ConvergenceError(f"transfer operator iteration did not converge in {max_iter} steps")
    lam = float((M @ r).sum() / r.sum())
    P = math.log(lam) + s
    pi = l * r
    pi /= pi.sum()
    T = M * r[None, :] / (lam * r[:, None])
    T /= T.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -float(np.sum(pi[:, None] * np.where(T > 0, T * np.log(T), 0.0)))
    if not math.isfinite(h):
        raise DegenerateError("entropy is not finite")
    mean_tau = float(pi @ pot.tau)
    g = GibbsResult(pi, P, 1.0, h, mean_tau, T, pot, np.asarray(shift.alphabet))
    g.gibbs_constant = _gibbs_constant(g, depth)
    return g


def _gibbs_constant(g, depth, max_words=200000):
    """Largest ratio between nu[w] and exp(S_n Phi - nP) over words of length <= depth.

    For depth-2 potentials S_n Phi depends on the symbol after the word, so
    it is bracketed by the row extremes of the log transfer matrix.
    """
    L = g.potential.matrix_log()
    k = len(g.weights)
    lo_next, hi_next = L.min(axis=1), L.max(axis=1)
    logT = np.log(g.transition)
    last = np.arange(k)
    lm = np.log(g.weights)
    acc = np.zeros(k)
    C = 1.0
    for n in range(1, depth + 1):
        if n > 1:
            if last.size * k > max_words:
                break
            rep = np.repeat(np.arange(last.size), k)
            nxt = np.tile(np.arange(k), last.size)
            lm = lm[rep] + logT[last[rep], nxt]
            acc = acc[rep] + L[last[rep], nxt]
            last = nxt
        lo = acc + lo_next[last] - n * g.pressure
        hi = acc + hi_next[last] - n * g.pressure
        C = max(C, float(np.max(np.exp(lm - lo))), float(np.max(np.exp(hi - lm))))
    return C


def lift_stats(g, sys=None, phi_bar=None, tail_levels=5):
    """Abramov and Kac: entropy and potential integral of the lifted measure."""
    tau = g.potential.tau if sys is None else symbols_of(sys).taus[g.alphabet]
    if not np.all(np.isfinite(tau)) or g.mean_tau <= 0:
        raise TailError("mean return time is not finite")
    if tau.size > tail_levels and tau.max() > tau.min() + tail_levels:
        top = tau > tau.max() - tail_levels
        mass = float(np.sum(g.weights[top] * tau[top]))
        if mass > 0.5:
            raise TailError("return-time mass concentrates at the truncation level")
    mt = float(g.weights @ tau)
    phi = g.potential.values if phi_bar is None else np.asarray(phi_bar, float)
    return {"entropy_lifted": g.entropy / mt, "integral_lifted": float(g.weights @ phi) / mt,
            "mean_tau": mt}


# pressure of the original system --------------------------------------------------

def _level_sums(w, tau, t, c):
    v = -t * w - c * tau
    levels = np.unique(tau)
    return levels, np.array([logsumexp(v[tau == n]) for n in levels])


def _solve_c(values, tau, tol=1e-14):
    """c with log sum exp(values - c tau) = 0."""
    F = lambda c: float(logsumexp(values - c * tau))
    lo, hi = -1.0, 1.0
    for _ in range(200):
        if F(lo) > 0:
            break
        lo -= 2.0 * (hi - lo)
    for _ in range(200):
        if F(hi) < 0:
            break
        hi += 2.0 * (hi - lo)
    if not (F(lo) > 0 > F(hi)):
        raise BracketError("could not bracket the pressure root in c")
    return brentq(F, lo, hi, xtol=tol, rtol=8.9e-16, maxiter=500)


def shift_root(potential):
    """The c for which the Gurevich pressure of Phi - c tau vanishes (depth-1 Phi).

    On a full shift with a locally constant potential the Gurevich pressure
    is log sum exp(Phi_i), so the condition is one equation in c.
    """
    if potential.corrections is not None:
        raise InvalidInputError("shift_root needs a depth-1 potential")
    if potential.values.size == 0:
        raise DegenerateError("empty alphabet")
    if np.any(potential.tau < 1):
        raise InvalidInputError("return times must be positive")
    return _solve_c(potential.values, potential.tau)


@dataclass
class PressurePoint:
    t: float
    P: float
    per_cutoff: dict
    residual: float
    extrapolated: bool

    def to_dict(self):
        return {"t": self.t, "P": self.P, "residual": self.residual,
                "extrapolated": self.extrapolated,
                "per_cutoff": {str(k): v for k, v in self.per_cutoff.items()}}


def pressure_at(sys, t, cutoffs=CUTOFFS, kind="length", check_tail=True):
    """P(t) from the zero in c of the Gurevich pressure of -t w - c tau, per cutoff."""
    t = float(t)
    if not math.isfinite(t):
        raise InvalidInputError("t must be finite")
    if t <= -1:
        raise InvalidInputError("t <= -1 is refused: equilibrium states need not be unique there")
    ss = symbols_of(sys, kind)
    cutoffs = sorted(int(c) for c in cutoffs)
    per = {}
    for cut in cutoffs:
        m = ss.taus <= cut
        if not m.any():
            raise DegenerateError(f"no branches with tau <= {cut}")
        per[cut] = _solve_c(-t * ss.weights[m], ss.taus[m])
    vals = [per[c] for c in cutoffs]
    P, extra = vals[-1], False
    if len(vals) >= 3:
        d1, d2 = vals[-2] - vals[-3], vals[-1] - vals[-2]
        if d1 != 0 and 0 < d2 / d1 < 1:
            r = d2 / d1
            P, extra = vals[-1] + d2 * r / (1 - r), True
    if check_tail:
        levels, sums = _level_sums(ss.weights, ss.taus, t, P)
        tail = sums[levels > max(levels.max() - 10, levels.min())]
        if tail.size >= 3 and np.polyfit(np.arange(tail.size), tail, 1)[0] >= 0:
            c0 = c0_bound(ss, t, sys_params(sys))
            raise DivergenceError(f"tail sums do not decay at t={t}, c={P} (c0(t) = {c0})")
    residual = abs(float(logsumexp(-t * ss.weights - P * ss.taus)))
    return PressurePoint(t, float(P), per, residual, extra)


def sys_params(sys):
    return getattr(sys, "params", None)


@dataclass
class PressureCurve:
    samples: list                 # PressurePoint
    t_u: float = math.nan
    bracket: tuple = ()
    root_residual: float = math.nan
    lambda_u_at_root: float = math.nan
    t_minus: float = math.nan
    t_plus: float = math.nan
    settings: dict = field(default_factory=dict)
    system: object = field(default=None, repr=False, compare=False)

    @property
    def t(self):
        return np.array([s.t for s in self.samples])

    @property
    def P(self):
        return np.array([s.P for s in self.samples])

    def second_differences(self):
        t, P = self.t, self.P
        if len(t) < 3:
            return np.array([])
        h1, h2 = np.diff(t)[:-1], np.diff(t)[1:]
        return 2 * (P[2:] * h1 - P[1:-1] * (h1 + h2) + P[:-2] * h2) / (h1 * h2 * (h1 + h2)) \
            * (0.5 * (h1 + h2)) ** 2

    def is_convex(self, tol=1e-8):
        d = self.second_differences()
        return bool(np.all(d >= -tol))

    def to_csv(self):
        lines = ["t,P,residual"]
        for s in self.samples:
            lines.append(f"{s.t:.17g},{s.P:.17g},{s.residual:.17g}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {"samples": [s.to_dict() for s in self.samples], "t_u": self.t_u,
                "bracket": list(self.bracket), "root_residual": self.root_residual,
                "lambda_u_at_root": self.lambda_u_at_root, "t_minus": self.t_minus,
                "t_plus": self.t_plus, "settings": self.settings,
                "convex": self.is_convex()}


def pressure_curve(sys, t_grid, cutoffs=CUTOFFS, kind="length", jobs=1, root=True,
                   eps=None):
    """Sample P on t_grid, then locate t^u and evaluate the interval (t_-, t_+)."""
    t_grid = [float(t) for t in t_grid]
    run = lambda t: pressure_at(sys, t, cutoffs, kind)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as ex:
            samples = list(ex.map(run, t_grid))
    else:
        samples = [run(t) for t in t_grid]
    curve = PressureCurve(samples, settings={"cutoffs": list(cutoffs), "kind": kind,
                                             "t_grid": t_grid}, system=sys)
    if root:
        t_u_root(curve)
        curve.lambda_u_at_root = kac_lyapunov(sys, curve.t_u, cutoffs[-1], kind)
        e = eps if eps is not None else getattr(sys_params(sys), "epsilon", None)
        if e is not None:
            curve.t_minus, curve.t_plus = t_interval(curve.t_u, curve.lambda_u_at_root, e)
    return curve


def t_u_root(curve, tol=1e-12):
    """Zero of P in (0, 1) by bisection with fresh pressure solves."""
    sys = curve.system
    st = curve.settings
    P = lambda t: pressure_at(sys, t, st.get("cutoffs", CUTOFFS), st.get("kind", "length")).P
    lo, hi = 0.0, 1.0
    p_lo, p_hi = P(lo), P(hi)
    if not (p_lo > 0 > p_hi):
        raise BracketError(f"pressure does not change sign on [0, 1]: P(0)={p_lo}, P(1)={p_hi}")
    # start from the sampled sign change when one is available
    ts, Ps = curve.t, curve.P
    for a, b, pa, pb in zip(ts, ts[1:], Ps, Ps[1:]):
        if 0 <= a and b <= 1 and pa > 0 > pb:
            lo, hi = a, b
    while hi - lo > tol:
        m = 0.5 * (lo + hi)
        pm = P(m)
        if pm == 0:
            lo = hi = m
            break
        if pm > 0:
            lo = m
        else:
            hi = m
    curve.t_u = 0.5 * (lo + hi)
    curve.bracket = (lo, hi)
    curve.root_residual = abs(P(curve.t_u))
    return curve.t_u


def kac_lyapunov(sys, t, cutoff=CUTOFFS[-1], kind="length"):
    """lambda^u of the lifted Gibbs measure at t: nu(w) / nu(tau)."""
    ss = symbols_of(sys, kind)
    pt = pressure_at(ss, t, (cutoff,), kind, check_tail=False)
    m = ss.taus <= cutoff
    v = -t * ss.weights[m] - pt.P * ss.taus[m]
    nu = np.exp(v - logsumexp(v))
    return float(nu @ ss.weights[m] / (nu @ ss.taus[m]))


def t_interval(t_u, lambda_u, eps):
    """Endpoints t_- < 0 < t_+ built from t^u, lambda^u(mu_{t^u}) and eps."""
    num = t_u * lambda_u
    d_plus = lambda_u - math.log(2.0 - eps) + math.sqrt(eps)
    d_minus = lambda_u - math.log(4.0 + eps) - math.sqrt(eps)
    if abs(d_plus) < 1e-14 or abs(d_minus) < 1e-14:
        raise DegenerateError("vanishing denominator in the interval formula")
    return num / d_minus, num / d_plus


# tails --------------------------------------------------------------------------

def c0_bound(ss, t, params=None, n0=10):
    """c0(t) = t log sigma - limsup (1/n) log S(n); sigma_1 for t >= 0, sigma_2 below."""
    eps = getattr(params, "epsilon", 0.5)
    counts = ss.counts()
    rates = [math.log(c) / n for n, c in counts.items() if c > 0 and n >= n0]
    growth = rates[-1] if rates else 0.0
    sigma = (2.0 - eps) if t >= 0 else (4.0 + eps)
    return t * math.log(sigma) - growth


def tail_sum(sys, t, c, window=10):
    """Level sums of T_{t,c} = sum_J exp(c tau(J)) l(J)^t and a convergence verdict."""
    ss = symbols_of(sys)
    if ss.lengths is None:
        raise InvalidInputError("branch lengths are needed for the tail sum")
    levels = np.unique(ss.taus)
    sums = np.array([float(np.sum(np.exp(c * n) * ss.lengths[ss.taus == n] ** t))
                     for n in levels])
    last = np.log(sums[-window:])
    slope = float(np.polyfit(levels[-window:], last, 1)[0]) if len(last) >= 3 else math.nan
    if not math.isfinite(slope):
        verdict = "inconclusive"
    elif slope < -1e-3:
        verdict = "convergent"
    elif slope > 1e-3:
        verdict = "divergent"
    else:
        verdict = "inconclusive"
    return {"levels": levels.tolist(), "level_sums": sums.tolist(),
            "partial_sums": np.cumsum(sums).tolist(), "log_rate": slope,
            "verdict": verdict, "c0": c0_bound(ss, t, sys_params(sys))}


def gibbs_tail(sys, t, cutoff=CUTOFFS[-1], kind="length"):
    """Per-level tau-weighted mass of the Gibbs measure at t and its log decay rate."""
    ss = symbols_of(sys, kind)
    pt = pressure_at(ss, t, (cutoff,), kind, check_tail=False)
    m = ss.taus <= cutoff
    v = -t * ss.weights[m] - pt.P * ss.taus[m]
    nu = np.exp(v - logsumexp(v))
    tau = ss.taus[m]
    levels = np.unique(tau)
    mass = np.array([float(np.sum(tau[tau == n] * nu[tau == n])) for n in levels])
    rate = float(np.polyfit(levels, np.log(mass), 1)[0])
    return {"levels": levels.tolist(), "mass": mass.tolist(), "log_rate": rate}


# variations -----------------------------------------------------------------------

def variation(sys, potential, n, t=1.0, tau_max=6, induced_map=None, samples=9):
    """V_n: largest oscillation over depth-n cylinders.

    ``potential`` is either a SymbolPotential (exact, from its depth) or the
    string "geometric" for -t log ||Df^tau | T gamma|| sampled on cylinders
    built by composing the tabulated branch maps.
    """
    if n < 1:
        raise DepthError("n must be at least 1")
    if isinstance(potential, SymbolPotential):
        if n >= potential.depth:
            return 0.0
        c = potential.corrections
        return float(np.max(c.max(axis=1) - c.min(axis=1)))
    if potential != "geometric":
        raise InvalidInputError("potential must be a SymbolPotential or 'geometric'")
    if n > 4:
        raise DepthError("cylinder sampling is limited to n <= 4")
    from .inducing import InducedMap
    im = induced_map or InducedMap(sys, tau_max=tau_max)
    idx = [i for i in im.index if sys.branches[i].tau <= tau_max]
    # intervals in base coordinates for words a_2..a_n, built right to left
    lo = np.array([0.0])
    hi = np.array([im.base_length])
    for _ in range(n - 1):
        new_lo, new_hi = [], []
        for i in idx:
            a = im.to_base(im.pullback(i, lo))
            b = im.to_base(im.pullback(i, hi))
            new_lo.append(np.minimum(a, b))
            new_hi.append(np.maximum(a, b))
        lo, hi = np.concatenate(new_lo), np.concatenate(new_hi)
    V = 0.0
    u = np.linspace(0.0, 1.0, samples)
    for i in idx:
        s1 = im.pullback(i, lo)
        s2 = im.pullback(i, hi)
        pts = s1[:, None] + (s2 - s1)[:, None] * u[None, :]
        ld = im.log_deriv(i, pts.ravel()).reshape(pts.shape)
        V = max(V, float(np.max(ld.max(axis=1) - ld.min(axis=1))))
    return abs(t) * V


def variation_fit(values, sigma1):
    """Fit log V_n = log C - r n over n = 1..len(values)."""
    n = np.arange(1, len(values) + 1)
    y = np.log(np.asarray(values, float))
    A = np.vstack([np.ones_like(n, dtype=float), -n]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    C = float(np.exp(coef[0]))
    # smallest constant with V_n <= C sigma1^-n on every n
    C_env = float(np.max(np.asarray(values) * sigma1 ** n))
    # sum n V_n continued with the fitted law until the increments fall below 1e-6
    rate = float(coef[1])
    partial = list(np.cumsum(n * np.asarray(values)))
    cauchy_n = None
    if rate > 0:
        m = len(values)
        while m < 10000:
            m += 1
            inc = m * C * math.exp(-rate * m)
            partial.append(partial[-1] + inc)
            if inc < 1e-6:
                cauchy_n = m
                break
    return {"C": C, "rate": rate, "r2": r2, "C_envelope": C_env,
            "bound_holds": bool(rate >= math.log(sigma1)),
            "summable_partial": [float(v) for v in partial], "cauchy_n": cauchy_n}


__all__ = [
    "SymbolSystem", "SymbolPotential", "TruncatedShift", "GibbsResult", "PressurePoint",
    "PressureCurve", "symbols_of", "gurevich_pressure", "gibbs_truncated", "lift_stats",
    "shift_root", "pressure_at", "pressure_curve", "t_u_root", "kac_lyapunov", "t_interval", "c0_bound",
    "tail_sum", "gibbs_tail", "variation", "variation_fit", "CUTOFFS",
]
