"""Command line front end: configuration, staged pipeline and the acceptance report.

Stages and their outputs (under --out):

    manifolds/   a_star.json, tangency.json, leaf.csv
    inducing/    induced_system.json, counts.csv, audit.json
    pressure/    pressure_curve.csv, pressure_curve.json, tails.json, variation.json,
                 gibbs.json, trend.json
    dimension/   dimension.json, box_counts.csv, ladder.json
    stats/       stats.json, acf.csv
    report.json

Each stage directory also gets a manifest.json with the config echo and the
digests of its files. Stage timings go to timings.json, which is the only
output that changes between identical runs.
"""

import argparse
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import SCHEMA_VERSION, __version__
from . import analysis as an
from . import artifacts as io
from . import inducing as ind
from . import shift_thermo as st
from .errors import ConfigError, DependencyError, HenonError, InvalidInputError, SchemaError
from .henon_core import MapParams
from .manifolds import c2b_check, find_first_bifurcation, quadratic_signature

STAGES = ("manifolds", "inducing", "pressure", "dimension", "stats")
NEEDS = {"manifolds": (), "inducing": ("manifolds",), "pressure": ("manifolds", "inducing"),
         "dimension": ("manifolds", "pressure"), "stats": ("manifolds", "pressure")}
OUT_ENV = "HENON_THERMO_OUT"

DEFAULTS = {
    "a": "auto",
    "b": 1e-4,
    "orientation": "preserving",
    "epsilon": 0.5,
    "cap_n": 22,
    "bracket": [1.9, 2.1],
    "tol_a": 1e-15,
    "stages": list(STAGES),
    "out": "henon_out",
    "seed": 0,
    "jobs": None,
    "cutoff_schedule": [10, 15, 20, 25],
    "t_grid": [round(-0.4 + 0.1 * i, 10) for i in range(15)],
    "t_plus_guess": 2.0,
    "bisect_tol": 1e-12,
    "depth": 40,
    "weights": "length",
    "study_interval": [0.0, 0.5],
    "trend_b": [1e-3, 1e-5],
    "variation_depth": 4,
    "omega_depth": 30,
    "omega_samples": 2 ** 21,
    "ladder_levels": 12,
    "stat_t": 0.8,
    "orbit_length": 2 ** 19 + 2 ** 12,
    "n_block": 1024,
    "n_samples": 500,
    "max_lag": 30,
    "clt_seeds": 100,
    "oracle_cases": 50,
    "report_rerun": True,
}


# configuration ---------------------------------------------------------------

@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @classmethod
    def load(cls, path=None, overrides=None, allow_b_zero=False):
        vals = dict(DEFAULTS)
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    user = json.load(fh)
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from None
            if not isinstance(user, dict):
                raise ConfigError("config file must hold a flat JSON object")
            unknown = sorted(set(user) - set(DEFAULTS))
            if unknown:
                raise ConfigError(f"unknown config keys: {unknown}")
            vals.update(user)
        if os.environ.get(OUT_ENV):
            vals["out"] = os.environ[OUT_ENV]
        for k, v in (overrides or {}).items():
            if v is not None:
                vals[k] = v
        cfg = cls(vals)
        cfg.validate(allow_b_zero)
        return cfg

    def validate(self, allow_b_zero=False):
        v = self.values
        try:
            b = float(v["b"])
            eps = float(v["epsilon"])
        except (TypeError, ValueError):
            raise ConfigError("b and epsilon must be numbers") from None
        if v["a"] == "auto":
            if not (0 < b <= 0.01 or (allow_b_zero and b == 0)):
                raise ConfigError(f"b must lie in (0, 0.01] when a is 'auto', got {b}")
        elif not isinstance(v["a"], (int, float)) or not 0 < b <= 0.01:
            raise ConfigError("a must be 'auto' or a number, with b in (0, 0.01]")
        if not 0 < eps <= 0.5:
            raise ConfigError(f"epsilon must lie in (0, 1/2], got {eps}")
        if v["orientation"] not in ("preserving", "reversing"):
            raise ConfigError("orientation must be 'preserving' or 'reversing'")
        tg = v["t_grid"]
        if not tg or any(not isinstance(t, (int, float)) for t in tg):
            raise ConfigError("t_grid must be a non-empty list of numbers")
        if min(tg) <= -1 or max(tg) > v["t_plus_guess"]:
            raise ConfigError(f"t_grid must lie in (-1, {v['t_plus_guess']}]")
        cs = v["cutoff_schedule"]
        if not cs or any(int(c) != c or c < 2 for c in cs):
            raise ConfigError("cutoff_schedule must be integers >= 2")
        if max(cs) > v["depth"]:
            raise ConfigError("largest cutoff exceeds the branch depth")
        bad = [s for s in v["stages"] if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; choose from {list(STAGES)}")
        if v["weights"] not in ("length", "marked"):
            raise ConfigError("weights must be 'length' or 'marked'")
        lo, hi = v["study_interval"]
        if not lo <= hi:
            raise ConfigError("study_interval must be [lo, hi] with lo <= hi")
        if v["jobs"] is not None and int(v["jobs"]) < 1:
            raise ConfigError("jobs must be positive")
        return self

    @property
    def n_jobs(self):
        return int(self.values["jobs"] or os.cpu_count() or 1)

    def echo(self):
        """Config as written into artifacts (output location and job count excluded)."""
        return {k: v for k, v in sorted(self.values.items()) if k not in ("out", "jobs")}

    def digest(self):
        return hashlib.sha256(io.dumps(self.echo()).encode()).hexdigest()[:16]

    def map_params(self, a=None):
        v = self.values
        a = a if a is not None else (2.0 if v["a"] == "auto" else float(v["a"]))
        return MapParams(a, float(v["b"]), v["orientation"], float(v["epsilon"]), int(v["cap_n"]))


# in-process cache ------------------------------------------------------------

class Context:
    """Objects shared by the stages of one run; rebuilt from artifacts when needed."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = cfg.out
        self._cache = {}
        self.timings = {}

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def require(self, stage, fname):
        p = self.path(stage, fname)
        if not os.path.exists(p):
            raise DependencyError(f"missing upstream artifact {stage}/{fname}: "
                                  f"run the '{stage}' stage first")
        return p

    def params(self):
        if "params" not in self._cache:
            doc = io.read_json(self.require("manifolds", "a_star.json"), "a_star")
            self._cache["params"] = MapParams.from_dict(doc["data"]["params"])
        return self._cache["params"]

    def geometry(self):
        if "geom" not in self._cache:
            self._cache["geom"] = ind.build_geometry(self.params())
        return self._cache["geom"]

    def system(self):
        if "sys" not in self._cache:
            self.require("inducing", "induced_system.json")
            self._cache["sys"] = ind.first_return_branches(self.geometry(),
                                                           depth=int(self.cfg.depth))
        return self._cache["sys"]

    def pressure(self):
        if "pressure" not in self._cache:
            self._cache["pressure"] = io.read_json(
                self.require("pressure", "pressure_curve.json"), "pressure_curve")["data"]
        return self._cache["pressure"]

    def set(self, key, value):
        self._cache[key] = value


# stages ----------------------------------------------------------------------

def solve_astar(cfg, b=None):
    tmpl = cfg.map_params()
    if b is not None:
        tmpl = MapParams(tmpl.a, b, tmpl.orientation, tmpl.epsilon, tmpl.cap_n)
    if cfg.a != "auto" and b is None:
        return tmpl, None
    a, rep = find_first_bifurcation(tmpl, tuple(cfg.bracket), tol_a=float(cfg.tol_a))
    return tmpl.with_a(a), rep


def stage_find_astar(ctx):
    cfg = ctx.cfg
    t0 = time.perf_counter()
    params, rep = solve_astar(cfg)
    elapsed = time.perf_counter() - t0
    data = {"a_star": params.a, "params": params.to_dict(), "tol_a": cfg.tol_a,
            "bracket": cfg.bracket, "mode": "one-dimensional" if params.b == 0 else "planar",
            "converged": True, "report": rep.to_dict() if rep else None}
    io.write_json(ctx.path("manifolds", "a_star.json"), "a_star", data, cfg.echo())
    ctx.timings["find_astar"] = elapsed
    ctx.set("params", params)
    return data


def stage_manifolds(ctx):
    cfg = ctx.cfg
    if float(cfg.b) == 0:
        raise InvalidInputError("the manifolds stage needs b > 0; b = 0 is find-astar only")
    stage_find_astar(ctx)
    params = ctx.params()
    geom = ctx.geometry()
    q = quadratic_signature(params)
    leaf = geom.leaf.curve(geom.t_alpha1_minus, geom.t_alpha1_plus)
    tang = {"quadratic": {k: q[k] for k in ("alpha", "beta", "relative_residual")},
            "geometry": geom.to_dict(), "leaf_c2b": c2b_check(leaf, params.b)}
    io.write_json(ctx.path("manifolds", "tangency.json"), "tangency", tang, cfg.echo())
    leaf.to_csv(ctx.path("manifolds", "leaf.csv"))
    return tang


def stage_inducing(ctx):
    cfg = ctx.cfg
    params = ctx.params()
    geom = ctx.geometry()
    sys_ = ind.first_return_branches(geom, depth=int(cfg.depth))
    ctx.set("sys", sys_)
    io.write_json(ctx.path("inducing", "induced_system.json"), "induced_system",
                  sys_.to_dict(), cfg.echo())
    io.write_text(ctx.path("inducing", "counts.csv"), sys_.counts_csv())
    hyp = ind.hyperbolicity_audit(params, sys_)
    cen = ind.branch_census(sys_)
    eps = params.epsilon
    growth = [math.log(c) / n for n, c in cen["S"].items() if n >= 10 and c > 0]
    # disjointness of half-open domains [s_lo, s_hi)
    iv = sorted((br.s_lo, br.s_hi) for br in sys_.branches)
    disjoint = all(a[1] <= b[0] for a, b in zip(iv, iv[1:]))
    audit = {
        "hyperbolicity": hyp,
        "census": {"S": cen["S"], "max_growth_rate": max(growth) if growth else None,
                   "growth_ok": all(g <= eps for g in growth)},
        "tau2_count": int(sum(1 for br in sys_.branches if br.tau == 2)),
        "disjoint": disjoint,
        "first_return_violations": ind.first_return_check(geom, sys_),
        "n_trust": sys_.n_trust, "n_res": sys_.n_res,
        "hole_minima": {str(k): v for k, v in sys_.hole_minima.items()},
    }
    io.write_json(ctx.path("inducing", "audit.json"), "inducing_audit", audit, cfg.echo())
    return audit


def _pressure_for(cfg, sys_, jobs, root=True):
    return st.pressure_curve(sys_, cfg.t_grid, tuple(cfg.cutoff_schedule), cfg.weights,
                             jobs=jobs, root=root)


def stage_pressure(ctx):
    cfg = ctx.cfg
    params = ctx.params()
    sys_ = ctx.system()
    t0 = time.perf_counter()
    curve = _pressure_for(cfg, sys_, cfg.n_jobs)
    elapsed = time.perf_counter() - t0
    ctx.timings["pressure_curve"] = elapsed
    io.write_text(ctx.path("pressure", "pressure_curve.csv"), curve.to_csv())
    cd = curve.to_dict()
    lo, hi = cfg.study_interval
    cd["study_interval"] = [lo, hi]
    cd["study_inside"] = bool(curve.t_minus < lo and hi < curve.t_plus)
    cd["decreasing_on_unit"] = bool(np.all(np.diff(curve.P[(curve.t >= 0) & (curve.t <= 1)]) < 0))
    io.write_json(ctx.path("pressure", "pressure_curve.json"), "pressure_curve", cd, cfg.echo())
    ctx.set("pressure", cd)
    # tails: the convergent/divergent verdicts and positive recurrence
    c0 = st.c0_bound(st.symbols_of(sys_, cfg.weights), 0.5, params)
    tails = {"t": 0.5, "c0": c0,
             "below_c0": st.tail_sum(sys_, 0.5, c0 - 0.1),
             "far_above_c0": st.tail_sum(sys_, 0.5, c0 + 2.0),
             "gibbs_tail": {}, "positive_recurrence": {}}
    for t in (0.0, 0.5, curve.t_u):
        P = st.pressure_at(sys_, t, tuple(cfg.cutoff_schedule), cfg.weights).P
        tails["positive_recurrence"][repr(float(t))] = {
            f"{eta:g}": st.tail_sum(sys_, t, eta - P)["verdict"] for eta in (0.0, 0.025, 0.05)}
        tails["gibbs_tail"][repr(float(t))] = st.gibbs_tail(sys_, t, kind=cfg.weights)
    io.write_json(ctx.path("pressure", "tails.json"), "tails", tails, cfg.echo())
    # variations of the geometric potential
    im = ind.InducedMap(sys_, tau_max=6)
    V = [st.variation(sys_, "geometric", n, 1.0, induced_map=im)
         for n in range(1, int(cfg.variation_depth) + 1)]
    vfit = st.variation_fit(V, params.sigma1)
    vfit["V"] = V
    vfit["log_sigma1"] = math.log(params.sigma1)
    io.write_json(ctx.path("pressure", "variation.json"), "variation", vfit, cfg.echo())
    # Gibbs measures at t^u across the cutoff schedule
    gib = {}
    for cut in cfg.cutoff_schedule:
        g, P = an.equilibrium_gibbs(sys_, curve.t_u, cut, cfg.weights)
        gib[str(cut)] = {"pressure_shift": P, "gibbs_constant": g.gibbs_constant,
                         "entropy": g.entropy, "mean_tau": g.mean_tau,
                         "weight_sum": float(g.weights.sum())}
    io.write_json(ctx.path("pressure", "gibbs.json"), "gibbs", gib, cfg.echo())
    # t^u at the other values of b
    trend = {repr(params.b): curve.t_u}
    for b in cfg.trend_b:
        p_b, _ = solve_astar(cfg, b=float(b))
        s_b = ind.first_return_branches(ind.build_geometry(p_b), depth=int(cfg.depth))
        c_b = st.pressure_curve(s_b, [0.0, 1.0], tuple(cfg.cutoff_schedule), cfg.weights)
        trend[repr(float(b))] = c_b.t_u
    order = sorted(trend, key=float, reverse=True)
    vals = [trend[k] for k in order]
    io.write_json(ctx.path("pressure", "trend.json"), "trend",
                  {"t_u": trend, "b_descending": order,
                   "monotone": bool(all(x < y for x, y in zip(vals, vals[1:])))}, cfg.echo())
    return cd


def stage_dimension(ctx):
    cfg = ctx.cfg
    geom = ctx.geometry()
    pc = ctx.pressure()
    t_u = pc["t_u"]
    om = ind.omega_sets(geom, n_max=int(cfg.omega_depth), n_samples=int(cfg.omega_samples))
    sample = an.SliceSample.from_omega(om)
    scales = np.geomspace(1e-2, 1e-5, 13)
    fit = an.box_dimension(sample, scales)
    io.write_text(ctx.path("dimension", "box_counts.csv"), fit.to_csv())
    sys_ = ctx.system()
    meas = {}
    for t in (0.3, 0.5, 0.9, t_u):
        g, _ = an.equilibrium_gibbs(sys_, t, max(cfg.cutoff_schedule), cfg.weights)
        meas[f"{t:.17g}"] = an.dimension_of_measure(g, sys_, cfg.weights)
    at_root = meas[f"{t_u:.17g}"]
    dim = {"t_u": t_u, "omega_box": fit.to_dict(), "omega_depth": len(om.levels) - 1,
           "omega_nested": om.nested(), "omega_flags": list(om.flags),
           "omega_resolution": om.resolution, "measure_dimension": meas,
           "free_energy_gap": abs(at_root["entropy"] - t_u * at_root["lambda_u"]),
           "lambda_u_at_root": at_root["lambda_u"]}
    io.write_json(ctx.path("dimension", "dimension.json"), "dimension", dim, cfg.echo())
    lad = an.ek_ladder(geom, k_max=int(cfg.ladder_levels))
    lfit = an.box_dimension(an.SliceSample(lad.levels[-1]), np.geomspace(1e-1, 1e-3, 11))
    ld = lad.to_dict()
    ld["box_dimension_last"] = lfit.dimension
    io.write_json(ctx.path("dimension", "ladder.json"), "ladder", ld, cfg.echo())
    return dim


def stage_stats(ctx):
    cfg = ctx.cfg
    params = ctx.params()
    sys_ = ctx.system()
    geom = ctx.geometry()
    pc = ctx.pressure()
    seed = int(cfg.seed)
    im = ind.InducedMap(sys_)
    out = {}
    oracle = an.lyapunov_u(MapParams(2.0, 0.0), (0.3, 0.0), 200000, burn_in=100)
    bl = an.branch_lyapunov(sys_)
    out["lyapunov"] = {"oracle_1d": oracle.to_dict(), "branch_min": float(bl.min()),
                       "branch_max": float(bl.max()), "bound": math.log(params.sigma1) - 0.02}
    g_u, _ = an.equilibrium_gibbs(sys_, pc["t_u"], max(cfg.cutoff_schedule), cfg.weights)
    orb_u = an.sample_gibbs_orbit(sys_, g_u, int(cfg.orbit_length) // 4, seed, induced_map=im)
    lam_orb = orb_u.lyapunov()
    out["lyapunov"]["orbit_at_t_u"] = lam_orb.to_dict()
    out["lyapunov"]["kac_at_t_u"] = pc["lambda_u_at_root"]
    t = float(cfg.stat_t)
    g, _ = an.equilibrium_gibbs(sys_, t, max(cfg.cutoff_schedule), cfg.weights)
    orb = an.sample_gibbs_orbit(sys_, g, int(cfg.orbit_length), seed, induced_map=im)
    # sampler checks: return-time law, symbol frequencies, confinement
    counts = np.bincount(_codes(orb), minlength=len(orb.alphabet))
    n = counts.sum()
    band = 3.0 * np.sqrt(n * orb.weights * (1 - orb.weights))
    x0, y0, x1, y1 = geom.region.bbox
    pts = orb.points
    out["sampler"] = {
        "t": t, "segments": int(n), "mean_tau_empirical": float(orb.taus.mean()),
        "mean_tau_gibbs": g.mean_tau,
        "frequencies_within_3sigma": bool(np.all(np.abs(counts - n * orb.weights) <= band + 1)),
        "inside_bbox": bool(np.all((pts[:, 0] >= x0 - 1e-9) & (pts[:, 0] <= x1 + 1e-9)
                                   & (pts[:, 1] >= y0 - 1e-9) & (pts[:, 1] <= y1 + 1e-9)))}
    x = an.observable_x(orb)
    lags = range(1, int(cfg.max_lag) + 1)
    rep = an.correlation_decay(x, lags, an.OBSERVABLES["x"])
    rep.clt = an.clt_test(x, int(cfg.n_block), int(cfg.n_samples))
    io.write_text(ctx.path("stats", "acf.csv"), rep.acf_csv())
    out["x"] = rep.to_dict()
    zx, zy = geom.leaf.xy(np.array([geom.t_zeta]))
    fd = an.observable_fold_distance(orb, (float(zx[0]), float(zy[0])))
    rep_fd = an.correlation_decay(fd, lags, an.OBSERVABLES["fold_distance"])
    rep_fd.clt = an.clt_test(fd, int(cfg.n_block), int(cfg.n_samples))
    out["fold_distance"] = rep_fd.to_dict()
    cb = an.observable_coboundary(x)
    out["coboundary"] = {"sigma_by_block": {
        str(nb): an.clt_test(cb, nb, int(cfg.n_samples))["sigma"] for nb in (16, 64, 256, 1024)}}
    sig = list(out["coboundary"]["sigma_by_block"].values())
    out["coboundary"]["shrinking"] = bool(all(a > b for a, b in zip(sig, sig[1:])))
    out["clt_control_pass_rate"] = an.clt_control(int(cfg.clt_seeds))
    io.write_json(ctx.path("stats", "stats.json"), "stats", out, cfg.echo())
    return out


def _codes(orb):
    pos = {int(a): i for i, a in enumerate(orb.alphabet)}
    return np.array([pos[int(s)] for s in orb.symbols], int)


STAGE_FUN = {"manifolds": stage_manifolds, "inducing": stage_inducing,
             "pressure": stage_pressure, "dimension": stage_dimension, "stats": stage_stats}


def _write_manifest(ctx, stage):
    d = ctx.path(stage)
    files = {f: io.digest(os.path.join(d, f)) for f in sorted(os.listdir(d))
             if f.endswith((".json", ".csv")) and f not in ("manifest.json", "stale.json")}
    io.write_json(os.path.join(d, "manifest.json"), "manifest",
                  {"stage": stage, "config_digest": ctx.cfg.digest(), "files": files},
                  ctx.cfg.echo())


def _cached(ctx, stage):
    p = ctx.path(stage, "manifest.json")
    if not os.path.exists(p) or os.path.exists(ctx.path(stage, "stale.json")):
        return False
    try:
        m = io.read_json(p, "manifest")["data"]
    except (HenonError, ValueError):
        return False
    if m["config_digest"] != ctx.cfg.digest():
        return False
    for f, h in m["files"].items():
        fp = ctx.path(stage, f)
        if not os.path.exists(fp) or io.digest(fp) != h:
            return False
    return True


def run_stage(ctx, stage, use_cache=True):
    for dep in NEEDS[stage]:
        if not os.path.exists(ctx.path(dep, "manifest.json")):
            raise DependencyError(f"stage '{stage}' needs the '{dep}' stage output in "
                                  f"{ctx.out}; it is missing")
    if use_cache and _cached(ctx, stage):
        return "cached"
    os.makedirs(ctx.path(stage), exist_ok=True)
    stale = ctx.path(stage, "stale.json")
    t0 = time.perf_counter()
    try:
        STAGE_FUN[stage](ctx)
    except Exception as exc:
        io.write_json(stale, "stale", {"stage": stage, "error": type(exc).__name__,
                                       "message": str(exc)}, ctx.cfg.echo())
        raise
    ctx.timings[stage] = time.perf_counter() - t0
    if os.path.exists(stale):
        os.remove(stale)
    _write_manifest(ctx, stage)
    return "ran"


def run_pipeline(cfg, stages=None, use_cache=True):
    ctx = Context(cfg)
    stages = [s for s in STAGES if s in (stages or cfg.stages)]
    status = {}
    for s in stages:
        try:
            status[s] = run_stage(ctx, s, use_cache)
        except Exception as exc:
            exc.stage = s
            raise
    _write_timings(ctx)
    return status


def _write_timings(ctx):
    p = ctx.path("timings.json")
    old = {}
    if os.path.exists(p):
        try:
            old = io.read_json(p, "timings")["data"]
        except Exception:
            old = {}
    old.update(ctx.timings)
    io.write_json(p, "timings", old)


# report ----------------------------------------------------------------------

def _read_curve_csv(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 0], rows[:, 1], rows[:, 2]


def oracle_suite(cases=50, seed=12345):
    """Random finite full shifts with depth-1 potentials against closed forms."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        k = int(rng.integers(1, 9))
        phi = rng.normal(0.0, 1.5, k)
        tau = rng.integers(1, 6, k)
        shift = st.TruncatedShift.from_potential(st.SymbolPotential(phi, tau))
        g = st.gibbs_truncated(shift)
        bern = np.exp(phi - np.logaddexp.reduce(phi))
        lse = float(np.logaddexp.reduce(phi))
        worst = max(worst, float(np.max(np.abs(g.weights - bern))), abs(g.pressure - lse),
                    abs(st.gurevich_pressure(shift, 8)["pressure"] - lse))
    # two symbols with tau = (2, 2): the 4-state tower chain
    shift = st.TruncatedShift.from_potential(st.SymbolPotential([0.0, 0.0], [2, 2]))
    g = st.gibbs_truncated(shift)
    lifted = st.lift_stats(g)["entropy_lifted"]
    tower = tower_entropy([0.5, 0.5], [2, 2])
    return {"cases": cases, "max_error": worst, "tower_error": abs(lifted - tower),
            "pass": bool(worst < 1e-10 and abs(lifted - tower) < 1e-10)}


def tower_entropy(p, taus):
    """Entropy of the Markov chain on tower states (symbol, floor)."""
    states = [(i, j) for i, t in enumerate(taus) for j in range(t)]
    idx = {s: n for n, s in enumerate(states)}
    M = np.zeros((len(states), len(states)))
    for (i, j), n in idx.items():
        if j + 1 < taus[i]:
            M[n, idx[(i, j + 1)]] = 1.0
        else:
            for k, pk in enumerate(p):
                M[n, idx[(k, 0)]] = pk
    w, v = np.linalg.eig(M.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    pi = pi / pi.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.nansum(pi[:, None] * np.where(M > 0, M * np.log(M), 0.0))
    return float(h)


def build_report(cfg, rerun=None):
    ctx = Context(cfg)
    need = [("manifolds", "a_star.json"), ("manifolds", "tangency.json"),
            ("inducing", "audit.json"), ("pressure", "pressure_curve.json"),
            ("pressure", "pressure_curve.csv"), ("pressure", "variation.json"),
            ("pressure", "trend.json"), ("dimension", "dimension.json"),
            ("dimension", "ladder.json"), ("stats", "stats.json")]
    docs = {}
    for stage, f in need:
        p = ctx.require(stage, f)
        if f.endswith(".json"):
            docs[f] = io.read_json(p)["data"]
    timings = {}
    if os.path.exists(ctx.path("timings.json")):
        timings = io.read_json(ctx.path("timings.json"))["data"]
    crit = []

    def add(i, name, checks, measured):
        crit.append({"id": i, "name": name, "pass": bool(all(checks.values())),
                     "checks": {k: bool(v) for k, v in checks.items()}, "measured": measured})

    a = docs["a_star.json"]
    a1d, _ = find_first_bifurcation(MapParams(2.0, 0.0), (1.9, 2.1), tol_a=1e-10)
    add(1, "bifurcation anchor",
        {"near_2": abs(a["a_star"] - 2) < 0.1, "tol": a["tol_a"] <= 1e-10,
         "runtime": timings.get("find_astar", 0.0) < 60, "oracle_1d": a1d == 2.0},
        {"a_star": a["a_star"], "a_star_1d": a1d, "seconds": timings.get("find_astar")})
    q = docs["tangency.json"]["quadratic"]
    add(2, "quadratic tangency signature",
        {"alpha": abs(q["alpha"]) < 1e-6, "residual": q["relative_residual"] < 0.05}, q)
    t, P, res = _read_curve_csv(ctx.path("pressure", "pressure_curve.csv"))
    P0 = float(np.interp(0.0, t, P))
    P1 = float(np.interp(1.0, t, P))
    curve = st.PressureCurve([st.PressurePoint(a_, b_, {}, r_, False)
                              for a_, b_, r_ in zip(t, P, res)])
    add(3, "pressure anchors",
        {"P0": abs(P0 - math.log(2)) < 0.05 * math.log(2), "P1": P1 < 0,
         "convex": curve.is_convex(), "runtime": timings.get("pressure_curve", 0.0) < 600},
        {"P0": P0, "P1": P1, "min_second_difference": float(curve.second_differences().min()),
         "seconds": timings.get("pressure_curve")})
    pc = docs["pressure_curve.json"]
    dim = docs["dimension.json"]
    tr = docs["trend.json"]
    lo = math.log(2) / math.log(5)
    add(4, "dimension root",
        {"interval": lo < pc["t_u"] < 1,
         "box_vs_t_u": abs(dim["omega_box"]["dimension"] - pc["t_u"]) < 0.05,
         "trend": tr["monotone"]},
        {"t_u": pc["t_u"], "box_dimension": dim["omega_box"]["dimension"], "trend": tr["t_u"]})
    tm, tp = st.t_interval(1.0, math.log(2), 0.01)
    add(5, "interval formula",
        {"t_plus": abs(tp - 6.931) < 1e-3, "t_minus": abs(tm + 0.871) < 1e-3,
         "study_inside": pc["study_inside"]},
        {"t_plus": tp, "t_minus": tm, "defaults": [pc["t_minus"], pc["t_plus"]],
         "study_interval": pc["study_interval"]})
    orc = oracle_suite(int(cfg.oracle_cases))
    add(6, "shift-thermo oracle suite", {"oracles": orc["pass"]}, orc)
    au = docs["audit.json"]
    add(7, "inducing-scheme audit",
        {"envelope": au["hyperbolicity"]["envelope_pass"], "growth": au["census"]["growth_ok"],
         "tau2": au["tau2_count"] == 2, "disjoint": au["disjoint"]},
        {"violations": len(au["hyperbolicity"]["violations"]),
         "max_growth_rate": au["census"]["max_growth_rate"], "tau2_count": au["tau2_count"]})
    v = docs["variation.json"]
    add(8, "variation decay", {"rate": v["bound_holds"], "r2": v["r2"] > 0.9},
        {"V": v["V"], "rate": v["rate"], "log_sigma1": v["log_sigma1"], "r2": v["r2"]})
    ld = docs["ladder.json"]
    c = ld["constants"]
    add(9, "E_k ladder",
        {"nested": ld["nested"], "sandwich": c["sandwich_holds"],
         "constants": max(c["variation_C_b"], c["variation_C_N"]) < 0.3,
         "lower_bound": ld["lower_bound"] <= ld["box_dimension_last"] + 0.05},
        {"lower_bound": ld["lower_bound"], "box_dimension_last": ld["box_dimension_last"],
         "variation_C_b": c["variation_C_b"], "variation_C_N": c["variation_C_N"],
         "rate": ld["rate"]})
    s = docs["stats.json"]
    ly = s["lyapunov"]
    add(10, "Lyapunov anchors",
        {"oracle": abs(ly["oracle_1d"]["value"] - math.log(2)) < 0.01,
         "branches": ly["branch_min"] >= ly["bound"],
         "kac": abs(ly["kac_at_t_u"] - math.log(2)) < 0.05,
         "orbit_vs_kac": abs(ly["orbit_at_t_u"]["value"] - ly["kac_at_t_u"]) < 0.05},
        {"oracle": ly["oracle_1d"]["value"], "branch_min": ly["branch_min"],
         "kac": ly["kac_at_t_u"], "orbit": ly["orbit_at_t_u"]["value"]})
    add(11, "statistics",
        {"clt_control": s["clt_control_pass_rate"] >= 0.95,
         "acf_rate": s["x"]["rate"] < 1, "acf_r2": (s["x"]["r2"] or 0) > 0.8,
         "coboundary": s["coboundary"]["shrinking"]},
        {"clt_control_pass_rate": s["clt_control_pass_rate"], "acf_rate": s["x"]["rate"],
         "acf_r2": s["x"]["r2"], "clt_p_value": s["x"]["clt"]["p_value"],
         "coboundary_sigma": s["coboundary"]["sigma_by_block"]})
    det = rerun if rerun is not None else {"checked": False}
    add(12, "determinism", {"identical": det.get("identical", False)}, det)
    return {"criteria": crit, "overall_pass": all(x["pass"] for x in crit),
            "code_version": __version__, "schema_version": SCHEMA_VERSION}


def determinism_check(cfg):
    """Rerun the pipeline into a scratch directory and compare artifact digests."""
    def ours(tree):
        # only stage outputs; reports and anything the user keeps in out/ are skipped
        return {k: v for k, v in tree.items()
                if k.split(os.sep)[0] in STAGES and not k.endswith("stale.json")}

    ref = ours(io.tree_digests(cfg.out))
    tmp = tempfile.mkdtemp(prefix="henon_rerun_")
    try:
        vals = dict(cfg.values)
        vals["out"] = tmp
        run_pipeline(RunConfig(vals), use_cache=False)
        new = ours(io.tree_digests(tmp))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    diff = sorted(k for k in set(ref) | set(new) if ref.get(k) != new.get(k))
    return {"checked": True, "identical": not diff and bool(ref), "files": len(ref),
            "differing": diff}


def report_schema():
    with open(os.path.join(os.path.dirname(__file__), "schemas", "report.schema.json"),
              encoding="utf-8") as fh:
        return json.load(fh)


def validate_report(doc):
    """Check a report envelope against the shipped schema (needs jsonschema)."""
    import jsonschema
    try:
        jsonschema.validate(doc, report_schema())
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"report does not match its schema: {exc.message}") from None
    return doc


def cmd_report(cfg):
    rerun = determinism_check(cfg) if cfg.report_rerun else None
    rep = build_report(cfg, rerun)
    doc = json.loads(io.dumps(io.envelope("report", rep, cfg.echo())))
    try:
        validate_report(doc)
    except ImportError:
        pass
    io.write_json(os.path.join(cfg.out, "report.json"), "report", rep, cfg.echo())
    return rep


# entry point -----------------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="henon-thermo",
                                 description="Thermodynamic formalism for the Henon map "
                                             "at the first bifurcation")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("find-astar", "manifolds", "inducing", "pressure", "dimension", "stats",
                 "report", "pipeline"):
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--b", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--stages", metavar="LIST",
                       help="comma separated subset of " + ",".join(STAGES))
        p.add_argument("--no-cache", action="store_true")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        over = {"b": args.b, "epsilon": args.epsilon, "seed": args.seed, "jobs": args.jobs,
                "out": args.out}
        if args.stages:
            over["stages"] = [s.strip() for s in args.stages.split(",") if s.strip()]
        cmd = args.command
        cfg = RunConfig.load(args.config, over, allow_b_zero=(cmd == "find-astar"))
        if cmd == "find-astar":
            ctx = Context(cfg)
            data = stage_find_astar(ctx)
            _write_timings(ctx)
            print(io.dumps({"a_star": data["a_star"], "mode": data["mode"]}), end="")
        elif cmd == "pipeline":
            status = run_pipeline(cfg, use_cache=not args.no_cache)
            print(io.dumps(status), end="")
        elif cmd == "report":
            rep = cmd_report(cfg)
            for c in rep["criteria"]:
                print(f"criterion {c['id']:2d} {'PASS' if c['pass'] else 'FAIL'}  {c['name']}")
            print("overall", "PASS" if rep["overall_pass"] else "FAIL")
        else:
            ctx = Context(cfg)
            try:
                status = {cmd: run_stage(ctx, cmd, use_cache=not args.no_cache)}
            except Exception as exc:
                exc.stage = cmd
                raise
            _write_timings(ctx)
            print(io.dumps(status), end="")
        return 0
    except HenonError as exc:
        where = f" [stage {exc.stage}]" if getattr(exc, "stage", None) else ""
        print(f"error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        traceback.print_exc()
        where = f" [stage {exc.stage}]" if getattr(exc, "stage", None) else ""
        print(f"internal error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
