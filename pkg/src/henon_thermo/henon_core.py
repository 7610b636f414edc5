"""The Henon family f(x, y) = (1 - a x^2 + sqrt(b) y, s sqrt(b) x).

Sign convention: ``orientation="preserving"`` uses s = -1 so that
det Df = -s b = +b > 0, and ``"reversing"`` uses s = +1 (det Df = -b).
With this choice the unstable manifold meeting W^s(Q) tangentially at the
first bifurcation is W^u(Q) in the preserving case and W^u(P) in the
reversing case.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (EscapeError, InvalidInputError, NoSaddleError,
                     SingularMapError)

BOX = 2.0  # orbits are declared escaped on first exit from [-BOX, BOX]^2

ORIENTATIONS = ("preserving", "reversing")
PARAM_KEYS = ("a", "b", "orientation", "epsilon", "cap_n")


@dataclass(frozen=True)
class MapParams:
    a: float = 2.0
    b: float = 1e-4
    orientation: str = "preserving"
    epsilon: float = 0.5
    cap_n: int = 22

    def __post_init__(self):
        for name in ("a", "b", "epsilon"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating)) or not math.isfinite(v):
                raise InvalidInputError(f"{name} must be a finite number, got {v!r}")
        if self.a <= 0:
            raise InvalidInputError(f"a must be positive, got {self.a}")
        if self.b < 0:
            raise InvalidInputError(f"b must be non-negative, got {self.b}")
        if self.orientation not in ORIENTATIONS:
            raise InvalidInputError(f"orientation must be one of {ORIENTATIONS}")
        # the default working value eps = 0.5 sits on the boundary, so it is allowed
        if not 0 < self.epsilon <= 0.5:
            raise InvalidInputError(f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        if int(self.cap_n) != self.cap_n or self.cap_n < 1:
            raise InvalidInputError(f"cap_n must be a positive integer, got {self.cap_n}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "cap_n", int(self.cap_n))

    @property
    def s(self):
        return -1.0 if self.orientation == "preserving" else 1.0

    @property
    def sqrt_b(self):
        return math.sqrt(self.b)

    @property
    def det(self):
        return -self.s * self.b

    @property
    def xi(self):
        return int(math.floor(10.0 / self.epsilon))

    @property
    def sigma1(self):
        return 2.0 - self.epsilon

    @property
    def sigma2(self):
        return 4.0 + self.epsilon

    @property
    def N(self):
        return self.cap_n

    def with_a(self, a):
        return MapParams(a, self.b, self.orientation, self.epsilon, self.cap_n)

    def to_dict(self):
        return {"a": self.a, "b": self.b, "orientation": self.orientation,
                "epsilon": self.epsilon, "cap_n": self.cap_n}

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - set(PARAM_KEYS)
        if extra:
            raise InvalidInputError(f"unknown parameter keys: {sorted(extra)}")
        return cls(**{k: d[k] for k in PARAM_KEYS if k in d})


class Point(NamedTuple):
    x: float
    y: float


def as_point(z):
    x, y = (float(z[0]), float(z[1]))
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInputError(f"non-finite point {z!r}")
    return Point(x, y)


@dataclass(frozen=True)
class TangentData:
    base: Point
    direction: np.ndarray
    log_norm: float
    j_u: float = float("nan")
    depth: int = 0


@dataclass(frozen=True)
class Saddle:
    location: Point
    eigenvalues: tuple
    eigenvectors: tuple = field(repr=False)
    label: str = "P"

    @property
    def lambda_u(self):
        return self.eigenvalues[0]

    @property
    def lambda_s(self):
        return self.eigenvalues[1]

    @property
    def v_u(self):
        return self.eigenvectors[0]

    @property
    def v_s(self):
        return self.eigenvectors[1]


# vectorised kernels -------------------------------------------------------

def step(p, x, y):
    """One forward step on arrays."""
    rb = p.sqrt_b
    return 1.0 - p.a * x * x + rb * y, p.s * rb * x


def step_inverse(p, x, y):
    if p.b == 0:
        raise SingularMapError("the map is not invertible at b = 0")
    rb = p.sqrt_b
    X = y / (p.s * rb)
    return X, (x - 1.0 + p.a * X * X) / rb


def iterate(p, x, y, n):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    for _ in range(n):
        x, y = step(p, x, y)
    return x, y


def in_box(x, y):
    return (np.abs(x) <= BOX) & (np.abs(y) <= BOX)


# point operations ---------------------------------------------------------

def apply(params, z):
    z = as_point(z)
    return Point(*map(float, step(params, z.x, z.y)))


def inverse(params, z):
    z = as_point(z)
    return Point(*map(float, step_inverse(params, z.x, z.y)))


def jacobian(params, z):
    z = as_point(z)
    rb = params.sqrt_b
    return np.array([[-2.0 * params.a * z.x, rb], [params.s * rb, 0.0]])


def _eigvec(params, x, lam):
    rb = params.sqrt_b
    c1 = np.array([lam, params.s * rb])
    c2 = np.array([rb, lam + 2.0 * params.a * x])
    v = c1 if np.linalg.norm(c1) >= np.linalg.norm(c2) else c2
    return v / np.linalg.norm(v)


def fixed_saddles(params):
    """Return (P, Q): P near (1/2, 0), Q near (-1, 0)."""
    a, sb = params.a, params.s * params.b
    B = 1.0 - sb
    disc = B * B + 4.0 * a
    if disc <= 0:
        raise NoSaddleError(f"complex fixed points at a={a}, b={params.b}")
    r = math.sqrt(disc)
    # numerically stable roots of a x^2 + B x - 1 = 0
    q = -0.5 * (B + math.copysign(r, B))
    roots = sorted([q / a, -1.0 / q])
    out = []
    for x, label in ((roots[1], "P"), (roots[0], "Q")):
        d = a * a * x * x + sb
        if d < 0:
            raise NoSaddleError(f"fixed point {label} is not a saddle")
        sq = math.sqrt(d)
        lams = (-a * x + sq, -a * x - sq)
        lu, ls = sorted(lams, key=abs, reverse=True)
        if not abs(lu) > 1 > abs(ls):
            raise NoSaddleError(f"fixed point {label} is not a saddle: {lams}")
        vu = _eigvec(params, x, lu)
        if vu[0] < 0:
            vu = -vu
        vs = _eigvec(params, x, ls)
        if vs[1] < 0:
            vs = -vs
        loc = Point(x, params.s * params.sqrt_b * x)
        out.append(Saddle(loc, (lu, ls), (vu, vs), label))
    if not (out[0].location.x > 0 > out[1].location.x):
        raise NoSaddleError("fixed points are not on opposite sides of x = 0")
    return out[0], out[1]


def unstable_direction(params, z, n_back=40):
    """Estimate E^u at z by pushing a probe vector forward along the backward orbit.

    Inverse iteration is numerically expanding, so the backward orbit is only
    followed until the forward angular contraction accumulated along it
    (bounded by b / J^2 per step) drops below machine precision. Deeper
    points would add nothing but round-off.
    """
    z = as_point(z)
    if params.b == 0:
        j = abs(2.0 * params.a * z.x)
        return TangentData(z, np.array([1.0, 0.0]), math.log(j) if j > 0 else -math.inf, j, 0)
    tiny = math.log(np.finfo(float).eps) - 2.0
    pts = [z]
    bound = 0.0
    x, y = z
    for k in range(int(n_back)):
        if bound < tiny:
            break
        x, y = step_inverse(params, x, y)
        if not (math.isfinite(x) and math.isfinite(y)) or abs(x) > BOX or abs(y) > BOX:
            raise EscapeError(f"backward orbit left the box at step {k + 1}", step=k + 1)
        pts.append(Point(x, y))
        j = abs(2.0 * params.a * x) + params.sqrt_b
        bound += math.log(params.b) - 2.0 * math.log(j)
    v = np.array([1.0, 0.0])
    log_norm = 0.0
    for w in reversed(pts[1:]):
        v = jacobian(params, w) @ v
        nv = np.linalg.norm(v)
        log_norm += math.log(nv)
        v = v / nv
    if v[0] < 0:
        v = -v
    ju = float(np.linalg.norm(jacobian(params, z) @ v))
    return TangentData(z, v, log_norm, ju, len(pts) - 1)
