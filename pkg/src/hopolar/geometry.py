"""Star-convex constraint sets and exact ray/boundary computations.

All sets expose their constraints in the canonical form g_i(y) <= 0. Index
order is fixed per family (halfspace rows in order; lp-ball has one
constraint; quadratic sets list the >=-forms first, then the <=-caps) so that
tie-breaking to the smallest index is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

INTERIOR_MARGIN = 1e-12
BISECT_TOL = 1e-10
SCAN_TMAX = 1e6


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"interval requires a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True)
class HalfspaceIntersection:
    """Polyhedron {y : A y <= b}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if A.shape[0] != b.shape[0]:
            raise ValueError("row count of A must match b")
        if np.any(np.linalg.norm(A, axis=1) == 0.0):
            raise ValueError("every row of A must be nonzero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class LpBall:
    """{y : sum_i |y_i - center_i|^p <= bound}, any p > 0."""

    p: float
    bound: float
    center: np.ndarray

    def __post_init__(self):
        if self.p <= 0:
            raise ValueError("p must be positive")
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        object.__setattr__(self, "center",
                           np.atleast_1d(np.asarray(self.center, dtype=np.float64)))


@dataclass(frozen=True)
class QuadraticFormSet:
    """Intersection of {y^T H y >= c} forms and PSD caps {y^T M y <= cap}."""

    geq_forms: tuple = field(default_factory=tuple)
    leq_forms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        geq = tuple((np.asarray(H, dtype=np.float64), float(c))
                    for H, c in self.geq_forms)
        leq = tuple((np.asarray(M, dtype=np.float64), float(cap))
                    for M, cap in self.leq_forms)
        for H, _ in geq:
            if not np.allclose(H, H.T, atol=1e-10):
                raise ValueError("geq-form matrix must be symmetric")
        for M, _ in leq:
            if not np.allclose(M, M.T, atol=1e-10):
                raise ValueError("leq-form matrix must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-9:
                raise ValueError("leq-form matrix must be PSD")
        object.__setattr__(self, "geq_forms", geq)
        object.__setattr__(self, "leq_forms", leq)


@dataclass(frozen=True)
class BoundaryHit:
    distance: float
    active_index: int | None = None

    @property
    def finite(self):
        return math.isfinite(self.distance)


def dim(cs) -> int:
    if isinstance(cs, Interval):
        return 1
    if isinstance(cs, HalfspaceIntersection):
        return cs.A.shape[1]
    if isinstance(cs, LpBall):
        return cs.center.shape[0]
    if isinstance(cs, QuadraticFormSet):
        forms = cs.geq_forms or cs.leq_forms
        return forms[0][0].shape[0]
    raise TypeError(f"not a constraint set: {cs!r}")


def constraint_values(cs, y) -> np.ndarray:
    """Per-constraint g_i(y), each written as g_i(y) <= 0."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.shape[0] != dim(cs):
        raise ValueError(f"dimension mismatch: set is {dim(cs)}-D, y is {y.shape[0]}-D")
    if isinstance(cs, Interval):
        return np.array([y[0] - cs.b, cs.a - y[0]])
    if isinstance(cs, HalfspaceIntersection):
        return cs.A @ y - cs.b
    if isinstance(cs, LpBall):
        return np.array([np.sum(np.abs(y - cs.center) ** cs.p) - cs.bound])
    if isinstance(cs, QuadraticFormSet):
        vals = [c - y @ H @ y for H, c in cs.geq_forms]
        vals += [y @ M @ y - cap for M, cap in cs.leq_forms]
        return np.array(vals)
    raise TypeError(f"not a constraint set: {cs!r}")


def constraint_gradient(cs, index, y) -> np.ndarray:
    """Gradient of g_index (in the <= 0 form) at y."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if isinstance(cs, Interval):
        return np.array([1.0]) if index == 0 else np.array([-1.0])
    if isinstance(cs, HalfspaceIntersection):
        return cs.A[index].copy()
    if isinstance(cs, LpBall):
        d = y - cs.center
        return cs.p * np.sign(d) * np.abs(d) ** (cs.p - 1.0)
    if isinstance(cs, QuadraticFormSet):
        n_geq = len(cs.geq_forms)
        if index < n_geq:
            H, _ = cs.geq_forms[index]
            return -2.0 * (H @ y)
        M, _ = cs.leq_forms[index - n_geq]
        return 2.0 * (M @ y)
    raise TypeError(f"not a constraint set: {cs!r}")


def contains(cs, y, tol=0.0) -> bool:
    """True iff every constraint holds within additive tolerance tol."""
    return bool(np.all(constraint_values(cs, y) <= tol))


def violation(cs, y) -> np.ndarray:
    """Per-constraint violation magnitudes max(0, g_i(y))."""
    return np.maximum(constraint_values(cs, y), 0.0)


# -- ray/boundary distances -------------------------------------------------

def _check_unit(v):
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return v


def halfspace_boundary_distance(A, b, y0, v) -> BoundaryHit:
    """First crossing of the ray y0 + t v with {A y <= b}; inf if none."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    v = _check_unit(v)
    slack = b - A @ y0
    if np.any(slack < INTERIOR_MARGIN):
        raise ValueError("y0 must be strictly interior")
    rate = A @ v
    best_t, best_i = math.inf, None
    for i in range(A.shape[0]):
        if rate[i] > 0.0:
            t = slack[i] / rate[i]
            if t < best_t:
                best_t, best_i = t, i
    return BoundaryHit(best_t, best_i)


def lp_ball_boundary_distance(p, bound, center, y0, v) -> BoundaryHit:
    """Distance to the lp-ball boundary; closed form when y0 is the center."""
    center = np.atleast_1d(np.asarray(center, dtype=np.float64))
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    v = _check_unit(v)
    ball = LpBall(p, bound, center)
    if not contains(ball, y0, tol=0.0):
        raise ValueError("y0 must be feasible")
    if np.array_equal(y0, center):
        t = (bound / np.sum(np.abs(v) ** p)) ** (1.0 / p)
        return BoundaryHit(float(t), 0)
    return boundary_distance_bisect(ball, y0, v)


def _smallest_positive_root(a, b, c):
    """Smallest t > 0 with a t^2 + b t + c = 0; inf if none (numerically stable)."""
    if abs(a) < 1e-300:
        if b == 0.0:
            return math.inf
        t = -c / b
        return t if t > 0.0 else math.inf
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return math.inf
    s = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(s, b))
    roots = []
    if q != 0.0:
        roots.append(c / q)
    if a != 0.0:
        roots.append(q / a)
    pos = [t for t in roots if t > 0.0]
    return min(pos) if pos else math.inf


def quadratic_set_boundary_distance(cs: QuadraticFormSet, y0, v) -> BoundaryHit:
    """First feasibility loss along the ray; each constraint is quadratic in t."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    v = _check_unit(v)
    vals = constraint_values(cs, y0)
    if np.any(vals > -1e-10):
        raise ValueError("y0 must be strictly feasible for all forms")
    best_t, best_i = math.inf, None
    idx = 0
    for H, c in cs.geq_forms:
        # feasible while (y0+tv)^T H (y0+tv) >= c
        a2 = v @ H @ v
        a1 = 2.0 * (y0 @ H @ v)
        a0 = y0 @ H @ y0 - c
        t = _smallest_positive_root(-a2, -a1, -a0)  # crossing of quad - c = 0
        if t < best_t:
            best_t, best_i = t, idx
        idx += 1
    for M, cap in cs.leq_forms:
        a2 = v @ M @ v
        a1 = 2.0 * (y0 @ M @ v)
        a0 = y0 @ M @ y0 - cap
        t = _smallest_positive_root(a2, a1, a0)
        if t < best_t:
            best_t, best_i = t, idx
        idx += 1
    if not math.isfinite(best_t):
        if not cs.leq_forms:
            raise ValueError("ray never leaves the set and no bounding cap is present")
        return BoundaryHit(math.inf, None)
    # validate: still feasible just inside, boundary active at the hit
    assert contains(cs, y0 + best_t * (1.0 - 1e-9) * v, tol=1e-8)
    return BoundaryHit(float(best_t), best_i)


def boundary_distance_bisect(cs, y0, v, t_max=SCAN_TMAX, tol=BISECT_TOL) -> BoundaryHit:
    """Bisection on the feasibility indicator after a doubling bracket scan."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    v = _check_unit(v)
    if not contains(cs, y0, tol=0.0):
        raise ValueError("y0 must be feasible")
    lo, hi = 0.0, 1.0
    while contains(cs, y0 + hi * v, tol=0.0):
        lo = hi
        hi *= 2.0
        if hi > t_max:
            return BoundaryHit(math.inf, None)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if contains(cs, y0 + mid * v, tol=0.0):
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    g = constraint_values(cs, y0 + t * v)
    active = int(np.flatnonzero(g >= np.max(g) - 1e-12)[0])
    return BoundaryHit(float(t), active)


def boundary_hit(cs, y0, v) -> BoundaryHit:
    """Family dispatch: closed forms where available, bisection otherwise."""
    if isinstance(cs, HalfspaceIntersection):
        return halfspace_boundary_distance(cs.A, cs.b, y0, v)
    if isinstance(cs, Interval):
        A = np.array([[1.0], [-1.0]])
        b = np.array([cs.b, -cs.a])
        return halfspace_boundary_distance(A, b, y0, v)
    if isinstance(cs, LpBall):
        return lp_ball_boundary_distance(cs.p, cs.bound, cs.center, y0, v)
    if isinstance(cs, QuadraticFormSet):
        return quadratic_set_boundary_distance(cs, y0, v)
    raise TypeError(f"not a constraint set: {cs!r}")


# -- interior points ---------------------------------------------------------

def chebyshev_center(A, b):
    """Center and radius of the largest ball inscribed in {A y <= b}.

    Solved as the LP: max r s.t. a_i . y + r ||a_i|| <= b_i, r >= 0.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    m, d = A.shape
    c = np.zeros(d + 1)
    c[d] = -1.0
    A_ub = np.hstack([A, np.linalg.norm(A, axis=1, keepdims=True)])
    bounds = [(None, None)] * d + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        raise ValueError(f"polytope infeasible or unbounded: {res.message}")
    y0, radius = res.x[:d], float(res.x[d])
    if radius <= 1e-10:
        raise ValueError("degenerate polytope: inscribed radius <= 1e-10")
    return y0, radius


def star_convexity_probe(cs, y0, n_rays, n_samples, seed):
    """Sampling check of star-convexity about y0.

    Returns the number of random rays on which some interior sample of the
    segment [y0, boundary) is infeasible. Zero is necessary (not sufficient)
    evidence of star-convexity.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    if not contains(cs, y0, tol=0.0):
        raise ValueError("y0 must be feasible")
    rng = np.random.default_rng(seed)
    d = dim(cs)
    violating = 0
    for _ in range(n_rays):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        hit = boundary_hit(cs, y0, v)
        t_end = hit.distance if hit.finite else 1e3
        bad = False
        for k in range(n_samples):
            t = t_end * (1.0 - 1e-9) * (k + 1) / (n_samples + 1)
            if not contains(cs, y0 + t * v, tol=1e-9):
                bad = True
                break
        violating += bad
    return {"violating_ray_count": violating, "n_rays": n_rays}


# -- serialization ------------------------------------------------------------

def set_to_json(cs) -> dict:
    if isinstance(cs, Interval):
        return {"kind": "interval", "a": cs.a, "b": cs.b}
    if isinstance(cs, HalfspaceIntersection):
        return {"kind": "halfspaces", "A": cs.A.tolist(), "b": cs.b.tolist()}
    if isinstance(cs, LpBall):
        return {"kind": "lp_ball", "p": cs.p, "bound": cs.bound,
                "center": cs.center.tolist()}
    if isinstance(cs, QuadraticFormSet):
        return {"kind": "quadratic_forms",
                "geq": [{"H": H.tolist(), "c": c} for H, c in cs.geq_forms],
                "leq": [{"M": M.tolist(), "cap": cap} for M, cap in cs.leq_forms]}
    raise TypeError(f"not a constraint set: {cs!r}")


def set_from_json(doc: dict):
    kind = doc["kind"]
    if kind == "interval":
        return Interval(doc["a"], doc["b"])
    if kind == "halfspaces":
        return HalfspaceIntersection(np.array(doc["A"]), np.array(doc["b"]))
    if kind == "lp_ball":
        return LpBall(doc["p"], doc["bound"], np.array(doc["center"]))
    if kind == "quadratic_forms":
        return QuadraticFormSet(
            geq_forms=tuple((np.array(f["H"]), f["c"]) for f in doc["geq"]),
            leq_forms=tuple((np.array(f["M"]), f["cap"]) for f in doc["leq"]))
    raise ValueError(f"unknown constraint kind: {kind}")
