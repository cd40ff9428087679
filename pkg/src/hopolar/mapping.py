"""Bijective polar/spherical maps from raw network outputs to feasible points.

The forward chain is: raw outputs (z_theta, z_r) -> reconnection to a unit
direction and a radial fraction in [0, 1) -> angle-space scaling against the
exact boundary distance -> feasible Cartesian point. Every function here
accepts either plain numpy values or autodiff Vars; with Vars, the boundary
distance enters the tape as a custom node whose backward pass uses the active
constraint's gradient (implicit differentiation of g(y0 + R v) = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .autodiff import (Var, absolute, atan, concat, cos, l2norm,
                       minimum_const, relu, sigmoid, sin, tan, tanh)

# Radial fractions are kept strictly below 1 so mapped points never reach the
# boundary even after floating-point rounding of tan/atan.
ZBAR_CAP = 1.0 - 1e-9


@dataclass(frozen=True)
class PolarCode:
    """Unit direction and radial fraction produced by reconnection."""

    v_theta: object  # vector (ndarray or Var)
    zbar_r: object   # scalar in [0, 1)

    def values(self):
        v = self.v_theta.value if isinstance(self.v_theta, Var) else np.asarray(self.v_theta)
        z = float(self.zbar_r.value) if isinstance(self.zbar_r, Var) else float(self.zbar_r)
        return v, z


@dataclass(frozen=True)
class MapConfig:
    epsilon: float = 1e-3  # clamp keeping psi <= pi/2 - epsilon

    def __post_init__(self):
        if not 0.0 < self.epsilon < math.pi / 4:
            raise ValueError("epsilon must lie in (0, pi/4)")


def _mul(a, b):
    # Keep the Var operand on the left so numpy never builds object arrays.
    if isinstance(b, Var) and not isinstance(a, Var):
        return b * a
    return a * b


def map_1d(a, b, z):
    """Interval map y = a + logistic(z) * (b - a); output strictly in (a, b)."""
    if a >= b:
        raise ValueError("map_1d requires a < b")
    # the logistic rounds to exactly 1.0 for z beyond ~37; cap to stay interior
    return a + minimum_const(sigmoid(z), ZBAR_CAP) * (b - a)


def reconnect(z_theta, z_r) -> PolarCode:
    """Raw outputs -> (unit direction, radial fraction).

    The direction flips sign when z_r < 0, which removes the non-negativity
    truncation on the radial coordinate; the fraction is tanh(|z_r|) so the
    full range [0, 1) is covered.
    """
    norm_val = (float(l2norm(z_theta.value)) if isinstance(z_theta, Var)
                else float(np.linalg.norm(z_theta)))
    if norm_val < 1e-12:
        raise ValueError("degenerate direction: ||z_theta|| < 1e-12")
    zr_val = float(z_r.value) if isinstance(z_r, Var) else float(z_r)
    sign = 1.0 if zr_val >= 0.0 else -1.0
    v = (z_theta / l2norm(z_theta)) * sign
    zbar = minimum_const(tanh(absolute(z_r)), ZBAR_CAP)
    return PolarCode(v, zbar)


def _ray_distance(cs, y0, v_np):
    """Boundary distance along v plus dR/dv from the active constraint."""
    hit = geometry.boundary_hit(cs, y0, v_np)
    if not hit.finite:
        return math.inf, None
    y_hit = y0 + hit.distance * v_np
    g = geometry.constraint_gradient(cs, hit.active_index, y_hit)
    # g(y0 + R v) = 0  =>  dR = -R (g . dv) / (g . v)
    denom = float(g @ v_np)
    d_r_dv = -hit.distance * g / denom
    return hit.distance, d_r_dv


def _distance_node(cs, y0, v):
    """Boundary distance; a custom tape node when the direction is a Var."""
    if isinstance(v, Var):
        r, d_r_dv = _ray_distance(cs, y0, v.value)
        if not math.isfinite(r):
            return math.inf
        return v.tape.custom(r, (v,), (lambda gr: float(gr) * d_r_dv,))
    r, _ = _ray_distance(cs, y0, np.asarray(v, dtype=np.float64))
    return r


def spherical_map(y0, code: PolarCode, cs, cfg: MapConfig = MapConfig()):
    """Map a polar code to a strictly feasible point of cs.

    phi = atan(R) (pi/2 for unbounded rays), clamped to pi/2 - epsilon;
    psi = zbar_r * phi; y = y0 + v * tan(psi). Since zbar_r < 1 the result
    stays strictly inside the set.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    if not geometry.contains(cs, y0, tol=0.0):
        raise ValueError("y0 must be feasible")
    v, zbar = code.v_theta, code.zbar_r
    phi_cap = math.pi / 2 - cfg.epsilon
    r = _distance_node(cs, y0, v)
    if isinstance(r, float) and math.isinf(r):
        phi = phi_cap  # clamp saturates; no gradient through R
    else:
        phi = minimum_const(atan(r), phi_cap)
    psi = _mul(zbar, phi)
    return _mul(v, tan(psi)) + y0


def polar2d_map(y0, z_theta, z_r, cs):
    """2-D polar map: theta = 2*pi*logistic(z_theta), radius fraction logistic(z_r)."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    if geometry.dim(cs) != 2:
        raise ValueError("polar2d_map requires a 2-D set")
    if not geometry.contains(cs, y0, tol=0.0):
        raise ValueError("y0 must be feasible")
    theta = (2.0 * math.pi) * sigmoid(z_theta)
    v = concat([cos(theta), sin(theta)])
    r_frac = sigmoid(z_r)
    dist = _distance_node(cs, y0, v)
    if isinstance(dist, float) and math.isinf(dist):
        raise ValueError("unbounded direction: use spherical_map instead")
    return _mul(v, _mul(r_frac, dist)) + y0


def inverse_spherical(y0, y, cs, cfg: MapConfig = MapConfig()) -> PolarCode:
    """Inverse of spherical_map on strictly interior points y != y0."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    delta = y - y0
    r = float(np.linalg.norm(delta))
    if r == 0.0:
        raise ValueError("y = y0: direction undefined")
    if not geometry.contains(cs, y, tol=0.0):
        raise ValueError("y must be inside the set")
    v = delta / r
    phi_cap = math.pi / 2 - cfg.epsilon
    dist, _ = _ray_distance(cs, y0, v)
    phi = phi_cap if not math.isfinite(dist) else min(math.atan(dist), phi_cap)
    psi = math.atan(r)
    zbar = psi / phi
    if zbar >= 1.0:
        raise ValueError("y lies on/outside the representable region "
                         "(boundary or beyond the epsilon horizon)")
    return PolarCode(v, zbar)


def polar_reconnect(r, theta):
    """Domain extension removing the r >= 0 truncation: (-r, t) -> (r, t + pi)."""
    if r < 0.0:
        return -r, theta + math.pi
    return r, theta


def raw_code(v_theta, zbar_r) -> PolarCode:
    """Validated PolarCode from explicit (unit direction, fraction) values."""
    v = np.atleast_1d(np.asarray(v_theta, dtype=np.float64))
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("v_theta must be a unit vector")
    z = float(zbar_r)
    if not 0.0 <= z < 1.0:
        raise ValueError("zbar_r must lie in [0, 1)")
    return PolarCode(v, z)


# -- Jacobian verification ---------------------------------------------------

def jacobian_det_analytic(d: int, psi: float) -> float:
    """Volume element of (psi, sphere coords) -> y0 + v tan(psi): tan^(d-1) sec^2."""
    if not 0.0 < psi < math.pi / 2:
        raise ValueError("psi must lie in (0, pi/2)")
    return math.tan(psi) ** (d - 1) / math.cos(psi) ** 2


def tangent_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space of the unit sphere at v, rows w_i."""
    v = np.asarray(v, dtype=np.float64)
    d = v.shape[0]
    basis = []
    for e in np.eye(d):
        w = e - (e @ v) * v
        for u in basis:
            w = w - (w @ u) * u
        n = np.linalg.norm(w)
        if n > 1e-8:
            basis.append(w / n)
        if len(basis) == d - 1:
            break
    return np.array(basis)


def jacobian_det_numeric(d: int, psi: float, v=None, h=1e-6) -> float:
    """Finite-difference Jacobian determinant of the spherical radial map.

    Parametrizes the sphere near v by y(psi, u) = tan(psi) * unit(v + sum u_i w_i)
    with an orthonormal tangent basis {w_i} and differences each column centrally.
    """
    if not 0.0 < psi < math.pi / 2:
        raise ValueError("psi must lie in (0, pi/2)")
    if v is None:
        v = np.ones(d) / math.sqrt(d)
    v = np.asarray(v, dtype=np.float64)
    v = v / np.linalg.norm(v)
    W = tangent_basis(v)

    def f(p, u):
        direction = v + W.T @ u
        direction = direction / np.linalg.norm(direction)
        return math.tan(p) * direction

    cols = [(f(psi + h, np.zeros(d - 1)) - f(psi - h, np.zeros(d - 1))) / (2 * h)]
    for i in range(d - 1):
        e = np.zeros(d - 1)
        e[i] = h
        cols.append((f(psi, e) - f(psi, -e)) / (2 * h))
    return abs(float(np.linalg.det(np.array(cols).T)))
