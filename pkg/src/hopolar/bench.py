"""Benchmark problems: synthetic objectives, dataset generation, the MISO
beamforming reformulation, and per-instance reference oracles.

Each instance owns an RNG stream derived from (dataset seed, index), so
generation is deterministic and order-independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .autodiff import Tape, Var, backward, dot, log, matmul, sin
from .learning import AdamState, adam_step
from .mapping import MapConfig, polar2d_map, reconnect, spherical_map

LOG2 = math.log(2.0)


# -- objectives ----------------------------------------------------------------

@dataclass(frozen=True)
class SinusoidalQP:
    """f(y) = 1/2 y^T Q y + p^T sin(beta * y)."""

    Q: np.ndarray
    p: np.ndarray
    beta: float


@dataclass(frozen=True)
class QP:
    """f(y) = 1/2 y^T Q y + p^T y."""

    Q: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class MisoWSR:
    """Weighted sum rate over the real-spliced beamformer stack."""

    alphas: np.ndarray
    h_tildes: tuple  # per-user 2M x 2M real channel outer-product blocks
    sigma2: float

    @property
    def n_users(self):
        return len(self.h_tildes)

    @property
    def block(self):
        return self.h_tildes[0].shape[0]  # 2M


@dataclass
class ProblemInstance:
    family: str
    index: int
    x: np.ndarray           # network input
    objective: object
    set: object
    y0: np.ndarray
    label: np.ndarray | None = None
    maximize: bool = False


def sinusoidal_qp(Q, p, beta, y):
    return 0.5 * dot(y, matmul(Q, y)) + dot(p, sin(y * beta if isinstance(y, Var)
                                                   else beta * np.asarray(y, dtype=np.float64)))


def qp_objective(Q, p, y):
    return 0.5 * dot(y, matmul(Q, y)) + dot(p, y)


def _wsr_terms(obj: MisoWSR, w):
    """Per-user (signal, interference+noise) pairs; w may be Var or ndarray."""
    blk = obj.block
    chunks = [w[k * blk:(k + 1) * blk] for k in range(obj.n_users)]
    quads = [[dot(chunks[j], matmul(obj.h_tildes[k], chunks[j]))
              for j in range(obj.n_users)] for k in range(obj.n_users)]
    pairs = []
    for k in range(obj.n_users):
        interf = obj.sigma2
        for j in range(obj.n_users):
            if j != k:
                interf = quads[k][j] + interf
        pairs.append((quads[k][k], interf))
    return pairs


def wsr_objective(obj: MisoWSR, w):
    out = None
    for k, (sig, interf) in enumerate(_wsr_terms(obj, w)):
        rate = log(sig / interf + 1.0) * (float(obj.alphas[k]) / LOG2)
        out = rate if out is None else out + rate
    return out


def objective_value(instance: ProblemInstance, y):
    """Reported objective (WSR for MISO; f(y) for the synthetic problems)."""
    obj = instance.objective
    if isinstance(obj, SinusoidalQP):
        return sinusoidal_qp(obj.Q, obj.p, obj.beta, y)
    if isinstance(obj, QP):
        return qp_objective(obj.Q, obj.p, y)
    if isinstance(obj, MisoWSR):
        return wsr_objective(obj, y)
    raise TypeError(f"unknown objective {obj!r}")


def loss_value(instance: ProblemInstance, y):
    """Minimization target: the objective, negated for maximize problems."""
    val = objective_value(instance, y)
    return -val if instance.maximize else val


# -- MISO reformulation -----------------------------------------------------------

@dataclass(frozen=True)
class MisoRaw:
    h: np.ndarray            # (U, M) complex channel vectors
    alphas: np.ndarray       # priority weights, sum 1
    deltas: np.ndarray       # QoS rate requirements
    sigma2: float = 0.01
    p_max_dbm: float = 33.0
    p_c_dbm: float = 30.0

    def __post_init__(self):
        U = self.h.shape[0]
        if U < 1 or self.h.shape[1] < 1:
            raise ValueError("need at least one user and one antenna")
        if abs(float(np.sum(self.alphas)) - 1.0) > 1e-9 or np.any(self.alphas < 0):
            raise ValueError("alphas must be nonnegative and sum to 1")
        if np.any(self.deltas < 0):
            raise ValueError("QoS rates must be nonnegative")

    @property
    def n_users(self):
        return self.h.shape[0]

    @property
    def n_antennas(self):
        return self.h.shape[1]


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)


def channel_block(h_k: np.ndarray) -> np.ndarray:
    """Real 2M x 2M splicing [[Re, -Im], [Im, Re]] of the outer product h h^H."""
    outer = np.outer(h_k, np.conj(h_k))
    re, im = outer.real, outer.imag
    return np.block([[re, -im], [im, re]])


def splice_beamformer(w: np.ndarray) -> np.ndarray:
    """Complex (U, M) beamformers -> stacked real vector of length 2MU."""
    return np.concatenate([np.concatenate([wk.real, wk.imag]) for wk in w])


def sinr_and_wsr(raw: MisoRaw, wbar: np.ndarray):
    """Per-user SINR and WSR from the real-spliced stacked beamformer."""
    if raw.sigma2 <= 0:
        raise ValueError("noise power must be positive")
    obj = MisoWSR(raw.alphas, tuple(channel_block(hk) for hk in raw.h), raw.sigma2)
    sinr = np.array([float(sig) / float(interf)
                     for sig, interf in _wsr_terms(obj, np.asarray(wbar, dtype=np.float64))])
    wsr = float(np.sum(raw.alphas * np.log2(1.0 + sinr)))
    return sinr, wsr


def miso_reformulate(raw: MisoRaw):
    """Build the quadratic-form constraint set and the WSR objective.

    QoS for user k becomes wbar^T Hbar_k wbar >= omega_k sigma^2 with
    omega_k = 2^delta_k - 1; the power budget is wbar^T wbar <= P_lin where
    P_lin is (P_max - P_c) converted from dBm to linear milliwatts.
    """
    U, M = raw.n_users, raw.n_antennas
    p_lin = dbm_to_mw(raw.p_max_dbm) - dbm_to_mw(raw.p_c_dbm)
    if p_lin <= 0:
        raise ValueError("power budget is nonpositive after dBm conversion")
    omegas = 2.0 ** raw.deltas - 1.0
    h_tildes = tuple(channel_block(hk) for hk in raw.h)
    geq = []
    for k in range(U):
        blocks = [h_tildes[k] if j == k else -omegas[k] * h_tildes[k] for j in range(U)]
        hbar = np.zeros((2 * M * U, 2 * M * U))
        for j, blk in enumerate(blocks):
            s = 2 * M * j
            hbar[s:s + 2 * M, s:s + 2 * M] = blk
        geq.append((hbar, float(omegas[k] * raw.sigma2)))
    cap = (np.eye(2 * M * U), float(p_lin))
    cs = geometry.QuadraticFormSet(geq_forms=tuple(geq), leq_forms=(cap,))
    obj = MisoWSR(raw.alphas, h_tildes, raw.sigma2)
    return cs, obj


def miso_interior_point(cs, raw: MisoRaw, seed=0, margin=1e-3, max_steps=500):
    """Strictly feasible stacked beamformer, or None if none is found.

    Starts from matched beamformers at half the power budget, then ascends the
    worst QoS margin min_k (SINR_k - omega_k) by projected gradient on the
    fixed-power sphere.
    """
    U, M = raw.n_users, raw.n_antennas
    p_lin = dbm_to_mw(raw.p_max_dbm) - dbm_to_mw(raw.p_c_dbm)
    omegas = 2.0 ** raw.deltas - 1.0
    radius = math.sqrt(0.5 * p_lin)
    w = np.stack([raw.h[k] / np.linalg.norm(raw.h[k]) for k in range(U)])
    w *= radius / math.sqrt(U)
    wbar = splice_beamformer(w)
    h_tildes = [channel_block(hk) for hk in raw.h]
    blk = 2 * M

    def margins(wb):
        chunks = wb.reshape(U, blk)
        sig = np.array([chunks[k] @ h_tildes[k] @ chunks[k] for k in range(U)])
        interf = np.array([sum(chunks[j] @ h_tildes[k] @ chunks[j]
                               for j in range(U) if j != k) + raw.sigma2
                           for k in range(U)])
        return sig / interf - omegas

    for _ in range(max_steps):
        m = margins(wbar)
        if float(np.min(m)) >= margin:
            break
        k = int(np.argmin(m))
        chunks = wbar.reshape(U, blk)
        sig = chunks[k] @ h_tildes[k] @ chunks[k]
        interf = sum(chunks[j] @ h_tildes[k] @ chunks[j]
                     for j in range(U) if j != k) + raw.sigma2
        g = np.zeros_like(chunks)
        g[k] = 2.0 * h_tildes[k] @ chunks[k] / interf
        for j in range(U):
            if j != k:
                g[j] = -2.0 * sig / interf ** 2 * (h_tildes[k] @ chunks[j])
        g = g.ravel()
        step = 0.1 * np.linalg.norm(wbar) / max(np.linalg.norm(g), 1e-12)
        wbar = wbar + step * g
        wbar *= radius / np.linalg.norm(wbar)
    if float(np.min(margins(wbar))) < margin:
        return None
    if not geometry.contains(cs, wbar, tol=0.0):
        return None
    return wbar


# -- dataset generation -------------------------------------------------------------

TRAIN_FRACTION = 0.7


def split(dataset):
    cut = int(len(dataset) * TRAIN_FRACTION)
    return dataset[:cut], dataset[cut:]


def _psd_matrix(rng, d):
    g = rng.standard_normal((d, d))
    return g.T @ g + np.eye(d)


def regular_polygon_directions(sides=8):
    angles = 2.0 * math.pi * np.arange(sides) / sides
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def gen_polygon_dataset(n, seed, beta=1.0):
    """2-D sinusoidal QP over a random 8-sided polygon; x is the offset vector b."""
    if n <= 0:
        raise ValueError("n must be positive")
    g_rng = np.random.default_rng([int(seed)])
    A = regular_polygon_directions(8)
    Q = _psd_matrix(g_rng, 2)
    p_base = np.array([30.0, 30.0])
    out = []
    for i in range(n):
        rng = np.random.default_rng([int(seed), i])
        for _ in range(200):
            b = rng.uniform(0.0, 2.0, size=8)
            try:
                y0, radius = geometry.chebyshev_center(A, b)
            except ValueError:
                continue
            if radius >= 1e-3:
                break
        else:
            raise RuntimeError("polygon generation exhausted its retry budget")
        q = rng.uniform(0.0, 2.0, size=2)
        obj = SinusoidalQP(Q, p_base * q, beta)
        out.append(ProblemInstance("polygon", i, b.copy(), obj,
                                   geometry.HalfspaceIntersection(A, b), y0))
    return out


def gen_lp_dataset(n, seed):
    """QP over the l_0.5 unit ball; x is the per-instance linear term."""
    if n <= 0:
        raise ValueError("n must be positive")
    g_rng = np.random.default_rng([int(seed)])
    Q = _psd_matrix(g_rng, 2)
    ball = geometry.LpBall(0.5, 1.0, np.zeros(2))
    out = []
    for i in range(n):
        rng = np.random.default_rng([int(seed), i])
        p = rng.standard_normal(2)
        out.append(ProblemInstance("lp", i, p.copy(), QP(Q, p), ball, np.zeros(2)))
    return out


def gen_highdim_dataset(n, d, seed, beta=30.0):
    """Semi-unbounded sinusoidal QP: d random halfspaces A y <= 1, y0 = 0."""
    if n <= 0 or d <= 0:
        raise ValueError("n and d must be positive")
    g_rng = np.random.default_rng([int(seed)])
    A = g_rng.standard_normal((d, d))
    Q = _psd_matrix(g_rng, d)
    cs = geometry.HalfspaceIntersection(A, np.ones(d))
    out = []
    for i in range(n):
        rng = np.random.default_rng([int(seed), i])
        p = rng.normal(-10.0, 1.0, size=d)
        out.append(ProblemInstance("highdim", i, p.copy(),
                                   SinusoidalQP(Q, p, beta), cs, np.zeros(d)))
    return out


def gen_miso_dataset(n, n_users, n_antennas, seed):
    """QoS-MISO weighted-sum-rate instances; x is the flattened channel blocks.

    Instances whose interior-point search fails are rejected and resampled.
    Returns (instances, rejection_count).
    """
    if n <= 0:
        raise ValueError("n must be positive")
    out = []
    rejections = 0
    i = 0
    attempt = 0
    while len(out) < n:
        rng = np.random.default_rng([int(seed), attempt])
        attempt += 1
        if attempt > 50 * n:
            raise RuntimeError("MISO generation exhausted its retry budget")
        h = rng.standard_normal((n_users, n_antennas)) \
            + 1j * rng.standard_normal((n_users, n_antennas))
        alphas = rng.uniform(0.0, 1.0, size=n_users)
        alphas = alphas / alphas.sum()
        deltas = rng.uniform(0.0, 1.0 / 3.0, size=n_users)
        raw = MisoRaw(h, alphas, deltas)
        cs, obj = miso_reformulate(raw)
        y0 = miso_interior_point(cs, raw, seed=attempt)
        if y0 is None:
            rejections += 1
            continue
        x = np.concatenate([blk.ravel() for blk in obj.h_tildes])
        out.append(ProblemInstance("miso", i, x, obj, cs, y0, maximize=True))
        i += 1
    result = out
    return result, rejections


# -- reference oracles -----------------------------------------------------------

def _logit(u):
    u = min(max(u, 1e-9), 1 - 1e-9)
    return math.log(u / (1.0 - u))


def _refine_codes(instance, z0, steps, lr, use_polar2d):
    """Adam on raw codes through the exact map; returns the best point visited.

    The learning rate stays at lr for the first 60% of the run (exploration),
    then decays geometrically to lr/100 so late iterations polish the
    incumbent instead of bouncing around it.
    """
    z = np.array(z0, dtype=np.float64)
    opt = AdamState(lr=lr)
    hold = int(0.6 * steps)
    decay = (0.01) ** (1.0 / max(steps - hold, 1))
    best_y, best_f = None, math.inf
    for step in range(steps + 1):
        tape = Tape()
        zv = tape.leaf(z)
        if use_polar2d:
            y = polar2d_map(instance.y0, zv[0], zv[1], instance.set)
        else:
            d = geometry.dim(instance.set)
            code = reconnect(zv[0:d], zv[d])
            y = spherical_map(instance.y0, code, instance.set)
        f = loss_value(instance, y)
        if float(f.value) < best_f:
            best_f, best_y = float(f.value), y.value.copy()
        g = backward(f).wrt(zv)
        adam_step(opt, [z], [g])
        if step >= hold:
            opt.lr *= decay
    return best_y, best_f


def grid_oracle_2d(instance, n_theta=48, n_r=24, refine_steps=300, lr=0.1):
    """Best objective over a polar grid mapped into the set, plus local refinement.

    Returns (y_star, f_star) in the reported-objective orientation.
    """
    if geometry.dim(instance.set) != 2:
        raise ValueError("grid oracle requires a 2-D instance")
    y0 = instance.y0
    best_f, best_code = math.inf, (0.5, 0.5)
    for j in range(n_theta):
        theta = 2.0 * math.pi * (j + 0.5) / n_theta
        v = np.array([math.cos(theta), math.sin(theta)])
        hit = geometry.boundary_hit(instance.set, y0, v)
        if not hit.finite:
            raise ValueError("grid oracle requires a bounded set")
        for k in range(n_r):
            frac = (k + 0.5) / n_r
            y = y0 + frac * hit.distance * v
            f = float(loss_value(instance, y))
            if f < best_f:
                best_f = f
                best_code = ((j + 0.5) / n_theta, frac)
    z0 = [_logit(best_code[0]), _logit(best_code[1])]
    y_ref, f_ref = _refine_codes(instance, z0, refine_steps, lr, use_polar2d=True)
    if f_ref > best_f:  # refinement never loses the grid winner
        y_ref, f_ref = None, best_f
    if y_ref is None:
        theta = 2.0 * math.pi * best_code[0]
        v = np.array([math.cos(theta), math.sin(theta)])
        y_ref = y0 + best_code[1] * geometry.boundary_hit(instance.set, y0, v).distance * v
    f_star = -f_ref if instance.maximize else f_ref
    return y_ref, f_star


def polar_multistart_reference(instance, n_starts=16, steps=300, seed=0, lr=0.1):
    """Multi-start direct optimization over raw codes through the spherical map.

    Unconstrained search over codes covers the feasible set because the map is
    a bijection onto the interior; every iterate is feasible by construction.
    Returns (y_star, f_star) in the reported-objective orientation.
    """
    rng = np.random.default_rng(seed)
    d = geometry.dim(instance.set)
    best_y, best_f = None, math.inf
    for s in range(n_starts):
        z0 = np.concatenate([rng.standard_normal(d), rng.standard_normal(1)])
        if np.linalg.norm(z0[:d]) < 1e-6:
            z0[:d] = np.ones(d)
        y, f = _refine_codes(instance, z0, steps, lr, use_polar2d=False)
        if f < best_f:
            best_f, best_y = f, y
    if best_y is None:
        best_y = instance.y0.copy()
        best_f = float(loss_value(instance, best_y))
    f_star = -best_f if instance.maximize else best_f
    return best_y, f_star


def add_labels(dataset, oracle):
    """Attach oracle solutions as supervised-learning labels, in place."""
    for inst in dataset:
        y_star, _ = oracle(inst)
        inst.label = np.asarray(y_star, dtype=np.float64)
    return dataset


# -- serialization --------------------------------------------------------------

def _objective_to_json(obj):
    if isinstance(obj, SinusoidalQP):
        return {"kind": "sinusoidal_qp", "Q": obj.Q.tolist(), "p": obj.p.tolist(),
                "beta": obj.beta}
    if isinstance(obj, QP):
        return {"kind": "qp", "Q": obj.Q.tolist(), "p": obj.p.tolist()}
    if isinstance(obj, MisoWSR):
        return {"kind": "miso_wsr", "alphas": obj.alphas.tolist(),
                "h_tildes": [h.tolist() for h in obj.h_tildes], "sigma2": obj.sigma2}
    raise TypeError(f"unknown objective {obj!r}")


def _objective_from_json(doc):
    kind = doc["kind"]
    if kind == "sinusoidal_qp":
        return SinusoidalQP(np.array(doc["Q"]), np.array(doc["p"]), doc["beta"])
    if kind == "qp":
        return QP(np.array(doc["Q"]), np.array(doc["p"]))
    if kind == "miso_wsr":
        return MisoWSR(np.array(doc["alphas"]),
                       tuple(np.array(h) for h in doc["h_tildes"]), doc["sigma2"])
    raise ValueError(f"unknown objective kind {kind}")


def save_dataset(path, dataset, meta):
    with open(path, "w") as fh:
        fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for inst in dataset:
            doc = {
                "family": inst.family, "index": inst.index,
                "x": inst.x.tolist(),
                "objective": _objective_to_json(inst.objective),
                "constraints": geometry.set_to_json(inst.set),
                "y0": inst.y0.tolist(),
                "label": None if inst.label is None else inst.label.tolist(),
                "maximize": inst.maximize,
            }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def load_dataset(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta = json.loads(lines[0])["meta"]
    out = []
    for line in lines[1:]:
        doc = json.loads(line)
        out.append(ProblemInstance(
            family=doc["family"], index=doc["index"],
            x=np.array(doc["x"]),
            objective=_objective_from_json(doc["objective"]),
            set=geometry.set_from_json(doc["constraints"]),
            y0=np.array(doc["y0"]),
            label=None if doc["label"] is None else np.array(doc["label"]),
            maximize=doc["maximize"]))
    return out, meta
