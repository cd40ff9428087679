"""MLP, Adam, losses, training/evaluation loops, and the baseline methods.

Two kinds of predictors exist: the feasible-by-construction model (network ->
reconnection -> spherical map) and raw-output baselines that emit Cartesian
points directly, optionally trained with a soft violation penalty and/or
corrected at inference by gradient steps on the squared violation.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .autodiff import (Tape, Var, asum, backward, dot, matmul, mean, relu,
                       sin, sqrt)
from .mapping import MapConfig, reconnect, spherical_map


# -- network -----------------------------------------------------------------

@dataclass
class MlpParams:
    """Three affine layers; weights[i] has shape (out, in)."""

    weights: list
    biases: list
    seed: int

    @property
    def dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]


def mlp_init(dims, seed) -> MlpParams:
    """Uniform init in +-1/sqrt(fan_in); dims = (in, h1, h2, out)."""
    if any(d <= 0 for d in dims):
        raise ValueError("all layer dims must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-s, s, size=fan_out))
    return MlpParams(weights, biases, int(seed))


def mlp_forward(tape: Tape, params: MlpParams, x):
    """affine -> relu -> affine -> relu -> affine on a tape.

    x: (n_in,) vector or (B, n_in) batch. Returns the output Var along with
    the parameter Vars (for gradient lookup after backward()).
    """
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    pvars = [tape.leaf(w) for w in params.weights] + [tape.leaf(b) for b in params.biases]
    wv, bv = pvars[:3], pvars[3:]
    h = tape.leaf(x)
    for i in range(3):
        if batched:
            z = matmul(h, _transpose(tape, wv[i]))
            z = _add_row(z, bv[i])
        else:
            z = matmul(wv[i], h) + bv[i]
        h = relu(z) if i < 2 else z
    return h, pvars


def _transpose(tape, w: Var):
    a = w.value
    return tape.custom(a.T, (w,), (lambda g: g.T,))


def _add_row(z: Var, b: Var):
    # broadcast a bias row over a (B, n) batch
    a, bb = z.value, b.value
    return z.tape.custom(a + bb, (z, b), (lambda g: g, lambda g: g.sum(axis=0)))


def mlp_apply(params: MlpParams, x) -> np.ndarray:
    """Plain-numpy forward pass (inference path)."""
    h = np.asarray(x, dtype=np.float64)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b if h.ndim == 2 else w @ h + b
        if i < 2:
            h = np.maximum(h, 0.0)
    return h


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, tensors: list, grads: list):
    """Standard bias-corrected Adam update, in place on `tensors`."""
    if not state.m:
        state.m = [np.zeros_like(t) for t in tensors]
        state.v = [np.zeros_like(t) for t in tensors]
    state.step_count += 1
    t = state.step_count
    for i, (p, g) in enumerate(zip(tensors, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = state.m[i] / (1 - state.beta1 ** t)
        v_hat = state.v[i] / (1 - state.beta2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# -- losses --------------------------------------------------------------------

LOSS_KINDS = ("ssl", "sl", "ssl_sc", "sl_sc")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "ssl"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind in ("ssl", "sl") and self.lam != 0.0:
            raise ValueError("lambda must be 0 for pure ssl/sl losses")
        if self.lam < 0.0:
            raise ValueError("lambda must be nonnegative")

    @property
    def supervised(self):
        return self.kind.startswith("sl")

    @property
    def penalized(self):
        return self.kind.endswith("_sc")


def violation_node(cs, y: Var, smooth_eps=1e-12):
    """Differentiable sum of per-constraint violations relu(g_i(y)).

    |.| inside lp-norms is smoothed as sqrt(y^2 + eps) to keep the gradient
    finite at zero coordinates (only the training penalty uses this; metrics
    use the exact geometry.violation).
    """
    if isinstance(cs, geometry.HalfspaceIntersection):
        return asum(relu(matmul(cs.A, y) - cs.b))
    if isinstance(cs, geometry.Interval):
        return relu(y[0] - cs.b) + relu(cs.a - y[0])
    if isinstance(cs, geometry.LpBall):
        d = y - cs.center
        mag = sqrt(d * d + smooth_eps)
        return relu(asum(mag ** cs.p) - cs.bound)
    if isinstance(cs, geometry.QuadraticFormSet):
        total = None
        for H, c in cs.geq_forms:
            term = relu(c - dot(y, matmul(H, y)))
            total = term if total is None else total + term
        for M, cap in cs.leq_forms:
            term = relu(dot(y, matmul(M, y)) - cap)
            total = term if total is None else total + term
        return total
    raise TypeError(f"not a constraint set: {cs!r}")


def loss_node(spec: LossSpec, instance, y_hat: Var, objective_fn):
    """Loss for one instance: objective (ssl) or MSE to the label (sl),
    plus lam * sum of violations for *_sc kinds."""
    if spec.supervised:
        if instance.label is None:
            raise ValueError("sl losses require a label on the instance")
        d = y_hat - instance.label
        out = mean(d * d)
    else:
        out = objective_fn(instance, y_hat)
    if spec.penalized and spec.lam > 0.0:
        out = out + spec.lam * violation_node(instance.set, y_hat)
    return out


# -- post-correction (simplified DC3-style inference fix-up) -------------------

def post_correct(y, cs, max_steps=200, step_size=0.05):
    """Gradient descent on total squared violation until feasible or budget out.

    Halves the step whenever the squared violation increases. Returns
    (y, n_steps, final_total_violation).
    """
    y = np.array(y, dtype=np.float64)

    def total_sq(yy):
        return float(np.sum(geometry.violation(cs, yy) ** 2))

    def grad_sq(yy):
        g = np.zeros_like(yy)
        vio = geometry.violation(cs, yy)
        for i in np.flatnonzero(vio > 0.0):
            g += 2.0 * vio[i] * geometry.constraint_gradient(cs, int(i), yy)
        return g

    cur = total_sq(y)
    steps = 0
    while cur > 0.0 and steps < max_steps:
        cand = y - step_size * grad_sq(y)
        nxt = total_sq(cand)
        if nxt >= cur:
            step_size *= 0.5
            if step_size < 1e-16:
                break
        else:
            y, cur = cand, nxt
        steps += 1
    return y, steps, float(np.sum(geometry.violation(cs, y)))


# -- training ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0


def _flatten(params: MlpParams):
    return params.weights + params.biases


def train_hop(dataset, params: MlpParams, objective_fn, cfg: TrainConfig,
              map_cfg: MapConfig = MapConfig()):
    """Feasible-by-construction training loop.

    Per batch: network -> reconnect -> spherical map -> objective loss ->
    backward -> Adam. Deterministic given cfg.seed. Returns (params, history)
    with history = mean loss per epoch.
    """
    return _train(dataset, params, objective_fn, cfg, LossSpec("ssl"),
                  map_cfg=map_cfg, use_map=True)


def train_baseline(dataset, params: MlpParams, objective_fn, cfg: TrainConfig,
                   loss_spec: LossSpec):
    """Raw-output baseline training (NN-SSL/SL with optional soft penalty)."""
    return _train(dataset, params, objective_fn, cfg, loss_spec,
                  map_cfg=None, use_map=False)


def _train(dataset, params, objective_fn, cfg, loss_spec, map_cfg, use_map):
    rng = np.random.default_rng(cfg.seed)
    opt = AdamState(lr=cfg.lr)
    history = []
    n = len(dataset)
    d = geometry.dim(dataset[0].set)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss, epoch_batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            batch = [dataset[j] for j in order[start:start + cfg.batch_size]]
            tape = Tape()
            X = np.stack([inst.x for inst in batch])
            out, pvars = mlp_forward(tape, params, X)
            total = None
            for i, inst in enumerate(batch):
                row = out[i]
                if use_map:
                    try:
                        code = reconnect(row[0:d], row[d])
                    except ValueError as exc:
                        raise ValueError(f"degenerate direction at batch item {i}: {exc}")
                    y_hat = spherical_map(inst.y0, code, inst.set, map_cfg)
                else:
                    y_hat = row
                li = loss_node(loss_spec, inst, y_hat, objective_fn)
                total = li if total is None else total + li
            loss = total * (1.0 / len(batch))
            grads_table = backward(loss)
            tensors = _flatten(params)
            grads = [grads_table.wrt(pv) for pv in pvars]
            adam_step(opt, tensors, grads)
            epoch_loss += float(loss.value)
            epoch_batches += 1
        history.append(epoch_loss / max(epoch_batches, 1))
    return params, history


# -- prediction & evaluation -----------------------------------------------------

def hop_predict(params: MlpParams, instance, map_cfg: MapConfig = MapConfig()):
    """Numpy inference: network output mapped onto the feasible set."""
    d = geometry.dim(instance.set)
    raw = mlp_apply(params, instance.x)
    code = reconnect(raw[0:d], raw[d])
    return spherical_map(instance.y0, code, instance.set, map_cfg)


def make_hop_predictor(params, map_cfg: MapConfig = MapConfig()):
    return lambda inst: hop_predict(params, inst, map_cfg)


def make_raw_predictor(params, correct_steps=0, correct_step_size=0.05):
    def predict(inst):
        y = mlp_apply(params, inst.x)
        if correct_steps > 0:
            y, _, _ = post_correct(y, inst.set, max_steps=correct_steps,
                                   step_size=correct_step_size)
        return y
    return predict


@dataclass
class MetricsReport:
    obj_mean: float
    max_cons: float
    mean_cons: float
    vio_rate: float
    time_per_instance: float
    n: int

    def to_json(self):
        return {"obj_mean": self.obj_mean, "max_cons": self.max_cons,
                "mean_cons": self.mean_cons, "vio_rate": self.vio_rate,
                "time_per_instance": self.time_per_instance, "n": self.n}


def evaluate(dataset, predictor, objective_fn) -> MetricsReport:
    """Per-instance objective/violation/timing, aggregated benchmark-style.

    max_cons = max over instances of the max per-constraint violation;
    mean_cons = mean over instances of the mean violation; vio_rate = share
    of instances with any violation > 0; time = total wall time / n.
    """
    objs, maxv, meanv, viol = [], [], [], 0
    t_total = 0.0
    for inst in dataset:
        t0 = time.perf_counter()
        y = predictor(inst)
        t_total += time.perf_counter() - t0
        vio = geometry.violation(inst.set, y)
        objs.append(float(objective_fn(inst, y)))
        maxv.append(float(vio.max()))
        meanv.append(float(vio.mean()))
        viol += bool(np.any(vio > 0.0))
    n = len(dataset)
    return MetricsReport(
        obj_mean=float(np.mean(objs)), max_cons=float(np.max(maxv)),
        mean_cons=float(np.mean(meanv)), vio_rate=viol / n,
        time_per_instance=t_total / n, n=n)


# -- checkpoint IO ----------------------------------------------------------------

def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def save_checkpoint(path, params: MlpParams, extra=None):
    doc = {
        "dims": params.dims,
        "weights": [w.ravel().tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "seed": params.seed,
    }
    doc.update(extra or {})
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    dims = doc["dims"]
    weights = [np.array(w).reshape(dims[i + 1], dims[i])
               for i, w in enumerate(doc["weights"])]
    biases = [np.array(b) for b in doc["biases"]]
    return MlpParams(weights, biases, doc.get("seed", 0)), doc
