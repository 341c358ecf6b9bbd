"""Small feed-forward network stack built on numpy.

Hidden layers use the Tan-Sigmoid activation f(x) = 2/(1+e^(-2x)) - 1 (the
numerically safe form is tanh), the output layer is linear, and inputs and
outputs are min/max normalized to [-1, 1].  Two trainers are provided:

* ``lm`` -- full-batch Levenberg-Marquardt with the normal matrix accumulated
  over mini-batches (memory stays bounded by one batch Jacobian) and
  multiplicative damping adaptation.  Preferred for networks up to a few
  thousand parameters.
* ``first_order`` -- Adam on the mini-batch MSE gradient, for the larger
  networks where the normal matrix is no longer worth its cost.

Both are deterministic given the config seed.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .robots import ValidationError


def tansig(x):
    """Tan-Sigmoid activation 2/(1+e^(-2x)) - 1; saturates safely to +/-1."""
    return np.tanh(x)


def tansig_prime_from_value(f):
    """Derivative expressed through the activation value: f'(x) = 1 - f(x)^2."""
    return 1.0 - f * f


@dataclass
class Scaler:
    """Per-dimension linear map between [lo, hi] and [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "Scaler":
        data = np.asarray(data, dtype=float)
        lo = data.min(axis=0)
        hi = data.max(axis=0)
        flat = hi - lo < 1e-12  # constant columns map to the interval midpoint
        hi = np.where(flat, lo + 1.0, hi)
        return cls(lo=lo, hi=hi)

    @classmethod
    def unit(cls, dim: int) -> "Scaler":
        return cls(lo=-np.ones(dim), hi=np.ones(dim))

    @property
    def slope(self) -> np.ndarray:
        return 2.0 / (self.hi - self.lo)

    def scale(self, x):
        return (np.asarray(x, dtype=float) - self.lo) * self.slope - 1.0

    def unscale(self, u):
        return (np.asarray(u, dtype=float) + 1.0) / self.slope + self.lo


@dataclass
class MLP:
    """Affine + Tan-Sigmoid chain with linear output and boundary scalers."""

    weights: list  # (fan_out, fan_in) per layer
    biases: list
    in_scaler: Scaler
    out_scaler: Scaler
    activation: str = "tansig"

    @classmethod
    def create(cls, sizes, seed: int = 0, in_scaler: Scaler | None = None,
               out_scaler: Scaler | None = None) -> "MLP":
        """Seeded init, weights uniform in +/- 1/sqrt(fan_in)."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights=weights, biases=biases,
                   in_scaler=in_scaler or Scaler.unit(sizes[0]),
                   out_scaler=out_scaler or Scaler.unit(sizes[-1]))

    @property
    def sizes(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]


def _core_forward(net: MLP, u: np.ndarray, cache: list | None = None) -> np.ndarray:
    a = u
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        a = z if i == last else tansig(z)
        if cache is not None:
            cache.append(a)
    return a


def forward(net: MLP, x) -> np.ndarray:
    """Predict in physical units; accepts (in,) or (..., in)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.in_dim:
        raise ValidationError(f"input has {x.shape[-1]} dims, net expects {net.in_dim}")
    u = net.in_scaler.scale(x)
    v = _core_forward(net, np.atleast_2d(u))
    y = net.out_scaler.unscale(v)
    return y[0] if x.ndim == 1 else y.reshape(x.shape[:-1] + (net.out_dim,))


def input_jacobian(net: MLP, x) -> np.ndarray:
    """Analytic (out_dim, in_dim) Jacobian of forward at x, scalers included."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("input_jacobian takes a single input vector")
    u = net.in_scaler.scale(x)
    a = u
    M = np.diag(net.in_scaler.slope)
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        if i == last:
            M = W @ M
            a = z
        else:
            a = tansig(z)
            M = (tansig_prime_from_value(a)[:, None] * W) @ M
    return (1.0 / net.out_scaler.slope)[:, None] * M


@dataclass
class TrainConfig:
    max_epochs: int = 13500
    batch_size: int = 200
    learning_rate: float = 0.04
    lm_damping_init: float = 1e-3
    lm_damping_up: float = 10.0
    lm_damping_down: float = 0.1
    lm_damping_cap: float = 1e12
    target_mse: float = 0.0
    seed: int = 0
    optimizer: str = "lm"  # "lm" or "first_order"

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch size must be positive")
        if self.optimizer not in ("lm", "first_order"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


def config_hash(cfg: TrainConfig) -> str:
    return hashlib.sha256(
        json.dumps(asdict(cfg), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainReport:
    train_mse: float            # normalized units
    test_mse: float
    test_error_mean: float      # physical units (euclidean)
    test_error_pct_width: float
    epochs_run: int
    wall_time: float
    status: str = "ok"          # "ok", "target_reached", "damping_cap"
    accepted_losses: list = field(default_factory=list)


def _flatten(net: MLP) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b])
                           for w, b in zip(net.weights, net.biases)])


def _unflatten(net: MLP, theta: np.ndarray) -> None:
    pos = 0
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        net.weights[i] = theta[pos:pos + w.size].reshape(w.shape)
        pos += w.size
        net.biases[i] = theta[pos:pos + b.size].copy()
        pos += b.size


def _param_jacobian(net: MLP, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual Jacobian w.r.t. all parameters for one batch.

    Returns (batch outputs, J) with J of shape (B*out_dim, n_params); rows
    ordered sample-major, columns in flattened parameter order.
    """
    acts = [U]
    out = _core_forward(net, U, cache=acts)
    B = U.shape[0]
    out_dim = net.out_dim
    H = np.broadcast_to(np.eye(out_dim), (B, out_dim, out_dim)).copy()
    blocks: list = []
    for l in range(len(net.weights) - 1, -1, -1):
        a_prev = acts[l]
        jw = np.einsum("bki,bj->bkij", H, a_prev).reshape(B, out_dim, -1)
        jb = H
        blocks.append((jw, jb))
        if l > 0:
            H = np.einsum("bki,ij->bkj", H, net.weights[l])
            H = H * tansig_prime_from_value(acts[l])[:, None, :]
    blocks.reverse()
    J = np.concatenate([np.concatenate([jw, jb], axis=2) for jw, jb in blocks],
                       axis=2)
    return out, J.reshape(B * out_dim, -1)


def _mse(net: MLP, U: np.ndarray, V: np.ndarray) -> float:
    r = _core_forward(net, U) - V
    return float(np.mean(r * r))


def _train_lm(net: MLP, U, V, cfg: TrainConfig) -> tuple[int, str, list]:
    S = U.shape[0]
    P = net.n_params
    lam = cfg.lm_damping_init
    losses = [_mse(net, U, V)]
    status = "ok"
    epochs = 0
    eye = np.eye(P)
    for epoch in range(cfg.max_epochs):
        epochs = epoch + 1
        JtJ = np.zeros((P, P))
        Jtr = np.zeros(P)
        for start in range(0, S, cfg.batch_size):
            sl = slice(start, min(start + cfg.batch_size, S))
            out, J = _param_jacobian(net, U[sl])
            r = (out - V[sl]).ravel()
            JtJ += J.T @ J
            Jtr += J.T @ r
        theta = _flatten(net)
        current = losses[-1]
        accepted = False
        while lam <= cfg.lm_damping_cap:
            try:
                delta = np.linalg.solve(JtJ + lam * eye, -Jtr)
            except np.linalg.LinAlgError:
                lam *= cfg.lm_damping_up
                continue
            _unflatten(net, theta + delta)
            new = _mse(net, U, V)
            if new < current and math.isfinite(new):
                lam = max(lam * cfg.lm_damping_down, 1e-14)
                losses.append(new)
                accepted = True
                break
            _unflatten(net, theta)
            lam *= cfg.lm_damping_up
        if not accepted:
            status = "damping_cap"
            break
        if losses[-1] <= cfg.target_mse:
            status = "target_reached"
            break
    return epochs, status, losses


def _backprop_grads(net: MLP, U, V):
    acts = [U]
    out = _core_forward(net, U, cache=acts)
    B, out_dim = out.shape
    delta = 2.0 * (out - V) / (B * out_dim)
    grads_w, grads_b = [], []
    for l in range(len(net.weights) - 1, -1, -1):
        grads_w.append(delta.T @ acts[l])
        grads_b.append(delta.sum(axis=0))
        if l > 0:
            delta = (delta @ net.weights[l]) * tansig_prime_from_value(acts[l])
    grads_w.reverse()
    grads_b.reverse()
    return grads_w, grads_b


def _train_adam(net: MLP, U, V, cfg: TrainConfig) -> tuple[int, str, list]:
    rng = np.random.default_rng(cfg.seed)
    S = U.shape[0]
    b1, b2, eps = 0.9, 0.999, 1e-8
    mw = [np.zeros_like(w) for w in net.weights]
    vw = [np.zeros_like(w) for w in net.weights]
    mb = [np.zeros_like(b) for b in net.biases]
    vb = [np.zeros_like(b) for b in net.biases]
    t = 0
    losses = [_mse(net, U, V)]
    status = "ok"
    epochs = 0
    for epoch in range(cfg.max_epochs):
        epochs = epoch + 1
        perm = rng.permutation(S)
        for start in range(0, S, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            gw, gb = _backprop_grads(net, U[idx], V[idx])
            t += 1
            corr = math.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
            for i in range(len(net.weights)):
                mw[i] = b1 * mw[i] + (1 - b1) * gw[i]
                vw[i] = b2 * vw[i] + (1 - b2) * gw[i] ** 2
                net.weights[i] -= cfg.learning_rate * corr * mw[i] / (np.sqrt(vw[i]) + eps)
                mb[i] = b1 * mb[i] + (1 - b1) * gb[i]
                vb[i] = b2 * vb[i] + (1 - b2) * gb[i] ** 2
                net.biases[i] -= cfg.learning_rate * corr * mb[i] / (np.sqrt(vb[i]) + eps)
        losses.append(_mse(net, U, V))
        if losses[-1] <= cfg.target_mse:
            status = "target_reached"
            break
    return epochs, status, losses


def train(net: MLP, train_xy, test_xy, cfg: TrainConfig,
          width: float | None = None) -> TrainReport:
    """Fit the net to (X, Y) arrays in physical units; scalers are refit on
    the training inputs/targets, parameters are updated in place."""
    X, Y = (np.asarray(a, dtype=float) for a in train_xy)
    Xt, Yt = (np.asarray(a, dtype=float) for a in test_xy)
    if X.shape[0] == 0 or Xt.shape[0] == 0:
        raise ValidationError("training and test sets must be non-empty")
    if X.shape[1] != net.in_dim or Y.shape[1] != net.out_dim:
        raise ValidationError("data dims do not match the network")
    net.in_scaler = Scaler.fit(X)
    net.out_scaler = Scaler.fit(Y)
    U, V = net.in_scaler.scale(X), net.out_scaler.scale(Y)

    t0 = time.perf_counter()
    if cfg.optimizer == "lm":
        epochs, status, losses = _train_lm(net, U, V, cfg)
    else:
        epochs, status, losses = _train_adam(net, U, V, cfg)
    wall = time.perf_counter() - t0

    Ut, Vt = net.in_scaler.scale(Xt), net.out_scaler.scale(Yt)
    err = np.linalg.norm(forward(net, Xt) - Yt, axis=1)
    return TrainReport(
        train_mse=losses[-1],
        test_mse=_mse(net, Ut, Vt),
        test_error_mean=float(err.mean()),
        test_error_pct_width=float(100.0 * err.mean() / width) if width else float("nan"),
        epochs_run=epochs,
        wall_time=wall,
        status=status,
        accepted_losses=losses,
    )


def size_s2r(sample_count: int, eta: float = 0.25) -> int:
    """Hidden-neuron count for the sim-to-real layer: ceil(eta * samples)."""
    if sample_count < 4:
        raise ValidationError("sim-to-real sizing needs at least 4 samples")
    return int(math.ceil(eta * sample_count - 1e-12))


def evaluate(net: MLP, X, Y, workspace_width: float) -> dict:
    """Euclidean prediction-error statistics in mm and as % of width."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] == 0:
        raise ValidationError("evaluation set must be non-empty")
    if workspace_width <= 0:
        raise ValidationError("workspace width must be positive")
    err = np.linalg.norm(forward(net, X) - Y, axis=1)
    stats = {
        "mean_mm": float(err.mean()),
        "median_mm": float(np.median(err)),
        "max_mm": float(err.max()),
    }
    stats.update({k.replace("_mm", "_pct_width"): 100.0 * v / workspace_width
                  for k, v in list(stats.items())})
    return stats


# ---------------------------------------------------------------------------
# model file IO


def save_model(net: MLP, path, meta: dict | None = None) -> None:
    doc = {
        "format": "softik-mlp",
        "version": 1,
        "activation": net.activation,
        "sizes": net.sizes,
        "layers": [{"weights": w.tolist(), "bias": b.tolist()}
                   for w, b in zip(net.weights, net.biases)],
        "in_scaler": {"lo": net.in_scaler.lo.tolist(), "hi": net.in_scaler.hi.tolist()},
        "out_scaler": {"lo": net.out_scaler.lo.tolist(), "hi": net.out_scaler.hi.tolist()},
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path) -> MLP:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "softik-mlp" or doc.get("version") != 1:
        raise ValidationError(f"{path}: not a version-1 model file")
    weights = [np.asarray(l["weights"], dtype=float) for l in doc["layers"]]
    biases = [np.asarray(l["bias"], dtype=float) for l in doc["layers"]]
    for i in range(len(weights) - 1):
        if weights[i + 1].shape[1] != weights[i].shape[0]:
            raise ValidationError(f"{path}: layer {i}->{i+1} dimensions do not chain")
    for w, b in zip(weights, biases):
        if w.shape[0] != b.shape[0]:
            raise ValidationError(f"{path}: bias length does not match weights")
    net = MLP(weights=weights, biases=biases,
              in_scaler=Scaler(lo=np.asarray(doc["in_scaler"]["lo"], dtype=float),
                               hi=np.asarray(doc["in_scaler"]["hi"], dtype=float)),
              out_scaler=Scaler(lo=np.asarray(doc["out_scaler"]["lo"], dtype=float),
                                hi=np.asarray(doc["out_scaler"]["hi"], dtype=float)),
              activation=doc["activation"])
    if net.sizes != doc["sizes"]:
        raise ValidationError(f"{path}: declared sizes do not match layer shapes")
    return net
