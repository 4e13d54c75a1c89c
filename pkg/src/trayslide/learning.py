"""Training data and model for the speed-dependent friction multiplier.

A sliding event at tray speed ``v`` with acceleration magnitude ``a`` on a
level tray says the effective friction there was ``a / g``, so the sample is
``alpha = a / (mu_s * g)``. The model is a small numpy MLP trained with Adam.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_VERSION = 1
G_MAG = 9.81


class MalformedModel(ValueError):
    pass


class VersionError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class AlphaSample:
    v: float
    alpha: float

    def __post_init__(self):
        if not self.v >= 0:
            raise ValueError("v must be non-negative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def events_to_samples(events, mu_s, g_mag=G_MAG):
    if not mu_s > 0:
        raise ValueError("mu_s must be positive")
    return [AlphaSample(e.v_sliding_mag, e.a_sliding_mag / (mu_s * g_mag)) for e in events]


def augment_dataset(samples, mu_s=None, dv=0.02):
    """Anchor ``(0, 1)`` plus linear fill on ``[0, v_min]`` every ``dv``.

    ``mu_s`` is accepted for symmetry with :func:`events_to_samples`; the
    anchor follows from ``a = mu_s * g`` at rest and does not depend on it.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    if not dv > 0:
        raise ValueError("dv must be positive")
    out = list(samples)
    if any(s.v == 0.0 for s in samples):
        return out
    v_min = min(s.v for s in samples)
    a_min = float(np.mean([s.alpha for s in samples if s.v == v_min]))
    fill = [AlphaSample(0.0, 1.0)]
    k = 1
    while k * dv < v_min - 1e-12:
        v = k * dv
        fill.append(AlphaSample(v, 1.0 + (a_min - 1.0) * v / v_min))
        k += 1
    return fill + out


def _leaky(x, slope):
    return np.where(x > 0, x, slope * x)


def _leaky_grad(x, slope):
    return np.where(x > 0, 1.0, slope)


@dataclass
class AlphaModel:
    """Three dense layers with leaky-ReLU hidden activations.

    Inputs are standardized with ``(x_mean, x_std)`` and outputs
    de-standardized with ``(y_mean, y_std)``. Queries are clamped to
    ``[0, v_max]``, the training range.
    """

    weights: list
    biases: list
    x_mean: float
    x_std: float
    y_mean: float
    y_std: float
    v_max: float
    leak: float = 0.01
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise MalformedModel("expected three layers")
        if self.weights[0].shape[0] != 1 or self.weights[-1].shape[1] != 1:
            raise MalformedModel("model must map a scalar to a scalar")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise MalformedModel("bias shape does not match its layer")
        for w1, w2 in zip(self.weights, self.weights[1:]):
            if w1.shape[1] != w2.shape[0]:
                raise MalformedModel("layer shapes do not chain")
        params = [*self.weights, *self.biases, np.array([self.x_mean, self.x_std, self.y_mean, self.y_std, self.v_max])]
        if not all(np.all(np.isfinite(p)) for p in params):
            raise MalformedModel("non-finite parameters")
        if self.x_std <= 0 or self.y_std <= 0:
            raise MalformedModel("scaler std must be positive")

    def _clamped(self, v):
        v = np.asarray(v, dtype=float)
        vc = np.clip(v, 0.0, self.v_max)
        inside = (v >= 0.0) & (v <= self.v_max)
        return v, vc, inside

    def value_and_grad(self, v):
        v, vc, inside = self._clamped(v)
        x = ((vc.reshape(-1, 1) - self.x_mean) / self.x_std)
        dx = np.full_like(x, 1.0 / self.x_std)
        h, dh = x, dx
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            dz = dh @ W
            if i < 2:
                h, dh = _leaky(z, self.leak), _leaky_grad(z, self.leak) * dz
            else:
                h, dh = z, dz
        y = h[:, 0] * self.y_std + self.y_mean
        dy = dh[:, 0] * self.y_std
        dy = np.where(inside.reshape(-1), dy, 0.0)
        return y.reshape(v.shape), dy.reshape(v.shape)

    def __call__(self, v):
        return self.value_and_grad(v)[0]

    def to_dict(self):
        return {
            "type": "mlp",
            "version": MODEL_VERSION,
            "layers": [
                {"shape": list(W.shape), "weight": W.reshape(-1).tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
            "activation": {"name": "leaky_relu", "slope": self.leak},
            "scalers": {"x_mean": self.x_mean, "x_std": self.x_std, "y_mean": self.y_mean, "y_std": self.y_std},
            "v_max": self.v_max,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise MalformedModel("model must be a JSON object")
        if d.get("version") != MODEL_VERSION:
            raise VersionError(f"unsupported model version {d.get('version')!r} (expected {MODEL_VERSION})")
        try:
            weights, biases = [], []
            for layer in d["layers"]:
                shape = tuple(int(s) for s in layer["shape"])
                weights.append(np.asarray(layer["weight"], dtype=float).reshape(shape))
                biases.append(np.asarray(layer["bias"], dtype=float))
            sc = d["scalers"]
            return cls(
                weights, biases, float(sc["x_mean"]), float(sc["x_std"]), float(sc["y_mean"]), float(sc["y_std"]),
                float(d["v_max"]), float(d.get("activation", {}).get("slope", 0.01)), dict(d.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, MalformedModel):
                raise
            raise MalformedModel(f"malformed model: {exc}") from exc


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True))


def load_model(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedModel(f"{path}: not valid JSON ({exc.msg})") from exc
    return AlphaModel.from_dict(data)


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (32, 32)
    epochs: int = 2000
    lr: float = 1e-3
    dropout: float = 0.1
    batch_size: int = 32
    leak: float = 0.01
    seed: int = 0
    loss_ceiling: float = 1e-2  # MSE in alpha units


def train_alpha(samples, config=None):
    """Fit the MLP to ``(v, alpha)`` samples by mean-squared error."""
    cfg = config or TrainConfig()
    samples = list(samples)
    if len(samples) < 10:
        raise ValueError("need at least 10 samples")
    v = np.array([s.v for s in samples])
    y = np.array([s.alpha for s in samples])
    if np.ptp(v) <= 0:
        raise ValueError("samples must span a nonzero velocity range")
    rng = np.random.default_rng(cfg.seed)
    x_mean, x_std = float(v.mean()), float(v.std())
    y_mean, y_std = float(y.mean()), float(y.std())
    if y_std < 1e-8:
        y_std = 1.0
    X = ((v - x_mean) / x_std)[:, None]
    Y = ((y - y_mean) / y_std)[:, None]

    sizes = [1, *cfg.hidden, 1]
    Ws = [rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(b) for b in sizes[1:]]
    params = Ws + bs
    m = [np.zeros_like(p) for p in params]
    s = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    keep = 1.0 - cfg.dropout
    step = 0
    n = X.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            # forward with inverted dropout on hidden layers
            acts, pre, masks = [xb], [], []
            h = xb
            for i in range(len(Ws)):
                z = h @ Ws[i] + bs[i]
                pre.append(z)
                if i < len(Ws) - 1:
                    h = _leaky(z, cfg.leak)
                    mask = (rng.random(h.shape) < keep) / keep if cfg.dropout > 0 else np.ones_like(h)
                    h = h * mask
                    masks.append(mask)
                else:
                    h = z
                acts.append(h)
            grad = 2.0 * (h - yb) / xb.shape[0]
            gW, gb = [None] * len(Ws), [None] * len(Ws)
            for i in reversed(range(len(Ws))):
                gW[i] = acts[i].T @ grad
                gb[i] = grad.sum(axis=0)
                if i > 0:
                    grad = (grad @ Ws[i].T) * masks[i - 1] * _leaky_grad(pre[i - 1], cfg.leak)
            step += 1
            for j, g in enumerate(gW + gb):
                m[j] = b1 * m[j] + (1 - b1) * g
                s[j] = b2 * s[j] + (1 - b2) * g * g
                mh = m[j] / (1 - b1**step)
                sh = s[j] / (1 - b2**step)
                params[j] -= cfg.lr * mh / (np.sqrt(sh) + eps)
    Ws, bs = params[: len(Ws)], params[len(Ws):]
    model = AlphaModel(Ws, bs, x_mean, x_std, y_mean, y_std, float(v.max()), cfg.leak)
    pred = model(v)
    loss = float(np.mean((pred - y) ** 2))
    model.meta.update({
        "epochs": cfg.epochs, "lr": cfg.lr, "dropout": cfg.dropout, "hidden": list(cfg.hidden),
        "seed": cfg.seed, "final_loss": loss, "n_samples": n,
    })
    if not np.isfinite(loss) or loss > cfg.loss_ceiling:
        raise NonConvergence(f"final training loss {loss:.3e} exceeds ceiling {cfg.loss_ceiling:.1e}")
    return model


def monotonicity_report(model, n=200):
    """Whether the model is non-increasing over its training range."""
    grid = np.linspace(0.0, model.v_max, n)
    a = model(grid)
    d = np.diff(a)
    return {
        "non_increasing": bool(np.all(d <= 1e-9)),
        "fraction_increasing_steps": float(np.mean(d > 1e-9)),
        "max_increase": float(max(d.max(initial=0.0), 0.0)),
    }


def fit_report(model, samples, reference=None, n=200):
    """Training MAE, velocity range and monotonicity; MAE vs ``reference`` when given."""
    v = np.array([s.v for s in samples])
    y = np.array([s.alpha for s in samples])
    rep = {
        "n_samples": len(samples),
        "v_range": [float(v.min()), float(v.max())],
        "train_mae": float(np.mean(np.abs(model(v) - y))),
        "final_loss": model.meta.get("final_loss"),
        **monotonicity_report(model, n),
    }
    if reference is not None:
        grid = np.linspace(float(v.min()), float(v.max()), n)
        rep["reference_mae"] = float(np.mean(np.abs(model(grid) - reference(grid))))
    return rep
