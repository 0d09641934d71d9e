"""A small MLP variational autoencoder, written directly in numpy.

The encoder maps a downsampled grayscale image to a Gaussian posterior
(mu, log-variance), the decoder reconstructs the image from a latent
sample, and training minimizes

    loss = mean squared reconstruction error + kl_weight * KL(q || N(0, I))

with the reparameterization trick and Adam.  Gradients are hand-derived;
``gradient_check`` compares them against central finite differences.

The reconstruction-error metric ``vae_re`` evaluates the loss of a single
image deterministically at z = mu.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, asdict, field

import numpy as np
from PIL import Image as PILImage

from pairval.dataio import Image, fingerprint_dict, to_grayscale

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "w5", "b5")


class VaeTrainingError(Exception):
    """Training diverged or the inputs were unusable."""


@dataclass(frozen=True)
class VaeConfig:
    input_side: int = 32
    hidden_dim: int = 128
    latent_dim: int = 16
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    kl_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.input_side < 1 or self.hidden_dim < 1 or self.latent_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("bad training configuration")

    @property
    def input_dim(self) -> int:
        return self.input_side ** 2

    def to_dict(self) -> dict:
        return asdict(self)


def image_to_vae_input(img: Image, side: int = 32) -> np.ndarray:
    """Grayscale, bilinear-resize to ``side x side``, scale to [0, 1], flatten."""
    gray = to_grayscale(img).data
    pil = PILImage.fromarray(gray).resize((side, side), PILImage.BILINEAR)
    return np.asarray(pil, dtype=np.float64).ravel() / 255.0


def init_params(cfg: VaeConfig, rng: np.random.Generator) -> dict:
    """Glorot-uniform weights, zero biases, float64."""
    d, h, k = cfg.input_dim, cfg.hidden_dim, cfg.latent_dim

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    return {
        "w1": glorot(d, h), "b1": np.zeros(h),
        "w2": glorot(h, k), "b2": np.zeros(k),
        "w3": glorot(h, k), "b3": np.zeros(k),
        "w4": glorot(k, h), "b4": np.zeros(h),
        "w5": glorot(h, d), "b5": np.zeros(d),
    }


def forward(params: dict, x: np.ndarray, eps: np.ndarray, kl_weight: float) -> tuple[float, dict]:
    """Loss of a batch with fixed reparameterization noise ``eps``."""
    h1 = np.tanh(x @ params["w1"] + params["b1"])
    mu = h1 @ params["w2"] + params["b2"]
    lv = h1 @ params["w3"] + params["b3"]
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    h2 = np.tanh(z @ params["w4"] + params["b4"])
    y = 1.0 / (1.0 + np.exp(-(h2 @ params["w5"] + params["b5"])))
    n = x.shape[0]
    recon = float(np.mean((y - x) ** 2))
    kl = float(np.mean(-0.5 * np.sum(1.0 + lv - mu ** 2 - np.exp(lv), axis=1)))
    loss = recon + kl_weight * kl
    cache = {"x": x, "eps": eps, "h1": h1, "mu": mu, "lv": lv, "std": std,
             "z": z, "h2": h2, "y": y, "kl_weight": kl_weight}
    return loss, cache


def backward(params: dict, cache: dict) -> dict:
    """Analytic gradients of the batch loss for every parameter."""
    x, eps = cache["x"], cache["eps"]
    h1, mu, lv, std = cache["h1"], cache["mu"], cache["lv"], cache["std"]
    z, h2, y = cache["z"], cache["h2"], cache["y"]
    klw = cache["kl_weight"]
    n, d = x.shape

    dy_pre = (2.0 * (y - x) / (n * d)) * y * (1.0 - y)
    g = {"w5": h2.T @ dy_pre, "b5": dy_pre.sum(axis=0)}
    dh2_pre = (dy_pre @ params["w5"].T) * (1.0 - h2 ** 2)
    g["w4"] = z.T @ dh2_pre
    g["b4"] = dh2_pre.sum(axis=0)
    dz = dh2_pre @ params["w4"].T

    dmu = dz + klw * mu / n
    dlv = dz * eps * 0.5 * std + klw * (-0.5) * (1.0 - np.exp(lv)) / n
    g["w2"] = h1.T @ dmu
    g["b2"] = dmu.sum(axis=0)
    g["w3"] = h1.T @ dlv
    g["b3"] = dlv.sum(axis=0)

    dh1_pre = (dmu @ params["w2"].T + dlv @ params["w3"].T) * (1.0 - h1 ** 2)
    g["w1"] = x.T @ dh1_pre
    g["b1"] = dh1_pre.sum(axis=0)
    return g


@dataclass
class VaeModel:
    config: VaeConfig
    params: dict
    loss_history: list[float] = field(default_factory=list)
    data_digest: str = ""

    def fingerprint(self) -> str:
        return fingerprint_dict({"config": self.config.to_dict(), "data_digest": self.data_digest})

    def reconstruction_errors(self, x: np.ndarray) -> np.ndarray:
        """Per-row deterministic loss at z = mu (no sampling noise)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        p = self.params
        h1 = np.tanh(x @ p["w1"] + p["b1"])
        mu = h1 @ p["w2"] + p["b2"]
        lv = h1 @ p["w3"] + p["b3"]
        h2 = np.tanh(mu @ p["w4"] + p["b4"])
        y = 1.0 / (1.0 + np.exp(-(h2 @ p["w5"] + p["b5"])))
        recon = np.mean((y - x) ** 2, axis=1)
        kl = -0.5 * np.sum(1.0 + lv - mu ** 2 - np.exp(lv), axis=1)
        return recon + self.config.kl_weight * kl

    def reconstruction_loss(self, x: np.ndarray) -> float:
        """Deterministic single-sample loss at z = mu (no sampling noise)."""
        return float(np.mean(self.reconstruction_errors(x)))

    def to_json(self) -> str:
        payload = {
            "format": "pairval-vae",
            "version": 1,
            "config": self.config.to_dict(),
            "data_digest": self.data_digest,
            "loss_history": self.loss_history,
            "params": {
                name: base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii")
                for name, arr in self.params.items()
            },
            "shapes": {name: list(arr.shape) for name, arr in self.params.items()},
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VaeModel":
        payload = json.loads(text)
        if payload.get("format") != "pairval-vae":
            raise ValueError("not a serialized VAE model")
        cfg = VaeConfig(**payload["config"])
        params = {}
        for name in PARAM_NAMES:
            raw = base64.b64decode(payload["params"][name])
            params[name] = np.frombuffer(raw, dtype=np.float64).reshape(payload["shapes"][name]).copy()
        return cls(config=cfg, params=params,
                   loss_history=list(payload["loss_history"]),
                   data_digest=payload["data_digest"])


def train_matrix(x: np.ndarray, cfg: VaeConfig) -> VaeModel:
    """Train on pre-flattened rows in [0, 1]; needs at least 10 of them."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise VaeTrainingError(f"expected (n, {cfg.input_dim}) inputs, got {x.shape}")
    n = x.shape[0]
    if n < 10:
        raise VaeTrainingError(f"need at least 10 training images, got {n}")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(vv) for k, vv in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = x[order[start : start + cfg.batch_size]]
            eps = rng.standard_normal((batch.shape[0], cfg.latent_dim))
            loss, cache = forward(params, batch, eps, cfg.kl_weight)
            if not np.isfinite(loss):
                raise VaeTrainingError(f"training diverged (non-finite loss at step {step})")
            grads = backward(params, cache)
            step += 1
            for name in params:
                m[name] = beta1 * m[name] + (1 - beta1) * grads[name]
                v[name] = beta2 * v[name] + (1 - beta2) * grads[name] ** 2
                m_hat = m[name] / (1 - beta1 ** step)
                v_hat = v[name] / (1 - beta2 ** step)
                params[name] = params[name] - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
            epoch_loss += loss * batch.shape[0]
        history.append(epoch_loss / n)
    digest = hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()
    return VaeModel(config=cfg, params=params, loss_history=history, data_digest=digest)


def train_vae(images: list[Image], cfg: VaeConfig = VaeConfig()) -> VaeModel:
    """Downsample ``images`` and train; same images + config reproduce the model."""
    if len(images) < 10:
        raise VaeTrainingError(f"need at least 10 training images, got {len(images)}")
    x = np.stack([image_to_vae_input(img, cfg.input_side) for img in images])
    return train_matrix(x, cfg)


def vae_re(model: VaeModel, img: Image) -> float:
    """Reconstruction error of one image under the trained VAE (>= 0)."""
    return model.reconstruction_loss(image_to_vae_input(img, model.config.input_side))


def gradient_check(cfg: VaeConfig | None = None, n_batch: int = 4, step: float = 1e-5,
                   seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every parameter entry is perturbed by ``+-step`` with the batch and the
    reparameterization noise held fixed.
    """
    cfg = cfg or VaeConfig(input_side=8, hidden_dim=8, latent_dim=2, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n_batch, cfg.input_dim))
    eps = rng.standard_normal((n_batch, cfg.latent_dim))
    params = init_params(cfg, rng)
    _, cache = forward(params, x, eps, cfg.kl_weight)
    grads = backward(params, cache)
    worst = 0.0
    for name in PARAM_NAMES:
        flat = params[name].ravel()
        gflat = grads[name].ravel()
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + step
            up, _ = forward(params, x, eps, cfg.kl_weight)
            flat[idx] = keep - step
            down, _ = forward(params, x, eps, cfg.kl_weight)
            flat[idx] = keep
            fd = (up - down) / (2.0 * step)
            rel = abs(gflat[idx] - fd) / max(abs(gflat[idx]) + abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst
