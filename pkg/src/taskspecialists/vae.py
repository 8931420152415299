"""Per-task variational autoencoder over flattened images.

The encoder trunk feeds two parallel affine heads (mean and log-variance of
the latent Gaussian); the decoder mirrors the trunk and produces logits whose
sigmoid is the reconstruction. Losses and gradients are computed analytically,
including the reparameterization path, so the whole thing is checkable against
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError, TrainingError
from .nn import Adam, DenseLayer, Mlp, layer_from_dict, layer_to_dict, mlp_from_dict, mlp_to_dict

_SIGMOID_CLIP = 500.0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_SIGMOID_CLIP, _SIGMOID_CLIP)))


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


@dataclass
class VaeParams:
    """Encoder trunk + (mean, log-variance) heads + decoder. Decoder output is logits."""

    encoder_trunk: Mlp
    mean_head: DenseLayer
    logvar_head: DenseLayer
    decoder: Mlp
    latent_dim: int

    @property
    def input_dim(self) -> int:
        return self.encoder_trunk.in_dim

    def params(self) -> dict[str, np.ndarray]:
        out = self.encoder_trunk.params()
        out["mean.weights"] = self.mean_head.weights
        out["mean.bias"] = self.mean_head.bias
        out["logvar.weights"] = self.logvar_head.weights
        out["logvar.bias"] = self.logvar_head.bias
        out.update(self.decoder.params())
        return out

    def freeze(self) -> None:
        """Make every parameter array read-only."""
        for array in self.params().values():
            array.flags.writeable = False


@dataclass
class LatentCode:
    mean: np.ndarray
    log_variance: np.ndarray
    sample: np.ndarray
    noise: np.ndarray


def create_vae(
    input_dim: int,
    latent_dim: int = 8,
    hidden: tuple[int, ...] = (128, 64),
    seed=0,
) -> VaeParams:
    """Build an MLP VAE with mirrored encoder/decoder and relu hidden layers."""
    if latent_dim < 1 or latent_dim > input_dim // 4:
        raise ConfigurationError(
            f"latent dim {latent_dim} must be in [1, input_dim/4] = [1, {input_dim // 4}]"
        )
    rng = np.random.default_rng(seed)
    trunk = Mlp.create("enc", [input_dim, *hidden], "relu", "relu", rng)
    mean_head = DenseLayer.create("mean", hidden[-1], latent_dim, "identity", rng)
    logvar_head = DenseLayer.create("logvar", hidden[-1], latent_dim, "identity", rng)
    decoder = Mlp.create("dec", [latent_dim, *reversed(hidden), input_dim], "relu", "identity", rng)
    return VaeParams(trunk, mean_head, logvar_head, decoder, latent_dim)


def encode(vae: VaeParams, x: np.ndarray, noise: np.ndarray | None = None) -> LatentCode:
    """Encode one feature vector. With ``noise=None`` the sample equals the mean
    (the deterministic inference embedding)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != vae.input_dim:
        raise DimensionError(f"expected input of width {vae.input_dim}, got shape {x.shape}")
    h = vae.encoder_trunk.forward(x)
    mean = vae.mean_head.forward(h)
    logvar = vae.logvar_head.forward(h)
    eps = np.zeros(vae.latent_dim) if noise is None else np.asarray(noise, dtype=np.float64)
    if eps.shape != (vae.latent_dim,):
        raise DimensionError(f"noise must have shape ({vae.latent_dim},), got {eps.shape}")
    sample = mean + np.exp(0.5 * logvar) * eps
    return LatentCode(mean, logvar, sample, eps)


def encode_means(vae: VaeParams, features: np.ndarray) -> np.ndarray:
    """Deterministic latent means for a (n, input_dim) feature matrix."""
    h = vae.encoder_trunk.forward(np.asarray(features, dtype=np.float64))
    return vae.mean_head.forward(h)


def decode(vae: VaeParams, z: np.ndarray) -> np.ndarray:
    """Map latents to reconstructions in (0, 1)."""
    z = np.asarray(z, dtype=np.float64)
    width = z.shape[-1] if z.ndim > 0 else 0
    if width != vae.latent_dim:
        raise DimensionError(f"expected latent of width {vae.latent_dim}, got shape {z.shape}")
    return _sigmoid(vae.decoder.forward(z))


def vae_loss(
    vae: VaeParams,
    batch: np.ndarray,
    noise: np.ndarray | None = None,
    beta: float = 1.0,
) -> tuple[float, float, float]:
    """(total, reconstruction, kl) for a batch; total = reconstruction + beta * kl.

    Reconstruction is the batch-mean per-sample binary cross-entropy (summed
    over features, computed stably from logits); kl is the batch-mean analytic
    divergence from the standard normal.
    """
    losses, _ = vae_loss_and_grads(vae, batch, noise, beta, want_grads=False)
    return losses


def vae_loss_and_grads(
    vae: VaeParams,
    batch: np.ndarray,
    noise: np.ndarray | None = None,
    beta: float = 1.0,
    want_grads: bool = True,
) -> tuple[tuple[float, float, float], dict[str, np.ndarray]]:
    """Loss triple plus analytic gradients for every parameter block."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[0] == 0:
        raise TrainingError("empty batch")
    n = x.shape[0]
    eps = np.zeros((n, vae.latent_dim)) if noise is None else np.asarray(noise, dtype=np.float64)
    if eps.shape != (n, vae.latent_dim):
        raise DimensionError(f"noise must have shape ({n}, {vae.latent_dim}), got {eps.shape}")

    h = vae.encoder_trunk.forward(x)
    mu = vae.mean_head.forward(h)
    logvar = vae.logvar_head.forward(h)
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    logits = vae.decoder.forward(z)

    recon = float(np.sum(_softplus(logits) - x * logits) / n)
    kl = float(0.5 * np.sum(np.exp(logvar) + mu * mu - 1.0 - logvar) / n)
    total = recon + beta * kl
    if not np.isfinite(total):
        raise NumericError(f"non-finite loss (reconstruction={recon}, kl={kl})")
    if not want_grads:
        return (total, recon, kl), {}

    d_logits = (_sigmoid(logits) - x) / n
    dec_grads, d_z = vae.decoder.backward(z, d_logits)
    d_mu = d_z + beta * mu / n
    d_logvar = d_z * eps * 0.5 * std + beta * 0.5 * (np.exp(logvar) - 1.0) / n
    mw, mb, d_h_mean = vae.mean_head.backward(h, d_mu)
    lw, lb, d_h_logvar = vae.logvar_head.backward(h, d_logvar)
    trunk_grads, _ = vae.encoder_trunk.backward(x, d_h_mean + d_h_logvar)

    grads = dict(trunk_grads)
    grads["mean.weights"] = mw
    grads["mean.bias"] = mb
    grads["logvar.weights"] = lw
    grads["logvar.bias"] = lb
    grads.update(dec_grads)
    return (total, recon, kl), grads


@dataclass(frozen=True)
class VaeTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta: float = 1.0
    seed: int | tuple = 0  # anything numpy's default_rng accepts


def train_vae(
    vae: VaeParams,
    features: np.ndarray,
    config: VaeTrainConfig,
) -> tuple[VaeParams, list[float]]:
    """Train in place with Adam; returns the params and the per-epoch mean loss trace.

    Noise is drawn once per sample per epoch from the config seed, so a rerun
    with the same data and seed reproduces the final parameters exactly.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = x.shape[0]
    rng = np.random.default_rng(config.seed)
    adam = Adam(learning_rate=config.learning_rate)
    params = vae.params()
    trace: list[float] = []
    for epoch in range(config.epochs):
        noise = rng.standard_normal((n, vae.latent_dim))
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            try:
                (total, _, _), grads = vae_loss_and_grads(vae, x[idx], noise[idx], config.beta)
            except NumericError as err:
                raise TrainingError(f"divergence at epoch {epoch}: {err}") from err
            adam.step(params, grads)
            epoch_loss += total * len(idx)
        trace.append(epoch_loss / n)
    return vae, trace


def mean_reconstruction_error(vae: VaeParams, features: np.ndarray) -> float:
    """Mean squared error of decode(encode-mean(x)) over a feature matrix."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    recon = decode(vae, encode_means(vae, x))
    return float(np.mean((recon - x) ** 2))


def vae_to_dict(vae: VaeParams) -> dict:
    return {
        "latent_dim": vae.latent_dim,
        "encoder_trunk": mlp_to_dict(vae.encoder_trunk),
        "mean_head": layer_to_dict(vae.mean_head),
        "logvar_head": layer_to_dict(vae.logvar_head),
        "decoder": mlp_to_dict(vae.decoder),
    }


def vae_from_dict(d: dict) -> VaeParams:
    return VaeParams(
        mlp_from_dict(d["encoder_trunk"]),
        layer_from_dict(d["mean_head"]),
        layer_from_dict(d["logvar_head"]),
        mlp_from_dict(d["decoder"]),
        int(d["latent_dim"]),
    )
