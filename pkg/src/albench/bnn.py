"""Mean-field variational Bayesian neural network for regression.

Every linear layer keeps a factorized Gaussian posterior over weights and
biases, parameterized as (mu, log_sigma) and sampled by reparameterization
W = mu + exp(log_sigma) * eps. The training loss is

    0.5 * mean_i (y_i - yhat_i)^2  +  sum over parameters of
    log(1/sigma) + (sigma^2 + mu^2 - 1) / 2

with one weight draw per step shared across the batch (observation noise
fixed at 1, so the likelihood term is half the MSE). Gradients are
computed by hand, full batch, and driven by Adam. Predictive mean/std come
from Monte-Carlo forward passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FitError, ShapeError
from .types import Prediction

INIT_MU_HALF_RANGE = 0.2
INIT_LOG_SIGMA = -5.0
OBSERVATION_SIGMA = 1.0  # fixed; the MSE term assumes unit observation noise


@dataclass
class BayesianLinearLayer:
    """Posterior means and log standard deviations for one affine map."""

    mu_w: np.ndarray  # (out, in)
    log_sigma_w: np.ndarray  # (out, in)
    mu_b: np.ndarray  # (out,)
    log_sigma_b: np.ndarray  # (out,)

    @classmethod
    def initialize(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "BayesianLinearLayer":
        return cls(
            mu_w=rng.uniform(-INIT_MU_HALF_RANGE, INIT_MU_HALF_RANGE, size=(n_out, n_in)),
            log_sigma_w=np.full((n_out, n_in), INIT_LOG_SIGMA),
            mu_b=rng.uniform(-INIT_MU_HALF_RANGE, INIT_MU_HALF_RANGE, size=n_out),
            log_sigma_b=np.full(n_out, INIT_LOG_SIGMA),
        )


@dataclass(frozen=True)
class BNNConfig:
    hidden_layers: int = 5
    width: int = 64
    epochs: int = 1000
    learning_rate: float = 1e-3
    mc_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if min(self.hidden_layers, self.width, self.epochs, self.mc_samples) < 1:
            raise ConfigError("hidden_layers, width, epochs, mc_samples must all be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class BNNetwork:
    """Hidden ReLU layers plus a linear one-output head, all Bayesian."""

    layers: list[BayesianLinearLayer]
    final_loss: float = math.nan
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.layers[0].mu_w.shape[1]


def init_network(n_inputs: int, config: BNNConfig, rng: np.random.Generator) -> BNNetwork:
    dims = [n_inputs] + [config.width] * config.hidden_layers + [1]
    layers = [
        BayesianLinearLayer.initialize(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)
    ]
    return BNNetwork(layers=layers)


NoiseDraw = list[tuple[np.ndarray, np.ndarray]]  # per layer: (eps_w, eps_b)


def draw_noise(network: BNNetwork, rng: np.random.Generator) -> NoiseDraw:
    return [
        (rng.standard_normal(l.mu_w.shape), rng.standard_normal(l.mu_b.shape))
        for l in network.layers
    ]


def zero_noise(network: BNNetwork) -> NoiseDraw:
    return [(np.zeros_like(l.mu_w), np.zeros_like(l.mu_b)) for l in network.layers]


def kl_layer(layer: BayesianLinearLayer) -> float:
    """Closed-form KL to the standard-normal prior, summed over parameters.

    Per parameter: log(1/sigma) + (sigma^2 + mu^2 - 1) / 2. Zero exactly
    when mu = 0 and sigma = 1, positive otherwise.
    """
    total = 0.0
    for mu, log_sigma in ((layer.mu_w, layer.log_sigma_w), (layer.mu_b, layer.log_sigma_b)):
        sigma_sq = np.exp(2.0 * log_sigma)
        total += float(np.sum(-log_sigma + 0.5 * (sigma_sq + mu * mu - 1.0)))
    return total


def _sampled_weights(layer: BayesianLinearLayer, eps_w: np.ndarray, eps_b: np.ndarray):
    W = layer.mu_w + np.exp(layer.log_sigma_w) * eps_w
    b = layer.mu_b + np.exp(layer.log_sigma_b) * eps_b
    return W, b


def _forward_batch(network: BNNetwork, X: np.ndarray, noise: NoiseDraw):
    """Forward pass with sampled weights; returns (yhat, per-layer caches)."""
    A = X
    caches = []
    last = len(network.layers) - 1
    for i, (layer, (eps_w, eps_b)) in enumerate(zip(network.layers, noise)):
        W, b = _sampled_weights(layer, eps_w, eps_b)
        Z = A @ W.T + b
        caches.append((A, Z, W))
        A = Z if i == last else np.maximum(Z, 0.0)
    return A[:, 0], caches


def sample_forward(network: BNNetwork, x, noise: NoiseDraw) -> float:
    """One sampled forward pass for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != network.n_inputs:
        raise ShapeError(f"input must be a vector of length {network.n_inputs}")
    for layer, (eps_w, eps_b) in zip(network.layers, noise):
        if eps_w.shape != layer.mu_w.shape or eps_b.shape != layer.mu_b.shape:
            raise ShapeError("noise shape does not match parameter shape")
    yhat, _ = _forward_batch(network, x[None, :], noise)
    return float(yhat[0])


def elbo_loss(network: BNNetwork, X, y, noise: NoiseDraw) -> float:
    """Negative ELBO: half mean squared error plus the total KL term."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    yhat, _ = _forward_batch(network, X, noise)
    mse = float(np.mean((y - yhat) ** 2))
    return 0.5 * mse + sum(kl_layer(l) for l in network.layers)


def elbo_loss_and_grads(network: BNNetwork, X, y, noise: NoiseDraw):
    """Loss plus hand-derived gradients for every mu and log_sigma.

    Returns (loss, grads) where grads mirrors the layer list as tuples
    (d_mu_w, d_log_sigma_w, d_mu_b, d_log_sigma_b).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    yhat, caches = _forward_batch(network, X, noise)
    loss = 0.5 * float(np.mean((y - yhat) ** 2)) + sum(kl_layer(l) for l in network.layers)

    grads = []
    delta = ((yhat - y) / n)[:, None]  # d loss / d output, (n, 1)
    for i in reversed(range(len(network.layers))):
        layer = network.layers[i]
        eps_w, eps_b = noise[i]
        A_prev, Z, W = caches[i]
        dW = delta.T @ A_prev
        db = delta.sum(axis=0)
        sigma_w = np.exp(layer.log_sigma_w)
        sigma_b = np.exp(layer.log_sigma_b)
        d_mu_w = dW + layer.mu_w
        d_log_sigma_w = dW * eps_w * sigma_w + (sigma_w**2 - 1.0)
        d_mu_b = db + layer.mu_b
        d_log_sigma_b = db * eps_b * sigma_b + (sigma_b**2 - 1.0)
        grads.append((d_mu_w, d_log_sigma_w, d_mu_b, d_log_sigma_b))
        if i > 0:
            _, Z_prev, _ = caches[i - 1]
            delta = (delta @ W) * (Z_prev > 0.0)
    grads.reverse()
    return loss, grads


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def _flatten_params(network: BNNetwork) -> list[np.ndarray]:
    out = []
    for l in network.layers:
        out.extend([l.mu_w, l.log_sigma_w, l.mu_b, l.log_sigma_b])
    return out


def train_bnn(X, y, config: BNNConfig) -> BNNetwork:
    """Full-batch Adam on the negative ELBO, fresh noise draw per step.

    Initialization and the per-step noise come from two independent
    substreams of config.seed, so training is exactly repeatable.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise FitError(f"bad training set: |X|={X.shape[0]}, |y|={y.shape[0]}")
    init_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(2)
    network = init_network(X.shape[1], config, np.random.default_rng(init_ss))
    noise_rng = np.random.default_rng(noise_ss)

    params = _flatten_params(network)
    adam = _Adam([p.shape for p in params], config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        noise = draw_noise(network, noise_rng)
        loss, layer_grads = elbo_loss_and_grads(network, X, y, noise)
        if not math.isfinite(loss):
            raise FitError(f"training aborted: non-finite loss {loss} at epoch {epoch}")
        flat_grads = [g for layer in layer_grads for g in layer]
        adam.step(params, flat_grads)
        history.append(loss)
    network.final_loss = history[-1] if history else math.nan
    network.loss_history = history
    return network


def predict_bnn(
    network: BNNetwork, X_query, mc_samples: int, rng: np.random.Generator
) -> list[Prediction]:
    """Empirical mean and population std over MC sampled forward passes."""
    if mc_samples < 2:
        raise ConfigError(f"mc_samples must be >= 2, got {mc_samples}")
    X_query = np.atleast_2d(np.asarray(X_query, dtype=float))
    samples = np.empty((mc_samples, X_query.shape[0]))
    for s in range(mc_samples):
        noise = draw_noise(network, rng)
        samples[s], _ = _forward_batch(network, X_query, noise)
    mean = samples.mean(axis=0)
    std = samples.std(axis=0)
    return [Prediction(float(m), float(s)) for m, s in zip(mean, std)]
