"""Training: particle selection, nearest-particle labels, and the fitting loops.

A probabilistic transformer is trained in three steps.  A pool of members
of K is generated and quantised into ``N`` anchors, each owning its ``Q``
nearest pool members as particles.  Every training output is labelled with
its nearest anchor(s).  The encoder/head classifier is then fitted so that
the softmax over anchors matches those labels (squared loss), or
alternatively so that it minimises the Wasserstein-1 distance between the
predicted measure and the point mass at the target.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .constraints import ConstraintSet, generate
from .errors import ConfigError, DomainError, TrainingDivergedError
from .measures import ParticleArray
from .model import MlpRegressor, ProbabilisticTransformer
from .numerics import DenseNet, OptimizerConfig, backward, forward, optimizer_step, softmax, softmax_backward

LOSSES = ("nearest-label-mse", "wasserstein", "cross-entropy")
HIDDEN_MODES = ("trained", "frozen-random")
TIE_TOL = 1e-12


@dataclass
class TrainConfig:
    S: int = 512
    N: int = 64
    Q: int = 1
    epochs: int = 300
    batch_size: int = 32
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    hidden_mode: str = "trained"
    loss: str = "nearest-label-mse"
    seed: int = 0
    encoder_hidden: tuple = (64, 64)
    latent_dim: int = 2
    head_hidden: tuple = (64,)
    mlp_hidden: tuple = (64, 64, 64)
    alpha: float = 0.0

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)
        self.encoder_hidden = tuple(self.encoder_hidden)
        self.head_hidden = tuple(self.head_hidden)
        self.mlp_hidden = tuple(self.mlp_hidden)
        if self.N < 1 or self.Q < 1:
            raise ConfigError("N and Q must be positive")
        if self.N * self.Q > self.S:
            raise ConfigError(f"N*Q = {self.N * self.Q} exceeds the pool size S = {self.S}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.hidden_mode not in HIDDEN_MODES:
            raise ConfigError(f"hidden_mode must be one of {HIDDEN_MODES}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["optimizer"] = vars(self.optimizer).copy()
        for k in ("encoder_hidden", "head_hidden", "mlp_hidden"):
            d[k] = list(d[k])
        return d


# -- Algorithm steps ---------------------------------------------------------

def kmeans_anchors(pool, N, rng, iters=20):
    """k-means++ / Lloyd centres of ``pool``, each snapped to its nearest pool member."""
    pool = np.asarray(pool, float)
    if N >= len(pool):
        return pool[:N].copy()
    with warnings.catch_warnings():
        # an emptied cluster keeps its previous centre, which is fine here
        warnings.simplefilter("ignore")
        centres, _ = kmeans2(pool, N, iter=iters, minit="++", rng=rng)
    d = np.linalg.norm(centres[:, None, :] - pool[None, :, :], axis=-1)
    return pool[np.argmin(d, axis=1)]


def select_particles(pool, N, Q, rng=None, anchors=None):
    """Pick ``N`` anchors and give each its ``Q`` nearest pool members.

    Returns ``(anchors, ParticleArray)``.  Ties in distance go to the lower
    pool index.
    """
    pool = np.asarray(pool, float)
    if pool.ndim == 1:
        pool = pool[:, None]
    if N < 1 or Q < 1 or N * Q > len(pool):
        raise ConfigError(f"cannot take N={N} anchors with Q={Q} particles from a pool of {len(pool)}")
    if anchors is None:
        anchors = kmeans_anchors(pool, N, rng if rng is not None else np.random.default_rng(0))
    anchors = np.asarray(anchors, float).reshape(N, pool.shape[1])
    d = np.linalg.norm(anchors[:, None, :] - pool[None, :, :], axis=-1)
    order = np.argsort(d, axis=1, kind="stable")[:, :Q]
    return anchors, ParticleArray(pool[order])


def make_labels(outputs, anchors):
    """Indicator matrix of the nearest anchor(s) for each output (ties all get 1)."""
    outputs = np.asarray(outputs, float)
    anchors = np.asarray(anchors, float)
    if outputs.ndim == 1:
        outputs = outputs[:, None]
    if anchors.ndim == 1:
        anchors = anchors[:, None]
    if len(anchors) == 0:
        raise ConfigError("no anchors to label against")
    if outputs.shape[1] != anchors.shape[1]:
        raise DomainError("outputs and anchors differ in dimension")
    d = np.linalg.norm(outputs[:, None, :] - anchors[None, :, :], axis=-1)
    return (d <= d.min(axis=1, keepdims=True) + TIE_TOL).astype(float)


def particle_distances(targets, particles: ParticleArray):
    """``D[t, n] = mean_q |y_t - Y[n, q]|``."""
    targets = np.asarray(targets, float)
    diff = targets[:, None, None, :] - particles.Y[None, :, :, :]
    return np.linalg.norm(diff, axis=-1).mean(axis=2)


# -- chained networks --------------------------------------------------------

def _as_chain(nets):
    return [nets] if isinstance(nets, DenseNet) else list(nets)


def _chain_forward(nets, x):
    tapes = []
    for net in nets:
        x, tape = forward(net, x)
        tapes.append(tape)
    return x, tapes


def _chain_backward(nets, tapes, dy):
    grads = [None] * len(nets)
    for i in range(len(nets) - 1, -1, -1):
        grads[i] = backward(nets[i], tapes[i], dy)
        dy = grads[i].input
    return grads


# -- losses on network outputs ----------------------------------------------
# Each returns (per-sample losses, gradient of their sum w.r.t. the outputs).

def _label_mse(logits, labels):
    s = softmax(logits)
    r = s - labels
    return np.sum(r * r, axis=1), softmax_backward(s, 2.0 * r)


def _cross_entropy(logits, labels):
    target = labels / labels.sum(axis=1, keepdims=True)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    return -np.sum(target * logp, axis=1), np.exp(logp) - target


def _wasserstein(logits, dists):
    s = softmax(logits)
    return np.sum(dists * s, axis=1), softmax_backward(s, dists)


def _attention_mse(ybar):
    def loss(logits, targets):
        s = softmax(logits)
        r = s @ ybar - targets
        return np.sum(r * r, axis=1), softmax_backward(s, 2.0 * r @ ybar.T)
    return loss


def _mse(pred, targets):
    r = pred - targets
    return np.sum(r * r, axis=1), 2.0 * r


def _fit(nets, inputs, targets, loss_fn, cfg: TrainConfig, rng):
    """Minibatch first-order fitting of a chain of networks.

    Returns the trained chain and a trace of full-data mean losses, one
    entry before training and one after every epoch.
    """
    nets = [net.copy() for net in nets]
    inputs = np.asarray(inputs, float)
    targets = np.asarray(targets, float)
    T = len(inputs)
    trainable = [set(range(len(net.layers))) for net in nets]
    if cfg.hidden_mode == "frozen-random":
        trainable = [set() for _ in nets]
        trainable[-1] = {len(nets[-1].layers) - 1}
    states = [None] * len(nets)

    def full_loss():
        out, _ = _chain_forward(nets, inputs)
        value = float(np.mean(loss_fn(out, targets)[0]))
        if not np.isfinite(value):
            raise TrainingDivergedError("training loss is not finite")
        return value

    trace = [full_loss()]
    for _ in range(cfg.epochs):
        perm = rng.permutation(T)
        for start in range(0, T, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            out, tapes = _chain_forward(nets, inputs[idx])
            _, dout = loss_fn(out, targets[idx])
            grads = _chain_backward(nets, tapes, dout / len(idx))
            for i, (net, g) in enumerate(zip(nets, grads)):
                if trainable[i]:
                    nets[i], states[i] = optimizer_step(net, g, states[i], cfg.optimizer, trainable[i])
        trace.append(full_loss())
    return nets, trace


def fit_classifier(nets, inputs, labels, cfg: TrainConfig, rng=None):
    """Fit ``softmax(nets(x))`` to the label rows; returns ``(nets, trace)``.

    ``nets`` is one :class:`DenseNet` or a sequence applied in order (e.g.
    encoder then head); the same structure is returned.
    """
    chain = _as_chain(nets)
    labels = np.asarray(labels, float)
    if chain[-1].output_dim != labels.shape[1]:
        raise DomainError("classifier width does not match the number of label columns")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    loss_fn = _cross_entropy if cfg.loss == "cross-entropy" else _label_mse
    trained, trace = _fit(chain, inputs, labels, loss_fn, cfg, rng)
    return (trained[0] if isinstance(nets, DenseNet) else trained), trace


def wasserstein_loss_and_grad(model: ProbabilisticTransformer, inputs, targets):
    """Sum over the batch of ``W1(delta_{y_t}, predicted measure at x_t)``.

    Returns the loss and one :class:`GradientBundle` per network
    (encoder, head).
    """
    nets = [model.encoder, model.head]
    inputs = np.atleast_2d(np.asarray(inputs, float))
    dists = particle_distances(np.atleast_2d(targets), model.particles)
    logits, tapes = _chain_forward(nets, inputs)
    per_sample, dlogits = _wasserstein(logits, dists)
    return float(per_sample.sum()), _chain_backward(nets, tapes, dlogits)


# -- end-to-end trainers -----------------------------------------------------

def _init_transformer_nets(n_in, cfg: TrainConfig, rng):
    encoder = DenseNet.init([n_in, *cfg.encoder_hidden, cfg.latent_dim], rng, alpha=cfg.alpha)
    head = DenseNet.init([cfg.latent_dim, *cfg.head_hidden, cfg.N], rng, alpha=cfg.alpha)
    return encoder, head


def setup_particles(cset: ConstraintSet, cfg: TrainConfig, rng):
    """Generate a pool from ``cset`` and select ``(anchors, particles)`` from it."""
    pool = generate(cset, rng, cfg.S)
    anchors, particles = select_particles(pool, cfg.N, cfg.Q, rng)
    if not np.all(cset.contains(particles.flat())):
        raise DomainError("generated particles are not members of the constraint set")
    return anchors, particles


def train_probabilistic_transformer(data, cset: ConstraintSet, cfg: TrainConfig):
    """Generate particles, label the data, and fit the classifier.

    ``data`` is ``(inputs, outputs)``.  Returns ``(model, trace)``.
    """
    X, Y = (np.asarray(a, float) for a in data)
    if X.ndim == 1:
        X = X[:, None]
    rng = np.random.default_rng(cfg.seed)
    anchors, particles = setup_particles(cset, cfg, rng)
    encoder, head = _init_transformer_nets(X.shape[1], cfg, rng)
    if cfg.loss == "wasserstein":
        nets, trace = _fit([encoder, head], X, particle_distances(Y, particles), _wasserstein, cfg, rng)
    else:
        labels = make_labels(Y, anchors)
        nets, trace = fit_classifier([encoder, head], X, labels, cfg, rng)
    return ProbabilisticTransformer(nets[0], nets[1], particles, cset), trace


def train_classical_transformer(data, cset: ConstraintSet, cfg: TrainConfig):
    """Same architecture and particles, fitted by MSE through the attention average."""
    X, Y = (np.asarray(a, float) for a in data)
    if X.ndim == 1:
        X = X[:, None]
    rng = np.random.default_rng(cfg.seed)
    _, particles = setup_particles(cset, cfg, rng)
    encoder, head = _init_transformer_nets(X.shape[1], cfg, rng)
    nets, trace = _fit([encoder, head], X, Y, _attention_mse(particles.averaged()), cfg, rng)
    return ProbabilisticTransformer(nets[0], nets[1], particles, cset), trace


def train_baseline_mlp(data, cfg: TrainConfig):
    """Plain regression network fitted by MSE on the raw outputs."""
    X, Y = (np.asarray(a, float) for a in data)
    if X.ndim == 1:
        X = X[:, None]
    rng = np.random.default_rng(cfg.seed)
    net = DenseNet.init([X.shape[1], *cfg.mlp_hidden, Y.shape[1]], rng, alpha=cfg.alpha)
    (net,), trace = _fit([net], X, Y, _mse, cfg, rng)
    return MlpRegressor(net), trace


def write_trace(path, trace):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(trace):
            w.writerow([epoch, repr(float(loss))])
