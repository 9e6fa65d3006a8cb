"""Probabilistic transformer networks and the MLP baseline."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet, constraint_from_dict
from .errors import DomainError
from .measures import DiscreteMeasure, ParticleArray, expectation, frechet_mean, mode, p_attention
from .numerics import DenseNet, softmax


@dataclass
class ProbabilisticTransformer:
    """Encoder -> head -> softmax over the rows of a fixed particle array.

    The model's raw output for an input ``x`` is the discrete measure that
    puts ``softmax(head(encoder(x)))_n / Q`` on each particle ``Y[n, q]``.
    Since every particle is a member of K, so is every atom.
    """

    encoder: DenseNet
    head: DenseNet
    particles: ParticleArray
    constraint_set: ConstraintSet

    def __post_init__(self):
        if self.encoder.output_dim != self.head.input_dim:
            raise DomainError("encoder output width must equal head input width")
        if self.head.output_dim != self.particles.N:
            raise DomainError(f"head emits {self.head.output_dim} logits for {self.particles.N} particle rows")
        if self.particles.m != self.constraint_set.dim:
            raise DomainError("particle dimension does not match the constraint set")

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim

    def logits(self, x):
        x = np.asarray(x, float)
        if x.shape[-1] != self.input_dim:
            raise DomainError(f"expected inputs of width {self.input_dim}, got shape {x.shape}")
        return self.head(self.encoder(x))

    def weights(self, x):
        """Softmax weights per particle row, for one input or a batch."""
        return softmax(self.logits(x))


@dataclass
class MlpRegressor:
    net: DenseNet

    def predict(self, x):
        return self.net(np.asarray(x, float))


def predict_measure(model: ProbabilisticTransformer, x) -> DiscreteMeasure:
    return p_attention(model.logits(x), model.particles)


def predict_mean(model: ProbabilisticTransformer, x):
    return expectation(predict_measure(model, x))


def classical_attention_predict(model: ProbabilisticTransformer, x):
    """``softmax(w)^T Ybar`` with ``Ybar`` the Q-averaged particles; batches allowed."""
    return model.weights(x) @ model.particles.averaged()


def predict_mode(model: ProbabilisticTransformer, x):
    return mode(predict_measure(model, x))


def localize(mu: DiscreteMeasure, geometry, radius: float = np.pi / 4) -> DiscreteMeasure:
    """Restrict ``mu`` to atoms within ``radius`` of its mode and renormalise.

    With ``radius <= pi/4`` on the sphere, all kept atoms are pairwise closer
    than pi/2, which is what :func:`frechet_mean` requires.
    """
    centre = mode(mu)
    keep = geometry.dist(centre, mu.atoms) < radius
    w = mu.weights[keep]
    return DiscreteMeasure(mu.atoms[keep], w / w.sum())


def predict_frechet(model: ProbabilisticTransformer, x, localized: bool = False, **opts):
    """Frechet mean of the predicted measure.

    ``localized=True`` first discards atoms far from the mode (see
    :func:`localize`); otherwise a measure spread over more than a geodesic
    ball raises :class:`~probtrans.errors.GeodesicBallError`.
    """
    geometry = model.constraint_set.require_geometry()
    mu = predict_measure(model, x)
    if localized:
        mu = localize(mu, geometry)
    return frechet_mean(mu, geometry, **opts)


# -- persistence -------------------------------------------------------------

def model_to_dict(model) -> dict:
    if isinstance(model, MlpRegressor):
        return {"type": "mlp", "net": model.net.to_dict()}
    return {
        "type": "probabilistic_transformer",
        "encoder": model.encoder.to_dict(),
        "head": model.head.to_dict(),
        "particles": model.particles.Y.tolist(),
        "constraint_set": model.constraint_set.to_dict(),
    }


def model_from_dict(d):
    if d["type"] == "mlp":
        return MlpRegressor(DenseNet.from_dict(d["net"]))
    return ProbabilisticTransformer(
        DenseNet.from_dict(d["encoder"]),
        DenseNet.from_dict(d["head"]),
        ParticleArray(np.array(d["particles"], float)),
        constraint_from_dict(d["constraint_set"]),
    )


def save_model(model, path):
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f)


def load_model(path):
    with open(path) as f:
        return model_from_dict(json.load(f))
