"""Finitely supported probability measures and their readouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import EuclideanGeometry
from .errors import ConvergenceError, DomainError
from .numerics import softmax


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atoms (k, m) with non-negative weights summing to one.

    Atoms are kept exactly as given, duplicates included, so atom ``i``
    always lines up with the particle it came from.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.ndim != 2 or len(atoms) != len(weights) or len(weights) == 0:
            raise DomainError(f"need one weight per atom, got {atoms.shape} atoms and {weights.shape} weights")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be non-negative and sum to one")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return len(self.weights)

    @classmethod
    def point_mass(cls, y):
        return cls(np.asarray(y, float)[None, :], np.ones(1))

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["atoms"], float), np.array(d["weights"], float))


@dataclass(frozen=True)
class ParticleArray:
    """An N x Q x m array of members of K."""

    Y: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 3 or 0 in Y.shape:
            raise DomainError(f"particle array must be N x Q x m, got shape {Y.shape}")
        object.__setattr__(self, "Y", Y)

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def Q(self) -> int:
        return self.Y.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[2]

    def averaged(self) -> np.ndarray:
        """Per-anchor mean over the Q particles, shape (N, m)."""
        return self.Y.mean(axis=1)

    def flat(self) -> np.ndarray:
        return self.Y.reshape(-1, self.m)


def p_attention(w, particles: ParticleArray) -> DiscreteMeasure:
    """Spread softmax(w)_n evenly over the Q particles of row n."""
    w = np.asarray(w, dtype=float)
    if w.shape != (particles.N,):
        raise DomainError(f"expected {particles.N} logits, got shape {w.shape}")
    s = softmax(w)
    weights = np.repeat(s / particles.Q, particles.Q)
    # renormalise away the rounding from the split
    return DiscreteMeasure(particles.flat(), weights / weights.sum())


def expectation(mu: DiscreteMeasure) -> np.ndarray:
    return mu.weights @ mu.atoms


def w1_to_pointmass(mu: DiscreteMeasure, y) -> float:
    """Wasserstein-1 distance between ``mu`` and the point mass at ``y``.

    Every coupling with a point mass is the product coupling, so the
    distance is the mean distance from an atom to ``y``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (mu.dim,):
        raise DomainError(f"point has shape {y.shape}, measure lives in dimension {mu.dim}")
    return float(mu.weights @ np.linalg.norm(mu.atoms - y, axis=1))


def mode(mu: DiscreteMeasure) -> np.ndarray:
    """Heaviest atom; ``argmax`` already breaks ties toward the lowest index."""
    return mu.atoms[int(np.argmax(mu.weights))]


def frechet_objective(mu: DiscreteMeasure, point, geometry) -> float:
    return float(mu.weights @ geometry.dist(point, mu.atoms) ** 2)


def frechet_mean(mu: DiscreteMeasure, geometry=None, max_iter: int = 200, step: float = 1.0,
                 tol: float = 1e-10) -> np.ndarray:
    """Minimise the weighted sum of squared geodesic distances to the atoms.

    Riemannian gradient descent ``x <- exp_x(step * sum_i w_i log_x(a_i))``
    started from the extrinsic mean pulled back onto the space.

    Raises
    ------
    GeodesicBallError
        If the atoms are too spread out for the geometry.
    ConvergenceError
        If the tangent gradient is still above ``tol`` after ``max_iter`` steps.
    """
    geometry = geometry or EuclideanGeometry()
    support = mu.atoms[mu.weights > 0]
    geometry.check_spread(support)
    weights = mu.weights[mu.weights > 0]
    if np.all(support == support[0]):
        return support[0].copy()

    mean = weights @ support
    if np.linalg.norm(mean) < 1e-12 and geometry.name != "euclidean":
        x = support[0]
    else:
        x = geometry.project(mean)
    grad_norm = np.inf
    for _ in range(max_iter + 1):
        grad = weights @ geometry.log(x, support)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            return x
        x = geometry.exp(x, step * grad)
    raise ConvergenceError("Frechet mean iteration did not converge", grad_norm)
