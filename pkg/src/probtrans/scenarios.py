"""Seeded toy regression problems with constrained outputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constraints import (
    CURVE_DOMAIN,
    BoxSet,
    ConstraintSet,
    CurveSet,
    CurveSpec,
    DiskSet,
    SampleBackedSet,
    SphereSet,
    box_project,
    disk_project,
)
from .errors import ConfigError

SCENARIOS = ("sphere", "square", "disk", "rose", "variety")


@dataclass
class Scenario:
    kind: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray  # always noise free
    f: Callable
    constraint_set: ConstraintSet  # distances / membership
    particle_source: ConstraintSet  # what the particle generator samples from
    params: dict

    def to_dict(self):
        return {
            "kind": self.kind,
            "constraint_set": self.constraint_set.to_dict(),
            "params": self.params,
            "train": {"x": self.train_x.tolist(), "y": self.train_y.tolist()},
            "test": {"x": self.test_x.tolist(), "y": self.test_y.tolist()},
        }


def spherical_embedding(u):
    """(u1, u2) -> (cos u1 sin u2, sin u1 sin u2, cos u2)."""
    u = np.asarray(u, float)
    u1, u2 = u[..., 0], u[..., 1]
    return np.stack([np.cos(u1) * np.sin(u2), np.sin(u1) * np.sin(u2), np.cos(u2)], axis=-1)


def gen_sphere_scenario(rng, train_size=1000, test_size=100, input_dim=1000, coefficients=None):
    """Random map [0,1]^n -> S^2: a rank-2 Gaussian projection, a shared
    quadratic applied per coordinate, then spherical coordinates."""
    a, b, c = rng.uniform(0.0, 1.0, size=3) if coefficients is None else coefficients
    A = rng.standard_normal((2, input_dim))

    def f(x):
        z = np.asarray(x, float) @ A.T
        return spherical_embedding(a * z**2 + b * z + c)

    train_x = rng.uniform(0.0, 1.0, size=(train_size, input_dim))
    test_x = rng.uniform(0.0, 1.0, size=(test_size, input_dim))
    train_y = f(train_x)
    sphere = SphereSet()
    return Scenario("sphere", train_x, train_y, test_x, f(test_x), f, sphere,
                    SampleBackedSet(sphere, train_y), {"a": float(a), "b": float(b), "c": float(c)})


def gen_convex_scenario(shape, rng, train_size=900, test_size=100, theta=None, noise_std=0.0):
    """``x -> P_K(1.5 R_theta x)`` on inputs uniform in [-1, 1]^2.

    Optional Gaussian noise is added to the training targets only.
    """
    if shape == "square":
        cset, proj = BoxSet(), box_project
    elif shape == "disk":
        cset, proj = DiskSet(), disk_project
    else:
        raise ConfigError(f"unknown convex shape {shape!r}")
    theta = rng.uniform(0.0, 2 * np.pi) if theta is None else theta
    A = 1.5 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])

    def f(x):
        return proj(np.asarray(x, float) @ A.T)

    train_x = rng.uniform(-1.0, 1.0, size=(train_size, 2))
    test_x = rng.uniform(-1.0, 1.0, size=(test_size, 2))
    train_y = f(train_x)
    if noise_std:
        train_y = train_y + noise_std * rng.standard_normal(train_y.shape)
    return Scenario(shape, train_x, train_y, test_x, f(test_x), f, cset, cset,
                    {"theta": float(theta), "noise_std": float(noise_std)})


def gen_nonconvex_scenario(kind, rng, train_size=900, test_size=100, noise_std=np.sqrt(0.1), beta=None):
    """``x -> rho(clamp(quintic(x)))`` on inputs uniform in [-10, 10].

    Training targets get isotropic Gaussian noise; test targets stay clean.
    """
    if kind == "rose":
        spec = CurveSpec("rose")
    elif kind == "variety":
        spec = CurveSpec.random_variety(rng)
    else:
        raise ConfigError(f"unknown curve kind {kind!r}")
    beta = rng.standard_normal(6) if beta is None else np.asarray(beta, float)
    lo, hi = CURVE_DOMAIN

    def f(x):
        x = np.asarray(x, float).reshape(-1)
        return spec(np.clip(np.polynomial.polynomial.polyval(x, beta), lo, hi))

    train_x = rng.uniform(lo, hi, size=(train_size, 1))
    test_x = rng.uniform(lo, hi, size=(test_size, 1))
    train_y = f(train_x) + noise_std * rng.standard_normal((train_size, 2))
    cset = CurveSet(spec)
    return Scenario(kind, train_x, train_y, test_x, f(test_x), f, cset, cset,
                    {"beta": beta.tolist(), "curve": spec.to_dict(), "noise_std": float(noise_std)})


def default_noise(kind):
    return float(np.sqrt(0.1)) if kind in ("rose", "variety") else 0.0


def make_scenario(kind, rng, train_size=None, test_size=100, noise_std=None):
    """Dispatch on ``kind``; ``None`` sizes and noise take the per-scenario defaults."""
    if train_size is not None and train_size < 1 or test_size < 1:
        raise ConfigError("train_size and test_size must be at least 1")
    if kind == "sphere":
        if noise_std:
            # particles are drawn from the training outputs, which must stay on the sphere
            raise ConfigError("the sphere scenario does not support target noise")
        return gen_sphere_scenario(rng, train_size or 1000, test_size)
    if kind in ("square", "disk"):
        return gen_convex_scenario(kind, rng, train_size or 900, test_size, noise_std=noise_std or 0.0)
    if kind in ("rose", "variety"):
        noise = np.sqrt(0.1) if noise_std is None else noise_std
        return gen_nonconvex_scenario(kind, rng, train_size or 900, test_size, noise)
    raise ConfigError(f"unknown scenario {kind!r}; expected one of {SCENARIOS}")
