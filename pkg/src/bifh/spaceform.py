"""Ambient space forms: Euclidean space, the unit sphere and the hyperboloid.

The sphere ``S^n(1)`` lives in ``R^(n+1)`` and the hyperbolic space
``H^n(-1)`` is the upper sheet of ``<p, p> = -1`` in Minkowski space with
signature (-, +, ..., +). Covariant derivatives of fields along curves and
surfaces are then ambient derivatives followed by :func:`tangent_project`.

All functions accept batched arrays whose last axis holds coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, OffManifold

MODELS = ("euclidean", "sphere", "hyperbolic")
_CURVATURE = {"euclidean": 0.0, "sphere": 1.0, "hyperbolic": -1.0}


@dataclass(frozen=True)
class SpaceForm:
    """A model space of constant sectional curvature 0, +1 or -1."""

    model: str
    n: int

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown space model {self.model!r}; expected one of {MODELS}")
        if self.n < 2:
            raise ConfigError("space dimension must be at least 2")

    @classmethod
    def euclidean(cls, n: int) -> "SpaceForm":
        return cls("euclidean", n)

    @classmethod
    def sphere(cls, n: int) -> "SpaceForm":
        return cls("sphere", n)

    @classmethod
    def hyperbolic(cls, n: int) -> "SpaceForm":
        return cls("hyperbolic", n)

    @property
    def c(self) -> float:
        return _CURVATURE[self.model]

    @property
    def ambient_dim(self) -> int:
        return self.n if self.model == "euclidean" else self.n + 1

    @property
    def signature(self) -> np.ndarray:
        sig = np.ones(self.ambient_dim)
        if self.model == "hyperbolic":
            sig[0] = -1.0
        return sig

    def check_dim(self, *vectors) -> None:
        for vec in vectors:
            if np.shape(vec)[-1] != self.ambient_dim:
                raise DimensionMismatch(
                    f"{self.model}({self.n}) expects {self.ambient_dim} coordinates, got {np.shape(vec)[-1]}"
                )


def metric_eval(space: SpaceForm, u, v):
    """Ambient inner product: Euclidean dot, or Minkowski for the hyperboloid."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    space.check_dim(u, v)
    return np.sum(u * v * space.signature, axis=-1)


def tangent_project(space: SpaceForm, p, v) -> np.ndarray:
    """Remove the component of ``v`` along the position normal at ``p``."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    space.check_dim(p, v)
    if space.model == "euclidean":
        return v.copy()
    if not on_manifold_check(space, p, 1e-6):
        raise OffManifold(f"point is not on the {space.model} model")
    vp = metric_eval(space, v, p)[..., None]
    if space.model == "sphere":
        return v - vp * p
    return v + vp * p


def curvature_tensor_apply(space_or_c, X, Y, Z, *, space: SpaceForm | None = None) -> np.ndarray:
    """Riemann tensor of a space form: ``c (h(Y,Z) X - h(X,Z) Y)``.

    The first argument is either a :class:`SpaceForm` or a bare curvature
    ``c``; in the latter case inner products are Euclidean unless ``space``
    supplies the metric.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if isinstance(space_or_c, SpaceForm):
        space = space_or_c
        c = space.c
    else:
        c = float(space_or_c)
    if X.shape[-1] != Y.shape[-1] or Y.shape[-1] != Z.shape[-1]:
        raise DimensionMismatch("curvature tensor arguments differ in dimension")
    if space is not None:
        space.check_dim(X)
        h = lambda a, b: metric_eval(space, a, b)  # noqa: E731
    else:
        h = lambda a, b: np.sum(a * b, axis=-1)  # noqa: E731
    return c * (h(Y, Z)[..., None] * X - h(X, Z)[..., None] * Y)


def on_manifold_check(space: SpaceForm, p, tol: float) -> bool:
    """True iff every point in ``p`` lies on the model within ``tol``."""
    p = np.asarray(p, dtype=float)
    if space.model == "euclidean":
        return True
    norm2 = metric_eval(space, p, p)
    if space.model == "sphere":
        return bool(np.all(np.abs(norm2 - 1.0) <= tol))
    return bool(np.all(np.abs(norm2 + 1.0) <= tol) and np.all(p[..., 0] > 0))


def project_to_manifold(space: SpaceForm, p) -> np.ndarray:
    """Nearest-point style retraction used after resampling or integration."""
    p = np.asarray(p, dtype=float)
    if space.model == "euclidean":
        return p.copy()
    if space.model == "sphere":
        return p / np.linalg.norm(p, axis=-1, keepdims=True)
    norm2 = -metric_eval(space, p, p)[..., None]
    if np.any(norm2 <= 0) or np.any(p[..., 0] <= 0):
        raise OffManifold("point cannot be retracted onto the upper hyperboloid")
    return p / np.sqrt(norm2)


def from_name(name: str, n: int) -> SpaceForm:
    return SpaceForm(name.lower(), n)
