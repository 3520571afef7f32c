"""Tension fields, energies and the bi-f-tension system of a curve.

Two independent routes are provided. The *direct* route differentiates the
sampled curve numerically and assembles the bi-f-tension vector field. The
*coefficient* route evaluates its components along the Frenet frame in a
space form of curvature ``c`` from the curvature profile and the weight,
using exact derivative jets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import (
    CurvatureProfile,
    CurveSamples,
    auto_stride,
    covariant_derivative_along,
    unit_tangent,
)
from .errors import ConfigError
from .expr import CURVE_VARIABLES, Jet3, Node, eval_jet, free_names, parse, to_string
from .spaceform import SpaceForm, curvature_tensor_apply, metric_eval

WEIGHT_TAGS = ("constant", "affine", "trig", "exponential", "curvature-power", "custom")
VERDICTS = ("satisfied", "violated", "inconsistent-case")


@dataclass(frozen=True)
class WeightFn:
    """A positive weight ``f`` given as an expression in ``s`` and ``k1..k3``."""

    ast: Node
    tag: str = "custom"

    def __post_init__(self):
        if self.tag not in WEIGHT_TAGS:
            raise ConfigError(f"unknown weight tag {self.tag!r}")

    @classmethod
    def parse(cls, text: str, tag: str = "custom") -> "WeightFn":
        return cls(parse(text, CURVE_VARIABLES), tag)

    @property
    def text(self) -> str:
        return to_string(self.ast)

    @property
    def uses_curvature(self) -> bool:
        return bool(free_names(self.ast) & {"k1", "k2", "k3"})

    def jets(self, s, curvature_jets=None) -> Jet3:
        s = np.asarray(s, dtype=float)
        j = eval_jet(self.ast, s, curvature_jets)
        return Jet3(*(np.broadcast_to(np.asarray(v, dtype=float), s.shape).copy() for v in j.as_tuple()))

    def validate(self, grid, curvature_jets=None) -> None:
        if not np.all(self.jets(grid, curvature_jets).v0 > 0):
            raise ConfigError(f"weight {self.text} is not positive on the grid")


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Per-sample residuals of the four-equation system and a verdict.

    ``eq_residuals`` and ``frenet_coefficients`` have shape ``(4, len(grid))``.
    The coefficients are the true components of the bi-f-tension field along
    E_1..E_4; the equations divide the third row by ``f`` and the fourth by
    ``f^2``, which leaves their zero sets unchanged because ``f > 0``.
    """

    grid: np.ndarray
    eq_residuals: np.ndarray
    frenet_coefficients: np.ndarray
    sup_norms: np.ndarray
    verdict: str
    tol: float
    diagnostics: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "eq_residuals": self.eq_residuals.tolist(),
            "sup_norms": self.sup_norms.tolist(),
            "verdict": self.verdict,
            "tol": self.tol,
            "diagnostics": list(self.diagnostics),
        }


# ---------------------------------------------------------------- direct route


def _weight_on_samples(samples: CurveSamples, f: WeightFn, profile: CurvatureProfile | None) -> Jet3:
    jets = None
    if f.uses_curvature:
        if profile is None:
            raise ConfigError("a curvature-dependent weight needs a curvature profile")
        jets = profile.jets(samples.s)
    f.validate(samples.s, jets)
    return f.jets(samples.s, jets)


def tension_field(space: SpaceForm, samples: CurveSamples, stride: int = 1,
                  edges: str = "nan") -> np.ndarray:
    """Curvature vector ``nabla_T T`` at every sample."""
    T = unit_tangent(space, samples, stride, edges)
    return covariant_derivative_along(space, samples, T, stride, edges)


def f_tension_field(space: SpaceForm, samples: CurveSamples, f: WeightFn,
                    profile: CurvatureProfile | None = None, stride: int = 1,
                    edges: str = "nan") -> np.ndarray:
    """``f nabla_T T + f' T``."""
    F = _weight_on_samples(samples, f, profile)
    T = unit_tangent(space, samples, stride, edges)
    tau = covariant_derivative_along(space, samples, T, stride, edges)
    return F.v0[:, None] * tau + F.v1[:, None] * T


def bi_f_tension_direct(space: SpaceForm, samples: CurveSamples, f: WeightFn,
                        profile: CurvatureProfile | None = None,
                        stride: int | None = None) -> np.ndarray:
    """Bi-f-tension field from iterated covariant derivatives of the tangent.

    Assembles ``(ff''' + f'f'') T + (3ff'' + 2f'^2) nabla T + 4ff' nabla^2 T
    + f^2 nabla^3 T + f^2 R(nabla T, T) T``. Samples inside the stencil
    margin (``8 * stride``) are NaN.
    """
    if stride is None:
        stride = auto_stride(samples.h, len(samples), 3)
    F = _weight_on_samples(samples, f, profile)
    f0, f1, f2, f3 = (v[:, None] for v in F.as_tuple())
    T = unit_tangent(space, samples, stride)
    D1 = covariant_derivative_along(space, samples, T, stride)
    D2 = covariant_derivative_along(space, samples, D1, stride)
    D3 = covariant_derivative_along(space, samples, D2, stride)
    curv = curvature_tensor_apply(space, D1, T, T)
    return ((f0 * f3 + f1 * f2) * T + (3 * f0 * f2 + 2 * f1 ** 2) * D1
            + 4 * f0 * f1 * D2 + f0 ** 2 * D3 + f0 ** 2 * curv)


# ---------------------------------------------------------------- coefficient route


def _d(j: Jet3, order: int = 1) -> Jet3:
    for _ in range(order):
        j = j.shift()
    return j


def system_rows(k1: Jet3, k2: Jet3, k3: Jet3, f: Jet3, c: float) -> list[Jet3]:
    """The four equations as jets (third row divided by f, fourth by f^2).

    Only the value is exact for every row; the first derivative is exact for
    rows two to four, which is what the reduction checks need.
    """
    k1p, k1pp = _d(k1), _d(k1, 2)
    k2p = _d(k2)
    fp, fpp, fppp = _d(f), _d(f, 2), _d(f, 3)
    ff = f * f
    row1 = -3 * k1 * k1p * ff - 4 * k1 * k1 * f * fp + f * fppp + fp * fpp
    row2 = (-(k1 * k1 * k1) * ff - k1 * k2 * k2 * ff + k1pp * ff + 4 * k1p * f * fp
            + 3 * k1 * f * fpp + 2 * k1 * fp * fp + c * k1 * ff)
    row3 = 2 * k1p * k2 * f + k1 * k2p * f + 4 * k1 * k2 * fp
    row4 = k1 * k2 * k3
    return [row1, row2, row3, row4]


def _profile_and_weight_jets(profile: CurvatureProfile, f: WeightFn, grid):
    jets = profile.jets(grid)
    F = f.jets(grid, jets if f.uses_curvature else None)
    return jets, F


def frenet_coefficients(profile: CurvatureProfile, f: WeightFn, c: float, grid=None) -> np.ndarray:
    """Components of the bi-f-tension field along E_1..E_4, shape ``(4, N)``."""
    grid = profile.grid() if grid is None else np.asarray(grid, dtype=float)
    jets, F = _profile_and_weight_jets(profile, f, grid)
    rows = system_rows(jets["k1"], jets["k2"], jets["k3"], F, c)
    scale = [1.0, 1.0, F.v0, F.v0 ** 2]
    return np.array([np.broadcast_to(r.v0 * s, grid.shape) for r, s in zip(rows, scale)])


def _reduced_relation(k1: Jet3, k2: Jet3, f: Jet3, c: float):
    """``f'((5 k1^2 + c) f + 2 f'')`` when k1 is a nonzero constant and k2 = 0."""
    if not (np.all(k2.v0 == 0) and np.all(k1.v0 > 0)):
        return None
    if np.ptp(k1.v0) > 1e-12 * np.max(k1.v0) or np.any(k1.v1 != 0):
        return None
    return f.v1 * ((5 * k1.v0 ** 2 + c) * f.v0 + 2 * f.v2)


def system_residual(profile: CurvatureProfile, f: WeightFn, c: float, tol: float = 1e-6,
                    grid=None) -> ResidualReport:
    """Evaluate the four equations on ``grid`` and decide whether they hold.

    ``c`` = 0, 1, -1 gives the Euclidean, spherical and hyperbolic systems.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    grid = profile.grid() if grid is None else np.asarray(grid, dtype=float)
    jets, F = _profile_and_weight_jets(profile, f, grid)
    f.validate(grid, jets if f.uses_curvature else None)
    rows = system_rows(jets["k1"], jets["k2"], jets["k3"], F, c)
    eq = np.array([np.broadcast_to(r.v0, grid.shape) for r in rows], dtype=float)
    coeffs = eq * np.array([np.ones_like(grid), np.ones_like(grid), F.v0, F.v0 ** 2])
    sup = np.max(np.abs(eq), axis=1)
    verdict = "satisfied" if np.all(sup <= tol) else "violated"
    diagnostics = []
    if c not in (0.0, 1.0, -1.0):
        diagnostics.append(f"curvature c={c:g} is outside the three model spaces")
    reduced = _reduced_relation(jets["k1"], jets["k2"], F, c)
    if reduced is not None and verdict == "violated":
        scale = 1.0 + np.max(np.abs(F.v0)) * (1.0 + np.max(np.abs(F.v2)))
        if np.max(np.abs(reduced)) <= tol * scale:
            diagnostics.append(
                "constant k1 with k2=0: the reduced relation f'((5k1^2+c)f+2f'')=0 holds "
                f"(sup {np.max(np.abs(reduced)):.3g}) but the second system equation fails "
                f"(sup {sup[1]:.6g}); the reduction is necessary, not sufficient"
            )
    return ResidualReport(grid, eq, coeffs, sup, verdict, tol, tuple(diagnostics))


@dataclass(frozen=True)
class GeodesicCondition:
    holds: bool
    value: float | None


def geodesic_condition(f: WeightFn, grid, tol: float = 1e-9) -> GeodesicCondition:
    """Whether ``f f''`` is constant on ``grid`` (and which constant)."""
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 3:
        raise ConfigError("grid needs at least 3 points")
    F = f.jets(grid)
    ffpp = F.v0 * F.v2
    holds = bool(np.ptp(ffpp) <= tol * (1.0 + np.max(np.abs(ffpp))))
    return GeodesicCondition(holds, float(np.mean(ffpp)) if holds else None)


# ---------------------------------------------------------------- energies


@dataclass(frozen=True)
class Energies:
    E: float
    E2: float
    Ef: float
    E2f: float
    Ef2: float


def energies(space: SpaceForm, samples: CurveSamples, f: WeightFn,
             profile: CurvatureProfile | None = None) -> Energies:
    """The five functionals of the curve by trapezoid quadrature.

    One-sided stencils at the ends keep every sample usable, so the
    integrals cover the whole parameter interval.
    """
    F = _weight_on_samples(samples, f, profile)
    dg = covariant_derivative_along(space, samples, samples.points, 1, "one-sided")
    T = dg / np.sqrt(metric_eval(space, dg, dg))[:, None]
    tau = covariant_derivative_along(space, samples, T, 1, "one-sided")
    tau_f = F.v0[:, None] * tau + F.v1[:, None] * T
    speed2 = metric_eval(space, dg, dg)
    tau2 = metric_eval(space, tau, tau)
    half = lambda y: 0.5 * float(np.trapezoid(y, samples.s))  # noqa: E731
    return Energies(
        E=half(speed2),
        E2=half(tau2),
        Ef=half(F.v0 * speed2),
        E2f=half(F.v0 * tau2),
        Ef2=half(metric_eval(space, tau_f, tau_f)),
    )
