"""Arclength curves in space forms: sampling, Frenet apparatus, reconstruction.

Curves are stored as samples on a uniform arclength grid. Covariant
derivatives along a curve are central finite differences of the ambient
coordinates followed by projection onto the tangent space of the model, so
the same code serves E^n, S^n(1) and H^n(-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

from . import _fd
from .errors import (
    ConfigError,
    DegenerateInput,
    FrameCollapse,
    StepTooLarge,
    TooFewSamples,
)
from .expr import Jet3, Node, eval_jet, parse
from .spaceform import (
    SpaceForm,
    metric_eval,
    on_manifold_check,
    project_to_manifold,
    tangent_project,
)

MIN_SAMPLES = 9
CURVATURE_NAMES = ("k1", "k2", "k3")


@dataclass(frozen=True, eq=False)
class CurveSamples:
    """Points of a unit-speed curve at ``s[0], s[0] + h, ...``."""

    s: np.ndarray
    points: np.ndarray
    space: SpaceForm
    spacing_error: float | None = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "points", pts)
        if s.ndim != 1 or pts.shape[:1] != s.shape:
            raise ConfigError("s and points must have matching lengths")
        if len(s) < MIN_SAMPLES:
            raise TooFewSamples(f"need at least {MIN_SAMPLES} samples, got {len(s)}")
        self.space.check_dim(pts)
        steps = np.diff(s)
        h = (s[-1] - s[0]) / (len(s) - 1)
        if h <= 0 or np.max(np.abs(steps - h)) > 1e-6 * h:
            raise ConfigError("arclength grid must be increasing and uniform")
        if not on_manifold_check(self.space, pts, 1e-9):
            raise ConfigError(f"curve points are not on the {self.space.model} model")

    @property
    def h(self) -> float:
        return (self.s[-1] - self.s[0]) / (len(self.s) - 1)

    def __len__(self):
        return len(self.s)

    @classmethod
    def from_function(cls, func, s0: float, s1: float, n: int, space: SpaceForm) -> "CurveSamples":
        """Sample an already unit-speed parametrisation ``func(s) -> (n, d)``."""
        s = np.linspace(s0, s1, n)
        return cls(s, np.asarray(func(s), dtype=float), space)


@dataclass(frozen=True, eq=False)
class FrenetApparatus:
    """Frenet frames and curvatures on the sample grid.

    ``frames[i]`` holds E_{i+1} at every sample and ``curvatures[i]`` holds
    k_{i+1}. Samples within the finite-difference margin are NaN. Curvatures
    beyond the rank are reported as identically zero.
    """

    frames: np.ndarray
    curvatures: np.ndarray
    rank: int
    degenerate_at: tuple
    stride: int

    @property
    def k1(self):
        return self.curvatures[0]

    @property
    def k2(self):
        return self.curvatures[1] if len(self.curvatures) > 1 else np.zeros_like(self.curvatures[0])

    @property
    def k3(self):
        return self.curvatures[2] if len(self.curvatures) > 2 else np.zeros_like(self.curvatures[0])

    def valid_mask(self, level: int | None = None) -> np.ndarray:
        """Samples where the first ``level`` curvatures are all finite."""
        level = self.rank - 1 if level is None else level
        mask = np.all(np.isfinite(self.frames[0]), axis=-1)
        for i in range(min(level, len(self.curvatures))):
            mask &= np.isfinite(self.curvatures[i])
        return mask


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True, eq=False)
class SampledCurvature:
    """A curvature function known on a grid, smoothed by a quintic spline."""

    s: np.ndarray
    values: np.ndarray
    _spline: object = field(init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if len(s) < 6:
            raise TooFewSamples("sampled curvature needs at least 6 points")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_spline", make_interp_spline(s, values, k=5))

    def jet(self, s) -> Jet3:
        sp = self._spline
        return Jet3(sp(s), sp(s, 1), sp(s, 2), sp(s, 3))


@dataclass(frozen=True, eq=False)
class CurvatureProfile:
    """Curvatures k1, k2, k3 as expressions in ``s`` or sampled splines."""

    k1: Node | SampledCurvature
    k2: Node | SampledCurvature
    k3: Node | SampledCurvature
    domain: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def from_strings(cls, k1="0", k2="0", k3="0", domain=(0.0, 1.0)) -> "CurvatureProfile":
        return cls(
            parse(str(k1), {"s"}),
            parse(str(k2), {"s"}),
            parse(str(k3), {"s"}),
            (float(domain[0]), float(domain[1])),
        )

    def grid(self, n: int = 128) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], n)

    def jet(self, name: str, s) -> Jet3:
        item = getattr(self, name)
        if isinstance(item, SampledCurvature):
            return item.jet(s)
        j = eval_jet(item, s)
        if np.ndim(s) and np.ndim(j.v0) == 0:
            ones = np.ones_like(np.asarray(s, dtype=float))
            j = Jet3(j.v0 * ones, j.v1 * ones, j.v2 * ones, j.v3 * ones)
        return j

    def jets(self, s) -> dict[str, Jet3]:
        return {name: self.jet(name, s) for name in CURVATURE_NAMES}

    def values(self, name: str, s) -> np.ndarray:
        return np.asarray(self.jet(name, s).v0, dtype=float)

    def check_nonnegative(self, grid) -> bool:
        return all(np.all(self.values(name, grid) >= 0) for name in CURVATURE_NAMES)


# ---------------------------------------------------------------- sampling


def _norm(space: SpaceForm, v) -> np.ndarray:
    return np.sqrt(np.maximum(metric_eval(space, v, v), 0.0))


def _projected_velocity(space: SpaceForm, x, dx) -> np.ndarray:
    """Velocity of the retracted curve ``project_to_manifold(x(t))``."""
    if space.model == "euclidean":
        return dx
    if space.model == "sphere":
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        xh = x / r
        return (dx - np.sum(dx * xh, axis=-1, keepdims=True) * xh) / r
    rho = np.sqrt(-metric_eval(space, x, x))[..., None]
    xh = x / rho
    return (dx + metric_eval(space, dx, xh)[..., None] * xh) / rho


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _segment_length(space, spline, a, b) -> np.ndarray:
    """Length of the retracted spline between parameters ``a`` and ``b``."""
    a = np.atleast_1d(a)
    b = np.atleast_1d(b)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    t = mid[:, None] + half[:, None] * _GL_X[None, :]
    x = spline(t)
    vel = _projected_velocity(space, x, spline(t, 1))
    return half * np.sum(_norm(space, vel) * _GL_W[None, :], axis=1)


def resample_arclength(raw_points, space: SpaceForm, n_out: int) -> CurveSamples:
    """Resample a polyline onto ``n_out`` points uniform in arclength.

    The polyline is interpolated with a cubic spline in chord length, the
    spline (retracted onto the model) is measured by Gauss-Legendre
    quadrature and inverted by Newton iteration.
    """
    raw = np.asarray(raw_points, dtype=float)
    if raw.ndim != 2 or len(raw) < 4:
        raise DegenerateInput("need at least 4 raw points")
    space.check_dim(raw)
    if not on_manifold_check(space, raw, 1e-8):
        raise DegenerateInput(f"raw points are not on the {space.model} model")
    if n_out < MIN_SAMPLES:
        raise TooFewSamples(f"n_out must be at least {MIN_SAMPLES}")
    chords = _norm(space, np.diff(raw, axis=0))
    total = float(np.sum(chords))
    if total < 1e-9 or np.any(chords <= 1e-12 * total):
        raise DegenerateInput("repeated points or vanishing total length")
    t = np.concatenate([[0.0], np.cumsum(chords)])
    spline = CubicSpline(t, raw, axis=0)

    seg = _segment_length(space, spline, t[:-1], t[1:])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    length = cum[-1]
    targets = np.linspace(0.0, length, n_out)
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg) - 1)
    tk = t[idx] + (targets - cum[idx]) / seg[idx] * (t[idx + 1] - t[idx])
    for _ in range(30):
        partial = cum[idx] + _segment_length(space, spline, t[idx], tk)
        speed = _norm(space, _projected_velocity(space, spline(tk), spline(tk, 1)))
        step = (partial - targets) / speed
        tk = np.clip(tk - step, t[idx], t[idx + 1])
        if np.max(np.abs(step)) < 1e-15 * t[-1]:
            break
    tk[0], tk[-1] = t[0], t[-1]
    pts = project_to_manifold(space, spline(tk))
    h = length / (n_out - 1)
    check = _segment_length(space, spline, tk[:-1], tk[1:])
    spacing_error = float(np.max(np.abs(check - h)) / h)
    return CurveSamples(targets, pts, space, spacing_error=spacing_error)


# ---------------------------------------------------------------- derivatives


def covariant_derivative_along(space: SpaceForm, samples: CurveSamples, field_values,
                               stride: int = 1, edges: str = "nan") -> np.ndarray:
    """Covariant derivative along the curve of a tangent vector field.

    Fourth-order central differences of the ambient coordinates (spacing
    ``stride * h``) projected onto the model's tangent space. With
    ``edges="nan"`` the first and last ``2 * stride`` samples are NaN.
    """
    values = np.asarray(field_values, dtype=float)
    if len(values) != len(samples):
        raise ConfigError("field must have one vector per sample")
    if len(samples) <= 4 * stride:
        raise TooFewSamples("not enough samples for the derivative stencil")
    D = _fd.diff(values, samples.h, 1, 5, axis=0, stride=stride, edges=edges)
    return tangent_project(space, samples.points, D)


def unit_tangent(space: SpaceForm, samples: CurveSamples, stride: int = 1,
                 edges: str = "nan") -> np.ndarray:
    T = covariant_derivative_along(space, samples, samples.points, stride, edges)
    return T / _norm(space, T)[:, None]


def auto_stride(h: float, n_samples: int, levels: int, target: float = 0.01) -> int:
    """Stencil stride keeping nested differences clear of round-off.

    Nested differences amplify rounding by ``1/(stride*h)`` per level; a
    stencil spacing near ``target`` balances that against truncation.
    """
    stride = max(1, int(round(target / h)))
    limit = max(1, (n_samples - 1) // (4 * (levels + 1)))
    return min(stride, limit)


def frenet_apparatus(space: SpaceForm, samples: CurveSamples, tol: float = 1e-7,
                     stride: int | None = None, edges: str = "nan") -> FrenetApparatus:
    """Frenet frame by Gram-Schmidt of successive covariant derivatives.

    E_1 is the unit tangent; E_{i+1} is the normalised part of
    nabla_T E_i orthogonal to E_1..E_i and k_i is the norm of that part. A
    level whose residual stays below ``tol`` everywhere ends the frame
    (lower rank); one that dips below ``tol`` on more than 5% of the valid
    samples raises ``FrameCollapse``.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    n = space.n
    if stride is None:
        stride = auto_stride(samples.h, len(samples), n)
    E = [unit_tangent(space, samples, stride, edges)]
    ks = []
    degenerate = []
    for _ in range(1, n):
        D = covariant_derivative_along(space, samples, E[-1], stride, edges)
        R = D.copy()
        for Ej in E:
            R = R - metric_eval(space, D, Ej)[:, None] * Ej
        norm = _norm(space, R)
        valid = np.isfinite(norm)
        if not np.any(valid):
            raise TooFewSamples("curve too short for the requested frame")
        below = valid & (norm < tol)
        frac = np.count_nonzero(below) / np.count_nonzero(valid)
        if frac == 1.0:
            break
        if frac > 0.05:
            raise FrameCollapse(
                f"curvature k{len(ks) + 1} falls below tol on {100 * frac:.1f}% of samples"
            )
        with np.errstate(invalid="ignore", divide="ignore"):
            nxt = R / norm[:, None]
        nxt[below] = np.nan
        degenerate.append(np.flatnonzero(below))
        ks.append(norm)
        E.append(nxt)
    curv = np.zeros((n - 1, len(samples)))
    for i, k in enumerate(ks):
        curv[i] = k
    return FrenetApparatus(
        frames=np.array(E),
        curvatures=curv,
        rank=len(E),
        degenerate_at=tuple(degenerate),
        stride=stride,
    )


# ---------------------------------------------------------------- integration


def _orthonormalize(space: SpaceForm, p, frame):
    p = project_to_manifold(space, p)
    out = []
    for E in frame:
        v = tangent_project(space, p, E) if space.model != "euclidean" else E.copy()
        for w in out:
            v = v - metric_eval(space, v, w) * w
        out.append(v / np.sqrt(metric_eval(space, v, v)))
    return p, np.array(out)


def _frame_drift(space: SpaceForm, p, frame) -> float:
    r = len(frame)
    G = np.array([[metric_eval(space, frame[i], frame[j]) for j in range(r)] for i in range(r)])
    drift = np.max(np.abs(G - np.eye(r)))
    if space.model != "euclidean":
        drift = max(drift, np.max(np.abs(metric_eval(space, frame, p))),
                    abs(metric_eval(space, p, p) - space.c))
    return float(drift)


def reconstruct_curve(space: SpaceForm, profile: CurvatureProfile, p0, frame0: Sequence,
                      h: float, reorth_every: int = 16) -> CurveSamples:
    """Integrate the Frenet system from ``p0`` with initial frame ``frame0``.

    The state (position, E_1..E_r) obeys the linear system
    ``p' = E_1``, ``E_i' = -k_{i-1} E_{i-1} + k_i E_{i+1} - c <E_i, E_1> p``
    in ambient coordinates; the last term keeps the curve on the sphere
    (c = 1) or hyperboloid (c = -1). Classical RK4 with re-orthonormalisation
    every ``reorth_every`` steps; ``StepTooLarge`` if the frame drifts by
    more than 1e-6 between two re-orthonormalisations.
    """
    if not 0 < h <= 1e-2:
        raise ConfigError("step h must lie in (0, 1e-2]")
    p0 = np.asarray(p0, dtype=float)
    frame = np.asarray(frame0, dtype=float)
    space.check_dim(p0, frame)
    r = len(frame)
    if not 1 <= r <= space.n:
        raise ConfigError(f"frame must hold between 1 and {space.n} vectors")
    if not on_manifold_check(space, p0, 1e-9):
        raise ConfigError("p0 is not on the model")
    if _frame_drift(space, p0, frame) > 1e-9:
        raise ConfigError("frame0 must be orthonormal and tangent at p0")

    s0, s1 = profile.domain
    nsteps = int(np.ceil((s1 - s0) / h - 1e-9))
    h = (s1 - s0) / nsteps
    half = s0 + 0.5 * h * np.arange(2 * nsteps + 1)
    ks = [profile.values(name, half) for name in CURVATURE_NAMES[: max(r - 1, 0)]]
    K = np.zeros((len(half), r + 1, r + 1))
    K[:, 0, 1] = 1.0
    K[:, 1, 0] = -space.c
    for i, k in enumerate(ks, start=1):
        K[:, i, i + 1] = k
        K[:, i + 1, i] = -k

    Y = np.vstack([p0[None, :], frame])
    out = np.empty((nsteps + 1, len(p0)))
    out[0] = p0
    for step in range(nsteps):
        Ka, Kb, Kc = K[2 * step], K[2 * step + 1], K[2 * step + 2]
        d1 = Ka @ Y
        d2 = Kb @ (Y + 0.5 * h * d1)
        d3 = Kb @ (Y + 0.5 * h * d2)
        d4 = Kc @ (Y + h * d3)
        Y = Y + (h / 6.0) * (d1 + 2 * d2 + 2 * d3 + d4)
        if (step + 1) % reorth_every == 0 or step == nsteps - 1:
            drift = _frame_drift(space, Y[0], Y[1:])
            if drift > 1e-6:
                raise StepTooLarge(f"frame drift {drift:.2e} exceeds 1e-6; reduce h")
            p, fr = _orthonormalize(space, Y[0], Y[1:])
            Y = np.vstack([p[None, :], fr])
        out[step + 1] = Y[0]
    out = project_to_manifold(space, out)
    return CurveSamples(s0 + h * np.arange(nsteps + 1), out, space)


def profile_jets_on(profile: CurvatureProfile, s) -> Mapping[str, Jet3]:
    return profile.jets(np.asarray(s, dtype=float))
