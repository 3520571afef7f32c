"""Chart-based geometry of surfaces in 3-dimensional space forms.

A surface is given by a chart ``(u, v) -> ambient point`` sampled on a
uniform grid. Metric, Christoffel symbols, unit normal, second fundamental
form and shape operator come from finite differences of the chart. On top
of these the tangential and normal parts of the bi-f-tension field are
evaluated from closed-form expressions, and an independent oracle computes
the same field directly from its definition as an ambient vector.

Sign conventions: the scalar Laplacian is the trace of the Hessian, while
the rough Laplacians acting on vector fields (``Delta(grad f)`` on the
surface and the pull-back ``Delta^phi``) are *minus* the trace of the
second covariant derivative.

Finite differences: fourth-order stencils for derivatives of the chart and
of the weight, second-order central differences for derivatives of derived
quantities. Nodes whose stencils leave the grid are NaN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fd
from .errors import (
    ConfigError,
    ImmersionFailure,
    ModePreconditionFailed,
    NormalDegeneracy,
    OffManifold,
)
from .expr import CHART_VARIABLES, SURFACE_FIELD_VARIABLES, Node, evaluate, parse
from .spaceform import SpaceForm, metric_eval, on_manifold_check, tangent_project

M = 2
MODES = ("general", "cmc", "ricci-flat", "einstein", "constant-c")
FIELD_NAMES = ("x", "y", "z", "w")


# ---------------------------------------------------------------- charts


@dataclass(frozen=True, eq=False)
class SurfaceChart:
    """A parametrised surface patch on a uniform ``nu x nv`` grid.

    Either ``components`` (one expression in ``u, v`` per ambient
    coordinate) or ``samples`` (array ``(nu, nv, d)``) must be given.
    ``orientation`` (+1 or -1) multiplies the normal obtained from the
    coordinate cross product.
    """

    domain: tuple
    grid: tuple
    space: SpaceForm
    components: tuple | None = None
    samples: np.ndarray | None = None
    orientation: int = 1
    name: str = ""

    def __post_init__(self):
        (u0, u1), (v0, v1) = self.domain
        if not (u1 > u0 and v1 > v0):
            raise ConfigError("chart domain must be a nondegenerate rectangle")
        nu, nv = self.grid
        if nu < 9 or nv < 9:
            raise ConfigError("chart grid needs at least 9 nodes per direction")
        if self.space.n != 3:
            raise ConfigError("charts are supported in 3-dimensional space forms only")
        if self.orientation not in (1, -1):
            raise ConfigError("orientation must be +1 or -1")
        if (self.components is None) == (self.samples is None):
            raise ConfigError("give exactly one of components or samples")
        if self.components is not None and len(self.components) != self.space.ambient_dim:
            raise ConfigError(
                f"{self.space.model} charts need {self.space.ambient_dim} components"
            )
        if self.samples is not None and np.shape(self.samples) != (nu, nv, self.space.ambient_dim):
            raise ConfigError("samples must have shape (nu, nv, ambient_dim)")

    @classmethod
    def from_strings(cls, components, domain, grid, space: SpaceForm | str = "euclidean",
                     orientation: int = 1, name: str = "") -> "SurfaceChart":
        if isinstance(space, str):
            space = SpaceForm(space, 3)
        comps = tuple(parse(str(c), CHART_VARIABLES) for c in components)
        dom = tuple((float(a), float(b)) for a, b in domain)
        return cls(dom, (int(grid[0]), int(grid[1])), space, comps, None, int(orientation), name)

    @classmethod
    def from_json(cls, data: dict | str) -> "SurfaceChart":
        """Build from ``{components, domain, grid[, space, orientation, name]}``."""
        if isinstance(data, str):
            data = json.loads(data)
        try:
            return cls.from_strings(
                data["components"], data["domain"], data["grid"],
                data.get("space", "euclidean"), data.get("orientation", 1), data.get("name", ""),
            )
        except KeyError as exc:
            raise ConfigError(f"chart spec is missing {exc.args[0]!r}") from None

    @property
    def h(self) -> tuple[float, float]:
        (u0, u1), (v0, v1) = self.domain
        return (u1 - u0) / (self.grid[0] - 1), (v1 - v0) / (self.grid[1] - 1)

    def mesh(self):
        (u0, u1), (v0, v1) = self.domain
        u = np.linspace(u0, u1, self.grid[0])
        v = np.linspace(v0, v1, self.grid[1])
        return np.meshgrid(u, v, indexing="ij")

    def points(self) -> np.ndarray:
        if self.samples is not None:
            return np.asarray(self.samples, dtype=float)
        U, V = self.mesh()
        env = {"u": U, "v": V}
        return np.stack([np.broadcast_to(evaluate(c, env), U.shape) for c in self.components], axis=-1)

    def refined(self, factor: int = 2) -> "SurfaceChart":
        if self.components is None:
            raise ConfigError("only expression charts can be refined")
        nu, nv = self.grid
        return replace(self, grid=(factor * (nu - 1) + 1, factor * (nv - 1) + 1))

    def flipped(self) -> "SurfaceChart":
        return replace(self, orientation=-self.orientation)

    def field(self, expr: str | Node) -> np.ndarray:
        """Sample a scalar field given in ``u, v`` and ambient coordinates."""
        node = parse(expr, SURFACE_FIELD_VARIABLES) if isinstance(expr, str) else expr
        U, V = self.mesh()
        pts = self.points()
        env = {"u": U, "v": V}
        for i, name in enumerate(FIELD_NAMES[: pts.shape[-1]]):
            env[name] = pts[..., i]
        return np.broadcast_to(np.asarray(evaluate(node, env), dtype=float), U.shape).copy()


def _d(F, h, axis, order=2):
    return _fd.diff(F, h, 1, order + 1, axis=axis)


def _d2(F, h, axis):
    return _fd.diff(F, h, 2, 5, axis=axis)


def _cross3(a, b):
    return np.cross(a, b)


def _cross4(a, b, c):
    """Vector orthogonal (Euclidean dot) to three vectors in R^4."""
    rows = np.stack([a, b, c], axis=-2)
    out = np.empty(a.shape)
    cols = [0, 1, 2, 3]
    for i in range(4):
        keep = [j for j in cols if j != i]
        with np.errstate(invalid="ignore"):
            out[..., i] = (-1) ** i * np.linalg.det(rows[..., keep])
    return out


# ---------------------------------------------------------------- geometry


@dataclass(frozen=True, eq=False)
class HypersurfaceGeometry:
    """Per-node intrinsic and extrinsic data of a chart.

    Index conventions: ``d1[a]`` is the ambient vector ``phi_a``,
    ``gamma[..., c, a, b]`` is ``Gamma^c_ab``, ``A[..., a, b]`` is the
    mixed tensor ``A^a_b`` and ``b`` is the covariant second fundamental
    form ``b_ab``.
    """

    chart: SurfaceChart
    space: SpaceForm
    points: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    sqrtg: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    b: np.ndarray
    A: np.ndarray
    H: np.ndarray
    A2: np.ndarray

    @property
    def h(self):
        return self.chart.h

    @property
    def m(self) -> int:
        return M

    def inner(self, X, Y):
        return metric_eval(self.space, X, Y)

    def d(self, F, axis: int, order: int = 2):
        """Partial derivative along ``u`` (axis 0) or ``v`` (axis 1)."""
        return _d(F, self.h[axis], axis, order)

    def project(self, V):
        if self.space.model == "euclidean":
            return V
        return tangent_project(self.space, self.points, V)

    def push(self, comps):
        """Ambient vector ``V^a phi_a`` from chart components."""
        return np.einsum("...a,a...k->...k", comps, self.d1)

    def tangential_components(self, V):
        """Chart components ``g^ab <V, phi_b>`` of the tangential part."""
        cov = np.stack([self.inner(V, self.d1[a]) for a in range(M)], axis=-1)
        return np.einsum("...ab,...b->...a", self.ginv, cov)

    def normal_component(self, V):
        return self.inner(V, self.xi)

    def norm(self, comps):
        return np.sqrt(np.maximum(np.einsum("...a,...ab,...b->...", comps, self.g, comps), 0.0))

    def inner_box(self, shrink: float = 0.1) -> np.ndarray:
        """Mask of nodes at least ``shrink`` (fraction of the side) from the boundary."""
        (u0, u1), (v0, v1) = self.chart.domain
        U, V = self.chart.mesh()
        du, dv = shrink * (u1 - u0), shrink * (v1 - v0)
        eps = 1e-12
        return ((U >= u0 + du - eps) & (U <= u1 - du + eps)
                & (V >= v0 + dv - eps) & (V <= v1 - dv + eps))


def chart_geometry(chart: SurfaceChart, space: SpaceForm | None = None) -> HypersurfaceGeometry:
    """Metric, normal and shape operator of a chart by finite differences."""
    space = chart.space if space is None else space
    if space != chart.space:
        raise ConfigError("chart and space disagree")
    P = chart.points()
    space.check_dim(P)
    if not on_manifold_check(space, P, 1e-9):
        raise OffManifold(f"chart image is not on the {space.model} model")
    hu, hv = chart.h
    d1 = np.stack([_d(P, hu, 0, 4), _d(P, hv, 1, 4)])
    puu = _d2(P, hu, 0)
    pvv = _d2(P, hv, 1)
    puv = _d(d1[0], hv, 1, 4)
    d2 = np.stack([np.stack([puu, puv]), np.stack([puv, pvv])])

    ip = lambda X, Y: metric_eval(space, X, Y)  # noqa: E731
    g = np.empty(P.shape[:2] + (2, 2))
    for a in range(2):
        for b in range(2):
            g[..., a, b] = ip(d1[a], d1[b])
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    valid = np.isfinite(det)
    if np.any(det[valid] <= 1e-10):
        raise ImmersionFailure("first fundamental form is degenerate at some node")
    with np.errstate(invalid="ignore"):
        ginv = np.stack([np.stack([g[..., 1, 1], -g[..., 0, 1]], -1),
                         np.stack([-g[..., 1, 0], g[..., 0, 0]], -1)], -2) / det[..., None, None]
        sqrtg = np.sqrt(det)

    cov = np.empty(P.shape[:2] + (2, 2, 2))  # <phi_ab, phi_d> indexed [d, a, b]
    for dd in range(2):
        for a in range(2):
            for b in range(2):
                cov[..., dd, a, b] = ip(d2[a, b], d1[dd])
    gamma = np.einsum("...cd,...dab->...cab", ginv, cov)

    if space.model == "euclidean":
        n = _cross3(d1[0], d1[1])
    else:
        n = _cross4(P, d1[0], d1[1])
        if space.model == "hyperbolic":
            n = n * space.signature
    nn = ip(n, n)
    if np.any(nn[np.isfinite(nn)] <= 1e-24):
        raise NormalDegeneracy("normal vector vanishes at some node")
    xi = chart.orientation * n / np.sqrt(nn)[..., None]

    b = np.empty(P.shape[:2] + (2, 2))
    for a in range(2):
        for c in range(2):
            b[..., a, c] = ip(d2[a, c], xi)
    A = np.einsum("...ab,...bc->...ac", ginv, b)
    H = np.trace(A, axis1=-2, axis2=-1) / M
    A2 = np.einsum("...ab,...ba->...", A, A)
    return HypersurfaceGeometry(chart, space, P, d1, d2, g, ginv, sqrtg, gamma, xi, b, A, H, A2)


# ---------------------------------------------------------------- operators


def intrinsic_grad(geom: HypersurfaceGeometry, w, order: int = 4) -> np.ndarray:
    """Chart components ``g^ab d_b w`` of the gradient."""
    dw = np.stack([geom.d(w, 0, order), geom.d(w, 1, order)], axis=-1)
    return np.einsum("...ab,...b->...a", geom.ginv, dw)


def laplace_beltrami(geom: HypersurfaceGeometry, w, order: int = 4) -> np.ndarray:
    """Trace of the Hessian, in divergence form.

    ``order`` applies to the inner derivative; the outer one is second
    order because it acts on a derived quantity.
    """
    dw = np.stack([geom.d(w, 0, order), geom.d(w, 1, order)], axis=-1)
    flux = geom.sqrtg[..., None] * np.einsum("...ab,...b->...a", geom.ginv, dw)
    return (geom.d(flux[..., 0], 0) + geom.d(flux[..., 1], 1)) / geom.sqrtg


def _hessian(geom: HypersurfaceGeometry, w) -> np.ndarray:
    """Covariant Hessian ``w_ab - Gamma^c_ab w_c`` with fourth-order partials."""
    hu, hv = geom.h
    wu, wv = _d(w, hu, 0, 4), _d(w, hv, 1, 4)
    wuv = _d(wu, hv, 1, 4)
    second = np.stack([np.stack([_d2(w, hu, 0), wuv], -1), np.stack([wuv, _d2(w, hv, 1)], -1)], -2)
    return second - np.einsum("...cab,...c->...ab", geom.gamma, np.stack([wu, wv], -1))


def _cov_vector(geom, V):
    """``(nabla V)[..., a, c] = d_a V^c + Gamma^c_ae V^e``."""
    dV = np.stack([geom.d(V, 0), geom.d(V, 1)], axis=-2)
    return dV + np.einsum("...cae,...e->...ac", geom.gamma, V)


def _cov_b(geom):
    """``(nabla b)[..., a, b, c] = (nabla_a b)_bc``."""
    db = np.stack([geom.d(geom.b, 0), geom.d(geom.b, 1)], axis=-3)
    G = geom.gamma
    return (db - np.einsum("...eab,...ec->...abc", G, geom.b)
            - np.einsum("...eac,...be->...abc", G, geom.b))


def vector_laplacian(geom: HypersurfaceGeometry, V) -> np.ndarray:
    """Rough Laplacian ``-g^ab (nabla^2 V)_ab`` of a tangent field (components)."""
    T = _cov_vector(geom, V)  # [a, c] = nabla_a V^c
    dT = np.stack([geom.d(T, 0), geom.d(T, 1)], axis=-3)  # [a, b, c]
    G = geom.gamma
    nablaT = (dT - np.einsum("...eab,...ec->...abc", G, T)
              + np.einsum("...cae,...be->...abc", G, T))
    return -np.einsum("...ab,...abc->...c", geom.ginv, nablaT)


@dataclass(frozen=True, eq=False)
class RoughLaplacianParts:
    tangential: np.ndarray
    normal: np.ndarray


def rough_laplacian_gradf(geom: HypersurfaceGeometry, f) -> RoughLaplacianParts:
    """Tangential and normal parts of the pull-back rough Laplacian of ``grad f``.

    Tangential: ``Delta(grad f) + A^2(grad f)``. Normal, in tensor form:
    ``-(2 <b, Hess f> + g^ab (nabla_a b)_bc (grad f)^c)``, which equals the
    frame expression ``-sum_i {b(nabla_ei grad f, ei) + ei(b(grad f, ei))
    - b(nabla_ei ei, grad f)}``.
    """
    G = intrinsic_grad(geom, f)
    A2G = np.einsum("...ab,...bc,...c->...a", geom.A, geom.A, G)
    tangential = vector_laplacian(geom, G) + A2G
    hess = _hessian(geom, f)
    bup = np.einsum("...ac,...bd,...cd->...ab", geom.ginv, geom.ginv, geom.b)
    term1 = 2 * np.einsum("...ab,...ab->...", bup, hess)
    term2 = np.einsum("...ab,...abc,...c->...", geom.ginv, _cov_b(geom), G)
    return RoughLaplacianParts(tangential, -(term1 + term2))


@dataclass(frozen=True, eq=False)
class RicciTerms:
    """Ambient Ricci quantities of a space form ``Ric = m c h``.

    ``xi_tangent`` is ``(Ric(xi))^T``, ``xi_xi`` is ``Ric(xi, xi)``,
    ``gradf_tangent`` is ``(Ric(grad f))^T`` (chart components) and
    ``gradf_xi`` is ``Ric(grad f, xi)``.
    """

    xi_tangent: np.ndarray
    xi_xi: np.ndarray
    gradf_tangent: np.ndarray
    gradf_xi: np.ndarray


def ricci_terms(space: SpaceForm, geom: HypersurfaceGeometry, f) -> RicciTerms:
    G = intrinsic_grad(geom, f)
    mc = M * space.c
    shape = geom.H.shape
    return RicciTerms(np.zeros(shape + (2,)), np.full(shape, mc), mc * G, np.zeros(shape))


def _curvature_trace_factor(space: SpaceForm, curvature_trace: str) -> float:
    """Coefficient of ``f grad f`` in the tangential curvature term.

    ``"tangent"`` is the tangential part of ``sum_i R(grad f, e_i) e_i``
    summed over the surface frame, which is ``(m - 1) c grad f``; ``"ricci"``
    replaces it by the full ambient Ricci operator ``m c grad f``.
    """
    if curvature_trace == "tangent":
        return (M - 1) * space.c
    if curvature_trace == "ricci":
        return M * space.c
    raise ConfigError(f"unknown curvature trace {curvature_trace!r}")


@dataclass(frozen=True, eq=False)
class _Pieces:
    f: np.ndarray
    G: np.ndarray
    gradH: np.ndarray
    lapf: np.ndarray
    lapH: np.ndarray
    rough: RoughLaplacianParts
    grad_G2: np.ndarray
    G2: np.ndarray
    bGG: np.ndarray
    AG: np.ndarray
    AgradH: np.ndarray
    A2G: np.ndarray


def _pieces(geom: HypersurfaceGeometry, f) -> _Pieces:
    f = np.asarray(f, dtype=float)
    if np.any(f[np.isfinite(f)] <= 0):
        raise ConfigError("weight f must be positive on the chart")
    G = intrinsic_grad(geom, f)
    G2 = np.einsum("...a,...ab,...b->...", G, geom.g, G)
    return _Pieces(
        f=f,
        G=G,
        gradH=intrinsic_grad(geom, geom.H, order=2),
        lapf=laplace_beltrami(geom, f),
        lapH=laplace_beltrami(geom, geom.H, order=2),
        rough=rough_laplacian_gradf(geom, f),
        grad_G2=intrinsic_grad(geom, G2, order=2),
        G2=G2,
        bGG=np.einsum("...a,...ab,...b->...", G, geom.b, G),
        AG=np.einsum("...ab,...b->...a", geom.A, G),
        AgradH=np.einsum("...ab,...b->...a", geom.A, intrinsic_grad(geom, geom.H, order=2)),
        A2G=np.einsum("...ab,...bc,...c->...a", geom.A, geom.A, G),
    )


def _core_tangential(geom, p: _Pieces):
    """Terms of the tangential part that do not involve grad H or curvature."""
    f, H = p.f[..., None], geom.H[..., None]
    return 3 * M * f * H * p.AG + f * p.rough.tangential - 0.5 * p.grad_G2


def _core_normal(geom, p: _Pieces):
    f, H = p.f, geom.H
    return (-M * f * H * p.lapf + M * f ** 2 * H * geom.A2 + f * p.rough.normal
            - M * H * p.G2 - p.bGG)


def residual_tangential(geom: HypersurfaceGeometry, f, space: SpaceForm | None = None,
                        curvature_trace: str = "tangent", _p: _Pieces | None = None) -> np.ndarray:
    """Tangential part of the bi-f-tension field (chart components).

    ``3mfH A grad f + 2mf^2 A grad H + m^2 f^2 H grad H + f Delta(grad f)
    - 1/2 grad|grad f|^2 - mf^2 H (Ric xi)^T - k f grad f`` where
    ``f Delta(grad f)`` includes ``f A^2 grad f`` through the tangential
    rough Laplacian and ``k`` is selected by ``curvature_trace``.
    """
    space = geom.space if space is None else space
    p = _pieces(geom, f) if _p is None else _p
    ric = ricci_terms(space, geom, p.f)
    fe, H = p.f[..., None], geom.H[..., None]
    k = _curvature_trace_factor(space, curvature_trace)
    return (_core_tangential(geom, p) + 2 * M * fe ** 2 * p.AgradH + M ** 2 * fe ** 2 * H * p.gradH
            - M * fe ** 2 * H * ric.xi_tangent - k * fe * p.G)


def residual_normal(geom: HypersurfaceGeometry, f, space: SpaceForm | None = None,
                    _p: _Pieces | None = None) -> np.ndarray:
    """Normal part of the bi-f-tension field (coefficient of xi)."""
    space = geom.space if space is None else space
    p = _pieces(geom, f) if _p is None else _p
    ric = ricci_terms(space, geom, p.f)
    f_, H = p.f, geom.H
    gG_H = np.einsum("...a,...ab,...b->...", p.G, geom.g, p.gradH)
    return (_core_normal(geom, p) - 3 * M * f_ * gG_H - M * f_ ** 2 * p.lapH
            - M * f_ ** 2 * H * ric.xi_xi - f_ * ric.gradf_xi)


@dataclass(frozen=True, eq=False)
class SurfaceResidual:
    tangential: np.ndarray
    normal: np.ndarray
    sup_tangential: float
    sup_normal: float
    mode: str
    diagnostics: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "sup_tangential": self.sup_tangential,
                "sup_normal": self.sup_normal, "diagnostics": list(self.diagnostics)}


def _sup(values) -> float:
    finite = np.asarray(values)[np.isfinite(values)]
    return float(np.max(np.abs(finite))) if finite.size else float("nan")


def _make_residual(geom, tangential, normal, mode, diagnostics=()) -> SurfaceResidual:
    return SurfaceResidual(tangential, normal, _sup(geom.norm(tangential)), _sup(normal),
                           mode, tuple(diagnostics))


def _h_is_constant(geom, tol) -> bool:
    H = geom.H[np.isfinite(geom.H)]
    return bool(np.ptp(H) <= tol * max(1.0, np.max(np.abs(H))))


def corollary_residual(geom: HypersurfaceGeometry, f, mode: str = "general", r: float | None = None,
                       space: SpaceForm | None = None, h_tol: float = 1e-6,
                       curvature_trace: str = "tangent") -> SurfaceResidual:
    """Residual (left side minus right side) of one of the specialised conditions.

    ``general``: the full tangential and normal parts. ``cmc``: constant
    mean curvature, requires H constant. ``ricci-flat``: constant mean
    curvature in a flat ambient. ``einstein``: ambient Ricci ``r/(m+1) h``
    with scalar curvature ``r``. ``constant-c``: the einstein condition with
    ``r = m(m+1)c``. The last two carry no grad H terms, so they are only
    meaningful for constant H; a diagnostic is attached otherwise.
    """
    space = geom.space if space is None else space
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    p = _pieces(geom, f)
    diagnostics = []
    if mode == "general":
        return _make_residual(
            geom, residual_tangential(geom, f, space, curvature_trace, _p=p),
            residual_normal(geom, f, space, _p=p), mode)

    core_t = _core_tangential(geom, p)
    core_n = _core_normal(geom, p)
    fe, H = p.f[..., None], geom.H[..., None]
    if mode in ("cmc", "ricci-flat"):
        if not _h_is_constant(geom, h_tol):
            raise ModePreconditionFailed("mean curvature is not constant on the chart")
        if mode == "ricci-flat":
            if space.c != 0:
                raise ModePreconditionFailed("ricci-flat mode needs a flat ambient")
            return _make_residual(geom, -core_t, -core_n, mode)
        ric = ricci_terms(space, geom, p.f)
        k = _curvature_trace_factor(space, curvature_trace)
        lhs_t = M * fe ** 2 * H * ric.xi_tangent + k * fe * p.G
        lhs_n = M * p.f ** 2 * geom.H * ric.xi_xi + p.f * ric.gradf_xi
        return _make_residual(geom, lhs_t - core_t, lhs_n - core_n, mode)

    if mode == "einstein":
        if r is None:
            raise ConfigError("einstein mode needs the scalar curvature r")
        lam = r / (M + 1)
    else:
        lam = M * space.c
    if not _h_is_constant(geom, h_tol):
        diagnostics.append("mean curvature varies; the grad H terms are not part of this condition")
    lhs_t = lam * fe * p.G
    lhs_n = M * lam * p.f ** 2 * geom.H
    return _make_residual(geom, lhs_t - core_t, lhs_n - core_n, mode, diagnostics)


# ---------------------------------------------------------------- oracle


def ambient_rough_trace(geom: HypersurfaceGeometry, V) -> np.ndarray:
    """``trace (nabla^phi)^2 V`` for an ambient vector field along the chart.

    Uses the divergence form ``P[(1/sqrt g) d_a(sqrt g g^ab P d_b V)]`` where
    ``P`` projects onto the tangent space of the ambient model.
    """
    dV = [geom.project(geom.d(V, a)) for a in range(2)]
    flux = [geom.sqrtg[..., None] * sum(geom.ginv[..., a, b][..., None] * dV[b] for b in range(2))
            for a in range(2)]
    div = (geom.d(flux[0], 0) + geom.d(flux[1], 1)) / geom.sqrtg[..., None]
    return geom.project(div)


def tension_vector(geom: HypersurfaceGeometry) -> np.ndarray:
    """``trace nabla dphi`` from the chart's second derivatives (no normal needed)."""
    acc = np.zeros_like(geom.points)
    for a in range(2):
        for b in range(2):
            hess = geom.project(geom.d2[a, b]) - sum(geom.gamma[..., c, a, b][..., None] * geom.d1[c]
                                                       for c in range(2))
            acc = acc + geom.ginv[..., a, b][..., None] * hess
    return acc


def direct_bi_f_tension_oracle(geom: HypersurfaceGeometry, f, space: SpaceForm | None = None) -> np.ndarray:
    """Bi-f-tension field of the chart as an ambient vector, from its definition.

    ``-f trace(nabla^phi)^2 tau_f - f trace R(tau_f, dphi) dphi
    - nabla_{grad f} tau_f`` with ``tau_f = f tau + dphi(grad f)``.
    """
    space = geom.space if space is None else space
    f = np.asarray(f, dtype=float)
    G = intrinsic_grad(geom, f)
    tau_f = f[..., None] * tension_vector(geom) + geom.push(G)
    rough = ambient_rough_trace(geom, tau_f)
    tau_f_tan = geom.push(geom.tangential_components(tau_f))
    curv = space.c * (M * tau_f - tau_f_tan)
    along = geom.project(sum(G[..., a][..., None] * geom.d(tau_f, a) for a in range(2)))
    return -f[..., None] * rough - f[..., None] * curv - along


@dataclass(frozen=True)
class OracleSplit:
    tangential: np.ndarray
    normal: np.ndarray


def split(geom: HypersurfaceGeometry, V) -> OracleSplit:
    return OracleSplit(geom.tangential_components(V), geom.normal_component(V))


# ---------------------------------------------------------------- identities and convergence


def identity_discrepancies(geom: HypersurfaceGeometry, f) -> dict:
    """Per-node discrepancies of the structural identities (each should vanish).

    rough_tangential: extrinsic tangential part of ``Delta^phi(grad f)`` vs
    ``Delta(grad f) + A^2 grad f``; rough_normal: its normal part vs the
    tensor formula; xi_normal: normal part of ``Delta^phi xi`` vs ``|A|^2``;
    xi_tangential: its tangential part vs ``m grad H`` plus the (vanishing)
    ambient Ricci term; codazzi: ``g^ab (nabla_a b)_bk - (nabla_k b)(e_i, e_i)``
    vs ``Ric(xi, e_k) = 0``.
    """
    G = intrinsic_grad(geom, f)
    rough = rough_laplacian_gradf(geom, f)
    lap_gradf = -ambient_rough_trace(geom, geom.push(G))
    lap_xi = -ambient_rough_trace(geom, geom.xi)
    nb = _cov_b(geom)
    codazzi = (np.einsum("...ab,...abk->...k", geom.ginv, nb)
               - np.einsum("...ab,...kab->...k", geom.ginv, nb))
    gradH = intrinsic_grad(geom, geom.H, order=2)
    ric_xi_tan = np.zeros_like(gradH)
    return {
        "rough_tangential": geom.norm(geom.tangential_components(lap_gradf) - rough.tangential),
        "rough_normal": np.abs(geom.normal_component(lap_gradf) - rough.normal),
        "xi_normal": np.abs(geom.normal_component(lap_xi) - geom.A2),
        "xi_tangential": geom.norm(geom.tangential_components(lap_xi) - M * gradH - ric_xi_tan),
        "codazzi": np.sqrt(np.einsum("...a,...ab,...b->...", codazzi, geom.ginv, codazzi)),
    }


def oracle_discrepancies(geom: HypersurfaceGeometry, f, curvature_trace: str = "tangent") -> dict:
    """Formula vs oracle for the tangential and normal parts, per node."""
    p = _pieces(geom, f)
    tan = residual_tangential(geom, f, curvature_trace=curvature_trace, _p=p)
    nor = residual_normal(geom, f, _p=p)
    oracle = split(geom, direct_bi_f_tension_oracle(geom, f))
    return {
        "tangential": geom.norm(tan - oracle.tangential),
        "normal": np.abs(nor - oracle.normal),
    }


@dataclass(frozen=True)
class ConvergenceResult:
    """Sup errors at two resolutions (h and h/2) and the observed order."""

    name: str
    quantity: str
    errors: tuple
    order: float
    floor: float

    def passed(self, min_order: float = 1.8) -> bool:
        return bool(self.errors[1] <= self.floor or self.order >= min_order)


def _sup_box(geom, values, shrink):
    mask = geom.inner_box(shrink)
    vals = np.asarray(values)[mask]
    if not np.all(np.isfinite(vals)):
        raise ConfigError("inner box reaches into the finite-difference margin; refine the grid")
    return float(np.max(np.abs(vals)))


def roundoff_floor(h: float) -> float:
    """Round-off level of quantities built from three nested differences."""
    return 1e3 * np.finfo(float).eps / h ** 3


def convergence_study(chart: SurfaceChart, f_expr: str, which: str = "oracle", shrink: float = 0.1,
                      floor: float | None = None, curvature_trace: str = "tangent") -> list[ConvergenceResult]:
    """Measure how discrepancies shrink when the grid spacing is halved.

    ``which="oracle"`` compares the closed-form parts with the direct
    oracle; ``which="identities"`` checks the structural identities.
    Errors are sup norms over the inner box; if the finer error is below
    ``floor`` (default :func:`roundoff_floor` of the finer spacing) the
    quantity counts as converged.
    """
    levels = [chart, chart.refined(2)]
    if floor is None:
        floor = roundoff_floor(min(levels[1].h))
    per_level = []
    for ch in levels:
        geom = chart_geometry(ch)
        f = ch.field(f_expr)
        if which == "oracle":
            disc = oracle_discrepancies(geom, f, curvature_trace)
        elif which == "identities":
            disc = identity_discrepancies(geom, f)
        else:
            raise ConfigError(f"unknown study {which!r}")
        per_level.append({k: _sup_box(geom, v, shrink) for k, v in disc.items()})
    out = []
    for key in per_level[0]:
        e1, e2 = per_level[0][key], per_level[1][key]
        order = float(np.log2(e1 / e2)) if e1 > 0 and e2 > 0 else float("inf")
        out.append(ConvergenceResult(chart.name, key, (e1, e2), order, floor))
    return out


# ---------------------------------------------------------------- corpus


def corpus(n: int = 65) -> list[SurfaceChart]:
    """Five reference charts with unit-size domains and ``n x n`` grids."""
    s3 = SpaceForm.sphere(3)
    e3 = SpaceForm.euclidean(3)
    a = "1"
    return [
        SurfaceChart.from_strings(["u", "v", "0"], [[-0.5, 0.5], [-0.5, 0.5]], (n, n), e3, name="plane"),
        SurfaceChart.from_strings(["u", "v", "0.1*(u^2-v^2)"], [[-0.5, 0.5], [-0.5, 0.5]], (n, n), e3,
                                  name="graph"),
        SurfaceChart.from_strings(["sin(u)*cos(v)", "sin(u)*sin(v)", "cos(u)"], [[1.0, 2.0], [0.0, 1.0]],
                                  (n, n), e3, orientation=-1, name="sphere"),
        SurfaceChart.from_strings(["cos(u)", "sin(u)", "v"], [[0.0, 1.0], [0.0, 1.0]], (n, n), e3,
                                  orientation=-1, name="cylinder"),
        SurfaceChart.from_strings(
            [f"sin({a})*sin(u)*cos(v)", f"sin({a})*sin(u)*sin(v)", f"sin({a})*cos(u)", f"cos({a})"],
            [[1.0, 2.0], [0.0, 1.0]], (n, n), s3, name="sphere-in-S3"),
    ]
