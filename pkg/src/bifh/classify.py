"""Case analysis of bi-f-harmonic curves by the behaviour of k1 and k2.

A curvature is *zero*, a *nonzero constant* or *varying*; the pair
(k1, k2) selects one of seven cases:

====  ==========  ==========
case  k1          k2
====  ==========  ==========
I     zero        any
II    constant    zero
III   constant    constant
IV    constant    varying
V     varying     zero
VI    varying     constant
VII   varying     varying
====  ==========  ==========

Each case has a family of candidate weights, reduced equations that can be
checked against the raw system rows, and (for III) an algebraic
obstruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fd
from .curve import CurvatureProfile, SampledCurvature
from .errors import (
    AmbiguousRegime,
    ConfigError,
    NoCandidates,
    SingularityReached,
    StepRejected,
)
from .expr import Const, Jet3
from .tension import ResidualReport, WeightFn, system_residual, system_rows

CASES = ("I", "II", "III", "IV", "V", "VI", "VII")
_CASE_TABLE = {
    ("const", "zero"): "II",
    ("const", "const"): "III",
    ("const", "varying"): "IV",
    ("varying", "zero"): "V",
    ("varying", "const"): "VI",
    ("varying", "varying"): "VII",
}


@dataclass(frozen=True)
class CaseTag:
    case: str
    space_c: float = 0.0

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}")


@dataclass(frozen=True, eq=False)
class Certificate:
    """Outcome of the case analysis.

    ``kind`` is ``nonexistence`` when the forced relations cannot hold,
    ``candidate`` when a weight satisfying the system is available and
    ``inconclusive`` otherwise.
    """

    kind: str
    forced_relations: tuple = ()
    case: CaseTag | None = None
    residual_evidence: ResidualReport | None = None
    diagnostics: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "forced_relations": list(self.forced_relations),
            "case": None if self.case is None else self.case.case,
            "diagnostics": list(self.diagnostics),
        }


# ---------------------------------------------------------------- regimes


def _regime(values: np.ndarray, name: str, tol: float, const_rtol: float) -> str:
    mag = np.abs(values)
    sup, inf = float(np.max(mag)), float(np.min(mag))
    if sup < tol:
        return "zero"
    if inf < tol:
        raise AmbiguousRegime(f"{name} vanishes on part of the grid only (inf {inf:.3g}, sup {sup:.3g})")
    if np.ptp(values) < const_rtol * sup:
        return "const"
    return "varying"


def detect_regime(profile: CurvatureProfile, tol: float = 1e-7, grid=None,
                  const_rtol: float = 1e-6, c: float = 0.0) -> CaseTag:
    """Assign the case from the sampled k1 and k2."""
    grid = profile.grid() if grid is None else np.asarray(grid, dtype=float)
    r1 = _regime(profile.values("k1", grid), "k1", tol, const_rtol)
    if r1 == "zero":
        return CaseTag("I", c)
    r2 = _regime(profile.values("k2", grid), "k2", tol, const_rtol)
    return CaseTag(_CASE_TABLE[(r1, r2)], c)


# ---------------------------------------------------------------- candidates


def _num(x: float) -> str:
    text = np.format_float_positional(float(x), unique=True, trim="-")
    return f"({text})" if x < 0 else text


def _constant_value(profile: CurvatureProfile, name: str, grid=None) -> float:
    grid = profile.grid() if grid is None else grid
    return float(np.mean(profile.values(name, grid)))


def candidate_weight(tag: CaseTag, profile: CurvatureProfile | None = None, c: float | None = None,
                     c1: float = 1.0, c2: float = 0.0, const: float = 1.0) -> list[WeightFn]:
    """Candidate weights of the case with free constants instantiated.

    ``c`` defaults to the tag's ambient curvature. Case II needs the profile
    to read the constant k1; its family is chosen by the sign of
    ``5 k1^2 + c`` with frequency or rate ``sqrt(|5 k1^2 + c| / 2)``.
    """
    c = tag.space_c if c is None else c
    K, A, B = _num(const), _num(c1), _num(c2)
    if tag.case == "I":
        return [WeightFn.parse(K, "constant"), WeightFn.parse(f"{A}*s+{B}", "affine")]
    if tag.case == "II":
        if profile is None:
            raise ConfigError("case II candidates need the constant k1 from a profile")
        k1 = _constant_value(profile, "k1")
        disc = 5 * k1 ** 2 + c
        out = [WeightFn.parse(K, "constant")]
        if abs(disc) <= 1e-9 * (5 * k1 ** 2 + abs(c)):
            out.append(WeightFn.parse(f"{A}*s+{B}", "affine"))
        elif disc > 0:
            w = _num(np.sqrt(disc / 2))
            out.append(WeightFn.parse(f"{A}*cos({w}*s)+{B}*sin({w}*s)", "trig"))
        else:
            w = _num(np.sqrt(-disc / 2))
            out.append(WeightFn.parse(f"{A}*exp({w}*s)+{B}*exp(-{w}*s)", "exponential"))
        return out
    if tag.case == "III":
        if c <= 0:
            raise NoCandidates(f"no weight exists for constant nonzero k1, k2 when c={c:g}")
        return [WeightFn.parse(K, "constant")]
    if tag.case == "IV":
        return [WeightFn.parse(f"{K}*k2^(-1/4)", "curvature-power")]
    if tag.case == "VI":
        return [WeightFn.parse(f"{K}*k1^(-1/2)", "curvature-power")]
    if tag.case == "VII":
        return [WeightFn.parse(f"{K}*k1^(-1/2)*k2^(-1/4)", "curvature-power")]
    return []


# ---------------------------------------------------------------- identities


def reduction_identity_check(f: WeightFn, k1_const: float, grid, c: float = 0.0,
                             relative: bool = False) -> float:
    """Sup of ``(eq2)' - 3 eq1 - 2 f' ((5 k1^2 + c) f + 2 f'')`` for constant k1, k2 = 0.

    Here eq2 is the second system row divided by k1, i.e.
    ``(c - k1^2) f^2 + 3 f f'' + 2 f'^2``. The expression vanishes
    identically for every smooth ``f``. With
    ``relative=True`` the result is divided by the largest term magnitude.
    """
    if k1_const <= 0:
        raise ConfigError("k1_const must be positive")
    grid = np.asarray(grid, dtype=float)
    F = f.jets(grid)
    zero = np.zeros_like(grid)
    K1 = Jet3(zero + k1_const, zero, zero, zero)
    K0 = Jet3(zero, zero, zero, zero)
    row1, row2, _, _ = system_rows(K1, K0, K0, F, c)
    reduced = 2 * F.v1 * ((5 * k1_const ** 2 + c) * F.v0 + 2 * F.v2)
    d_eq2 = row2.v1 / k1_const
    resid = float(np.max(np.abs(d_eq2 - 3 * row1.v0 - reduced)))
    if not relative:
        return resid
    scale = max(np.max(np.abs(d_eq2)), np.max(np.abs(row1.v0)), np.max(np.abs(reduced)), 1e-300)
    return resid / scale


def _rel_mismatch(a, b) -> float:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    diff = float(np.max(np.abs(a - b)))
    return diff / scale if scale > 0 else diff


@dataclass(frozen=True)
class FactorReport:
    case: str
    candidate: str
    mismatches: dict

    @property
    def worst(self) -> float:
        return max(self.mismatches.values()) if self.mismatches else 0.0


def substitution_equivalence(tag: CaseTag, profile: CurvatureProfile, grid=None) -> FactorReport:
    """Compare the system rows under the case's candidate with its reduced equations.

    Case VI (f = k1^(-1/2)): row1 * (-4 k1^4) and row2 * (4 k1^2) against the
    two reduced equations in k1. Case IV (f = k2^(-1/4)): row1 * 32 k2^(7/2)
    and row2 * (-16 k2^(5/2) / k1). Cases IV, VI and VII: the third row
    must vanish. For ``c != 0`` the curvature term adds ``4 c k1^2`` (VI)
    or ``-16 c k2^2`` (IV) to the reduced second equation.

    Mismatches are relative to the larger of the two sides, except the third
    row which is reported relative to its largest term.
    """
    if tag.case not in ("IV", "VI", "VII"):
        raise ConfigError(f"no reduced system to compare for case {tag.case}")
    grid = profile.grid() if grid is None else np.asarray(grid, dtype=float)
    c = tag.space_c
    jets = profile.jets(grid)
    (f,) = candidate_weight(tag, profile)
    F = f.jets(grid, jets)
    k1j, k2j, k3j = jets["k1"], jets["k2"], jets["k3"]
    row1, row2, row3, _ = system_rows(k1j, k2j, k3j, F, c)
    terms3 = [2 * k1j.v1 * k2j.v0 * F.v0, k1j.v0 * k2j.v1 * F.v0, 4 * k1j.v0 * k2j.v0 * F.v1]
    scale3 = max(max(float(np.max(np.abs(t))) for t in terms3), 1e-300)
    out = {"row3": float(np.max(np.abs(row3.v0))) / scale3}
    if tag.case == "VI":
        k, k1p, k1pp, k1ppp = k1j.as_tuple()
        k2 = k2j.v0
        red1 = 9 * k1p ** 3 + 4 * k ** 4 * k1p - 10 * k * k1p * k1pp + 2 * k ** 2 * k1ppp
        red2 = 3 * k1p ** 2 - 4 * k ** 4 - 4 * k ** 2 * k2 ** 2 - 2 * k * k1pp + 4 * c * k ** 2
        out["row1"] = _rel_mismatch(row1.v0 * (-4 * k ** 4), red1)
        out["row2"] = _rel_mismatch(row2.v0 * (4 * k ** 2), red2)
    elif tag.case == "IV":
        k1 = k1j.v0
        k, p, pp, ppp = k2j.as_tuple()
        red1 = 32 * k1 ** 2 * k ** 2 * p - 25 * p ** 3 + 32 * k * p * pp - 8 * k ** 2 * ppp
        red2 = 16 * k1 ** 2 * k ** 2 + 16 * k ** 4 - 17 * p ** 2 + 12 * k * pp - 16 * c * k ** 2
        out["row1"] = _rel_mismatch(row1.v0 * (32 * k ** 3.5), red1)
        out["row2"] = _rel_mismatch(row2.v0 * (-16 * k ** 2.5 / k1), red2)
    return FactorReport(tag.case, f.text, out)


# ---------------------------------------------------------------- integration


@dataclass(frozen=True, eq=False)
class IntegrationResult:
    profile: CurvatureProfile
    monitor: ResidualReport
    s: np.ndarray
    state: np.ndarray


def _case6_rhs(k, p, k2, c):
    return (3 * p * p - 4 * k ** 4 - 4 * k * k * k2 * k2 + 4 * c * k * k) / (2 * k)


def _case6_third(k, p, k2, c):
    kpp = _case6_rhs(k, p, k2, c)
    gk = -3 * p * p / (2 * k * k) - 6 * k * k - 2 * k2 * k2 + 2 * c
    gp = 3 * p / k
    return gk * p + gp * kpp


def _case6_monitor(k, p, kpp, kppp):
    return 9 * p ** 3 + 4 * k ** 4 * p - 10 * k * p * kpp + 2 * k ** 2 * kppp


def _case4_rhs(k, p, k1, c):
    return (17 * p * p - 16 * k1 * k1 * k * k - 16 * k ** 4 + 16 * c * k * k) / (12 * k)


def _case4_third(k, p, k1, c):
    kpp = _case4_rhs(k, p, k1, c)
    gk = -17 * p * p / (12 * k * k) - 4 / 3 * k1 * k1 - 4 * k * k + 4 / 3 * c
    gp = 17 * p / (6 * k)
    return gk * p + gp * kpp


def _case4_monitor(k, p, kpp, kppp, k1):
    return 32 * k1 ** 2 * k ** 2 * p - 25 * p ** 3 + 32 * k * p * kpp - 8 * k ** 2 * kppp


def curvature_system_integrate(tag: CaseTag, init: dict, span, h: float = 1e-3,
                               tol: float = 1e-6, guard: float = 1e-4) -> IntegrationResult:
    """Integrate the second reduced equation and monitor the first.

    Case VI: ``init = {"k1": k1(s0), "dk1": k1'(s0), "k2": constant}``;
    Case IV: ``init = {"k2": k2(s0), "dk2": k2'(s0), "k1": constant}``.
    The second-order equation is advanced with classical RK4; the other
    reduced equation is evaluated along the trajectory with the third
    derivative taken from the differentiated right-hand side.
    """
    if tag.case not in ("IV", "VI"):
        raise ConfigError("only cases IV and VI have an integrable reduced system")
    if not 0 < h <= 1e-3:
        raise ConfigError("step h must lie in (0, 1e-3]")
    s0, s1 = float(span[0]), float(span[1])
    if s1 <= s0:
        raise ConfigError("span must be increasing")
    c = tag.space_c
    if tag.case == "VI":
        var, other = "k1", "k2"
        y = np.array([init["k1"], init.get("dk1", 0.0)], dtype=float)
        param = float(init["k2"])
        rhs, third = _case6_rhs, _case6_third
        monitor = lambda k, p, a, b: _case6_monitor(k, p, a, b)  # noqa: E731
    else:
        var, other = "k2", "k1"
        y = np.array([init["k2"], init.get("dk2", 0.0)], dtype=float)
        param = float(init["k1"])
        rhs, third = _case4_rhs, _case4_third
        monitor = lambda k, p, a, b: _case4_monitor(k, p, a, b, param)  # noqa: E731
    if y[0] <= guard:
        raise ConfigError(f"initial {var} must exceed {guard:g}")

    nsteps = int(np.ceil((s1 - s0) / h - 1e-9))
    h = (s1 - s0) / nsteps
    F = lambda z: np.array([z[1], rhs(z[0], z[1], param, c)])  # noqa: E731
    states = np.empty((nsteps + 1, 2))
    states[0] = y
    for i in range(nsteps):
        a = F(y)
        b = F(y + 0.5 * h * a)
        d = F(y + 0.5 * h * b)
        e = F(y + h * d)
        y = y + (h / 6) * (a + 2 * b + 2 * d + e)
        if not np.all(np.isfinite(y)):
            raise StepRejected(f"non-finite state at s={s0 + (i + 1) * h:.6g}")
        if y[0] < guard:
            raise SingularityReached(f"{var} fell below {guard:g} at s={s0 + (i + 1) * h:.6g}")
        states[i + 1] = y
    s = s0 + h * np.arange(nsteps + 1)
    k, p = states[:, 0], states[:, 1]
    kpp = rhs(k, p, param, c)
    kppp = third(k, p, param, c)
    mon = monitor(k, p, kpp, kppp)

    sampled = SampledCurvature(s, k)
    consts = {other: Const(param), "k3": Const(0.0)}
    profile = CurvatureProfile(
        k1=sampled if var == "k1" else consts["k1"],
        k2=sampled if var == "k2" else consts["k2"],
        k3=consts["k3"],
        domain=(s0, s1),
    )
    # defining relation with k'' differentiated from the integrated k'
    kpp_fd = _fd.diff(p, h, 1, 7, edges="one-sided")
    if tag.case == "VI":
        defining = 3 * p ** 2 - 4 * k ** 4 - 4 * k ** 2 * param ** 2 - 2 * k * kpp_fd + 4 * c * k ** 2
    else:
        defining = 16 * param ** 2 * k ** 2 + 16 * k ** 4 - 17 * p ** 2 + 12 * k * kpp_fd - 16 * c * k ** 2
    eq = np.zeros((4, len(s)))
    eq[0] = mon
    eq[1] = defining
    sup = np.max(np.abs(eq), axis=1)
    diagnostics = [
        f"monitored first reduced equation: sup {sup[0]:.6g}",
        f"defining equation with differentiated k': sup {sup[1]:.3g}",
    ]
    small = np.abs(mon) <= tol
    if np.any(small) and not np.all(small):
        diagnostics.append(f"monitor below tol on {100 * np.mean(small):.1f}% of the trajectory")
    report = ResidualReport(
        grid=s, eq_residuals=eq, frenet_coefficients=np.full((4, len(s)), np.nan),
        sup_norms=sup, verdict="satisfied" if np.all(sup <= tol) else "violated",
        tol=tol, diagnostics=tuple(diagnostics),
    )
    return IntegrationResult(profile, report, s, states)


# ---------------------------------------------------------------- certificates


def _relation(c: float) -> str:
    return f"k1²+k2²={c:g}"


def nonexistence_certificate(k1_const: float, k2_const: float, c: float,
                             tol: float = 1e-12) -> Certificate:
    """Reduce the system for constant nonzero k1, k2.

    The third row becomes ``4 k1 k2 f' = 0`` so f is constant, and the
    second row then reads ``k1 (c - k1^2 - k2^2) f^2 = 0``.
    """
    if k1_const <= 0 or k2_const <= 0:
        raise ConfigError("k1 and k2 must be positive constants")
    tag = CaseTag("III", c)
    relation = _relation(c)
    profile = CurvatureProfile(Const(float(k1_const)), Const(float(k2_const)), Const(0.0))
    evidence = system_residual(profile, WeightFn.parse("1", "constant"), c)
    gap = k1_const ** 2 + k2_const ** 2 - c
    forced = ("f'=0", relation)
    if c <= 0:
        return Certificate(
            "nonexistence", forced, tag, evidence,
            (f"{relation} cannot hold for positive k1, k2",),
        )
    if abs(gap) <= tol * max(1.0, c):
        return Certificate(
            "candidate", forced + ("k3=0",), tag, evidence,
            (f"{relation} holds; any constant f works provided k3=0",),
        )
    return Certificate(
        "nonexistence", forced, tag, evidence,
        (f"{relation} fails: k1²+k2²={k1_const ** 2 + k2_const ** 2:.12g}",),
    )


def classify_report(profile: CurvatureProfile, f: WeightFn, c: float, tol: float = 1e-6,
                    grid=None) -> tuple[Certificate, ResidualReport]:
    """Run the case analysis and the residual check for a profile and weight."""
    grid = profile.grid() if grid is None else np.asarray(grid, dtype=float)
    tag = detect_regime(profile, grid=grid, c=c)
    report = system_residual(profile, f, c, tol, grid)
    diagnostics = [f"case {tag.case}"] + list(report.diagnostics)

    if tag.case == "III":
        k3 = profile.values("k3", grid)
        cert = nonexistence_certificate(
            _constant_value(profile, "k1", grid), _constant_value(profile, "k2", grid), c)
        diagnostics += list(cert.diagnostics)
        kind = cert.kind
        if kind == "candidate" and np.max(np.abs(k3)) > tol:
            diagnostics.append("k3 must vanish but does not")
            kind = "nonexistence"
        elif kind == "candidate" and report.verdict != "satisfied":
            kind = "inconclusive"
        return Certificate(kind, cert.forced_relations, tag, report, tuple(diagnostics)), report

    try:
        candidates = candidate_weight(tag, profile, c)
    except NoCandidates as exc:
        candidates = []
        diagnostics.append(str(exc))
    for cand in candidates:
        try:
            sub = system_residual(profile, cand, c, tol, grid)
        except ConfigError as exc:
            diagnostics.append(f"candidate back-substitution for {cand.text}: {exc}")
            continue
        sups = ", ".join(f"{x:.3g}" for x in sub.sup_norms)
        diagnostics.append(f"candidate back-substitution residual for {cand.text}: [{sups}] {sub.verdict}")
    if tag.case == "II":
        k1 = _constant_value(profile, "k1", grid)
        ident = reduction_identity_check(f, k1, grid, c, relative=True)
        diagnostics.append(f"reduction identity relative residual {ident:.3g}")
    elif tag.case in ("IV", "VI", "VII"):
        try:
            fr = substitution_equivalence(tag, profile, grid)
            diagnostics.append(f"substitution equivalence worst relative mismatch {fr.worst:.3g}")
        except ConfigError as exc:
            diagnostics.append(f"substitution equivalence skipped: {exc}")
    kind = "candidate" if report.verdict == "satisfied" else "inconclusive"
    return Certificate(kind, (), tag, report, tuple(diagnostics)), report
