"""Solutions of first-order difference equations ``y(s+1) = f(s, y(s))``.

A solution is built as the infinite inner composition
``Gamma_f(s, z) = f(s-1, f(s-2, ... f(s-N, z)))`` where ``z`` is a free
parameter.  Writing ``f = z + q`` this solves ``Delta y = q(s, y)``; when
``q`` does not depend on ``z`` the construction reduces to the indefinite sum
``y(s) = sum_{j>=1} q(s - j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

from .composer import (DomainSpec, LeftStrip, Rect, SolveResult, TruncationPolicy, ZDisk,
                       infinite_compose)
from .errors import (DomainViolation, NonConvergent, NotConstantInZ, NotPeriodic,
                     SingularityProximity, UnknownBuiltin)
from .expr import (Expr, as_expr, compile_scalar, evaluate, free_vars, increment_expr,
                   to_text)

SINGULARITY_MARGIN = 0.25
# solves closer than this to a singularity are flagged, not refused
NEAR_SINGULARITY = 1.0


# ---------------------------------------------------------------------------
# Domain descriptors

@dataclass(frozen=True)
class WholePlane:
    def contains(self, z: complex) -> bool:
        return math.isfinite(z.real) and math.isfinite(z.imag)

    def describe(self) -> str:
        return "C"


@dataclass(frozen=True)
class HalfPlaneReGt:
    bound: float

    def contains(self, z: complex) -> bool:
        return z.real > self.bound and math.isfinite(z.imag)

    def describe(self) -> str:
        return f"Re(z) > {self.bound:g}"


@dataclass(frozen=True)
class ShiftedNaturals:
    """The set ``{j + c : j = 0, 1, 2, ..., c in offsets}``."""

    offsets: tuple = (0j,)

    def distance(self, s: complex) -> float:
        best = math.inf
        for c in self.offsets:
            w = s - c
            j = max(0, round(w.real))
            best = min(best, abs(w - j))
        return best

    def __contains__(self, s) -> bool:
        return self.distance(complex(s)) == 0

    def describe(self) -> str:
        parts = []
        for c in self.offsets:
            c = complex(c)
            if c == 0:
                parts.append("j")
            else:
                parts.append(f"j{'+' if c.imag > 0 else '-'}{abs(c.imag):g}i" if c.real == 0
                             else f"j+({c.real:g}{c.imag:+g}i)")
        return "{" + ", ".join(parts) + " : j in N}"


@dataclass(frozen=True)
class Singularities:
    points: tuple = ()
    sets: tuple = ()

    def distance(self, s: complex) -> float:
        d = min((abs(s - complex(p)) for p in self.points), default=math.inf)
        for st in self.sets:
            d = min(d, st.distance(s))
        return d

    def __contains__(self, s) -> bool:
        s = complex(s)
        return any(s == complex(p) for p in self.points) or any(s in st for st in self.sets)

    def describe(self) -> str:
        parts = [f"{complex(p)}" for p in self.points] + [st.describe() for st in self.sets]
        return " U ".join(parts) if parts else "none"


@dataclass(frozen=True)
class ProblemSpec:
    f: Expr
    name: str = "inline"
    z_domain: object = field(default_factory=WholePlane)
    s_verified: Optional[DomainSpec] = None
    singularities: Singularities = field(default_factory=Singularities)
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    default_z: complex = 1

    def __post_init__(self):
        object.__setattr__(self, "f", as_expr(self.f))
        object.__setattr__(self, "default_z", complex(self.default_z))

    @property
    def q(self) -> Expr:
        return increment_expr(self.f)


def problem_from_text(text: str, policy: Optional[TruncationPolicy] = None,
                      default_z: complex = 1) -> ProblemSpec:
    return ProblemSpec(as_expr(text), name=text, policy=policy or TruncationPolicy(),
                       default_z=default_z)


# ---------------------------------------------------------------------------
# Builtins

_BUILTINS = {
    "U": ProblemSpec(
        f=as_expr("z + exp(s*z)"),
        name="U",
        z_domain=HalfPlaneReGt(0.0),
        s_verified=DomainSpec(ZDisk(1, 0.5), LeftStrip(0.5, -4.0, 4.0)),
        policy=TruncationPolicy(tol=1e-13, n_max=100_000),
        default_z=1,
    ),
    "Q": ProblemSpec(
        f=as_expr("z + z^2/s^2 + z^3/s^3"),
        name="Q",
        singularities=Singularities(sets=(ShiftedNaturals((0j,)),)),
        s_verified=DomainSpec(ZDisk(0.2, 0.1), Rect(-8.0, -0.5, -4.0, 4.0)),
        policy=TruncationPolicy(tol=1e-9, n_max=400_000),
        default_z=0.2,
    ),
    "P": ProblemSpec(
        f=as_expr("z*cos(2^s*z) + sin(z)/(s^2 + 1) + sin(z)^2/(s^2 + 1)^2"),
        name="P",
        singularities=Singularities(sets=(ShiftedNaturals((1j, -1j)),)),
        s_verified=DomainSpec(ZDisk(0.3, 0.1), Rect(-8.0, -0.5, -0.5, 0.5)),
        policy=TruncationPolicy(tol=1e-8, n_max=400_000),
        default_z=0.3,
    ),
}

BUILTIN_DESCRIPTIONS = {
    "U": "Delta y = exp(s*y)",
    "Q": "Delta y = y^2/s^2 + y^3/s^3",
    "P": "y(s+1) = y*cos(2^s*y) + sin(y)/(s^2+1) + sin(y)^2/(s^2+1)^2",
}


def builtin(name: str) -> ProblemSpec:
    try:
        return _BUILTINS[name]
    except KeyError:
        raise UnknownBuiltin(f"unknown builtin {name!r}; choose from {sorted(_BUILTINS)}") from None


def builtin_names() -> list:
    return list(_BUILTINS)


# ---------------------------------------------------------------------------
# Solving and checking

def _check_point(p: ProblemSpec, s: complex, z: complex) -> set:
    if not p.z_domain.contains(z):
        raise DomainViolation(f"z = {z} is outside the parameter domain {p.z_domain.describe()}")
    dist = p.singularities.distance(s)
    if dist < SINGULARITY_MARGIN:
        raise SingularityProximity(
            f"s = {s} lies within {SINGULARITY_MARGIN} of a singularity (distance {dist:.3g})")
    return {"NearSingularity"} if dist < NEAR_SINGULARITY else set()


def gamma_solve(p: ProblemSpec, s: complex, z: complex,
                policy: Optional[TruncationPolicy] = None) -> SolveResult:
    """Evaluate ``Gamma_f(s, z)`` by adaptive inner composition."""
    s, z = complex(s), complex(z)
    flags = _check_point(p, s, z)
    res = infinite_compose(p.f, s, z, policy or p.policy)
    if flags:
        res = SolveResult(res.value, res.terms, res.err_estimate, res.flags | flags)
    return res


def residual_functional(p: ProblemSpec, s: complex, z: complex,
                        policy: Optional[TruncationPolicy] = None) -> float:
    """``|Gamma(s+1) - f(s, Gamma(s))|`` from two independent solves."""
    s, z = complex(s), complex(z)
    lhs = gamma_solve(p, s + 1, z, policy).value
    inner = gamma_solve(p, s, z, policy).value
    return abs(lhs - evaluate(p.f, s, inner))


def indefinite_sum(q: Union[Expr, str], s: complex,
                   policy: Optional[TruncationPolicy] = None) -> complex:
    """``sum_{j>=1} q(s - j)`` for ``q`` free of ``z``, truncated adaptively.

    Terms are summed from the deepest one outwards, the same order in which
    the equivalent composition ``z + q(s)`` accumulates them.
    """
    q = as_expr(q)
    if "z" in free_vars(q):
        raise NotConstantInZ(f"{to_text(q)} depends on z")
    policy = policy or TruncationPolicy()
    tol = max(policy.tol, 1e-14)
    qn = compile_scalar(q)
    s = complex(s)
    terms = []
    small = 0
    j = 0
    while small < policy.stall_window:
        j += 1
        if j > policy.n_max:
            raise NonConvergent(f"terms of {to_text(q)} do not decay below {tol:g}")
        t = qn(s - j, 0j)
        terms.append(t)
        small = small + 1 if abs(t) < tol else 0
    total = 0j
    for t in reversed(terms):
        total = total + t
    return total


def telescoping_check(p: ProblemSpec, s: complex, z: complex, depth: int,
                      policy: Optional[TruncationPolicy] = None) -> float:
    """``|sum_{j=1..depth} q(s-j, Gamma(s-j)) - (Gamma(s) - z)|`` with ``q = f - z``.

    The finite sum telescopes to ``Gamma(s) - Gamma(s - depth)``, so the
    value measures ``|Gamma(s - depth) - z|`` plus solve error.
    """
    s, z = complex(s), complex(z)
    qn = compile_scalar(p.q)
    total = 0j
    for j in range(depth, 0, -1):
        g = gamma_solve(p, s - j, z, policy).value
        total = total + qn(s - j, g)
    return abs(total - (gamma_solve(p, s, z, policy).value - z))


PERIODICITY_TOL = 1e-10


def periodic_perturbation(p: ProblemSpec, L: Union[Expr, str], s: complex,
                          policy: Optional[TruncationPolicy] = None) -> float:
    """Residual of ``l(s) = Gamma(s, L(s))`` for a 1-periodic parameter ``L(s)``."""
    L = as_expr(L)
    if "z" in free_vars(L):
        raise NotConstantInZ(f"L = {to_text(L)} must depend on s only")
    s = complex(s)
    Ln = compile_scalar(L)
    for k in range(8):
        sigma = s + k / 8
        if abs(Ln(sigma + 1, 0j) - Ln(sigma, 0j)) > PERIODICITY_TOL:
            raise NotPeriodic(f"L = {to_text(L)} is not 1-periodic near s = {sigma}")
        if not p.z_domain.contains(Ln(sigma, 0j)):
            raise DomainViolation(f"L({sigma}) leaves the parameter domain {p.z_domain.describe()}")
    z0 = Ln(s, 0j)
    z1 = Ln(s + 1, 0j)
    lhs = gamma_solve(p, s + 1, z1, policy).value
    inner = gamma_solve(p, s, z0, policy).value
    return abs(lhs - evaluate(p.f, s, inner))
