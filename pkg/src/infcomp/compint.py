"""Compositional integrals and the square-root operator equation.

The compositional integral of ``g`` is the limit of inner compositions of
small steps ``w -> w + g(s - j/n, w)/n``; at finite ``n`` it is a left-endpoint
scheme for ``mu' = g(s, mu)`` with ``mu(-inf) = z``.  :func:`ode_oracle` is an
unrelated classical RK4 integrator used to cross-check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import CutoffTooSmall, DivisionNearZero, DomainViolation, Overflow
from .expr import Expr, as_expr, compile_scalar

TAIL_LIMIT = 1e-12
_TAIL_OFFSETS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


@dataclass(frozen=True)
class CompIntSpec:
    g: Expr
    z: complex
    n: int
    cutoff: float

    def __post_init__(self):
        object.__setattr__(self, "g", as_expr(self.g))
        object.__setattr__(self, "z", complex(self.z))
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    @property
    def steps(self) -> int:
        return math.ceil(self.n * self.cutoff)


def check_cutoff(spec: CompIntSpec, s: complex):
    """Raise :class:`CutoffTooSmall` unless ``|g|`` is negligible beyond the cut."""
    gn = compile_scalar(spec.g)
    start = complex(s) - spec.steps / spec.n
    for off in _TAIL_OFFSETS:
        try:
            v = abs(gn(start - off, spec.z))
        except (Overflow, DivisionNearZero):
            v = math.inf
        if not v < TAIL_LIMIT:
            raise CutoffTooSmall(
                f"|g| = {v:.3g} at s = {start - off} beyond the cutoff {spec.cutoff:g}")


def comp_integral(spec: CompIntSpec, s: complex, check: bool = True) -> complex:
    """Inside-out ``w <- w + g(s - j/n, w)/n`` for j = ceil(n*cutoff) down to 1."""
    s = complex(s)
    if check:
        check_cutoff(spec, s)
    gn = compile_scalar(spec.g)
    n = spec.n
    h = 1.0 / n
    w = spec.z
    j = spec.steps
    try:
        while j >= 1:
            w = w + h * gn(s - j / n, w)
            j -= 1
    except Overflow:
        raise Overflow(index=j) from None
    return w


def ode_oracle(g: Union[Expr, str], s0: float, y0: complex, s1: float, steps: int) -> complex:
    """Classical fourth-order Runge-Kutta for ``y' = g(s, y)`` with a fixed step."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not s1 > s0:
        raise ValueError("need s1 > s0")
    gn = compile_scalar(as_expr(g))
    h = (s1 - s0) / steps
    y = complex(y0)
    for k in range(steps):
        x = s0 + k * h
        k1 = gn(x, y)
        k2 = gn(x + h / 2, y + h / 2 * k1)
        k3 = gn(x + h / 2, y + h / 2 * k2)
        k4 = gn(x + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


SQRT_OPERATOR_K = "z + s*z^2"


def sqrt_operator_solve(k: Union[Expr, str], s: complex, z: complex, depth: int = 60) -> complex:
    """Solve ``y(sqrt(s)) = k(s, y(s))`` as ``k(s^2, k(s^4, ... k(s^(2^depth), z)))``.

    The powers ``s^(2^j)`` come from repeated squaring, so no branch choice is
    involved; they vanish double-exponentially for ``|s| < 1``.
    """
    s, z = complex(s), complex(z)
    if not abs(s) < 1:
        raise DomainViolation("the square-root operator solution needs |s| < 1")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    kn = compile_scalar(as_expr(k))
    powers = []
    sigma = s
    for _ in range(depth):
        sigma = sigma * sigma
        powers.append(sigma)
    w = z
    for j in range(depth, 0, -1):
        try:
            w = kn(powers[j - 1], w)
        except Overflow:
            raise Overflow(index=j) from None
    return w
