"""Left-ward asymptotics of the solution ``U`` of ``Delta y = exp(s*y)``.

In the sector ``pi/2 < |arg(s*z)| <= pi`` the solution decays to its
parameter, ``U(s, z) -> z``, and

    U(s, z) - z  ~  exp((s - 1) z) / (1 - exp(-z)).

``U - z`` is computed in displacement form (see
:func:`infcomp.composer.inner_compose_displacement`), so gaps far below
``ulp(z)`` keep their relative precision.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .composer import inner_compose_displacement
from .dsolve import ProblemSpec, builtin
from .errors import ArgumentSector, DenominatorZero, DomainViolation

SECTOR_MARGIN = 1e-9
DEFAULT_DEPTH = 400


@dataclass(frozen=True)
class RaySample:
    t: float
    s: complex
    gap: float
    ratio: complex


def _check_sector(w: complex, what: str):
    if w == 0:
        raise ArgumentSector(f"{what} is zero; its argument is undefined")
    if not abs(cmath.phase(w)) > math.pi / 2 + SECTOR_MARGIN:
        raise ArgumentSector(
            f"|arg({what})| = {abs(cmath.phase(w)):.12g} must exceed pi/2")


def _leading_term(s: complex, z: complex) -> complex:
    return cmath.exp((s - 1) * z) / (1 - cmath.exp(-z))


def displacement(p: ProblemSpec, s: complex, z: complex, depth: int = DEFAULT_DEPTH) -> complex:
    """``Gamma(s, z) - z`` at fixed composition depth."""
    return inner_compose_displacement(p.q, s, z, 1, depth)


def decay_profile(p: ProblemSpec, z: complex, alpha: complex, t_values: Sequence[float],
                  depth: int = DEFAULT_DEPTH) -> list:
    """Sample ``|Gamma(alpha*t) - z|`` along a ray.

    ``ratio`` is ``(Gamma(s) - z) (1 - e^-z) / e^((s-1) z)``, which tends to 1
    for ``U``; it is NaN when ``1 - e^-z`` vanishes.
    """
    z, alpha = complex(z), complex(alpha)
    if abs(abs(alpha) - 1) > 1e-12:
        raise ValueError("alpha must have unit modulus")
    _check_sector(alpha * z, "alpha*z")
    ts = [float(t) for t in t_values]
    if any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t values must be positive and increasing")
    if not p.z_domain.contains(z):
        raise DomainViolation(f"z = {z} is outside {p.z_domain.describe()}")
    denom = 1 - cmath.exp(-z)
    out = []
    for t in ts:
        s = alpha * t
        d = displacement(p, s, z, depth)
        if abs(denom) < 1e-12:
            ratio = complex(math.nan, math.nan)
        else:
            ratio = d * denom / cmath.exp((s - 1) * z)
        out.append(RaySample(t, s, abs(d), ratio))
    return out


def asymptotic_ratio_u(s: complex, z: complex, depth: int = DEFAULT_DEPTH) -> complex:
    """``(U(s, z) - z) (1 - e^-z) / e^((s-1) z)``; tends to 1 as ``|s|`` grows in the sector."""
    s, z = complex(s), complex(z)
    _check_sector(s * z, "s*z")
    if not z.real > 0:
        raise DomainViolation("Re(z) must be positive")
    denom = 1 - cmath.exp(-z)
    if abs(denom) < 1e-12:
        raise DenominatorZero(f"1 - exp(-z) vanishes at z = {z}")
    d = displacement(builtin("U"), s, z, depth)
    return d * denom / cmath.exp((s - 1) * z)


def step_ratio_u(s: complex, z: complex, depth: int = DEFAULT_DEPTH) -> complex:
    """``(U(s+1) - U(s)) / e^(sz)``, which equals ``e^(s (U(s) - z))``."""
    s, z = complex(s), complex(z)
    U = builtin("U")
    step = displacement(U, s + 1, z, depth) - displacement(U, s, z, depth)
    return step / cmath.exp(s * z)


def telescoping_majorant(s: complex, z: complex, depth: int = 200,
                         inner_depth: Optional[int] = None) -> float:
    """``sum_{j=1..depth} |exp((s-j) U(s-j))|``, an upper bound for ``|U(s) - z|``."""
    s, z = complex(s), complex(z)
    U = builtin("U")
    inner_depth = inner_depth or DEFAULT_DEPTH
    total = 0.0
    for j in range(depth, 0, -1):
        u = z + displacement(U, s - j, z, inner_depth)
        total += abs(cmath.exp((s - j) * u))
    return total
