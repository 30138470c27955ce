"""Inner compositions, summability estimates and adaptive truncation.

For a function ``f(s, z)`` the maps ``phi_j(s, z) = f(s - j, z)`` are
composed from the inside out::

    F_nm(s, z) = phi_n(s, phi_{n+1}(s, ... phi_m(s, z)))

so that ``F_nm = phi_n(F_{n+1,m})`` holds exactly in floating point.  The
infinite composition ``F_1,inf`` converges when the sup norms
``rho_j = sup |phi_j(s, z) - z|`` over a compact disk in ``z`` and a region
in ``s`` are summable; :func:`summability_report` estimates those norms by
sampling and reports the constants of the tail bound
``|F_N,m+1 - F_N,m| <= M |phi_{m+1} - z|`` with ``M = 2A / (delta (1 - rho/delta))``.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DivisionNearZero, NonConvergent, Overflow
from .expr import Expr, as_expr, compile_array, compile_scalar, increment_expr

MIN_TOL = 1e-14
MAX_NMAX = 10**6
REPORT_TERMS = 512
LEFT_STRIP_WIDTH = 64.0
# The term-size scan stops once |phi_m(z) - z| < tol / SCAN_SAFETY; the
# exact increments are verified afterwards.
SCAN_SAFETY = 8.0


@dataclass(frozen=True)
class TruncationPolicy:
    tol: float = 1e-13
    n_max: int = 100_000
    stall_window: int = 4

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 1 <= self.n_max <= MAX_NMAX:
            raise ValueError(f"n_max must lie in [1, {MAX_NMAX}]")
        if self.stall_window < 1:
            raise ValueError("stall_window must be a positive integer")

    def replace(self, **changes) -> "TruncationPolicy":
        values = {"tol": self.tol, "n_max": self.n_max, "stall_window": self.stall_window}
        values.update(changes)
        return TruncationPolicy(**values)


@dataclass(frozen=True)
class ZDisk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    def boundary(self, samples: int) -> np.ndarray:
        k = np.arange(samples)
        return self.center + self.radius * np.exp(2j * np.pi * k / samples)


@dataclass(frozen=True)
class Rect:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if self.re_min > self.re_max or self.im_min > self.im_max:
            raise ValueError("rectangle bounds must be ordered")

    def grid(self, n: int) -> np.ndarray:
        re = np.linspace(self.re_min, self.re_max, n)
        im = np.linspace(self.im_min, self.im_max, n)
        return (re[None, :] + 1j * im[:, None]).ravel()


@dataclass(frozen=True)
class SDisk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    def grid(self, n: int) -> np.ndarray:
        # polar grid with the boundary circle as outermost ring
        radii = self.radius * np.arange(1, n + 1) / n
        angles = 2 * np.pi * np.arange(n) / n
        pts = self.center + radii[:, None] * np.exp(1j * angles[None, :])
        return np.concatenate([[self.center], pts.ravel()])


@dataclass(frozen=True)
class LeftStrip:
    """``{Re s <= re_max, im_min <= Im s <= im_max}``, unbounded to the left."""

    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (math.isfinite(self.re_max) and math.isfinite(self.im_min)
                and math.isfinite(self.im_max)):
            raise ValueError("left strip needs finite re_max and imaginary bounds")
        if self.im_min > self.im_max:
            raise ValueError("strip bounds must be ordered")

    def window(self) -> Rect:
        return Rect(self.re_max - LEFT_STRIP_WIDTH, self.re_max, self.im_min, self.im_max)

    def grid(self, n: int) -> np.ndarray:
        return self.window().grid(n)


SRegion = Union[Rect, SDisk, LeftStrip]


@dataclass(frozen=True)
class DomainSpec:
    z_disk: ZDisk
    s_region: SRegion

    def sample_points(self, samples: int = 64, grid: int = 8):
        """Return broadcastable ``(S, Z)`` sample arrays, shape (n_s, 1) and (1, n_z)."""
        if samples < 8:
            raise ValueError("at least 8 boundary samples are required")
        s = self.s_region.grid(grid)
        z = self.z_disk.boundary(samples)
        return s[:, None], z[None, :]


@dataclass(frozen=True)
class SolveResult:
    value: complex
    terms: int
    err_estimate: float
    flags: frozenset = field(default_factory=frozenset)


class Verdict(str, enum.Enum):
    CONVERGES = "Converges"
    DIVERGES = "Diverges"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class BoundConstants:
    A: float
    delta: float
    rho_small: float
    M: float


@dataclass(frozen=True)
class SummabilityReport:
    rho: tuple
    fitted_ratio: float
    tail_estimate: float
    verdict: Verdict
    bound_constants: BoundConstants
    warnings: tuple = ()

    @property
    def terms(self) -> int:
        return len(self.rho)


# ---------------------------------------------------------------------------
# Pointwise compositions

def compose_maps(maps, z: complex) -> complex:
    """``maps[0](maps[1](... maps[-1](z)))`` for arbitrary one-argument callables."""
    w = z
    for phi in reversed(maps):
        w = phi(w)
    return w


def inner_compose(f: Union[Expr, str], s: complex, z: complex, n: int, m: int) -> complex:
    """Evaluate ``F_nm(s, z)`` inside-out: ``w = z``, then ``w = f(s - j, w)`` for j = m..n."""
    if not 1 <= n <= m:
        raise ValueError("need 1 <= n <= m")
    fn = compile_scalar(as_expr(f))
    return _compose(fn, complex(s), complex(z), n, m)


def _compose(fn, s, w, n, m):
    j = m
    try:
        while j >= n:
            w = fn(s - j, w)
            j -= 1
    except Overflow:
        raise Overflow(index=j) from None
    except DivisionNearZero:
        raise DivisionNearZero(index=j) from None
    return w


def inner_compose_displacement(q: Union[Expr, str], s: complex, z: complex,
                               n: int, m: int) -> complex:
    """Return ``F_nm(s, z) - z`` for ``f = z + q``, accumulated without cancellation.

    Tracks ``d = w - z`` through ``d <- d + q(s - j, z + d)`` so that tiny
    displacements keep full relative precision.
    """
    if not 1 <= n <= m:
        raise ValueError("need 1 <= n <= m")
    qn = compile_scalar(as_expr(q))
    s, z = complex(s), complex(z)
    d = 0j
    j = m
    try:
        while j >= n:
            d = d + qn(s - j, z + d)
            j -= 1
    except Overflow:
        raise Overflow(index=j) from None
    except DivisionNearZero:
        raise DivisionNearZero(index=j) from None
    return d


def _prefix_values(fn, s, z, m, window):
    """``[F_1k(z) for k in m-window..m]`` sharing the outer part of the work."""
    lo = m - window
    inner = [z]
    for k in range(lo + 1, m + 1):
        inner.append(_compose(fn, s, z, lo + 1, k))
    if lo == 0:
        return inner
    return [_compose(fn, s, u, 1, lo) for u in inner]


def infinite_compose(f: Union[Expr, str], s: complex, z: complex,
                     policy: Optional[TruncationPolicy] = None,
                     report: Optional[SummabilityReport] = None) -> SolveResult:
    """Truncate ``F_1,inf(s, z)`` adaptively.

    Terms are added until the last ``stall_window`` increments
    ``|F_1,k - F_1,k-1|`` are all below ``tol``.  Candidate depths are found
    by scanning the cheap term sizes ``|phi_k(s, z) - z|`` and then confirmed
    on the exact increments; the depth only depends on the arguments
    ``s - k``, so neighbouring solves at ``s`` and ``s + 1`` truncate at the
    same place.
    """
    policy = policy or TruncationPolicy()
    flags = set()
    tol = policy.tol
    if tol < MIN_TOL:
        tol = MIN_TOL
        flags.add("Clamped")
    f = as_expr(f)
    fn = compile_scalar(f)
    qn = compile_scalar(increment_expr(f))
    s, z = complex(s), complex(z)
    window = policy.stall_window
    threshold = tol / SCAN_SAFETY
    taus: deque = deque(maxlen=window)
    count = 0
    m = 0
    while True:
        while count < window:
            m += 1
            if m > policy.n_max:
                raise NonConvergent(
                    f"no stall of {window} increments below {tol:g} within n_max={policy.n_max}")
            try:
                tau = abs(qn(s - m, z))
            except Overflow:
                raise Overflow(index=m) from None
            except DivisionNearZero:
                raise DivisionNearZero(index=m) from None
            taus.append(tau)
            count = count + 1 if tau < threshold else 0
        values = _prefix_values(fn, s, z, m, window)
        incs = [abs(b - a) for a, b in zip(values, values[1:])]
        if all(inc < tol for inc in incs):
            break
        gains = [inc / t for inc, t in zip(incs, taus) if t > 0]
        gain = max(gains) if gains else 10.0
        threshold = min(threshold, tol / (SCAN_SAFETY * max(gain, 1.0))) / 2
        count = 0
    err = incs[-1]
    if report is not None and math.isfinite(report.bound_constants.M):
        err = report.bound_constants.M * err
    return SolveResult(values[-1], m, err, frozenset(flags))


# ---------------------------------------------------------------------------
# Sampled sup norms

def _displacements(f: Expr, j: int, dom: DomainSpec, samples: int, grid: int) -> np.ndarray:
    # |phi_j - z| is evaluated as |q| with q = f - z recovered syntactically,
    # so terms far below ulp(z) are not lost to cancellation
    S, Z = dom.sample_points(samples, grid)
    return np.abs(compile_array(increment_expr(f))(S - j, Z))


def _sup_on_right_edge(values: np.ndarray, dom: DomainSpec, grid: int) -> bool:
    if not isinstance(dom.s_region, LeftStrip):
        return True
    per_s = values.max(axis=1).reshape(grid, grid)
    top = per_s.max()
    return top == 0 or per_s[:, -1].max() >= top


def sup_norm_estimate(f: Union[Expr, str], j: int, dom: DomainSpec,
                      samples: int = 64, grid: int = 8) -> float:
    """Estimate ``sup |f(s - j, z) - z|`` over the z-disk and s-region.

    The disk is sampled on its boundary circle (maximum modulus) and the
    s-region on a deterministic ``grid x grid`` lattice; a left strip is cut
    to the 64-wide window next to its right edge.
    """
    return float(_displacements(as_expr(f), j, dom, samples, grid).max())


def tail_distance(f: Union[Expr, str], dom: DomainSpec, n: int, m: int,
                  samples: int = 64, grid: int = 8) -> float:
    """Sampled ``sup |F_nm(s, z) - z|`` (runtime witness that tails approach identity)."""
    if not 1 <= n <= m:
        raise ValueError("need 1 <= n <= m")
    fa = compile_array(as_expr(f))
    S, Z = dom.sample_points(samples, grid)
    w = np.broadcast_to(Z, np.broadcast(S, Z).shape).astype(complex)
    for j in range(m, n - 1, -1):
        try:
            w = fa(S - j, w)
        except Overflow:
            raise Overflow(index=j) from None
        except DivisionNearZero:
            raise DivisionNearZero(index=j) from None
    return float(np.abs(w - Z).max())


def _geometric_ratio(tail_j: np.ndarray, tail_rho: np.ndarray) -> float:
    pos = tail_rho > 0
    if pos.sum() < 2:
        return 0.0
    slope = np.polyfit(tail_j[pos], np.log(tail_rho[pos]), 1)[0]
    return float(math.exp(slope))


def _slow_power_law(tail_j: np.ndarray, tail_rho: np.ndarray) -> bool:
    """True when the tail looks like ``C j^-p`` with ``p <= 1`` (not summable)."""
    if len(tail_rho) < 4 or not (tail_rho > 0).all():
        return False
    y = np.log(tail_rho)
    geo = np.polyfit(tail_j, y, 1, full=True)[1]
    pw = np.polyfit(np.log(tail_j), y, 1, full=True)
    geo_res = float(geo[0]) if len(geo) else 0.0
    pw_res = float(pw[1][0]) if len(pw[1]) else 0.0
    exponent = -float(pw[0][0])
    return pw_res < geo_res and exponent <= 1.0


def summability_report(f: Union[Expr, str], dom: DomainSpec,
                       policy: Optional[TruncationPolicy] = None,
                       samples: int = 64, grid: int = 8) -> SummabilityReport:
    """Estimate ``rho_j`` for j = 1..min(n_max, 512) and judge summability."""
    f = as_expr(f)
    policy = policy or TruncationPolicy()
    terms = min(policy.n_max, REPORT_TERMS)
    A = abs(dom.z_disk.center) + dom.z_disk.radius
    delta = dom.z_disk.radius / 2
    warnings = []
    rho = []
    failure = None
    for j in range(1, terms + 1):
        try:
            vals = _displacements(f, j, dom, samples, grid)
        except Overflow:
            failure = Verdict.DIVERGES
            warnings.append(f"overflow while sampling phi_{j}")
            break
        except DivisionNearZero:
            failure = Verdict.INCONCLUSIVE
            warnings.append(f"division near zero while sampling phi_{j}")
            break
        if not _sup_on_right_edge(vals, dom, grid) and not warnings:
            warnings.append(f"sampled sup of phi_{j} not attained on the right edge of the strip")
        rho.append(float(vals.max()))

    if failure is not None or not rho:
        nan = float("nan")
        return SummabilityReport(tuple(rho), nan, math.inf, failure or Verdict.INCONCLUSIVE,
                                 BoundConstants(A, delta, nan, math.inf), tuple(warnings))

    r = np.asarray(rho)
    js = np.arange(1, len(r) + 1, dtype=float)
    half = len(r) // 2 if len(r) >= 4 else 0
    tail_j, tail_rho = js[half:], r[half:]
    ratio = _geometric_ratio(tail_j, tail_rho)
    rho_small = float(tail_rho.max())
    M = 2 * A / (delta * (1 - rho_small / delta)) if rho_small < delta else math.inf
    last = float(r[-1])
    if last == 0:
        tail = 0.0
    elif ratio < 1 and math.isfinite(M):
        tail = M * last * ratio / (1 - ratio)
    else:
        tail = math.inf
    harmonic = _slow_power_law(tail_j, tail_rho)

    window = policy.stall_window
    if ratio < 1 and last < delta and math.isfinite(tail) and not harmonic:
        verdict = Verdict.CONVERGES
    elif harmonic or (len(r) > window and r[-1] >= r[-1 - window]):
        verdict = Verdict.DIVERGES
    else:
        verdict = Verdict.INCONCLUSIVE
    return SummabilityReport(tuple(rho), ratio, tail, verdict,
                             BoundConstants(A, delta, rho_small, M), tuple(warnings))
