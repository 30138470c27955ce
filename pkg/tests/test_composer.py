import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infcomp.composer import (DomainSpec, LeftStrip, Rect, SDisk, TruncationPolicy, Verdict,
                              ZDisk, infinite_compose, inner_compose,
                              inner_compose_displacement, summability_report, sup_norm_estimate,
                              tail_distance)
from infcomp.dsolve import builtin
from infcomp.errors import NonConvergent, Overflow
from infcomp.expr import evaluate

U_F = "z + exp(s*z)"
DOM = DomainSpec(ZDisk(1, 0.5), Rect(-2, 0, -2, 2))


def _u3_expanded(s, z):
    # written out by hand: U_3 = z + e^((s-3)z) + e^((s-2)(z + e^((s-3)z))) + e^((s-1)(...))
    a = z + cmath.exp((s - 3) * z)
    b = a + cmath.exp((s - 2) * a)
    return b + cmath.exp((s - 1) * b)


# --- finite compositions -----------------------------------------------------

def test_shift_reduction():
    assert inner_compose("z + 2^s", 0, 0, 1, 3) == 0.875


def test_u3_matches_expanded_formula():
    for s, z in ((0, 1), (-1 + 0.5j, 0.7 - 0.2j), (0.3, 2)):
        assert abs(inner_compose(U_F, s, z, 1, 3) - _u3_expanded(s, z)) < 1e-14


def test_n_equals_m_is_single_map():
    assert inner_compose(U_F, -1, 0.5, 4, 4) == 0.5 + cmath.exp(-5 * 0.5)


def test_bad_indices():
    with pytest.raises(ValueError):
        inner_compose("z", 0, 0, 3, 2)
    with pytest.raises(ValueError):
        inner_compose("z", 0, 0, 0, 2)


def test_overflow_reports_index():
    with pytest.raises(Overflow) as info:
        inner_compose("z*exp(z)", 0, 3, 1, 10)
    assert info.value.index is not None


def test_displacement_form_tracks_plain_composition():
    q = "exp(s*z)"
    for s in (-2, -5 + 1j):
        d = inner_compose_displacement(q, s, 1, 1, 400)
        assert abs((1 + d) - inner_compose(U_F, s, 1, 1, 400)) < 1e-14
    # far left the displacement is far below ulp(z) yet keeps its digits
    d = inner_compose_displacement(q, -40, 1, 1, 400)
    assert 0 < abs(d) < 1e-17
    assert abs(d - cmath.exp(-41) / (1 - cmath.exp(-1))) < 1e-6 * abs(d)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.integers(0, 20),
       st.complex_numbers(max_magnitude=1), st.complex_numbers(min_magnitude=0.5, max_magnitude=1.5))
def test_recurrence_property(n, extra, s, z):
    m = n + extra + 1
    try:
        lhs = inner_compose(U_F, s, z, n, m)
        rhs = evaluate(U_F, s - n, inner_compose(U_F, s, z, n + 1, m))
    except Overflow:
        return
    assert lhs == rhs


# --- sup norms and reports ---------------------------------------------------

def _sup_oracle(j, dom, samples=64, grid=8):
    # |exp((s-j) z)| = exp(Re((s-j) z)), maximised over exactly the sampled points
    re = np.linspace(dom.s_region.re_min, dom.s_region.re_max, grid)
    im = np.linspace(dom.s_region.im_min, dom.s_region.im_max, grid)
    best = -math.inf
    for k in range(samples):
        z = dom.z_disk.center + dom.z_disk.radius * cmath.exp(2j * math.pi * k / samples)
        for a in re:
            for b in im:
                best = max(best, ((complex(a, b) - j) * z).real)
    return math.exp(best)


def test_sup_norm_examples():
    assert sup_norm_estimate("z", 3, DOM) == 0.0
    assert sup_norm_estimate("z + 1", 7, DOM) == 1.0
    v = sup_norm_estimate(U_F, 4, DOM)
    assert math.exp(-6 * 1.5) * math.exp(-2 * 2) / 2 <= v <= math.exp(-2 * 0.5)
    assert v == pytest.approx(_sup_oracle(4, DOM), rel=1e-13)


def test_sup_norm_ratio_tends_to_bound():
    vals = [sup_norm_estimate(U_F, j, DOM) for j in range(1, 40)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] / vals[-2] <= math.exp(-0.5) * (1 + 1e-12)


def test_sup_norm_needs_samples():
    with pytest.raises(ValueError):
        sup_norm_estimate(U_F, 1, DOM, samples=4)


def test_report_identity():
    rep = summability_report("z", DOM, TruncationPolicy())
    assert rep.verdict is Verdict.CONVERGES
    assert all(r == 0 for r in rep.rho)
    assert rep.tail_estimate == 0


def test_report_diverges_for_constant_shift():
    assert summability_report("z + 1", DOM, TruncationPolicy()).verdict is Verdict.DIVERGES


def test_report_diverges_for_harmonic_terms():
    dom = DomainSpec(ZDisk(0, 0.1), Rect(-2, -1, -0.5, 0.5))
    assert summability_report("z + 1/(1 - s)", dom, TruncationPolicy()).verdict is Verdict.DIVERGES


def test_report_overflow_is_divergence():
    dom = DomainSpec(ZDisk(1, 0.5), Rect(0, 2, -1, 1))
    rep = summability_report("z + exp(-s*z)", dom, TruncationPolicy())
    assert rep.verdict is Verdict.DIVERGES


def test_report_u():
    rep = summability_report(U_F, DOM, TruncationPolicy())
    assert rep.verdict is Verdict.CONVERGES
    assert math.exp(-1.5) <= rep.fitted_ratio <= math.exp(-0.5) * (1 + 1e-12)
    assert math.isfinite(rep.tail_estimate)
    b = rep.bound_constants
    assert (b.A, b.delta) == (1.5, 0.25)
    assert b.M == pytest.approx(2 * b.A / (b.delta * (1 - b.rho_small / b.delta)))
    assert all(r >= 0 for r in rep.rho)


def test_report_left_strip_and_sdisk():
    rep = summability_report(U_F, DomainSpec(ZDisk(1, 0.5), LeftStrip(0.5, -4, 4)),
                             TruncationPolicy())
    assert rep.verdict is Verdict.CONVERGES
    assert rep.warnings == ()
    rep = summability_report(U_F, DomainSpec(ZDisk(1, 0.5), SDisk(-3, 1)), TruncationPolicy())
    assert rep.verdict is Verdict.CONVERGES


def test_left_strip_warning_when_sup_is_not_on_right_edge():
    rep = summability_report("z + exp(-s*z)", DomainSpec(ZDisk(1, 0.1), LeftStrip(-70, -1, 1)),
                             TruncationPolicy())
    assert rep.warnings


# --- tail distance ------------------------------------------------------------

def test_tail_distance_identity():
    assert tail_distance("z", DOM, 1, 50) == 0.0


def test_tail_distance_base_case():
    # F_jj = phi_j; the two routes differ only by the rounding of (z + q) - z
    assert tail_distance(U_F, DOM, 7, 7) == pytest.approx(sup_norm_estimate(U_F, 7, DOM), rel=1e-14)


def test_tail_distance_decays():
    vals = [tail_distance(U_F, DOM, n, 400) for n in range(5, 80, 5)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))
    assert tail_distance(U_F, DOM, 60, 400) < 1e-10
    majorant = math.exp(-0.5 * 60) / (1 - math.exp(-0.5))
    assert tail_distance(U_F, DOM, 60, 400) < 10 * majorant


def test_tail_distance_witness():
    # once n passes the depth the report needed, tails stay below 10x the tail estimate
    for name in ("U", "Q", "P"):
        p = builtin(name)
        dom = p.s_verified
        rep = summability_report(p.f, dom, p.policy.replace(n_max=64))
        rho = 10 * max(rep.tail_estimate, 1e-300)
        n = rep.terms
        for k in (1, 8, 32):
            assert tail_distance(p.f, dom, n + 1, n + k, samples=16, grid=3) < rho


# --- infinite compositions ----------------------------------------------------

def test_identity_stalls_immediately():
    r = infinite_compose("z", 3, 0.3 + 0.1j)
    assert r.value == 0.3 + 0.1j
    assert r.terms == TruncationPolicy().stall_window


def test_u_against_fixed_depth():
    r = infinite_compose(U_F, -5, 1, TruncationPolicy(tol=1e-13))
    assert abs(r.value - inner_compose(U_F, -5, 1, 1, 400)) < 1e-12
    assert r.err_estimate >= 0
    assert r.terms <= TruncationPolicy().n_max


def test_geometric_shift_sum():
    r = infinite_compose("z + 2^s", 0, 0)
    assert abs(r.value - 1) < 1e-13


def test_product_reduction_converges_to_e():
    r = infinite_compose("z*exp(2^s)", 0, 1)
    assert abs(r.value - math.e) < 1e-12


def test_tolerance_is_clamped():
    r = infinite_compose(U_F, -3, 1, TruncationPolicy(tol=1e-16))
    assert "Clamped" in r.flags


def test_report_weights_error_estimate():
    rep = summability_report(U_F, DOM, TruncationPolicy())
    plain = infinite_compose(U_F, -1, 1)
    weighted = infinite_compose(U_F, -1, 1, report=rep)
    assert weighted.value == plain.value
    assert weighted.err_estimate == pytest.approx(plain.err_estimate * rep.bound_constants.M)


def test_non_convergent():
    with pytest.raises(NonConvergent):
        infinite_compose("z + 1", 0, 0, TruncationPolicy(n_max=1000))


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(n_max=10**7)
    with pytest.raises(ValueError):
        TruncationPolicy(stall_window=0)


def test_converges_verdict_means_termination():
    rep = summability_report(U_F, DOM, TruncationPolicy())
    assert rep.verdict is Verdict.CONVERGES
    s_pts, z_pts = DOM.sample_points(samples=8, grid=3)
    for s in s_pts.ravel():
        for z in z_pts.ravel():
            assert infinite_compose(U_F, s, z).terms < TruncationPolicy().n_max
