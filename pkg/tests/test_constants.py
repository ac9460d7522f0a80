import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import PchipInterpolator

from ovallab.constants import (
    appendix_chain_check,
    appendix_constants,
    constants_row,
    keller_certificate,
    keller_certificate_pair,
    keller_constant,
    keller_split_constant,
    known_bounds_table,
    semiclassical_constant,
    sobolev_check,
    sobolev_constant,
    split_residual,
)
from ovallab.errors import DomainError
from ovallab.line import PotentialSpec, bound_states, eigenfunction_pair
from ovallab.numerics import GridFunction, UniformGrid

UNIT = UniformGrid(0.0, 1.0, 4001)


def test_keller_examples():
    assert keller_constant(1.0) == pytest.approx(4 / (3 * math.sqrt(3) * math.pi), rel=1e-14)
    assert keller_constant(1.0) == pytest.approx(0.245032, abs=1e-5)
    assert keller_constant(1.5) == pytest.approx(3 / 16, rel=1e-14)
    assert keller_constant(0.5 + 1e-6) == pytest.approx(0.5, abs=1e-4)


@pytest.mark.parametrize("gamma", [0.5, 0.2, -1.0])
def test_keller_domain(gamma):
    with pytest.raises(DomainError):
        keller_constant(gamma)
    with pytest.raises(DomainError):
        appendix_constants(gamma)


def test_semiclassical_examples():
    assert semiclassical_constant(1.5, 1) == pytest.approx(3 / 16, rel=1e-14)
    assert semiclassical_constant(1.5, 1) == pytest.approx(keller_constant(1.5), abs=1e-10)
    assert semiclassical_constant(1.0, 1) == pytest.approx(2 / (3 * math.pi), rel=1e-14)
    assert semiclassical_constant(0.0, 1) == pytest.approx(1 / math.pi, rel=1e-14)
    # n = 3, gamma = 0: 1/(6 pi^2) from Gamma(1)/Gamma(5/2)
    assert semiclassical_constant(0.0, 3) == pytest.approx(1 / (6 * math.pi**2), rel=1e-14)
    with pytest.raises(DomainError):
        semiclassical_constant(-0.1, 1)


def test_appendix_examples():
    c, c_tilde = appendix_constants(1.0)
    assert c == pytest.approx(math.pi**2 / 4, abs=1e-12)
    assert c_tilde == pytest.approx(4 / (3 * math.sqrt(3) * math.pi), abs=1e-14)
    assert appendix_constants(1.25)[1] ** 1.25 == pytest.approx(keller_constant(1.25), abs=1e-12)


def test_identity_grid():
    for gamma in np.linspace(0.55, 1.5, 100):
        row = constants_row(gamma)
        assert row.identity_residual <= 1e-12
        assert row.L1 >= row.Lc * (1 - 1e-14)
        assert row.ratio_R >= 1.0 - 1e-14


def test_keller_continuous_at_ends():
    lefts = [keller_constant(0.5 + d) for d in (1e-3, 1e-5, 1e-7)]
    assert all(abs(v - 0.5) < 1e-2 for v in lefts)
    assert abs(lefts[-1] - 0.5) < abs(lefts[0] - 0.5)
    assert keller_constant(1.5 - 1e-9) == pytest.approx(3 / 16, abs=1e-8)


def test_known_bounds():
    table = known_bounds_table()
    assert table["eden_foias"] == pytest.approx(0.384900, abs=1e-6)
    assert table["eden_foias"] == pytest.approx(2 * math.sqrt(3) / 9, rel=1e-15)
    assert table["two_state_halfbound"] == pytest.approx(0.3465, abs=1e-4)
    assert table["two_state_halfbound"] == pytest.approx(0.3465319116594116, rel=1e-14)
    assert table["conjectured_L11"] == pytest.approx(keller_constant(1.0), abs=1e-14)
    assert table["proven_L_half"] == 0.5
    assert table["conjectured_L11"] < table["two_state_halfbound"] < table["eden_foias"]


def test_split_constant_optimization():
    assert keller_split_constant(math.pi**2 / 4) == pytest.approx(keller_constant(1.0), abs=1e-14)
    halved = keller_split_constant(math.pi**2 / 8)
    assert halved == pytest.approx(known_bounds_table()["two_state_halfbound"], abs=1e-12)


def test_split_constant_is_the_minimizer():
    # brute force: smallest K with 4/(27 K^2) <= D
    for d in (math.pi**2 / 4, math.pi**2 / 8, 1.0):
        K = keller_split_constant(d)
        assert 4 / (27 * K**2) == pytest.approx(d, rel=1e-14)


@given(
    st.floats(0, 50, allow_nan=False),
    st.floats(0, 5, allow_nan=False),
    st.floats(1e-3, 1e3, allow_nan=False),
)
def test_split_is_amgm(v, rho, K):
    assert split_residual(np.array([v]), np.array([rho]), K)[0] >= -1e-12 * max(1.0, v * rho)


def test_keller_certificate_pt2():
    v = PotentialSpec.poschl_teller(2.0)
    (u,) = bound_states(v, 1).functions()
    cert = keller_certificate(v, u, 4 / (3 * math.sqrt(3) * math.pi))
    assert cert.split_ok and cert.bound_holds and cert.keller_holds
    assert cert.lambda_sum == pytest.approx(1.0, abs=1e-6)
    assert cert.keller_bound == pytest.approx(keller_constant(1.0) * math.sqrt(2) * math.pi, rel=1e-8)
    assert cert.keller_bound == pytest.approx(1.0888, abs=5e-4)


@pytest.mark.parametrize("K", [1e-2, 0.5, 10.0])
def test_keller_certificate_any_K(K):
    v = PotentialSpec.gaussian(5.0, 1.0)
    (u,) = bound_states(v, 1).functions()
    cert = keller_certificate(v, u, K)
    assert cert.split_ok and cert.bound_holds


def test_keller_certificate_pair():
    v = PotentialSpec.poschl_teller(6.0)
    u1, u2 = eigenfunction_pair(v)
    cert = keller_certificate_pair(v, u1, u2, keller_constant(1.0))
    assert cert.split_ok and cert.bound_holds
    assert cert.lambda_sum == pytest.approx(5.0, abs=1e-5)


def test_keller_certificate_rejects_nonpositive_K():
    v = PotentialSpec.poschl_teller(2.0)
    (u,) = bound_states(v, 1).functions()
    with pytest.raises(DomainError):
        keller_certificate(v, u, 0.0)


def test_sobolev_parabola():
    s = UNIT.nodes
    report = sobolev_check(GridFunction(UNIT, 2 * s * (1 - s)), 1.0)
    assert report.lhs == pytest.approx(1 / 3, abs=1e-9)
    assert report.rhs == pytest.approx(math.pi**2 / 4 * 2 / 15, abs=1e-9)
    assert report.holds


def test_sobolev_sine_is_extremal():
    s = UNIT.nodes
    report = sobolev_check(GridFunction(UNIT, math.sqrt(2) * np.sin(math.pi * s)), 1.0)
    assert report.lhs == pytest.approx(report.rhs, rel=1e-6)
    assert report.holds


def test_sobolev_random_splines():
    rng = np.random.default_rng(7)
    knots = np.linspace(0, 1, 9)
    s = UNIT.nodes
    for _ in range(100):
        heights = np.concatenate([[0.0], rng.uniform(0, 2, size=7), [0.0]])
        w = np.clip(PchipInterpolator(knots, heights)(s), 0.0, None)
        assert sobolev_check(GridFunction(UNIT, w), 1.2).holds


def test_sobolev_contract():
    s = UNIT.nodes
    with pytest.raises(DomainError):
        sobolev_check(GridFunction(UNIT, np.sin(2 * math.pi * s)), 1.0)
    with pytest.raises(DomainError):
        sobolev_check(GridFunction(UNIT, 1.0 + 0 * s), 1.0)


def test_sobolev_constant_matches_appendix():
    for gamma in (0.7, 1.0, 1.3):
        assert sobolev_constant(gamma) == appendix_constants(gamma)[0]


@pytest.mark.parametrize(
    "v, gamma",
    [
        (PotentialSpec.poschl_teller(2.0), 1.0),
        (PotentialSpec.poschl_teller(2.0), 1.4),
        (PotentialSpec.gaussian(0.5, 1.0), 0.6),
    ],
    ids=["pt2-1.0", "pt2-1.4", "shallow-0.6"],
)
def test_appendix_chain(v, gamma):
    report = appendix_chain_check(v, gamma)
    assert report.holds, report.steps
    assert report.optimized_bound == pytest.approx(report.lt_bound ** (1 / gamma), rel=1e-10)


def test_appendix_chain_reproduces_keller_numbers():
    report = appendix_chain_check(PotentialSpec.poschl_teller(2.0), 1.0)
    assert report.lambda1 == pytest.approx(1.0, abs=1e-6)
    assert report.optimized_bound == pytest.approx(keller_constant(1.0) * math.sqrt(2) * math.pi, rel=1e-6)
    assert report.to_dict()["holds"] is True
