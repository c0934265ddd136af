import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitune.dynamics import (
    MU_EARTH,
    DomainError,
    EquinoctialState,
    KeplerianElements,
    SingularityError,
    coefficients,
    control_influence,
    element_rate,
    equinoctial_to_cartesian,
    equinoctial_to_keplerian,
    error_dynamics,
    from_error_coords,
    keplerian_to_equinoctial,
    output_distance,
    propagate_reference,
    to_error_coords,
    unforced_rate,
)

from oracles import cartesian_to_equinoctial, error_coords, gauss_rate_fd, kepler_to_cartesian

MU = MU_EARTH
GEO = 42165.0


def random_psi(rng, p_range=(6800.0, 45000.0), e_max=0.7, h_max=1.0):
    e = rng.uniform(0, e_max)
    w = rng.uniform(-math.pi, math.pi)
    h = rng.uniform(0, h_max)
    o = rng.uniform(-math.pi, math.pi)
    return np.array(
        [rng.uniform(-math.pi, math.pi), rng.uniform(*p_range), e * math.cos(w), e * math.sin(w),
         h * math.cos(o), h * math.sin(o)]
    )


def gto_state():
    kep = KeplerianElements(24364, 0.7306, math.radians(63), math.radians(75), math.radians(52), 0.0)
    psi = keplerian_to_equinoctial(kep).as_array()
    psi[0] = math.pi / 6
    return psi


# ---------------------------------------------------------------------------
# state types
# ---------------------------------------------------------------------------


def test_state_invariants_rejected():
    with pytest.raises(DomainError):
        EquinoctialState(0.0, -1.0)
    with pytest.raises(DomainError):
        EquinoctialState(0.0, 7000.0, 0.8, 0.6)
    with pytest.raises(DomainError):
        EquinoctialState(float("nan"), 7000.0)
    with pytest.raises(DomainError):
        KeplerianElements(7000.0, 1.0, 0, 0, 0, 0)


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------


def test_unforced_rate_geo():
    f = unforced_rate([1.3, GEO, 0, 0, 0, 0])
    # sqrt(mu / 42165^3); the sidereal rate 7.2921e-5 belongs to a = 42164.23 km
    assert f[0] == pytest.approx(7.29190045e-5, abs=1e-12)
    assert f[0] == pytest.approx(7.2921e-5, abs=3e-9)
    assert np.all(f[1:] == 0)


@given(st.floats(-10, 10), st.floats(6500, 50000))
def test_unforced_rate_circular_closed_form(L, p):
    f = unforced_rate([L, p, 0, 0, 0.1, -0.2])
    assert f[0] == pytest.approx(math.sqrt(MU / p**3), rel=1e-14)
    assert np.all(f[1:] == 0)


def test_unforced_rate_gto_only_longitude_moves():
    f = unforced_rate(gto_state())
    assert np.all(f[1:] == 0.0)
    psi = gto_state()
    zeta = psi[2] * math.cos(psi[0]) + psi[3] * math.sin(psi[0])
    assert f[0] == pytest.approx(math.sqrt(MU / psi[1] ** 3) * (1 + zeta) ** 2, rel=1e-14)


@pytest.mark.parametrize("L", [0.0, 0.7, 2.5, -1.9])
def test_control_influence_circular_equatorial(L):
    p = 8000.0
    g = control_influence([L, p, 0, 0, 0, 0])
    s = math.sqrt(p / MU)
    assert g[1, 1] == pytest.approx(2 * p * s, rel=1e-14)
    assert g[4, 2] == pytest.approx(s * math.cos(L) / 2, abs=1e-15)
    assert g[5, 2] == pytest.approx(s * math.sin(L) / 2, abs=1e-15)
    # eta = 0 on an equatorial orbit
    assert g[0, 2] == 0 and g[2, 2] == 0 and g[3, 2] == 0


def test_control_influence_sparsity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = control_influence(random_psi(rng))
        for i, j in [(0, 0), (0, 1), (1, 0), (1, 2), (4, 0), (4, 1), (5, 0), (5, 1)]:
            assert g[i, j] == 0.0


def test_control_influence_singular():
    # 1 + eX cos L + eY sin L = 0 needs e = 1, so build it directly
    with pytest.raises(SingularityError):
        control_influence(np.array([math.pi, 7000.0, 1.0, 0.0, 0.0, 0.0]))


def test_gauss_equations_match_cartesian_flow():
    """f + g u against finite differences of the perturbed two-body flow in Cartesian space."""
    rng = np.random.default_rng(2)
    for _ in range(25):
        a = rng.uniform(7000, 40000)
        e = rng.uniform(0, 0.6)
        kep = KeplerianElements(a, e, rng.uniform(0.05, 2.5), *rng.uniform(0, 2 * math.pi, 3))
        psi = keplerian_to_equinoctial(kep).as_array()
        r, v = kepler_to_cartesian(kep.a, kep.e, kep.i, kep.raan, kep.argp, kep.nu)
        u = rng.normal(0, 1e-5, 3)
        ref = element_rate(psi, u)
        fd = gauss_rate_fd(psi, u, r, v, h=0.5)
        scale = np.abs(ref) + np.array([1e-9, 1e-6, 1e-10, 1e-10, 1e-10, 1e-10])
        assert np.all(np.abs(fd - ref) / scale < 1e-5)


# ---------------------------------------------------------------------------
# reference propagation
# ---------------------------------------------------------------------------


def test_propagate_circular_one_period():
    a = 7378.137
    T = 2 * math.pi * math.sqrt(a**3 / MU)
    psi = propagate_reference([0.4, a, 0, 0, 0.1, 0.0], T)
    assert psi.L - 0.4 == pytest.approx(2 * math.pi, abs=1e-6)


def test_propagate_zero_time_identity():
    psi0 = gto_state()
    assert np.array_equal(propagate_reference(psi0, 0.0).as_array(), psi0)


def test_propagate_geo_period():
    T = 2 * math.pi * math.sqrt(GEO**3 / MU)
    psi = propagate_reference([0.0, GEO, 0, 0, 0, 0], T)
    assert psi.L == pytest.approx(2 * math.pi, abs=1e-4)


def test_propagate_matches_ode_and_keeps_elements():
    from scipy.integrate import solve_ivp

    rng = np.random.default_rng(3)
    for _ in range(10):
        psi0 = random_psi(rng, e_max=0.75)
        rate = lambda t, L: [unforced_rate([L[0], *psi0[1:]])[0]]
        T = 2 * math.pi * math.sqrt((psi0[1] / (1 - psi0[2] ** 2 - psi0[3] ** 2)) ** 3 / MU)
        t = rng.uniform(0.1, 3.5) * T
        sol = solve_ivp(rate, (0, t), [psi0[0]], method="DOP853", rtol=1e-12, atol=1e-12)
        psi = propagate_reference(psi0, t)
        assert psi.L == pytest.approx(sol.y[0, -1], abs=1e-7)
        assert np.array_equal(psi.as_array()[1:], psi0[1:])


def test_propagate_backwards_is_inverse():
    psi0 = gto_state()
    fwd = propagate_reference(psi0, 12345.0)
    back = propagate_reference(fwd, -12345.0)
    assert back.L == pytest.approx(psi0[0], abs=1e-10)


# ---------------------------------------------------------------------------
# error coordinates
# ---------------------------------------------------------------------------


def test_error_coords_zero_at_reference():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        psi_r = random_psi(rng)
        assert np.all(to_error_coords(psi_r, psi_r) == 0.0)


def test_error_coords_hx_identity():
    psi_r = np.array([0.3, 9000.0, 0.01, -0.02, 0.1, 0.2])
    psi = psi_r.copy()
    psi[4] += 0.05
    x = to_error_coords(psi, psi_r)
    assert np.allclose(x, [0, 0, 0, 0, 0.05, 0], atol=1e-15)


def test_error_coords_double_semiparameter():
    psi_r = np.array([0.0, 7000.0, 0, 0, 0, 0])
    psi = psi_r.copy()
    psi[1] = 14000.0
    x = to_error_coords(psi, psi_r)
    # rho = 1/2, eccentricities zero: x3 = -(p - pr)/p = -1/2
    assert x[1] == pytest.approx(math.sqrt(2) - 1, rel=1e-15)
    assert x[2] == pytest.approx(-0.5, rel=1e-15)
    assert x[3] == 0.0


def test_error_coords_against_direct_evaluation():
    rng = np.random.default_rng(5)
    for _ in range(200):
        psi, psi_r = random_psi(rng), random_psi(rng)
        assert np.allclose(to_error_coords(psi, psi_r), error_coords(psi, psi_r), rtol=1e-13, atol=1e-13)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_error_coords_round_trip(seed):
    rng = np.random.default_rng(seed)
    psi, psi_r = random_psi(rng), random_psi(rng)
    back = from_error_coords(to_error_coords(psi, psi_r), psi_r).as_array()
    assert np.allclose(back, psi, rtol=1e-9, atol=1e-12)


def test_from_error_domain():
    with pytest.raises(DomainError):
        from_error_coords([0, -1.0, 0, 0, 0, 0], [0, 7000, 0, 0, 0, 0])
    with pytest.raises(DomainError):
        to_error_coords([0, -7000, 0, 0, 0, 0], [0, 7000, 0, 0, 0, 0])


# ---------------------------------------------------------------------------
# transformed dynamics
# ---------------------------------------------------------------------------


def test_error_dynamics_equilibrium():
    psi_r = random_psi(np.random.default_rng(6))
    assert np.all(error_dynamics(np.zeros(6), psi_r, [0, 0, 0]) == 0.0)


def test_error_dynamics_normal_thrust_equatorial():
    Lr = 0.9
    psi_r = np.array([Lr, 9000.0, 0.02, 0.01, 0.0, 0.0])
    uh = 1e-5
    xd = error_dynamics(np.zeros(6), psi_r, [0, 0, uh])
    G22 = coefficients(np.zeros(6), psi_r).G22
    assert xd[0] == 0.0
    assert xd[4] == pytest.approx(G22 * 0.5 * math.cos(Lr) * uh, rel=1e-14)
    assert xd[5] == pytest.approx(G22 * 0.5 * math.sin(Lr) * uh, rel=1e-14)


def test_error_dynamics_matches_raw_propagation():
    """Chain rule through the raw element dynamics, central differences in time."""
    rng = np.random.default_rng(7)
    h = 1.0
    for _ in range(100):
        psi_r = random_psi(rng, e_max=0.3, h_max=0.6)
        psi = psi_r + rng.normal(0, 1, 6) * [0.2, 300, 0.01, 0.01, 0.01, 0.01]
        u = rng.normal(0, 1e-5, 3)

        def state(t):
            def step(p, dt, uu):
                k1 = element_rate(p, uu)
                k2 = element_rate(p + 0.5 * dt * k1, uu)
                k3 = element_rate(p + 0.5 * dt * k2, uu)
                k4 = element_rate(p + dt * k3, uu)
                return p + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

            return to_error_coords(step(psi, t, u), step(psi_r, t, np.zeros(3)))

        fd = (state(h) - state(-h)) / (2 * h)
        x = to_error_coords(psi, psi_r)
        xd = error_dynamics(x, psi_r, u)
        assert np.allclose(xd, fd, rtol=1e-5, atol=1e-5 * np.max(np.abs(fd)))


def test_coefficients_singular():
    psi_r = np.array([0.0, 7000.0, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(SingularityError):
        coefficients([0, 0, -1.0, 0, 0, 0], psi_r)
    with pytest.raises(SingularityError):
        error_dynamics([0, 0, -1.0, 0, 0, 0], psi_r, [0, 0, 0])


def test_coefficients_g41():
    c = coefficients(np.zeros(6), [0, GEO, 0, 0, 0, 0])
    assert c.G41 == pytest.approx(math.sqrt(GEO / MU), rel=1e-15)
    assert c.G41 > 0


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------


def test_keplerian_circular_equatorial():
    psi = keplerian_to_equinoctial(KeplerianElements(8000.0, 0.0, 0.0, 1.0, 2.0, 0.5))
    assert psi.p == 8000.0
    assert psi.eX == 0 and psi.eY == 0 and psi.hX == 0 and psi.hY == 0


def test_keplerian_gto_semiparameter():
    psi = keplerian_to_equinoctial(
        KeplerianElements(24364, 0.7306, math.radians(63), math.radians(75), math.radians(52), 0.0)
    )
    assert psi.p == pytest.approx(11359.07, abs=0.01)


def test_keplerian_retrograde_equatorial_singular():
    with pytest.raises(SingularityError):
        keplerian_to_equinoctial(KeplerianElements(8000.0, 0.1, math.pi, 0, 0, 0))


@settings(max_examples=300)
@given(
    st.floats(6600, 60000), st.floats(1e-3, 0.95), st.floats(1e-3, math.pi - 1e-2),
    st.floats(0, 2 * math.pi - 1e-9), st.floats(0, 2 * math.pi - 1e-9), st.floats(0, 2 * math.pi - 1e-9),
)
def test_keplerian_round_trip(a, e, i, raan, argp, nu):
    kep = KeplerianElements(a, e, i, raan, argp, nu)
    back = equinoctial_to_keplerian(keplerian_to_equinoctial(kep))
    assert back.a == pytest.approx(a, rel=1e-9)
    assert back.e == pytest.approx(e, rel=1e-9, abs=1e-12)
    assert back.i == pytest.approx(i, rel=1e-9, abs=1e-12)
    for got, want in [(back.raan, raan), (back.argp, argp), (back.nu, nu)]:
        assert abs(math.remainder(got - want, 2 * math.pi)) < 1e-8


def test_cartesian_geo():
    c = equinoctial_to_cartesian([0, GEO, 0, 0, 0, 0])
    assert np.allclose(c.r, [GEO, 0, 0], atol=1e-9)
    assert np.allclose(c.v, [0, 3.0747, 0], atol=1e-3)


def test_cartesian_matches_rotation_oracle():
    rng = np.random.default_rng(8)
    for _ in range(200):
        kep = KeplerianElements(rng.uniform(6600, 50000), rng.uniform(0, 0.9), rng.uniform(0, 3.0),
                                *rng.uniform(0, 2 * math.pi, 3))
        r, v = kepler_to_cartesian(kep.a, kep.e, kep.i, kep.raan, kep.argp, kep.nu)
        c = equinoctial_to_cartesian(keplerian_to_equinoctial(kep))
        assert np.allclose(c.r, r, rtol=1e-11, atol=1e-8)
        assert np.allclose(c.v, v, rtol=1e-11, atol=1e-11)
        psi = cartesian_to_equinoctial(c.r, c.v)
        ref = keplerian_to_equinoctial(kep).as_array()
        assert abs(math.remainder(psi[0] - ref[0], 2 * math.pi)) < 1e-9
        assert np.allclose(psi[1:], ref[1:], rtol=1e-9, atol=1e-11)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_two_body_invariants(seed):
    rng = np.random.default_rng(seed)
    psi = random_psi(rng, e_max=0.95)
    c = equinoctial_to_cartesian(psi)
    h = np.linalg.norm(np.cross(c.r, c.v))
    assert h == pytest.approx(math.sqrt(MU * psi[1]), rel=1e-9)
    e2 = psi[2] ** 2 + psi[3] ** 2
    energy = 0.5 * c.v @ c.v - MU / np.linalg.norm(c.r)
    assert energy == pytest.approx(-MU * (1 - e2) / (2 * psi[1]), rel=1e-9)


def test_output_distance():
    psi_r = np.array([0.3, 8000.0, 0, 0, 0, 0])
    assert output_distance(np.zeros(6), psi_r) == 0.0
    y = output_distance([math.pi, 0, 0, 0, 0, 0], psi_r)
    assert y == pytest.approx(2 * 8000.0, rel=1e-6)
    with pytest.raises(DomainError):
        output_distance([0, -1.5, 0, 0, 0, 0], psi_r)


def test_output_distance_matches_cartesian():
    rng = np.random.default_rng(9)
    for _ in range(100):
        psi_r = random_psi(rng)
        psi = psi_r + rng.normal(0, 1, 6) * [0.1, 50, 1e-3, 1e-3, 1e-3, 1e-3]
        want = np.linalg.norm(equinoctial_to_cartesian(psi).r - equinoctial_to_cartesian(psi_r).r)
        got = output_distance(to_error_coords(psi, psi_r), psi_r)
        assert got == pytest.approx(want, rel=1e-7, abs=1e-9)
