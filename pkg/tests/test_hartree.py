import numpy as np
import pytest
from hypothesis import given, strategies as st

from bosepair import hartree
from bosepair.grid import Field, make_grid
from bosepair.hartree import (HartreeState, Profile, UnderResolvedError, conserved_quantities,
                              decay_fit, evolve, gaussian_packet, morawetz_Q, scaled_potential, step)


def _state(n=64, L=20.0, N=16, beta=0.2, width=2.0, height=1.0, k0=0.0, norm=1.0):
    g = make_grid(1, n, L)
    pot = scaled_potential(Profile("gaussian", width, height), g, N, beta)
    return HartreeState(gaussian_packet(g, 0.0, k0, 1.0, norm), 0.0, pot)


def test_profile_integrals_match_quadrature():
    g = make_grid(1, 1024, 40.0)
    for kind in ("box", "triangle", "gaussian"):
        p = Profile(kind, 2.0, 1.5)
        assert np.sum(p(g.radius())) * g.dx == pytest.approx(p.integral(1), rel=2e-2)


def test_scaled_potential_beta0_is_unscaled_copy():
    g = make_grid(1, 64, 20.0)
    pot = scaled_potential(Profile("gaussian", 2.0, 1.0), g, 100, 0.0)
    assert np.array_equal(pot.scaled.values, pot.sampled.values)
    assert pot.scaled is not pot.sampled


def test_scaled_potential_keeps_integral():
    g = make_grid(1, 512, 40.0)
    p = Profile("gaussian", 2.0, 1.0)
    base = scaled_potential(p, g, 1, 0.0).integral()
    for N in (4, 16, 64):
        assert scaled_potential(p, g, N, 0.3).integral() == pytest.approx(base, rel=1e-8)


def test_scaled_potential_rejects_under_resolved():
    g = make_grid(1, 16, 16.0)
    with pytest.raises(UnderResolvedError):
        scaled_potential(Profile("box", 4.0, 1.0), g, 10**6, 0.5)
    with pytest.raises(ValueError):
        scaled_potential(Profile("box", 4.0, 1.0), g, 4, 1.5)


def test_profile_validation():
    with pytest.raises(ValueError):
        Profile("cone", 1.0, 1.0)
    with pytest.raises(ValueError):
        Profile("box", -1.0, 1.0)
    g = make_grid(1, 16, 4.0)
    with pytest.raises(ValueError):
        hartree.check_profile_field(Field(g, g.radius()))  # increasing


def test_free_plane_wave_phase():
    g = make_grid(1, 32, 2 * np.pi)
    pot = scaled_potential(Profile("gaussian", 1.0, 0.0), g, 1, 0.0)
    phi = Field.from_function(g, lambda x: np.exp(2j * x))
    out = evolve(HartreeState(phi, 0.0, pot), 0.05, 20)
    assert np.allclose(out.phi.values, phi.values * np.exp(-4j * 1.0), atol=1e-12)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step(_state(), 0.0)


def test_golden_energy_and_value():
    # frozen from a reference run of this implementation
    g = make_grid(1, 16, 8.0)
    phi = gaussian_packet(g, 0.5, 1.0, 1.0, 1.0)
    pot = scaled_potential(Profile("gaussian", 2.0, 1.0), g, 8, 0.2)
    st_ = evolve(HartreeState(phi, 0.0, pot), 0.01, 100)
    assert conserved_quantities(st_)["energy"] == pytest.approx(2.0170407911812585, rel=1e-12)
    assert st_.phi.values[3] == pytest.approx(0.33026366346201375 - 0.2832541103313987j, abs=1e-12)


@given(st.floats(-2, 2), st.floats(0.5, 3.0), st.sampled_from(["box", "gaussian", "triangle"]))
def test_mass_conserved_property(k0, norm, kind):
    g = make_grid(1, 64, 20.0)
    pot = scaled_potential(Profile(kind, 3.0, 1.0), g, 8, 0.2)
    s0 = HartreeState(gaussian_packet(g, 0.0, k0, 1.5, norm), 0.0, pot)
    s1 = evolve(s0, 0.01, 30)
    assert conserved_quantities(s1)["mass"] == pytest.approx(conserved_quantities(s0)["mass"], rel=1e-12)


@given(st.floats(-1.5, 1.5))
def test_momentum_conserved_property(k0):
    s0 = _state(k0=k0)
    s1 = evolve(s0, 0.005, 40)
    p0 = conserved_quantities(s0)["momentum"][0]
    p1 = conserved_quantities(s1)["momentum"][0]
    assert abs(p1 - p0) < 1e-10


def test_mass_convention_is_half_l2():
    s = _state(norm=2.0)
    assert conserved_quantities(s)["mass"] == pytest.approx(2.0)


def test_morawetz_matches_brute_force():
    s = evolve(_state(n=32, width=3.0, k0=1.0), 0.01, 10)
    g = s.grid
    rho = 0.5 * np.abs(s.phi.values) ** 2
    divp = hartree.momentum_density_divergence(s.phi)
    x = g.axis_coords
    d = x[:, None] - x[None, :]
    d = np.abs(d - g.box_length * np.floor(d / g.box_length + 0.5))
    Q = 2.0 * divp @ d @ rho * g.dx**2
    assert morawetz_Q(s) == pytest.approx(Q, rel=1e-12)


def test_morawetz_guard():
    with pytest.raises(hartree.ResourceGuardError):
        morawetz_Q(_state(n=64), budget=100)


def test_morawetz_increases_for_moving_packet():
    s = _state(n=128, L=60.0, k0=1.0)
    qs = []
    for _ in range(5):
        qs.append(morawetz_Q(s))
        s = evolve(s, 0.01, 50)
    assert np.all(np.diff(qs) > 0)


def test_decay_fit_validation():
    with pytest.raises(ValueError):
        decay_fit([(1.0, 1.0)] * 3)
    series = [(t, t**-0.5) for t in np.linspace(0.5, 5, 12)]
    with pytest.raises(ValueError):
        decay_fit(series)
    series = [(t, t**-0.5) for t in np.linspace(1, 5, 12)]
    assert decay_fit(series) == pytest.approx(-0.5)
    bumpy = [(t, 1.0 + (t > 3)) for t in np.linspace(1, 5, 12)]
    with pytest.raises(ValueError):
        decay_fit(bumpy)
