import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosepair import pair
from bosepair.grid import make_grid
from bosepair.hartree import HartreeState, Profile, gaussian_packet, scaled_potential
from bosepair.kernels import (Kernel, SymmetryError, compose, double_angle, invert_ch,
                              random_symmetric, sh_ch_of)


def _h0(n=16, L=16.0, height=0.1, N=16, beta=0.2, width=4.0):
    g = make_grid(1, n, L)
    pot = scaled_potential(Profile("gaussian", width, height), g, N, beta)
    return HartreeState(gaussian_packet(g, 0.0, 0.0, 2.0, 1.0), 0.0, pot)


def test_m_is_symmetric_and_matches_definition():
    h = _h0()
    m = pair.build_m(h.phi, h.potential.scaled)
    f = h.phi.flat()
    V = h.potential.pair_matrix()
    assert np.allclose(m.values, -V * np.outer(f, f))
    assert m.symmetry_residual() == 0


def test_apply_S_W_preserve_class(rng):
    h = _h0()
    g = pair.build_g(h.phi, h.potential.scaled)
    s = random_symmetric(rng, h.grid)
    assert pair.apply_S(s, g).symmetry_residual() < 1e-12
    p = Kernel(s.values @ s.values.conj().T, h.grid)
    assert (pair.apply_W(p, g) * 1j).hermitian_residual() < 1e-12
    with pytest.raises(SymmetryError):
        pair.apply_S(Kernel(rng.standard_normal((16, 16)), h.grid), g)
    with pytest.raises(SymmetryError):
        pair.apply_W(Kernel(rng.standard_normal((16, 16)) * 1j, h.grid), g)


def test_free_flow_matches_laplacian_generator(rng):
    # d/dh U X U at h=0 equals -i(Lap_x + Lap_y) acting as k^2 multipliers
    h = _h0()
    X = random_symmetric(rng, h.grid).op
    eps = 1e-6
    d = (pair.free_flow(X, h.grid, eps, "S") - pair.free_flow(X, h.grid, -eps, "S")) / (2 * eps)
    assert np.allclose(d, -1j * pair.laplacian_both(X, h.grid, +1), atol=1e-6)


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.5))
def test_change_of_variables(seed, scale):
    g = make_grid(1, 16, 6.0)
    k = random_symmetric(np.random.default_rng(seed), g, scale=scale)
    sh, ch = sh_ch_of(k)
    s2, _ = double_angle(sh, ch)
    z = pair.zeta_from_s2(s2)
    assert np.max(np.abs(z.op - compose(invert_ch(ch.conj()), sh).op)) < 1e-10
    assert np.max(np.abs(pair.r_from_zeta(z).op - compose(sh, sh.conj()).op)) < 1e-10


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 2.0))
def test_trace_relation_property(seed, scale):
    g = make_grid(1, 16, 6.0)
    sh, ch = sh_ch_of(random_symmetric(np.random.default_rng(seed), g, scale=scale))
    s2, _ = double_angle(sh, ch)
    tr = pair.trace_relation(s2)
    assert tr["residual"] < 1e-8 * max(1.0, abs(tr["rhs"]))
    assert tr["min_diag_p1"] > -1e-8


def test_short_run_residuals():
    res = pair.run_pair(_h0(), 0.01, 0.3, sample_every=10)
    assert res.max_identity_residual < 1e-10
    assert max(res.max_form_residuals.values()) < 1e-10
    assert len(res.rows) == 4


def test_zero_time_gives_initial_row_only():
    res = pair.run_pair(_h0(), 0.01, 0.0)
    assert len(res.rows) == 1 and res.rows[0]["hs_norm_s2"] == 0.0


def test_run_pair_validation():
    with pytest.raises(ValueError):
        pair.run_pair(_h0(), 0.03, 0.1)
    with pytest.raises(ValueError):
        pair.step_pair(pair.PairState.initial(_h0()), 0.0)


def test_weak_coupling_matches_duhamel():
    # to first order in m, s2 is the Duhamel integral of 2m under the free flow
    h = _h0(height=1e-4)
    hist = []
    res = pair.run_pair(h, 0.01, 0.5, sample_every=1, forms=False,
                        callback=lambda st, row: hist.append((st.t, st)))
    m_hist = [(0.0, pair.build_m(h.phi, h.potential.scaled))]
    m_hist += [(t, pair.build_m(s.hartree.phi, h.potential.scaled)) for t, s in hist]
    sa = pair.duhamel_sa(m_hist)
    s2 = res.final.s2
    rel = np.linalg.norm(s2.values - sa.values) / np.linalg.norm(s2.values)
    assert rel < 1e-3


def test_duhamel_validation():
    g = make_grid(1, 8, 4.0)
    m = Kernel(np.zeros((8, 8)), g)
    with pytest.raises(ValueError):
        pair.duhamel_sa([(0.0, m)])
    with pytest.raises(ValueError):
        pair.duhamel_sa([(0.1, m), (0.2, m)])


def test_duhamel_constant_source_oracle(rng):
    # constant m: s(t) = 2 (1 - e^{-i lam t}) / lam * m-hat, in Fourier space
    g = make_grid(1, 8, 4.0)
    m = random_symmetric(rng, g, scale=0.1)
    sa = pair.duhamel_sa([(0.0, m), (0.3, m), (0.7, m)])
    k2 = g.k_squared()
    lam = k2[:, None] + k2[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(lam > 0, 2 * (1 - np.exp(-1j * lam * 0.7)) / np.where(lam > 0, lam, 1), 2j * 0.7)
    ref = np.fft.ifftn(w * np.fft.fftn(m.op))
    assert np.allclose(sa.op, ref, atol=1e-12)


def test_growth_report_verdicts():
    t = np.linspace(0, 20, 60)
    log_series = [(ti, np.log1p(ti), 0.1 * np.log1p(ti)) for ti in t]
    assert pair.growth_report(log_series).verdict == "pass"
    lin = [(ti, ti, 0.0) for ti in t]
    assert pair.growth_report(lin).verdict == "fail"
    with pytest.raises(ValueError):
        pair.growth_report(lin[:5])


@settings(max_examples=10)
@given(st.floats(0.01, 0.3), st.floats(0.5, 2.0))
def test_pair_identity_property(height, width):
    g = make_grid(1, 16, 16.0)
    pot = scaled_potential(Profile("gaussian", 4.0, height), g, 8, 0.2)
    h = HartreeState(gaussian_packet(g, 0.0, 0.0, width, 1.0), 0.0, pot)
    res = pair.run_pair(h, 0.02, 0.2, sample_every=5, forms=False)
    assert res.max_identity_residual < 1e-10
    assert res.final.s2.symmetry_residual() < 1e-12
