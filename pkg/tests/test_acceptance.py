"""Acceptance criteria at their stated tolerances; one PASS/FAIL line per criterion."""

import time

import numpy as np
import pytest

from bosepair import errors, fock, hartree, pair
from bosepair.grid import Field, make_grid
from bosepair.hartree import HartreeState, Profile, gaussian_packet, scaled_potential
from bosepair.kernels import Kernel, compose, double_angle, random_symmetric, sh_ch_of


def canonical_state(T_grid=64):
    g = make_grid(1, T_grid, 64.0)
    pot = scaled_potential(Profile("gaussian", 5.0, 0.1), g, 64, 0.2)
    return HartreeState(gaussian_packet(g, 0.0, 0.0, 2.0, 1.0), 0.0, pot)


def test_criterion_01_conservation(acceptance_report):
    g = make_grid(1, 256, 40.0)
    pot = scaled_potential(Profile("gaussian", 2.0, 1.0), g, 64, 0.2)
    state = HartreeState(gaussian_packet(g, 0.0, 1.0, 1.0, 1.0), 0.0, pot)
    t0 = time.perf_counter()
    first = hartree.conserved_quantities(state)
    drift = {"mass": 0.0, "energy": 0.0, "momentum": 0.0}
    for _ in range(50):
        state = hartree.evolve(state, 1e-3, 1000)
        q = hartree.conserved_quantities(state)
        drift["mass"] = max(drift["mass"], abs(q["mass"] - first["mass"]))
        drift["energy"] = max(drift["energy"], abs(q["energy"] - first["energy"]))
        drift["momentum"] = max(drift["momentum"], float(np.max(np.abs(
            np.asarray(q["momentum"]) - np.asarray(first["momentum"])))))
    wall = time.perf_counter() - t0
    ok = drift["mass"] < 1e-10 and drift["energy"] < 1e-6 and drift["momentum"] < 1e-8 and wall < 60
    assert acceptance_report(1, ok, f"mass {drift['mass']:.2e} energy {drift['energy']:.2e} "
                             f"momentum {drift['momentum']:.2e} ({wall:.1f} s)")


def test_criterion_02_free_dispersion(acceptance_report):
    g = make_grid(1, 1024, 200.0)
    pot = scaled_potential(Profile("gaussian", 1.0, 0.0), g, 1, 0.0)
    state = HartreeState(gaussian_packet(g, 0.0, 0.0, 0.5, 1.0), 0.0, pot)
    t0 = time.perf_counter()
    series = []
    for i in range(1, 21):
        state = hartree.evolve(state, 0.01, 50)
        if state.t >= 1.0 - 1e-12:
            series.append((state.t, hartree.sup_norm(state)))
    slope = hartree.decay_fit(series)
    wall = time.perf_counter() - t0
    ok = abs(slope + 0.5) <= 0.05 and wall < 60
    assert acceptance_report(2, ok, f"sup-norm decay exponent {slope:.4f} (target -0.5 +- 0.05, {wall:.1f} s)")


def test_criterion_03_trig_identities(acceptance_report):
    rng = np.random.default_rng(3)
    g = make_grid(1, 32, 16.0)
    I = np.eye(32)
    worst = {"ch ch - shb sh": 0.0, "ch(2k)": 0.0, "sh(2k)": 0.0}
    t0 = time.perf_counter()
    for _ in range(50):
        k = random_symmetric(rng, g, scale=float(rng.uniform(0.1, 1.0)))
        sh, ch = sh_ch_of(k)
        S, C = sh.op, ch.op
        sh2, ch2 = sh_ch_of(Kernel(2 * k.values, g, kind="symmetric"))
        worst["ch ch - shb sh"] = max(worst["ch ch - shb sh"], np.abs(C @ C - S.conj() @ S - I).max())
        worst["ch(2k)"] = max(worst["ch(2k)"], np.abs(ch2.op - (2 * S.conj() @ S + I)).max())
        a = 2 * compose(sh, ch).op
        b = 2 * compose(ch.conj(), sh).op
        worst["sh(2k)"] = max(worst["sh(2k)"], np.abs(sh2.op - a).max(), np.abs(sh2.op - b).max())
        s2, p2 = double_angle(sh, ch)
        worst["sh(2k)"] = max(worst["sh(2k)"], np.abs(s2.op - sh2.op).max())
    wall = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-10 and wall < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert acceptance_report(3, ok, f"{detail} ({wall:.1f} s)")


def test_criterion_04_lie_isomorphism(acceptance_report):
    rng = np.random.default_rng(4)
    space = fock.TruncatedFock(3, 6)
    t0 = time.perf_counter()
    worst = max(fock.check_isomorphism(space, fock.SymplecticBlock.random(rng, 3),
                                       fock.SymplecticBlock.random(rng, 3)) for _ in range(20))
    wall = time.perf_counter() - t0
    ok = worst < 1e-9 and wall < 60
    assert acceptance_report(4, ok, f"max commutator residual {worst:.2e} over 20 pairs ({wall:.1f} s)")


def test_criterion_05_bogoliubov(acceptance_report):
    out = fock.bogoliubov(np.array([[0.2]]), 20)
    ok = out["residual"] < 1e-8
    assert acceptance_report(5, ok, f"conjugation residual {out['residual']:.2e} "
                             f"(unitarity {out['unitarity']:.1e})")


@pytest.fixture(scope="module")
def canonical_run():
    t0 = time.perf_counter()
    res = pair.run_pair(canonical_state(), 0.01, 10.0, sample_every=50, trace_every=100)
    return res, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_06_form_equivalence(acceptance_report, canonical_run):
    res, wall = canonical_run
    forms = max(res.max_form_residuals.values())
    ok = forms < 1e-6 and res.max_identity_residual < 1e-6 and wall < 600
    assert acceptance_report(6, ok, f"form residual {forms:.2e}, identity residual "
                             f"{res.max_identity_residual:.2e} ({wall:.1f} s)")


@pytest.mark.slow
def test_criterion_07_log_growth(acceptance_report):
    res = pair.run_pair(canonical_state(), 0.01, 20.0, sample_every=50, forms=False)
    series = [(r["t"], r["hs_norm_s2"], r["hs_norm_p2"]) for r in res.rows]
    fit = pair.growth_report(series)
    ok = fit.verdict == "pass"
    assert acceptance_report(7, ok, f"verdict {fit.verdict}: log SSE {fit.log_sse:.2e}, power SSE "
                             f"{fit.power_sse:.2e}, power exponent {fit.power_exponent:.2f}")


@pytest.mark.slow
def test_criterion_08_trace_relation(acceptance_report, canonical_run):
    res, _ = canonical_run
    resid = max(c["residual"] for _, c in res.trace_checks)
    diag = min(c["min_diag_p1"] for _, c in res.trace_checks)
    ok = resid < 1e-8 and diag > -1e-8
    assert acceptance_report(8, ok, f"trace residual {resid:.2e}, min p1 diagonal {diag:.2e} "
                             f"over {len(res.trace_checks)} samples")


def test_criterion_09_error_oracle(acceptance_report):
    rng = np.random.default_rng(9)
    g = make_grid(1, 8, 4.0)
    sites = [0, 1, 2]
    k = np.zeros((8, 8), complex)
    kk = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))) * 0.05
    k[np.ix_(sites, sites)] = kk + kk.T
    phi = np.zeros(8, complex)
    phi[sites] = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    v = Field(g, np.exp(-g.radius() ** 2))
    out = errors.mode_projected_check(Kernel(k, g, kind="symmetric"), Field(g, phi), v, 7.0, sites, n_max=14)
    ok = out["difference"] < 1e-6
    assert acceptance_report(9, ok, f"grid {out['grid_total']:.8f} vs dense {out['dense_total']:.8f}, "
                             f"difference {out['difference']:.2e}")


@pytest.mark.slow
def test_criterion_10_scaling(acceptance_report):
    t0 = time.perf_counter()
    parts = []
    ok = True
    for beta in (0.0, 0.2):
        study = errors.scaling_study(beta, [16, 32, 64, 128], 10.0)
        for part in ("cubic", "quartic"):
            slope = study["fits"][part]["slope"]
            pred = study["predicted"][part]
            ok &= abs(slope - pred) <= 0.1
            parts.append(f"beta={beta:g} {part} {slope:.3f} (pred {pred:.2f})")
    wall = time.perf_counter() - t0
    ok &= wall < 1800
    assert acceptance_report(10, ok, "; ".join(parts) + f" ({wall:.0f} s)")


@pytest.mark.slow
def test_criterion_11_block_refinement(acceptance_report):
    out = fock.block_refinement_study(canonical_state(), modes=2)
    orders = out["orders"]
    residuals = [r["residual"] for r in out["runs"]]
    ok = all(abs(p - 2.0) < 0.2 for p in orders) and all(np.diff(residuals) < 0)
    assert acceptance_report(11, ok, "residuals " + ", ".join(f"{r:.2e}" for r in residuals)
                             + "; orders " + ", ".join(f"{p:.3f}" for p in orders))
