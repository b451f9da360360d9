import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from bosepair.grid import make_grid
from bosepair.kernels import (DiagonalPlusKernel, DivergentTrace, IllConditionedError, Kernel,
                              SeriesDivergenceError, SymmetryError, compose, double_angle, hs_norm,
                              invert_ch, kernel_from_bytes, kernel_to_bytes, random_symmetric,
                              read_kernel, recover_k, sh_ch_of, trace)

GRID = make_grid(1, 16, 6.0)


def _expm_blocks(k: Kernel):
    A = k.op
    n = A.shape[0]
    E = expm(np.block([[np.zeros((n, n)), A.conj()], [A, np.zeros((n, n))]]))
    return E[:n, :n], E[n:, :n]  # ch, sh in operator form


seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.floats(0.01, 3.0))
def test_sh_ch_match_matrix_exponential(seed, scale):
    k = random_symmetric(np.random.default_rng(seed), GRID, scale=scale)
    sh, ch = sh_ch_of(k)
    ch_ref, sh_ref = _expm_blocks(k)
    tol = 1e-12 * max(1.0, np.abs(ch_ref).max())
    assert np.max(np.abs(sh.op - sh_ref)) < tol
    assert np.max(np.abs(ch.op - ch_ref)) < tol


def test_series_without_rescale_diverges_gracefully():
    k = random_symmetric(np.random.default_rng(1), GRID, scale=8.0)
    with pytest.raises(SeriesDivergenceError):
        sh_ch_of(k, rescale=False, max_terms=5)


def test_scalar_oracle():
    k = Kernel(np.array([[0.7]]), None, 1.0, kind="symmetric")
    sh, ch = sh_ch_of(k)
    assert sh.values[0, 0] == pytest.approx(np.sinh(0.7))
    assert ch.op[0, 0] == pytest.approx(np.cosh(0.7))


def test_golden_sh_ch_values():
    # frozen from a reference evaluation
    k = random_symmetric(np.random.default_rng(2024), make_grid(1, 16, 8.0), scale=0.4)
    sh, ch = sh_ch_of(k)
    assert sh.values[0, 0] == pytest.approx(0.10755138117884232 + 0.15681715182502418j, abs=1e-13)
    assert ch.kernel_part.values[1, 0] == pytest.approx(-0.0012255141438289943 - 0.00318830372376841j,
                                                        abs=1e-13)


@given(seeds, st.floats(0.01, 2.0))
def test_trig_identities(seed, scale):
    k = random_symmetric(np.random.default_rng(seed), GRID, scale=scale)
    sh, ch = sh_ch_of(k)
    ident = compose(ch, ch) - compose(sh.conj(), sh)
    assert abs(ident.delta_coefficient - 1) < 1e-12
    assert np.max(np.abs(ident.kernel_part.op)) < 1e-10
    sh2, ch2 = sh_ch_of(k * 2.0)
    s2, p2 = double_angle(sh, ch)
    assert np.max(np.abs(s2.op - sh2.op)) < 1e-10
    assert np.max(np.abs(p2.op - ch2.kernel_part.op)) < 1e-10
    assert np.max(np.abs((2.0 * compose(ch.conj(), sh)).op - s2.op)) < 1e-10


@given(seeds, st.floats(0.01, 2.5))
def test_recover_k_inverts_sh(seed, scale):
    k = random_symmetric(np.random.default_rng(seed), GRID, scale=scale)
    sh, _ = sh_ch_of(k)
    assert np.max(np.abs(recover_k(sh).op - k.op)) < 1e-9


def test_recover_k_rejects_asymmetric(rng):
    A = Kernel(rng.standard_normal((16, 16)), GRID)
    with pytest.raises(SymmetryError):
        recover_k(A)


def test_double_angle_rejects_fake_pair(rng):
    sh = random_symmetric(rng, GRID, scale=0.5)
    fake = DiagonalPlusKernel(1.0, Kernel(rng.standard_normal((16, 16)), GRID))
    with pytest.raises(SymmetryError):
        double_angle(sh, fake)


def test_delta_ring_rules(rng):
    p = Kernel(rng.standard_normal((16, 16)), GRID)
    q = Kernel(rng.standard_normal((16, 16)), GRID)
    a = DiagonalPlusKernel(2.0, p)
    b = DiagonalPlusKernel(3.0, q)
    assert np.allclose(compose(a, b).op, a.op @ b.op)
    assert np.allclose(compose(a, q).op, a.op @ q.op)
    assert np.allclose(compose(q, a).op, q.op @ a.op)
    ident = DiagonalPlusKernel.identity_like(p)
    assert np.allclose(compose(ident, p).values, p.values)


def test_trace_and_hs_norm_with_delta(rng):
    p = Kernel(rng.standard_normal((16, 16)), GRID)
    d = DiagonalPlusKernel(1.0, p)
    tr = trace(d)
    assert isinstance(tr, DivergentTrace)
    with pytest.raises(Exception):
        float(tr)
    assert hs_norm(d) == np.inf
    assert trace(p) == pytest.approx(np.trace(p.values) * GRID.dx)
    assert hs_norm(DiagonalPlusKernel(0.0, p)) == pytest.approx(hs_norm(p))


@given(seeds, st.floats(0.01, 1.5))
def test_invert_ch(seed, scale):
    _, ch = sh_ch_of(random_symmetric(np.random.default_rng(seed), GRID, scale=scale))
    inv = invert_ch(ch)
    assert np.max(np.abs(compose(inv, ch).op - np.eye(16))) < 1e-10


def test_invert_ch_ill_conditioned():
    p = Kernel(-np.eye(16) / GRID.dx, GRID)
    with pytest.raises(IllConditionedError):
        invert_ch(DiagonalPlusKernel(1.0, p))


def test_classification(rng):
    k = random_symmetric(rng, GRID)
    assert k.classify() == "symmetric"
    H = Kernel(k.values + k.values.conj().T, GRID)
    assert H.classify() in ("conjugate-symmetric", "symmetric")
    assert Kernel(rng.standard_normal((16, 16)) + 1j, GRID).classify() == "general"


@given(seeds)
def test_kernel_serialization_roundtrip(seed):
    k = random_symmetric(np.random.default_rng(seed), GRID)
    back = kernel_from_bytes(kernel_to_bytes(k))
    assert back.grid == GRID and back.kind == "symmetric"
    assert np.array_equal(back.values, k.values)


def test_read_kernel_bad_header():
    with pytest.raises(ValueError):
        read_kernel(io.BytesIO(b"1 16 6.0 weird\n"))


def test_grid_mismatch(rng):
    other = random_symmetric(rng, make_grid(1, 16, 7.0))
    with pytest.raises(ValueError):
        compose(random_symmetric(rng, GRID), other)
