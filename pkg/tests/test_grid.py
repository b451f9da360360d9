import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bosepair.grid import (Field, GridError, convolve, field_from_bytes, field_to_bytes, fft_forward,
                           fft_inverse, l2, lp, make_grid, read_field, sobolev, sup, write_field)


def test_coordinates_fft_order():
    g = make_grid(1, 8, 4.0)
    assert g.axis_coords[0] == 0.0
    assert np.isclose(g.axis_coords.min(), -2.0)
    assert np.isclose(g.dx, 0.5)
    assert make_grid(2, 8, 4.0).dx == pytest.approx(0.25)


@pytest.mark.parametrize("args", [(4, 8, 1.0), (1, 12, 1.0), (1, 4, 1.0), (1, 8, 0.0), (1, 8, -1.0)])
def test_make_grid_rejects(args):
    with pytest.raises(GridError):
        make_grid(*args)


def test_field_size_checked():
    with pytest.raises(GridError):
        Field(make_grid(1, 8, 1.0), np.zeros(7))


def test_gradient_symbol_zeroes_nyquist():
    g = make_grid(1, 8, 2 * np.pi)
    sym = g.gradient_symbols()[0]
    assert sym[4] == 0
    assert sym[1] == pytest.approx(1j)


def test_convolution_matches_direct_sum(rng):
    g = make_grid(1, 16, 5.0)
    v = Field(g, rng.standard_normal(16))
    f = Field(g, rng.standard_normal(16) + 1j * rng.standard_normal(16))
    direct = np.array([sum(v.values[(i - j) % 16] * f.values[j] for j in range(16)) for i in range(16)]) * g.dx
    assert np.allclose(convolve(v, f).values, direct, atol=1e-12)


def test_norm_examples():
    g = make_grid(1, 16, 4.0)
    one = Field(g, np.ones(16))
    assert l2(one) == pytest.approx(2.0)
    assert lp(one, 4) == pytest.approx(4.0**0.25)
    assert sup(one) == 1.0
    assert sobolev(one, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        lp(one, 0.5)


def test_plane_wave_sobolev():
    g = make_grid(1, 32, 2 * np.pi)
    f = Field.from_function(g, lambda x: np.exp(3j * x))
    assert sobolev(f, 1.0) == pytest.approx(np.sqrt(10.0) * l2(f))


@given(st.integers(0, 2**32 - 1))
def test_fft_roundtrip_and_parseval(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(2, 8, 3.0)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    F = fft_forward(f)
    assert np.allclose(fft_inverse(F).values, f.values, atol=1e-12)
    assert np.isclose(np.linalg.norm(F.values), np.linalg.norm(f.values))


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_field_serialization_roundtrip(seed, dim):
    rng = np.random.default_rng(seed)
    g = make_grid(dim, 8, 1.5)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    back = field_from_bytes(field_to_bytes(f))
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_read_field_bad_header():
    with pytest.raises(GridError):
        read_field(io.BytesIO(b"1 8\n"))
    buf = io.BytesIO()
    write_field(Field.zeros(make_grid(1, 8, 1.0)), buf)
    with pytest.raises(GridError):
        read_field(io.BytesIO(buf.getvalue()[:-8]))
