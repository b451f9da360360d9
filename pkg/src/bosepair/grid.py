"""Periodic box discretization, unitary FFTs, quadrature and norms.

Fields are stored in FFT order: along each axis the coordinates are
``box_length * fftfreq(n)``, so index 0 is the origin and the grid covers
``[-L/2, L/2)``.  This makes periodic convolution a plain circular one.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "make_grid",
    "fft_forward",
    "fft_inverse",
    "convolve",
    "l2",
    "lp",
    "sup",
    "sobolev",
    "write_field",
    "read_field",
]


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    n_per_axis: int
    box_length: float

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def dx(self) -> float:
        """Cell volume."""
        return self.spacing**self.dim

    @property
    def size(self) -> int:
        return self.n_per_axis**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis spectral frequencies 2*pi*j/L in FFT order."""
        n = self.n_per_axis
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.box_length / n)

    @property
    def axis_coords(self) -> np.ndarray:
        return self.box_length * np.fft.fftfreq(self.n_per_axis)

    def coords(self) -> list[np.ndarray]:
        """Coordinate arrays (one per axis), each of shape ``self.shape``."""
        x = self.axis_coords
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords()))

    def k_vectors(self) -> list[np.ndarray]:
        k = self.wavenumbers
        return list(np.meshgrid(*([k] * self.dim), indexing="ij"))

    def k_squared(self) -> np.ndarray:
        return sum(kk**2 for kk in self.k_vectors())

    def gradient_symbols(self) -> list[np.ndarray]:
        """i*k_j with the unpaired Nyquist frequency zeroed (keeps real fields real)."""
        n = self.n_per_axis
        k = self.wavenumbers.copy()
        k[n // 2] = 0.0
        ks = np.meshgrid(*([k] * self.dim), indexing="ij")
        return [1j * kk for kk in ks]

    def header(self) -> str:
        return f"{self.dim} {self.n_per_axis} {self.box_length!r}"


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def make_grid(dim: int, n_per_axis: int, box_length: float) -> Grid:
    if dim not in (1, 2, 3):
        raise GridError(f"dim must be 1, 2 or 3, got {dim}")
    if int(n_per_axis) != n_per_axis or n_per_axis < 8 or not _is_power_of_two(int(n_per_axis)):
        raise GridError(f"n_per_axis must be a power of two >= 8, got {n_per_axis}")
    if not box_length > 0:
        raise GridError(f"box_length must be positive, got {box_length}")
    return Grid(int(dim), int(n_per_axis), float(box_length))


@dataclass
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.size != self.grid.size:
            raise GridError(f"field has {vals.size} values, grid needs {self.grid.size}")
        self.values = vals.reshape(self.grid.shape)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, func(*grid.coords()))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __add__(self, other: "Field") -> "Field":
        _check_same(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c) -> "Field":
        if isinstance(c, Field):
            _check_same(self.grid, c.grid)
            return Field(self.grid, self.values * c.values)
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def conj(self) -> "Field":
        return Field(self.grid, self.values.conj())


def _check_same(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridError(f"grid mismatch: {a} vs {b}")


def fft_forward(f: Field) -> Field:
    return Field(f.grid, np.fft.fftn(f.values, norm="ortho"))


def fft_inverse(f: Field) -> Field:
    return Field(f.grid, np.fft.ifftn(f.values, norm="ortho"))


def convolve(v: Field, f: Field) -> Field:
    """Periodic convolution ``sum_y v(x - y) f(y) dx``, evaluated spectrally."""
    _check_same(v.grid, f.grid)
    out = np.fft.ifftn(np.fft.fftn(v.values) * np.fft.fftn(f.values)) * f.grid.dx
    return Field(f.grid, out)


def l2(f: Field) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.dx))


def lp(f: Field, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    if np.isinf(p):
        return sup(f)
    return float((np.sum(np.abs(f.values) ** p) * f.grid.dx) ** (1.0 / p))


def sup(f: Field) -> float:
    return float(np.max(np.abs(f.values)))


def sobolev(f: Field, s: float) -> float:
    """H^s norm through the multiplier (1 + |xi|^2)^(s/2)."""
    if s < 0:
        raise ValueError("s must be >= 0")
    fhat = np.fft.fftn(f.values, norm="ortho")
    weight = (1.0 + f.grid.k_squared()) ** s
    return float(np.sqrt(np.sum(weight * np.abs(fhat) ** 2) * f.grid.dx))


def _encode_complex(values: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(values.reshape(-1), dtype=np.complex128)
    return flat.view(np.float64).astype("<f8").tobytes()


def _decode_complex(raw: bytes, count: int) -> np.ndarray:
    arr = np.frombuffer(raw, dtype="<f8")
    if arr.size != 2 * count:
        raise GridError(f"expected {2 * count} float64 values, found {arr.size}")
    return arr.astype(np.float64).view(np.complex128).copy()


def write_field(f: Field, stream) -> None:
    """Header line ``dim n box_length`` followed by little-endian (re, im) pairs."""
    stream.write((f.grid.header() + "\n").encode("ascii"))
    stream.write(_encode_complex(f.values))


def read_field(stream) -> Field:
    header = stream.readline().decode("ascii").split()
    if len(header) != 3:
        raise GridError(f"bad field header: {header!r}")
    grid = make_grid(int(header[0]), int(header[1]), float(header[2]))
    values = _decode_complex(stream.read(), grid.size)
    return Field(grid, values)


def field_to_bytes(f: Field) -> bytes:
    buf = io.BytesIO()
    write_field(f, buf)
    return buf.getvalue()


def field_from_bytes(raw: bytes) -> Field:
    return read_field(io.BytesIO(raw))
