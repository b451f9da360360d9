"""Two-point kernels on the grid and their operator calculus.

A kernel k(x, y) is stored by its values on grid points together with the
quadrature weight ``dx``; composition is ``(k o l)(x, z) = sum_y k(x,y) l(y,z) dx``,
i.e. the matrix product of the "operator forms" ``values * dx``.  The Dirac
delta is never put on the grid: ``DiagonalPlusKernel`` keeps it symbolic.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridError, make_grid, _decode_complex, _encode_complex

__all__ = [
    "Kernel",
    "DiagonalPlusKernel",
    "DivergentTrace",
    "SeriesDivergenceError",
    "IllConditionedError",
    "SymmetryError",
    "compose",
    "sh_ch_of",
    "double_angle",
    "invert_ch",
    "trace",
    "hs_norm",
    "recover_k",
    "write_kernel",
    "read_kernel",
    "kernel_to_bytes",
    "kernel_from_bytes",
    "random_symmetric",
]

KINDS = ("symmetric", "conjugate-symmetric", "general")


class SeriesDivergenceError(ArithmeticError):
    pass


class IllConditionedError(ArithmeticError):
    pass


class SymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class DivergentTrace:
    """Trace of a kernel with a delta part: infinite, reported with its pieces."""

    delta_coefficient: complex
    finite_part: complex

    def __repr__(self):
        return f"DivergentTrace({self.delta_coefficient} * inf + {self.finite_part})"

    def __float__(self):
        raise TypeError("trace of a delta part is divergent")

    __complex__ = __float__


class Kernel:
    """Dense kernel values K[x, y] with quadrature weight.

    ``grid`` may be None for mode-space kernels, which then use ``weight=1``.
    """

    __slots__ = ("values", "grid", "weight", "kind")

    def __init__(self, values, grid: Grid | None = None, weight: float | None = None,
                 kind: str = "general"):
        vals = np.asarray(values, dtype=np.complex128)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise GridError(f"kernel values must be square, got {vals.shape}")
        if grid is not None and vals.shape[0] != grid.size:
            raise GridError(f"kernel of size {vals.shape[0]} on grid of size {grid.size}")
        if kind not in KINDS:
            raise ValueError(f"unknown kernel kind {kind!r}")
        self.values = vals
        self.grid = grid
        self.weight = float(weight if weight is not None else (grid.dx if grid else 1.0))
        self.kind = kind

    @classmethod
    def from_op(cls, op, grid=None, weight=None, kind="general") -> "Kernel":
        w = float(weight if weight is not None else (grid.dx if grid else 1.0))
        return cls(np.asarray(op) / w, grid, w, kind)

    @classmethod
    def zeros_like(cls, other: "Kernel") -> "Kernel":
        return cls(np.zeros_like(other.values), other.grid, other.weight, other.kind)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def op(self) -> np.ndarray:
        """Matrix acting on grid vectors: values * weight."""
        return self.values * self.weight

    def _like(self, values, kind=None) -> "Kernel":
        return Kernel(values, self.grid, self.weight, kind or "general")

    def conj(self) -> "Kernel":
        return self._like(self.values.conj(), self.kind)

    @property
    def T(self) -> "Kernel":
        return self._like(self.values.T, self.kind)

    @property
    def H(self) -> "Kernel":
        return self._like(self.values.conj().T, self.kind)

    def __add__(self, other):
        if isinstance(other, DiagonalPlusKernel):
            return other + self
        _check_compat(self, other)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        if isinstance(other, DiagonalPlusKernel):
            return (-1) * other + self
        _check_compat(self, other)
        return self._like(self.values - other.values)

    def __neg__(self):
        return self._like(-self.values, self.kind)

    def __mul__(self, c):
        return self._like(self.values * c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return compose(self, other)

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T), initial=0.0))

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T), initial=0.0))

    def classify(self, tol: float = 1e-10) -> str:
        scale = max(1.0, float(np.max(np.abs(self.values), initial=0.0)))
        if self.symmetry_residual() <= tol * scale:
            return "symmetric"
        if self.hermitian_residual() <= tol * scale:
            return "conjugate-symmetric"
        return "general"

    def __repr__(self):
        return f"Kernel(size={self.size}, weight={self.weight:.4g}, kind={self.kind})"


@dataclass(frozen=True)
class DiagonalPlusKernel:
    """c * delta(x - y) + p(x, y) with the delta kept symbolic."""

    delta_coefficient: complex
    kernel_part: Kernel

    @property
    def grid(self):
        return self.kernel_part.grid

    @property
    def weight(self):
        return self.kernel_part.weight

    @property
    def op(self) -> np.ndarray:
        """Operator form: c * I + p * dx."""
        n = self.kernel_part.size
        return self.delta_coefficient * np.eye(n) + self.kernel_part.op

    def conj(self) -> "DiagonalPlusKernel":
        return DiagonalPlusKernel(np.conj(self.delta_coefficient), self.kernel_part.conj())

    @property
    def T(self) -> "DiagonalPlusKernel":
        return DiagonalPlusKernel(self.delta_coefficient, self.kernel_part.T)

    def __add__(self, other):
        if isinstance(other, DiagonalPlusKernel):
            return DiagonalPlusKernel(self.delta_coefficient + other.delta_coefficient,
                                      self.kernel_part + other.kernel_part)
        return DiagonalPlusKernel(self.delta_coefficient, self.kernel_part + other)

    def __sub__(self, other):
        return self + (-1) * other

    def __mul__(self, c):
        return DiagonalPlusKernel(self.delta_coefficient * c, self.kernel_part * c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return compose(self, other)

    @classmethod
    def identity_like(cls, k: Kernel) -> "DiagonalPlusKernel":
        return cls(1.0, Kernel.zeros_like(k))


def _check_compat(a: Kernel, b: Kernel) -> None:
    if a.grid != b.grid or a.size != b.size or not math.isclose(a.weight, b.weight):
        raise GridError("kernels live on different grids")


def compose(k, l):
    """k o l with the quadrature weight; delta parts follow the ring rules."""
    if isinstance(k, Kernel) and isinstance(l, Kernel):
        _check_compat(k, l)
        return k._like(k.values @ l.values * k.weight)
    if isinstance(k, DiagonalPlusKernel) and isinstance(l, DiagonalPlusKernel):
        c1, p1 = k.delta_coefficient, k.kernel_part
        c2, p2 = l.delta_coefficient, l.kernel_part
        part = compose(p1, p2) + p2 * c1 + p1 * c2
        return DiagonalPlusKernel(c1 * c2, part)
    if isinstance(k, DiagonalPlusKernel):
        return compose(k.kernel_part, l) + l * k.delta_coefficient
    if isinstance(l, DiagonalPlusKernel):
        return compose(k, l.kernel_part) + k * l.delta_coefficient
    raise TypeError(f"cannot compose {type(k).__name__} with {type(l).__name__}")


def _series(A: np.ndarray, tol: float, max_terms: int):
    """Power series of sinh/cosh type in the operator form A (k symmetric)."""
    n = A.shape[0]
    X = A.conj() @ A  # k-bar o k
    sh = A.copy()
    p = np.zeros((n, n), dtype=np.complex128)
    odd = A.copy()
    even = np.eye(n, dtype=np.complex128)
    for j in range(1, max_terms + 1):
        even = even @ X / ((2 * j - 1) * (2 * j))
        odd = odd @ X / ((2 * j) * (2 * j + 1))
        p += even
        sh += odd
        scale = max(1.0, np.linalg.norm(sh), np.linalg.norm(p))
        if max(np.linalg.norm(even), np.linalg.norm(odd)) < tol * scale:
            return sh, p
        if not (np.all(np.isfinite(odd)) and np.all(np.isfinite(even))):
            break
    raise SeriesDivergenceError(f"sh/ch series did not converge in {max_terms} terms")


def sh_ch_of(k: Kernel, tol: float = 1e-14, max_terms: int = 64, rescale: bool = True):
    """Return (sh(k), ch(k)) with ch as delta + p1.

    When ``rescale`` is set and the operator norm of k exceeds 1/2, the series
    is summed for k / 2^s and brought back with the double-angle formulas.
    """
    A = k.op
    s = 0
    if rescale:
        nrm = np.linalg.norm(A, 2) if A.size else 0.0
        if nrm > 0.5:
            s = int(math.ceil(math.log2(nrm / 0.5)))
    sh_op, p_op = _series(A / 2.0**s, tol, max_terms)
    for _ in range(s):
        # sh(2k) = 2 sh o ch, ch(2k) = 1 + 2 sh-bar o sh
        sh_op, p_op = 2.0 * (sh_op + sh_op @ p_op), 2.0 * (sh_op.conj() @ sh_op)
    sh = Kernel.from_op(sh_op, k.grid, k.weight, kind="symmetric")
    ch = DiagonalPlusKernel(1.0, Kernel.from_op(p_op, k.grid, k.weight, kind="conjugate-symmetric"))
    return sh, ch


def _rel_residual(R: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(R), initial=0.0) / max(1.0, np.max(np.abs(ref), initial=0.0)))


def double_angle(sh: Kernel, ch: DiagonalPlusKernel, tol: float = 1e-8):
    """(s2, p2) = (2 sh o ch, 2 sh-bar o sh), the kernel parts of sh(2k), ch(2k) - delta."""
    s2 = 2.0 * compose(sh, ch)
    p2 = 2.0 * compose(sh.conj(), sh)
    if _rel_residual(s2.values - s2.values.T, s2.values) > tol:
        raise SymmetryError("sh(2k) is not symmetric: inputs are not a genuine (sh, ch) pair")
    if _rel_residual(p2.values - p2.values.conj().T, p2.values) > tol:
        raise SymmetryError("ch(2k) - delta is not conjugate-symmetric")
    s2.kind, p2.kind = "symmetric", "conjugate-symmetric"
    return s2, p2


def invert_ch(ch: DiagonalPlusKernel, max_cond: float = 1e12) -> DiagonalPlusKernel:
    """(c delta + p)^-1 as c^-1 delta + q, by a dense solve on the operator form."""
    c = ch.delta_coefficient
    if c == 0:
        raise IllConditionedError("kernel without a delta part is not invertible here")
    P = ch.kernel_part
    M = np.eye(P.size) + P.op / c
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedError(f"condition number {cond:.3g} exceeds {max_cond:.1g}")
    # (c(I + P/c))^-1 = c^-1 (I - (I + P/c)^-1 P/c)
    Q_op = -np.linalg.solve(M, P.op / c) / c
    return DiagonalPlusKernel(1.0 / c, Kernel.from_op(Q_op, P.grid, P.weight, P.kind))


def trace(k):
    """sum_x k(x, x) dx; a delta part makes it a DivergentTrace."""
    if isinstance(k, DiagonalPlusKernel):
        finite = trace(k.kernel_part)
        if k.delta_coefficient != 0:
            return DivergentTrace(complex(k.delta_coefficient), finite)
        return finite
    return complex(np.trace(k.values) * k.weight)


def hs_norm(k) -> float:
    """sqrt(sum |k(x,y)|^2 dx^2); infinite for a nonzero delta part."""
    if isinstance(k, DiagonalPlusKernel):
        if k.delta_coefficient != 0:
            return math.inf
        k = k.kernel_part
    return float(np.linalg.norm(k.values) * k.weight)


def recover_k(sh: Kernel, sym_tol: float = 1e-8) -> Kernel:
    """Invert sh_ch_of: find symmetric k with sh(k) = sh.

    With A the operator form of sh, k = A g(A^H A) where g(l) = asinh(sqrt l)/sqrt l,
    evaluated through the Hermitian eigendecomposition of A^H A.
    """
    A = sh.op
    if _rel_residual(A - A.T, A) > sym_tol:
        raise SymmetryError("recover_k needs a symmetric sh")
    lam, U = np.linalg.eigh(A.conj().T @ A)
    lam = np.clip(lam, 0.0, None)
    r = np.sqrt(lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        gval = np.where(r > 1e-8, np.arcsinh(r) / np.where(r > 0, r, 1.0), 1.0 - lam / 6.0)
    K = A @ (U * gval) @ U.conj().T
    K = 0.5 * (K + K.T)
    return Kernel.from_op(K, sh.grid, sh.weight, kind="symmetric")


def write_kernel(k: Kernel, stream, kind: str | None = None) -> None:
    """Header ``dim n box_length kind`` then little-endian (re, im) pairs, row-major."""
    if k.grid is None:
        raise GridError("only grid kernels can be serialized")
    kind = kind or k.kind
    if kind not in KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    stream.write(f"{k.grid.header()} {kind}\n".encode("ascii"))
    stream.write(_encode_complex(k.values))


def read_kernel(stream) -> Kernel:
    header = stream.readline().decode("ascii").split()
    if len(header) != 4 or header[3] not in KINDS:
        raise GridError(f"bad kernel header: {header!r}")
    grid = make_grid(int(header[0]), int(header[1]), float(header[2]))
    vals = _decode_complex(stream.read(), grid.size**2).reshape(grid.size, grid.size)
    return Kernel(vals, grid, kind=header[3])


def kernel_to_bytes(k: Kernel) -> bytes:
    buf = io.BytesIO()
    write_kernel(k, buf)
    return buf.getvalue()


def kernel_from_bytes(raw: bytes) -> Kernel:
    return read_kernel(io.BytesIO(raw))


def random_symmetric(rng: np.random.Generator, grid: Grid | None, size: int | None = None,
                     scale: float = 1.0) -> Kernel:
    """Random complex symmetric kernel with operator norm about ``scale``."""
    n = grid.size if grid is not None else size
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Z = Z + Z.T
    Z *= scale / np.linalg.norm(Z, 2)
    return Kernel.from_op(Z, grid, kind="symmetric")
