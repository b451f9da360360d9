"""Truncated bosonic Fock space on a few modes, by dense linear algebra.

Used to check the quadratic-operator calculus: ladder relations, the map
L -> I(L) from symplectic blocks to quadratic operators, Bogoliubov
conjugation, coherent states and the block-diagonal condition behind the pair
equations.  Identities are compared only on sub-cap subspaces, where the
truncation is exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .kernels import Kernel, sh_ch_of

__all__ = [
    "TruncatedFock",
    "SymplecticBlock",
    "FockVector",
    "ladder",
    "quadratic_I",
    "check_isomorphism",
    "bogoliubov",
    "coherent",
    "pair_block",
    "block_diag_residual",
    "project_modes",
    "fourier_modes",
    "report_record",
    "projected_generator",
    "block_refinement_study",
    "error_vector",
]


class TruncatedFock:
    """Occupations (n_1..n_M) with sum <= n_max.

    Basis order: by total number, then lexicographically decreasing within a
    sector, so for M=2 the order is (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
    """

    def __init__(self, modes: int, n_max: int):
        if modes < 1 or n_max < 0:
            raise ValueError("need modes >= 1 and n_max >= 0")
        self.modes = int(modes)
        self.n_max = int(n_max)
        basis = []
        for total in range(n_max + 1):
            sector = [c for c in itertools.product(range(total + 1), repeat=modes) if sum(c) == total]
            basis.extend(sorted(sector, reverse=True))
        self.basis = basis
        self.index = {b: i for i, b in enumerate(basis)}
        self.totals = np.array([sum(b) for b in basis])
        self._ops = {}

    @property
    def dim(self) -> int:
        return len(self.basis)

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.complex128)
        v[0] = 1.0
        return v

    def subcap(self, level: int) -> np.ndarray:
        """Indices of basis states with total number <= level."""
        return np.flatnonzero(self.totals <= level)

    def sector(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.totals == n)

    def annihilator(self, j: int) -> np.ndarray:
        """a_j for 0-based mode index j."""
        if j not in self._ops:
            a = np.zeros((self.dim, self.dim))
            for col, occ in enumerate(self.basis):
                if occ[j] > 0:
                    lower = list(occ)
                    lower[j] -= 1
                    a[self.index[tuple(lower)], col] = math.sqrt(occ[j])
            self._ops[j] = a
        return self._ops[j]

    def number(self) -> np.ndarray:
        return np.diag(self.totals.astype(float))


def ladder(fock: TruncatedFock, j: int):
    """(a_j, a*_j) for 1-based mode index j."""
    if not 1 <= j <= fock.modes:
        raise ValueError(f"mode index must be in 1..{fock.modes}")
    a = fock.annihilator(j - 1)
    return a, a.T.copy()


@dataclass(frozen=True)
class SymplecticBlock:
    """L = [[d, l], [k, -d^T]] with k and l symmetric."""

    d: np.ndarray
    k: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        d, k, l = (np.asarray(x, dtype=np.complex128) for x in (self.d, self.k, self.l))
        if not d.shape == k.shape == l.shape or d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("d, k, l must be square matrices of equal size")
        if np.max(np.abs(k - k.T), initial=0) > 1e-12 or np.max(np.abs(l - l.T), initial=0) > 1e-12:
            raise ValueError("k and l must be symmetric")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "l", l)

    @property
    def modes(self) -> int:
        return self.d.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([[self.d, self.l], [self.k, -self.d.T]])

    @classmethod
    def from_matrix(cls, Lm) -> "SymplecticBlock":
        Lm = np.asarray(Lm)
        M = Lm.shape[0] // 2
        d, l, k, dd = Lm[:M, :M], Lm[:M, M:], Lm[M:, :M], Lm[M:, M:]
        if np.max(np.abs(dd + d.T), initial=0) > 1e-10:
            raise ValueError("lower-right block must be -d^T")
        return cls(d, 0.5 * (k + k.T), 0.5 * (l + l.T))

    @classmethod
    def random(cls, rng, M, scale=1.0) -> "SymplecticBlock":
        def cplx(shape):
            return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

        k, l = cplx((M, M)), cplx((M, M))
        return cls(scale * cplx((M, M)), scale * (k + k.T) / 2, scale * (l + l.T) / 2)

    @classmethod
    def pair(cls, k) -> "SymplecticBlock":
        """K = [[0, conj(k)], [k, 0]], the generator of a Bogoliubov map."""
        k = np.asarray(k, dtype=np.complex128)
        return cls(np.zeros_like(k), k, k.conj())


def quadratic_I(fock: TruncatedFock, L: SymplecticBlock) -> np.ndarray:
    """-1/2 sum (d_ij a_i a*_j + d_ji a*_i a_j + k_ij a*_i a*_j - l_ij a_i a_j).

    Built from normal-ordered products (a_i a*_j = a*_j a_i + delta_ij) so the
    matrix elements inside the cap are exact.
    """
    M = fock.modes
    if L.modes != M:
        raise ValueError("block size does not match the number of modes")
    a = [fock.annihilator(j) for j in range(M)]
    ad = [x.T for x in a]
    out = np.zeros((fock.dim, fock.dim), dtype=np.complex128)
    for i in range(M):
        for j in range(M):
            hop = ad[j] @ a[i]  # a*_j a_i
            out += L.d[i, j] * hop + L.d[j, i] * (ad[i] @ a[j])
            out += L.k[i, j] * (ad[i] @ ad[j]) - L.l[i, j] * (a[i] @ a[j])
        out += L.d[i, i] * np.eye(fock.dim)
    return -0.5 * out


def commutator(A, B):
    return A @ B - B @ A


def check_isomorphism(fock: TruncatedFock, L1: SymplecticBlock, L2: SymplecticBlock) -> float:
    """Max |[I(L1), I(L2)] - I([L1, L2])| on states with total number <= n_max - 2."""
    I1, I2 = quadratic_I(fock, L1), quadratic_I(fock, L2)
    Lc = SymplecticBlock.from_matrix(commutator(L1.matrix(), L2.matrix()))
    R = commutator(I1, I2) - quadratic_I(fock, Lc)
    idx = fock.subcap(fock.n_max - 2)
    return float(np.max(np.abs(R[np.ix_(idx, idx)]), initial=0.0))


def linear_field(fock: TruncatedFock, f) -> np.ndarray:
    """A(f) = sum_j u_j a_j + w_j a*_j for f = (u, w); then [I(L), A(f)] = A(L f)."""
    f = np.asarray(f, dtype=np.complex128)
    M = fock.modes
    out = np.zeros((fock.dim, fock.dim), dtype=np.complex128)
    for j in range(M):
        a = fock.annihilator(j)
        out += f[j] * a + f[M + j] * a.T
    return out


def _conjugation_residual(fock, k, probe):
    k = np.asarray(k, dtype=np.complex128)
    B = quadratic_I(fock, SymplecticBlock.pair(k))
    U = expm(B)
    Uinv = expm(-B)
    sh, ch = sh_ch_of(Kernel(k, None, 1.0, kind="symmetric"))
    C, S = ch.op, sh.op
    idx = fock.subcap(probe)
    rows = fock.subcap(probe + 1)
    res = 0.0
    for j in range(fock.modes):
        conj_a = U @ fock.annihilator(j) @ Uinv
        ref = sum(C[i, j] * fock.annihilator(i) + S[i, j] * fock.annihilator(i).T
                  for i in range(fock.modes))
        res = max(res, float(np.max(np.abs((conj_a - ref)[np.ix_(rows, idx)]))))
    unitarity = float(np.max(np.abs(U @ U.conj().T - np.eye(fock.dim))))
    return res, unitarity, B


def bogoliubov(k, n_max: int, probe: int | None = None, cap_step: int = 4) -> dict:
    """Conjugate each a_j by e^{B(k)} and compare with ch/sh from the series.

    The residual is taken on columns with total number <= ``probe`` (default
    n_max // 5) and rows one level above; the truncated squeezing exponential
    is inaccurate near the cap and its error leaks downwards geometrically.  The check is repeated at
    n_max + ``cap_step``: if that lowers the residual markedly the result is
    flagged as truncation dominated.
    """
    k = np.atleast_2d(np.asarray(k, dtype=np.complex128))
    M = k.shape[0]
    probe = n_max // 5 if probe is None else probe
    fock = TruncatedFock(M, n_max)
    res, unitarity, B = _conjugation_residual(fock, k, probe)
    res_up, _, _ = _conjugation_residual(TruncatedFock(M, n_max + cap_step), k, probe)
    anti = float(np.max(np.abs(B + B.conj().T)))
    return {
        "residual": res,
        "residual_larger_cap": res_up,
        "truncation_dominated": bool(res > 1e-14 and res_up < 0.5 * res),
        "unitarity": unitarity,
        "anti_hermitian": anti,
    }


@dataclass
class FockVector:
    fock: TruncatedFock
    amplitudes: np.ndarray
    info: dict = field(default_factory=dict)

    def sector_weights(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.amplitudes[self.fock.sector(n)])
                         for n in range(self.fock.n_max + 1)])


def poisson_tail(mean: float, n_max: int) -> float:
    """P(X > n_max) for X ~ Poisson(mean)."""
    from scipy.stats import poisson

    return float(poisson.sf(n_max, mean))


def coherent(phi, N: float, n_max: int, loss_tol: float = 1e-6) -> FockVector:
    """e^{-sqrt(N) A(phi)}|0> with A(phi) = sum(conj(phi_j) a_j - phi_j a*_j).

    Evaluated in the normal-ordered form e^{-N|phi|^2/2} e^{sqrt(N) phi.a*}|0>;
    the creation part is nilpotent on the truncated space, so its dense
    exponential is exact inside the cap.  The norm missing above the cap is the
    Poisson tail, reported as ``truncation_loss``.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=np.complex128))
    fock = TruncatedFock(phi.size, n_max)
    gen = np.zeros((fock.dim, fock.dim), dtype=np.complex128)
    for j in range(phi.size):
        gen += phi[j] * fock.annihilator(j).T
    mean = N * float(np.vdot(phi, phi).real)
    vec = math.exp(-0.5 * mean) * (expm(math.sqrt(N) * gen) @ fock.vacuum())
    loss = max(0.0, 1.0 - float(np.vdot(vec, vec).real))
    tail = poisson_tail(mean, n_max) if mean > 0 else 0.0
    info = {"truncation_loss": loss, "poisson_tail": tail,
            "truncation_flag": bool(max(loss, tail) > loss_tol)}
    return FockVector(fock, vec, info)


def coherent_weight(N: float, n: int) -> float:
    """(e^{-N} N^n / n!)^(1/2)."""
    if N == 0:
        return 1.0 if n == 0 else 0.0
    return float(math.exp(0.5 * (-N + n * math.log(N) - gammaln(n + 1))))


# --- error operator on the vacuum ---------------------------------------------------

def error_vector(k, phi, V, N: float, n_max: int, cell: float = 1.0) -> FockVector:
    """e^B (P3 + N^{-1/2} P4) e^{-B}|0> by dense linear algebra on M lattice modes.

    Mode j stands for a lattice site with cell volume ``cell``: a_x = a_j / sqrt(cell),
    so P3 picks up sqrt(cell) and P4 is cell independent.  ``k`` is the mode matrix
    (operator form) of the pair kernel and V[i, j] = v(x_i - x_j).
    """
    k = np.asarray(k, dtype=np.complex128)
    phi = np.asarray(phi, dtype=np.complex128)
    V = np.asarray(V, dtype=float)
    M = phi.size
    fock = TruncatedFock(M, n_max)
    a = [fock.annihilator(j) for j in range(M)]
    ad = [x.T for x in a]
    P3 = np.zeros((fock.dim, fock.dim), dtype=np.complex128)
    P4 = np.zeros_like(P3)
    for i in range(M):
        for j in range(M):
            P3 += V[i, j] * (phi[j] * ad[i] @ ad[j] @ a[i] + np.conj(phi[j]) * ad[i] @ a[i] @ a[j])
            P4 += 0.5 * V[i, j] * ad[i] @ ad[j] @ a[i] @ a[j]
    P3 *= math.sqrt(cell)
    B = quadratic_I(fock, SymplecticBlock.pair(k))
    vec = expm(B) @ ((P3 + P4 / math.sqrt(N)) @ (expm(-B) @ fock.vacuum()))
    return FockVector(fock, vec)


# --- block-diagonal condition ---------------------------------------------------

def pair_block(s2, p2) -> np.ndarray:
    """e^{-2K} N_u = [[1 + p2, conj(s2)], [-s2, -(1 + conj(p2))]] in mode form."""
    s2 = np.asarray(s2)
    p2 = np.asarray(p2)
    I = np.eye(s2.shape[0])
    return np.block([[I + p2, s2.conj()], [-s2, -(I + p2.conj())]])


def pair_block_from_k(k) -> np.ndarray:
    sh, ch = sh_ch_of(Kernel(2 * np.asarray(k, dtype=np.complex128), None, 1.0))
    return pair_block(sh.op, ch.kernel_part.op)


def generator_block(g, m) -> np.ndarray:
    """G + M = [[g, conj(m)], [-m, -g^T]]."""
    g = np.asarray(g)
    m = np.asarray(m)
    return np.block([[g, m.conj()], [-m, -g.T]])


def block_diag_residual(X_prev, X, X_next, dt: float, g, m) -> dict:
    """|| i dX/dt + [G + M, X] ||_F with dX/dt by centred differences.

    Zero exactly when (s2, p2) inside X solve the pair equations.  The noise
    floor estimates the roundoff in the difference quotient.
    """
    Xt = (np.asarray(X_next) - np.asarray(X_prev)) / (2.0 * dt)
    H = generator_block(g, m)
    R = 1j * Xt + commutator(H, X)
    floor = float(np.finfo(float).eps * np.linalg.norm(X) / dt)
    return {"residual": float(np.linalg.norm(R)), "noise_floor": floor}


def evolve_block(X, H_mid, dt: float) -> np.ndarray:
    """Exponential midpoint step of i X_t + [H, X] = 0: X -> U X U^-1, U = exp(i dt H)."""
    U = expm(1j * dt * H_mid)
    Uinv = expm(-1j * dt * H_mid)
    return U @ X @ Uinv


# --- mode projection from grid runs ----------------------------------------------

def fourier_modes(grid, count: int) -> np.ndarray:
    """Real, dx-orthonormal low Fourier modes: 1, cos(2 pi x/L), sin(2 pi x/L), cos(4 pi x/L), ..."""
    if grid.dim != 1:
        raise ValueError("mode projection is implemented for d=1")
    x = grid.axis_coords
    L = grid.box_length
    cols = [np.ones_like(x) / math.sqrt(L)]
    j = 1
    while len(cols) < count:
        cols.append(np.cos(2 * math.pi * j * x / L) * math.sqrt(2 / L))
        if len(cols) < count:
            cols.append(np.sin(2 * math.pi * j * x / L) * math.sqrt(2 / L))
        j += 1
    return np.stack(cols[:count], axis=1)


def project_modes(E: np.ndarray, op: np.ndarray, dx: float) -> np.ndarray:
    """Mode matrix E^T K_op E dx of a grid operator for a real dx-orthonormal basis E."""
    return E.T @ op @ E * dx


def projected_generator(phi, v_N, E: np.ndarray):
    """(g, m) of the pair equations projected on the dx-orthonormal columns of E."""
    from .pair import build_g, build_m

    grid = phi.grid
    dx = grid.dx
    k2 = grid.k_squared().reshape(-1)
    lapE = np.fft.ifft(k2[:, None] * np.fft.fft(E, axis=0), axis=0)
    g = build_g(phi, v_N)
    m = build_m(phi, v_N)
    return E.T @ lapE * dx + project_modes(E, g.bounded_op(), dx), project_modes(E, m.op, dx)


def block_refinement_study(hstate, modes: int = 2, dts=(0.04, 0.02, 0.01), t_probe: float = 1.0,
                           hartree_dt: float = 0.00125) -> dict:
    """Block residual at t_probe for a mode-projected pair run at several dt.

    The mean field is advanced once with hartree_dt and sampled on the finest
    half-step lattice; each dt run then uses the exponential midpoint rule.
    Returns per-dt residuals and the observed orders between successive dt.
    """
    from .hartree import step as hartree_step

    dts = sorted((float(d) for d in dts), reverse=True)
    fine = 0.5 * dts[-1]
    for dt in dts:
        if abs(dt / fine - round(dt / fine)) > 1e-9 or round(dt / fine) % 2:
            raise ValueError("every dt must be an even multiple of half the smallest dt")
    if abs(fine / hartree_dt - round(fine / hartree_dt)) > 1e-9:
        raise ValueError("hartree_dt must divide the sampling lattice")
    E = fourier_modes(hstate.grid, modes)
    v_N = hstate.potential.scaled
    per = int(round(fine / hartree_dt))
    t_end = t_probe + dts[0]
    samples = {}
    st = hstate
    for i in range(int(round(t_end / hartree_dt)) + 1):
        if i % per == 0:
            samples[i // per] = projected_generator(st.phi, v_N, E)
        st = hartree_step(st, hartree_dt)
    zero = np.zeros((modes, modes))
    out = []
    for dt in dts:
        r = int(round(dt / fine))
        X = pair_block(zero, zero)
        Xs = [X]
        probe = int(round(t_probe / dt))
        for j in range(probe + 1):
            g, m = samples[j * r + r // 2]
            X = evolve_block(X, generator_block(g, m), dt)
            Xs.append(X)
        g, m = samples[probe * r]
        res = block_diag_residual(Xs[probe - 1], Xs[probe], Xs[probe + 1], dt, g, m)
        out.append({"dt": dt, **res})
    orders = [math.log(a["residual"] / b["residual"]) / math.log(a["dt"] / b["dt"])
              for a, b in zip(out, out[1:])]
    return {"runs": out, "orders": orders}


def report_record(test: str, M: int, n_max: int, parameters: dict, residual: float,
                  noise_floor: float = 0.0) -> dict:
    return {"test": test, "M": M, "n_max": n_max, "parameters": parameters,
            "residual": residual, "noise_floor": noise_floor}
