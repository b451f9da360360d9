"""Hartree mean-field evolution with an N-scaled pair potential.

Equation (sign convention kept throughout the package)::

    (1/i) d/dt phi - Laplacian(phi) + (v_N * |phi|^2) phi = 0

so a free plane wave exp(ikx) acquires the phase exp(-i|k|^2 t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import _accel
from .grid import Field, Grid, convolve, lp, sup

__all__ = [
    "Profile",
    "Potential",
    "HartreeState",
    "NumericalError",
    "ResourceGuardError",
    "UnderResolvedError",
    "scaled_potential",
    "gaussian_packet",
    "step",
    "evolve",
    "conserved_quantities",
    "morawetz_Q",
    "decay_fit",
    "mean_potential",
    "sup_norm",
    "l4_norm",
    "pair_matrix",
]

DEFAULT_PAIR_BUDGET = 1 << 26


class NumericalError(RuntimeError):
    """NaN/overflow or another numerical breakdown during a run."""


class ResourceGuardError(RuntimeError):
    """A computation would exceed its configured size budget."""


class UnderResolvedError(ValueError):
    """The scaled potential is too narrow for the grid."""


@dataclass(frozen=True)
class Profile:
    """Radial potential profile v(r): box, gaussian or triangle."""

    kind: str
    width: float
    height: float

    def __post_init__(self):
        if self.kind not in ("box", "gaussian", "triangle"):
            raise ValueError(f"unknown potential profile {self.kind!r}")
        if self.width <= 0 or self.height < 0:
            raise ValueError("profile needs width > 0 and height >= 0")

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if self.kind == "box":
            return np.where(r <= 0.5 * self.width * (1 + 1e-12), self.height, 0.0)
        if self.kind == "triangle":
            return self.height * np.clip(1.0 - 2.0 * r / self.width, 0.0, None)
        return self.height * np.exp(-((r / self.width) ** 2))

    @property
    def support_diameter(self) -> float:
        # gaussian: diameter of the 1/e level set
        return 2.0 * self.width if self.kind == "gaussian" else self.width

    def integral(self, dim: int) -> float:
        w, h = self.width, self.height
        if self.kind == "gaussian":
            return h * math.pi ** (dim / 2) * w**dim
        R = w / 2
        if self.kind == "box":
            return h * {1: 2 * R, 2: math.pi * R**2, 3: 4 / 3 * math.pi * R**3}[dim]
        return h * {1: w / 2, 2: math.pi * w**2 / 12, 3: math.pi * w**3 / 24}[dim]


@dataclass(frozen=True)
class Potential:
    profile: Profile
    N: int
    beta: float
    sampled: Field
    scaled: Field

    @property
    def grid(self) -> Grid:
        return self.scaled.grid

    @property
    def scale(self) -> float:
        return float(self.N) ** self.beta

    def integral(self) -> float:
        """Quadrature of v_N over the box."""
        return float(np.sum(self.scaled.values.real) * self.grid.dx)

    def pair_matrix(self) -> np.ndarray:
        """V[i, j] = v_N(x_i - x_j) over flattened grid points (periodic)."""
        return pair_matrix(self.scaled)


def pair_matrix(v: Field) -> np.ndarray:
    grid = v.grid
    n, d = grid.n_per_axis, grid.dim
    idx = np.indices(grid.shape).reshape(d, -1)
    diff = (idx[:, :, None] - idx[:, None, :]) % n
    return v.values.real[tuple(diff)]


def check_profile_field(v: Field, tol: float = 1e-12) -> None:
    """Non-negative, even and radially non-increasing on the sampled grid."""
    vals = v.values.real
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.any(vals < -tol * scale):
        raise ValueError("potential profile must be non-negative")
    flipped = vals
    for ax in range(v.grid.dim):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    if np.max(np.abs(flipped - vals)) > tol * scale:
        raise ValueError("potential profile must be even")
    r = v.grid.radius().reshape(-1)
    order = np.argsort(r, kind="stable")
    rs, vs = r[order], vals.reshape(-1)[order]
    # compare each distinct radius shell against the next one
    shells = np.unique(np.round(rs, 12))
    shell_max = np.array([vs[np.abs(rs - s) < 1e-9].max() for s in shells])
    shell_min = np.array([vs[np.abs(rs - s) < 1e-9].min() for s in shells])
    if np.any(shell_max[1:] > shell_min[:-1] + tol * scale):
        raise ValueError("potential profile must be radially non-increasing")


def scaled_potential(profile: Profile, grid: Grid, N: int, beta: float) -> Potential:
    """v_N(x) = N^(d beta) v(N^beta x) sampled on the grid."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    scale = float(N) ** beta
    diameter = profile.support_diameter / scale
    if diameter < 4 * grid.spacing:
        raise UnderResolvedError(
            f"scaled support {diameter:.4g} spans < 4 grid points (spacing {grid.spacing:.4g})"
        )
    if diameter >= grid.box_length:
        raise UnderResolvedError("scaled support does not fit in the box")
    r = grid.radius()
    sampled = Field(grid, profile(r))
    check_profile_field(sampled)
    if beta == 0.0:
        scaled = sampled.copy()
    else:
        scaled = Field(grid, scale**grid.dim * profile(scale * r))
    return Potential(profile, int(N), float(beta), sampled, scaled)


def gaussian_packet(grid: Grid, center=0.0, momentum=0.0, width=1.0, norm=1.0) -> Field:
    """exp(-|x-c|^2 / (2 width^2) + i k.x), normalized to the given L2 norm."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    momentum = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dim,))
    L = grid.box_length
    expo = np.zeros(grid.shape, dtype=np.complex128)
    for x, c, k in zip(grid.coords(), center, momentum):
        dxc = x - c
        dxc -= L * np.floor(dxc / L + 0.5)
        expo += -(dxc**2) / (2 * width**2) + 1j * k * x
    vals = np.exp(expo)
    vals *= norm / np.sqrt(np.sum(np.abs(vals) ** 2) * grid.dx)
    return Field(grid, vals)


@dataclass(frozen=True)
class HartreeState:
    phi: Field
    t: float
    potential: Potential

    @property
    def grid(self) -> Grid:
        return self.phi.grid


def mean_potential(phi: Field, potential: Potential) -> np.ndarray:
    """(v_N * |phi|^2)(x), real."""
    dens = Field(phi.grid, np.abs(phi.values) ** 2)
    return convolve(potential.scaled, dens).values.real


@lru_cache(maxsize=64)
def _free_phase(grid: Grid, dt: float) -> np.ndarray:
    return np.exp(-1j * grid.k_squared() * dt)


def step(state: HartreeState, dt: float) -> HartreeState:
    """One Strang step: half potential kick, exact free flow, half kick."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    psi = state.phi.values
    V = mean_potential(state.phi, state.potential)
    psi = psi * np.exp(-0.5j * dt * V)
    psi = np.fft.ifftn(_free_phase(state.grid, dt) * np.fft.fftn(psi))
    V = mean_potential(Field(state.grid, psi), state.potential)
    psi = psi * np.exp(-0.5j * dt * V)
    if not np.all(np.isfinite(psi)):
        raise NumericalError(f"non-finite mean field at t={state.t + dt:.6g}")
    return HartreeState(Field(state.grid, psi), state.t + dt, state.potential)


def evolve(state: HartreeState, dt: float, n_steps: int) -> HartreeState:
    for _ in range(n_steps):
        state = step(state, dt)
    return state


def _gradients(phi: Field) -> list[np.ndarray]:
    fhat = np.fft.fftn(phi.values)
    return [np.fft.ifftn(sym * fhat) for sym in phi.grid.gradient_symbols()]


def conserved_quantities(state: HartreeState) -> dict:
    """Mass (with rho = |phi|^2 / 2), momentum components and energy."""
    phi = state.phi
    dx = phi.grid.dx
    grads = _gradients(phi)
    dens = np.abs(phi.values) ** 2
    mass = 0.5 * np.sum(dens) * dx
    momentum = [float(-np.sum(np.imag(phi.values.conj() * g)) * dx) for g in grads]
    V = mean_potential(phi, state.potential)
    kinetic = sum(np.sum(np.abs(g) ** 2) for g in grads) * dx
    energy = kinetic + 0.5 * np.sum(V * dens) * dx
    return {"mass": float(mass), "momentum": momentum, "energy": float(energy)}


def momentum_density_divergence(phi: Field) -> np.ndarray:
    """div p with p_j = -Im(conj(phi) grad_j phi)."""
    grads = _gradients(phi)
    syms = phi.grid.gradient_symbols()
    div = np.zeros(phi.grid.shape, dtype=np.complex128)
    for sym, g in zip(syms, grads):
        pj = -np.imag(phi.values.conj() * g)
        div += np.fft.ifftn(sym * np.fft.fftn(pj))
    return div.real


def morawetz_Q(state: HartreeState, budget: int = DEFAULT_PAIR_BUDGET) -> float:
    """Interaction Morawetz functional by direct double sum over grid points.

    Q = sum_{x,y} (div p(x) rho(y) + rho(x) div p(y)) |x - y| dx^2 with the
    minimal-image distance; meaningful only before wrap-around.
    """
    grid = state.grid
    if grid.size**2 > budget:
        raise ResourceGuardError(f"{grid.size}^2 pair terms exceed budget {budget}")
    rho = 0.5 * np.abs(state.phi.values.reshape(-1)) ** 2
    divp = momentum_density_divergence(state.phi).reshape(-1)
    coords = np.ascontiguousarray(np.stack([c.reshape(-1) for c in grid.coords()], axis=1))
    total = _accel.pair_distance_sum(
        np.ascontiguousarray(divp), np.ascontiguousarray(rho), coords, grid.box_length
    )
    return 2.0 * total * grid.dx**2


def l4_norm(phi: Field) -> float:
    return lp(phi, 4)


def decay_fit(series, min_samples: int = 10, rtol: float = 1e-9) -> float:
    """Least-squares slope of log sup-norm against log t."""
    arr = np.asarray(list(series), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} (t, sup_norm) samples")
    arr = arr[np.argsort(arr[:, 0])]
    t, s = arr[:, 0], arr[:, 1]
    if np.any(t < 1.0):
        raise ValueError("decay fit needs samples with t >= 1")
    if np.any(s <= 0):
        raise ValueError("sup norms must be positive")
    if np.any(np.diff(s) > rtol * s[:-1]):
        raise ValueError("sup-norm series is not monotone (wrap-around contamination?)")
    slope, _ = np.polyfit(np.log(t), np.log(s), 1)
    return float(slope)


def with_phi(state: HartreeState, phi: Field) -> HartreeState:
    return replace(state, phi=phi)


def sup_norm(state: HartreeState) -> float:
    return sup(state.phi)
