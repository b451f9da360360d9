"""Pair-excitation kernels s2 = sh(2k), p2 = ch(2k) - delta and their evolution.

Internally every kernel is handled in operator form (values * dx), where
composition is a plain matrix product.  With q = conj(p2) the system reads

    s_t = i (2m + m conj(q) + q m - g^T s - s g)
    q_t = i (m conj(s) - s conj(m) - [g^T, q])

and the equivalent forms evolved alongside it are

    zeta_t = i (m + zeta conj(m) zeta - g^T zeta - zeta g)      (zeta = ch-bar^-1 sh)
    r_t    = i (m conj(sc) - sc conj(m) - [g^T, r])             (r = sh sh-bar, sc = sh ch)

The unbounded -Laplacian inside g is integrated exactly in double Fourier
space; the bounded remainder by RK4 with the mean field frozen at mid-step
(Strang splitting).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import hartree
from .grid import Field, Grid, convolve
from .hartree import HartreeState, NumericalError, pair_matrix
from .kernels import Kernel, SymmetryError, hs_norm, recover_k, sh_ch_of, trace

__all__ = [
    "GData",
    "PairState",
    "build_g",
    "build_m",
    "apply_S",
    "apply_W",
    "step_pair",
    "step_z",
    "step_zr",
    "zeta_from_s2",
    "r_from_zeta",
    "duhamel_sa",
    "growth_report",
    "run_pair",
]

SYMMETRY_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class GData:
    """g = -Laplacian delta + V(x) delta + E(x, y)."""

    laplacian_multiplier: np.ndarray
    potential_diag: Field
    exchange: Kernel

    @property
    def grid(self) -> Grid:
        return self.potential_diag.grid

    def bounded_op(self) -> np.ndarray:
        """Operator form of V delta + E (everything except the Laplacian)."""
        return np.diag(self.potential_diag.flat()) + self.exchange.op


def build_g(phi: Field, v_N: Field) -> GData:
    grid = phi.grid
    V = Field(grid, convolve(v_N, Field(grid, np.abs(phi.values) ** 2)).values.real)
    f = phi.flat()
    E = pair_matrix(v_N) * np.outer(f.conj(), f)
    return GData(grid.k_squared(), V, Kernel(E, grid, kind="conjugate-symmetric"))


def build_m(phi: Field, v_N: Field) -> Kernel:
    """m(x, y) = -v_N(x - y) phi(x) phi(y)."""
    f = phi.flat()
    return Kernel(-pair_matrix(v_N) * np.outer(f, f), phi.grid, kind="symmetric")


# --- spectral helpers on grid x grid arrays -------------------------------------

def _axes(grid: Grid):
    d = grid.dim
    return tuple(range(d)), tuple(range(d, 2 * d))


def _apply_left(X: np.ndarray, grid: Grid, symbol: np.ndarray) -> np.ndarray:
    """Multiply by a Fourier symbol acting on the first kernel argument."""
    shp = grid.shape
    A = X.reshape(shp + shp)
    left, _ = _axes(grid)
    sym = symbol.reshape(shp + (1,) * grid.dim)
    return np.fft.ifftn(sym * np.fft.fftn(A, axes=left), axes=left).reshape(X.shape)


def _apply_right(X: np.ndarray, grid: Grid, symbol: np.ndarray) -> np.ndarray:
    """X o F(symbol) for a symbol of an even (transpose-symmetric) multiplier."""
    shp = grid.shape
    A = X.reshape(shp + shp)
    _, right = _axes(grid)
    sym = symbol.reshape((1,) * grid.dim + shp)
    return np.fft.ifftn(sym * np.fft.fftn(A, axes=right), axes=right).reshape(X.shape)


def laplacian_both(X: np.ndarray, grid: Grid, sign_right: int = 1) -> np.ndarray:
    """(-Lap_x) X + sign_right * X (-Lap), Laplacian kept spectral."""
    k2 = grid.k_squared()
    return _apply_left(X, grid, k2) + sign_right * _apply_right(X, grid, k2)


def free_flow(X: np.ndarray, grid: Grid, h: float, kind: str) -> np.ndarray:
    """Exact flow of the free part for time h.

    kind "S": X -> U X U   (symmetric class, s and zeta)
    kind "W": X -> U X U^H (conjugate-symmetric class, q and r)
    with U = exp(-i h (-Lap)).
    """
    k2 = grid.k_squared()
    Y = _apply_left(X, grid, np.exp(-1j * h * k2))
    right = np.exp(-1j * h * k2) if kind == "S" else np.exp(1j * h * k2)
    return _apply_right(Y, grid, right)


# --- spatial operators ------------------------------------------------------------

def _check_class(K: Kernel, cls: str, tol: float = 1e-8) -> None:
    scale = max(1.0, float(np.max(np.abs(K.values), initial=0.0)))
    res = K.symmetry_residual() if cls == "symmetric" else K.hermitian_residual()
    if res > tol * scale:
        raise SymmetryError(f"input kernel is not {cls} (residual {res:.3g})")


def apply_S(s: Kernel, g: GData) -> Kernel:
    """g^T o s + s o g for a symmetric kernel s."""
    _check_class(s, "symmetric")
    grid = g.grid
    V = g.potential_diag.flat().real
    E = g.exchange.values
    vals = laplacian_both(s.values, grid, +1)
    vals += V[:, None] * s.values + s.values * V[None, :]
    vals += (E.T @ s.values + s.values @ E) * s.weight
    return Kernel(vals, s.grid, s.weight, kind="symmetric")


def apply_W(p: Kernel, g: GData) -> Kernel:
    """[g^T, p] for a conjugate-symmetric kernel p (the result is anti-Hermitian)."""
    _check_class(p, "conjugate-symmetric")
    grid = g.grid
    V = g.potential_diag.flat().real
    Et = g.exchange.values.T
    vals = laplacian_both(p.values, grid, -1)
    vals += V[:, None] * p.values - p.values * V[None, :]
    vals += (Et @ p.values - p.values @ Et) * p.weight
    return Kernel(vals, p.grid, p.weight, kind="general")


# --- bounded right-hand sides (operator form) -------------------------------------

def _rhs_pair(s, q, B, m):
    Bt = B.T
    ds = 1j * (2 * m + m @ q.conj() + q @ m - Bt @ s - s @ B)
    dq = 1j * (m @ s.conj() - s @ m.conj() - (Bt @ q - q @ Bt))
    return ds, dq


def _rhs_z(z, B, m):
    return 1j * (m + z @ m.conj() @ z - B.T @ z - z @ B)


def _sc_from_zeta(z):
    n = z.shape[0]
    I = np.eye(n)
    zh = z.conj().T
    a = np.linalg.solve(I - z @ zh, z)
    b = np.linalg.solve((I - zh @ z).T, z.T).T
    return 0.5 * (a + b)


def _rhs_zr(z, r, B, m):
    sc = _sc_from_zeta(z)
    Bt = B.T
    dr = 1j * (m @ sc.conj() - sc @ m.conj() - (Bt @ r - r @ Bt))
    return _rhs_z(z, B, m), dr


def _rk4(f, y, dt):
    """Classical RK4 for a tuple of arrays."""
    k1 = f(*y)
    k2 = f(*[a + 0.5 * dt * b for a, b in zip(y, k1)])
    k3 = f(*[a + 0.5 * dt * b for a, b in zip(y, k2)])
    k4 = f(*[a + dt * b for a, b in zip(y, k3)])
    return tuple(a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def _ensure_finite(*arrays, t=None):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite pair kernel at t={t}")


# --- states and steps ----------------------------------------------------------------

@dataclass(frozen=True)
class PairState:
    s2: Kernel
    p2: Kernel
    t: float
    hartree: HartreeState

    @property
    def grid(self) -> Grid:
        return self.hartree.grid

    @classmethod
    def initial(cls, hstate: HartreeState) -> "PairState":
        n = hstate.grid.size
        z = np.zeros((n, n), dtype=np.complex128)
        return cls(Kernel(z, hstate.grid, kind="symmetric"),
                   Kernel(z.copy(), hstate.grid, kind="conjugate-symmetric"),
                   hstate.t, hstate)


def coefficients(phi: Field, v_N: Field):
    """Bounded part of g and m, both in operator form."""
    g = build_g(phi, v_N)
    m = build_m(phi, v_N)
    return g, g.bounded_op(), m.op


def _resymmetrize(s, q, t):
    scale = max(1.0, float(np.max(np.abs(s), initial=0.0)), float(np.max(np.abs(q), initial=0.0)))
    drift = max(float(np.max(np.abs(s - s.T), initial=0.0)),
                float(np.max(np.abs(q - q.conj().T), initial=0.0)))
    if drift > SYMMETRY_DRIFT_TOL * scale:
        warnings.warn(f"pair symmetry drift {drift:.3g} at t={t:.6g}; re-symmetrizing",
                      RuntimeWarning, stacklevel=3)
        s = 0.5 * (s + s.T)
        q = 0.5 * (q + q.conj().T)
    return s, q


def step_pair_ops(s, q, grid, B, m, dt):
    """One Strang step of the (s, q) system in operator form, coefficients frozen."""
    s = free_flow(s, grid, 0.5 * dt, "S")
    q = free_flow(q, grid, 0.5 * dt, "W")
    s, q = _rk4(lambda a, b: _rhs_pair(a, b, B, m), (s, q), dt)
    s = free_flow(s, grid, 0.5 * dt, "S")
    q = free_flow(q, grid, 0.5 * dt, "W")
    return s, q


def step_pair(state: PairState, dt: float) -> PairState:
    """Advance (s2, p2) and the companion mean field by dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    v_N = state.hartree.potential.scaled
    h_mid = hartree.step(state.hartree, 0.5 * dt)
    _, B, m = coefficients(h_mid.phi, v_N)
    s, q = step_pair_ops(state.s2.op, state.p2.op.conj(), grid, B, m, dt)
    t = state.t + dt
    _ensure_finite(s, q, t=t)
    s, q = _resymmetrize(s, q, t)
    h_end = hartree.step(h_mid, 0.5 * dt)
    return PairState(Kernel.from_op(s, grid, kind="symmetric"),
                     Kernel.from_op(q.conj(), grid, kind="conjugate-symmetric"),
                     t, h_end)


def step_z(zeta: Kernel, dt: float, g: GData, m: Kernel) -> Kernel:
    """One Strang step of the zeta equation with frozen g and m."""
    grid = g.grid
    z = free_flow(zeta.op, grid, 0.5 * dt, "S")
    (z,) = _rk4(lambda a: (_rhs_z(a, g.bounded_op(), m.op),), (z,), dt)
    z = free_flow(z, grid, 0.5 * dt, "S")
    _ensure_finite(z)
    return Kernel.from_op(z, zeta.grid, zeta.weight, kind="symmetric")


def step_zr_ops(z, r, grid, B, m, dt):
    z = free_flow(z, grid, 0.5 * dt, "S")
    r = free_flow(r, grid, 0.5 * dt, "W")
    z, r = _rk4(lambda a, b: _rhs_zr(a, b, B, m), (z, r), dt)
    z = free_flow(z, grid, 0.5 * dt, "S")
    r = free_flow(r, grid, 0.5 * dt, "W")
    return z, r


def step_zr(zeta: Kernel, r: Kernel, dt: float, g: GData, m: Kernel):
    """Joint step of zeta and r = sh o sh-bar, with sh o ch rebuilt from zeta."""
    z, rr = step_zr_ops(zeta.op, r.op, g.grid, g.bounded_op(), m.op, dt)
    _ensure_finite(z, rr)
    return (Kernel.from_op(z, zeta.grid, zeta.weight, kind="symmetric"),
            Kernel.from_op(rr, r.grid, r.weight, kind="conjugate-symmetric"))


# --- changes of variables ------------------------------------------------------------

def zeta_op_from_s2_op(A: np.ndarray) -> np.ndarray:
    """zeta = A (I + sqrt(I + A^H A))^-1 for A = sh(2k) in operator form."""
    lam, U = np.linalg.eigh(A.conj().T @ A)
    lam = np.clip(lam, 0.0, None)
    w = 1.0 / (1.0 + np.sqrt(1.0 + lam))
    return A @ (U * w) @ U.conj().T


def zeta_from_s2(s2: Kernel) -> Kernel:
    return Kernel.from_op(zeta_op_from_s2_op(s2.op), s2.grid, s2.weight, kind="symmetric")


def r_op_from_zeta_op(z: np.ndarray) -> np.ndarray:
    """sh o sh-bar = zeta zeta^H (I - zeta zeta^H)^-1."""
    zz = z @ z.conj().T
    return np.linalg.solve((np.eye(z.shape[0]) - zz).T, zz.T).T


def r_from_zeta(zeta: Kernel) -> Kernel:
    return Kernel.from_op(r_op_from_zeta_op(zeta.op), zeta.grid, zeta.weight,
                          kind="conjugate-symmetric")


def identity_residual_ops(s, p) -> float:
    """HS norm of p o p + 2p - s-bar o s, i.e. (delta + p)^2 - s-bar s - delta."""
    return float(np.linalg.norm(p @ p + 2 * p - s.conj() @ s))


def form_residuals_ops(s, q, z, r) -> dict:
    """Pairwise disagreement (HS norms) between the three forms."""
    ab = np.linalg.norm(zeta_op_from_s2_op(s) - z)
    ac = np.linalg.norm(0.5 * q - r)
    bc = np.linalg.norm(r_op_from_zeta_op(z) - r)
    return {"A-B": float(ab), "A-C": float(ac), "B-C": float(bc)}


def trace_relation(s2: Kernel) -> dict:
    """Recover k from s2 and compare trace(p1 o p1 + 2 p1) with trace(s1-bar o s1)."""
    k = recover_k(s2) * 0.5
    sh, ch = sh_ch_of(k)
    p1 = ch.kernel_part
    lhs = trace(p1 @ p1 + 2.0 * p1)
    rhs = trace(sh.conj() @ sh)
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs),
            "min_diag_p1": float(np.min(np.diag(p1.values).real))}


# --- diagnostics --------------------------------------------------------------------

def duhamel_sa(m_history) -> Kernel:
    """Free-flow solution of (1/i) s_t + (-Lap_x - Lap_y) s = 2m from zero data.

    ``m_history`` is a sequence of (t, m Kernel) samples starting at t = 0; m is
    interpolated linearly in time and each interval is integrated exactly in
    double Fourier space.  Returns s_a at the last sample time.
    """
    hist = list(m_history)
    if len(hist) < 2:
        raise ValueError("duhamel_sa needs at least two m samples")
    ts = np.array([float(t) for t, _ in hist])
    if abs(ts[0]) > 1e-14 or np.any(np.diff(ts) <= 0):
        raise ValueError("m samples must start at t=0 and be strictly increasing")
    m0 = hist[0][1]
    grid = m0.grid
    shp = grid.shape
    k2 = grid.k_squared().reshape(-1)
    lam = (k2[:, None] + k2[None, :]).reshape(shp + shp)

    def hat(K):
        return np.fft.fftn(K.op.reshape(shp + shp))

    s_hat = np.zeros(shp + shp, dtype=np.complex128)
    prev = hat(m0)
    for j in range(1, len(hist)):
        h = ts[j] - ts[j - 1]
        cur = hat(hist[j][1])
        z = -1j * lam * h
        p1, p2 = _phi12(z)
        s_hat = np.exp(z) * s_hat + 2j * h * ((p1 - p2) * prev + p2 * cur)
        prev = cur
    s = np.fft.ifftn(s_hat).reshape(grid.size, grid.size)
    return Kernel.from_op(s, grid, m0.weight, kind="symmetric")


def _phi12(z):
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, stable near 0."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    p1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24, np.expm1(zs) / zs)
    p2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120, (np.expm1(zs) - zs) / zs**2)
    return p1, p2


@dataclass(frozen=True)
class GrowthFit:
    C: float
    log_sse: float
    power_exponent: float
    power_sse: float
    verdict: str


def growth_report(series, min_samples: int = 20, max_exponent: float = 0.25,
                  tail_fraction: float = 0.5) -> GrowthFit:
    """Fit ||s2|| + ||p2|| by C log(1+t) and test the tail for power-law growth.

    The tail (last ``tail_fraction`` of samples) is fitted by both
    a + b log(1+t) and a t^b; the verdict fails when the power law with
    b > ``max_exponent`` has the smaller squared error.
    """
    arr = np.asarray(list(series), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < min_samples or arr.shape[1] not in (2, 3):
        raise ValueError(f"growth_report needs at least {min_samples} samples")
    t = arr[:, 0]
    y = arr[:, 1] + (arr[:, 2] if arr.shape[1] == 3 else 0.0)
    L = np.log1p(t)
    C = float(np.dot(L, y) / np.dot(L, L)) if np.dot(L, L) > 0 else 0.0
    tail = slice(int(math.floor(len(t) * (1 - tail_fraction))), None)
    tt, yt = t[tail], y[tail]
    keep = (tt > 0) & (yt > 0)
    tt, yt = tt[keep], yt[keep]
    if len(tt) < 3:
        raise ValueError("not enough positive tail samples")
    Lt = np.log1p(tt)
    coef = np.polyfit(Lt, yt, 1)
    log_sse = float(np.sum((np.polyval(coef, Lt) - yt) ** 2))
    b, log_a = np.polyfit(np.log(tt), np.log(yt), 1)
    power_sse = float(np.sum((np.exp(log_a) * tt**b - yt) ** 2))
    verdict = "fail" if (b > max_exponent and power_sse < log_sse) else "pass"
    return GrowthFit(C, log_sse, float(b), power_sse, verdict)


# --- run driver ---------------------------------------------------------------------

@dataclass
class PairRunResult:
    rows: list
    final: PairState
    zeta: Kernel | None
    r: Kernel | None
    max_form_residuals: dict
    max_identity_residual: float
    max_symmetry_drift: float
    trace_checks: list


def _row(state: PairState, z, r) -> dict:
    s = state.s2.op
    q = state.p2.op.conj()
    row = {
        "t": state.t,
        "hs_norm_s2": hs_norm(state.s2),
        "hs_norm_p2": hs_norm(state.p2),
        "trace_p2_real": trace(state.p2).real,
        "identity_residual": identity_residual_ops(s, state.p2.op),
    }
    if z is not None:
        fr = form_residuals_ops(s, q, z, r)
        row["form_equivalence_residual"] = max(fr.values())
        row["_forms"] = fr
    else:
        row["form_equivalence_residual"] = float("nan")
    return row


def run_pair(hstate: HartreeState, dt: float, T: float, sample_every: int = 1,
             forms: bool = True, trace_every: int = 0, callback=None) -> PairRunResult:
    """Evolve from k(0) = 0 alongside the mean field, sampling diagnostics."""
    if not dt > 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    grid = hstate.grid
    v_N = hstate.potential.scaled
    state = PairState.initial(hstate)
    n = grid.size
    z = np.zeros((n, n), dtype=np.complex128) if forms else None
    r = np.zeros((n, n), dtype=np.complex128) if forms else None
    rows = [_row(state, z, r)]
    traces = []
    max_drift = 0.0
    for i in range(1, n_steps + 1):
        h_mid = hartree.step(state.hartree, 0.5 * dt)
        _, B, m = coefficients(h_mid.phi, v_N)
        s, q = step_pair_ops(state.s2.op, state.p2.op.conj(), grid, B, m, dt)
        if forms:
            z, r = step_zr_ops(z, r, grid, B, m, dt)
            _ensure_finite(z, r, t=state.t + dt)
        t = state.t + dt
        _ensure_finite(s, q, t=t)
        max_drift = max(max_drift, float(np.max(np.abs(s - s.T))),
                        float(np.max(np.abs(q - q.conj().T))))
        s, q = _resymmetrize(s, q, t)
        h_end = hartree.step(h_mid, 0.5 * dt)
        state = PairState(Kernel.from_op(s, grid, kind="symmetric"),
                          Kernel.from_op(q.conj(), grid, kind="conjugate-symmetric"), t, h_end)
        if i % sample_every == 0 or i == n_steps:
            row = _row(state, z, r)
            rows.append(row)
            if callback is not None:
                callback(state, row)
        if trace_every and i % trace_every == 0:
            traces.append((t, trace_relation(state.s2)))
    keys = ("A-B", "A-C", "B-C")
    max_forms = {k: max((row["_forms"][k] for row in rows if "_forms" in row), default=0.0)
                 for k in keys} if forms else {}
    return PairRunResult(
        rows=rows,
        final=state,
        zeta=Kernel.from_op(z, grid, kind="symmetric") if forms else None,
        r=Kernel.from_op(r, grid, kind="conjugate-symmetric") if forms else None,
        max_form_residuals=max_forms,
        max_identity_residual=max(row["identity_residual"] for row in rows),
        max_symmetry_drift=max_drift,
        trace_checks=traces,
    )


PAIR_CSV_COLUMNS = ["t", "hs_norm_s2", "hs_norm_p2", "trace_p2_real",
                    "identity_residual", "form_equivalence_residual"]
