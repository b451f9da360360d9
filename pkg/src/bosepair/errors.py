"""Error-term kernels of the reduced Hamiltonian acting on the vacuum.

With b_x = e^B a_x e^{-B} = int ch(y,x) a_y + sh(y,x) a*_y dy, the error
operator is E = P3(b) + N^{-1/2} P4(b) where

    P3 = int v_N(x-y) (phi(y) a*_x a*_y a_x + conj(phi(y)) a*_x a_x a_y)
    P4 = 1/2 int v_N(x-y) a*_x a*_y a_x a_y .

E|0> is obtained by Wick ordering.  The contractions that occur are

    (b*_x, b*_y) = (sh-bar o ch-bar)(x, y)
    (b*_x, b_y)  = (sh-bar o sh)(x, y)
    (b_x,  b_y)  = (sh o ch)(x, y)

none of which carry a delta.  Every surviving term is kept under its label:
sector 3 (main-cubic-irred, cubic-irred-1..5), sector 1 (linear-from-cubicI-1..3,
linear-from-cubicII-1..3), sector 4 (main-quartic-irred, quartic-irred-1..3),
sector 2 (quadratic-1..6) and the zero-order pieces that go into mu1.

Term kernels carry the prefactors N^{-1/2} (cubic) and 1/(2N) (quartic),
i.e. they describe N^{-1/2} E|0>.  A sector-j vector int K a*..a*|0> has
squared norm j! ||Sym K||^2.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, convolve
from .hartree import ResourceGuardError, pair_matrix
from .kernels import DiagonalPlusKernel, Kernel, compose, invert_ch, recover_k, sh_ch_of, trace

__all__ = [
    "mu0",
    "mu1",
    "ErrorInputs",
    "ErrorBreakdown",
    "cubic_kernels",
    "quartic_kernels",
    "error_breakdown",
    "fock_norm_E",
    "sector_norm",
    "fit_exponent",
    "PhaseLedger",
    "SweepSetup",
    "sweep_point",
    "scaling_study",
    "predicted_exponents",
    "state_kernels",
    "main_quartic_bound",
    "mode_projected_check",
    "LABELS",
    "RAW_LABELS",
]

CUBIC_MAX_N = 64
QUARTIC_MAX_N = 32

SECTOR3_LABELS = ["main-cubic-irred"] + [f"cubic-irred-{i}" for i in range(1, 6)]
SECTOR1_LABELS = [f"linear-from-cubicI-{i}" for i in range(1, 4)] + \
    [f"linear-from-cubicII-{i}" for i in range(1, 4)]
SECTOR4_LABELS = ["main-quartic-irred"] + [f"quartic-irred-{i}" for i in range(1, 4)]
SECTOR2_LABELS = [f"quadratic-{i}" for i in range(1, 7)]
MU1_LABELS = ["mu1-trace", "mu1-integral-1", "mu1-integral-2", "mu1-integral-3"]
LABELS = SECTOR3_LABELS + SECTOR1_LABELS + SECTOR4_LABELS + SECTOR2_LABELS

# raw (pre-reduction) labels and the reduced pieces each one becomes;
# an empty tuple marks a term that annihilates the vacuum
RAW_LABELS = {
    "quartic-a": ("quadratic-1", "quadratic-2"),
    "quartic-b": ("quadratic-3", "quadratic-4"),
    "quartic-c": tuple(SECTOR4_LABELS),
    "quartic-d": ("mu1-integral-1", "mu1-integral-2"),
    "quartic-e": ("quadratic-5",),
    "quartic-f": ("quadratic-6",),
    "quartic-g": ("mu1-integral-3",),
    "cubicI-a": ("linear-from-cubicI-1", "linear-from-cubicI-2"),
    "cubicI-b": ("cubic-irred-1", "cubic-irred-4"),
    "cubicI-c": ("linear-from-cubicI-3",),
    "cubicII-a": ("linear-from-cubicII-2",),
    "cubicII-b": ("linear-from-cubicII-1",),
    "cubicII-c": ("main-cubic-irred", "cubic-irred-2", "cubic-irred-3", "cubic-irred-5"),
    "cubicII-d": (),
    "cubicII-e": ("linear-from-cubicII-3",),
}


def mu0(phi: Field, v_N: Field) -> float:
    """1/2 int int v_N(x-y) |phi(x)|^2 |phi(y)|^2."""
    dens = Field(phi.grid, np.abs(phi.values) ** 2)
    V = convolve(v_N, dens).values.real
    return float(0.5 * np.sum(V * dens.values.real) * phi.grid.dx)


@dataclass
class ErrorInputs:
    """Dense arrays shared by all term evaluations (kernel values, not op forms)."""

    sh: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    V: np.ndarray
    dx: float
    N: float

    @classmethod
    def build(cls, sh: Kernel, p1: Kernel, phi: Field, v_N: Field, N) -> "ErrorInputs":
        if phi.grid.dim != 1:
            raise ResourceGuardError("error kernels with 3 or 4 arguments are limited to d=1")
        return cls(sh.values, p1.values, phi.flat(), pair_matrix(v_N), phi.grid.dx, float(N))

    @property
    def n(self) -> int:
        return self.sh.shape[0]

    @property
    def pb(self):
        return self.p.conj()

    @property
    def r(self):
        """(sh o sh-bar)(x, y)."""
        return self.sh @ self.sh.conj() * self.dx

    @property
    def sc(self):
        """(sh o ch)(x, y) = (ch-bar o sh)(x, y)."""
        return self.sh + self.sh @ self.p * self.dx

    def chb_apply(self, f):
        """int ch-bar(u, x) f(x, ...) dx along the first axis."""
        return f + np.tensordot(self.pb, f, axes=(1, 0)) * self.dx

    def ch_apply_right(self, f):
        """int f(..., x) ch(x, u) dx along the last axis."""
        return f + np.tensordot(f, self.p, axes=(-1, 0)) * self.dx


def _einsum(subscripts, *ops):
    return np.einsum(subscripts, *ops, optimize=True)


def cubic_kernels(sh: Kernel, p1: Kernel, phi: Field, v_N: Field, N, inputs=None) -> dict:
    """Sector-3 and sector-1 kernels of N^{-1/2} P3(b)|0>, keyed by label."""
    X = inputs or ErrorInputs.build(sh, p1, phi, v_N, N)
    if X.n > CUBIC_MAX_N:
        raise ResourceGuardError(f"3-argument kernels need n <= {CUBIC_MAX_N}, got {X.n}")
    S, P, Pb, f, V, dx = X.sh, X.p, X.pb, X.phi, X.V, X.dx
    fb = f.conj()
    pre = X.N ** -0.5
    out = {}
    # sector 3, arguments (y1, y2, y3)
    out["main-cubic-irred"] = _einsum("ab,b,ac->abc", V, f, S)
    W1 = (V * fb[None, :]) @ S * dx  # int v(y1-x) conj(phi(x)) sh(x, y3)
    out["cubic-irred-1"] = _einsum("ac,ba->abc", W1, S)
    out["cubic-irred-2"] = _einsum("ax,xb,cx,b->abc", Pb, V, S, f) * dx
    W3 = (V * f[None, :]) @ Pb.T * dx  # int v(y1-x) phi(x) p-bar(y2, x)
    out["cubic-irred-3"] = _einsum("ab,ca->abc", W3, S)
    G = (V * fb[None, :]) @ S * dx  # G[x1, y3]
    out["cubic-irred-4"] = _einsum("ax,bx,xc->abc", Pb, S, G) * dx
    H = (V * f[None, :]) @ P * dx  # H[x1, y2] = int v(x1-x2) phi(x2) p(x2, y2)
    out["cubic-irred-5"] = _einsum("ax,xb,cx->abc", Pb, H, S) * dx
    # sector 1, argument u
    r, sc = X.r, X.sc
    rdiag = np.diag(r).real
    w_phib = (V.T @ rdiag) * dx  # int v(x1-x2) r(x1,x1) dx1, as a function of x2
    out["linear-from-cubicI-1"] = S @ (w_phib * fb) * dx
    out["linear-from-cubicI-2"] = S @ (((r.conj() * V) @ fb) * dx) * dx
    out["linear-from-cubicI-3"] = X.chb_apply(((sc * V) @ fb) * dx)
    out["linear-from-cubicII-1"] = X.chb_apply(((r * V) @ f) * dx)
    out["linear-from-cubicII-2"] = X.chb_apply(w_phib * f)
    out["linear-from-cubicII-3"] = S @ (((sc.conj() * V) @ f) * dx) * dx
    return {k: pre * v for k, v in out.items()}


def quartic_kernels(sh: Kernel, p1: Kernel, v_N: Field, N, phi: Field | None = None,
                    inputs=None) -> dict:
    """Sector-4 and sector-2 kernels of N^{-1} P4(b)|0>, keyed by label."""
    if inputs is None:
        grid = sh.grid
        phi = phi if phi is not None else Field.zeros(grid)
        inputs = ErrorInputs.build(sh, p1, phi, v_N, N)
    X = inputs
    if X.n > QUARTIC_MAX_N:
        raise ResourceGuardError(f"4-argument kernels need n <= {QUARTIC_MAX_N}, got {X.n}")
    S, P, Pb, V, dx = X.sh, X.p, X.pb, X.V, X.dx
    pre = 0.5 / X.N
    out = {}
    # sector 4, arguments (y1, y2, y3, y4)
    out["main-quartic-irred"] = _einsum("ab,ca,bd->abcd", V, S, S)
    A1 = _einsum("ax,bx,xd->abd", V, Pb, S) * dx
    out["quartic-irred-1"] = _einsum("abd,ca->abcd", A1, S)
    A2 = _einsum("ax,xb,cx->abc", Pb, V, S) * dx
    out["quartic-irred-2"] = _einsum("abc,bd->abcd", A2, S)
    F = _einsum("xy,yb,yd->xbd", V, P, S) * dx  # F[x1, y2, y4]
    out["quartic-irred-3"] = _einsum("ax,cx,xbd->abcd", Pb, S, F) * dx
    # sector 2, arguments (y1, y2)
    r, sc = X.r, X.sc
    rdiag = np.diag(r).real
    w = (V.T @ rdiag) * dx
    out["quadratic-1"] = X.chb_apply(w[:, None] * S)
    out["quadratic-2"] = X.chb_apply((r * V) @ S * dx)
    out["quadratic-3"] = X.chb_apply((r * V) @ S * dx)
    out["quadratic-4"] = X.chb_apply(w[:, None] * S)
    out["quadratic-5"] = S.T @ (sc.conj() * V) @ S * dx * dx
    out["quadratic-6"] = X.ch_apply_right(X.chb_apply(sc * V))
    return {k: pre * v for k, v in out.items()}


def main_quartic_bound(sh: Kernel, v_N: Field, N) -> tuple[float, float]:
    """(||main quartic kernel||, (1/2N) ||v_N||_inf ||sh||_HS^2)."""
    S, dx = sh.values, sh.weight
    K = 0.5 / float(N) * _einsum("ab,ca,bd->abcd", pair_matrix(v_N), S, S)
    lhs = float(np.sqrt(np.sum(np.abs(K) ** 2) * dx**4))
    hs2 = float(np.sum(np.abs(S) ** 2) * dx**2)
    return lhs, 0.5 / float(N) * float(np.max(np.abs(v_N.values))) * hs2


def symmetrize(K: np.ndarray) -> np.ndarray:
    perms = list(itertools.permutations(range(K.ndim)))
    return sum(np.transpose(K, p) for p in perms) / len(perms)


def sector_norm(K: np.ndarray, dx: float) -> float:
    """Fock norm of int K(y1..yj) a*_{y1}..a*_{yj}|0>: sqrt(j!) ||Sym K||."""
    j = K.ndim
    S = symmetrize(K) if j > 1 else K
    return float(math.sqrt(math.factorial(j) * np.sum(np.abs(S) ** 2) * dx**j))


def mu1(sh: Kernel, ch: DiagonalPlusKernel, m: Kernel, v_N: Field, N) -> dict:
    """Zero-order phase term: trace part plus the three v_N-weighted integrals."""
    chb_inv = invert_ch(ch.conj())
    t1 = trace(compose(compose(chb_inv, m), sh.conj()))
    t2 = trace(compose(compose(sh, m.conj()), chb_inv))
    # same trace, other association/cyclic order
    t1_alt = trace(compose(sh.conj(), compose(chb_inv, m)))
    t2_alt = trace(compose(chb_inv, compose(sh, m.conj())))
    trace_term = -0.25 * (t1 + t2)
    V = pair_matrix(v_N)
    dx = sh.weight
    S, P = sh.values, ch.kernel_part.values
    r = S @ S.conj() * dx
    sc = S + S @ P * dx
    rd = np.diag(r).real
    pre = 1.0 / (2.0 * float(N))
    i1 = pre * np.sum(r * V * r.conj()) * dx**2
    i2 = pre * (rd @ V @ rd) * dx**2
    i3 = pre * np.sum(sc.conj() * V * sc) * dx**2
    total = trace_term + i1 + i2 + i3
    return {
        "mu1": float(total.real),
        "imag": float(total.imag),
        "mu1-trace": complex(trace_term),
        "mu1-integral-1": float(i1.real),
        "mu1-integral-2": float(i2.real),
        "mu1-integral-3": float(i3.real),
        "trace_cyclic_residual": float(max(abs(t1 - t1_alt), abs(t2 - t2_alt))),
    }


@dataclass
class ErrorBreakdown:
    N: float
    term_norms: dict
    raw_norms: dict
    sector_norms: dict  # sectors of E|0> (not scaled by N^{-1/2})
    cubic_norm: float  # N^{-1/2} || P3(b)|0> ||
    quartic_norm: float  # N^{-1} || P4(b)|0> ||, sectors 2 and 4
    total: float  # || E|0> ||
    sector_kernels: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "terms": self.term_norms,
            "raw_terms": self.raw_norms,
            "sectors": {str(k): v for k, v in self.sector_norms.items()},
            "cubic_norm": self.cubic_norm,
            "quartic_norm": self.quartic_norm,
            "total": self.total,
        }


def error_breakdown(sh: Kernel, p1: Kernel, phi: Field, v_N: Field, N,
                    include_quartic: bool = True) -> ErrorBreakdown:
    X = ErrorInputs.build(sh, p1, phi, v_N, N)
    dx = X.dx
    terms = cubic_kernels(sh, p1, phi, v_N, N, inputs=X)
    if include_quartic:
        terms.update(quartic_kernels(sh, p1, v_N, N, inputs=X))
    norms = {k: sector_norm(v, dx) for k, v in terms.items()}
    groups = {3: SECTOR3_LABELS, 1: SECTOR1_LABELS}
    if include_quartic:
        groups.update({4: SECTOR4_LABELS, 2: SECTOR2_LABELS})
    kernels = {j: sum(terms[k] for k in labels) for j, labels in groups.items()}
    scaled = {j: sector_norm(K, dx) for j, K in kernels.items()}
    cubic = math.sqrt(scaled[1] ** 2 + scaled[3] ** 2)
    quartic = math.sqrt(scaled.get(2, 0.0) ** 2 + scaled.get(4, 0.0) ** 2)
    # the term kernels describe N^{-1/2} E|0>
    rootN = math.sqrt(float(N))
    sectors = {j: rootN * v for j, v in scaled.items()}
    raw = {}
    for label, parts in RAW_LABELS.items():
        pieces = [terms[p] for p in parts if p in terms]
        raw[label] = sector_norm(sum(pieces), dx) if pieces else 0.0
    return ErrorBreakdown(float(N), norms, raw, sectors, cubic, quartic,
                          fock_norm_E(sectors), kernels)


def fock_norm_E(breakdown) -> float:
    """|| E|0> ||_F from sector norms, summed in quadrature (sectors are orthogonal)."""
    sectors = breakdown.sector_norms if isinstance(breakdown, ErrorBreakdown) else breakdown
    return float(math.sqrt(sum(v**2 for v in sectors.values())))


def fit_exponent(N_list, values, level: float = 0.95) -> dict:
    """Least-squares slope of log(values) vs log(N) with a t-based confidence interval."""
    from scipy import stats

    N_arr = np.asarray(N_list, dtype=float)
    y = np.asarray(values, dtype=float)
    if N_arr.size < 3:
        raise ValueError("need at least 3 points to fit an exponent")
    if np.any(y <= 0) or np.any(N_arr <= 0):
        raise ValueError("values and N must be positive")
    res = stats.linregress(np.log(N_arr), np.log(y))
    dof = N_arr.size - 2
    half = float(stats.t.ppf(0.5 + level / 2, dof) * res.stderr) if dof > 0 else float("nan")
    return {"slope": float(res.slope), "intercept": float(res.intercept),
            "stderr": float(res.stderr), "ci": [float(res.slope) - half, float(res.slope) + half]}


def state_kernels(s2: Kernel):
    """(sh(k), ch(k)) from the pair kernel s2 = sh(2k)."""
    k = recover_k(s2) * 0.5
    return sh_ch_of(k)


@dataclass
class PhaseLedger:
    """Accumulated phase chi = int (mu0 + mu1 / N) dt, by the trapezoid rule."""

    N: float
    mu0: float = 0.0
    mu1: float = 0.0
    chi: float = 0.0
    t: float = 0.0
    _started: bool = False

    def record(self, t: float, mu0_value: float, mu1_value: float) -> None:
        if self._started:
            if t < self.t:
                raise ValueError("phase samples must be in time order")
            prev = self.mu0 + self.mu1 / self.N
            cur = mu0_value + mu1_value / self.N
            self.chi += 0.5 * (t - self.t) * (prev + cur)
        self.mu0, self.mu1, self.t, self._started = float(mu0_value), float(mu1_value), float(t), True


@dataclass(frozen=True)
class SweepSetup:
    """Fixed physical setup shared by every N of a scaling sweep (d = 1)."""

    n: int = 32
    box_length: float = 32.0
    profile: str = "gaussian"
    width: float = 6.0
    height: float = 0.1
    phi_width: float = 2.0
    phi_norm: float = 1.0
    dt: float = 0.01


def sweep_point(N: int, beta: float, T: float, setup: SweepSetup = SweepSetup()) -> dict:
    """Full pipeline for one N: mean field and pair run to T, then the error breakdown."""
    from .grid import make_grid
    from .hartree import HartreeState, Profile, gaussian_packet, scaled_potential
    from .pair import run_pair

    if setup.n > QUARTIC_MAX_N:
        raise ResourceGuardError(f"4-argument kernels need n <= {QUARTIC_MAX_N}, got {setup.n}")
    grid = make_grid(1, setup.n, setup.box_length)
    pot = scaled_potential(Profile(setup.profile, setup.width, setup.height), grid, N, beta)
    h0 = HartreeState(gaussian_packet(grid, 0.0, 0.0, setup.phi_width, setup.phi_norm), 0.0, pot)
    run = run_pair(h0, setup.dt, T, sample_every=max(1, int(round(T / setup.dt))), forms=False)
    sh, ch = state_kernels(run.final.s2)
    bd = error_breakdown(sh, ch.kernel_part, run.final.hartree.phi, pot.scaled, N)
    return {"N": int(N), "beta": float(beta), "cubic_norm": bd.cubic_norm,
            "quartic_norm": bd.quartic_norm, "total": bd.total, "breakdown": bd}


def predicted_exponents(beta: float, dim: int = 1) -> dict:
    return {"cubic": (dim * beta - 1.0) / 2.0, "quartic": dim * beta - 1.0}


def scaling_study(beta: float, N_list, T: float, setup: SweepSetup = SweepSetup(),
                  workers: int = 1) -> dict:
    """Sweep N, fit log-norm against log N for the cubic and quartic parts."""
    N_list = [int(N) for N in N_list]
    if len(set(N_list)) < 3:
        raise ValueError("scaling study needs at least 3 distinct N values")
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            points = list(pool.map(sweep_point, N_list, [beta] * len(N_list),
                                   [T] * len(N_list), [setup] * len(N_list)))
    else:
        points = [sweep_point(N, beta, T, setup) for N in N_list]
    Ns = [p["N"] for p in points]
    fits = {
        "cubic": fit_exponent(Ns, [p["cubic_norm"] for p in points]),
        "quartic": fit_exponent(Ns, [p["quartic_norm"] for p in points]),
    }
    return {"beta": beta, "T": T, "points": points, "fits": fits,
            "predicted": predicted_exponents(beta)}


def mode_projected_check(k: Kernel, phi: Field, v_N: Field, N, sites, n_max: int = 12) -> dict:
    """Grid breakdown vs the dense Fock evaluation for data living on a few sites.

    k and phi must vanish off ``sites``; then the grid integrals reduce to sums
    over those sites and a_{x_i} = a_i / sqrt(dx) maps the problem onto M modes.
    """
    from .fock import error_vector

    sites = list(sites)
    grid = phi.grid
    mask = np.ones(grid.size, dtype=bool)
    mask[sites] = False
    f = phi.flat()
    if np.any(np.abs(f[mask]) > 0) or np.any(np.abs(k.values[mask]) > 0) \
            or np.any(np.abs(k.values[:, mask]) > 0):
        raise ValueError("k and phi must vanish off the chosen sites")
    sh, ch = sh_ch_of(k)
    bd = error_breakdown(sh, ch.kernel_part, phi, v_N, N)
    ix = np.ix_(sites, sites)
    vec = error_vector(k.op[ix], f[sites], pair_matrix(v_N)[ix], N, n_max, cell=grid.dx)
    dense = {j: float(np.linalg.norm(vec.amplitudes[vec.fock.sector(j)])) for j in range(1, 5)}
    total = math.sqrt(sum(v**2 for v in dense.values()))
    return {"grid_total": bd.total, "dense_total": total, "grid_sectors": bd.sector_norms,
            "dense_sectors": dense, "vacuum_component": complex(vec.amplitudes[0]),
            "difference": abs(bd.total - total)}
