"""Experiment orchestration: config in, CSV/JSON artifacts and a manifest out."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from pathlib import Path

import numpy as np

from . import __version__, errors, fock, hartree, pair
from .config import RunConfig
from .grid import make_grid, read_field

__all__ = ["StageError", "run", "build_initial_state", "digest_outputs"]

log = logging.getLogger("bosepair")


class StageError(RuntimeError):
    """A module error, tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


class _Outputs:
    """Writes files only inside one directory and remembers what it wrote."""

    def __init__(self, root: Path):
        self.root = root.resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if self.root not in p.parents:
            raise ValueError(f"refusing to write outside the output directory: {name}")
        return p

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8")
        if name not in self.files:
            self.files.append(name)

    def write_json(self, name: str, obj) -> None:
        self.write_text(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, columns, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
        self.write_text(name, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def digest_outputs(root: Path, names) -> dict:
    return {name: hashlib.sha256((Path(root) / name).read_bytes()).hexdigest()
            for name in sorted(names)}


def _check(name, value, tol, passed=None):
    ok = bool(value < tol) if passed is None else bool(passed)
    return {"criterion": name, "value": value, "tolerance": tol, "pass": ok}


def build_initial_state(cfg: RunConfig, N=None, beta=None) -> hartree.HartreeState:
    grid = make_grid(cfg.dim, cfg.n, cfg.box_length)
    prof = hartree.Profile(cfg.potential.profile, cfg.potential.width, cfg.potential.height)
    pot = hartree.scaled_potential(prof, grid, cfg.N if N is None else N,
                                   cfg.beta if beta is None else beta)
    p = cfg.phi0
    if p.kind == "file":
        with open(p.path, "rb") as fh:
            phi = read_field(fh)
        if phi.grid != grid:
            raise ValueError(f"phi0 file grid {phi.grid} does not match the configured grid")
    else:
        phi = hartree.gaussian_packet(grid, p.center, p.momentum, p.width, p.norm)
    return hartree.HartreeState(phi, 0.0, pot)


# --- experiments ---------------------------------------------------------------------

def _hartree_row(state, with_q: bool) -> dict:
    cq = hartree.conserved_quantities(state)
    row = {"t": state.t, "mass": cq["mass"], "energy": cq["energy"],
           "sup_norm": hartree.sup_norm(state), "l4_norm": hartree.l4_norm(state.phi)}
    for i, p in enumerate(cq["momentum"]):
        row[f"momentum_{i + 1}"] = p
    row["morawetz_Q"] = hartree.morawetz_Q(state) if with_q else float("nan")
    return row


def run_hartree(cfg: RunConfig, out: _Outputs) -> dict:
    with _Stage("initial-state"):
        state = build_initial_state(cfg)
    with_q = state.grid.size**2 <= hartree.DEFAULT_PAIR_BUDGET
    n_steps = int(round(cfg.T / cfg.dt))
    with _Stage("hartree"):
        rows = [_hartree_row(state, with_q)]
        for i in range(1, n_steps + 1):
            state = hartree.step(state, cfg.dt)
            if i % cfg.sample_every == 0 or i == n_steps:
                rows.append(_hartree_row(state, with_q))
    cols = ["t", "mass", "energy"] + [f"momentum_{i + 1}" for i in range(cfg.dim)] + \
        ["sup_norm", "l4_norm", "morawetz_Q"]
    out.write_csv("hartree.csv", cols, rows)
    tol = cfg.tolerances
    first = rows[0]
    mass = max(abs(r["mass"] - first["mass"]) for r in rows)
    energy = max(abs(r["energy"] - first["energy"]) for r in rows)
    mom = max(abs(r[f"momentum_{i + 1}"] - first[f"momentum_{i + 1}"])
              for r in rows for i in range(cfg.dim))
    return {"checks": [_check("mass_drift", mass, tol.mass_drift),
                       _check("energy_drift", energy, tol.energy_drift),
                       _check("momentum_drift", mom, tol.momentum_drift)]}


def run_pair_experiment(cfg: RunConfig, out: _Outputs) -> dict:
    with _Stage("initial-state"):
        h0 = build_initial_state(cfg)
    v_N = h0.potential.scaled
    ledger = errors.PhaseLedger(float(cfg.N))

    def on_sample(state, row):
        sh, ch = errors.state_kernels(state.s2)
        m = pair.build_m(state.hartree.phi, v_N)
        mu0 = errors.mu0(state.hartree.phi, v_N)
        mu1 = errors.mu1(sh, ch, m, v_N, cfg.N)["mu1"]
        ledger.record(state.t, mu0, mu1)
        row.update({"mu0": mu0, "mu1": mu1, "chi": ledger.chi})

    with _Stage("pair"):
        first = {}
        on_sample(pair.PairState.initial(h0), first)
        res = pair.run_pair(h0, cfg.dt, cfg.T, sample_every=cfg.sample_every, forms=True,
                            trace_every=cfg.sample_every, callback=on_sample)
        res.rows[0].update(first)
    cols = pair.PAIR_CSV_COLUMNS + ["mu0", "mu1", "chi"]
    out.write_csv("pair.csv", cols, res.rows)
    tol = cfg.tolerances
    checks = [_check("identity_residual", res.max_identity_residual, tol.identity_residual)]
    for k, v in res.max_form_residuals.items():
        checks.append(_check(f"form_{k}", v, tol.form_residual))
    if res.trace_checks:
        tr = max(c["residual"] for _, c in res.trace_checks)
        diag = min(c["min_diag_p1"] for _, c in res.trace_checks)
        checks.append(_check("trace_relation", tr, tol.trace_residual))
        checks.append(_check("min_diag_p1", diag, -tol.trace_residual, passed=diag > -tol.trace_residual))
    series = [(r["t"], r["hs_norm_s2"], r["hs_norm_p2"]) for r in res.rows]
    summary = {"checks": checks}
    if len(series) >= 20:
        g = pair.growth_report(series)
        summary["growth"] = {"C": g.C, "log_sse": g.log_sse, "power_exponent": g.power_exponent,
                             "power_sse": g.power_sse, "verdict": g.verdict}
        checks.append(_check("growth_verdict", g.power_exponent, None, passed=g.verdict == "pass"))
    grid = h0.grid
    if grid.dim == 1 and grid.size <= errors.QUARTIC_MAX_N:
        with _Stage("error-terms"):
            sh, ch = errors.state_kernels(res.final.s2)
            bd = errors.error_breakdown(sh, ch.kernel_part, res.final.hartree.phi, v_N, cfg.N)
        out.write_json("errors.json", bd.to_json())
    else:
        summary["errors_skipped"] = "error kernels need dim = 1 and n <= 32"
    return summary


def run_fock_verify(cfg: RunConfig, out: _Outputs) -> dict:
    fk = cfg.fock
    rng = np.random.default_rng(cfg.seed)
    records = []
    tol = cfg.tolerances
    with _Stage("lie-isomorphism"):
        space = fock.TruncatedFock(fk.modes, fk.n_max)
        worst = 0.0
        for _ in range(fk.trials):
            L1 = fock.SymplecticBlock.random(rng, fk.modes)
            L2 = fock.SymplecticBlock.random(rng, fk.modes)
            worst = max(worst, fock.check_isomorphism(space, L1, L2))
        records.append(fock.report_record("lie-isomorphism", fk.modes, fk.n_max,
                                          {"trials": fk.trials}, worst))
    with _Stage("bogoliubov"):
        b = fock.bogoliubov(np.array([[fk.theta]]), fk.bogoliubov_n_max)
        records.append(fock.report_record("bogoliubov", 1, fk.bogoliubov_n_max,
                                          {"theta": fk.theta, "truncation_dominated":
                                           b["truncation_dominated"]}, b["residual"]))
    checks = [_check("lie_isomorphism", worst, tol.lie_residual),
              _check("bogoliubov", b["residual"], tol.bogoliubov_residual)]
    if cfg.dim == 1:
        with _Stage("block-refinement"):
            h0 = build_initial_state(cfg)
            study = fock.block_refinement_study(h0)
        for r in study["runs"]:
            records.append(fock.report_record("block-diagonal", 2, 0, {"dt": r["dt"]},
                                              r["residual"], r["noise_floor"]))
        order = min(study["orders"])
        checks.append(_check("block_residual_order", order, None, passed=order > 1.8))
    out.write_json("fock.json", {"records": records})
    return {"checks": checks}


SWEEP_COLUMNS = ["N", "beta", "cubic_norm", "quartic_norm", "total"]


def run_error_sweep(cfg: RunConfig, out: _Outputs) -> dict:
    setup = errors.SweepSetup(n=cfg.n, box_length=cfg.box_length, profile=cfg.potential.profile,
                              width=cfg.potential.width, height=cfg.potential.height,
                              phi_width=cfg.phi0.width, phi_norm=cfg.phi0.norm, dt=cfg.dt)
    rows, fits, checks = [], {}, []
    window = cfg.tolerances.exponent_window
    for beta in cfg.sweep.betas:
        with _Stage(f"error-sweep beta={beta}"):
            study = errors.scaling_study(beta, cfg.sweep.N_list, cfg.T, setup, cfg.sweep.workers)
        for p in study["points"]:
            rows.append({k: p[k] for k in SWEEP_COLUMNS})
            out.write_json(f"breakdown_N{p['N']}_beta{beta:g}.json", p["breakdown"].to_json())
        fits[f"{beta:g}"] = {"fits": study["fits"], "predicted": study["predicted"]}
        for part in ("cubic", "quartic"):
            slope = study["fits"][part]["slope"]
            dev = abs(slope - study["predicted"][part])
            checks.append(_check(f"{part}_exponent_beta{beta:g}", dev, window))
    out.write_csv("sweep.csv", SWEEP_COLUMNS, rows)
    out.write_json("sweep_fits.json", fits)
    return {"checks": checks, "fits": fits}


EXPERIMENT_RUNNERS = {
    "hartree": run_hartree,
    "pair": run_pair_experiment,
    "fock-verify": run_fock_verify,
    "error-sweep": run_error_sweep,
}


def run(cfg: RunConfig, output_dir: str | Path | None = None) -> dict:
    """Run one experiment; returns the manifest (also written to manifest.json)."""
    out = _Outputs(Path(output_dir if output_dir is not None else cfg.output_dir))
    start = time.perf_counter()
    summary = EXPERIMENT_RUNNERS[cfg.experiment](cfg, out)
    wall = time.perf_counter() - start
    manifest = {
        "config": cfg.to_dict(),
        "code_version": __version__,
        "wall_time_s": wall,
        "acceptance": summary,
        "outputs": digest_outputs(out.root, out.files),
    }
    out.write_json("manifest.json", manifest)
    return manifest
