"""Experiment orchestration: solve, scan, fit and persist."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..blowup import Region, eta, fit_growth_exponent, holder_seminorm, segregation_mass
from ..extension_solver import Field, NumericalFailure
from ..monotonicity import (SCAN_COLUMNS, acf_perturbed, almgren_coexistence,
                            almgren_segregated, check_nondecreasing, radial_scan)
from ..spectral import gamma, lambda1, nu_acf_estimate, phi_caps, SpectralProblem, default_theta_grid
from . import io
from .config import ExperimentConfig

log = logging.getLogger(__name__)

OUTPUT_ENV = "FRACSEG_OUTPUT_ROOT"
LOG_DERIVATIVE_RTOL = 0.02


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunManifest:
    path: Path
    data: dict
    skipped: bool = False

    @property
    def config_hash(self) -> str:
        return self.data["config_hash"]

    @property
    def suites(self) -> list[dict]:
        return self.data.get("suites", [])

    @property
    def passed(self) -> bool:
        return all(s["passed"] for s in self.suites)

    def files(self) -> list[Path]:
        return [self.path.parent / f for f in self.data.get("files", [])]


def output_root(cli_out: str | None, cfg_output: str | None = None) -> Path:
    """``--out`` wins, then the environment variable, then the config's ``output``."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(cfg_output or "runs")


def beta_tag(beta: float) -> str:
    return f"beta_{beta:.6g}".replace("+", "")


def center_tag(x0: float) -> str:
    return f"x{x0:+.4f}"


def _up_to_date(manifest: Path, config_hash: str) -> bool:
    if not manifest.exists():
        return False
    try:
        data = io.read_json(manifest)
    except ValueError:
        return False
    if data.get("config_hash") != config_hash:
        return False
    for name in data.get("files", []):
        p = manifest.parent / name
        if not p.exists():
            return False
        side = io.sidecar_path(p)
        if side.exists() and io.read_json(side).get("config_hash") != config_hash:
            return False
    return True


def solve_stage(cfg: ExperimentConfig, beta: float):
    from ..extension_solver import solve_system
    grid = cfg.half_grid()
    try:
        f, rep = solve_system(grid, cfg.params(beta), cfg.dirichlet_data(), cfg.options())
    except (NumericalFailure, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError("solve", exc) from exc
    if not rep.converged:
        raise StageError("solve", NumericalFailure(
            f"beta={beta:g}: no convergence after {rep.iterations} iterations "
            f"(relative residual {rep.relative_residual:.3e})"))
    return f, rep


def scan_suites(cfg: ExperimentConfig, f: Field, beta: float, x0: float) -> tuple[dict, list[dict]]:
    """Monotone quantities on one field and the pass/fail record of each theorem suite."""
    params = cfg.params(beta)
    r = cfg.radii()
    rtol = cfg.scan.rtol
    tag = f"{beta_tag(beta)},{center_tag(x0)}"
    suites = []
    if beta > 0:
        alm = almgren_coexistence(f, params, x0, r)
        gap = alm.extras["log_derivative_gap"]
        scale = np.abs(alm.N[:-1] / r[:-1] + alm.N[1:] / r[1:])
        rel = gap / np.where(scale > 0, scale, 1.0)
        bad = np.nonzero(rel < -LOG_DERIVATIVE_RTOL)[0]
        suites.append({"name": f"log_derivative[{tag}]", "passed": bool(bad.size == 0),
                       "worst": float(max(0.0, -np.nanmin(rel))),
                       "radius": float(r[bad[0] + 1]) if bad.size else None})
    else:
        alm = almgren_segregated(f, x0, r)
    ok, at, worst = check_nondecreasing(r, alm.N, rtol)
    suites.append({"name": f"almgren_{alm.variant}[{tag}]", "passed": ok, "worst": worst, "radius": at})
    if f.k >= 2:
        pert = acf_perturbed(f, x0, r, cfg.scan.nu_prime, beta=beta if beta > 0 else 1.0)
        upper = slice(r.size // 2, None)
        ok, at, worst = check_nondecreasing(r[upper], pert.phi[upper], rtol)
        suites.append({"name": f"acf_perturbed_upper[{tag}]", "passed": ok, "worst": worst, "radius": at,
                       "monotone_from": pert.monotone_from})
    return {"N": alm.N, "H": alm.H}, suites


def _stamp(manifest_files: list, out: Path, path: Path) -> None:
    manifest_files.append(str(path.relative_to(out)))


def run(cfg: ExperimentConfig, out_root: str | Path | None = None, force: bool = False) -> RunManifest:
    """solve -> scans -> fits for every beta of the sweep; idempotent per config hash."""
    out = Path(out_root if out_root is not None else output_root(None, cfg.output)) / cfg.name
    h = cfg.hash()
    mpath = out / "manifest.json"
    if not force and _up_to_date(mpath, h):
        log.info("up to date, skipping (%s)", mpath)
        return RunManifest(mpath, io.read_json(mpath), skipped=True)

    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.half_grid()
    files: list[str] = []
    timings: dict[str, float] = {}
    convergence: dict[str, dict] = {}
    suites: list[dict] = []
    fits: dict[str, dict] = {}
    sweep_rows = []

    for beta in cfg.betas():
        bt = beta_tag(beta)
        t0 = time.perf_counter()
        f, rep = solve_stage(cfg, beta)
        timings[f"solve[{bt}]"] = time.perf_counter() - t0
        convergence[bt] = rep.to_dict()
        fpath = out / "fields" / f"{bt}.bin"
        io.dump_field(fpath, f)
        io.write_sidecar(fpath, h, kind="field", dtype="<f8", shape=list(f.values.shape),
                         grid=grid.to_dict(), params=cfg.params(beta).to_dict(),
                         convergence=rep.to_dict())
        _stamp(files, out, fpath)

        t0 = time.perf_counter()
        params = cfg.params(beta)
        for x0 in cfg.scan.centers:
            try:
                scan = radial_scan(f, params, x0, cfg.radii(), cfg.scan.nu, cfg.scan.nu_prime,
                                   cfg.scan.kernel_eps)
                _, sts = scan_suites(cfg, f, beta, x0)
            except ValueError as exc:
                raise StageError("scan", exc) from exc
            suites.extend(sts)
            spath = out / "scans" / f"{bt}_{center_tag(x0)}.csv"
            io.write_csv(spath, SCAN_COLUMNS, scan.rows())
            io.write_sidecar(spath, h, kind="scan", beta=beta, center=x0, meta=scan.meta)
            _stamp(files, out, spath)
            try:
                fit = fit_growth_exponent(scan.column("H"), scan.radii, tuple(cfg.scan.fit_window))
                fits[f"{bt},{center_tag(x0)}"] = {"nu": fit.nu, "residual": fit.residual,
                                                   "window": list(fit.window), "n": fit.n}
            except ValueError as exc:
                fits[f"{bt},{center_tag(x0)}"] = {"error": str(exc)}
        timings[f"scan[{bt}]"] = time.perf_counter() - t0

        if f.k >= 2:
            t0 = time.perf_counter()
            sm = segregation_mass(f, params)
            hs = holder_seminorm(f, cfg.scan.holder_alpha, Region("half_ball", 0.0, 1.0), cutoff=eta)
            sweep_rows.append((beta, sm.overlap, sm.weighted, hs.seminorm))
            timings[f"blowup[{bt}]"] = time.perf_counter() - t0

    if sweep_rows:
        wpath = out / "sweep.csv"
        io.write_csv(wpath, ("beta", "overlap", "weighted_mass", "holder_seminorm_at_alpha"), sweep_rows)
        io.write_sidecar(wpath, h, kind="sweep", alpha=cfg.scan.holder_alpha)
        _stamp(files, out, wpath)
        if len(sweep_rows) >= 2:
            ov = np.array([row[1] for row in sweep_rows])
            bad = np.nonzero(np.diff(ov) >= 0)[0]
            suites.append({"name": "segregation_sweep", "passed": bool(bad.size == 0),
                           "worst": float(ov[-1] / ov[0]) if ov[0] > 0 else 0.0,
                           "radius": None,
                           "beta": float(sweep_rows[bad[0] + 1][0]) if bad.size else None})

    fit_path = out / "fits.json"
    io.write_json(fit_path, {"config_hash": h, "fits": fits})
    _stamp(files, out, fit_path)

    data = {"name": cfg.name, "kind": "experiment", "config_hash": h, "tool_version": __version__,
            "config": cfg.canonical(), "timings": timings, "convergence": convergence,
            "suites": suites, "files": files}
    io.write_json(mpath, data)
    return RunManifest(mpath, data)


def run_spectral(N: int, out_root: str | Path, n_theta: int = 65, n_azimuth: int = 128,
                 n_polar: int = 64, force: bool = False) -> RunManifest:
    """Tabulate ``(theta, lambda1, gamma, phi)`` over caps plus the degenerate regions."""
    import hashlib
    import json
    out = Path(out_root) / f"spectral-N{N}"
    spec = {"N": N, "n_theta": n_theta, "n_azimuth": n_azimuth, "n_polar": n_polar}
    h = hashlib.sha256(json.dumps({"spectral": spec, "version": __version__},
                                  sort_keys=True).encode()).hexdigest()
    mpath = out / "manifest.json"
    if not force and _up_to_date(mpath, h):
        return RunManifest(mpath, io.read_json(mpath), skipped=True)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    th = default_theta_grid(n_theta)
    mesh = {"n_azimuth": n_azimuth, "n_polar": n_polar}
    scan = phi_caps(N, th, **mesh)
    nu = nu_acf_estimate(N, th, **mesh) if N == 2 else nu_acf_estimate(1)
    full = lambda1(SpectralProblem(N, "full", **mesh)).lambda1
    empty = lambda1(SpectralProblem(N, "empty", **mesh)).lambda1
    cpath = out / "spectral.csv"
    io.write_csv(cpath, ("theta", "lambda1", "gamma", "phi"),
                 zip(scan.theta, scan.lambda1, scan.gamma, scan.phi))
    io.write_sidecar(cpath, h, kind="spectral", **spec)
    summary = {"lambda1_full": full, "lambda1_empty": empty, "gamma_empty": gamma(empty, N),
               "lambda1_empty_stated": 2 * N, "lambda1_empty_rayleigh_of_y": float(N),
               "min_phi": scan.min_phi, "argmin_theta": scan.argmin, "nu_acf_estimate": nu.value,
               "nu_partition": list(map(str, nu.partition)), "nu_caveat": nu.caveat}
    data = {"name": f"spectral-N{N}", "kind": "spectral", "config_hash": h, "tool_version": __version__,
            "config": spec, "timings": {"spectral": time.perf_counter() - t0}, "summary": summary,
            "suites": [], "files": [str(cpath.relative_to(out))]}
    io.write_json(mpath, data)
    return RunManifest(mpath, data)
