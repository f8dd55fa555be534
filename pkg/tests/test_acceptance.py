"""Acceptance criteria 1-13, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary
under "acceptance criteria".
"""
import math
import time

import numpy as np
import pytest

from conftest import record
from fracseg.blowup import decay_check, fit_growth_exponent
from fracseg.experiment import io, run
from fracseg.extension_solver import DirichletData, HalfGrid, SystemParams, solve_linear_bvp
from fracseg.monotonicity import (acf_boundary, acf_perturbed, almgren_coexistence, almgren_segregated,
                                  check_nondecreasing, pohozaev_residual_sphere)
from fracseg.profiles import (check_supersolution, classified_pair, harmonic_residual, linear_y,
                              sqrt_extension, supersolution_wdelta)
from fracseg.spectral import SpectralProblem, gamma, lambda1, nu_acf_estimate, phi_caps

SCAN_R = np.linspace(0.2, 0.8, 13)


def test_criterion_01_oracle_harmonicity():
    t0 = time.perf_counter()
    ratios = {}
    for name, p in [("sqrt", sqrt_extension()), ("pair0", classified_pair(0)), ("pair1", classified_pair(1))]:
        coarse = harmonic_residual(p, HalfGrid.uniform(1 / 100), exclude=0.1)
        fine = harmonic_residual(p, HalfGrid.uniform(1 / 200), exclude=0.1)
        ratios[name] = coarse / fine
    dt = time.perf_counter() - t0
    ok = all(3.5 <= q <= 4.5 for q in ratios.values()) and dt < 10
    record(1, ok, ", ".join(f"{k} ratio {v:.3f}" for k, v in ratios.items()) + f"; {dt:.2f} s")
    assert ok


def test_criterion_02_almgren_constancy(grid200):
    N = almgren_segregated(classified_pair(0).field(grid200), 0.0, SCAN_R).N
    dev = float(np.max(np.abs(N - 0.5)))
    ok = dev <= 0.02
    record(2, ok, f"max |N - 1/2| = {dev:.2e} over r in [0.2, 0.8]")
    assert ok


def test_criterion_03_boundary_acf_constant(grid200):
    phi = acf_boundary(sqrt_extension().field(grid200), SCAN_R).phi
    dev = float(np.max(np.abs(phi / (math.pi / 4) - 1)))
    ok = dev <= 0.02
    record(3, ok, f"max relative deviation from pi/4 = {dev:.2e}")
    assert ok


def test_criterion_04_exponent_arithmetic():
    worst = max(max(abs(gamma(0.0, N)), abs(gamma(float(N), N) - 1)) for N in range(1, 11))
    ok = worst <= 1e-12
    record(4, ok, f"max error {worst:.1e} for N = 1..10")
    assert ok


def test_criterion_05_spectral_circle():
    lams = sorted({lambda1(SpectralProblem(1, t)).lambda1 for t in ("empty", 0.3, math.pi / 2, "full")})
    phi = phi_caps(1, np.array([0.0, math.pi / 2, math.pi])).phi
    nu = nu_acf_estimate(1).value
    ok = lams == [0.0, 0.25, 1.0] and np.all(np.abs(phi - 0.5) <= 1e-12) and nu == 0.5
    record(5, ok, f"lambda1 values {lams}, phi {phi.tolist()}, nu_ACF {nu}")
    assert ok


def test_criterion_06_spectral_hemisphere():
    t0 = time.perf_counter()
    full = lambda1(SpectralProblem(2, "full", 128, 64)).lambda1
    half = lambda1(SpectralProblem(2, math.pi / 2, 128, 64)).lambda1
    empty = lambda1(SpectralProblem(2, "empty", 128, 64)).lambda1
    dt = time.perf_counter() - t0
    ok = full <= 1e-3 and abs(half / 0.75 - 1) <= 0.02 and abs(empty / 2 - 1) <= 0.02 and dt < 60
    record(6, ok, f"full {full:.2e}, half-cap {half:.5f}, empty {empty:.5f} "
                  f"(Rayleigh quotient of y: 2; stated value 2N = 4; discrepancy {4 - empty:.3f}); {dt:.1f} s")
    assert ok


def test_criterion_07_supersolution_suite():
    failures = []
    for M in (1.0, 10.0, 100.0):
        for delta in (0.0, 0.1):
            for N in (1, 2):
                rep = check_supersolution(supersolution_wdelta(M, delta, N), h=1 / 200)
                bad = {k: v["violations"] for k, v in rep.checks.items() if v["violations"]}
                if bad:
                    failures.append(f"(M={M:g}, delta={delta:g}, N={N}): {bad}")
    ok = not failures
    record(7, ok, "all 12 cases clean" if ok else f"{len(failures)}/12 cases violate; first {failures[0]}")
    assert ok, "\n".join(failures)


def test_criterion_08_decay_bracket(grid200):
    M = 10.0
    v = solve_linear_bvp(grid200, DirichletData.constant(1.0), M)
    rep = decay_check(v, M, slack=0.05)
    upper_ok = rep.sup_flat <= 0.105
    lower_ok = rep.inf_flat >= (1 / 11) * (1 - 0.05)
    ok = upper_ok and lower_ok
    record(8, ok, f"sup {rep.sup_flat:.5f} vs 0.105 ({'ok' if upper_ok else 'violated'}), "
                  f"inf {rep.inf_flat:.5f} vs {(1 / 11) * 0.95:.5f} ({'ok' if lower_ok else 'violated'})")
    assert ok


def test_criterion_09_beta_sweep_segregation(default_run):
    t = io.read_csv(default_run.path.parent / "sweep.csv")
    ov, wm = t["overlap"], t["weighted_mass"]
    strictly = bool(np.all(np.diff(ov) < 0))
    ratio = float(ov[-1] / ov[0])
    bounded = bool(np.all(wm <= 3 * wm[0]))
    ok = strictly and ratio < 1e-2 and bounded
    record(9, ok, f"overlap {', '.join(f'{x:.3e}' for x in ov)}; final/initial {ratio:.2e}; "
                  f"max weighted/first {float(wm.max() / wm[0]):.3f}")
    assert ok


def test_criterion_10_monotonicity_suites(default_fields, default_cfg):
    r = default_cfg.radii()
    upper = slice(r.size // 2, None)
    worst, fails = 0.0, []
    for beta, f in default_fields.items():
        p = default_cfg.params(beta)
        pert = acf_perturbed(f, 0.0, r, default_cfg.scan.nu_prime, beta=beta)
        ok1, at1, w1 = check_nondecreasing(r[upper], pert.phi[upper], 1e-3)
        alm = almgren_coexistence(f, p, 0.0, r)
        ok2, at2, w2 = check_nondecreasing(r, alm.N, 1e-3)
        worst = max(worst, w1, w2)
        if not ok1:
            fails.append(f"acf_perturbed beta={beta:g} at r={at1}")
        if not ok2:
            fails.append(f"almgren_coexistence beta={beta:g} at r={at2}")
    ok = not fails
    record(10, ok, f"{len(default_fields)} fields, worst relative dip {worst:.2e}" + (f"; {fails}" if fails else ""))
    assert ok


def test_criterion_11_pohozaev_decay():
    radii = [0.1, 0.2, 0.4, 0.6]
    hs = (1 / 50, 1 / 100, 1 / 200)
    factors = {}
    for x0 in (0.0, 0.3, -0.3):
        rr = [r for r in radii if abs(x0) + r <= 1]
        res = [float(np.max(np.abs(pohozaev_residual_sphere(classified_pair(0).field(HalfGrid.uniform(h)),
                                                            SystemParams(2, 0.0), x0, rr).residual)))
               for h in hs]
        factors[x0] = [res[i] / res[i + 1] for i in range(len(hs) - 1)]
    worst = min(min(v) for v in factors.values())
    ok = worst >= 1.8
    record(11, ok, "; ".join(f"x0={k:+.1f} factors {', '.join(f'{q:.2f}' for q in v)}"
                             for k, v in factors.items()))
    assert ok


def test_criterion_12_exponent_fit(grid200, default_run):
    r = SCAN_R
    nu_pair = fit_growth_exponent(almgren_segregated(classified_pair(0).field(grid200), 0.0, r).H, r).nu
    nu_lin = fit_growth_exponent(almgren_segregated(linear_y().field(grid200), 0.0, r).H, r).nu
    t = io.read_csv(default_run.path.parent / "sweep.csv")
    hs = dict(zip(t["beta"], t["holder_seminorm_at_alpha"]))
    rel = abs(hs[1e4] / hs[1e3] - 1)
    ok = abs(nu_pair - 0.5) <= 0.02 and abs(nu_lin - 1.0) <= 0.02 and rel <= 0.10
    record(12, ok, f"nu(pair) {nu_pair:.4f}, nu(y,0) {nu_lin:.4f}, "
                   f"Holder 1e4/1e3 {hs[1e4]:.4f}/{hs[1e3]:.4f} ({rel:.2%})")
    assert ok


def test_criterion_13_determinism(default_run, default_cfg, tmp_path):
    again = run(default_cfg, tmp_path, force=True)
    a, b = default_run.path.parent, again.path.parent
    csvs = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    same = [(a / p).read_bytes() == (b / p).read_bytes() for p in csvs]
    ok = len(csvs) > 0 and all(same)
    record(13, ok, f"{sum(same)}/{len(csvs)} CSV files bit-identical")
    assert ok
