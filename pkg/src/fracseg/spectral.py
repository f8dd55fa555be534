"""First eigenvalue of the upper half-sphere with a vanishing-trace constraint.

For an open region ``omega`` of the equator, ``lambda1(omega)`` is the smallest
Rayleigh quotient of the tangential Dirichlet energy over functions that vanish
on the equator outside ``omega``.  Caps ``omega_theta`` are centred at a fixed
equatorial point and have angular radius ``theta``: ``theta = 0`` is empty,
``theta = pi`` the whole equator.

N = 1 uses closed forms (the half-circle with point constraints).  N = 2 uses a
finite-volume discretisation on a latitude-longitude grid with a lumped polar
cap and shifted inverse power iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class MeshTooCoarse(ValueError):
    pass


class EigenNotConverged(RuntimeError):
    pass


def gamma(lam: float, N: int) -> float:
    """Homogeneity ``sqrt(((N-1)/2)^2 + lam) - (N-1)/2``; the root of ``g(g+N-1) = lam``."""
    if lam < 0:
        raise ValueError(f"eigenvalue must be nonnegative, got {lam}")
    a = (N - 1) / 2
    # cancellation-free form of sqrt(a^2 + lam) - a
    return lam / (math.sqrt(a * a + lam) + a) if lam > 0 else 0.0


@dataclass(frozen=True)
class SpectralProblem:
    N: int
    theta: float | str = "full"  # cap radius in [0, pi], or "full" / "empty"
    n_azimuth: int = 128
    n_polar: int = 64

    def __post_init__(self):
        if self.N not in (1, 2):
            raise ValueError("only N in {1, 2} is supported")
        if isinstance(self.theta, str):
            if self.theta not in ("full", "empty"):
                raise ValueError(f"unknown region {self.theta!r}")
        elif not 0 <= self.theta <= math.pi:
            raise ValueError("cap opening must lie in [0, pi]")

    @property
    def opening(self) -> float:
        if self.theta == "full":
            return math.pi
        if self.theta == "empty":
            return 0.0
        return float(self.theta)


@dataclass
class EigenResult:
    lambda1: float
    gamma: float
    N: int
    eigenfunction: np.ndarray | None = None
    rayleigh_residual: float = 0.0
    iterations: int = 0
    one_signed: bool = True
    meta: dict = field(default_factory=dict)


# --------------------------------------------------------------------------- N = 1


def _lambda1_circle(opening: float) -> EigenResult:
    # equator S^0 = {theta = 0, theta = pi}; a cap around theta = 0 holds one point
    # for 0 < opening < pi and both for opening = pi
    t = np.linspace(0, np.pi, 257)
    if opening >= math.pi:
        lam, u = 0.0, np.ones_like(t)
    elif opening > 0:
        lam, u = 0.25, np.cos(t / 2)
    else:
        lam, u = 1.0, np.sin(t)
    return EigenResult(lam, gamma(lam, 1), 1, u, 0.0, 0, True, {"closed_form": True})


# --------------------------------------------------------------------------- N = 2


@lru_cache(maxsize=8)
def _hemisphere_matrices(n_az: int, n_pol: int):
    """Stiffness and lumped mass on the lat-long grid; node 0 is the pole.

    Ring ``j = 1..n_pol`` sits at polar angle ``j * dt`` (ring ``n_pol`` is the
    equator); azimuths are ``l * 2 pi / n_az``.
    """
    dt = (np.pi / 2) / n_pol
    da = 2 * np.pi / n_az
    n = 1 + n_pol * n_az

    def node(j, l):
        return 1 + (j - 1) * n_az + (l % n_az)

    t = np.arange(n_pol + 1) * dt
    lo = np.maximum(t - dt / 2, 0)
    hi = np.minimum(t + dt / 2, np.pi / 2)
    mass = np.empty(n)
    mass[0] = 2 * np.pi * (1 - np.cos(dt / 2))
    ring_mass = da * (np.cos(lo[1:]) - np.cos(hi[1:]))
    mass[1:] = np.repeat(ring_mass, n_az)

    rows, cols, vals = [], [], []

    def couple(a, b, w):
        rows.extend([a, b, a, b])
        cols.extend([b, a, a, b])
        vals.extend([-w, -w, w, w])

    ls = np.arange(n_az)
    # pole to first ring
    w_pole = np.sin(dt / 2) * da / dt
    for l in ls:
        couple(0, node(1, l), w_pole)
    for j in range(1, n_pol + 1):
        if j < n_pol:
            w_t = np.sin(t[j] + dt / 2) * da / dt
            for l in ls:
                couple(node(j, l), node(j + 1, l), w_t)
        # azimuthal faces: integral of dt / sin(t) over the control interval
        w_a = math.log(math.tan(hi[j] / 2) / math.tan(lo[j] / 2)) / da
        for l in ls:
            couple(node(j, l), node(j, l + 1), w_a)
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return K, mass, dt, da


def _inverse_iteration(K, mass, shift: float, tol: float, max_iter: int):
    M = sp.diags(mass)
    lu = spla.splu((K - shift * M).tocsc())
    u = np.ones(K.shape[0]) + 0.1 * np.linspace(0, 1, K.shape[0])
    lam = np.inf
    res = np.inf
    best, stall = np.inf, 0
    for it in range(1, max_iter + 1):
        u = lu.solve(mass * u)
        u /= math.sqrt(np.dot(u, mass * u))
        Ku = K @ u
        lam = float(np.dot(u, Ku))
        r = Ku - lam * mass * u
        # residual in the M^{-1} norm (eigenvalue units)
        res = math.sqrt(float(np.dot(r, r / mass)))
        if res < tol:
            return lam, u, res, it
        # round-off floor: residual tiny but no longer shrinking
        if res < 0.99 * best:
            best, stall = res, 0
        else:
            stall += 1
            if stall >= 50 and best < 1e3 * tol:
                return lam, u, res, it
    raise EigenNotConverged(f"inverse iteration stalled: residual {res:.3e} after {max_iter} steps")


def _lambda1_hemisphere(opening: float, n_az: int, n_pol: int, tol: float,
                        max_iter: int) -> EigenResult:
    K, mass, dt, da = _hemisphere_matrices(n_az, n_pol)
    ls = np.arange(n_az)
    az = np.minimum(ls * da, 2 * np.pi - ls * da)  # angular distance from the cap centre
    free_eq = (az < opening - 1e-12) | (opening >= math.pi)
    n_free_eq = int(free_eq.sum())
    n_con = n_az - n_free_eq
    if 0 < n_con < 3:
        raise MeshTooCoarse(f"only {n_con} equator nodes resolve the constrained arc; "
                            "refine n_azimuth")
    eq_nodes = 1 + (n_pol - 1) * n_az + ls
    keep = np.ones(K.shape[0], dtype=bool)
    keep[eq_nodes[~free_eq]] = False
    Kr = K[keep][:, keep]
    mr = mass[keep]
    lam, u, res, it = _inverse_iteration(Kr, mr, shift=-1.0, tol=tol, max_iter=max_iter)
    lam = max(lam, 0.0)
    full = np.zeros(K.shape[0])
    full[keep] = u
    if full.sum() < 0:
        full = -full
    one_signed = bool(np.all(full >= -1e-10 * np.max(np.abs(full))))
    return EigenResult(lam, gamma(lam, 2), 2, full, res, it, one_signed,
                       {"n_azimuth": n_az, "n_polar": n_pol, "free_equator_nodes": n_free_eq})


def lambda1(problem: SpectralProblem, tol: float = 1e-10, max_iter: int = 2000) -> EigenResult:
    if problem.N == 1:
        return _lambda1_circle(problem.opening)
    return _lambda1_hemisphere(problem.opening, problem.n_azimuth, problem.n_polar, tol, max_iter)


# --------------------------------------------------------------------------- caps and partitions


def default_theta_grid(n: int = 65) -> np.ndarray:
    return np.linspace(0.0, np.pi, n)


@dataclass
class CapScan:
    N: int
    theta: np.ndarray
    lambda1: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray

    @property
    def min_phi(self) -> float:
        return float(self.phi.min())

    @property
    def argmin(self) -> float:
        return float(self.theta[int(np.argmin(self.phi))])


def phi_caps(N: int, theta_grid: np.ndarray | None = None, n_azimuth: int = 128,
             n_polar: int = 64) -> CapScan:
    """Tabulate ``phi(theta) = (Gamma(theta) + Gamma(pi - theta)) / 2`` with ``Gamma = gamma o lambda1``.

    The grid must be symmetric about ``pi/2`` so that both caps of each pair are
    evaluated once and ``phi`` is exactly symmetric.
    """
    th = default_theta_grid() if theta_grid is None else np.asarray(theta_grid, float)
    if np.any(th < 0) or np.any(th > np.pi) or not np.allclose(th + th[::-1], np.pi):
        raise ValueError("theta grid must lie in [0, pi] and be symmetric about pi/2")
    lam = np.empty_like(th)
    for i, t in enumerate(th):
        lam[i] = lambda1(SpectralProblem(N, float(t), n_azimuth, n_polar)).lambda1
    gam = np.array([gamma(l, N) for l in lam])
    phi = 0.5 * (gam + gam[::-1])
    return CapScan(N, th, lam, gam, phi)


@dataclass
class NuEstimate:
    N: int
    value: float
    partition: tuple
    caveat: str
    candidates: list = field(default_factory=list)


def nu_acf_estimate(N: int, theta_grid: np.ndarray | None = None, **mesh) -> NuEstimate:
    """Half the minimal sum of exponents over 2-partitions restricted to caps.

    For N = 1 the equator has two points and every partition is enumerated.
    For N = 2 the value bounds the cap-restricted infimum from above only.
    """
    if N == 1:
        # a region is a subset of {p, q}; enumerate disjoint pairs
        subsets = [frozenset(), frozenset("p"), frozenset("q"), frozenset("pq")]
        opening = {0: 0.0, 1: 0.5, 2: math.pi}
        best, cands = None, []
        for a in subsets:
            for b in subsets:
                if a & b:
                    continue
                ga = _lambda1_circle(opening[len(a)]).gamma
                gb = _lambda1_circle(opening[len(b)]).gamma
                val = 0.5 * (ga + gb)
                cands.append((sorted(a), sorted(b), val))
                if best is None or val < best[2]:
                    best = (sorted(a), sorted(b), val)
        return NuEstimate(1, best[2], (best[0], best[1]), "exact enumeration over S^0", cands)
    scan = phi_caps(N, theta_grid, **mesh)
    lam_full = lambda1(SpectralProblem(N, "full", **_mesh_kwargs(mesh))).lambda1
    lam_empty = lambda1(SpectralProblem(N, "empty", **_mesh_kwargs(mesh))).lambda1
    degenerate = 0.5 * (gamma(lam_full, N) + gamma(lam_empty, N))
    cands = [("cap", float(t), float(p)) for t, p in zip(scan.theta, scan.phi)]
    cands.append(("full-empty", None, degenerate))
    val = min(scan.min_phi, degenerate)
    part = ("full-empty",) if degenerate <= scan.min_phi else ("cap", scan.argmin)
    return NuEstimate(N, val, part, "upper bound for the cap-restricted infimum only", cands)


def _mesh_kwargs(mesh: dict) -> dict:
    return {k: v for k, v in mesh.items() if k in ("n_azimuth", "n_polar")}
