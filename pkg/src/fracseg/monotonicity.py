"""Radial monotonicity quantities about a point of the flat edge.

Everything here is computed for a planar field (one tangential dimension,
so ``N = 1``) given either as a grid :class:`Field` or a closed-form
:class:`~fracseg.profiles.Profile`.  Volume integrals over half-balls use
composite Gauss quadrature in polar coordinates; values and nodal gradients
of a grid field are bilinearly interpolated.  Arc integrals use composite
Gauss rules on the half-circle, and flat-edge integrals use the trapezoid rule
on grid nodes with linearly interpolated end points.

The Pohozaev identity on cylinders additionally accepts synthetic evaluators
in three variables ``(x1, x2, y)``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from .extension_solver import Field, HalfGrid, SystemParams
from .profiles import Profile

UNDEFINED_H = 1e-14
SCAN_COLUMNS = ("r", "E", "H", "N", "Phi_seg", "Phi_pert", "Phi_boundary", "Phi_morrey",
                "poho_res", "psi")


class SegregationWarning(UserWarning):
    """Input violates a segregation precondition beyond tolerance."""


class CenterError(ValueError):
    pass


# --------------------------------------------------------------------------- kernel


@dataclass(frozen=True)
class Kernel:
    """``Gamma_eps(X) = Gamma_1(X / eps) * eps**(1 - N)``; ``eps = 0`` is the exact ``|X|**(1 - N)``."""

    N: int = 1
    eps: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")

    def gamma1(self, s):
        s = np.asarray(s, float)
        N = self.N
        inner = (N + 1) / 2 - (N - 1) / 2 * s**2
        with np.errstate(divide="ignore"):
            outer = np.where(s > 0, np.abs(s) ** (1 - N) if N > 1 else 1.0, np.inf)
        return np.where(s < 1, inner, outer)

    def __call__(self, s):
        """Kernel at distance ``s`` from the pole."""
        s = np.asarray(s, float)
        if self.eps == 0:
            if self.N == 1:
                return np.ones_like(s)
            # the singular point carries no mass
            with np.errstate(divide="ignore"):
                return np.where(s > 0, s ** (1 - self.N), 0.0)
        return self.gamma1(s / self.eps) * self.eps ** (1 - self.N)


def kernel_regularity_gap(N: int, n: int = 10001) -> tuple[float, float]:
    """Largest value and radial-derivative mismatch of the two branches of ``Gamma_1`` at ``|X| = 1``."""
    s = np.linspace(1 - 1e-9, 1 + 1e-9, n)
    inner = (N + 1) / 2 - (N - 1) / 2 * s**2
    outer = s ** (1 - N)
    d_inner = -(N - 1) * s
    d_outer = (1 - N) * s ** (-N)
    at1 = np.argmin(np.abs(s - 1))
    return (float(abs(inner[at1] - outer[at1])), float(abs(d_inner[at1] - d_outer[at1])))


# --------------------------------------------------------------------------- samplers


class _Sampler:
    k: int
    step: float

    def values(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def flat_nodes(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def check_ball(self, x0: float, r: float, y0: float = 0.0) -> None:
        pass


class _FieldSampler(_Sampler):
    def __init__(self, f: Field):
        self.field = f
        g = f.grid
        self.grid = g
        self.k = f.k
        self.step = g.h
        v = f.values
        self._grad = np.stack([np.gradient(v, g.h, axis=1, edge_order=2),
                               np.gradient(v, g.h, axis=2, edge_order=2)], axis=1)

    def _coords(self, x, y):
        g = self.grid
        i = np.clip((np.asarray(x, float) - g.x_min) / g.h, 0, g.nx - 1)
        j = np.clip(np.asarray(y, float) / g.h, 0, g.ny - 1)
        return np.stack([i.ravel(), j.ravel()]), np.shape(i)

    def _interp(self, arr, x, y):
        c, shape = self._coords(x, y)
        return map_coordinates(arr, c, order=1, mode="nearest").reshape(shape)

    def values(self, x, y):
        return np.stack([self._interp(self.field.values[i], x, y) for i in range(self.k)])

    def gradients(self, x, y):
        return np.stack([np.stack([self._interp(self._grad[i, d], x, y) for d in range(2)])
                         for i in range(self.k)])

    def flat_nodes(self, a, b):
        xs = self.grid.x
        inner = xs[(xs > a + 1e-12) & (xs < b - 1e-12)]
        pts = np.concatenate([[a], inner, [b]])
        w = np.zeros_like(pts)
        d = np.diff(pts)
        w[:-1] += d / 2
        w[1:] += d / 2
        return pts, w

    def check_ball(self, x0, r, y0=0.0):
        g = self.grid
        tol = 1e-9 * g.h
        if not (g.x_min - tol <= x0 <= g.x_max + tol) or not (0 <= y0 <= g.y_max + tol):
            raise CenterError(f"center ({x0}, {y0}) outside the grid")
        if x0 - r < g.x_min - tol or x0 + r > g.x_max + tol or y0 + r > g.y_max + tol:
            raise CenterError(f"radius {r} about ({x0}, {y0}) leaves the grid")


class _ProfileSampler(_Sampler):
    def __init__(self, p: Profile, step: float = 1 / 400):
        self.profile = p
        self.k = p.k
        self.step = step

    def values(self, x, y):
        return np.asarray(self.profile.value(np.asarray(x, float), np.asarray(y, float)), float)

    def gradients(self, x, y):
        return np.asarray(self.profile.gradient(np.asarray(x, float), np.asarray(y, float)), float)

    def flat_nodes(self, a, b):
        n = max(8, int(math.ceil((b - a) / self.step)))
        return _composite_gauss(np.linspace(a, b, n + 1), 4)


def _sampler(obj) -> _Sampler:
    if isinstance(obj, _Sampler):
        return obj
    if isinstance(obj, Field):
        return _FieldSampler(obj)
    if isinstance(obj, Profile):
        return _ProfileSampler(obj)
    raise TypeError(f"expected Field or Profile, got {type(obj).__name__}")


# --------------------------------------------------------------------------- quadrature


def _composite_gauss(breaks: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(m)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (b - a) * t + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def _radial_rule(breaks: Sequence[float], step: float, m: int = 3):
    """Gauss nodes on ``[breaks[0], breaks[-1]]`` with panels no wider than ``step``.

    Returns nodes, weights and the index of the break interval holding each node.
    """
    nodes, weights, idx = [], [], []
    for j in range(len(breaks) - 1):
        a, b = breaks[j], breaks[j + 1]
        if b <= a:
            continue
        n = max(1, int(math.ceil((b - a) / step)))
        x, w = _composite_gauss(np.linspace(a, b, n + 1), m)
        nodes.append(x)
        weights.append(w)
        idx.append(np.full(x.size, j))
    return np.concatenate(nodes), np.concatenate(weights), np.concatenate(idx)


def _angular_rule(length: float, step: float, m: int = 4, min_panels: int = 32):
    """Gauss rule on ``[0, 1]`` fine enough for an arc of the given length."""
    n = max(min_panels, int(math.ceil(length / step)))
    return _composite_gauss(np.linspace(0.0, 1.0, n + 1), m)


def _theta_range(rho: np.ndarray, y0: float) -> tuple[np.ndarray, np.ndarray]:
    """Angular range of the circle of radius ``rho`` about ``(x0, y0)`` lying in ``y > 0``."""
    if y0 <= 0:
        return np.zeros_like(rho), np.full_like(rho, np.pi)
    clip = np.arcsin(np.clip(y0 / np.maximum(rho, 1e-300), 0.0, 1.0))
    lo = np.where(rho <= y0, 0.0, -clip)
    hi = np.where(rho <= y0, 2 * np.pi, np.pi + clip)
    return lo, hi


def _volume_cumulative(s: _Sampler, x0: float, radii: np.ndarray, integrand: Callable,
                       y0: float = 0.0) -> np.ndarray:
    """``int_{B_r(x0, y0) cap {y > 0}} integrand`` for every radius, shape ``(..., n_radii)``.

    ``integrand(x, y, rho)`` returns an array with the sample axes last.
    """
    radii = np.asarray(radii, float)
    breaks = [0.0] + list(radii)
    if 0 < y0 < radii[-1]:
        breaks = sorted(set(breaks + [y0]))
    rho, w_rho, _ = _radial_rule(breaks, s.step)
    t, w_t = _angular_rule(2 * np.pi * radii[-1], s.step)
    lo, hi = _theta_range(rho, y0)
    span = hi - lo
    theta = lo[:, None] + span[:, None] * t[None, :]
    X = x0 + rho[:, None] * np.cos(theta)
    Y = np.maximum(y0 + rho[:, None] * np.sin(theta), 0.0)
    vals = np.asarray(integrand(X, Y, rho[:, None] * np.ones_like(theta)))
    per_rho = (vals * w_t).sum(axis=-1) * span * rho * w_rho
    csum = np.cumsum(per_rho, axis=-1)
    # index of the last node inside each radius
    ends = np.searchsorted(rho, radii, side="right") - 1
    return np.where(ends >= 0, np.take(csum, np.maximum(ends, 0), axis=-1), 0.0)


def _arc(s: _Sampler, x0: float, r: float, integrand: Callable) -> np.ndarray:
    """``int_{upper half-circle of radius r} integrand d sigma``; integrand gets ``(x, y, theta)``."""
    t, w = _angular_rule(np.pi * r, s.step)
    theta = np.pi * t
    X = x0 + r * np.cos(theta)
    Y = np.maximum(r * np.sin(theta), 0.0)
    vals = np.asarray(integrand(X, Y, theta))
    return (vals * w).sum(axis=-1) * np.pi * r


def _flat(s: _Sampler, x0: float, r: float, integrand: Callable) -> np.ndarray:
    """``int_{x0 - r}^{x0 + r} integrand(trace) dx`` on the flat edge."""
    xs, w = s.flat_nodes(x0 - r, x0 + r)
    vals = np.asarray(integrand(s.values(xs, np.zeros_like(xs)), xs))
    return (vals * w).sum(axis=-1)


def _grad_sq(s: _Sampler):
    def f(X, Y, rho):
        g = s.gradients(X, Y)
        return (g**2).sum(axis=1)  # (k, ...)
    return f


def _pair_overlap(values: np.ndarray, a: np.ndarray | None = None) -> np.ndarray:
    """``sum_{i<j} a_ij v_i^2 v_j^2`` pointwise."""
    k = values.shape[0]
    sq = values**2
    out = np.zeros(values.shape[1:])
    for i in range(k):
        for j in range(i + 1, k):
            out = out + (1.0 if a is None else a[i, j]) * sq[i] * sq[j]
    return out


def _check_radii(s: _Sampler, x0: float, radii, y0: float = 0.0) -> np.ndarray:
    r = np.asarray(radii, float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("radii must be a nonempty 1-D sequence")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    s.check_ball(x0, float(r[-1]), y0)
    return r


def _check_kernel(kernel: Kernel | None, s: _Sampler, default_eps: float) -> Kernel:
    if kernel is None:
        return Kernel(1, default_eps)
    if kernel.N != 1:
        raise ValueError("planar fields need a kernel with N = 1")
    return kernel


def default_nu() -> float:
    from .spectral import nu_acf_estimate
    return nu_acf_estimate(1).value


# --------------------------------------------------------------------------- ACF


@dataclass
class ACFResult:
    radii: np.ndarray
    phi: np.ndarray
    factors: np.ndarray  # (2, n) per-component factors
    exponent: float
    kernel: Kernel
    monotone_from: float | None = None
    notes: dict = field(default_factory=dict)


def _segregation_warn(s: _Sampler, x0: float, r: float, i: int, j: int, tol: float) -> float:
    xs, _ = s.flat_nodes(x0 - r, x0 + r)
    v = s.values(xs, np.zeros_like(xs))
    scale = max(float(np.max(v[[i, j]] ** 2)), 1e-300)
    viol = float(np.max(np.abs(v[i] * v[j]))) / scale
    if viol > tol:
        warnings.warn(f"traces overlap on the flat edge: max |v_i v_j| / max v^2 = {viol:.3e}",
                      SegregationWarning, stacklevel=3)
    return viol


def acf_segregated(field_or_profile, x0: float, radii, kernel: Kernel | None = None,
                   nu: float | None = None, components: tuple[int, int] = (0, 1),
                   overlap_tol: float = 1e-2) -> ACFResult:
    """Product over the pair of ``r**(-2 nu) int_{B_r^+} |grad v_i|^2 Gamma_eps``."""
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii)
    ker = _check_kernel(kernel, s, 2 * s.step)
    nu = default_nu() if nu is None else float(nu)
    i, j = components
    viol = _segregation_warn(s, x0, float(r[-1]), i, j, overlap_tol)
    g = _grad_sq(s)
    energy = _volume_cumulative(s, x0, r, lambda X, Y, rho: g(X, Y, rho)[[i, j]] * ker(rho))
    factors = energy * r ** (-2 * nu)
    phi = factors[0] * factors[1]
    return ACFResult(r, phi, factors, nu, ker, monotone_from(r, phi), {"overlap": viol})


def acf_perturbed(field_or_profile, x0: float, radii, nu_prime: float = 0.45, beta: float = 1.0,
                  components: tuple[int, int] = (0, 1), kernel: Kernel | None = None,
                  r_bar: float | None = None) -> ACFResult:
    """``Phi_1 Phi_2`` with ``Phi_i = r**(-2 nu') (int |grad v_i|^2 Gamma_1 + beta int_flat v_i^2 v_j^2 Gamma_1)``.

    ``beta`` is the competition strength of the solved system: it makes the
    functional that of the rescaled field ``sqrt(beta) v`` up to a constant factor.
    """
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii)
    ker = _check_kernel(kernel, s, 1.0)
    nu_acf = default_nu()
    if not 0 < nu_prime < nu_acf:
        raise ValueError(f"nu' must lie in (0, {nu_acf})")
    i, j = components
    g = _grad_sq(s)
    vol = _volume_cumulative(s, x0, r, lambda X, Y, rho: g(X, Y, rho)[[i, j]] * ker(rho))
    bnd = np.array([_flat(s, x0, rr, lambda v, xs: (v[i] ** 2) * (v[j] ** 2) * ker(np.abs(xs - x0)))
                    for rr in r])
    factors = (vol + beta * bnd[None, :]) * r ** (-2 * nu_prime)
    phi = factors[0] * factors[1]
    notes = {"boundary_term": bnd, "beta": beta}
    if r_bar is not None:
        notes["beyond_r_bar"] = r > r_bar
    return ACFResult(r, phi, factors, nu_prime, ker, monotone_from(r, phi), notes)


def acf_boundary(field_or_profile, radii, x0: float = 0.0, component: int = 0,
                 kernel: Kernel | None = None, trace_tol: float = 1e-6) -> ACFResult:
    """``(1/r) int_{B_r^+} |grad v|^2 / |X|**(N-1)``; the trace must vanish for ``x <= x0``."""
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii)
    ker = _check_kernel(kernel, s, 0.0)
    xs, _ = s.flat_nodes(x0 - float(r[-1]), x0)
    tr = s.values(xs, np.zeros_like(xs))[component]
    scale = max(float(np.max(np.abs(s.values(*_arc_points(x0, float(r[-1])))[component]))), 1e-300)
    bad = float(np.max(np.abs(tr))) / scale
    if bad > trace_tol:
        warnings.warn(f"trace does not vanish on the left half-edge (relative {bad:.3e})",
                      SegregationWarning, stacklevel=2)
    g = _grad_sq(s)
    energy = _volume_cumulative(s, x0, r, lambda X, Y, rho: g(X, Y, rho)[component] * ker(rho))
    phi = energy / r
    return ACFResult(r, phi, phi[None, :], 0.5, ker, monotone_from(r, phi), {"trace_violation": bad})


def _arc_points(x0: float, r: float, n: int = 129):
    th = np.linspace(0, np.pi, n)
    return x0 + r * np.cos(th), r * np.sin(th)


# --------------------------------------------------------------------------- Almgren


@dataclass
class AlmgrenResult:
    radii: np.ndarray
    E: np.ndarray
    H: np.ndarray
    N: np.ndarray
    variant: str
    extras: dict = field(default_factory=dict)

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.N)


def _height(s: _Sampler, x0: float, r: np.ndarray) -> np.ndarray:
    # r^{-N} int_{arc} sum v_i^2, N = 1
    return np.array([float(_arc(s, x0, rr, lambda X, Y, th: (s.values(X, Y) ** 2).sum(axis=0)))
                     for rr in r]) / r


def _dirichlet_energy(s: _Sampler, x0: float, r: np.ndarray) -> np.ndarray:
    g = _grad_sq(s)
    return _volume_cumulative(s, x0, r, lambda X, Y, rho: g(X, Y, rho).sum(axis=0))


def _quotient(E, H):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(H >= UNDEFINED_H, E / np.where(H >= UNDEFINED_H, H, 1.0), np.nan)


def almgren_segregated(field_or_profile, x0: float, radii, overlap_tol: float = 1e-2) -> AlmgrenResult:
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii)
    for i in range(s.k):
        for j in range(i + 1, s.k):
            _segregation_warn(s, x0, float(r[-1]), i, j, overlap_tol)
    E = _dirichlet_energy(s, x0, r)  # r^{1-N} = 1
    H = _height(s, x0, r)
    return AlmgrenResult(r, E, H, _quotient(E, H), "segregated")


def log_derivative_gap(r: np.ndarray, H: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Finite-difference ``d/dr log H`` minus the midpoint value of ``2N/r`` between adjacent radii."""
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.diff(np.log(H)) / np.diff(r)
        two_n_over_r = N[:-1] / r[:-1] + N[1:] / r[1:]
    return slope - two_n_over_r


def almgren_coexistence(field_or_profile, params: SystemParams, x0: float, radii) -> AlmgrenResult:
    """Frequency with the interaction energy ``beta sum_{i<j} a_ij int_flat v_i^2 v_j^2`` added to E.

    The raw ``beta`` enters linearly, which is the quotient of the rescaled
    field ``sqrt(beta) v`` (``H`` and the gradient part scale alike).
    """
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii)
    grad = _dirichlet_energy(s, x0, r)
    inter = np.array([float(_flat(s, x0, rr, lambda v, xs: _pair_overlap(v, params.interaction)))
                      for rr in r])
    E = grad + params.beta * inter
    H = _height(s, x0, r)
    N = _quotient(E, H)
    gap = log_derivative_gap(r, H, N)
    return AlmgrenResult(r, E, H, N, "coexistence",
                         {"gradient_energy": grad, "interaction_energy": params.beta * inter,
                          "log_derivative_gap": gap})


def almgren_limiting(field_or_profile, params: SystemParams, x0: float, radii,
                     eps_assumption: float = 1.0, C: float | None = None,
                     zero_tol: float | None = None) -> AlmgrenResult:
    """Frequency ``E/H + 1`` with ``E = int |grad v|^2 - int_flat f(v) v``, plus ``psi`` and the compensated quantity."""
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii)
    if isinstance(field_or_profile, Field):
        from .blowup import zero_set
        zs = zero_set(field_or_profile, tol=zero_tol)
        if zs.distance_to(x0) > field_or_profile.grid.h:
            warnings.warn(f"x0 = {x0} is not in the zero set", SegregationWarning, stacklevel=2)
    grad = _dirichlet_energy(s, x0, r)

    def reaction_work(v, xs):
        return sum(params.reactions[i].f(v[i]) * v[i] for i in range(v.shape[0]))

    work = np.array([float(_flat(s, x0, rr, reaction_work)) for rr in r])
    E = grad - work
    H = _height(s, x0, r)
    N = _quotient(E, H) + 1.0
    p = 2.0 + eps_assumption  # the trace-Sobolev cap 2N/(N-1) is infinite for N = 1
    lp = np.array([float(_flat(s, x0, rr, lambda v, xs: (np.abs(v) ** p).sum(axis=0))) for rr in r])
    psi = (lp / r) ** (1 - 2 / p)
    if C is None:
        xs, _ = s.flat_nodes(x0 - float(r[-1]), x0 + float(r[-1]))
        tr = s.values(xs, np.zeros_like(xs))
        lo, hi = float(tr.min()), float(tr.max())
        C = 10.0 * max(rx.lipschitz_bound(lo, hi) for rx in params.reactions)
    comp = np.exp(C * r * (1 + psi)) * N
    return AlmgrenResult(r, E, H, N, "limiting", {"psi": psi, "p": p, "C": C, "compensated": comp})


# --------------------------------------------------------------------------- Pohozaev


@dataclass
class PohozaevResult:
    radii: np.ndarray
    residual: np.ndarray
    terms: dict


def _normalized(lhs_terms: dict, rhs: np.ndarray) -> np.ndarray:
    total = sum(lhs_terms.values()) - rhs
    scale = np.max(np.abs(np.stack(list(lhs_terms.values()) + [rhs])), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, total / np.where(scale > 0, scale, 1.0), 0.0)


def pohozaev_residual_sphere(field_or_profile, params: SystemParams, x0: float, radii) -> PohozaevResult:
    """Residual of the Pohozaev identity on half-balls, normalized by the largest term."""
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii)
    N = 1
    a = params.interaction
    beta = params.beta

    def F_sum(v):
        return sum(params.reactions[i].F(v[i]) for i in range(v.shape[0]))

    grad = _dirichlet_energy(s, x0, r)

    def arc_terms(rr):
        def f(X, Y, th):
            g = s.gradients(X, Y)
            radial = g[:, 0] * np.cos(th) + g[:, 1] * np.sin(th)
            return np.stack([(g**2).sum(axis=(0, 1)), (radial**2).sum(axis=0)])
        return _arc(s, x0, rr, f)

    arcs = np.array([arc_terms(rr) for rr in r])  # (n, 2)
    flatF = np.array([float(_flat(s, x0, rr, lambda v, xs: F_sum(v))) for rr in r])
    flatB = np.array([float(_flat(s, x0, rr, lambda v, xs: _pair_overlap(v, a))) for rr in r])
    ends = np.stack([x0 - r, x0 + r])
    v_ends = s.values(ends, np.zeros_like(ends))  # (k, 2, n)
    sphF = F_sum(v_ends).sum(axis=0)
    sphB = _pair_overlap(v_ends, a).sum(axis=0)
    lhs = {
        "volume": (1 - N) * grad,
        "arc_gradient": r * arcs[:, 0],
        "flat_F": 2 * N * flatF,
        "flat_beta": -N * beta * flatB,
        "sphere_F": -2 * r * sphF,
        "sphere_beta": r * beta * sphB,
    }
    rhs = 2 * r * arcs[:, 1]
    terms = dict(lhs, arc_normal=rhs)
    return PohozaevResult(r, _normalized(lhs, rhs), terms)


@dataclass(frozen=True)
class CylinderSpec:
    """``C_{r,l}^+ = B_r^+(x0', 0) x Q_l(x0'')`` with ``x' in R^h`` and ``x'' in R^(N-h)``."""

    h: int
    r: float
    l: float
    center: tuple

    @property
    def N(self) -> int:
        return len(self.center)

    def __post_init__(self):
        if not 1 <= self.h <= len(self.center):
            raise ValueError(f"split dimension h = {self.h} must lie in [1, {len(self.center)}]")
        if self.r <= 0 or self.l <= 0:
            raise ValueError("r and l must be positive")


@dataclass(frozen=True)
class SyntheticProfile:
    """Closed-form field in ``N`` tangential variables plus ``y``.

    ``value(*coords)`` returns ``(k, ...)`` and ``gradient(*coords)`` returns
    ``(k, N + 1, ...)``; coordinates are ``x_1, ..., x_N, y``.
    """

    N: int
    value: Callable
    gradient: Callable
    name: str = "synthetic"

    @classmethod
    def lift(cls, p: Profile, N: int = 2) -> "SyntheticProfile":
        """Planar profile extended constantly in ``x_2, ..., x_N``."""
        def value(*c):
            return np.asarray(p.value(c[0], c[-1]), float)

        def gradient(*c):
            g = np.asarray(p.gradient(c[0], c[-1]), float)
            zeros = np.zeros_like(g[:, :1])
            return np.concatenate([g[:, :1]] + [zeros] * (N - 1) + [g[:, 1:]], axis=1)
        return cls(N, value, gradient, f"lift({p.kind})")

    @classmethod
    def from_profile(cls, p: Profile) -> "SyntheticProfile":
        return cls(1, p.value, p.gradient, p.kind)


def _half_ball_rule(h: int, r: float, n: int):
    """Nodes (h+1, m) relative to the center and weights on ``B_r^+`` in ``R^{h+1}_+``."""
    rho, w_rho = _composite_gauss(np.linspace(0, r, n + 1), 4)
    if h == 1:
        th, w_th = _composite_gauss(np.linspace(0, np.pi, 2 * n + 1), 4)
        R, T = np.meshgrid(rho, th, indexing="ij")
        pts = np.stack([R * np.cos(T), R * np.sin(T)])
        w = np.outer(w_rho * rho, w_th)
        return pts.reshape(2, -1), w.ravel()
    if h == 2:
        el, w_el = _composite_gauss(np.linspace(0, np.pi / 2, n + 1), 4)
        az, w_az = _composite_gauss(np.linspace(0, 2 * np.pi, 4 * n + 1), 4)
        R, E, A = np.meshgrid(rho, el, az, indexing="ij")
        pts = np.stack([R * np.cos(E) * np.cos(A), R * np.cos(E) * np.sin(A), R * np.sin(E)])
        w = (w_rho * rho**2)[:, None, None] * (w_el * np.cos(el))[None, :, None] * w_az[None, None, :]
        return pts.reshape(3, -1), w.ravel()
    raise ValueError("only h in {1, 2} is supported")


def _hemisphere_rule(h: int, r: float, n: int):
    """Nodes, outward unit normals and weights on ``d^+ B_r^+``."""
    if h == 1:
        th, w = _composite_gauss(np.linspace(0, np.pi, 2 * n + 1), 4)
        nrm = np.stack([np.cos(th), np.sin(th)])
        return r * nrm, nrm, r * w
    el, w_el = _composite_gauss(np.linspace(0, np.pi / 2, n + 1), 4)
    az, w_az = _composite_gauss(np.linspace(0, 2 * np.pi, 4 * n + 1), 4)
    E, A = np.meshgrid(el, az, indexing="ij")
    nrm = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)]).reshape(3, -1)
    w = (r**2 * np.outer(w_el * np.cos(el), w_az)).ravel()
    return r * nrm, nrm, w


def _flat_ball_rule(h: int, r: float, n: int):
    rho, w_rho = _composite_gauss(np.linspace(-r if h == 1 else 0, r, n + 1), 4)
    if h == 1:
        return rho[None, :], w_rho
    az, w_az = _composite_gauss(np.linspace(0, 2 * np.pi, 4 * n + 1), 4)
    R, A = np.meshgrid(rho, az, indexing="ij")
    return np.stack([R * np.cos(A), R * np.sin(A)]).reshape(2, -1), np.outer(w_rho * rho, w_az).ravel()


def _sphere_rule(h: int, r: float, n: int):
    """``S_r^{h-1}``: two points for ``h = 1``, a circle for ``h = 2``."""
    if h == 1:
        return np.array([[-r, r]]), np.ones(2)
    az, w = _composite_gauss(np.linspace(0, 2 * np.pi, 4 * n + 1), 4)
    return r * np.stack([np.cos(az), np.sin(az)]), r * w


def _cube_rule(d: int, l: float, n: int):
    if d == 0:
        return np.zeros((0, 1)), np.ones(1)
    if d == 1:
        x, w = _composite_gauss(np.linspace(-l, l, n + 1), 4)
        return x[None, :], w
    raise ValueError("cubes of dimension > 1 are not supported")


def _product(a_pts, a_w, b_pts, b_w):
    """Tensor product of two rules; points stacked as ``(dims_a + dims_b, m_a * m_b)``."""
    ma, mb = a_w.size, b_w.size
    pa = np.repeat(a_pts, mb, axis=1)
    pb = np.tile(b_pts, (1, ma))
    return np.concatenate([pa, pb]), np.repeat(a_w, mb) * np.tile(b_w, ma)


def pohozaev_residual_cylinder(profile, params: SystemParams, spec: CylinderSpec,
                               n: int = 24) -> PohozaevResult:
    """Residual of the Pohozaev identity on the half-cylinder ``C_{r,l}^+``.

    ``profile`` is a :class:`SyntheticProfile` (or a planar Field/Profile, in
    which case ``h = N = 1`` and the spherical residual is returned).
    """
    if isinstance(profile, (Field, Profile)):
        if spec.N != 1 or spec.h != 1:
            raise ValueError("planar inputs only admit h = N = 1")
        return pohozaev_residual_sphere(profile, params, spec.center[0], [spec.r])
    if not isinstance(profile, SyntheticProfile):
        raise TypeError("expected a SyntheticProfile")
    N, h = profile.N, spec.h
    if spec.N != N:
        raise ValueError(f"center has {spec.N} coordinates but the profile has N = {N}")
    if not 1 <= h <= N:
        raise ValueError(f"split dimension h = {h} out of range")
    d = N - h
    xc = np.asarray(spec.center, float)
    r, l = spec.r, spec.l
    a = params.interaction
    beta = params.beta

    def coords(xp, xpp, y):
        # reorder (x', x'', y) into absolute coordinates
        return [xp[i] + xc[i] for i in range(h)] + [xpp[i] + xc[h + i] for i in range(d)] + [y]

    def F_sum(v):
        return sum(params.reactions[i].F(v[i]) for i in range(v.shape[0]))

    cube, w_cube = _cube_rule(d, l, n)

    # volume
    hb, w_hb = _half_ball_rule(h, r, n)
    pts, w = _product(hb, w_hb, cube, w_cube)
    c = coords(pts[:h], pts[h + 1:], pts[h])
    g = np.asarray(profile.gradient(*c))
    tangential = (g[:, :h] ** 2).sum(axis=1) + g[:, N] ** 2
    volume = float(((2 * tangential - (h + 1) * (g**2).sum(axis=1)).sum(axis=0) * w).sum())

    # curved side d^+B_r^+ x Q_l
    hs, nrm, w_hs = _hemisphere_rule(h, r, n)
    pts, w = _product(np.vstack([hs, nrm]), w_hs, cube, w_cube)
    c = coords(pts[:h], pts[2 * (h + 1):], pts[h])
    nv = pts[h + 1:2 * (h + 1)]
    g = np.asarray(profile.gradient(*c))
    gnorm = (g**2).sum(axis=(0, 1))
    dnu = sum(g[:, i] * nv[i] for i in range(h)) + g[:, N] * nv[h]
    arc_gradient = r * float((gnorm * w).sum())
    arc_normal = 2 * r * float(((dnu**2).sum(axis=0) * w).sum())

    # flat part B'_r x Q_l
    fb, w_fb = _flat_ball_rule(h, r, n)
    pts, w = _product(fb, w_fb, cube, w_cube)
    v = np.asarray(profile.value(*coords(pts[:h], pts[h:], np.zeros(w.size))))
    flat_F = 2 * h * float((F_sum(v) * w).sum())
    flat_beta = -h * beta * float((_pair_overlap(v, a) * w).sum())

    # S_r^{h-1} x Q_l
    sp_, w_sp = _sphere_rule(h, r, n)
    pts, w = _product(sp_, w_sp, cube, w_cube)
    v = np.asarray(profile.value(*coords(pts[:h], pts[h:], np.zeros(w.size))))
    sphere_F = -2 * r * float((F_sum(v) * w).sum())
    sphere_beta = r * beta * float((_pair_overlap(v, a) * w).sum())

    # lateral B_r^+ x d Q_l
    lateral = 0.0
    if d == 1:
        for side in (-1.0, 1.0):
            c = coords(hb[:h], [np.full(w_hb.size, side * l)], hb[h])
            g = np.asarray(profile.gradient(*c))
            dnu = side * g[:, h]
            lever = sum(g[:, i] * hb[i] for i in range(h)) + g[:, N] * hb[h]
            lateral += float(((dnu * lever).sum(axis=0) * w_hb).sum())
    lhs = {"volume": np.array([volume]), "arc_gradient": np.array([arc_gradient]),
           "flat_F": np.array([flat_F]), "flat_beta": np.array([flat_beta]),
           "sphere_F": np.array([sphere_F]), "sphere_beta": np.array([sphere_beta])}
    rhs = np.array([arc_normal - 2 * lateral])
    terms = dict(lhs, arc_normal=np.array([arc_normal]), lateral=np.array([-2 * lateral]))
    return PohozaevResult(np.array([r]), _normalized(lhs, rhs), terms)


# --------------------------------------------------------------------------- Morrey


@dataclass
class MorreyResult:
    center: tuple
    radii: np.ndarray
    phi: np.ndarray


def morrey_phi(field_or_profile, center: tuple[float, float], radii) -> MorreyResult:
    """``r**(-N) int_{B_r(X) cap {y > 0}} sum |grad v_i|^2`` about ``X = (x0, y0)``, ``y0 >= 0``."""
    x0, y0 = map(float, center)
    if y0 < 0:
        raise CenterError("center must satisfy y >= 0")
    s = _sampler(field_or_profile)
    r = _check_radii(s, x0, radii, y0)
    g = _grad_sq(s)
    energy = _volume_cumulative(s, x0, r, lambda X, Y, rho: g(X, Y, rho).sum(axis=0), y0=y0)
    return MorreyResult((x0, y0), r, energy / r)


def morrey_sup(field_or_profile, centers: Sequence[tuple[float, float]], radii) -> tuple[float, tuple, float]:
    """Largest Morrey quotient over a sweep of centers; returns ``(value, center, radius)``."""
    best = (-np.inf, None, None)
    s = _sampler(field_or_profile)
    for c in centers:
        m = morrey_phi(s, c, radii)
        j = int(np.argmax(m.phi))
        if m.phi[j] > best[0]:
            best = (float(m.phi[j]), (float(c[0]), float(c[1])), float(m.radii[j]))
    return best


# --------------------------------------------------------------------------- monotonicity helpers


def relative_dips(values) -> np.ndarray:
    """``max(0, (q_j - q_{j+1}) / |q_j|)`` between consecutive entries."""
    q = np.asarray(values, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (q[:-1] - q[1:]) / np.abs(q[:-1])
    return np.where(np.isfinite(d), np.maximum(d, 0.0), 0.0)


def check_nondecreasing(radii, values, rtol: float = 1e-3) -> tuple[bool, float | None, float]:
    """``(ok, first radius after a dip beyond rtol, worst dip)``."""
    dips = relative_dips(values)
    if dips.size == 0:
        return True, None, 0.0
    worst = float(dips.max())
    bad = np.nonzero(dips > rtol)[0]
    r = np.asarray(radii, float)
    return bad.size == 0, (float(r[bad[0] + 1]) if bad.size else None), worst


def monotone_from(radii, values, rtol: float = 1e-3) -> float | None:
    """Smallest radius from which the sequence is non-decreasing within ``rtol``."""
    dips = relative_dips(values)
    r = np.asarray(radii, float)
    bad = np.nonzero(dips > rtol)[0]
    if bad.size == 0:
        return float(r[0])
    j = int(bad[-1]) + 1
    return float(r[j]) if j < r.size - 1 else None


# --------------------------------------------------------------------------- scans


@dataclass
class RadialScan:
    center: float
    radii: np.ndarray
    records: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, float)
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be strictly increasing")
        H = self.records.get("H")
        if H is not None and np.any(np.asarray(H) < 0):
            raise ValueError("H must be nonnegative")

    def column(self, name: str) -> np.ndarray:
        if name == "r":
            return self.radii
        return np.asarray(self.records.get(name, np.full(self.radii.size, np.nan)), float)

    def rows(self):
        cols = [self.column(c) for c in SCAN_COLUMNS]
        return [tuple(float(c[j]) for c in cols) for j in range(self.radii.size)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SCAN_COLUMNS)
            for row in self.rows():
                w.writerow([format(x, ".17g") for x in row])


def radial_scan(field: Field, params: SystemParams, x0: float, radii, nu: float | None = None,
                nu_prime: float = 0.45, eps: float | None = None,
                pair: tuple[int, int] = (0, 1), eps_assumption: float = 1.0) -> RadialScan:
    """Every monotone quantity on one radius sequence about ``(x0, 0)``."""
    s = _sampler(field)
    r = _check_radii(s, x0, radii)
    eps = 2 * s.step if eps is None else eps
    rec: dict = {}
    alm = almgren_coexistence(s, params, x0, r) if params.beta > 0 else almgren_segregated(s, x0, r)
    rec.update(E=alm.E, H=alm.H, N=alm.N)
    if field.k >= 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SegregationWarning)
            rec["Phi_seg"] = acf_segregated(s, x0, r, Kernel(1, eps), nu, pair).phi
        rec["Phi_pert"] = acf_perturbed(s, x0, r, nu_prime, max(params.beta, 0.0) or 1.0, pair).phi
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SegregationWarning)
        rec["Phi_boundary"] = acf_boundary(s, r, x0, pair[0]).phi
    rec["Phi_morrey"] = morrey_phi(s, (x0, 0.0), r).phi
    rec["poho_res"] = pohozaev_residual_sphere(s, params, x0, r).residual
    p = 2.0 + eps_assumption
    lp = np.array([float(_flat(s, x0, rr, lambda v, xs: (np.abs(v) ** p).sum(axis=0))) for rr in r])
    rec["psi"] = (lp / r) ** (1 - 2 / p)
    meta = {"center": x0, "kernel_eps": eps, "nu": default_nu() if nu is None else nu,
            "nu_prime": nu_prime, "variant": alm.variant, "grid": field.grid.to_dict()}
    if "log_derivative_gap" in alm.extras:
        meta["min_log_derivative_gap"] = float(np.nanmin(alm.extras["log_derivative_gap"]))
    return RadialScan(x0, r, rec, meta)
