"""Closed-form reference solutions on the upper half-plane (and their tensor lifts).

Polar angle ``theta`` lies in ``[0, pi]`` measured from the positive x-axis;
positively homogeneous profiles evaluate to 0 at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .extension_solver import HalfGrid, laplacian_residual

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Profile:
    """A k-component closed-form field with analytic value and gradient.

    ``value(x, y)`` returns shape ``(k, ...)``; ``gradient(x, y)`` returns
    ``(k, 2, ...)`` with the x- then y-derivative.
    """

    kind: str
    params: dict
    value: Evaluator
    gradient: Evaluator
    harmonic: bool = True
    singular_points: tuple = ()
    homogeneity: float | None = None

    @property
    def k(self) -> int:
        return int(np.asarray(self.value(np.array([0.3]), np.array([0.4]))).shape[0])

    def sample(self, grid: HalfGrid) -> np.ndarray:
        X, Y = grid.mesh()
        return np.asarray(self.value(X, Y), float)

    def field(self, grid: HalfGrid):
        from .extension_solver import Field
        return Field(grid, self.sample(grid))

    def dirichlet(self):
        from .extension_solver import DirichletData
        return DirichletData(self.value, name=self.kind)


def _polar(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return np.hypot(x, y), np.arctan2(y, x)


def _power_pair(a: float, c: float, d: float):
    """``(c rho^a cos(a theta), d rho^a sin(a theta))`` with analytic gradients."""

    def value(x, y):
        rho, th = _polar(x, y)
        ra = np.where(rho > 0, rho, 1.0) ** a * (rho > 0)
        return np.stack([c * ra * np.cos(a * th), d * ra * np.sin(a * th)])

    def gradient(x, y):
        # d/dz of z^a = a z^(a-1); for u = Re, du/dx = Re(a z^(a-1)), du/dy = -Im(a z^(a-1))
        rho, th = _polar(x, y)
        safe = np.where(rho > 0, rho, 1.0)
        ra1 = a * safe ** (a - 1) * (rho > 0)
        re, im = ra1 * np.cos((a - 1) * th), ra1 * np.sin((a - 1) * th)
        gv = np.stack([c * re, -c * im])
        gw = np.stack([d * im, d * re])
        return np.stack([gv, gw])

    return value, gradient


def classified_pair(k: int = 0, c: float = 1.0, sign: int = 1, d: float | None = None) -> Profile:
    """``v = c rho^(1/2+k) cos((1/2+k) theta)``, ``w = +-c rho^(1/2+k) sin((1/2+k) theta)``.

    ``d`` overrides the second coefficient (used to probe the ``|d| = |c|`` requirement).
    """
    if k < 0 or int(k) != k:
        raise ValueError("mode index k must be a nonnegative integer")
    if c == 0:
        raise ValueError("c must be nonzero")
    a = 0.5 + k
    dd = sign * c if d is None else d
    value, gradient = _power_pair(a, c, dd)
    return Profile("classified-pair", {"k": k, "c": c, "d": dd}, value, gradient,
                   singular_points=((0.0, 0.0),), homogeneity=a)


def sqrt_extension() -> Profile:
    """Harmonic, 1/2-homogeneous extension of ``sqrt(x+)``."""

    def value(x, y):
        rho = np.hypot(x, y)
        return np.sqrt(np.maximum(rho + x, 0.0) / 2)[None]

    def gradient(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        rho = np.hypot(x, y)
        v = np.sqrt(np.maximum(rho + x, 0.0) / 2)
        safe = np.where(rho > 0, rho, 1.0)
        # v^2 = (rho + x)/2  =>  2 v grad v = ((x/rho + 1)/2, (y/rho)/2)
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = np.where(v > 0, (x / safe + 1) / (4 * v), 0.0)
            # on the negative axis v -> 0 but v_y -> 1/(2 sqrt|x|)
            gy_pos = y / (4 * safe * np.where(v > 0, v, 1.0))
            gy_neg = 0.5 / np.sqrt(np.where(x < 0, -x, 1.0))
            gy = np.where(v > 0, gy_pos, np.where((x < 0) & (y == 0), gy_neg, 0.0))
        return np.stack([gx, gy])[None]

    return Profile("sqrt-extension", {}, value, gradient,
                   singular_points=((0.0, 0.0),), homogeneity=0.5)


def linear_y(c: float = 1.0, with_constant: float | None = None) -> Profile:
    """``(c y, 0)``; with ``with_constant`` the first slot is that constant: ``(1, y, 0)``-type."""

    if with_constant is None:
        def value(x, y):
            return np.stack([c * np.asarray(y, float), np.zeros_like(np.asarray(y, float))])

        def gradient(x, y):
            z = np.zeros_like(np.asarray(x, float) + np.asarray(y, float))
            return np.stack([np.stack([z, z + c]), np.stack([z, z])])

        return Profile("linear-y", {"c": c}, value, gradient, homogeneity=1.0)

    def value(x, y):
        yy = np.asarray(y, float) + 0 * np.asarray(x, float)
        return np.stack([np.full_like(yy, with_constant), c * yy, np.zeros_like(yy)])

    def gradient(x, y):
        z = np.zeros_like(np.asarray(x, float) + np.asarray(y, float))
        return np.stack([np.stack([z, z]), np.stack([z, z + c]), np.stack([z, z])])

    return Profile("linear-y", {"c": c, "constant": with_constant}, value, gradient)


def constant(c: float | list = 1.0) -> Profile:
    cs = np.atleast_1d(np.asarray(c, float))

    def value(x, y):
        s = np.asarray(x, float) + np.asarray(y, float)
        return cs.reshape((-1,) + (1,) * s.ndim) * np.ones_like(s)[None]

    def gradient(x, y):
        s = np.asarray(x, float) + np.asarray(y, float)
        return np.zeros((cs.size, 2) + s.shape)

    return Profile("constant", {"c": cs.tolist()}, value, gradient, homogeneity=0.0)


def subsolution_linear(M: float) -> Profile:
    """``w = (1 + M y)/(1 + M)``: harmonic with ``d_nu w + M w = 0`` on ``y = 0``."""
    if M < 0:
        raise ValueError("M must be nonnegative")

    def value(x, y):
        return ((1 + M * (np.asarray(y, float) + 0 * np.asarray(x, float))) / (1 + M))[None]

    def gradient(x, y):
        z = np.zeros_like(np.asarray(x, float) + np.asarray(y, float))
        return np.stack([z, z + M / (1 + M)])[None]

    return Profile("subsolution-linear", {"M": M}, value, gradient)


def polynomial_pair(k: int, c: float = 1.0, family: str = "cos") -> Profile:
    """``c rho^k cos(k theta)`` (``family='cos'``), ``c rho^k sin(k theta)`` (``'sin'``),
    or the Dirichlet family ``c rho^(1+k) sin((1+k) theta)`` (``'dirichlet'``)."""
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    if family == "dirichlet":
        a, slot = 1 + k, 1
    elif family in ("cos", "sin"):
        a, slot = k, 0 if family == "cos" else 1
    else:
        raise ValueError(f"unknown family {family!r}")
    value2, grad2 = _power_pair(float(a), c, c)

    def value(x, y):
        return value2(x, y)[slot][None]

    def gradient(x, y):
        return grad2(x, y)[slot][None]

    return Profile("polynomial-harmonic", {"k": k, "c": c, "family": family}, value, gradient,
                   homogeneity=float(a))


# --------------------------------------------------------------------------- supersolution


def _wdelta_terms(M: float):
    c = 2.0 / M

    def g(x, y):
        # (2/pi)[pi - atan((x+1)/(y+c)) - atan((1-x)/(y+c))]
        t = y + c
        return (2 / np.pi) * (np.pi - np.arctan((x + 1) / t) - np.arctan((1 - x) / t))

    def dg(x, y):
        t = y + c
        a1, a2 = x + 1, 1 - x
        q1, q2 = t**2 + a1**2, t**2 + a2**2
        gx = (2 / np.pi) * (-t / q1 + t / q2)
        gy = (2 / np.pi) * (a1 / q1 + a2 / q2)
        return gx, gy

    return g, dg


@dataclass(frozen=True)
class SupersolutionProfile:
    """The arctan supersolution ``w_delta`` in ``N`` horizontal dimensions."""

    M: float
    delta: float = 0.0
    N: int = 1

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if self.delta < 0 or self.N < 1:
            raise ValueError("delta >= 0 and N >= 1 required")

    def value(self, xs, y) -> np.ndarray:
        """``xs`` has shape ``(N, ...)``."""
        g, _ = _wdelta_terms(self.M)
        xs = np.asarray(xs, float)
        return self.delta / self.M + sum(g(xs[i], y) for i in range(self.N)) / self.N

    def gradient(self, xs, y) -> np.ndarray:
        _, dg = _wdelta_terms(self.M)
        xs = np.asarray(xs, float)
        parts = [dg(xs[i], y) for i in range(self.N)]
        gx = [p[0] / self.N for p in parts]
        gy = sum(p[1] for p in parts) / self.N
        return np.stack(gx + [gy])

    def profile(self) -> Profile:
        """Planar (N = 1) view as a generic :class:`Profile`."""
        if self.N != 1:
            raise ValueError("planar view only for N = 1")
        return Profile("supersolution-wdelta", {"M": self.M, "delta": self.delta, "N": 1},
                       lambda x, y: self.value(np.asarray(x, float)[None], y)[None],
                       lambda x, y: self.gradient(np.asarray(x, float)[None], y)[None])


def supersolution_wdelta(M: float, delta: float = 0.0, N: int = 1) -> SupersolutionProfile:
    return SupersolutionProfile(M, delta, N)


@dataclass
class PropertyReport:
    passed: bool
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def _worst(mask_bad: np.ndarray, margin: np.ndarray, coords: list[np.ndarray]) -> dict:
    n_bad = int(np.count_nonzero(mask_bad))
    i = int(np.argmin(margin))
    return {"violations": n_bad, "min_margin": float(margin.reshape(-1)[i]),
            "worst_node": [float(c.reshape(-1)[i]) for c in coords]}


def check_supersolution(w: SupersolutionProfile, h: float = 1 / 200,
                        harmonic_rtol: float = 1e-2) -> PropertyReport:
    """Check the four supersolution properties of ``w_delta`` on a uniform grid.

    Harmonicity is tested through the Richardson-extrapolated 5-point Laplacian
    (fourth-order accurate), which must stay below ``harmonic_rtol`` times
    ``|w_xx| + |w_yy|`` (a non-harmonic term shows up at relative size O(1)).  Since ``w_delta`` is a sum of functions of ``(x_i, y)``,
    the (2N+1)-point stencil separates into planar stencils exactly.
    The remaining three inequalities are evaluated from the closed form at
    grid nodes of the flat ball, the half-sphere and ``B_1/2``.
    """
    M, delta, N = w.M, w.delta, w.N
    g, dg = _wdelta_terms(M)
    checks = {}

    # interior harmonicity on the planar grid [-1,1]x[0,1] restricted to |X| < 1
    n = int(round(1 / h))
    xs = np.linspace(-1, 1, 2 * n + 1)
    ys = np.linspace(0, 1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")

    def second(step):
        # stencils that reach below y = 0 only touch excluded edge nodes
        with np.errstate(divide="ignore", invalid="ignore"):
            return _second(step)

    def _second(step):
        dxx = (g(X + step, Y) + g(X - step, Y) - 2 * g(X, Y)) / step**2
        dyy = (g(X, Y + step) + g(X, Y - step) - 2 * g(X, Y)) / step**2
        return dxx, dyy

    dxx, dyy = second(h)
    dxx2, dyy2 = second(2 * h)
    rich = (4 * (dxx + dyy) - (dxx2 + dyy2)) / 3
    scale = np.abs(dxx) + np.abs(dyy) + 1e-300
    inside = (X**2 + Y**2 < 1) & (Y > 0)
    margin = harmonic_rtol * scale - np.abs(rich)
    bad = inside & (margin < 0)
    checks["harmonic"] = _worst(bad, np.where(inside, margin, np.inf), [X, Y])
    checks["harmonic"]["max_relative_laplacian"] = float(np.max(np.abs(rich[inside]) / scale[inside]))

    # flat-ball grid points
    if N == 1:
        fx = xs[np.abs(xs) < 1][None]
    else:
        a = np.linspace(-1, 1, 2 * n + 1)
        A1, A2 = np.meshgrid(a, a, indexing="ij")
        keep = A1**2 + A2**2 < 1
        fx = np.stack([A1[keep], A2[keep]] + [np.zeros(keep.sum())] * (N - 2))
    wy0 = w.value(fx, np.zeros(fx.shape[1:]))
    dy0 = w.gradient(fx, np.zeros(fx.shape[1:]))[-1]
    dnu = -dy0
    margin = dnu - (-M * wy0 + delta)
    checks["robin"] = _worst(margin < -1e-12, margin, list(fx))

    # half-sphere |X| = 1
    if N == 1:
        t = np.linspace(0, np.pi, 4 * n + 1)
        sx = np.cos(t)[None]
        sy = np.sin(t)
    else:
        t = np.linspace(0, np.pi / 2, n + 1)
        p = np.linspace(0, 2 * np.pi, 4 * n + 1)
        T, P = np.meshgrid(t, p, indexing="ij")
        sx = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P)] + [np.zeros_like(T)] * (N - 2))
        sy = np.cos(T)
    ws = w.value(sx, sy)
    margin = ws - 1.0
    checks["lower_bound_on_sphere"] = _worst(margin < -1e-12, margin, list(sx) + [sy])

    # flat half-ball B_1/2
    rad = np.sqrt(np.sum(fx**2, axis=0))
    half = rad <= 0.5 + 1e-12
    bound = (1 + delta) / M
    margin = bound - wy0[half]
    checks["upper_bound_on_half_ball"] = _worst(margin < -1e-12, margin, [c[half] for c in fx])
    checks["upper_bound_on_half_ball"]["bound"] = bound
    checks["upper_bound_on_half_ball"]["max_value"] = float(np.max(wy0[half]))

    passed = all(c["violations"] == 0 for c in checks.values())
    return PropertyReport(passed, checks)


# --------------------------------------------------------------------------- generic checks


def gradient_check(profile: Profile, n: int = 1000, step: float = 1e-5, seed: int = 0,
                   box=(-1.0, 1.0, 0.0, 1.0), exclude: float = 0.05) -> float:
    """Max relative error between the analytic gradient and central differences."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(box[0], box[1], n)
    y = rng.uniform(max(box[2], step * 2), box[3], n)
    for sx, sy in profile.singular_points:
        far = np.hypot(x - sx, y - sy) > exclude
        x, y = x[far], y[far]
    g = np.asarray(profile.gradient(x, y))
    fd_x = (profile.value(x + step, y) - profile.value(x - step, y)) / (2 * step)
    fd_y = (profile.value(x, y + step) - profile.value(x, y - step)) / (2 * step)
    fd = np.stack([fd_x, fd_y], axis=1)
    err = np.abs(g - fd)
    scale = np.maximum(np.abs(g), 1.0)
    return float(np.max(err / scale))


def harmonic_residual(profile: Profile, grid: HalfGrid, exclude: float = 0.05) -> float:
    """Max 5-point residual at interior nodes farther than ``exclude`` from singular points."""
    vals = profile.sample(grid)
    X, Y = grid.mesh()
    keep = np.ones((grid.nx - 2, grid.ny - 2), dtype=bool)
    for sx, sy in profile.singular_points:
        keep &= np.hypot(X[1:-1, 1:-1] - sx, Y[1:-1, 1:-1] - sy) >= exclude
    return float(max(np.max(np.abs(laplacian_residual(grid, v)[keep])) for v in vals))
