"""Blow-up toolkit: Hölder seminorms, rescalings, zero sets, segregation mass, growth fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import map_coordinates

from .extension_solver import Field, HalfGrid, SystemParams

EXACT_LIMIT = 10_000


# --------------------------------------------------------------------------- cutoff


def quintic_cutoff(s):
    """Radial cutoff: 1 for ``s <= 1/2``, 0 for ``s >= 1``, C^2 quintic blend in between."""
    s = np.asarray(s, float)
    t = np.clip((s - 0.5) / 0.5, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


def eta(x, y, center: float = 0.0):
    return quintic_cutoff(np.hypot(np.asarray(x, float) - center, y))


# --------------------------------------------------------------------------- Hölder seminorm


@dataclass
class Region:
    """Node selection on a grid.

    ``kind`` is ``"half_ball"`` (``center``, ``radius``), ``"flat"`` (interval
    ``[a, b]`` of the edge ``y = 0``), ``"all"`` or ``"mask"`` (boolean ``mask``).
    """

    kind: str = "half_ball"
    center: float = 0.0
    radius: float = 1.0
    a: float = -1.0
    b: float = 1.0
    mask: np.ndarray | None = None

    def select(self, grid: HalfGrid) -> np.ndarray:
        X, Y = grid.mesh()
        slack = 1e-9 * grid.h
        if self.kind == "half_ball":
            return np.hypot(X - self.center, Y) <= self.radius + slack
        if self.kind == "flat":
            m = np.zeros_like(X, dtype=bool)
            m[:, 0] = (X[:, 0] >= self.a - slack) & (X[:, 0] <= self.b + slack)
            return m
        if self.kind == "all":
            return np.ones_like(X, dtype=bool)
        if self.kind == "mask":
            m = np.asarray(self.mask, bool)
            if m.shape != X.shape:
                raise ValueError("mask shape does not match the grid")
            return m
        raise ValueError(f"unknown region kind {self.kind!r}")


@dataclass
class HolderEstimate:
    alpha: float
    seminorm: float
    pair: tuple | None  # ((x', y'), (x'', y''))
    n_nodes: int
    exact: bool


def _pair_max(P: np.ndarray, V: np.ndarray, alpha: float, Q: np.ndarray | None = None,
              W: np.ndarray | None = None, block: int = 512):
    """Largest ``max_i |V_i(p) - W_i(q)| / |p - q|**alpha`` over ``p in P``, ``q in Q``.

    With ``Q = None`` the pairs ``p < q`` of ``P`` are scanned.  Ties keep the
    lexicographically first pair.
    """
    same = Q is None
    if same:
        Q, W = P, V
    best, arg = 0.0, None
    for s in range(0, len(P), block):
        p, v = P[s:s + block], V[:, s:s + block]
        d = np.hypot(p[:, None, 0] - Q[None, :, 0], p[:, None, 1] - Q[None, :, 1])
        diff = np.max(np.abs(v[:, :, None] - W[:, None, :]), axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, diff / d**alpha, 0.0)
        if same:
            q[np.tril_indices(q.shape[0], k=s, m=q.shape[1])] = 0.0
        j = int(np.argmax(q))
        val = float(q.flat[j])
        if val > best:
            a, b = divmod(j, q.shape[1])
            best, arg = val, (s + a, b)
    return best, arg


def holder_seminorm(field: Field, alpha: float, region: Region | None = None, stride: int | None = None,
                    cutoff: Callable | None = None, component: int | None = None) -> HolderEstimate:
    """Brute-force ``max |(eta v)(X') - (eta v)(X'')| / |X' - X''|**alpha`` over region nodes.

    Exact over all pairs up to ``EXACT_LIMIT`` nodes; above that, a strided
    search followed by full-resolution refinement around the best coarse pairs.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    g = field.grid
    region = region or Region()
    m = region.select(g)
    if not m.any():
        raise ValueError("empty region")
    X, Y = g.mesh()
    vals = field.values if component is None else field.values[component:component + 1]
    if cutoff is not None:
        vals = vals * cutoff(X, Y)[None]
    ii, jj = np.nonzero(m)  # lexicographic (i, j) order
    P = np.stack([X[ii, jj], Y[ii, jj]], axis=1)
    V = vals[:, ii, jj]
    n = len(P)
    if stride is None:
        stride = 1 if n <= EXACT_LIMIT else 4
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if stride == 1:
        best, arg = _pair_max(P, V, alpha)
        pair = None if arg is None else (tuple(P[arg[0]]), tuple(P[arg[1]]))
        return HolderEstimate(alpha, best, pair, n, True)

    coarse = (ii % stride == 0) & (jj % stride == 0)
    Pc, Vc = P[coarse], V[:, coarse]
    best, arg = _pair_max(Pc, Vc, alpha)
    pair = None if arg is None else (Pc[arg[0]], Pc[arg[1]])
    if arg is None:
        return HolderEstimate(alpha, 0.0, None, n, False)
    # refine: full-resolution neighbourhoods of both endpoints
    rad = 2 * stride * g.h
    near_a = np.hypot(*(P - pair[0]).T) <= rad
    near_b = np.hypot(*(P - pair[1]).T) <= rad
    local = near_a | near_b
    Pl, Vl = P[local], V[:, local]
    val, arg2 = _pair_max(Pl, Vl, alpha)
    if val > best:
        best, pair = val, (Pl[arg2[0]], Pl[arg2[1]])
    val, arg3 = _pair_max(P[near_a], V[:, near_a], alpha, P[near_b], V[:, near_b])
    if val > best:
        best, pair = val, (P[near_a][arg3[0]], P[near_b][arg3[1]])
    return HolderEstimate(alpha, best, (tuple(pair[0]), tuple(pair[1])), n, False)


# --------------------------------------------------------------------------- rescaling


@dataclass
class RescaleSpec:
    """``w(X) = eta(P) v(P + r X) / (L r**alpha)`` on the target grid.

    ``cutoff`` is ``None`` (``eta = 1``) or a function of ``(x, y)``;
    ``mode = "field"`` multiplies by ``eta(P + r X)`` instead of ``eta(P)``.
    """

    P: float = 0.0
    r: float = 1.0
    L: float = 1.0
    alpha: float = 0.5
    cutoff: Callable | None = None
    mode: str = "base"
    target: HalfGrid | None = None

    def __post_init__(self):
        if self.r <= 0 or self.L <= 0:
            raise ValueError("r and L must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.mode not in ("base", "field"):
            raise ValueError("mode must be 'base' or 'field'")


def _bilinear(grid: HalfGrid, arr: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    i = (x - grid.x_min) / grid.h
    j = y / grid.h
    return map_coordinates(arr, np.stack([i.ravel(), j.ravel()]), order=1, mode="nearest").reshape(x.shape)


def rescale(field: Field, spec: RescaleSpec) -> Field:
    g = field.grid
    tgt = spec.target or g
    Xt, Yt = tgt.mesh()
    xs = spec.P + spec.r * Xt
    ys = spec.r * Yt
    tol = 1e-9 * g.h
    if xs.min() < g.x_min - tol or xs.max() > g.x_max + tol or ys.max() > g.y_max + tol:
        raise ValueError("rescaled sample points leave the source grid")
    xs = np.clip(xs, g.x_min, g.x_max)
    ys = np.clip(ys, 0.0, g.y_max)
    vals = np.stack([_bilinear(g, field.values[i], xs, ys) for i in range(field.k)])
    if spec.cutoff is not None:
        if spec.mode == "base":
            vals = vals * float(spec.cutoff(np.array(spec.P), np.array(0.0)))
        else:
            vals = vals * spec.cutoff(xs, ys)[None]
    return Field(tgt, vals / (spec.L * spec.r**spec.alpha))


# --------------------------------------------------------------------------- segregation


@dataclass
class SegregationMass:
    weighted: float
    overlap: float
    beta: float


def _flat_trapezoid(grid: HalfGrid, values: np.ndarray, a: float, b: float) -> float:
    """Trapezoid rule of a nodal edge function over ``[a, b]`` with interpolated end points."""
    xs = grid.x
    if a < grid.x_min - 1e-12 or b > grid.x_max + 1e-12 or b < a:
        raise ValueError("interval must lie inside the flat edge")
    inner = (xs > a + 1e-12) & (xs < b - 1e-12)
    pts = np.concatenate([[a], xs[inner], [b]])
    vals = np.interp(pts, xs, values)
    return float(np.trapezoid(vals, pts)) if hasattr(np, "trapezoid") else float(np.trapz(vals, pts))


def segregation_mass(field: Field, params: SystemParams, region: tuple[float, float] | None = None) -> SegregationMass:
    """``(beta * int sum_{i<j} a_ij v_i^2 v_j^2, int sum_{i<j} v_i^2 v_j^2)`` over an edge interval."""
    g = field.grid
    a, b = region or (g.x_min, g.x_max)
    tr = field.trace()
    sq = tr**2
    plain = np.zeros(g.nx)
    weighted = np.zeros(g.nx)
    for i in range(field.k):
        for j in range(i + 1, field.k):
            plain += sq[i] * sq[j]
            weighted += params.interaction[i, j] * sq[i] * sq[j]
    return SegregationMass(params.beta * _flat_trapezoid(g, weighted, a, b),
                           _flat_trapezoid(g, plain, a, b), params.beta)


# --------------------------------------------------------------------------- zero set


@dataclass
class ZeroSet:
    indices: np.ndarray
    x: np.ndarray
    tol: float
    distance: np.ndarray  # per flat node, distance to the nearest zero-set node

    @property
    def empty(self) -> bool:
        return self.indices.size == 0

    def distance_to(self, x0: float) -> float:
        return float(np.min(np.abs(self.x - x0))) if self.x.size else math.inf

    def clusters(self) -> list[tuple[float, float]]:
        """Runs of consecutive nodes as ``(x_first, x_last)``."""
        if self.empty:
            return []
        breaks = np.nonzero(np.diff(self.indices) > 1)[0]
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [self.indices.size - 1]])
        return [(float(self.x[s]), float(self.x[e])) for s, e in zip(starts, ends)]


def default_zero_tol(field: Field) -> float:
    """``10 h`` times the median over edge nodes of the largest tangential slope."""
    g = field.grid
    tr = field.trace()
    slope = np.max(np.abs(np.gradient(tr, g.h, axis=1, edge_order=2)), axis=0)
    tol = 10 * g.h * float(np.median(slope))
    return max(tol, 1e-12 * float(np.max(np.abs(tr), initial=0.0)), np.finfo(float).tiny)


def zero_set(field: Field, tol: float | None = None) -> ZeroSet:
    if tol is None:
        tol = default_zero_tol(field)
    elif tol <= 0:
        raise ValueError("tol must be positive")
    g = field.grid
    amp = np.max(np.abs(field.trace()), axis=0)
    idx = np.nonzero(amp <= tol)[0]
    zx = g.x[idx]
    if zx.size:
        dist = np.min(np.abs(g.x[:, None] - zx[None, :]), axis=1)
    else:
        dist = np.full(g.nx, math.inf)
    return ZeroSet(idx, zx, float(tol), dist)


# --------------------------------------------------------------------------- growth fit


@dataclass
class GrowthFit:
    nu: float
    slope: float
    intercept: float
    residual: float
    n: int
    window: tuple


def fit_growth_exponent(H, radii, r_window: tuple[float, float] | None = None) -> GrowthFit:
    """Least-squares slope of ``log H`` against ``log r``, halved."""
    H = np.asarray(H, float)
    r = np.asarray(radii, float)
    if H.shape != r.shape:
        raise ValueError("H and radii must have the same length")
    lo, hi = r_window or (float(r.min()), float(r.max()))
    sel = (r >= lo - 1e-12) & (r <= hi + 1e-12)
    if sel.sum() < 3:
        raise ValueError("the fit window needs at least 3 radii")
    if np.any(~(H[sel] > 0)):
        raise ValueError("H must be positive inside the window")
    lx, ly = np.log(r[sel]), np.log(H[sel])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, icept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.sqrt(np.mean((A @ [slope, icept] - ly) ** 2)))
    return GrowthFit(float(slope) / 2, float(slope), float(icept), res, int(sel.sum()), (lo, hi))


# --------------------------------------------------------------------------- decay


@dataclass
class DecayReport:
    M: float
    delta: float
    slack: float
    sup_flat: float
    inf_flat: float
    sup_arc: float
    inf_arc: float
    upper_bound: float
    lower_bound: float
    upper_ok: bool
    lower_ok: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.upper_ok and self.lower_ok

    @property
    def upper_margin(self) -> float:
        return self.upper_bound - self.sup_flat

    @property
    def lower_margin(self) -> float:
        return self.inf_flat - self.lower_bound

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("M", "delta", "slack", "sup_flat", "inf_flat", "sup_arc",
                                           "inf_arc", "upper_bound", "lower_bound", "upper_ok",
                                           "lower_ok", "passed", "upper_margin", "lower_margin")}
        d.update(self.details)
        return d


def decay_check(field: Field, M: float, delta: float = 0.0, slack: float = 0.05,
                component: int = 0) -> DecayReport:
    """Bracket of the edge values on ``|x| <= 1/2`` against the data on the unit half-circle."""
    if M <= 0:
        raise ValueError("M must be positive")
    g = field.grid
    v = field.values[component]
    if np.min(v) < -1e-12 * max(1.0, float(np.max(np.abs(v)))):
        raise ValueError("decay_check expects a nonnegative field")
    x = g.x
    flat = v[np.abs(x) <= 0.5 + 1e-12, 0]
    th = np.linspace(0, np.pi, 1025)
    xa, ya = np.cos(th), np.sin(th)
    if xa.min() < g.x_min - 1e-12 or xa.max() > g.x_max + 1e-12 or ya.max() > g.y_max + 1e-12:
        raise ValueError("the unit half-circle must lie inside the grid")
    arc = _bilinear(g, v, np.clip(xa, g.x_min, g.x_max), np.clip(ya, 0, g.y_max))
    sup_f, inf_f = float(flat.max()), float(flat.min())
    sup_a, inf_a = float(arc.max()), float(arc.min())
    ub = (1 + delta) / M * sup_a * (1 + slack)
    lb = inf_a / (1 + M) * (1 - slack)
    return DecayReport(M, delta, slack, sup_f, inf_f, sup_a, inf_a, ub, lb,
                       sup_f <= ub, inf_f >= lb,
                       {"argmax_x": float(x[np.abs(x) <= 0.5 + 1e-12][int(flat.argmax())])})
