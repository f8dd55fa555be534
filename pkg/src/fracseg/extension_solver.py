"""Finite-difference solver for the harmonic-extension competition system.

Every component is harmonic on the half-rectangle ``[x_min, x_max] x [0, y_max]``
and satisfies, on the flat edge ``y = 0``,

    d_nu v_i = f_i(v_i) - beta * v_i * sum_{j != i} a_ij v_j**2,

with ``d_nu = -d_y`` the outward normal derivative.  Left, right and top edges
carry Dirichlet data.

The flat-edge condition is discretised by ghost-node elimination: the
5-point row at ``y = 0`` is halved, which keeps the operator symmetric and
positive definite whenever the Robin coefficient is nonnegative.  With this
scaling (all rows multiplied by ``h**2``) the flat-edge row reads

    2 v0 - (vL + vR)/2 - v1 + h * lam * v0 = h * g.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

ArrayFunc = Callable[[np.ndarray], np.ndarray]


class GridError(ValueError):
    pass


class SingularSystemError(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    """Raised when an iteration produces non-finite values."""


@dataclass(frozen=True)
class HalfGrid:
    """Uniform tensor grid on ``[x_min, x_max] x [0, y_max]``; row ``j = 0`` is the flat edge."""

    x_min: float = -1.0
    x_max: float = 1.0
    y_max: float = 1.0
    nx: int = 201
    ny: int = 101

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise GridError(f"grid too small: nx={self.nx}, ny={self.ny} (need >= 3)")
        if not self.x_max > self.x_min or not self.y_max > 0:
            raise GridError("empty domain")
        hx = (self.x_max - self.x_min) / (self.nx - 1)
        hy = self.y_max / (self.ny - 1)
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise GridError(f"non-uniform spacing: hx={hx!r}, hy={hy!r}")

    @classmethod
    def uniform(cls, h: float, x_min: float = -1.0, x_max: float = 1.0,
                y_max: float = 1.0) -> "HalfGrid":
        nx = int(round((x_max - x_min) / h)) + 1
        ny = int(round(y_max / h)) + 1
        return cls(x_min, x_max, y_max, nx, ny)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def dirichlet_mask(self) -> np.ndarray:
        m = np.zeros((self.nx, self.ny), dtype=bool)
        m[0, :] = m[-1, :] = True
        m[:, -1] = True
        return m

    def contains(self, x: float, y: float, slack: float = 1e-12) -> bool:
        return (self.x_min - slack <= x <= self.x_max + slack
                and -slack <= y <= self.y_max + slack)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "y_max": self.y_max,
                "nx": self.nx, "ny": self.ny, "h": self.h}


@dataclass(frozen=True)
class Reaction:
    """Scalar reaction ``f`` with primitive ``F`` (``F(0) = 0``) and derivative ``df``."""

    f: ArrayFunc
    F: ArrayFunc
    df: ArrayFunc | None = None
    name: str = "custom"

    @classmethod
    def zero(cls) -> "Reaction":
        return cls(np.zeros_like, np.zeros_like, np.zeros_like, "zero")

    @classmethod
    def gross_pitaevskii(cls, omega: float, lam: float) -> "Reaction":
        return cls(
            lambda s: omega * s**3 + lam * s,
            lambda s: 0.25 * omega * s**4 + 0.5 * lam * s**2,
            lambda s: 3.0 * omega * s**2 + lam,
            f"gross-pitaevskii(omega={omega}, lambda={lam})",
        )

    @classmethod
    def linear(cls, lam: float) -> "Reaction":
        return cls(lambda s: lam * s, lambda s: 0.5 * lam * s**2,
                   lambda s: np.full_like(s, lam), f"linear(lambda={lam})")

    def derivative(self, s: np.ndarray) -> np.ndarray:
        if self.df is not None:
            return self.df(s)
        eps = 1e-7 * np.maximum(1.0, np.abs(s))
        return (self.f(s + eps) - self.f(s - eps)) / (2 * eps)

    def lipschitz_bound(self, lo: float, hi: float, n: int = 257) -> float:
        s = np.linspace(lo, hi, n)
        return float(np.max(np.abs(self.derivative(s))))


@dataclass(frozen=True)
class SystemParams:
    k: int
    beta: float = 0.0
    reactions: tuple[Reaction, ...] = ()
    interaction: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not self.reactions:
            object.__setattr__(self, "reactions", tuple(Reaction.zero() for _ in range(self.k)))
        elif len(self.reactions) != self.k:
            raise ValueError(f"expected {self.k} reactions, got {len(self.reactions)}")
        a = np.ones((self.k, self.k)) if self.interaction is None else np.asarray(self.interaction, float)
        if a.shape != (self.k, self.k):
            raise ValueError(f"interaction matrix must be {self.k}x{self.k}")
        off = ~np.eye(self.k, dtype=bool)
        if not np.allclose(a, a.T) or np.any(a[off] <= 0):
            raise ValueError("interaction weights must be symmetric and positive")
        a = a.copy()
        np.fill_diagonal(a, 0.0)
        a.setflags(write=False)
        object.__setattr__(self, "interaction", a)

    def coupling(self, values: np.ndarray) -> np.ndarray:
        """``beta * sum_j a_ij v_j**2`` for each component (diagonal of ``a`` is zero)."""
        sq = values**2
        return self.beta * np.tensordot(self.interaction, sq, axes=(1, 0))

    def flat_rhs(self, values: np.ndarray) -> np.ndarray:
        """Right side of the flat-edge condition, ``f_i(v_i) - v_i * coupling_i``."""
        out = np.empty_like(values)
        coup = self.coupling(values)
        for i, r in enumerate(self.reactions):
            out[i] = r.f(values[i]) - values[i] * coup[i]
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "beta": self.beta,
                "reactions": [r.name for r in self.reactions],
                "interaction": np.asarray(self.interaction).tolist()}


@dataclass(frozen=True)
class Field:
    grid: HalfGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.shape[1:] != (self.grid.nx, self.grid.ny):
            raise ValueError(f"values shape {v.shape} does not match grid {(self.grid.nx, self.grid.ny)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> "Field":
        return Field(self.grid, self.values[i:i + 1])

    def trace(self) -> np.ndarray:
        return self.values[:, :, 0]

    @classmethod
    def from_function(cls, grid: HalfGrid, fn: Callable) -> "Field":
        X, Y = grid.mesh()
        vals = np.asarray(fn(X, Y), dtype=float)
        return cls(grid, vals)


class DirichletData:
    """Boundary data on the left, right and top edges.

    Either ``evaluator(X, Y)`` returning a ``(k, ...)`` array, or ``samples`` of
    shape ``(k, nx, ny)`` whose Dirichlet-edge entries are used.
    """

    def __init__(self, evaluator: Callable | None = None, samples: np.ndarray | None = None,
                 name: str = "custom"):
        if (evaluator is None) == (samples is None):
            raise ValueError("give exactly one of evaluator or samples")
        self.evaluator = evaluator
        self.samples = None if samples is None else np.atleast_3d(np.asarray(samples, float))
        if self.samples is not None and self.samples.ndim == 2:
            self.samples = self.samples[None]
        self.name = name

    @classmethod
    def constant(cls, c: float | Sequence[float]) -> "DirichletData":
        cs = np.atleast_1d(np.asarray(c, float))
        return cls(lambda X, Y: cs[:, None, None] * np.ones_like(X)[None], name=f"constant{cs.tolist()}")

    def sample(self, grid: HalfGrid) -> np.ndarray:
        if self.samples is not None:
            s = self.samples
            if s.shape[1:] != (grid.nx, grid.ny):
                raise ValueError("sampled Dirichlet data does not match grid")
            out = s.copy()
        else:
            X, Y = grid.mesh()
            out = np.asarray(self.evaluator(X, Y), float)
            if out.ndim == 2:
                out = out[None]
        if not np.all(np.isfinite(out[:, grid.dirichlet_mask()])):
            raise ValueError("Dirichlet data not finite")
        return out


# --------------------------------------------------------------------------- assembly


@dataclass
class DiscreteLaplacian:
    """Scaled 5-point operator ``K`` on free nodes (interior + open flat edge).

    ``K u + K_D d = h * (flux)`` with flux the normal derivative on flat rows
    and zero elsewhere.  ``free`` and ``dirichlet`` are flat node indices
    (``i * ny + j``).
    """

    grid: HalfGrid
    K: sp.csr_matrix
    K_D: sp.csr_matrix
    free: np.ndarray
    dirichlet: np.ndarray
    flat_rows: np.ndarray  # positions inside ``free`` of the flat-edge nodes

    def residual(self, values: np.ndarray) -> np.ndarray:
        """Row residual ``K u + K_D d`` scattered back onto the grid (zero on Dirichlet nodes)."""
        v = np.asarray(values, float).reshape(-1)
        r = self.K @ v[self.free] + self.K_D @ v[self.dirichlet]
        out = np.zeros(self.grid.nx * self.grid.ny)
        out[self.free] = r
        return out.reshape(self.grid.nx, self.grid.ny)


def assemble_discrete_laplacian(grid: HalfGrid) -> DiscreteLaplacian:
    nx, ny = grid.nx, grid.ny
    idx = np.arange(nx * ny).reshape(nx, ny)
    dmask = grid.dirichlet_mask()
    free = idx[~dmask]
    dirichlet = idx[dmask]
    pos = -np.ones(nx * ny, dtype=np.int64)
    pos[free] = np.arange(free.size)
    dpos = -np.ones(nx * ny, dtype=np.int64)
    dpos[dirichlet] = np.arange(dirichlet.size)

    rows, cols, vals = [], [], []

    def add(r, c, w):
        rows.append(r)
        cols.append(c)
        vals.append(w)

    I, J = np.nonzero(~dmask)
    node = idx[I, J]
    flat = J == 0
    diag = np.where(flat, 2.0, 4.0)
    add(node, node, diag)
    side_w = np.where(flat, -0.5, -1.0)
    add(node, idx[I - 1, J], side_w)
    add(node, idx[I + 1, J], side_w)
    add(node, idx[I, J + 1], -np.ones_like(diag))
    inner = ~flat
    add(node[inner], idx[I[inner], J[inner] - 1], -np.ones(inner.sum()))

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(vals)
    to_free = pos[c] >= 0
    K = sp.csr_matrix((w[to_free], (pos[r[to_free]], pos[c[to_free]])),
                      shape=(free.size, free.size))
    K_D = sp.csr_matrix((w[~to_free], (pos[r[~to_free]], dpos[c[~to_free]])),
                        shape=(free.size, dirichlet.size))
    flat_rows = pos[idx[1:-1, 0]]
    return DiscreteLaplacian(grid, K, K_D, free, dirichlet, flat_rows)


def laplacian_residual(grid: HalfGrid, values: np.ndarray) -> np.ndarray:
    """Plain 5-point ``-Delta_h v`` at interior nodes, shape ``(nx-2, ny-2)``."""
    v = np.asarray(values, float)
    h2 = grid.h**2
    return (4 * v[1:-1, 1:-1] - v[:-2, 1:-1] - v[2:, 1:-1] - v[1:-1, :-2] - v[1:-1, 2:]) / h2


def flat_normal_derivative(grid: HalfGrid, values: np.ndarray) -> np.ndarray:
    """Scheme-consistent normal derivative at open flat-edge nodes.

    Obtained from the ghost-eliminated row: ``(4 v0 - vL - vR - 2 v1) / (2h)``.
    """
    v = np.asarray(values, float)
    return (4 * v[1:-1, 0] - v[:-2, 0] - v[2:, 0] - 2 * v[1:-1, 1]) / (2 * grid.h)


# --------------------------------------------------------------------------- linear solve


def _check_coeff(grid: HalfGrid, arr, name: str) -> np.ndarray:
    a = np.broadcast_to(np.asarray(arr, float), (grid.nx,)) if np.ndim(arr) <= 1 else np.asarray(arr)
    a = np.asarray(a, float)
    if a.shape != (grid.nx,):
        raise ValueError(f"{name} must be a scalar or have shape (nx,)")
    return a


def solve_linear_bvp(grid: HalfGrid, dirichlet: DirichletData, neumann_coeff=0.0,
                     neumann_rhs=0.0, operator: DiscreteLaplacian | None = None) -> Field:
    """Solve ``-Delta v = 0``, ``d_nu v + lam v = g`` on ``y = 0``, Dirichlet elsewhere.

    ``neumann_coeff`` and ``neumann_rhs`` are scalars or per-node arrays over
    the ``nx`` flat-edge nodes (corner entries are ignored).
    """
    lam = _check_coeff(grid, neumann_coeff, "neumann_coeff")
    g = _check_coeff(grid, neumann_rhs, "neumann_rhs")
    if np.any(lam < 0):
        raise ValueError("neumann_coeff must be nonnegative")
    L = operator or assemble_discrete_laplacian(grid)
    d = dirichlet.sample(grid)
    if d.shape[0] != 1:
        raise ValueError("solve_linear_bvp expects single-component Dirichlet data")
    d_flat = d[0].reshape(-1)[L.dirichlet]
    h = grid.h
    robin = np.zeros(L.free.size)
    robin[L.flat_rows] = h * lam[1:-1]
    A = (L.K + sp.diags(robin)).tocsc()
    b = -(L.K_D @ d_flat)
    b[L.flat_rows] += h * g[1:-1]
    try:
        u = spla.splu(A).solve(b)
    except RuntimeError as exc:  # pragma: no cover - factorization of a singular matrix
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("linear solve produced non-finite values")
    out = d[0].copy().reshape(-1)
    out[L.free] = u
    return Field(grid, out.reshape(1, grid.nx, grid.ny))


# --------------------------------------------------------------------------- nonlinear system


class FlatReduction:
    """Schur complement of the interior unknowns onto the open flat edge.

    ``S u_F - r(d) = h * d_nu`` is the discrete Dirichlet-to-Neumann map.
    Built once per grid; ``S`` is dense with ``nx - 2`` rows.
    """

    def __init__(self, grid: HalfGrid):
        self.grid = grid
        self.L = assemble_discrete_laplacian(grid)
        L = self.L
        nf = L.free.size
        self.flat = L.flat_rows
        mask = np.ones(nf, dtype=bool)
        mask[self.flat] = False
        self.inner = np.nonzero(mask)[0]
        K = L.K.tocsr()
        self.K_II = K[self.inner][:, self.inner].tocsc()
        self.K_IF = K[self.inner][:, self.flat]
        self.K_FF = K[self.flat][:, self.flat].toarray()
        self.K_ID = L.K_D[self.inner]
        self.K_FD = L.K_D[self.flat]
        self._lu = spla.splu(self.K_II)

    @cached_property
    def S(self) -> np.ndarray:
        X = self._lu.solve(self.K_IF.toarray())
        S = self.K_FF - self.K_IF.T @ X
        return 0.5 * (S + S.T)

    def dirichlet_part(self, d_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(r, w)``: flat right side and interior particular solution for data ``d``."""
        d = d_grid.reshape(-1)[self.L.dirichlet]
        w = self._lu.solve(-(self.K_ID @ d))
        r = -(self.K_FD @ d) - self.K_IF.T @ w
        return r, w

    def extend(self, u_flat: np.ndarray, d_grid: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Recover the full grid field from flat-edge values."""
        inner = w - self._lu.solve(self.K_IF @ u_flat)
        free_vals = np.empty(self.L.free.size)
        free_vals[self.flat] = u_flat
        free_vals[self.inner] = inner
        out = d_grid.copy().reshape(-1)
        out[self.L.free] = free_vals
        return out.reshape(self.grid.nx, self.grid.ny)


_REDUCTIONS: dict[HalfGrid, FlatReduction] = {}


def flat_reduction(grid: HalfGrid) -> FlatReduction:
    red = _REDUCTIONS.get(grid)
    if red is None:
        red = _REDUCTIONS[grid] = FlatReduction(grid)
    return red


@dataclass
class SolverOptions:
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 500
    method: str = "picard"

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter <= 0:
            raise ValueError("max_iter must be positive")
        if self.method not in ("picard", "newton"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    residual: float
    relative_residual: float
    method: str
    history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"converged": self.converged, "iterations": self.iterations,
                "residual": self.residual, "relative_residual": self.relative_residual,
                "method": self.method}


def _flat_residual(S, r, u, params: SystemParams, h: float) -> tuple[float, float]:
    dnu = (u @ S.T - r) / h  # rows: components
    rhs = params.flat_rhs(u)
    res = np.abs(dnu - rhs)
    scale = max(np.max(np.abs(dnu)), np.max(np.abs(rhs)), 1.0)
    return float(res.max()), float(res.max() / scale)


def solve_system(grid: HalfGrid, params: SystemParams, dirichlet: DirichletData,
                 opts: SolverOptions | None = None,
                 initial: "np.ndarray | Field | None" = None) -> tuple[Field, ConvergenceReport]:
    """Damped Picard (or Newton) iteration for the coupled flat-edge condition.

    Picard: at each step every component solves the linear Robin problem with
    coefficient ``beta * sum_j a_ij (v_j^m)**2`` and right side ``f_i(v_i^m)``,
    then the flat traces are blended with ``damping``.
    """
    opts = opts or SolverOptions()
    red = flat_reduction(grid)
    S, h, k = red.S, grid.h, params.k
    d = dirichlet.sample(grid)
    if d.shape[0] != k:
        raise ValueError(f"Dirichlet data has {d.shape[0]} components, params.k = {k}")
    parts = [red.dirichlet_part(d[i]) for i in range(k)]
    r = np.array([p[0] for p in parts])
    n = S.shape[0]

    trivial = params.beta == 0 or k == 1
    trivial_f = all(rx.name == "zero" for rx in params.reactions)
    if isinstance(initial, Field):
        initial = initial.values
    if initial is not None:
        u = np.asarray(initial, float)[:, 1:-1, 0].copy()
    else:
        u = np.linalg.solve(S, r.T).T  # homogeneous Neumann start
    history: list[float] = []

    if trivial and trivial_f:
        u = np.linalg.solve(S, r.T).T
        res, rel = _flat_residual(S, r, u, params, h)
        history.append(rel)
        it, converged = 1, rel < opts.tol
    elif opts.method == "newton":
        it, converged = 0, False

        def nonlinear(w):
            return w @ S.T - r - h * params.flat_rhs(w)

        F = nonlinear(u)
        for it in range(1, opts.max_iter + 1):
            J = np.zeros((k * n, k * n))
            coup = params.coupling(u)
            for i in range(k):
                dfi = params.reactions[i].derivative(u[i])
                J[i * n:(i + 1) * n, i * n:(i + 1) * n] = S + np.diag(h * (coup[i] - dfi))
                for j in range(k):
                    if j != i:
                        w = 2 * h * params.beta * params.interaction[i, j] * u[i] * u[j]
                        J[i * n:(i + 1) * n, j * n:(j + 1) * n] = np.diag(w)
            step = np.linalg.solve(J, F.reshape(-1)).reshape(k, n)
            # backtrack until the residual norm drops
            t, norm0 = opts.damping, np.linalg.norm(F)
            for _ in range(40):
                trial = u - t * step
                F_trial = nonlinear(trial)
                if np.all(np.isfinite(F_trial)) and np.linalg.norm(F_trial) < norm0:
                    break
                t *= 0.5
            u, F = trial, F_trial
            if not np.all(np.isfinite(u)):
                raise NumericalFailure(f"NaN detected at Newton iteration {it}")
            res, rel = _flat_residual(S, r, u, params, h)
            history.append(rel)
            if rel < opts.tol:
                converged = True
                break
    else:
        it, converged = 0, False
        best = (np.inf, u.copy())
        for it in range(1, opts.max_iter + 1):
            coup = params.coupling(u)
            new = np.empty_like(u)
            for i in range(k):
                g = params.reactions[i].f(u[i])
                new[i] = scipy.linalg.solve(S + np.diag(h * coup[i]), r[i] + h * g,
                                            assume_a="pos")
            u = (1 - opts.damping) * u + opts.damping * new
            if not np.all(np.isfinite(u)):
                raise NumericalFailure(f"NaN detected at Picard iteration {it}")
            res, rel = _flat_residual(S, r, u, params, h)
            history.append(rel)
            if rel < best[0]:
                best = (rel, u.copy())
            if rel < opts.tol:
                converged = True
                break
        if not converged:
            u = best[1]
            logger.warning("Picard iteration did not converge in %d steps (residual %.3e)",
                           opts.max_iter, best[0])
    res, rel = _flat_residual(S, r, u, params, h)
    vals = np.stack([red.extend(u[i], d[i], parts[i][1]) for i in range(k)])
    report = ConvergenceReport(converged or rel < opts.tol, it, res, rel, opts.method, history)
    return Field(grid, vals), report


def neumann_residual(field: Field, params: SystemParams) -> dict:
    """Flat-edge residual using a one-sided second-order ``-d_y`` (independent of the scheme).

    Returns the per-node residual (open flat nodes, shape ``(k, nx-2)``) with
    its max and discrete L2 norms.
    """
    v = field.values
    h = field.grid.h
    dnu = -(-3 * v[:, 1:-1, 0] + 4 * v[:, 1:-1, 1] - v[:, 1:-1, 2]) / (2 * h)
    res = dnu - params.flat_rhs(v[:, 1:-1, 0])
    return {"residual": res, "max": float(np.max(np.abs(res))),
            "l2": float(np.sqrt(h * np.sum(res**2)))}
