"""Set-valued maps given by a selection oracle, graph-proximity oracles and approximability data.

All graph distances use the max metric on the product space, so moduli of
product maps combine as plain minima.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .geometry import Box, Domain, Hull, as_point, project_many, product_box, quasi_random
from .modulus import ContinuityModulus, min_modulus


class SetValuedError(ValueError):
    pass


@dataclass(frozen=True)
class Approximable:
    delta: ContinuityModulus


class GridTable:
    """Values on a tensor grid, stored as independent factors.

    Each part is ``(array, axes)``: the array has one dimension per listed grid
    axis plus a trailing value dimension. A grid point's value is the
    concatenation of the parts' values, so products of maps never need the full
    product table in memory.
    """

    def __init__(self, parts, shape):
        self.parts = [(np.asarray(a, dtype=float), tuple(int(i) for i in ax)) for a, ax in parts]
        self.shape = tuple(int(k) for k in shape)
        for a, ax in self.parts:
            if a.ndim != len(ax) + 1 or tuple(self.shape[i] for i in ax) != a.shape[:-1]:
                raise SetValuedError("selection table does not match the net")

    @classmethod
    def dense(cls, array) -> "GridTable":
        array = np.asarray(array, dtype=float)
        if array.ndim < 2:
            raise SetValuedError("selection table needs a trailing value axis")
        return cls([(array, range(array.ndim - 1))], array.shape[:-1])

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def out_dim(self) -> int:
        return sum(a.shape[-1] for a, _ in self.parts)

    def gather(self, I) -> np.ndarray:
        """Values at integer grid indices I, shape (N, ndim)."""
        I = np.asarray(I, dtype=np.int64)
        cols = []
        for a, ax in self.parts:
            if ax:
                flat = np.ravel_multi_index(tuple(I[:, i] for i in ax), a.shape[:-1])
                cols.append(a.reshape(-1, a.shape[-1])[flat])
            else:
                cols.append(np.broadcast_to(a, (I.shape[0], a.shape[-1])))
        return np.concatenate(cols, axis=1)

    def __getitem__(self, index) -> np.ndarray:
        return self.gather(np.asarray(index, dtype=np.int64)[None, :])[0]

    def subgrid(self, index_lists) -> "GridTable":
        parts = [(a[np.ix_(*[index_lists[i] for i in ax])] if ax else a, ax) for a, ax in self.parts]
        return GridTable(parts, [len(ix) for ix in index_lists])

    def transpose(self, order) -> "GridTable":
        """New axis j is old axis order[j]."""
        inv = np.argsort(order)
        parts = []
        for a, ax in self.parts:
            new_ax = [int(inv[i]) for i in ax]
            srt = np.argsort(new_ax)
            parts.append((np.transpose(a, tuple(srt) + (a.ndim - 1,)), sorted(new_ax)))
        return GridTable(parts, [self.shape[i] for i in order])

    def product(self, other: "GridTable") -> "GridTable":
        k = self.ndim
        parts = self.parts + [(a, tuple(i + k for i in ax)) for a, ax in other.parts]
        return GridTable(parts, self.shape + other.shape)

    def jumps(self) -> np.ndarray:
        """(ndim, out_dim): largest change of each value between grid neighbours along each axis."""
        out = np.zeros((self.ndim, self.out_dim))
        col = 0
        for a, ax in self.parts:
            w = a.shape[-1]
            for pos, i in enumerate(ax):
                if a.shape[pos] > 1:
                    out[i, col:col + w] = np.abs(np.diff(a, axis=pos)).reshape(-1, w).max(axis=0)
            col += w
        return out

    def to_array(self) -> np.ndarray:
        mesh = np.meshgrid(*[np.arange(k) for k in self.shape], indexing="ij")
        I = np.stack([m.ravel() for m in mesh], axis=1)
        return self.gather(I).reshape(self.shape + (self.out_dim,))


@dataclass(frozen=True)
class WeakApproxData:
    """Net, selections and delta witnessing weak approximability at one eps.

    The net is the tensor grid over ``axes``; ``table[i0, ..., i_{n-1}]`` is the
    chosen selection at the grid point with those indices, and ``fibers`` (when
    given) returns every selection at an index tuple.
    """

    eps: float
    delta: float
    axes: tuple[np.ndarray, ...]
    table: GridTable
    fibers: Callable[[tuple[int, ...]], np.ndarray] | None = None

    def __post_init__(self):
        if not isinstance(self.table, GridTable):
            object.__setattr__(self, "table", GridTable.dense(self.table))
        if not (0 < self.delta < self.eps):
            raise SetValuedError(f"weak approximation needs 0 < delta < eps, got delta={self.delta}, "
                                 f"eps={self.eps}")
        shape = tuple(len(a) for a in self.axes)
        if self.table.shape != shape:
            raise SetValuedError("selection table does not match the net")
        for a in self.axes:
            if len(a) > 1 and np.max(np.diff(a)) > self.delta + 1e-15:
                raise SetValuedError("net spacing exceeds delta; it is not a delta/2-approximation")

    @property
    def net(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def selections(self, index: tuple[int, ...]) -> np.ndarray:
        if self.fibers is not None:
            return self.fibers(index)
        return self.table[tuple(index)][None, :]


@dataclass(frozen=True)
class WeaklyApproximable:
    provider: Callable[[float], WeakApproxData]


class SetValuedMap:
    """Base class for maps ``U: domain -> nonempty subsets of codomain``."""

    domain: Domain
    codomain: Domain
    approx: Approximable | WeaklyApproximable
    select_tol: float = 0.0
    graph_tol: float = 0.0

    @property
    def dim_in(self) -> int:
        return self.domain.dim

    @property
    def dim_out(self) -> int:
        return self.codomain.dim

    def select(self, x) -> np.ndarray:
        raise NotImplementedError

    def select_many(self, X) -> np.ndarray:
        return np.array([self.select(x) for x in np.atleast_2d(X)])

    def fiber(self, x) -> np.ndarray:
        """Finitely many points of U(x), as rows."""
        return self.select(x)[None, :]

    def graph_distance(self, z, w) -> float:
        raise NotImplementedError

    def graph_distance_many(self, Z, W) -> np.ndarray:
        return np.array([self.graph_distance(z, w) for z, w in zip(Z, W)])

    def graph_within(self, Z, W, r: float) -> np.ndarray:
        """Boolean array: is each (z, w) strictly within r of the graph."""
        return self.graph_distance_many(Z, W) < r

    def graph_near(self, z, w, r: float):
        """A graph point (x, u) within r of (z, w), or None."""
        raise NotImplementedError

    def contains(self, x, u, tol: float = 0.0) -> bool:
        return self.graph_distance(x, u) <= self.graph_tol + tol


# --- Lipschitz branch and bound ------------------------------------------------


def lipschitz_minimize(h: Callable[[np.ndarray], np.ndarray], box: Box,
                       variation: Callable[[float], float], tol: float,
                       stop_below: float | None = None, stop_above: float | None = None,
                       start_cells: int = 8, max_boxes: int = 200_000):
    """Globally minimise ``h`` over ``box`` given a bound on its variation over a radius.

    Returns ``(best_value, argmin, lower_bound)``; ``lower_bound`` is certified.
    Stops early once the best value is below ``stop_below`` or the lower bound
    reaches ``stop_above``.
    """
    n = box.dim
    lo, hi = box.lower, box.upper
    cells = np.full(n, start_cells)
    cells[box.sides == 0] = 1
    half = box.sides / (2 * cells)
    axes = [lo[i] + (2 * np.arange(cells[i]) + 1) * half[i] for i in range(n)]
    centers = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    best_val, best_x = math.inf, lo.copy()
    while True:
        vals = h(centers)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_x = float(vals[i]), centers[i].copy()
        slack = variation(float(np.max(half)))
        lower = vals - slack
        lower_bound = min(float(np.min(lower)), best_val)
        if stop_below is not None and best_val < stop_below:
            break
        if stop_above is not None and lower_bound >= stop_above:
            break
        if slack <= tol:
            break
        keep = lower < best_val - tol
        centers = centers[keep]
        if centers.shape[0] == 0:
            lower_bound = best_val - tol
            break
        split = half > 0
        nsplit = int(split.sum())
        if centers.shape[0] * 2 ** nsplit > max_boxes:
            break
        half = np.where(split, half / 2, half)
        offsets = np.array(list(itertools.product((-1.0, 1.0), repeat=nsplit)))
        full = np.zeros((offsets.shape[0], n))
        full[:, split] = offsets
        centers = (centers[:, None, :] + full[None, :, :] * half).reshape(-1, n)
    return best_val, best_x, lower_bound


# --- single-valued maps ------------------------------------------------------------


def _as_batch_function(f, n_in: int) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, (str, ex.Num, ex.Var, ex.Neg, ex.BinOp, ex.Call)):
        f = [f]
    if isinstance(f, (list, tuple)):
        exprs = [ex.parse(e) if isinstance(e, str) else e for e in f]
        for e in exprs:
            nx, ny = ex.dimensions(e)
            if nx > n_in or ny:
                raise SetValuedError(f"expression {ex.to_string(e)} uses variables outside x0..x{n_in - 1}")

        def batch(X):
            X = np.atleast_2d(X)
            return np.stack([ex.evaluate_batch(e, X) for e in exprs], axis=1)

        return batch

    def batch(X):
        return np.array([np.atleast_1d(np.asarray(f(x), dtype=float)) for x in np.atleast_2d(X)])

    return batch


class FunctionMap(SetValuedMap):
    """``U(x) = {f(x)}`` for a uniformly continuous f with modulus omega."""

    def __init__(self, f, omega: ContinuityModulus, domain: Domain, codomain: Domain | None = None,
                 graph_tol: float = 1e-9, check_samples: int = 512):
        self.domain = domain
        self.codomain = domain if codomain is None else codomain
        self.f = f
        self.omega = omega
        self.graph_tol = graph_tol
        self._batch = _as_batch_function(f, domain.dim)
        self.approx = Approximable(_FunctionDelta(omega))
        self._expansion = 1.0 if isinstance(domain, Box) else math.sqrt(domain.dim)
        pts = project_many(domain, quasi_random(domain.bounding_box(), check_samples, seed=0))
        vals = self._batch(pts)
        if vals.shape[1] != self.codomain.dim:
            raise SetValuedError(f"f returns {vals.shape[1]} coordinates, codomain has {self.codomain.dim}")
        for p, v in zip(pts, vals):
            if not self.codomain.contains(v, tol=1e-9):
                raise SetValuedError(f"f leaves the codomain: f({p.tolist()}) = {v.tolist()}")

    def select(self, x) -> np.ndarray:
        x = as_point(x, self.dim_in)
        return self._batch(x[None, :])[0]

    def select_many(self, X) -> np.ndarray:
        return self._batch(np.atleast_2d(X))

    def _h(self, z, w):
        z = np.asarray(z, dtype=float)
        w = np.asarray(w, dtype=float)
        if isinstance(self.domain, Box):
            def h(X):
                return np.maximum(np.max(np.abs(X - z), axis=1), np.max(np.abs(self._batch(X) - w), axis=1))
        else:
            def h(X):
                Q = project_many(self.domain, X)
                return np.maximum(np.max(np.abs(Q - z), axis=1), np.max(np.abs(self._batch(Q) - w), axis=1))
        c = self._expansion

        def variation(r):
            return max(c * r, self.omega.variation(c * r))

        return h, variation

    def graph_distance(self, z, w) -> float:
        h, var = self._h(z, w)
        best, _, _ = lipschitz_minimize(h, self.domain.bounding_box(), var, self.graph_tol)
        return best

    def graph_within(self, Z, W, r: float) -> np.ndarray:
        Z = np.atleast_2d(Z)
        W = np.atleast_2d(W)
        inside = project_many(self.domain, Z)
        quick = np.maximum(np.max(np.abs(inside - Z), axis=1),
                           np.max(np.abs(self._batch(inside) - W), axis=1)) < r
        out = quick.copy()
        for i in np.flatnonzero(~quick):
            h, var = self._h(Z[i], W[i])
            best, _, _ = lipschitz_minimize(h, self.domain.bounding_box(), var, self.graph_tol,
                                            stop_below=r, stop_above=r)
            out[i] = best < r
        return out

    def graph_near(self, z, w, r: float):
        h, var = self._h(z, w)
        x0 = project_many(self.domain, np.asarray(z, dtype=float)[None, :])
        if h(x0)[0] <= r:
            return x0[0], self.select(x0[0])
        tol = max(min(self.graph_tol, r / 10), 1e-15)
        best, x, _ = lipschitz_minimize(h, self.domain.bounding_box(), var, tol, stop_below=r,
                                        stop_above=r + tol)
        if best > r:
            return None
        x = project_many(self.domain, x[None, :])[0]
        return x, self.select(x)

    def contains(self, x, u, tol: float = 0.0) -> bool:
        return float(np.max(np.abs(self.select(x) - np.asarray(u, dtype=float)))) <= self.graph_tol + tol


@dataclass(frozen=True)
class _FunctionDelta(ContinuityModulus):
    """delta(eps) = min(eps, omega(eps)) for the graph of a single-valued map."""

    omega: ContinuityModulus

    def __call__(self, eps: float) -> float:
        return min(eps, self.omega(eps))

    def variation(self, r: float) -> float:
        return max(r, self.omega.variation(r))

    def to_json(self) -> dict:
        return {"function_delta": self.omega.to_json()}


def from_function(f, omega: ContinuityModulus, domain: Domain, codomain: Domain | None = None,
                  **kwargs) -> FunctionMap:
    return FunctionMap(f, omega, domain, codomain, **kwargs)


# --- graphs made of segments ------------------------------------------------------------


def _segment_distances(P: np.ndarray, A: np.ndarray, B: np.ndarray):
    """Max-metric distances from points P (N, d) to segments [A_s, B_s]; returns (dist, t) of shape (N, S)."""
    D = B - A
    C = P[:, None, :] - A[None, :, :]
    d = D.shape[1]
    cands = [np.zeros(C.shape[:2]), np.ones(C.shape[:2])]
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(d):
            cands.append(C[..., i] / D[None, :, i])
            for j in range(i + 1, d):
                cands.append((C[..., i] - C[..., j]) / (D[None, :, i] - D[None, :, j]))
                cands.append((C[..., i] + C[..., j]) / (D[None, :, i] + D[None, :, j]))
    T = np.clip(np.nan_to_num(np.stack(cands, axis=-1), nan=0.0, posinf=0.0, neginf=0.0), 0.0, 1.0)
    resid = np.abs(C[..., None, :] - T[..., None] * D[None, :, None, :])
    vals = resid.max(axis=-1)
    k = vals.argmin(axis=-1)
    dist = np.take_along_axis(vals, k[..., None], axis=-1)[..., 0]
    t = np.take_along_axis(T, k[..., None], axis=-1)[..., 0]
    return dist, t


class PolygonalMap(SetValuedMap):
    """A map on an interval whose graph is a finite union of segments in the plane."""

    def __init__(self, segments, domain: Box, delta: ContinuityModulus, codomain: Box | None = None,
                 validate: bool = True, trials: int = 1000, seed: int = 0):
        seg = np.asarray(segments, dtype=float)
        if seg.ndim != 3 or seg.shape[1:] != (2, 2) or seg.shape[0] == 0:
            raise SetValuedError("segments must be a nonempty list of [[x, u], [x', u']] pairs")
        if not isinstance(domain, Box) or domain.dim != 1:
            raise SetValuedError("polygonal graphs need a one-dimensional interval domain")
        self.domain = domain
        self.codomain = Box([0.0], [1.0]) if codomain is None else codomain
        self.segments = seg
        self.A = seg[:, 0, :]
        self.B = seg[:, 1, :]
        self.approx = Approximable(delta)
        for p in seg.reshape(-1, 2):
            if not self.codomain.contains(p[1:]):
                raise SetValuedError(f"segment endpoint {p.tolist()} leaves the codomain")
        self._check_projection()
        if validate:
            for eps in (0.2, 0.1, 0.05):
                rep = check_approximability(self, eps, delta(eps), trials, seed)
                if not rep.passed:
                    raise SetValuedError(f"approximability spot-check failed at eps={eps}: {rep.violation}")

    def _check_projection(self):
        spans = sorted((min(a, b), max(a, b)) for a, b in zip(self.A[:, 0], self.B[:, 0]))
        lo, hi = float(self.domain.lower[0]), float(self.domain.upper[0])
        reach = lo
        for a, b in spans:
            if a > reach + 1e-6:
                break
            reach = max(reach, b)
        if reach < hi - 1e-6:
            raise SetValuedError(f"graph has no point over x = {reach:.6g}: the fibre is empty there")

    def fiber(self, x) -> np.ndarray:
        x = float(as_point(x, 1)[0])
        us = []
        for a, b in zip(self.A, self.B):
            dx = b[0] - a[0]
            if abs(dx) <= 1e-15:
                if abs(x - a[0]) <= 1e-12:
                    us.extend((a[1], b[1]))
            elif min(a[0], b[0]) - 1e-12 <= x <= max(a[0], b[0]) + 1e-12:
                t = min(max((x - a[0]) / dx, 0.0), 1.0)
                us.append(a[1] + t * (b[1] - a[1]))
        if not us:
            # gap below the projection tolerance: use the horizontally nearest graph point
            gaps = np.minimum(np.abs(self.A[:, 0] - x), np.abs(self.B[:, 0] - x))
            s = int(np.argmin(gaps))
            end = self.A[s] if abs(self.A[s, 0] - x) <= abs(self.B[s, 0] - x) else self.B[s]
            us.append(end[1])
        return np.unique(np.round(np.array(us), 15))[:, None]

    def select(self, x) -> np.ndarray:
        return self.fiber(x)[0]

    def graph_distance_many(self, Z, W) -> np.ndarray:
        P = np.concatenate([np.atleast_2d(Z).reshape(-1, 1), np.atleast_2d(W).reshape(-1, 1)], axis=1)
        dist, _ = _segment_distances(P, self.A, self.B)
        return dist.min(axis=1)

    def graph_distance(self, z, w) -> float:
        return float(self.graph_distance_many(np.atleast_1d(z), np.atleast_1d(w))[0])

    def graph_near(self, z, w, r: float):
        P = np.array([[float(np.ravel(z)[0]), float(np.ravel(w)[0])]])
        dist, t = _segment_distances(P, self.A, self.B)
        s = int(np.argmin(dist[0]))
        if dist[0, s] > r:
            return None
        q = self.A[s] + t[0, s] * (self.B[s] - self.A[s])
        return q[:1].copy(), q[1:].copy()


def from_polygonal_graph(segments, domain: Box, delta: ContinuityModulus, **kwargs) -> PolygonalMap:
    return PolygonalMap(segments, domain, delta, **kwargs)


# --- products and reindexing -----------------------------------------------------------


def _weak_product(d1: WeakApproxData, d2: WeakApproxData, eps: float) -> WeakApproxData:
    table = d1.table.product(d2.table)
    s1 = d1.table.shape
    k = len(s1)

    def fibers(index):
        f1, f2 = d1.selections(index[:k]), d2.selections(index[k:])
        return np.array([np.concatenate([u, v]) for u in f1 for v in f2])

    return WeakApproxData(eps, min(d1.delta, d2.delta), tuple(d1.axes) + tuple(d2.axes), table, fibers)


class ProductMap(SetValuedMap):
    """``(U1 x U2)(x1, x2) = U1(x1) x U2(x2)``."""

    def __init__(self, U1: SetValuedMap, U2: SetValuedMap):
        if not (isinstance(U1.domain, Box) and isinstance(U2.domain, Box)
                and isinstance(U1.codomain, Box) and isinstance(U2.codomain, Box)):
            raise SetValuedError("products are supported for box domains and codomains")
        self.U1, self.U2 = U1, U2
        self.domain = product_box(U1.domain, U2.domain)
        self.codomain = product_box(U1.codomain, U2.codomain)
        self.select_tol = max(U1.select_tol, U2.select_tol)
        self.graph_tol = max(U1.graph_tol, U2.graph_tol)
        a1, a2 = U1.approx, U2.approx
        if isinstance(a1, Approximable) and isinstance(a2, Approximable):
            self.approx = Approximable(min_modulus(a1.delta, a2.delta))
        elif isinstance(a1, WeaklyApproximable) and isinstance(a2, WeaklyApproximable):
            self.approx = WeaklyApproximable(lambda eps: _weak_product(a1.provider(eps), a2.provider(eps), eps))
        else:
            raise SetValuedError("cannot multiply an approximable map by a weakly approximable one")

    def _split(self, v):
        v = np.asarray(v, dtype=float)
        n1 = self.U1.dim_in
        return v[..., :n1], v[..., n1:]

    def _split_out(self, v):
        v = np.asarray(v, dtype=float)
        m1 = self.U1.dim_out
        return v[..., :m1], v[..., m1:]

    def select(self, x) -> np.ndarray:
        x1, x2 = self._split(x)
        return np.concatenate([self.U1.select(x1), self.U2.select(x2)])

    def fiber(self, x) -> np.ndarray:
        x1, x2 = self._split(x)
        return np.array([np.concatenate([u, v]) for u in self.U1.fiber(x1) for v in self.U2.fiber(x2)])

    def graph_distance(self, z, w) -> float:
        z1, z2 = self._split(z)
        w1, w2 = self._split_out(w)
        return max(self.U1.graph_distance(z1, w1), self.U2.graph_distance(z2, w2))

    def graph_distance_many(self, Z, W) -> np.ndarray:
        Z1, Z2 = self._split(np.atleast_2d(Z))
        W1, W2 = self._split_out(np.atleast_2d(W))
        return np.maximum(self.U1.graph_distance_many(Z1, W1), self.U2.graph_distance_many(Z2, W2))

    def graph_within(self, Z, W, r: float) -> np.ndarray:
        Z1, Z2 = self._split(np.atleast_2d(Z))
        W1, W2 = self._split_out(np.atleast_2d(W))
        return self.U1.graph_within(Z1, W1, r) & self.U2.graph_within(Z2, W2, r)

    def graph_near(self, z, w, r: float):
        z1, z2 = self._split(z)
        w1, w2 = self._split_out(w)
        p1 = self.U1.graph_near(z1, w1, r)
        if p1 is None:
            return None
        p2 = self.U2.graph_near(z2, w2, r)
        if p2 is None:
            return None
        return np.concatenate([p1[0], p2[0]]), np.concatenate([p1[1], p2[1]])

    def contains(self, x, u, tol: float = 0.0) -> bool:
        x1, x2 = self._split(x)
        u1, u2 = self._split_out(u)
        return self.U1.contains(x1, u1, tol) and self.U2.contains(x2, u2, tol)


def product(U1: SetValuedMap, U2: SetValuedMap) -> ProductMap:
    return ProductMap(U1, U2)


class PermutedMap(SetValuedMap):
    """``U'(x) = U(x[perm])``: the same map read with its input coordinates reordered."""

    def __init__(self, U: SetValuedMap, perm: Sequence[int]):
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(U.dim_in)):
            raise SetValuedError("perm must be a permutation of the input coordinates")
        if not isinstance(U.domain, Box):
            raise SetValuedError("input permutation needs a box domain")
        self.U = U
        self.perm = perm
        self.inv = np.argsort(perm)
        self.domain = Box(U.domain.lower[self.inv], U.domain.upper[self.inv])
        self.codomain = U.codomain
        self.select_tol, self.graph_tol = U.select_tol, U.graph_tol
        if isinstance(U.approx, Approximable):
            self.approx = U.approx
        else:
            provider = U.approx.provider
            inv = self.inv

            def permuted(eps):
                d = provider(eps)
                axes = tuple(d.axes[i] for i in inv)
                table = d.table.transpose(inv)
                fibers = None if d.fibers is None else (lambda idx: d.fibers(tuple(idx[j] for j in self.perm)))
                return WeakApproxData(d.eps, d.delta, axes, table, fibers)

            self.approx = WeaklyApproximable(permuted)

    def _to_inner(self, x):
        return np.asarray(x, dtype=float)[..., self.perm]

    def select(self, x):
        return self.U.select(self._to_inner(x))

    def fiber(self, x):
        return self.U.fiber(self._to_inner(x))

    def graph_distance(self, z, w):
        return self.U.graph_distance(self._to_inner(z), w)

    def graph_distance_many(self, Z, W):
        return self.U.graph_distance_many(self._to_inner(np.atleast_2d(Z)), W)

    def graph_within(self, Z, W, r):
        return self.U.graph_within(self._to_inner(np.atleast_2d(Z)), W, r)

    def graph_near(self, z, w, r):
        p = self.U.graph_near(self._to_inner(z), w, r)
        if p is None:
            return None
        return p[0][self.inv], p[1]

    def contains(self, x, u, tol: float = 0.0):
        return self.U.contains(self._to_inner(x), u, tol)


def permute_inputs(U: SetValuedMap, perm: Sequence[int]) -> PermutedMap:
    return PermutedMap(U, perm)


# --- approximability falsifier ---------------------------------------------------------


@dataclass
class ApproxReport:
    passed: bool
    trials: int
    violation: dict | None = field(default=None)


def check_approximability(U: SetValuedMap, eps: float, delta: float, trials: int = 1000,
                          seed: int = 0) -> ApproxReport:
    """Search for a triple (x, x', t) breaking the approximability inequality.

    Pairs are drawn with ||x - x'|| < delta, images from the fibres over each
    point, and t from {0, 1/4, 1/2, 3/4, 1} plus one uniform draw per pair.
    """
    rng = np.random.default_rng(seed)
    box = U.domain.bounding_box()
    n = box.dim
    X = project_many(U.domain, box.lower + rng.random((trials, n)) * box.sides)
    step = (rng.random((trials, n)) * 2 - 1) * delta * (1 - 1e-9)
    Xp = project_many(U.domain, X + step)
    far = np.max(np.abs(Xp - X), axis=1) >= delta
    Xp[far] = X[far]
    pick = rng.random((trials, 2))
    Us, Ups = [], []
    for x, xp, (p, q) in zip(X, Xp, pick):
        f, fp = U.fiber(x), U.fiber(xp)
        Us.append(f[min(int(p * len(f)), len(f) - 1)])
        Ups.append(fp[min(int(q * len(fp)), len(fp) - 1)])
    Us, Ups = np.array(Us), np.array(Ups)
    ts = np.concatenate([np.tile([0.0, 0.25, 0.5, 0.75, 1.0], (trials, 1)), rng.random((trials, 1))], axis=1)
    for j in range(ts.shape[1]):
        t = ts[:, j:j + 1]
        Z = t * X + (1 - t) * Xp
        W = t * Us + (1 - t) * Ups
        ok = U.graph_within(Z, W, eps)
        if not np.all(ok):
            i = int(np.flatnonzero(~ok)[0])
            return ApproxReport(False, trials, {
                "x": X[i].tolist(), "x_prime": Xp[i].tolist(), "u": Us[i].tolist(), "u_prime": Ups[i].tolist(),
                "t": float(t[i, 0]), "distance": float(U.graph_distance(Z[i], W[i]))})
    return ApproxReport(True, trials)
