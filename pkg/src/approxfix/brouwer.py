"""Approximate fixed points of uniformly continuous self-maps of the unit cube.

The cube is cut into a k-grid and every grid cube into n! Kuhn simplices. Grid
vertices get integer labels so that no vertex on the face x_i = 0 carries label
i and no vertex on a face x_i = 1 carries label 0. This is the cubical form of
Sperner's condition, so the labelling has nonzero degree and some cell carries
every label 0..n. We locate such a cell by bisection on the degree, which is
computable from the labels on the boundary of a sub-box alone.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .modulus import ContinuityModulus

MAX_RESOLUTION = 2 ** 31
RANGE_TOL = 1e-9


class BrouwerError(RuntimeError):
    pass


class ResolutionOverflow(BrouwerError):
    pass


class ResidualCheckFailed(BrouwerError):
    def __init__(self, message: str, best_point: np.ndarray, best_residual: float):
        super().__init__(message)
        self.best_point = best_point
        self.best_residual = best_residual


@dataclass(frozen=True)
class KuhnCell:
    """Simplex with vertices base, base + e_perm[0], base + e_perm[0] + e_perm[1], ... on the k-grid.

    ``perm`` lists axes 0-based.
    """

    base: tuple[int, ...]
    perm: tuple[int, ...]
    k: int

    def lattice_vertices(self) -> np.ndarray:
        n = len(self.base)
        V = np.tile(np.array(self.base, dtype=np.int64), (n + 1, 1))
        for i, axis in enumerate(self.perm):
            V[i + 1:, axis] += 1
        return V

    def vertices(self) -> np.ndarray:
        return self.lattice_vertices() / self.k

    def barycenter(self) -> np.ndarray:
        return self.vertices().mean(axis=0)


@dataclass(frozen=True)
class BrouwerResult:
    point: np.ndarray
    residual: float
    resolution_used: int
    cell: KuhnCell | None = None


def grid_for_eps(omega: ContinuityModulus, eps: float, n: int) -> int:
    """Smallest k with 1/k <= min(omega(eps'), eps'), eps' = eps / (2(n+1))."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if n < 1:
        raise ValueError("dimension must be at least 1")
    share = eps / (2 * (n + 1))
    h = min(omega(share), share)
    k = max(1, math.ceil(1.0 / h - 1e-9))
    if k > MAX_RESOLUTION:
        raise ResolutionOverflow("resolution overflow; increase eps")
    return k


def _labels(F: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Vectorised labelling of points T with images F (both (N, n))."""
    N, n = T.shape
    zero_ok = np.all(F >= T, axis=1) & np.all(T < 1.0, axis=1)
    cand = (F <= T) & (T > 0.0)
    first = np.where(cand.any(axis=1), np.argmax(cand, axis=1) + 1, -1)
    lab = np.where(zero_ok, 0, first)
    if np.any(lab < 0):
        raise BrouwerError("labelling failed: f does not map the cube into itself")
    return lab


def sperner_label(f: Callable, vertex) -> int:
    """Label of one vertex of the unit cube: 0 when f pushes every coordinate up
    (and the vertex is off the top faces), else the first coordinate i (1-based)
    with f_i <= x_i and x_i > 0.
    """
    v = np.atleast_1d(np.asarray(vertex, dtype=float))
    fv = np.clip(np.atleast_1d(np.asarray(f(v), dtype=float)), 0.0, 1.0)
    return int(_labels(fv[None, :], v[None, :])[0])


class _Labeller:
    """Evaluates f on lattice points, checking the range and caching labels."""

    def __init__(self, f: Callable, n: int, k: int, vectorized: bool):
        self.f, self.n, self.k, self.vectorized = f, n, k, vectorized
        self.cache: dict[tuple[int, ...], int] = {}
        self.evaluations = 0

    def images(self, T: np.ndarray) -> np.ndarray:
        if self.vectorized:
            F = np.asarray(self.f(T), dtype=float).reshape(T.shape)
        else:
            F = np.array([np.asarray(self.f(t), dtype=float).reshape(self.n) for t in T])
        self.evaluations += T.shape[0]
        if np.any(F < -RANGE_TOL) or np.any(F > 1 + RANGE_TOL) or not np.all(np.isfinite(F)):
            bad = int(np.flatnonzero(np.any((F < -RANGE_TOL) | (F > 1 + RANGE_TOL) | ~np.isfinite(F), axis=1))[0])
            raise BrouwerError(f"f leaves the unit cube: f({T[bad].tolist()}) = {F[bad].tolist()}")
        return np.clip(F, 0.0, 1.0)

    def __call__(self, V: np.ndarray) -> np.ndarray:
        """Labels of lattice points V (N, n)."""
        V = np.asarray(V, dtype=np.int64)
        flat = V.reshape(-1, self.n)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        out = np.empty(uniq.shape[0], dtype=np.int64)
        missing = []
        for i, row in enumerate(map(tuple, uniq)):
            lab = self.cache.get(row)
            if lab is None:
                missing.append(i)
            else:
                out[i] = lab
        if missing:
            T = uniq[missing] / self.k
            labs = _labels(self.images(T), T)
            out[missing] = labs
            if len(self.cache) < 2_000_000:
                self.cache.update(zip(map(tuple, uniq[missing]), labs.tolist()))
        return out[np.ravel(inv)].reshape(V.shape[:-1])


def _perm_sign(p) -> int:
    s = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def _label_index(L: np.ndarray) -> np.ndarray:
    """Signed index of facets with labels L (N, n): sign of the permutation onto 1..n, else 0."""
    n = L.shape[1]
    ok = np.all(np.sort(L, axis=1) == np.arange(1, n + 1), axis=1)
    inv = np.zeros(L.shape[0], dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            inv += L[:, i] > L[:, j]
    return np.where(ok, np.where(inv % 2 == 0, 1, -1), 0)


def _face_bases(lo: np.ndarray, hi: np.ndarray, axis: int, value: int) -> np.ndarray:
    ranges = [np.arange(lo[i], hi[i]) if i != axis else np.array([value]) for i in range(len(lo))]
    mesh = np.meshgrid(*ranges, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1).astype(np.int64)


def _box_degree(lo: np.ndarray, hi: np.ndarray, label: _Labeller) -> int:
    """Degree of the labelling over the lattice box [lo, hi], from boundary facets."""
    n = len(lo)
    total = 0
    for axis in range(n):
        others = [a for a in range(n) if a != axis]
        for top in (False, True):
            bases = _face_bases(lo, hi, axis, hi[axis] - 1 if top else lo[axis])
            for rest in itertools.permutations(others):
                perm = (axis,) + rest if top else rest + (axis,)
                sign = _perm_sign(perm) * (1 if top else (-1) ** n)
                steps = np.zeros((n + 1, n), dtype=np.int64)
                for i, a in enumerate(perm):
                    steps[i + 1:, a] += 1
                rows = steps[1:] if top else steps[:-1]
                V = bases[:, None, :] + rows[None, :, :]
                total += sign * int(_label_index(label(V)).sum())
    return total


def _complete_cells_in_unit(base: np.ndarray, k: int, label: _Labeller) -> list[KuhnCell]:
    n = len(base)
    out = []
    for perm in itertools.permutations(range(n)):
        cell = KuhnCell(tuple(int(b) for b in base), perm, k)
        labs = label(cell.lattice_vertices()[None, :, :])[0]
        if sorted(labs.tolist()) == list(range(n + 1)):
            out.append(cell)
    return out


def _exhaustive_search(k: int, n: int, label: _Labeller) -> KuhnCell:
    for base in itertools.product(range(k), repeat=n):
        cells = _complete_cells_in_unit(np.array(base), k, label)
        if cells:
            return cells[0]
    raise BrouwerError("no completely labelled cell exists; the labelling rule is broken")


def completely_labeled_search(f: Callable, k: int, n: int, vectorized: bool = False,
                              _labeller: _Labeller | None = None) -> KuhnCell:
    """A Kuhn cell of the k-grid whose vertices carry all labels 0..n."""
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 and n >= 1")
    label = _labeller or _Labeller(f, n, k, vectorized)
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, k, dtype=np.int64)
    deg = _box_degree(lo, hi, label)
    if deg == 0:
        raise BrouwerError("labelling has degree zero on the cube; the labelling rule is broken")
    while np.any(hi - lo > 1):
        axis = int(np.argmax(hi - lo))
        mid = lo[axis] + (hi[axis] - lo[axis]) // 2
        hi1 = hi.copy()
        hi1[axis] = mid
        d1 = _box_degree(lo, hi1, label)
        if d1 != 0:
            hi, deg = hi1, d1
        else:
            lo = lo.copy()
            lo[axis] = mid
    cells = _complete_cells_in_unit(lo, k, label)
    if cells:
        return cells[0]
    return _exhaustive_search(k, n, label)


def _resolution_schedule(k_needed: int, cap: int):
    k = 1
    while True:
        if k > cap:
            raise ResolutionOverflow(f"resolution overflow; increase eps (needed k={k_needed}, cap={cap})")
        yield k
        if k >= k_needed:
            return
        k *= 2


def approx_fixed_point(f: Callable, omega: ContinuityModulus, n: int, eps: float,
                       vectorized: bool = False, resolution_cap: int = MAX_RESOLUTION) -> BrouwerResult:
    """A point x of [0,1]^n with max|x - f(x)| < eps, witnessed by evaluating f.

    Resolutions 1, 2, 4, ... are tried up to the first power of two at or above
    ``grid_for_eps``; the last one is guaranteed by a sound ``omega`` and the
    earlier ones are accepted only on a witnessed residual.
    """
    k_needed = grid_for_eps(omega, eps, n)
    best_x, best_r = None, math.inf
    for k in _resolution_schedule(k_needed, resolution_cap):
        labeller = _Labeller(f, n, k, vectorized)
        cell = completely_labeled_search(f, k, n, vectorized, _labeller=labeller)
        x = cell.barycenter()
        fx = labeller.images(x[None, :])[0]
        r = float(np.max(np.abs(fx - x)))
        if r < best_r:
            best_x, best_r = x, r
        if r < eps:
            return BrouwerResult(x, r, k, cell)
    raise ResidualCheckFailed(
        f"residual {best_r:.3g} >= eps {eps:.3g} at the guaranteed resolution; the modulus is unsound",
        best_x, best_r)
