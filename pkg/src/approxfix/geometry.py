"""Points, compact convex domains, metric projection, nets and the Hausdorff metric."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import cdist

METRICS = ("max", "euclidean")

_CDIST_NAME = {"max": "chebyshev", "euclidean": "euclidean"}


class GeometryError(ValueError):
    pass


def as_point(x, dim: int | None = None) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1 or p.size == 0:
        raise GeometryError(f"a point must be a nonempty 1-D sequence, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise GeometryError("point coordinates must be finite")
    if dim is not None and p.size != dim:
        raise GeometryError(f"dimension mismatch: expected {dim}, got {p.size}")
    return p


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise GeometryError(f"unknown metric {metric!r}; expected one of {METRICS}")


def distance(a, b, metric: str = "max") -> float:
    _check_metric(metric)
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if metric == "max":
        return float(np.max(np.abs(d)))
    return float(np.sqrt(np.dot(d, d)))


def pairwise(A, B, metric: str = "max") -> np.ndarray:
    _check_metric(metric)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return cdist(A, B, _CDIST_NAME[metric])


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``{x : lower <= x <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lo = as_point(lower)
        hi = as_point(upper, lo.size)
        if np.any(lo > hi):
            raise GeometryError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, n: int) -> "Box":
        return cls(np.zeros(n), np.ones(n))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    def bounding_box(self) -> "Box":
        return self

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def vertices(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class Hull:
    """Convex hull of finitely many generators."""

    generators: np.ndarray

    def __init__(self, generators):
        G = np.asarray(generators, dtype=float)
        if G.ndim == 1 and G.size:
            G = G.reshape(-1, 1)
        if G.ndim != 2 or G.shape[0] == 0:
            raise GeometryError("a hull needs at least one generator")
        if not np.all(np.isfinite(G)):
            raise GeometryError("generator coordinates must be finite")
        G = G.copy()
        G.setflags(write=False)
        object.__setattr__(self, "generators", G)

    @property
    def dim(self) -> int:
        return self.generators.shape[1]

    def bounding_box(self) -> Box:
        return Box(self.generators.min(axis=0), self.generators.max(axis=0))

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = as_point(x, self.dim)
        return distance(project(self, x), x, "euclidean") <= tol

    def vertices(self) -> np.ndarray:
        return self.generators

    def __eq__(self, other):
        return isinstance(other, Hull) and np.array_equal(self.generators, other.generators)

    def __hash__(self):
        return hash(self.generators.tobytes())

    def __repr__(self):
        return f"Hull({self.generators.tolist()})"


Domain = Box | Hull


def product_box(a: Box, b: Box) -> Box:
    return Box(np.concatenate([a.lower, b.lower]), np.concatenate([a.upper, b.upper]))


def _min_norm_point(P: np.ndarray, tol: float = 1e-12, max_iter: int = 1000) -> np.ndarray:
    """Wolfe's algorithm: weights of the point of conv(P) nearest to the origin."""
    k = P.shape[0]
    scale = max(float(np.max(np.sum(P * P, axis=1))), 1e-300)
    start = int(np.argmin(np.sum(P * P, axis=1)))
    support = [start]
    lam = np.array([1.0])
    x = P[start].copy()
    for _ in range(max_iter):
        dots = P @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in support:
            break
        support.append(j)
        lam = np.append(lam, 0.0)
        while True:
            S = P[support]
            m = len(support)
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = S @ S.T
            kkt[:m, m] = 1.0
            kkt[m, :m] = 1.0
            rhs = np.zeros(m + 1)
            rhs[m] = 1.0
            mu = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:m]
            if np.all(mu > tol):
                lam = mu
                x = mu @ S
                break
            shrink = lam - mu
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where((mu <= tol) & (shrink > 0), lam / shrink, np.inf)
            theta = float(min(1.0, np.min(ratios)))
            lam = lam + theta * (mu - lam)
            keep = lam > tol
            if not np.any(keep):
                keep[int(np.argmax(lam))] = True
            support = [s for s, kp in zip(support, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = lam @ P[support]
    weights = np.zeros(k)
    weights[support] = lam
    return weights


def project(domain: Domain, x) -> np.ndarray:
    """Euclidean nearest point of ``domain`` to ``x``."""
    x = as_point(x, domain.dim)
    if isinstance(domain, Box):
        return np.minimum(np.maximum(x, domain.lower), domain.upper)
    G = domain.generators
    if G.shape[0] == 1:
        return G[0].copy()
    return _min_norm_point(G - x) @ G


def _hull_faces(G: np.ndarray, limit: int = 4096):
    """Vertex index sets of all faces of a full-dimensional hull, or None."""
    n = G.shape[1]
    if G.shape[0] <= n or np.linalg.matrix_rank(G[1:] - G[0], tol=1e-12) < n:
        return None
    if n == 1:
        return [(int(np.argmin(G[:, 0])),), (int(np.argmax(G[:, 0])),)]
    facets = ConvexHull(G).simplices
    faces = set()
    for facet in facets:
        for r in range(1, n + 1):
            faces.update(itertools.combinations(sorted(facet.tolist()), r))
        if len(faces) > limit:
            return None
    return sorted(faces)


def _project_batch(domain: Hull, X: np.ndarray) -> np.ndarray | None:
    """Exact projection onto a full-dimensional hull for many points at once.

    Outside points land on the relative interior of some boundary face, so the
    nearest of the feasible face-wise affine projections is the answer.
    """
    G = domain.generators
    faces = _hull_faces(G)
    if faces is None:
        return None
    hull = ConvexHull(G) if G.shape[1] > 1 else None
    if hull is not None:
        inside = np.all(X @ hull.equations[:, :-1].T + hull.equations[:, -1] <= 1e-12, axis=1)
    else:
        inside = (X[:, 0] >= G[:, 0].min()) & (X[:, 0] <= G[:, 0].max())
    out = X.copy()
    P = X[~inside]
    if P.shape[0] == 0:
        return out
    best = np.full(P.shape[0], np.inf)
    best_pt = np.empty_like(P)
    for face in faces:
        V = G[list(face)]
        base = V[0]
        D = (V[1:] - base).T
        if D.shape[1] == 0:
            Q = np.broadcast_to(base, P.shape)
            ok = np.ones(P.shape[0], dtype=bool)
        else:
            coef, *_ = np.linalg.lstsq(D, (P - base).T, rcond=None)
            lam0 = 1.0 - coef.sum(axis=0)
            ok = (lam0 >= -1e-12) & np.all(coef >= -1e-12, axis=0)
            Q = base + (D @ coef).T
        d = np.einsum("ij,ij->i", P - Q, P - Q)
        better = ok & (d < best)
        best[better] = d[better]
        best_pt[better] = Q[better]
    out[~inside] = best_pt
    return out


def project_many(domain: Domain, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(domain, Box):
        return np.clip(X, domain.lower, domain.upper)
    if X.shape[0] > 16:
        out = _project_batch(domain, X)
        if out is not None:
            return out
    return np.array([project(domain, x) for x in X])


def diameter(domain: Domain, metric: str = "max") -> float:
    _check_metric(metric)
    if isinstance(domain, Box):
        s = domain.sides
        return float(np.max(s)) if metric == "max" else float(np.sqrt(s @ s))
    return float(np.max(pairwise(domain.generators, domain.generators, metric)))


def grid_axes(box: Box, pitch: float) -> list[np.ndarray]:
    """Per-axis uniform grids, each with the largest spacing <= pitch that divides the side."""
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        side = hi - lo
        if side == 0:
            axes.append(np.array([lo]))
            continue
        k = max(1, math.ceil(side / pitch - 1e-12))
        ax = lo + side * np.arange(k + 1) / k
        ax[-1] = hi
        axes.append(ax)
    return axes


def tensor_grid(axes: Sequence[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def eps_net(domain: Domain, eps: float, metric: str = "max") -> np.ndarray:
    """A finite eps-approximation of ``domain`` (rows are points)."""
    _check_metric(metric)
    if not eps > 0:
        raise GeometryError("eps must be positive")
    n = domain.dim
    if isinstance(domain, Box):
        pitch = eps if metric == "max" else eps / math.sqrt(n)
        return tensor_grid(grid_axes(domain, pitch))
    pts = tensor_grid(grid_axes(domain.bounding_box(), eps / math.sqrt(n)))
    proj = project_many(domain, pts)
    _, idx = np.unique(np.round(proj, 12), axis=0, return_index=True)
    return proj[np.sort(idx)]


def dist_to_finite_set(x, S, metric: str = "max") -> float:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.size == 0:
        raise GeometryError("distance to an empty set is undefined")
    x = as_point(x, S.shape[1])
    return float(np.min(pairwise(x[None, :], S, metric)))


def hausdorff(A, B, metric: str = "max") -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise GeometryError("Hausdorff distance needs nonempty sets")
    if A.shape[1] != B.shape[1]:
        raise GeometryError("point sets have different dimensions")
    D = pairwise(A, B, metric)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def quasi_random(box: Box, count: int, seed: int = 0) -> np.ndarray:
    """Scrambled Halton points filling ``box``."""
    from scipy.stats import qmc

    u = qmc.Halton(d=box.dim, scramble=True, seed=seed).random(count)
    return box.lower + u * box.sides
