"""Approximate fixed points of (weakly) approximable set-valued maps.

Pipeline: pick a grid fine enough that convex combinations of graph points over
one cell stay near the graph, interpolate grid selections affinely on Kuhn
cells, find an approximate fixed point y of the interpolant, then pull
(y, g(y)) back onto the graph. Each result is checked before it is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import brouwer
from .geometry import Box, Hull, project, project_many
from .modulus import ContinuityModulus, Lipschitz
from .setvalued import Approximable, GridTable, SetValuedMap, WeakApproxData, WeaklyApproximable

MAX_RETRIES = 6


class KakutaniError(RuntimeError):
    def __init__(self, message: str, trace: dict | None = None):
        super().__init__(message)
        self.trace = trace or {}


@dataclass
class FixedPointResult:
    x: np.ndarray
    u: np.ndarray
    eps: float
    residual: float
    graph_defect: float
    trace: dict = field(default_factory=dict)


@dataclass
class CertificateReport:
    ok: bool
    u: np.ndarray
    residual: float


def multi_point_delta(delta: ContinuityModulus, k_points: int, eps: float) -> float:
    """delta_k(eps) for convex combinations of k graph points.

    delta_2 = delta; delta_k(eps) = min(delta_{k-1}(eps/2), max(delta(eps/2) - eps/2, delta(eps/2)/2)).
    """
    if k_points < 2:
        raise ValueError("k_points must be at least 2")
    if not eps > 0:
        raise ValueError("eps must be positive")

    @lru_cache(maxsize=None)
    def rec(k: int, e: float) -> float:
        if k == 2:
            d = delta(e)
        else:
            half = delta(e / 2)
            d = min(rec(k - 1, e / 2), max(half - e / 2, half / 2))
        if not d > 0:
            raise ValueError("modulus too weak for requested eps")
        return d

    return rec(k_points, eps)


class KuhnInterpolant:
    """Piecewise-affine map on a box, affine on each Kuhn cell of a per-axis uniform grid.

    ``table`` holds the values at the grid points (an array of shape
    ``(k_0+1, ..., k_{n-1}+1, m)`` or a :class:`GridTable`). Works on single
    points and on ``(N, n)`` batches.
    """

    def __init__(self, box: Box, table):
        self.box = box
        self.table = table if isinstance(table, GridTable) else GridTable.dense(table)
        self.n = box.dim
        self.ks = np.array(self.table.shape) - 1
        self.scale = np.where(box.sides > 0, box.sides, 1.0)

    def lipschitz(self, codomain_scale=None) -> float:
        """Max-metric Lipschitz bound; with ``codomain_scale`` both sides are measured in box-normalised units."""
        J = self.table.jumps()
        if codomain_scale is not None:
            J = J / codomain_scale
        rows = np.zeros(J.shape[1])
        for i in range(self.n):
            if self.ks[i] == 0 or self.box.sides[i] == 0:
                continue
            h = self.box.sides[i] / self.ks[i] if codomain_scale is None else 1.0 / self.ks[i]
            rows = rows + J[i] / h
        return float(np.max(rows))

    def on_lattice(self, S: np.ndarray) -> np.ndarray:
        """Evaluate at lattice coordinates S (N, n) with 0 <= S_i <= k_i."""
        S = np.clip(S, 0.0, self.ks)
        base = np.minimum(np.floor(S), np.maximum(self.ks - 1, 0)).astype(np.int64)
        frac = S - base
        order = np.argsort(-frac, axis=1, kind="stable")
        fs = np.take_along_axis(frac, order, axis=1)
        N = S.shape[0]
        weights = np.empty((N, self.n + 1))
        weights[:, 0] = 1.0 - fs[:, 0]
        weights[:, 1:-1] = fs[:, :-1] - fs[:, 1:]
        weights[:, -1] = fs[:, -1]
        idx = base.copy()
        out = weights[:, :1] * self.table.gather(idx)
        rows = np.arange(N)
        for j in range(self.n):
            ax = order[:, j]
            idx[rows, ax] += self.ks[ax] > 0
            out += weights[:, j + 1:j + 2] * self.table.gather(idx)
        return out

    def __call__(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        S = (X - self.box.lower) / self.scale * self.ks
        out = self.on_lattice(S)
        return out[0] if single else out


def _grid_counts(box: Box, pitch: float) -> np.ndarray:
    return np.array([int(math.floor(s / pitch)) + 1 if s > 0 else 0 for s in box.sides])


def piecewise_affine_selection(U: SetValuedMap, k) -> KuhnInterpolant:
    """Interpolant of the selections ``U.select`` over the k-grid of the domain's bounding box.

    For hull domains the grid point is first projected onto the hull, so the
    interpolant is the one for ``U(Q(x))``.
    """
    box = U.domain.bounding_box()
    ks = np.broadcast_to(np.asarray(k, dtype=np.int64), (box.dim,)).copy()
    ks[box.sides == 0] = 0
    axes = [box.lower[i] + box.sides[i] * np.arange(ks[i] + 1) / max(ks[i], 1) for i in range(box.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    P = np.stack([m.ravel() for m in mesh], axis=1)
    if isinstance(U.domain, Hull):
        P = project_many(U.domain, P)
    try:
        vals = U.select_many(P)
    except Exception as err:  # noqa: BLE001 - surfaced with the failing stage
        raise KakutaniError(f"selection failed on the grid: {err}") from err
    table = vals.reshape(tuple(ks + 1) + (vals.shape[1],))
    return KuhnInterpolant(box, table)


def _interpolant_from_weak(data: WeakApproxData, box: Box, pitch: float) -> KuhnInterpolant:
    ks = _grid_counts(box, pitch)
    index = []
    for i, ax in enumerate(data.axes):
        grid = box.lower[i] + box.sides[i] * np.arange(ks[i] + 1) / max(ks[i], 1)
        pos = np.clip(np.searchsorted(ax, grid), 1, max(len(ax) - 1, 1))
        left = np.maximum(pos - 1, 0)
        right = np.minimum(pos, len(ax) - 1)
        index.append(np.where(np.abs(ax[left] - grid) <= np.abs(ax[right] - grid), left, right))
    return KuhnInterpolant(box, data.table.subgrid(index))


def residual_certificate(U: SetValuedMap, x, eps: float, u_hint=None) -> CertificateReport:
    """Is there u in U(x) (up to the map's graph tolerance) with max|x - u| < eps?"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cands = [np.atleast_1d(u) for u in U.fiber(x)]
    near = U.graph_near(x, x, eps)
    if near is not None:
        cands.append(np.atleast_1d(near[1]))
    if u_hint is not None:
        cands.append(np.atleast_1d(np.asarray(u_hint, dtype=float)))
    members = [u for u in cands if U.contains(x, u, 1e-12)]
    u = min(members or cands, key=lambda c: float(np.max(np.abs(c - x))))
    r = float(np.max(np.abs(u - x)))
    return CertificateReport(bool(members) and r < eps, u, r)


def _check_self_map(U: SetValuedMap) -> Box:
    if U.dim_in != U.dim_out:
        raise KakutaniError("fixed points need a map from a set into the same space")
    return U.domain.bounding_box()


def _solve(U: SetValuedMap, eps: float, make_interpolant, kind: str, resolution_cap: int) -> FixedPointResult:
    box = _check_self_map(U)
    n = box.dim
    side = float(np.max(box.sides)) if np.any(box.sides > 0) else 1.0
    scale = np.where(box.sides > 0, box.sides, 1.0)
    trace = {"kind": kind, "deltas": [], "grid": [], "brouwer_k": [], "retries": 0}
    for attempt in range(MAX_RETRIES + 1):
        trace["retries"] = attempt
        g, delta = make_interpolant(attempt)
        trace["deltas"].append(delta)
        trace["grid"].append(g.ks.tolist())
        L = max(g.lipschitz(codomain_scale=scale), 1e-12)

        def g_unit(T, g=g):
            return (g(box.lower + np.atleast_2d(T) * box.sides) - box.lower) / scale

        try:
            br = brouwer.approx_fixed_point(g_unit, Lipschitz(L), n, eps / (3 * side), vectorized=True,
                                            resolution_cap=resolution_cap)
        except brouwer.ResidualCheckFailed:
            continue
        trace["brouwer_k"].append(br.resolution_used)
        y = box.lower + br.point * box.sides
        if isinstance(U.domain, Hull):
            y = project(U.domain, y)
        gy = g(y)
        near = U.graph_near(y, gy, eps / 3)
        if near is None:
            continue
        x, u = near
        residual = float(np.max(np.abs(x - u)))
        if residual >= eps:
            continue
        cert = residual_certificate(U, x, eps, u_hint=u)
        if not cert.ok:
            continue
        defect = float(U.graph_distance(x, cert.u))
        return FixedPointResult(np.asarray(x, dtype=float), np.asarray(cert.u, dtype=float), eps,
                                cert.residual, defect, trace)
    raise KakutaniError(f"no certified eps-fixed point after {MAX_RETRIES} retries; the modulus "
                        f"supplied for the map is probably unsound", trace)


def approx_kakutani(U: SetValuedMap, eps: float, points: str = "hypercube",
                    resolution_cap: int = brouwer.MAX_RESOLUTION) -> FixedPointResult:
    """An eps-fixed point of an approximable map, with a graph witness.

    ``points`` selects the number of grid points a convex combination may
    involve when sizing the grid: ``"hypercube"`` (2^n) or ``"simplex"`` (n+1).
    """
    if not isinstance(U.approx, Approximable):
        raise KakutaniError("approx_kakutani needs an approximable map")
    if not eps > 0:
        raise ValueError("eps must be positive")
    box = _check_self_map(U)
    n = box.dim
    k_points = max(2, 2 ** n if points == "hypercube" else n + 1)
    delta0 = multi_point_delta(U.approx.delta, k_points, eps / 3)

    def make(attempt):
        delta = delta0 / 2 ** attempt
        ks = _grid_counts(box, delta)
        return piecewise_affine_selection(U, ks), delta

    return _solve(U, eps, make, "approximable", resolution_cap)


def approx_kakutani_weak(U: SetValuedMap, eps: float,
                         resolution_cap: int = brouwer.MAX_RESOLUTION) -> FixedPointResult:
    """An eps-fixed point of a weakly approximable map; nets and selections come from the map."""
    if not isinstance(U.approx, WeaklyApproximable):
        raise KakutaniError("approx_kakutani_weak needs a weakly approximable map")
    if not eps > 0:
        raise ValueError("eps must be positive")
    box = _check_self_map(U)

    def make(attempt):
        request = eps / 3 / 2 ** attempt
        data = U.approx.provider(request)
        if not data.delta < data.eps or data.eps > request * (1 + 1e-12):
            raise KakutaniError(f"provider violated delta < eps (delta={data.delta}, eps={data.eps})")
        return _interpolant_from_weak(data, box, data.delta / 2), data.delta

    return _solve(U, eps, make, "weakly_approximable", resolution_cap)


def as_weakly_approximable(U: SetValuedMap) -> SetValuedMap:
    """View an approximable map as weakly approximable, selecting with ``U.select`` on grid nets."""
    if not isinstance(U.approx, Approximable) or not isinstance(U.domain, Box):
        raise KakutaniError("need an approximable map on a box")
    delta = U.approx.delta

    def provider(e):
        d = min(delta(e), e) * (1 - 1e-9)
        ks = _grid_counts(U.domain, d / 2)
        g = piecewise_affine_selection(U, ks)
        axes = tuple(U.domain.lower[i] + U.domain.sides[i] * np.arange(ks[i] + 1) / max(ks[i], 1)
                     for i in range(U.dim_in))
        return WeakApproxData(e, d, axes, g.table)

    return _WeakView(U, WeaklyApproximable(provider))


class _WeakView(SetValuedMap):
    def __init__(self, U: SetValuedMap, approx: WeaklyApproximable):
        self.U = U
        self.domain, self.codomain = U.domain, U.codomain
        self.select_tol, self.graph_tol = U.select_tol, U.graph_tol
        self.approx = approx

    def __getattr__(self, name):
        return getattr(self.U, name)

    def select(self, x):
        return self.U.select(x)

    def select_many(self, X):
        return self.U.select_many(X)

    def fiber(self, x):
        return self.U.fiber(x)

    def graph_distance(self, z, w):
        return self.U.graph_distance(z, w)

    def graph_distance_many(self, Z, W):
        return self.U.graph_distance_many(Z, W)

    def graph_within(self, Z, W, r):
        return self.U.graph_within(Z, W, r)

    def graph_near(self, z, w, r):
        return self.U.graph_near(z, w, r)

    def contains(self, x, u, tol=0.0):
        return self.U.contains(x, u, tol)
