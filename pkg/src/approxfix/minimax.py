"""Approximate saddle points of payoffs f(x, y) on [0,1]^n x [0,1]^m.

f is assumed quasi-concave in x and quasi-convex in y. The sublevel maps

    V_eps(x) = {y : f(x, y) <= inf_y f(x, .) + eps}
    W_eps(y) = {x : f(x, y) >= sup_x f(., y) - eps}

are weakly approximable, so their product has approximate fixed points, and
any such point is an approximate saddle point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import brouwer
from . import expr as ex
from .geometry import Box, grid_axes, tensor_grid
from .kakutani import approx_kakutani_weak
from .modulus import ContinuityModulus
from .setvalued import SetValuedMap, WeakApproxData, WeaklyApproximable, permute_inputs, product

GRID_CAP = 2 ** 22
WORK_CAP = 2 ** 30
CHUNK = 2 ** 22


class MinimaxError(RuntimeError):
    def __init__(self, message: str, trace: dict | None = None):
        super().__init__(message)
        self.trace = trace or {}


def payoff_dims(f, n: int | None = None, m: int | None = None) -> tuple[int, int]:
    nx, ny = ex.dimensions(ex._coerce(f))
    n = max(nx, 1) if n is None else n
    m = max(ny, 1) if m is None else m
    if n < nx or m < ny:
        raise MinimaxError(f"expression uses x{nx - 1}/y{ny - 1} beyond the declared dimensions ({n}, {m})")
    return n, m


def payoff_modulus(f, n: int | None = None, m: int | None = None):
    """Lipschitz modulus of f on the unit boxes, from interval gradients."""
    n, m = payoff_dims(f, n, m)
    return ex.lipschitz_modulus(ex._coerce(f), Box.unit(n), Box.unit(m))


def _unit_grid(dim: int, pitch: float, cap: int) -> np.ndarray:
    per_axis = math.ceil(1.0 / pitch - 1e-12) + 1
    if per_axis ** dim > cap:
        raise MinimaxError(f"net overflow: {per_axis}^{dim} grid points exceed the cap {cap}")
    return tensor_grid(grid_axes(Box.unit(dim), pitch))


def _pitch(omega: ContinuityModulus, eps: float) -> float:
    # nearest grid point is within pitch/2 < omega(eps)
    return min(omega(eps), 1.0)


def _extreme_rows(F, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """min over rows of Y of F(x, y), for every row x of X, in memory-bounded chunks."""
    out = np.empty(X.shape[0])
    step = max(1, CHUNK // max(Y.shape[0], 1))
    for s in range(0, X.shape[0], step):
        out[s:s + step] = F(X[s:s + step, None, :], Y[None, :, :]).min(axis=1)
    return out


def certified_inf(f, omega: ContinuityModulus, x0, eps: float, m: int | None = None,
                  cap: int = GRID_CAP) -> float:
    """inf_y f(x0, y) to within eps (never below the true infimum)."""
    e = ex._coerce(f)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    _, m = payoff_dims(e, len(x0), m)
    Y = _unit_grid(m, _pitch(omega, eps), cap)
    return float(ex.evaluate_batch(e, x0[None, :], Y).min())


def certified_sup(f, omega: ContinuityModulus, y0, eps: float, n: int | None = None,
                  cap: int = GRID_CAP) -> float:
    """sup_x f(x, y0) to within eps (never above the true supremum)."""
    e = ex._coerce(f)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    n, _ = payoff_dims(e, n, len(y0))
    X = _unit_grid(n, _pitch(omega, eps), cap)
    return float(ex.evaluate_batch(e, X, y0[None, :]).max())


class SublevelMap(SetValuedMap):
    """V_eps (``side="V"``, input x, output y) or W_eps (``side="W"``, input y, output x).

    Both are handled as sublevel sets of g(input, output): g = f for V and
    g = -f with the arguments swapped for W. A point u is accepted as a member
    of the eps-sublevel set at input z when g(z, u) <= r + 7 eps / 8, where r is
    the grid minimum at tolerance eps / 8; accepted points are therefore true
    members.
    """

    def __init__(self, f, omega: ContinuityModulus, eps: float, side: str, n: int, m: int,
                 cap: int = GRID_CAP):
        if side not in ("V", "W"):
            raise ValueError("side must be 'V' or 'W'")
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.f = ex._coerce(f)
        self.omega, self.eps, self.side, self.cap = omega, eps, side, cap
        d_in, d_out = (n, m) if side == "V" else (m, n)
        self.domain, self.codomain = Box.unit(d_in), Box.unit(d_out)
        self.graph_tol = 0.0
        self.center = np.full(d_out, 0.5)
        self.approx = WeaklyApproximable(self._provide)
        self._grids: dict[float, np.ndarray] = {}

    def g(self, Z, U) -> np.ndarray:
        if self.side == "V":
            return ex.evaluate_batch(self.f, Z, U)
        return -ex.evaluate_batch(self.f, U, Z)

    def _grid(self, level: float) -> np.ndarray:
        pitch = _pitch(self.omega, level / 8)
        if pitch not in self._grids:
            self._grids[pitch] = _unit_grid(self.dim_out, pitch, self.cap)
        return self._grids[pitch]

    def levels(self, Z, level: float | None = None) -> np.ndarray:
        level = self.eps if level is None else level
        return _extreme_rows(self.g, np.atleast_2d(Z), self._grid(level))

    def members(self, z, U, level: float | None = None, tol: float = 0.0) -> np.ndarray:
        level = self.eps if level is None else level
        r = self.levels(np.atleast_1d(z)[None, :], level)[0]
        return self.g(np.atleast_1d(z)[None, :], np.atleast_2d(U)) <= r + 7 * level / 8 + tol

    def select_many(self, X, level: float | None = None) -> np.ndarray:
        """Grid member of the eps/2-sublevel set nearest the centre of the output cube."""
        level = self.eps / 2 if level is None else level
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = self._grid(level)
        dist = np.max(np.abs(U - self.center), axis=1)
        order = np.argsort(dist, kind="stable")
        U, dist = U[order], dist[order]
        out = np.empty((X.shape[0], self.dim_out))
        step = max(1, CHUNK // U.shape[0])
        for s in range(0, X.shape[0], step):
            G = self.g(X[s:s + step, None, :], U[None, :, :])
            ok = G <= G.min(axis=1, keepdims=True) + 7 * level / 8
            out[s:s + step] = U[np.argmax(ok, axis=1)]
        return out

    def select(self, x) -> np.ndarray:
        return self.select_many(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0]

    def fiber(self, x, limit: int = 64) -> np.ndarray:
        """Up to ``limit`` grid points of the eps-sublevel set, spread evenly."""
        U = self._grid(self.eps)
        mem = U[self.members(x, U)]
        if mem.shape[0] == 0:
            raise MinimaxError("tolerance budget exhausted; decrease eps or refine grid")
        if mem.shape[0] > limit:
            mem = mem[np.linspace(0, mem.shape[0] - 1, limit).astype(int)]
        return mem

    def _provide(self, request: float) -> WeakApproxData:
        delta = min(self.omega(request / 4), request / 2)
        axes = tuple(grid_axes(self.domain, delta / 2))
        size = math.prod(len(a) for a in axes)
        if size > self.cap or size * self._grid(self.eps / 2).shape[0] > WORK_CAP:
            raise MinimaxError(f"net overflow: {size} net points at delta={delta:.3g}; increase eps")
        net = tensor_grid(list(axes))
        table = self.select_many(net).reshape(tuple(len(a) for a in axes) + (self.dim_out,))
        U = self._grid(self.eps / 2)

        def fibers(index):
            x = np.array([axes[i][j] for i, j in enumerate(index)])
            G = self.g(x[None, :], U)
            return U[G <= G.min() + 7 * self.eps / 16]

        return WeakApproxData(request, delta, axes, table, fibers)

    def graph_distance(self, z, w) -> float:
        """Distance from w to the accepted part of the fibre over z (an upper bound on the graph distance)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.members(z, w)[0]:
            return 0.0
        U = self._grid(self.eps)
        mem = U[self.members(z, U)]
        if mem.shape[0] == 0:
            return math.inf
        return float(np.min(np.max(np.abs(mem - w), axis=1)))

    def graph_near(self, z, w, r: float):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        w = np.clip(np.atleast_1d(np.asarray(w, dtype=float)), 0.0, 1.0)
        if self.members(z, w)[0]:
            return z.copy(), w
        offsets = np.linspace(-r, r, 9)[1:-1]
        cand = np.clip(w + tensor_grid([offsets] * self.dim_out), 0.0, 1.0)
        ok = self.members(z, cand)
        if not ok.any():
            U = self._grid(self.eps)
            cand = U[np.max(np.abs(U - w), axis=1) < r]
            if cand.shape[0] == 0:
                return None
            ok = self.members(z, cand)
            if not ok.any():
                return None
        cand = cand[ok]
        d = np.max(np.abs(cand - w), axis=1)
        i = int(np.argmin(d))
        return (z.copy(), cand[i]) if d[i] < r else None

    def contains(self, x, u, tol: float = 0.0) -> bool:
        return bool(self.members(x, np.atleast_1d(np.asarray(u, dtype=float)), tol=tol)[0])


def sublevel_maps(f, omega: ContinuityModulus, eps: float, n: int | None = None, m: int | None = None,
                  cap: int = GRID_CAP) -> tuple[SublevelMap, SublevelMap]:
    """(V_eps, W_eps) for the payoff f."""
    n, m = payoff_dims(f, n, m)
    return (SublevelMap(f, omega, eps, "V", n, m, cap), SublevelMap(f, omega, eps, "W", n, m, cap))


@dataclass
class SaddleCertificate:
    x0: np.ndarray
    y0: np.ndarray
    value: float
    eps: float
    inf_bound: float
    sup_bound: float
    grid_tol: float
    gap_estimate: float
    trace: dict = field(default_factory=dict)

    def violations(self) -> list[str]:
        out = []
        if not self.value < self.inf_bound + self.eps + self.grid_tol:
            out.append("value is not within eps of inf_y f(x0, y)")
        if not self.value > self.sup_bound - self.eps - self.grid_tol:
            out.append("value is not within eps of sup_x f(x, y0)")
        if not self.gap_estimate <= 2 * self.eps + 2 * self.grid_tol:
            out.append("gap estimate exceeds 2 eps")
        return out


def approx_saddle(f, omega: ContinuityModulus, eps: float, n: int | None = None, m: int | None = None,
                  cap: int = GRID_CAP, check_hypotheses: bool = True, seed: int = 0,
                  resolution_cap: int = brouwer.MAX_RESOLUTION) -> SaddleCertificate:
    """A point (x0, y0) with f(x0, y0) within eps of both inf_y f(x0, .) and sup_x f(., y0).

    With ``check_hypotheses`` the quasi-concavity/convexity assumptions are
    spot-checked first and a falsifier aborts the run.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    e = ex._coerce(f)
    n, m = payoff_dims(e, n, m)
    if check_hypotheses:
        for axis in ("x", "y"):
            rep = quasi_convexity_check(e, axis, seed=seed, n=n, m=m)
            if not rep.passed:
                raise MinimaxError(f"f fails the quasi-{'concavity' if axis == 'x' else 'convexity'} "
                                   f"check in {axis}: {rep.violation}", {"violation": rep.violation})
    V, W = sublevel_maps(e, omega, eps / 2, n, m, cap)
    # product(W, V) reads its input as (y, x); reorder so the fixed-point space is (x, y)
    perm = list(range(n, n + m)) + list(range(n))
    U = permute_inputs(product(W, V), perm)
    delta = min(omega(eps / 4), eps / 4)
    res = approx_kakutani_weak(U, delta, resolution_cap)
    x0, y0 = res.x[:n], res.x[n:]
    grid_tol = eps / 16
    inf_bound = certified_inf(e, omega, x0, grid_tol, m, cap)
    sup_bound = certified_sup(e, omega, y0, grid_tol, n, cap)
    value = float(ex.evaluate(e, x0, y0))
    trace = dict(res.trace, fixed_point_eps=delta, residual=res.residual)
    cert = SaddleCertificate(x0, y0, value, eps, inf_bound, sup_bound, grid_tol,
                             max(0.0, sup_bound - inf_bound), trace)
    bad = cert.violations()
    if bad:
        raise MinimaxError("; ".join(bad), trace)
    return cert


@dataclass
class QuasiReport:
    passed: bool
    violation: dict | None = None


def quasi_convexity_check(f, axis: str, samples: int = 1000, seed: int = 0,
                          n: int | None = None, m: int | None = None) -> QuasiReport:
    """Look for a falsifier of quasi-convexity in y (axis "y") or quasi-concavity in x (axis "x")."""
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    e = ex._coerce(f)
    n, m = payoff_dims(e, n, m)
    rng = np.random.default_rng(seed)
    d_move, d_fix = (m, n) if axis == "y" else (n, m)
    fixed = rng.random((samples, d_fix))
    A, B = rng.random((samples, d_move)), rng.random((samples, d_move))
    # always include the corner pair, midpoint and centre slice
    A[0], B[0], fixed[0] = 0.0, 1.0, 0.5
    t = rng.random((samples, 1))
    t[0] = 0.5
    P = t * A + (1 - t) * B

    def val(Z):
        return ex.evaluate_batch(e, fixed, Z) if axis == "y" else ex.evaluate_batch(e, Z, fixed)

    fa, fb, fp = val(A), val(B), val(P)
    bad = fp > np.maximum(fa, fb) + 1e-9 if axis == "y" else fp < np.minimum(fa, fb) - 1e-9
    if not bad.any():
        return QuasiReport(True)
    i = int(np.argmax(bad))
    return QuasiReport(False, {"fixed": fixed[i].tolist(), "a": A[i].tolist(), "b": B[i].tolist(),
                               "t": float(t[i, 0]), "f_a": float(fa[i]), "f_b": float(fb[i]),
                               "f_t": float(fp[i])})


def brute_gap(f, grid_k: int, n: int | None = None, m: int | None = None,
              cap: int = 2 ** 26) -> tuple[float, float]:
    """(sup_x inf_y f, inf_y sup_x f) over the (grid_k+1)-per-axis grid."""
    if grid_k < 1:
        raise ValueError("grid_k must be at least 1")
    e = ex._coerce(f)
    n, m = payoff_dims(e, n, m)
    if (grid_k + 1) ** (n + m) > cap:
        raise MinimaxError(f"grid overflow: {(grid_k + 1) ** (n + m)} evaluations exceed the cap {cap}")
    X = _unit_grid(n, 1.0 / grid_k, cap)
    Y = _unit_grid(m, 1.0 / grid_k, cap)
    row_min = np.full(X.shape[0], np.inf)
    col_max = np.full(Y.shape[0], -np.inf)
    step = max(1, CHUNK // Y.shape[0])
    for s in range(0, X.shape[0], step):
        F = ex.evaluate_batch(e, X[s:s + step, None, :], Y[None, :, :])
        row_min[s:s + step] = F.min(axis=1)
        col_max = np.maximum(col_max, F.max(axis=0))
    return float(row_min.max()), float(col_max.min())
