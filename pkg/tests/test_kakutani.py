import numpy as np
import pytest
from hypothesis import given, strategies as st

from approxfix.geometry import Box, Hull, project
from approxfix.kakutani import (KakutaniError, KuhnInterpolant, approx_kakutani, approx_kakutani_weak,
                                as_weakly_approximable, multi_point_delta, piecewise_affine_selection,
                                residual_certificate)
from approxfix.modulus import Lipschitz
from approxfix.setvalued import WeakApproxData, WeaklyApproximable, from_function, from_polygonal_graph

from conftest import lapp_violations

I = Box.unit(1)


def ident(e):
    return e


def test_multi_point_delta_examples():
    assert multi_point_delta(ident, 2, 0.1) == 0.1
    assert multi_point_delta(ident, 3, 0.1) == pytest.approx(0.025)
    sq = lambda e: e * e
    assert multi_point_delta(sq, 2, 0.3) == sq(0.3)
    with pytest.raises(ValueError):
        multi_point_delta(ident, 1, 0.1)


def test_multi_point_delta_unrolled():
    # k = 4 by hand: min(d3(e/2), max(d(e/2) - e/2, d(e/2)/2)) with d = identity
    e = 0.2
    d3 = min(e / 4, max(e / 4 - e / 4, e / 8))
    assert multi_point_delta(ident, 4, e) == pytest.approx(min(d3, e / 4))


def test_multi_point_delta_too_weak():
    with pytest.raises(ValueError, match="too weak"):
        multi_point_delta(lambda e: 0.0 if e < 0.05 else e, 3, 0.05)


@given(st.floats(0.01, 10), st.floats(1e-3, 1), st.integers(2, 7))
def test_multi_point_delta_nonincreasing(L, eps, k):
    delta = Lipschitz(L)
    a, b = multi_point_delta(delta, k, eps), multi_point_delta(delta, k + 1, eps)
    assert 0 < b <= a


def test_selection_examples(figure1):
    g = piecewise_affine_selection(from_function("x0", Lipschitz(1), I), 4)
    X = np.linspace(0, 1, 37)[:, None]
    assert np.allclose(g(X), X, atol=1e-15)
    g = piecewise_affine_selection(figure1, 2)
    assert g.table.to_array().ravel().tolist() == [0.0, 0.0, 1.0]
    assert g([0.25]) == pytest.approx([0.0]) and g([0.75]) == pytest.approx([0.5])
    g = piecewise_affine_selection(from_function("1 - x0", Lipschitz(1), I), 4)
    assert g([0.375]) == pytest.approx([0.625])


def test_interpolant_against_cell_formula():
    # in 2-D each grid cell is cut along its diagonal; interpolate on the triangle by hand
    rng = np.random.default_rng(0)
    table = rng.random((4, 5, 1))
    g = KuhnInterpolant(Box.unit(2), table)
    for x in rng.random((200, 2)):
        s = x * [3, 4]
        b = np.minimum(np.floor(s).astype(int), [2, 3])
        f = s - b
        v00 = table[b[0], b[1], 0]
        v11 = table[b[0] + 1, b[1] + 1, 0]
        if f[0] >= f[1]:
            ref = v00 + f[0] * (table[b[0] + 1, b[1], 0] - v00) + f[1] * (v11 - table[b[0] + 1, b[1], 0])
        else:
            ref = v00 + f[1] * (table[b[0], b[1] + 1, 0] - v00) + f[0] * (v11 - table[b[0], b[1] + 1, 0])
        assert g(x)[0] == pytest.approx(ref, abs=1e-12)


def test_interpolant_lipschitz_bound():
    rng = np.random.default_rng(1)
    g = KuhnInterpolant(Box([0, 0], [2, 1]), rng.random((5, 4, 2)))
    L = g.lipschitz()
    A = rng.random((2000, 2)) * [2, 1]
    B = np.clip(A + (rng.random((2000, 2)) - 0.5) * 0.05, 0, [2, 1])
    lhs = np.max(np.abs(g(A) - g(B)), axis=1)
    assert np.all(lhs <= L * np.max(np.abs(A - B), axis=1) + 1e-12)


def test_kakutani_examples(figure1):
    r = approx_kakutani(from_function("x0", Lipschitz(1), I), 1e-2)
    assert r.residual == 0
    r = approx_kakutani(figure1, 1e-2)
    assert abs(r.x[0] - 0.5) < 1e-2 and r.residual < 1e-2
    assert figure1.graph_distance(r.x, r.u) <= figure1.graph_tol
    r = approx_kakutani(from_function("1 - x0", Lipschitz(1), I), 1e-2)
    assert abs(r.x[0] - 0.5) < 1e-2


def test_result_invariants():
    U = from_function(["1 - x1", "x0*x0"], Lipschitz(2), Box.unit(2))
    r = approx_kakutani(U, 2e-2)
    assert r.residual < r.eps
    assert r.residual == pytest.approx(np.max(np.abs(r.x - r.u)))
    assert r.graph_defect <= U.graph_tol
    # u is the image of x, checked by evaluating the formulas directly
    assert r.u == pytest.approx([1 - r.x[1], r.x[0] ** 2], abs=1e-9)
    assert residual_certificate(U, r.x, r.eps).ok
    deltas = r.trace["deltas"]
    assert all(b <= a for a, b in zip(deltas, deltas[1:]))


def test_simplex_budget():
    U = from_function(["x1", "x0"], Lipschitz(1), Box.unit(2))
    a = approx_kakutani(U, 3e-2, points="simplex")
    b = approx_kakutani(U, 3e-2)
    assert a.residual < 3e-2 and b.residual < 3e-2
    assert a.trace["deltas"][0] >= b.trace["deltas"][0]


def test_hull_domain_reduction():
    H = Hull([[0, 0], [1, 0], [0, 1]])
    U = from_function(["0.5*x1 + 0.1", "0.5*x0 + 0.2"], Lipschitz(0.5), H)
    r = approx_kakutani(U, 1e-2)
    assert np.allclose(project(H, r.x), r.x, atol=1e-9)
    # unique fixed point of the affine contraction
    exact = np.linalg.solve([[1, -0.5], [-0.5, 1]], [0.1, 0.2])
    assert np.max(np.abs(r.x - exact)) < 2e-2


def test_weak_path_matches_strong(figure1):
    for U in (from_function("1 - x0", Lipschitz(1), I), figure1):
        a = approx_kakutani(U, 1e-2)
        b = approx_kakutani_weak(as_weakly_approximable(U), 1e-2)
        assert b.residual < 1e-2
        assert abs(a.x[0] - b.x[0]) < 1e-2


def test_weak_provider_contract():
    axes = (np.linspace(0, 1, 11),)
    U = from_function("x0", Lipschitz(1), I)

    class Loose(WeakApproxData):
        def __post_init__(self):
            pass  # skip the constructor check to reach the pipeline's own guard

    U.approx = WeaklyApproximable(lambda e: Loose(e, e, axes, axes[0][:, None]))
    with pytest.raises(KakutaniError, match="delta < eps"):
        approx_kakutani_weak(U, 1e-2)
    with pytest.raises(KakutaniError):
        approx_kakutani(U, 1e-2)


def test_unsound_modulus_reports_trace():
    # a decreasing jump, advertised as approximable; it has no 0.1-fixed point
    drop = from_polygonal_graph([[[0, 1], [0.5, 1]], [[0.5, 0], [1, 0]]], I, Lipschitz(1), validate=False)
    with pytest.raises(KakutaniError) as err:
        approx_kakutani(drop, 0.1)
    trace = err.value.trace
    assert trace["retries"] == 6
    assert all(b <= a for a, b in zip(trace["deltas"], trace["deltas"][1:]))


def test_residual_certificate_examples(figure1):
    rep = residual_certificate(figure1, [0.5], 1e-6)
    assert rep.ok and rep.u == pytest.approx([0.5])
    rep = residual_certificate(figure1, [0.25], 0.1)
    assert not rep.ok and rep.residual == pytest.approx(0.25)
    U = from_function(["x0", "x1"], Lipschitz(1), Box.unit(2))
    rep = residual_certificate(U, [0.3, 0.6], 1e-9)
    assert rep.ok and rep.u == pytest.approx([0.3, 0.6])


def test_certificate_rejects_non_members(figure1):
    rep = residual_certificate(figure1, [0.25], 0.5, u_hint=[0.25])
    assert rep.u.tolist() == [0.0]


def test_lapp_property():
    assert lapp_violations(60, seed=11) == []


def test_jump_map_is_not_certified():
    # without the vertical segment there is no eps-fixed point near 1/2
    jump = from_polygonal_graph([[[0, 0], [0.5, 0]], [[0.5, 1], [1, 1]]], I, Lipschitz(1), validate=False)
    for x in np.linspace(0.3, 0.7, 41):
        assert not residual_certificate(jump, [x], 0.2).ok
    assert residual_certificate(jump, [0.0], 0.2).ok
