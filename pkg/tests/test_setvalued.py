import numpy as np
import pytest
from hypothesis import given, strategies as st

from approxfix.geometry import Box, Hull
from approxfix.modulus import Lipschitz, Table
from approxfix.setvalued import (GridTable, SetValuedError, WeakApproxData, WeaklyApproximable,
                                 check_approximability, from_function, from_polygonal_graph,
                                 permute_inputs, product)

from conftest import FIGURE1, JUMP

I = Box.unit(1)


def sampled_graph(segments, per=20001):
    t = np.linspace(0, 1, per)[:, None]
    return np.concatenate([np.asarray(a) + t * (np.asarray(b) - np.asarray(a)) for a, b in segments])


def brute_function_distance(f, z, w, per=100001):
    x = np.linspace(0, 1, per)
    return float(np.min(np.maximum(np.abs(x - z), np.abs(f(x) - w))))


def test_function_map_examples():
    ident = from_function("x0", Lipschitz(1), I)
    assert ident.graph_distance([0.3], [0.3]) <= ident.graph_tol
    U = from_function("1 - x0", Lipschitz(1), I)
    assert U.select([0.2]) == pytest.approx([0.8])
    assert U.graph_distance([0.5], [0.0]) == pytest.approx(0.25, abs=1e-8)
    assert brute_function_distance(lambda x: 1 - x, 0.5, 0.0) == pytest.approx(0.25, abs=1e-5)


def test_function_map_codomain_check():
    with pytest.raises(SetValuedError):
        from_function("2*x0", Lipschitz(2), I)


@pytest.mark.parametrize("text,f", [("x0*x0", lambda x: x * x), ("1 - x0", lambda x: 1 - x),
                                    ("abs(x0 - 0.3)", lambda x: np.abs(x - 0.3)),
                                    ("0.5*x0 + 0.25", lambda x: 0.5 * x + 0.25)])
def test_function_graph_distance_against_scan(text, f):
    U = from_function(text, Lipschitz(2), I)
    rng = np.random.default_rng(0)
    for z, w in rng.random((15, 2)):
        assert U.graph_distance([z], [w]) == pytest.approx(brute_function_distance(f, z, w), abs=2e-5)


@given(st.floats(0, 1), st.floats(0, 1))
def test_function_graph_near_contract(z, w):
    U = from_function("x0*x0", Lipschitz(2), I)
    d = brute_function_distance(lambda x: x * x, z, w, 20001)
    hit = U.graph_near([z], [w], d + 1e-3)
    assert hit is not None
    x, u = hit
    assert max(abs(x[0] - z), abs(u[0] - w)) <= d + 1e-3
    assert U.graph_distance(x, u) <= U.graph_tol
    if d > 2e-3:
        assert U.graph_near([z], [w], d - 1e-3) is None


def test_on_graph_points_have_zero_distance():
    U = from_function(["0.5*x1", "0.5*x0 + 0.2"], Lipschitz(1), Hull([[0, 0], [1, 0], [0, 1]]))
    rng = np.random.default_rng(4)
    for x in rng.random((10, 2)) * 0.5:
        assert U.graph_distance(x, U.select(x)) <= U.graph_tol


def test_figure1_examples(figure1):
    assert figure1.select([0.25]) == pytest.approx([0.0])
    assert figure1.graph_distance([0.5], [0.5]) == 0
    assert figure1.fiber([0.5]).ravel().tolist() == [0.0, 1.0]
    assert figure1.fiber([0.75]).ravel().tolist() == [1.0]


def test_polygonal_distance_against_sampling(figure1):
    G = sampled_graph(FIGURE1)
    rng = np.random.default_rng(1)
    P = rng.random((200, 2)) * 1.4 - 0.2
    ours = figure1.graph_distance_many(P[:, :1], P[:, 1:])
    ref = np.max(np.abs(P[:, None, :] - G[None, :, :]), axis=2).min(axis=1)
    assert np.allclose(ours, ref, atol=1e-4)
    assert np.all(ours <= ref + 1e-12)


def test_polygonal_graph_near(figure1):
    x, u = figure1.graph_near([0.45], [0.5], 0.1)
    # max metric: every point (0.5, t) with |t - 0.5| <= 0.05 is nearest
    assert x[0] == pytest.approx(0.5) and abs(u[0] - 0.5) <= 0.05 + 1e-12
    assert figure1.graph_distance(x, u) <= 1e-15
    assert figure1.graph_near([0.2], [0.9], 0.1) is None


def test_polygonal_construction_errors():
    with pytest.raises(SetValuedError):
        from_polygonal_graph([[[0, 0], [0.4, 0]], [[0.6, 1], [1, 1]]], I, Lipschitz(1))
    with pytest.raises(SetValuedError):
        from_polygonal_graph(JUMP, I, Lipschitz(1))
    with pytest.raises(SetValuedError):
        from_polygonal_graph([[[0, 0], [1, 2]]], I, Lipschitz(1))


def test_approximability_examples(figure1):
    ident = from_function("x0", Lipschitz(1), I)
    assert check_approximability(ident, 0.1, 0.1).passed
    assert check_approximability(figure1, 0.1, 0.1).passed
    jump = from_polygonal_graph(JUMP, I, Lipschitz(1), validate=False)
    rep = check_approximability(jump, 0.4, 0.1)
    assert not rep.passed
    assert abs(rep.violation["x"][0] - 0.5) < 0.1
    assert rep.violation["distance"] >= 0.4


def test_figure1_approximability_grid(figure1):
    # brute-force check of the definition on a grid of (x, x', t), images from the fibres
    xs = np.linspace(0, 1, 101)
    G = sampled_graph(FIGURE1, 2001)
    eps = 0.1
    worst = 0.0
    for x in xs:
        for xp in xs[np.abs(xs - x) < eps]:
            for u in figure1.fiber([x])[:, 0]:
                for up in figure1.fiber([xp])[:, 0]:
                    t = np.linspace(0, 1, 10)
                    P = np.stack([t * x + (1 - t) * xp, t * u + (1 - t) * up], axis=1)
                    d = np.max(np.abs(P[:, None, :] - G[None, :, :]), axis=2).min(axis=1)
                    worst = max(worst, d.max())
    assert worst < eps


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_approximable_maps_pass_spot_checks(figure1, eps):
    for U in (figure1, from_function("x0*x0", Lipschitz(2.0), I),
              from_function(["x1", "x0"], Lipschitz(1), Box.unit(2))):
        assert check_approximability(U, eps, U.approx.delta(eps), 1000, seed=3).passed


def test_function_delta():
    U = from_function("x0*x0", Lipschitz(2.0), I)
    assert U.approx.delta(0.1) == pytest.approx(0.05)
    V = from_function("0.5*x0", Lipschitz(0.5), I)
    assert V.approx.delta(0.1) == pytest.approx(0.1)


def test_product_maps(figure1):
    ident = from_function("x0", Lipschitz(1), I)
    P = product(ident, ident)
    assert P.select([0.3, 0.7]) == pytest.approx([0.3, 0.7])
    F = product(figure1, figure1)
    a = figure1.graph_distance([0.25], [0.1])
    b = figure1.graph_distance([0.75], [0.7])
    assert F.graph_distance([0.25, 0.75], [0.1, 0.7]) == max(a, b)
    assert check_approximability(F, 0.1, 0.1, 1000).passed
    assert F.approx.delta(0.1) == 0.1


def test_product_distance_is_componentwise_max():
    U1 = from_function("1 - x0", Lipschitz(1), I)
    U2 = from_function("x0*x0", Lipschitz(2), I)
    P = product(U1, U2)
    rng = np.random.default_rng(5)
    Z, W = rng.random((20, 2)), rng.random((20, 2))
    ours = P.graph_distance_many(Z, W)
    ref = np.maximum(U1.graph_distance_many(Z[:, :1], W[:, :1]), U2.graph_distance_many(Z[:, 1:], W[:, 1:]))
    assert np.array_equal(ours, ref)


def test_product_moduli_and_mixing_error():
    U1 = from_function("x0", Lipschitz(1), I)
    U2 = from_function("x0*x0", Lipschitz(2), I)
    assert product(U1, U2).approx.delta(0.1) == pytest.approx(min(U1.approx.delta(0.1), U2.approx.delta(0.1)))
    axes = (np.linspace(0, 1, 11),)

    def provider(eps):
        return WeakApproxData(eps, eps / 2, axes, axes[0][:, None])

    W = from_function("x0", Lipschitz(1), I)
    W.approx = WeaklyApproximable(provider)
    with pytest.raises(SetValuedError):
        product(U1, W)


def test_weak_data_contract():
    axes = (np.linspace(0, 1, 11),)
    with pytest.raises(SetValuedError):
        WeakApproxData(0.1, 0.1, axes, axes[0][:, None])
    with pytest.raises(SetValuedError):
        WeakApproxData(0.2, 0.05, axes, axes[0][:, None])  # spacing 0.1 > delta
    with pytest.raises(SetValuedError):
        WeakApproxData(0.2, 0.1, axes, np.zeros((5, 1)))
    d = WeakApproxData(0.3, 0.1, axes, axes[0][:, None])
    assert d.net.shape == (11, 1)
    assert d.selections((3,))[0, 0] == pytest.approx(0.3)


def test_grid_table_factors():
    rng = np.random.default_rng(6)
    a, b = rng.random((4, 1)), rng.random((3, 5, 2))
    T = GridTable.dense(a).product(GridTable.dense(b))
    dense = T.to_array()
    assert dense.shape == (4, 3, 5, 3)
    assert np.array_equal(dense[2, 1, 4], np.concatenate([a[2], b[1, 4]]))
    order = [2, 0, 1]
    assert np.array_equal(T.transpose(order).to_array(), np.transpose(dense, order + [3]))
    idx = [np.array([0, 3]), np.array([2]), np.array([1, 1, 4])]
    assert np.array_equal(T.subgrid(idx).to_array(), dense[np.ix_(*idx)])
    J = T.jumps()
    assert J[0, 0] == np.abs(np.diff(a[:, 0])).max() and J[1, 0] == 0


def test_permuted_map():
    U = from_function(["x1", "0.5*x0"], Lipschitz(1), Box.unit(2))
    P = permute_inputs(U, [1, 0])
    assert P.select([0.2, 0.8]) == pytest.approx(U.select([0.8, 0.2]))
    assert P.graph_distance([0.2, 0.8], U.select([0.8, 0.2])) <= U.graph_tol


def test_table_modulus():
    m = Table(((0.1, 0.05), (0.2, 0.1)))
    assert m(0.15) == 0.05
    assert m(0.05) == pytest.approx(0.025)
    assert m(1.0) == 0.1
    with pytest.raises(ValueError):
        Table(((0.1, 0.2), (0.2, 0.1)))
