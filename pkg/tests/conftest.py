import pytest
from hypothesis import settings

from approxfix.geometry import Box
from approxfix.modulus import Lipschitz
from approxfix.setvalued import from_polygonal_graph

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

FIGURE1 = [[[0.0, 0.0], [0.5, 0.0]], [[0.5, 0.0], [0.5, 1.0]], [[0.5, 1.0], [1.0, 1.0]]]
JUMP = [[[0.0, 0.0], [0.5, 0.0]], [[0.5, 1.0], [1.0, 1.0]]]


@pytest.fixture(scope="session")
def figure1():
    return from_polygonal_graph(FIGURE1, Box.unit(1), Lipschitz(1.0))


def lapp_violations(trials, seed=0, eps=0.1):
    """Random trials of the multi-point approximation lemma on polynomial function maps.

    Each trial draws a map on [0,1] or [0,1]^2 with an interval-certified
    Lipschitz constant, k points pairwise within multi_point_delta of each
    other, and simplex weights; the graph distance of the averaged graph point
    is measured by a dense grid scan, which can only overestimate it.
    """
    import numpy as np

    from approxfix.expr import evaluate_batch, lipschitz_modulus, parse
    from approxfix.kakutani import multi_point_delta
    from approxfix.setvalued import from_function

    rng = np.random.default_rng(seed)
    scan1 = np.linspace(0, 1, 20001)[:, None]
    g = np.linspace(0, 1, 401)
    scan2 = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    bad = []
    for trial in range(trials):
        n = int(rng.integers(1, 3))
        texts = []
        for _ in range(n):
            c = rng.random(4)
            c = [float(v) for v in c / max(c.sum(), 1.0)]
            i, j = rng.integers(0, n, 2)
            texts.append(f"{c[0]!r} + {c[1]!r}*x{i} + {c[2]!r}*x{i}*x{j} + {c[3]!r}*x{j}*x{j}*x{j}")
        exprs = [parse(t) for t in texts]
        box = Box.unit(n)
        L = max(lipschitz_modulus(e, box).L for e in exprs)
        U = from_function(texts, Lipschitz(L), box)
        k = int(rng.integers(2, 5))
        d = multi_point_delta(U.approx.delta, k, eps)
        centre = rng.random(n) * (1 - d) + d / 2
        X = np.clip(centre + (rng.random((k, n)) - 0.5) * d * (1 - 1e-9), 0, 1)
        t = rng.dirichlet(np.ones(k))
        z = t @ X
        u = t @ U.select_many(X)
        scan = scan1 if n == 1 else scan2
        F = np.stack([evaluate_batch(e, scan) for e in exprs], axis=1)
        dist = float(np.min(np.maximum(np.max(np.abs(scan - z), axis=1), np.max(np.abs(F - u), axis=1))))
        if not dist < eps:
            bad.append((trial, texts, X.tolist(), t.tolist(), dist))
    return bad
