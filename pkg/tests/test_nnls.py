import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import nnls as scipy_nnls

from gaunlearn.errors import SolverError
from gaunlearn.nnls import nnls

STEP = 1e-3
GRID = np.arange(0.0, 3.0 + STEP / 2, STEP)


def grid_nnls(A, b):
    """Exhaustive search over [0,3]^m on a 1e-3 grid.

    The first m-1 coordinates are enumerated; the objective is quadratic in the
    last one, so its best grid value is one of the two grid points around the
    clipped unconstrained minimizer.
    """
    m = A.shape[1]
    heads = np.stack(np.meshgrid(*([GRID] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1)
    r = b[None, :] - heads @ A[:, :-1].T
    a = A[:, -1]
    t = np.clip(r @ a / (a @ a), 0.0, 3.0)
    best = None
    for tail in (np.floor(t / STEP) * STEP, np.ceil(t / STEP) * STEP):
        tail = np.clip(tail, 0.0, 3.0)
        cost = np.sum((r - tail[:, None] * a[None, :]) ** 2, axis=1)
        i = int(np.argmin(cost))
        if best is None or cost[i] < best[0]:
            best = (cost[i], np.append(heads[i], tail[i]))
    return best[1]


def well_conditioned(rng, p, m):
    while True:
        A = rng.standard_normal((p, m))
        if np.linalg.cond(A) < 4:
            return A


@pytest.mark.parametrize("seed", range(6))
def test_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    m = 2 + seed % 2
    A = well_conditioned(rng, 3, m)
    lam = rng.uniform(0, 2.5, m)
    lam[rng.integers(m)] = 0.0
    b = A @ lam + 0.3 * rng.standard_normal(3)
    x = nnls(A, b).x
    if np.any(x > 3):
        pytest.skip("minimizer outside the search box")
    assert np.allclose(x, grid_nnls(A, b), atol=2e-3)


@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 30))
def test_matches_scipy(seed, m, p):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, m))
    b = rng.standard_normal(p)
    ours = nnls(A, b)
    ref, ref_res = scipy_nnls(A, b)
    assert ours.residual == pytest.approx(ref_res, rel=1e-7, abs=1e-9)
    assert np.all(ours.x >= 0)
    if np.linalg.matrix_rank(A) == m:
        assert np.allclose(ours.x, ref, atol=1e-7)


@given(st.integers(0, 10_000))
def test_kkt_conditions(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((20, 6))
    b = rng.standard_normal(20)
    x = nnls(A, b).x
    grad = A.T @ (b - A @ x)
    assert np.all(grad <= 1e-9)
    assert np.all(np.abs(grad[x > 0]) <= 1e-9)


def test_zero_target():
    res = nnls(np.eye(3), np.zeros(3))
    assert np.array_equal(res.x, np.zeros(3)) and res.iterations == 0


def test_exact_interior_solution():
    assert np.allclose(nnls(np.eye(2), np.array([1.0, 2.0])).x, [1.0, 2.0])


def test_lowest_index_enters_first():
    # duplicate columns: the tie goes to the first one
    A = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert np.array_equal(nnls(A, np.array([1.0, 0.0])).x, [1.0, 0.0])


def test_iteration_cap():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((10, 5))
    with pytest.raises(SolverError, match="residual"):
        nnls(A, A @ np.ones(5), max_iter=1)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        nnls(np.eye(3), np.ones(2))
