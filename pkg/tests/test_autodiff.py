import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcc_opt.autodiff import (
    EvaluationError,
    RecordingError,
    finite_difference_jacobian,
    gradient,
    hessian_lagrangian,
    jacobian,
    kernels,
    record,
    replay,
    sparsity,
)
from mpcc_opt.autodiff.derivatives import _identity_seeds
from mpcc_opt.autodiff.ops import cos, exp, log, sin, sqrt, tan


def full(h):
    h = h.toarray()
    return h + np.tril(h, -1).T


def test_replay_examples():
    assert replay(record(lambda x: x[0] ** 2 + x[1], 2), [3, 1])[0] == 10
    assert replay(record(lambda x: sin(x[0]) * x[1], 2), [0, 5])[0] == 0


def test_unsupported_constructs():
    with pytest.raises(RecordingError, match="branching"):
        record(lambda x: x[0] if x[0] > 0 else x[1], 2)
    with pytest.raises(RecordingError, match="arctan"):
        record(lambda x: np.arctan(x[0]), 1)


def test_gradient_examples():
    assert np.array_equal(gradient(record(lambda x: x[0] ** 2 + x[1], 2), [3, 1]), [6, 1])
    assert np.array_equal(gradient(record(lambda x: x[0] * x[1], 2), [2, 5]), [5, 2])
    t = record(lambda x: exp(x[0]) * sin(x[1]), 2)
    p = np.array([0.3, 0.7])
    fd = finite_difference_jacobian(lambda v: replay(t, v), p, 1e-6)[0]
    assert np.allclose(gradient(t, p), fd, rtol=1e-6, atol=1e-9)


def test_domain_error():
    t = record(lambda x: log(x[0]), 1)
    with pytest.raises(EvaluationError):
        gradient(t, [-1.0])


def test_jacobian_examples():
    t = record(lambda x: [x[0] + x[1], x[1] ** 2], 2)
    assert np.array_equal(jacobian(t, [1, 3]).toarray(), [[1, 1], [0, 6]])
    assert list(zip(t.jac_pattern.rows, t.jac_pattern.cols)) == [(0, 0), (0, 1), (1, 1)]
    ident = record(lambda x: [x[0], x[1], x[2]], 3)
    assert np.array_equal(jacobian(ident, [4, 5, 6]).toarray(), np.eye(3))


def test_hessian_examples():
    f = record(lambda x: x[0] ** 2 * x[1], 2)
    c = record(lambda x: [x[0] * x[1]], 2)
    h = full(hessian_lagrangian(f, c, [1, 1], 1.0, [2.0]))
    assert np.array_equal(h, [[2, 4], [4, 0]])
    lin_f = record(lambda x: 2 * x[0] - x[1], 2)
    lin_c = record(lambda x: [x[0] + x[1]], 2)
    h = hessian_lagrangian(lin_f, lin_c, [1, 1], 1.0, [3.0])
    assert h.nnz == 0


def test_sparsity_examples():
    pat = sparsity(record(lambda x: [x[0], x[2]], 3))
    assert list(zip(pat.rows, pat.cols)) == [(0, 0), (1, 2)]
    pat = sparsity(record(lambda x: [x[0] * 0 + x[1]], 2))
    assert (0, 1) in set(zip(pat.rows, pat.cols))


def _mixed(x):
    return [
        sin(x[0]) * x[1] + exp(0.3 * x[2]),
        x[0] * x[1] / (2.0 + x[2] ** 2),
        sqrt(1.5 + cos(x[1]) ** 2) * tan(0.2 * x[0]),
        log(2.0 + x[0] ** 2) - x[2] ** 3,
    ]


def test_jacobian_and_hessian_against_fd(rng):
    t = record(_mixed, 3)
    obj = record(lambda x: sum(_mixed(x)), 3)
    for _ in range(100):
        p = rng.uniform(-1, 1, 3)
        J = jacobian(t, p).toarray()
        fd = finite_difference_jacobian(lambda v: replay(t, v), p, 1e-6)
        assert np.all(np.abs(J - fd) <= np.maximum(1e-6, 1e-4 * np.abs(J)))
        lam = rng.standard_normal(4)
        H = full(hessian_lagrangian(obj, t, p, 0.7, lam))
        assert np.array_equal(H, H.T)

        def grad_l(v):
            return 0.7 * gradient(obj, v) + jacobian(t, v).toarray().T @ lam

        fdh = finite_difference_jacobian(grad_l, p, 1e-6)
        assert np.allclose(H, fdh, atol=1e-5, rtol=1e-5)
        pat = set(zip(t.jac_pattern.rows, t.jac_pattern.cols))
        nz = set(zip(*np.nonzero(J)))
        assert nz <= pat


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_replay_matches_direct_evaluation(v):
    def f(x):
        return [(x[0] + 1.25) * x[1] - x[0] / 3.0, x[0] * x[0] - 2.0 * x[1]]

    t = record(f, 2)
    direct = np.array(f(np.array(v)))
    assert np.array_equal(replay(t, v), direct)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3))
def test_linear_combination_of_gradients(a, b, s):
    # reverse mode is linear in the seed: grad(s*f) = s*grad(f)
    t = record(lambda x: sin(x[0]) * x[1] ** 2, 2)
    ts = record(lambda x: s * (sin(x[0]) * x[1] ** 2), 2)
    assert np.allclose(gradient(ts, [a, b]), s * gradient(t, [a, b]), rtol=1e-12, atol=1e-12)


def test_numba_and_numpy_kernels_agree(rng):
    t = record(_mixed, 3)
    X = np.ascontiguousarray(rng.uniform(-1, 1, (3, 7)))
    args = (t.op, t.a0, t.a1, t.val)
    Vn = kernels.forward_nb(*args, X)
    Vp = kernels.forward_np(*args, X)
    assert np.allclose(Vn, Vp, rtol=1e-14, atol=0)
    seeds = _identity_seeds(3, 7)
    Dn = kernels.tangent_nb(*args, Vn, seeds)
    Dp = kernels.tangent_np(*args, Vp, seeds)
    assert np.allclose(Dn, Dp, rtol=1e-13, atol=1e-15)
    W = rng.standard_normal((4, 7))
    assert np.allclose(kernels.reverse_nb(*args, Vn, t.outputs, W, 3),
                       kernels.reverse_np(*args, Vp, t.outputs, W, 3), rtol=1e-13, atol=1e-15)
    An, Adn = kernels.second_order_nb(*args, Vn, Dn, t.outputs, W, 3)
    Ap, Adp = kernels.second_order_np(*args, Vp, Dp, t.outputs, W, 3)
    assert np.allclose(Adn, Adp, rtol=1e-12, atol=1e-14)
