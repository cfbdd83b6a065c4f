import numpy as np
import pytest

from mpcc_opt.autodiff import record
from mpcc_opt.ipsolver import (
    Inertia,
    Iterate,
    KKTSystem,
    SolverOptions,
    Status,
    fraction_to_boundary,
    kkt_residual,
    newton_direction,
    solve,
    update_barrier,
)
from mpcc_opt.problems.toy import toy_branch_oracle, toy_nlp
from mpcc_opt.transcription import EQUALITY, Block, NLPProblem, make_mode


def nlp_of(f, n, lb=None, ub=None, eq=None, m=0):
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)
    idx = np.arange(n)[None, :]
    obj = [Block(record(f, n, "f"), idx, 1.0, 0.0)]
    cons = [] if eq is None else [Block(record(eq, n, "c"), idx, 1.0, 0.0, np.arange(m)[None, :])]
    return NLPProblem(n, lb, ub, [EQUALITY] * m, obj, cons, np.zeros(n, np.int64), np.zeros(m, np.int64))


def test_interior_optimum():
    sol = solve(nlp_of(lambda x: (x[0] - 1) ** 2, 1, lb=[0.0]), [0.5])
    assert sol.status is Status.OPTIMAL
    assert sol.z[0] == pytest.approx(1.0, abs=1e-7)


def test_active_bound():
    opts = SolverOptions()
    sol = solve(nlp_of(lambda x: x[0], 1, lb=[0.0]), [0.5], opts)
    assert sol.ok
    assert sol.z[0] <= opts.tol
    assert sol.iterate.zl[0] == pytest.approx(1.0, abs=1e-6)


def test_equality_constrained_qp():
    # min x^2 + y^2 s.t. x + y = 1 -> (0.5, 0.5)
    sol = solve(nlp_of(lambda x: x[0] ** 2 + x[1] ** 2, 2, eq=lambda x: [x[0] + x[1] - 1], m=1), [0.0, 0.0])
    assert sol.ok
    assert np.allclose(sol.z, 0.5, atol=1e-8)
    assert sol.eq_violation <= 1e-8


@pytest.mark.parametrize("name", ["per-pair-fixed", "aggregated-fixed", "per-pair-barrier",
                                  "aggregated-barrier", "penalty"])
def test_toy_mpcc(name):
    _, f_star = toy_branch_oracle()
    nlp = toy_nlp(make_mode(name, delta=1e-10, rho=10.0))
    sol = solve(nlp, [0.8, 0.2])
    assert sol.ok
    assert sol.objective == pytest.approx(f_star, abs=1e-6)
    assert sol.compl_residual <= 1e-8


def test_kkt_residual_examples():
    nlp = nlp_of(lambda x: (x[0] - 1) ** 2, 1)
    it = Iterate(np.array([1.0]), np.zeros(0), np.zeros(0), np.zeros(1), np.zeros(1), np.zeros(0), 0.0, 0.0)
    assert kkt_residual(nlp, it, 0.0) == 0.0
    mu = 0.01
    nlp = nlp_of(lambda x: x[0], 1, lb=[0.0])
    it = Iterate(np.array([1.0]), np.zeros(0), np.zeros(0), np.array([mu]), np.zeros(1), np.zeros(0), mu, 0.0)
    assert kkt_residual(nlp, it, mu) == pytest.approx(abs(1 - mu))


def test_newton_step_on_quadratic():
    nlp = nlp_of(lambda x: (x[0] - 2) ** 2 + 3 * (x[1] + 1) ** 2 + x[0] * x[1], 2)
    it = Iterate(np.zeros(2), np.zeros(0), np.zeros(0), np.zeros(2), np.zeros(2), np.zeros(0), 0.0, 0.0)
    d = newton_direction(nlp, it, 0.0)
    x = d.dz
    H = np.array([[2.0, 1.0], [1.0, 6.0]])
    assert np.allclose(H @ x, [4.0, -6.0])
    assert d.delta_w == 0.0


def test_inertia_correction_on_indefinite():
    nlp = nlp_of(lambda x: 0.5 * x[0] ** 2 - 0.5 * x[1] ** 2, 2)
    it = Iterate(np.array([0.3, 0.2]), np.zeros(0), np.zeros(0), np.zeros(2), np.zeros(2), np.zeros(0), 0.0, 0.0)
    d = newton_direction(nlp, it, 0.0)
    assert d.delta_w > 1.0


def test_kkt_solve_residual(rng):
    n, m = 20, 6
    M = rng.standard_normal((n, n))
    H = M @ M.T + np.eye(n)
    A = rng.standard_normal((m, n))
    K = np.block([[H, A.T], [A, -1e-8 * np.eye(m)]])
    rows, cols = np.nonzero(K)
    for use_numba in (True, False):
        kkt = KKTSystem(np.zeros(n + m, np.int64), rows, cols, dense=True, use_numba=use_numba)
        inertia = kkt.factor(K[rows, cols])
        assert inertia == Inertia(n, m, 0)
        b = rng.standard_normal(n + m)
        x, rel = kkt.solve_refined(b)
        assert np.abs(K @ x - b).max() <= 1e-10 * np.abs(b).max()


def test_block_kkt_matches_dense(rng):
    # three stages of 4 unknowns, tridiagonal coupling, one border unknown
    s, N = 4, 3
    n = s * N + 1
    stage = np.concatenate([np.repeat(np.arange(N), s), [-1]])
    K = np.zeros((n, n))
    for b in range(N):
        o = b * s
        M = rng.standard_normal((s, s))
        K[o:o + s, o:o + s] = M + M.T + (2 * s if b % 2 == 0 else -2 * s) * np.eye(s)
        if b:
            C = rng.standard_normal((s, s))
            K[o:o + s, o - s:o] = C
            K[o - s:o, o:o + s] = C.T
    K[-1, :-1] = rng.standard_normal(n - 1)
    K[:-1, -1] = K[-1, :-1]
    K[-1, -1] = 3.0
    rows, cols = np.nonzero(K)
    ev = np.linalg.eigvalsh(K)
    want = Inertia(int((ev > 0).sum()), int((ev < 0).sum()), 0)
    rhs = rng.standard_normal(n)
    for use_numba in (True, False):
        kkt = KKTSystem(stage, rows, cols, use_numba=use_numba)
        assert not kkt.dense
        assert kkt.factor(K[rows, cols]) == want
        assert np.allclose(K @ kkt.solve(rhs), rhs, atol=1e-10)


def test_fraction_to_boundary_examples():
    assert fraction_to_boundary([1.0], [-2.0], [0.0], [np.inf], 0.995) == pytest.approx(0.4975)
    assert fraction_to_boundary([1.0, 2.0], [1.0, 3.0], [0.0, 0.0], [np.inf, np.inf], 0.99) == 1.0
    v = np.array([1.0, 2.0, 0.5])
    d = np.array([-4.0, -1.0, 2.0])
    lo = np.zeros(3)
    hi = np.array([np.inf, np.inf, 1.0])
    per = [0.99 * 1 / 4, 0.99 * 2 / 1, 0.99 * 0.5 / 2]
    assert fraction_to_boundary(v, d, lo, hi, 0.99) == pytest.approx(min(1.0, *per))


def test_update_barrier_examples():
    o = SolverOptions()
    assert update_barrier(0.1, o) == pytest.approx(0.02)
    assert update_barrier(1e-4, o) == pytest.approx(1e-6)
    assert update_barrier(o.tol / 10, o) == o.tol / 10


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(kappa_mu=1.5)
    with pytest.raises(ValueError):
        SolverOptions(theta_mu=2.0)
    with pytest.raises(ValueError):
        SolverOptions().with_overrides(bogus=1)


def test_log_invariants():
    nlp = toy_nlp(make_mode("per-pair-barrier"))
    sol = solve(nlp, [0.8, 0.2])
    mus = [row["mu"] for row in sol.log]
    assert all(b <= a for a, b in zip(mus, mus[1:]))
    assert all(row["delta"] == row["mu"] for row in sol.log)
    nus = [row["nu"] for row in sol.log]
    assert all(b >= a for a, b in zip(nus, nus[1:]))


def test_deterministic_logs():
    a = solve(toy_nlp(make_mode("aggregated-barrier")), [0.8, 0.2])
    b = solve(toy_nlp(make_mode("aggregated-barrier")), [0.8, 0.2])
    assert a.log == b.log


def test_max_iter_status():
    sol = solve(toy_nlp(make_mode("per-pair-barrier")), [0.8, 0.2], SolverOptions(max_iter=2))
    assert sol.status is Status.MAX_ITER
