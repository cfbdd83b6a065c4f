import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcc_opt.model import (
    BoundSide,
    BoundsSpec,
    ComplementarityPair,
    FixedGrid,
    FreeDuration,
    OCPDefinition,
    OCPInfo,
    Trajectory,
)
from mpcc_opt.problems.double_integrator import double_integrator_ocp
from mpcc_opt.transcription import (
    EQUALITY,
    RELAXABLE,
    Phase,
    PhaseSequence,
    StructuralError,
    UnsupportedFeatureError,
    alpha_sign,
    build_minimum_time,
    build_multiphase,
    build_nlp,
    complementarity_residual,
    complementarity_terms,
    extract_trajectory,
    initial_guess_vector,
    make_mode,
    pack_trajectory,
)

L, U = BoundSide.LOWER, BoundSide.UPPER


def test_alpha_sign():
    assert alpha_sign(L, L) == 1
    assert alpha_sign(L, U) == -1
    assert alpha_sign(U, L) == -1
    assert alpha_sign(U, U) == 1


def test_complementarity_terms_examples():
    b = BoundsSpec.free(0, 2, 0, y_lb=[0, 0])
    pair = [ComplementarityPair(0, 1, L, L)]
    assert complementarity_terms(pair, np.array([0.5, 0.0]), b)[0] == 0
    assert complementarity_terms(pair, np.array([0.5, 0.2]), b)[0] == pytest.approx(0.1)
    b1 = BoundsSpec.free(0, 1, 0, y_lb=[0.0], y_ub=[1.0])
    assert complementarity_terms([ComplementarityPair(0, 0, L, U)], np.array([0.3]), b1)[0] == pytest.approx(0.21)


def test_complementarity_terms_nonfinite_bound():
    b = BoundsSpec.free(0, 2, 0)
    with pytest.raises(ValueError):
        complementarity_terms([ComplementarityPair(0, 1, L, L)], np.array([0.5, 0.2]), b)


@settings(max_examples=80, deadline=None)
@given(st.floats(-2, 2), st.floats(0.01, 3), st.floats(0, 1), st.floats(0, 1),
       st.sampled_from([L, U]), st.sampled_from([L, U]))
def test_terms_nonnegative_inside_bounds(lo, width, s, t, sa, sb):
    b = BoundsSpec.free(0, 2, 0, y_lb=[lo, lo], y_ub=[lo + width, lo + width])
    y = np.array([lo + s * width, lo + t * width])
    assert complementarity_terms([ComplementarityPair(0, 1, sa, sb)], y, b)[0] >= 0


def _toy_ocp(n_e=4, mode_cost=None):
    # x' = y0 - y1 with y1 - y0 = x - 0.5 and 0 <= y0 _|_ y1 >= 0
    bounds = BoundsSpec.free(1, 2, 0, y_lb=[0.0, 0.0])
    return OCPDefinition(
        info=OCPInfo(1, 2, 0, 0, 1, n_e, FixedGrid.uniform(1.0, n_e)),
        bounds=bounds,
        initial_state=np.zeros(1),
        dynamics=lambda xd, x, y, u, p: [xd[0] - y[0] + y[1], y[1] - y[0] - x[0] + 0.5],
        running_cost=mode_cost,
        complementarity=[ComplementarityPair(0, 1, L, L)],
        initial_guess=lambda t: (np.zeros(1), np.zeros(1), np.array([0.1, 0.1]), np.zeros(0)),
    )


def test_double_integrator_counts():
    nlp, layout = build_nlp(double_integrator_ocp(n_e=3), make_mode("per-pair-fixed"))
    assert nlp.n == layout.n_z == 15
    # dynamics rows plus one continuity block per element, the first tied to the known x_0
    assert int((nlp.row_kind == EQUALITY).sum()) == 3 * 2 + 3 * 2
    assert int((nlp.row_kind == RELAXABLE).sum()) == 0


def test_relaxable_counts():
    d = _toy_ocp()
    assert int((build_nlp(d, make_mode("per-pair-fixed"))[0].row_kind == RELAXABLE).sum()) == 4
    assert int((build_nlp(d, make_mode("aggregated-fixed"))[0].row_kind == RELAXABLE).sum()) == 4
    assert int((build_nlp(d, make_mode("penalty", rho=1.0))[0].row_kind == RELAXABLE).sum()) == 0


def test_penalty_objective_adds_products():
    d = _toy_ocp(mode_cost=lambda x, y, u, p: x[0] ** 2)
    nlp1, lay = build_nlp(d, make_mode("per-pair-fixed"))
    nlp5, _ = build_nlp(d, make_mode("penalty", rho=1.0))
    z = initial_guess_vector(d, lay)
    y = np.zeros((4, 2))
    y[:, 0] = [0.1, 0.0, 0.2, 0.0]
    y[:, 1] = [1.0, 0.0, 1.0, 0.0]
    z[lay.y_idx] = y
    assert nlp5.objective(z) - nlp1.objective(z) == pytest.approx(0.3, abs=1e-14)


def test_object_hooks_rejected():
    d = double_integrator_ocp()
    d.object_hooks = {"n_objects": 1}
    with pytest.raises(UnsupportedFeatureError):
        build_nlp(d)


def test_invalid_definition_rejected():
    d = double_integrator_ocp()
    d.initial_state = np.zeros(3)
    with pytest.raises(StructuralError):
        build_nlp(d)


def test_jacobian_matches_fd(rng):
    d = double_integrator_ocp(n_e=5)
    nlp, layout = build_nlp(d)
    z = rng.standard_normal(nlp.n)
    assert np.allclose(nlp.jacobian(z).toarray(), nlp.jacobian_fd(z), atol=1e-6)


def test_element_coupling_is_banded():
    d = _toy_ocp(n_e=6)
    nlp, layout = build_nlp(d, make_mode("per-pair-fixed"))
    J = nlp.jacobian(np.ones(nlp.n)).tocoo()
    col_stage = nlp.var_stage[J.col]
    row_stage = nlp.row_stage[J.row]
    inner = (col_stage >= 0) & (row_stage >= 0)
    assert np.all(np.abs(col_stage[inner] - row_stage[inner]) <= 1)


def test_minimum_time_substitution_identity(rng):
    fixed = double_integrator_ocp(n_e=10, T=1.0)
    free = double_integrator_ocp(n_e=10)
    free.info = OCPInfo(2, 0, 1, 0, 0, 10, FreeDuration(1.0, 1.0))
    free.minimum_time = True
    nlp_a, lay_a = build_nlp(fixed)
    nlp_b, lay_b = build_minimum_time(free)
    z_a = rng.standard_normal(nlp_a.n)
    traj = extract_trajectory(lay_a, z_a)
    z_b = pack_trajectory(lay_b, traj)
    assert np.allclose(nlp_a.constraints(z_a), nlp_b.constraints(z_b), atol=1e-14)
    # T sits in every continuity row
    t = lay_b.t_indices[0]
    J = nlp_b.jacobian(z_b).tocsc()
    rows_with_t = set(J[:, t].nonzero()[0])
    assert len(rows_with_t) >= 10 * 2


def test_minimum_time_bad_lower_bound():
    d = double_integrator_ocp()
    d.info = OCPInfo(2, 0, 1, 0, 0, 20, FreeDuration(-1.0, 1.0))
    d.minimum_time = True
    with pytest.raises((StructuralError, ValueError)):
        build_minimum_time(d)


def _integrator_phase(n_e):
    return OCPDefinition(
        info=OCPInfo(1, 0, 1, 0, 0, n_e, FreeDuration(0.1, 2.0)),
        bounds=BoundsSpec.free(1, 0, 1, u_lb=[-1.0], u_ub=[1.0]),
        initial_state=np.zeros(1),
        dynamics=lambda xd, x, y, u, p: [xd[0] - u[0]],
        initial_guess=lambda t: (np.zeros(1), np.zeros(1), np.zeros(0), np.zeros(1)),
        minimum_time=True,
    )


def test_multiphase_boundary_count():
    single, _ = build_nlp(_integrator_phase(5))
    n_single = int((single.row_kind == EQUALITY).sum())
    seq = PhaseSequence([Phase(_integrator_phase(5)), Phase(_integrator_phase(5))])
    nlp, layout = build_multiphase(seq)
    assert int((nlp.row_kind == EQUALITY).sum()) == 2 * n_single + 1


def test_multiphase_incompatible_carry():
    other = _integrator_phase(5)
    other.info = OCPInfo(1, 0, 1, 0, 0, 5, FreeDuration(0.1, 2.0))
    seq = PhaseSequence([Phase(_integrator_phase(5)), Phase(other)], carry=[[(0, 3)]])
    with pytest.raises((StructuralError, ValueError)):
        build_multiphase(seq)


def test_initial_guess_rules():
    d = double_integrator_ocp(n_e=4)
    d.initial_guess = lambda t: (np.array([1.0, 0.0]), np.zeros(2), np.zeros(0), np.zeros(1))
    d.bounds.x_final_lb = None
    d.bounds.x_final_ub = None
    nlp, lay = build_nlp(d)
    z = initial_guess_vector(d, lay)
    assert np.all(z[lay.x_idx] == [1.0, 0.0])

    b = BoundsSpec.free(1, 0, 1, x_lb=[0.0], u_ub=[0.5])
    e = OCPDefinition(
        info=OCPInfo(1, 0, 1, 0, 0, 3, FixedGrid.uniform(1.0, 3)),
        bounds=b,
        initial_state=np.ones(1),
        dynamics=lambda xd, x, y, u, p: [xd[0] - u[0]],
        initial_guess=lambda t: (np.zeros(1), np.zeros(1), np.zeros(0), np.array([2.0])),
    )
    nlp, lay = build_nlp(e)
    z = initial_guess_vector(e, lay)
    assert np.allclose(z[lay.x_idx], 0.01)
    assert np.all(z[lay.u_idx] < 0.5)
    assert np.allclose(z[lay.u_idx], 0.5 - 0.01 * 0.5) or np.all(z[lay.u_idx] <= 0.495 + 1e-15)


def test_pack_extract_round_trip(rng):
    d = _toy_ocp(n_e=5)
    nlp, lay = build_nlp(d)
    z = rng.standard_normal(nlp.n)
    traj = extract_trajectory(lay, z)
    assert np.array_equal(pack_trajectory(lay, traj), z)
    assert np.array_equal(traj.x[0], d.initial_state)
    with pytest.raises(ValueError):
        extract_trajectory(lay, z[:-1])


def test_complementarity_residual_brute_force(rng):
    d = _toy_ocp(n_e=6)
    nlp, lay = build_nlp(d)
    z = np.abs(rng.standard_normal(nlp.n))
    traj = extract_trajectory(lay, z)
    brute = max(0.0, max(traj.y[i, 0] * traj.y[i, 1] for i in range(6)))
    assert complementarity_residual(traj, d) == pytest.approx(brute, rel=1e-15)
    traj.y[:, 1] = 0.0
    assert complementarity_residual(traj, d) == 0.0
    one = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), np.zeros((1, 1)), np.array([[0.5, 0.2]]),
                     np.zeros((1, 0)), np.zeros(0))
    assert complementarity_residual(one, d) == pytest.approx(0.1)


def test_aggregated_implied_by_per_pair(rng):
    # two pairs per element: per-pair feasible at delta -> aggregated feasible at 2*delta
    bounds = BoundsSpec.free(1, 4, 0, y_lb=[0, 0, 0, 0])
    d = OCPDefinition(
        info=OCPInfo(1, 4, 0, 0, 2, 3, FixedGrid.uniform(1.0, 3)),
        bounds=bounds,
        initial_state=np.zeros(1),
        dynamics=lambda xd, x, y, u, p: [xd[0] - y[0] + y[1] - y[2] + y[3], y[1] - y[0] - x[0],
                                         y[3] - y[2] - 0.1],
        complementarity=[ComplementarityPair(0, 1, L, L), ComplementarityPair(2, 3, L, L)],
    )
    delta = 1e-3
    per, lay = build_nlp(d, make_mode("per-pair-fixed", delta=delta))
    agg, _ = build_nlp(d, make_mode("aggregated-fixed", delta=2 * delta))
    for _ in range(50):
        z = np.abs(rng.standard_normal(per.n)) * 0.05
        if np.all(per.constraints(z)[per.relaxable_rows] <= delta):
            assert np.all(agg.constraints(z)[agg.relaxable_rows] <= 2 * delta)
