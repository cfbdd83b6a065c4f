import numpy as np
import pytest

from mpcc_opt.model import (
    BoundSide,
    BoundsSpec,
    ComplementarityPair,
    DegenerateNormalizationError,
    FixedGrid,
    FreeDuration,
    OCPDefinition,
    OCPInfo,
    Trajectory,
    nrmse,
    validate_definition,
)
from mpcc_opt.problems.double_integrator import double_integrator_ocp


def _traj(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0] - 1
    return Trajectory(np.linspace(0, 1, n + 1), x, np.zeros((n, x.shape[1])), np.zeros((n, 0)),
                      np.zeros((n, 0)), np.zeros(0))


def _small(n_p=0, y_lb=0.0, **kw):
    info = OCPInfo(1, 2, 0, n_p, 1, 4, FixedGrid.uniform(1.0, 4))
    bounds = BoundsSpec.free(1, 2, 0, y_lb=[y_lb, 0.0])
    return OCPDefinition(
        info=info,
        bounds=bounds,
        initial_state=np.zeros(1),
        dynamics=lambda xd, x, y, u, p: [xd[0] - y[0], y[0] - x[0] - 1],
        complementarity=[ComplementarityPair(0, 1, BoundSide.LOWER, BoundSide.LOWER)],
        initial_params=np.zeros(n_p) if n_p else None,
        **kw,
    )


def test_double_integrator_is_valid():
    assert validate_definition(double_integrator_ocp()) == []


def test_missing_parameter_bounds():
    report = validate_definition(_small(n_p=1))
    assert any("missing parameter bounds" in r for r in report)


def test_nonfinite_complementarity_bound():
    report = validate_definition(_small(y_lb=-np.inf))
    assert any("non-finite complementarity bound" in r for r in report)


def test_validation_is_repeatable():
    d = _small(n_p=1)
    assert validate_definition(d) == validate_definition(d)


def test_wrong_residual_length():
    d = _small()
    d.dynamics = lambda xd, x, y, u, p: [xd[0]]
    assert any("residuals" in r for r in validate_definition(d))


def test_fixed_grid_and_free_duration_checks():
    d = double_integrator_ocp()
    d.info = OCPInfo(2, 0, 1, 0, 0, 20, FixedGrid.uniform(1.0, 19))
    assert validate_definition(d)
    d.info = OCPInfo(2, 0, 1, 0, 0, 20, FreeDuration(0.0, 1.0))
    assert any("positive" in r for r in validate_definition(d))


def test_nrmse_examples():
    base = np.column_stack([np.linspace(0, 1, 11), np.linspace(0, 1, 11)])
    obs = _traj(base)
    assert nrmse(obs, obs) == 0.0
    one = _traj(base[:, :1])
    assert nrmse(one, _traj(base[:, :1] + 0.1)) == pytest.approx(0.1)
    assert nrmse(obs, _traj(base + [0.1, 0.3])) == pytest.approx(0.2)


def test_nrmse_affine_invariance(rng):
    a = rng.standard_normal((30, 2))
    b = a + 0.05 * rng.standard_normal((30, 2))
    ref = nrmse(_traj(a), _traj(b))
    assert nrmse(_traj(3 * a - 2), _traj(3 * b - 2)) == pytest.approx(ref, rel=1e-12)


def test_nrmse_zero_range():
    x = np.ones((5, 1))
    with pytest.raises(DegenerateNormalizationError):
        nrmse(_traj(x), _traj(x))


def test_trajectory_shape_checks():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((3, 1)), np.zeros((1, 1)), np.zeros((1, 0)),
                   np.zeros((1, 0)), np.zeros(0))
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((1, 0)),
                   np.zeros((1, 0)), np.zeros(0))
