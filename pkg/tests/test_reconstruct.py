import itertools
import warnings

import numpy as np
import pytest

from qdtomo import (
    ConditioningWarning,
    CountTable,
    Objective,
    apd_povm,
    build_probe_matrix,
    default_reg_weight,
    kkt_certificate,
    objective_value,
    predict_response,
    project_simplex,
    regularizer_S,
    solve,
    tmd_povm,
)
from qdtomo.fock import ProbeGrid
from qdtomo.reconstruct import InfeasibleError, objective_gradient


def _instance(M=6, N=3, D=12, y=0.01, seed=0):
    rng = np.random.default_rng(seed)
    grid = ProbeGrid.from_arrays(np.geomspace(0.05, 8.0, D))
    F = build_probe_matrix(grid, M)
    P = rng.dirichlet(np.ones(N), size=D)
    return Objective(F, CountTable(grid, P), y), rng


def _random_feasible(rng, shape):
    return rng.dirichlet(np.ones(shape[1]), size=shape[0])


def test_regularizer_examples():
    assert regularizer_S(np.full((5, 2), 0.5)) == 0.0
    col = np.zeros((4, 1))
    col[0] = 1
    assert regularizer_S(col) == 1.0
    theta = apd_povm(basis=10).theta
    naive = 0.0
    for n in range(theta.shape[1]):
        for k in range(theta.shape[0] - 1):
            naive += (theta[k, n] - theta[k + 1, n]) ** 2
    assert abs(regularizer_S(theta) - naive) <= 1e-15


def test_objective_examples():
    grid = ProbeGrid.from_arrays(np.geomspace(0.1, 10, 20))
    F = build_probe_matrix(grid, 8)
    truth = tmd_povm(basis=8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        P = predict_response(truth, F)
    obj = Objective(F, P, 0.0)
    assert objective_value(obj, truth.theta) == 0.0
    zero = np.zeros_like(truth.theta)
    assert objective_value(obj, zero) == pytest.approx(np.sum(P.frequencies**2), rel=1e-15)


def test_objective_quadratic_expansion():
    obj, rng = _instance()
    theta = _random_feasible(rng, (7, 3))
    delta = rng.normal(size=theta.shape)
    t = np.array([-1.0, 0.0, 1.0])
    vals = [objective_value(obj, theta + ti * delta) for ti in t]
    second = vals[0] - 2 * vals[1] + vals[2]  # = f''
    Fd = obj.F @ delta
    analytic = 2 * (np.sum(Fd**2) + obj.reg_weight * regularizer_S(delta))
    assert second == pytest.approx(analytic, rel=1e-9)


def test_gradient_matches_finite_differences():
    obj, rng = _instance(y=0.3)
    h = 1e-6
    for _ in range(10):
        theta = _random_feasible(rng, (7, 3))
        g = objective_gradient(obj, theta)
        fd = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            e = np.zeros_like(theta)
            e[idx] = h
            fd[idx] = (objective_value(obj, theta + e) - objective_value(obj, theta - e)) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_project_simplex():
    np.testing.assert_allclose(project_simplex([0.2, 0.8]), [0.2, 0.8])
    np.testing.assert_array_equal(project_simplex([2.0, 0.0]), [1.0, 0.0])
    v = project_simplex([3.0, -1.0, 0.4, 0.4])
    np.testing.assert_allclose(project_simplex(v), v, atol=1e-15)
    with pytest.raises(ValueError):
        project_simplex(np.ones((2, 2)))


def test_objective_validation():
    obj, _ = _instance()
    with pytest.raises(ValueError):
        Objective(obj.probe_matrix, obj.data, -1.0)
    with pytest.raises(ValueError):
        Objective(obj.probe_matrix, obj.data, np.nan)
    other = CountTable(ProbeGrid.from_arrays([1.0]), [[0.5, 0.25, 0.25]])
    with pytest.raises(ValueError):
        Objective(obj.probe_matrix, other)
    with pytest.raises(ValueError):
        objective_value(obj, np.zeros((3, 3)))
    assert Objective(obj.probe_matrix, obj.data).reg_weight == pytest.approx(default_reg_weight(12, 6))
    assert default_reg_weight(50, 60) == pytest.approx(1e-2 * 50 / 60)


def test_single_outcome_is_immediate():
    grid = ProbeGrid.from_arrays(np.geomspace(0.1, 5, 8))
    obj = Objective(build_probe_matrix(grid, 5), CountTable(grid, np.ones((8, 1))), 0.0)
    rep = solve(obj)
    assert rep.iterations == 0 and rep.converged
    np.testing.assert_array_equal(rep.povm.theta, 1.0)
    assert rep.certificate.stationarity_residual == 0 and rep.certificate.complementarity_residual == 0


def _oracle_min(obj):
    """Brute force for N = 2: enumerate every face of the box in theta^(0)."""
    F, P, y = obj.F, obj.P, obj.reg_weight
    m1 = F.shape[1]
    Dm = np.diff(np.eye(m1), axis=0)
    H = 2 * (F.T @ F) + 2 * y * (Dm.T @ Dm)
    b = F.T @ (P[:, 0] - P[:, 1] + F.sum(axis=1))
    best, arg = np.inf, None
    for state in itertools.product((0, 1, 2), repeat=m1):
        state = np.array(state)
        x = np.where(state == 1, 1.0, 0.0)
        free = state == 2
        if free.any():
            x[free] = np.linalg.solve(H[np.ix_(free, free)], b[free] - H[np.ix_(free, ~free)] @ x[~free])
            if x[free].min() < -1e-12 or x[free].max() > 1 + 1e-12:
                continue
        theta = np.column_stack([np.clip(x, 0, 1), 1 - np.clip(x, 0, 1)])
        f = objective_value(obj, theta)
        if f < best:
            best, arg = f, theta
    return best, arg


@pytest.mark.parametrize("seed", range(5))
def test_solver_matches_bruteforce_and_gap_bounds(seed):
    obj, rng = _instance(M=4, N=2, D=10, y=[0.0, 0.02, 0.5, 0.0, 1e-3][seed], seed=seed)
    rep = solve(obj)
    best, _ = _oracle_min(obj)
    assert rep.converged
    assert rep.objective_value == pytest.approx(best, abs=1e-8)
    assert rep.certificate.gap_bound <= 1e-6
    # the gap bounds suboptimality at an arbitrary feasible point
    theta = _random_feasible(rng, (5, 2))
    cert = kkt_certificate(obj, theta)
    assert cert.gap_bound >= objective_value(obj, theta) - best - 1e-12


def test_certificate_on_perturbed_point():
    obj, _ = _instance(M=4, N=2, D=10, y=0.01, seed=11)
    rep = solve(obj)
    theta = np.array(rep.povm.theta)
    theta[2, 0] += 0.1
    theta = np.vstack([project_simplex(row) for row in theta])
    cert = kkt_certificate(obj, theta)
    assert cert.gap_bound > 0
    assert cert.gap_bound >= objective_value(obj, theta) - rep.objective_value
    for v in cert.to_dict().values():
        assert v >= 0


def test_certificate_at_exact_minimizer():
    grid = ProbeGrid.from_arrays(np.geomspace(0.01, 20, 50))
    F = build_probe_matrix(grid, 30)
    truth = apd_povm(basis=30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        obj = Objective(F, predict_response(truth, F), 0.0)
    cert = kkt_certificate(obj, truth.theta)
    assert max(cert.to_dict().values()) <= 1e-8
    rep = solve(obj)
    assert rep.converged and rep.certificate.stationarity_residual <= 1e-8
    assert rep.certificate.gap_bound <= 1e-7


def test_certificate_rejects_infeasible():
    obj, _ = _instance()
    theta = np.full((7, 3), 1 / 3)
    theta[0, 0] += 1e-6
    with pytest.raises(InfeasibleError, match="violation"):
        kkt_certificate(obj, theta)


def test_history_monotone_and_feasible_without_convergence():
    obj, _ = _instance(M=10, N=4, D=30, y=0.0, seed=5)
    rep = solve(obj, max_iter=7, polish=False)
    h = np.array(rep.history)
    assert np.all(np.diff(h) <= 1e-15)
    assert not rep.converged
    theta = rep.povm.theta
    assert theta.min() >= 0 and np.abs(theta.sum(axis=1) - 1).max() <= 1e-9
    assert rep.certificate.stationarity_residual > 1e-8


def test_solver_is_deterministic():
    obj, _ = _instance(M=8, N=3, D=20, seed=9)
    a, b = solve(obj), solve(obj)
    assert np.array_equal(a.povm.theta, b.povm.theta) and a.iterations == b.iterations


def test_initial_iterate_is_used():
    obj, _ = _instance(seed=4)
    ref = solve(obj)
    warm = solve(obj, initial=ref.povm.theta)
    assert warm.iterations == 0 and warm.converged


def test_conditioning_warning():
    grid = ProbeGrid.from_arrays(np.geomspace(0.1, 5, 5))
    F = build_probe_matrix(grid, 8)
    obj = Objective(F, CountTable(grid, np.full((5, 2), 0.5)), 0.1)
    with pytest.warns(ConditioningWarning):
        solve(obj)


def test_nonfinite_inputs_rejected():
    obj, _ = _instance()
    with pytest.raises(ValueError):
        solve(obj, initial=np.full((7, 3), np.nan))
