import numpy as np
import pytest

from solver.qp import DenseQP, check_psd, dump_qp, kkt_residuals, polish, solve_qp


def test_unconstrained_minimum():
    sol = solve_qp(DenseQP(H=np.eye(2), g=np.array([-1.0, -2.0])))
    assert sol.ok
    np.testing.assert_allclose(sol.u_star, [1.0, 2.0], atol=1e-6)


def test_box_constraint_binds_upper():
    qp = DenseQP(H=np.eye(1), g=np.array([-3.0]), A_ineq=np.eye(1), lb=np.array([-1.0]), ub=np.array([1.0]))
    sol = solve_qp(qp)
    assert sol.ok
    assert sol.u_star[0] == pytest.approx(1.0, abs=1e-6)
    assert sol.lam_upper[0] == pytest.approx(2.0, abs=1e-5)
    assert sol.lam_lower[0] == pytest.approx(0.0, abs=1e-5)


def test_equality_constraint():
    qp = DenseQP(H=np.eye(2), g=np.zeros(2), A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([2.0]))
    sol = solve_qp(qp)
    assert sol.ok
    np.testing.assert_allclose(sol.u_star, [1.0, 1.0], atol=1e-6)


def test_tied_rows_act_as_equalities():
    qp = DenseQP(H=np.eye(2), g=np.zeros(2), A_ineq=np.array([[1.0, -1.0]]), lb=np.array([0.5]), ub=np.array([0.5]))
    sol = solve_qp(qp)
    assert sol.ok
    assert sol.u_star[0] - sol.u_star[1] == pytest.approx(0.5, abs=1e-6)


def test_bound_conflict_reports_infeasible():
    qp = DenseQP(H=np.eye(1), g=np.zeros(1), A_ineq=np.eye(1), lb=np.array([1.0]), ub=np.array([0.0]))
    sol = solve_qp(qp)
    assert sol.status == "infeasible"
    assert not sol.ok


def test_contradictory_rows_report_infeasible():
    A = np.array([[1.0], [-1.0]])
    qp = DenseQP(H=np.eye(1), g=np.zeros(1), A_ineq=A, ub=np.array([-1.0, -1.0]))
    sol = solve_qp(qp)
    assert sol.status == "infeasible"


def test_violated_constant_row_reports_infeasible():
    qp = DenseQP(H=np.eye(1), g=np.zeros(1), A_ineq=np.zeros((1, 1)), lb=np.array([1.0]), ub=np.array([2.0]))
    assert solve_qp(qp).status == "infeasible"


def test_inconsistent_equalities():
    qp = DenseQP(H=np.eye(1), g=np.zeros(1), A_eq=np.array([[1.0], [1.0]]), b_eq=np.array([0.0, 1.0]))
    sol = solve_qp(qp)
    assert sol.status == "infeasible"
    assert "inconsistent" in sol.message


def test_non_psd_hessian_raises():
    with pytest.raises(ValueError, match="positive semidefinite"):
        solve_qp(DenseQP(H=np.diag([1.0, -1.0]), g=np.zeros(2)))


def test_asymmetric_hessian_raises():
    with pytest.raises(ValueError, match="symmetric"):
        check_psd(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_zero_hessian_linear_program():
    # min -u s.t. 0 <= u <= 3
    qp = DenseQP(H=np.zeros((1, 1)), g=np.array([-1.0]), A_ineq=np.eye(1), lb=np.array([0.0]), ub=np.array([3.0]))
    sol = solve_qp(qp)
    assert sol.ok
    assert sol.u_star[0] == pytest.approx(3.0, abs=1e-5)


def test_kkt_residuals_at_optimum_are_small():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((4, 4))
    qp = DenseQP(
        H=M @ M.T + np.eye(4), g=rng.standard_normal(4),
        A_ineq=rng.standard_normal((3, 4)), lb=-np.ones(3), ub=np.ones(3) * 0.2,
    )
    sol = solve_qp(qp)
    assert sol.ok
    kkt, primal = kkt_residuals(qp, sol.u_star, sol.lam_lower, sol.lam_upper, sol.nu)
    assert kkt <= 1e-5
    assert primal <= 1e-7


def test_warm_start_reaches_same_solution():
    qp = DenseQP(H=np.diag([2.0, 1.0]), g=np.array([1.0, -1.0]), A_ineq=np.array([[1.0, 1.0]]), ub=np.array([0.5]))
    cold = solve_qp(qp)
    warm = solve_qp(qp, warm_start=cold)
    np.testing.assert_allclose(warm.u_star, cold.u_star, atol=1e-6)


def test_polish_recovers_exact_vertex():
    qp = DenseQP(H=np.eye(2), g=np.array([-2.0, -2.0]), A_ineq=np.eye(2), lb=np.zeros(2), ub=np.ones(2))
    sol = solve_qp(qp)
    np.testing.assert_allclose(polish(qp, sol), [1.0, 1.0], atol=1e-12)


def test_dump_writes_matrix_market(tmp_path):
    qp = DenseQP(H=np.eye(2), g=np.ones(2), A_ineq=np.ones((1, 2)), ub=np.ones(1))
    written = dump_qp(qp, tmp_path / "dumps" / "step0")
    names = sorted(p.name for p in written)
    assert "step0_H.mtx" in names
    assert "step0_A_ineq.mtx" in names
    assert "step0_A_eq.mtx" not in names          # empty parts are skipped
    assert all(p.exists() for p in written)
