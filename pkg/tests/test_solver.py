import math

import numpy as np
import pytest

from nlrecover.core import Problem
from nlrecover.operators import (
    InfeasibleProblemError,
    affine_oracle,
    box_projector,
    data_operator,
    hyperplane_projector,
    subgradient_projector,
    subspace_projector,
)
from nlrecover.scenarios import alternating_projections, build_youla_scenario, random_subspace
from nlrecover.solver import (
    TRACE_COLUMNS,
    ControlPolicy,
    RelaxationPolicy,
    SolverConfig,
    default_eps,
    emopsp_lambda,
    solve,
    solve_relaxed,
    validate_control,
)


# -- relaxation schedule -----------------------------------------------------------

@pytest.mark.parametrize("n,Lam,expected", [(0, 2.0, 1.0), (1, 2.0, 3.98), (2, 2.0, 3.98),
                                            (3, 1.0, 0.5), (6, 4.0, 2.0)])
def test_emopsp_lambda(n, Lam, expected):
    assert emopsp_lambda(n, Lam) == pytest.approx(expected, abs=1e-15)


def test_relaxation_range_enforced():
    with pytest.raises(ValueError, match="outside"):
        RelaxationPolicy.constant(2.5)(0, 1.0, 0.01)
    with pytest.raises(ValueError):
        RelaxationPolicy.custom(lambda n, L: 0.0)(0, 1.0, 0.01)
    assert RelaxationPolicy.custom(lambda n, L: L)(0, 3.0, 0.01) == 3.0


def test_default_eps():
    assert default_eps(3) == 0.01
    assert default_eps(1200) == pytest.approx(1 / 2400)


# -- control ----------------------------------------------------------------------------

def test_full_parallel_control_passes():
    assert validate_control(ControlPolicy.full_parallel(), [1, 2, 3])


def test_cyclic_twelve_blocks_of_hundred():
    ids = list(range(1, 1201))
    blocks = [ids[i:i + 100] for i in range(0, 1200, 100)]
    pol = ControlPolicy.cyclic_blocks(blocks)
    assert pol.M == 12
    assert validate_control(pol, ids)


def test_cyclic_missing_id_is_named():
    ids = list(range(10))
    pol = ControlPolicy.cyclic_blocks([[0, 1, 2], [3, 4, 5], [6, 8, 9]])
    res = validate_control(pol, ids)
    assert not res
    assert res.missing_id == 7
    assert "7" in res.message and res.window == (0, 2)


def test_custom_control_window_too_short():
    # alternates {0} and {1, 2}; every window of 2 covers everything, windows of 1 do not
    sched = lambda n: [0] if n % 2 == 0 else [1, 2]
    assert validate_control(ControlPolicy.custom(sched, M=2, period=2), [0, 1, 2])
    bad = validate_control(ControlPolicy.custom(sched, M=1), [0, 1, 2])
    assert not bad and bad.missing_id in (1, 2, 0)


def test_control_empty_block_rejected():
    res = validate_control(ControlPolicy.custom(lambda n: [], M=1), [0])
    assert not res and "empty" in res.message


def test_solve_rejects_bad_control():
    p = Problem((2,), constraints=[box_projector(0, 1, id=0), box_projector(0, 2, id=1)])
    cfg = SolverConfig(control=ControlPolicy.cyclic_blocks([[0], [0]]))
    with pytest.raises(ValueError, match="control"):
        solve(p, cfg)


def test_solve_rejects_bad_weights():
    p = Problem((2,), constraints=[box_projector(0, 1, id=0), box_projector(0, 2, id=1)])
    cfg = SolverConfig(weights=lambda n, a: [0.7, 0.7])
    with pytest.raises(ValueError, match="sum to 1"):
        solve(p, cfg)


# -- solve: small closed-form cases ------------------------------------------------------

def test_single_box_projector_one_step():
    p = Problem((3,), constraints=[box_projector(0, 1, id=0)])
    cfg = SolverConfig(relaxation=RelaxationPolicy.constant(1.0), eps=0.1)
    cfg.x0 = np.array([-2.0, 0.5, 3.0])
    x, tr = solve(p, cfg)
    np.testing.assert_array_equal(x, [0.0, 0.5, 1.0])
    assert tr.Lambda[0] == 1.0 and tr.lam[0] == 1.0
    assert tr.converged and tr.iterations == 2  # one update, then the stopping check


def test_zero_displacement_keeps_iterate_bitwise():
    p = Problem((3,), constraints=[box_projector(0, 1, id=0), box_projector(-1, 2, id=1)])
    x0 = np.array([0.1, 0.2, 0.3])
    x, tr = solve(p, SolverConfig(x0=x0, max_iters=5, tol=-1.0))
    assert x.tobytes() == x0.tobytes()
    assert all(v == 0.0 for v in tr.nu) and all(math.isnan(v) for v in tr.Lambda)


def test_intersecting_lines_in_plane():
    a1, b1 = np.array([1.0, 2.0]), 3.0
    a2, b2 = np.array([2.0, -1.0]), 1.0
    expected = np.linalg.solve(np.array([a1, a2]), [b1, b2])
    p = Problem((2,), constraints=[hyperplane_projector(a1, b1, id=1),
                                   hyperplane_projector(a2, b2, id=2)])
    x, tr = solve(p, SolverConfig(tol=1e-13))
    assert tr.converged
    assert np.abs(x - expected).max() <= 1e-10


def test_subgradient_halfspaces_match_exact_projectors():
    # with affine f the subgradient projector is the exact projector, so both
    # problems must produce identical iterates (EMOPSP special case, K empty)
    rng = np.random.default_rng(5)
    A, b = rng.standard_normal((6, 10)), rng.uniform(-1, 0, 6)
    sub = Problem((10,), constraints=[subgradient_projector(affine_oracle(A[i], b[i]), id=i)
                                      for i in range(6)])
    x0 = rng.standard_normal(10) * 5
    x, tr = solve(sub, SolverConfig(x0=x0, tol=1e-12))
    assert tr.converged
    assert np.all(A @ x - b <= 1e-10)
    lam = np.array(tr.Lambda)
    assert np.nanmin(lam) >= 1 - 1e-12


def test_youla_matches_alternating_projections():
    sc = build_youla_scenario(n=32, dim_v1=8, dim_v2=16, seed=11)
    q1, q2 = sc.bases
    oracle = alternating_projections(q1, q2, sc.observations[2], max_iters=100_000)
    x, tr = solve(sc.problem, sc.config)
    assert tr.converged
    assert np.abs(x - oracle).max() <= 1e-8


def test_youla_whole_space():
    sc = build_youla_scenario(n=32, dim_v1=32, dim_v2=12, seed=2)
    x, tr = solve(sc.problem, sc.config)
    q2 = sc.bases[1]
    assert np.linalg.norm(q2 @ (q2.T @ x) - sc.observations[2]) <= 1e-10


def test_fejer_and_extrapolation_on_youla():
    sc = build_youla_scenario(seed=4)
    x, tr = solve(sc.problem, sc.config, reference=sc.ground_truth)
    err = np.array(tr.err_ref)
    assert np.all(np.diff(err) <= 1e-10)
    nu, lam = np.array(tr.nu), np.array(tr.Lambda)
    assert np.all(lam[nu > 0][~np.isnan(lam[nu > 0])] >= 1 - 1e-12)


def test_cyclic_blocks_and_custom_weights():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((6, 4))
    xbar = rng.standard_normal(4)
    ops = [hyperplane_projector(A[i], A[i] @ xbar, id=i) for i in range(6)]
    p = Problem((4,), constraints=ops)
    ctrl = ControlPolicy.cyclic_blocks([[0, 1, 2], [3, 4, 5]])
    w = lambda n, act: [0.5, 0.25, 0.25]
    x, tr = solve(p, SolverConfig(control=ctrl, weights=w, tol=1e-12))
    assert tr.converged
    assert np.abs(x - xbar).max() <= 1e-9
    assert tr.active[0] == (0, 1, 2) and tr.active[1] == (3, 4, 5)


def test_stop_window_spans_a_full_period():
    # block 2 is already satisfied at x0 while block 1 is not: the solver must not stop early
    p = Problem((2,), constraints=[box_projector(1, 2, id=1), box_projector(-5, 5, id=2)])
    ctrl = ControlPolicy.cyclic_blocks([[2], [1]])
    x, tr = solve(p, SolverConfig(control=ctrl, x0=np.zeros(2), relaxation=RelaxationPolicy.constant(1.0),
                                  eps=0.1))
    np.testing.assert_array_equal(x, [1.0, 1.0])


def test_inconsistent_cancelling_displacements_raise():
    p = Problem((1,), constraints=[box_projector(-3, -1, id=0), box_projector(1, 3, id=1)])
    with pytest.raises(InfeasibleProblemError):
        solve(p, SolverConfig())


def test_nan_detected():
    p = Problem((2,), data=[data_operator(lambda x: x * np.nan, np.zeros(2), id=0)])
    with pytest.raises(FloatingPointError, match="iteration 0"):
        solve(p, SolverConfig(x0=np.ones(2)))


def test_threaded_evaluation_matches_sequential():
    sc = build_youla_scenario(seed=9)
    x1, t1 = solve(sc.problem, sc.config)
    sc.config.threads = 4
    x2, t2 = solve(sc.problem, sc.config)
    assert x1.tobytes() == x2.tobytes()
    assert t1.to_csv() == t2.to_csv()


def test_trace_csv_header_and_nan_cells():
    p = Problem((3,), constraints=[box_projector(0, 1, id=0)])
    _, tr = solve(p, SolverConfig(x0=np.array([2.0, 0, 0]), relaxation=RelaxationPolicy.constant(1.0), eps=0.1))
    lines = tr.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    # converged row: no step taken and no reference supplied
    assert lines[-1].split(",")[2:5] == ["", "", ""] and lines[-1].endswith(",")


# -- relaxed solver ---------------------------------------------------------------------

def test_relaxed_disjoint_intervals_midpoint():
    p = Problem((1,), constraints=[box_projector(0, 1, id=1), box_projector(2, 3, id=2)])
    x, tr = solve_relaxed(p, {1: 0.5, 2: 0.5})
    assert x[0] == pytest.approx(1.5, abs=1e-8)
    assert tr.converged and tr.residual[-1] <= 1e-8


def test_relaxed_unequal_weights_minimize_proximity():
    # minimizer of w1 d^2(x,[0,1]) + w2 d^2(x,[2,3]) between the sets is w1*1 + w2*2
    p = Problem((1,), constraints=[box_projector(0, 1, id=1), box_projector(2, 3, id=2)])
    x, _ = solve_relaxed(p, {1: 0.25, 2: 0.75}, lam=1.5, tol=1e-13)
    assert x[0] == pytest.approx(0.25 + 1.5, abs=1e-10)


def test_relaxed_agrees_with_solve_on_feasible_problem():
    sc = build_youla_scenario(n=32, dim_v1=8, dim_v2=16, seed=3)
    xs, _ = solve(sc.problem, sc.config)
    xr, tr = solve_relaxed(sc.problem, tol=1e-12)
    assert tr.converged
    assert np.abs(xs - xr).max() <= 1e-6


def test_relaxed_rejects_subgradient_projectors():
    p = Problem((2,), constraints=[subgradient_projector(affine_oracle(np.ones(2), 1.0), id=0)])
    with pytest.raises(ValueError, match="exact projectors"):
        solve_relaxed(p)


@pytest.mark.parametrize("weights,lam", [({1: 0.5, 2: 0.6}, 1.0), ({1: 0.5, 2: 0.5}, 2.0),
                                         ({1: 1.0}, 1.0)])
def test_relaxed_argument_validation(weights, lam):
    p = Problem((1,), constraints=[box_projector(0, 1, id=1), box_projector(2, 3, id=2)])
    with pytest.raises(ValueError):
        solve_relaxed(p, weights, lam=lam)


def test_random_subspace_orthonormal():
    q = random_subspace(np.random.default_rng(0), 10, 4)
    np.testing.assert_allclose(q.T @ q, np.eye(4), atol=1e-12)
    op = subspace_projector(q)
    x = np.random.default_rng(1).standard_normal(10)
    np.testing.assert_allclose(op(op(x)), op(x), atol=1e-12)
