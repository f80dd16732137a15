"""Series solvers against the dense oracle and the splitting theory."""

import numpy as np
import pytest
import scipy.linalg

from santt.casestudy import CaseStudyParams, generate_case_study
from santt.errors import DivergenceError, RankBudgetError
from santt.kron import exp_sum_coeffs, spectrum_interval
from santt.model import SanModel, build_descriptor, build_splitting
from santt.oracle import (
    dense_generator,
    dense_mtta,
    dense_splitting_parts,
    reachable_states,
)
from santt.solver import (
    SolverConfig,
    _DivergenceGuard,
    apply_m,
    compute_mtta,
)
from santt.tt import (
    RoundingPolicy,
    tt_from_dense,
    tt_to_dense,
    tt_unit,
    tt_zeros,
)

TIGHT = RoundingPolicy(1e-12)


def two_state_model(lam=2.0):
    return SanModel(
        [2], [np.array([[0.0, lam], [0.0, 0.0]])], [], [np.array([1.0, 0.0])]
    )


def make_split(model, gamma=None):
    desc = build_descriptor(model, RoundingPolicy(0.0))
    if gamma is None:
        gamma = desc.delta_inf
    split = build_splitting(model, desc, gamma, RoundingPolicy(0.0))
    lo, hi = spectrum_interval(split.neg_q1)
    return split, exp_sum_coeffs(hi / lo, 1e-11)


def dense_m(model, gamma):
    chain, d, a1, a2 = dense_splitting_parts(model, gamma)
    n = chain.n_states
    e_abs = np.zeros(n)
    e_abs[-1] = 1.0
    s = np.outer((a1 + a2) @ e_abs, e_abs)
    return chain, -scipy.linalg.solve(d + a1, a2 - s)


# ---------------------------------------------------------------------------
# the iteration operator


def test_apply_m_on_absorbing_basis_vector():
    model = two_state_model(2.0)
    split, es = make_split(model, 2.0)
    out = apply_m(split, es, tt_unit((2,), (1,)), TIGHT)
    _, m = dense_m(model, 2.0)
    np.testing.assert_allclose(tt_to_dense(out), m @ [0.0, 1.0], atol=1e-9)


def test_apply_m_matches_dense_on_random_vectors():
    model = generate_case_study(CaseStudyParams(2, seed=3))
    split, es = make_split(model)
    chain, m = dense_m(model, split.gamma)
    rng = np.random.default_rng(0)
    v_dense = rng.random(chain.n_states).reshape(model.state_counts)
    out = apply_m(split, es, tt_from_dense(v_dense, TIGHT), TIGHT)
    np.testing.assert_allclose(
        tt_to_dense(out).ravel(), m @ v_dense.ravel(), atol=1e-8
    )


def test_apply_m_preserves_nonnegativity_off_absorbing():
    # nonnegative input with zero absorbing mass stays nonnegative
    model = generate_case_study(CaseStudyParams(2, seed=5))
    split, es = make_split(model)
    rng = np.random.default_rng(1)
    v_dense = rng.random(model.potential_states)
    v_dense[-1] = 0.0
    out = apply_m(
        split, es, tt_from_dense(v_dense.reshape(model.state_counts), TIGHT), TIGHT
    )
    dense = tt_to_dense(out).ravel()
    assert np.min(dense) >= -1e-9
    # the absorbing component stays (numerically) zero
    assert abs(dense[-1]) <= 1e-9


def test_apply_m_zero_vector():
    model = two_state_model()
    split, es = make_split(model)
    out = apply_m(split, es, tt_zeros((2,)), TIGHT)
    assert np.all(tt_to_dense(out) == 0)


# ---------------------------------------------------------------------------
# anchors


@pytest.mark.parametrize("algorithm", ["linear", "squared", "transpose"])
def test_two_state_sojourn(algorithm):
    rep = compute_mtta(two_state_model(2.0), SolverConfig(algorithm=algorithm))
    assert rep.mtta == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("algorithm", ["linear", "squared", "transpose"])
def test_single_component_two_stage(algorithm):
    model = generate_case_study(CaseStudyParams(1))
    cfg = SolverConfig(
        algorithm=algorithm, stop_tol=1e-12, exp_sum_eps=1e-13,
        rounding=RoundingPolicy(1e-13), max_iter=500,
    )
    rep = compute_mtta(model, cfg)
    assert rep.mtta == pytest.approx(2.0 / 1.1, abs=1e-11)


@pytest.mark.parametrize("algorithm", ["linear", "squared", "transpose"])
def test_three_components_match_oracle(algorithm):
    model = generate_case_study(CaseStudyParams(3, seed=9))
    ref = dense_mtta(dense_generator(model))
    rep = compute_mtta(model, SolverConfig(algorithm=algorithm, max_iter=800))
    assert rep.mtta == pytest.approx(ref, rel=1e-6)


def test_pi0_concentrated_near_absorption():
    # start with component 2 software already failed
    model = generate_case_study(CaseStudyParams(2, seed=4))
    model = SanModel(
        model.state_counts,
        model.local,
        model.syncs,
        [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])],
        model.topology,
    )
    ref = dense_mtta(dense_generator(model))
    rep = compute_mtta(model, SolverConfig(algorithm="transpose", max_iter=800))
    assert rep.mtta == pytest.approx(ref, rel=1e-6)


# ---------------------------------------------------------------------------
# algorithm equivalence and histories


def test_squared_matches_linear_partial_sums():
    model = generate_case_study(CaseStudyParams(2, seed=7))
    tight = RoundingPolicy(1e-12)
    for steps in (1, 2, 3):
        cfg_sq = SolverConfig(
            algorithm="squared", max_iter=steps, stop_tol=1e-300,
            rounding=tight, exp_sum_eps=1e-12,
        )
        cfg_lin = SolverConfig(
            algorithm="linear", max_iter=2 ** (steps + 1) - 1, stop_tol=1e-300,
            rounding=tight, exp_sum_eps=1e-12,
        )
        m_sq = compute_mtta(model, cfg_sq)
        m_lin = compute_mtta(model, cfg_lin)
        assert m_sq.iterations == steps
        assert m_lin.iterations == 2 ** (steps + 1) - 1
        assert m_sq.mtta == pytest.approx(m_lin.mtta, rel=1e-8)


@pytest.mark.parametrize("algorithm", ["linear", "squared", "transpose"])
def test_measure_history_monotone(algorithm):
    model = generate_case_study(CaseStudyParams(3, seed=2))
    rep = compute_mtta(model, SolverConfig(algorithm=algorithm, max_iter=800))
    h = rep.measure_history
    assert all(h[i + 1] >= h[i] - 1e-9 for i in range(len(h) - 1))
    assert h[-1] <= rep.mtta * (1 + 1e-9)


def test_measure_history_are_lower_bounds():
    model = generate_case_study(CaseStudyParams(3, seed=6))
    ref = dense_mtta(dense_generator(model))
    for algorithm in ("linear", "squared", "transpose"):
        rep = compute_mtta(model, SolverConfig(algorithm=algorithm, max_iter=800))
        assert all(m <= ref * (1 + 1e-7) for m in rep.measure_history)


def test_reward_shift_invariance():
    model = generate_case_study(CaseStudyParams(2, seed=8))
    base = compute_mtta(model, SolverConfig(reward_shift=-1.0))
    for shift in (0.0, 2.0):
        rep = compute_mtta(model, SolverConfig(reward_shift=shift))
        assert rep.mtta == pytest.approx(base.mtta, rel=2e-8)


def test_gamma_invariance():
    model = generate_case_study(CaseStudyParams(3, seed=3))
    minimal = compute_mtta(model, SolverConfig(gamma_mode="minimal"))
    scaled = compute_mtta(
        model, SolverConfig(gamma_mode="scaled", gamma_factor=4.0)
    )
    assert scaled.gamma == pytest.approx(4.0 * minimal.gamma)
    assert scaled.mtta == pytest.approx(minimal.mtta, rel=2e-8)


def test_reorder_invariance():
    model = generate_case_study(CaseStudyParams(4, seed=12))
    with_rcm = compute_mtta(model, SolverConfig())
    without = compute_mtta(model, SolverConfig(reorder=False))
    assert with_rcm.mtta == pytest.approx(without.mtta, rel=1e-7)


def test_transpose_keeps_unreachable_states_zero():
    # exactly zero in exact arithmetic; rank rounding leaks noise at the
    # truncation level, so the threshold scales with the rounding tolerance
    t = np.array([[1.0, 1.0], [0.0, 1.0]])
    model = generate_case_study(CaseStudyParams(2, topology=t))
    from santt.solver import neumann_transpose, prepare_workspace

    cfg = SolverConfig(
        algorithm="transpose", reorder=False, max_iter=400,
        rounding=RoundingPolicy(1e-12), stop_tol=1e-10, exp_sum_eps=1e-12,
    )
    ws = prepare_workspace(model, cfg)
    xt, *_ = neumann_transpose(ws)
    dense = np.abs(tt_to_dense(xt).ravel())
    chain = dense_generator(model)
    reached = set(reachable_states(chain))
    unreachable = [i for i in range(chain.n_states) if i not in reached]
    assert unreachable, "instance should have unreachable potential states"
    assert np.max(dense[unreachable]) <= 1e-9 * np.max(dense)


# ---------------------------------------------------------------------------
# convergence-rate envelope


def test_linear_error_tracks_spectral_radius():
    model = generate_case_study(CaseStudyParams(2, seed=1))
    split, _ = make_split(model)
    chain, m = dense_m(model, split.gamma)
    n = chain.n_states
    rho = np.max(np.abs(np.linalg.eigvals(m)))
    assert 0.0 < rho < 1.0
    b = np.ones(n)
    b[-1] = 0.0
    q1 = -split.gamma * np.eye(n) + dense_splitting_parts(model, split.gamma)[2]
    y = scipy.linalg.solve(q1, b)
    x_exact = scipy.linalg.solve(np.eye(n) - m, y)
    errors = []
    x = y.copy()
    for _ in range(12):
        errors.append(np.max(np.abs(x - x_exact)))
        y = m @ y
        x = x + y
    # fit the constant from the first two terms, allow a factor-10 envelope
    c = max(errors[0] / rho, errors[1] / rho**2)
    for ell, err in enumerate(errors):
        assert err <= 10.0 * c * rho ** (ell + 1) + 1e-13


# ---------------------------------------------------------------------------
# guards and reports


def test_divergence_guard_trips_on_growth():
    guard = _DivergenceGuard()
    guard.check(1.0)
    with pytest.raises(DivergenceError):
        for norm in (2.0, 30.0, 400.0, 5000.0):
            guard.check(norm)


def test_divergence_guard_tolerates_transients():
    guard = _DivergenceGuard()
    for norm in (1.0, 0.5, 0.55, 0.6, 0.65, 0.6, 0.5, 0.4):
        guard.check(norm)


def test_rank_cap_raises_when_squaring_degrades():
    model = generate_case_study(CaseStudyParams(3, seed=0))
    cfg = SolverConfig(algorithm="squared", rounding=RoundingPolicy(1e-8, max_rank=2))
    with pytest.raises(RankBudgetError):
        compute_mtta(model, cfg)


def test_report_contents():
    model = generate_case_study(CaseStudyParams(2, seed=0))
    rep = compute_mtta(model, SolverConfig())
    assert rep.wall_time > 0
    assert rep.peak_tt_bytes > 0
    assert rep.iterations >= 1
    assert len(rep.measure_history) == len(rep.max_rank_history)
    assert rep.residual_estimate < 1e-6
    assert rep.spectrum[0] > 0
    d = rep.to_dict()
    assert d["mtta"] == rep.mtta
    assert d["algorithm"] == "squared"


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(algorithm="cg")
    with pytest.raises(ValueError):
        SolverConfig(stop_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(gamma_mode="auto")
