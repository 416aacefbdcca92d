import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehcr import solver
from ehcr.presets import get_preset
from ehcr.rates import (CONVENTIONAL, SILENT, delay_s1, delay_sf1, feedback_chain, s1_rates,
                        sf1_secondary_rate)

from oracles import (line_grid_max, random_case, s1_grid_oracle, s1_ps0_objective, sf1_grid_oracle,
                     sf_ps0_objective)

P = get_preset("fig4").probs
T = get_preset("fig4").traffic


# bisect_quasiconcave


def _program(Q, c, c0, d, d0, A=None, b=None):
    kw = {} if A is None else dict(A=A, b=b)
    return solver.FractionalProgram(Q=Q, c=c, c0=c0, d=d, d0=d0, lower=[0.0], upper=[1.0], **kw)


def test_bisect_linear_objective():
    res = solver.bisect_quasiconcave(_program([[0.0]], [1.0], 0.0, [0.0], 1.0))
    assert res.feasible
    assert res.rho[0] == pytest.approx(1.0)
    assert res.best_value == pytest.approx(1.0, abs=1e-7)
    lo, hi = res.bracket
    assert hi - lo <= res.tolerance


def test_bisect_ratio_against_dense_grid():
    prog = _program([[-1.0]], [2.0], 0.0, [1.0], 1.0)
    res = solver.bisect_quasiconcave(prog, tol=1e-9)
    x = np.linspace(0, 1, 10**6)
    grid = np.max(x * (2 - x) / (1 + x))
    assert res.best_value == pytest.approx(grid, abs=1e-6)
    assert res.rho[0] == pytest.approx(math.sqrt(3) - 1, abs=1e-6)


def test_bisect_infeasible():
    res = solver.bisect_quasiconcave(_program([[0.0]], [1.0], 0.0, [0.0], 1.0, A=[[1.0]], b=[-0.5]))
    assert not res.feasible
    assert res.reason.startswith("infeasible")


def test_bisect_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        solver.bisect_quasiconcave(_program([[0.0]], [1.0], 0.0, [0.0], 1.0), tol=0.0)


def test_program_dimension_limit():
    with pytest.raises(ValueError):
        solver.FractionalProgram(Q=np.zeros((5, 5)), c=np.zeros(5), c0=0.0, d=np.zeros(5), d0=1.0,
                                 lower=0.0, upper=1.0)


def test_s1_program_matches_closed_form():
    t = replace(T, lambda_p=0.5)
    op = solver.optimize_s1(P, t, 0.5, ps_grid=[0.0])
    cf = solver.closed_form_s1_ps0(P, t, 0.5)
    assert op.best_value == pytest.approx(cf.best_value, abs=1e-6)
    assert op.best_policy.p_t == pytest.approx(cf.best_policy.p_t, abs=1e-5)


# optimize_s1 / closed forms


def test_optimize_s1_no_primary_traffic():
    res = solver.optimize_s1(P, T, 0.0)
    assert res.best_value == pytest.approx(0.4 * 0.8, abs=1e-9)
    assert res.best_policy.p_s == 0.0
    assert res.best_policy.p_t == pytest.approx(1.0)


def test_strong_mpr_needs_no_sensing():
    strong = replace(P, p_bar_p_c=P.p_bar_p, p_bar_0s_c=P.p_bar_0s, p_bar_1s_c=P.p_bar_1s)
    for lam in (0.1, 0.4):
        res = solver.optimize_s1(strong, T, lam)
        assert res.best_policy.p_s == 0.0
        assert res.best_value == pytest.approx(0.4 * 0.8, abs=1e-9)


def test_optimize_s1_infeasible_above_capacity():
    assert not solver.optimize_s1(P, T, 0.7).feasible
    assert not solver.optimize_sf1(P, T, 0.75).feasible


def test_closed_form_s1_examples():
    res = solver.closed_form_s1_ps0(P, T, 0.5)
    assert res.best_policy.p_t == pytest.approx((0.7 - math.sqrt(0.7 * 0.5 * 0.875)) / 0.24, abs=1e-12)
    assert res.best_policy.p_t == pytest.approx(0.6108, abs=1e-4)
    assert solver.closed_form_s1_ps0(P, T, 0.3).best_policy.p_t == 1.0
    harmless = replace(P, p_bar_p_c=P.p_bar_p)
    assert solver.closed_form_s1_ps0(harmless, T, 0.5).best_policy.p_t == 1.0
    assert not solver.closed_form_s1_ps0(P, T, 0.71).feasible


def test_closed_form_s1_dense_grid():
    t = replace(T, lambda_p=0.5)
    best = np.max(s1_ps0_objective(P, t, 0.5, np.linspace(0, 1, 10**6 + 1)))
    assert solver.closed_form_s1_ps0(P, T, 0.5).best_value == pytest.approx(best, abs=1e-9)


def test_feasibility_s2_examples():
    assert solver.feasibility_s2(P, T).best_policy.p_t == 0.0
    res = solver.feasibility_s2(P, replace(T, lambda_s=0.02))
    assert res.best_policy.p_t == pytest.approx(0.5)
    assert res.mu_p == pytest.approx(0.7 - 0.02 / 0.1 * 0.6)
    assert not solver.feasibility_s2(P, replace(T, lambda_s=0.05)).feasible


def test_closed_form_sf_hand_values():
    # slack = 0.7 - 0.5 * 0.24 * 0.5 - 0.5 = 0.14; cap 0.14 / 0.12; interior (0.14 + 0.5 * 0.125 * 0.7) / 0.24
    pt = solver.closed_form_sf_pt(P, T, 0.5, 0.5)
    assert pt == pytest.approx((0.14 + 0.5 * 0.125 * 0.7) / 0.24, abs=1e-12)
    assert pt == pytest.approx(0.765625, abs=1e-12)
    t = replace(T, lambda_p=0.5)
    best, _ = line_grid_max(lambda x: sf1_secondary_rate(replace(SILENT, p_t=x, p_r=0.5), P, t), 0.0, 1.0, 1e-5)
    assert sf1_secondary_rate(replace(SILENT, p_t=pt, p_r=0.5), P, t) == pytest.approx(best, abs=1e-9)


def test_closed_form_sf_without_retransmission_access():
    # Gamma_p = P_p: cap (P_p - lam) / (lam ell) against the interior root
    ell, delta = 0.24, 0.125
    pt_grid = np.linspace(0, 1, 10**6 + 1)
    for lam in (0.2, 0.5, 0.65):
        t = replace(T, lambda_p=lam)
        cap = (0.7 - lam) / (lam * ell)
        root = (0.7 - lam + lam * delta * 0.7) / (2 * lam * ell)
        got = solver.closed_form_sf_pt(P, T, lam, 0.0)
        assert got == pytest.approx(min(max(min(cap, root), 0.0), 1.0), abs=1e-12)
        vals = sf_ps0_objective(P, t, lam, pt_grid, 0.0)
        assert got == pytest.approx(pt_grid[np.argmax(vals)], abs=2e-6)


def _agree_sf(probs, traffic, lam):
    of = solver.optimize_sf1(probs, traffic, lam, ps_grid=[0.0])
    cf = solver.closed_form_sf_ps0(probs, traffic, lam, pr_grid=[of.best_policy.p_r])
    cf_grid = solver.closed_form_sf_ps0(probs, traffic, lam)
    return of, cf, cf_grid


def test_closed_forms_agree_with_solver_on_random_sets():
    rng = np.random.default_rng(11)
    for _ in range(50):
        probs, traffic, lam = random_case(rng)
        max_delay = float(rng.uniform(1.5, 10.0))
        op = solver.optimize_s1(probs, traffic, lam, ps_grid=[0.0])
        cf = solver.closed_form_s1_ps0(probs, traffic, lam)
        assert op.best_value == pytest.approx(cf.best_value, abs=1e-5)

        of, cf, cf_grid = _agree_sf(probs, traffic, lam)
        assert of.feasible == cf.feasible
        if of.feasible:
            assert of.best_value == pytest.approx(cf.best_value, abs=1e-5)
            assert cf_grid.best_value <= of.best_value + 1e-7

        od = solver.optimize_s1_delay(probs, traffic, lam, max_delay, ps_grid=[0.0])
        cd = solver.closed_form_s1_delay_ps0(probs, traffic, lam, max_delay)
        assert od.feasible == cd.feasible
        if od.feasible:
            assert od.best_value == pytest.approx(cd.best_value, abs=1e-5)


# optimize_sf1


def test_silent_feedback_policy():
    t = replace(T, lambda_p=0.6)
    assert sf1_secondary_rate(SILENT, P, t) == 0.0
    feedback_chain(SILENT, P, replace(T, lambda_p=0.7))
    with pytest.raises(ValueError):
        feedback_chain(SILENT, P, replace(T, lambda_p=0.71))


@pytest.mark.parametrize("lam", [0.0, 0.15, 0.3, 0.45, 0.6])
def test_feedback_never_hurts(lam):
    assert solver.optimize_sf1(P, T, lam).best_value >= solver.optimize_s1(P, T, lam).best_value - 1e-9


def test_fig4_high_load_policy_is_conventional():
    res = solver.optimize_sf1(P, T, 0.55)
    assert res.best_policy == replace(CONVENTIONAL, p_r=0.0)


@pytest.mark.slow
@pytest.mark.parametrize("name,lam", [("fig3", 0.2), ("fig4", 0.4)])
def test_solvers_match_grid_oracles(name, lam):
    p = get_preset(name)
    assert solver.optimize_s1(p.probs, p.traffic, lam).best_value == pytest.approx(
        s1_grid_oracle(p.probs, p.traffic, lam)[0], abs=1e-6)
    assert solver.optimize_sf1(p.probs, p.traffic, lam).best_value == pytest.approx(
        sf1_grid_oracle(p.probs, p.traffic, lam)[0], abs=1e-6)


# delay variants


def test_s1_delay_examples():
    res = solver.closed_form_s1_delay_ps0(P, T, 0.3, 2)
    assert res.best_policy.p_t == pytest.approx((0.7 - 0.65) / 0.24, abs=1e-12)
    assert res.best_policy.p_t == pytest.approx(0.2083, abs=1e-4)
    assert not solver.optimize_s1_delay(P, T, 0.5, 2).feasible
    with pytest.raises(ValueError):
        solver.optimize_s1_delay(P, T, 0.3, 0.5)


def test_s1_delay_limits():
    for lam in (0.1, 0.3, 0.5):
        loose = solver.optimize_s1_delay(P, T, lam, 1e9)
        assert loose.best_value == pytest.approx(solver.optimize_s1(P, T, lam).best_value, abs=1e-7)
        assert solver.closed_form_s1_delay_ps0(P, T, lam, 1e9).best_value == pytest.approx(
            solver.closed_form_s1_ps0(P, T, lam).best_value, abs=1e-7)
        vals = [solver.optimize_s1_delay(P, T, lam, d) for d in (1.5, 2, 4, 8)]
        vals = [v.best_value if v.feasible else -math.inf for v in vals]
        assert vals == sorted(vals)


def test_s1_delay_solution_meets_bound():
    res = solver.optimize_s1_delay(P, T, 0.3, 3)
    assert delay_s1(res.best_policy, P, replace(T, lambda_p=0.3)).d_p <= 3 + 1e-9


@pytest.mark.slow
def test_sf_delay_properties():
    lam = 0.3
    t = replace(T, lambda_p=lam)
    d2 = solver.optimize_sf_delay(P, T, lam, 2)
    d4 = solver.optimize_sf_delay(P, T, lam, 4)
    assert d2.best_value <= d4.best_value + 1e-12
    assert delay_sf1(d2.best_policy, P, t).d_p <= 2 + 1e-9
    free = solver.optimize_sf1(P, T, lam)
    assert solver.optimize_sf_delay(P, T, lam, 1e6).best_value == pytest.approx(free.best_value, abs=1e-6)
    oracle, _ = sf1_grid_oracle(P, T, lam, max_delay=2)
    assert d2.best_value == pytest.approx(oracle, abs=1e-4)
    assert d2.best_value >= oracle - 1e-7


def test_sf_delay_rejects_bad_bound():
    with pytest.raises(ValueError):
        solver.optimize_sf_delay(P, T, 0.3, 0.9)


# regions


def test_region_at_zero_load():
    curve = solver.stability_region(P, T, [0.0])
    assert curve.lambda_s_max[0] == pytest.approx(0.4 * 0.8)
    assert curve.winner[0] == solver.S1


def test_region_is_deterministic_and_worker_independent():
    grid = [0.0, 0.2, 0.4, 0.6, 0.69]
    a = solver.stability_region(P, T, grid)
    b = solver.stability_region(P, T, grid)
    c = solver.stability_region(P, T, grid, workers=2)
    assert a.points() == b.points() == c.points()
    assert a.winner == c.winner
    assert all(v >= 0 for v in a.lambda_s_max)
    assert len(a) == len(grid)


def test_region_omits_infeasible_points():
    curve = solver.stability_region(P, T, [0.3, 0.7, 0.8], include_s2=False)
    assert curve.lambda_p == (0.3,)


def test_region_s2_wins_where_sensing_off_is_better():
    p = get_preset("fig3")
    curve = solver.stability_region(p.probs, p.traffic, [0.69])
    s2 = solver.s2_lambda_s_max(p.probs, p.traffic, 0.69)
    assert curve.lambda_s_max[0] >= s2


def test_conventional_region_matches_rates():
    curve = solver.conventional_region(P, T, [0.1, 0.5])
    assert curve.lambda_s_max[1] == pytest.approx(s1_rates(CONVENTIONAL, P, replace(T, lambda_p=0.5)).mu_s)


# invariants


@given(st.integers(0, 10**6))
@settings(max_examples=12, deadline=None)
def test_solutions_reproduce_and_satisfy_constraints(seed):
    probs, traffic, lam = random_case(np.random.default_rng(seed))
    t = replace(traffic, lambda_p=lam)
    r1 = solver.optimize_s1(probs, traffic, lam, ps_grid=np.linspace(0, 1, 21))
    assert r1.feasible
    rates = s1_rates(r1.best_policy, probs, t)
    assert rates.mu_s == pytest.approx(r1.best_value, abs=1e-9)
    assert rates.mu_p - lam >= -1e-9
    rf = solver.optimize_sf1(probs, traffic, lam, ps_grid=np.linspace(0, 1, 21))
    assert rf.feasible
    assert sf1_secondary_rate(rf.best_policy, probs, t) == pytest.approx(rf.best_value, abs=1e-9)
    assert feedback_chain(rf.best_policy, probs, t).eta - lam >= -1e-9
    for v in (*r1.best_policy.as_tuple(), *rf.best_policy.as_tuple()):
        assert -1e-12 <= v <= 1 + 1e-12


# quasiconcavity checker


def test_quasiconcavity_checker_examples():
    assert solver.check_quasiconcavity(lambda x: -x[0] ** 2, [0], [1], samples=2000).passed
    rep = solver.check_quasiconcavity(lambda x: math.sin(6 * x[0]), [0], [1], samples=2000)
    assert not rep.passed
    x, y, t, vx, vy, vz = rep.counterexample
    assert vz < min(vx, vy)


def test_s1_objective_without_sensing_is_quasiconcave():
    t = replace(T, lambda_p=0.3)
    rep = solver.check_quasiconcavity(
        lambda x: s1_rates(replace(SILENT, p_t=x[0]), P, t).mu_s, [0], [1], samples=2000,
        feasible=lambda x: s1_rates(replace(SILENT, p_t=x[0]), P, t).stable)
    assert rep.passed
