"""Optimal sensing/access probabilities.

The secondary service rate in the backlogged-secondary systems is a ratio
``theta(rho) / w(rho)`` of a quadratic and an affine function of the access
probabilities once ``p_s`` (and, with a delay constraint on the feedback
system, ``p_r``) is fixed.  Each member of that family is solved by bisection
on the level ``zeta``; the level test is an exact global maximisation done by
:mod:`ehcr._qp`.  The outer parameters are scanned on a grid and the best grid
point is refined with a bounded Brent search.

Tie-breaking everywhere: among candidates within ``tie_tol`` of the best,
the lexicographically smallest ``(p_s, p_t, p_f, p_b, p_r)`` wins.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import _qp
from .channel import SuccessProbs
from .rates import (
    CONVENTIONAL,
    AccessPolicy,
    Traffic,
    conventional_rates,
    delay_excess,
    delay_s1,
    delay_sf1,
    exposure,
    s1_rates,
    sf1_secondary_rate,
)

DEFAULT_GRID = np.linspace(0.0, 1.0, 101)
DEFAULT_TOL = 1e-7
TIE_TOL = 1e-9
# Keeps mu_p and Gamma_p away from zero so the ratio stays finite.
_DEN_GUARD = 1e-9

S1, S2, S1F, CONV = "S1", "S2", "S1f", "conventional"


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True, eq=False)
class FractionalProgram:
    """Maximise ``theta(rho) / w(rho)`` over a box and ``A rho <= b``.

    ``theta(rho) = rho' Q rho + c' rho + c0`` and ``w(rho) = d' rho + d0``;
    ``w`` must be positive on the feasible set.
    """

    Q: np.ndarray
    c: np.ndarray
    c0: float
    d: np.ndarray
    d0: float
    lower: np.ndarray
    upper: np.ndarray
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n = np.atleast_1d(self.c).shape[0]
        if not 1 <= n <= 4:
            raise ValueError(f"dimension {n} outside 1..4")
        set_ = partial(object.__setattr__, self)
        set_("Q", np.asarray(self.Q, float).reshape(n, n))
        set_("c", np.asarray(self.c, float).reshape(n))
        set_("d", np.asarray(self.d, float).reshape(n))
        set_("lower", np.broadcast_to(np.asarray(self.lower, float), (n,)).copy())
        set_("upper", np.broadcast_to(np.asarray(self.upper, float), (n,)).copy())
        set_("A", np.asarray(self.A, float).reshape(-1, n))
        set_("b", np.asarray(self.b, float).reshape(-1))
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A and b disagree on the number of constraints")
        if np.any(self.lower > self.upper):
            raise ValueError("empty box")

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    def theta(self, rho) -> float:
        rho = np.asarray(rho, float)
        return float(rho @ self.Q @ rho + self.c @ rho + self.c0)

    def w(self, rho) -> float:
        return float(self.d @ np.asarray(rho, float) + self.d0)

    def value(self, rho) -> float:
        return self.theta(rho) / self.w(rho)

    def faces(self) -> _qp.FaceCandidates:
        return _qp.FaceCandidates(self.Q[None], self.c[None], [self.c0], self.d[None], [self.d0],
                                  self.A[None], self.b[None], self.lower, self.upper)


@dataclass(frozen=True)
class SolveResult:
    best_policy: AccessPolicy | None
    best_value: float
    feasible: bool
    rho: tuple = ()
    iterations: int = 0
    tolerance: float = DEFAULT_TOL
    bracket: tuple = (math.nan, math.nan)
    mu_p: float = math.nan
    reason: str = ""


@dataclass(frozen=True)
class RegionCurve:
    """Boundary ``lambda_s_max(lambda_p)`` with the system achieving each point."""

    label: str
    lambda_p: tuple
    lambda_s_max: tuple
    winner: tuple
    policies: tuple

    def __post_init__(self):
        if any(v < 0 for v in self.lambda_s_max):
            raise ValueError("negative lambda_s_max")

    def points(self):
        return list(zip(self.lambda_p, self.lambda_s_max))

    def __len__(self):
        return len(self.lambda_p)


def _infeasible(reason, tol=DEFAULT_TOL) -> SolveResult:
    return SolveResult(None, math.nan, False, tolerance=tol, reason=f"infeasible: {reason}")


# ---------------------------------------------------------------------------
# generic bisection


def bisect_quasiconcave(prog: FractionalProgram, tol: float = DEFAULT_TOL,
                        bracket=(0.0, 1.0), tie_tol: float = TIE_TOL) -> SolveResult:
    """Bisection on ``zeta`` for a single fractional program.

    The bracket must contain the optimal ratio.  ``best_policy`` is ``None``;
    the maximiser is in ``rho``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    fc = prog.faces()
    x, val, feas, lo, hi, it = _qp.bisect_levels(fc, bracket[0], bracket[1], tol, tie_tol)
    if not feas[0]:
        return _infeasible("empty constraint set", tol)
    rho = x[0]
    return SolveResult(None, prog.value(rho), True, tuple(float(v) for v in rho), it, tol,
                       (float(lo[0]), float(hi[0])))


def check_quasiconcavity(V, lower, upper, samples: int = 10_000, seed: int = 0,
                         feasible=None, slack: float = 1e-9):
    """Sample segments and test ``V(t x + (1-t) y) >= min(V(x), V(y)) - slack``.

    ``feasible`` optionally restricts endpoints to a convex subset of the box.
    Returns ``QuasiconcavityReport``.
    """
    rng = np.random.default_rng(seed)
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    checked, attempts = 0, 0
    while checked < samples and attempts < 50 * samples:
        attempts += 1
        x = rng.uniform(lower, upper)
        y = rng.uniform(lower, upper)
        if feasible is not None and not (feasible(x) and feasible(y)):
            continue
        t = rng.uniform()
        z = t * x + (1.0 - t) * y
        vx, vy, vz = V(x), V(y), V(z)
        checked += 1
        if vz < min(vx, vy) - slack:
            return QuasiconcavityReport(False, checked, (x, y, t, vx, vy, vz))
    return QuasiconcavityReport(checked > 0, checked, None)


@dataclass(frozen=True)
class QuasiconcavityReport:
    passed: bool
    checked: int
    counterexample: tuple | None = None


# ---------------------------------------------------------------------------
# coefficient builders


def _branch_vectors(probs: SuccessProbs, traffic: Traffic, ps):
    """Exposure, idle-gain and busy-gain vectors over ``(p_t, p_f, p_b)``, one row per ``p_s``."""
    ps = np.asarray(ps, float)
    qs = 1.0 - ps
    fa, md = traffic.p_fa, traffic.p_md
    e = np.stack([qs, ps * md, ps * (1.0 - md)], axis=-1)
    a = np.stack([qs * probs.p_bar_0s, ps * (1.0 - fa) * probs.p_bar_1s, ps * fa * probs.p_bar_1s], axis=-1)
    g = np.stack([qs * probs.p_bar_0s_c, ps * md * probs.p_bar_1s_c, ps * (1.0 - md) * probs.p_bar_1s_c],
                 axis=-1)
    return e, a, g


def _outer_sym(u, v):
    return 0.5 * (u[:, :, None] * v[:, None, :] + v[:, :, None] * u[:, None, :])


def _s1_faces(probs, traffic, lam, ps, cap):
    """S1 family over ``(p_t, p_f, p_b)``: exposure budget ``ell e.rho <= cap``."""
    e, a, g = _branch_vectors(probs, traffic, ps)
    B = e.shape[0]
    le, ell, pp = traffic.lambda_e, traffic.lambda_e * probs.delta_p, probs.p_bar_p
    Q = -le * ell * _outer_sym(e, a)
    c = le * ((pp - lam) * a + lam * g)
    d = -ell * e
    A = (ell * e)[:, None, :]
    b = np.full((B, 1), min(cap, pp - _DEN_GUARD))
    return _qp.FaceCandidates(Q, c, np.zeros(B), d, np.full(B, pp), A, b, np.zeros(3), np.ones(3))


def _sf_coeffs(probs, traffic, lam, ps):
    """Numerator of the feedback family over ``(p_t, p_f, p_b, p_r)``."""
    e3, a3, g3 = _branch_vectors(probs, traffic, ps)
    B = e3.shape[0]
    z = np.zeros((B, 1))
    e, a, g = (np.concatenate([v, z], axis=1) for v in (e3, a3, g3))
    r = np.zeros((B, 4))
    r[:, 3] = 1.0
    le, ell, pp, p0c = traffic.lambda_e, traffic.lambda_e * probs.delta_p, probs.p_bar_p, probs.p_bar_0s_c
    lb = 1.0 - lam
    Q = le * ell * (-lam * _outer_sym(e, a) - lb * _outer_sym(r, a) - lam * _outer_sym(r, g)
                    + lam * p0c * _outer_sym(e, r))
    c = le * ((pp - lam) * a + lam * pp * g + lam * (1.0 - pp) * p0c * r)
    return Q, c, e, r, ell, pp


def _sf1_faces(probs, traffic, lam, ps):
    Q, c, e, r, ell, pp = _sf_coeffs(probs, traffic, lam, ps)
    B = Q.shape[0]
    A = np.stack([lam * ell * e + (1.0 - lam) * ell * r, ell * r], axis=1)
    b = np.tile([pp - lam, pp - _DEN_GUARD], (B, 1))
    return _qp.FaceCandidates(Q, c, np.zeros(B), -ell * r, np.full(B, pp), A, b, np.zeros(4), np.ones(4))


# ---------------------------------------------------------------------------
# family search


def _grid(values):
    g = np.unique(np.clip(np.asarray(values, float).ravel(), 0.0, 1.0))
    if g.size == 0:
        raise ValueError("empty grid")
    return g


def _lex_best(values, keys, tie_tol):
    """Index of the best value, ties broken by lexicographically smallest key rows."""
    values = np.asarray(values, float)
    ok = np.isfinite(values)
    if not ok.any():
        return None
    best = values[ok].max()
    idx = np.flatnonzero(ok & (values >= best - tie_tol))
    return min(idx, key=lambda i: tuple(keys[i]))


def _solve_single(build, s, tol, tie_tol):
    x, val, feas, _, _, it = _qp.bisect_levels(build(np.array([s])), tol=tol, tie_tol=tie_tol)
    return (float(val[0]) if feas[0] else -math.inf), x[0], it


def _scan_and_refine(build, grid, tol, tie_tol, refine=True):
    """Best ``(p_s, rho, value, iterations)`` over the grid plus a local Brent pass."""
    fc = build(grid)
    x, val, feas, lo, hi, it = _qp.bisect_levels(fc, tol=tol, tie_tol=tie_tol)
    vals = np.where(feas, val, -np.inf)
    keys = np.column_stack([grid, x])
    k = _lex_best(vals, keys, tie_tol)
    if k is None:
        return None
    best = (float(grid[k]), x[k], float(vals[k]), it)
    if refine and grid.size > 1:
        step = float(np.max(np.diff(grid)))
        a, b = max(0.0, grid[k] - step), min(1.0, grid[k] + step)
        res = minimize_scalar(lambda s: -_solve_single(build, s, tol, tie_tol)[0], bounds=(a, b),
                              method="bounded", options={"xatol": 1e-6})
        v, xr, itr = _solve_single(build, float(res.x), tol, tie_tol)
        if v > best[2] + tol:
            best = (float(res.x), xr, v, it + itr)
    return best


def _policy(ps, rho, p_r=0.0) -> AccessPolicy:
    vals = [min(max(float(v), 0.0), 1.0) for v in rho]
    if len(vals) == 4:
        p_r = vals[3]
    return AccessPolicy(p_s=min(max(float(ps), 0.0), 1.0), p_t=vals[0], p_f=vals[1], p_b=vals[2], p_r=p_r)


def _at(traffic: Traffic, lam: float) -> Traffic:
    return replace(traffic, lambda_p=lam)


def _s1_result(policy, probs, traffic, tol, iterations, reason=""):
    rates = s1_rates(policy, probs, traffic)
    if not rates.stable:
        return _infeasible(f"solver returned an unstable policy ({rates.status})", tol)
    return SolveResult(policy, rates.mu_s, True, policy.as_tuple(), iterations, tol, mu_p=rates.mu_p,
                       reason=reason)


# ---------------------------------------------------------------------------
# system without feedback


def optimize_s1(probs: SuccessProbs, traffic: Traffic, lambda_p: float, ps_grid=DEFAULT_GRID,
                tol: float = DEFAULT_TOL, tie_tol: float = TIE_TOL, refine: bool = True) -> SolveResult:
    """Maximum secondary service rate of S1 subject to ``lambda_p <= mu_p``."""
    return _optimize_s1_cap(probs, traffic, lambda_p, probs.p_bar_p - lambda_p, ps_grid, tol, tie_tol,
                            refine)


def _optimize_s1_cap(probs, traffic, lam, cap, ps_grid, tol, tie_tol, refine):
    if lam >= probs.p_bar_p:
        return _infeasible("lambda_p >= P_p", tol)
    if cap < 0:
        return _infeasible("delay bound unreachable", tol)
    traffic = _at(traffic, lam)
    build = partial(_s1_faces, probs, traffic, lam, cap=cap)
    best = _scan_and_refine(build, _grid(ps_grid), tol, tie_tol, refine)
    if best is None:
        return _infeasible("no p_s admits a stable primary", tol)
    ps, rho, _, it = best
    return _s1_result(_policy(ps, rho), probs, traffic, tol, it)


def _s1_root(probs, traffic, lam):
    ell = traffic.lambda_e * probs.delta_p
    pp = probs.p_bar_p
    delta = probs.delta_0s if probs.p_bar_0s > 0 else 1.0
    if ell <= 0:
        return math.inf, ell
    return (pp - math.sqrt(pp * lam * (1.0 - delta))) / ell, ell


def closed_form_s1_ps0(probs: SuccessProbs, traffic: Traffic, lambda_p: float) -> SolveResult:
    """Optimal ``p_t`` of S1 with sensing disabled."""
    pp = probs.p_bar_p
    if lambda_p > pp:
        return _infeasible("lambda_p > P_p")
    root, ell = _s1_root(probs, traffic, lambda_p)
    cap = 1.0 if ell <= 0 else min(1.0, (pp - lambda_p) / ell)
    p_t = min(cap, max(root, 0.0))
    traffic = _at(traffic, lambda_p)
    return _s1_result(AccessPolicy(p_t=p_t), probs, traffic, 0.0, 0)


def optimize_s1_delay(probs: SuccessProbs, traffic: Traffic, lambda_p: float, max_delay: float,
                      ps_grid=DEFAULT_GRID, tol: float = DEFAULT_TOL, tie_tol: float = TIE_TOL,
                      refine: bool = True) -> SolveResult:
    """S1 optimum with mean primary delay at most ``max_delay`` slots."""
    if max_delay < 1:
        raise ValueError("max_delay must be >= 1")
    cap = probs.p_bar_p - lambda_p - (1.0 - lambda_p) / max_delay
    if cap < 0:
        return _infeasible("P_p < lambda_p + (1 - lambda_p)/D", tol)
    res = _optimize_s1_cap(probs, traffic, lambda_p, cap, ps_grid, tol, tie_tol, refine)
    return _check_delay(res, delay_s1, probs, _at(traffic, lambda_p), max_delay)


def closed_form_s1_delay_ps0(probs: SuccessProbs, traffic: Traffic, lambda_p: float,
                             max_delay: float) -> SolveResult:
    if max_delay < 1:
        raise ValueError("max_delay must be >= 1")
    pp = probs.p_bar_p
    slack = pp - ((1.0 - lambda_p) / max_delay + lambda_p)
    if slack < 0:
        return _infeasible("P_p < lambda_p + (1 - lambda_p)/D")
    root, ell = _s1_root(probs, traffic, lambda_p)
    cap = 1.0 if ell <= 0 else min(1.0, slack / ell)
    p_t = min(cap, max(root, 0.0))
    traffic = _at(traffic, lambda_p)
    return _check_delay(_s1_result(AccessPolicy(p_t=p_t), probs, traffic, 0.0, 0), delay_s1, probs,
                        traffic, max_delay)


def _check_delay(res, delay_fn, probs, traffic, max_delay):
    if not res.feasible:
        return res
    rep = delay_fn(res.best_policy, probs, traffic)
    if not (rep.d_p <= max_delay * (1.0 + 1e-9)):
        return _infeasible(f"delay {rep.d_p} exceeds {max_delay}", res.tolerance)
    return res


def feasibility_s2(probs: SuccessProbs, traffic: Traffic) -> SolveResult:
    """Smallest ``p_t`` keeping the secondary stable in S2 (sensing off).

    ``mu_p`` of the result does not depend on ``p_t``; ``best_value`` is the
    secondary service rate at the returned policy.
    """
    lam_s, le, p0c = traffic.lambda_s, traffic.lambda_e, probs.p_bar_0s_c
    if lam_s == 0.0:
        return SolveResult(AccessPolicy(), 0.0, True, AccessPolicy().as_tuple(), mu_p=probs.p_bar_p)
    bound = le * p0c
    if lam_s > bound + 1e-12:
        return _infeasible(f"lambda_s > lambda_e P0s^c = {bound}")
    p_t = min(lam_s / bound, 1.0)
    mu_p = probs.p_bar_p - lam_s * probs.delta_p / p0c
    policy = AccessPolicy(p_t=p_t)
    return SolveResult(policy, le * p_t * p0c, True, policy.as_tuple(), mu_p=mu_p)


def s2_lambda_s_max(probs: SuccessProbs, traffic: Traffic, lambda_p: float) -> float:
    """Largest ``lambda_s`` with both queues stable in S2; NaN when none."""
    pp, p0c = probs.p_bar_p, probs.p_bar_0s_c
    if lambda_p > pp:
        return math.nan
    bound = traffic.lambda_e * p0c
    if probs.delta_p > 0:
        bound = min(bound, (pp - lambda_p) * p0c / probs.delta_p)
    return max(bound, 0.0)


# ---------------------------------------------------------------------------
# feedback system


def _sf1_result(policy, probs, traffic, tol, iterations):
    try:
        mu_s = sf1_secondary_rate(policy, probs, traffic)
    except ValueError as exc:
        return _infeasible(f"solver returned an unstable policy ({exc})", tol)
    ell = traffic.lambda_e * probs.delta_p
    lam = traffic.lambda_p
    eta = lam * (probs.p_bar_p - ell * exposure(policy, traffic)) + (1 - lam) * (probs.p_bar_p - ell * policy.p_r)
    return SolveResult(policy, mu_s, True, policy.as_tuple(), iterations, tol, mu_p=eta)


def optimize_sf1(probs: SuccessProbs, traffic: Traffic, lambda_p: float, ps_grid=DEFAULT_GRID,
                 tol: float = DEFAULT_TOL, tie_tol: float = TIE_TOL, refine: bool = True) -> SolveResult:
    """Maximum secondary rate with feedback leveraging, subject to ``lambda_p <= eta``.

    ``mu_p`` of the result is ``eta``, the primary's mean departure rate when
    backlogged.
    """
    if lambda_p >= probs.p_bar_p:
        return _infeasible("lambda_p >= P_p", tol)
    traffic = _at(traffic, lambda_p)
    build = partial(_sf1_faces, probs, traffic, lambda_p)
    best = _scan_and_refine(build, _grid(ps_grid), tol, tie_tol, refine)
    if best is None:
        return _infeasible("no p_s admits lambda_p <= eta", tol)
    ps, rho, _, it = best
    return _sf1_result(_policy(ps, rho), probs, traffic, tol, it)


def closed_form_sf_pt(probs: SuccessProbs, traffic: Traffic, lambda_p: float, p_r: float) -> float:
    """Optimal ``p_t`` of the feedback system with sensing off at fixed ``p_r``; NaN if infeasible."""
    pp, lam = probs.p_bar_p, lambda_p
    ell = traffic.lambda_e * probs.delta_p
    slack = pp - (1.0 - lam) * ell * p_r - lam
    if slack < 0 or pp - ell * p_r <= 0:
        return math.nan
    if lam == 0.0 or ell == 0.0:
        return 1.0
    delta = probs.delta_0s if probs.p_bar_0s > 0 else 1.0
    cap = slack / (lam * ell)
    root = (slack + lam * delta * pp) / (2.0 * lam * ell)
    return min(max(min(cap, root), 0.0), 1.0)


def closed_form_sf_ps0(probs: SuccessProbs, traffic: Traffic, lambda_p: float,
                       pr_grid=DEFAULT_GRID) -> SolveResult:
    """Best ``(p_t, p_r)`` with sensing off: closed-form ``p_t`` per ``p_r``, best over the grid."""
    traffic = _at(traffic, lambda_p)
    cands, vals = [], []
    for p_r in _grid(pr_grid):
        p_t = closed_form_sf_pt(probs, traffic, lambda_p, p_r)
        if math.isnan(p_t):
            continue
        pol = AccessPolicy(p_t=float(p_t), p_r=float(p_r))
        try:
            vals.append(sf1_secondary_rate(pol, probs, traffic))
        except ValueError:
            continue
        cands.append(pol)
    k = _lex_best(vals, [c.as_tuple() for c in cands], TIE_TOL)
    if k is None:
        return _infeasible("bound negative for every p_r", 0.0)
    return _sf1_result(cands[k], probs, traffic, 0.0, 0)


def _sf_delay_rows(probs, traffic, lam, pr, max_delay):
    """Right-hand side of ``lam ell e.x <= rhs`` per ``p_r`` value (``-1`` marks infeasible)."""
    pp = probs.p_bar_p
    ell = traffic.lambda_e * probs.delta_p
    out = np.empty(pr.shape)
    cache = {}
    for i, p_r in enumerate(pr):
        if p_r in cache:
            out[i] = cache[p_r]
            continue
        gamma = pp - ell * p_r
        rhs = -1.0
        if gamma > _DEN_GUARD:
            if lam == 0.0:
                # alpha >= 1 - (D - 1) Gamma
                rhs = pp - 1.0 + (max_delay - 1.0) * gamma
                rhs = rhs if rhs >= 0 else -1.0
            else:
                eta_max = min(lam * pp + (1.0 - lam) * gamma, 1.0 - 1e-12)
                if eta_max > lam:
                    f = partial(delay_excess, lambda_p=lam, gamma_p=gamma, max_delay=max_delay)
                    top = f(eta_max)
                    if top <= 0.0:
                        lo = lam + 1e-12 * max(1.0, lam)
                        eta_lo = eta_max if top == 0.0 or f(lo) <= 0 else brentq(f, lo, eta_max, xtol=1e-15)
                        rhs = lam * pp + (1.0 - lam) * gamma - eta_lo
                        rhs = max(rhs, 0.0)
        cache[p_r] = rhs
        out[i] = rhs
    return out


def _sf_delay_faces(probs, traffic, lam, max_delay, ps, pr):
    Q4, c4, e4, _, ell, pp = _sf_coeffs(probs, traffic, lam, ps)
    B = Q4.shape[0]
    Q = Q4[:, :3, :3]
    c = c4[:, :3] + 2.0 * Q4[:, :3, 3] * pr[:, None]
    c0 = c4[:, 3] * pr + Q4[:, 3, 3] * pr**2
    gamma = pp - ell * pr
    rhs = _sf_delay_rows(probs, traffic, lam, pr, max_delay)
    if lam == 0.0:
        A = (ell * e4[:, :3])[:, None, :]
    else:
        A = (lam * ell * e4[:, :3])[:, None, :]
    return _qp.FaceCandidates(Q, c, c0, np.zeros((B, 3)), np.maximum(gamma, _DEN_GUARD), A, rhs[:, None],
                              np.zeros(3), np.ones(3))


def _sf_delay_eval(probs, traffic, lam, max_delay, ps, pr, tie_tol):
    ps = np.atleast_1d(np.asarray(ps, float))
    pr = np.atleast_1d(np.asarray(pr, float))
    fc = _sf_delay_faces(probs, traffic, lam, max_delay, ps, pr)
    X, feas = fc.candidates(np.zeros(fc.B))
    den = fc.denominator(X)
    x, found = fc.pick(X, feas, fc.numerator(X) / den, tie_tol)
    val = fc.numerator(x[None])[0] / fc.denominator(x[None])[0]
    return x, np.where(found, val, -np.inf)


def optimize_sf_delay(probs: SuccessProbs, traffic: Traffic, lambda_p: float, max_delay: float,
                      ps_grid=DEFAULT_GRID, pr_grid=DEFAULT_GRID, tol: float = DEFAULT_TOL,
                      tie_tol: float = TIE_TOL, refine: bool = True) -> SolveResult:
    """Feedback-system optimum with mean primary delay at most ``max_delay`` slots."""
    if max_delay < 1:
        raise ValueError("max_delay must be >= 1")
    lam = lambda_p
    if lam >= probs.p_bar_p:
        return _infeasible("lambda_p >= P_p", tol)
    traffic = _at(traffic, lam)
    gs, gr = _grid(ps_grid), _grid(pr_grid)
    PS, PR = (m.ravel() for m in np.meshgrid(gs, gr, indexing="ij"))
    x, vals = _sf_delay_eval(probs, traffic, lam, max_delay, PS, PR, tie_tol)
    keys = np.column_stack([PS, x, PR])
    k = _lex_best(vals, keys, tie_tol)
    if k is None:
        return _infeasible("no (p_s, p_r) grid point meets the delay bound", tol)
    ps, pr, rho, best = float(PS[k]), float(PR[k]), x[k], float(vals[k])

    if refine:
        def single(s, r):
            xs, vs = _sf_delay_eval(probs, traffic, lam, max_delay, [s], [r], tie_tol)
            return float(vs[0]), xs[0]

        hs = float(np.max(np.diff(gs))) if gs.size > 1 else 0.0
        hr = float(np.max(np.diff(gr))) if gr.size > 1 else 0.0
        for _ in range(2):
            for axis, h in ((0, hs), (1, hr)):
                if h == 0.0:
                    continue
                cur = (ps, pr)[axis]
                a, b = max(0.0, cur - h), min(1.0, cur + h)
                if axis == 0:
                    fn = lambda s: -single(s, pr)[0]  # noqa: E731
                else:
                    fn = lambda r: -single(ps, r)[0]  # noqa: E731
                res = minimize_scalar(fn, bounds=(a, b), method="bounded", options={"xatol": 1e-7})
                cand = (float(res.x), pr) if axis == 0 else (ps, float(res.x))
                v, xr = single(*cand)
                if v > best + tol:
                    ps, pr, rho, best = cand[0], cand[1], xr, v

    policy = _policy(ps, rho, p_r=pr)
    res = _sf1_result(policy, probs, traffic, tol, 0)
    return _check_delay(res, delay_sf1, probs, traffic, max_delay)


# ---------------------------------------------------------------------------
# region sweeps


def _region_cell(lam, probs, traffic, feedback, ps_grid, include_s2, max_delay):
    if max_delay is None:
        res = (optimize_sf1 if feedback else optimize_s1)(probs, traffic, lam, ps_grid)
    elif feedback:
        res = optimize_sf_delay(probs, traffic, lam, max_delay, ps_grid, ps_grid)
    else:
        res = optimize_s1_delay(probs, traffic, lam, max_delay, ps_grid)
    v1 = res.best_value if res.feasible else -math.inf
    v2 = s2_lambda_s_max(probs, traffic, lam) if include_s2 else math.nan
    v2 = -math.inf if math.isnan(v2) else v2
    if v1 == -math.inf and v2 == -math.inf:
        return None
    if v1 >= v2:
        return lam, max(v1, 0.0), S1F if feedback else S1, res.best_policy
    return lam, v2, S2, AccessPolicy(p_t=1.0)


def stability_region(probs: SuccessProbs, traffic: Traffic, lambda_p_grid, feedback: bool = False,
                     ps_grid=DEFAULT_GRID, include_s2: bool = True, max_delay: float | None = None,
                     workers: int = 1) -> RegionCurve:
    """Union of the dominant systems' regions along ``lambda_p_grid``.

    With ``max_delay`` the backlogged-secondary system is solved under the
    delay bound and S2 is left out.  Cells run in a process pool when
    ``workers > 1``; the output keeps grid order.
    """
    grid = [float(v) for v in np.asarray(lambda_p_grid, float).ravel()]
    if max_delay is not None:
        include_s2 = False
    cell = partial(_region_cell, probs=probs, traffic=traffic, feedback=feedback, ps_grid=ps_grid,
                   include_s2=include_s2, max_delay=max_delay)
    if workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(cell, grid))
    else:
        rows = [cell(lam) for lam in grid]
    rows = [r for r in rows if r is not None]
    label = (S1F if feedback else S1) + ("" if max_delay is None else f"-D{max_delay:g}")
    return RegionCurve(label, *(tuple(col) for col in zip(*rows))) if rows else RegionCurve(label, (), (), (), ())


def s2_region(probs: SuccessProbs, traffic: Traffic, lambda_p_grid) -> RegionCurve:
    rows = []
    for lam in np.asarray(lambda_p_grid, float).ravel():
        v = s2_lambda_s_max(probs, traffic, float(lam))
        if not math.isnan(v):
            rows.append((float(lam), v, S2, AccessPolicy(p_t=1.0)))
    return RegionCurve(S2, *(tuple(c) for c in zip(*rows))) if rows else RegionCurve(S2, (), (), (), ())


def conventional_region(probs: SuccessProbs, traffic: Traffic, lambda_p_grid) -> RegionCurve:
    """Always sense, transmit only on an idle decision; no optimisation."""
    rows = []
    for lam in np.asarray(lambda_p_grid, float).ravel():
        r = conventional_rates(probs, _at(traffic, float(lam)))
        if r.stable:
            rows.append((float(lam), r.mu_s, CONV, CONVENTIONAL))
    return RegionCurve(CONV, *(tuple(c) for c in zip(*rows))) if rows else RegionCurve(CONV, (), (), (), ())
