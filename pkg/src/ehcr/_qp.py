"""Exact maximisation of low-dimensional quadratics over box-and-halfspace sets.

For an objective ``x'Qx + c'x - zeta (d'x)`` over ``lower <= x <= upper``,
``A x <= b``, every global maximiser that is an extreme point of the
maximiser set is the unique stationary point of the objective restricted to
the affine hull of some face.  Enumerating faces (each coordinate at its
lower bound, upper bound, or free; any subset of the rows active) and solving
each face's KKT system therefore yields a finite candidate list that contains
a global maximiser.  This holds for indefinite ``Q`` as well.

The KKT matrices do not depend on ``zeta``; the candidate on each face is
affine in ``zeta`` and is precomputed once, so a bisection on ``zeta`` only
costs a few array operations per step.  Everything is batched over a leading
axis of independent programs that share dimensions.
"""

from __future__ import annotations

from itertools import combinations, product

import numpy as np

_SING_RTOL = 1e-11
FEAS_TOL = 1e-10


class FaceCandidates:
    """Candidate maximisers of ``x'Qx + c'x + c0 - zeta (d'x + d0)``.

    Shapes: ``Q (B, n, n)``, ``c, d (B, n)``, ``c0, d0 (B,)``,
    ``A (B, m, n)``, ``b (B, m)``; ``lower``/``upper`` are ``(n,)``.
    """

    def __init__(self, Q, c, c0, d, d0, A, b, lower, upper):
        Q = np.asarray(Q, float)
        self.B, self.n = Q.shape[0], Q.shape[1]
        self.Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
        self.c, self.d = np.asarray(c, float), np.asarray(d, float)
        self.c0 = np.broadcast_to(np.asarray(c0, float), (self.B,))
        self.d0 = np.broadcast_to(np.asarray(d0, float), (self.B,))
        A = np.asarray(A, float).reshape(self.B, -1, self.n)
        self.A, self.b = A, np.asarray(b, float).reshape(self.B, -1)
        self.m = A.shape[1]
        self.lower = np.asarray(lower, float)
        self.upper = np.asarray(upper, float)
        self._build()

    def _build(self):
        B, n, m = self.B, self.n, self.m
        groups = {}
        for pattern in product((0, 1, 2), repeat=n):
            free = tuple(j for j in range(n) if pattern[j] == 2)
            fixed = np.where(np.array(pattern) == 1, self.upper, self.lower)
            fixed[list(free)] = 0.0
            for na in range(min(len(free), m) + 1):
                for act in combinations(range(m), na):
                    groups.setdefault((len(free), na), []).append((free, act, fixed))
        X0, X1, ok = [], [], []
        for (nf, na), faces in groups.items():
            fixed = np.stack([f[2] for f in faces])  # (G, n)
            if nf == 0:
                X0.append(np.broadcast_to(fixed[:, None, :], (len(faces), B, n)))
                X1.append(np.zeros((len(faces), B, n)))
                ok.append(np.ones((len(faces), B), bool))
                continue
            free = np.array([f[0] for f in faces])  # (G, nf)
            act = np.array([f[1] for f in faces], dtype=int).reshape(len(faces), na)
            x0, x1, good = self._solve_group(free, act, fixed)
            X0.append(x0)
            X1.append(x1)
            ok.append(good)
        self.X0 = np.concatenate(X0)  # (F, B, n)
        self.X1 = np.concatenate(X1)
        self.ok = np.concatenate(ok)  # (F, B)

    def _solve_group(self, free, act, fixed):
        """KKT solutions for ``G`` faces sharing the number of free coordinates and active rows."""
        B, n = self.B, self.n
        G, nf = free.shape
        na = act.shape[1]
        k = nf + na
        K = np.zeros((G, B, k, k))
        K[..., :nf, :nf] = np.moveaxis(2.0 * self.Q[:, free[:, :, None], free[:, None, :]], 0, 1)
        r0 = np.zeros((G, B, k))
        r1 = np.zeros((G, B, k))
        Qf = self.Q[:, free, :]  # (B, G, nf, n)
        r0[..., :nf] = np.moveaxis(-self.c[:, free] - 2.0 * np.einsum("bgin,gn->bgi", Qf, fixed), 0, 1)
        r1[..., :nf] = np.moveaxis(self.d[:, free], 0, 1)
        if na:
            Aef = np.moveaxis(self.A[:, act[:, :, None], free[:, None, :]], 0, 1)  # (G, B, na, nf)
            K[..., :nf, nf:] = np.swapaxes(Aef, -1, -2)
            K[..., nf:, :nf] = Aef
            Ae = self.A[:, act, :]  # (B, G, na, n)
            r0[..., nf:] = np.moveaxis(self.b[:, act] - np.einsum("bgan,gn->bga", Ae, fixed), 0, 1)
        U, s, Vt = np.linalg.svd(K)
        good = s[..., -1] > _SING_RTOL * np.maximum(s[..., 0], 1.0)
        inv_s = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), 0.0)
        inv_s[~good] = 0.0

        def apply(r):
            y = np.einsum("...ji,...j->...i", U, r) * inv_s
            return np.einsum("...ij,...i->...j", Vt, y)

        y0, y1 = apply(r0), apply(r1)
        x0 = np.broadcast_to(fixed[:, None, :], (G, B, n)).copy()
        x1 = np.zeros((G, B, n))
        idx = np.broadcast_to(free[:, None, :], (G, B, nf))
        np.put_along_axis(x0, idx, y0[..., :nf], axis=2)
        np.put_along_axis(x1, idx, y1[..., :nf], axis=2)
        return x0, x1, good

    # evaluation -----------------------------------------------------------
    def numerator(self, X):
        """``x'Qx + c'x + c0`` for ``X`` of shape ``(..., B, n)``."""
        quad = np.einsum("...bi,bij,...bj->...b", X, self.Q, X)
        return quad + np.einsum("...bi,bi->...b", X, self.c) + self.c0

    def denominator(self, X):
        return np.einsum("...bi,bi->...b", X, self.d) + self.d0

    def candidates(self, zeta):
        """Candidate points at level ``zeta`` (shape ``(B,)``) and their feasibility mask."""
        zeta = np.broadcast_to(np.asarray(zeta, float), (self.B,))
        X = self.X0 + zeta[None, :, None] * self.X1
        feas = self.ok.copy()
        feas &= np.all(X >= self.lower - FEAS_TOL, axis=-1)
        feas &= np.all(X <= self.upper + FEAS_TOL, axis=-1)
        X = np.clip(X, self.lower, self.upper)
        if self.m:
            lhs = np.einsum("bmn,fbn->fbm", self.A, X)
            feas &= np.all(lhs <= self.b + FEAS_TOL * (1.0 + np.abs(self.b)), axis=-1)
        return X, feas

    def level_max(self, zeta):
        """Max over the feasible set of ``numerator - zeta * denominator`` (``-inf`` if empty)."""
        X, feas = self.candidates(zeta)
        zeta = np.broadcast_to(np.asarray(zeta, float), (self.B,))
        vals = self.numerator(X) - zeta * self.denominator(X)
        vals = np.where(feas, vals, -np.inf)
        return vals.max(axis=0)

    def pick(self, X, feas, score, tie_tol):
        """Per program, the best-scoring feasible candidate; ties go to the lexicographically smallest."""
        score = np.where(feas, score, -np.inf)
        best = score.max(axis=0)
        keep = feas & (score >= best - tie_tol)
        for j in range(self.n):
            col = np.where(keep, X[..., j], np.inf)
            keep &= col <= col.min(axis=0) + 1e-12
        idx = np.argmax(keep, axis=0)
        xb = X[idx, np.arange(self.B)]
        return xb, np.isfinite(best)


def maximize_quadratic(Q, c, c0, A, b, lower, upper, tie_tol=1e-12):
    """Global maximum of ``x'Qx + c'x + c0`` over box and ``A x <= b`` (batched).

    Returns ``(x, value, feasible)`` with shapes ``(B, n)``, ``(B,)``, ``(B,)``.
    """
    Q = np.asarray(Q, float)
    B, n = Q.shape[0], Q.shape[1]
    fc = FaceCandidates(Q, c, c0, np.zeros((B, n)), np.zeros(B), A, b, lower, upper)
    X, feas = fc.candidates(np.zeros(B))
    x, found = fc.pick(X, feas, fc.numerator(X), tie_tol)
    val = np.where(found, fc.numerator(x[None])[0], -np.inf)
    return x, val, found


def bisect_levels(fc: FaceCandidates, lo=0.0, hi=1.0, tol=1e-7, tie_tol=1e-9, max_iter=200):
    """Bisection on the level ``zeta`` of ``numerator / denominator`` (batched).

    ``denominator`` must be positive on the feasible set.  Returns
    ``(x, value, feasible, lo, hi, iterations)`` where ``value`` is the ratio
    re-evaluated at ``x``.
    """
    B = fc.B
    lo = np.full(B, float(lo))
    hi = np.full(B, float(hi))
    feasible = np.isfinite(fc.level_max(np.zeros(B)))
    it = 0
    while it < max_iter and np.any((hi - lo)[feasible] > tol):
        mid = 0.5 * (lo + hi)
        up = fc.level_max(mid) >= 0.0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        it += 1
    X, feas = fc.candidates(lo)
    num, den = fc.numerator(X), fc.denominator(X)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, -np.inf)
    x, found = fc.pick(X, feas & (den > 0), ratio, tie_tol)
    value = fc.numerator(x[None])[0] / fc.denominator(x[None])[0]
    feasible = feasible & found
    value = np.where(feasible, value, np.nan)
    return x, value, feasible, lo, hi, it
