"""Dense bounded-variable primal simplex for small ranged LPs.

Solves ``max c @ x`` subject to ``row_lo <= A @ x <= row_hi`` and
``lo <= x <= hi`` with all bounds finite. Rows become equalities through one
bounded slack each; infeasible starting rows get an artificial variable that
phase 1 drives to zero. The basis is refactored from scratch every iteration
(``m`` is a few dozen at most), pricing is Dantzig with a switch to Bland's
rule while the objective stalls.

Every optimum comes with a dual certificate: for any row multipliers ``pi``

    c @ x <= sum_i max(pi_i row_lo_i, pi_i row_hi_i)
             + sum_j max(d_j lo_j, d_j hi_j),    d = c - pi @ A,

holds on the whole feasible set, so :meth:`BoundedSimplex.maximize` reports a
bound that stays valid even when the pivots carry rounding error.

Decoy-state LPs have nearly parallel rows, which makes the optimal duals huge;
a basic solution that is infeasible by 1e-12 can then shift the objective by
1e-6. After the primal loop the basis is therefore polished: basic values and
duals are recomputed by iterative refinement with correctly rounded residuals
and remaining infeasibilities are removed by dual simplex pivots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import InfeasibleError
from .exactsum import accurate_matvec, exact_products

FEAS_TOL = 1e-11
OPT_TOL = 1e-11
MAX_OPT_TOL = 1e-8
PIVOT_TOL = 1e-9
HARRIS_TOL = 1e-12
DEGENERATE_RUN = 30
MAX_ITER = 20_000
POLISH_FEAS_TOL = 1e-15
ZERO_TOL = 1e-14
DUAL_HARRIS_TOL = 1e-14
POLISH_ROUNDS = 4
POLISH_PIVOTS = 200
REFINE_STEPS = 4
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SimplexResult:
    value: float          # primal objective at the final vertex
    bound: float          # certified upper bound on the maximum
    x: np.ndarray
    iterations: int


class BoundedSimplex:
    """Reusable solver: phase 1 runs once, each objective restarts from the last basis."""

    def __init__(self, a, row_lo, row_hi, lo, hi):
        a = np.asarray(a, dtype=float)
        m, n = a.shape
        self.m, self.n = m, n
        self.row_lo = np.asarray(row_lo, dtype=float)
        self.row_hi = np.asarray(row_hi, dtype=float)
        if np.any(self.row_lo > self.row_hi):
            raise InfeasibleError("row with lower bound above upper bound")
        # columns: x (n) | slacks s = A x (m) | artificials (m)
        self.A = np.hstack([a, -np.eye(m), np.zeros((m, m))])
        self.lo = np.concatenate([np.asarray(lo, float), self.row_lo, np.zeros(m)])
        self.hi = np.concatenate([np.asarray(hi, float), self.row_hi, np.zeros(m)])
        self.x = np.concatenate([self.lo[:n], np.zeros(2 * m)])
        self.basis = np.arange(n, n + m)
        self.iterations = 0
        if m:
            self._phase_one()

    # -- setup -------------------------------------------------------------
    def _phase_one(self):
        m, n = self.m, self.n
        act = self.A[:, :n] @ self.x[:n]
        need = []
        for i in range(m):
            s = n + i
            if self.row_lo[i] - FEAS_TOL <= act[i] <= self.row_hi[i] + FEAS_TOL:
                self.x[s] = min(max(act[i], self.row_lo[i]), self.row_hi[i])
                continue
            target = self.row_lo[i] if act[i] < self.row_lo[i] else self.row_hi[i]
            self.x[s] = target
            sign = 1.0 if target - act[i] > 0 else -1.0
            art = n + m + i
            self.A[i, art] = sign
            self.hi[art] = np.inf
            self.x[art] = abs(target - act[i])
            self.basis[i] = art
            need.append(art)
        if not need:
            return
        cost = np.zeros(n + 2 * m)
        cost[need] = -1.0
        self._iterate(cost)
        infeas = float(self.x[need].sum())
        scale = max(1.0, float(np.abs(self.row_hi).max()))
        if infeas > FEAS_TOL * scale * m:
            raise InfeasibleError(f"LP infeasible (phase-1 residual {infeas:.3e})")
        for art in need:
            self.hi[art] = 0.0
            if art not in self.basis:
                self.x[art] = 0.0

    # -- core loop ---------------------------------------------------------
    def _free(self) -> np.ndarray:
        mask = np.ones(self.n + 2 * self.m, dtype=bool)
        mask[self.basis] = False
        return mask

    def _iterate(self, cost: np.ndarray, accurate: bool = False):
        A, lo, hi, x = self.A, self.lo, self.hi, self.x
        movable = hi > lo
        bland = False
        stalled = 0
        best = -np.inf
        seen = set()
        opt_tol = OPT_TOL
        for _ in range(MAX_ITER):
            nonbasic = self._free()
            lu = lu_factor(A[:, self.basis])
            rhs = -A[:, nonbasic] @ x[nonbasic]
            x[self.basis] = lu_solve(lu, rhs)
            if accurate:
                self._refine_basic(lu)
                pi = self._refine_duals(lu, cost)
            else:
                pi = lu_solve(lu, cost[self.basis], trans=1)
            obj = float(cost[np.isfinite(cost)] @ x)
            if obj > best + 1e-14 * max(1.0, abs(obj)):
                best = obj
                stalled = 0
                bland = False
            else:
                stalled += 1
                if stalled >= DEGENERATE_RUN:
                    bland = True
            d = self._reduced_costs(cost, pi) if accurate else cost - pi @ A
            at_lo = x <= lo
            state = (self.basis.tobytes(), (x >= hi).tobytes())
            if state in seen:
                # cycling: first try Bland's rule, then treat the smallest
                # reduced costs as rounding noise (the certificate absorbs them)
                seen.clear()
                if bland:
                    opt_tol *= 10.0
                bland = True
                stalled = DEGENERATE_RUN
            up = nonbasic & movable & at_lo & (d > opt_tol)
            down = nonbasic & movable & ~at_lo & (d < -opt_tol)
            cand = np.flatnonzero(up | down)
            if cand.size == 0 or opt_tol > MAX_OPT_TOL:
                self.pi = pi
                return
            seen.add(state)
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            delta = 1.0 if up[j] else -1.0
            w = self._refined_solve(lu, A[:, j]) if accurate else lu_solve(lu, A[:, j])
            rate = -delta * w                     # d x_B / d theta
            xb = x[self.basis]
            blo, bhi = lo[self.basis], hi[self.basis]
            # the accurate pass lets every nonzero entry block, with a tight
            # Harris margin, so no row drifts out of its box unnoticed
            piv_tol = (ZERO_TOL if accurate else PIVOT_TOL) * max(1.0, float(np.abs(rate).max()))
            harris = POLISH_FEAS_TOL if accurate else HARRIS_TOL
            dec = rate < -piv_tol
            inc = rate > piv_tol
            room = np.full(self.m, np.inf)
            room[dec] = np.maximum(xb[dec] - blo[dec], 0.0)
            room[inc] = np.maximum(bhi[inc] - xb[inc], 0.0)
            speed = np.abs(rate)
            # Harris: loosen every bound by HARRIS_TOL, then pick the largest
            # pivot among rows that block within the loosened step
            loose = np.full(self.m, np.inf)
            moving = dec | inc
            loose[moving] = (room[moving] + harris) / speed[moving]
            theta_flip = hi[j] - lo[j]
            theta_max = float(loose.min()) if self.m else np.inf
            self.iterations += 1
            if theta_flip <= theta_max:
                x[j] = hi[j] if delta > 0 else lo[j]
                continue
            if not math.isfinite(theta_max):
                raise InfeasibleError("LP unbounded")
            exact = np.full(self.m, np.inf)
            exact[moving] = room[moving] / speed[moving]
            ties = np.flatnonzero(exact <= theta_max)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(speed[ties])])
            theta = float(exact[r])
            leaving = self.basis[r]
            x[j] += delta * theta
            x[leaving] = lo[leaving] if rate[r] < 0 else hi[leaving]
            self.basis[r] = j
        raise InfeasibleError("simplex iteration limit reached")

    # -- accurate polish ---------------------------------------------------
    def _refine_basic(self, lu):
        """Basic values from the nonbasic ones, refined until the residual vanishes."""
        A, x, basis = self.A, self.x, self.basis
        for _ in range(REFINE_STEPS):
            used = np.flatnonzero(x)
            resid = -accurate_matvec(A[:, used], x[used])
            if not np.any(resid):
                break
            step = lu_solve(lu, resid)
            x[basis] += step
            if np.abs(step).max() <= _EPS * np.abs(x[basis]).max():
                break

    def _refined_solve(self, lu, rhs, trans=0):
        """``B^-1 rhs`` (or ``B^-T rhs``) with correctly rounded residuals."""
        bmat = self.A[:, self.basis]
        if trans:
            bmat = bmat.T
        sol = lu_solve(lu, rhs, trans=trans)
        for _ in range(REFINE_STEPS):
            resid = accurate_matvec(-bmat, sol, base=rhs)
            if not np.any(resid):
                break
            step = lu_solve(lu, resid, trans=trans)
            sol = sol + step
            if np.abs(step).max() <= _EPS * np.abs(sol).max():
                break
        return sol

    def _refine_duals(self, lu, cost):
        """Duals as a ``(2, m)`` head/tail pair whose sum is accurate far below
        one ulp of the head; with duals near 1e7 a single double would leave
        reduced costs of basic columns around 1e-9."""
        bt = self.A[:, self.basis].T
        both = np.hstack([-bt, -bt])
        cb = cost[self.basis]
        head = lu_solve(lu, cb, trans=1)
        tail = np.zeros(self.m)
        for _ in range(REFINE_STEPS):
            resid = accurate_matvec(both, np.concatenate([head, tail]), base=cb)
            if not np.any(resid):
                break
            tail = tail + lu_solve(lu, resid, trans=1)
        total = head + tail
        tail = tail - (total - head)
        return np.vstack([total, tail])

    def _reduced_costs(self, cost, duals):
        """``cost - A^T pi``, correctly rounded wherever the sign is in doubt."""
        parts = np.atleast_2d(duals)
        pi = parts.sum(axis=0)
        d = cost - pi @ self.A
        # rounding in the double product stays far below this bound
        doubt = np.flatnonzero(np.abs(d) <= 1e-12 * (np.abs(pi) @ np.abs(self.A) + np.abs(cost)))
        if doubt.size:
            mat = np.hstack([-self.A[:, doubt].T] * len(parts))
            d[doubt] = accurate_matvec(mat, parts.ravel(), base=cost[doubt])
        return d

    def _dual_cleanup(self, cost) -> bool:
        """Dual simplex pivots until the basic solution is accurately feasible.

        Returns False if no pivot can repair a violated row (the LP is then
        infeasible to working precision) or the pivot budget runs out.
        """
        A, lo, hi, x = self.A, self.lo, self.hi, self.x
        movable = hi > lo
        for _ in range(POLISH_PIVOTS):
            lu = lu_factor(A[:, self.basis])
            self._refine_basic(lu)
            xb = x[self.basis]
            below = lo[self.basis] - xb
            above = xb - hi[self.basis]
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= POLISH_FEAS_TOL * max(1.0, abs(xb[r])):
                return True
            pi = self._refine_duals(lu, cost)
            d = self._reduced_costs(cost, pi)
            unit = np.zeros(self.m)
            unit[r] = 1.0
            alpha = accurate_matvec(A.T, self._refined_solve(lu, unit, trans=1))  # row r of B^-1 A
            nonbasic = self._free() & movable
            at_lo = x <= lo
            raise_it = below[r] > 0                    # basic value must go up
            # x_B[r] moves by -alpha_j per unit increase of x_j
            sign = np.where(at_lo, 1.0, -1.0)
            gain = -alpha * sign if raise_it else alpha * sign
            tol = ZERO_TOL * max(1.0, float(np.abs(alpha[nonbasic]).max(initial=0.0)))
            cand = np.flatnonzero(nonbasic & (gain > tol))
            if cand.size == 0:
                return False
            slack = np.maximum(-d[cand] * sign[cand], 0.0)
            # Harris on the dual side: the largest pivot within the loosened step
            t_max = float(((slack + DUAL_HARRIS_TOL) / gain[cand]).min())
            ties = cand[slack / gain[cand] <= t_max]
            j = int(ties[np.argmax(gain[ties])])
            leaving = self.basis[r]
            x[leaving] = lo[leaving] if raise_it else hi[leaving]
            self.basis[r] = j
            self.iterations += 1
        return False

    def _polish(self, cost):
        for _ in range(POLISH_ROUNDS):
            if not self._dual_cleanup(cost):
                break
            lu = lu_factor(self.A[:, self.basis])
            pi = self._refine_duals(lu, cost)
            d = self._reduced_costs(cost, pi)
            self.pi = pi
            nonbasic = self._free() & (self.hi > self.lo)
            at_lo = self.x <= self.lo
            wrong = np.where(at_lo, d, -d)[nonbasic]
            if wrong.size == 0 or float(wrong.max()) <= OPT_TOL:
                return
            self._iterate(cost, accurate=True)
        lu = lu_factor(self.A[:, self.basis])
        self.pi = self._refine_duals(lu, cost)

    # -- public API --------------------------------------------------------
    def maximize(self, c) -> SimplexResult:
        c = np.asarray(c, dtype=float)
        n, m = self.n, self.m
        cost = np.concatenate([c, np.zeros(2 * m)])
        start = self.iterations
        if m:
            self._iterate(cost)
            self._polish(cost)
            pi = self.pi
        else:
            self.x[:n] = np.where(c > 0, self.hi[:n], self.lo[:n])
            pi = np.zeros((1, 0))
        xv = self.x[:n].copy()
        value = math.fsum(c * xv)
        return SimplexResult(value, self.certificate(c, pi), xv, self.iterations - start)

    def minimize(self, c) -> SimplexResult:
        """Minimum of ``c @ x``; ``bound`` is a certified lower bound."""
        res = self.maximize(-np.asarray(c, dtype=float))
        return SimplexResult(-res.value, -res.bound, res.x, res.iterations)

    def certificate(self, c, pi) -> float:
        """Upper bound on ``max c @ x`` implied by multipliers ``pi``."""
        n = self.n
        c = np.asarray(c, float)
        parts = np.atleast_2d(np.asarray(pi, float))   # one row, or a head/tail pair
        if not parts.size:
            return math.fsum(np.maximum(c * self.lo[:n], c * self.hi[:n]))
        d = accurate_matvec(np.hstack([-self.A[:, :n].T] * len(parts)), parts.ravel(), base=c)
        terms = list(np.maximum(d * self.lo[:n], d * self.hi[:n]))
        rows = np.where(parts.sum(axis=0) > 0, self.row_hi, self.row_lo)
        for part in parts:
            p, e = exact_products(part, rows)
            terms += p.tolist() + e.tolist()
        return math.fsum(terms)
