"""Free energy density relative to a sequence of finite actions.

For one action and one neighborhood of the target we minimize the per-site
free energy ``(zeta(U) - H(zeta)) / n`` over dense states whose empirical
distribution is within ``eps`` of the target in the certified upper bound of
the truncated transportation distance.  The empirical distribution is linear
in ``zeta``, so with the coupling as an extra variable the program is convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import xlogy

from .cayley import GroupSpec, build_ball, metric_tail
from .homgraph import Delta, HomGraph, ball_images, cycle_hom, random_hom, torus_hom
from .model import (SpinModel, all_microstates, energy_vector, gibbs_finite,
                    log_partition_cycle, u_bounds)
from .state import (_unique_rows, dbar_truncated,
                    empirical_state, pattern_cost)

INF = math.inf


@dataclass
class FedCell:
    n: int
    epsilon: float
    R: int
    value: float
    status: str
    residual: float = math.nan
    zeta: np.ndarray | None = field(default=None, repr=False)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def row(self) -> dict:
        return {"n": self.n, "epsilon": self.epsilon, "R": self.R,
                "value_or_inf": "inf" if not self.finite else repr(float(self.value)),
                "status": self.status,
                "residual": "" if math.isnan(self.residual) else repr(float(self.residual))}


def _pattern_operator(hom: HomGraph, ball, k: int):
    """All patterns that occur in some lift and the sparse map ``zeta -> P_zeta``."""
    X = all_microstates(k, hom.n)
    img = ball_images(hom, ball)                      # (B, n)
    rows = X[:, img].transpose(0, 2, 1).reshape(-1, ball.size)
    uniq, inv = _unique_rows(rows, k)
    N, n = X.shape[0], hom.n
    cols = np.repeat(np.arange(N), n)
    L = sp.csr_matrix((np.full(N * n, 1.0 / n), (inv, cols)), shape=(uniq.shape[0], N))
    return uniq, L


def per_site_free_energy(U: np.ndarray, zeta: np.ndarray, n: int) -> float:
    return float((zeta @ U + xlogy(zeta, zeta).sum()) / n)


class _Cell:
    """Everything needed to solve one ``(hom, target, R)`` problem for several ``eps``."""

    def __init__(self, hom: HomGraph, model: SpinModel, target, R: int, spec: GroupSpec):
        self.hom, self.model, self.R, self.spec = hom, model, R, spec
        self.ball = build_ball(spec, R)
        self.k = model.k
        self.tail = metric_tail(spec, R)
        self.mu = target.marginal(self.ball)
        self.patterns, self.L = _pattern_operator(hom, self.ball, self.k)
        self.C = pattern_cost(self.ball, self.patterns, self.mu.patterns)
        self.U = energy_vector(model, hom)
        self.xi, self.log_Z = gibbs_finite(model, hom)
        self._gibbs_upper = None

    def verify(self, zeta) -> float:
        P = empirical_state(self.hom, zeta, self.R, self.ball, self.k)
        return dbar_truncated(P, self.mu, self.spec)[1]

    @property
    def gibbs_upper(self) -> float:
        if self._gibbs_upper is None:
            self._gibbs_upper = self.verify(self.xi)
        return self._gibbs_upper

    def objective(self, zeta) -> float:
        return per_site_free_energy(self.U, zeta, self.hom.n)

    def min_transport(self):
        """Smallest transport cost to the target over all dense states (an LP)."""
        m1, m2 = self.C.shape
        N = self.U.size
        # variables: zeta (N), coupling (m1*m2)
        row_sum = sp.kron(sp.identity(m1), np.ones((1, m2)))
        col_sum = sp.kron(np.ones((1, m1)), sp.identity(m2))
        A = sp.vstack([
            sp.hstack([self.L, -row_sum]),
            sp.hstack([sp.csr_matrix((m2, N)), col_sum]),
            sp.hstack([np.ones((1, N)), sp.csr_matrix((1, m1 * m2))]),
        ]).tocsr()
        b = np.concatenate([np.zeros(m1), self.mu.weights, [1.0]])
        c = np.concatenate([np.zeros(N), self.C.ravel()])
        res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        if res.status != 0:
            raise RuntimeError(f"feasibility LP failed: {res.message}")
        zeta = np.clip(res.x[:N], 0, None)
        return float(res.fun), zeta / zeta.sum()

    def solve(self, eps: float, solver: str = "CLARABEL") -> FedCell:
        n = self.hom.n
        budget = eps - self.tail
        if budget < 0:
            return FedCell(n, eps, self.R, INF, "empty: eps below the truncation tail")
        if self.gibbs_upper <= eps:
            return FedCell(n, eps, self.R, -self.log_Z / n, "gibbs", self.gibbs_upper, self.xi)
        best_cost, z_feas = self.min_transport()
        if best_cost > budget + 1e-12:
            return FedCell(n, eps, self.R, INF, "infeasible", best_cost + self.tail)
        z, status = self._convex(budget, solver)
        if z is None:
            res = self.verify(z_feas)
            return FedCell(n, eps, self.R, self.objective(z_feas), f"upper bound only ({status})",
                           res, z_feas)
        res = self.verify(z)
        if res > eps:
            z, res = self._repair(z, z_feas, eps)
            status = "repaired"
        return FedCell(n, eps, self.R, self.objective(z), status, res, z)

    def _convex(self, budget: float, solver: str):
        import cvxpy as cp

        N = self.U.size
        m1, m2 = self.C.shape
        z = cp.Variable(N, nonneg=True)
        pi = cp.Variable((m1, m2), nonneg=True)
        cons = [cp.sum(z) == 1,
                cp.sum(pi, axis=1) == self.L @ z,
                cp.sum(pi, axis=0) == self.mu.weights,
                cp.sum(cp.multiply(self.C, pi)) <= budget]
        obj = cp.Minimize((self.U @ z - cp.sum(cp.entr(z))) / self.hom.n)
        prob = cp.Problem(obj, cons)
        try:
            prob.solve(solver=solver)
        except cp.error.SolverError as exc:
            return None, f"solver error: {exc}"
        if prob.status not in ("optimal", "optimal_inaccurate") or z.value is None:
            return None, prob.status
        zeta = np.clip(z.value, 0, None)
        return zeta / zeta.sum(), prob.status

    def _repair(self, z, z_feas, eps):
        """Mix toward a feasible point until the verified residual is within ``eps``."""
        lo, hi = 0.0, 1.0
        best = (z_feas, self.verify(z_feas))
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            cand = (1 - mid) * z + mid * z_feas
            res = self.verify(cand)
            if res <= eps:
                hi, best = mid, (cand, res)
            else:
                lo = mid
        return best


def consistency_infimum(hom: HomGraph, model: SpinModel, target, eps: float, R: int,
                        spec: GroupSpec, solver: str = "CLARABEL") -> FedCell:
    """Minimal per-site free energy over states whose empirical law is ``eps``-close to ``target``."""
    return _Cell(hom, model, target, R, spec).solve(eps, solver)


# --- sequences -------------------------------------------------------------------

@dataclass
class SoficSequence:
    """A family of finite actions of ``spec`` of increasing size."""

    kind: str
    spec: GroupSpec
    sizes: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    homs: list = field(default_factory=list)

    def members(self) -> list[tuple[str, HomGraph]]:
        if self.kind == "cycles":
            out = [(str(n), cycle_hom(n)) for n in self.sizes]
        elif self.kind == "tori":
            out = [("x".join(map(str, d)), torus_hom(d)) for d in self.sizes]
        elif self.kind == "random":
            seeds = self.seeds or [0]
            out = [(f"{n}/seed{s}", random_hom(self.spec, n, s)) for n in self.sizes for s in seeds]
        elif self.kind == "explicit":
            out = [(str(i), h) for i, h in enumerate(self.homs)]
        else:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        ns = [h.n for _, h in out]
        if self.kind != "random" and any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("sequence sizes must be strictly increasing")
        return out

    def deltas(self, R_max: int | None = None) -> list:
        R_max = self.spec.r_max if R_max is None else R_max
        return [Delta(h, self.spec, R_max) for _, h in self.members()]


@dataclass
class FedEstimate:
    cells: list
    headline: float
    headline_cell: FedCell | None
    monotone: bool

    def rows(self) -> list[dict]:
        return [c.row() for c in self.cells]


def fed_estimate(seq: SoficSequence, model: SpinModel, target, eps_schedule, R: int,
                 solver: str = "CLARABEL") -> FedEstimate:
    """Table of consistency infima over members and a decreasing ``eps`` schedule.

    A state feasible for a small ``eps`` stays feasible for larger ones, so
    each cell also considers the states found for smaller ``eps``.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("epsilon schedule must be strictly decreasing")
    cells: list[FedCell] = []
    monotone = True
    for _, hom in seq.members():
        cell = _Cell(hom, model, target, R, seq.spec)
        solved = [cell.solve(e, solver) for e in reversed(eps_schedule)]
        for j in range(1, len(solved)):
            prev, cur = solved[j - 1], solved[j]
            if prev.value < cur.value:
                solved[j] = FedCell(cur.n, cur.epsilon, R, prev.value,
                                    f"{cur.status}; carried from eps={prev.epsilon}",
                                    cell.verify(prev.zeta) if prev.zeta is not None else prev.residual,
                                    prev.zeta)
        vals = [c.value for c in solved]
        monotone &= all(b <= a for a, b in zip(vals, vals[1:]))
        cells.extend(reversed(solved))
    headline, head = INF, None
    largest = max((c.n for c in cells), default=0)
    for c in cells:
        if c.n == largest and c.finite:
            if head is None or c.epsilon < head.epsilon:
                head, headline = c, c.value
    return FedEstimate(cells, headline, head, monotone)


def log_partition(hom: HomGraph, model: SpinModel, spec: GroupSpec | None = None) -> float:
    if hom.r == 1 and np.array_equal(hom.perms[0], np.roll(np.arange(hom.n), -1)):
        return log_partition_cycle(model, hom.n)
    return gibbs_finite(model, hom)[1]


def fed_via_logZ(seq: SoficSequence, model: SpinModel) -> float:
    """``-min_n log Z_n / n`` over the members, a stand-in for ``-liminf``."""
    vals = [log_partition(h, model) / h.n for _, h in seq.members()]
    return -min(vals)


def fed_bounds_check(value: float, model: SpinModel, r: int) -> bool:
    """``value`` is ``+inf`` or lies in ``[u_min - log k, u_max]``."""
    if value == INF:
        return True
    if not math.isfinite(value):
        return False
    u_min, u_max = u_bounds(model, r)
    return u_min - math.log(model.k) - 1e-12 <= value <= u_max + 1e-12
