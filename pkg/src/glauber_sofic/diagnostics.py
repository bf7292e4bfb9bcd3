"""Depth-R tests of the Gibbs property for pattern distributions.

For a pattern ``y`` on ``B(e, R)`` with ``R >= 1`` the root's neighbors lie in
the ball, so ``Phi_e(y)`` and the heat-bath law ``c_e(y, .)`` are computable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cayley import GroupSpec
from .dynamics import F0
from .model import SpinModel, _root_kernel_table, flip_energies, gibbs_finite, kernel_from_energies
from .state import PatternDistribution, restrict


def _root_energies(mu: PatternDistribution, model: SpinModel) -> np.ndarray:
    """``Phi_e(y^{e->b})`` for every support pattern ``y`` and letter ``b``; shape ``(m, k)``."""
    if mu.radius < 1:
        raise ValueError("the root's neighborhood needs a pattern radius of at least 1")
    nb = mu.ball.step[:, 0]
    loops = int(np.count_nonzero(nb == 0))
    return flip_energies(model, mu.patterns[:, nb[nb != 0]], loops)


def _flip_probs(mu: PatternDistribution) -> np.ndarray:
    """``mu(y^{e->b})`` for every support pattern ``y`` and letter ``b``; shape ``(m, k)``."""
    out = np.empty((len(mu), mu.k))
    for b in range(mu.k):
        flipped = mu.patterns.copy()
        flipped[:, 0] = b
        out[:, b] = mu.probs(flipped)
    return out


def _terms(mu: PatternDistribution, model: SpinModel, a: int) -> np.ndarray:
    """Per-pattern summands ``mu(y) F0(...)`` of the statistic for letter ``a``."""
    E = _root_energies(mu, model)
    flips = _flip_probs(mu)
    root = mu.patterns[:, 0].astype(np.int64)
    rows = np.arange(len(mu))
    p = mu.weights
    q = flips[:, a]
    terms = np.zeros(len(mu))
    move = root != a
    zero = move & (q == 0)
    terms[zero] = -p[zero]
    live = move & (q > 0)
    # s = exp(Phi(y^{e->a}) - Phi(y)) * q / p
    log_s = E[rows[live], a] - E[rows[live], root[live]] + np.log(q[live]) - np.log(p[live])
    terms[live] = p[live] * F0(np.exp(log_s))
    return terms


def delta_aR(mu: PatternDistribution, model: SpinModel, a: int, spec: GroupSpec | None = None) -> float:
    """``sum_y mu(y) F0(exp(-Phi_e(y))/exp(-Phi_e(y^{e->a})) * mu(y^{e->a})/mu(y))``; always ``<= 0``."""
    return float(_terms(mu, model, a).sum())


def kernel_lower_bound(model: SpinModel, spec: GroupSpec) -> float:
    """``min c_e(x, a)`` over all labelings of ``B(e, 1)`` and letters."""
    _, table = _root_kernel_table(model, spec)
    return float(table.min())


@dataclass
class Witness:
    R: int
    letter: int
    pattern: tuple
    mass: float
    term: float
    support_violation: bool
    deficit: float

    def to_dict(self) -> dict:
        return {"R": self.R, "letter": self.letter, "pattern": list(self.pattern),
                "mass": self.mass, "term": self.term,
                "support_violation": self.support_violation, "deficit": self.deficit}


@dataclass
class GibbsReport:
    radius: int
    deltas: dict = field(default_factory=dict)
    full_support: dict = field(default_factory=dict)
    conditional_error: dict = field(default_factory=dict)
    witness: Witness | None = None
    verdict: str = ""

    @property
    def consistent(self) -> bool:
        return self.verdict.startswith("ConsistentToDepth")

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "verdict": self.verdict,
            "deltas": [{"R": R, "letter": a, "value": v} for (R, a), v in sorted(self.deltas.items())],
            "full_support": {str(R): v for R, v in self.full_support.items()},
            "conditional_error": {str(R): v for R, v in self.conditional_error.items()},
            "witness": None if self.witness is None else self.witness.to_dict(),
        }


def conditional_error(mu: PatternDistribution, model: SpinModel) -> tuple[float, int]:
    """Largest gap between the root's conditional law under ``mu`` and ``c_e``, and where it occurs."""
    flips = _flip_probs(mu)
    cond = flips / flips.sum(axis=1, keepdims=True)
    c = kernel_from_energies(_root_energies(mu, model))
    gap = np.abs(cond - c).max(axis=1)
    i = int(np.argmax(gap))
    return float(gap[i]), i


def non_gibbs_certificate(mu: PatternDistribution, model: SpinModel, spec: GroupSpec | None = None,
                          atol: float = 1e-12) -> Witness | None:
    """The pattern and letter with the most negative summand, or ``None`` if all vanish.

    The deficit ``s |term| / 2`` (``s`` the kernel lower bound) is a rate of
    free-energy decrease per good vertex for states whose good-vertex
    empirical marginal is close to ``mu``.
    """
    spec = spec or mu.spec
    best = None
    for a in range(mu.k):
        terms = _terms(mu, model, a)
        i = int(np.argmin(terms))
        if best is None or terms[i] < best[0]:
            best = (float(terms[i]), a, i)
    term, a, i = best
    if term >= -atol:
        return None
    y = mu.patterns[i].copy()
    y_flip = y.copy()
    y_flip[0] = a
    s = kernel_lower_bound(model, spec)
    return Witness(mu.radius, a, tuple(int(b) for b in y), float(mu.weights[i]), term,
                   mu.prob(y_flip) == 0.0, s * abs(term) / 2)


def gibbs_conditional_check(mu: PatternDistribution, model: SpinModel, tol: float,
                            spec: GroupSpec | None = None) -> GibbsReport:
    """Per-depth comparison of root conditionals with the kernel, plus the statistic for every letter."""
    spec = spec or mu.spec
    R = mu.radius
    if R < 1:
        raise ValueError("the Gibbs check needs a pattern radius of at least 1")
    report = GibbsReport(R)
    worst_R, worst_err = None, -1.0
    for Rp in range(1, R + 1):
        m = restrict(mu, Rp)
        for a in range(mu.k):
            report.deltas[(Rp, a)] = delta_aR(m, model, a)
        report.full_support[Rp] = m.full_support()
        err, _ = conditional_error(m, model)
        report.conditional_error[Rp] = err
        if err > worst_err:
            worst_R, worst_err = Rp, err
    if worst_err <= tol:
        report.verdict = f"ConsistentToDepth({R})"
        return report
    m = restrict(mu, worst_R)
    report.witness = non_gibbs_certificate(m, model, spec)
    if report.witness is None:
        # conditionals disagree while every summand vanishes: point at the largest gap
        err, i = conditional_error(m, model)
        report.witness = Witness(worst_R, int(m.patterns[i][0]), tuple(int(b) for b in m.patterns[i]),
                                 float(m.weights[i]), 0.0, False, 0.0)
    report.verdict = "Violation"
    return report


def is_gibbs_finite(zeta, model: SpinModel, hom, tol: float) -> bool:
    """Whether the dense state equals ``exp(-U)/Z`` entrywise within ``tol``."""
    if math.isinf(tol):
        return True
    xi, _ = gibbs_finite(model, hom)
    return bool(np.max(np.abs(np.asarray(zeta, dtype=float) - xi)) <= tol)
