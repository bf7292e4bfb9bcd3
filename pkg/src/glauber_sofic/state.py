"""Lifts, empirical pattern distributions and distances between them.

A pattern of radius ``R`` is a labeling of the Cayley ball ``B(e, R)`` in the
ball's fixed vertex order.  Smaller balls are prefixes of larger ones, so
restricting a pattern is truncation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .cayley import CayleyBall, GroupSpec, build_ball, metric_tail
from .homgraph import HomGraph, ball_images, good_vertices
from .model import SpinModel, check_dense_budget

OT_MAX_ATOMS = 2000


def _unique_rows(rows: np.ndarray, k: int):
    """Lexicographically sorted unique rows and the inverse map."""
    m = rows.shape[1]
    if m * np.log2(max(k, 2)) < 62:
        powers = k ** np.arange(m - 1, -1, -1, dtype=np.int64)
        codes, inv = np.unique(rows.astype(np.int64) @ powers, return_inverse=True)
        uniq = ((codes[:, None] // powers) % k).astype(np.int8)
        return uniq, inv.ravel()
    uniq, inv = np.unique(rows, axis=0, return_inverse=True)
    return uniq, inv.ravel()


def spec_hash(spec: GroupSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PatternDistribution:
    """Probability weights on radius-``R`` patterns, stored as unique sorted rows."""

    ball: CayleyBall
    k: int
    patterns: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pats = np.asarray(self.patterns, dtype=np.int8)
        w = np.asarray(self.weights, dtype=float)
        if pats.ndim != 2 or pats.shape[1] != self.ball.size:
            raise ValueError(f"patterns must have {self.ball.size} columns, got shape {pats.shape}")
        if pats.shape[0] != w.shape[0]:
            raise ValueError("one weight per pattern is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a probability vector")
        if pats.size and (pats.min() < 0 or pats.max() >= self.k):
            raise ValueError(f"pattern letters must lie in 0..{self.k - 1}")
        pats.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "patterns", pats)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_rows(cls, ball: CayleyBall, k: int, rows, weights=None, drop_zero: bool = True):
        """Aggregate possibly repeated rows with weights (uniform if omitted)."""
        rows = np.asarray(rows, dtype=np.int8).reshape(-1, ball.size)
        if weights is None:
            weights = np.full(rows.shape[0], 1.0 / rows.shape[0])
        weights = np.asarray(weights, dtype=float)
        if drop_zero:
            keep = weights > 0
            rows, weights = rows[keep], weights[keep]
        uniq, inv = _unique_rows(rows, k)
        w = np.bincount(inv, weights=weights, minlength=uniq.shape[0])
        return cls(ball, k, uniq, w / w.sum())

    @property
    def radius(self) -> int:
        return self.ball.radius

    @property
    def spec(self) -> GroupSpec:
        return self.ball.spec

    def __len__(self) -> int:
        return self.weights.shape[0]

    def _index(self) -> dict:
        cached = self.__dict__.get("_idx")
        if cached is None:
            cached = {row.tobytes(): i for i, row in enumerate(self.patterns)}
            object.__setattr__(self, "_idx", cached)
        return cached

    def prob(self, pattern) -> float:
        key = np.asarray(pattern, dtype=np.int8).tobytes()
        i = self._index().get(key)
        return 0.0 if i is None else float(self.weights[i])

    def probs(self, rows) -> np.ndarray:
        """Weights of many patterns at once (0 off the support)."""
        idx = self._index()
        rows = np.asarray(rows, dtype=np.int8)
        out = np.zeros(rows.shape[0])
        for j, row in enumerate(rows):
            i = idx.get(row.tobytes())
            if i is not None:
                out[j] = self.weights[i]
        return out

    def as_dict(self) -> dict[tuple, float]:
        return {tuple(int(a) for a in row): float(w) for row, w in zip(self.patterns, self.weights)}

    def full_support(self) -> bool:
        return len(self) == self.k ** self.ball.size

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "alphabet": self.k,
            "spec_hash": spec_hash(self.spec),
            "atoms": [{"labels": row.tolist(), "weight": float(w)}
                      for row, w in zip(self.patterns, self.weights)],
        }

    @classmethod
    def from_dict(cls, d: dict, spec: GroupSpec) -> "PatternDistribution":
        if d.get("spec_hash") not in (None, spec_hash(spec)):
            raise ValueError("pattern distribution was recorded for a different group")
        ball = build_ball(spec, int(d["radius"]))
        rows = [a["labels"] for a in d["atoms"]]
        return cls.from_rows(ball, int(d["alphabet"]), rows, [a["weight"] for a in d["atoms"]])


def restrict(P: PatternDistribution, R: int) -> PatternDistribution:
    """Marginal on the smaller ball ``B(e, R)``."""
    if R > P.radius or R < 0:
        raise ValueError(f"cannot restrict a radius-{P.radius} distribution to radius {R}")
    if R == P.radius:
        return P
    small = build_ball(P.spec, R)
    return PatternDistribution.from_rows(small, P.k, P.patterns[:, :small.size], P.weights)


# --- lifts and empirical distributions -------------------------------------------

def lift(hom: HomGraph, x, v: int, R: int, ball: CayleyBall) -> np.ndarray:
    """The pattern ``g -> x(sigma^g v)`` on the ball."""
    if ball.radius != R:
        raise ValueError("ball radius does not match R")
    x = np.asarray(x)
    return x[ball_images(hom, ball, [v])[:, 0]].astype(np.int8)


def empirical_micro(hom: HomGraph, x, R: int, ball: CayleyBall, k: int | None = None) -> PatternDistribution:
    """Uniform average over vertices of the lifted patterns of ``x``."""
    if ball.radius != R:
        raise ValueError("ball radius does not match R")
    x = np.asarray(x)
    if k is None:
        k = int(x.max()) + 1 if x.size else 1
        k = max(k, 2)
    rows = x[ball_images(hom, ball)].T
    return PatternDistribution.from_rows(ball, k, rows)


def empirical_samples(hom: HomGraph, X, ball: CayleyBall, k: int) -> PatternDistribution:
    """Average of the empirical distributions of the microstates in ``X``."""
    X = np.asarray(X)
    img = ball_images(hom, ball)
    rows = X[:, img].transpose(0, 2, 1).reshape(-1, ball.size)
    return PatternDistribution.from_rows(ball, k, rows)


def _configs(k: int, m: int) -> np.ndarray:
    idx = np.arange(k ** m, dtype=np.int64)
    powers = k ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] // powers) % k).astype(np.int8)


def _local_patterns(img_col: np.ndarray, k: int):
    """Distinct sites seen from one vertex and the pattern for each of their configurations."""
    sites, pos = np.unique(img_col, return_inverse=True)
    configs = _configs(k, sites.size)
    return sites, configs[:, pos]


def _dense_patterns(hom: HomGraph, zeta, ball: CayleyBall, k: int, vertices) -> PatternDistribution:
    zeta = np.asarray(zeta, dtype=float)
    n = hom.n
    if zeta.shape != (k ** n,):
        raise ValueError(f"dense state must have length {k}^{n}")
    check_dense_budget(k, n)
    tensor = zeta.reshape((k,) * n)
    img = ball_images(hom, ball, vertices)
    rows, weights = [], []
    for col in range(img.shape[1]):
        sites, pats = _local_patterns(img[:, col], k)
        others = tuple(a for a in range(n) if a not in set(sites.tolist()))
        marg = tensor.sum(axis=others).ravel() if others else tensor.ravel()
        rows.append(pats)
        weights.append(marg)
    return PatternDistribution.from_rows(ball, k, np.concatenate(rows), np.concatenate(weights))


def empirical_state(hom: HomGraph, zeta, R: int, ball: CayleyBall, k: int) -> PatternDistribution:
    """``P_zeta``: the ``zeta``-average of the empirical distributions of microstates."""
    if ball.radius != R:
        raise ValueError("ball radius does not match R")
    return _dense_patterns(hom, zeta, ball, k, np.arange(hom.n))


def good_vertex_empirical(hom: HomGraph, zeta, R: int, ball: CayleyBall, k: int) -> PatternDistribution:
    """Like :func:`empirical_state` but averaged only over vertices whose ball is a Cayley copy."""
    if ball.radius != R:
        raise ValueError("ball radius does not match R")
    good = np.flatnonzero(good_vertices(hom, ball))
    if good.size == 0:
        raise ValueError(f"no vertex has a radius-{R} ball isomorphic to the Cayley ball")
    return _dense_patterns(hom, zeta, ball, k, good)


def empirical_product(hom: HomGraph, marginals, ball: CayleyBall) -> PatternDistribution:
    """Exact ``P_zeta`` for a product state with per-site laws ``marginals`` of shape ``(n, k)``."""
    marginals = np.asarray(marginals, dtype=float)
    n, k = marginals.shape
    if n != hom.n:
        raise ValueError("one marginal per vertex is required")
    img = ball_images(hom, ball)
    rows, weights = [], []
    for col in range(n):
        sites, pats = _local_patterns(img[:, col], k)
        configs = _configs(k, sites.size)
        w = np.prod(marginals[sites[None, :], configs], axis=1)
        rows.append(pats)
        weights.append(w / n)
    return PatternDistribution.from_rows(ball, k, np.concatenate(rows), np.concatenate(weights))


def product_dense(marginals) -> np.ndarray:
    """Dense vector of the product state with per-site laws ``marginals`` (site 0 most significant)."""
    marginals = np.asarray(marginals, dtype=float)
    n, k = marginals.shape
    check_dense_budget(k, n)
    out = np.ones(1)
    for row in marginals:
        out = np.kron(out, row)
    return out


# --- distances ------------------------------------------------------------------

def _aligned(P: PatternDistribution, Q: PatternDistribution):
    if P.radius != Q.radius:
        raise ValueError(f"radius mismatch: {P.radius} vs {Q.radius}")
    allp = np.concatenate([P.patterns, Q.patterns])
    uniq, inv = _unique_rows(allp, max(P.k, Q.k))
    p = np.bincount(inv[:len(P)], weights=P.weights, minlength=len(uniq))
    q = np.bincount(inv[len(P):], weights=Q.weights, minlength=len(uniq))
    return uniq, p, q


def tv_distance(P: PatternDistribution, Q: PatternDistribution) -> float:
    _, p, q = _aligned(P, Q)
    return 0.5 * float(np.abs(p - q).sum())


def pattern_cost(ball: CayleyBall, A, B) -> np.ndarray:
    """``sum_g (3r)^{-|g|} [a(g) != b(g)]`` for all pairs of rows."""
    w = (3.0 * ball.spec.r) ** (-ball.depth.astype(float))
    A = np.asarray(A)
    B = np.asarray(B)
    return ((A[:, None, :] != B[None, :, :]) * w).sum(axis=-1)


def transport_cost(P: PatternDistribution, Q: PatternDistribution, max_atoms: int = OT_MAX_ATOMS) -> float:
    """Exact optimal transport between ``P`` and ``Q`` under :func:`pattern_cost`."""
    if P.radius != Q.radius:
        raise ValueError(f"radius mismatch: {P.radius} vs {Q.radius}")
    m1, m2 = len(P), len(Q)
    if max(m1, m2) > max_atoms:
        raise ValueError(f"pattern supports ({m1}, {m2}) exceed the exact transport budget of {max_atoms}")
    C = pattern_cost(P.ball, P.patterns, Q.patterns)
    if m1 == 1 or m2 == 1:
        # the coupling is forced
        return float((C * np.outer(P.weights, Q.weights)).sum())
    rows = sp.kron(sp.identity(m1), np.ones((1, m2)))
    cols = sp.kron(np.ones((1, m1)), sp.identity(m2))
    A = sp.vstack([rows, cols]).tocsr()
    b = np.concatenate([P.weights, Q.weights])
    # one redundant equality keeps the system consistent under rounding
    res = linprog(C.ravel(), A_eq=A[:-1], b_eq=b[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def dbar_truncated(P: PatternDistribution, Q: PatternDistribution, spec: GroupSpec | None = None,
                   max_atoms: int = OT_MAX_ATOMS) -> tuple[float, float]:
    """Certified interval ``(lower, upper)`` for the transportation distance of any
    two measures with these depth-``R`` marginals."""
    spec = spec or P.spec
    lower = transport_cost(P, Q, max_atoms)
    return lower, lower + metric_tail(spec, P.radius)


# --- target measures --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExplicitMarginals:
    dist: PatternDistribution

    def marginal(self, ball: CayleyBall) -> PatternDistribution:
        return restrict(self.dist, ball.radius)


@dataclass(frozen=True)
class ProductMeasure:
    """I.i.d. letters with law ``p``."""

    p: tuple

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("product measure base must be a probability vector")
        object.__setattr__(self, "p", tuple(p.tolist()))

    @property
    def k(self) -> int:
        return len(self.p)

    def marginal(self, ball: CayleyBall) -> PatternDistribution:
        check_dense_budget(self.k, ball.size)
        rows = _configs(self.k, ball.size)
        w = np.prod(np.asarray(self.p)[rows], axis=1)
        return PatternDistribution.from_rows(ball, self.k, rows, w)


@dataclass(frozen=True, eq=False)
class ChainGibbs:
    """The translation-invariant Gibbs measure of ``model`` on the integers."""

    model: SpinModel

    def marginal(self, ball: CayleyBall) -> PatternDistribution:
        spec = ball.spec
        if spec.r != 1 or spec.family not in ("free", "free_abelian"):
            raise ValueError("chain Gibbs marginals are defined on the integers only")
        k = self.model.k
        half = self.model.h / 2
        T = np.exp(-(half[:, None] + self.model.J + half[None, :]))
        lam, vecs = np.linalg.eigh(T)
        top = lam[-1]
        psi = np.abs(vecs[:, -1])
        pos = np.array([sum(1 if a > 0 else -1 for a in w) for w in ball.words])
        order = np.argsort(pos)
        R = ball.radius
        check_dense_budget(k, ball.size)
        seq = _configs(k, ball.size)            # letters at positions -R..R
        w = psi[seq[:, 0]] * psi[seq[:, -1]]
        for i in range(ball.size - 1):
            w = w * T[seq[:, i], seq[:, i + 1]]
        w = w / top ** (2 * R)
        rows = np.empty_like(seq)
        rows[:, order] = seq
        return PatternDistribution.from_rows(ball, k, rows, w / w.sum())
