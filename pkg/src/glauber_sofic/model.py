"""Nearest-neighbor spin models, heat-bath kernels and finite Gibbs measures.

Letters are integers ``0..k-1``.  A site ``v`` of a finite action sees the
``2r`` neighbors ``sigma^s v`` for ``s`` in ``S = (s_1, s_1^-1, ..., s_r^-1)``,
listed with multiplicity.  A loop (``sigma^s v = v``) carries the flipped
letter, so it contributes ``J(a, a)`` to the local energy of ``x^{v->a}``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .cayley import GroupSpec, build_ball, element_of
from .homgraph import HomGraph

DENSE_BUDGET = 2 ** 20


@dataclass(frozen=True)
class SpinModel:
    """Alphabet ``{0..k-1}``, symmetric pair potential ``J`` and field ``h``."""

    J: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        h = np.array(self.h, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError(f"J must be a square matrix, got shape {J.shape}")
        k = J.shape[0]
        if k < 2:
            raise ValueError("the alphabet needs at least two letters")
        if h.shape != (k,):
            raise ValueError(f"h must have length {k}, got shape {h.shape}")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(h))):
            raise ValueError("J and h must be finite")
        bad = np.argwhere(~np.isclose(J, J.T, rtol=0.0, atol=1e-12))
        if bad.size:
            a, b = bad[0]
            raise ValueError(f"J is not symmetric: J[{a},{b}]={J[a, b]} but J[{b},{a}]={J[b, a]}")
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    @property
    def k(self) -> int:
        return self.J.shape[0]

    @classmethod
    def ising(cls, beta: float, field: float = 0.0) -> "SpinModel":
        """``J(a,b) = -beta s(a)s(b)``, ``h(a) = -field s(a)`` with ``s = (-1, +1)``."""
        s = np.array([-1.0, 1.0])
        return cls(-beta * np.outer(s, s), -field * s)

    @classmethod
    def free(cls, k: int = 2) -> "SpinModel":
        return cls(np.zeros((k, k)), np.zeros(k))

    def to_dict(self) -> dict:
        return {"alphabet": self.k, "J": self.J.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SpinModel":
        if d.get("preset") == "ising":
            return cls.ising(float(d.get("beta", 0.0)), float(d.get("B", 0.0)))
        if "preset" in d:
            raise ValueError(f"unknown model preset {d['preset']!r}")
        if "alphabet" not in d and "J" not in d:
            raise ValueError("a model needs 'preset', 'alphabet' or 'J'")
        k = int(d["alphabet"]) if "alphabet" in d else len(d["J"])
        J = np.asarray(d.get("J", np.zeros((k, k))), dtype=float)
        h = np.asarray(d.get("h", np.zeros(k)), dtype=float)
        if J.shape != (k, k):
            raise ValueError(f"J must be {k}x{k} for alphabet {k}, got shape {J.shape}")
        return cls(J, h)


# --- local quantities ----------------------------------------------------------

def phi(model: SpinModel, x_v: int, nbrs) -> float:
    """``h(x_v) + sum_s J(x_v, nbr_s)`` over the neighbor letters, with multiplicity."""
    nbrs = np.asarray(nbrs, dtype=np.int64)
    return float(model.h[x_v] + model.J[x_v, nbrs].sum())


def flip_energies(model: SpinModel, nbr_labels, loops=0) -> np.ndarray:
    """``Phi_v(x^{v->a})`` for every letter ``a``.

    ``nbr_labels`` has shape ``(..., m)`` and lists the letters at the
    non-loop neighbors; ``loops`` counts neighbor slots equal to ``v`` itself.
    Returns shape ``(..., k)``.
    """
    nbr_labels = np.asarray(nbr_labels, dtype=np.int64)
    E = model.J[:, nbr_labels].sum(axis=-1)          # (k, ...)
    E = np.moveaxis(E, 0, -1) + model.h
    if np.any(loops):
        E = E + np.asarray(loops)[..., None] * np.diag(model.J)
    return E


def kernel_from_energies(E: np.ndarray) -> np.ndarray:
    return softmax(-E, axis=-1)


def _site_context(moves: np.ndarray, v: int):
    nb = moves[:, v]
    loop = nb == v
    return nb[~loop], int(loop.sum())


def kernel(model: SpinModel, x, v: int, graph) -> np.ndarray:
    """Heat-bath law ``c_v(x, .)`` at site ``v``.

    ``graph`` is a :class:`HomGraph` (``x`` a microstate) or a
    :class:`CayleyBall` (``x`` a pattern, ``v`` an interior ball vertex).
    """
    x = np.asarray(x, dtype=np.int64)
    if isinstance(graph, HomGraph):
        nb, loops = _site_context(graph.moves, v)
    else:
        nb = graph.neighbor_sites(v)
        loops = int(np.count_nonzero(nb == v))
        nb = nb[nb != v]
    return kernel_from_energies(flip_energies(model, x[..., nb], loops))


def site_kernels(model: SpinModel, hom: HomGraph, X: np.ndarray, v: int) -> np.ndarray:
    """Kernels at site ``v`` for a batch of microstates ``X`` of shape ``(N, n)``."""
    nb, loops = _site_context(hom.moves, v)
    return kernel_from_energies(flip_energies(model, X[:, nb], loops))


def total_energy(model: SpinModel, hom: HomGraph, x) -> np.ndarray | float:
    """``U(x) = sum_v h(x_v) + sum_v sum_i J(x_v, x(sigma^{s_i} v))``; batches over leading axes."""
    x = np.asarray(x, dtype=np.int64)
    U = model.h[x].sum(axis=-1)
    for perm in hom.perms:
        U = U + model.J[x, x[..., perm]].sum(axis=-1)
    return U if np.ndim(U) else float(U)


def u_bounds(model: SpinModel, r: int) -> tuple[float, float]:
    """Per-site energy range ``(u_min, u_max)`` for an ``r``-generator action."""
    u_min = float(np.min(model.h + r * model.J.min(axis=1)))
    u_max = float(np.max(model.h + r * model.J.max(axis=1)))
    return u_min, u_max


# --- dense states ----------------------------------------------------------------

def check_dense_budget(k: int, n: int, budget: int = DENSE_BUDGET) -> int:
    if n * np.log2(k) > np.log2(budget) + 1e-9:
        raise ValueError(f"{k}^{n} microstates exceed the dense-state budget of {budget}")
    return k ** n


def microstate_index(x, k: int) -> np.ndarray | int:
    """Index ``sum_v x_v k^(n-1-v)``; site 0 is the most significant digit."""
    x = np.asarray(x, dtype=np.int64)
    n = x.shape[-1]
    weights = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    idx = x @ weights
    return idx if np.ndim(idx) else int(idx)


def all_microstates(k: int, n: int) -> np.ndarray:
    """Every microstate, row ``i`` having index ``i``; shape ``(k^n, n)``."""
    N = check_dense_budget(k, n)
    idx = np.arange(N, dtype=np.int64)
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] // powers) % k).astype(np.int8)


def energy_vector(model: SpinModel, hom: HomGraph) -> np.ndarray:
    return total_energy(model, hom, all_microstates(model.k, hom.n))


def gibbs_finite(model: SpinModel, hom: HomGraph) -> tuple[np.ndarray, float]:
    """The finite Gibbs state ``exp(-U)/Z`` as a dense vector, and ``log Z``."""
    logw = -energy_vector(model, hom)
    log_Z = float(logsumexp(logw))
    return np.exp(logw - log_Z), log_Z


def log_partition_cycle(model: SpinModel, n: int) -> float:
    """``log Z`` of the ``n``-cycle via the symmetrized transfer matrix."""
    if n < 1:
        raise ValueError("cycle length must be positive")
    half = model.h / 2
    T = np.exp(-(half[:, None] + model.J + half[None, :]))
    lam = np.linalg.eigvalsh(T)
    top = np.max(np.abs(lam))
    return float(n * np.log(top) + np.log(np.sum((lam / top) ** n)))


# --- dependence coefficients -------------------------------------------------------

def _root_kernel_table(model: SpinModel, spec: GroupSpec):
    """Kernels at ``e`` for every labeling of its distinct neighbors.

    Returns ``(elements, table)`` where ``table`` has one axis of length ``k``
    per distinct neighbor element followed by the letter axis.
    """
    ball = build_ball(spec, 1)
    nb = ball.step[:, 0]
    loops = int(np.count_nonzero(nb == 0))
    distinct, counts = np.unique(nb[nb != 0], return_counts=True)
    k = model.k
    m = len(distinct)
    if k ** m > DENSE_BUDGET:
        raise ValueError("neighbor configuration space exceeds the enumeration budget")
    configs = np.array(list(itertools.product(range(k), repeat=m)), dtype=np.int64).reshape(-1, m)
    E = model.h + loops * np.diag(model.J) + (model.J[:, configs] * counts).sum(axis=-1).T
    table = kernel_from_energies(E).reshape((k,) * m + (k,))
    return [ball.elements[b] for b in distinct], table


def _root_coefficient(table: np.ndarray, axis: int) -> float:
    Q = np.moveaxis(table, axis, 0)
    diff = np.abs(Q[:, None] - Q[None, :]).sum(axis=-1)
    return float(diff.max())


def dependence_coefficient(model: SpinModel, spec: GroupSpec, u, v) -> float:
    """Largest L1 change of ``c_u`` caused by changing the letter at ``v`` alone.

    ``u`` and ``v`` are words in the generators.  The Cayley graph is
    invariant under right translation, so only ``v u^-1`` matters.
    """
    u_inv = tuple(-x for x in reversed(tuple(u)))
    g = element_of(spec, tuple(v) + u_inv)
    elements, table = _root_kernel_table(model, spec)
    if g not in elements:
        return 0.0
    return _root_coefficient(table, elements.index(g))


def M_constant(model: SpinModel, spec: GroupSpec) -> float:
    """``sum_h c_h(e) (3r)^{|h|}`` over ``B(e,1)``; at most ``12 r^2``."""
    elements, table = _root_kernel_table(model, spec)
    # c_h(e) = c_e(h^-1) and S is closed under inverses
    total = sum(_root_coefficient(table, i) for i in range(len(elements)))
    M = 3 * spec.r * total
    bound = 12 * spec.r ** 2
    if M > bound + 1e-9:
        raise AssertionError(f"M={M} exceeds the bound {bound}")
    return M
