"""Finite actions of a group by permutations and how much they look like the group.

A :class:`HomGraph` stores the images ``sigma^{s_i}`` of the generators.  For
an element ``g = t_1 t_2 ... t_k`` (product order), ``sigma^g v`` applies
``t_k`` first, so following the labeled edges of a path from ``v`` reads the
word right to left.  This is the convention under which lifting a microstate
along the Cayley ball is a homomorphism.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cayley import CayleyBall, GroupSpec, build_ball, letter_move, sphere_sizes


@dataclass(frozen=True, eq=False)
class HomGraph:
    """An action on ``{0..n-1}``: ``perms[i]`` is the permutation for ``s_{i+1}``."""

    perms: np.ndarray
    inverses: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        perms = np.array(self.perms, dtype=np.int64, copy=True)
        if perms.ndim != 2 or perms.shape[1] < 1:
            raise ValueError("perms must be an (r, n) array with n >= 1")
        n = perms.shape[1]
        for i, p in enumerate(perms):
            if not np.array_equal(np.sort(p), np.arange(n)):
                raise ValueError(f"generator {i + 1} is not a permutation of 0..{n - 1}")
        inv = np.empty_like(perms)
        for i, p in enumerate(perms):
            inv[i, p] = np.arange(n)
        perms.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "perms", perms)
        object.__setattr__(self, "inverses", inv)

    @property
    def n(self) -> int:
        return self.perms.shape[1]

    @property
    def r(self) -> int:
        return self.perms.shape[0]

    @functools.cached_property
    def moves(self) -> np.ndarray:
        """``(2r, n)`` array of the permutations for ``s_1, s_1^-1, s_2, ...``."""
        out = np.empty((2 * self.r, self.n), dtype=np.int64)
        out[0::2] = self.perms
        out[1::2] = self.inverses
        out.setflags(write=False)
        return out

    def neighbor_sites(self, v: int) -> np.ndarray:
        """The ``2r`` sites ``sigma^s v`` for ``s`` in ``S``, with repetition."""
        return self.moves[:, v]

    def to_dict(self) -> dict:
        return {"n": self.n, "perms": self.perms.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HomGraph":
        hom = cls(np.asarray(d["perms"], dtype=np.int64))
        if "n" in d and int(d["n"]) != hom.n:
            raise ValueError(f"declared n={d['n']} but permutations act on {hom.n} points")
        return hom


@dataclass(frozen=True)
class Validation:
    ok: bool
    relator: tuple[int, ...] | None = None
    vertex: int | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def apply(hom: HomGraph, word, v):
    """``sigma^g(v)`` for the element ``g`` spelled by ``word`` (product order).

    ``v`` may be an integer or an array of vertices.
    """
    moves = hom.moves
    out = np.asarray(v)
    for letter in reversed(tuple(word)):
        out = moves[letter_move(letter)][out]
    return int(out) if np.ndim(out) == 0 else out


def validate(hom: HomGraph, spec: GroupSpec) -> Validation:
    """Check that ``hom`` defines an action of the group described by ``spec``."""
    if hom.r != spec.r:
        return Validation(False, message=f"hom has {hom.r} generators, group has {spec.r}")
    everyone = np.arange(hom.n)
    for rel in spec.relator_words():
        image = apply(hom, rel, everyone)
        bad = np.flatnonzero(image != everyone)
        if bad.size:
            v = int(bad[0])
            return Validation(False, tuple(rel), v,
                              f"relator {rel} moves vertex {v} to {int(image[v])}")
    return Validation(True)


# --- constructions ----------------------------------------------------------

def identity_hom(r: int, n: int = 1) -> HomGraph:
    return HomGraph(np.tile(np.arange(n), (r, 1)))


def cycle_hom(n: int) -> HomGraph:
    """The ``n``-cycle as an action of the integers (``s: v -> v+1``)."""
    return HomGraph((np.arange(n)[None, :] + 1) % n)


def torus_hom(dims) -> HomGraph:
    """Coordinate shifts on the discrete torus ``prod Z_{d_i}``, an action of ``Z^r``."""
    dims = tuple(int(d) for d in dims)
    n = math.prod(dims)
    coords = np.array(np.unravel_index(np.arange(n), dims))
    perms = []
    for i, d in enumerate(dims):
        shifted = coords.copy()
        shifted[i] = (shifted[i] + 1) % d
        perms.append(np.ravel_multi_index(tuple(shifted), dims))
    return HomGraph(np.array(perms))


def _random_cycle_type(rng, n: int, m: int) -> np.ndarray:
    # uniformly random permutation all of whose cycles have length m
    order = rng.permutation(n)
    perm = np.empty(n, dtype=np.int64)
    for block in order.reshape(-1, m):
        perm[block] = np.roll(block, -1)
    return perm


def random_hom(spec: GroupSpec, n: int, seed) -> HomGraph:
    """Random action: uniform permutations for free generators, uniformly random
    products of disjoint ``m``-cycles for cyclic factors of order ``m``."""
    rng = np.random.default_rng(seed)
    if spec.family == "free":
        return HomGraph(np.array([rng.permutation(n) for _ in range(spec.r)]))
    if spec.family == "free_product_cyclic":
        perms = []
        for m in spec.orders:
            if n % m:
                raise ValueError(f"n={n} is not divisible by cyclic order {m}")
            perms.append(_random_cycle_type(rng, n, m))
        return HomGraph(np.array(perms))
    raise ValueError(f"random actions are only provided for free groups and free products "
                     f"of cyclic groups, not {spec.family!r}")


# --- local similarity to the Cayley graph -----------------------------------

def ball_images(hom: HomGraph, ball: CayleyBall, vertices=None) -> np.ndarray:
    """``img[b, k] = sigma^{g_b}(vertices[k])`` for every ball element ``g_b``."""
    if vertices is None:
        vertices = np.arange(hom.n)
    vertices = np.asarray(vertices, dtype=np.int64)
    moves = hom.moves
    img = np.empty((ball.size, vertices.size), dtype=np.int64)
    img[0] = vertices
    for b in range(1, ball.size):
        img[b] = moves[ball.parent_move[b]][img[ball.parent[b]]]
    return img


def good_vertices(hom: HomGraph, ball: CayleyBall, vertices=None) -> np.ndarray:
    """Boolean mask: is the radius-R ball around each vertex a labeled copy of ``ball``?

    The only candidate isomorphism is ``g -> sigma^g v``; it is one iff it is
    injective and the action creates no labeled edge between image vertices
    other than the images of Cayley edges.  A radius-0 ball is a bare vertex
    and always matches; loops at the vertex only enter from radius 1 on.
    """
    n = hom.n
    if vertices is None:
        vertices = np.arange(n)
    vertices = np.atleast_1d(np.asarray(vertices, dtype=np.int64))
    m = vertices.size
    if ball.radius == 0:
        return np.ones(m, dtype=bool)
    if ball.size > n:
        return np.zeros(m, dtype=bool)
    img = ball_images(hom, ball, vertices)
    good = np.ones(m, dtype=bool)
    if ball.size > 1:
        srt = np.sort(img, axis=0)
        good &= ~np.any(srt[1:] == srt[:-1], axis=0)
    # membership of (vertex u, column c) in the image of column c
    cols = np.broadcast_to(np.arange(m), img.shape)
    keys = np.sort((img + cols * n).ravel())
    for i in range(hom.r):
        target = hom.perms[i][img]
        inside = ball.step[2 * i]
        has = inside >= 0
        if np.any(has):
            good &= np.all(target[has] == img[inside[has]], axis=0)
        if np.any(~has):
            k = target[~has] + cols[~has] * n
            pos = np.minimum(np.searchsorted(keys, k), keys.size - 1)
            good &= ~np.any(keys[pos] == k, axis=0)
    return good


def ball_isomorphic(hom: HomGraph, v: int, R: int, ball: CayleyBall) -> bool:
    """Whether the radius-``R`` ball around ``v`` is a labeled copy of ``ball``."""
    if ball.radius != R:
        raise ValueError("ball radius does not match R")
    return bool(good_vertices(hom, ball, [v])[0])


def delta_R(hom: HomGraph, R: int, ball: CayleyBall | None = None, spec: GroupSpec | None = None) -> float:
    """Fraction of vertices whose radius-``R`` ball is not a copy of the Cayley ball."""
    if ball is None:
        ball = build_ball(spec, R)
    if ball.radius != R:
        raise ValueError("ball radius does not match R")
    return 1.0 - float(np.count_nonzero(good_vertices(hom, ball))) / hom.n


@dataclass(frozen=True)
class DeltaResult:
    value: float
    argmin_R: int
    deltas: tuple[float, ...]
    slack: float


def Delta(hom: HomGraph, spec: GroupSpec, R_max: int) -> DeltaResult:
    """``min_{R <= R_max} 9 (2/3)^R + 6 delta_R``.

    Overestimates the infimum over all radii by at most ``9 (2/3)^R_max``.
    Balls larger than the vertex set cannot embed, so they are never built.
    """
    if R_max < 0:
        raise ValueError("R_max must be nonnegative")
    deltas: list[float] = []
    for R in range(R_max + 1):
        if deltas and deltas[-1] == 1.0:
            deltas.append(1.0)
            continue
        if _ball_size_exceeds(spec, R, hom.n):
            deltas.append(1.0)
            continue
        if R > spec.r_max:
            raise ValueError(f"R={R} exceeds the configured r_max={spec.r_max}")
        deltas.append(delta_R(hom, R, build_ball(spec, R)))
    values = [9 * (2 / 3) ** R + 6 * d for R, d in enumerate(deltas)]
    best = int(np.argmin(values))
    return DeltaResult(values[best], best, tuple(deltas), 9 * (2 / 3) ** R_max)


def _ball_size_exceeds(spec: GroupSpec, R: int, n: int) -> bool:
    return sum(sphere_sizes(spec, R)) > n


def fixed_point_fraction(hom: HomGraph, word) -> float:
    everyone = np.arange(hom.n)
    return float(np.mean(apply(hom, word, everyone) == everyone))


# --- periodic measures and orbit copies -------------------------------------

@dataclass(frozen=True, eq=False)
class Orbit:
    """A finite set with a group action and an alphabet labeling.

    Point ``p`` stands for the configuration ``g -> labels[sigma^g p]``; the set
    of these configurations is a finite orbit of the shift.
    """

    hom: HomGraph
    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if labels.shape != (self.hom.n,):
            raise ValueError("one label per orbit point is required")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.hom.n


@dataclass(frozen=True, eq=False)
class PeriodicMeasure:
    """``sum_i weights[i] * Unif(orbits[i])``."""

    orbits: tuple[Orbit, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.orbits) == 0 or w.shape != (len(self.orbits),):
            raise ValueError("one weight per orbit is required")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "orbits", tuple(self.orbits))
        object.__setattr__(self, "weights", w)

    def validate(self, spec: GroupSpec) -> Validation:
        for k, orb in enumerate(self.orbits):
            check = validate(orb.hom, spec)
            if not check:
                return Validation(False, check.relator, check.vertex, f"orbit {k}: {check.message}")
        return Validation(True)


def orbit_copy_construction(pm: PeriodicMeasure, multiplicities) -> tuple[HomGraph, np.ndarray]:
    """Disjoint union of ``m_i`` copies of each orbit, labeled by the root value.

    The empirical distribution of the returned microstate is
    ``sum_i m_i |O_i| / (sum_j m_j |O_j|) * Unif(O_i)`` at every depth.
    """
    mult = [int(m) for m in multiplicities]
    if not mult:
        raise ValueError("multiplicity list is empty")
    if len(mult) != len(pm.orbits) or any(m < 1 for m in mult):
        raise ValueError("need one positive multiplicity per orbit")
    r = pm.orbits[0].hom.r
    perms, labels = [], []
    offset = 0
    for orb, m in zip(pm.orbits, mult):
        if orb.hom.r != r:
            raise ValueError("orbits act with different numbers of generators")
        for _ in range(m):
            perms.append(orb.hom.perms + offset)
            labels.append(orb.labels)
            offset += orb.size
    return HomGraph(np.concatenate(perms, axis=1)), np.concatenate(labels)


def multiplicity_select(weights, orbit_sizes, n_target: int) -> tuple[list[int], float]:
    """Choose copy counts so orbit point-shares approximate ``weights``.

    Minimizes ``max_i |m_i k_i / sum_j m_j k_j - a_i|`` over ``m_i >= 1`` with
    ``sum m_i k_i <= n_target``; ties go to the largest total.  Returns the
    multiplicities and the achieved error.
    """
    a = np.asarray(weights, dtype=float)
    k = np.asarray(orbit_sizes, dtype=np.int64)
    if a.shape != k.shape or a.size == 0:
        raise ValueError("weights and orbit sizes must align")
    if np.any(a < 0) or abs(a.sum() - 1) > 1e-12:
        raise ValueError("weights must be a probability vector")
    if n_target < k.sum():
        raise ValueError(f"n_target={n_target} is below the one-copy-each size {int(k.sum())}")
    best: tuple | None = None
    exhaustive = a.size <= 10
    for total in range(int(k.sum()), n_target + 1):
        ideal = a * total / k
        if exhaustive:
            lo = np.maximum(1, np.floor(ideal)).astype(np.int64)
            candidates = (lo + np.array(bits) for bits in itertools.product((0, 1), repeat=a.size))
        else:
            candidates = [np.maximum(1, np.rint(ideal)).astype(np.int64)]
        for m in candidates:
            size = int(m @ k)
            if size > n_target:
                continue
            err = float(np.max(np.abs(m * k / size - a)))
            key = (round(err, 15), -size)
            if best is None or key < best[0]:
                best = (key, m.tolist(), err)
    return best[1], best[2]
