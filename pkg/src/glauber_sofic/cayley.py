"""Finitely generated group families and their rooted, labeled Cayley balls.

The Cayley graph is the *left* Cayley graph: an ``i``-labeled directed edge
``(g, s_i g)`` for every element ``g`` and generator ``s_i``.  Distances ignore
edge directions.

Group elements are stored in a family-specific normal form.  Words are tuples
of signed letters in product order (``i`` for ``s_i``, ``-i`` for its inverse,
1-based).  The ordered generating multiset ``S`` is
``(s_1, s_1^-1, s_2, s_2^-1, ...)``; a *move* ``j`` in ``0..2r-1`` indexes it.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .rewriting import RewritingSystem, UndecidableAtBudget, free_reduce, letter_rank

R_MAX_DEFAULT = 12
FAMILIES = ("free", "free_abelian", "free_product_cyclic", "presented")


def move_letter(j: int) -> int:
    """Signed letter of move ``j`` (``s_1, s_1^-1, s_2, ...``)."""
    return (j // 2 + 1) * (1 if j % 2 == 0 else -1)


def letter_move(letter: int) -> int:
    return letter_rank(letter)


@dataclass(frozen=True)
class GroupSpec:
    """A supported group family with ``r`` generators.

    Use the classmethod constructors rather than the raw fields.
    """

    family: str
    r: int
    orders: tuple[int, ...] = ()
    relators: tuple[tuple[int, ...], ...] = ()
    r_max: int = R_MAX_DEFAULT
    rewrite_budget: int = 200

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown group family {self.family!r}")
        if self.r < 1:
            raise ValueError("a group needs at least one generator")
        if self.family == "free_product_cyclic":
            if len(self.orders) != self.r or any(m < 2 for m in self.orders):
                raise ValueError("cyclic orders must be integers >= 2, one per generator")
        if self.family == "presented":
            for rel in self.relators:
                if not rel or any(x == 0 or abs(x) > self.r for x in rel):
                    raise ValueError(f"relator {rel!r} is not a nonempty word over {self.r} generators")
                if free_reduce(rel) != tuple(rel):
                    raise ValueError(f"relator {rel!r} is not freely reduced")

    @classmethod
    def free(cls, r: int) -> "GroupSpec":
        return cls("free", r)

    @classmethod
    def integers(cls) -> "GroupSpec":
        return cls("free", 1)

    @classmethod
    def free_abelian(cls, r: int) -> "GroupSpec":
        return cls("free_abelian", r)

    @classmethod
    def free_product_cyclic(cls, orders) -> "GroupSpec":
        orders = tuple(int(m) for m in orders)
        return cls("free_product_cyclic", len(orders), orders=orders)

    @classmethod
    def presented(cls, r: int, relators, rewrite_budget: int = 200) -> "GroupSpec":
        rels = tuple(tuple(int(x) for x in w) for w in relators)
        return cls("presented", r, relators=rels, rewrite_budget=rewrite_budget)

    @property
    def degree(self) -> int:
        return 2 * self.r

    def relator_words(self) -> list[tuple[int, ...]]:
        """Defining relations, as words that every valid action must kill."""
        if self.family == "free":
            return []
        if self.family == "free_abelian":
            return [(i, j, -i, -j) for i in range(1, self.r + 1) for j in range(i + 1, self.r + 1)]
        if self.family == "free_product_cyclic":
            return [(i + 1,) * m for i, m in enumerate(self.orders)]
        return [tuple(w) for w in self.relators]

    def to_dict(self) -> dict:
        d: dict = {"family": self.family, "r": self.r}
        if self.orders:
            d["orders"] = list(self.orders)
        if self.relators:
            d["relators"] = [list(w) for w in self.relators]
        if self.r_max != R_MAX_DEFAULT:
            d["r_max"] = self.r_max
        if self.family == "presented":
            d["rewrite_budget"] = self.rewrite_budget
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroupSpec":
        spec = cls._from_family(d)
        if "r_max" in d:
            r_max = int(d["r_max"])
            if r_max < 0:
                raise ValueError("r_max must be nonnegative")
            spec = replace(spec, r_max=r_max)
        return spec

    @classmethod
    def _from_family(cls, d: dict) -> "GroupSpec":
        family = d.get("family")
        aliases = {"Z": ("free", 1), "integers": ("free", 1)}
        if family in aliases:
            return cls(*aliases[family])
        if family == "free":
            return cls.free(int(d["r"]))
        if family == "free_abelian":
            return cls.free_abelian(int(d["r"]))
        if family == "free_product_cyclic":
            return cls.free_product_cyclic(d["orders"])
        if family == "presented":
            return cls.presented(int(d["r"]), d.get("relators", []), int(d.get("rewrite_budget", 200)))
        raise ValueError(f"unknown group family {family!r}")


# --- normal forms -----------------------------------------------------------

class _Free:
    def __init__(self, spec):
        self.spec = spec

    identity = ()

    def left(self, letter, g):
        if g and g[0] == -letter:
            return g[1:]
        return (letter,) + g

    def word(self, g):
        return g


class _FreeAbelian:
    def __init__(self, spec):
        self.identity = (0,) * spec.r

    def left(self, letter, g):
        i = abs(letter) - 1
        return g[:i] + (g[i] + (1 if letter > 0 else -1),) + g[i + 1:]

    def word(self, g):
        w = []
        for i, e in enumerate(g):
            w.extend([(i + 1) if e > 0 else -(i + 1)] * abs(e))
        return tuple(w)


class _FreeProductCyclic:
    """Syllable normal form ``((factor, exponent), ...)``, adjacent factors distinct."""

    identity = ()

    def __init__(self, spec):
        self.orders = spec.orders

    def left(self, letter, g):
        i = abs(letter) - 1
        m = self.orders[i]
        d = 1 if letter > 0 else m - 1
        if g and g[0][0] == i:
            e = (g[0][1] + d) % m
            return g[1:] if e == 0 else ((i, e),) + g[1:]
        return ((i, d),) + g

    def word(self, g):
        w = []
        for i, e in g:
            m = self.orders[i]
            w.extend([i + 1] * e if e <= m // 2 else [-(i + 1)] * (m - e))
        return tuple(w)


class _Presented:
    identity = ()

    def __init__(self, spec):
        self.system = _rewriting_system(spec)

    def left(self, letter, g):
        return self.system.reduce((letter,) + g)

    def word(self, g):
        return g


@functools.lru_cache(maxsize=32)
def _rewriting_system(spec: GroupSpec) -> RewritingSystem:
    return RewritingSystem(spec.r, spec.relators, max_rules=spec.rewrite_budget,
                           max_pairs=100 * spec.rewrite_budget)


def normal_form_family(spec: GroupSpec):
    return {
        "free": _Free,
        "free_abelian": _FreeAbelian,
        "free_product_cyclic": _FreeProductCyclic,
        "presented": _Presented,
    }[spec.family](spec)


def element_of(spec: GroupSpec, word) -> object:
    """Normal form of the product of ``word`` (product order)."""
    fam = normal_form_family(spec)
    g = fam.identity
    for letter in reversed(tuple(word)):
        g = fam.left(letter, g)
    return g


# --- balls ------------------------------------------------------------------

def _frozen(a) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CayleyBall:
    """The closed radius-``R`` ball around the identity with induced labeled edges.

    ``step[j, b]`` is the index of ``S[j] * elements[b]`` or ``-1`` if that
    element lies outside the ball.  Vertex ``b > 0`` equals
    ``S[parent_move[b]] * elements[parent[b]]``.
    """

    spec: GroupSpec
    radius: int
    elements: tuple
    words: tuple
    depth: np.ndarray
    parent: np.ndarray
    parent_move: np.ndarray
    step: np.ndarray
    edges: tuple = field(repr=False)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def size(self) -> int:
        return len(self.elements)

    def index(self, element) -> int:
        return self._lookup[element]

    @functools.cached_property
    def _lookup(self) -> dict:
        return {g: i for i, g in enumerate(self.elements)}

    def neighbor_sites(self, b: int) -> np.ndarray:
        """Ball indices of ``s b`` for ``s`` in ``S`` (needs depth < radius)."""
        nb = self.step[:, b]
        if np.any(nb < 0):
            raise ValueError(f"vertex {b} is on the boundary of the radius-{self.radius} ball")
        return nb

    def sphere_sizes(self) -> list[int]:
        return np.bincount(self.depth, minlength=self.radius + 1).tolist()


def build_ball(spec: GroupSpec, R: int, max_vertices: int = 2_000_000) -> CayleyBall:
    """BFS-enumerate the radius-``R`` Cayley ball.

    Vertices are ordered by depth, then lexicographically by canonical word
    (``s_1 < s_1^-1 < s_2 < ...``), so smaller balls are prefixes of larger ones.
    """
    if R < 0:
        raise ValueError("radius must be nonnegative")
    if R > spec.r_max:
        raise ValueError(f"radius {R} exceeds configured R_max={spec.r_max}")
    return _build_ball(spec, R, max_vertices)


@functools.lru_cache(maxsize=128)
def _build_ball(spec: GroupSpec, R: int, max_vertices: int) -> CayleyBall:
    fam = normal_form_family(spec)
    nmoves = spec.degree
    letters = [move_letter(j) for j in range(nmoves)]
    layers = [[fam.identity]]
    seen = {fam.identity}
    for _ in range(R):
        nxt = []
        for g in layers[-1]:
            for letter in letters:
                h = fam.left(letter, g)
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        if len(seen) > max_vertices:
            raise ValueError(f"radius-{R} ball exceeds {max_vertices} vertices")
        nxt.sort(key=lambda g: tuple(letter_rank(x) for x in fam.word(g)))
        layers.append(nxt)

    elements = tuple(g for layer in layers for g in layer)
    index = {g: i for i, g in enumerate(elements)}
    depth = np.concatenate([np.full(len(layer), d, dtype=np.int64) for d, layer in enumerate(layers)])
    step = np.full((nmoves, len(elements)), -1, dtype=np.int64)
    for b, g in enumerate(elements):
        for j, letter in enumerate(letters):
            step[j, b] = index.get(fam.left(letter, g), -1)

    parent = np.full(len(elements), -1, dtype=np.int64)
    parent_move = np.full(len(elements), -1, dtype=np.int64)
    for b in range(1, len(elements)):
        # first (move, parent) pair in canonical order reaching b from the previous layer
        for j in range(nmoves):
            inv_j = j + 1 if j % 2 == 0 else j - 1
            p = step[inv_j, b]
            if p >= 0 and depth[p] == depth[b] - 1:
                parent[b], parent_move[b] = p, j
                break

    edges = tuple(
        (b, i, int(step[2 * i, b]))
        for b in range(len(elements))
        for i in range(spec.r)
        if step[2 * i, b] >= 0
    )
    return CayleyBall(
        spec=spec,
        radius=R,
        elements=elements,
        words=tuple(fam.word(g) for g in elements),
        depth=_frozen(depth),
        parent=_frozen(parent),
        parent_move=_frozen(parent_move),
        step=_frozen(step),
        edges=edges,
    )


# --- growth and metric tails -------------------------------------------------

def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _poly_add(a, b):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


def _cyclic_growth(m: int) -> list[int]:
    # growth polynomial of Z_m with generating set {s, s^-1}
    poly = [1] + [2] * ((m - 1) // 2)
    if m % 2 == 0:
        poly.append(1)
    return poly


def growth_series(spec: GroupSpec):
    """Growth series as ``(numerator, denominator)`` integer coefficient lists,
    or ``None`` when no closed form is known (presented groups)."""
    if spec.family == "free_abelian":
        num, den = [1], [1]
        for _ in range(spec.r):
            num, den = _poly_mul(num, [1, 1]), _poly_mul(den, [1, -1])
        return num, den
    if spec.family == "free":
        factors = [([1, 1], [1, -1])] * spec.r
    elif spec.family == "free_product_cyclic":
        factors = [(_cyclic_growth(m), [1]) for m in spec.orders]
    else:
        return None
    # free product: 1/G - 1 = sum_i (1/G_i - 1)
    num = [1]
    for n_i, _ in factors:
        num = _poly_mul(num, n_i)
    den = [-(len(factors) - 1) * c for c in num]
    for i, (_, d_i) in enumerate(factors):
        term = list(d_i)
        for k, (n_k, _) in enumerate(factors):
            if k != i:
                term = _poly_mul(term, n_k)
        den = _poly_add(den, term)
    return num, den


def _series_coefficients(num, den, count: int) -> list[int]:
    if den[0] not in (1, -1):
        raise ValueError("growth series denominator must have unit constant term")
    coeffs: list[int] = []
    for n in range(count):
        c = num[n] if n < len(num) else 0
        for k in range(1, min(n, len(den) - 1) + 1):
            c -= den[k] * coeffs[n - k]
        coeffs.append(c * den[0])
    return coeffs


def sphere_sizes(spec: GroupSpec, R: int) -> list[int]:
    """Number of group elements at each word length ``0..R``."""
    series = growth_series(spec)
    if series is None:
        return build_ball(spec, R).sphere_sizes()
    return _series_coefficients(*series, R + 1)


def geometric_tail_bound(r: int, R: int) -> float:
    """Closed-form bound on sum_{|g|>R} (3r)^-|g| from |S_n| <= 2r(2r-1)^(n-1)."""
    q = (2 * r - 1) / (3 * r)
    return (2 * r / (2 * r - 1)) * q ** (R + 1) / (1 - q)


def metric_tail(spec: GroupSpec, R: int, exact: bool = True) -> float:
    """Upper bound (exact when possible) on the weight sum_{|g|>R} (3r)^-|g|.

    Always at most ``3 (2/3)^(R+1)``.
    """
    r = spec.r
    bound = geometric_tail_bound(r, R)
    if not exact:
        return bound
    base = 3 * r
    series = growth_series(spec)
    if series is not None:
        num, den = series
        if len(den) == 1:
            # finite group: the growth series is a polynomial
            coeffs = _series_coefficients(num, den, len(num))
            return float(sum(Fraction(c, base ** n) for n, c in enumerate(coeffs) if n > R))
        coeffs = _series_coefficients(num, den, R + 402)
        total = Fraction(0)
        for n in range(R + 1, R + 402):
            total += Fraction(coeffs[n], base ** n)
            remainder = geometric_tail_bound(r, n)
            if remainder < 1e-17 * float(total):
                break
        return min(float(total) + remainder, bound)
    try:
        rm = spec.r_max
        sizes = sphere_sizes(spec, rm)
    except (UndecidableAtBudget, ValueError):
        return bound
    q = (2 * r - 1) / base

    def beyond(k):
        # sum over n > k >= rm using |S_n| <= |S_rm| (2r-1)^(n-rm)
        return sizes[rm] * base ** -float(rm) * q ** (k + 1 - rm) / (1 - q)

    if R >= rm:
        return min(beyond(R), bound)
    partial = sum(Fraction(sizes[n], base ** n) for n in range(R + 1, rm + 1))
    return min(float(partial) + beyond(rm), bound)
