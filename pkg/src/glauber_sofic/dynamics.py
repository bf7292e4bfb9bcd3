"""Glauber dynamics on a finite action: master equation, sampling, free energy.

Every site rings at rate 1 and resamples its letter from the heat-bath
kernel.  Dense states are vectors over all microstates in the index order of
:func:`glauber_sofic.model.microstate_index`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp, xlogy
from scipy.stats import poisson

from .cayley import build_ball
from .homgraph import Delta, HomGraph
from .model import (M_constant, SpinModel, all_microstates, check_dense_budget, energy_vector,
                    flip_energies)
from .state import (dbar_truncated, empirical_product, empirical_samples, empirical_state,
                    product_dense)

DENSE_MATRIX_LIMIT = 512


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    site: int
    new_letter: int


def F0(s):
    """``s - s log s - 1`` for ``s > 0`` and ``-1`` at ``s = 0``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ValueError("F0 is defined for s >= 0 only")
    out = s_arr - xlogy(s_arr, s_arr) - 1.0
    return out if out.ndim else float(out)


def tv_dense(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


class Glauber:
    """Dense Glauber generator for a model on a finite action.

    ``generator[y, x]`` is the jump rate from ``x`` to ``y``; columns sum to 0.
    """

    def __init__(self, model: SpinModel, hom: HomGraph):
        self.model = model
        self.hom = hom
        self.k = model.k
        self.n = hom.n
        self.N = check_dense_budget(self.k, self.n)
        self.X = all_microstates(self.k, self.n)
        self.U = energy_vector(model, hom)
        self._kernels: list[np.ndarray] | None = None
        self._G = None

    def place(self, v: int) -> int:
        return self.k ** (self.n - 1 - v)

    def log_kernels(self, v: int) -> np.ndarray:
        """``log c_v(x, a)`` for every microstate ``x``; shape ``(N, k)``."""
        if self._kernels is None:
            self._kernels = [None] * self.n
        if self._kernels[v] is None:
            moves = self.hom.moves
            nb = moves[:, v]
            loop = nb == v
            E = flip_energies(self.model, self.X[:, nb[~loop]], int(loop.sum()))
            self._kernels[v] = -E - logsumexp(-E, axis=1, keepdims=True)
        return self._kernels[v]

    def flip_index(self, v: int, a: int) -> np.ndarray:
        idx = np.arange(self.N, dtype=np.int64)
        return idx + (a - self.X[:, v].astype(np.int64)) * self.place(v)

    @property
    def generator(self):
        if self._G is None:
            rows, cols, vals = [], [], []
            exit_rate = np.zeros(self.N)
            src = np.arange(self.N, dtype=np.int64)
            for v in range(self.n):
                c = np.exp(self.log_kernels(v))
                xv = self.X[:, v]
                for a in range(self.k):
                    move = xv != a
                    rate = c[move, a]
                    rows.append(self.flip_index(v, a)[move])
                    cols.append(src[move])
                    vals.append(rate)
                    exit_rate[move] += rate
            rows.append(src)
            cols.append(src)
            vals.append(-exit_rate)
            G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.N, self.N))
            self._G = G.toarray() if self.N <= DENSE_MATRIX_LIMIT else G
        return self._G

    def rhs(self, zeta) -> np.ndarray:
        return self.generator @ np.asarray(zeta, dtype=float)

    def _check_state(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (self.N,):
            raise ValueError(f"dense state must have length {self.N}")
        return zeta

    def evolve(self, zeta0, t: float, dt: float = 1e-3) -> np.ndarray:
        """RK4 integration of the master equation up to time ``t``."""
        return self.evolve_path(zeta0, [t], dt)[-1]

    def evolve_path(self, zeta0, times, dt: float = 1e-3) -> list[np.ndarray]:
        """States at each time in the nondecreasing list ``times``.

        Each interval is split into equal steps no longer than ``dt``.
        """
        zeta = self._check_state(zeta0).copy()
        if dt <= 0:
            raise ValueError("dt must be positive")
        G = self.generator
        out = []
        now = 0.0
        for t in times:
            if t < now:
                raise ValueError("times must be nondecreasing and nonnegative")
            span = t - now
            steps = math.ceil(span / dt - 1e-9) if span > 0 else 0
            h = span / steps if steps else 0.0
            for _ in range(steps):
                k1 = G @ zeta
                k2 = G @ (zeta + 0.5 * h * k1)
                k3 = G @ (zeta + 0.5 * h * k2)
                k4 = G @ (zeta + h * k3)
                zeta = zeta + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                low = zeta.min()
                if low < -1e-10:
                    raise FloatingPointError(
                        f"probability {low:.3e} went negative; use a smaller dt than {dt}")
                np.clip(zeta, 0.0, None, out=zeta)
                zeta /= zeta.sum()
            now = t
            out.append(zeta.copy())
        return out

    def evolve_uniformized(self, zeta0, t: float, tol: float = 1e-14) -> np.ndarray:
        """Exact evolution as a Poisson mixture of powers of ``I + G/n``."""
        zeta = self._check_state(zeta0).copy()
        if t == 0:
            return zeta
        rate = float(self.n)
        G = self.generator
        mean = rate * t
        kmax = int(poisson.isf(tol, mean)) + 1
        weights = poisson.pmf(np.arange(kmax + 1), mean)
        acc = weights[0] * zeta
        for j in range(1, kmax + 1):
            zeta = zeta + (G @ zeta) / rate
            acc += weights[j] * zeta
        return acc / acc.sum()

    def free_energy(self, zeta) -> float:
        zeta = self._check_state(zeta)
        return float(zeta @ self.U + xlogy(zeta, zeta).sum())

    def free_energy_derivative(self, zeta) -> float:
        """``sum_{x,v,a} F0(s) zeta(x) c_v(x,a)`` with
        ``s = c_v(x,x_v)/c_v(x,a) * zeta(x^{v->a})/zeta(x)``, in log space."""
        zeta = self._check_state(zeta)
        if np.any(zeta <= 0):
            raise ValueError("the derivative formula needs a full-support state; "
                             "evolve for a positive time first")
        log_zeta = np.log(zeta)
        total = 0.0
        rows = np.arange(self.N)
        for v in range(self.n):
            logc = self.log_kernels(v)
            xv = self.X[:, v].astype(np.int64)
            log_stay = logc[rows, xv]
            for a in range(self.k):
                move = xv != a
                y = self.flip_index(v, a)[move]
                log_A = log_zeta[move] + logc[move, a]
                log_B = log_zeta[y] + log_stay[move]
                A = np.exp(log_A)
                B = np.exp(log_B)
                total += float(np.sum(B - B * (log_B - log_A) - A))
        return total

    def a_matrix(self) -> np.ndarray:
        """``sum_v`` of the single-site heat-bath generators, indexed ``[x, y]``.

        Columns sum to zero and it annihilates ``exp(-U)``.
        """
        G = self.generator
        return np.asarray(G.toarray() if sp.issparse(G) else G)


# --- functional wrappers ---------------------------------------------------------

def master_rhs(model: SpinModel, hom: HomGraph, zeta) -> np.ndarray:
    return Glauber(model, hom).rhs(zeta)


def evolve_exact(model: SpinModel, hom: HomGraph, zeta0, t: float, dt: float = 1e-3) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return Glauber(model, hom).evolve(zeta0, t, dt)


def free_energy(model: SpinModel, hom: HomGraph, zeta) -> float:
    return Glauber(model, hom).free_energy(zeta)


def free_energy_derivative(model: SpinModel, hom: HomGraph, zeta) -> float:
    return Glauber(model, hom).free_energy_derivative(zeta)


# --- sampling ----------------------------------------------------------------------

def _resample(model: SpinModel, moves: np.ndarray, X: np.ndarray, rows: np.ndarray,
              sites: np.ndarray, u: np.ndarray) -> np.ndarray:
    """New letters for replicas ``rows`` ringing at ``sites`` with uniforms ``u``."""
    nb = moves[:, sites].T                      # (m, 2r)
    labels = X[rows[:, None], nb]
    loop = nb == sites[:, None]
    Jrows = model.J[labels]                     # (m, 2r, k), J symmetric
    Jrows = np.where(loop[..., None], np.diag(model.J), Jrows)
    E = model.h + Jrows.sum(axis=1)
    p = np.exp(-(E - E.min(axis=1, keepdims=True)))
    cum = np.cumsum(p, axis=1)
    draw = (u * cum[:, -1])[:, None] < cum
    return np.argmax(draw, axis=1).astype(X.dtype)


def sample_trajectory(model: SpinModel, hom: HomGraph, x0, t: float, seed):
    """One exact path: Poisson(n t) rings at uniform times, uniform sites, heat-bath draws."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    rng = np.random.default_rng(seed)
    x = np.array(x0, dtype=np.int8).reshape(1, -1)
    n = hom.n
    count = rng.poisson(n * t)
    times = np.sort(rng.uniform(0.0, t, size=count))
    sites = rng.integers(0, n, size=count)
    u = rng.random(count)
    moves = hom.moves
    row = np.zeros(1, dtype=np.int64)
    events = []
    for tau, v, w in zip(times, sites, u):
        a = _resample(model, moves, x, row, np.array([v]), np.array([w]))[0]
        x[0, v] = a
        events.append(TrajectoryEvent(float(tau), int(v), int(a)))
    return x[0], events


def sample_final_states(model: SpinModel, hom: HomGraph, X0, t: float, seed):
    """Independent replicas evolved to time ``t``, vectorized across replicas.

    ``X0`` has shape ``(runs, n)``.  Returns the final states and the number
    of rings per replica.
    """
    rng = np.random.default_rng(seed)
    X = np.array(X0, dtype=np.int8, copy=True)
    runs, n = X.shape
    counts = rng.poisson(n * t, size=runs)
    moves = hom.moves
    for j in range(int(counts.max()) if runs else 0):
        rows = np.flatnonzero(counts > j)
        sites = rng.integers(0, n, size=rows.size)
        u = rng.random(rows.size)
        X[rows, sites] = _resample(model, moves, X, rows, sites, u)
    return X, counts


def sample_product(marginals, runs: int, seed) -> np.ndarray:
    """``runs`` draws from the product state with per-site laws ``marginals``."""
    marginals = np.asarray(marginals, dtype=float)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(marginals, axis=1)
    u = rng.random((runs, marginals.shape[0], 1))
    return np.argmax(u * cum[:, -1:] < cum, axis=2).astype(np.int8)


# --- stability of empirical distributions ------------------------------------------

@dataclass
class StabilityReport:
    t: float
    measured_lower: float
    measured_upper: float
    initial_upper: float
    Delta_a: float
    Delta_b: float
    M: float
    bound: float
    method: str

    @property
    def passed(self) -> bool:
        return self.measured_upper <= self.bound

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def _empirical_at(model, hom, init, t, ball, k, samples, seed, dt):
    """Depth-R empirical distribution of the state at time ``t``.

    ``init`` is a dense vector or an ``(n, k)`` array of product marginals.
    Exact when the dense state fits the budget and ``samples`` is ``None``.
    """
    init = np.asarray(init, dtype=float)
    product = init.ndim == 2
    if samples is None:
        zeta0 = product_dense(init) if product else init
        zeta = Glauber(model, hom).evolve(zeta0, t, dt) if t > 0 else zeta0
        return empirical_state(hom, zeta, ball.radius, ball, k), "exact"
    if not product:
        raise ValueError("sampling needs a product initial state")
    if t == 0:
        return empirical_product(hom, init, ball), "exact"
    X0 = sample_product(init, samples, seed)
    X, _ = sample_final_states(model, hom, X0, t, seed + 1)
    return empirical_samples(hom, X, ball, k), f"sampled({samples})"


def stability_gap(hom_a: HomGraph, hom_b: HomGraph, model: SpinModel, init_a, init_b, t: float,
                  R: int, spec, R_max: int | None = None, samples: int | None = None,
                  seed: int = 0, dt: float = 1e-3) -> StabilityReport:
    """Compare the transport distance of the two empirical laws at time ``t`` with
    ``[(Delta_a + Delta_b) t + d0] exp(M t)``, ``d0`` the initial certified distance.

    With ``samples`` set, the time-``t`` laws are Monte Carlo estimates from
    product initial states.  Estimation noise can only raise the expected
    transport cost, so the comparison is not made easier by sampling.
    """
    ball = build_ball(spec, R)
    k = model.k
    Pa0, _ = _empirical_at(model, hom_a, init_a, 0.0, ball, k, samples, seed, dt)
    Pb0, _ = _empirical_at(model, hom_b, init_b, 0.0, ball, k, samples, seed + 10, dt)
    _, d0 = dbar_truncated(Pa0, Pb0, spec)
    Pa, method = _empirical_at(model, hom_a, init_a, t, ball, k, samples, seed, dt)
    Pb, _ = _empirical_at(model, hom_b, init_b, t, ball, k, samples, seed + 10, dt)
    lower, upper = dbar_truncated(Pa, Pb, spec)
    R_max = spec.r_max if R_max is None else R_max
    Da = Delta(hom_a, spec, R_max).value
    Db = Delta(hom_b, spec, R_max).value
    M = M_constant(model, spec)
    bound = ((Da + Db) * t + d0) * math.exp(M * t)
    return StabilityReport(t, lower, upper, d0, Da, Db, M, bound, method)
