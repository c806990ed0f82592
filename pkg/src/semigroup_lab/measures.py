"""Discrete measures on (itinerary cylinder, state cell) partitions.

A :class:`DiscreteMeasure` stores a dense ``(m**T, n_cells)`` mass array:
row ``r`` is the depth-``T`` cylinder with lexicographic index ``r``, column
``c`` the state cell ``c`` at the given resolution.  ``T = 0`` gives a bare
state measure with a single row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .systems import CircleSystem, FiniteSystem, GeneratorSystem, ShiftSystem, TorusSystem
from .words import Itinerary, word_array

NORM_TOL = 1e-12


@dataclass
class DiscreteMeasure:
    mass: np.ndarray
    m: int
    depth: int
    resolution: int | None

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if self.mass.ndim == 1:
            self.mass = self.mass[None, :]
        if self.mass.shape[0] != self.m ** self.depth:
            raise ValueError(f"expected {self.m ** self.depth} cylinder rows, got {self.mass.shape[0]}")
        if np.any(self.mass < -NORM_TOL):
            raise ValueError("masses must be nonnegative")
        if abs(self.mass.sum() - 1.0) > 1e-9:
            raise ValueError(f"measure is not normalised (total {self.mass.sum()!r})")

    @property
    def n_cells(self) -> int:
        return self.mass.shape[1]

    @property
    def state(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    @property
    def cylinders(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def compatible(self, other: "DiscreteMeasure") -> bool:
        return self.mass.shape == other.mass.shape and self.m == other.m and self.depth == other.depth

    def tv(self, other: "DiscreteMeasure") -> float:
        _check_same(self, other)
        return 0.5 * float(np.abs(self.mass - other.mass).sum())

    def mix(self, other: "DiscreteMeasure", theta: float) -> "DiscreteMeasure":
        _check_same(self, other)
        return DiscreteMeasure(theta * self.mass + (1 - theta) * other.mass, self.m, self.depth, self.resolution)

    def csv_rows(self):
        rows = []
        for r, c in zip(*np.nonzero(self.mass)):
            cell = f"{r}:{c}" if self.depth else f"{c}"
            rows.append((cell, float(self.mass[r, c])))
        return rows

    @classmethod
    def uniform(cls, n_cells: int, m: int = 1, depth: int = 0, resolution=None):
        rows = m ** depth
        return cls(np.full((rows, n_cells), 1.0 / (rows * n_cells)), m, depth, resolution)

    @classmethod
    def point_mass(cls, cell: int, n_cells: int, m: int = 1, depth: int = 0, row: int = 0, resolution=None):
        mass = np.zeros((m ** depth, n_cells))
        mass[row, cell] = 1.0
        return cls(mass, m, depth, resolution)


def _check_same(a: DiscreteMeasure, b: DiscreteMeasure):
    if not a.compatible(b):
        raise ValueError("discretization mismatch between measures")


# -- orbits as arrays ----------------------------------------------------------------

def _itinerary_prefix(it, n):
    if isinstance(it, Itinerary):
        return it.prefix(n)
    return np.asarray(it, dtype=np.int64)[:n]


def orbit_array(sys: GeneratorSystem, it, x, n: int, window: int = 1):
    """The first ``n`` orbit points along ``it`` as one batch.

    Circle points given as ``Fraction`` are iterated exactly on their
    numerators.  Shift points come back as windows of ``window`` symbols.
    """
    symbols = _itinerary_prefix(it, max(n - 1, 0))
    if isinstance(sys, ShiftSystem):
        x = np.asarray(x, dtype=np.int64)
        if x.size < n - 1 + window:
            raise ValueError(f"shift point holds {x.size} symbols; need {n - 1 + window}")
        cum = sys.cumulative_perms(symbols)
        idx = np.arange(n)[:, None] + np.arange(window)[None, :]
        return np.take_along_axis(cum[:n], x[idx], axis=1) if window else np.zeros((n, 0), np.int64)
    if isinstance(sys, CircleSystem) and isinstance(x, Fraction):
        q = x.denominator
        a = x.numerator % q
        out = np.empty(n, dtype=float)
        degs = sys.degrees
        for t in range(n):
            out[t] = a / q
            if t < n - 1:
                a = (degs[symbols[t]] * a) % q
        return out
    pts = [x]
    for t in range(n - 1):
        x = sys.step(int(symbols[t]), x)
        pts.append(x)
    return np.asarray(pts, dtype=float if not isinstance(sys, FiniteSystem) else np.int64)


def _cylinder_index(it, n, depth, m):
    if depth == 0:
        return np.zeros(n, dtype=np.int64)
    syms = _itinerary_prefix(it, n + depth - 1)
    idx = np.arange(n)[:, None] + np.arange(depth)[None, :]
    return syms[idx] @ (m ** np.arange(depth - 1, -1, -1, dtype=np.int64))


def _n_cells(sys, resolution):
    return sys.n_cells(resolution)


def _orbit_codes(sys, it, x, n, depth, resolution):
    window = resolution if isinstance(sys, ShiftSystem) else 1
    pts = orbit_array(sys, it, x, n, window)
    cells = sys.cell_index(pts, resolution)
    cyl = _cylinder_index(it, n, depth, sys.m)
    return cyl * _n_cells(sys, resolution) + cells


def empirical_measure(sys: GeneratorSystem, it, x, n: int, depth: int, resolution) -> DiscreteMeasure:
    """``(1/n) sum_{j<n}`` of the point mass at (depth-``T`` cylinder of ``sigma^j it``, cell of orbit point ``j``)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    codes = _orbit_codes(sys, it, x, n, depth, resolution)
    size = sys.m ** depth * _n_cells(sys, resolution)
    mass = np.bincount(codes, minlength=size).reshape(sys.m ** depth, -1) / n
    return DiscreteMeasure(mass, sys.m, depth, resolution)


def empirical_measures_at(sys, it, x, checkpoints, depth, resolution) -> list[DiscreteMeasure]:
    checkpoints = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be increasing")
    codes = _orbit_codes(sys, it, x, checkpoints[-1], depth, resolution)
    size = sys.m ** depth * _n_cells(sys, resolution)
    out, counts, prev = [], np.zeros(size), 0
    for c in checkpoints:
        counts += np.bincount(codes[prev:c], minlength=size)
        prev = c
        out.append(DiscreteMeasure((counts / c).reshape(sys.m ** depth, -1), sys.m, depth, resolution))
    return out


# -- weak* distance ----------------------------------------------------------------

def _state_modes(sys, resolution, n_cells, modes):
    """State test functions (arrays over cells), ordered by rank."""
    out = []
    if isinstance(sys, CircleSystem):
        centres = (np.arange(n_cells) + 0.5) / n_cells
        for k in range(1, modes + 1):
            out.append((k, np.cos(2 * np.pi * k * centres)))
            out.append((k, np.sin(2 * np.pi * k * centres)))
    elif isinstance(sys, ShiftSystem):
        reps = sys.cell_representative(np.arange(n_cells), resolution)
        for d in range(1, resolution + 1):
            for u in word_array(sys.k, d):
                out.append((d, np.all(reps[:, :d] == u, axis=1).astype(float)))
    else:
        for c in range(n_cells):
            out.append((1, (np.arange(n_cells) == c).astype(float)))
    return out


def default_test_family(sys: GeneratorSystem, depth: int, resolution, modes: int = 4) -> list[np.ndarray]:
    """Cylinder indicators times state modes, ordered by combined rank.

    The family is a finite truncation: cylinders of depth ``0..T`` and, for
    the circle, Fourier modes ``1..modes``; for shifts, indicators of state
    cylinders; for finite sets, point indicators.  The constant function is
    omitted (it never distinguishes probability measures).
    """
    n_cells = sys.n_cells(resolution)
    rows = sys.m ** depth
    full = word_array(sys.m, depth)
    cyl = [(0, np.ones(rows))]
    for d in range(1, depth + 1):
        for u in word_array(sys.m, d):
            cyl.append((d, np.all(full[:, :d] == u, axis=1).astype(float)))
    states = [(0, np.ones(n_cells))] + _state_modes(sys, resolution, n_cells, modes)
    family = []
    for rc, c in cyl:
        for rs, s in states:
            if rc == 0 and rs == 0:
                continue
            family.append((rc + rs, np.outer(c, s)))
    family.sort(key=lambda t: t[0])
    return [f for _, f in family]


def weakstar_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, test_family=None, sys=None) -> float:
    """``sum_i 2**-i |int phi_i dmu - int phi_i dnu|`` over the test family (``i`` from 1)."""
    _check_same(mu, nu)
    if test_family is None:
        if sys is None:
            raise ValueError("need a system to build the default test family")
        test_family = default_test_family(sys, mu.depth, mu.resolution)
    diff = mu.mass - nu.mass
    total = 0.0
    for i, phi in enumerate(test_family, start=1):
        phi = np.asarray(phi, dtype=float)
        if phi.ndim == 1:
            phi = np.broadcast_to(phi, diff.shape)
        total += 2.0 ** (-i) * abs(float((phi * diff).sum()))
    return total


# -- observables and limit points ----------------------------------------------------------

class ObservableFunctional:
    """``phi`` on states, ``psi(it, x) = phi(x)`` and ``alpha(nu) = int psi dnu``.

    ``fn`` must accept a batch of points (as produced by :func:`orbit_array`).
    """

    def __init__(self, fn: Callable, sys: GeneratorSystem, resolution, window: int = 1, name: str = "phi"):
        self.fn = fn
        self.sys = sys
        self.resolution = resolution
        self.window = window
        self.name = name
        reps = sys.cell_representative(np.arange(sys.n_cells(resolution)), resolution)
        self.cell_values = np.asarray(fn(reps), dtype=float)

    def alpha(self, nu: DiscreteMeasure) -> float:
        return float(nu.state @ self.cell_values)

    @classmethod
    def first_symbol(cls, sys: ShiftSystem, resolution: int = 1):
        return cls(lambda X: np.asarray(X)[..., 0], sys, resolution, 1, "x0")

    @classmethod
    def cosine(cls, sys: CircleSystem, resolution: int):
        return cls(lambda X: np.cos(2 * np.pi * np.asarray(X, dtype=float)), sys, resolution, 1, "cos2pix")

    @classmethod
    def constant(cls, sys, resolution, c: float = 1.0):
        return cls(lambda X: np.full(len(X), c), sys, resolution, 1, f"const{c}")


@dataclass
class LimitPointFamily:
    measures: list
    checkpoints: list
    clustering_radius: float
    representatives: list
    labels: list
    alpha_range: tuple | None = None
    low_resolution: bool = False
    all_measures: list = field(default_factory=list)

    def __len__(self):
        return len(self.representatives)


def cluster(measures, radius, distance) -> tuple[list[int], list[int]]:
    """Leader clustering: representatives are pairwise at least ``radius`` apart."""
    reps, labels = [], []
    for i, mu in enumerate(measures):
        for r_idx, r in enumerate(reps):
            if distance(measures[r], mu) < radius:
                labels.append(r_idx)
                break
        else:
            reps.append(i)
            labels.append(len(reps) - 1)
    return reps, labels


def limit_point_family(sys, it, x, checkpoints, clustering_radius, depth=1, resolution=None,
                       observable: ObservableFunctional | None = None, test_family=None) -> LimitPointFamily:
    """Empirical measures at the checkpoints, clustered in the weak* distance."""
    if resolution is None:
        resolution = 1 if isinstance(sys, ShiftSystem) else 64
    measures = empirical_measures_at(sys, it, x, checkpoints, depth, resolution)
    family = test_family if test_family is not None else default_test_family(sys, depth, resolution)
    reps, labels = cluster(measures, clustering_radius, lambda a, b: weakstar_distance(a, b, family))
    alpha_range = None
    if observable is not None:
        vals = [observable.alpha(mu) for mu in measures]
        alpha_range = (min(vals), max(vals))
    return LimitPointFamily([measures[r] for r in reps], list(checkpoints), clustering_radius, reps, labels,
                            alpha_range, len(checkpoints) < 3, measures)


def birkhoff_profile(sys, observable: ObservableFunctional, it, x, n_schedule, eps_reg: float = 0.05) -> dict:
    """Running averages of ``phi`` along the orbit at each ``n`` of the schedule.

    The gap is max minus min over the last third of the schedule; the
    verdict is ``irregular_eps`` when the gap exceeds ``eps_reg``.
    """
    ns = [int(n) for n in n_schedule]
    if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_schedule must be increasing with at least 3 entries")
    pts = orbit_array(sys, it, x, ns[-1], observable.window)
    vals = np.asarray(observable.fn(pts), dtype=float)
    csum = np.cumsum(vals)
    averages = [float(csum[n - 1] / n) for n in ns]
    tail = averages[(2 * len(ns)) // 3:]
    if len(tail) < 2:
        tail = averages[-2:]
    gap = max(tail) - min(tail)
    return {"n": ns, "averages": averages, "gap": gap, "eps_reg": eps_reg,
            "verdict": "irregular_eps" if gap > eps_reg else "regular_eps"}


def oscillating_point(length: int) -> np.ndarray:
    """Shift point with ``x_i = 1`` exactly when ``floor(log2 i)`` is even (``x_0 = 0``).

    Blocks of ones ``[4**k, 2 * 4**k)`` alternate with blocks of zeros of the
    same length, so running averages of ``x_0`` swing between about 1/3 (at
    even powers of two) and 2/3 (at odd powers).
    """
    i = np.arange(length)
    lg = np.frexp(np.maximum(i, 1))[1] - 1  # exact floor(log2 i)
    return ((i >= 1) & (lg % 2 == 0)).astype(np.int64)


# -- transition operator -------------------------------------------------------------

def _check_probability(p, m):
    p = np.asarray(p, dtype=float)
    if p.shape != (m,) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"p must be a positive probability vector of length {m}")
    return p


def _circle_push(degree: int, state: np.ndarray) -> np.ndarray:
    """Pushforward of a piecewise-constant density under ``x -> d x`` on equal cells."""
    G = state.size
    d = abs(degree)
    c = np.arange(G)
    out = np.zeros(G)
    for k in range(d):
        out += state[(c + k * G) // d]
    out /= d
    return out[::-1].copy() if degree < 0 else out


def generator_push(sys: GeneratorSystem, j: int, state: np.ndarray, resolution) -> np.ndarray:
    """``mu o f_j^{-1}`` on the state cells."""
    if isinstance(sys, CircleSystem):
        d = sys.degrees[j]
        if state.size % abs(d):
            raise ValueError(f"grid of {state.size} cells is incommensurate: size must be divisible by {abs(d)}")
        return _circle_push(d, state)
    if isinstance(sys, TorusSystem):
        A = sys.matrices[j]
        if np.count_nonzero(A - np.diag(np.diag(A))):
            raise ValueError("exact torus pushforward is implemented for diagonal matrices only")
        G = resolution
        cube = state.reshape((G,) * sys.q)
        for axis, d in enumerate(np.diag(A)):
            if G % abs(int(d)):
                raise ValueError(f"grid of {G} cells per axis is incommensurate: size must be divisible by {abs(int(d))}")
            cube = np.apply_along_axis(lambda v: _circle_push(int(d), v), axis, cube)
        return cube.ravel()
    if isinstance(sys, ShiftSystem):
        T = resolution
        k = sys.k
        reps = sys.cell_representative(np.arange(k ** T), T)
        pre = sys.inverse_perms[j][reps[:, :T - 1]]
        out = np.zeros(k ** T)
        for a in range(k):
            cells = sys.cell_index(np.concatenate([np.full((len(reps), 1), a), pre], axis=1), T)
            out += state[cells]
        return out / k
    if isinstance(sys, FiniteSystem):
        return np.bincount(sys.tables[j], weights=state, minlength=sys.size)
    raise ValueError(f"no exact pushforward for {sys.kind} systems")


def adjoint_apply(p, sys: GeneratorSystem, mu: DiscreteMeasure) -> DiscreteMeasure:
    """``P* mu = sum_j p_j mu o f_j^{-1}`` on the state marginal."""
    p = _check_probability(p, sys.m)
    state = mu.state
    new = sum(p[j] * generator_push(sys, j, state, mu.resolution) for j in range(sys.m))
    return DiscreteMeasure(new, 1, 0, mu.resolution)


@dataclass
class StationaryResult:
    measure: DiscreteMeasure
    residual: float
    iterations: int
    converged: bool


def stationary_measure(p, sys: GeneratorSystem, resolution, tol: float = 1e-12, max_iter: int = 10_000,
                       start: DiscreteMeasure | None = None) -> StationaryResult:
    """Iterate ``mu <- P* mu`` from the uniform measure until the TV step is at most ``tol``."""
    mu = start or DiscreteMeasure.uniform(sys.n_cells(resolution), resolution=resolution)
    residual = math.inf
    for it in range(1, max_iter + 1):
        nxt = adjoint_apply(p, sys, mu)
        residual = nxt.tv(mu)
        mu = nxt
        if residual <= tol:
            return StationaryResult(mu, residual, it, True)
    return StationaryResult(mu, residual, max_iter, False)


def cylinder_probabilities(p, depth: int) -> list[tuple[tuple, float]]:
    """Every cylinder of length ``0..depth`` with its Bernoulli probability."""
    out = [((), 1.0)]
    for d in range(1, depth + 1):
        for u in word_array(len(p), d):
            out.append((tuple(u.tolist()), float(np.prod(np.asarray(p)[u]))))
    return out


def product_invariance_residual(p, mu: DiscreteMeasure, sys: GeneratorSystem, cylinder_depth: int) -> float:
    """``max |(P x mu)(F^{-1}(C x B)) - (P x mu)(C x B)|`` over cylinders ``C`` and cells ``B``.

    Uses ``F^{-1}(C x B) = U_j ([j] & sigma^{-1} C) x f_j^{-1} B``.
    """
    p = _check_probability(p, sys.m)
    state = mu.state
    pushed = [generator_push(sys, j, state, mu.resolution) for j in range(sys.m)]
    worst = 0.0
    for _, pc in cylinder_probabilities(p, cylinder_depth):
        pre = sum(p[j] * pc * pushed[j] for j in range(sys.m))
        worst = max(worst, float(np.max(np.abs(pre - pc * state))))
    return worst
