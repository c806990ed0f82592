"""Generator families ``f_0..f_{m-1}`` on concrete metric spaces.

A word ``w = i_0 ... i_{k-1}`` acts by ``f_w = f_{i_0} o ... o f_{i_{k-1}}``
(rightmost symbol first).  Orbits along a word or itinerary apply ``i_0``
first: ``x, f_{i_0} x, f_{i_1} f_{i_0} x, ...``.

Points are plain Python/numpy values: a float (or ``Fraction``) on the
circle, a length-``q`` vector on the torus, an int array of symbols on a
full shift, an int on a finite set.  Every system also works on batches
(leading axis = candidate index) for the counting code in ``covers``.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numba
import numpy as np

from .words import DEFAULT_HORIZON, Itinerary, Word, reverse, shift, word_array

#: Width of the band around cell boundaries and metric thresholds in which
#: floating-point values are treated as ties.
TOL = 1e-12


class GeneratorSystem:
    """Base class.  Subclasses fill in the per-space primitives."""

    kind = "abstract"
    diameter = 1.0

    def __init__(self, m: int, expanding_factors: Sequence[float] | None = None):
        if m < 1:
            raise ValueError("need at least one generator")
        self.m = m
        self.expanding_factors = None if expanding_factors is None else tuple(expanding_factors)

    # -- primitives ---------------------------------------------------------
    def step(self, j, x):
        raise NotImplementedError

    def step_batch(self, j, X):
        raise NotImplementedError

    def distance(self, x, y) -> float:
        raise NotImplementedError

    def distance_batch(self, X, Y) -> np.ndarray:
        raise NotImplementedError

    def grid(self, resolution: int):
        """Candidate pool covering the space at the given resolution."""
        raise NotImplementedError

    def cell_index(self, X, resolution: int) -> np.ndarray:
        raise NotImplementedError

    def n_cells(self, resolution: int) -> int:
        raise NotImplementedError

    def nearest_preimage(self, j, z, target):
        raise NotImplementedError(f"no inverse branches for {self.kind} systems")

    def exact(self, x):
        """Exact-arithmetic copy of ``x`` (identity where arithmetic is already exact)."""
        return x

    def same_point(self, x, y) -> bool:
        return self.distance(x, y) == 0

    @property
    def lambda_min(self) -> float | None:
        return None if self.expanding_factors is None else min(self.expanding_factors)

    # -- derived ------------------------------------------------------------
    def _check_symbol(self, j):
        if not 0 <= j < self.m:
            raise ValueError(f"generator index {j} out of range for m={self.m}")

    def orbit_batch(self, symbols, X, depth: int | None = None) -> list:
        """Orbit of every candidate in ``X`` along ``symbols``: ``len(symbols)+1`` batches."""
        out = [X]
        for j in symbols:
            X = self.step_batch(int(j), X)
            out.append(X)
        return out

    def word_distances(self, word: Word, X, centre) -> np.ndarray:
        """``d_w(centre, X[i])`` for every row ``i`` of ``X``."""
        centre_batch = self.as_batch(centre)
        oc = self.orbit_batch(word.symbols, centre_batch)
        ox = self.orbit_batch(word.symbols, X)
        return np.max([self.distance_batch(a, b) for a, b in zip(ox, oc)], axis=0)

    def as_batch(self, x):
        return np.asarray([x], dtype=float)

    def describe(self) -> str:
        return self.kind


def _arc(t):
    t = np.abs(t) % 1.0
    return np.minimum(t, 1.0 - t)


class CircleSystem(GeneratorSystem):
    """Maps ``x -> d_j x mod 1`` on ``[0, 1)`` with the arc metric."""

    kind = "circle"
    diameter = 0.5

    def __init__(self, degrees: Sequence[int]):
        self.degrees = tuple(int(d) for d in degrees)
        factors = tuple(abs(d) for d in self.degrees)
        super().__init__(len(self.degrees), factors if min(factors) > 1 else None)

    def step(self, j, x):
        self._check_symbol(j)
        if isinstance(x, Fraction):
            return (self.degrees[j] * x) % 1
        return float((self.degrees[j] * x) % 1.0)

    def step_batch(self, j, X):
        return np.mod(self.degrees[j] * X, 1.0)

    def distance(self, x, y):
        if isinstance(x, Fraction) or isinstance(y, Fraction):
            t = (Fraction(x) - Fraction(y)) % 1
            return min(t, 1 - t)
        return float(_arc(x - y))

    def distance_batch(self, X, Y):
        return _arc(np.asarray(X) - np.asarray(Y))

    def grid(self, resolution):
        return np.arange(resolution) / resolution

    def n_cells(self, resolution):
        return resolution

    def cell_index(self, X, resolution):
        X = np.asarray(X, dtype=float)
        return (np.floor(X * resolution + TOL).astype(np.int64)) % resolution

    def cell_representative(self, cells, resolution):
        return (np.asarray(cells) + 0.5) / resolution

    def nearest_preimage(self, j, z, target):
        d = self.degrees[j]
        z, target = Fraction(z), Fraction(target)
        k = round(d * target - z)
        return ((z + k) / d) % 1

    def exact(self, x):
        return Fraction(x)

    def describe(self):
        return "kind=circle degrees=" + ",".join(map(str, self.degrees))


class TorusSystem(GeneratorSystem):
    """Linear endomorphisms ``x -> A_j x mod 1`` of the ``q``-torus, max-arc metric.

    Expansion (all eigenvalues outside the unit circle) is the caller's
    assertion; pass ``expanding_factors`` to enable tracing.
    """

    kind = "torus"
    diameter = 0.5

    def __init__(self, matrices, expanding_factors=None):
        self.matrices = [np.asarray(A, dtype=np.int64) for A in matrices]
        q = self.matrices[0].shape[0]
        for A in self.matrices:
            if A.shape != (q, q):
                raise ValueError("all matrices must be q x q")
            if round(np.linalg.det(A)) == 0:
                raise ValueError("matrices must be nonsingular")
        self.q = q
        super().__init__(len(self.matrices), expanding_factors)
        self._inverses = None

    def step(self, j, x):
        self._check_symbol(j)
        A = self.matrices[j]
        if isinstance(x, tuple):
            return tuple(sum(int(A[r, c]) * x[c] for c in range(self.q)) % 1 for r in range(self.q))
        return np.mod(A @ np.asarray(x, dtype=float), 1.0)

    def step_batch(self, j, X):
        return np.mod(X @ self.matrices[j].T, 1.0)

    def distance(self, x, y):
        if isinstance(x, tuple) or isinstance(y, tuple):
            best = Fraction(0)
            for a, b in zip(x, y):
                t = (Fraction(a) - Fraction(b)) % 1
                best = max(best, min(t, 1 - t))
            return best
        return float(np.max(_arc(np.asarray(x) - np.asarray(y))))

    def distance_batch(self, X, Y):
        return np.max(_arc(np.asarray(X) - np.asarray(Y)), axis=-1)

    def as_batch(self, x):
        return np.asarray([x], dtype=float)

    def grid(self, resolution):
        axis = np.arange(resolution) / resolution
        mesh = np.meshgrid(*([axis] * self.q), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def n_cells(self, resolution):
        return resolution ** self.q

    def cell_index(self, X, resolution):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        per_axis = (np.floor(X * resolution + TOL).astype(np.int64)) % resolution
        weights = resolution ** np.arange(self.q - 1, -1, -1)
        return per_axis @ weights

    def cell_representative(self, cells, resolution):
        cells = np.asarray(cells)
        coords = [(cells // resolution ** (self.q - 1 - a)) % resolution for a in range(self.q)]
        return (np.stack(coords, axis=-1) + 0.5) / resolution

    def _inverse(self, j):
        if self._inverses is None:
            import sympy
            self._inverses = [
                [[Fraction(int(v.p), int(v.q)) for v in row]
                 for row in sympy.Matrix(A.tolist()).inv().tolist()]
                for A in self.matrices
            ]
        return self._inverses[j]

    def nearest_preimage(self, j, z, target):
        A = self.matrices[j]
        z = tuple(Fraction(v) for v in z)
        target = tuple(Fraction(v) for v in target)
        shift = [round(sum(int(A[r, c]) * target[c] for c in range(self.q)) - z[r])
                 for r in range(self.q)]
        inv = self._inverse(j)
        rhs = [z[r] + shift[r] for r in range(self.q)]
        return tuple(sum(inv[r][c] * rhs[c] for c in range(self.q)) % 1 for r in range(self.q))

    def exact(self, x):
        return tuple(Fraction(float(v)) for v in np.asarray(x, dtype=float))

    def same_point(self, x, y):
        return self.distance(x, y) == 0

    def describe(self):
        mats = ";".join(" ".join(str(v) for v in A.ravel()) for A in self.matrices)
        return f"kind=torus q={self.q} matrices={mats}"


@numba.njit(cache=True)
def _compose_cumulative(perms, symbols):
    n, k = symbols.size, perms.shape[1]
    out = np.empty((n + 1, k), dtype=np.int64)
    for a in range(k):
        out[0, a] = a
    for t in range(n):
        p = perms[symbols[t]]
        for a in range(k):
            out[t + 1, a] = p[out[t, a]]
    return out


class ShiftSystem(GeneratorSystem):
    """Full shift on ``k`` symbols with generators ``f_j = pi_j o sigma``.

    ``pi_j`` are symbol permutations applied coordinatewise; ``pi_0`` is the
    identity.  With ``m = 2`` and no explicit permutations the second
    generator uses the cyclic relabelling ``s -> s + 1 mod k``.  Points are
    finite int arrays standing for their cylinder; the metric compares the
    symbols that both arrays hold.
    """

    kind = "shift"
    diameter = 1.0

    def __init__(self, k: int, m: int = 1, perms=None):
        if k < 2:
            raise ValueError("full shift needs k >= 2 symbols")
        if perms is None:
            perms = [np.arange(k)] + [(np.arange(k) + j) % k for j in range(1, m)]
        perms = [np.asarray(p, dtype=np.int64) for p in perms]
        if len(perms) != m:
            raise ValueError("need one permutation per generator")
        for p in perms:
            if sorted(p.tolist()) != list(range(k)):
                raise ValueError(f"{p.tolist()} is not a permutation of range({k})")
        self.k = k
        self.perms = perms
        self.inverse_perms = [np.argsort(p) for p in perms]
        super().__init__(m, (2.0,) * m)

    def step(self, j, x):
        self._check_symbol(j)
        x = np.asarray(x, dtype=np.int64)
        if x.size < 2:
            raise ValueError("shift point too short to apply another step")
        return self.perms[j][x[1:]]

    def step_batch(self, j, X):
        return self.perms[j][X[:, 1:]]

    @staticmethod
    def _first_disagreement(neq):
        has = neq.any(axis=-1)
        idx = np.argmax(neq, axis=-1)
        return np.where(has, 2.0 ** (-idx.astype(float)), 0.0)

    def distance(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        n = min(x.size, y.size)
        return float(self._first_disagreement(x[:n] != y[:n]))

    def distance_batch(self, X, Y):
        X, Y = np.asarray(X), np.asarray(Y)
        n = min(X.shape[-1], Y.shape[-1])
        return self._first_disagreement(X[..., :n] != Y[..., :n])

    def as_batch(self, x):
        return np.asarray(x, dtype=np.int64)[None, :]

    @staticmethod
    def depth_for(eps: float) -> int:
        """Number of leading symbols that decide ``d' < eps``."""
        if eps > 1 + TOL:
            return 0
        return int(math.floor(math.log2(1.0 / eps) + TOL)) + 1

    def cumulative_perms(self, symbols) -> np.ndarray:
        """Row ``t`` is the permutation accumulated after the first ``t`` steps."""
        symbols = np.asarray(symbols, dtype=np.int64)
        ident = np.arange(self.k)
        if all(np.array_equal(self.perms[j], ident) for j in np.unique(symbols)):
            return np.broadcast_to(ident, (len(symbols) + 1, self.k))
        return _compose_cumulative(np.stack(self.perms), symbols)

    def orbit_batch(self, symbols, X, depth=None):
        """Orbit windows; with ``depth`` each point is cut to its first ``depth`` symbols."""
        n = len(symbols)
        X = np.asarray(X, dtype=np.int64)
        if depth is None:
            depth = X.shape[1] - n
        if X.shape[1] < n + depth:
            raise ValueError(f"shift points hold {X.shape[1]} symbols; need {n + depth}")
        cum = self.cumulative_perms(symbols)
        return [cum[t][X[:, t:t + depth]] for t in range(n + 1)]

    def word_distances(self, word, X, centre):
        X = np.asarray(X, dtype=np.int64)
        centre = np.asarray(centre, dtype=np.int64)
        n = len(word)
        depth = min(X.shape[1], centre.size) - n
        ox = self.orbit_batch(word.symbols, X[:, :n + depth], depth)
        oc = self.orbit_batch(word.symbols, centre[None, :n + depth], depth)
        return np.max([self.distance_batch(a, b) for a, b in zip(ox, oc)], axis=0)

    def grid(self, resolution):
        """All cylinder representatives of length ``resolution``."""
        return word_array(self.k, resolution)

    def n_cells(self, resolution):
        return self.k ** resolution

    def cell_index(self, X, resolution):
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        weights = self.k ** np.arange(resolution - 1, -1, -1)
        return X[:, :resolution] @ weights

    def cell_representative(self, cells, resolution):
        cells = np.asarray(cells)
        return np.stack([(cells // self.k ** (resolution - 1 - a)) % self.k
                         for a in range(resolution)], axis=-1)

    def nearest_preimage(self, j, z, target):
        z = np.asarray(z, dtype=np.int64)
        return np.concatenate([[int(np.asarray(target)[0])], self.inverse_perms[j][z]])

    def same_point(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        n = min(x.size, y.size)
        return bool(np.array_equal(x[:n], y[:n]))

    def describe(self):
        text = f"kind=shift k={self.k} m={self.m}"
        if self.m > 1:
            text += " perms=" + ";".join(",".join(map(str, p)) for p in self.perms)
        return text


class FiniteSystem(GeneratorSystem):
    """Maps given as lookup tables on ``{0..n-1}`` with the discrete metric."""

    kind = "finite"

    def __init__(self, tables):
        self.tables = [np.asarray(t, dtype=np.int64) for t in tables]
        self.size = self.tables[0].size
        for t in self.tables:
            if t.size != self.size or t.min() < 0 or t.max() >= self.size:
                raise ValueError("every table must map {0..n-1} into itself")
        super().__init__(len(self.tables))

    def step(self, j, x):
        self._check_symbol(j)
        return int(self.tables[j][x])

    def step_batch(self, j, X):
        return self.tables[j][X]

    def distance(self, x, y):
        return 0.0 if x == y else 1.0

    def distance_batch(self, X, Y):
        return (np.asarray(X) != np.asarray(Y)).astype(float)

    def as_batch(self, x):
        return np.asarray([x], dtype=np.int64)

    def grid(self, resolution=None):
        return np.arange(self.size)

    def n_cells(self, resolution=None):
        return self.size

    def cell_index(self, X, resolution=None):
        return np.asarray(X, dtype=np.int64)

    def cell_representative(self, cells, resolution=None):
        return np.asarray(cells)

    def describe(self):
        return "kind=finite tables=" + ";".join(",".join(map(str, t)) for t in self.tables)


def swap_system() -> FiniteSystem:
    """Two points ``a=0, b=1``; ``f_0`` the identity, ``f_1`` the swap."""
    return FiniteSystem([[0, 1], [1, 0]])


def identity_system(size: int, m: int) -> FiniteSystem:
    return FiniteSystem([np.arange(size)] * m)


class SkewProduct:
    """The skew product ``F(iota, x) = (sigma iota, f_{i_0} x)`` with metric ``D = max(d', d)``.

    Points are pairs ``(symbols, x)`` where ``symbols`` is an int array
    holding a prefix of the itinerary, or an :class:`Itinerary`.
    """

    def __init__(self, base: GeneratorSystem):
        self.base = base
        self.m = base.m

    def step(self, point):
        symbols, x = point
        if isinstance(symbols, Itinerary):
            return shift(symbols), self.base.step(int(symbols.prefix(1)[0]), x)
        symbols = np.asarray(symbols, dtype=np.int64)
        return symbols[1:], self.base.step(int(symbols[0]), x)

    def distance(self, a, b):
        sa, xa = a
        sb, xb = b
        sa = sa.prefix(DEFAULT_HORIZON) if isinstance(sa, Itinerary) else sa
        sb = sb.prefix(DEFAULT_HORIZON) if isinstance(sb, Itinerary) else sb
        n = min(len(sa), len(sb))
        neq = np.asarray(sa[:n]) != np.asarray(sb[:n])
        d_itin = 0.0 if not neq.any() else 2.0 ** (-int(np.argmax(neq)))
        return max(d_itin, self.base.distance(xa, xb))

    def orbit(self, point, n):
        out = [point]
        for _ in range(n - 1):
            point = self.step(point)
            out.append(point)
        return out


# -- operations on words and itineraries -------------------------------------

def _symbols(it, n):
    if isinstance(it, Itinerary):
        return it.prefix(n)
    if isinstance(it, Word):
        return np.asarray(it.symbols[:n], dtype=np.int64)
    return np.asarray(it, dtype=np.int64)[:n]


def apply_word(sys: GeneratorSystem, w: Word, x):
    """``f_w(x)``; the last symbol of ``w`` acts first, the empty word is the identity."""
    if w.m != sys.m:
        raise ValueError(f"word alphabet {w.m} does not match m={sys.m}")
    for j in reversed(w.symbols):
        x = sys.step(j, x)
    return x


def orbit_along(sys: GeneratorSystem, it, x, n: int) -> list:
    """``[x, f_{i_0} x, f_{i_1 i_0} x, ...]`` of length ``n``."""
    if n < 1:
        raise ValueError("orbit length must be >= 1")
    symbols = _symbols(it, n - 1)
    out = [x]
    for j in symbols:
        x = sys.step(int(j), x)
        out.append(x)
    return out


def word_metric(sys: GeneratorSystem, w: Word, x, y) -> float:
    """``d_w(x, y) = max over suffixes w' of reverse(w) of d(f_{w'} x, f_{w'} y)``."""
    wbar = reverse(w)
    best = 0.0
    for k in range(len(w) + 1):
        suffix = wbar[len(w) - k:]
        best = max(best, float(sys.distance(apply_word(sys, suffix, x), apply_word(sys, suffix, y))))
    return best


def word_metric_orbit(sys: GeneratorSystem, w: Word, x, y) -> float:
    """Same quantity via the orbit-prefix formulation (used as a cross-check)."""
    ox = orbit_along(sys, w, x, len(w) + 1)
    oy = orbit_along(sys, w, y, len(w) + 1)
    return max(float(sys.distance(a, b)) for a, b in zip(ox, oy))


def expansiveness_witness(sys: GeneratorSystem, delta: float, pairs, itineraries, horizon: int):
    """For each pair and itinerary, the first ``n >= 1`` with orbit separation ``>= delta``.

    Returns a list of dict rows; ``n`` is ``None`` when no witness exists
    within ``horizon`` and ``valid`` is False for pairs of equal points.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    rows = []
    for x, y in pairs:
        valid = not sys.same_point(x, y)
        for it in itineraries:
            row = {"x": x, "y": y, "itinerary": str(it), "valid": valid, "n": None, "distance": None}
            if valid:
                symbols = _symbols(it, horizon)
                a, b = x, y
                for n, j in enumerate(symbols, start=1):
                    a, b = sys.step(int(j), a), sys.step(int(j), b)
                    d = float(sys.distance(a, b))
                    if d >= delta - TOL:
                        row["n"], row["distance"] = n, d
                        break
            rows.append(row)
    return rows


def build_system(spec: dict) -> GeneratorSystem:
    """Construct a system from a descriptor dict (the ``[system]`` config section)."""
    kind = spec.get("kind")
    if kind == "circle":
        return CircleSystem([int(v) for v in str(spec["degrees"]).split(",")])
    if kind == "torus":
        q = int(spec.get("q", 2))
        mats = []
        for block in str(spec["matrices"]).split(";"):
            vals = [int(v) for v in block.split()]
            mats.append(np.asarray(vals).reshape(q, q))
        factors = spec.get("expanding_factors")
        factors = None if factors is None else [float(v) for v in str(factors).split(",")]
        return TorusSystem(mats, factors)
    if kind == "shift":
        k, m = int(spec.get("k", 2)), int(spec.get("m", 1))
        perms = spec.get("perms")
        if perms is not None:
            perms = [[int(v) for v in p.split(",")] for p in str(perms).split(";")]
        return ShiftSystem(k, m, perms)
    if kind == "finite":
        tables = [[int(v) for v in t.split(",")] for t in str(spec["tables"]).split(";")]
        return FiniteSystem(tables)
    raise ValueError(f"unknown system kind {kind!r}")


#: Named systems available to the experiment runner.
CATALOGUE = {
    "doubling": lambda: CircleSystem([2]),
    "e2e3": lambda: CircleSystem([2, 3]),
    "shift2": lambda: ShiftSystem(2),
    "shift2-m2": lambda: ShiftSystem(2, m=2),
    "shift3": lambda: ShiftSystem(3),
    "torus-cat-doubling": lambda: TorusSystem([[[2, 1], [1, 1]], [[2, 0], [0, 2]]]),
    "swap": swap_system,
}
