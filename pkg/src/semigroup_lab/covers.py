"""Bowen balls, blowup balls, separated sets and covers along words.

All greedy selections run first-fit over a candidate order shuffled with a
fixed seed.  A candidate is *blocked* by a chosen point when their word
distance is below the radius; a greedy run with radius ``eps`` therefore
returns a set that is at once ``(w, eps)``-separated and ``(w, eps)``-spanning
for the candidate pool.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .systems import TOL, GeneratorSystem, ShiftSystem, word_metric, orbit_along
from .words import Word


def bowen_ball_contains(sys: GeneratorSystem, w: Word, delta: float, center, y) -> bool:
    """``d_w(center, y) < delta`` (strict, with the tolerance band)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return word_metric(sys, w, center, y) < delta - TOL


def mismatch_count(sys: GeneratorSystem, w: Word, eps: float, x, y) -> int:
    """Number of the ``|w|+1`` orbit-prefix points where the two orbits are more than ``eps`` apart."""
    ox = orbit_along(sys, w, x, len(w) + 1)
    oy = orbit_along(sys, w, y, len(w) + 1)
    return sum(float(sys.distance(a, b)) > eps + TOL for a, b in zip(ox, oy))


class BlowupFunction:
    """A blowup function ``g`` with a finite-range audit of its defining properties."""

    def __init__(self, fn: Callable[[int], int], audit_range: int = 2 ** 16, name: str = "g"):
        self.fn = fn
        self.audit_range = int(audit_range)
        self.name = name

    def __call__(self, n: int) -> int:
        return int(self.fn(int(n)))

    def __repr__(self):
        return f"BlowupFunction({self.name})"

    @classmethod
    def sqrt_ceil(cls, audit_range: int = 2 ** 16):
        return cls(lambda n: math.isqrt(n - 1) + 1 if n > 0 else 0, audit_range, "ceil_sqrt")

    @classmethod
    def from_name(cls, name: str, audit_range: int = 2 ** 16):
        """``ceil_sqrt``, ``n_minus_1``, ``half`` (``ceil(n/2)-1``), ``const:<c>``, ``log2`` or ``power:<a>``.

        ``power:<a>`` is ``min(ceil(n**a), n-1)`` (with ``g(1) = 1``).
        """
        if name == "ceil_sqrt":
            return cls.sqrt_ceil(audit_range)
        if name == "n_minus_1":
            return cls(lambda n: n - 1, audit_range, name)
        if name == "half":
            return cls(lambda n: -(-n // 2) - 1, audit_range, name)
        if name == "log2":
            return cls(lambda n: max(n.bit_length() - 1, 0), audit_range, name)
        if name.startswith("power:"):
            a = float(name.split(":", 1)[1])
            if not 0 < a < 1:
                raise ValueError("power exponent must lie in (0, 1)")
            return cls(lambda n: 1 if n == 1 else min(math.ceil(n ** a - 1e-9), n - 1), audit_range, name)
        if name.startswith("const:"):
            c = int(name.split(":", 1)[1])
            return cls(lambda n: min(c, n - 1), audit_range, name)
        raise ValueError(f"unknown blowup function {name!r}")

    def audit(self) -> dict:
        """Check the defining properties on ``1..audit_range``.

        ``g(n) < n`` is checked for ``n >= 3``: the canonical ``ceil(sqrt n)``
        meets ``n`` at ``n = 1, 2`` and only the asymptotic shape matters here.
        Unboundedness is read as growth over the last doubling,
        ``g(N) > g(N/2)``.  The ratio test asks for ``g(N)/N <= 0.5`` at ``N = audit_range`` and
        a strictly decreasing ratio along the doublings ``2, 4, ...``.
        """
        n = np.arange(1, self.audit_range + 1)
        vals = np.array([self(int(k)) for k in n])
        doublings = 2 ** np.arange(1, int(math.log2(self.audit_range)) + 1)
        ratios = np.array([self(int(k)) / k for k in doublings])
        checks = {
            "nondecreasing": bool(np.all(np.diff(vals) >= 0)),
            "below_identity": bool(np.all(vals[2:] < n[2:])),
            "unbounded": bool(vals[-1] > vals[self.audit_range // 2 - 1]),
            "ratio_small": bool(vals[-1] / self.audit_range <= 0.5),
            "ratio_decreasing": bool(np.all(np.diff(ratios[len(ratios) // 2:]) < 0)),
        }
        checks["ok"] = all(checks.values())
        return checks


def blowup_ball_contains(sys: GeneratorSystem, g: BlowupFunction, w: Word, eps: float, center, y) -> bool:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return mismatch_count(sys, w, eps, center, y) < g(len(w) + 1)


# -- greedy selection ----------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _greedy_kernel(orbits, order, radius, discrete):
    P, T, q = orbits.shape
    blocked = np.zeros(P, dtype=np.bool_)
    chosen = np.empty(P, dtype=np.int64)
    count = 0
    for idx in range(P):
        i = order[idx]
        if blocked[i]:
            continue
        chosen[count] = i
        count += 1
        for j in range(P):
            if blocked[j]:
                continue
            close = True
            for t in range(T):
                for a in range(q):
                    diff = abs(orbits[j, t, a] - orbits[i, t, a])
                    if discrete:
                        dist = 1.0 if diff > 0 else 0.0
                    else:
                        diff = diff % 1.0
                        dist = min(diff, 1.0 - diff)
                    if dist >= radius:
                        close = False
                        break
                if not close:
                    break
            if close:
                blocked[j] = True
    return chosen[:count]


def _orbit_tensor(sys: GeneratorSystem, symbols, X) -> np.ndarray:
    P = len(X)
    orbit = sys.orbit_batch(symbols, X)
    return np.ascontiguousarray(
        np.stack([np.asarray(o, dtype=float).reshape(P, -1) for o in orbit], axis=1))


def _greedy_numpy(sys, symbols, X, order, radius):
    orbit = sys.orbit_batch(symbols, X)
    blocked = np.zeros(len(X), dtype=bool)
    chosen = []
    for i in order:
        if blocked[i]:
            continue
        chosen.append(i)
        d = np.max([sys.distance_batch(o, o[i:i + 1]) for o in orbit], axis=0)
        blocked |= d < radius
    return np.asarray(chosen, dtype=np.int64)


def shift_classes(sys: ShiftSystem, n: int, eps: float, X) -> tuple[np.ndarray, int]:
    """Class labels of ``d_w < eps`` on a shift pool (an equivalence for every word of length ``n``).

    Returns ``(labels, depth_needed)``; two candidates share a label iff they
    agree on their first ``n + depth`` symbols.
    """
    depth = sys.depth_for(eps)
    X = np.asarray(X, dtype=np.int64)
    need = n + depth
    if X.shape[1] < need:
        raise ValueError(f"shift candidates hold {X.shape[1]} symbols; need {need}")
    if need == 0:
        return np.zeros(len(X), dtype=np.int64), 0
    if need * math.log2(sys.k) < 62:
        return X[:, :need] @ (sys.k ** np.arange(need - 1, -1, -1, dtype=np.int64)), need
    _, labels = np.unique(X[:, :need], axis=0, return_inverse=True)
    return labels.reshape(-1), need


def greedy_select(sys: GeneratorSystem, w: Word, radius: float, X, seed: int = 0) -> np.ndarray:
    """Indices chosen by shuffled first-fit with blocking radius ``radius``."""
    P = len(X)
    order = np.random.default_rng(seed).permutation(P)
    cut = radius - TOL
    if isinstance(sys, ShiftSystem):
        labels, _ = shift_classes(sys, len(w), radius, X)
        _, first = np.unique(labels[order], return_index=True)
        return np.sort(order[first])
    if sys.kind in ("circle", "torus", "finite"):
        tensor = _orbit_tensor(sys, w.symbols, X)
        return _greedy_kernel(tensor, order, cut, sys.kind == "finite")
    return _greedy_numpy(sys, w.symbols, X, order, cut)


@dataclass
class SeparatedSet:
    word: Word
    epsilon: float
    points: np.ndarray
    indices: np.ndarray
    maximality_certificate: bool = True
    exact: bool = False

    def __len__(self):
        return len(self.indices)


def max_separated(sys: GeneratorSystem, w: Word, eps: float, candidates, seed: int = 0) -> SeparatedSet:
    """Greedy maximal ``(w, eps)``-separated subset of ``candidates``.

    On a shift pool that contains every cylinder of length ``|w| + depth``
    the count is exactly ``N(w, eps)`` and ``exact`` is set.
    """
    X = np.asarray(candidates)
    if len(X) == 0:
        raise ValueError("candidate pool is empty")
    idx = greedy_select(sys, w, eps, X, seed)
    exact = False
    if isinstance(sys, ShiftSystem):
        need = len(w) + sys.depth_for(eps)
        exact = len(idx) == sys.k ** need
    return SeparatedSet(w, eps, X[idx], idx, True, exact)


def is_separated(sys: GeneratorSystem, w: Word, eps: float, points) -> bool:
    pts = list(points)
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if word_metric(sys, w, pts[a], pts[b]) < eps - TOL:
                return False
    return True


@dataclass
class CoverDescription:
    """Bowen balls covering a finite point set; one row per ball."""

    words: list
    centers: np.ndarray
    radius: float
    covered: bool
    rows: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.words)

    def lengths(self) -> list[int]:
        return [len(w) for w in self.words]

    def weight(self, gamma: float) -> float:
        return float(sum(math.exp(-gamma * (len(w) + 1)) for w in self.words))

    def csv_rows(self):
        return [(str(w), repr(c.tolist() if hasattr(c, "tolist") else c), self.radius, len(w))
                for w, c in zip(self.words, self.centers)]


def _check_cover(sys, w, delta, Z, centers_idx) -> bool:
    """Independent check that every point of ``Z`` lies in some chosen ball."""
    Z = np.asarray(Z)
    inside = np.zeros(len(Z), dtype=bool)
    if isinstance(sys, ShiftSystem):
        labels, _ = shift_classes(sys, len(w), delta, Z)
        inside[np.isin(labels, labels[np.asarray(centers_idx)])] = True
        return bool(inside.all())
    orbit = sys.orbit_batch(w.symbols, Z)
    for c in centers_idx:
        d = np.max([sys.distance_batch(o, o[c:c + 1]) for o in orbit], axis=0)
        inside |= d < delta - TOL
    return bool(inside.all())


def min_cover(sys: GeneratorSystem, Z, delta: float, N: int, allow_variable_length: bool = False,
              word: Word | None = None, extension: Word | None = None, gamma: float = 0.0,
              seed: int = 0, verify: bool = True) -> CoverDescription:
    """Greedy cover of ``Z`` by ``(w', delta)``-Bowen balls centred in ``Z``.

    Fixed-length mode uses the single word ``word`` of length ``N`` (default
    ``0^N``).  Variable-length mode also tries ``word`` followed by prefixes
    of ``extension`` and keeps the length minimising ``count * exp(-gamma (len+1))``.
    """
    Z = np.asarray(Z)
    if len(Z) == 0:
        raise ValueError("Z is empty")
    if word is None:
        word = Word((0,) * N, sys.m)
    if len(word) != N:
        raise ValueError("word length must equal N")
    candidates = [word]
    if allow_variable_length and extension is not None:
        candidates += [word + extension[:k] for k in range(1, len(extension) + 1)]
    best = None
    for w in candidates:
        idx = greedy_select(sys, w, delta, Z, seed)
        score = len(idx) * math.exp(-gamma * (len(w) + 1))
        if best is None or score < best[0]:
            best = (score, w, idx)
    _, w, idx = best
    covered = _check_cover(sys, w, delta, Z, idx) if verify else True
    return CoverDescription([w] * len(idx), Z[idx], delta, covered)
