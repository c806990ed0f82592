"""Visiting times, densities and finite-scale recurrence classifiers.

Everything here is a finite-scale semidecision: a density is "positive"
when it exceeds an explicit threshold at an explicit horizon, and every
verdict record carries those scale parameters.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .measures import (DiscreteMeasure, LimitPointFamily, ObservableFunctional, birkhoff_profile,
                       default_test_family, empirical_measures_at, limit_point_family, orbit_array,
                       oscillating_point, weakstar_distance)
from .systems import TOL, CircleSystem, GeneratorSystem, ShiftSystem
from .words import Itinerary, word_array

XI = ("B_lower", "lower", "upper", "B_upper")


@dataclass(frozen=True)
class VisitSet:
    indices: np.ndarray
    horizon: int

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.horizon):
            raise ValueError("visit indices must lie in [0, horizon)")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_mask(cls, mask) -> "VisitSet":
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask), mask.size)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.horizon, dtype=bool)
        out[self.indices] = True
        return out

    def complement(self) -> "VisitSet":
        return VisitSet.from_mask(~self.mask())

    def __len__(self):
        return int(self.indices.size)


@dataclass
class DensityStats:
    upper: float
    lower: float
    banach_upper: float
    banach_lower: float
    window_schedule: list

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper,
                "B_upper": self.banach_upper, "B_lower": self.banach_lower}


def default_windows(horizon: int) -> list[int]:
    return sorted({max(1, int(math.isqrt(horizon))), max(1, int(round(horizon ** (2 / 3)))),
                   max(1, horizon // 8)})


def tail_start(horizon: int) -> int:
    """First prefix length counted in the upper and lower densities."""
    return max(1, math.isqrt(horizon - 1) + 1 if horizon > 1 else 1)


def density_stats(S: VisitSet, window_schedule=None) -> DensityStats:
    """Four densities of ``S`` at its horizon.

    Upper and lower are max and min of the prefix ratios over the tail
    ``n in [ceil(sqrt h), h]``.  The Banach pair is the max and min over
    every sliding window whose length is in the schedule, with the tail
    prefixes counted as windows too, so the chain
    ``B_lower <= lower <= upper <= B_upper`` holds by construction.
    """
    h = S.horizon
    windows = list(window_schedule) if window_schedule is not None else default_windows(h)
    if max(windows) > h:
        raise ValueError("horizon must be at least the largest window")
    csum = np.concatenate([[0], np.cumsum(S.mask(), dtype=np.int64)])
    n = np.arange(tail_start(h), h + 1)
    ratios = csum[n] / n
    upper, lower = float(ratios.max()), float(ratios.min())
    b_up, b_low = upper, lower
    for L in windows:
        counts = (csum[L:] - csum[:-L]) / L
        b_up = max(b_up, float(counts.max()))
        b_low = min(b_low, float(counts.min()))
    return DensityStats(upper, lower, b_up, b_low, windows)


# -- visits ------------------------------------------------------------------------

def _orbit_for_visits(sys, it, x, horizon, radius):
    if isinstance(sys, ShiftSystem):
        depth = sys.depth_for(radius)
        return orbit_array(sys, it, x, horizon, depth), depth
    return orbit_array(sys, it, x, horizon), None


def _near(sys, orbit, center, radius, depth):
    if isinstance(sys, ShiftSystem):
        c = np.asarray(center, dtype=np.int64)[:depth]
        return np.all(orbit[:, :depth] == c, axis=1)
    return sys.distance_batch(orbit, np.asarray(center)) < radius - TOL


def visiting_times(sys: GeneratorSystem, it, x, center, radius: float, horizon: int) -> VisitSet:
    """``{n < horizon : f_{i_{n-1} ... i_0}(x) in B(center, radius)}``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    orbit, depth = _orbit_for_visits(sys, it, x, horizon, radius)
    return VisitSet.from_mask(_near(sys, orbit, center, radius, depth))


# -- classification ------------------------------------------------------------------

@dataclass
class RecurrenceVerdict:
    transitive_eps: bool
    quasiregular_gap: float
    quasiregular: bool
    upper_recurrent_eps: bool
    banach_upper_recurrent_eps: bool
    densities: dict
    epsilon: float
    horizon: int
    threshold: float
    qr_tolerance: float
    level: str = "none"
    case_id: str = "undetermined"
    finite_scale: bool = True

    def row(self) -> dict:
        return asdict(self)


def probes_for(sys: GeneratorSystem, eps: float):
    """Probe points whose ``eps``-balls cover the state space."""
    if isinstance(sys, ShiftSystem):
        depth = max(sys.depth_for(eps), 1)
        return word_array(sys.k, depth)
    if isinstance(sys, CircleSystem):
        n = max(1, math.ceil(1.0 / eps))
        return (np.arange(n) + 0.5) / n
    return sys.grid(None)


def is_transitive(sys, orbit, eps, depth=None) -> bool:
    if isinstance(sys, ShiftSystem):
        d = max(sys.depth_for(eps), 1)
        if orbit.shape[1] < d:
            raise ValueError("orbit windows too short for the transitivity depth")
        seen = np.unique(orbit[:, :d] @ (sys.k ** np.arange(d - 1, -1, -1)))
        return seen.size == sys.k ** d
    probes = probes_for(sys, eps)
    for y in probes:
        if not np.any(sys.distance_batch(orbit, y) < eps - TOL):
            return False
    return True


def default_checkpoints(horizon: int) -> list[int]:
    lo = max(2, horizon // 16)
    cps = [2 ** k for k in range(int(math.log2(lo)), int(math.log2(horizon)) + 1) if lo <= 2 ** k <= horizon]
    if not cps or cps[-1] != horizon:
        cps.append(horizon)
    return sorted(set(cps))


def classify_recurrence(sys: GeneratorSystem, it, x, eps: float, horizon: int, threshold: float | None = None,
                        qr_tolerance: float = 0.05, depth: int = 1, resolution=None,
                        checkpoints=None, support_threshold: float = 0.02) -> RecurrenceVerdict:
    """Flags for ``(it, x)`` at scale ``eps`` and ``horizon``.

    ``threshold`` is the positivity cut for densities (default ``10/horizon``).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    tau = 10.0 / horizon if threshold is None else float(threshold)
    if isinstance(sys, ShiftSystem):
        window = max(sys.depth_for(eps), resolution or 1, 1)
        orbit = orbit_array(sys, it, x, horizon, window)
        res = resolution or 1
    else:
        orbit = orbit_array(sys, it, x, horizon)
        res = resolution or max(4, math.ceil(1.0 / eps))
    transitive = is_transitive(sys, orbit, eps)
    if isinstance(sys, ShiftSystem):
        d = sys.depth_for(eps)
        x0 = np.asarray(x)[:d]
        visits = VisitSet.from_mask(np.all(orbit[:, :d] == x0, axis=1))
    else:
        visits = VisitSet.from_mask(sys.distance_batch(orbit, x) < eps - TOL)
    stats = density_stats(visits)
    cps = checkpoints or default_checkpoints(horizon)
    measures = empirical_measures_at(sys, it, x, cps, depth, res)
    family = default_test_family(sys, depth, res)
    tail = measures[len(measures) // 2:]
    gap = max((weakstar_distance(a, b, family) for a in tail for b in tail), default=0.0)
    upper = stats.upper > tau
    banach = stats.banach_upper > tau
    verdict = RecurrenceVerdict(transitive, gap, gap <= qr_tolerance, upper, banach, stats.as_dict(),
                                eps, horizon, tau, qr_tolerance)
    fam = LimitPointFamily(tail, cps, qr_tolerance, list(range(len(tail))), list(range(len(tail))))
    verdict.level = structure_predicates(fam, support_threshold, upper, banach)["level"]
    return verdict


# -- omega-limit sets ----------------------------------------------------------------

@dataclass
class OmegaReport:
    sets: dict
    densities: list
    epsilon: float
    horizon: int
    threshold: float
    window_schedule: list

    def chain_ok(self) -> bool:
        s = self.sets
        return s["B_lower"] <= s["lower"] <= s["upper"] <= s["B_upper"] <= s["omega"]


def omega_limit(sys: GeneratorSystem, it, x, eps: float, horizon: int, probes=None,
                threshold: float | None = None, window_schedule=None) -> OmegaReport:
    """Probe indices whose visit sets have ``xi``-density above the threshold, for each ``xi``.

    ``omega`` holds the probes visited at least once before the horizon.
    """
    tau = 10.0 / horizon if threshold is None else float(threshold)
    if probes is None:
        probes = probes_for(sys, eps)
    orbit, depth = _orbit_for_visits(sys, it, x, horizon, eps)
    sets = {k: set() for k in XI + ("omega",)}
    rows = []
    for i, y in enumerate(probes):
        S = VisitSet.from_mask(_near(sys, orbit, y, eps, depth))
        st = density_stats(S, window_schedule)
        d = st.as_dict()
        rows.append(d)
        for k in XI:
            if d[k] > tau:
                sets[k].add(i)
        if len(S):
            sets["omega"].add(i)
    return OmegaReport({k: frozenset(v) for k, v in sets.items()}, rows, eps, horizon, tau,
                       list(window_schedule or default_windows(horizon)))


CASE_PATTERNS = {
    # relations between consecutive sets in B_lower, lower, upper, B_upper, omega
    1: ("<", "=", "=", "="),
    2: ("<", "=", "<", "="),
    3: ("=", "<", "=", "="),
    4: ("<", "<", "=", "="),
    5: ("=", "<", "<", "="),
    6: ("<", "<", "<", "="),
}


def case_of(sets: dict) -> int | None:
    """The case whose pattern the chain of omega sets matches, or ``None``."""
    if sets["B_lower"]:
        return None
    chain = [sets[k] for k in XI + ("omega",)]
    rel = []
    for a, b in zip(chain, chain[1:]):
        if a == b:
            rel.append("=")
        elif a < b:
            rel.append("<")
        else:
            return None
    for cid, pat in CASE_PATTERNS.items():
        if tuple(rel) == pat:
            return cid
    return None


# -- structure predicates -------------------------------------------------------------

def structure_predicates(family: LimitPointFamily, support_threshold: float,
                         upper_flag: bool | None = None, banach_flag: bool | None = None) -> dict:
    if not family.measures:
        raise ValueError("family is empty")
    supports = [frozenset(zip(*np.nonzero(mu.mass >= support_threshold))) for mu in family.measures]
    union = frozenset().union(*supports)
    W = all(s == union for s in supports)
    V = any(s == union for s in supports)
    S = bool(frozenset.intersection(*supports))
    tests = [W, V and S, V, V or S, True]
    index = next(i for i, ok in enumerate(tests, start=1) if ok)
    level = "none"
    if upper_flag:
        level = f"QW_{index}"
    elif banach_flag:
        level = f"BR_{index}"
    return {"W": W, "V": V, "S": S, "index": index, "level": level, "support_sizes": [len(s) for s in supports]}


# -- case constructions ----------------------------------------------------------------

#: Symbol roles per case: "a" steady, "b" epoch, "c" burst.
CASE_ROLES = {
    1: ("a", "a"),
    2: ("a", "a", "c"),
    3: ("b", "b"),
    4: ("a", "b", "b"),
    5: ("b", "b", "c"),
    6: ("a", "b", "b", "c"),
}


@dataclass
class Schedule:
    """Block schedules behind the constructed points.

    ``epochs``: boundaries where the two epoch symbols swap (growth factor
    ``k + epoch_growth`` at step ``k``).  ``gaps``: start times of the
    absence blocks of steady symbols, with length ``gap_scale * sqrt(t)``.
    ``bursts``: start times of bursts, each the square of the previous, with
    length ``floor(burst_scale * sqrt(t))``.
    """

    epoch_start: int = 50
    epoch_growth: int = 12
    gap_start: int = 100
    gap_ratio: int = 4
    gap_scale: float = 2.5
    burst_start: int = 60
    burst_scale: float = 0.65

    def epochs(self, length: int) -> list[int]:
        out, e, k = [0], self.epoch_start, 0
        while e < length:
            out.append(e)
            e *= k + self.epoch_growth
            k += 1
        return out + [e]

    def gaps(self, length: int) -> list[tuple[int, int]]:
        out, t = [], self.gap_start
        while t < length:
            out.append((t, int(math.ceil(self.gap_scale * math.sqrt(t)))))
            t *= self.gap_ratio
        return out

    def bursts(self, length: int) -> list[tuple[int, int]]:
        out, t = [], self.burst_start
        while t < length:
            out.append((t, int(math.floor(self.burst_scale * math.sqrt(t)))))
            t = t * t
        return out


def case_sequence(case_id: int, length: int, schedule: Schedule | None = None) -> np.ndarray:
    """Symbol sequence realising the case's pattern of omega-limit sets with depth-1 probes."""
    if case_id not in CASE_ROLES:
        raise ValueError(f"case id must be in 1..6, got {case_id}")
    sch = schedule or Schedule()
    roles = CASE_ROLES[case_id]
    a_syms = [s for s, r in enumerate(roles) if r == "a"]
    b_syms = [s for s, r in enumerate(roles) if r == "b"]
    c_syms = [s for s, r in enumerate(roles) if r == "c"]
    t = np.arange(length)
    seq = np.full(length, -1, dtype=np.int64)

    # background: epoch symbols swap at each boundary
    if b_syms:
        bounds = sch.epochs(length)
        for k, (lo, hi) in enumerate(zip(bounds, bounds[1:])):
            seq[lo:min(hi, length)] = b_syms[k % 2]
    # steady symbols take fixed residues
    if a_syms:
        period = 2
        if len(a_syms) == 2:
            seq[:] = np.where(t % 2 == 0, a_syms[0], a_syms[1])
        else:
            seq[t % period == 0] = a_syms[0]
        # absence blocks, alternating between the steady symbols
        for g, (start, width) in enumerate(sch.gaps(length)):
            for i, a in enumerate(a_syms):
                lo = start + i * (width + 10)
                block = slice(lo, min(lo + width, length))
                idx = t[block]
                if len(a_syms) == 2:
                    seq[block] = a_syms[1 - i]
                else:
                    other = seq[block].copy()
                    # slots of the steady symbol go to the epoch symbol of that time
                    bounds = sch.epochs(length)
                    epoch = np.searchsorted(bounds, idx, side="right") - 1
                    fill = np.asarray(b_syms)[epoch % 2]
                    seq[block] = np.where(other == a, fill, other)
    for c in c_syms:
        for start, width in sch.bursts(length):
            seq[start:min(start + width, length)] = c
    if np.any(seq < 0):
        raise AssertionError("unfilled positions in case sequence")
    return seq


@dataclass
class CaseCertificate:
    case_id: int
    k: int
    threshold: float
    horizons: list
    schedule: dict
    omega_sets: dict = field(default_factory=dict)
    densities: dict = field(default_factory=dict)
    detected: dict = field(default_factory=dict)
    passed: bool = False


def construct_case_point(case_id: int, horizons=(10 ** 3, 10 ** 4, 10 ** 5), threshold: float = 0.1,
                         schedule: Schedule | None = None, system: str = "shift"):
    """Shift point for Case ``case_id`` with a certificate at each horizon.

    Returns ``(itinerary, x, system, certificate)``.  The system is the full
    shift on as many symbols as the case uses, with ``m = 1``.
    """
    if system != "shift":
        raise ValueError(f"unsupported system kind {system!r}; only the full shift is constructed")
    sch = schedule or Schedule()
    k = len(CASE_ROLES[case_id])
    length = max(horizons) + 1
    x = case_sequence(case_id, length, sch)
    sys = ShiftSystem(k)
    it = Itinerary.constant(0, 1)
    cert = CaseCertificate(case_id, k, threshold, list(horizons), asdict(sch))
    ok = True
    for h in horizons:
        rep = omega_limit(sys, it, x, 1.0, h, threshold=threshold)
        cert.omega_sets[h] = {key: sorted(v) for key, v in rep.sets.items()}
        cert.densities[h] = rep.densities
        found = case_of(rep.sets)
        cert.detected[h] = found
        ok = ok and found == case_id and rep.sets["omega"] == frozenset(range(k))
    cert.passed = ok
    return it, x, sys, cert


# -- gap families ----------------------------------------------------------------------

def burst_witness(length: int, first: int = 1, burst_start: int = 3600, burst_scale: float = 0.65) -> np.ndarray:
    """Zeros with bursts of ``first`` at squaring times: Banach recurrent but not upper recurrent."""
    x = np.zeros(length, dtype=np.int64)
    x[0] = first
    t = burst_start
    while t < length:
        x[t:t + int(burst_scale * math.sqrt(t))] = first
        t = t * t
    return x


def _distinct_prefixes(k, count, seed, fixed_first=None):
    free = 0
    while k ** free < count:
        free += 1
    rng = np.random.default_rng(seed)
    chosen = rng.choice(k ** free, size=count, replace=False)
    rows = word_array(k, free)[chosen] if free else np.zeros((count, 0), dtype=np.int64)
    if fixed_first is not None:
        rows = np.concatenate([np.full((count, 1), fixed_first), rows], axis=1)
    return rows


@dataclass
class GapFamily:
    pair: tuple
    y_filter: str | None
    points: np.ndarray
    system: ShiftSystem
    itinerary: Itinerary
    verdicts: list
    scale: dict

    def __len__(self):
        return len(self.points)


SUPPORTED_PAIRS = ("QW|BR", "|QR&BR1", "|T1", "|T2", "|T3", "|T4", "|T5", "|T6",
                   "|B1", "|B2", "|B3", "|B4", "|B5", "|B6", "|Tran")


def _pair_key(pair) -> str:
    lo, hi = pair
    lo = "" if lo in (None, "", "∅", "empty") else str(lo)
    hi = str(hi).replace("∩", "&").replace("_", "")
    return f"{lo}|{hi}"


def gap_set_sampler(sys: GeneratorSystem, pair, y_filter: str | None = None, count: int = 32, seed: int = 0,
                    horizon: int = 10 ** 5, threshold: float = 0.1):
    """Points in ``Z_j`` but not in ``Z_{j-1}`` (and in ``Y``) at the recorded scales.

    Each point is a distinct prefix followed by a witness tail; every point
    is re-classified before it is returned.
    """
    key = _pair_key(pair)
    if not isinstance(sys, ShiftSystem) or sys.m != 1:
        raise ValueError(f"constructor unavailable for {key!r} on {getattr(sys, 'kind', sys)} systems")
    if key not in SUPPORTED_PAIRS:
        raise ValueError(f"constructor unavailable for pair {key!r}")
    it = Itinerary.constant(0, 1)
    length = horizon + 64
    points, verdicts = [], []
    scale = {"epsilon": 1.0, "horizon": horizon, "threshold": threshold}
    if key in ("QW|BR", "|QR&BR1"):
        if sys.k < 2:
            raise ValueError("need at least two symbols")
        prefixes = _distinct_prefixes(sys.k, count, seed, fixed_first=1)
        tail = burst_witness(length)
        for p in prefixes:
            x = tail.copy()
            x[:len(p)] = np.where(p == 1, 1, 0)
            x[0] = 1
            v = classify_recurrence(sys, it, x, 1.0, horizon, threshold)
            ok = v.banach_upper_recurrent_eps and not v.upper_recurrent_eps
            if key == "|QR&BR1":
                ok = ok and v.quasiregular and v.level == "BR_1"
            if not ok:
                raise AssertionError(f"witness failed its check: {v.row()}")
            points.append(x)
            verdicts.append(v)
    elif key[1] in "TB" and key[2:].isdigit():
        case_id = int(key[2:])
        if sys.k != len(CASE_ROLES[case_id]):
            raise ValueError(f"case {case_id} lives on the full shift with {len(CASE_ROLES[case_id])} symbols")
        _, tail, _, cert = construct_case_point(case_id, (horizon,), threshold)
        if not cert.passed:
            raise AssertionError(f"case {case_id} certificate failed at horizon {horizon}")
        prefixes = _distinct_prefixes(sys.k, count, seed)
        for p in prefixes:
            x = np.concatenate([p, tail])[:length]
            rep = omega_limit(sys, it, x, 1.0, horizon, threshold=threshold)
            v = classify_recurrence(sys, it, x, 1.0, horizon, threshold)
            ok = case_of(rep.sets) == case_id
            ok = ok and (v.transitive_eps if key[1] == "T" else v.banach_upper_recurrent_eps)
            if not ok:
                raise AssertionError(f"case-{case_id} point lost its pattern after prefixing")
            points.append(x)
            verdicts.append(v)
        scale["case_id"] = case_id
    else:  # "|Tran" with an irregularity filter
        if y_filter not in (None, "irregular"):
            raise ValueError(f"unknown Y filter {y_filter!r}")
        if sys.k != 2:
            raise ValueError("irregular transitive family is built on the full 2-shift")
        depth = 4
        enum = word_array(2, depth).ravel()
        prefixes = _distinct_prefixes(2, count, seed)
        obs = ObservableFunctional.first_symbol(sys)
        cps = [2 ** j for j in range(6, int(math.log2(horizon)) + 1)]
        for p in prefixes:
            head = np.concatenate([p, enum])
            x = np.concatenate([head, oscillating_point(length)])[:length]
            v = classify_recurrence(sys, it, x, 2.0 ** -(depth - 1), horizon, threshold)
            prof = birkhoff_profile(sys, obs, it, x, cps)
            if not (v.transitive_eps and prof["verdict"] == "irregular_eps"):
                raise AssertionError("irregular transitive point failed its check")
            points.append(x)
            verdicts.append(v)
        scale["transitivity_depth"] = depth
    return GapFamily(tuple(pair), y_filter, np.asarray(points), sys, it, verdicts, scale)
