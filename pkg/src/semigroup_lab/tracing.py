"""Orbit tracing: specification interpolation, g-almost product tracing and its skew-product lift.

All constructions use one engine: pick a target point for every time step,
then pull a seed back from the final time along inverse branches, at each
step taking the preimage nearest to the target.  Inverse branches of
expanding maps contract by at least ``lambda_min``, so a jump between
inconsistent targets is forgotten geometrically going backwards.  On the
circle the arithmetic is exact (``Fraction``); on shifts a pullback simply
prepends the target symbol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .covers import BlowupFunction
from .systems import TOL, CircleSystem, GeneratorSystem, ShiftSystem, TorusSystem
from .words import Itinerary, Word

SHIFT_TAIL = 48


# -- scale functions ---------------------------------------------------------------

def spec_gap(sys: GeneratorSystem, eps: float) -> int:
    """Specification gap ``p(eps)`` for the shipped expanding and symbolic systems."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(sys, ShiftSystem):
        return max(0, math.ceil(math.log2(1.0 / eps) - TOL))
    if isinstance(sys, (CircleSystem, TorusSystem)) and sys.lambda_min and sys.lambda_min > 1:
        return max(0, math.ceil(math.log(sys.diameter / eps) / math.log(sys.lambda_min) - TOL))
    raise ValueError(f"no specification gap for {sys.kind} systems without expansion")


def dyadic_level(eps: float) -> int:
    """``r = min{i : 2 * 2**-i <= eps}``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return max(0, math.ceil(1 - math.log2(eps) - TOL))


def snap(eps: float) -> float:
    """``2 * delta_r`` for ``r = dyadic_level(eps)``."""
    return 2.0 * 2.0 ** -dyadic_level(eps)


def gap_function(sys: GeneratorSystem, p_table=None, max_level: int = 60):
    """``p`` as a callable; a user table (callable or ``{r: p(2**-r)}``) must be nonincreasing in eps."""
    if p_table is None:
        return lambda eps: spec_gap(sys, eps)
    if isinstance(p_table, dict):
        table = dict(p_table)

        def fn(eps):
            r = max(0, math.ceil(-math.log2(eps) - TOL))
            if r not in table:
                raise ValueError(f"p table has no entry for 2**-{r}")
            return int(table[r])

        levels = sorted(table)
        vals = [table[r] for r in levels]
    else:
        fn = lambda eps: int(p_table(eps))
        vals = [fn(2.0 ** -r) for r in range(max_level)]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise ValueError("p table must be nonincreasing in eps")
    return fn


def min_length(sys: GeneratorSystem, g: BlowupFunction, eps: float, limit: int = 10 ** 6, p=None) -> int:
    """``m(eps) = min{n : g(n) >= 2 p(delta_r)}``."""
    p = p or gap_function(sys)
    target = 2 * p(2.0 ** -dyadic_level(eps))
    for n in range(1, limit):
        if g(n) >= target:
            return n
    raise ValueError("blowup function never reaches the required value")


def min_length_skew(sys: GeneratorSystem, g: BlowupFunction, eps: float, limit: int = 10 ** 6) -> int:
    """``m_F(eps) = min{n : g(n) >= 2 p_sigma(delta_r) and n >= m_G(delta_r)}``."""
    r = dyadic_level(eps)
    delta = 2.0 ** -r
    p_sigma = max(0, math.ceil(math.log2(1.0 / delta) - TOL))
    m_g = min_length(sys, g, delta, limit)
    for n in range(m_g, limit):
        if g(n) >= 2 * p_sigma:
            return n
    raise ValueError("blowup function never reaches the required value")


# -- requests and certificates -----------------------------------------------------

@dataclass
class TraceRequest:
    """Segments ``(x_j, w_j, eps_j)``; ``gaps[j]`` symbols separate segment ``j`` from ``j+1``."""

    segments: list
    gaps: list | None = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("need at least one segment")
        for _, w, eps in self.segments:
            if eps <= 0:
                raise ValueError("eps must be positive")
        if self.gaps is not None and len(self.gaps) != len(self.segments) - 1:
            raise ValueError("need one gap between each pair of consecutive segments")

    def words(self):
        return [w for _, w, _ in self.segments]


@dataclass
class TraceCertificate:
    """Per-segment mismatch counts against the strict bounds ``g(|w_j|+1)``."""

    counts: list
    bounds: list
    requested_eps: list
    snapped_eps: list
    starts: list
    passed: bool = False

    def csv_rows(self):
        return [(j, c, b, c < b) for j, (c, b) in enumerate(zip(self.counts, self.bounds))]


# -- exact orbit helpers --------------------------------------------------------------

def _exact(sys, x):
    if isinstance(sys, ShiftSystem):
        return np.asarray(x, dtype=np.int64)
    if isinstance(sys, CircleSystem):
        return x if isinstance(x, Fraction) else Fraction(float(x))
    if isinstance(sys, TorusSystem):
        return tuple(v if isinstance(v, Fraction) else Fraction(float(v)) for v in x)
    raise ValueError(f"tracing is not available for {sys.kind} systems")


def _orbit(sys, x, symbols):
    out = [x]
    for j in symbols:
        x = sys.step(int(j), x)
        out.append(x)
    return out


@dataclass
class _Member:
    start: object
    symbols: tuple
    delta: float
    p: int
    original: bool
    members: list = field(default_factory=list)  # indices of original points inside

    @property
    def n(self):
        return len(self.symbols)

    def constrained(self):
        if self.original:
            return self.p, self.n - self.p
        return 0, self.n


def _pullback(sys, members, free_after=None):
    """Point whose orbit follows the members' constrained ranges in order.

    ``free_after[i]`` symbols of unconstrained gap follow member ``i``
    (their targets continue member ``i``'s orbit).
    """
    targets, symbols = [], []
    cont = None
    for i, mem in enumerate(members):
        lo, hi = mem.constrained()
        orbit = _orbit(sys, mem.start, mem.symbols)
        for t in range(mem.n):
            if t < lo and cont is not None:
                target = cont
            else:
                target = orbit[t]
            targets.append(target)
            symbols.append(mem.symbols[t])
            cont = sys.step(int(mem.symbols[t]), target)
        gap = free_after[i] if free_after else ()
        for j in gap:
            targets.append(cont)
            symbols.append(int(j))
            cont = sys.step(int(j), cont)
    y = cont
    for t in range(len(symbols) - 1, -1, -1):
        y = sys.nearest_preimage(symbols[t], y, targets[t])
    return y


def _shift_pad(sys, x, n):
    x = np.asarray(x, dtype=np.int64)
    if x.size < n + SHIFT_TAIL:
        raise ValueError(f"shift point needs at least {n + SHIFT_TAIL} symbols, got {x.size}")
    return x


def _check_system(sys):
    if isinstance(sys, ShiftSystem):
        return
    if isinstance(sys, (CircleSystem, TorusSystem)) and sys.lambda_min and sys.lambda_min > 1:
        return
    raise ValueError(f"unsupported system for tracing: {sys.kind}")


# -- specification ------------------------------------------------------------------

def specification_trace(sys: GeneratorSystem, request: TraceRequest, gap_words=None):
    """A point in the intersection of the pulled-back Bowen balls of the segments.

    ``gap_words[j]`` (a :class:`Word`) is applied between segment ``j`` and
    ``j+1``; its length must be at least ``p`` of the finer of the two scales.
    """
    _check_system(sys)
    segs = request.segments
    if len(segs) == 1:
        return _exact(sys, segs[0][0])
    if gap_words is None:
        lens = request.gaps or [spec_gap(sys, min(segs[j][2], segs[j + 1][2])) for j in range(len(segs) - 1)]
        gap_words = [Word((0,) * L, sys.m) for L in lens]
    if len(gap_words) != len(segs) - 1:
        raise ValueError("need one gap word between each pair of segments")
    members = []
    for j, (x, w, eps) in enumerate(segs):
        if j < len(segs) - 1:
            need = spec_gap(sys, min(eps, segs[j + 1][2]))
            if len(gap_words[j]) < need:
                raise ValueError(f"gap {j} has length {len(gap_words[j])}, shorter than p(eps) = {need}")
        x = _exact(sys, x)
        if isinstance(sys, ShiftSystem):
            x = _shift_pad(sys, x, len(w))
        members.append(_Member(x, tuple(w.symbols), eps, 0, False, [j]))
    return _pullback(sys, members, [tuple(g.symbols) for g in gap_words] + [()])


# -- g-almost product ------------------------------------------------------------------

def g_almost_trace(sys: GeneratorSystem, g: BlowupFunction, request: TraceRequest, p_table=None):
    """Iterative level construction; returns ``(y, certificate)``.

    Each ``eps_j`` is snapped to ``2 delta_{r_j}``.  Levels are processed from
    coarse to fine; at each level the maximal runs of consecutive points of
    at least that scale are replaced by one concatenated point, original
    points leaving ``p`` burn-in and burn-out indices free and concatenated
    points constrained over their whole range.
    """
    _check_system(sys)
    p = gap_function(sys, p_table)
    segs = request.segments
    members = []
    for j, (x, w, eps) in enumerate(segs):
        need = min_length(sys, g, eps, p=p)
        if len(w) < need:
            raise ValueError(f"segment {j}: word length {len(w)} is below m(eps) = {need}")
        r = dyadic_level(eps)
        delta = 2.0 ** -r
        x = _exact(sys, x)
        if isinstance(sys, ShiftSystem):
            x = _shift_pad(sys, x, len(w))
        members.append(_Member(x, tuple(w.symbols), delta, p(delta), True, [j]))
    levels = sorted({m.delta for m in members}, reverse=True)
    for level in levels:
        new, i = [], 0
        while i < len(members):
            if members[i].delta < level:
                new.append(members[i])
                i += 1
                continue
            k = i
            while k < len(members) and members[k].delta >= level:
                k += 1
            comp = members[i:k]
            if len(comp) == 1:
                new.append(comp[0])
            else:
                y = _pullback(sys, comp)
                symbols = sum((c.symbols for c in comp), ())
                new.append(_Member(y, symbols, level, p(level), False,
                                   sum((c.members for c in comp), [])))
            i = k
        members = new
    y = members[0].start
    return y, verify_trace(sys, y, request, g)


def verify_trace(sys: GeneratorSystem, y, request: TraceRequest, g: BlowupFunction) -> TraceCertificate:
    """Recount every mismatch from scratch along the exact orbit of ``y``."""
    segs = request.segments
    gaps = request.gaps or [0] * (len(segs) - 1)
    symbols, starts = [], []
    for j, (_, w, _) in enumerate(segs):
        starts.append(len(symbols))
        symbols += list(w.symbols)
        if j < len(gaps):
            symbols += [0] * int(gaps[j])
    y = _exact(sys, y)
    y_orbit = _orbit(sys, y, symbols)
    counts, bounds = [], []
    for (x, w, eps), s in zip(segs, starts):
        x_orbit = _orbit(sys, _exact(sys, x), w.symbols)
        c = sum(float(sys.distance(y_orbit[s + t], x_orbit[t])) > eps + TOL for t in range(len(w) + 1))
        counts.append(int(c))
        bounds.append(g(len(w) + 1))
    passed = all(c < b for c, b in zip(counts, bounds))
    return TraceCertificate(counts, bounds, [e for _, _, e in segs], [snap(e) for _, _, e in segs], starts, passed)


# -- skew-product lift -----------------------------------------------------------------

@dataclass
class SkewTraceCertificate:
    counts: list
    bounds: list
    requested_eps: list
    snapped_eps: list
    base: TraceCertificate
    passed: bool = False

    def csv_rows(self):
        return [(j, c, b, c < b) for j, (c, b) in enumerate(zip(self.counts, self.bounds))]


def _itinerary_symbols(it, n):
    if isinstance(it, Itinerary):
        return it.prefix(n)
    arr = np.asarray(it, dtype=np.int64)
    if arr.size < n:
        raise ValueError(f"itinerary needs {n} symbols, got {arr.size}")
    return arr[:n]


def skew_trace_lift(sys: GeneratorSystem, g: BlowupFunction, segments, horizon: int = 64):
    """Trace ``(iota_j, x_j)`` segments of lengths ``n_j`` for the skew product.

    ``segments`` holds ``(iota_j, x_j, n_j, eps_j)``.  The itinerary is the
    concatenation of the ``iota_j`` prefixes followed by the continuation
    of the last one; the state comes from :func:`g_almost_trace` along those
    blocks.  Returns ``((iota, y), certificate)``.
    """
    _check_system(sys)
    blocks, req = [], []
    for j, (it, x, n, eps) in enumerate(segments):
        need = min_length_skew(sys, g, eps)
        if n < need:
            raise ValueError(f"segment {j}: length {n} is below m_F(eps) = {need}")
        sym = _itinerary_symbols(it, n + horizon)
        blocks.append(sym)
        req.append((x, Word(tuple(sym[:n].tolist()), sys.m), eps))
    iota = np.concatenate([b[:n] for b, (_, _, n, _) in zip(blocks[:-1], segments[:-1])] + [blocks[-1]])
    request = TraceRequest(req)
    y, base_cert = g_almost_trace(sys, g, request)
    cert = verify_skew_trace(sys, (iota, y), segments, g, horizon)
    cert.base = base_cert
    return (iota, y), cert


def verify_skew_trace(sys, point, segments, g, horizon: int = 64) -> SkewTraceCertificate:
    """Count ``D``-mismatches of the lifted orbit against every segment directly."""
    iota, y = point
    iota = np.asarray(iota, dtype=np.int64)
    y = _exact(sys, y)
    total = sum(n for _, _, n, _ in segments)
    y_orbit = _orbit(sys, y, iota[:total])
    counts, bounds, s = [], [], 0
    for it, x, n, eps in segments:
        sym = _itinerary_symbols(it, n + horizon)
        x_orbit = _orbit(sys, _exact(sys, x), sym[:n])
        c = 0
        for t in range(n + 1):
            a = iota[s + t: s + t + horizon]
            b = sym[t: t + horizon]
            L = min(a.size, b.size)
            diff = np.flatnonzero(a[:L] != b[:L])
            d_itin = 0.0 if diff.size == 0 else 2.0 ** -int(diff[0])
            d = max(d_itin, float(sys.distance(y_orbit[s + t], x_orbit[t])))
            c += d > eps + TOL
        counts.append(int(c))
        bounds.append(2 * g(n + 1))
        s += n
    passed = all(c < b for c, b in zip(counts, bounds))
    return SkewTraceCertificate(counts, bounds, [e for *_, e in segments], [snap(e) for *_, e in segments],
                                None, passed)


CERTIFICATE_HEADER = ("segment", "count", "bound", "pass")


def certificate_check(rows) -> bool:
    """Re-derive the pass column of serialized certificate rows; all segments must pass."""
    ok = True
    for row in rows:
        count, bound = int(row["count"]), int(row["bound"])
        flag = str(row["pass"]).strip().lower() in ("true", "1")
        if flag != (count < bound) or not flag:
            ok = False
    return ok
