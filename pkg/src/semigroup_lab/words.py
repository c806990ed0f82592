"""Finite words, one-sided itineraries, the shift and the symbolic metric.

Words are immutable tuples of small integers over the alphabet ``{0..m-1}``.
Itineraries are infinite symbol streams, held either as an eventually
periodic pattern or as a seeded Bernoulli stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterator, Sequence

import numpy as np

#: Number of leading symbols compared by :func:`symbolic_distance`.
DEFAULT_HORIZON = 64
#: Largest ``m**n`` that :func:`enumerate_words` will walk through.
ENUMERATION_BUDGET = 2 ** 20

_STREAM_CHUNK = 4096


@dataclass(frozen=True)
class Word:
    """A finite word ``i_0 i_1 ... i_{k-1}`` over ``m`` symbols."""

    symbols: tuple[int, ...]
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("alphabet size must be >= 1")
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        for s in self.symbols:
            if not 0 <= s < self.m:
                raise ValueError(f"symbol {s} outside alphabet of size {self.m}")

    @classmethod
    def parse(cls, text: str, m: int) -> "Word":
        return cls(tuple(int(c) for c in text.strip()), m)

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Word(self.symbols[item], self.m)
        return self.symbols[item]

    def __add__(self, other: "Word") -> "Word":
        _check_alphabet(self.m, other.m)
        return Word(self.symbols + other.symbols, self.m)

    def __str__(self):
        if self.m > 10:
            return ",".join(map(str, self.symbols))
        return "".join(map(str, self.symbols))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.symbols, dtype=np.int64)


def _check_alphabet(m1, m2):
    if m1 != m2:
        raise ValueError(f"alphabet mismatch: {m1} != {m2}")


def reverse(w: Word) -> Word:
    return Word(w.symbols[::-1], w.m)


def suffix_order(w_short: Word, w: Word) -> bool:
    """True iff ``w = w'' w_short`` for some word ``w''`` (right factor)."""
    _check_alphabet(w_short.m, w.m)
    k = len(w_short)
    return k <= len(w) and (k == 0 or w.symbols[-k:] == w_short.symbols)


@dataclass(frozen=True)
class Itinerary:
    """One-sided infinite sequence over ``m`` symbols.

    Use :meth:`periodic` for ``preamble`` followed by ``period`` repeated
    forever, or :meth:`bernoulli` for an i.i.d. stream with law ``p``
    reproducible from ``seed``. ``offset`` counts shifts already applied to
    a stream.
    """

    m: int
    preamble: tuple[int, ...] = ()
    period: tuple[int, ...] = ()
    p: tuple[float, ...] | None = None
    seed: int | None = None
    offset: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.p is None:
            if not self.period:
                raise ValueError("periodic itinerary needs a nonempty period")
            for s in self.preamble + self.period:
                if not 0 <= s < self.m:
                    raise ValueError(f"symbol {s} outside alphabet of size {self.m}")
        else:
            if len(self.p) != self.m:
                raise ValueError("Bernoulli vector length must equal m")
            if min(self.p) <= 0 or abs(sum(self.p) - 1.0) > 1e-12:
                raise ValueError("Bernoulli vector must be positive and sum to 1")
            if self.seed is None:
                raise ValueError("stream itinerary needs a seed")

    @classmethod
    def periodic(cls, period: Sequence[int], m: int, preamble: Sequence[int] = ()) -> "Itinerary":
        return cls(m=m, preamble=tuple(int(s) for s in preamble),
                   period=tuple(int(s) for s in period))

    @classmethod
    def constant(cls, symbol: int, m: int) -> "Itinerary":
        return cls.periodic((symbol,), m)

    @classmethod
    def bernoulli(cls, p: Sequence[float], seed: int) -> "Itinerary":
        return cls(m=len(p), p=tuple(float(v) for v in p), seed=int(seed))

    @property
    def is_periodic(self) -> bool:
        return self.p is None

    def _stream_chunk(self, idx: int) -> np.ndarray:
        chunk = self._cache.get(idx)
        if chunk is None:
            rng = np.random.default_rng([self.seed, idx])
            chunk = rng.choice(self.m, size=_STREAM_CHUNK, p=self.p).astype(np.int64)
            self._cache[idx] = chunk
        return chunk

    def prefix(self, n: int) -> np.ndarray:
        """The first ``n`` symbols as an int array."""
        if self.is_periodic:
            pre = np.asarray(self.preamble, dtype=np.int64)
            if n <= len(pre):
                return pre[:n].copy()
            per = np.asarray(self.period, dtype=np.int64)
            reps = -(-(n - len(pre)) // len(per))
            return np.concatenate([pre, np.tile(per, reps)])[:n]
        start, stop = self.offset, self.offset + n
        first, last = start // _STREAM_CHUNK, (stop - 1) // _STREAM_CHUNK if n else start // _STREAM_CHUNK
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        parts = np.concatenate([self._stream_chunk(i) for i in range(first, last + 1)])
        base = first * _STREAM_CHUNK
        return parts[start - base: stop - base]

    def word(self, a: int, b: int) -> Word:
        """The block ``i_a ... i_b`` (inclusive), as a :class:`Word`."""
        return Word(tuple(self.prefix(b + 1)[a:].tolist()), self.m)

    def __str__(self):
        if self.is_periodic:
            return "".join(map(str, self.preamble)) + "|" + "".join(map(str, self.period))
        text = "bern:" + ",".join(repr(v) for v in self.p) + f":{self.seed}"
        return text + (f"@{self.offset}" if self.offset else "")

    @classmethod
    def parse(cls, text: str, m: int | None = None) -> "Itinerary":
        """Inverse of ``str``: ``"preamble|period"`` or ``"bern:p0,p1,...:seed"``."""
        text = text.strip()
        if text.startswith("bern:"):
            _, probs, rest = text.split(":", 2)
            seed, _, offset = rest.partition("@")
            it = cls.bernoulli([float(v) for v in probs.split(",")], int(seed))
            return shift(it, int(offset)) if offset else it
        pre, sep, per = text.partition("|")
        if not sep:
            raise ValueError(f"periodic itinerary must contain '|': {text!r}")
        syms = [int(c) for c in pre + per]
        if m is None:
            m = max(syms) + 1
        return cls.periodic([int(c) for c in per], m, [int(c) for c in pre])


def shift(it: Itinerary, k: int = 1) -> Itinerary:
    """Apply the shift ``k`` times; periodic forms stay periodic."""
    if k < 0:
        raise ValueError("shift count must be nonnegative")
    if not it.is_periodic:
        return Itinerary(m=it.m, p=it.p, seed=it.seed, offset=it.offset + k)
    pre, per = it.preamble, it.period
    drop = min(k, len(pre))
    pre, k = pre[drop:], k - drop
    r = k % len(per)
    per = per[r:] + per[:r]
    return Itinerary.periodic(per, it.m, pre)


def symbolic_distance(a: Itinerary, b: Itinerary, horizon: int = DEFAULT_HORIZON) -> float:
    """``2**-j`` with ``j`` the first disagreement; 0 if none within ``horizon``."""
    _check_alphabet(a.m, b.m)
    diff = np.flatnonzero(a.prefix(horizon) != b.prefix(horizon))
    return 0.0 if diff.size == 0 else 2.0 ** (-int(diff[0]))


def word_array(m: int, n: int, budget: int = ENUMERATION_BUDGET) -> np.ndarray:
    """All ``m**n`` words of length ``n`` as rows, in lexicographic order."""
    if n < 0:
        raise ValueError("word length must be >= 0")
    if m ** n > budget:
        raise OverflowError(f"{m}**{n} words exceed the enumeration budget {budget}; sample instead")
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(m ** n, dtype=np.int64)
    powers = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % m


def enumerate_words(m: int, n: int, budget: int = ENUMERATION_BUDGET) -> Iterator[Word]:
    if n < 0:
        raise ValueError("word length must be >= 0")
    if m ** n > budget:
        raise OverflowError(f"{m}**{n} words exceed the enumeration budget {budget}; sample instead")
    for syms in product(range(m), repeat=n):
        yield Word(syms, m)


def sample_words(m: int, n: int, count: int, seed: int) -> list[Word]:
    """``count`` i.i.d. uniform words of length ``n``."""
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, m, size=(count, n))
    return [Word(tuple(r.tolist()), m) for r in rows]
