"""Word-averaged entropy, capacity entropies of finite point families and the skew-product identities.

The double limits are replaced by finite surrogates: the growth rate over
``n`` is a least-squares slope of ``log A_n`` over a window of lengths, and
the limit in ``eps`` by a plateau check across an ``eps`` schedule.  All logs
are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covers import greedy_select
from .parallel import pmap
from .systems import GeneratorSystem, ShiftSystem, TorusSystem
from .words import ENUMERATION_BUDGET, Word, word_array

DEFAULT_CIRCLE_GRID = 2 ** 12
DEFAULT_TORUS_GRID = 64


# -- word strategies -----------------------------------------------------------

class ConvergenceError(ValueError):
    """A bracketing or iteration scheme failed to settle at the requested scale."""


@dataclass(frozen=True)
class WordStrategy:
    """``exact`` enumerates every word; ``sampled`` draws ``count`` uniform words with ``seed``.

    A sampled strategy whose budget covers all ``m**n`` words enumerates them.
    """

    kind: str = "exact"
    count: int = 4096
    seed: int = 0

    @classmethod
    def parse(cls, text: str) -> "WordStrategy":
        text = text.strip()
        if text == "exact":
            return cls()
        if text.startswith("sampled"):
            _, _, rest = text.partition(":")
            count, _, seed = rest.partition(":")
            return cls("sampled", int(count or 4096), int(seed or 0))
        raise ValueError(f"unknown word strategy {text!r}")

    def __str__(self):
        return "exact" if self.kind == "exact" else f"sampled:{self.count}:{self.seed}"

    def words(self, m: int, n: int) -> tuple[np.ndarray, bool]:
        """Word rows for length ``n`` and whether they are the full enumeration."""
        if self.kind == "exact" and m ** n <= ENUMERATION_BUDGET:
            return word_array(m, n), True
        if self.kind == "exact":
            raise OverflowError(f"{m}**{n} words exceed the enumeration budget; use a sampled strategy")
        if m ** n <= self.count:
            return word_array(m, n), True
        rng = np.random.default_rng([self.seed, n])
        return rng.integers(0, m, size=(self.count, n)), False


def default_pool(sys: GeneratorSystem, n_max: int, eps_min: float, resolution: int | None = None):
    """Candidate pool fine enough for every ``(n <= n_max, eps >= eps_min)`` pair."""
    if isinstance(sys, ShiftSystem):
        return sys.grid(n_max + sys.depth_for(eps_min))
    if sys.kind == "circle":
        return sys.grid(resolution or DEFAULT_CIRCLE_GRID)
    if isinstance(sys, TorusSystem):
        return sys.grid(resolution or DEFAULT_TORUS_GRID)
    return sys.grid(resolution)


def _counts(sys, rows, radius, pool, seed):
    m = sys.m
    return np.asarray(pmap(lambda r: len(greedy_select(sys, Word(tuple(r), m), radius, pool, seed)), rows),
                      dtype=float)


# -- fits ----------------------------------------------------------------------

def fit_slope(ns, logs) -> dict:
    ns = np.asarray(ns, dtype=float)
    logs = np.asarray(logs, dtype=float)
    if len(ns) < 3:
        raise ValueError("degenerate fit: need at least 3 lengths")
    slope, intercept = np.polyfit(ns, logs, 1)
    resid = logs - (slope * ns + intercept)
    spread = float(np.sum((ns - ns.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid ** 2)) / (len(ns) - 2) / spread)
    return {"slope": float(slope), "intercept": float(intercept),
            "residual": float(np.sqrt(np.mean(resid ** 2))), "stderr": stderr}


def limsup_slope(ns, logs) -> float:
    """Largest windowed slope among windows inside the top third of the range (at least 3 points)."""
    ns = np.asarray(ns, dtype=float)
    logs = np.asarray(logs, dtype=float)
    k = len(ns)
    start = min(k - 3, k - max(3, k // 3))
    best = -math.inf
    for a in range(start, k - 2):
        for b in range(a + 3, k + 1):
            best = max(best, float(np.polyfit(ns[a:b], logs[a:b], 1)[0]))
    return best


def plateau(values: dict, tol: float) -> float:
    """The largest key whose value agrees within ``tol`` with every smaller key; else the smallest key."""
    keys = sorted(values)
    for i in range(len(keys) - 1, -1, -1):
        if all(abs(values[keys[i]] - values[k]) <= tol for k in keys[:i]):
            return keys[i]
    return keys[0]


# -- Bufetov entropy -------------------------------------------------------------

@dataclass
class EntropyEstimate:
    value: float
    epsilon_schedule: list
    n_range: tuple
    per_n_log_counts: list
    fits: dict
    plateau_epsilon: float
    word_strategy: str
    monotone_in_eps: bool = True

    @property
    def fit(self) -> dict:
        return self.fits[self.plateau_epsilon]

    def csv_rows(self):
        """``epsilon, n, mean_count, log_mean, fit_slope, stderr`` rows."""
        return [(r["epsilon"], r["n"], r["mean_count"], r["log_mean"],
                 self.fits[r["epsilon"]]["slope"], r["stderr"]) for r in self.per_n_log_counts]


def _n_values(n_range):
    lo, hi = int(n_range[0]), int(n_range[1])
    if hi - lo + 1 < 3:
        raise ValueError("degenerate fit: n_range must hold at least 3 lengths")
    return list(range(lo, hi + 1))


def average_counts(sys, eps, n, strategy, pool, seed=0):
    """``A_n(eps)`` as (mean, stderr of the mean, per-word counts, word rows)."""
    rows, exact = strategy.words(sys.m, n)
    counts = _counts(sys, rows, eps, pool, seed)
    stderr = 0.0 if exact else float(counts.std(ddof=1) / math.sqrt(len(counts)))
    return float(counts.mean()), stderr, counts, rows


def bufetov_entropy(sys: GeneratorSystem, eps_schedule, n_range, word_strategy=None,
                    pool=None, resolution: int | None = None, plateau_tol: float = 0.05,
                    seed: int = 0) -> EntropyEstimate:
    strategy = word_strategy or WordStrategy()
    if isinstance(strategy, str):
        strategy = WordStrategy.parse(strategy)
    eps_schedule = sorted(float(e) for e in eps_schedule)
    ns = _n_values(n_range)
    if pool is None:
        pool = default_pool(sys, ns[-1], eps_schedule[0], resolution)
    table, fits = [], {}
    means = {}
    for eps in eps_schedule:
        logs = []
        for n in ns:
            mean, stderr, _, _ = average_counts(sys, eps, n, strategy, pool, seed)
            means[(eps, n)] = mean
            logs.append(math.log(mean))
            table.append({"epsilon": eps, "n": n, "mean_count": mean, "log_mean": logs[-1],
                          "stderr": stderr / mean})
        fit = fit_slope(ns, logs)
        fit["limsup_slope"] = limsup_slope(ns, logs)
        fits[eps] = fit
    monotone = all(means[(a, n)] >= means[(b, n)] - 1e-9
                   for a, b in zip(eps_schedule, eps_schedule[1:]) for n in ns)
    chosen = plateau({e: f["slope"] for e, f in fits.items()}, plateau_tol)
    return EntropyEstimate(max(fits[chosen]["slope"], 0.0), eps_schedule, (ns[0], ns[-1]), table, fits,
                           chosen, str(strategy), monotone)


# -- skew product ------------------------------------------------------------------

def product_count(sys: GeneratorSystem, n: int, eps: float, itineraries, states, radius_fn=None,
                  seed: int = 0) -> int:
    """Greedy ``(n, eps)``-separated count for the skew product on the pool of pairs.

    ``itineraries`` is an int array of symbol rows and ``states`` a batch of
    the same length (pair ``i`` is ``(itineraries[i], states[i])``).  Pairs
    whose itineraries differ within the first ``n + depth`` symbols are
    always ``D``-separated, so the count splits into independent greedy runs
    on the state coordinates of each itinerary class, with the class's first
    ``n`` symbols as the word.
    """
    itineraries = np.asarray(itineraries, dtype=np.int64)
    need = n + ShiftSystem.depth_for(eps)
    if itineraries.shape[1] < need:
        raise ValueError(f"itinerary rows hold {itineraries.shape[1]} symbols; need {need}")
    keys, labels = np.unique(itineraries[:, :need], axis=0, return_inverse=True)
    labels = labels.reshape(-1)
    states = np.asarray(states)
    cache: dict = {}
    total = 0
    for c in range(len(keys)):
        members = np.flatnonzero(labels == c)
        word = tuple(keys[c, :n].tolist())
        key = (word, members.size, hash(states[members].tobytes()))
        if key not in cache:
            cache[key] = len(greedy_select(sys, Word(word, sys.m), eps, states[members], seed))
        total += cache[key]
    return total


def skew_cartesian_count(sys: GeneratorSystem, n: int, eps: float, pool, seed: int = 0) -> int:
    """``product_count`` on (every cylinder of length ``n + depth``) x ``pool``, without materialising pairs."""
    need = n + ShiftSystem.depth_for(eps)
    blocks = word_array(sys.m, need)
    words = np.unique(blocks[:, :n], axis=0)
    counts = {tuple(r.tolist()): len(greedy_select(sys, Word(tuple(r), sys.m), eps, pool, seed))
              for r in words}
    return int(sum(counts[tuple(b[:n].tolist())] for b in blocks))


def skew_entropy_check(sys: GeneratorSystem, eps_schedule, n_range, word_strategy=None, pool=None,
                       resolution: int | None = None, plateau_tol: float = 0.05, seed: int = 0) -> dict:
    """Estimate ``h(F)`` on the product pool and ``h(G)`` on the base pool; report the defect."""
    base = bufetov_entropy(sys, eps_schedule, n_range, word_strategy, pool, resolution, plateau_tol, seed)
    ns = _n_values(n_range)
    eps_schedule = sorted(float(e) for e in eps_schedule)
    if pool is None:
        pool = default_pool(sys, ns[-1], eps_schedule[0], resolution)
    fits, table = {}, []
    for eps in eps_schedule:
        logs = [math.log(skew_cartesian_count(sys, n, eps, pool, seed)) for n in ns]
        table += [{"epsilon": eps, "n": n, "log_count": v} for n, v in zip(ns, logs)]
        fits[eps] = fit_slope(ns, logs)
    chosen = plateau({e: f["slope"] for e, f in fits.items()}, plateau_tol)
    h_f = fits[chosen]["slope"]
    h_g = base.value
    return {"h_F_estimate": h_f, "h_G_estimate": h_g, "log_m": math.log(sys.m),
            "defect": abs(h_f - math.log(sys.m) - h_g), "plateau_epsilon": chosen,
            "table": table, "base": base}


# -- capacity entropies ----------------------------------------------------------------

@dataclass
class CapacityEstimate:
    gamma_low: float
    gamma_high: float
    delta: float
    N_range: tuple
    mode: str
    history: list = field(default_factory=list)
    log_sums: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return 0.5 * (self.gamma_low + self.gamma_high)


class _CoverTable:
    """Per-word cover counts ``c_w(l)`` for each base length ``N`` and extension length ``l``."""

    def __init__(self, counts: dict):
        # counts[N] = (num_words, num_lengths) array; column j is length N + j
        self.counts = counts

    def log_sum(self, N: int, gamma: float) -> float:
        c = self.counts[N]
        lengths = N + np.arange(c.shape[1])
        logs = np.log(c) - gamma * (lengths + 1)
        per_word = logs.min(axis=1)
        top = per_word.max()
        return float(top + np.log(np.mean(np.exp(per_word - top))))

    def slope(self, ns, gamma: float) -> float:
        return fit_slope(ns, [self.log_sum(N, gamma) for N in ns])["slope"]


def _cover_table(sys, Z, delta, ns, mode, strategy, extra, seed, product=False):
    rng = np.random.default_rng(seed)
    extension = rng.integers(0, sys.m, size=extra) if mode == "variable" else np.zeros(0, dtype=np.int64)
    counts = {}
    for N in ns:
        if product:
            rows = np.zeros((1, 0), dtype=np.int64)
        else:
            rows, _ = strategy.words(sys.m, N)
        lengths = range(len(extension) + 1)

        def one(row, N=N):
            out = []
            for j in lengths:
                if product:
                    out.append(skew_cartesian_count(sys, N + j, delta, Z, seed))
                else:
                    w = Word(tuple(row) + tuple(extension[:j].tolist()), sys.m)
                    out.append(len(greedy_select(sys, w, delta, Z, seed)))
            return out

        counts[N] = np.asarray(pmap(one, rows), dtype=float)
    return _CoverTable(counts)


def _bisect(table: _CoverTable, ns, bracket, tol, max_iter=200):
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo > hi:
        raise ValueError("gamma bracket must satisfy low <= high")
    s_lo, s_hi = table.slope(ns, lo), table.slope(ns, hi)
    history = [(lo, hi)]
    if s_lo <= 0:
        if lo == 0.0:
            return 0.0, 0.0, history
        raise ConvergenceError("widen γ_bracket: sums already decay at the lower end")
    if s_hi >= 0:
        raise ConvergenceError("widen γ_bracket: sums still grow at the upper end")
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if table.slope(ns, mid) > 0:
            lo = mid
        else:
            hi = mid
        history.append((lo, hi))
    return lo, hi, history


def capacity_entropy(sys: GeneratorSystem, Z, delta: float, N_range, gamma_bracket=(0.0, 3.0),
                     mode: str = "fixed", word_strategy=None, tol: float = 1e-3, extra: int = 2,
                     seed: int = 0) -> CapacityEstimate:
    """Critical exponent of the averaged cover sums over a finite family ``Z``.

    ``mode="fixed"`` uses one word length ``N`` per cover (upper capacity);
    ``mode="variable"`` lets each cover use ``w`` extended by up to ``extra``
    seeded symbols and keeps the cheapest length.
    """
    if mode not in ("fixed", "variable"):
        raise ValueError(f"unknown capacity mode {mode!r}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    Z = np.asarray(Z)
    if len(Z) == 0:
        raise ValueError("Z is empty")
    strategy = word_strategy or WordStrategy()
    if isinstance(strategy, str):
        strategy = WordStrategy.parse(strategy)
    ns = _n_values(N_range)
    table = _cover_table(sys, Z, delta, ns, mode, strategy, extra if mode == "variable" else 0, seed)
    lo, hi, history = _bisect(table, ns, gamma_bracket, tol)
    logs = {N: table.log_sum(N, 0.0) for N in ns}
    return CapacityEstimate(lo, hi, delta, (ns[0], ns[-1]), mode, history, logs)


def skew_capacity(sys: GeneratorSystem, Z, delta: float, N_range, gamma_bracket=(0.0, 4.0),
                  tol: float = 1e-3, seed: int = 0) -> CapacityEstimate:
    """Upper capacity of (all itineraries) x ``Z`` for the skew product, a single map."""
    ns = _n_values(N_range)
    table = _cover_table(sys, np.asarray(Z), delta, ns, "fixed", WordStrategy(), 0, seed, product=True)
    lo, hi, history = _bisect(table, ns, gamma_bracket, tol)
    logs = {N: table.log_sum(N, 0.0) for N in ns}
    return CapacityEstimate(lo, hi, delta, (ns[0], ns[-1]), "fixed", history, logs)


def capacity_product_check(sys: GeneratorSystem, Z, delta: float, N_range, gamma_bracket=(0.0, 4.0),
                           tol: float = 1e-3, seed: int = 0) -> dict:
    left = skew_capacity(sys, Z, delta, N_range, gamma_bracket, tol, seed)
    right = capacity_entropy(sys, Z, delta, N_range, gamma_bracket, "fixed", None, tol, seed=seed)
    log_m = math.log(sys.m)
    return {"left": left.value, "right_base": right.value, "log_m": log_m,
            "right": log_m + right.value, "defect": abs(left.value - log_m - right.value),
            "left_estimate": left, "base_estimate": right}
