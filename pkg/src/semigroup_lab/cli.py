"""Experiment runner: ``semigroup-lab run <config>``, ``list-systems``, ``verify <certificate.csv>``.

A config is a key=value file with bracketed section headers::

    [experiment]
    kind = entropy
    seed = 0
    output = entropy.csv

    [system]
    name = shift2

    [params]
    epsilons = 1.0
    n_min = 4
    n_max = 16

Exit codes: 0 success, 1 unparseable config, 2 precondition error,
3 non-convergence or a failed certificate.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys as _sys
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import entropy as E
from . import measures as M
from . import recurrence as R
from . import tracing as T
from .covers import BlowupFunction
from .systems import CATALOGUE, CircleSystem, ShiftSystem, build_system
from .words import Itinerary, Word

KINDS = ("entropy", "skew-check", "capacity", "stationary", "recurrence", "case-zoo", "trace", "gap-entropy")

SYSTEM_KEYS = {"name", "kind", "degrees", "k", "m", "perms", "matrices", "q", "expanding_factors", "tables"}

# key -> (parser, default); a default of ``REQUIRED`` must be supplied
REQUIRED = object()


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(float(v)) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _strings(text):
    return [v.strip() for v in str(text).split(";") if v.strip()]


def _int(text):
    return int(float(text))


_COMMON = {"words": (str, "exact"), "resolution": (_int, None)}

PARAMS = {
    "entropy": {"epsilons": (_floats, REQUIRED), "n_min": (_int, REQUIRED), "n_max": (_int, REQUIRED),
                "plateau_tol": (float, 0.05), **_COMMON},
    "skew-check": {"epsilons": (_floats, REQUIRED), "n_min": (_int, REQUIRED), "n_max": (_int, REQUIRED),
                   "plateau_tol": (float, 0.05), **_COMMON},
    "capacity": {"delta": (float, REQUIRED), "n_min": (_int, REQUIRED), "n_max": (_int, REQUIRED),
                 "mode": (str, "fixed"), "gamma_low": (float, 0.0), "gamma_high": (float, 3.0),
                 "tol": (float, 1e-3), "extra": (_int, 2), **_COMMON},
    "stationary": {"probabilities": (_floats, REQUIRED), "resolution": (_int, REQUIRED),
                   "tol": (float, 1e-12), "max_iter": (_int, 10_000), "cylinder_depth": (_int, 5)},
    "recurrence": {"point": (str, REQUIRED), "itinerary": (str, "|0"), "epsilons": (_floats, REQUIRED),
                   "horizons": (_ints, REQUIRED), "threshold": (float, None), "qr_tolerance": (float, 0.05)},
    "case-zoo": {"cases": (_ints, [1, 2, 3, 4, 5, 6]), "horizons": (_ints, [10 ** 3, 10 ** 4, 10 ** 5]),
                 "threshold": (float, 0.1)},
    "trace": {"mode": (str, "g-almost"), "g": (str, "ceil_sqrt"), "instances": (_int, 10),
              "segments": (_ints, [2, 3]), "epsilons": (_floats, REQUIRED), "extra_length": (_int, 20)},
    "gap-entropy": {"pairs": (_strings, REQUIRED), "filter": (str, None), "count": (_int, 32),
                    "delta": (float, 1.0), "n_min": (_int, 1), "n_max": (_int, 4),
                    "horizon": (_int, 10 ** 5), "threshold": (float, 0.1),
                    "gamma_low": (float, 0.0), "gamma_high": (float, 3.0), "tol": (float, 1e-3),
                    "resolution": (_int, None)},
}

EXPERIMENT_KEYS = {"kind", "seed", "output"}


class ConfigError(Exception):
    def __init__(self, message, line=1, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line, self.column = line, column


@dataclass
class ExperimentConfig:
    kind: str
    system: dict
    params: dict
    seed: int = 0
    output: str = "-"
    sampled: bool = False
    source: dict = field(default_factory=dict)

    def build_system(self):
        if "name" in self.system:
            name = self.system["name"]
            if name not in CATALOGUE:
                raise ValueError(f"unknown catalogue system {name!r}")
            return CATALOGUE[name]()
        return build_system(self.system)


def _locate(lines, section, key):
    """1-based (line, column) of ``key`` inside ``[section]``."""
    current = None
    for i, raw in enumerate(lines, 1):
        text = raw.strip()
        if text.startswith("[") and text.endswith("]"):
            current = text[1:-1].strip()
            continue
        if current == section and text and text[0] not in "#;":
            name = text.split("=", 1)[0].strip().lower()
            if name == key:
                return i, raw.index(raw.lstrip()) + 1
    for i, raw in enumerate(lines, 1):
        if raw.strip() == f"[{section}]":
            return i, 1
    return 1, 1


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; every failure is a :class:`ConfigError` carrying line and column."""
    lines = text.splitlines()
    for i, raw in enumerate(lines, 1):
        s = raw.strip()
        if not s or s[0] in "#;" or (s.startswith("[") and s.endswith("]")):
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", i, raw.index(s[0]) + 1)
        key = s.split("=", 1)[0].strip()
        if not key or not all(c.isalnum() or c in "_-." for c in key):
            raise ConfigError(f"malformed key {key!r}", i, raw.index(s[0]) + 1)
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), interpolation=None, strict=True)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno, 1) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1] if hasattr(exc, "message") else str(exc),
                          exc.lineno or 1, 1) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else 1
        raise ConfigError("unparseable line", line, 1) from None
    known = {"experiment", "system", "params"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]", *_locate(lines, sec, None))
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section", 1, 1)
    exp = dict(cp.items("experiment"))
    for key in exp:
        if key not in EXPERIMENT_KEYS:
            raise ConfigError(f"unknown key {key!r} in [experiment]", *_locate(lines, "experiment", key))
    kind = exp.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"experiment kind must be one of {', '.join(KINDS)}", *_locate(lines, "experiment", "kind"))
    system = dict(cp.items("system")) if cp.has_section("system") else {}
    for key in system:
        if key not in SYSTEM_KEYS:
            raise ConfigError(f"unknown key {key!r} in [system]", *_locate(lines, "system", key))
    if kind not in ("case-zoo",) and not system:
        raise ConfigError("missing [system] section", 1, 1)
    raw = dict(cp.items("params")) if cp.has_section("params") else {}
    schema = PARAMS[kind]
    params = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {kind} experiments", *_locate(lines, "params", key))
        try:
            params[key] = schema[key][0](value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value {value!r} for {key!r}", *_locate(lines, "params", key)) from None
        if isinstance(params[key], list) and not params[key]:
            raise ConfigError(f"schedule {key!r} is empty", *_locate(lines, "params", key))
    for key, (_, default) in schema.items():
        if key not in params:
            if default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} in [params]", *_locate(lines, "params", None))
            params[key] = default
    sampled = str(params.get("words", "exact")).startswith("sampled")
    try:
        seed = int(exp.get("seed", 0))
    except ValueError:
        raise ConfigError("seed must be an integer", *_locate(lines, "experiment", "seed")) from None
    if "seed" not in exp and (sampled or kind in ("trace", "gap-entropy")):
        raise ConfigError("a seed is required for sampled experiments", *_locate(lines, "experiment", None))
    return ExperimentConfig(kind, system, params, seed, exp.get("output", "-"), sampled)


# -- experiments ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


@dataclass
class Outcome:
    header: list
    rows: list
    status: int = 0
    note: str = ""


def _entropy(cfg, sys):
    p = cfg.params
    est = E.bufetov_entropy(sys, p["epsilons"], (p["n_min"], p["n_max"]), p["words"],
                            resolution=p["resolution"], plateau_tol=p["plateau_tol"], seed=cfg.seed)
    rows = [list(r) + [r[4] / math.log(2)] for r in est.csv_rows()]
    header = ["epsilon", "n", "mean_count", "log_mean", "fit_slope", "stderr", "fit_slope_log2"]
    rows.append(["plateau", est.plateau_epsilon, "", "", est.value, est.fit["stderr"], est.value / math.log(2)])
    return Outcome(header, rows)


def _skew(cfg, sys):
    p = cfg.params
    out = E.skew_entropy_check(sys, p["epsilons"], (p["n_min"], p["n_max"]), p["words"],
                               resolution=p["resolution"], plateau_tol=p["plateau_tol"], seed=cfg.seed)
    header = ["epsilon", "n", "log_count_F"]
    rows = [[r["epsilon"], r["n"], r["log_count"]] for r in out["table"]]
    return Outcome(header + ["h_F", "h_G", "log_m", "defect"],
                   [r + ["", "", "", ""] for r in rows] +
                   [["plateau", out["plateau_epsilon"], "", out["h_F_estimate"], out["h_G_estimate"],
                     out["log_m"], out["defect"]]])


def _capacity(cfg, sys):
    p = cfg.params
    ns = (p["n_min"], p["n_max"])
    res = p["resolution"] or (p["n_max"] + p["extra"] + sys.depth_for(p["delta"]) if isinstance(sys, ShiftSystem)
                              else 4096 if sys.kind == "circle" else 64)
    Z = sys.grid(res)
    est = E.capacity_entropy(sys, Z, p["delta"], ns, (p["gamma_low"], p["gamma_high"]), p["mode"], p["words"],
                             p["tol"], p["extra"], cfg.seed)
    rows = [[N, v, p["delta"], p["mode"], "", ""] for N, v in sorted(est.log_sums.items())]
    rows.append(["estimate", "", p["delta"], p["mode"], est.gamma_low, est.gamma_high])
    return Outcome(["N", "log_sum_gamma0", "delta", "mode", "gamma_low", "gamma_high"], rows)


def _stationary(cfg, sys):
    p = cfg.params
    res = M.stationary_measure(p["probabilities"], sys, p["resolution"], p["tol"], p["max_iter"])
    step = M.adjoint_apply(p["probabilities"], sys, res.measure).tv(res.measure)
    uniform = M.DiscreteMeasure.uniform(sys.n_cells(p["resolution"]), resolution=p["resolution"])
    uni = M.adjoint_apply(p["probabilities"], sys, uniform).tv(uniform)
    header = ["cell_id", "mass", "residual", "uniform_residual", "iterations", "converged"]
    rows = [[c, m, "", "", "", ""] for c, m in res.measure.csv_rows()]
    rows.append(["summary", "", step, uni, res.iterations, res.converged])
    return Outcome(header, rows, 0 if res.converged else 3, "" if res.converged else "stationary iteration did not converge")


def _point(text, sys, length):
    kind, _, arg = text.partition(":")
    if isinstance(sys, ShiftSystem):
        if kind == "case":
            return R.case_sequence(int(arg), length)
        if kind == "oscillating":
            return M.oscillating_point(length)
        if kind == "burst":
            return R.burst_witness(length)
        if kind == "constant":
            return np.full(length, int(arg or 0), dtype=np.int64)
        if kind == "random":
            return np.random.default_rng(int(arg or 0)).integers(0, sys.k, length)
        raise ValueError(f"unknown shift point {text!r}")
    if kind in ("value", "frac"):
        return Fraction(arg) if sys.kind == "circle" else float(arg)
    return float(text)


def _recurrence(cfg, sys):
    p = cfg.params
    it = Itinerary.parse(p["itinerary"])
    rows = []
    x = _point(p["point"], sys, max(p["horizons"]) + 128)
    if isinstance(x, Fraction):
        x = float(x)
    keys = ["transitive_eps", "quasiregular_gap", "quasiregular", "upper_recurrent_eps",
            "banach_upper_recurrent_eps", "level", "lower", "upper", "B_lower", "B_upper"]
    for h in p["horizons"]:
        for eps in p["epsilons"]:
            v = R.classify_recurrence(sys, it, x, eps, h, p["threshold"], p["qr_tolerance"])
            row = v.row()
            d = row["densities"]
            rows.append([eps, h, v.threshold, v.qr_tolerance] +
                        [row[k] if k in row else d.get(k, "") for k in keys])
    return Outcome(["epsilon", "horizon", "threshold", "qr_tolerance"] + keys, rows)


def _case_zoo(cfg, sys):
    p = cfg.params
    rows, ok = [], True
    for c in p["cases"]:
        _, _, _, cert = R.construct_case_point(c, p["horizons"], p["threshold"])
        ok = ok and cert.passed
        for h in p["horizons"]:
            sets = cert.omega_sets[h]
            rows.append([c, h, p["threshold"], 1.0, cert.detected[h],
                         " ".join(f"{k}={''.join(map(str, v))}" for k, v in sorted(sets.items())),
                         cert.detected[h] == c])
    return Outcome(["case", "horizon", "threshold", "epsilon", "detected", "omega_sets", "pass"], rows,
                   0 if ok else 3, "" if ok else "case certificate failed")


def _random_request(sys, g, rng, p):
    segs = []
    for _ in range(int(rng.choice(p["segments"]))):
        eps = float(rng.choice(p["epsilons"]))
        n = T.min_length(sys, g, eps) + int(rng.integers(0, p["extra_length"] + 1))
        w = Word(tuple(rng.integers(0, sys.m, n).tolist()), sys.m)
        if isinstance(sys, ShiftSystem):
            x = rng.integers(0, sys.k, n + T.SHIFT_TAIL + 16)
        else:
            x = Fraction(int(rng.integers(0, 10 ** 6)), 10 ** 6)
        segs.append((x, w, eps))
    return T.TraceRequest(segs)


def _trace(cfg, sys):
    p = cfg.params
    g = BlowupFunction.from_name(p["g"])
    rng = np.random.default_rng(cfg.seed)
    rows, ok = [], True
    for i in range(p["instances"]):
        if p["mode"] == "g-almost":
            _, cert = T.g_almost_trace(sys, g, _random_request(sys, g, rng, p))
        elif p["mode"] == "skew":
            segs = []
            for _ in range(int(rng.choice(p["segments"]))):
                eps = float(rng.choice(p["epsilons"]))
                n = T.min_length_skew(sys, g, eps) + int(rng.integers(0, p["extra_length"] + 1))
                x = (rng.integers(0, sys.k, n + T.SHIFT_TAIL + 16) if isinstance(sys, ShiftSystem)
                     else Fraction(int(rng.integers(0, 10 ** 6)), 10 ** 6))
                segs.append((rng.integers(0, sys.m, n + 64), x, n, eps))
            _, cert = T.skew_trace_lift(sys, g, segs)
        else:
            raise ValueError(f"unknown trace mode {p['mode']!r}")
        ok = ok and cert.passed
        for j, c, b, flag in cert.csv_rows():
            rows.append([i, j, c, b, flag, cert.requested_eps[j], cert.snapped_eps[j]])
    return Outcome(["instance", "segment", "count", "bound", "pass", "epsilon", "snapped_epsilon"], rows,
                   0 if ok else 3, "" if ok else "a trace certificate failed")


def gap_entropy(sys, pair, y_filter=None, delta=1.0, N_range=(1, 4), count=32, seed=0, horizon=10 ** 5,
                threshold=0.1, gamma_bracket=(0.0, 3.0), tol=1e-3, resolution=None) -> dict:
    """Capacity of a sampled gap family against the capacity of the whole space."""
    depth = sys.depth_for(delta) if isinstance(sys, ShiftSystem) else 0
    if pair == "singleton":
        fam = R.gap_set_sampler(sys, ("QW", "BR"), None, 1, seed, horizon, threshold)
        Z = fam.points[:1]
    else:
        if isinstance(pair, str):
            pair = tuple(pair.split("|", 1))
        Z = R.gap_set_sampler(sys, pair, y_filter, count, seed, horizon, threshold).points
    Z = Z[:, :N_range[1] + depth + 8]
    res = resolution or (N_range[1] + depth)
    X = sys.grid(res)
    fam = E.capacity_entropy(sys, Z, delta, N_range, gamma_bracket, tol=tol, seed=seed)
    full = E.capacity_entropy(sys, X, delta, N_range, gamma_bracket, tol=tol, seed=seed)
    return {"family": fam.value, "space": full.value, "difference": abs(full.value - fam.value), "size": len(Z)}


def gap_entropy_experiment(config: ExperimentConfig) -> Outcome:
    sys = config.build_system()
    p = config.params
    rows = []
    for pair in p["pairs"]:
        flt = p["filter"] if pair.endswith("Tran") else None
        out = gap_entropy(sys, pair, flt, p["delta"], (p["n_min"], p["n_max"]), p["count"], config.seed,
                          p["horizon"], p["threshold"], (p["gamma_low"], p["gamma_high"]), p["tol"],
                          p["resolution"])
        rows.append([pair, flt or "", out["size"], p["delta"], p["n_min"], p["n_max"], p["horizon"],
                     p["threshold"], out["family"], out["space"], out["difference"]])
    header = ["pair", "filter", "size", "delta", "n_min", "n_max", "horizon", "threshold",
              "capacity_family", "capacity_space", "difference"]
    return Outcome(header, rows)


DISPATCH = {"entropy": _entropy, "skew-check": _skew, "capacity": _capacity, "stationary": _stationary,
            "recurrence": _recurrence, "case-zoo": _case_zoo, "trace": _trace}


def render_csv(outcome: Outcome) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(outcome.header)
    for row in outcome.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def execute(cfg: ExperimentConfig) -> Outcome:
    if cfg.kind == "gap-entropy":
        return gap_entropy_experiment(cfg)
    sys = cfg.build_system() if cfg.system else None
    return DISPATCH[cfg.kind](cfg, sys)


def run(path: str, stdout=None, stderr=None) -> int:
    stdout = stdout or _sys.stdout
    stderr = stderr or _sys.stderr
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"{path}: {exc}", file=stderr)
        return 1
    try:
        outcome = execute(cfg)
    except E.ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=stderr)
        return 3
    except (ValueError, OverflowError, KeyError) as exc:
        print(f"precondition error: {exc}", file=stderr)
        return 2
    text = render_csv(outcome)
    if cfg.output == "-":
        stdout.write(text)
    else:
        with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    if outcome.note:
        print(outcome.note, file=stderr)
    return outcome.status


def verify_file(path: str, stderr=None) -> int:
    stderr = stderr or _sys.stderr
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=stderr)
        return 2
    if not rows or not set(T.CERTIFICATE_HEADER) <= set(rows[0]):
        print(f"{path}: line 1, column 1: certificate header must contain {','.join(T.CERTIFICATE_HEADER)}",
              file=stderr)
        return 1
    try:
        ok = T.certificate_check(rows)
    except (TypeError, ValueError) as exc:
        print(f"{path}: malformed certificate row: {exc}", file=stderr)
        return 1
    print("pass" if ok else "fail")
    return 0 if ok else 3


def list_systems(stdout=None) -> int:
    stdout = stdout or _sys.stdout
    for name, make in CATALOGUE.items():
        print(f"{name}\t{make().describe()}", file=stdout)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="semigroup-lab", description="Free semigroup action experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    sub.add_parser("list-systems", help="list the catalogue of named systems")
    v = sub.add_parser("verify", help="re-check a certificate CSV")
    v.add_argument("certificate")
    args = ap.parse_args(argv)
    if args.command == "run":
        return run(args.config)
    if args.command == "verify":
        return verify_file(args.certificate)
    return list_systems()


if __name__ == "__main__":
    raise SystemExit(main())
