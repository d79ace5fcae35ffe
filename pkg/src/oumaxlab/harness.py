"""Experiment orchestration: configs, empirical distributions, reports.

Replica ``i`` of a run with master seed ``s`` always uses random stream
``(s, i)`` (see :mod:`oumaxlab.rng`), whatever ``first_replica`` the run
starts at, so runs over disjoint replica ranges merge into exactly the run
over their union.

Reports are deterministic functions of the config.  Wall-clock time goes
to a sidecar ``<output>.timing.json`` so that the report itself is
byte-identical across reruns.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import excursion, extreme_limits, gauge_tests, iid_max, lacunary, ou_engine
from ._accel import BACKEND, set_workers
from .special_fn import excursion_cdf, max_quantile_exact

SCHEMA = "oumaxlab-report/1"
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


# ------------------------------------------------------------ statistics

class EmpiricalDistribution:
    """Sorted samples with ECDF evaluation."""

    def __init__(self, samples):
        s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if s.size and not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        self.samples = s

    def __len__(self):
        return self.samples.size

    def ecdf(self, x):
        if not len(self):
            raise ValueError("empty sample set")
        return np.searchsorted(self.samples, x, side="right") / self.samples.size

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        return EmpiricalDistribution(np.concatenate([self.samples, other.samples]))

    def __eq__(self, other):
        return isinstance(other, EmpiricalDistribution) and np.array_equal(self.samples, other.samples)


def ks_statistic(emp: EmpiricalDistribution, cdf: Callable) -> float:
    """``sup_x |ECDF(x) - cdf(x)|``, checked on both sides of every sample."""
    n = len(emp)
    if n == 0:
        raise ValueError("empty sample set")
    x = emp.samples
    f = np.asarray(cdf(x), dtype=np.float64)
    hi = np.searchsorted(x, x, side="right") / n  # ECDF(x)
    lo = np.searchsorted(x, x, side="left") / n  # ECDF(x-)
    return float(max(np.max(np.abs(hi - f)), np.max(np.abs(lo - f))))


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    den = 1 + z * z / trials
    mid = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return mid - half, mid + half


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(np.mean(x)), se


def lag1_autocorr(x) -> float:
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    return float(np.dot(x[:-1], x[1:]) / np.dot(x, x))


# ------------------------------------------------------------ parameters

def _floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _int(text) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _gauges(text) -> tuple:
    items = text if isinstance(text, (list, tuple)) else [text]
    for g in items:
        gauge_tests.parse_gauge(g)  # validate early
    return tuple(items)


def _opt_gauge(text):
    if text in (None, "", "none"):
        return None
    gauge_tests.parse_gauge(text)
    return text


def _dist(text) -> str:
    return iid_max.IncrementDistribution.parse(text).label


@dataclass(frozen=True)
class Param:
    convert: Callable
    default: object
    help: str = ""


@dataclass(frozen=True)
class Experiment:
    name: str
    run: Callable
    params: dict
    doc: str


EXPERIMENTS: dict[str, Experiment] = {}
ALIASES = {"walkmax": "de-walk"}


def experiment(name, doc, **params):
    def deco(fn):
        EXPERIMENTS[name] = Experiment(name, fn, params, doc)
        return fn
    return deco


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    replicas: int = 1
    params: dict = field(default_factory=dict)
    output: str | None = None
    format: str = "json"
    first_replica: int = 0

    def resolved(self) -> "ExperimentConfig":
        """Validate, apply defaults and convert parameter types."""
        name = ALIASES.get(self.experiment, self.experiment)
        if name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; known: {sorted(EXPERIMENTS) + sorted(ALIASES)}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if int(self.replicas) < 1:
            raise ConfigError("replicas must be >= 1")
        if int(self.first_replica) < 0:
            raise ConfigError("first_replica must be >= 0")
        if not 0 <= int(self.seed) < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        spec = EXPERIMENTS[name].params
        unknown = set(self.params) - set(spec)
        if unknown:
            raise ConfigError(f"unknown parameters for {name}: {sorted(unknown)}")
        params = {}
        for key, p in spec.items():
            raw = self.params.get(key, p.default)
            try:
                params[key] = p.convert(raw) if raw is not None else None
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
        return ExperimentConfig(name, int(self.seed), int(self.replicas), params, self.output,
                                self.format, int(self.first_replica))

    def echo(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "replicas": self.replicas,
                "first_replica": self.first_replica, "format": self.format,
                "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}}


@dataclass
class Result:
    summary: dict
    columns: list
    rows: list

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])


def _replica_ids(cfg):
    return list(range(cfg.first_replica, cfg.first_replica + cfg.replicas))


def _fit_slope(ts, ps):
    ts, ps = np.asarray(ts), np.asarray(ps)
    if np.any(ps <= 0) or ts.size < 2:
        return None
    return float(np.polyfit(np.log(ts), np.log(ps), 1)[0])


# ----------------------------------------------------------- experiments

STEP = Param(float, excursion.DEFAULT_STEP, "grid mesh")
EPS = Param(float, excursion.DEFAULT_EPS, "occupation band width")


@experiment("coupling-mismatch", "P{sup over [0,t] != max of floor(t/sqrt(2 pi)) block maxima}",
            t=Param(_floats, "100,400,1600,6400", "comma-separated times"), step=STEP, epsilon=EPS)
def _coupling(cfg):
    p = cfg.params
    r = excursion.coupling_ensemble(p["t"], cfg.seed, cfg.replicas, cfg.first_replica, p["step"], p["epsilon"])
    mis = r["sup"] != r["blockmax"]
    per_t = []
    for j, t in enumerate(r["t"]):
        k = int(mis[:, j].sum())
        lo, hi = wilson_interval(k, cfg.replicas)
        per_t.append({"t": float(t), "blocks": int(r["blocks"][j]), "mismatches": k,
                      "estimate": k / cfg.replicas, "wilson95": [lo, hi]})
    est = [d["estimate"] for d in per_t]
    summary = {"per_t": per_t, "loglog_slope": _fit_slope(r["t"], est),
               "strictly_decreasing": bool(np.all(np.diff(est) < 0))}
    rows = []
    for i, rep in enumerate(_replica_ids(cfg)):
        for j, t in enumerate(r["t"]):
            rows.append([rep, float(t), float(r["sup"][i, j]), float(r["blockmax"][i, j]), int(mis[i, j])])
    return Result(summary, ["replica", "t", "sup", "blockmax", "mismatch"], rows)


@experiment("blockmax-limit", "exact maxima of n excursion blocks against exp(-e^(-x/2)/sqrt 2)",
            n=Param(_int, 10 ** 8, "number of blocks"))
def _blockmax(cfg):
    n = cfg.params["n"]
    if n < 3:
        raise ConfigError("n must be >= 3")
    from .rng import Stream
    u = np.array([Stream(cfg.seed, i).uniforms(1)[0] for i in _replica_ids(cfg)])
    u = np.minimum(u, np.nextafter(1.0, 0.0))
    m = max_quantile_exact(n, u)
    x = extreme_limits.blockmax_statistic(m, n)
    ks = ks_statistic(EmpiricalDistribution(x), extreme_limits.blockmax_limit_cdf)
    rows = [[rep, float(a), float(b)] for rep, a, b in zip(_replica_ids(cfg), m, x)]
    return Result({"n": n, "ks": ks}, ["replica", "max", "statistic"], rows)


@experiment("de-walk", "a(n) U_n - b(n) for random walks against the Darling-Erdos limit",
            dist=Param(_dist, "normal", "rademacher | uniform | normal | student:DF"),
            n=Param(_int, 10 ** 5, "walk length"), ratio=Param(float, 2.0, "checkpoint ratio"))
def _dewalk(cfg):
    p = cfg.params
    dist = iid_max.IncrementDistribution.parse(p["dist"])
    cps, u = iid_max.walk_max_ensemble(p["n"], dist, cfg.seed, cfg.replicas, cfg.first_replica, p["ratio"])
    de = iid_max.de_values(cps, u)
    ks_final = ks_statistic(EmpiricalDistribution(de[:, -1]), extreme_limits.de_limit_cdf)
    summary = {"dist": dist.label, "moment_condition": dist.standardized, "n": p["n"], "ks": ks_final,
               "ks_by_checkpoint": [[int(c), ks_statistic(EmpiricalDistribution(de[:, j]), extreme_limits.de_limit_cdf)]
                                    for j, c in enumerate(cps)]}
    rows = [[rep, float(u[i, -1]), float(de[i, -1])] for i, rep in enumerate(_replica_ids(cfg))]
    return Result(summary, ["replica", "u_n", "statistic"], rows)


@experiment("ou-de", "a(e^t) sup_[0,t] X - b(e^t) for OU paths against the Darling-Erdos limit",
            t=Param(float, 50.0, "horizon"), step=STEP)
def _oude(cfg):
    p = cfg.params
    s = ou_engine.sup_ensemble(p["t"], p["step"], cfg.seed, cfg.replicas, cfg.first_replica)
    x = extreme_limits.de_statistic_exp(s, p["t"])
    ks = ks_statistic(EmpiricalDistribution(x), extreme_limits.de_limit_cdf)
    rows = [[rep, float(a), float(b)] for rep, a, b in zip(_replica_ids(cfg), s, x)]
    return Result({"t": p["t"], "ks": ks}, ["replica", "sup", "statistic"], rows)


@experiment("gauge-classify", "closed-form verdicts and partial values for gauges (deterministic)",
            gauge=Param(_gauges, ("feller:theta=1.5", "feller:theta=2.5", "lll:theta=2,c=0",
                                  "lll:theta=2.5,c=0", "logpower:p=1", "logpower:p=2"), "gauge spec, repeatable"),
            truncation=Param(float, None, "truncation T (N for feller)"))
def _gauge(cfg):
    rows = []
    for spec in cfg.params["gauge"]:
        g = gauge_tests.parse_gauge(spec)
        v = gauge_tests.classify(g, cfg.params["truncation"])
        rows.append([spec, v.verdict.value, v.partial_value, v.truncation, v.reason])
    summary = {"verdicts": {r[0]: r[1] for r in rows}}
    return Result(summary, ["gauge", "verdict", "partial_value", "truncation", "reason"], rows)


@experiment("lacunary", "Shorack statistic of lacunary cosine sums over uniform omega",
            family=Param(str, "geometric", "geometric | berkes"), q=Param(_int, 2, "geometric ratio"),
            alpha=Param(float, 0.4, "berkes exponent"), n=Param(_int, 10 ** 4, "number of terms"),
            gauge=Param(_opt_gauge, None, "optional h gauge for the envelope diagnostic"))
def _lacunary(cfg):
    p = cfg.params
    if p["family"] == "geometric":
        freq = lacunary.FrequencySequence.geometric(p["q"])
    elif p["family"] == "berkes":
        freq = lacunary.FrequencySequence.berkes_poly(p["alpha"])
    else:
        raise ConfigError("family must be geometric or berkes")
    n = p["n"]
    if not freq.shift and n > freq.exact_length():
        raise ConfigError(f"{freq.label} leaves the exact-phase regime after {freq.exact_length()} terms")
    mx, _ = lacunary.lacunary_ensemble(freq, n, cfg.seed, cfg.replicas, cfg.first_replica)
    x = extreme_limits.norm_a(n) * mx - extreme_limits.norm_b(n)
    summary = {"family": freq.label, "n": n,
               "ks": ks_statistic(EmpiricalDistribution(x), extreme_limits.de_limit_cdf),
               "condition": {k: v for k, v in lacunary.check_condition(freq).items()
                             if k in ("satisfies_lacunary", "satisfies_berkes", "reason")}}
    if p["gauge"]:
        h = gauge_tests.parse_gauge(p["gauge"])
        if h.role != "h":
            raise ConfigError("the lacunary gauge must be an h gauge (e.g. lll:theta=2.5)")
        summary["gauge_experiment"] = lacunary.gauge_experiment(freq, h, n, cfg.replicas, cfg.seed, cfg.first_replica)
    rows = [[rep, float(a), float(b)] for rep, a, b in zip(_replica_ids(cfg), mx, x)]
    return Result(summary, ["replica", "max_normalized", "statistic"], rows)


def _paths(cfg, horizon):
    p = cfg.params
    for rep in _replica_ids(cfg):
        path = ou_engine.simulate_path(ou_engine.OuPathConfig(horizon, p["step"], cfg.seed, rep))
        yield rep, path, excursion.local_time(path, p["epsilon"])


@experiment("localtime-moments", "ensemble mean of the local-time estimate over t against 1/sqrt(2 pi)",
            t=Param(float, 200.0, "horizon"), step=STEP, epsilon=EPS)
def _ltm(cfg):
    t = cfg.params["t"]
    rows = [[rep, lt.at(t) / t] for rep, _, lt in _paths(cfg, t)]
    m, se = mean_se([r[1] for r in rows])
    target = 1.0 / excursion.SQRT_2PI
    return Result({"t": t, "mean": m, "se": se, "target": target, "relative_error": m / target - 1},
                  ["replica", "local_time_over_t"], rows)


@experiment("tau-moments", "inverse local time: mean block length, ergodic ratio, deviation statistic",
            t=Param(float, 200.0, "horizon"), levels=Param(_int, 40, "local-time levels per path"),
            ergodic_t=Param(float, 50.0, "level s for tau(s)/s"), dev_t=Param(float, 100.0, "level for the deviation statistic"),
            step=STEP, epsilon=EPS)
def _taum(cfg):
    p = cfg.params
    horizon = max(p["t"], 1.6 * excursion.SQRT_2PI * max(p["levels"], p["ergodic_t"], p["dev_t"]) + 50)
    rows = []
    for rep, _, lt in _paths(cfg, horizon):
        tau = [excursion.inverse_local_time(lt, lv) for lv in range(p["levels"] + 1)]
        erg = (excursion.inverse_local_time(lt, p["ergodic_t"]) - tau[0]) / p["ergodic_t"]
        rows.append([rep, tau[0], tau[1] - tau[0], (tau[-1] - tau[0]) / p["levels"], erg,
                     excursion.tau_deviation(lt, p["dev_t"])])
    res = Result({}, ["replica", "tau0", "tau1_minus_tau0", "mean_increment", "ergodic_ratio", "deviation"], rows)
    target = excursion.SQRT_2PI
    summary = {"target": target}
    for col in ("tau1_minus_tau0", "mean_increment", "ergodic_ratio"):
        m, se = mean_se(res.column(col))
        summary[col] = {"mean": m, "se": se, "relative_error": m / target - 1}
    summary["deviation_q99"] = float(np.quantile(res.column("deviation"), 0.99))
    res.summary = summary
    return res


@experiment("excursion-law", "pooled excursion maxima M_n against the exact law",
            t=Param(float, 200.0, "horizon"), per_path=Param(_int, 20, "blocks kept per path"), step=STEP, epsilon=EPS)
def _exlaw(cfg):
    p = cfg.params
    rows = []
    for rep, path, lt in _paths(cfg, p["t"]):
        em = excursion.excursion_maxima(path, lt, p["per_path"])
        rows.extend([rep, j + 1, float(m)] for j, m in enumerate(em.maxima))
    res = Result({}, ["replica", "block", "max"], rows)
    m = res.column("max")
    ac = np.mean([lag1_autocorr(m[i:i + p["per_path"]]) for i in range(0, m.size, p["per_path"])])
    res.summary = {"pooled": int(m.size), "ks": ks_statistic(EmpiricalDistribution(m), excursion_cdf),
                   "lag1_autocorr_mean": float(ac)}
    return res


@experiment("envelope-trace", "upper and lower envelope diagnostics of a(n) U_n along single walks",
            dist=Param(_dist, "rademacher", "increment law"), n=Param(_int, 10 ** 7, "walk length"),
            ratio=Param(float, 2.0, "checkpoint ratio"))
def _envelope(cfg):
    p = cfg.params
    dist = iid_max.IncrementDistribution.parse(p["dist"])
    rows = []
    for rep in _replica_ids(cfg):
        tr = iid_max.simulate_walk_max(p["n"], dist, cfg.seed, rep, p["ratio"])
        up, lo = iid_max.envelope_trace(tr)
        rows.extend([rep, int(c), float(u), float(d), float(a), float(b)]
                    for c, u, d, a, b in zip(tr.checkpoints, tr.u_values, tr.de_values, up, lo))
    res = Result({}, ["replica", "n", "u_n", "de", "upper", "lower"], rows)
    sel = res.column("n") >= 1000
    lower = res.column("lower")[sel]
    res.summary = {"dist": dist.label, "lower_min": float(lower.min()), "lower_max": float(lower.max()),
                   "note": "quadruple-log normalizer is pinned at 1 for every reachable n; traces are diagnostics"}
    return res


# ---------------------------------------------------------------- output

def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def render(cfg: ExperimentConfig, result: Result) -> str:
    meta = {"schema": SCHEMA, "artifact_version": __version__, "backend": BACKEND,
            "config": cfg.echo(), "seed": cfg.seed,
            "timing_file": (Path(cfg.output).name + ".timing.json") if cfg.output else None}
    summary = _jsonable(result.summary)
    if cfg.format == "json":
        doc = dict(meta, summary=summary, columns=result.columns, rows=_jsonable(result.rows))
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    for key, val in list(meta.items()) + [("summary", summary)]:
        buf.write(f"# {key}: {json.dumps(val)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    w.writerows(_jsonable(result.rows))
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> Result:
    """Run ``cfg`` and write its report to ``cfg.output`` (if set)."""
    cfg = cfg.resolved()
    if cfg.output:
        out = Path(cfg.output)
        if not out.parent.exists() or out.is_dir():
            raise ConfigError(f"cannot write report to {out}")
    set_workers()
    t0 = time.perf_counter()
    result = EXPERIMENTS[cfg.experiment].run(cfg)
    wall = time.perf_counter() - t0
    text = render(cfg, result)
    result.text = text
    result.wall_time = wall
    if cfg.output:
        Path(cfg.output).write_text(text)
        Path(str(cfg.output) + ".timing.json").write_text(json.dumps({"wall_time_s": wall, "backend": BACKEND}) + "\n")
    return result


def load_report(path) -> tuple[dict, list, list]:
    """``(meta, columns, rows)`` from a JSON or CSV report."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc, doc["columns"], doc["rows"]
    meta = {}
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = json.loads(v)
        else:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    rows = [[_cell(c) for c in r] for r in reader]
    return meta, columns, rows


def _cell(c):
    try:
        return int(c)
    except ValueError:
        try:
            return float(c)
        except ValueError:
            return c


def merged_samples(paths, column: str) -> EmpiricalDistribution:
    """Pool one column over several reports (e.g. disjoint replica ranges)."""
    vals = []
    for p in paths:
        _, cols, rows = load_report(p)
        i = cols.index(column)
        vals.extend(r[i] for r in rows)
    return EmpiricalDistribution(vals)
