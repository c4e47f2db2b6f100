"""Registered experiments and their CSV/JSON reports.

Each experiment returns rows ``(statistic, n, value, target, band, kind)``
whose verdict follows from those fields alone:

- ``abs``: ``|value - target| <= band``
- ``upper``: ``value <= target + band``
- ``lower``: ``value >= target - band``
- ``info``: always passes
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import models as M
from . import scaleinv as S
from . import subordinator as sub
from .errors import ConfigError
from .measures import MeasureBatch
from .parallel import Streams, concat, default_workers
from .reference import build_reference

CSV_FIELDS = ("experiment", "statistic", "n", "value", "target", "band", "kind", "verdict")
SIGMAS = diag.SIGMAS


@dataclass(frozen=True)
class Row:
    statistic: str
    value: float
    target: float | None = None
    band: float = 0.0
    kind: str = "info"
    n: int | None = None

    @property
    def passed(self) -> bool:
        if self.kind == "info":
            return True
        if not math.isfinite(self.value):
            return False
        if self.kind == "abs":
            return abs(self.value - self.target) <= self.band
        if self.kind == "upper":
            return self.value <= self.target + self.band
        if self.kind == "lower":
            return self.value >= self.target - self.band
        raise ValueError(f"unknown verdict kind {self.kind!r}")

    @property
    def verdict(self) -> str:
        return "info" if self.kind == "info" else ("pass" if self.passed else "fail")


@dataclass
class ExperimentConfig:
    name: str
    params: dict = field(default_factory=dict)
    n: int | list | None = None
    reps: int = 100_000
    seed: int = 42
    workers: int = 1
    out: str | None = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise ConfigError(f"unknown experiment {self.name!r}; choose from {', '.join(sorted(REGISTRY))}")
        if self.reps < 1 or self.seed < 0:
            raise ConfigError("reps must be positive and seed non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"name", "params", "n", "reps", "seed", "workers", "out", "tolerances"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "name" not in d:
            raise ConfigError("config needs an experiment name")
        return cls(**d)

    def param(self, key: str, default):
        return self.params.get(key, default)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def n_list(self, default: list[int]) -> list[int]:
        if self.n is None:
            return list(default)
        return [int(x) for x in self.n] if isinstance(self.n, (list, tuple)) else [int(self.n)]

    def main_n(self, default: int) -> int:
        return max(self.n_list([default])) if self.n is not None else default


@dataclass
class ExperimentReport:
    config: dict
    rows: list
    version: str = __version__
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r["verdict"] != "fail" for r in self.rows)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls(**json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([_fmt(r.get(k)) for k in CSV_FIELDS])
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = self.config["name"]
        csv_path, json_path = out / f"{name}.csv", out / f"{name}.json"
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv())
        json_path.write_text(self.to_json() + "\n")
        return csv_path, json_path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _row_dict(name: str, r: Row) -> dict:
    return {"experiment": name, "statistic": r.statistic, "n": _clean(r.n), "value": _clean(r.value),
            "target": _clean(r.target), "band": _clean(r.band), "kind": r.kind, "verdict": r.verdict}


@functools.lru_cache(maxsize=16)
def reference(c: float):
    return build_reference(float(c))


def _z_row(stat: str, values: np.ndarray, target: float, n=None) -> Row:
    se = float(values.std(ddof=1) / math.sqrt(values.shape[0]))
    return Row(stat, float(values.mean()), target, SIGMAS * se, "abs", n)


def _replicate(st: Streams, key: str, fn: Callable, reps: int) -> np.ndarray:
    return concat(st.child(key).map(fn, reps))


def _decreasing(stat: str, values: list[float]) -> Row:
    ok = all(x > y for x, y in zip(values, values[1:]))
    return Row(stat, 1.0 if ok else 0.0, 1.0, 0.0, "abs")


# --------------------------------------------------------------------------
# one-dimensional Dickman family


def _condition_rows(cfg, model, n, windows, band) -> list[Row]:
    rows = []
    for a, b in windows:
        rep = diag.condition1_check(model, n, a, b)
        tag = f"({a:g},{b:g}]"
        rows.append(Row(f"condition1_product{tag}", rep.product, rep.product_target,
                        cfg.tol("condition1_product", band), "abs", n))
        rows.append(Row(f"condition1_sum{tag}", rep.sum, rep.sum_target, cfg.tol("condition1_sum", band), "abs", n))
    return rows


def _dickman_family(cfg: ExperimentConfig, st: Streams, factory, *, c: float = 1.0,
                    default_n: int = 10_000, cond_band: float = 0.03, trend_stat: str = "w1",
                    w1_max: float | None = None, ks_max: float | None = None,
                    trend_factor: int = 1) -> list[Row]:
    ns = sorted(set(cfg.n_list([100, 1000, default_n]) if cfg.n is None else cfg.n_list([default_n])))
    if cfg.n is not None and len(ns) == 1 and cfg.param("trend", True):
        ns = sorted({max(10, ns[0] // 100), max(10, ns[0] // 10), ns[0]})
    n = ns[-1]
    model = factory(n)
    ref = reference(c)
    windows = [tuple(w) for w in cfg.param("windows", [(0.5, 1.0)])]
    rows = _condition_rows(cfg, model, n, windows, cond_band)
    for a, b in windows:
        avoid = diag.avoidance_mc(model.sampler(a, b), (a, b), cfg.reps, st.child(f"avoid{a}:{b}"), c=c)
        rows.append(Row(f"avoidance({a:g},{b:g}]", avoid.estimate, avoid.theory,
                        cfg.tol("avoidance", 0.02), "abs", n))
    models = [factory(k) for k in ns]
    # a larger sweep resolves trends whose steps are below the noise at cfg.reps;
    # the bounded statistics still use only the first cfg.reps replications
    trend_reps = int(cfg.param("trend_reps", trend_factor * cfg.reps))
    W = _replicate(st, "sweep", lambda k, g: M.coupled_weighted_sums(models, k, g), max(cfg.reps, trend_reps))
    head = W[: cfg.reps, -1]
    trend = []
    for j, (k, mdl) in enumerate(zip(ns, models)):
        w = W[:, j]
        w1 = diag.wasserstein1(w, ref).value
        ks = diag.ks_distance(w, ref).value
        rows.append(_z_row("mean_vs_exact", w, mdl.expected_weighted_sum(), k))
        rows.append(Row("w1_vs_dickman", w1, n=k))
        rows.append(Row("ks_vs_dickman", ks, n=k))
        trend.append(w1 if trend_stat == "w1" else ks)
    if w1_max is not None:
        rows.append(Row("w1_vs_dickman_max", diag.wasserstein1(head, ref).value, cfg.tol("w1_max", w1_max), 0.0,
                        "upper", n))
    if ks_max is not None:
        rows.append(Row("ks_vs_dickman_max", diag.ks_distance(head, ref).value, cfg.tol("ks_max", ks_max), 0.0,
                        "upper", n))
    if len(ns) > 1:
        rows.append(_decreasing(f"{trend_stat}_decreasing_in_n", trend))
    return rows


def run_primes_geometric(cfg, st):
    return _dickman_family(cfg, st, M.primes_geometric, w1_max=0.15)


def run_primes_bernoulli(cfg, st):
    return _dickman_family(cfg, st, M.primes_bernoulli)


def run_primes_poisson(cfg, st):
    return _dickman_family(cfg, st, M.primes_poisson)


def run_logk_geometric(cfg, st):
    return _dickman_family(cfg, st, M.logk_geometric)


def run_theorem_ex(cfg, st):
    c = float(cfg.param("c", 1.0))
    factory = functools.partial(M.theorem_ex, c=c)
    rows = _dickman_family(cfg, st, factory, c=c, cond_band=cfg.tol("condition1", 0.03))
    n = cfg.main_n(10_000)
    model = factory(n)
    # the product telescopes on windows whose ends are integers
    for a, b in [(0.5, 1.0), (1.0, 2.0)]:
        rep = diag.condition1_check(model, n, a, b)
        rows.append(Row(f"telescoping_gap({a:g},{b:g}]", rep.product_gap, 0.0, 1e-12, "upper", n))
    # E X_k <= C q1_k with C = max 1/q0^2 over k >= 2
    q0 = min(model.marginals(k).q0 for k in range(2, 4))
    C = 1.0 / q0 ** 2
    for eps in (0.01, 0.1):
        bound = C * 2 ** math.ceil(c) * eps
        rows.append(Row(f"small_mass_mean(eps={eps:g})", diag.small_mass_mean(model, n, eps), bound, 0.0, "upper", n))
    alpha, r = 1.0, 2.0
    ht = diag.heavy_tail_mass(model, n, r, alpha)
    rows.append(Row("heavy_tail_mass(r=2,alpha=1)", ht.total, (c / alpha) * r ** -alpha,
                    cfg.tol("heavy_tail", 0.02), "abs", n))
    return rows


def run_records(cfg, st):
    n = cfg.main_n(10_000)
    rows = []
    if n <= 8:
        exact = M.records_exact_pmf(n)
        for s, p in exact.items():
            rows.append(Row(f"pmf[{s}]", float(p), n=n))
        tv = M.total_variation(exact, M.records_permutation_pmf(n))
        rows.append(Row("tv_vs_permutations", float(tv), 0.0, 1e-12, "abs", n))
        return rows
    for k in range(2, 9):
        tv = M.total_variation(M.records_exact_pmf(k), M.records_permutation_pmf(k))
        rows.append(Row("tv_vs_permutations", float(tv), 0.0, 1e-12, "abs", k))
    rows += _dickman_family(cfg, st, M.records, trend_stat="ks", ks_max=0.05, trend_factor=10)
    return rows


def run_sqrt_ratio(cfg, st):
    ns = cfg.n_list([100, 1000, 10_000])
    c = float(cfg.param("c", 1.0))
    a, b = cfg.param("window", (0.5, 1.0))
    rows, freq = [], []
    for k in ns:
        model = M.sqrt_ratio(k, c)
        est = diag.multiplicity_excess_mc(model.sampler(a, b), (a, b), cfg.reps, st.child(f"mult{k}"))
        rows.append(Row("atom_multiplicity_ge2_freq", est.atom_excess.estimate, n=k))
        rows.append(Row("count_gt1_freq", est.count_excess.estimate, n=k))
        freq.append(est.atom_excess)
    ok = all(x.estimate - y.estimate > SIGMAS * math.hypot(x.se, y.se) for x, y in zip(freq, freq[1:]))
    rows.append(Row("multiplicity_freq_decreasing_4sigma", 1.0 if ok else 0.0, 1.0, 0.0, "abs"))
    K = int(cfg.param("K", 10_000))
    seq = M.SequenceSpec("sqrt-ratio")
    ks = np.arange(2, K + 1)
    ratio = np.asarray(seq.z_prev(ks) / seq.z(ks), dtype=float)
    lhs = float(np.sum((1 - ratio) ** 2))
    harmonic = float(np.sum(1.0 / ks))
    # every term equals 1/k, so only rounding separates the two sides
    rows.append(Row("excess_sum_over_harmonic", lhs / harmonic, 1.0, 1e-12, "lower", K))
    zs = np.asarray(seq.z(np.arange(1, K + 1)), dtype=float)
    rows.append(Row("min_z_n_over_n", float(np.min(zs / np.arange(1, K + 1))), 1.0, 0.0, "lower", K))
    return rows


def run_subordinator_gamma(cfg, st):
    alpha, lam = float(cfg.param("alpha", 1.0)), float(cfg.param("lambda", 1.0))
    t, eps, tol = float(cfg.param("t", 1.0)), float(cfg.param("eps", 1e-4)), float(cfg.param("tol", 1e-6))
    spec = sub.gamma(alpha, lam)
    c = alpha
    delta = sub.choose_floor(spec, t, eps, tol)
    smp = sub.SmallJumpSampler(spec, t, eps, delta)
    rows = []
    sums = _replicate(st, "sums", lambda k, g: smp.sample_batch(k, g).sum_in_unit_ball(closed=True), cfg.reps)
    exact_mean = t * (spec.small_mean(eps) - spec.small_mean(delta * eps)) / eps
    rows.append(_z_row("mean_vs_truncated_exact", sums, exact_mean))
    rows.append(Row("mean_vs_limit", float(sums.mean()), c * t, cfg.tol("mean", 0.01), "abs"))
    rows.append(Row("ks_vs_dickman", diag.ks_distance(sums, reference(c * t)).value, cfg.tol("ks_max", 0.05), 0.0,
                    "upper"))
    avoid = diag.avoidance_mc(smp, (0.5, 1.0), cfg.reps, st.child("avoid"), c=c * t)
    rows.append(Row("scaled_avoidance(0.5,1]", avoid.estimate, 0.5 ** (c * t), cfg.tol("avoidance", 0.02), "abs"))
    for a, b in [(0.01, 0.1), (0.1, 0.5), (0.5, 1.0)]:
        if a <= delta:
            continue
        counts = _replicate(st, f"count{a}:{b}", lambda k, g, a=a, b=b: smp.sample_batch(k, g).count_in(a, b),
                            cfg.reps).astype(float)
        rows.append(_z_row(f"count_mean({a:g},{b:g}]", counts, sub.scaled_window_mean(spec, t, eps, a, b)))
    gaps = []
    for e in (1e-2, 1e-3, 1e-4):
        gap = abs(sub.scaled_window_mean(spec, t, e, 0.5, 1.0) - sub.scaled_window_mean(spec, t, e / 2, 0.5, 1.0))
        rows.append(Row("scaling_discrepancy(0.5,1]", gap, n=None))
        gaps.append(gap)
    rows.append(_decreasing("scaling_discrepancy_decreasing", gaps))
    return rows


def _primes_multinomial_batch(n: int, m: int, q, lo: float, hi: float, reps: int, g):
    model = M.primes_geometric(n)
    spec = S.UpliftSpec(conditional=S.MultinomialUplift(m, tuple(q)))
    return S.uplift_batch(model.sampler(lo, hi).sample_batch(reps, g), spec, g)


def axis_mass_exact(model: M.PointProcessModel, m: int, q_i: float, a: float, b: float) -> float:
    """Expected uplifted mass on axis i with norm in (a, b], geometric multiplicities.

    An atom of multiplicity j lands on the axis only if all m j trials hit it,
    so its mass there is sum_j j P(X = j) q_i^(m j) = q0 x / (1 - x)^2 with
    x = (1 - q0) q_i^m.
    """
    ks = model.window_indices(a, b)
    q0, _, _ = model.law.marginal_arrays(ks, model.sequence)
    x = (1.0 - q0) * q_i ** m
    return float(np.sum(q0 * x / (1.0 - x) ** 2))


def run_uplift_multinomial(cfg, st):
    n = cfg.main_n(10_000)
    m, q = int(cfg.param("m", 1)), tuple(float(x) for x in cfg.param("q", (0.5, 0.5)))
    c = 1.0
    model = M.primes_geometric(n)
    if model.law.sampled_as != "geometric":
        raise ConfigError("uplift-multinomial needs geometric multiplicities")
    limit = S.reduce_to_unit_law(S.MultinomialLaw(m, q))
    # norms in (0.5, 1] can only come from source atoms in (0.5, 1 / lower bound]
    lo, hi = 0.5, 1.5
    windows = [(0.5, 0.7), (0.7, 1.0)]
    parts = st.child("uplift").map(lambda k, g: _primes_multinomial_batch(n, m, q, lo, hi, k, g), cfg.reps)
    batch = MeasureBatch.concat(parts)
    batch.horizon.require(0.5, 1.0)
    rows = []
    zero = np.mean(batch.count_in(0.5, 1.0) == 0)
    rows.append(Row("avoidance(0.5,1]", float(zero), 0.5 ** c, cfg.tol("avoidance", 0.02), "abs", n))
    axes = np.eye(len(q))
    for u, p in zip(limit.vectors, limit.probs):
        rep = diag.directional_intensity(batch, u[None, :], windows)
        label = "(" + ",".join(f"{x:.4g}" for x in u) + ")"
        on_axis = np.flatnonzero(np.all(np.isclose(axes, u), axis=1))
        for r in rep.rows:
            tag = f"{label}({r.a:g},{r.b:g}]"
            rows.append(Row(f"intensity{tag}", r.estimate, c * p, cfg.tol("intensity", 0.05), "abs", n))
            if on_axis.size:
                exact = axis_mass_exact(model, m, q[on_axis[0]], r.a, r.b) / math.log(r.b / r.a)
                rows.append(Row(f"intensity_vs_exact{tag}", r.estimate, exact, SIGMAS * r.se, "abs", n))
        rows.append(Row(f"intensity_consistent{label}", 1.0 if rep.consistent else 0.0, 1.0, 0.0, "abs", n))
    return rows


def _eq7_sums(n: int, p: float, reps: int, g) -> np.ndarray:
    model = M.primes_geometric(n)
    spec = S.UpliftSpec(conditional=S.MultinomialUplift(1, (p, 1.0 - p)))
    return S.uplift_batch(model.sampler(0.0, 1.0).sample_batch(reps, g), spec, g).sum_atoms()


def run_dickman_2d(cfg, st):
    p = float(cfg.param("p", 0.3))
    tol = float(cfg.param("tol", 1e-6))
    n = cfg.main_n(10_000)
    law = S.BernoulliSimplexLaw(p)
    rows = []

    def direct(k, g):
        v, radial = S.sample_multivariate_dickman(1.0, law, tol, g, size=k, return_radial=True)
        return np.column_stack([v, radial])

    D = _replicate(st, "direct", direct, cfg.reps)
    vec, radial = D[:, :2], D[:, 2]
    rows.append(_z_row("direct_mean_x1", vec[:, 0], p))
    rows.append(_z_row("direct_mean_x2", vec[:, 1], 1.0 - p))
    rows.append(Row("direct_sum_vs_radial_maxgap", float(np.max(np.abs(vec.sum(axis=1) - radial))), 0.0, 1e-12,
                    "upper"))
    rows.append(Row("direct_sum_ks_vs_D1", diag.ks_distance(vec.sum(axis=1), reference(1.0)).value,
                    cfg.tol("ks_max", 0.05), 0.0, "upper"))
    rows.append(Row("direct_x1_ks_vs_Dp", diag.ks_distance(vec[:, 0], reference(p)).value,
                    cfg.tol("ks_max", 0.05), 0.0, "upper"))
    rows.append(Row("direct_x2_ks_vs_D1-p", diag.ks_distance(vec[:, 1], reference(1.0 - p)).value,
                    cfg.tol("ks_max", 0.05), 0.0, "upper"))
    W = _replicate(st, "eq7", lambda k, g: _eq7_sums(n, p, k, g), cfg.reps)
    exact = M.primes_geometric(n).expected_weighted_sum()
    rows.append(_z_row("wn_mean_x1_vs_exact", W[:, 0], p * exact, n))
    rows.append(_z_row("wn_mean_x2_vs_exact", W[:, 1], (1 - p) * exact, n))
    rows.append(Row("wn_mean_x1_vs_limit", float(W[:, 0].mean()), p, n=n))
    rows.append(Row("wn_mean_x2_vs_limit", float(W[:, 1].mean()), 1.0 - p, n=n))
    rows.append(Row("wn_sum_w1_vs_D1", diag.wasserstein1(W.sum(axis=1), reference(1.0)).value,
                    cfg.tol("w1_max", 0.15), 0.0, "upper", n))
    rows.append(Row("wn_sum_ks_vs_D1", diag.ks_distance(W.sum(axis=1), reference(1.0)).value, n=n))
    rows.append(Row("wn_x1_w1_vs_Dp", diag.wasserstein1(W[:, 0], reference(p)).value,
                    cfg.tol("w1_max", 0.15), 0.0, "upper", n))
    rows.append(Row("wn_x2_w1_vs_D1-p", diag.wasserstein1(W[:, 1], reference(1.0 - p)).value,
                    cfg.tol("w1_max", 0.15), 0.0, "upper", n))
    return rows


REGISTRY: dict[str, Callable] = {
    "primes-geometric": run_primes_geometric,
    "primes-bernoulli": run_primes_bernoulli,
    "records": run_records,
    "logk-geometric": run_logk_geometric,
    "primes-poisson": run_primes_poisson,
    "theorem-ex": run_theorem_ex,
    "sqrt-ratio": run_sqrt_ratio,
    "subordinator-gamma": run_subordinator_gamma,
    "uplift-multinomial": run_uplift_multinomial,
    "dickman-2d": run_dickman_2d,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    start = time.perf_counter()
    st = Streams(config.seed, config.name, workers=config.workers)
    rows = REGISTRY[config.name](config, st)
    echo = {k: v for k, v in asdict(config).items() if k not in ("workers", "out")}
    return ExperimentReport(json.loads(json.dumps(echo)), [_row_dict(config.name, r) for r in rows],
                            wall_clock=time.perf_counter() - start)


def run_reference_csv(c: float, h: float = 1e-4, x_max: float | None = None) -> str:
    ref = build_reference(c, h, x_max)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(("x", "density", "cdf"))
    for x, f, F in zip(ref.x[1:], ref.density[1:], ref.cdf_values[1:]):
        w.writerow((_fmt(float(x)), _fmt(float(f)), _fmt(float(F))))
    return buf.getvalue()


def run_diagnose_csv(model: M.PointProcessModel, windows, ns, c: float | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    cols = ("n", "a", "b", "c", "product", "product_target", "product_gap", "sum", "sum_target", "sum_gap", "indices")
    w.writerow(cols)
    for n in ns:
        for a, b in windows:
            row = diag.condition1_check(model, n, a, b, c).row()
            w.writerow([_fmt(row[k]) for k in cols])
    return buf.getvalue()
