"""Experiment orchestration: replications, metrics, sweeps, exponent fits, CSV output."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .bounds import theorem1_envelope, total_queue_bound
from .policies import (
    DEFAULT_CONSTANTS,
    MaxWeightPolicy,
    ParameterInfeasible,
    StandardBatchingPolicy,
    ThreePhasePolicy,
    derive_params,
)
from .switch import (
    ArrivalConfig,
    ArrivalStream,
    SwitchState,
    add_arrivals,
    apply_schedule,
    replication_rng,
)

log = logging.getLogger(__name__)

POLICIES = ("three-phase", "standard-batching", "maxweight")

SWEEP_COLUMNS = [
    "n", "f_n", "seed", "mean_total_queue", "max_total_queue", "time_avg_B",
    "frac_Uk_pos", "frac_Wk", "frac_Hk", "wasted_service", "bound_3nd", "envelope_value",
]
SUMMARY_COLUMNS = [
    "n", "f_n", "seeds", "mean_total_queue", "max_total_queue", "stderr",
    "envelope_value", "ratio_to_envelope",
]
PERIOD_COLUMNS = ["k", "B_k", "U_k", "W_k", "H_k", "wasted_service"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    policy: str = "three-phase"
    n_list: list[int] = field(default_factory=lambda: [25])
    fn_rule: str = "n"
    c_b: float = DEFAULT_CONSTANTS[0]
    c_d: float = DEFAULT_CONSTANTS[1]
    c_s: float = DEFAULT_CONSTANTS[2]
    periods: int = 10
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    relaxed: bool = False
    out_dir: str = "out"
    snapshot_period_boundaries: bool = False
    workers: int = 1
    # standard-batching batch length; 0 means "same b as the three-phase policy"
    batch_length: int = 0
    # test stub: no packets ever arrive
    zero_arrivals: bool = False
    series_every: int = 1

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        if self.periods < 1:
            raise ConfigError("periods must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.n_list:
            raise ConfigError("n_list must be nonempty")
        for n, f in self.pairs():
            if f < n:
                raise ConfigError(f"f_n={f} < n={n}")

    def f_for(self, n: int) -> int:
        rule = self.fn_rule.replace(" ", "")
        if rule == "n":
            return n
        if rule.endswith("n") and rule[:-1].isdigit():
            return int(rule[:-1]) * n
        vals = [int(v) for v in rule.split(",")]
        if len(vals) != len(self.n_list):
            raise ConfigError("explicit fn_rule list must match n_list in length")
        return vals[self.n_list.index(n)]

    def pairs(self) -> list[tuple[int, int]]:
        return [(n, self.f_for(n)) for n in self.n_list]


_LIST_KEYS = {"n_list", "seeds"}


def _coerce(name: str, raw: str, typ) -> object:
    raw = raw.strip()
    if name in _LIST_KEYS:
        return [int(v) for v in raw.split(",") if v.strip()]
    if typ in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: not a boolean: {raw!r}")
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    return raw


def config_fields() -> dict[str, str]:
    return {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Flat ``key = value`` config; ``#`` starts a comment. Overrides win."""
    known = config_fields()
    values: dict[str, object] = {}
    items: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        items.append((lineno, key, val))
    for key, val in (overrides or {}).items():
        items.append((0, key, val))
    for lineno, key, val in items:
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}" if lineno else f"unknown key {key!r}")
        try:
            values[key] = _coerce(key, val, known[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path: str | os.PathLike, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), overrides)


@dataclass
class MetricsRecord:
    policy: str
    n: int
    f_n: int
    seed: int
    b: int
    d: int
    periods: int
    series: np.ndarray  # total queue at the beginning of every slot
    B: list[int]
    U: list[int]
    W: list[int]
    H: list[int]
    wasted: list[int]
    wasted_service: int
    violations: list[str]
    constraints_ok: bool
    snapshots: list[np.ndarray] = field(default_factory=list)

    @property
    def mean_total_queue(self) -> float:
        return float(self.series.mean())

    @property
    def max_total_queue(self) -> int:
        return int(self.series.max())

    @property
    def time_avg_B(self) -> float:
        return float(np.mean(self.B[: self.periods])) if self.B else 0.0

    def _frac(self, xs: Sequence[int]) -> float:
        xs = list(xs[: self.periods])
        if not xs:
            return 0.0
        return sum(1 for x in xs if x > 0) / len(xs)

    @property
    def frac_Uk_pos(self) -> float:
        return self._frac(self.U)

    @property
    def frac_Wk(self) -> float:
        return self._frac(self.W)

    @property
    def frac_Hk(self) -> float:
        return self._frac(self.H)

    @property
    def bound_3nd(self) -> int:
        return total_queue_bound(self.n, self.d)

    @property
    def envelope_value(self) -> float:
        return theorem1_envelope(self.n, self.f_n).value

    def row(self) -> dict:
        return {c: getattr(self, c) for c in SWEEP_COLUMNS}

    def period_rows(self) -> list[dict]:
        out = []
        for k in range(len(self.U)):
            out.append({
                "k": k,
                "B_k": self.B[k] if k < len(self.B) else "",
                "U_k": self.U[k],
                "W_k": self.W[k] if k < len(self.W) else "",
                "H_k": self.H[k] if k < len(self.H) else "",
                "wasted_service": self.wasted[k] if k < len(self.wasted) else "",
            })
        return out


def make_policy(cfg: ExperimentConfig, n: int, f_n: int):
    params = derive_params(n, f_n, cfg.c_b, cfg.c_d, cfg.c_s)
    if not params.constraints_ok and not cfg.relaxed:
        raise ParameterInfeasible([
            f"constants (c_b, c_d, c_s) = ({cfg.c_b}, {cfg.c_d}, {cfg.c_s}) violate the "
            "sufficient conditions c_b > c_s, c_d^2 >= 640 c_b, c_d > c_b, c_s >= 30; set relaxed = true"
        ])
    if cfg.policy == "three-phase":
        pol = ThreePhasePolicy(params)
        return pol, params, params.b, params.d
    if cfg.policy == "standard-batching":
        pol = StandardBatchingPolicy(params, cfg.batch_length or None)
        return pol, params, pol.timing.b, pol.timing.b
    return MaxWeightPolicy(n), params, params.b, 0


@dataclass
class Slot:
    tau: int
    schedule: np.ndarray
    eligible: str
    served: int
    arrivals: np.ndarray
    arrival_class: str


def play(policy, state: SwitchState, stream: ArrivalStream, horizon: int) -> Iterator[Slot]:
    """Drive ``policy`` for slots state.tau .. horizon, yielding after each slot.

    Within a slot: the policy picks a schedule from the state at the start
    of the slot, service happens, then arrivals, then the policy's
    end-of-slot bookkeeping.
    """
    while state.tau <= horizon:
        tau = state.tau
        sigma, eligible = policy.step(tau)
        served = apply_schedule(state, sigma, eligible)
        arrivals = stream.next()
        cls = policy.arrival_class(tau)
        add_arrivals(state, arrivals, cls)
        state.tau += 1
        policy.end_slot(tau, arrivals)
        yield Slot(tau, sigma, eligible, served, arrivals, cls)


def run_replication(cfg: ExperimentConfig, n: int, f_n: int, seed: int, check: bool = True) -> MetricsRecord:
    """One seeded run of ``cfg.periods`` batches plus the lag needed to finish serving them.

    Conservation (queues == arrivals - service) is checked at every slot
    when ``check`` is set; failures and per-period inequality failures are
    collected in ``record.violations`` rather than raised.
    """
    policy, params, period, lag = make_policy(cfg, n, f_n)
    horizon = cfg.periods * period + lag
    state = policy.new_state()
    stream = ArrivalStream(ArrivalConfig.from_gap(n, f_n, seed), replication_rng(seed, n, f_n), zero=cfg.zero_arrivals)
    series = np.empty(horizon, dtype=np.int64)
    snapshots = []
    violations = policy.violations
    total = 0
    for slot in play(policy, state, stream, horizon):
        series[slot.tau - 1] = total
        total += int(slot.arrivals.sum()) - slot.served
        if check and not state.conservation_holds():
            violations.append(f"slot {slot.tau}: queues != cumulative arrivals - service")
        if cfg.snapshot_period_boundaries and slot.tau % period == 0:
            snapshots.append(state.queues)
    if check and total != state.total():
        violations.append("running total disagrees with queue matrices")
    led = policy.ledger
    return MetricsRecord(
        policy=cfg.policy, n=n, f_n=f_n, seed=seed, b=period, d=params.d, periods=cfg.periods,
        series=series,
        B=list(led.B) if led else [], U=list(led.U) if led else [],
        W=list(led.W) if led else [], H=list(led.H) if led else [],
        wasted=list(led.wasted) if led else [],
        wasted_service=state.wasted_service, violations=list(violations),
        constraints_ok=params.constraints_ok, snapshots=snapshots,
    )


def _run_task(args):
    cfg, n, f_n, seed = args
    return run_replication(cfg, n, f_n, seed)


def run_all(cfg: ExperimentConfig) -> list[MetricsRecord]:
    """Every (n, seed) replication, returned sorted by (n, seed) whatever the worker count."""
    tasks = [(cfg, n, f, seed) for n, f in cfg.pairs() for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            records = list(ex.map(_run_task, tasks))
    else:
        records = [_run_task(t) for t in tasks]
    return sorted(records, key=lambda r: (r.n, r.seed))


def across_seed_mean_series(records: Sequence[MetricsRecord]) -> np.ndarray:
    """Slot-wise mean over seeds, truncated to the shortest series."""
    m = min(len(r.series) for r in records)
    return np.mean([r.series[:m] for r in records], axis=0)


def fit_exponent(ns: Sequence[float], means: Sequence[float]) -> tuple[float, float] | None:
    """Least-squares slope and intercept of ln(mean) against ln(n); None if not fittable."""
    pts = [(n, m) for n, m in zip(ns, means) if m > 0]
    if len({n for n, _ in pts}) < 2:
        return None
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    alpha, intercept = np.polyfit(x, y, 1)
    return float(alpha), float(intercept)


@dataclass
class SweepResult:
    rows: list[dict]
    table: list[dict]
    alpha: float | None
    intercept: float | None
    notice: str = ""


def summarize(rows: Iterable[dict]) -> list[dict]:
    by_n: dict[int, list[dict]] = {}
    for r in rows:
        by_n.setdefault(int(r["n"]), []).append(r)
    table = []
    for n in sorted(by_n):
        rs = by_n[n]
        means = np.array([float(r["mean_total_queue"]) for r in rs])
        f = int(rs[0]["f_n"])
        env = theorem1_envelope(n, f).value
        mean = float(means.mean())
        table.append({
            "n": n,
            "f_n": f,
            "seeds": len(rs),
            "mean_total_queue": mean,
            "max_total_queue": max(int(r["max_total_queue"]) for r in rs),
            "stderr": float(means.std(ddof=1) / math.sqrt(len(rs))) if len(rs) > 1 else 0.0,
            "envelope_value": env,
            "ratio_to_envelope": mean / env if env > 0 else float("nan"),
        })
    return table


def sweep_and_fit(cfg: ExperimentConfig, records: Sequence[MetricsRecord] | None = None) -> SweepResult:
    records = run_all(cfg) if records is None else records
    rows = [r.row() for r in records]
    return fit_rows(rows)


def fit_rows(rows: list[dict]) -> SweepResult:
    table = summarize(rows)
    fit = fit_exponent([t["n"] for t in table], [t["mean_total_queue"] for t in table])
    if fit is None:
        return SweepResult(rows, table, None, None, "fit omitted: need at least 2 distinct n with positive mean")
    return SweepResult(rows, table, fit[0], fit[1])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows: Sequence[dict], path: str | os.PathLike, columns: Sequence[str]) -> Path:
    """Header plus one line per row, columns in the given order."""
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {p}: {exc.strerror or exc}") from exc
    return p


def read_csv(path: str | os.PathLike) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_record(record: MetricsRecord, out_dir: str | os.PathLike, series_every: int = 1) -> list[Path]:
    """Per-period and per-slot CSVs (and snapshots, if captured) for one replication."""
    out = Path(out_dir)
    stem = f"{record.policy}_n{record.n}_f{record.f_n}_seed{record.seed}"
    paths = [write_csv(record.period_rows(), out / f"{stem}_periods.csv", PERIOD_COLUMNS)]
    step = max(1, series_every)
    idx = range(0, len(record.series), step)
    series_rows = [{"slot": i + 1, "total_queue": int(record.series[i])} for i in idx]
    paths.append(write_csv(series_rows, out / f"{stem}_series.csv", ["slot", "total_queue"]))
    if record.snapshots:
        snap = []
        for k, q in enumerate(record.snapshots):
            for (i, j), v in np.ndenumerate(q):
                snap.append({"period": k, "i": i + 1, "j": j + 1, "count": int(v)})
        paths.append(write_csv(snap, out / f"{stem}_snapshots.csv", ["period", "i", "j", "count"]))
    return paths


def write_sweep(result: SweepResult, out_dir: str | os.PathLike) -> tuple[Path, Path]:
    out = Path(out_dir)
    return (
        write_csv(result.rows, out / "sweep.csv", SWEEP_COLUMNS),
        write_csv(result.table, out / "sweep_summary.csv", SUMMARY_COLUMNS),
    )


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
