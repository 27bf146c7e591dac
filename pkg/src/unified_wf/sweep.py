"""Monte Carlo comparison harness over SNR and power-budget grids.

Each trial draws one channel realization; every grid point of that trial
reuses it with the noise rescaled, so algorithms and SNR points are compared
on common random numbers. Rows come back ordered by (algorithm, P_total,
SNR, trial) whatever the execution order.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .allocation import Allocation
from .baselines import equal_power, traditional_wf
from .errors import UnifiedWFError
from .metrics import DEFAULT_P_FA, evaluate
from .scenario import Scenario, class_split, make_scenario, snr_to_noise
from .solver import SolverConfig, solve

ALGORITHMS = ("unified", "traditional", "equal")
CSV_HEADER = ("algorithm", "snr_db", "p_total_w", "trial", "capacity_bps", "pd",
              "qos_rate", "objective", "iterations", "wall_time_s")
PLOT_METRICS = {
    "capacity": ("capacity_bps", "Average capacity [Mbps]", 1e-6),
    "pd": ("pd", "Probability of detection", 1.0),
    "qos_rate": ("qos_rate", "QoS satisfaction rate", 1.0),
    "runtime": ("wall_time_s", "Average runtime [ms]", 1e3),
}


@dataclass(frozen=True)
class ScenarioTemplate:
    """Recipe for the per-trial scenario.

    QoS minima: communication-capable users need ``c_min_frac * B`` bits/s,
    sensing-capable users need ``s_min_db`` of SCNR. Clutter power is
    ``clutter_ratio * N0``.
    """

    n_comm: int = 5
    n_sense: int = 5
    n_jrc: int = 5
    n_t: int = 8
    n_r: int = 2
    bandwidth: float = 1e6
    alpha_jrc: float = 0.5
    c_min_frac: float = 0.5
    s_min_db: float = 3.0
    clutter_ratio: float = 1.0
    p_fa: float = DEFAULT_P_FA
    beta_threshold: float = 0.05

    def __post_init__(self):
        if self.n_comm + self.n_sense + self.n_jrc < 1:
            raise ValueError("the template needs at least one user")
        if min(self.n_comm, self.n_sense, self.n_jrc) < 0:
            raise ValueError("class counts must be non-negative")

    def build(self, seed: int, p_total: float = 1.0) -> Scenario:
        classes = class_split(self.n_comm, self.n_sense, self.n_jrc, self.alpha_jrc)
        sc = make_scenario(classes, self.n_t, self.n_r, seed, p_total, self.bandwidth,
                           beta_threshold=self.beta_threshold)
        c_min = np.where(sc.comm_users, self.c_min_frac * self.bandwidth, 0.0)
        s_min = np.where(sc.sense_users, 10.0 ** (self.s_min_db / 10.0), 0.0)
        return sc.with_qos(c_min, s_min)

    def at(self, base: Scenario, snr_db: float, p_total: float) -> Scenario:
        n0 = snr_to_noise(snr_db, p_total, base.n_sub)
        return base.with_budget(p_total).with_noise(n0, self.clutter_ratio * n0)


@dataclass(frozen=True)
class SweepConfig:
    snr_db_grid: tuple = tuple(float(x) for x in range(0, 21, 2))
    p_total_grid: tuple = (1.0, 3.0, 5.0)
    trials: int = 100
    base_seed: int = 42
    algorithms: tuple = ALGORITHMS
    template: ScenarioTemplate = field(default_factory=ScenarioTemplate)
    solver: SolverConfig = field(default_factory=SolverConfig)
    timing: bool = True
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_db_grid", tuple(float(x) for x in self.snr_db_grid))
        object.__setattr__(self, "p_total_grid", tuple(float(x) for x in self.p_total_grid))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.snr_db_grid or not self.p_total_grid:
            raise ValueError("grids must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(p <= 0 for p in self.p_total_grid):
            raise ValueError("P_total values must be positive")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown sweep config keys: {sorted(extra)}")
        if "template" in data:
            data["template"] = ScenarioTemplate(**data["template"])
        if "solver" in data:
            data["solver"] = SolverConfig.from_dict(data["solver"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("snr_db_grid", "p_total_grid", "algorithms"):
            out[key] = list(out[key])
        out["solver"]["mu_bounds"] = list(self.solver.mu_bounds)
        out["solver"]["mu_limits"] = list(self.solver.mu_limits)
        return out


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    snr_db: float
    p_total_w: float
    trial: int
    capacity_bps: float
    pd: float
    qos_rate: float
    objective: float
    iterations: int
    wall_time_s: float

    @property
    def failed(self) -> bool:
        return self.iterations < 0


@dataclass
class SweepResult:
    rows: list
    config: SweepConfig | None = None

    def select(self, **criteria) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]


def trial_seed(base_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(1, np.uint64)[0])


def _allocate(name: str, scenario: Scenario, solver_cfg: SolverConfig):
    if name == "unified":
        report = solve(scenario, solver_cfg)
        return report.allocation, report.iterations
    if name == "traditional":
        return traditional_wf(scenario), 0
    return equal_power(scenario), 0


def _score(name, snr_db, p_total, trial, scenario, alloc: Allocation, iterations, elapsed, p_fa):
    if np.any(alloc.power < 0) or not alloc.within_budget(p_total):
        raise AssertionError(f"{name} broke the power budget at trial {trial}: "
                             f"{alloc.total_power!r} > {p_total!r}")
    m = evaluate(alloc, scenario, p_fa)
    cap = float(np.mean(m.capacity[scenario.comm_users])) if scenario.comm_users.any() else math.nan
    pd = float(np.mean(m.p_d[scenario.sense_users])) if scenario.sense_users.any() else math.nan
    return SweepRow(name, snr_db, p_total, trial, cap, pd, float(np.mean(m.qos_met)),
                    m.objective, int(iterations), elapsed)


def run_trial(cfg: SweepConfig, trial: int) -> list:
    """All rows of one channel realization."""
    base = cfg.template.build(trial_seed(cfg.base_seed, trial))
    rows = []
    for p_total in cfg.p_total_grid:
        for snr_db in cfg.snr_db_grid:
            scenario = cfg.template.at(base, snr_db, p_total)
            for name in cfg.algorithms:
                try:
                    t0 = time.perf_counter()
                    alloc, iterations = _allocate(name, scenario, cfg.solver)
                    elapsed = time.perf_counter() - t0
                except UnifiedWFError:
                    rows.append(SweepRow(name, snr_db, p_total, trial, math.nan, math.nan,
                                         math.nan, math.nan, -1, math.nan))
                    continue
                if not cfg.timing:
                    elapsed = math.nan
                rows.append(_score(name, snr_db, p_total, trial, scenario, alloc,
                                   iterations, elapsed, cfg.template.p_fa))
    return rows


def _order_key(cfg: SweepConfig):
    alg = {a: i for i, a in enumerate(cfg.algorithms)}
    pt = {p: i for i, p in enumerate(cfg.p_total_grid)}
    snr = {s: i for i, s in enumerate(cfg.snr_db_grid)}
    return lambda r: (alg[r.algorithm], pt[r.p_total_w], snr[r.snr_db], r.trial)


def run_sweep(cfg: SweepConfig) -> SweepResult:
    trials = range(cfg.trials)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            batches = list(pool.map(run_trial, [cfg] * cfg.trials, trials))
    else:
        batches = [run_trial(cfg, t) for t in trials]
    rows = [r for batch in batches for r in batch]
    rows.sort(key=_order_key(cfg))
    return SweepResult(rows=rows, config=cfg)


# -- CSV -------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".9g")


def emit_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in result.rows:
            w.writerow([_fmt(getattr(row, name)) for name in CSV_HEADER])


def parse_csv(path) -> SweepResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            d = dict(zip(header, rec))
            rows.append(SweepRow(
                algorithm=d["algorithm"], snr_db=float(d["snr_db"]), p_total_w=float(d["p_total_w"]),
                trial=int(d["trial"]), capacity_bps=float(d["capacity_bps"]), pd=float(d["pd"]),
                qos_rate=float(d["qos_rate"]), objective=float(d["objective"]),
                iterations=int(d["iterations"]), wall_time_s=float(d["wall_time_s"]),
            ))
    return SweepResult(rows=rows)


# -- aggregation -----------------------------------------------------------

SUMMARY_FIELDS = ("capacity_bps", "pd", "qos_rate", "objective", "iterations", "wall_time_s")


def _mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def summarize(result: SweepResult) -> list:
    """Trial-averaged mean and standard error per (algorithm, P_total, SNR)."""
    groups: dict = {}
    for r in result.rows:
        groups.setdefault((r.algorithm, r.p_total_w, r.snr_db), []).append(r)
    out = []
    for (alg, p, snr), rows in groups.items():
        entry = {"algorithm": alg, "p_total_w": p, "snr_db": snr, "trials": len(rows),
                 "failed": sum(r.failed for r in rows)}
        for name in SUMMARY_FIELDS:
            entry[name], entry[name + "_stderr"] = _mean_stderr([getattr(r, name) for r in rows])
        out.append(entry)
    return out


def emit_summary_csv(result: SweepResult, path) -> None:
    summary = summarize(result)
    header = ["algorithm", "p_total_w", "snr_db", "trials", "failed"]
    for name in SUMMARY_FIELDS:
        header += [name, name + "_stderr"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for entry in summary:
            w.writerow([_fmt(entry[h]) for h in header])


# -- plots -----------------------------------------------------------------

def emit_plot(result: SweepResult, metric: str, path) -> None:
    """Write a standalone SVG of a trial-averaged metric.

    ``capacity``, ``pd`` and ``qos_rate`` are drawn against SNR with one line
    per (algorithm, P_total); ``runtime`` is a grouped bar chart.
    """
    if metric not in PLOT_METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(PLOT_METRICS)}")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    column, label, scale = PLOT_METRICS[metric]
    summary = summarize(result)
    algorithms = list(dict.fromkeys(e["algorithm"] for e in summary))
    budgets = sorted({e["p_total_w"] for e in summary})

    with plt.rc_context({"svg.hashsalt": "unified-wf", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        if metric == "runtime":
            width = 0.8 / max(len(budgets), 1)
            for b, p in enumerate(budgets):
                ys = []
                for alg in algorithms:
                    vals = [e[column] for e in summary if e["algorithm"] == alg and e["p_total_w"] == p
                            and math.isfinite(e[column])]
                    ys.append(np.mean(vals) * scale if vals else np.nan)
                ax.bar(np.arange(len(algorithms)) + b * width, ys, width, label=f"P_total={p:g} W",
                       gid=f"series-{p:g}")
            ax.set_xticks(np.arange(len(algorithms)) + width * (len(budgets) - 1) / 2, algorithms)
            ax.set_xlabel("Algorithm")
        else:
            for alg in algorithms:
                for p in budgets:
                    pts = sorted((e["snr_db"], e[column]) for e in summary
                                 if e["algorithm"] == alg and e["p_total_w"] == p)
                    xs = [x for x, _ in pts]
                    ys = [y * scale for _, y in pts]
                    ax.plot(xs, ys, marker="o", label=f"{alg}, P_total={p:g} W", gid=f"series-{alg}-{p:g}")
            ax.set_xlabel("SNR [dB]")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
