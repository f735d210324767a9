"""Experiment orchestration: configs, the accuracy-vs-SNR sweep and the low-degree report."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .amp import bayes_amp
from .lowdeg import MAX_EMBED_TERMS, MAX_GRAM_EDGES, PsiSpec, estimate_c_M, lowdeg_optimal_mse, optimal_mse_se
from .model import sample_observation
from .mp import MAX_MESSAGE_BYTES
from .plotting import FINITE_T_COLORS, emit_svg
from .prior import DEFAULT_QUAD_LEVEL, InvalidParameter, make_three_point
from .scalar_theory import q_bayes, se_iterates, se_trajectory
from .trees import MAX_LABELINGS, MAX_TREE_EDGES

PRESETS = {
    "desk": {"n": 4000, "reps": 20},
    "full": {"n": 20000, "reps": 50},
}

DEFAULT_GUARDS = {
    "max_tree_edges": MAX_TREE_EDGES,
    "max_labelings": MAX_LABELINGS,
    "max_gram_edges": MAX_GRAM_EDGES,
    "max_embed_terms": MAX_EMBED_TERMS,
    "max_message_bytes": MAX_MESSAGE_BYTES,
}


def version_string() -> str:
    """Package version plus ``git describe`` of the source tree when available."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, cwd=Path(__file__).resolve().parent, timeout=5)
        desc = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+{desc}" if desc else __version__


# ---------------------------------------------------------------------------
# configuration


def _grid(spec) -> list:
    if isinstance(spec, dict):
        return [float(x) for x in np.linspace(spec["start"], spec["stop"], int(spec["num"]))]
    return [float(x) for x in spec]


@dataclass
class LowdegConfig:
    D: int = 2
    n_list: list = field(default_factory=lambda: [12, 24])
    samples: int = 10**6
    psi: str = "identity"
    s: float = 1.0


@dataclass
class RunConfig:
    eps: float = 0.01
    s_grid: list = field(default_factory=lambda: _grid({"start": 0.2, "stop": 1.0, "num": 17}))
    n: int = PRESETS["desk"]["n"]
    iterations: list = field(default_factory=lambda: [5, 10, 20])
    reps: int = PRESETS["desk"]["reps"]
    seed: int = 0
    out_dir: str = "results"
    preset: str = "desk"
    workers: int = 1
    lowdeg: LowdegConfig = field(default_factory=LowdegConfig)
    guards: dict = field(default_factory=lambda: dict(DEFAULT_GUARDS))

    def __post_init__(self):
        if isinstance(self.lowdeg, dict):
            self.lowdeg = LowdegConfig(**self.lowdeg)
        self.s_grid = _grid(self.s_grid)
        self.iterations = sorted(int(t) for t in self.iterations)
        self.guards = {**DEFAULT_GUARDS, **(self.guards or {})}
        self.validate()

    def validate(self):
        if not 0 < self.eps < 1:
            raise InvalidParameter("eps must lie in (0, 1)")
        if not self.s_grid or any(not (s > 0) for s in self.s_grid):
            raise InvalidParameter("s_grid must be a non-empty list of positive values")
        if self.n < 2:
            raise InvalidParameter("n must be at least 2")
        if self.reps < 2:
            raise InvalidParameter("reps must be at least 2 (standard errors need replicates)")
        if not self.iterations or self.iterations[0] < 1:
            raise InvalidParameter("iterations must be positive integers")
        if self.workers < 1:
            raise InvalidParameter("workers must be at least 1")
        if self.preset not in PRESETS and self.preset != "custom":
            raise InvalidParameter(f"unknown preset {self.preset!r}")
        ld = self.lowdeg
        if not 0 <= ld.D <= MAX_GRAM_EDGES:
            raise InvalidParameter(f"lowdeg.D must lie in [0, {MAX_GRAM_EDGES}]")
        if list(ld.n_list) != sorted(ld.n_list) or min(ld.n_list) < 3:
            raise InvalidParameter("lowdeg.n_list must be ascending with n >= 3")
        if ld.samples < 2:
            raise InvalidParameter("lowdeg.samples must be at least 2")
        PsiSpec.parse(ld.psi)
        if not ld.s > 0:
            raise InvalidParameter("lowdeg.s must be positive")

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        preset = data.get("preset", "desk")
        if preset not in PRESETS and preset != "custom":
            raise InvalidParameter(f"unknown preset {preset!r}")
        base = dict(PRESETS.get(preset, {}))
        base.update(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(base) - known
        if unknown:
            raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
        return cls(**base)

    @classmethod
    def from_yaml(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def override(self, **kw) -> "RunConfig":
        data = self.to_dict()
        for k, v in kw.items():
            if v is None:
                continue
            if k.startswith("lowdeg_"):
                data["lowdeg"][k[len("lowdeg_"):]] = v
            else:
                data[k] = v
        return RunConfig(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# output


@dataclass
class ResultRow:
    quantity: str
    value: float
    s: float | None = None
    t: int | None = None
    std_error: float | None = None
    n: int | None = None
    seed: int | None = None
    value_over_s: float | None = None


CSV_FIELDS = ["s", "t", "quantity", "value", "std_error", "value_over_s", "n", "seed"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(rows, path, meta: dict | None = None):
    """Write rows (ResultRow or dict) as CSV with ``# key: value`` metadata lines first."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            for key, val in (meta or {}).items():
                text = val if isinstance(val, str) else json.dumps(val, sort_keys=True)
                fh.write(f"# {key}: {text}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_FIELDS)
            for row in rows:
                d = dataclasses.asdict(row) if dataclasses.is_dataclass(row) else dict(row)
                writer.writerow([_fmt(d.get(k)) for k in CSV_FIELDS])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def output_meta(config: RunConfig, **extra) -> dict:
    return {"version": version_string(), "config": config.to_dict(), "seed": config.seed,
            "guards": config.guards, "quadrature_level": DEFAULT_QUAD_LEVEL, **extra}


# ---------------------------------------------------------------------------
# accuracy vs s sweep


class SweepError(RuntimeError):
    def __init__(self, s: float, cause: Exception):
        super().__init__(f"sweep aborted at s={s!r}: {cause}")
        self.s = s


@dataclass
class SweepPoint:
    s: float
    q_amp: float
    q_bayes: float
    second_moment: float
    variance: float
    se_mse: dict  # t -> SE-predicted MSE
    sim_mean: dict  # t -> simulated mean MSE
    sim_se: dict  # t -> standard error

    @property
    def amp_limit_mse(self) -> float:
        return self.second_moment - self.q_amp

    @property
    def bayes_mse(self) -> float:
        return self.second_moment - self.q_bayes

    def z(self, t: int) -> float:
        return (self.sim_mean[t] - self.se_mse[t]) / self.sim_se[t]


def sweep_point(s_index: int, s: float, config: RunConfig) -> SweepPoint:
    try:
        prior = make_three_point(s, config.eps)
        trace = se_trajectory(prior)
        qb, _ = q_bayes(prior)
        T = max(config.iterations)
        qs = se_iterates(prior, T + 1)
        m2 = prior.second_moment
        se_mse = {t: m2 - qs[t + 1] for t in config.iterations}
        sims = np.empty((config.reps, len(config.iterations)))
        for r in range(config.reps):
            obs = sample_observation(prior, config.n, seed=(config.seed, s_index, r))
            run = bayes_amp(obs, prior, T)
            sims[r] = [run.mse[t] for t in config.iterations]
            del obs, run
        mean = sims.mean(axis=0)
        se = sims.std(axis=0, ddof=1) / math.sqrt(config.reps)
        return SweepPoint(s=s, q_amp=trace.q_amp, q_bayes=qb, second_moment=m2, variance=prior.variance,
                          se_mse=se_mse, sim_mean=dict(zip(config.iterations, mean.tolist())),
                          sim_se=dict(zip(config.iterations, se.tolist())))
    except Exception as exc:  # noqa: BLE001 - recorded with the offending s
        raise SweepError(s, exc) from exc


def _sweep_task(args):
    return sweep_point(*args)


@dataclass
class SweepResult:
    config: RunConfig
    points: list

    def rows(self) -> list:
        rows, n, seed = [], self.config.n, self.config.seed
        for p in self.points:
            s = p.s
            for name, val in (("q_amp", p.q_amp), ("q_bayes", p.q_bayes)):
                rows.append(ResultRow(name, val, s=s))
            rows.append(ResultRow("mse_amp_limit", p.amp_limit_mse, s=s, value_over_s=p.amp_limit_mse / s))
            rows.append(ResultRow("mse_bayes", p.bayes_mse, s=s, value_over_s=p.bayes_mse / s))
            rows.append(ResultRow("mse_trivial", p.variance, s=s, value_over_s=p.variance / s))
            for t in self.config.iterations:
                rows.append(ResultRow("mse_se", p.se_mse[t], s=s, t=t, value_over_s=p.se_mse[t] / s))
                rows.append(ResultRow("mse_sim", p.sim_mean[t], s=s, t=t, std_error=p.sim_se[t], n=n,
                                      seed=seed, value_over_s=p.sim_mean[t] / s))
        return rows

    def checks(self) -> dict:
        worst = max((abs(p.z(t)), p.s, t) for p in self.points for t in self.config.iterations)
        lo, hi = self.points[0], self.points[-1]
        return {
            "max_abs_z": worst[0],
            "worst_point": {"s": worst[1], "t": worst[2]},
            "sim_within_3se": worst[0] <= 3,
            "bayes_dominates": all(p.q_amp <= p.q_bayes + 1e-9 for p in self.points),
            "extremes_coincide": abs(lo.q_amp - lo.q_bayes) < 1e-6 and abs(hi.q_amp - hi.q_bayes) < 1e-6,
        }

    def curves(self) -> list:
        s = np.array([p.s for p in self.points])
        curves = [
            {"x": s, "y": [p.amp_limit_mse / p.s for p in self.points], "kind": "solid",
             "label": "AMP limit", "color": "tab:red"},
            {"x": s, "y": [p.bayes_mse / p.s for p in self.points], "kind": "solid",
             "label": "Bayes optimal", "color": "tab:blue"},
        ]
        for k, t in enumerate(self.config.iterations):
            color = FINITE_T_COLORS[k % len(FINITE_T_COLORS)]
            curves.append({"x": s, "y": [p.se_mse[t] / p.s for p in self.points], "kind": "dashed",
                           "label": f"state evolution, t={t}", "color": color})
            curves.append({"x": s, "y": [p.sim_mean[t] / p.s for p in self.points],
                           "yerr": [p.sim_se[t] / p.s for p in self.points], "kind": "points",
                           "label": f"simulation, t={t}", "color": color})
        return curves


def figure1_sweep(config: RunConfig, csv_path=None, svg_path=None) -> SweepResult:
    """Accuracy of Bayes AMP against s for the three-point prior, theory and simulation.

    Grid points are independent tasks (randomness keyed on (seed, s index,
    replicate)), so the result does not depend on execution order.
    """
    tasks = [(k, s, config) for k, s in enumerate(config.s_grid)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            points = list(pool.map(_sweep_task, tasks))
    else:
        points = [_sweep_task(t) for t in tasks]
    result = SweepResult(config=config, points=points)
    if csv_path is not None:
        emit_csv(result.rows(), csv_path, output_meta(config, checks=result.checks()))
    if svg_path is not None:
        trivial = 2 - 2 * config.eps  # Var(Theta)/s for the three-point prior
        emit_svg(result.curves(), svg_path, xlabel="s", ylabel="MSE / s",
                 hlines=[(trivial, "constant estimator")])
    return result


# ---------------------------------------------------------------------------
# low-degree vs AMP


@dataclass
class LowdegReport:
    rows: list
    amp_limit_mse: float
    bayes_mse: float
    table: dict  # (D, n) -> (mse, se)

    def checks(self) -> dict:
        D = max(d for d, _ in self.table)
        n_max = max(n for _, n in self.table)
        mse, se = self.table[(D, n_max)]
        nested = all(self.table[(d + 1, n)][0] <= self.table[(d, n)][0] + 3 * self.table[(d + 1, n)][1]
                     for d, n in self.table if (d + 1, n) in self.table)
        return {"above_amp_limit": mse >= self.amp_limit_mse - 3 * se, "nested": nested}


def lowdeg_vs_amp_report(config: RunConfig, csv_path=None, svg_path=None) -> LowdegReport:
    """Optimal degree-<=D MSE across n against the Bayes-AMP limit (psi = identity)."""
    ld = config.lowdeg
    psi = PsiSpec.parse(ld.psi)
    prior = make_three_point(ld.s, config.eps)
    if psi.kind != "identity":
        raise InvalidParameter("the AMP comparison is defined for psi = identity")
    amp_limit = prior.second_moment - se_trajectory(prior).q_amp
    bayes = prior.second_moment - q_bayes(prior)[0]
    rows = [ResultRow("mse_amp_limit", amp_limit, s=ld.s), ResultRow("mse_bayes", bayes, s=ld.s)]
    table = {}
    for n in ld.n_list:
        est = estimate_c_M(prior, psi, ld.D, n, ld.samples, config.seed)
        for d in range(ld.D + 1):
            sub = est.up_to_degree(d)
            mse, _ = lowdeg_optimal_mse(sub)
            se = optimal_mse_se(sub)
            table[(d, n)] = (mse, se)
            rows.append(ResultRow(f"lowdeg_mse_D{d}", mse, s=ld.s, std_error=se, n=n, seed=config.seed))
    report = LowdegReport(rows=rows, amp_limit_mse=amp_limit, bayes_mse=bayes, table=table)
    if csv_path is not None:
        emit_csv(rows, csv_path, output_meta(config, checks=report.checks()))
    if svg_path is not None:
        curves = []
        for d in range(ld.D + 1):
            curves.append({"x": ld.n_list, "y": [table[(d, n)][0] for n in ld.n_list],
                           "yerr": [table[(d, n)][1] for n in ld.n_list], "kind": "points",
                           "label": f"degree <= {d}"})
        ns = list(ld.n_list)
        curves.append({"x": ns, "y": [amp_limit] * len(ns), "kind": "solid", "label": "AMP limit",
                       "color": "tab:red"})
        curves.append({"x": ns, "y": [bayes] * len(ns), "kind": "solid", "label": "Bayes optimal",
                       "color": "tab:blue"})
        emit_svg(curves, svg_path, xlabel="n", ylabel="MSE")
    return report
