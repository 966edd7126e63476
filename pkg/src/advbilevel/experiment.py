"""Experiment orchestration: configs, start points, sweeps, figure data.

A sweep cell is one (rho, mu, zeta0, beta0-restart) combination.  For each
rho the adversary's sample count m is fixed and one noise matrix is drawn
from the run seed, shared by every cell of that rho so hyperparameter
effects are not confounded by fresh noise.  Start points follow the scheme
that proved robust in practice: w = 0, steep slopes alpha = alpha0, and
thresholds beta seeded from the empirical word rates of a random subset of
adversarial-class training rows, so the generator begins by mimicking real
data instead of sampling blindly.

Every artifact written here is a pure function of (config, seed): reruns
produce byte-identical files.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baseline import BaselineConfig, classify, train_baseline
from .corpus import (
    SplitSpec,
    Vocabulary,
    build_vocabulary,
    chronological_split,
    encode,
    read_corpus_tsv,
    read_stopwords,
)
from .evaluation import ConfusionCounts, confusion, f1_score, p4_score
from .generator import draw_noise
from .lm import LmConfig, SolverState, SolveStatus, solve_stationarity
from .objectives import BowDataset
from .stationarity import BilevelProblem

# sub-stream tags so noise and beta0 draws never collide
_Z_TAG = 1
_BETA_TAG = 2

METRICS_HEADER = "config_id,period,rho,mu,seed,tp,tn,fp,fn,p4,f1"
CELLS_HEADER = "config_id,rho,mu,zeta0,restart,status,iterations,residual_sq"
TRACE_HEADER = "iter,residual_sq,eta,omega,accepted"


class ConfigError(ValueError):
    """Bad experiment configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Unusable corpus or dataset (CLI exit code 3)."""


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str = ""
    q_target: int = 1000
    train_size: int = 2000
    count_mode: str = "document"
    stopwords: str = ""
    adversarial_class: int = 1
    rho: Tuple[float, ...] = (0.05, 0.075, 0.10, 0.125, 0.15, 0.20, 0.25)
    mu: Tuple[float, ...] = (0.01,)
    alpha0: float = 1000.0
    zeta0: Tuple[float, ...] = (0.1,)
    beta0_size: int = 200
    beta0_restarts: int = 1
    epsilon: float = 1e-8
    max_iter: int = 1000
    eta0: float = 1e-3
    kappa: int = 5
    tau: float = 0.9
    baseline_max_iter: int = 5000
    baseline_grad_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if any(not (0.0 < r <= 1.0) for r in self.rho):
            raise ConfigError("rho entries must lie in (0, 1]")
        if any(m < 0 for m in self.mu):
            raise ConfigError("mu entries must be nonnegative")
        if self.beta0_size < 1 or self.beta0_restarts < 1:
            raise ConfigError("beta0_size and beta0_restarts must be at least 1")
        if self.adversarial_class not in (0, 1):
            raise ConfigError("adversarial_class must be 0 or 1")
        if self.count_mode not in ("document", "token"):
            raise ConfigError(f"unknown count_mode {self.count_mode!r}")
        if self.q_target < 1 or self.train_size < 1:
            raise ConfigError("q_target and train_size must be at least 1")

    def lm_config(self) -> LmConfig:
        try:
            return LmConfig(epsilon=self.epsilon, max_iter=self.max_iter, eta0=self.eta0,
                            kappa=self.kappa, tau=self.tau)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_LIST_KEYS = {"rho", "mu", "zeta0"}
_INT_KEYS = {"q_target", "train_size", "adversarial_class", "beta0_size", "beta0_restarts",
             "max_iter", "kappa", "baseline_max_iter", "seed"}
_FLOAT_KEYS = {"alpha0", "epsilon", "eta0", "tau", "baseline_grad_tol"}
_STR_KEYS = {"corpus", "count_mode", "stopwords"}


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat `key = value` lines; # starts a comment, blank lines ignored."""
    mapping: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        mapping[key] = value
    return mapping


def build_config(mapping: Dict[str, str]) -> ExperimentConfig:
    """Typed ExperimentConfig from string key/values (file or CLI sourced)."""
    kwargs = {}
    for key, value in mapping.items():
        try:
            if key in _LIST_KEYS:
                kwargs[key] = tuple(float(v) for v in str(value).split(",") if v.strip())
            elif key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _STR_KEYS:
                kwargs[key] = str(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return ExperimentConfig(**kwargs)


def init_beta0(rows: np.ndarray, b: int, seed) -> np.ndarray:
    """Column means of b rows sampled uniformly without replacement."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValueError("need a nonempty 2-d row matrix")
    if not (1 <= b <= rows.shape[0]):
        raise ValueError(f"sample size {b} not in [1, {rows.shape[0]}]")
    idx = np.random.default_rng(seed).choice(rows.shape[0], size=b, replace=False)
    return rows[idx].mean(axis=0)


def adversary_size(labels: np.ndarray, rho: float, adversarial_class: int = 1) -> int:
    """m = round(rho * adversarial-class row count), at least 1 (half rounds up)."""
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    count = int(np.sum(np.asarray(labels) == adversarial_class))
    return max(1, int(np.floor(rho * count + 0.5)))


@dataclass(frozen=True)
class Pipeline:
    vocab: Vocabulary
    train: BowDataset
    tests: Dict[str, BowDataset]


def load_pipeline(config: ExperimentConfig) -> Pipeline:
    """Corpus TSV -> splits -> vocabulary -> encoded datasets."""
    if not config.corpus:
        raise ConfigError("no corpus path configured")
    try:
        records = read_corpus_tsv(config.corpus)
        train_recs, test_recs = chronological_split(records, SplitSpec(config.train_size))
        stop = read_stopwords(config.stopwords) if config.stopwords else set()
        vocab = build_vocabulary(train_recs, stop, config.q_target, config.count_mode)
        train = encode(train_recs, vocab)
        tests = {period: encode(recs, vocab) for period, recs in test_recs.items()}
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    return Pipeline(vocab, train, tests)


class MetricsRow:
    __slots__ = ("config_id", "period", "rho", "mu", "seed", "counts", "p4", "f1")

    def __init__(self, config_id, period, rho, mu, seed, counts: ConfusionCounts):
        self.config_id = config_id
        self.period = period
        self.rho = rho
        self.mu = mu
        self.seed = seed
        self.counts = counts
        self.p4 = p4_score(counts)
        self.f1 = f1_score(counts)

    def as_csv(self) -> str:
        c = self.counts
        return (f"{self.config_id},{self.period},{self.rho!r},{self.mu!r},{self.seed},"
                f"{c.tp},{c.tn},{c.fp},{c.fn},{self.p4!r},{self.f1!r}")


@dataclass
class CellResult:
    config_id: str
    rho: float
    mu: float
    zeta0: float
    restart: int
    state: SolverState
    weights: np.ndarray

    def as_csv(self) -> str:
        return (f"{self.config_id},{self.rho!r},{self.mu!r},{self.zeta0!r},{self.restart},"
                f"{self.state.status.value},{self.state.iterations},{self.state.residual_sq!r}")


@dataclass
class SweepResult:
    metrics: List[MetricsRow] = field(default_factory=list)
    cells: List[CellResult] = field(default_factory=list)
    baseline_weights: Dict[str, np.ndarray] = field(default_factory=dict)

    def all_cells_stalled(self) -> bool:
        return bool(self.cells) and all(c.state.status == SolveStatus.STALLED for c in self.cells)


def _evaluate_periods(rows_id, w, tests, rho, mu, seed) -> List[MetricsRow]:
    out = []
    for period, ds in tests.items():
        counts = confusion(classify(w, ds.X), ds.y)
        out.append(MetricsRow(rows_id, period, rho, mu, seed, counts))
    return out


def run_baseline_cells(config: ExperimentConfig, pipeline: Pipeline) -> SweepResult:
    """Static-data-only logistic regression, one cell per mu value."""
    result = SweepResult()
    for mu in config.mu:
        cfg = BaselineConfig(mu=mu, max_iter=config.baseline_max_iter,
                             grad_tol=config.baseline_grad_tol)
        fit = train_baseline(pipeline.train, cfg)
        cell_id = f"baseline_mu{mu:g}"
        result.baseline_weights[cell_id] = fit.weights
        result.metrics.extend(
            _evaluate_periods(cell_id, fit.weights, pipeline.tests, 0.0, mu, config.seed))
    return result


def run_bilevel_cells(config: ExperimentConfig, pipeline: Pipeline) -> SweepResult:
    """Solve one stationarity system per (rho, mu, zeta0, restart) cell."""
    train = pipeline.train
    q = train.q
    adv_mask = train.y == config.adversarial_class
    n_adv = int(adv_mask.sum())
    if n_adv == 0:
        raise DataError("training split has no adversarial-class rows")
    adv_rows = train.X[adv_mask]
    lm_cfg = config.lm_config()
    result = SweepResult()
    for rho in config.rho:
        m = adversary_size(train.y, rho, config.adversarial_class)
        z = draw_noise(np.random.default_rng([config.seed, _Z_TAG, m]), m, q)
        gamma = np.full(m, float(config.adversarial_class))
        for mu, zeta0, restart in product(config.mu, config.zeta0, range(config.beta0_restarts)):
            beta0 = init_beta0(adv_rows, min(config.beta0_size, n_adv),
                               [config.seed, _BETA_TAG, restart])
            theta0 = np.concatenate([np.full(q, config.alpha0), beta0])
            problem = BilevelProblem(train, z, gamma, mu)
            state = solve_stationarity(problem, np.zeros(q), theta0, zeta0, lm_cfg)
            w = state.point[:q]
            cell_id = f"rho{rho:g}_mu{mu:g}_z{zeta0:g}_b{restart}"
            result.cells.append(CellResult(cell_id, rho, mu, zeta0, restart, state, w))
            result.metrics.extend(
                _evaluate_periods(cell_id, w, pipeline.tests, rho, mu, config.seed))
    return result


def run_sweep(config: ExperimentConfig, include_baseline: bool = True) -> SweepResult:
    pipeline = load_pipeline(config)
    result = run_bilevel_cells(config, pipeline)
    if include_baseline:
        base = run_baseline_cells(config, pipeline)
        result.metrics.extend(base.metrics)
        result.baseline_weights.update(base.baseline_weights)
    return result


# ---------------------------------------------------------------------------
# output writing
# ---------------------------------------------------------------------------

def write_metrics_csv(rows: Sequence[MetricsRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")


def write_cells_csv(cells: Sequence[CellResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CELLS_HEADER + "\n")
        for cell in cells:
            fh.write(cell.as_csv() + "\n")


def write_trace_csv(state: SolverState, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for rec in state.trace:
            fh.write(f"{rec.iteration},{rec.residual_sq!r},{rec.eta!r},"
                     f"{rec.omega!r},{int(rec.accepted)}\n")


def write_weights(w: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in np.asarray(w, dtype=float):
            fh.write(f"{v!r}\n")


def write_sweep_outputs(result: SweepResult, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.metrics, outdir / "metrics.csv")
    write_cells_csv(result.cells, outdir / "cells.csv")
    for cell in result.cells:
        write_trace_csv(cell.state, outdir / f"trace_{cell.config_id}.csv")
        write_weights(cell.weights, outdir / f"weights_{cell.config_id}.txt")
    for cell_id, w in result.baseline_weights.items():
        write_weights(w, outdir / f"weights_{cell_id}.txt")


# ---------------------------------------------------------------------------
# figure data
# ---------------------------------------------------------------------------

def generator_curve_rows(alphas: Sequence[float] = (1.0, 5.0, 10.0, 50.0, 100.0, 1000.0),
                         betas: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9),
                         n_grid: int = 201,
                         fixed_beta: float = 0.5,
                         fixed_alpha: float = 100.0):
    """Smoothed-step curve families: vary slope at fixed threshold and vice versa.

    Returns (header, rows) with rows (family, param, v, t).
    """
    from .generator import smooth_step

    v = np.linspace(0.0, 1.0, n_grid)
    rows = []
    for a in alphas:
        for vi, ti in zip(v, smooth_step(v, a, fixed_beta)):
            rows.append(("alpha", a, vi, ti))
    for b in betas:
        for vi, ti in zip(v, smooth_step(v, fixed_alpha, b)):
            rows.append(("beta", b, vi, ti))
    return "family,param,v,t", rows


def nonconvexity_surface_rows(w: float = 10.0, z_value: float = 0.5, gamma: float = 1.0,
                              mu: float = 0.1,
                              alpha_grid: Optional[np.ndarray] = None,
                              beta_grid: Optional[np.ndarray] = None):
    """Follower objective on an (alpha, beta) grid for a 1-feature instance.

    The default grid is symmetric under (alpha, beta) -> (-alpha, 2 z - beta)
    and contains the twin minima of the generated-sample loss, making the
    two mirrored basins visible.  Returns (header, rows) with rows
    (alpha, beta, f).
    """
    from .generator import GeneratorParams, NoiseMatrix
    from .objectives import lower_objective

    if alpha_grid is None:
        alpha_grid = np.linspace(-10.0, 10.0, 81)
    if beta_grid is None:
        beta_grid = np.linspace(2.0 * z_value - 1.5, 1.5, 81)
    z = NoiseMatrix(np.array([[z_value]]))
    g = np.array([gamma])
    w_vec = np.array([w])
    rows = []
    for a in alpha_grid:
        for b in beta_grid:
            f = lower_objective(w_vec, z, GeneratorParams([a], [b]), g, mu)
            rows.append((a, b, f))
    return "alpha,beta,f", rows


def write_rows_csv(header: str, rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def read_metrics_csv(path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != METRICS_HEADER:
            raise DataError(f"{path}: unexpected metrics header {header!r}")
        names = header.split(",")
        return [dict(zip(names, line.rstrip("\n").split(","))) for line in fh if line.strip()]


def report_table(metrics_paths: Sequence) -> Tuple[str, List[str]]:
    """Join metrics CSVs into a per-period comparison of P4 scores.

    One row per period, one column per config plus the best non-baseline
    cell, since no single cell is canonical.
    """
    scores: Dict[Tuple[str, str], float] = {}
    for path in metrics_paths:
        for row in read_metrics_csv(path):
            scores[(row["period"], row["config_id"])] = float(row["p4"])
    periods = sorted({k[0] for k in scores})
    configs = sorted({k[1] for k in scores})
    header = "period," + ",".join(configs) + ",best_config,best_p4"
    lines = []
    for period in periods:
        cells = [scores.get((period, cfg)) for cfg in configs]
        rendered = [("" if v is None else repr(v)) for v in cells]
        candidates = [(cfg, scores[(period, cfg)]) for cfg in configs
                      if not cfg.startswith("baseline") and (period, cfg) in scores]
        if candidates:
            best_cfg, best_p4 = max(candidates, key=lambda kv: (kv[1], kv[0]))
            lines.append(f"{period}," + ",".join(rendered) + f",{best_cfg},{best_p4!r}")
        else:
            lines.append(f"{period}," + ",".join(rendered) + ",,")
    return header, lines
