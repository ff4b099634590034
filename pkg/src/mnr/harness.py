"""Monte Carlo runners for the four simulation protocols.

Every replicate draws from its own stream keyed by
``(experiment index, n, replicate, purpose)``, so tables do not depend on
replicate order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .errors import DisconnectedError, NonPositiveDenominator
from .rdpg import curve_diag_line, curve_hardy_weinberg, sample_rdpg, sample_scenario
from .regression import (
    VarianceProfile,
    adjusted_estimator,
    embed_unknown_manifold,
    estimate_gamma_delta_method,
    naive_slope,
    ols_fit,
    predict,
    predict_from_embedding,
    project_points,
)
from .spectral import ase_undirected, procrustes_align
from .stats import RngStream, f_quantile

log = logging.getLogger(__name__)

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ModelParams",
    "LambdaSchedule",
    "ExperimentConfig",
    "ResultTable",
    "default_config",
    "run_experiment",
    "run_fig3",
    "run_fig4",
    "run_fig5",
    "run_fig8",
    "fig8_medians",
    "write_atomic",
]

EXPERIMENTS = ("fig3", "fig4", "fig5", "fig8")

_MAIN, _PILOT = 0, 1


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float
    sigma_eps: float


@dataclass(frozen=True)
class LambdaSchedule:
    """``lam = base * decay**(K - 1)`` where n is the K-th grid value.

    With ``start`` and ``step`` set, K is measured on the grid
    ``start, start + step, ...`` so a thinned grid keeps the full-grid values.
    Otherwise K is the position of n in the configured ``n_grid``.
    """

    base: float
    decay: float
    start: Optional[int] = None
    step: Optional[int] = None

    def at(self, n, n_grid):
        if self.start is not None and self.step:
            k = (n - self.start) / self.step
        else:
            k = list(n_grid).index(n)
        return self.base * self.decay**k


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    n_grid: tuple
    replicates: int
    master_seed: int
    model: ModelParams
    s: int
    l: int
    lambda_schedule: LambdaSchedule
    subset_fraction: float
    d: int
    level: float = 0.05
    pilot_replicates: int = 100
    noiseless: bool = False

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment_id!r}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.n_grid or any(int(n) < 1 for n in self.n_grid):
            raise ConfigError("n_grid must be a non-empty list of positive counts")
        if not self.lambda_schedule.base > 0 or not 0 < self.lambda_schedule.decay <= 1:
            raise ConfigError("lambda_schedule needs base > 0 and 0 < decay <= 1")
        if not 0 < self.subset_fraction <= 1:
            raise ConfigError("subset_fraction must lie in (0, 1]")
        if self.d < 1 or self.master_seed < 0 or self.pilot_replicates < 0:
            raise ConfigError("d must be >= 1; master_seed and pilot_replicates >= 0")
        if not self.model.sigma_eps > 0:
            raise ConfigError("model.sigma_eps must be positive")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.experiment_id in ("fig4", "fig5"):
            if self.s < 3 or self.l < self.s:
                raise ConfigError("need s >= 3 and l >= s")
            if self.experiment_id == "fig4" and self.l <= self.s:
                raise ConfigError("fig4 predicts at node s, so l must exceed s")
            if min(self.n_grid) < self.l:
                raise ConfigError("every n must be at least l")

    @property
    def index(self):
        return EXPERIMENTS.index(self.experiment_id)

    def to_dict(self):
        out = asdict(self)
        out["n_grid"] = list(self.n_grid)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def sha256(self):
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            model = data["model"]
            sched = data["lambda_schedule"]
            if isinstance(model, dict):
                data["model"] = ModelParams(**{k: float(v) for k, v in model.items()})
            if isinstance(sched, dict):
                data["lambda_schedule"] = LambdaSchedule(**sched)
            data["n_grid"] = tuple(int(n) for n in data["n_grid"])
            for key in ("replicates", "master_seed", "s", "l", "d", "pilot_replicates"):
                if key in data:
                    data[key] = int(data[key])
            return cls(**data)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


_FULL = {
    "fig3": dict(
        n_grid=tuple(range(600, 2501, 100)), replicates=100,
        model=ModelParams(2.0, 5.0, 0.1), s=0, l=0,
        lambda_schedule=LambdaSchedule(1.0, 1.0), subset_fraction=1.0, d=3,
    ),
    "fig4": dict(
        n_grid=tuple(range(500, 3001, 250)), replicates=100,
        model=ModelParams(2.0, 5.0, 0.01), s=20, l=21,
        lambda_schedule=LambdaSchedule(0.8, 0.99, start=500, step=250),
        subset_fraction=0.1, d=1,
    ),
    "fig5": dict(
        n_grid=tuple(range(100, 1001, 50)), replicates=100,
        model=ModelParams(2.0, 5.0, 3.0), s=20, l=20,
        lambda_schedule=LambdaSchedule(0.9, 0.99, start=100, step=50),
        subset_fraction=0.1, d=1,
    ),
    "fig8": dict(
        n_grid=(800,), replicates=100,
        model=ModelParams(0.0, 5.0, 0.1), s=0, l=0,
        lambda_schedule=LambdaSchedule(1.0, 1.0), subset_fraction=1.0, d=3,
        pilot_replicates=100,
    ),
}

_ACCEPTANCE = {
    "fig3": dict(n_grid=(600, 1200, 2500), replicates=50),
    "fig4": dict(n_grid=(500, 1500, 3000), replicates=50),
    "fig5": dict(n_grid=(100, 550, 1000), replicates=100),
    "fig8": dict(n_grid=(800,), replicates=100),
}


def default_config(experiment_id, grid="acceptance", master_seed=0):
    """Protocol defaults; ``grid="full"`` gives the complete n grids."""
    if experiment_id not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment_id!r}")
    if grid not in ("acceptance", "full"):
        raise ConfigError(f"grid must be 'acceptance' or 'full', got {grid!r}")
    params = dict(_FULL[experiment_id])
    if grid == "acceptance":
        params.update(_ACCEPTANCE[experiment_id])
    return ExperimentConfig(experiment_id=experiment_id, master_seed=master_seed, **params)


# --- result tables ----------------------------------------------------------


@dataclass
class ResultTable:
    columns: tuple
    rows: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("ragged result table")

    def column(self, name):
        k = self.columns.index(name)
        return np.array([row[k] for row in self.rows], dtype=float)

    def row_for(self, n):
        k = self.columns.index("n")
        for row in self.rows:
            if row[k] == n:
                return dict(zip(self.columns, row))
        raise KeyError(n)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temp file and rename; no partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- replicates -------------------------------------------------------------


def _stream(cfg, n, rep, purpose=_MAIN):
    return RngStream(cfg.master_seed, (cfg.index, n, rep, purpose))


def _graph(X, cfg, stream):
    return X @ X.T if cfg.noiseless else sample_rdpg(X, stream)


def _aligned_regressors(cfg, n, rep, purpose, curve):
    stream = _stream(cfg, n, rep, purpose)
    m = cfg.model
    sc, X = sample_scenario(curve, n, n, m.alpha, m.beta, m.sigma_eps, stream)
    X_hat = ase_undirected(_graph(X, cfg, stream), cfg.d)
    _, X_tilde = procrustes_align(X_hat, X)
    return sc, X_tilde, project_points(curve, X_tilde)


def _rep_fig3(cfg, n, rep):
    m = cfg.model
    sc, _, t_hat = _aligned_regressors(cfg, n, rep, _MAIN, curve_hardy_weinberg())
    true = ols_fit(sc.t, sc.y)
    sub = ols_fit(t_hat, sc.y)
    err_true = (true.alpha_hat - m.alpha) ** 2 + (true.beta_hat - m.beta) ** 2
    err_sub = (sub.alpha_hat - m.alpha) ** 2 + (sub.beta_hat - m.beta) ** 2
    return err_true, err_sub


def _unknown_manifold_rep(cfg, n, rep):
    m = cfg.model
    stream = _stream(cfg, n, rep)
    sc, X = sample_scenario(curve_diag_line(), n, cfg.s, m.alpha, m.beta, m.sigma_eps, stream)
    A = _graph(X, cfg, stream)
    lam = cfg.lambda_schedule.at(n, cfg.n_grid)
    graph_nodes = min(n, max(cfg.l, math.ceil(n * cfg.subset_fraction)))
    try:
        emb = embed_unknown_manifold(A, cfg.d, lam, cfg.l, graph_nodes)
    except DisconnectedError:
        return sc, None
    return sc, emb.z


def _rep_fig4(cfg, n, rep):
    sc, z = _unknown_manifold_rep(cfg, n, rep)
    if z is None:
        return None
    s = cfg.s
    y_true = float(predict(ols_fit(sc.t[:s], sc.y), sc.t[s]))
    y_sub = predict_from_embedding(z, sc.y, s)
    return (y_sub - y_true) ** 2


def _rep_fig5(cfg, n, rep):
    sc, z = _unknown_manifold_rep(cfg, n, rep)
    if z is None:
        return None
    s = cfg.s
    crit = f_quantile(1.0 - cfg.level, 1, s - 2)
    f_true = _f_or_inf(sc.y, ols_fit(sc.t[:s], sc.y).fitted, s)
    f_sub = _f_or_inf(sc.y, ols_fit(z[:s], sc.y).fitted, s)
    return f_true > crit, f_sub > crit


def _f_or_inf(y, y_hat, s):
    y_bar = y.mean()
    sse = float(np.sum((y - y_hat) ** 2))
    ssr = float(np.sum((y_hat - y_bar) ** 2))
    return math.inf if sse == 0.0 else (s - 2) * ssr / sse


def _pilot_errors(cfg, n, rep):
    sc, _, t_hat = _aligned_regressors(cfg, n, rep, _PILOT, curve_hardy_weinberg())
    return t_hat - sc.t


def _rep_fig8(cfg, n, rep, gamma_pilot):
    curve = curve_hardy_weinberg()
    sc, X_tilde, t_hat = _aligned_regressors(cfg, n, rep, _MAIN, curve)
    beta = cfg.model.beta
    out = [
        (naive_slope(sc.t, sc.y) - beta) ** 2,
        (naive_slope(t_hat, sc.y) - beta) ** 2,
    ]
    gamma_hat = estimate_gamma_delta_method(X_tilde, curve, t_hat)
    for gamma in (gamma_pilot, gamma_hat):
        try:
            out.append((adjusted_estimator(t_hat, sc.y, gamma) - beta) ** 2)
        except NonPositiveDenominator:
            out.append(math.nan)
    return tuple(out)


def _call(args):
    fn, cfg, n, rep, extra = args
    return fn(cfg, n, rep, *extra)


def _map(fn, cfg, tasks, workers, extra=()):
    jobs = [(fn, cfg, n, rep, extra) for n, rep in tasks]
    if workers <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _provenance(cfg):
    return {"config_sha256": cfg.sha256(), "code_version": __version__, "config": cfg.to_dict()}


def _expect(cfg, name):
    if cfg.experiment_id != name:
        raise ConfigError(f"config is for {cfg.experiment_id}, not {name}")


def run_fig3(cfg, workers=1):
    """Known manifold: MSE of (alpha, beta) estimates from true vs projected regressors."""
    _expect(cfg, "fig3")
    rows = []
    for n in cfg.n_grid:
        res = np.array(_map(_rep_fig3, cfg, [(n, r) for r in range(cfg.replicates)], workers))
        rows.append((n, float(res[:, 0].mean()), float(res[:, 1].mean())))
        log.info("fig3 n=%d mse_true=%.4g mse_sub=%.4g", *rows[-1])
    return ResultTable(("n", "mse_true", "mse_sub"), rows, _provenance(cfg))


def run_fig4(cfg, workers=1):
    """Unknown manifold: mean squared gap between embedding-based and true-regressor predictions."""
    _expect(cfg, "fig4")
    rows = []
    for n in cfg.n_grid:
        res = _map(_rep_fig4, cfg, [(n, r) for r in range(cfg.replicates)], workers)
        ok = [v for v in res if v is not None]
        mse = float(np.mean(ok)) if ok else math.nan
        lam = cfg.lambda_schedule.at(n, cfg.n_grid)
        rows.append((n, lam, mse, len(ok), len(res) - len(ok)))
        log.info("fig4 n=%d lambda=%.4g mse_pred=%.4g used=%d skipped=%d", *rows[-1])
    return ResultTable(("n", "lambda", "mse_pred", "replicates_used", "skipped"), rows, _provenance(cfg))


def run_fig5(cfg, workers=1):
    """Empirical powers of the F test on true regressors vs raw-stress embeddings."""
    _expect(cfg, "fig5")
    rows = []
    for n in cfg.n_grid:
        res = _map(_rep_fig5, cfg, [(n, r) for r in range(cfg.replicates)], workers)
        ok = np.array([v for v in res if v is not None], dtype=float).reshape(-1, 2)
        p_true, p_sub = (ok.mean(axis=0) if len(ok) else (math.nan, math.nan))
        lam = cfg.lambda_schedule.at(n, cfg.n_grid)
        rows.append((n, lam, float(p_true), float(p_sub), float(p_sub - p_true), len(ok), len(res) - len(ok)))
        log.info("fig5 n=%d lambda=%.4g power_true=%.3f power_sub=%.3f diff=%.3f used=%d skipped=%d", *rows[-1])
    cols = ("n", "lambda", "power_true", "power_sub", "power_diff", "replicates_used", "skipped")
    return ResultTable(cols, rows, _provenance(cfg))


def run_fig8(cfg, workers=1):
    """Squared slope errors: true, naive, pilot-adjusted and delta-method-adjusted estimators."""
    _expect(cfg, "fig8")
    rows = []
    for n in cfg.n_grid:
        if cfg.pilot_replicates > 0:
            errs = np.array(_map(_pilot_errors, cfg, [(n, b) for b in range(cfg.pilot_replicates)], workers))
            ddof = 1 if cfg.pilot_replicates > 1 else 0
            gamma_pilot = VarianceProfile(errs.var(axis=0, ddof=ddof))
        else:
            gamma_pilot = VarianceProfile(np.zeros(n))
        res = _map(_rep_fig8, cfg, [(n, r) for r in range(cfg.replicates)], workers, (gamma_pilot,))
        for rep, vals in enumerate(res):
            rows.append((n, rep) + tuple(float(v) for v in vals))
        log.info("fig8 n=%d sum_gamma_pilot=%.4g", n, gamma_pilot.total)
    cols = ("n", "replicate", "se_true", "se_naive", "se_adj_sigma", "se_adj_sigmahat")
    return ResultTable(cols, rows, _provenance(cfg))


_RUNNERS = {"fig3": run_fig3, "fig4": run_fig4, "fig5": run_fig5, "fig8": run_fig8}


def run_experiment(cfg, workers=1):
    return _RUNNERS[cfg.experiment_id](cfg, workers)


def fig8_medians(table):
    """Median squared error per estimator, excluding over-corrected (NaN) replicates."""
    out = {}
    for col in ("se_true", "se_naive", "se_adj_sigma", "se_adj_sigmahat"):
        v = table.column(col)
        keep = v[np.isfinite(v)]
        out[col] = float(np.median(keep)) if keep.size else math.nan
        out[col + "_excluded"] = int(v.size - keep.size)
    return out
