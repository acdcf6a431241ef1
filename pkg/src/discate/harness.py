"""Monte Carlo engine for RMSE-versus-dimension studies.

For every grid cell ``(n, γ)`` the harness sets ``d = ⌊n^γ⌋``, draws ``M``
datasets from the simulation model, applies one estimator per dataset and
aggregates RMSE, bias and variance against the population target.

Reproducibility: replication ``m`` of the cell ``(n, γ_j)`` always uses the
stream ``(master_seed, (n, j, m, ·))``, and aggregation runs over the
replication-ordered array, so a table does not depend on how cells are
distributed across worker processes.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import estimators as est
from .bounds import rate_curve
from .model import ModelClassParams, ModelSpec, population_estimands
from .sampling import Dataset, DatasetSampler, SeedSpec, tabulate, uniform_sim_model

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAX_D = 10**7

COUNT_ESTIMATORS = ("plugin", "homog")
FIRST_ORDER_ESTIMATORS = ("reg", "ipw", "dr")
SECOND_ORDER_ESTIMATORS = ("eta2", "rho2", "wate2", "ate2")
ESTIMATORS = COUNT_ESTIMATORS + FIRST_ORDER_ESTIMATORS + SECOND_ORDER_ESTIMATORS

# nuisance modes a harness estimator accepts; the first entry is the default
NUISANCE_MODES = {
    **{e: ("empirical",) for e in COUNT_ESTIMATORS},
    **{e: ("empirical", "split", "external") for e in FIRST_ORDER_ESTIMATORS},
    **{e: ("zero", "split", "external") for e in SECOND_ORDER_ESTIMATORS},
}

MODEL_FAMILIES: dict[str, Callable[[int], ModelSpec]] = {"uniform-sim": uniform_sim_model}

HEADER = ("n", "d", "gamma", "estimator", "M", "rmse", "bias", "variance", "mc_se_rmse")


def fmt(value: float | int) -> str:
    """Shortest round-trip text for a number; integral floats print without ``.0``."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if value == 0.0:
        return "0"
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def dimension(n: int, gamma: float) -> int:
    """``⌊n^γ⌋``, guarded against ``pow`` landing just below an integer."""
    raw = float(n) ** gamma
    d = math.floor(raw)
    if raw - d > 1.0 - 1e-9 * max(1.0, raw):
        d += 1
    return max(int(d), 1)


def gamma_grid(start: float, stop: float, step: float = 0.05) -> list[float]:
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def target_value(estimator_id: str, model: ModelSpec) -> float:
    t = population_estimands(model)
    return {"eta2": t.eta, "rho2": t.rho, "wate2": t.theta}.get(estimator_id, t.psi)


def fixed_nuisances(model: ModelSpec, nuisance_mode: str) -> Optional[est.NuisanceEstimates]:
    """Data-independent nuisances for ``zero``/``external`` modes, else None."""
    if nuisance_mode == "zero":
        return est.zeroed_nuisances(model.p)
    if nuisance_mode == "external":
        return est.true_nuisances(model)
    return None


def estimate_once(estimator_id: str, dataset: Dataset, model: ModelSpec, nuisance_mode: str,
                  seed: SeedSpec, epsilon: float = 0.1,
                  nuis: Optional[est.NuisanceEstimates] = None) -> float:
    """Apply one estimator to one simulated dataset and return the point estimate.

    ``seed`` drives the sample split in ``split`` mode only. ``nuis`` may
    carry precomputed data-independent nuisances (see :func:`fixed_nuisances`).
    """
    if estimator_id in COUNT_ESTIMATORS:
        s = tabulate(dataset, compact=True)
        arrays = (s.count_x, s.count_x_treated, s.count_x_treated_y1, s.count_x_untreated_y1)
        if estimator_id == "plugin":
            psi1, psi0 = est.plugin_arms(*arrays)
            return float(psi1 - psi0)
        return float(est.homogeneity_arrays(*arrays)[0])

    if nuisance_mode == "split":
        nuis, data = est.split_nuisances(dataset, seed)
    elif nuisance_mode in ("zero", "external"):
        data = dataset
        if nuis is None:
            nuis = fixed_nuisances(model, nuisance_mode)
    elif nuisance_mode == "empirical":
        nuis, data = est.empirical_nuisances(dataset), dataset
    else:
        raise ValueError(f"unknown nuisance mode {nuisance_mode!r}")

    if estimator_id == "reg":
        return est.reg_ate(data, nuis).value
    if estimator_id == "ipw":
        return est.ipw_ate(data, nuis).value
    if estimator_id == "dr":
        return est.dr_ate(data, nuis).value
    if estimator_id == "eta2":
        return est.second_order_eta(data, nuis).value
    if estimator_id == "rho2":
        return est.second_order_rho(data, nuis).value
    if estimator_id == "wate2":
        return est.second_order_wate(data, nuis, ModelClassParams(epsilon), clamp=True).value
    if estimator_id == "ate2":
        return est.second_order_ate(data, nuis, arm=None).value
    raise ValueError(f"unknown estimator {estimator_id!r}")


@dataclass
class ExperimentConfig:
    estimator_id: str
    n_list: list[int]
    gamma_list: list[float]
    M: int
    master_seed: int = 0
    model_family: str = "uniform-sim"
    nuisance_mode: Optional[str] = None
    overlay: Optional[float] = None
    epsilon: float = 0.1
    max_d: int = MAX_D

    def __post_init__(self) -> None:
        if self.estimator_id not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator_id!r}; choose from {ESTIMATORS}")
        if self.nuisance_mode is None:
            self.nuisance_mode = NUISANCE_MODES[self.estimator_id][0]
        if self.nuisance_mode not in NUISANCE_MODES[self.estimator_id]:
            raise ValueError(f"estimator {self.estimator_id} does not accept nuisance mode "
                             f"{self.nuisance_mode!r}; allowed {NUISANCE_MODES[self.estimator_id]}")
        if self.model_family not in MODEL_FAMILIES:
            raise ValueError(f"unknown model family {self.model_family!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")
        if not self.n_list or not self.gamma_list:
            raise ValueError("n_list and gamma_list must be non-empty")
        self.n_list = [int(n) for n in self.n_list]
        self.gamma_list = [float(g) for g in self.gamma_list]
        if any(n < 2 for n in self.n_list):
            raise ValueError("every n must be at least 2")
        if any(g < 0 for g in self.gamma_list):
            raise ValueError("gamma values must be non-negative")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.overlay is not None and self.overlay <= 0:
            raise ValueError("overlay constant must be positive")
        ModelClassParams(self.epsilon)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: PathLike) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ResultRow:
    n: int
    d: int
    gamma: float
    estimator: str
    M: int
    rmse: float
    bias: float
    variance: float
    mc_se_rmse: float
    failed: int = 0
    bound: Optional[float] = None
    ratio: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.M > 0


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    @property
    def has_overlay(self) -> bool:
        return any(r.bound is not None for r in self.rows)

    def row(self, n: int, gamma: float) -> ResultRow:
        for r in self.rows:
            if r.n == n and abs(r.gamma - gamma) < 1e-9:
                return r
        raise KeyError((n, gamma))

    def to_csv(self) -> str:
        cols = HEADER + (("bound", "ratio") if self.has_overlay else ())
        lines = [",".join(cols)]
        for r in self.rows:
            vals = [fmt(r.n), fmt(r.d), fmt(r.gamma), r.estimator, fmt(r.M), fmt(r.rmse),
                    fmt(r.bias), fmt(r.variance), fmt(r.mc_se_rmse)]
            if self.has_overlay:
                vals += [fmt(r.bound) if r.bound is not None else "nan",
                         fmt(r.ratio) if r.ratio is not None else "nan"]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def write(self, path: PathLike) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read(cls, path: PathLike) -> "ResultTable":
        lines = Path(path).read_text().splitlines()
        cols = lines[0].split(",")
        rows = []
        for line in lines[1:]:
            rec = dict(zip(cols, line.split(",")))
            rows.append(ResultRow(
                n=int(rec["n"]), d=int(rec["d"]), gamma=float(rec["gamma"]),
                estimator=rec["estimator"], M=int(rec["M"]), rmse=float(rec["rmse"]),
                bias=float(rec["bias"]), variance=float(rec["variance"]),
                mc_se_rmse=float(rec["mc_se_rmse"]),
                bound=float(rec["bound"]) if "bound" in rec else None,
                ratio=float(rec["ratio"]) if "ratio" in rec else None,
            ))
        return cls(rows)


def summarize(estimates: np.ndarray, truth: float) -> tuple[float, float, float, float]:
    """``(rmse, bias, variance, mc_se_rmse)`` for replication-ordered estimates.

    The Monte Carlo standard error of the RMSE is the delta-method value
    ``sd(e²) / (2·sqrt(M)·rmse)`` with ``e = estimate − truth``.
    """
    e = np.asarray(estimates, dtype=np.float64) - truth
    m = e.size
    mean = float(np.mean(estimates))
    bias = mean - truth
    variance = float(np.mean((np.asarray(estimates) - mean) ** 2))
    m2 = float(np.mean(e**2))
    rmse = math.sqrt(m2)
    var_e2 = max(float(np.mean(e**4)) - m2 * m2, 0.0)
    mc_se = math.sqrt(var_e2 / m) / (2.0 * rmse) if rmse > 0 else 0.0
    return rmse, bias, variance, mc_se


def run_cell(n: int, gamma: float, estimator_id: str, M: int, master_seed: int,
             model: Optional[ModelSpec] = None, truth: Optional[float] = None,
             nuisance_mode: Optional[str] = None, cell_key: Sequence[int] = (),
             epsilon: float = 0.1, max_d: int = MAX_D) -> ResultRow:
    """Run ``M`` replications of one grid cell.

    Replication ``m`` draws its data from stream ``cell_key + (m, 0)`` and,
    in split mode, splits with ``cell_key + (m, 1)``. Replications whose
    estimator raises are excluded and counted in ``failed``.
    """
    d = dimension(n, gamma)
    if nuisance_mode is None:
        nuisance_mode = NUISANCE_MODES[estimator_id][0]
    if d > max_d:
        log.warning("cell n=%d gamma=%s has d=%d above the cap %d; skipped", n, gamma, d, max_d)
        return ResultRow(n, d, gamma, estimator_id, 0, math.nan, math.nan, math.nan, math.nan, failed=M)
    if model is None:
        model = uniform_sim_model(d)
    if truth is None:
        truth = target_value(estimator_id, model)
    sampler = DatasetSampler(model)
    nuis = None if estimator_id in COUNT_ESTIMATORS else fixed_nuisances(model, nuisance_mode)
    base = SeedSpec(master_seed, tuple(cell_key) if cell_key else (0,))
    values = np.empty(M)
    ok = np.zeros(M, dtype=bool)
    for m in range(M):
        data = sampler.draw(n, base.child(m, 0))
        try:
            values[m] = estimate_once(estimator_id, data, model, nuisance_mode,
                                      base.child(m, 1), epsilon, nuis)
            ok[m] = True
        except (ValueError, ZeroDivisionError) as exc:
            log.debug("cell n=%d gamma=%s rep %d failed: %s", n, gamma, m, exc)
    failed = int(M - ok.sum())
    if failed == M:
        return ResultRow(n, d, gamma, estimator_id, 0, math.nan, math.nan, math.nan, math.nan, failed=M)
    rmse, bias, variance, mc_se = summarize(values[ok], truth)
    return ResultRow(n, d, gamma, estimator_id, int(ok.sum()), rmse, bias, variance, mc_se, failed=failed)


def _cell_task(args) -> ResultRow:
    config, n, gi = args
    return run_cell(n, config.gamma_list[gi], config.estimator_id, config.M, config.master_seed,
                    nuisance_mode=config.nuisance_mode, cell_key=(n, gi),
                    epsilon=config.epsilon, max_d=config.max_d)


def run_grid(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Run every ``(n, γ)`` cell; rows are sorted by ``(n, γ)``."""
    tasks = [(config, n, gi) for n in sorted(set(config.n_list))
             for gi in sorted(range(len(config.gamma_list)), key=lambda i: config.gamma_list[i])]
    if workers <= 1:
        rows = [_cell_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_cell_task, tasks))
    table = ResultTable(rows)
    if config.overlay is not None:
        table = overlay_curve(table, config.overlay)
    return table


def overlay_curve(table: ResultTable, C: float) -> ResultTable:
    """Attach ``bound = C·n^(γ/2−1)`` and ``ratio = rmse / bound`` to every row."""
    rows = []
    for r in table.rows:
        bound = rate_curve(C, r.gamma, r.n)
        rows.append(replace(r, bound=bound, ratio=r.rmse / bound))
    return ResultTable(rows)


def write_plotdata(table: ResultTable, directory: PathLike) -> list[Path]:
    """Write one ``gamma,d,rmse[,bound]`` series file per sample size."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in sorted({r.n for r in table.rows}):
        rows = [r for r in table.rows if r.n == n]
        cols = ["gamma", "d", "rmse"] + (["bound"] if table.has_overlay else [])
        lines = [",".join(cols)]
        for r in rows:
            vals = [fmt(r.gamma), fmt(r.d), fmt(r.rmse)]
            if table.has_overlay:
                vals.append(fmt(r.bound) if r.bound is not None else "nan")
            lines.append(",".join(vals))
        path = out / f"series_{rows[0].estimator}_n{n}.csv"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths
