"""Randomised self-checks behind ``discate verify``.

* equivalence: with same-sample empirical nuisances the regression, IPW and
  DR estimators coincide with the plug-in estimator;
* U-statistic oracle: aggregated pair sums match the O(n²) double loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimators as est
from .model import ModelSpec
from .sampling import Dataset, SeedSpec, draw_dataset, tabulate

EQUIVALENCE_TOL = 1e-10
ORACLE_TOL = 1e-10


@dataclass
class CheckReport:
    name: str
    cases: int = 0
    max_error: float = 0.0
    failures: list[tuple[int, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def random_model(rng: np.random.Generator, d: int) -> ModelSpec:
    """Arbitrary model with frequent degenerate cells (zero mass, one-armed categories)."""
    alpha = rng.choice([0.2, 1.0, 5.0])
    p = rng.dirichlet(np.full(d, alpha))
    if d > 1 and rng.random() < 0.3:
        p[rng.random(d) < 0.3] = 0.0
        if p.sum() == 0:
            p[0] = 1.0
        p = p / p.sum()
    pi = rng.random(d)
    kind = rng.random(d)
    pi[kind < 0.15] = 0.0
    pi[kind > 0.85] = 1.0
    return ModelSpec(d=d, p=p, pi=pi, mu1=rng.random(d), mu0=rng.random(d))


def equivalence_case(case: int, master_seed: int = 0, max_d: int = 50, max_n: int = 200,
                     truncate: Optional[float] = None) -> float:
    """Largest gap between plug-in and reg/IPW/DR on one random dataset."""
    seed = SeedSpec(master_seed, (case, 0))
    rng = seed.generator()
    d = int(rng.integers(1, max_d + 1))
    n = int(rng.integers(1, max_n + 1))
    model = random_model(rng, d)
    data = draw_dataset(model, n, seed.child(1))
    nuis = est.empirical_nuisances(data)
    plugin = est.plugin_ate(tabulate(data)).value
    values = (
        est.reg_ate(data, nuis).value,
        est.ipw_ate(data, nuis, truncate=truncate).value,
        est.dr_ate(data, nuis, truncate=truncate).value,
    )
    return max(abs(v - plugin) for v in values)


def equivalence_suite(cases: int = 1000, master_seed: int = 0, truncate: Optional[float] = None,
                      stop_on_failure: bool = False) -> CheckReport:
    report = CheckReport("equivalence")
    for case in range(cases):
        err = equivalence_case(case, master_seed, truncate=truncate)
        report.cases += 1
        report.max_error = max(report.max_error, err)
        if not err < EQUIVALENCE_TOL:
            report.failures.append((case, err))
            if stop_on_failure:
                break
    return report


def _random_dataset(rng: np.random.Generator, max_n: int = 100) -> Dataset:
    n = int(rng.integers(2, max_n + 1))
    d = int(rng.integers(1, max(2, n // 2) + 1))
    return Dataset(d=d, x=rng.integers(1, d + 1, size=n), a=rng.integers(0, 2, size=n),
                   y=rng.integers(0, 2, size=n))


def _random_nuisances(rng: np.random.Generator, d: int) -> est.NuisanceEstimates:
    return est.external_nuisances(
        pi_hat=rng.uniform(0.05, 0.95, d), mu1_hat=rng.random(d), mu0_hat=rng.random(d),
        p_hat=rng.dirichlet(np.ones(d)) * 0.9 + 0.1 / d,
    )


def naive_second_order(data: Dataset, nuis: est.NuisanceEstimates, target: str) -> float:
    """Second-order estimate by an explicit double loop over ordered pairs ``i ≠ j``.

    ``target`` is ``'eta'``, ``'rho'``, ``'psi1'`` or ``'psi0'``. Kernels are
    written out term by term, independently of :func:`estimators.pair_sum`.
    """
    n = data.n
    x = data.x.tolist()
    a = data.a.tolist()
    y = data.y.tolist()
    pi = [float(nuis.pi_hat[k - 1]) for k in x]
    p = [float(nuis.p_hat[k - 1]) for k in x]
    mu = [float(nuis.mu_hat[k - 1]) for k in x]
    m1 = [float(nuis.mu1_hat[k - 1]) for k in x]
    m0 = [float(nuis.mu0_hat[k - 1]) for k in x]

    if target == "eta":
        first = [(a[i] - pi[i]) * (y[i] - mu[i]) for i in range(n)]
        g = lambda i, j: -(a[i] - pi[i]) * (y[j] - mu[j]) / p[i]  # noqa: E731
    elif target == "rho":
        first = [(a[i] - pi[i]) ** 2 for i in range(n)]
        g = lambda i, j: -(a[i] - pi[i]) * (a[j] - pi[j]) / p[i]  # noqa: E731
    elif target == "psi1":
        first = [a[i] * (y[i] - m1[i]) / pi[i] + m1[i] for i in range(n)]
        g = lambda i, j: -(a[i] / pi[i] - 1.0) / (p[i] * pi[j]) * a[j] * (y[j] - m1[j])  # noqa: E731
    elif target == "psi0":
        first = [(1 - a[i]) * (y[i] - m0[i]) / (1 - pi[i]) + m0[i] for i in range(n)]
        g = lambda i, j: (-((1 - a[i]) / (1 - pi[i]) - 1.0) / (p[i] * (1 - pi[j]))  # noqa: E731
                          * (1 - a[j]) * (y[j] - m0[j]))
    else:
        raise ValueError(target)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j and x[i] == x[j]:
                total += g(i, j)
    return sum(first) / n + total / (n * (n - 1))


def oracle_case(case: int, master_seed: int = 0) -> float:
    """Largest aggregated-vs-naive gap over η̂, ρ̂ and the ψ̂₁/ψ̂₀ second-order estimators."""
    rng = SeedSpec(master_seed, (case, 2)).generator()
    data = _random_dataset(rng)
    nuis = _random_nuisances(rng, data.d)
    fast = {
        "eta": est.second_order_eta(data, nuis).value,
        "rho": est.second_order_rho(data, nuis).value,
        "psi1": est.second_order_ate(data, nuis, arm=1).value,
        "psi0": est.second_order_ate(data, nuis, arm=0).value,
    }
    return max(abs(v - naive_second_order(data, nuis, t)) for t, v in fast.items())


def oracle_suite(cases: int = 200, master_seed: int = 0, stop_on_failure: bool = False) -> CheckReport:
    report = CheckReport("u_statistic_oracle")
    for case in range(cases):
        err = oracle_case(case, master_seed)
        report.cases += 1
        report.max_error = max(report.max_error, err)
        if not err < ORACLE_TOL:
            report.failures.append((case, err))
            if stop_on_failure:
                break
    return report
