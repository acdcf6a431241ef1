"""Point estimators of treatment effects with a discrete covariate.

Two kinds of input are used:

* :class:`~discate.sampling.SufficientStats` for estimators that only depend
  on per-category counts (plug-in, effect-homogeneity);
* a :class:`~discate.sampling.Dataset` plus :class:`NuisanceEstimates` for
  sample-average estimators (regression, IPW, DR, second-order U-statistics,
  influence-function intervals), where the nuisances may come from the same
  sample, an independent split, or an external source.

Every ratio goes through :func:`div00`, which implements ``0/0 = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Literal, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import ModelClassParams, ModelSpec
from .sampling import Dataset, SufficientStats, split_sample, tabulate

NuisanceSource = Literal["empirical", "zeroed", "external"]


def div00(num: ArrayLike, den: ArrayLike) -> NDArray[np.float64]:
    """Elementwise ``num / den`` with ``0/0 = 0``.

    A non-zero numerator over a zero denominator has no convention to fall
    back on and raises ``ZeroDivisionError``.
    """
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    zero = den == 0
    if np.any(zero & (num != 0)):
        raise ZeroDivisionError("non-zero numerator over zero denominator")
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=~zero)


@dataclass(frozen=True, eq=False)
class NuisanceEstimates:
    """Per-category nuisance values ``π̂_k, μ̂_1k, μ̂_0k, p̂_k`` (dense, length ``d``).

    ``n`` records the originating sample size for empirical estimates.
    """

    d: int
    pi_hat: NDArray[np.float64]
    mu1_hat: NDArray[np.float64]
    mu0_hat: NDArray[np.float64]
    p_hat: NDArray[np.float64]
    source: NuisanceSource
    n: Optional[int] = None
    undefined: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.source not in ("empirical", "zeroed", "external"):
            raise ValueError(f"unknown nuisance source {self.source!r}")
        for name in ("pi_hat", "mu1_hat", "mu0_hat", "p_hat"):
            arr = getattr(self, name)
            if not (isinstance(arr, np.ndarray) and arr.dtype == np.float64):
                arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (self.d,):
                raise ValueError(f"{name} must have shape ({self.d},), got {arr.shape}")
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            object.__setattr__(self, name, arr)

    @property
    def mu_hat(self) -> NDArray[np.float64]:
        """Outcome regression ignoring treatment, ``π̂μ̂₁ + (1 − π̂)μ̂₀``.

        For empirical nuisances this equals the within-category mean of ``Y``
        (the 0/0 convention makes the identity hold for one-armed categories).
        """
        return self.pi_hat * self.mu1_hat + (1.0 - self.pi_hat) * self.mu0_hat

    def truncated(self, level: float) -> "NuisanceEstimates":
        pi = np.clip(self.pi_hat, level, 1.0 - level)
        return NuisanceEstimates(self.d, pi, self.mu1_hat, self.mu0_hat, self.p_hat,
                                 self.source, self.n, dict(self.undefined))


@dataclass
class EstimateResult:
    estimator_id: str
    value: float
    se: Optional[float] = None
    ci: Optional[tuple[float, float, float]] = None
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.value = float(self.value)
        if self.ci is not None:
            lo, hi, _ = self.ci
            if not lo <= self.value <= hi:
                raise ValueError(f"interval {self.ci} does not contain {self.value}")


# ---------------------------------------------------------------------------
# nuisances
# ---------------------------------------------------------------------------

def _count_nuisances(cx, ct, c1, c0):
    pi = div00(ct, cx)
    mu1 = div00(c1, ct)
    mu0 = div00(c0, cx - ct)
    return pi, mu1, mu0


def nuisance_mle(stats: SufficientStats) -> NuisanceEstimates:
    """Empirical-average nuisances from a count table, with ``0/0 = 0``."""
    s = stats.dense()
    cx, ct = s.count_x, s.count_x_treated
    pi, mu1, mu0 = _count_nuisances(cx, ct, s.count_x_treated_y1, s.count_x_untreated_y1)
    seen = cx > 0
    undefined = {
        "empty_categories": int(np.sum(~seen)),
        "no_treated": int(np.sum(seen & (ct == 0))),
        "no_untreated": int(np.sum(seen & (ct == cx))),
    }
    return NuisanceEstimates(s.d, pi, mu1, mu0, cx / s.n, "empirical", n=s.n, undefined=undefined)


def empirical_nuisances(dataset: Dataset) -> NuisanceEstimates:
    return nuisance_mle(tabulate(dataset))


def zeroed_nuisances(p_hat: ArrayLike) -> NuisanceEstimates:
    """``π̂ = μ̂₁ = μ̂₀ = 0`` with a supplied covariate distribution (e.g. the true ``p``)."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    d = p_hat.shape[0]
    zero = np.broadcast_to(np.float64(0.0), (d,))
    return NuisanceEstimates(d, zero, zero, zero, p_hat, "zeroed")


def external_nuisances(pi_hat, mu1_hat, mu0_hat, p_hat) -> NuisanceEstimates:
    p_hat = np.asarray(p_hat, dtype=np.float64)
    return NuisanceEstimates(p_hat.shape[0], pi_hat, mu1_hat, mu0_hat, p_hat, "external")


def true_nuisances(model: ModelSpec) -> NuisanceEstimates:
    return NuisanceEstimates(model.d, model.pi, model.mu1, model.mu0, model.p, "external")


def split_nuisances(dataset: Dataset, seed) -> tuple[NuisanceEstimates, Dataset]:
    """Estimate nuisances on one random half; return them with the other half."""
    nuis_half, est_half = split_sample(dataset, seed)
    return empirical_nuisances(nuis_half), est_half


# ---------------------------------------------------------------------------
# count-based estimators
# ---------------------------------------------------------------------------

def plugin_arms(cx, ct, c1, c0) -> tuple[NDArray, NDArray]:
    """``(ψ̂₁, ψ̂₀)`` from count arrays; the last axis indexes categories, so batches work."""
    cx = np.asarray(cx)
    n = cx.sum(axis=-1)
    _, mu1, mu0 = _count_nuisances(cx, ct, c1, c0)
    psi1 = np.sum(cx * mu1, axis=-1) / n
    psi0 = np.sum(cx * mu0, axis=-1) / n
    return psi1, psi0


def _stats_arrays(stats: SufficientStats):
    return (stats.count_x, stats.count_x_treated, stats.count_x_treated_y1,
            stats.count_x_untreated_y1)


def plugin_psi1(stats: SufficientStats) -> EstimateResult:
    return EstimateResult("plugin_psi1", float(plugin_arms(*_stats_arrays(stats))[0]))


def plugin_psi0(stats: SufficientStats) -> EstimateResult:
    return EstimateResult("plugin_psi0", float(plugin_arms(*_stats_arrays(stats))[1]))


def plugin_ate(stats: SufficientStats) -> EstimateResult:
    """``Σ_k p̂_k (μ̂_1k − μ̂_0k)`` using empirical nuisances."""
    psi1, psi0 = plugin_arms(*_stats_arrays(stats))
    return EstimateResult("plugin", float(psi1 - psi0),
                          diagnostics={"psi1": float(psi1), "psi0": float(psi0)})


def homogeneity_arrays(cx, ct, c1, c0) -> tuple[NDArray, NDArray]:
    """Batched effect-homogeneity estimate and number of categories with both arms."""
    cx = np.asarray(cx)
    ct = np.asarray(ct)
    _, mu1, mu0 = _count_nuisances(cx, ct, c1, c0)
    both = (ct > 0) & (ct < cx)
    weight = np.where(both, cx, 0)
    num = np.sum(weight * (mu1 - mu0), axis=-1)
    den = np.sum(weight, axis=-1)
    return div00(num, den), both.sum(axis=-1)


def homogeneity_tau(stats: SufficientStats) -> EstimateResult:
    """Average of within-category contrasts over categories holding both arms, weighted by ``p̂_k``.

    Weights ``p̂_k`` are replaced by raw counts; the common ``1/n`` cancels in the ratio.
    """
    value, collisions = homogeneity_arrays(*_stats_arrays(stats))
    return EstimateResult("homog", float(value), diagnostics={"collisions": float(collisions)})


# ---------------------------------------------------------------------------
# sample-average estimators with supplied nuisances
# ---------------------------------------------------------------------------

def _per_obs(dataset: Dataset, nuis: NuisanceEstimates):
    if nuis.d != dataset.d:
        raise ValueError(f"nuisance d={nuis.d} does not match dataset d={dataset.d}")
    k = dataset.x - 1
    a = dataset.a.astype(np.float64)
    y = dataset.y.astype(np.float64)
    return k, a, y, nuis.pi_hat[k], nuis.mu1_hat[k], nuis.mu0_hat[k]


def _ipw_terms(a, y, pi):
    # A·Y/π̂ and (1−A)·Y/(1−π̂), 0/0 = 0
    return div00(a * y, pi), div00((1.0 - a) * y, 1.0 - pi)


def reg_ate(dataset: Dataset, nuis: NuisanceEstimates) -> EstimateResult:
    _, _, _, _, m1, m0 = _per_obs(dataset, nuis)
    return EstimateResult("reg", float(np.mean(m1 - m0)))


def ipw_ate(dataset: Dataset, nuis: NuisanceEstimates, truncate: Optional[float] = None) -> EstimateResult:
    if truncate is not None:
        nuis = nuis.truncated(truncate)
    _, a, y, pi, _, _ = _per_obs(dataset, nuis)
    t1, t0 = _ipw_terms(a, y, pi)
    return EstimateResult("ipw", float(np.mean(t1 - t0)))


def _dr_influence(dataset: Dataset, nuis: NuisanceEstimates) -> NDArray[np.float64]:
    _, a, y, pi, m1, m0 = _per_obs(dataset, nuis)
    return div00(a * (y - m1), pi) + m1 - div00((1.0 - a) * (y - m0), 1.0 - pi) - m0


def dr_ate(dataset: Dataset, nuis: NuisanceEstimates, truncate: Optional[float] = None) -> EstimateResult:
    if truncate is not None:
        nuis = nuis.truncated(truncate)
    return EstimateResult("dr", float(np.mean(_dr_influence(dataset, nuis))))


def influence_ci(dataset: Dataset, nuis: NuisanceEstimates, level: float = 0.95) -> EstimateResult:
    """DR estimate with a Wald interval from the empirical influence function.

    ``se`` is the sample standard deviation (``ddof=1``) of the estimated
    influence values divided by ``sqrt(n)``; the quantile is normal.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if dataset.n < 2:
        raise ValueError("influence_ci needs n >= 2")
    phi = _dr_influence(dataset, nuis)
    value = float(np.mean(phi))
    se = float(np.std(phi, ddof=1) / math.sqrt(dataset.n))
    z = NormalDist().inv_cdf((1.0 + level) / 2.0)
    ci = (value - z * se, value + z * se, level)
    return EstimateResult("dr", value, se=se, ci=ci)


def wald_interval(value: float, se: float, level: float) -> tuple[float, float, float]:
    z = NormalDist().inv_cdf((1.0 + level) / 2.0)
    return value - z * se, value + z * se, level


# ---------------------------------------------------------------------------
# second-order U-statistics
# ---------------------------------------------------------------------------

def pair_sum(x: ArrayLike, u: ArrayLike, v: ArrayLike) -> float:
    """``Σ_{i≠j} u_i v_j 1{x_i = x_j}`` via per-category totals.

    Uses ``Σ_k (S^u_k S^v_k − Σ_{i:x_i=k} u_i v_i)``; cost is O(n log n)
    independent of the number of categories.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _, idx = np.unique(np.asarray(x), return_inverse=True)
    su = np.bincount(idx, weights=u)
    sv = np.bincount(idx, weights=v)
    return float(np.dot(su, sv) - np.dot(u, v))


def naive_pair_sum(x: ArrayLike, u: ArrayLike, v: ArrayLike) -> float:
    """Reference O(n²) double loop for :func:`pair_sum`."""
    x = list(np.asarray(x).tolist())
    u = [float(t) for t in np.asarray(u)]
    v = [float(t) for t in np.asarray(v)]
    total = 0.0
    for i in range(len(x)):
        for j in range(len(x)):
            if i != j and x[i] == x[j]:
                total += u[i] * v[j]
    return total


def _require_mass(nuis_vals: NDArray, what: str) -> None:
    if np.any(nuis_vals <= 0.0):
        raise ValueError(f"nuisance {what} missing for an observed category")


def _second_order_terms(dataset: Dataset, nuis: NuisanceEstimates, target: str):
    """Per-observation ``(first-order term, u, v)`` for η̂ (``target='eta'``) or ρ̂."""
    if dataset.n < 2:
        raise ValueError("second-order estimators need n >= 2")
    k, a, y, pi, _, _ = _per_obs(dataset, nuis)
    p = nuis.p_hat[k]
    if np.any(p <= 0.0):
        raise ValueError("nuisance covariate mass missing for an observed category")
    ra = a - pi
    rb = y - nuis.mu_hat[k] if target == "eta" else ra
    return ra * rb, ra / p, rb


def _second_order(dataset: Dataset, nuis: NuisanceEstimates, target: str) -> EstimateResult:
    first, u, v = _second_order_terms(dataset, nuis, target)
    n = dataset.n
    linear = float(np.mean(first))
    u_term = pair_sum(dataset.x, u, v) / (n * (n - 1))
    return EstimateResult(f"{target}2", linear - u_term,
                          diagnostics={"linear": linear, "u_term": u_term})


def second_order_eta(est_data: Dataset, nuis: NuisanceEstimates) -> EstimateResult:
    """Second-order estimate of the expected conditional covariance ``E[Cov(Y, A | X)]``.

    ``nuis`` must come from a source independent of ``est_data`` and put
    positive ``p̂`` on every observed category.
    """
    return _second_order(est_data, nuis, "eta")


def second_order_rho(est_data: Dataset, nuis: NuisanceEstimates) -> EstimateResult:
    """Second-order estimate of ``E[Var(A | X)]``; same contract as :func:`second_order_eta`."""
    return _second_order(est_data, nuis, "rho")


def wate_hat(eta_hat: float, rho_hat: float, params: Optional[ModelClassParams] = None,
             clamp: bool = True) -> EstimateResult:
    """Ratio ``η̂ / ρ̂``; with ``clamp`` the denominator is floored at ``ε(1 − ε)``."""
    if not (math.isfinite(eta_hat) and math.isfinite(rho_hat)):
        raise ValueError("eta_hat and rho_hat must be finite")
    if clamp:
        if params is None:
            raise ValueError("clamped ratio needs ModelClassParams")
        floor = params.epsilon * (1.0 - params.epsilon)
        den = max(rho_hat, floor)
    else:
        if rho_hat <= 0.0:
            raise ValueError(f"rho_hat must be positive without clamping, got {rho_hat}")
        den = rho_hat
    return EstimateResult("wate2", eta_hat / den,
                          diagnostics={"eta": eta_hat, "rho": rho_hat, "denominator": den})


def second_order_wate(est_data: Dataset, nuis: NuisanceEstimates,
                      params: Optional[ModelClassParams] = None, clamp: bool = True) -> EstimateResult:
    eta = second_order_eta(est_data, nuis).value
    rho = second_order_rho(est_data, nuis).value
    return wate_hat(eta, rho, params, clamp)


def _second_order_arm(dataset: Dataset, nuis: NuisanceEstimates, arm: int) -> tuple[float, float]:
    if dataset.n < 2:
        raise ValueError("second-order estimators need n >= 2")
    k, a, y, pi, m1, m0 = _per_obs(dataset, nuis)
    p = nuis.p_hat[k]
    if np.any(p <= 0.0):
        raise ValueError("nuisance covariate mass missing for an observed category")
    if arm == 0:
        a, pi, m1 = 1.0 - a, 1.0 - pi, m0
    if np.any(pi <= 0.0):
        raise ValueError(f"propensity for arm {arm} is zero on an observed category")
    resid = a * (y - m1) / pi
    linear = float(np.mean(resid + m1))
    n = dataset.n
    u_term = -pair_sum(dataset.x, (a / pi - 1.0) / p, resid) / (n * (n - 1))
    return linear, u_term


def second_order_ate(est_data: Dataset, nuis: NuisanceEstimates, arm: Optional[int] = 1) -> EstimateResult:
    """Second-order estimator of a potential-outcome mean, or of their contrast.

    ``arm=1`` estimates ``E[Y¹]``, ``arm=0`` estimates ``E[Y⁰]`` (by swapping
    the arms) and ``arm=None`` returns the difference, i.e. the ATE.
    """
    if arm is None:
        l1, u1 = _second_order_arm(est_data, nuis, 1)
        l0, u0 = _second_order_arm(est_data, nuis, 0)
        return EstimateResult("ate2", (l1 + u1) - (l0 + u0),
                              diagnostics={"psi1": l1 + u1, "psi0": l0 + u0})
    if arm not in (0, 1):
        raise ValueError("arm must be 0, 1 or None")
    linear, u_term = _second_order_arm(est_data, nuis, arm)
    return EstimateResult(f"psi{arm}_2", linear + u_term,
                          diagnostics={"linear": linear, "u_term": u_term})
