"""Closed-form bias, variance and probability bounds.

Functions return plain floats; :func:`bound_table` wraps them into
:class:`BoundReport` rows for the CLI. Rates whose constants are not explicit
(``rate template`` rows) take a user constant and are reported with
``certified=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelSpec


@dataclass
class BoundReport:
    name: str
    value: float
    inputs: dict = field(default_factory=dict)
    certified: bool = True
    vacuous: bool = False


def _check_eps(epsilon: float) -> None:
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")


def exact_bias(model: ModelSpec, n: int) -> tuple[float, float, float]:
    """Exact finite-sample bias of the plug-in arm means and their contrast.

    A category contributes bias only through the event that it holds no unit
    of the relevant arm, which has probability ``(1 - p_k π_k)^n`` for the
    treated arm.
    """
    if n < 1:
        raise ValueError("n must be positive")
    p, pi, mu1, mu0 = model.p, model.pi, model.mu1, model.mu0
    b1 = -float(np.sum(mu1 * p * (1.0 - pi) * (1.0 - p * pi) ** (n - 1)))
    b0 = -float(np.sum(mu0 * p * pi * (1.0 - p + p * pi) ** (n - 1)))
    return b1, b0, b1 - b0


def worst_case_bias_bounds(epsilon: float, n: int, d: int) -> tuple[float, float, Optional[float]]:
    """Bracket the supremum of ``|bias(ψ̂₁)|`` over the positivity class.

    Returns ``(lower_exp, upper, lower_linear)``; ``lower_linear`` is None
    unless ``n >= 1 + 1/epsilon``.
    """
    _check_eps(epsilon)
    lower_exp = (1.0 - epsilon) * math.exp(-epsilon * (n - 1) / (d - epsilon))
    upper = (1.0 - epsilon) / epsilon * d / n
    lower_linear = None
    if n >= 1.0 + 1.0 / epsilon:
        lower_linear = (1.0 - epsilon) / 8.0 * min((d - 1) / (epsilon * (n - 1)), 1.0)
    return lower_exp, upper, lower_linear


def plugin_variance_bound(epsilon: float, n: int) -> float:
    """Explicit bound ``(1 + 7/(2ε))/n + 4/n + 2/(n − 1)`` on ``Var(ψ̂₁)``."""
    if n < 2:
        raise ValueError("plugin_variance_bound needs n >= 2")
    return (1.0 + 7.0 / (2.0 * epsilon)) / n + 4.0 / n + 2.0 / (n - 1)


def plugin_mse_bound(epsilon: float, n: int, d: int) -> float:
    """Squared worst-case bias bound plus the explicit variance bound."""
    _, upper, _ = worst_case_bias_bounds(epsilon, n, d)
    return upper**2 + plugin_variance_bound(epsilon, n)


def collision_constants(epsilon: float) -> tuple[float, float, float]:
    """``(C1, C2, C)`` entering the no-collision exponent."""
    _check_eps(epsilon)
    c1 = -math.log(math.exp(-epsilon**2) + math.exp(-epsilon * (1.0 - epsilon)) - math.exp(-epsilon))
    c2 = c1 * epsilon / (2.0 * math.log(2.0))
    return c1, c2, min(c2 / 2.0, epsilon / 12.0)


def no_collision_bound(epsilon: float, n: int, d: int) -> float:
    """Upper bound on P(no category holds both a treated and an untreated unit)."""
    _, _, c = collision_constants(epsilon)
    return 2.0 * math.exp(-c * n * n / max(n, d))


def homogeneity_bias_bound(sigma_n: float, epsilon: float, n: int, d: int) -> float:
    if not 0.0 <= sigma_n <= 2.0:
        raise ValueError("sigma_n must lie in [0, 2]")
    return sigma_n + no_collision_bound(epsilon, n, d)


def homogeneity_variance_rate(sigma_n: float, epsilon: float, n: int, d: int, C: float = 1.0) -> float:
    """Rate template ``C·(σ² + exp(−C(ε) n²/(n∨d)) + (n∨d)/n²)``; not a certified bound.

    The exponent constant is not given explicitly for the variance, so the
    bias constant ``C(ε)`` is reused.
    """
    _, _, c = collision_constants(epsilon)
    m = max(n, d)
    return C * (sigma_n**2 + math.exp(-c * n * n / m) + m / n**2)


def second_order_mse_rate(n: int, d: int, xi: float = 0.0, nuisance: str = "zeroed", C: float = 1.0) -> float:
    """Rate template for the MSE of the second-order η̂/ρ̂/θ̂ estimators; not certified.

    ``nuisance='empirical'`` gives ``ξ²(d∧n)/n + d/n² + 1/n``, ``'zeroed'``
    gives ``ξ² + d/n² + 1/n``.
    """
    if nuisance == "empirical":
        bias_part = xi**2 * min(d, n) / n
    elif nuisance == "zeroed":
        bias_part = xi**2
    else:
        raise ValueError(f"unknown nuisance mode {nuisance!r}")
    return C * (bias_part + d / n**2 + 1.0 / n)


def xi_n(p: np.ndarray, p_hat: np.ndarray) -> float:
    """Uniform relative error ``max_k |1 − p_k / p̂_k|``."""
    p = np.asarray(p, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    if np.any(p_hat <= 0):
        return math.inf
    return float(np.max(np.abs(1.0 - p / p_hat)))


def rate_curve(C: float, gamma: float, n: int) -> float:
    """``C·n^(γ/2 − 1)``, i.e. ``C·sqrt(d/n²)`` at ``d = n^γ``."""
    if C <= 0:
        raise ValueError("C must be positive")
    return C * float(n) ** (gamma / 2.0 - 1.0)


def bound_table(epsilon: float, n: int, d: int, sigma_n: Optional[float] = None,
                C: float = 1.0) -> list[BoundReport]:
    _check_eps(epsilon)
    inputs = {"n": n, "d": d, "epsilon": epsilon}
    rows: list[BoundReport] = []
    lower_exp, upper, lower_linear = worst_case_bias_bounds(epsilon, n, d)
    rows.append(BoundReport("worst_case_bias_lower_exp", lower_exp, dict(inputs)))
    rows.append(BoundReport("worst_case_bias_upper", upper, dict(inputs), vacuous=upper >= 1.0))
    if lower_linear is not None:
        rows.append(BoundReport("worst_case_bias_lower_linear", lower_linear, dict(inputs)))
    if n >= 2:
        var = plugin_variance_bound(epsilon, n)
        rows.append(BoundReport("plugin_variance", var, dict(inputs)))
        rows.append(BoundReport("plugin_mse", plugin_mse_bound(epsilon, n, d), dict(inputs)))
    nc = no_collision_bound(epsilon, n, d)
    rows.append(BoundReport("no_collision_probability", nc, dict(inputs), vacuous=nc >= 1.0))
    if sigma_n is not None:
        with_sigma = dict(inputs, sigma_n=sigma_n)
        hb = homogeneity_bias_bound(sigma_n, epsilon, n, d)
        rows.append(BoundReport("homogeneity_bias", hb, with_sigma, vacuous=hb >= 2.0))
        rows.append(BoundReport("homogeneity_variance_rate",
                                homogeneity_variance_rate(sigma_n, epsilon, n, d, C),
                                dict(with_sigma, C=C), certified=False))
    rows.append(BoundReport("second_order_mse_rate", second_order_mse_rate(n, d, C=C),
                            dict(inputs, C=C), certified=False))
    return rows
