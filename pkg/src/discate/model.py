"""Population model for a single categorical covariate, binary treatment and binary outcome.

A model is the tuple ``(p, pi, mu1, mu0)`` over ``d`` categories:

    X ~ Categorical(p),  A | X=k ~ Bernoulli(pi_k),  Y | X=k, A=a ~ Bernoulli(mu_ak)

Everything here is a closed-form function of those four vectors and serves as
ground truth for the estimators and the Monte Carlo harness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

SIMPLEX_TOL = 1e-12

PathLike = Union[str, Path]


def _as_vector(values: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Population parameters of the categorical-covariate model.

    Construction checks shapes only. Range and simplex conditions are reported
    by :func:`validate_model` so that callers can inspect invalid models
    instead of catching exceptions. Inputs are never renormalised.

    Parameters
    ----------
    d : int
        Number of categories.
    p : array_like, shape (d,)
        Covariate distribution ``P(X = k)``.
    pi : array_like, shape (d,)
        Propensity scores ``P(A = 1 | X = k)``.
    mu1, mu0 : array_like, shape (d,)
        Outcome regressions ``P(Y = 1 | X = k, A = a)``.
    """

    d: int
    p: NDArray[np.float64]
    pi: NDArray[np.float64]
    mu1: NDArray[np.float64]
    mu0: NDArray[np.float64]

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))
        for name in ("p", "pi", "mu1", "mu0"):
            arr = getattr(self, name)
            # broadcast views (zero strides) are kept as-is so huge constant models stay cheap
            if not (isinstance(arr, np.ndarray) and arr.dtype == np.float64 and arr.ndim == 1):
                arr = _as_vector(arr, name)
            if arr.shape[0] != self.d:
                raise ValueError(f"{name} has length {arr.shape[0]}, expected d={self.d}")
            object.__setattr__(self, name, arr)

    @classmethod
    def constant(cls, d: int, pi: float, mu1: float, mu0: float) -> "ModelSpec":
        """Uniform covariate with category-constant nuisances, stored without O(d) memory."""
        d = int(d)
        vec = lambda v: np.broadcast_to(np.float64(v), (d,))  # noqa: E731
        return cls(d=d, p=vec(1.0 / d), pi=vec(pi), mu1=vec(mu1), mu0=vec(mu0))

    @property
    def is_uniform(self) -> bool:
        p = self.p
        if p.strides == (0,):
            return True
        return bool(np.all(p == p[0]))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "p": self.p.tolist(),
            "pi": self.pi.tolist(),
            "mu1": self.mu1.tolist(),
            "mu0": self.mu0.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        missing = {"d", "p", "pi", "mu1", "mu0"} - set(data)
        if missing:
            raise ValueError(f"model is missing keys: {sorted(missing)}")
        return cls(d=data["d"], p=data["p"], pi=data["pi"], mu1=data["mu1"], mu0=data["mu0"])

    def save(self, path: PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: PathLike) -> "ModelSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ModelClassParams:
    """Positivity level ``epsilon`` of the model class ``eps <= pi_k <= 1 - eps``."""

    epsilon: float

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class EstimandValues:
    """Population targets implied by a :class:`ModelSpec`."""

    psi: float
    psi1: float
    psi0: float
    tau: NDArray[np.float64] = field(repr=False)
    sigma_n: float
    eta: float
    rho: float
    theta: float


@dataclass
class Validation:
    valid: bool
    violations: list[str]

    def __bool__(self) -> bool:
        return self.valid


def validate_model(model: ModelSpec, params: ModelClassParams | None = None) -> Validation:
    """Check simplex, range and (optionally) positivity conditions.

    Never raises; every failed condition is listed in ``violations`` with
    1-based category indices.
    """
    violations: list[str] = []
    total = float(np.sum(model.p))
    if abs(total - 1.0) > SIMPLEX_TOL:
        violations.append(f"Σp ≠ 1 (Σp = {total!r})")
    for name in ("p", "pi", "mu1", "mu0"):
        arr = getattr(model, name)
        bad = np.flatnonzero(~((arr >= 0.0) & (arr <= 1.0)))
        for k in bad[:10]:
            violations.append(f"{name}_{k + 1} = {arr[k]!r} outside [0, 1]")
        if bad.size > 10:
            violations.append(f"{name}: {bad.size - 10} further entries outside [0, 1]")
    if params is not None:
        eps = params.epsilon
        for k in np.flatnonzero(model.pi < eps)[:10]:
            violations.append(f"π_{k + 1} < ε ({model.pi[k]!r} < {eps!r})")
        for k in np.flatnonzero(model.pi > 1.0 - eps)[:10]:
            violations.append(f"π_{k + 1} > 1 − ε ({model.pi[k]!r} > {1.0 - eps!r})")
    return Validation(valid=not violations, violations=violations)


def _weighted_sum(p: NDArray[np.float64], v: NDArray[np.float64]) -> float:
    """``Σ p_k v_k`` with pairwise summation; constant vectors are summed in closed form."""
    if p.strides == (0,) and v.strides == (0,):
        return float(p[0] * v[0] * p.shape[0])
    return float(np.sum(p * v))


def population_estimands(model: ModelSpec) -> EstimandValues:
    p, pi, mu1, mu0 = model.p, model.pi, model.mu1, model.mu0
    psi1 = _weighted_sum(p, mu1)
    psi0 = _weighted_sum(p, mu0)
    psi = psi1 - psi0
    tau = mu1 - mu0
    var_a = pi * (1.0 - pi)
    eta = _weighted_sum(p, var_a * tau)
    rho = _weighted_sum(p, var_a)
    theta = eta / rho if rho > 0.0 else 0.0
    sigma_n = float(np.max(np.abs(tau - psi)))
    return EstimandValues(
        psi=psi, psi1=psi1, psi0=psi0, tau=np.asarray(tau), sigma_n=sigma_n,
        eta=eta, rho=rho, theta=theta,
    )


def joint_cell_probs(model: ModelSpec) -> tuple[NDArray, NDArray, NDArray]:
    """Return ``(w, q1, q0)`` with ``w_k = P(X=k, A=1)`` and ``q_ak = P(X=k, A=a, Y=1)``."""
    w = model.p * model.pi
    q1 = w * model.mu1
    q0 = model.p * (1.0 - model.pi) * model.mu0
    return w, q1, q0
