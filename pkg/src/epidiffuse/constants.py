"""Constants of the Lyapunov argument and the algebraic facts behind them.

With ``K = max(sup u0, Lambda/mu)`` the weight ``delta`` and exponent
``epsilon`` of the functional ``J`` must satisfy

    0 < delta   <= min(mu / (2 Lambda (1 + 2K)), 2 (2 sqrt(ab)/(a+b) / (1 + 2K))**2)
    0 < epsilon <= delta / (1 + delta (K + K**2)) * min(1, (d - a)/b)

and then ``dJ/dt <= -mu/2 J + gamma`` with
``gamma = mu (1 + delta (K + K**2)) |Omega|``.  The checks here are sampled
on ``[0, K]``; they do not constitute a proof.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, HypothesisError
from .model import ModelParams

logger = logging.getLogger(__name__)

SLACK = 1e-12


def compute_K(params: ModelParams, u0_sup: float) -> float:
    """Upper bound of the susceptible density, ``max(sup u0, Lambda/mu)``."""
    if u0_sup < 0:
        raise DomainError(f"u0_sup must be nonnegative, got {u0_sup}")
    if params.mu == 0:
        if params.strict_mode:
            raise HypothesisError("mu = 0: Lambda/mu is undefined, so K cannot be formed")
        logger.warning("mu = 0 in relaxed mode: using K = sup u0 = %g", u0_sup)
        return float(u0_sup)
    return max(float(u0_sup), params.Lambda / params.mu)


def compute_delta_max(params: ModelParams, K: float) -> float:
    if not (params.a > 0 and params.b > 0):
        raise HypothesisError(f"delta ceiling needs a > 0 and b > 0, got a={params.a}, b={params.b}")
    if K < 0:
        raise DomainError(f"K must be nonnegative, got {K}")
    a, b, K = params.a, params.b, float(K)
    # the source-term constraint vanishes with the source
    source = math.inf if params.Lambda == 0 else params.mu / (2.0 * params.Lambda * (1.0 + 2.0 * K))
    mixing = 2.0 * (2.0 * math.sqrt(a * b) / (a + b) * (1.0 / (1.0 + 2.0 * K))) ** 2
    return min(source, mixing)


def compute_epsilon_max(params: ModelParams, K: float, delta: float) -> float:
    if params.b == 0:
        raise HypothesisError("epsilon ceiling divides by b = 0")
    factor = min(1.0, (params.d - params.a) / params.b)
    if params.strict_mode and params.d - params.a >= params.b:
        assert factor == 1.0
    return delta / (1.0 + delta * (K + K * K)) * factor


def compute_gamma(params: ModelParams, K: float, delta: float, domain_measure: float) -> float:
    if not domain_measure > 0:
        raise DomainError(f"domain measure must be positive, got {domain_measure}")
    return params.mu * (1.0 + delta * (K + K * K)) * domain_measure


def discriminant(params: ModelParams, delta: float, epsilon: float, u):
    """Discriminant of the gradient quadratic form at susceptible level ``u``.

    Nonpositive values mean the cross-diffusion contribution to ``dJ/dt`` is
    dissipative at that level.
    """
    a, b, d = params.a, params.b, params.d
    u = np.asarray(u, dtype=float)
    weight = 1.0 + delta * (u + u * u)
    cross = epsilon * ((a + d) * delta * (1.0 + 2.0 * u) + b * epsilon * weight)
    out = cross**2 - 4.0 * (delta * (2.0 * a + b * epsilon * (1.0 + 2.0 * u))) * (
        d * epsilon**2 * weight
    )
    return float(out) if out.ndim == 0 else out


def pi_bound(epsilon: float, eta):
    """``(1 - epsilon eta) exp(epsilon eta)``; at most 1 on ``eta >= 0``."""
    s = epsilon * np.asarray(eta, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = (1.0 - s) * np.exp(s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DerivedConstants:
    K: float
    delta: float
    epsilon: float
    gamma: float
    delta_max: float
    epsilon_max: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["warnings"] = list(self.warnings)
        return out


def derive_constants(
    params: ModelParams,
    u0_sup: float,
    domain_measure: float,
    delta: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> DerivedConstants:
    """K, ceilings and gamma; ``delta``/``epsilon`` default to their ceilings."""
    notes = []
    if params.mu == 0:
        notes.append("mu = 0: K taken as sup u0 and gamma vanishes")
    K = compute_K(params, u0_sup)
    delta_max = compute_delta_max(params, K)
    delta = delta_max if delta is None else float(delta)
    epsilon_max = compute_epsilon_max(params, K, delta)
    epsilon = epsilon_max if epsilon is None else float(epsilon)
    gamma = compute_gamma(params, K, delta, domain_measure)
    return DerivedConstants(K, delta, epsilon, gamma, delta_max, epsilon_max, tuple(notes))


@dataclass(frozen=True)
class AdmissibilityReport:
    """Sampled admissibility of ``(delta, epsilon)``.

    ``decay_lhs`` is ``Lambda delta (1 + 2K) - mu``, an upper bound for the
    reaction/decay coefficient that must stay below ``-mu/2``;
    ``decay_lhs_sampled`` is that coefficient maximised over the samples.
    ``weight_lhs = epsilon - delta / (1 + delta (K + K**2))`` must be <= 0.
    """

    n_samples: int
    K: float
    delta: float
    epsilon: float
    delta_max: float
    epsilon_max: float
    max_discriminant: float
    argmax_discriminant_u: float
    max_discriminant_extended: float
    decay_lhs: float
    decay_lhs_sampled: float
    decay_target: float
    decay_lhs_doubled: float
    weight_lhs: float
    weight_lhs_sampled: float
    delta_in_range: bool
    epsilon_in_range: bool
    discriminant_ok: bool
    decay_ok: bool
    weight_ok: bool
    slack: float = SLACK

    @property
    def admissible(self) -> bool:
        return (
            self.delta_in_range
            and self.epsilon_in_range
            and self.discriminant_ok
            and self.decay_ok
            and self.weight_ok
        )

    def failures(self) -> dict[str, float]:
        """Failed checks mapped to a positive witness (amount by which each bound is exceeded)."""
        out = {}
        if not self.delta_in_range:
            out["delta_range"] = (
                self.delta - self.delta_max if self.delta > 0 else -self.delta
            )
        if not self.epsilon_in_range:
            out["epsilon_range"] = (
                self.epsilon - self.epsilon_max if self.epsilon > 0 else -self.epsilon
            )
        if not self.discriminant_ok:
            out["discriminant"] = self.max_discriminant
        if not self.decay_ok:
            out["decay"] = max(self.decay_lhs, self.decay_lhs_sampled) - self.decay_target
        if not self.weight_ok:
            out["weight"] = max(self.weight_lhs, self.weight_lhs_sampled)
        return out

    def to_dict(self) -> dict:
        out = asdict(self)
        out["admissible"] = self.admissible
        out["failures"] = self.failures()
        return out


def verify_admissible(
    params: ModelParams,
    K: float,
    delta: float,
    epsilon: float,
    n_samples: int = 1001,
    slack: float = SLACK,
) -> AdmissibilityReport:
    """Scan ``u`` over ``n_samples`` equispaced points of ``[0, K]``.

    Out-of-range ``delta``/``epsilon`` is reported, never raised.
    """
    if n_samples < 2:
        raise DomainError(f"need at least 2 samples, got {n_samples}")
    delta_max = compute_delta_max(params, K)
    epsilon_max = compute_epsilon_max(params, K, delta)
    u = np.linspace(0.0, K, n_samples)

    D = discriminant(params, delta, epsilon, u)
    k = int(np.argmax(D))
    D_ext = discriminant(params, delta, epsilon, np.linspace(0.0, 2.0 * K, 2 * n_samples - 1))

    weight = 1.0 + delta * (u + u * u)
    ratio = delta * (1.0 + 2.0 * u) / weight
    coeff = params.Lambda * ratio - params.mu * u * ratio - params.mu
    decay_lhs = params.Lambda * delta * (1.0 + 2.0 * K) - params.mu
    target = -params.mu / 2.0
    weight_lhs = epsilon - delta / (1.0 + delta * (K + K * K))
    weight_sampled = float(np.max(epsilon - ratio))

    return AdmissibilityReport(
        n_samples=n_samples,
        K=K,
        delta=delta,
        epsilon=epsilon,
        delta_max=delta_max,
        epsilon_max=epsilon_max,
        max_discriminant=float(D[k]),
        argmax_discriminant_u=float(u[k]),
        max_discriminant_extended=float(np.max(D_ext)),
        decay_lhs=decay_lhs,
        decay_lhs_sampled=float(np.max(coeff)),
        decay_target=target,
        decay_lhs_doubled=2.0 * params.Lambda * delta * (1.0 + 2.0 * K) - params.mu,
        weight_lhs=weight_lhs,
        weight_lhs_sampled=weight_sampled,
        delta_in_range=bool(0 < delta <= delta_max + slack),
        epsilon_in_range=bool(0 < epsilon <= epsilon_max + slack),
        discriminant_ok=bool(D[k] <= slack),
        decay_ok=bool(max(decay_lhs, float(np.max(coeff))) <= target + slack),
        weight_ok=bool(max(weight_lhs, weight_sampled) <= slack),
        slack=slack,
    )
