"""Closed-form evaluators for the quantization-error and convergence bounds.

Collects every constant of the error-feedback analysis in one place:

* ``gamma``            worst-case quantizer variance ratio min(d/s^2, sqrt(d)/s)
* ``lambda``           feedback stability constant alpha^2 gamma + (beta-alpha)^2
* ``variance_bound``   second moment of the quantization error after t steps
* ``H = I - eta A``    per-iteration contraction matrix of the quadratic
* ``Theta``            effective multiplier of a past quantization error in
                       the final parameter-error expansion
* ``tau ratio``        worst-case contribution of a past error relative to
                       the no-compensation baseline

All functions are pure; a ``BoundParams`` bundle carries the primaries and
recomputes every derived constant on access so nothing can drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "BoundParams",
    "gamma",
    "lambda_of",
    "nu_of",
    "variance_bound_ecq",
    "pseudo_error_bounds",
    "spectral_H",
    "theta",
    "theta_norm_series",
    "theta_bound_coeff",
    "error_bound_rhs",
    "tau_ratio_bound",
    "tau_decay_horizon",
    "SecondMoment",
    "empirical_second_moment",
]


def gamma(d: int, s: int) -> float:
    """Variance constant of the s-level uniform quantizer in dimension d."""
    if d < 1 or s < 1:
        raise ValueError("d and s must be >= 1")
    return min(d / s**2, math.sqrt(d) / s)


def lambda_of(alpha: float, beta: float, gamma_value: float) -> float:
    """Stability constant of the error-feedback recursion; < 1 is stable."""
    return alpha * alpha * gamma_value + (beta - alpha) ** 2


def nu_of(alpha: float, beta: float, eta: float, a1: float) -> float:
    """Decay ratio (beta - alpha) / (1 - eta * a1) of the suppression bound."""
    if eta * a1 >= 1.0:
        raise ValueError("requires eta * a1 < 1")
    return (beta - alpha) / (1.0 - eta * a1)


@dataclass(frozen=True)
class BoundParams:
    """Primary constants of a bound evaluation; derived values are recomputed.

    ``B`` bounds the squared norm of any worker gradient, ``sigma_sq`` the
    second moment of the averaged mini-batch noise, ``R_sq`` the squared
    parameter-space radius around the optimum.
    """

    d: int
    s: int
    B: float
    alpha: float
    beta: float
    eta: float
    a1: float
    a2: float
    sigma_sq: float = 0.0
    R_sq: float = 0.0
    p_workers: int = 1

    @property
    def gamma(self) -> float:
        return gamma(self.d, self.s)

    @property
    def lam(self) -> float:
        return lambda_of(self.alpha, self.beta, self.gamma)

    @property
    def nu(self) -> float:
        return nu_of(self.alpha, self.beta, self.eta, self.a1)

    @property
    def stable(self) -> bool:
        return self.lam < 1.0


def variance_bound_ecq(t: int, params: BoundParams) -> float:
    """Worst-case E||eps^(t)||^2 of the compensated quantizer at step t.

    Equals (1 + alpha^2 gamma (1 - lam^t) / (1 - lam)) * gamma * B; the
    geometric sum degenerates to t at lam == 1. At t = 0 and for alpha = 0
    this is the plain quantizer bound gamma * B.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    g = params.gamma
    lam = params.lam
    geo = float(t) if lam == 1.0 else (1.0 - lam**t) / (1.0 - lam)
    return (1.0 + params.alpha**2 * g * geo) * g * params.B


def pseudo_error_bounds(t_max: int, params: BoundParams) -> np.ndarray:
    """Bounds on E||eps_bar^(t)||^2 of the worker-averaged error, t = 0..t_max.

    The per-worker bound divided by P, using cross-worker independence of
    the quantization draws.
    """
    return np.array(
        [variance_bound_ecq(t, params) / params.p_workers for t in range(t_max + 1)]
    )


def spectral_H(problem, eta: float) -> tuple[np.ndarray, float]:
    """Contraction matrix I - eta * A and its spectral norm.

    For symmetric PSD A the norm is max(|1 - eta a1|, |1 - eta a2|).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    h = np.eye(problem.A.shape[0]) - eta * problem.A
    norm = max(abs(1.0 - eta * problem.a1), abs(1.0 - eta * problem.a2))
    return h, norm


def theta(t: int, t_prime: int, params: BoundParams, h: np.ndarray) -> np.ndarray:
    """Effective multiplier of the error injected at step t_prime.

    Theta = H^(t - t') - sum_{j=1..t-t'} alpha (beta - alpha)^(j-1) H^(t-t'-j);
    the empty gap gives the identity, and alpha = 0 reduces to the plain
    power H^(t - t').
    """
    if not 0 <= t_prime <= t:
        raise ValueError("need 0 <= t_prime <= t")
    gap = t - t_prime
    q = params.beta - params.alpha
    out = np.eye(h.shape[0])
    # Horner-style: Theta_{k+1} = H Theta_k - alpha q^k I
    for k in range(gap):
        out = h @ out - params.alpha * q**k * np.eye(h.shape[0])
    return out


def theta_norm_series(t_max: int, params: BoundParams, h: np.ndarray) -> np.ndarray:
    """Spectral norms of Theta for gaps 0..t_max via the eigenvalue recursion.

    H is symmetric here, so Theta is the same polynomial applied to each
    eigenvalue and its spectral norm is the max absolute polynomial value.
    """
    eigs = np.linalg.eigvalsh((h + h.T) / 2.0)
    q = params.beta - params.alpha
    p = np.ones_like(eigs)
    norms = np.empty(t_max + 1)
    norms[0] = 1.0
    for gap in range(1, t_max + 1):
        p = eigs * p - params.alpha * q ** (gap - 1)
        norms[gap] = np.max(np.abs(p))
    return norms


def theta_bound_coeff(t: int, t_prime: int, params: BoundParams) -> float:
    """Scalar multiplier bounding Theta against H^(t - t') from above.

    Equals 1 - alpha / (1 - eta a1) * (1 - nu^gap) / (1 - nu); requires
    eta a1 < 1. With beta = 1 - eta a1 this simplifies to nu^gap.
    """
    if params.eta * params.a1 >= 1.0:
        raise ValueError("requires eta * a1 < 1")
    if not 0 <= t_prime <= t:
        raise ValueError("need 0 <= t_prime <= t")
    gap = t - t_prime
    nu = params.nu
    geo = float(gap) if nu == 1.0 else (1.0 - nu**gap) / (1.0 - nu)
    return 1.0 - params.alpha / (1.0 - params.eta * params.a1) * geo


def error_bound_rhs(
    t: int,
    params: BoundParams,
    h: np.ndarray,
    eps_bounds: Sequence[float],
) -> float:
    """Worst-case E||w^(t+1) - w*||^2 after t+1 compensated quantized updates.

    eps_bounds[t'] must bound E||eps_bar^(t')||^2 for t' = 0..t (see
    :func:`pseudo_error_bounds`). The four terms: contracted initial radius,
    accumulated sampling noise, the current quantization error, and all past
    quantization errors weighted by their Theta multipliers.
    """
    if len(eps_bounds) < t + 1:
        raise ValueError("need eps_bounds for every step up to t")
    h_norm = float(np.linalg.norm(h, 2))
    eta_sq = params.eta**2
    powers = h_norm ** (2 * np.arange(t + 2))
    theta_norms = theta_norm_series(t, params, h)
    out = params.R_sq * powers[t + 1]
    out += eta_sq * params.sigma_sq * float(np.sum(powers[: t + 1]))
    out += eta_sq * eps_bounds[t]
    for t_prime in range(t):
        out += eta_sq * theta_norms[t - t_prime] ** 2 * eps_bounds[t_prime]
    return float(out)


def tau_ratio_bound(t: int, t_prime: int, params: BoundParams) -> float:
    """Upper bound on the compensated-to-plain ratio of a past error's
    worst-case contribution to the final error bound.

    Defined for t_prime < t (the current step's error is accounted
    separately); requires the stable regime lam < 1 and eta a1 < 1. Equals
    coeff^2 * (1 + alpha^2 gamma / (1 - lam)) and is identically 1 at
    alpha = 0.
    """
    if t_prime >= t:
        raise ValueError("tau ratio is defined for t_prime < t")
    if params.lam >= 1.0:
        raise ValueError("requires stable regime (lambda < 1)")
    coeff = theta_bound_coeff(t, t_prime, params)
    inflation = 1.0 + params.alpha**2 * params.gamma / (1.0 - params.lam)
    return coeff**2 * inflation


def tau_decay_horizon(params: BoundParams, threshold: float = 1e-2) -> int:
    """Smallest gap at which the tau ratio bound falls below ``threshold``,
    for the beta = 1 - eta a1 setting where the ratio is nu^(2 gap) times a
    constant."""
    nu = params.nu
    if not 0 < nu < 1:
        raise ValueError("requires 0 < nu < 1")
    inflation = 1.0 + params.alpha**2 * params.gamma / (1.0 - params.lam)
    return max(1, math.ceil(math.log(threshold / inflation) / (2.0 * math.log(nu))))


class SecondMoment(NamedTuple):
    mean: float
    stderr: float


def empirical_second_moment(samples: Sequence[np.ndarray]) -> SecondMoment:
    """Monte-Carlo estimate of E||x||^2 with its standard error."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    sq = np.array([float(np.dot(v, v)) for v in samples])
    return SecondMoment(
        mean=float(sq.mean()),
        stderr=float(sq.std(ddof=1) / math.sqrt(len(sq))),
    )
