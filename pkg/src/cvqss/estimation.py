"""Channel parameter estimation from the dealer's heterodyne data.

The dealer sees ``X_B = t X_M + X_N`` with ``t = sqrt(eta_e T / 2)``. On a
fluctuating channel the maximum-likelihood estimators only see the moments
E[T] and E[sqrt(T)], which biases the excess-noise estimate upward by the
Jensen gap ``E[T] - E[sqrt(T)]^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ProtocolConfig


@dataclass(frozen=True)
class ChannelEstimate:
    T_hat: float
    eps_hat: float
    V_N_hat: float
    V_eps_hat: float
    sigma_T: float
    sigma_Veps: float
    T_min: float
    V_eps_max: float
    m: float


def estimate_transmittance(E_sqrtT: float) -> float:
    if E_sqrtT < 0:
        raise ValueError(f"E[sqrt T] must be >= 0: {E_sqrtT!r}")
    return E_sqrtT**2


def estimate_excess_noise(E_T: float, E_sqrtT: float, V_T: float, V_M: float, eps_true: float) -> float:
    if not E_sqrtT > 0:
        raise ValueError("excess-noise estimator undefined for E[sqrt T] = 0")
    return E_T / E_sqrtT**2 * (V_T + V_M + eps_true) - (V_T + V_M)


def estimate_noise_variance(E_T: float, E_sqrtT: float, V_T: float, V_M: float, eps_true: float) -> float:
    """Estimator of ``V_eps = T * eps``."""
    return E_T * (V_T + V_M + eps_true) - E_sqrtT**2 * (V_T + V_M)


def estimate_aggregated_noise(E_T: float, E_sqrtT: float, config: ProtocolConfig, eps_true: float) -> float:
    """Moment form of the residual-noise variance of the linear model."""
    half = config.eta_e / 2.0
    return (1.0 + config.v_el + half * E_T * (config.V_T + config.V_M + eps_true)
            - half * E_sqrtT**2 * config.V_M)


def empirical_estimators(samples_M, samples_B) -> tuple[float, float]:
    """Least-squares slope and residual variance of ``B`` against ``M``."""
    M = np.asarray(samples_M, dtype=float)
    B = np.asarray(samples_B, dtype=float)
    if M.shape != B.shape or M.ndim != 1 or M.size == 0:
        raise ValueError("samples must be equal-length, non-empty vectors")
    mm = float(np.dot(M, M))
    if mm == 0.0:
        raise ValueError("degenerate input: all M_i are zero")
    t_hat = float(np.dot(M, B)) / mm
    resid = B - t_hat * M
    return t_hat, float(np.dot(resid, resid)) / M.size


def worst_case_bounds(estimate: ChannelEstimate, config: ProtocolConfig, m: float | None = None) -> ChannelEstimate:
    """Fill in the statistical widths and worst-case bounds for block size ``m``.

    ``T_min`` is floored at zero; a zero bound makes the key rate abort.
    """
    m = config.m if m is None else m
    if not m > 0:
        raise ValueError(f"block size m must be positive: {m!r}")
    if not config.V_M > 0:
        raise ValueError("worst-case bounds need V_M > 0")
    T, V_N = estimate.T_hat, estimate.V_N_hat
    if T > 0:
        var_T = 8.0 / m * T**2 * (1.0 + V_N / (config.eta_e * T * config.V_M))
    else:
        var_T = 0.0
    var_Veps = var_T * config.V_T**2 + 8.0 / (m * config.eta_e**2) * V_N**2
    sigma_T = math.sqrt(var_T)
    sigma_Veps = math.sqrt(var_Veps)
    return ChannelEstimate(
        T_hat=T,
        eps_hat=estimate.eps_hat,
        V_N_hat=V_N,
        V_eps_hat=estimate.V_eps_hat,
        sigma_T=sigma_T,
        sigma_Veps=sigma_Veps,
        T_min=max(0.0, T - config.Z * sigma_T),
        V_eps_max=estimate.V_eps_hat + config.Z * sigma_Veps,
        m=m,
    )


def estimate_channel(E_T: float, E_sqrtT: float, config: ProtocolConfig, eps_true: float,
                     m: float | None = None) -> ChannelEstimate:
    """Run every estimator on a pair of moments and attach worst-case bounds."""
    T_hat = estimate_transmittance(E_sqrtT)
    V_eps_hat = estimate_noise_variance(E_T, E_sqrtT, config.V_T, config.V_M, eps_true)
    eps_hat = (estimate_excess_noise(E_T, E_sqrtT, config.V_T, config.V_M, eps_true)
               if E_sqrtT > 0 else math.inf)
    point = ChannelEstimate(
        T_hat=T_hat,
        eps_hat=eps_hat,
        V_N_hat=estimate_aggregated_noise(E_T, E_sqrtT, config, eps_true),
        V_eps_hat=V_eps_hat,
        sigma_T=0.0,
        sigma_Veps=0.0,
        T_min=T_hat,
        V_eps_max=V_eps_hat,
        m=math.inf,
    )
    return worst_case_bounds(point, config, m)
