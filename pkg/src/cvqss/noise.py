"""Excess-noise budget of a link with a locally generated oscillator.

Noise terms are referred to the channel input of the link under study, so
contributions picked up on other participants' links are rescaled by the
ratio of mean transmittances. The phase-reference intensity ``E_R2`` trades
leakage noise (grows with ``E_R2``) against phase noise (falls as
``1/E_R2``); by default it sits at the closed-form optimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import ProtocolConfig


@dataclass(frozen=True)
class NoiseBudget:
    eps_0: float
    eps_AM: float
    eps_LE: float
    eps_LO: float
    eps_CF: float
    total: float
    E_R2: float
    chi_1: float

    def components(self) -> tuple[float, float, float, float, float]:
        return self.eps_0, self.eps_AM, self.eps_LE, self.eps_LO, self.eps_CF


def _positive_mean(mean_T1: float) -> None:
    if not mean_T1 > 0:
        raise ValueError(f"mean transmittance must be > 0: {mean_T1!r}")


def _attenuation(dB: Sequence[float]) -> np.ndarray:
    return 10.0 ** (-0.1 * np.asarray(dB, dtype=float))


def modulation_noise(T_means: Sequence[float], mean_T1: float, V_M: float, d_dB: Sequence[float]) -> float:
    """Noise from finite modulator dynamics, summed over all participants.

    The peak pulse intensity is taken as ``10 V_M``.
    """
    _positive_mean(mean_T1)
    T_means = np.asarray(T_means, dtype=float)
    return float(np.sum(T_means * 10.0 * V_M * _attenuation(d_dB)) / mean_T1)


def leakage_weight(T_means: Sequence[float], R_e: Sequence[float], R_p: Sequence[float]) -> float:
    """``sum_i <T_i> 10^(-0.1 (R_e,i + R_p,i))``."""
    return float(np.sum(np.asarray(T_means, dtype=float)
                        * _attenuation(np.add(R_e, R_p))))


def leakage_noise(E_R2: float, T_means: Sequence[float], mean_T1: float,
                  R_e: Sequence[float], R_p: Sequence[float]) -> float:
    """Photon leakage from the phase reference into every signal pulse."""
    _positive_mean(mean_T1)
    if E_R2 < 0:
        raise ValueError(f"E_R2 must be >= 0: {E_R2!r}")
    return 2.0 * E_R2 / mean_T1 * leakage_weight(T_means, R_e, R_p)


def reference_total_noise(mean_T1, eps_0: float, eta_e: float, v_el: float):
    """Total noise on the phase reference, channel plus heterodyne detection."""
    T = np.asarray(mean_T1, dtype=float)
    if np.any(T <= 0):
        raise ValueError("reference noise undefined for zero transmittance")
    chi = 1.0 / T - 1.0 + eps_0 + (2.0 - eta_e + 2.0 * v_el) / (eta_e * T)
    return float(chi) if np.ndim(mean_T1) == 0 else chi


def lo_noise(V_M: float, E_R2: float, chi_1: float) -> float:
    """Phase-error noise of the heterodyne measurement (small-error limit)."""
    if not E_R2 > 0:
        raise ValueError(f"E_R2 must be > 0: {E_R2!r}")
    return V_M * (chi_1 + 1.0) / E_R2


def optimal_reference_amplitude(mean_T1: float, T_means: Sequence[float], V_M: float, chi_1: float,
                                R_e: Sequence[float], R_p: Sequence[float]) -> float:
    """Reference intensity minimising leakage plus phase noise."""
    weight = leakage_weight(T_means, R_e, R_p)
    if not weight > 0:
        raise ValueError("zero leakage weight; the optimum is unbounded")
    return math.sqrt(mean_T1 * V_M * (chi_1 + 1.0) / (2.0 * weight))


def fluctuation_noise(stats, V_M: float) -> float:
    """Noise from transmittance fluctuations, ``(E[T] - E[sqrt T]^2) V_M``.

    ``stats`` is anything with ``mean_T`` and ``mean_sqrtT`` attributes.
    """
    return max(0.0, stats.mean_T - stats.mean_sqrtT**2) * V_M


def total_excess_noise(eps_0: float, eps_AM: float, eps_LE: float, eps_LO: float, eps_CF: float) -> float:
    return eps_0 + eps_AM + eps_LE + eps_LO + eps_CF


def noise_budget(moments, T_means: Sequence[float], config: ProtocolConfig, *,
                 E_R2: Optional[float] = None, chi_mode: str = "mean",
                 T_samples: Optional[np.ndarray] = None) -> NoiseBudget:
    """Excess-noise budget of a link with transmittance ``moments``.

    ``T_means`` lists the mean transmittance of every participant's link,
    the studied link included. With ``chi_mode="sample"`` the reference
    noise is averaged over ``T_samples`` instead of evaluated at the mean.
    """
    mean_T = moments.mean_T
    _positive_mean(mean_T)
    d_dB = config.per_participant("d_dB")
    R_e = config.per_participant("R_e")
    R_p = config.per_participant("R_p")
    if len(T_means) != config.n:
        raise ValueError(f"expected {config.n} link means, got {len(T_means)}")

    if chi_mode == "mean":
        chi = reference_total_noise(mean_T, config.eps_0, config.eta_e, config.v_el)
    elif chi_mode == "sample":
        if T_samples is None:
            raise ValueError("chi_mode='sample' needs transmittance samples")
        chi = float(np.mean(reference_total_noise(T_samples, config.eps_0, config.eta_e, config.v_el)))
    else:
        raise ValueError(f"unknown chi_mode {chi_mode!r}")

    if E_R2 is None:
        E_R2 = optimal_reference_amplitude(mean_T, T_means, config.V_M, chi, R_e, R_p)
    eps_AM = modulation_noise(T_means, mean_T, config.V_M, d_dB)
    eps_LE = leakage_noise(E_R2, T_means, mean_T, R_e, R_p)
    eps_LO = lo_noise(config.V_M, E_R2, chi)
    eps_CF = fluctuation_noise(moments, config.V_M)
    total = total_excess_noise(config.eps_0, eps_AM, eps_LE, eps_LO, eps_CF)
    return NoiseBudget(config.eps_0, eps_AM, eps_LE, eps_LO, eps_CF, total, E_R2, chi)
