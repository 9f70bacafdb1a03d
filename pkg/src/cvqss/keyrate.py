"""Secret key rate of one Gaussian-modulated coherent-state link.

The Holevo bound is computed in the entanglement-based picture: the
participant holds one arm ``A`` of a two-mode squeezed state of variance
``V``, the other arm ``B`` crosses the channel ``(T, chi_l)``, and the
dealer's imperfect heterodyne detector is a beamsplitter of transmissivity
``eta_e`` mixing ``B`` with one arm ``F0`` of an EPR pair ``(F0, G)`` that
reproduces the electronic noise. Eve's information is
``S(AB) - S(AFG | heterodyne outcome of B')``; both entropies come from the
symplectic spectra of explicit covariance matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ProtocolConfig
from .turbulence import NumericalError

PHYSICAL_TOL = 1e-9


@dataclass(frozen=True)
class LinkKeyRate:
    I_AB: float
    chi_BE: float
    r_asym: float
    r_raw: float
    R_finite: float = math.nan
    R_raw: float = math.nan
    Delta: float = math.nan
    eigenvalues: tuple[float, ...] = ()
    inputs_echo: dict = field(default_factory=dict)


# --- information-theoretic pieces ---------------------------------------------

def dealer_variances(config: ProtocolConfig, T: float, eps: float) -> tuple[float, float]:
    """Variance of one quadrature of the dealer's heterodyne output and its
    variance conditioned on the participant's modulation."""
    half = config.eta_e / 2.0
    X_B = half * T * (config.V_M + config.V_T + eps) + 1.0 + config.v_el
    X_B_given_A = 1.0 + config.v_el + half * T * eps + half * T * config.V_T
    return X_B, X_B_given_A


def input_referred(X: float, eta_e: float) -> float:
    """Refer a heterodyne-output variance back to the detector input.

    With ``V = 2X/eta_e - 1`` the ``log2((V_B + 1)/(V_B|A + 1))`` form
    reduces to ``log2(X_B / X_B|A)``, the usual heterodyne mutual
    information. Feeding the output variances in directly would
    undercount the information by mixing shot-noise and signal scales.
    """
    return 2.0 * X / eta_e - 1.0


def link_mutual_information(config: ProtocolConfig, T: float, eps: float) -> float:
    X_B, X_BA = dealer_variances(config, T, eps)
    return mutual_information(input_referred(X_B, config.eta_e), input_referred(X_BA, config.eta_e))


def mutual_information(V_B: float, V_B_given_A: float) -> float:
    if V_B_given_A < 0:
        raise ValueError(f"conditional variance must be >= 0: {V_B_given_A!r}")
    if V_B < V_B_given_A:
        raise ValueError(f"inconsistent variances: V_B = {V_B!r} < V_B|A = {V_B_given_A!r}")
    return math.log2((V_B + 1.0) / (V_B_given_A + 1.0))


def g_function(lam: float) -> float:
    """Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue ``lam``."""
    if lam < 1.0 - PHYSICAL_TOL:
        raise ValueError(f"symplectic eigenvalue below 1: {lam!r}")
    if lam <= 1.0:
        return 0.0
    plus = (lam + 1.0) / 2.0
    minus = (lam - 1.0) / 2.0
    return plus * math.log2(plus) - minus * math.log2(minus)


# --- symplectic machinery ------------------------------------------------------

def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_spectrum(cov: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a covariance matrix in (x1, p1, x2, p2, ...)
    ordering, sorted in descending order."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
        raise ValueError(f"covariance must be 2N x 2N, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("covariance is not symmetric")
    n = cov.shape[0] // 2
    moduli = np.sort(np.abs(np.linalg.eigvals(1j * symplectic_form(n) @ cov)))[::-1]
    # eigenvalues come in +/- pairs
    return 0.5 * (moduli[0::2] + moduli[1::2])


def _two_mode(a: float, b: float, c: float) -> np.ndarray:
    Z = np.diag([1.0, -1.0])
    I = np.eye(2)
    return np.block([[a * I, c * Z], [c * Z, b * I]])


def channel_covariance(V: float, T: float, chi_l: float) -> np.ndarray:
    """Covariance of (A, B) after the channel."""
    return _two_mode(V, T * (V + chi_l), math.sqrt(T * (V**2 - 1.0)))


def detector_ancilla_variance(eta_e: float, v_el: float) -> float:
    """EPR variance of the detector ancilla reproducing electronic noise."""
    if eta_e >= 1.0:
        if v_el > 0:
            raise ValueError("electronic noise cannot be modelled with eta_e = 1")
        return 1.0
    return 1.0 + 2.0 * v_el / (1.0 - eta_e)


def detected_covariance(V: float, T: float, chi_l: float, eta_e: float, v_el: float) -> np.ndarray:
    """Covariance of (A, B', F, G) after the detector beamsplitter.

    Heterodyne splits ``B'`` once more on a balanced beamsplitter, so one
    quadrature of the dealer's output has variance ``(gamma_B' + 1) / 2``.
    That split is where the ``eta_e T / 2`` of the output variances comes
    from; the channel itself enters with the full ``T``.
    """
    nu = detector_ancilla_variance(eta_e, v_el)
    full = np.zeros((8, 8))
    full[:4, :4] = channel_covariance(V, T, chi_l)       # A, B
    full[4:, 4:] = _two_mode(nu, nu, math.sqrt(nu**2 - 1.0))  # F0, G

    s, c = math.sqrt(eta_e), math.sqrt(1.0 - eta_e)
    I = np.eye(2)
    S = np.eye(8)
    S[2:6, 2:6] = np.block([[s * I, c * I], [-c * I, s * I]])
    return S @ full @ S.T


def conditional_covariance(V: float, T: float, chi_l: float, eta_e: float, v_el: float) -> np.ndarray:
    """Covariance of (A, F, G) conditioned on heterodyning the detected mode."""
    out = detected_covariance(V, T, chi_l, eta_e, v_el)
    keep = [0, 1, 4, 5, 6, 7]   # A, F, G
    meas = [2, 3]               # B'
    g_keep = out[np.ix_(keep, keep)]
    g_meas = out[np.ix_(meas, meas)]
    corr = out[np.ix_(keep, meas)]
    cond = g_keep - corr @ np.linalg.inv(g_meas + np.eye(2)) @ corr.T
    return 0.5 * (cond + cond.T)


def holevo_spectrum(V: float, T: float, chi_l: float, eta_e: float, v_el: float) -> np.ndarray:
    """Symplectic eigenvalues: two of (A, B) then three of the conditional state."""
    if V < 1:
        raise ValueError(f"V must be >= 1: {V!r}")
    if not 0 < T <= 1:
        raise ValueError(f"T must be in (0, 1]: {T!r}")
    lam_ab = symplectic_spectrum(channel_covariance(V, T, chi_l))
    lam_cond = symplectic_spectrum(conditional_covariance(V, T, chi_l, eta_e, v_el))
    lam = np.concatenate([lam_ab, lam_cond])
    if np.any(lam < 1.0 - PHYSICAL_TOL):
        raise NumericalError(f"unphysical symplectic spectrum: {lam}")
    return np.maximum(lam, 1.0)


def holevo_bound(V: float, T: float, chi_l: float, eta_e: float, v_el: float) -> float:
    lam = holevo_spectrum(V, T, chi_l, eta_e, v_el)
    return max(0.0, sum(g_function(x) for x in lam[:2]) - sum(g_function(x) for x in lam[2:]))


def closed_form_spectrum(V: float, T: float, chi_l: float, eta_e: float, v_el: float) -> np.ndarray:
    """Textbook closed forms for the heterodyne spectrum (used as a cross-check)."""
    chi_h = (2.0 - eta_e + 2.0 * v_el) / eta_e
    chi_t = chi_l + chi_h / T
    A = V**2 * (1.0 - 2.0 * T) + 2.0 * T + T**2 * (V + chi_l) ** 2
    B = T**2 * (V * chi_l + 1.0) ** 2
    root = math.sqrt(max(A**2 - 4.0 * B, 0.0))
    l1, l2 = math.sqrt((A + root) / 2.0), math.sqrt((A - root) / 2.0)
    denom = (T * (V + chi_t)) ** 2
    C = (A * chi_h**2 + B + 1.0 + 2.0 * chi_h * (V * math.sqrt(B) + T * (V + chi_l))
         + 2.0 * T * (V**2 - 1.0)) / denom
    D = (V + math.sqrt(B) * chi_h) ** 2 / denom
    root = math.sqrt(max(C**2 - 4.0 * D, 0.0))
    l3, l4 = math.sqrt((C + root) / 2.0), math.sqrt((C - root) / 2.0)
    return np.array([l1, l2, l3, l4, 1.0])


# --- rates ---------------------------------------------------------------------

def channel_noise(T: float, eps: float) -> float:
    """Channel-added noise referred to the input, ``1/T - 1 + eps``."""
    return 1.0 / T - 1.0 + eps


def asymptotic_rate(config: ProtocolConfig, T: float, eps: float) -> LinkKeyRate:
    """``eta I_AB - chi_BE``, floored at zero (``r_raw`` keeps the sign)."""
    if not 0 < T <= 1:
        raise ValueError(f"T must be in (0, 1]: {T!r}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0: {eps!r}")
    chi_l = channel_noise(T, eps)
    I_AB = link_mutual_information(config, T, eps)
    lam = holevo_spectrum(config.V, T, chi_l, config.eta_e, config.v_el)
    chi_BE = max(0.0, sum(g_function(x) for x in lam[:2]) - sum(g_function(x) for x in lam[2:]))
    r_raw = config.eta * I_AB - chi_BE
    chi_h = (2.0 - config.eta_e + 2.0 * config.v_el) / config.eta_e
    return LinkKeyRate(
        I_AB=I_AB,
        chi_BE=chi_BE,
        r_asym=max(0.0, r_raw),
        r_raw=r_raw,
        eigenvalues=tuple(float(x) for x in lam),
        inputs_echo={"V": config.V, "T": T, "eps": eps, "chi_l": chi_l,
                     "chi_t": chi_l + chi_h / T, "chi_h": chi_h},
    )


def delta_term(N_g: float, config: ProtocolConfig) -> float:
    """Finite-size penalty from smooth min-entropy convergence and privacy
    amplification."""
    if not N_g >= 1:
        raise ValueError(f"N_g must be >= 1: {N_g!r}")
    return ((2 * config.dim_HX + 3) * math.sqrt(math.log2(2.0 / config.eps_bar) / N_g)
            + 2.0 / N_g * math.log2(1.0 / config.eps_PA))


def finite_size_rate(config: ProtocolConfig, T_min: float, V_eps_max: float) -> LinkKeyRate:
    """Rate at the worst-case parameters, scaled by the key-generation fraction."""
    Delta = delta_term(config.N_g, config)
    if not T_min > 0:
        return LinkKeyRate(I_AB=0.0, chi_BE=math.nan, r_asym=0.0, r_raw=-math.inf,
                           R_finite=0.0, R_raw=-math.inf, Delta=Delta,
                           inputs_echo={"T": T_min, "V_eps": V_eps_max})
    T = min(T_min, 1.0)
    eps = max(0.0, V_eps_max / T_min)
    base = asymptotic_rate(config, T, eps)
    R_raw = config.N_g / config.N_0 * (base.r_raw - Delta)
    return LinkKeyRate(
        I_AB=base.I_AB,
        chi_BE=base.chi_BE,
        r_asym=base.r_asym,
        r_raw=base.r_raw,
        R_finite=max(0.0, R_raw),
        R_raw=R_raw,
        Delta=Delta,
        eigenvalues=base.eigenvalues,
        inputs_echo={**base.inputs_echo, "V_eps": V_eps_max},
    )
