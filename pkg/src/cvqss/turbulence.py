"""Elliptic-beam model of an atmospheric free-space link.

The received spot is a random ellipse: centroid ``(x0, y0)``, semi-axes
``W_i = W_0 exp(phi_i / 2)`` and orientation ``theta``. The Gaussian vector
``(x0, y0, phi_1, phi_2)`` has moments fixed by the Rytov variance and the
Fresnel parameter of the path; ``theta`` is uniform on [0, pi/2].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from .config import ALPHA_MODES, ChannelGeometry, ConfigError, validate_geometry

log = logging.getLogger(__name__)

#: Monte-Carlo draws are produced in fixed-size chunks, each with its own
#: spawned generator, so results do not depend on how chunks are scheduled.
CHUNK = 4096


class NumericalError(ArithmeticError):
    """A numerical evaluation produced a non-finite or out-of-range value."""


class Moments(NamedTuple):
    """First moments of a transmittance law: E[T] and E[sqrt(T)]."""

    mean_T: float
    mean_sqrtT: float


@dataclass(frozen=True)
class BeamStatistics:
    mean: np.ndarray
    cov: np.ndarray
    rytov: float
    omega: float
    W_0: float
    theta_range: tuple[float, float] = (0.0, math.pi / 2)

    @property
    def var_x0(self) -> float:
        return float(self.cov[0, 0])


@dataclass(frozen=True)
class BeamVector:
    x0: float
    y0: float
    W1: float
    W2: float
    theta: float


@dataclass(frozen=True)
class BeamSamples:
    """Column arrays of sampled beams."""

    x0: np.ndarray
    y0: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    theta: np.ndarray

    def __len__(self) -> int:
        return len(self.x0)

    def __getitem__(self, i: int) -> BeamVector:
        return BeamVector(float(self.x0[i]), float(self.y0[i]), float(self.W1[i]),
                          float(self.W2[i]), float(self.theta[i]))


@dataclass(frozen=True)
class TransmittanceStats:
    mean_T: float
    mean_sqrtT: float
    var_sqrtT: float
    samples: np.ndarray
    n_samples: int
    seed: Optional[int]
    se_T: float = 0.0
    se_sqrtT: float = 0.0
    beams: Optional[BeamSamples] = field(default=None, repr=False)

    @property
    def moments(self) -> Moments:
        return Moments(self.mean_T, self.mean_sqrtT)


# --- beam statistics ---------------------------------------------------------

def rytov_variance(geometry: ChannelGeometry) -> float:
    return 1.23 * geometry.Cn2 * geometry.k ** (7 / 6) * geometry.L ** (11 / 6)


def fresnel_parameter(geometry: ChannelGeometry) -> float:
    return geometry.k * geometry.W_0**2 / (2.0 * geometry.L)


def beam_statistics(geometry: ChannelGeometry) -> BeamStatistics:
    """Mean and covariance of ``(x0, y0, phi_1, phi_2)`` for a path."""
    errors = validate_geometry(geometry)
    if errors:
        raise ConfigError(errors)
    s2 = rytov_variance(geometry)
    omega = fresnel_parameter(geometry)
    var_x0 = 0.33 * geometry.W_0**2 * s2 * omega ** (-6 / 7)

    q = s2 * omega ** (5 / 6)
    spread = (1.0 + 2.96 * q) ** 2
    mean_phi = math.log(spread / (omega**2 * math.sqrt(spread + 1.2 * q)))
    var_phi = math.log1p(1.2 * q / spread)
    cov_phi = math.log1p(-0.8 * q / spread)

    mean = np.array([0.0, 0.0, mean_phi, mean_phi])
    cov = np.diag([var_x0, var_x0, var_phi, var_phi])
    cov[2, 3] = cov[3, 2] = cov_phi
    return BeamStatistics(mean=mean, cov=cov, rytov=s2, omega=omega, W_0=geometry.W_0)


def _phi_factor(block: np.ndarray) -> np.ndarray:
    """Square-root factor of the 2x2 phi covariance, repairing round-off."""
    try:
        return np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(block)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals.min() < -1e-9 * scale:
        raise NumericalError(f"phi covariance is not positive semi-definite: eigenvalues {vals}")
    clip = -min(0.0, float(vals.min()))
    if clip > 1e-12:
        log.warning("clipped negative phi-covariance eigenvalue of %.3g", clip)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_beams(stats: BeamStatistics, rng: np.random.Generator, size: int) -> BeamSamples:
    """Draw ``size`` independent beams."""
    if not np.all(np.isfinite(stats.cov)) or not np.allclose(stats.cov, stats.cov.T):
        raise NumericalError("beam covariance must be finite and symmetric")
    if stats.cov[0, 0] < 0 or stats.cov[1, 1] < 0:
        raise NumericalError("negative centroid variance")
    z = rng.standard_normal((size, 4))
    x0 = stats.mean[0] + math.sqrt(stats.cov[0, 0]) * z[:, 0]
    y0 = stats.mean[1] + math.sqrt(stats.cov[1, 1]) * z[:, 1]
    phi = stats.mean[2:] + z[:, 2:] @ _phi_factor(stats.cov[2:, 2:]).T
    theta = rng.uniform(*stats.theta_range, size=size)
    W1 = stats.W_0 * np.exp(0.5 * phi[:, 0])
    W2 = stats.W_0 * np.exp(0.5 * phi[:, 1])
    return BeamSamples(x0, y0, W1, W2, theta)


def sample_beam(stats: BeamStatistics, rng: np.random.Generator) -> BeamVector:
    return sample_beams(stats, rng, 1)[0]


# --- Lambert W ---------------------------------------------------------------

_INV_E = math.exp(-1.0)


def _halley(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    for _ in range(60):
        ew = np.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
            step = np.where(np.isfinite(denom) & (denom != 0), f / denom, 0.0)
        w = w - step
        if np.all(np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(w))):
            break
    return w


def lambert_w0(x):
    """Principal branch of the Lambert W function, ``w exp(w) = x``.

    Accepts scalars or arrays with ``x >= -1/e``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < -_INV_E * (1 + 1e-15)):
        raise ValueError("lambert_w0 requires x >= -1/e")
    arr = np.maximum(arr, -_INV_E)
    w = np.empty_like(arr)
    near = arr < -0.25
    p = np.sqrt(np.maximum(2.0 * (math.e * arr[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    mid = ~near & (arr <= 3.0)
    w[mid] = np.log1p(arr[mid])
    big = ~near & ~mid
    lx = np.log(arr[big])
    w[big] = lx - np.log(lx)
    w = np.where(arr == -_INV_E, -1.0, _halley(w, arr))
    w = np.where(arr == 0.0, 0.0, w)
    return float(w) if np.ndim(x) == 0 else w


def lambert_w0_of_exp(log_x):
    """``W0(exp(log_x))`` without forming ``exp(log_x)``; for large arguments."""
    lx = np.asarray(log_x, dtype=float)
    out = np.empty_like(lx)
    small = lx < 500.0
    out[small] = lambert_w0(np.exp(lx[small]))
    y = lx[~small]
    w = y - np.log(y)
    for _ in range(50):
        step = (w + np.log(w) - y) / (1.0 + 1.0 / w)
        w = w - step
        if np.all(np.abs(step) <= 4e-16 * w):
            break
    out[~small] = w
    return float(out) if np.ndim(log_x) == 0 else out


# --- transmittance -----------------------------------------------------------

def _one_minus_i0e(z: np.ndarray) -> np.ndarray:
    """``1 - exp(-z) I0(z)`` for z >= 0, accurate near zero."""
    out = 1.0 - special.i0e(z)
    small = z < 0.5
    zs = z[small]
    series = zs**2 / 4.0 * (1.0 + zs**2 / 16.0 * (1.0 + zs**2 / 36.0 * (1.0 + zs**2 / 64.0 * (1.0 + zs**2 / 100.0 * (1.0 + zs**2 / 144.0)))))
    out[small] = -np.expm1(-zs) - np.exp(-zs) * series
    return out


def shape_scale(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shape ``Q`` and scale ``R`` functions evaluated at ``z = r^2 x^2``."""
    z = np.asarray(z, dtype=float)
    denom = _one_minus_i0e(z)
    log_term = np.log(2.0) + np.log(-np.expm1(-z / 2.0)) - np.log(denom)
    Q = 2.0 * z * special.i1e(z) / denom / log_term
    R = log_term ** (-1.0 / Q)
    return Q, R


def centered_transmittance(W1, W2, r: float, W_0: float) -> np.ndarray:
    """Transmittance of an elliptic beam whose centroid hits the aperture centre."""
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    a = r**2 * (W1**-2 - W2**-2)
    b = r**2 * (W1**-2 + W2**-2)
    T0 = 1.0 - special.i0e(np.abs(a)) * np.exp(np.abs(a) - b)

    # (W1 + W2)^2 / (W1^2 - W2^2) is 0/0 for a circular beam.
    elliptic = np.abs(W1 - W2) >= 1e-9 * W_0
    if np.any(elliptic):
        w1, w2 = W1[elliptic], W2[elliptic]
        x = 1.0 / w1 - 1.0 / w2
        z = r**2 * x**2
        Q, R = shape_scale(z)
        ratio = (w1 + w2) ** 2 / np.abs(w1**2 - w2**2)
        third = -2.0 * np.expm1(-z / 2.0) * np.exp(-((ratio / R) ** Q))
        T0[elliptic] -= third
    circular = ~elliptic
    T0[circular] = -np.expm1(-2.0 * r**2 / W1[circular] ** 2)
    return T0


def effective_radius(angle, W1, W2, r: float) -> np.ndarray:
    """Effective spot radius for a beam displaced along direction ``angle``
    relative to its first semi-axis."""
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    c2 = np.cos(angle) ** 2
    s2 = np.sin(angle) ** 2
    log_arg = (np.log(4.0 * r**2 / (W1 * W2))
               + r**2 / W1**2 * (1.0 + 2.0 * c2)
               + r**2 / W2**2 * (1.0 + 2.0 * s2))
    return 2.0 * r / np.sqrt(lambert_w0_of_exp(log_arg))


def transmittance(x0, y0, W1, W2, theta, r: float, W_0: float, alpha_mode: str = "offset") -> np.ndarray:
    """Vectorised elliptic-beam transmittance.

    ``alpha_mode="offset"`` measures the ellipse orientation relative to the
    centroid-offset direction ``atan2(y0, x0)``; ``"zero"`` uses ``theta`` as is.
    """
    if alpha_mode not in ALPHA_MODES:
        raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
    x0, y0, W1, W2, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x0, y0, W1, W2, theta)))
    if np.any(W1 <= 0) or np.any(W2 <= 0):
        raise ValueError("semi-axes must be positive")
    W1, W2 = np.atleast_1d(W1), np.atleast_1d(W2)
    x0, y0, theta = np.atleast_1d(x0), np.atleast_1d(y0), np.atleast_1d(theta)

    T0 = centered_transmittance(W1, W2, r, W_0)
    r0 = np.hypot(x0, y0)
    alpha = np.arctan2(y0, x0) if alpha_mode == "offset" else 0.0
    W_eff = effective_radius(theta - alpha, W1, W2, r)
    Q, R = shape_scale(4.0 * r**2 / W_eff**2)
    T = T0 * np.exp(-(((r0 / r) / R) ** Q))

    if not np.all(np.isfinite(T)):
        raise NumericalError("non-finite transmittance")
    if np.any(T < -1e-12) or np.any(T > 1 + 1e-12):
        raise NumericalError(f"transmittance outside [0, 1]: [{T.min()}, {T.max()}]")
    return np.clip(T, 0.0, 1.0)


def transmittance_of_beam(beam: BeamVector, geometry: ChannelGeometry, alpha_mode: str = "offset") -> float:
    return float(transmittance(beam.x0, beam.y0, beam.W1, beam.W2, beam.theta,
                               geometry.r, geometry.W_0, alpha_mode)[0])


# --- Monte Carlo ---------------------------------------------------------------

def _chunk_rngs(seed: int, n_samples: int) -> list[np.random.Generator]:
    n_chunks = -(-n_samples // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    return [np.random.default_rng(child) for child in children]


def summarize(samples: np.ndarray, seed: Optional[int] = None, beams: Optional[BeamSamples] = None) -> TransmittanceStats:
    """Moments of a set of transmittance samples.

    ``mean_T`` is assembled as ``mean_sqrtT**2 + var_sqrtT`` so the
    Cauchy-Schwarz ordering holds exactly in floating point.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no samples")
    root = np.sqrt(samples)
    if np.ptp(root) == 0.0:
        mean_sqrt, var = float(root[0]), 0.0
    else:
        mean_sqrt = float(np.mean(root))
        var = float(np.mean((root - mean_sqrt) ** 2))
    n = samples.size
    return TransmittanceStats(
        mean_T=mean_sqrt**2 + var,
        mean_sqrtT=mean_sqrt,
        var_sqrtT=var,
        samples=samples,
        n_samples=n,
        seed=seed,
        se_T=float(np.std(samples) / math.sqrt(n)),
        se_sqrtT=math.sqrt(var / n),
        beams=beams,
    )


def monte_carlo_stats(geometry: ChannelGeometry, n_samples: int = 1000, seed: int = 0,
                      alpha_mode: str = "offset") -> TransmittanceStats:
    """Sample ``n_samples`` beams and return transmittance moments."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    stats = beam_statistics(geometry)
    parts = []
    for i, rng in enumerate(_chunk_rngs(seed, n_samples)):
        size = min(CHUNK, n_samples - i * CHUNK)
        parts.append(sample_beams(stats, rng, size))
    beams = BeamSamples(*(np.concatenate([getattr(p, name) for p in parts])
                          for name in ("x0", "y0", "W1", "W2", "theta")))
    T = transmittance(beams.x0, beams.y0, beams.W1, beams.W2, beams.theta,
                      geometry.r, geometry.W_0, alpha_mode)
    return summarize(T, seed=seed, beams=beams)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def pdf_histogram(stats: TransmittanceStats, n_bins: int = 50) -> Histogram:
    """Density histogram of the samples over [0, 1]."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if stats.samples.size == 0:
        raise ValueError("empty sample set")
    counts, edges = np.histogram(stats.samples, bins=n_bins, range=(0.0, 1.0))
    density = counts / (counts.sum() * np.diff(edges))
    return Histogram(edges=edges, density=density)
