"""Link interruption from angle-of-arrival fluctuations.

The focal spot wanders with standard deviation ``D_f * sqrt(<x0^2>) / d``;
the link drops whenever the spot leaves the fibre core.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy import special

from .config import ChannelGeometry, ConfigError


@dataclass(frozen=True)
class InterruptionReport:
    per_link_P: tuple[float, ...]
    Pr_qss_non: float


def interruption_probability(geometry: ChannelGeometry, var_x0: float) -> float:
    """Probability that the focused spot misses a core of diameter ``d_cor``.

    ``var_x0`` is the beam-centroid variance at the receiver and
    ``geometry.L`` the link distance.
    """
    errors = [f"{name} must be > 0" for name in ("d_cor", "D_f", "L")
              if not getattr(geometry, name) > 0]
    if not var_x0 >= 0:
        errors.append(f"var_x0 must be >= 0: {var_x0!r}")
    if errors:
        raise ConfigError(errors)
    if var_x0 == 0:
        return 0.0
    sigma = geometry.D_f * math.sqrt(var_x0) / geometry.L
    return float(special.erfc(geometry.d_cor / (2.0 * math.sqrt(2.0) * sigma)))


def qss_noninterruption(P_list: Sequence[float]) -> float:
    """Probability that none of the links is interrupted."""
    out = 1.0
    for P in P_list:
        if not 0.0 <= P <= 1.0:
            raise ValueError(f"interruption probability out of [0,1]: {P!r}")
        out *= 1.0 - P
    return out


def interruption_report(P_list: Sequence[float]) -> InterruptionReport:
    return InterruptionReport(tuple(float(p) for p in P_list), qss_noninterruption(P_list))
