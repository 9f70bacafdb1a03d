import math
from dataclasses import replace

import numpy as np
import pytest

from cvqss.config import ChannelGeometry, ConfigError
from cvqss.interruption import interruption_probability, interruption_report, qss_noninterruption
from cvqss.turbulence import beam_statistics


def quadrature_oracle(geometry, var_x0, n=400_001):
    """1 minus the Gaussian mass of the focal-plane offset inside the core."""
    sigma = geometry.D_f * math.sqrt(var_x0) / geometry.L
    a = geometry.d_cor / 2
    x = np.linspace(-a, a, n)
    pdf = np.exp(-x**2 / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
    return 1.0 - np.trapezoid(pdf, x)


@pytest.mark.parametrize("L", [2000.0, 8000.0, 20000.0])
def test_matches_quadrature(L):
    geom = replace(ChannelGeometry(), L=L)
    var = beam_statistics(geom).var_x0
    assert interruption_probability(geom, var) == pytest.approx(quadrature_oracle(geom, var), abs=1e-10)


def test_limits():
    geom = ChannelGeometry()
    assert interruption_probability(geom, 0.0) == 0.0
    assert interruption_probability(replace(geom, d_cor=1.0), 1e-3) < 1e-300
    assert interruption_probability(geom, 1e10) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ConfigError):
        interruption_probability(geom, -1.0)


def test_products():
    assert qss_noninterruption([0.0, 0.0, 0.0]) == 1.0
    assert qss_noninterruption([1.0, 0.0]) == 0.0
    assert qss_noninterruption([0.1, 0.2]) == pytest.approx(0.72, abs=1e-15)
    assert interruption_report([0.5]).Pr_qss_non == 0.5
    with pytest.raises(ValueError):
        qss_noninterruption([1.5])
