"""System-level key rates of the n-participant free-space network.

Participant ``U_j`` sits at distance ``d_j`` from the dealer, with ``U_1``
the farthest. Each link is simulated as one free-space span through the
elliptic-beam model. The system rate is the smallest link rate times the
probability that no link is interrupted.

Under attack the dealer only sees attack-averaged moments on the attacked
link. Feeding those through the pipeline gives the estimated rate ``K_c``;
averaging the per-outcome rates gives the real rate ``K_r``.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from . import attacks as atk
from .config import (AttackSpec, ChannelGeometry, ProtocolConfig, SimulationOptions, check)
from .estimation import ChannelEstimate, estimate_channel
from .interruption import interruption_probability, qss_noninterruption
from .keyrate import LinkKeyRate, asymptotic_rate, finite_size_rate
from .noise import NoiseBudget, noise_budget
from .turbulence import Moments, TransmittanceStats, beam_statistics, monte_carlo_stats

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("L", "Cn2", "n", "V_M", "p_t", "p_u", "N_0")
THREADS_ENV = "QSS_SIM_THREADS"


@dataclass(frozen=True)
class QssScenario:
    config: ProtocolConfig = ProtocolConfig()
    geometry: ChannelGeometry = ChannelGeometry()
    attack: AttackSpec = AttackSpec()
    options: SimulationOptions = SimulationOptions()
    placement: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        check(self.config, self.geometry, self.attack, self.options)
        d = self.distances()
        if len(d) != self.config.n:
            raise ValueError(f"placement has {len(d)} distances, expected n = {self.config.n}")
        if any(x <= 0 for x in d) or max(d) != d[0]:
            raise ValueError("placement must be positive with d_1 the longest distance")

    def distances(self) -> tuple[float, ...]:
        if self.placement is not None:
            return tuple(float(x) for x in self.placement)
        n, L = self.config.n, self.geometry.L
        return tuple((n - j) * L / n for j in range(n))

    @property
    def mode(self) -> str:
        return self.options.mode


@dataclass(frozen=True)
class LinkChannel:
    index: int
    distance: float
    var_x0: float
    P: float
    stats: TransmittanceStats
    habs_factor: float

    @property
    def moments(self) -> Moments:
        """Link moments including the downstream beamsplitter passes."""
        return Moments(self.stats.mean_T * self.habs_factor,
                       self.stats.mean_sqrtT * math.sqrt(self.habs_factor))


@dataclass(frozen=True)
class LinkEvaluation:
    moments: Moments
    noise: NoiseBudget
    estimate: ChannelEstimate
    asymptotic: LinkKeyRate
    finite: Optional[LinkKeyRate]
    rate: float


@dataclass(frozen=True)
class SystemRate:
    K: float
    rates: tuple[float, ...]
    argmin_link: int
    Pr_qss_non: float
    links: tuple[LinkEvaluation, ...]


@dataclass(frozen=True)
class QssReport:
    K: float
    K_c: float
    K_r: float
    Delta_K: float
    Pr_qss_non: float
    argmin_link: int
    per_link: tuple[LinkChannel, ...]
    per_scenario: tuple[tuple[str, float, float], ...]
    scenarios: atk.ScenarioMoments
    baseline: SystemRate
    combined: SystemRate
    attacked: tuple[SystemRate, ...]


# --- channels -------------------------------------------------------------------

def link_seed(seed: int, index: int) -> int:
    """Independent, reproducible seed for link ``index`` (0-based)."""
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, dtype=np.uint64)[0])


@lru_cache(maxsize=4096)
def _cached_stats(geometry: ChannelGeometry, n_samples: int, seed: int, alpha_mode: str) -> TransmittanceStats:
    return monte_carlo_stats(geometry, n_samples, seed, alpha_mode)


def link_channels(scenario: QssScenario) -> tuple[LinkChannel, ...]:
    cfg, opts = scenario.config, scenario.options
    out = []
    for j, d in enumerate(scenario.distances()):
        geom = replace(scenario.geometry, L=d)
        stats = _cached_stats(geom, opts.n_samples, link_seed(opts.seed, j), opts.alpha_mode)
        var_x0 = beam_statistics(geom).var_x0
        habs = cfg.T_H ** (cfg.n - 1 - j) if opts.habs else 1.0
        out.append(LinkChannel(j + 1, d, var_x0, interruption_probability(geom, var_x0), stats, habs))
    return tuple(out)


# --- link pipeline ----------------------------------------------------------------

def evaluate_link(config: ProtocolConfig, moments: Moments, T_means: Sequence[float],
                  mode: str = "finite", chi_mode: str = "mean",
                  T_samples: Optional[np.ndarray] = None, E_R2: Optional[float] = None,
                  m: Optional[float] = None) -> LinkEvaluation:
    """Noise budget, estimators, bounds and rate for one link.

    ``m`` overrides the estimation block size used for the bounds.
    """
    budget = noise_budget(moments, T_means, config, E_R2=E_R2, chi_mode=chi_mode, T_samples=T_samples)
    est = estimate_channel(moments.mean_T, moments.mean_sqrtT, config, budget.total, m=m)
    if est.T_hat > 0:
        asym = asymptotic_rate(config, min(est.T_hat, 1.0), est.V_eps_hat / est.T_hat)
    else:
        asym = LinkKeyRate(I_AB=0.0, chi_BE=math.nan, r_asym=0.0, r_raw=-math.inf)
    finite = finite_size_rate(config, est.T_min, est.V_eps_max) if mode == "finite" else None
    rate = finite.R_finite if finite is not None else asym.r_asym
    return LinkEvaluation(moments, budget, est, asym, finite, rate)


def _samples_for(channel: LinkChannel, moments: Moments) -> np.ndarray:
    base = channel.stats.samples * channel.habs_factor
    return base * (moments.mean_T / channel.moments.mean_T)


def system_rate(scenario: QssScenario, channels: Optional[Sequence[LinkChannel]] = None,
                attacked: Optional[Moments | Sequence[float]] = None, m: Optional[float] = None) -> SystemRate:
    """Interruption-weighted minimum link rate.

    ``attacked`` gives E[T] and E[sqrt T] multipliers ``(m_T, m_sqrtT)``
    applied to the attacked links (link 1 unless ``attack_all_links``).
    """
    channels = link_channels(scenario) if channels is None else channels
    opts = scenario.options
    m_T, m_s = (1.0, 1.0) if attacked is None else attacked
    moments = []
    for ch in channels:
        hit = attacked is not None and (ch.index == 1 or opts.attack_all_links)
        base = ch.moments
        moments.append(Moments(base.mean_T * m_T, base.mean_sqrtT * m_s) if hit else base)
    T_means = [m.mean_T for m in moments]

    links = []
    for ch, mom in zip(channels, moments):
        samples = _samples_for(ch, mom) if opts.chi_mode == "sample" else None
        links.append(evaluate_link(scenario.config, mom, T_means, opts.mode, opts.chi_mode, samples, m=m))
    rates = tuple(ev.rate for ev in links)
    argmin = int(np.argmin(rates))
    if argmin != 0 and rates[argmin] < rates[0]:
        log.info("link %d has a lower rate than link 1", argmin + 1)
    Pr = qss_noninterruption([ch.P for ch in channels])
    return SystemRate(Pr * rates[argmin], rates, argmin + 1, Pr, tuple(links))


def _multipliers(table: atk.ScenarioMoments, baseline: Moments) -> list[tuple[float, float]]:
    return [(t / baseline.mean_T if baseline.mean_T else 0.0,
             s / baseline.mean_sqrtT if baseline.mean_sqrtT else 0.0)
            for t, s in zip(table.E_T, table.E_sqrtT)]


def attack_table(scenario: QssScenario) -> atk.ScenarioMoments:
    """Four-outcome table on unit baseline moments, i.e. pure multipliers."""
    return atk.per_scenario_moments(Moments(1.0, 1.0), scenario.attack)


def run(scenario: QssScenario) -> QssReport:
    """Evaluate K (no attack), K_c and K_r for a scenario."""
    channels = link_channels(scenario)
    table = attack_table(scenario)
    unit = Moments(1.0, 1.0)

    baseline = system_rate(scenario, channels)
    per = []
    for name, mult in zip(table.names, _multipliers(table, unit)):
        per.append(baseline if name == "ntu" and mult == (1.0, 1.0) else system_rate(scenario, channels, mult))
    combined = system_rate(scenario, channels, atk.combined_moments(table))

    K_r = 0.0
    for w, res in zip(table.weights, per):
        K_r += w * res.K
    K_c = combined.K
    return QssReport(
        K=baseline.K,
        K_c=K_c,
        K_r=K_r,
        Delta_K=K_c - K_r,
        Pr_qss_non=baseline.Pr_qss_non,
        argmin_link=baseline.argmin_link,
        per_link=channels,
        per_scenario=tuple((name, res.K, w) for name, res, w in zip(table.names, per, table.weights)),
        scenarios=table,
        baseline=baseline,
        combined=combined,
        attacked=tuple(per),
    )


def estimated_key_rate(scenario: QssScenario) -> float:
    return run(scenario).K_c


def real_key_rate(scenario: QssScenario) -> float:
    return run(scenario).K_r


# --- link-1 diagnostics for figures --------------------------------------------

def link1_scenarios(scenario: QssScenario, m: Optional[float] = None) -> dict[str, LinkEvaluation]:
    """Link-1 evaluations for each attack outcome plus the combined view ``"c"``."""
    channels = link_channels(scenario)
    table = attack_table(scenario)
    mults = dict(zip(table.names, _multipliers(table, Moments(1.0, 1.0))))
    mults["c"] = tuple(atk.combined_moments(table))
    return {name: system_rate(scenario, channels, mult, m=m).links[0] for name, mult in mults.items()}


# --- sweeps -------------------------------------------------------------------------

def with_parameter(scenario: QssScenario, parameter: str, value: float) -> QssScenario:
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMS}")
    cfg, geom, attack = scenario.config, scenario.geometry, scenario.attack
    if parameter in ("L", "Cn2"):
        geom = replace(geom, **{parameter: float(value)})
    elif parameter == "n":
        if int(value) != value:
            raise ValueError(f"n must be an integer: {value!r}")
        cfg = replace(cfg, n=int(value))
        for name in ("d_dB", "R_e", "R_p"):
            field_value = getattr(cfg, name)
            if not isinstance(field_value, (int, float)):
                raise ValueError(f"cannot sweep n with per-participant {name}")
        return replace(scenario, config=cfg, placement=None)
    elif parameter == "V_M":
        cfg = replace(cfg, V_M=float(value))
    elif parameter in ("p_t", "p_u"):
        attack = replace(attack, **{parameter: float(value)})
    elif parameter == "N_0":
        scale = value / cfg.N_0
        cfg = replace(cfg, N_0=int(value), N_g=int(round(cfg.N_g * scale)), m=int(round(cfg.m * scale)))
    return replace(scenario, config=cfg, geometry=geom, attack=attack)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def report_row(parameter: str, value: float, scenario: QssScenario, report: QssReport) -> dict:
    return {
        "sweep_param": parameter,
        "value": value,
        "K": report.K,
        "K_c": report.K_c,
        "K_r": report.K_r,
        "Delta_K": report.Delta_K,
        "Pr_qss_non": report.Pr_qss_non,
        "argmin_link": report.argmin_link,
        "V_M_used": scenario.config.V_M,
        "seed": scenario.options.seed,
    }


def sweep(scenario: QssScenario, parameter: str, values: Iterable[float]) -> list[dict]:
    """One report row per value; rows keep the order of ``values``."""
    points = [with_parameter(scenario, parameter, v) for v in values]
    workers = min(_threads(), max(1, len(points)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, points))
    else:
        reports = [run(p) for p in points]
    return [report_row(parameter, v, p, r) for v, p, r in zip(values, points, reports)]


@dataclass(frozen=True)
class ModulationOptimum:
    V_M_star: float
    index: int
    grid: tuple[float, ...]
    curve: tuple[float, ...]
    interior: bool
    flag: str


def optimize_modulation(scenario: QssScenario, V_M_grid: Sequence[float], rate: str = "K_r") -> ModulationOptimum:
    """Grid search of the system rate over the modulation variance."""
    grid = tuple(float(v) for v in V_M_grid)
    if not grid or any(v <= 0 for v in grid):
        raise ValueError("V_M grid must be non-empty and positive")
    if rate not in ("K", "K_c", "K_r"):
        raise ValueError(f"rate must be K, K_c or K_r: {rate!r}")
    rows = sweep(scenario, "V_M", grid)
    curve = tuple(row[rate] for row in rows)
    idx = int(np.argmax(curve))
    if max(curve) <= 0:
        flag = "no positive rate"
    elif len(grid) > 1 and idx in (0, len(grid) - 1):
        flag = "boundary maximum"
    else:
        flag = "interior maximum" if len(grid) > 1 else "single point"
    return ModulationOptimum(grid[idx], idx, grid, curve, flag == "interior maximum", flag)
