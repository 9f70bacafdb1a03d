"""Probabilistic combinations of channel-manipulation attacks.

Each attack multiplies the link transmittance by an independent random
factor ``Y`` when it fires. Only ``E[Y]`` and ``E[sqrt(Y)]`` matter for the
estimators, so an attack is carried around as that pair of multipliers.
Two attacks are built in: the two-point attack (``Y ~ B(1, p)``) and the
uniform attack (``Y ~ U(mu, 1)``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .config import AttackSpec, validate_attack
from .turbulence import Moments

SCENARIOS = ("tu", "ou", "ot", "ntu")
MAX_ATTACKS = 20


def _unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} out of [0,1]: {value!r}")


@dataclass(frozen=True)
class AttackModifier:
    name: str
    success_prob: float
    mult_T: float
    mult_sqrtT: float

    def __post_init__(self):
        for attr in ("success_prob", "mult_T", "mult_sqrtT"):
            _unit(attr, getattr(self, attr))


@dataclass(frozen=True)
class ScenarioMoments:
    """Per-scenario transmittance moments with their probabilities."""

    names: tuple[str, ...]
    weights: tuple[float, ...]
    E_T: tuple[float, ...]
    E_sqrtT: tuple[float, ...]
    baseline: Moments

    def __len__(self) -> int:
        return len(self.weights)

    def moments(self, name: str) -> Moments:
        i = self.names.index(name)
        return Moments(self.E_T[i], self.E_sqrtT[i])

    def weight(self, name: str) -> float:
        return self.weights[self.names.index(name)]


def scenario_weights(p_t: float, p_u: float) -> tuple[float, float, float, float]:
    """Probabilities of (both, only uniform, only two-point, neither) succeeding."""
    _unit("p_t", p_t)
    _unit("p_u", p_u)
    p_tu = p_t * p_u
    p_ou = (1.0 - p_t) * p_u
    p_ot = p_t * (1.0 - p_u)
    p_ntu = 1.0 - p_tu - p_ou - p_ot
    return p_tu, p_ou, p_ot, p_ntu


def tda_moments(p: float) -> tuple[float, float]:
    """``(E[sqrt(Y)], E[Y])`` for ``Y ~ B(1, p)``."""
    _unit("p", p)
    return p, p


def uda_moments(mu: float) -> tuple[float, float]:
    """``(E[sqrt(Y)], E[Y])`` for ``Y ~ U(mu, 1)``."""
    _unit("mu", mu)
    s = math.sqrt(mu)
    return 2.0 * (mu + s + 1.0) / (3.0 * (s + 1.0)), (mu + 1.0) / 2.0


def tda_modifier(p: float, p_t: float) -> AttackModifier:
    e_sqrt, e = tda_moments(p)
    return AttackModifier("tda", p_t, e, e_sqrt)


def uda_modifier(mu: float, p_u: float) -> AttackModifier:
    e_sqrt, e = uda_moments(mu)
    return AttackModifier("uda", p_u, e, e_sqrt)


def _check_baseline(baseline: Moments) -> Moments:
    E_T, E_sqrtT = baseline
    if not (E_T >= 0 and E_sqrtT >= 0):
        raise ValueError("baseline moments must be non-negative")
    if E_sqrtT**2 > E_T * (1 + 1e-12):
        raise ValueError(f"baseline violates E[sqrt T]^2 <= E[T]: {E_sqrtT}^2 > {E_T}")
    return Moments(float(E_T), float(E_sqrtT))


def per_scenario_moments(baseline: Moments, spec: AttackSpec) -> ScenarioMoments:
    """Moments of the four attack outcomes for a link with ``baseline`` moments."""
    errors = validate_attack(spec)
    if errors:
        raise ValueError("; ".join(errors))
    E_T, E_sqrtT = _check_baseline(baseline)
    t_sqrt, t = tda_moments(spec.p)
    u_sqrt, u = uda_moments(spec.mu)
    return ScenarioMoments(
        names=SCENARIOS,
        weights=scenario_weights(spec.p_t, spec.p_u),
        E_T=(E_T * t * u, E_T * u, E_T * t, E_T),
        E_sqrtT=(E_sqrtT * t_sqrt * u_sqrt, E_sqrtT * u_sqrt, E_sqrtT * t_sqrt, E_sqrtT),
        baseline=Moments(E_T, E_sqrtT),
    )


def combined_moments(scenarios: ScenarioMoments) -> Moments:
    """Probability-weighted average over scenarios, as seen by an estimator
    that cannot tell the outcomes apart."""
    w = scenarios.weights
    if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
        raise ValueError(f"scenario weights must be a probability vector: {w}")
    E_T = 0.0
    E_sqrtT = 0.0
    for wi, t, s in zip(w, scenarios.E_T, scenarios.E_sqrtT):
        E_T += wi * t
        E_sqrtT += wi * s
    return Moments(E_T, E_sqrtT)


def combine_m_attacks(modifiers: Sequence[AttackModifier], baseline: Moments) -> ScenarioMoments:
    """Enumerate all ``2**M`` firing patterns of independent attacks.

    Patterns run from "all fire" down to "none fire" (bit ``i`` set when
    ``modifiers[i]`` fires). The all-quiet weight is one minus the others,
    accumulated in the same order, so with the two built-in attacks the
    table equals :func:`per_scenario_moments` exactly.
    """
    M = len(modifiers)
    if M > MAX_ATTACKS:
        raise ValueError(f"at most {MAX_ATTACKS} attacks can be enumerated, got {M}")
    E_T, E_sqrtT = _check_baseline(baseline)
    names, weights, ets, esqs = [], [], [], []
    rest = 1.0
    for mask in range((1 << M) - 1, -1, -1):
        fired = [i for i in range(M) if mask >> i & 1]
        if mask:
            w = 1.0
            for i, mod in enumerate(modifiers):
                w *= mod.success_prob if i in fired else 1.0 - mod.success_prob
            rest -= w
        else:
            w = rest
        t, s = E_T, E_sqrtT
        for i in fired:
            t *= modifiers[i].mult_T
            s *= modifiers[i].mult_sqrtT
        names.append("+".join(modifiers[i].name for i in fired) or "none")
        weights.append(w)
        ets.append(t)
        esqs.append(s)
    return ScenarioMoments(tuple(names), tuple(weights), tuple(ets), tuple(esqs), Moments(E_T, E_sqrtT))
