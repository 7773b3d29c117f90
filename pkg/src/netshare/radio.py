"""Link-level quantities: Shannon capacity and the mean-interference closure."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import ModelError, NetworkModel, RadioParams


@dataclass(frozen=True)
class LinkBudget:
    sinr: float
    capacity: float
    interference: float
    noise: float


def shannon_capacity(r, interference, radio: RadioParams, i: int = 0):
    """Capacity in bit/s of a user at distance ``r`` from its serving BS of operator ``i``.

    ``(B_i / k) log2(1 + P r^-alpha / (N + I))`` with N the noise over B_i/k.
    ``r`` must be strictly positive; callers clamp to ``radio.min_distance``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be > 0 (clamp to radio.min_distance)")
    noise = radio.effective_noise(i)
    sinr = radio.transmit_power * r ** (-radio.pathloss_exponent) / (noise + np.asarray(interference))
    out = radio.effective_bandwidth(i) * np.log2(1.0 + sinr)
    return out if np.ndim(out) else float(out)


def link_budget(r: float, interference: float, radio: RadioParams, i: int = 0) -> LinkBudget:
    noise = radio.effective_noise(i)
    sinr = radio.transmit_power * r ** (-radio.pathloss_exponent) / (noise + interference)
    return LinkBudget(
        sinr=sinr,
        capacity=shannon_capacity(r, interference, radio, i),
        interference=interference,
        noise=noise,
    )


def interference_coefficient(radio: RadioParams, active_intensity: float, tau0_ref: float) -> float:
    """Coefficient K with mean interference ``K * r^(2-alpha) * tau_ref``."""
    alpha = radio.pathloss_exponent
    if not alpha > 2:
        raise ModelError("pathloss_exponent must exceed 2 (mean interference diverges)")
    return (
        2.0 * radio.transmit_power * math.pi
        / (tau0_ref * radio.reuse_factor * (alpha - 2.0))
        * active_intensity
    )


def mean_interference(r, m: NetworkModel, i: int, tau_ref: float):
    """Mean interference at a user of operator ``i`` at distance ``r`` from its BS.

    ``2 P pi r^(2-alpha) / (tau0_J k (alpha - 2)) * tau_ref * beta_i lambda_i``.
    Interferers are the active BSs of the same operator beyond ``r``, each
    transmitting a fraction ``tau_ref / tau0_J`` of the time (its utilisation),
    on the same reuse sub-band with probability 1/k.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be > 0")
    coef = interference_coefficient(m.radio, m.operators[i].active_intensity, m.reference_delay)
    out = coef * r ** (2.0 - m.radio.pathloss_exponent) * tau_ref
    return out if np.ndim(out) else float(out)
