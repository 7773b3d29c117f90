"""BS power model and the delay-to-utilisation mapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DelaySolution, EnergyParams, NetworkModel


class InfeasibleError(ValueError):
    """The ideal delay already exceeds the target: no utilisation can meet it."""


@dataclass(frozen=True)
class PowerBreakdown:
    fixed: float
    load: float
    total: float
    utilization: float
    idle_fraction: float


def bs_power(U: float, e: EnergyParams, P: float) -> float:
    """Power drawn by one BS at utilisation U: ``q1 + U (q2 + q3 P)``."""
    if not 0.0 <= U <= 1.0:
        raise ValueError(f"utilization {U} outside [0, 1]")
    return e.q1 + U * (e.q2 + e.q3 * P)


def utilization_from_delay(tau_ideal: float, tau_target: float, rtol: float = 1e-9) -> float:
    """Smallest utilisation delivering the target delay when actual = ideal / U.

    A BS stretches its idle time until the actual per-bit delay equals the
    target, so ``U = ideal / target``.  Raises :class:`InfeasibleError` when
    the ideal delay is already above the target (beyond ``rtol``).
    """
    if tau_ideal < 0:
        raise ValueError("ideal delay must be >= 0")
    U = tau_ideal / tau_target
    if U > 1.0 + rtol:
        raise InfeasibleError(f"ideal delay {tau_ideal:.4g} exceeds target {tau_target:.4g}")
    return min(U, 1.0)


def idle_fraction(U: float, weighted_users: float) -> float:
    """WPS idle knob iota with ``U = S / (S + iota)`` for weighted load S."""
    if U <= 0:
        return float("inf") if weighted_users > 0 else 0.0
    return weighted_users * (1.0 - U) / U


def power_breakdown(U: float, e: EnergyParams, P: float, weighted_users: float = 1.0) -> PowerBreakdown:
    load = U * (e.q2 + e.q3 * P)
    return PowerBreakdown(fixed=e.q1, load=load, total=e.q1 + load, utilization=U,
                          idle_fraction=idle_fraction(U, weighted_users))


def network_power(m: NetworkModel, d: DelaySolution, rtol: float = 1e-9) -> tuple[float, list[PowerBreakdown]]:
    """Area power density ``sum_i beta_i lambda_i E_i(U_i, P)`` in W/m² with per-BS breakdowns."""
    tau0 = m.reference_delay
    P = m.radio.transmit_power
    total = 0.0
    parts = []
    for i, op in enumerate(m.operators):
        U = utilization_from_delay(float(d.tau_ref[i]), tau0, rtol) if op.active_intensity > 0 else 0.0
        b = power_breakdown(U, op.energy, P)
        parts.append(b)
        total += op.active_intensity * b.total
    return total, parts


def load_share(U: float, e: EnergyParams, P: float) -> float:
    """Fraction of a BS's power that scales with utilisation."""
    return U * (e.q2 + e.q3 * P) / bs_power(U, e, P)


def utilizations(m: NetworkModel, d: DelaySolution) -> np.ndarray:
    """Per-operator ``tau_ref / tau0_J``; values above 1 flag infeasibility."""
    return d.tau_ref / m.reference_delay
