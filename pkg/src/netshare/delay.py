"""Palm ideal per-bit delay: serving probabilities, kernel and fixed-point solve.

The fixed-point state is the reference-class delay per operator,
``tau_ref[i]``.  It enters the right-hand side only through the busy
probability of interfering BSs (their utilisation ``tau_ref[i] / tau0_J``);
every other class delay follows from ``tau_j^i = tau_ref[i] / w_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import DelaySolution, ModelError, NetworkModel
from .geometry import QuadratureSpec, nearest_bs_pdf, radial_rule
from .radio import interference_coefficient, mean_interference, shannon_capacity


@dataclass(frozen=True)
class FixedPointSpec:
    rel_tol: float = 1e-8
    max_iters: int = 200
    damping: float = 1.0
    init: str = "noise-only"
    # Interfering BSs cannot be busy more than all the time; only bites at infeasible points.
    clamp_busy: bool = True

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.init not in ("noise-only", "custom"):
            raise ValueError("init must be 'noise-only' or 'custom'")


class FixedPointError(RuntimeError):
    """Raised when the delay iteration does not converge."""

    def __init__(self, msg: str, last_iterate: np.ndarray, residual: float):
        super().__init__(msg)
        self.last_iterate = last_iterate
        self.residual = residual


def serving_probability(m: NetworkModel) -> np.ndarray:
    """Probability that the typical user is served by each operator.

    Evaluates the co-location mixture exactly as written::

        p_i = lam_c / L * c + (beta_i lam_i - lam_c / I) / (L - lam_c) * (1 - c)

    with ``L = sum beta lam`` and ``lam_c = c L / I``.  These only sum to one
    for c in {0, 1}; set ``m.normalize_serving_probs`` to rescale them.
    """
    lam = m.active_intensities
    total = lam.sum()
    if not total > 0:
        raise ModelError("serving probabilities need sum(beta * lambda) > 0")
    n = len(lam)
    c = m.colocation
    lam_c = c * total / n
    first = lam_c / total * c
    denom = total - lam_c
    if denom > 0:
        second = (lam - lam_c / n) / denom * (1.0 - c)
    else:
        # c = 1 with a single operator: 0/0 taken as 0 by continuity
        second = np.zeros(n)
    p = first + second
    if m.normalize_serving_probs:
        p = p / p.sum()
    return p


def _effective_busy(tau_ref, tau0: float, clamp: bool):
    tau_ref = np.asarray(tau_ref, dtype=float)
    return np.minimum(tau_ref, tau0) if clamp else tau_ref


def operator_loads(m: NetworkModel) -> np.ndarray:
    """User intensity attached to each operator's BSs under ``m.load_model``."""
    lam_u = m.user_intensities
    if m.load_model == "aggregate":
        return np.full(len(lam_u), lam_u.sum())
    return lam_u


def delay_kernel(r, m: NetworkModel, i: int, tau_ref: float, clamp_busy: bool = True):
    """H_i(P, r): nearest-BS density over capacity at distance r (r clamped to r_min)."""
    total = m.total_active_intensity
    r = np.asarray(r, dtype=float)
    rc = np.maximum(r, m.radio.min_distance)
    busy = float(_effective_busy(tau_ref, m.reference_delay, clamp_busy))
    interf = mean_interference(rc, m, i, busy)
    return nearest_bs_pdf(r, total) / shannon_capacity(rc, interf, m.radio, i)


class DelayMap:
    """The delay map ``tau_ref -> T`` with every iterate-independent array precomputed.

    ``h(r)`` and the nearest-BS density depend only on ``sum beta lambda`` and
    are folded into the shared radial rule, so an application of the map
    costs one SINR evaluation per operator on the r-grid.
    """

    def __init__(self, m: NetworkModel, q: QuadratureSpec = QuadratureSpec(), clamp_busy: bool = True):
        total = m.total_active_intensity
        if not total > 0:
            raise ModelError("delay evaluation needs sum(beta * lambda) > 0")
        self.model = m
        self.clamp_busy = clamp_busy
        self.tau0 = m.reference_delay
        rule = radial_rule(float(q.truncation_multiplier))
        radio = m.radio
        n = m.n_operators
        r = np.maximum(rule.rho / math.sqrt(total), radio.min_distance)
        self._signal = radio.transmit_power * r ** (-radio.pathloss_exponent)
        self._path = r ** (2.0 - radio.pathloss_exponent)
        self._noise = np.array([radio.effective_noise(i) for i in range(n)])[:, None]
        self._coef = np.array([
            interference_coefficient(radio, op.active_intensity, self.tau0) for op in m.operators
        ])[:, None]
        bw = np.array([radio.effective_bandwidth(i) for i in range(n)])[:, None]
        load = operator_loads(m) * m.mean_weight
        # T_i = load_i * sum_k weight_k / C_i(r_k) / total
        self._scale = (load / total)[:, None] * rule.weight[None, :] / bw
        self.weights = np.array([c.weight for c in m.classes])
        self.p = serving_probability(m)

    def __call__(self, tau_ref) -> np.ndarray:
        busy = _effective_busy(tau_ref, self.tau0, self.clamp_busy)
        sinr = self._signal / (self._noise + self._coef * self._path * busy[:, None])
        return (self._scale / np.log2(1.0 + sinr)).sum(axis=1)

    def derivative(self, tau_ref) -> np.ndarray:
        """Elementwise d F_i / d tau_ref[i] (the map is diagonal across operators)."""
        tau_ref = np.asarray(tau_ref, dtype=float)
        busy = _effective_busy(tau_ref, self.tau0, self.clamp_busy)
        denom = self._noise + self._coef * self._path * busy[:, None]
        sinr = self._signal / denom
        cap = np.log2(1.0 + sinr)
        dsinr = -sinr * self._coef * self._path / denom
        dcap = dsinr / ((1.0 + sinr) * math.log(2.0))
        out = (-self._scale * dcap / cap**2).sum(axis=1)
        if self.clamp_busy:
            out = np.where(tau_ref < self.tau0, out, 0.0)
        return out

    def expand(self, tau_ref) -> tuple[np.ndarray, np.ndarray]:
        """Per-class delays ``tau[j, i] = tau_ref[i] / w_j`` and their p-mixture."""
        tau = np.asarray(tau_ref, dtype=float)[None, :] / self.weights[:, None]
        return tau, tau @ self.p


def ideal_delay_rhs(tau_ref: Sequence[float], m: NetworkModel, q: QuadratureSpec = QuadratureSpec(),
                    clamp_busy: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One application of the delay map.

    Returns ``(tau[j, i], tau_mix[j])`` where ``tau[j, i] = T_i / w_j`` with
    ``T_i = load_i * sum_j(gamma_j w_j) * int h(r) H_i(P, r) dr``, and
    ``tau_mix = tau @ p``.
    """
    tau_ref = np.asarray(tau_ref, dtype=float)
    if np.any(tau_ref < 0):
        raise ValueError("delay iterate must be >= 0")
    f = DelayMap(m, q, clamp_busy)
    return f.expand(f(tau_ref))


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = np.maximum(np.abs(new), np.abs(old))
    diff = np.abs(new - old)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    return float(rel.max()) if rel.size else 0.0


def solve_delay_newton(m: NetworkModel, rel_tol: float = 1e-12, max_iters: int = 50,
                       q: QuadratureSpec = QuadratureSpec()) -> DelaySolution:
    """Same fixed point as :func:`solve_delay_fixed_point`, found by safeguarded Newton.

    Operators decouple, and each ``F_i`` is increasing and concave in its own
    delay, so Newton on ``F(x) - x`` from the noise-only point climbs
    monotonically to the smallest fixed point.  Used inside the optimizer,
    where thousands of solves are needed.
    """
    f = DelayMap(m, q, clamp_busy=True)
    x = f(np.zeros(m.n_operators))
    residual = math.inf
    for it in range(1, max_iters + 1):
        fx = f(x)
        slope = f.derivative(x)
        step = np.where(slope < 1.0, (fx - x) / np.maximum(1.0 - slope, 1e-12), fx - x)
        new = x + step
        # fall back to a plain map step whenever Newton overshoots
        bad = ~np.isfinite(new) | (new < 0)
        new = np.where(bad, fx, new)
        residual = _relative_change(new, x)
        x = new
        if residual <= rel_tol:
            tau, mix = f.expand(x)
            return DelaySolution(tau_bar=tau, tau_bar_mix=mix, p=f.p.copy(),
                                 iterations=it, residual=residual)
    raise FixedPointError(f"Newton delay solve did not converge (residual {residual:.3e})",
                          last_iterate=x, residual=residual)


def solve_delay_fixed_point(m: NetworkModel, spec: FixedPointSpec = FixedPointSpec(),
                            q: QuadratureSpec = QuadratureSpec(),
                            init: Optional[Sequence[float]] = None) -> DelaySolution:
    """Iterate the delay map from the noise-only point (or ``init``) to its fixed point.

    ``tau <- (1 - damping) tau + damping * F(tau)`` until the largest relative
    change is at most ``spec.rel_tol``.  Raises :class:`FixedPointError` with
    the last iterate after ``spec.max_iters`` map applications.
    """
    f = DelayMap(m, q, spec.clamp_busy)
    if init is not None:
        x = np.asarray(init, dtype=float).copy()
        if np.any(x < 0):
            raise ValueError("initial delays must be >= 0")
        iters = 0
    else:
        x = f(np.zeros(m.n_operators))
        iters = 1
    d = spec.damping
    residual = math.inf
    while iters < spec.max_iters:
        new = (1.0 - d) * x + d * f(x)
        residual = _relative_change(new, x)
        x = new
        iters += 1
        if residual <= spec.rel_tol:
            tau, mix = f.expand(x)
            return DelaySolution(tau_bar=tau, tau_bar_mix=mix, p=f.p.copy(),
                                 iterations=iters, residual=residual)
    raise FixedPointError(
        f"delay fixed point did not converge in {spec.max_iters} iterations (residual {residual:.3e})",
        last_iterate=x,
        residual=residual,
    )
