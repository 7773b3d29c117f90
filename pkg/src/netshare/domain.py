"""Configuration and result types shared across the engine.

All SI units: metres, watts, hertz, seconds, bits.  Intensities are per m².
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

BOLTZMANN_NOISE_PSD = 1.380649e-23 * 290.0  # W/Hz at 290 K

LOAD_MODELS = ("per-operator-literal", "aggregate")
ENERGY_PROFILES = ("HLP", "LLP", "custom")

# Fixed (load-independent) share of the peak BS power for the two reference profiles.
PROFILE_FIXED_SHARE = {"HLP": 0.36, "LLP": 0.75}


class ModelError(ValueError):
    """Raised when a scenario violates a model invariant."""


@dataclass(frozen=True)
class RadioParams:
    """Radio parameters common to all operators.

    ``bandwidth`` holds one entry per operator, or a single entry that is
    broadcast to every operator.  ``noise_power``, when given, is the total
    noise power over the effective band B_i/k and overrides ``noise_psd``.
    """

    transmit_power: float = 20.0
    bandwidth: tuple[float, ...] = (20e6,)
    reuse_factor: int = 1
    pathloss_exponent: float = 3.5
    noise_psd: float = BOLTZMANN_NOISE_PSD
    noise_power: Optional[float] = None
    min_distance: float = 1.0

    def bandwidth_of(self, i: int) -> float:
        if len(self.bandwidth) == 1:
            return float(self.bandwidth[0])
        return float(self.bandwidth[i])

    def effective_bandwidth(self, i: int) -> float:
        return self.bandwidth_of(i) / self.reuse_factor

    def effective_noise(self, i: int) -> float:
        if self.noise_power is not None:
            return float(self.noise_power)
        return self.noise_psd * self.effective_bandwidth(i)


@dataclass(frozen=True)
class EnergyParams:
    """Affine BS power model ``q1 + U (q2 + q3 P)``."""

    q1: float
    q2: float
    q3: float
    profile: str = "custom"

    def peak_power(self, transmit_power: float) -> float:
        return self.q1 + self.q2 + self.q3 * transmit_power

    @classmethod
    def from_profile(
        cls,
        profile: str,
        peak_power: float = 1000.0,
        transmit_power: float = 20.0,
        transmit_share: float = 0.5,
    ) -> "EnergyParams":
        """Build HLP/LLP parameters from a peak power E_max = q1 + q2 + q3 P.

        ``transmit_share`` is the part of the load-proportional power that is
        attributed to the transmit chain (``q3 P``); the rest goes to ``q2``.
        """
        if profile not in PROFILE_FIXED_SHARE:
            raise ValueError(f"unknown energy profile {profile!r}")
        fixed = PROFILE_FIXED_SHARE[profile] * peak_power
        variable = peak_power - fixed
        q3 = transmit_share * variable / transmit_power
        q2 = variable - q3 * transmit_power
        return cls(q1=fixed, q2=q2, q3=q3, profile=profile)


@dataclass(frozen=True)
class OperatorConfig:
    id: int
    deployed_intensity: float
    user_intensity: float
    energy: EnergyParams
    active_fraction: float = 1.0

    @property
    def active_intensity(self) -> float:
        return self.active_fraction * self.deployed_intensity


@dataclass(frozen=True)
class UserClassSpec:
    label: str
    target_rate: float
    share: float
    weight: float

    @property
    def target_delay(self) -> float:
        return 1.0 / self.target_rate


def make_classes(
    rates: Sequence[float],
    shares: Sequence[float],
    labels: Optional[Sequence[str]] = None,
) -> tuple[UserClassSpec, ...]:
    """Build user classes with WPS weights ``w_j = R_j / R_J``.

    The last class is the reference class (weight exactly 1).
    """
    if len(rates) != len(shares):
        raise ValueError("rates and shares must have the same length")
    if labels is None:
        labels = [f"c{j}" for j in range(len(rates))]
    ref = float(rates[-1])
    return tuple(
        UserClassSpec(label=str(lab), target_rate=float(r), share=float(s), weight=float(r) / ref)
        for lab, r, s in zip(labels, rates, shares)
    )


@dataclass(frozen=True)
class NetworkModel:
    """Analytical scenario for one time slot."""

    operators: tuple[OperatorConfig, ...]
    classes: tuple[UserClassSpec, ...]
    radio: RadioParams = field(default_factory=RadioParams)
    colocation: float = 0.0
    load_model: str = "per-operator-literal"
    normalize_serving_probs: bool = False

    @property
    def n_operators(self) -> int:
        return len(self.operators)

    @property
    def betas(self) -> np.ndarray:
        return np.array([op.active_fraction for op in self.operators], dtype=float)

    @property
    def active_intensities(self) -> np.ndarray:
        return np.array([op.active_intensity for op in self.operators], dtype=float)

    @property
    def total_active_intensity(self) -> float:
        return float(sum(op.active_intensity for op in self.operators))

    @property
    def user_intensities(self) -> np.ndarray:
        return np.array([op.user_intensity for op in self.operators], dtype=float)

    @property
    def reference_delay(self) -> float:
        """Target per-bit delay of the reference (last) class."""
        return self.classes[-1].target_delay

    @property
    def mean_weight(self) -> float:
        return math.fsum(c.share * c.weight for c in self.classes)

    def with_betas(self, betas: Sequence[float]) -> "NetworkModel":
        ops = tuple(replace(op, active_fraction=float(b)) for op, b in zip(self.operators, betas))
        return replace(self, operators=ops)

    def with_user_intensities(self, lam_u: Sequence[float]) -> "NetworkModel":
        ops = tuple(replace(op, user_intensity=float(u)) for op, u in zip(self.operators, lam_u))
        return replace(self, operators=ops)

    def with_energy(self, energy: Sequence[EnergyParams] | EnergyParams) -> "NetworkModel":
        if isinstance(energy, EnergyParams):
            energy = [energy] * self.n_operators
        ops = tuple(replace(op, energy=e) for op, e in zip(self.operators, energy))
        return replace(self, operators=ops)

    def single_operator(self, i: int, user_intensity: Optional[float] = None) -> "NetworkModel":
        """Model of operator ``i`` alone on its own band (no sharing)."""
        op = self.operators[i]
        if user_intensity is not None:
            op = replace(op, user_intensity=float(user_intensity))
        radio = replace(self.radio, bandwidth=(self.radio.bandwidth_of(i),))
        return replace(self, operators=(op,), radio=radio, colocation=0.0)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["radio"]["bandwidth"] = list(self.radio.bandwidth)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkModel":
        radio = dict(d.get("radio", {}))
        if "bandwidth" in radio:
            bw = radio["bandwidth"]
            radio["bandwidth"] = tuple(bw) if isinstance(bw, (list, tuple)) else (bw,)
        ops = []
        for k, o in enumerate(d["operators"]):
            o = dict(o)
            energy = o.pop("energy")
            if "profile" in energy and set(energy) <= {"profile", "peak_power", "transmit_share"}:
                energy = EnergyParams.from_profile(
                    energy["profile"],
                    peak_power=energy.get("peak_power", 1000.0),
                    transmit_power=radio.get("transmit_power", RadioParams.transmit_power),
                    transmit_share=energy.get("transmit_share", 0.5),
                )
            else:
                energy = EnergyParams(**energy)
            o.setdefault("id", k)
            ops.append(OperatorConfig(energy=energy, **o))
        classes = d["classes"]
        if classes and "weight" not in classes[0]:
            classes = make_classes(
                [c["target_rate"] for c in classes],
                [c["share"] for c in classes],
                [c.get("label", f"c{j}") for j, c in enumerate(classes)],
            )
        else:
            classes = tuple(UserClassSpec(**c) for c in classes)
        return cls(
            operators=tuple(ops),
            classes=tuple(classes),
            radio=RadioParams(**radio),
            colocation=d.get("colocation", 0.0),
            load_model=d.get("load_model", "per-operator-literal"),
            normalize_serving_probs=d.get("normalize_serving_probs", False),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DelaySolution:
    """Palm ideal per-bit delays.

    ``tau_bar[j, i]`` is the delay of a class-j user served by operator i,
    ``tau_bar_mix[j]`` its mixture over the serving probabilities ``p``.
    """

    tau_bar: np.ndarray
    tau_bar_mix: np.ndarray
    p: np.ndarray
    iterations: int
    residual: float

    @property
    def tau_ref(self) -> np.ndarray:
        """Reference-class delay per operator (the fixed-point state)."""
        return self.tau_bar[-1]


def validate_model(m: NetworkModel) -> list[str]:
    """Return a list of invariant violations; empty when the model is valid."""
    out: list[str] = []
    r = m.radio
    if not r.transmit_power > 0:
        out.append("radio.transmit_power: must be positive")
    if not r.bandwidth or any(not b > 0 for b in r.bandwidth):
        out.append("radio.bandwidth: every entry must be positive")
    elif len(r.bandwidth) not in (1, m.n_operators):
        out.append("radio.bandwidth: needs one entry or one per operator")
    if not (isinstance(r.reuse_factor, (int, np.integer)) and r.reuse_factor >= 1):
        out.append("radio.reuse_factor: must be an integer >= 1")
    if not r.pathloss_exponent > 2:
        out.append("radio.pathloss_exponent: pathloss_exponent must exceed 2")
    if not r.noise_psd >= 0:
        out.append("radio.noise_psd: must be >= 0")
    if r.noise_power is not None and not r.noise_power >= 0:
        out.append("radio.noise_power: must be >= 0")
    if not r.min_distance > 0:
        out.append("radio.min_distance: must be positive")

    if m.n_operators < 1:
        out.append("operators: at least one operator required")
    for k, op in enumerate(m.operators):
        tag = f"operators[{k}]"
        if not op.deployed_intensity > 0:
            out.append(f"{tag}.deployed_intensity: must be positive")
        if not op.user_intensity >= 0:
            out.append(f"{tag}.user_intensity: must be >= 0")
        if not 0.0 <= op.active_fraction <= 1.0:
            out.append(f"{tag}.active_fraction: must lie in [0, 1]")
        e = op.energy
        for name in ("q1", "q2", "q3"):
            if not getattr(e, name) >= 0:
                out.append(f"{tag}.energy.{name}: must be >= 0")
        if e.profile not in ENERGY_PROFILES:
            out.append(f"{tag}.energy.profile: must be one of {ENERGY_PROFILES}")

    if not m.classes:
        out.append("classes: at least one class required")
    else:
        shares = [c.share for c in m.classes]
        if any(not s >= 0 for s in shares):
            out.append("classes.share: shares must be >= 0")
        if not math.isclose(math.fsum(shares), 1.0, rel_tol=0, abs_tol=1e-9):
            out.append(f"classes.share: shares must sum to 1 (got {math.fsum(shares):.12g})")
        if any(not c.target_rate > 0 for c in m.classes):
            out.append("classes.target_rate: must be positive")
        else:
            ref = m.classes[-1].target_rate
            if m.classes[-1].weight != 1.0:
                out.append("classes.weight: reference (last) class must have weight 1")
            for c in m.classes:
                if not math.isclose(c.weight, c.target_rate / ref, rel_tol=1e-12):
                    out.append(f"classes[{c.label}].weight: must equal target_rate / reference rate")

    if not 0.0 <= m.colocation <= 1.0:
        out.append("colocation: must lie in [0, 1]")
    if m.load_model not in LOAD_MODELS:
        out.append(f"load_model: must be one of {LOAD_MODELS}")
    return out


def check_model(m: NetworkModel) -> NetworkModel:
    """Raise :class:`ModelError` listing every violation, else return ``m``."""
    violations = validate_model(m)
    if violations:
        raise ModelError("; ".join(violations))
    return m
