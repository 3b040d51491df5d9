"""
Control envelopes for the CZ gate.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import erf

from core.device import DeviceConfig
from utils.error_handling import ValidationError

ArrayLike = Union[float, np.ndarray]


class PulseShape(str, Enum):
    FLAT_TOP_GAUSSIAN = "flat_top_gaussian"
    CONSTANT = "constant"


@dataclass(frozen=True)
class PulseSpec:
    """
    One controlled frequency over the gate window.

    start_value is held at both ends, plateau_value in the middle; sigma_ns and
    buffer_ns shape the Gaussian-smoothed edges.
    """
    shape: PulseShape
    start_value: float
    plateau_value: float
    sigma_ns: float
    buffer_ns: float
    total_ns: float

    def __post_init__(self):
        if not self.sigma_ns > 0:
            raise ValidationError(f"sigma_ns must be positive, got {self.sigma_ns}", field="sigma_ns")
        if self.buffer_ns < 0:
            raise ValidationError(f"buffer_ns must be non-negative, got {self.buffer_ns}", field="buffer_ns")
        if self.total_ns < 2 * self.buffer_ns:
            raise ValidationError(
                f"total_ns ({self.total_ns}) must be at least twice buffer_ns ({self.buffer_ns})",
                field="total_ns")

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return flattop_gaussian(t, self)


def _edges(t: ArrayLike, spec: PulseSpec) -> ArrayLike:
    scale = 1.0 / (np.sqrt(2.0) * spec.sigma_ns)
    t0 = spec.buffer_ns
    t1 = spec.total_ns - spec.buffer_ns
    return 0.5 * (erf((t - t0) * scale) - erf((t - t1) * scale))


def flattop_gaussian(t: ArrayLike, spec: PulseSpec) -> ArrayLike:
    """
    Value of the controlled frequency at time t (ns).

    The rectangle between the buffers is convolved with a Gaussian of width
    sigma_ns, then shifted and rescaled so the envelope is exactly start_value
    at t = 0 and t = total_ns and exactly plateau_value at the centre.
    """
    t_arr = np.asarray(t, dtype=float)
    if spec.shape is PulseShape.CONSTANT or spec.start_value == spec.plateau_value:
        value = np.full_like(t_arr, spec.plateau_value)
    else:
        floor = _edges(0.0, spec)
        peak = _edges(spec.total_ns / 2, spec)
        if peak - floor <= 0.0:
            # zero-length plateau
            value = np.full_like(t_arr, spec.start_value)
        else:
            shape = (_edges(t_arr, spec) - floor) / (peak - floor)
            value = spec.start_value + (spec.plateau_value - spec.start_value) * shape
    if np.ndim(t) == 0:
        return float(value)
    return value


@dataclass(frozen=True)
class ControlSchedule:
    """
    Q_l frequency and spectator coupler frequency during one gate.
    """
    f_l: PulseSpec
    f_cs: PulseSpec
    gate_total_ns: float

    def __post_init__(self):
        if self.f_l.total_ns != self.gate_total_ns or self.f_cs.total_ns != self.gate_total_ns:
            raise ValidationError(
                f"pulses must span the gate ({self.gate_total_ns} ns), got "
                f"{self.f_l.total_ns} and {self.f_cs.total_ns} ns", field="gate_total_ns")

    def controls(self, t: float) -> Tuple[float, float]:
        return float(self.f_l(t)), float(self.f_cs(t))

    def with_coupler(self, f_cs_plateau: float) -> "ControlSchedule":
        if self.f_cs.shape is PulseShape.CONSTANT:
            parked = replace(self.f_cs, start_value=f_cs_plateau, plateau_value=f_cs_plateau)
            return replace(self, f_cs=parked)
        return replace(self, f_cs=replace(self.f_cs, plateau_value=f_cs_plateau))

    def with_duration(self, total_ns: float) -> "ControlSchedule":
        buffer_ns = min(self.f_l.buffer_ns, total_ns / 2)
        return ControlSchedule(
            f_l=replace(self.f_l, total_ns=total_ns, buffer_ns=buffer_ns),
            f_cs=replace(self.f_cs, total_ns=total_ns, buffer_ns=min(self.f_cs.buffer_ns, total_ns / 2)),
            gate_total_ns=total_ns,
        )

    @classmethod
    def rectangular(cls, f_l: float, f_cs: float, total_ns: float) -> "ControlSchedule":
        """Idealised gate: both controls sit at their plateau values for the whole window."""
        return cls(
            f_l=PulseSpec(PulseShape.CONSTANT, f_l, f_l, 1.0, 0.0, total_ns),
            f_cs=PulseSpec(PulseShape.CONSTANT, f_cs, f_cs, 1.0, 0.0, total_ns),
            gate_total_ns=total_ns,
        )

    @classmethod
    def flat_top(cls, config: DeviceConfig, f_cs_plateau: float,
                 total_ns: Optional[float] = None,
                 f_l_start: Optional[float] = None,
                 f_cs_start: Optional[float] = None,
                 f_l_plateau: Optional[float] = None,
                 ramp_coupler: bool = False) -> "ControlSchedule":
        """
        Flat-top gate from the config's gate block: Q_l moves from idle to
        f_l_plateau (the operating point by default) and back.

        The spectator coupler sits at f_cs_plateau for the whole window; it
        moves while Q_l is still parked, outside the simulated gate. With
        ramp_coupler it follows its own flat-top envelope from f_cs_start
        instead, co-timed with the qubit pulse.
        """
        total = config.gate_param("gate_ns") if total_ns is None else total_ns
        buffer_ns = min(config.gate_param("buffer_ns"), total / 2)
        r = config.roles
        f_l0 = config.mode(r.ql).f_idle if f_l_start is None else f_l_start
        f_l1 = config.operating_point if f_l_plateau is None else f_l_plateau
        sigma_cs = config.gate_param("sigma_coupler_ns")
        if ramp_coupler:
            f_cs0 = config.mode(r.cs[0]).f_idle if f_cs_start is None else f_cs_start
            f_cs = PulseSpec(PulseShape.FLAT_TOP_GAUSSIAN, f_cs0, f_cs_plateau, sigma_cs, buffer_ns, total)
        else:
            f_cs = PulseSpec(PulseShape.CONSTANT, f_cs_plateau, f_cs_plateau, sigma_cs, buffer_ns, total)
        return cls(
            f_l=PulseSpec(PulseShape.FLAT_TOP_GAUSSIAN, f_l0, f_l1,
                          config.gate_param("sigma_qubit_ns"), buffer_ns, total),
            f_cs=f_cs,
            gate_total_ns=total,
        )
