"""
Time-domain simulation of the CZ gate in the effective frame.

States evolve under i dpsi/dt = 2 pi H(t) psi with H in GHz and t in ns. The
|11> energy is subtracted from H at every step, so the phase of the |11>
amplitude is directly the conditional phase.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize_scalar

from core.blocks import bright_dark_frame
from core.device import DeviceConfig
from core.hamiltonian import EffectiveH, ThreeLevelH, build_three_level
from core.pulses import ControlSchedule
from utils.error_handling import DegenerateFrameError, IntegrationError, NumericalError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MIN_STEP_NS = 1e-6
NORM_TOL = 1e-9
FLAT_TOP_SCAN_POINTS = 36
RETURN_DIP = 0.05
RETURN_WARN = 1e-4

HamiltonianBuilder = Callable[[float, float], EffectiveH]


@dataclass
class Trajectory:
    """Sampled populations; columns follow the model basis (|11>, |02>, |S_1>...)."""
    t_ns: np.ndarray
    populations: np.ndarray
    dark: Optional[np.ndarray] = None

    def rows(self) -> List[List[float]]:
        dark = self.dark if self.dark is not None else np.full(self.t_ns.shape, np.nan)
        out = []
        for t, pops, pd in zip(self.t_ns, self.populations, dark):
            out.append([float(t), float(pops[0]), float(pops[1]), float(np.sum(pops[2:])), float(pd)])
        return out


@dataclass
class SimResult:
    final_state: np.ndarray
    p_leak_S: Tuple[float, ...]
    p_return_11: float
    p_02: float
    conditional_phase: float
    trajectory: Optional[Trajectory] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def total_leakage(self) -> float:
        return float(sum(self.p_leak_S))


def unitary_step(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i 2 pi H dt) of a real symmetric H."""
    w, v = eigh(h)
    return (v * np.exp(-2j * math.pi * w * dt)) @ v.conj().T


def propagate(h_of_t: Callable[[float], np.ndarray], psi0: Sequence[complex],
              t_grid: Sequence[float], tol: float = DEFAULT_TOL,
              dt_init: Optional[float] = None) -> np.ndarray:
    """
    Integrate the Schroedinger equation and sample the state on t_grid.

    Each step applies the exact exponential of H at the interval midpoint, so
    steps are unitary. Step size is controlled by step doubling: a full step
    is compared with two half steps and accepted when they agree to tol.

    Args:
        h_of_t: Hermitian generator in GHz as a function of time in ns
        psi0: Normalised initial state
        t_grid: Increasing sample times (ns); the first is the start time
        tol: Maximum local error per step
        dt_init: First trial step (ns)

    Returns:
        Array of states, one row per entry of t_grid

    Raises:
        ValidationError: If psi0 is not normalised or t_grid is not increasing
        IntegrationError: If the step size underflows
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    if abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
        raise ValidationError(f"initial state norm {np.linalg.norm(psi):.12f} is not 1", field="psi0")
    times = np.asarray(t_grid, dtype=float)
    if times.size == 0:
        raise ValidationError("time grid is empty", field="t_grid")
    if np.any(np.diff(times) < 0):
        raise ValidationError("time grid must be non-decreasing", field="t_grid")

    states = np.empty((times.size, psi.size), dtype=complex)
    states[0] = psi
    t = times[0]
    span = times[-1] - times[0]
    dt = dt_init if dt_init is not None else (span / 100 if span > 0 else 1.0)
    n_steps = 0

    for k in range(1, times.size):
        target = times[k]
        while target - t > 1e-12:
            step = min(dt, target - t)
            full = unitary_step(h_of_t(t + step / 2), step) @ psi
            half = unitary_step(h_of_t(t + step / 4), step / 2) @ psi
            half = unitary_step(h_of_t(t + 3 * step / 4), step / 2) @ half
            err = float(np.linalg.norm(full - half))
            if err <= tol:
                psi = half
                t += step
                n_steps += 1
                factor = 2.0 if err == 0.0 else min(2.0, max(0.2, 0.9 * (tol / err) ** (1 / 3)))
                # a step clipped at a sample time says nothing about the next one
                if step == dt:
                    dt = step * factor
            else:
                dt = step * max(0.2, 0.9 * (tol / err) ** (1 / 3))
                if dt < MIN_STEP_NS:
                    raise IntegrationError(
                        f"step size {dt:.2e} ns fell below {MIN_STEP_NS:g} ns at t = {t:.6f} ns")
        t = target
        states[k] = psi
    log.debug("propagated %.3f ns in %d steps", span, n_steps)
    return states


def _frame_matrix(h: EffectiveH) -> np.ndarray:
    m = h.matrix()
    return m - h.f11 * np.eye(m.shape[0])


def _dark_population(h: EffectiveH, psi: np.ndarray) -> float:
    if not isinstance(h, ThreeLevelH):
        return float("nan")
    try:
        dark = bright_dark_frame(h).dark_state
    except DegenerateFrameError:
        return float("nan")
    return float(abs(np.vdot(dark, psi)) ** 2)


def simulate_cz(h_builder: HamiltonianBuilder, schedule: ControlSchedule,
                psi0: Optional[Sequence[complex]] = None, tol: float = DEFAULT_TOL,
                n_samples: Optional[int] = None) -> SimResult:
    """
    Evolve |11> through one gate with the controls of schedule.

    Args:
        h_builder: Maps (f_l, f_cs) to the instantaneous effective Hamiltonian
        schedule: Control pulses
        psi0: Initial state, |11> when omitted
        tol: Integrator tolerance
        n_samples: Number of trajectory samples; no trajectory when omitted

    Returns:
        SimResult with per-spectator leakage, return population and
        conditional phase
    """
    h_start = h_builder(*schedule.controls(0.0))
    dim = h_start.matrix().shape[0]
    if psi0 is None:
        psi0 = np.zeros(dim, dtype=complex)
        psi0[0] = 1.0

    def h_of_t(t: float) -> np.ndarray:
        return _frame_matrix(h_builder(*schedule.controls(t)))

    total = schedule.gate_total_ns
    if n_samples:
        t_grid = np.linspace(0.0, total, max(int(n_samples), 2))
    else:
        t_grid = np.array([0.0, total])
    states = propagate(h_of_t, psi0, t_grid, tol=tol)

    final = states[-1]
    populations = np.abs(states) ** 2
    warnings = list(h_start.warnings)
    norm_drift = abs(np.linalg.norm(final) - 1.0)
    if norm_drift > NORM_TOL:
        warnings.append(f"norm drift {norm_drift:.2e} exceeds {NORM_TOL:g}")

    trajectory = None
    if n_samples:
        dark = np.array([_dark_population(h_builder(*schedule.controls(float(t))), s)
                         for t, s in zip(t_grid, states)])
        trajectory = Trajectory(t_ns=t_grid, populations=populations, dark=dark)

    return SimResult(
        final_state=final,
        p_leak_S=tuple(float(p) for p in populations[-1, 2:]),
        p_return_11=float(populations[-1, 0]),
        p_02=float(populations[-1, 1]),
        conditional_phase=float(np.angle(final[0])),
        trajectory=trajectory,
        warnings=warnings,
    )


def three_level_builder(config: DeviceConfig, f_s: float,
                        operating_point: Optional[float] = None) -> HamiltonianBuilder:
    def build(f_l: float, f_cs: float) -> ThreeLevelH:
        return build_three_level(config, f_cs, f_s, operating_point, f_l=f_l)
    return build


def static_builder(h: EffectiveH) -> HamiltonianBuilder:
    """Builder that ignores the controls."""
    return lambda f_l, f_cs: h


@dataclass
class LeakageCurve:
    f_cs: np.ndarray
    p_leak: np.ndarray
    f_min: float
    p_min: float
    idle_f_cs: Optional[float] = None


def locate_valley(grid: np.ndarray, values: np.ndarray,
                  objective: Optional[Callable[[float], float]] = None) -> Tuple[float, float]:
    """
    Minimum of a sampled curve, refined between the neighbouring grid points
    when an objective is supplied.
    """
    k = int(np.argmin(values))
    if objective is None or grid.size < 3:
        return float(grid[k]), float(values[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    if res.fun < values[k]:
        return float(res.x), float(res.fun)
    return float(grid[k]), float(values[k])


def sweep_coupler_frequency(config: DeviceConfig, f_s: float, f_cs_grid: Sequence[float],
                            schedule: ControlSchedule, tol: float = DEFAULT_TOL,
                            refine: bool = True) -> LeakageCurve:
    """
    Final spectator leakage across coupler plateau frequencies, with the
    leakage-valley minimum located on the curve.
    """
    grid = np.atleast_1d(np.asarray(f_cs_grid, dtype=float))
    if grid.size == 0:
        raise ValidationError("coupler frequency grid is empty", field="f_cs_grid")
    builder = three_level_builder(config, f_s)

    def leakage(f_cs: float) -> float:
        return simulate_cz(builder, schedule.with_coupler(f_cs), tol=tol).total_leakage

    values = np.array([leakage(float(f)) for f in grid])
    f_min, p_min = locate_valley(grid, values, leakage if refine else None)
    return LeakageCurve(f_cs=grid, p_leak=values, f_min=f_min, p_min=p_min,
                        idle_f_cs=config.mode(config.roles.cs[0]).f_idle)


def _block_return(h: ThreeLevelH) -> Tuple[np.ndarray, float, float]:
    frame = bright_dark_frame(h)
    g = math.copysign(frame.g_B, h.g_gate)
    block = np.array([[0.0, g], [g, frame.f_B - h.f11]])
    return block, frame.g_B, frame.f_B - h.f11


def nominal_gate_duration(h: ThreeLevelH) -> float:
    """Closed-form duration 1/sqrt(g_B^2 + Delta^2) in ns, Delta = f11 - f_B."""
    _, g_B, delta = _block_return(h)
    return 1.0 / math.sqrt(g_B ** 2 + delta ** 2)


def calibrate_gate_duration(h: ThreeLevelH, n_scan: int = 4000) -> float:
    """
    First return time of |11> under the {|11>, |B>} block, in ns.

    The closed-form duration seeds a dense scan for the first local maximum of
    the |11> population, which is then refined with a bounded search.
    """
    block, g_B, delta = _block_return(h)
    if g_B == 0.0:
        raise DegenerateFrameError("no |11>-|B> coupling, the gate never returns")
    w, v = eigh(block)
    start = v[0].conj()

    def p11(t: float) -> float:
        amp = np.sum(v[0] * np.exp(-2j * math.pi * w * t) * start)
        return float(abs(amp) ** 2)

    horizon = 1.25 * nominal_gate_duration(h)
    times = np.linspace(0.0, horizon, n_scan + 1)
    values = np.array([p11(t) for t in times])
    peaks = np.where((values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:]))[0] + 1
    k = int(peaks[0]) if peaks.size else int(np.argmax(values[1:]) + 1)
    res = minimize_scalar(lambda t: -p11(t), bounds=(times[k - 1], times[min(k + 1, n_scan)]),
                          method="bounded", options={"xatol": 1e-12})
    tau = float(res.x)
    log.debug("gate duration %.6f ns (closed form %.6f ns)", tau, nominal_gate_duration(h))
    return tau


@dataclass
class FlatTopCalibration:
    """Flat-top CZ tuned with the spectator parked away from the gate states."""
    schedule: ControlSchedule
    p_return_11: float
    p_02: float
    conditional_phase: float
    f_s_parked: float
    warnings: List[str] = field(default_factory=list)

    @property
    def total_ns(self) -> float:
        return self.schedule.gate_total_ns


def calibrate_flat_top(config: DeviceConfig, f_cs: Optional[float] = None,
                       f_s_parked: Optional[float] = None,
                       f_l_plateau: Optional[float] = None,
                       tol: float = DEFAULT_TOL,
                       n_scan: int = FLAT_TOP_SCAN_POINTS) -> FlatTopCalibration:
    """
    Length of the flat-top gate at which |11> first comes back from |02>.

    The spectator sits at f_s_parked (its idle frequency by default) and its
    coupler at f_cs (idle by default) while the gate is tuned. Lengths from
    twice the buffer upwards are scanned for the first dip of the final |02>
    population, which is then refined with a bounded search. The returned
    schedule is reused at other coupler plateaus through with_coupler.

    Raises:
        NumericalError: If the scanned window holds no return of |11>
    """
    r = config.roles
    f_cs = config.mode(r.cs[0]).f_idle if f_cs is None else f_cs
    f_s_parked = config.mode(r.qs[0]).f_idle if f_s_parked is None else f_s_parked
    builder = three_level_builder(config, f_s_parked)
    base = ControlSchedule.flat_top(config, f_cs, f_l_plateau=f_l_plateau)
    tau = calibrate_gate_duration(build_three_level(config, f_cs, f_s_parked))
    shortest = 2 * config.gate_param("buffer_ns")

    def p02(total_ns: float) -> float:
        return simulate_cz(builder, base.with_duration(total_ns), tol=tol).p_02

    lengths = np.linspace(shortest, shortest + 1.5 * tau, n_scan + 1)[1:]
    values = np.array([p02(float(t)) for t in lengths])
    inner = values[1:-1]
    dips = np.where((inner <= values[:-2]) & (inner <= values[2:]) & (inner < RETURN_DIP))[0] + 1
    if dips.size == 0:
        raise NumericalError(
            f"|11> does not return between {lengths[0]:.2f} and {lengths[-1]:.2f} ns "
            f"(smallest |02> population {values.min():.3e})")
    k = int(dips[0])
    res = minimize_scalar(p02, bounds=(lengths[k - 1], lengths[k + 1]), method="bounded",
                          options={"xatol": 1e-6})
    schedule = base.with_duration(float(res.x))
    result = simulate_cz(builder, schedule, tol=tol)

    warnings = list(result.warnings)
    if result.p_02 > RETURN_WARN:
        message = f"flat-top gate leaves {result.p_02:.2e} in |02>"
        log.warning(message)
        warnings.append(message)
    log.debug("flat-top gate %.6f ns, P11 %.9f, phase/pi %.4f", schedule.gate_total_ns,
              result.p_return_11, result.conditional_phase / math.pi)
    return FlatTopCalibration(schedule=schedule, p_return_11=result.p_return_11, p_02=result.p_02,
                              conditional_phase=result.conditional_phase, f_s_parked=f_s_parked,
                              warnings=warnings)


def gate_length_scan(h_builder: HamiltonianBuilder, schedule: ControlSchedule,
                     lengths_ns: Sequence[float], tol: float = DEFAULT_TOL) -> List[Tuple[float, float, float]]:
    """(gate_ns, leakage, P11) for each gate length, stretching the schedule."""
    rows = []
    for length in lengths_ns:
        result = simulate_cz(h_builder, schedule.with_duration(float(length)), tol=tol)
        rows.append((float(length), result.total_leakage, result.p_return_11))
    return rows


def amplification_sequence(h: ThreeLevelH, gate_ns: float, idle_ns: float, n_max: int,
                           idle_detuning: Optional[float] = None) -> np.ndarray:
    """
    Spectator population after n = 0..n_max repetitions of gate then idle.

    The gate is the static three-level propagator; during the idle period the
    spectator state only picks up the phase of its detuning from |11>.
    """
    if n_max < 0:
        raise ValidationError(f"n_max must be non-negative, got {n_max}", field="n_max")
    detuning = h.delta_sl if idle_detuning is None else idle_detuning
    u_gate = unitary_step(_frame_matrix(h), gate_ns)
    u_idle = np.diag([1.0, 1.0, np.exp(-2j * math.pi * detuning * idle_ns)])
    u_cycle = u_idle @ u_gate
    psi = np.zeros(3, dtype=complex)
    psi[0] = 1.0
    populations = np.empty(n_max + 1)
    for n in range(n_max + 1):
        populations[n] = abs(psi[2]) ** 2
        psi = u_cycle @ psi
    return populations
