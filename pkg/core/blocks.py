"""
Bright/dark frame, block-diagonalisation and the coupler off-point.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from core.device import DeviceConfig
from core.hamiltonian import MultiLevelH, ThreeLevelH, build_three_level
from utils.error_handling import (
    DegenerateFrameError, NoOffPointError, NumericalError, ValidationError
)

log = logging.getLogger(__name__)

DEFAULT_BRACKET = (5.0, 6.4)
OFF_POINT_TOL_GHZ = 1e-6
SCAN_STEP_GHZ = 0.005
CLOSURE_GUARD_GHZ2 = 1e-12


@dataclass(frozen=True)
class BrightDarkFrame:
    """
    Rotation of the {|02>, |S>} subspace in which only |B> couples to |11>.
    """
    theta: float
    g_B: float
    g_BD: float
    f_B: float
    f_D: float
    degenerate: bool = False

    def rotation(self) -> np.ndarray:
        """Columns are |11>, |B>, |D> in the basis (|11>, |02>, |S>)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([
            [1.0, 0.0, 0.0],
            [0.0, c, -s],
            [0.0, s, c],
        ])

    @property
    def dark_state(self) -> np.ndarray:
        return self.rotation()[:, 2]


@dataclass(frozen=True)
class OffPointSolution:
    f_s: float
    f_cs_off: float
    g_BD_residual: float
    bracket: Tuple[float, float]
    iterations: int
    brackets_found: Tuple[Tuple[float, float], ...] = ()
    warnings: Tuple[str, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class GeneralizedBright:
    coefficients: np.ndarray
    g_B: float
    f_B: float
    closure_residual: float


def bright_dark_frame(h: ThreeLevelH) -> BrightDarkFrame:
    """
    Bright/dark frame of a three-level Hamiltonian.

    theta = atan(g1 / g_gate), so |B> = cos(theta)|02> + sin(theta)|S>.

    Raises:
        DegenerateFrameError: If g_gate = 0 while g1 != 0
    """
    if h.g_gate == 0.0:
        if h.g1 != 0.0:
            raise DegenerateFrameError("degenerate frame: g_gate = 0 with g1 != 0 leaves theta undefined")
        return BrightDarkFrame(theta=0.0, g_B=0.0, g_BD=h.g2, f_B=h.f02, f_D=h.fS, degenerate=True)

    theta = math.atan(h.g1 / h.g_gate)
    c, s = math.cos(theta), math.sin(theta)
    sin2, cos2 = math.sin(2 * theta), math.cos(2 * theta)
    g_B = math.hypot(h.g_gate, h.g1)
    g_BD = (h.fS - h.f02) / 2 * sin2 + h.g2 * cos2
    f_B = c * c * h.f02 + s * s * h.fS + sin2 * h.g2
    f_D = s * s * h.f02 + c * c * h.fS - sin2 * h.g2
    return BrightDarkFrame(theta=theta, g_B=g_B, g_BD=g_BD, f_B=f_B, f_D=f_D)


def transform_hamiltonian(h: ThreeLevelH) -> np.ndarray:
    """
    Hamiltonian in the basis (|11>, |B>, |D>).

    The (|11>, |D>) element is exactly zero; the (|11>, |B>) element is g_B
    carrying the sign of g_gate.
    """
    frame = bright_dark_frame(h)
    g_11b = math.copysign(frame.g_B, h.g_gate)
    return np.array([
        [h.f11, g_11b, 0.0],
        [g_11b, frame.f_B, frame.g_BD],
        [0.0, frame.g_BD, frame.f_D],
    ])


def g_bd_curve(config: DeviceConfig, f_s: float, f_cs_grid: Sequence[float],
               operating_point: Optional[float] = None) -> np.ndarray:
    """g_BD along a grid of spectator coupler frequencies."""
    return np.array([
        bright_dark_frame(build_three_level(config, float(f), f_s, operating_point)).g_BD
        for f in f_cs_grid
    ])


def solve_off_frequency(config: DeviceConfig, f_s: float,
                        bracket: Tuple[float, float] = DEFAULT_BRACKET,
                        operating_point: Optional[float] = None,
                        tol: float = OFF_POINT_TOL_GHZ,
                        scan_step: float = SCAN_STEP_GHZ) -> OffPointSolution:
    """
    Spectator coupler frequency at which g_BD vanishes.

    A coarse scan lists every sign change inside the bracket; each is refined
    with Brent's method and the root closest to the coupler's idle frequency
    is returned.

    Args:
        config: Device config
        f_s: Spectator frequency (GHz)
        bracket: Search window for f_cs (GHz)
        operating_point: CZ frequency of Q_l
        tol: Acceptance bound on |g_BD| at the root (GHz)
        scan_step: Coarse scan resolution (GHz)

    Returns:
        OffPointSolution

    Raises:
        ValidationError: If the bracket is empty
        NoOffPointError: If g_BD keeps its sign over the window
        NumericalError: If the refined residual exceeds tol
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not hi > lo:
        raise ValidationError(f"bracket must satisfy lo < hi, got ({lo}, {hi})", field="bracket")

    def g_bd(f_cs: float) -> float:
        # g1 also depends on f_cs through the fourth-order path, so rebuild fully
        return bright_dark_frame(build_three_level(config, f_cs, f_s, operating_point)).g_BD

    n = max(int(math.ceil((hi - lo) / scan_step)), 1)
    grid = np.linspace(lo, hi, n + 1)
    values = np.array([g_bd(float(f)) for f in grid])

    brackets = []
    for i in range(n):
        if values[i] == 0.0:
            brackets.append((float(grid[i]), float(grid[i])))
        elif values[i] * values[i + 1] < 0:
            brackets.append((float(grid[i]), float(grid[i + 1])))
    if values[-1] == 0.0:
        brackets.append((float(grid[-1]), float(grid[-1])))
    if not brackets:
        raise NoOffPointError(
            f"no off-point in window ({lo:.6f}, {hi:.6f}) GHz for f_s = {f_s:.6f} GHz: "
            f"g_BD stays {'positive' if values[0] > 0 else 'negative'}", bracket=(lo, hi))

    roots = []
    for a, b in brackets:
        if a == b:
            roots.append((a, 0))
            continue
        root, info = brentq(g_bd, a, b, xtol=1e-12, rtol=4 * np.finfo(float).eps, full_output=True)
        roots.append((float(root), int(info.iterations)))

    idle = config.mode(config.roles.cs[0]).f_idle
    f_off, iterations = min(roots, key=lambda item: abs(item[0] - idle))
    residual = g_bd(f_off)
    if abs(residual) > tol:
        raise NumericalError(f"off-point residual {residual:.3e} GHz exceeds tolerance {tol:.1e} GHz")

    warnings: Tuple[str, ...] = ()
    if len(brackets) > 1:
        message = f"{len(brackets)} off-point candidates in window, keeping the one nearest idle"
        log.warning(message)
        warnings = (message,)
    log.debug("off-point for f_s=%.6f: f_cs=%.6f GHz after %d iterations", f_s, f_off, iterations)
    return OffPointSolution(f_s=f_s, f_cs_off=f_off, g_BD_residual=residual, bracket=(lo, hi),
                            iterations=iterations, brackets_found=tuple(brackets), warnings=warnings)


def sweep_off_frequency(config: DeviceConfig, f_s_values: Sequence[float],
                        bracket: Tuple[float, float] = DEFAULT_BRACKET,
                        operating_point: Optional[float] = None) -> Tuple[List[OffPointSolution], List[str]]:
    """
    Off-point for each spectator frequency.

    Points without an off-point in the window are skipped and reported in the
    returned warning list.
    """
    solutions, warnings = [], []
    for f_s in f_s_values:
        try:
            solutions.append(solve_off_frequency(config, float(f_s), bracket, operating_point))
        except NoOffPointError as e:
            warnings.append(str(e))
    return solutions, warnings


def multi_spectator_g2(g_gate: float, spectators: Sequence[Tuple[float, float]], f11: float,
                       f02: Optional[float] = None, guard: float = CLOSURE_GUARD_GHZ2) -> List[float]:
    """
    g2 of every spectator such that |B> closes under H.

    Args:
        g_gate: Gate coupling (GHz)
        spectators: (g1_i, fS_i) per spectator (GHz)
        f11: |11> energy (GHz)
        f02: |02> energy, equal to f11 when omitted (GHz)
        guard: Smallest allowed |g_gate^2 - sum g1^2| (GHz^2)

    Returns:
        g2_i (GHz), each depending only on g_gate, all g1, all fS and f02

    Raises:
        NumericalError: If the common denominator underflows
    """
    f02 = f11 if f02 is None else f02
    g1 = np.array([s[0] for s in spectators], dtype=float)
    fS = np.array([s[1] for s in spectators], dtype=float)
    denominator = g_gate * (g_gate ** 2 - np.sum(g1 ** 2))
    if g_gate == 0.0 or abs(g_gate ** 2 - np.sum(g1 ** 2)) < guard:
        raise NumericalError(
            f"closure denominator underflow: g_gate^2 - sum g1^2 = {g_gate ** 2 - np.sum(g1 ** 2):.3e} GHz^2")
    result = []
    for i in range(len(g1)):
        cross = np.sum(g1 ** 2 * (fS[i] - fS)) if len(g1) > 1 else 0.0
        result.append(float(g1[i] * (g_gate ** 2 * (f02 - fS[i]) + cross) / denominator))
    return result


def weak_coupling_g2(g_gate: float, spectators: Sequence[Tuple[float, float]], f11: float) -> List[float]:
    """Leading-order g2_i = g1_i (f11 - fS_i) / g_gate."""
    return [g1 * (f11 - fS) / g_gate for g1, fS in spectators]


def generalized_bright_state(h: MultiLevelH) -> GeneralizedBright:
    """
    Bright direction of |11> over {|02>, |S_1>, ..., |S_n>} and its closure
    residual ||H|B> - g_B|11> - f_B|B>||.

    Raises:
        DegenerateFrameError: If |11> couples to nothing
    """
    couplings = np.array([h.g_gate] + [s.g1 for s in h.spectators], dtype=float)
    g_B = float(np.linalg.norm(couplings))
    if g_B == 0.0:
        raise DegenerateFrameError("no bright direction: |11> is uncoupled")
    coefficients = couplings / g_B
    b = np.concatenate(([0.0], coefficients))
    matrix = h.matrix()
    hb = matrix @ b
    f_B = float(b @ hb)
    e11 = np.zeros_like(b)
    e11[0] = 1.0
    residual = float(np.linalg.norm(hb - g_B * e11 - f_B * b))
    return GeneralizedBright(coefficients=coefficients, g_B=g_B, f_B=f_B, closure_residual=residual)
