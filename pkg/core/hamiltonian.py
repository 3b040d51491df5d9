"""
Effective Hamiltonians of the CZ gate pair and its spectators.

The three-level model lives in the basis {|11>, |02>, |S>}; the multi-spectator
model in {|11>, |02>, |S_1>, ..., |S_n>}. Couplings are derived from the device
config with second-order Schrieffer-Wolff expressions, and the full
Kerr-oscillator Hamiltonian of the five-mode chain serves as the exact oracle.
"""

import functools
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigh, eigvalsh
from scipy.optimize import minimize_scalar

from core.device import DeviceConfig, Topology, cz_frequencies
from utils.error_handling import SWDivergenceError, ValidationError

log = logging.getLogger(__name__)

GUARD_BAND_GHZ = 1e-3
MAX_FULL_DIM = 1024
SQRT2 = math.sqrt(2.0)


class Resonance(str, Enum):
    """Which gate qubit the spectator is close to."""
    LOW = "low"     # omega_s ~ omega_l
    HIGH = "high"   # omega_s ~ omega_h


# Leakage channels per (topology, resonance)
SUPPRESSION_CASES = {
    (Topology.LHS, Resonance.LOW): {
        "spectator_state": "011",
        "g1": "direct l-s stray plus fourth-order coupler path",
        "g2": "g_hs^20(f_cs)",
        "suppressible": True,
    },
    (Topology.LHS, Resonance.HIGH): {
        "spectator_state": "101",
        "g1": "g_hs^01(f_cs)",
        "g2": "0",
        "suppressible": True,
    },
    (Topology.HLS, Resonance.LOW): {
        "spectator_state": "011",
        "g1": "g_ls^01(f_cs)",
        "g2": "sqrt(2) h-s stray plus fourth-order coupler path",
        "suppressible": True,
    },
    (Topology.HLS, Resonance.HIGH): {
        "spectator_state": "101",
        "g1": "fixed h-s stray",
        "g2": "0",
        "suppressible": False,
    },
}


@dataclass(frozen=True)
class SWCouplings:
    """Effective couplings of a qubit pair between the 01, 20 and 02 manifolds."""
    g01: float
    g20: float
    g02: float


@dataclass(frozen=True)
class ThreeLevelH:
    """
    Gate states |11>, |02> and one spectator state |S>.
    """
    f11: float
    f02: float
    fS: float
    g_gate: float
    g1: float
    g2: float
    case: str = field(default="", compare=False)
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def delta_sl(self) -> float:
        return self.fS - self.f11

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.f11, self.g_gate, self.g1],
            [self.g_gate, self.f02, self.g2],
            [self.g1, self.g2, self.fS],
        ], dtype=float)

    def with_spectator(self, fS: float) -> "ThreeLevelH":
        return replace(self, fS=fS)


@dataclass(frozen=True)
class SpectatorLevel:
    fS: float
    g1: float
    g2: float


@dataclass(frozen=True)
class MultiLevelH:
    """
    Gate pair plus n spectator states; spectators do not couple to each other.
    """
    f11: float
    f02: float
    g_gate: float
    spectators: Tuple[SpectatorLevel, ...]
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def n_spectators(self) -> int:
        return len(self.spectators)

    def matrix(self) -> np.ndarray:
        n = len(self.spectators)
        h = np.zeros((n + 2, n + 2))
        h[0, 0] = self.f11
        h[1, 1] = self.f02
        h[0, 1] = h[1, 0] = self.g_gate
        for i, s in enumerate(self.spectators):
            k = i + 2
            h[k, k] = s.fS
            h[0, k] = h[k, 0] = s.g1
            h[1, k] = h[k, 1] = s.g2
        return h

    def single(self, index: int) -> ThreeLevelH:
        """Three-level model keeping only one spectator."""
        s = self.spectators[index]
        return ThreeLevelH(self.f11, self.f02, s.fS, self.g_gate, s.g1, s.g2)


@dataclass(frozen=True)
class SpectrumRow:
    delta_sl: float
    eigenvalues: Tuple[float, ...]


@dataclass(frozen=True)
class GateGapComparison:
    """Full-model |110>/|020> half-gap against the SW gate coupling."""
    coupling_scale: float
    half_gap: float
    sw_g02: float
    relative_error: float
    f_l_at_min: float


EffectiveH = Union[ThreeLevelH, MultiLevelH]


def _check_guard(name: str, value: float, guard: float) -> float:
    if abs(value) < guard:
        raise SWDivergenceError(
            f"SW divergence: denominator {name} = {value * 1e3:.4f} MHz is inside the "
            f"{guard * 1e3:g} MHz guard band", denominator=name, value=value)
    return value


def sw_pair_couplings(g_direct: float, g_ac: float, g_bc: float,
                      f_a: float, f_b: float, f_c: float,
                      alpha_a: float, alpha_b: float,
                      guard: float = GUARD_BAND_GHZ) -> SWCouplings:
    """
    Coupler-mediated couplings of qubits a and b through coupler c.

    Anharmonicities are negative; the shifted denominators are Delta + alpha
    and Sigma + alpha, the energies of the intermediate states with a
    doubly-occupied transmon.

    Args:
        g_direct: Direct a-b coupling (GHz)
        g_ac: a-c coupling (GHz)
        g_bc: b-c coupling (GHz)
        f_a, f_b, f_c: Mode frequencies (GHz)
        alpha_a, alpha_b: Qubit anharmonicities (GHz)
        guard: Minimum allowed magnitude of any denominator (GHz)

    Returns:
        SWCouplings with g01 (|01>-|10>), g20 (|20>-|11>) and g02 (|11>-|02>)

    Raises:
        SWDivergenceError: If a denominator falls inside the guard band
    """
    d_ac = _check_guard("Delta_ac", f_a - f_c, guard)
    d_bc = _check_guard("Delta_bc", f_b - f_c, guard)
    s_ac = _check_guard("Sigma_ac", f_a + f_c, guard)
    s_bc = _check_guard("Sigma_bc", f_b + f_c, guard)
    d_ac_a = _check_guard("Delta_ac - alpha_a", d_ac + alpha_a, guard)
    d_bc_b = _check_guard("Delta_bc - alpha_b", d_bc + alpha_b, guard)
    s_ac_a = _check_guard("Sigma_ac - alpha_a", s_ac + alpha_a, guard)
    s_bc_b = _check_guard("Sigma_bc - alpha_b", s_bc + alpha_b, guard)

    gg = g_ac * g_bc
    g01 = g_direct + gg / 2 * ((1 / d_ac - 1 / s_ac) + (1 / d_bc - 1 / s_bc))
    g20 = SQRT2 * g_direct + gg / SQRT2 * (1 / d_ac_a + 1 / d_bc - 1 / s_ac_a - 1 / s_bc)
    g02 = SQRT2 * g_direct + gg / SQRT2 * (1 / d_ac + 1 / d_bc_b - 1 / s_ac - 1 / s_bc_b)
    return SWCouplings(g01=g01, g20=g20, g02=g02)


def stray_fourth_order(g_gate: float, g_sc: float, g_hc: float,
                       delta_hc: float, delta_lc: float,
                       guard: float = GUARD_BAND_GHZ) -> float:
    """Fourth-order |110>-|011> coupling through the spectator coupler."""
    _check_guard("Delta_hc", delta_hc, guard)
    _check_guard("Delta_lc", delta_lc, guard)
    return -g_gate * g_sc * g_hc / (delta_hc * delta_lc)


def detect_resonance(config: DeviceConfig, f_s: float,
                     operating_point: Optional[float] = None) -> Resonance:
    """Pick the gate qubit the spectator frequency is closest to."""
    freqs = cz_frequencies(config, operating_point=operating_point)
    r = config.roles
    if abs(f_s - freqs[r.ql]) <= abs(f_s - freqs[r.qh]):
        return Resonance.LOW
    return Resonance.HIGH


def gate_coupling(config: DeviceConfig, freqs: Dict[str, float]) -> float:
    """g_gate = g_lh^02 mediated by the gate coupler."""
    r = config.roles
    f_l, f_h, f_c = freqs[r.ql], freqs[r.qh], freqs[r.cg]
    return sw_pair_couplings(
        config.coupling(r.ql, r.qh, f_l, f_h),
        config.coupling(r.ql, r.cg, f_l, f_c),
        config.coupling(r.qh, r.cg, f_h, f_c),
        f_l, f_h, f_c,
        config.mode(r.ql).anharmonicity, config.mode(r.qh).anharmonicity,
    ).g02


def _spectator_terms(config: DeviceConfig, freqs: Dict[str, float], qs: str, cs: str,
                     resonance: Resonance, g_gate: float) -> Tuple[float, float, float]:
    """Spectator state energy and its couplings (fS, g1, g2) for one spectator."""
    r = config.roles
    f_l, f_h, f_s, f_cs = freqs[r.ql], freqs[r.qh], freqs[qs], freqs[cs]
    alpha = {label: config.mode(label).anharmonicity for label in (r.ql, r.qh, qs)}
    g_ls = config.coupling(r.ql, qs, f_l, f_s)
    g_hs = config.coupling(r.qh, qs, f_h, f_s)
    g_scs = config.coupling(qs, cs, f_s, f_cs)

    if config.topology is Topology.LHS:
        g_hcs = config.coupling(r.qh, cs, f_h, f_cs)
        if resonance is Resonance.LOW:
            fS = f_h + f_s
            g1 = g_ls + stray_fourth_order(g_gate, g_scs, g_hcs, f_h - f_cs, f_l - f_cs)
            g2 = sw_pair_couplings(g_hs, g_hcs, g_scs, f_h, f_s, f_cs, alpha[r.qh], alpha[qs]).g20
        else:
            fS = f_l + f_s
            g1 = sw_pair_couplings(g_hs, g_hcs, g_scs, f_h, f_s, f_cs, alpha[r.qh], alpha[qs]).g01
            g2 = 0.0
    else:
        g_lcs = config.coupling(r.ql, cs, f_l, f_cs)
        if resonance is Resonance.LOW:
            fS = f_h + f_s
            g1 = sw_pair_couplings(g_ls, g_lcs, g_scs, f_l, f_s, f_cs, alpha[r.ql], alpha[qs]).g01
            g2 = SQRT2 * g_hs + stray_fourth_order(g_gate, g_scs, g_lcs, f_l - f_cs, f_h - f_cs)
        else:
            fS = f_l + f_s
            g1 = g_hs
            g2 = 0.0
    return fS, g1, g2


def _case_warnings(config: DeviceConfig, resonance: Resonance) -> Tuple[str, ...]:
    case = SUPPRESSION_CASES[(config.topology, resonance)]
    if case["suppressible"]:
        return ()
    message = (f"suppression challenging: {config.topology.value} with the spectator near "
               f"Q_{'h' if resonance is Resonance.HIGH else 'l'}, fixed stray coupling dominates g1")
    log.warning(message)
    return (message,)


def build_three_level(config: DeviceConfig, f_cs: float, f_s: float,
                      operating_point: Optional[float] = None,
                      f_l: Optional[float] = None,
                      resonance: Optional[Resonance] = None,
                      spectator: int = 0) -> ThreeLevelH:
    """
    Three-level effective Hamiltonian for one spectator.

    Q_h is parked at operating_point - alpha_h so that f11 = f02 when Q_l sits
    at the operating point; f_l moves Q_l away from it during pulses.

    Args:
        config: Device config
        f_cs: Spectator coupler frequency (GHz)
        f_s: Spectator qubit frequency (GHz)
        operating_point: CZ frequency of Q_l, defaults to the config gate block
        f_l: Instantaneous Q_l frequency, defaults to the operating point
        resonance: Resonance case, detected from f_s when omitted
        spectator: Index into the role map's spectator list

    Returns:
        ThreeLevelH, with a warning attached for the non-suppressible case
    """
    r = config.roles
    qs, cs = r.qs[spectator], r.cs[spectator]
    freqs = cz_frequencies(config, operating_point=operating_point, f_l=f_l)
    freqs[qs] = f_s
    freqs[cs] = f_cs
    if resonance is None:
        resonance = detect_resonance(config, f_s, operating_point)

    f_h = freqs[r.qh]
    f11 = freqs[r.ql] + f_h
    f02 = 2 * f_h + config.mode(r.qh).anharmonicity
    g_gate = gate_coupling(config, freqs)
    fS, g1, g2 = _spectator_terms(config, freqs, qs, cs, resonance, g_gate)
    return ThreeLevelH(f11=f11, f02=f02, fS=fS, g_gate=g_gate, g1=g1, g2=g2,
                       case=f"{config.topology.value}/{resonance.value}",
                       warnings=_case_warnings(config, resonance))


def build_multi_level(config: DeviceConfig, f_cs_list: Sequence[float], f_s_list: Sequence[float],
                      operating_point: Optional[float] = None,
                      f_l: Optional[float] = None) -> MultiLevelH:
    """Multi-spectator effective Hamiltonian for the config's spectator roles."""
    r = config.roles
    if len(f_cs_list) != r.n_spectators or len(f_s_list) != r.n_spectators:
        raise ValidationError(
            f"config has {r.n_spectators} spectators, got {len(f_s_list)} f_s and {len(f_cs_list)} f_cs values",
            field="spectators")
    freqs = cz_frequencies(config, f_s=list(f_s_list), f_cs=list(f_cs_list),
                           operating_point=operating_point, f_l=f_l)
    f_h = freqs[r.qh]
    g_gate = gate_coupling(config, freqs)
    spectators = []
    warnings: Tuple[str, ...] = ()
    for qs, cs in r.spectator_pairs():
        resonance = detect_resonance(config, freqs[qs], operating_point)
        fS, g1, g2 = _spectator_terms(config, freqs, qs, cs, resonance, g_gate)
        spectators.append(SpectatorLevel(fS=fS, g1=g1, g2=g2))
        warnings += _case_warnings(config, resonance)
    return MultiLevelH(f11=freqs[r.ql] + f_h, f02=2 * f_h + config.mode(r.qh).anharmonicity,
                       g_gate=g_gate, spectators=tuple(spectators), warnings=warnings)


def couplings_from_anticrossings(g_plus: float, g_minus: float) -> Tuple[float, float]:
    """Invert the two anticrossing couplings into (g1, g2)."""
    return (g_plus + g_minus) / 2, (g_plus - g_minus) / 2


def _detuned(h: EffectiveH, delta: float) -> EffectiveH:
    if isinstance(h, ThreeLevelH):
        return h.with_spectator(h.f11 + delta)
    if not h.spectators:
        return h
    # all spectators move together, keeping their offsets from the first one
    ref = h.spectators[0].fS
    moved = tuple(replace(s, fS=h.f11 + delta + (s.fS - ref)) for s in h.spectators)
    return replace(h, spectators=moved)


def eigenspectrum(h: EffectiveH, detuning_grid: Sequence[float]) -> List[SpectrumRow]:
    """
    Eigenvalues along a spectator detuning sweep, fS = f11 + delta.

    Raises:
        ValidationError: If the grid is empty
    """
    grid = np.atleast_1d(np.asarray(detuning_grid, dtype=float))
    if grid.size == 0:
        raise ValidationError("detuning grid is empty", field="detuning_grid")
    rows = []
    for delta in grid:
        values = eigvalsh(_detuned(h, float(delta)).matrix())
        rows.append(SpectrumRow(delta_sl=float(delta), eigenvalues=tuple(float(v) for v in np.sort(values))))
    return rows


def _min_splitting(h: ThreeLevelH, grid: np.ndarray, lower: int) -> float:
    def splitting(delta: float) -> float:
        values = eigvalsh(_detuned(h, delta).matrix())
        return float(values[lower + 1] - values[lower])

    gaps = np.array([splitting(d) for d in grid])
    k = int(np.argmin(gaps))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    if hi <= lo:
        return float(gaps[k])
    res = minimize_scalar(splitting, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(min(res.fun, gaps[k]))


def anticrossing_gaps(h: ThreeLevelH, detuning_grid: Sequence[float]) -> Tuple[float, float]:
    """
    Couplings (g_plus, g_minus) read off the two spectator anticrossings.

    The spectator meets the symmetric gate state (|11> + |02>)/sqrt(2) with
    coupling (g1 + g2)/sqrt(2) and the antisymmetric one with (g1 - g2)/sqrt(2),
    so each returned value is sqrt(2) times a measured half-gap. For
    g_gate > 0 the symmetric state is the upper one.
    """
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("detuning grid is empty", field="detuning_grid")
    lower_gap = _min_splitting(h, grid, 0)
    upper_gap = _min_splitting(h, grid, 1)
    if h.g_gate >= 0:
        g_plus, g_minus = upper_gap, lower_gap
    else:
        g_plus, g_minus = lower_gap, upper_gap
    return SQRT2 * g_plus / 2, SQRT2 * g_minus / 2


def spectrum_to_rows(rows: Sequence[SpectrumRow]) -> Tuple[List[str], List[List[float]]]:
    """CSV header and rows for an eigenvalue sweep."""
    n = len(rows[0].eigenvalues) if rows else 0
    header = ["delta_sl_ghz"] + [f"e{i + 1}_ghz" for i in range(n)]
    return header, [[row.delta_sl, *row.eigenvalues] for row in rows]


def full_mode_order(config: DeviceConfig) -> List[str]:
    """Mode labels of the full model: l, h, s, c_g, c_s."""
    r = config.roles
    return [r.ql, r.qh, r.qs[0], r.cg, r.cs[0]]


def bare_index(levels_per_mode: int, occupations: Sequence[int]) -> int:
    """Index of a bare Fock state in the tensor-product basis."""
    index = 0
    for n in occupations:
        index = index * levels_per_mode + n
    return index


def full_hamiltonian(config: DeviceConfig, levels_per_mode: int = 3,
                     frequencies: Optional[Dict[str, float]] = None,
                     coupling_scale: float = 1.0) -> np.ndarray:
    """
    Full Kerr-oscillator Hamiltonian of the five-mode chain.

    Args:
        config: Device config
        levels_per_mode: Fock cutoff per mode, 2 to 4
        frequencies: Per-label overrides of the CZ-configuration frequencies
        coupling_scale: Factor applied to every coupling

    Returns:
        Real symmetric matrix in the Fock basis ordered (l, h, s, c_g, c_s)

    Raises:
        ValidationError: On an unsupported cutoff or a dimension above the limit
    """
    if levels_per_mode not in (2, 3, 4):
        raise ValidationError(f"levels_per_mode must be 2, 3 or 4, got {levels_per_mode}",
                              field="levels_per_mode")
    labels = full_mode_order(config)
    dim = levels_per_mode ** len(labels)
    if dim > MAX_FULL_DIM:
        raise ValidationError(f"full model dimension {dim} exceeds {MAX_FULL_DIM}", field="levels_per_mode")

    freqs = cz_frequencies(config)
    if frequencies:
        freqs.update(frequencies)

    a = np.diag(np.sqrt(np.arange(1, levels_per_mode, dtype=float)), k=1)
    number = a.T @ a
    ident = np.eye(levels_per_mode)
    x = a.T - a

    def embed(op: np.ndarray, k: int) -> np.ndarray:
        ops = [ident] * len(labels)
        ops[k] = op
        return functools.reduce(np.kron, ops)

    h = np.zeros((dim, dim))
    for k, label in enumerate(labels):
        alpha = config.mode(label).anharmonicity
        h += embed(freqs[label] * number + alpha / 2 * number @ (number - ident), k)
    position = {label: k for k, label in enumerate(labels)}
    for edge in config.edges:
        if edge.mode_a not in position or edge.mode_b not in position:
            continue
        i, j = position[edge.mode_a], position[edge.mode_b]
        g = coupling_scale * config.coupling(edge.mode_a, edge.mode_b, freqs[edge.mode_a], freqs[edge.mode_b])
        h -= g * embed(x, i) @ embed(x, j)
    return (h + h.T) / 2


def full_model_gate_gap(config: DeviceConfig, levels_per_mode: int = 3,
                        coupling_scale: float = 1.0, window_ghz: float = 0.06,
                        n_points: int = 61) -> GateGapComparison:
    """
    Exact-diagonalisation check of the gate coupling.

    Sweeps f_l around the operating point with the spectator at idle, follows
    the two eigenstates with the largest weight on bare |110> and |020>, and
    compares their minimum half-splitting with the SW value of g_gate.
    """
    scaled = config.scaled(coupling_scale)
    base = cz_frequencies(scaled)
    op = scaled.operating_point
    ql = scaled.roles.ql
    sw = gate_coupling(scaled, base)
    idx_110 = bare_index(levels_per_mode, (1, 1, 0, 0, 0))
    idx_020 = bare_index(levels_per_mode, (0, 2, 0, 0, 0))

    def splitting(f_l: float) -> float:
        freqs = dict(base)
        freqs[ql] = f_l
        w, v = eigh(full_hamiltonian(scaled, levels_per_mode, freqs))
        weight = v[idx_110] ** 2 + v[idx_020] ** 2
        pair = np.argsort(weight)[-2:]
        return float(abs(w[pair[1]] - w[pair[0]]))

    grid = np.linspace(op - window_ghz, op + window_ghz, n_points)
    gaps = np.array([splitting(f) for f in grid])
    k = int(np.argmin(gaps))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_points - 1)]
    res = minimize_scalar(splitting, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    half_gap = min(float(res.fun), float(gaps[k])) / 2
    f_min = float(res.x) if res.fun <= gaps[k] else float(grid[k])
    log.debug("full model scale %.3g: half gap %.6f GHz, SW %.6f GHz", coupling_scale, half_gap, sw)
    return GateGapComparison(coupling_scale=coupling_scale, half_gap=half_gap, sw_g02=sw,
                             relative_error=abs(half_gap - abs(sw)) / abs(sw), f_l_at_min=f_min)
