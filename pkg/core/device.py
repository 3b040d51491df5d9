"""
Device parameters, topology and flux-crosstalk compensation.

All frequencies are f = omega / 2pi in GHz, pulse times in ns and coherence
times in microseconds. Config files carry explicit unit suffixes in their
field names (``f_idle_ghz``, ``t1_us``); ``_mhz`` variants are converted on
load.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from utils.error_handling import (
    MalformedDataError, SingularMatrixError, ValidationError, validate_file_path
)

log = logging.getLogger(__name__)

# Gate-level defaults used when a config has no (or a partial) "gate" block
GATE_DEFAULTS = {
    "f_l_cz_ghz": 4.276,
    "f_s_resonant_ghz": 4.27,
    "gate_ns": 40.0,
    "buffer_ns": 7.5,
    "sigma_qubit_ns": 1.25,
    "sigma_coupler_ns": 2.0,
    "t_1q_ns": 30.0,
    "t_cz_ns": 40.0,
}

ROLE_NAMES = {
    "ql": "Q_l",
    "qh": "Q_h",
    "qs": "Q_s",
    "cg": "C_g",
    "cs": "C_s",
}

CONDITION_LIMIT = 1e8
MAX_CROSSTALK = 0.1

BUNDLED_CONFIG = Path(__file__).parent / "data" / "three_qubit_lhs.json"
BUNDLED_MULTI_CONFIG = Path(__file__).parent / "data" / "three_spectator_lhs.json"


class Topology(str, Enum):
    """Chain order of gate and spectator qubits."""
    LHS = "LHS"
    HLS = "HLS"


@dataclass(frozen=True)
class ModeParams:
    """
    Parameters of one transmon mode (qubit or coupler).
    """
    label: str
    f_idle: float
    anharmonicity: float
    t1_us: Optional[float] = None
    t1_resonant_us: Optional[float] = None
    t2_echo_us: Optional[float] = None
    readout_f0: Optional[float] = None
    readout_f1: Optional[float] = None
    # Stored for completeness, no equation uses these
    readout_ghz: Optional[float] = None
    e1_rb: Optional[float] = None

    def __post_init__(self):
        if not self.label:
            raise ValidationError("mode label must be non-empty", field="label")
        if not self.f_idle > 0:
            raise ValidationError(
                f"{self.label}.f_idle_ghz must be positive, got {self.f_idle}",
                field=f"{self.label}.f_idle_ghz")
        if not self.anharmonicity < 0:
            raise ValidationError(
                f"{self.label}.anharmonicity_ghz must be negative for a transmon, got {self.anharmonicity}",
                field=f"{self.label}.anharmonicity_ghz")
        for name in ("t1_us", "t1_resonant_us", "t2_echo_us"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValidationError(f"{self.label}.{name} must be positive, got {value}",
                                      field=f"{self.label}.{name}")
        for name in ("readout_f0", "readout_f1"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{self.label}.{name} must lie in [0, 1], got {value}",
                                      field=f"{self.label}.{name}")


@dataclass(frozen=True)
class TopologyEdge:
    """
    Coupling between two modes: either a frequency-independent coefficient
    rho or a fixed coupling in GHz.
    """
    mode_a: str
    mode_b: str
    rho: Optional[float] = None
    g_fixed: Optional[float] = None

    def __post_init__(self):
        if self.mode_a == self.mode_b:
            raise ValidationError(f"edge {self.mode_a}-{self.mode_b} joins a mode to itself",
                                  field=f"edges[{self.mode_a},{self.mode_b}]")
        if (self.rho is None) == (self.g_fixed is None):
            raise ValidationError(
                f"edge {self.mode_a}-{self.mode_b} needs exactly one of rho / g_fixed_ghz",
                field=f"edges[{self.mode_a},{self.mode_b}]")

    def joins(self, label_a: str, label_b: str) -> bool:
        return {self.mode_a, self.mode_b} == {label_a, label_b}

    def scaled(self, factor: float) -> "TopologyEdge":
        if self.rho is not None:
            return TopologyEdge(self.mode_a, self.mode_b, rho=self.rho * factor)
        return TopologyEdge(self.mode_a, self.mode_b, g_fixed=self.g_fixed * factor)


@dataclass(frozen=True)
class RoleMap:
    """Which mode labels play the gate, spectator and coupler roles."""
    ql: str
    qh: str
    qs: Tuple[str, ...]
    cg: str
    cs: Tuple[str, ...]

    @property
    def n_spectators(self) -> int:
        return len(self.qs)

    def spectator_pairs(self) -> List[Tuple[str, str]]:
        return list(zip(self.qs, self.cs))


@dataclass(frozen=True)
class DeviceConfig:
    """
    Validated device description. Immutable after construction.
    """
    modes: Tuple[ModeParams, ...]
    edges: Tuple[TopologyEdge, ...]
    topology: Topology
    roles: RoleMap
    gate: Mapping[str, float] = field(default_factory=lambda: dict(GATE_DEFAULTS))

    def __post_init__(self):
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate mode labels in config", field="modes")
        for edge in self.edges:
            for label in (edge.mode_a, edge.mode_b):
                if label not in labels:
                    raise ValidationError(
                        f"edge {edge.mode_a}-{edge.mode_b} references unknown mode {label}",
                        field=f"edges[{edge.mode_a},{edge.mode_b}]")
        for key in ("ql", "qh", "cg"):
            if getattr(self.roles, key) not in labels:
                raise ValidationError(f"role {ROLE_NAMES[key]} unresolved", field=f"roles.{key}")
        for key in ("qs", "cs"):
            values = getattr(self.roles, key)
            if not values or any(v not in labels for v in values):
                raise ValidationError(f"role {ROLE_NAMES[key]} unresolved", field=f"roles.{key}")
        if len(self.roles.qs) != len(self.roles.cs):
            raise ValidationError("roles qs and cs must list the same number of modes", field="roles")
        for a, b in self.required_edges():
            if self.edge(a, b) is None:
                raise ValidationError(
                    f"topology {self.topology.value} requires an edge {a}-{b}",
                    field=f"edges[{a},{b}]")

    def required_edges(self) -> List[Tuple[str, str]]:
        """Qubit-coupler edges implied by the declared topology."""
        r = self.roles
        edges = [(r.ql, r.cg), (r.qh, r.cg)]
        anchor = r.qh if self.topology is Topology.LHS else r.ql
        for qs, cs in r.spectator_pairs():
            edges.append((anchor, cs))
            edges.append((qs, cs))
        return edges

    def mode(self, label: str) -> ModeParams:
        for m in self.modes:
            if m.label == label:
                return m
        raise ValidationError(f"unknown mode {label}", field="modes")

    def edge(self, label_a: str, label_b: str) -> Optional[TopologyEdge]:
        for e in self.edges:
            if e.joins(label_a, label_b):
                return e
        return None

    def coupling(self, label_a: str, label_b: str, f_a: float, f_b: float) -> float:
        """Coupling between two modes at the given frequencies; 0 if no edge."""
        e = self.edge(label_a, label_b)
        if e is None:
            return 0.0
        return coupling_strength(e, f_a, f_b)

    def gate_param(self, name: str) -> float:
        if name not in GATE_DEFAULTS:
            raise ValidationError(f"unknown gate parameter {name}", field=f"gate.{name}")
        value = self.gate.get(name, GATE_DEFAULTS[name])
        if value is None:
            raise ValidationError(f"gate.{name} is missing", field=f"gate.{name}")
        return float(value)

    @property
    def operating_point(self) -> float:
        return self.gate_param("f_l_cz_ghz")

    def scaled(self, factor: float) -> "DeviceConfig":
        """Copy with every coupling multiplied by factor."""
        return DeviceConfig(self.modes, tuple(e.scaled(factor) for e in self.edges),
                            self.topology, self.roles, self.gate)


@dataclass(frozen=True)
class CrosstalkMatrix:
    """
    Flux crosstalk matrix M with M[i, j] the response of line i to line j.
    """
    labels: Tuple[str, ...]
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        object.__setattr__(self, "m", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"crosstalk matrix must be square, got shape {m.shape}", field="m")
        if len(self.labels) != m.shape[0]:
            raise ValidationError(
                f"crosstalk matrix has {m.shape[0]} rows but {len(self.labels)} labels", field="labels")
        if not np.all(np.diag(m) == 1.0):
            raise ValidationError("crosstalk matrix diagonal entries must equal 1", field="m")
        cond = self.condition_number
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise SingularMatrixError(
                f"crosstalk matrix is singular or ill-conditioned (condition number {cond:.3g})",
                condition_number=cond)
        off = m - np.diag(np.diag(m))
        if np.max(np.abs(off), initial=0.0) >= MAX_CROSSTALK:
            raise ValidationError(
                f"crosstalk coefficients must be below {MAX_CROSSTALK} in magnitude", field="m")

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.m))


def coupling_strength(edge: TopologyEdge, f_a: float, f_b: float) -> float:
    """
    Coupling in GHz for an edge at the given mode frequencies.

    Uses g = rho * sqrt(f_a * f_b) for coefficient edges; fixed edges pass
    through unchanged.
    """
    if not (f_a > 0 and f_b > 0):
        raise ValidationError(f"frequencies must be positive, got {f_a}, {f_b}", field="frequency")
    if edge.g_fixed is not None:
        return float(edge.g_fixed)
    return float(edge.rho) * math.sqrt(f_a * f_b)


def compensate_flux(m: CrosstalkMatrix, z: Sequence[float]) -> np.ndarray:
    """
    Solve M z_corrected = z for the amplitudes to send to the Z lines.

    Args:
        m: Crosstalk matrix
        z: Target amplitudes, ordered like m.labels

    Returns:
        Corrected amplitudes

    Raises:
        ValidationError: If dimensions disagree
        SingularMatrixError: If M is singular or ill-conditioned
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (m.m.shape[0],):
        raise ValidationError(
            f"target vector has length {z.size}, matrix has dimension {m.m.shape[0]}", field="z")
    cond = m.condition_number
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularMatrixError(f"crosstalk matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:g}",
                                  condition_number=cond)
    z_corr = np.linalg.solve(m.m, z)
    # one step of iterative refinement
    z_corr = z_corr + np.linalg.solve(m.m, z - m.m @ z_corr)
    return z_corr


def cz_frequencies(config: DeviceConfig, f_s: Union[None, float, Sequence[float]] = None,
                   f_cs: Union[None, float, Sequence[float]] = None,
                   operating_point: Optional[float] = None,
                   f_l: Optional[float] = None) -> Dict[str, float]:
    """
    Mode frequencies of the CZ configuration.

    Q_l sits at the operating point (or f_l when pulsed), Q_h at the
    operating point minus its anharmonicity so that |11> and |02> are
    degenerate, spectators and their couplers at the supplied values
    (idle when omitted), the gate coupler at idle.
    """
    r = config.roles
    op = config.operating_point if operating_point is None else operating_point
    freqs = {m.label: m.f_idle for m in config.modes}
    freqs[r.ql] = op if f_l is None else f_l
    freqs[r.qh] = op - config.mode(r.qh).anharmonicity
    for labels, values in ((r.qs, f_s), (r.cs, f_cs)):
        if values is None:
            continue
        if np.isscalar(values):
            values = [values] * len(labels)
        if len(values) != len(labels):
            raise ValidationError(f"expected {len(labels)} values for {labels}, got {len(values)}",
                                  field="frequencies")
        for label, value in zip(labels, values):
            freqs[label] = float(value)
    return freqs


def _read_number(record: Mapping[str, Any], stem: str, owner: str, required: bool = True) -> Optional[float]:
    """Read a field given with a _ghz or _mhz suffix, returned in GHz."""
    if f"{stem}_ghz" in record:
        value = record[f"{stem}_ghz"]
        scale = 1.0
    elif f"{stem}_mhz" in record:
        value = record[f"{stem}_mhz"]
        scale = 1e-3
    elif required:
        raise ValidationError(f"{owner}.{stem}_ghz is missing", field=f"{owner}.{stem}_ghz")
    else:
        return None
    try:
        return float(value) * scale
    except (TypeError, ValueError):
        raise ValidationError(f"{owner}.{stem}_ghz is not a number: {value!r}", field=f"{owner}.{stem}_ghz")


def _optional_float(record: Mapping[str, Any], key: str, owner: str) -> Optional[float]:
    if record.get(key) is None:
        return None
    try:
        return float(record[key])
    except (TypeError, ValueError):
        raise ValidationError(f"{owner}.{key} is not a number: {record[key]!r}", field=f"{owner}.{key}")


def _as_tuple(value: Any) -> Tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,)
    return tuple(str(v) for v in value)


def config_from_dict(data: Mapping[str, Any]) -> DeviceConfig:
    """
    Build a DeviceConfig from its parsed structured-text form.

    Raises:
        ValidationError: On any missing role, missing field or invariant violation
    """
    if not isinstance(data, Mapping):
        raise ValidationError("config root must be a mapping", field="<root>")

    modes = []
    for i, record in enumerate(data.get("modes") or []):
        owner = str(record.get("label", f"modes[{i}]"))
        modes.append(ModeParams(
            label=owner,
            f_idle=_read_number(record, "f_idle", owner),
            anharmonicity=_read_number(record, "anharmonicity", owner),
            t1_us=_optional_float(record, "t1_us", owner),
            t1_resonant_us=_optional_float(record, "t1_resonant_us", owner),
            t2_echo_us=_optional_float(record, "t2_echo_us", owner),
            readout_f0=_optional_float(record, "readout_f0", owner),
            readout_f1=_optional_float(record, "readout_f1", owner),
            readout_ghz=_optional_float(record, "readout_ghz", owner),
            e1_rb=_optional_float(record, "e1_rb", owner),
        ))
    if not modes:
        raise ValidationError("config lists no modes", field="modes")

    edges = []
    for i, record in enumerate(data.get("edges") or []):
        owner = f"edges[{i}]"
        if "a" not in record or "b" not in record:
            raise ValidationError(f"{owner} needs mode labels a and b", field=owner)
        edges.append(TopologyEdge(
            mode_a=str(record["a"]),
            mode_b=str(record["b"]),
            rho=_optional_float(record, "rho", owner),
            g_fixed=_read_number(record, "g_fixed", owner, required=False),
        ))

    roles = data.get("roles") or {}
    for key in ("ql", "qh", "qs", "cg", "cs"):
        if key not in roles or roles[key] in (None, "", []):
            raise ValidationError(f"role {ROLE_NAMES[key]} unresolved", field=f"roles.{key}")

    try:
        topology = Topology(str(data.get("topology", "LHS")).upper())
    except ValueError:
        raise ValidationError(f"topology must be LHS or HLS, got {data.get('topology')!r}", field="topology")

    gate = dict(GATE_DEFAULTS)
    for key, value in (data.get("gate") or {}).items():
        if key not in GATE_DEFAULTS:
            raise ValidationError(f"unknown gate parameter {key}", field=f"gate.{key}")
        gate[key] = _optional_float(data["gate"], key, "gate")
        if gate[key] is None:
            raise ValidationError(f"gate.{key} is missing", field=f"gate.{key}")

    return DeviceConfig(
        modes=tuple(modes),
        edges=tuple(edges),
        topology=topology,
        roles=RoleMap(
            ql=str(roles["ql"]),
            qh=str(roles["qh"]),
            qs=_as_tuple(roles["qs"]),
            cg=str(roles["cg"]),
            cs=_as_tuple(roles["cs"]),
        ),
        gate=gate,
    )


def config_to_dict(config: DeviceConfig) -> Dict[str, Any]:
    """Serialize a DeviceConfig to the structured-text schema."""
    modes = []
    for m in config.modes:
        record = {"label": m.label, "f_idle_ghz": m.f_idle, "anharmonicity_ghz": m.anharmonicity}
        for key in ("t1_us", "t1_resonant_us", "t2_echo_us", "readout_f0", "readout_f1",
                    "readout_ghz", "e1_rb"):
            value = getattr(m, key)
            if value is not None:
                record[key] = value
        modes.append(record)
    edges = []
    for e in config.edges:
        record = {"a": e.mode_a, "b": e.mode_b}
        if e.rho is not None:
            record["rho"] = e.rho
        else:
            record["g_fixed_ghz"] = e.g_fixed
        edges.append(record)
    r = config.roles
    roles = {
        "ql": r.ql,
        "qh": r.qh,
        "qs": r.qs[0] if len(r.qs) == 1 else list(r.qs),
        "cg": r.cg,
        "cs": r.cs[0] if len(r.cs) == 1 else list(r.cs),
    }
    return {
        "modes": modes,
        "edges": edges,
        "roles": roles,
        "topology": config.topology.value,
        "gate": dict(config.gate),
    }


def load_config(path: Union[str, Path]) -> DeviceConfig:
    """
    Load and validate a device config (JSON, or YAML by extension).

    Args:
        path: Config file path

    Returns:
        Validated DeviceConfig

    Raises:
        MissingFileError: If the file does not exist
        MalformedDataError: If the file does not parse
        ValidationError: If a role is missing or an invariant is violated
    """
    path = validate_file_path(str(path))
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise MalformedDataError(f"Cannot parse config {path}: {e}")
    config = config_from_dict(data)
    log.debug("loaded config %s: %d modes, %d edges, %s", path, len(config.modes),
              len(config.edges), config.topology.value)
    return config


def save_config(config: DeviceConfig, path: Union[str, Path]) -> Path:
    """Write a config as JSON."""
    path = Path(path)
    path.write_text(json.dumps(config_to_dict(config), indent=2) + "\n", encoding="utf-8")
    return path


def _data_rows(path: Path) -> List[List[str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return [row for row in csv.reader(f) if row and not row[0].lstrip().startswith("#")]


def load_crosstalk_csv(path: Union[str, Path]) -> CrosstalkMatrix:
    """
    Read a crosstalk matrix from CSV: a header row of labels, then one row
    of coefficients per line.
    """
    path = validate_file_path(str(path))
    rows = _data_rows(path)
    if len(rows) < 2:
        raise MalformedDataError(f"{path}: expected a header row and at least one matrix row")
    labels = tuple(cell.strip() for cell in rows[0])
    try:
        m = np.array([[float(cell) for cell in row] for row in rows[1:]], dtype=float)
    except ValueError as e:
        raise MalformedDataError(f"{path}: non-numeric matrix entry ({e})")
    if m.ndim != 2:
        raise MalformedDataError(f"{path}: rows have different lengths")
    return CrosstalkMatrix(labels=labels, m=m)


def load_vector_csv(path: Union[str, Path], labels: Sequence[str]) -> np.ndarray:
    """
    Read target amplitudes from a ``label,z`` CSV and order them like labels.
    """
    path = validate_file_path(str(path))
    rows = _data_rows(path)
    if rows and rows[0][0].strip().lower() == "label":
        rows = rows[1:]
    values = {}
    try:
        for row in rows:
            values[row[0].strip()] = float(row[1])
    except (IndexError, ValueError) as e:
        raise MalformedDataError(f"{path}: expected label,z rows ({e})")
    missing = [label for label in labels if label not in values]
    if missing:
        raise MalformedDataError(f"{path}: no target for {', '.join(missing)}")
    return np.array([values[label] for label in labels], dtype=float)
