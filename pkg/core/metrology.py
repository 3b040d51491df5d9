"""
Leakage metrology: interference amplification, XEB-style decay fits and the
error-budget arithmetic around them.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import lmfit
import numpy as np
from scipy.optimize import minimize_scalar

from core.device import DeviceConfig
from utils.error_handling import FitError, ValidationError

log = logging.getLogger(__name__)

# dimension of the two-qubit computational subspace
D_COMPUTATIONAL = 4

LEAK_FIT_KWS = {"xtol": 1e-12, "ftol": 1e-12}
COLINEAR_LAMBDA = 1e-3


@dataclass(frozen=True)
class SU2Params:
    """
    Per-gate transfer angle beta and phase zeta, idle phase phi; chi is fixed at 0.
    """
    beta: float
    zeta: float
    phi: float = 0.0
    chi: float = 0.0

    def __post_init__(self):
        if self.chi != 0.0:
            raise ValidationError("chi has no measurable effect and must be 0", field="chi")

    @property
    def zeta_prime(self) -> float:
        return self.zeta + self.phi / 2


def su2_matrix(beta: float, zeta: float) -> np.ndarray:
    """Single-gate rotation on the {|110>, |011>} pair."""
    return np.array([
        [np.exp(-1j * zeta) * math.cos(beta), -1j * math.sin(beta)],
        [-1j * math.sin(beta), np.exp(1j * zeta) * math.cos(beta)],
    ])


def z_rotation(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def idle_phase(delta_ghz: float, tau_ns: float) -> float:
    """Phase accumulated by the spectator detuning over an idle period."""
    return 2 * math.pi * delta_ghz * tau_ns


def amplification_model(n, beta, zeta_prime, scale=1.0):
    """P(n) = scale * sin^2(beta) sin^2(n Omega) / sin^2(Omega), cos(Omega) = cos(beta) cos(zeta')."""
    n = np.asarray(n, dtype=float)
    sin2_beta = np.sin(beta) ** 2
    # sin^2(Omega) written without cancellation
    sin2_omega = sin2_beta + np.cos(beta) ** 2 * np.sin(zeta_prime) ** 2
    omega = np.arctan2(np.sqrt(sin2_omega), np.cos(beta) * np.cos(zeta_prime))
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(sin2_omega > 0, sin2_beta * np.sin(n * omega) ** 2 / np.where(sin2_omega > 0, sin2_omega, 1.0), 0.0)
    return scale * p


def oscillation_amplitude(beta: float, zeta_prime: float) -> float:
    """Envelope sin^2(alpha) = sin^2(beta) / sin^2(Omega); 1 when sin(zeta') = 0 and beta != 0."""
    sin2_beta = math.sin(beta) ** 2
    if sin2_beta == 0.0:
        return 0.0
    return sin2_beta / (sin2_beta + math.cos(beta) ** 2 * math.sin(zeta_prime) ** 2)


def su2_population_oracle(p: SU2Params, n: int) -> float:
    """|<011| (Z(phi) R(beta, zeta))^n |110>|^2 by explicit matrix products."""
    cycle = z_rotation(p.phi) @ su2_matrix(p.beta, p.zeta)
    return float(abs(np.linalg.matrix_power(cycle, int(n))[1, 0]) ** 2)


def su2_sequence_population(p: SU2Params, n: int,
                            verify: bool = False) -> Union[float, Tuple[float, float]]:
    """
    Spectator population after n gate-plus-idle cycles.

    Returns:
        Closed-form population, or (closed_form, matrix_product) when verify is set
    """
    if n < 0:
        raise ValidationError(f"sequence length must be non-negative, got {n}", field="n")
    closed = float(amplification_model(n, p.beta, p.zeta_prime))
    if verify:
        return closed, su2_population_oracle(p, n)
    return closed


def peak_amplitude(beta: float, zeta_prime: float, n_max: int = 200) -> float:
    """max over n <= n_max of P(n)."""
    return float(np.max(amplification_model(np.arange(n_max + 1), beta, zeta_prime)))


@dataclass(frozen=True)
class PhaseScan:
    zeta_prime: float
    amplitude: float
    amplitude_at_half_pi: float


def scan_phase_for_max_amplitude(beta: float, n_max: int = 200, n_grid: int = 721) -> PhaseScan:
    """
    Effective phase zeta' that maximises the peak spectator population over
    sequences of up to n_max cycles.
    """
    if not 0 < beta < math.pi / 2:
        raise ValidationError(f"beta must lie in (0, pi/2), got {beta}", field="beta")
    grid = np.linspace(-math.pi, math.pi, n_grid)
    values = np.array([peak_amplitude(beta, z, n_max) for z in grid])
    k = int(np.argmax(values))
    best_z, best_a = float(grid[k]), float(values[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    res = minimize_scalar(lambda z: -peak_amplitude(beta, z, n_max), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    if -res.fun > best_a:
        best_z, best_a = float(res.x), float(-res.fun)
    # wrap into (-pi, pi]
    best_z = math.atan2(math.sin(best_z), math.cos(best_z))
    return PhaseScan(zeta_prime=best_z, amplitude=best_a,
                     amplitude_at_half_pi=peak_amplitude(beta, math.pi / 2, n_max))


@dataclass
class BetaFit:
    beta: float
    zeta_prime: float
    L1: float
    beta_stderr: Optional[float]
    L1_stderr: Optional[float]
    ci95: Tuple[float, float]
    residual: float
    nfev: int
    warnings: List[str] = field(default_factory=list)
    scale: float = 1.0


def _stderr(param: lmfit.Parameter) -> Optional[float]:
    if param.stderr is None or not np.isfinite(param.stderr):
        return None
    return float(param.stderr)


def _omega_candidates(n: np.ndarray, p: np.ndarray, n_omega: int, keep: int) -> List[Tuple[float, float]]:
    """(amplitude, Omega) seeds from a linear fit of A sin^2(n Omega) per grid Omega."""
    omegas = np.linspace(math.pi / 2 / n_omega, math.pi / 2, n_omega)
    scores = []
    for omega in omegas:
        basis = np.sin(n * omega) ** 2
        norm = float(basis @ basis)
        if norm == 0.0:
            continue
        amp = float(basis @ p) / norm
        scores.append((float(np.sum((p - amp * basis) ** 2)), amp, float(omega)))
    scores.sort()
    return [(amp, omega) for _, amp, omega in scores[:keep]]


def fit_beta(n: Sequence[float], p: Sequence[float], shots: Optional[int] = None,
             vary_scale: bool = False, restarts: int = 3) -> BetaFit:
    """
    Fit the amplification model to a spectator-population series.

    The amplitude scale is held at 1 unless vary_scale is set. The series
    only fixes the oscillation amplitude and Omega, so a free scale is
    degenerate with beta and zeta'.

    Args:
        n: Cycle counts
        p: Measured spectator populations
        shots: Shots per point; enables binomial weights
        vary_scale: Fit an amplitude scale instead of fixing it at 1
        restarts: Number of seeds tried from the linear Omega scan

    Returns:
        BetaFit with L1 = sin^2(beta) / 4

    Raises:
        ValidationError: On fewer than 8 points
        FitError: If no restart converges
    """
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    if n.size < 8 or n.size != p.size:
        raise ValidationError(f"need at least 8 (n, P) points, got {n.size}", field="series")
    if np.max(np.abs(p)) < 1e-15:
        return BetaFit(beta=0.0, zeta_prime=0.0, L1=0.0, beta_stderr=None, L1_stderr=None,
                       ci95=(0.0, 0.0), residual=0.0, nfev=0, warnings=["flat series, no transfer"])

    weights = None
    if shots:
        sigma = np.sqrt(np.clip(p * (1 - p), 1.0 / shots, None) / shots)
        weights = 1.0 / sigma

    model = lmfit.Model(amplification_model, independent_vars=["n"])
    best = None
    eps = 1e-6
    for amp, omega in _omega_candidates(n, p, 2000, restarts):
        sin2_beta = min(max(amp, 0.0), 1.0) * math.sin(omega) ** 2
        beta0 = min(max(math.asin(math.sqrt(sin2_beta)), eps), math.pi / 2 - eps)
        cos_z = math.cos(omega) / math.cos(beta0)
        zeta0 = min(max(math.acos(min(max(cos_z, -1.0), 1.0)), eps), math.pi / 2 - eps)
        model.set_param_hint("beta", value=beta0, min=0.0, max=math.pi / 2)
        model.set_param_hint("zeta_prime", value=zeta0, min=0.0, max=math.pi / 2)
        model.set_param_hint("scale", value=1.0, min=0.0, vary=vary_scale)
        model.set_param_hint("L1", expr="sin(beta)**2/4")
        params = model.make_params()
        try:
            result = model.fit(p, params, n=n, weights=weights, fit_kws=dict(LEAK_FIT_KWS))
        except (ValueError, TypeError) as e:
            log.debug("beta fit seed (%.4g, %.4g) failed: %s", beta0, zeta0, e)
            continue
        if best is None or result.chisqr < best.chisqr:
            best = result

    if best is None or not np.isfinite(best.params["beta"].value):
        raise FitError("beta fit did not converge", best_so_far={} if best is None else
                       {k: v.value for k, v in best.params.items()})

    beta = float(best.params["beta"].value)
    L1 = float(best.params["L1"].value)
    L1_err = _stderr(best.params["L1"])
    ci = (L1 - 1.96 * L1_err, L1 + 1.96 * L1_err) if L1_err is not None else (float("nan"), float("nan"))
    warnings = [] if best.success else ["beta fit stopped before convergence"]
    return BetaFit(beta=beta, zeta_prime=float(best.params["zeta_prime"].value), L1=L1,
                   beta_stderr=_stderr(best.params["beta"]), L1_stderr=L1_err, ci95=ci,
                   residual=float(np.sqrt(best.chisqr)), nfev=int(best.nfev), warnings=warnings,
                   scale=float(best.params["scale"].value))


def leakage_model(m, p0, p_inf, lambda1):
    """p_L(m) = (p0 - p_inf) lambda1^m + p_inf."""
    return (p0 - p_inf) * np.asarray(lambda1, dtype=float) ** np.asarray(m, dtype=float) + p_inf


def fidelity_model(m, A, B, C, lambda1, lambda2):
    """F(m) = A lambda1^m + B lambda2^m + C."""
    m = np.asarray(m, dtype=float)
    return A * lambda1 ** m + B * lambda2 ** m + C


@dataclass
class LeakageFit:
    L1: float
    L2: float
    p0: float
    p_inf: float
    lambda1: float
    covariance: Optional[np.ndarray]
    stderr: Dict[str, Optional[float]]
    residual: float
    nfev: int
    flat: bool = False
    warnings: List[str] = field(default_factory=list)


@dataclass
class FidelityFit:
    A: float
    B: float
    C: float
    lambda1: float
    lambda2: float
    avg_fidelity: float
    covariance: Optional[np.ndarray]
    stderr: Dict[str, Optional[float]]
    residual: float
    single_exponential: bool = False
    warnings: List[str] = field(default_factory=list)


def average_fidelity(lambda2: float, L1: float) -> float:
    """F = ((d - 1) lambda2 + 1 - L1) / d."""
    return ((D_COMPUTATIONAL - 1) * lambda2 + 1 - L1) / D_COMPUTATIONAL


def _decay_grid() -> np.ndarray:
    return 1.0 - np.logspace(-7, math.log10(0.5), 500)


def fit_leakage_population(m: Sequence[float], p_leak: Sequence[float]) -> LeakageFit:
    """
    Fit the leakage population decay and split 1 - lambda1 into L1 and L2.

    Raises:
        ValidationError: On fewer than 5 depths or populations outside [0, 1]
        FitError: If the fitted lambda1 leaves (0, 1]
    """
    m = np.asarray(m, dtype=float)
    p = np.asarray(p_leak, dtype=float)
    if m.size < 5 or m.size != p.size:
        raise ValidationError(f"need at least 5 cycle depths, got {m.size}", field="depths")
    if np.any(p < 0) or np.any(p > 1):
        raise ValidationError("leakage populations must lie in [0, 1]", field="p_leak")

    if np.ptp(p) < 1e-12:
        level = float(np.mean(p))
        return LeakageFit(L1=0.0, L2=0.0, p0=level, p_inf=level, lambda1=1.0, covariance=None,
                          stderr={}, residual=0.0, nfev=0, flat=True,
                          warnings=["flat leakage data, L1 + L2 set to 0"])

    best = None
    for lam in _decay_grid():
        design = np.column_stack([lam ** m, np.ones_like(m)])
        coef, *_ = np.linalg.lstsq(design, p, rcond=None)
        score = float(np.sum((design @ coef - p) ** 2))
        if best is None or score < best[0]:
            best = (score, float(lam), float(coef[0]), float(coef[1]))
    _, lam0, amp0, p_inf0 = best

    model = lmfit.Model(leakage_model, independent_vars=["m"])
    model.set_param_hint("p0", value=amp0 + p_inf0)
    model.set_param_hint("p_inf", value=min(max(p_inf0, 1e-9), 1 - 1e-9), min=0.0, max=1.0)
    model.set_param_hint("lambda1", value=min(lam0, 1 - 1e-12), min=0.0, max=1.0)
    model.set_param_hint("L1", expr="p_inf*(1-lambda1)")
    model.set_param_hint("L2", expr="(1-p_inf)*(1-lambda1)")
    result = model.fit(p, model.make_params(), m=m, fit_kws=dict(LEAK_FIT_KWS))

    values = {k: float(v.value) for k, v in result.params.items()}
    if not 0.0 < values["lambda1"] <= 1.0:
        raise FitError(f"fitted lambda1 = {values['lambda1']:.6g} is outside (0, 1]", best_so_far=values)
    warnings = [] if result.success else ["leakage fit stopped before convergence"]
    return LeakageFit(
        L1=values["L1"], L2=values["L2"], p0=values["p0"], p_inf=values["p_inf"],
        lambda1=values["lambda1"], covariance=result.covar,
        stderr={k: _stderr(v) for k, v in result.params.items()},
        residual=float(np.sqrt(result.chisqr)), nfev=int(result.nfev), warnings=warnings)


def fit_xeb_fidelity(m: Sequence[float], fidelity: Sequence[float], lambda1: float,
                     L1: float = 0.0) -> FidelityFit:
    """
    Fit F(m) = A lambda1^m + B lambda2^m + C with lambda1 held fixed.

    When the seeded lambda2 lands within 1e-3 of lambda1 the two exponentials
    cannot be told apart; the fit then drops the lambda1 term and flags it.
    """
    m = np.asarray(m, dtype=float)
    f = np.asarray(fidelity, dtype=float)
    if m.size < 8 or m.size != f.size:
        raise ValidationError(f"need at least 8 cycle depths, got {m.size}", field="depths")

    best = None
    for lam2 in _decay_grid():
        design = np.column_stack([lambda1 ** m, lam2 ** m, np.ones_like(m)])
        coef, *_ = np.linalg.lstsq(design, f, rcond=None)
        score = float(np.sum((design @ coef - f) ** 2))
        if best is None or score < best[0]:
            best = (score, float(lam2), coef)
    _, lam2_0, coef = best

    single = abs(lambda1 - lam2_0) < COLINEAR_LAMBDA
    warnings = []
    if single:
        message = (f"lambda1 ({lambda1:.6f}) and lambda2 ({lam2_0:.6f}) are co-linear, "
                   f"falling back to a single exponential")
        log.warning(message)
        warnings.append(message)
        design = np.column_stack([lam2_0 ** m, np.ones_like(m)])
        b0, c0 = np.linalg.lstsq(design, f, rcond=None)[0]
        coef = (0.0, b0, c0)

    model = lmfit.Model(fidelity_model, independent_vars=["m"])
    model.set_param_hint("A", value=float(coef[0]), vary=not single)
    model.set_param_hint("B", value=float(coef[1]))
    model.set_param_hint("C", value=float(coef[2]))
    model.set_param_hint("lambda1", value=lambda1, vary=False)
    model.set_param_hint("lambda2", value=min(lam2_0, 1 - 1e-12), min=0.0, max=1.0)
    model.set_param_hint("d", value=D_COMPUTATIONAL, vary=False)
    model.set_param_hint("L1", value=L1, vary=False)
    model.set_param_hint("F", expr="1/d*((d-1)*lambda2+1-L1)")
    result = model.fit(f, model.make_params(), m=m, fit_kws=dict(LEAK_FIT_KWS))

    values = {k: float(v.value) for k, v in result.params.items()}
    if not 0.0 < values["lambda2"] <= 1.0:
        raise FitError(f"fitted lambda2 = {values['lambda2']:.6g} is outside (0, 1]", best_so_far=values)
    if not result.success:
        warnings.append("fidelity fit stopped before convergence")
    return FidelityFit(
        A=values["A"], B=values["B"], C=values["C"], lambda1=lambda1, lambda2=values["lambda2"],
        avg_fidelity=values["F"], covariance=result.covar,
        stderr={k: _stderr(v) for k, v in result.params.items()},
        residual=float(np.sqrt(result.chisqr)), single_exponential=single, warnings=warnings)


def leakage_error_contribution(L1: float) -> float:
    """Gate error from leakage, L1 + L1/4."""
    if not 0.0 <= L1 <= 1.0:
        raise ValidationError(f"L1 must lie in [0, 1], got {L1}", field="L1")
    return 1.25 * L1


def seepage_rate(t_1q_ns: float, T1_idle_us: float, t_cz_ns: float, T1_res_us: float) -> float:
    """Seepage per cycle from spectator T1 decay during one single-qubit and one CZ layer."""
    if t_1q_ns < 0 or t_cz_ns < 0 or not T1_idle_us > 0 or not T1_res_us > 0:
        raise ValidationError("gate times must be non-negative and T1 values positive", field="seepage")
    return t_1q_ns / (T1_idle_us * 1e3) + t_cz_ns / (T1_res_us * 1e3)


def measurement_floor(p_inf_min: float, L2: float) -> Tuple[float, float]:
    """
    Smallest resolvable L1 for a population floor p_inf_min.

    Returns:
        (p_inf_min * L2, p_inf_min * L2 / (1 - p_inf_min)); the second solves
        p_inf = L1 / (L1 + L2) without assuming L1 << L2
    """
    if p_inf_min < 0 or L2 < 0:
        raise ValidationError("measurement floor inputs must be non-negative", field="p_floor")
    approx = p_inf_min * L2
    exact = approx / (1 - p_inf_min) if p_inf_min < 1 else float("inf")
    return approx, exact


@dataclass
class ErrorBudget:
    L1: float
    eps_leak: float
    L2_seepage: float
    L1_min_floor: float
    L1_min_exact: float
    p_floor: float
    warnings: List[str] = field(default_factory=list)


def error_budget(config: DeviceConfig, p_floor: float, L1: float = 0.0, spectator: int = 0) -> ErrorBudget:
    """
    Seepage, leakage error and measurement floor for one spectator.

    A missing resonant T1 falls back to the idle T1 with a warning.
    """
    label = config.roles.qs[spectator]
    mode = config.mode(label)
    if mode.t1_us is None:
        raise ValidationError(f"{label}.t1_us is required for the seepage budget", field=f"{label}.t1_us")
    warnings = []
    t1_res = mode.t1_resonant_us
    if t1_res is None:
        t1_res = mode.t1_us
        message = f"{label}.t1_resonant_us missing, using idle T1 = {mode.t1_us} us"
        log.warning(message)
        warnings.append(message)
    L2 = seepage_rate(config.gate_param("t_1q_ns"), mode.t1_us, config.gate_param("t_cz_ns"), t1_res)
    floor, exact = measurement_floor(p_floor, L2)
    return ErrorBudget(L1=L1, eps_leak=leakage_error_contribution(L1), L2_seepage=L2,
                       L1_min_floor=floor, L1_min_exact=exact, p_floor=p_floor, warnings=warnings)


def prediction_consistent(predicted: float, measured: float, sigma: float, n_sigma: float = 1.0) -> bool:
    """True when predicted lies within n_sigma * sigma of measured."""
    return abs(predicted - measured) <= n_sigma * sigma


@dataclass(frozen=True)
class AdditivityReport:
    per_spectator: Tuple[float, ...]
    sum_single: float
    total: float
    relative_error: float
    additive: bool


def additivity_report(per_spectator: Sequence[float], total: float, tolerance: float = 0.1) -> AdditivityReport:
    """Compare a joint leakage value with the sum of single-spectator values."""
    summed = float(np.sum(per_spectator))
    rel = abs(total - summed) / summed if summed > 0 else (0.0 if total == 0 else float("inf"))
    return AdditivityReport(per_spectator=tuple(float(v) for v in per_spectator), sum_single=summed,
                            total=float(total), relative_error=rel, additive=rel <= tolerance)


@dataclass
class SyntheticXEB:
    depths: np.ndarray
    leak: np.ndarray
    fidelity: np.ndarray
    shots: Optional[int]
    lambda1: float
    lambda2: float

    def rows(self, which: str = "leak") -> List[Tuple[int, float, Optional[int]]]:
        values = self.leak if which == "leak" else self.fidelity
        return [(int(d), float(v), self.shots) for d, v in zip(self.depths, values)]


def synth_xeb_data(L1: float, L2: float, p0: float, depths: Sequence[int],
                   shots: Optional[int] = None,
                   seed: Union[None, int, np.random.SeedSequence] = None,
                   lambda2: float = 0.985) -> SyntheticXEB:
    """
    Leakage and fidelity decays for known rates, optionally with binomial
    shot noise. shots=None gives the exact model values.
    """
    for name, value in (("L1", L1), ("L2", L2), ("p0", p0), ("lambda2", lambda2)):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {value}", field=name)
    if shots is not None and shots < 1:
        raise ValidationError(f"shots must be at least 1, got {shots}", field="shots")
    depths = np.asarray(depths, dtype=int)
    lambda1 = 1.0 - (L1 + L2)
    p_inf = L1 / (L1 + L2) if L1 + L2 > 0 else p0
    leak = leakage_model(depths, p0, p_inf, lambda1)
    fid = fidelity_model(depths, (p_inf - p0) / D_COMPUTATIONAL, 0.75 * (1 - p0),
                         (1 - p_inf) / D_COMPUTATIONAL, lambda1, lambda2)
    if shots is not None:
        rng = np.random.default_rng(seed)
        leak = rng.binomial(shots, np.clip(leak, 0, 1)) / shots
        fid = rng.binomial(shots, np.clip(fid, 0, 1)) / shots
    return SyntheticXEB(depths=depths, leak=np.asarray(leak, dtype=float), fidelity=np.asarray(fid, dtype=float),
                        shots=shots, lambda1=lambda1, lambda2=lambda2)


@dataclass
class CalibrationReport:
    trials: int
    hits: int
    n_sigma: float
    estimates: List[float]

    @property
    def coverage(self) -> float:
        return self.hits / self.trials if self.trials else 0.0


def calibrate_fitter(L1: float, L2: float, p0: float, depths: Sequence[int], shots: int,
                     trials: int = 100, seed: int = 0, n_sigma: float = 3.0) -> CalibrationReport:
    """
    Monte-Carlo check that the leakage fit's error bars cover the true L1.

    Trial seeds are spawned from one root SeedSequence, so the report is
    reproducible for a given seed.
    """
    children = np.random.SeedSequence(seed).spawn(trials)
    hits, estimates = 0, []
    for child in children:
        data = synth_xeb_data(L1, L2, p0, depths, shots=shots, seed=child)
        try:
            fit = fit_leakage_population(data.depths, data.leak)
        except FitError:
            estimates.append(float("nan"))
            continue
        estimates.append(fit.L1)
        err = fit.stderr.get("L1")
        if err is not None and abs(fit.L1 - L1) <= n_sigma * err:
            hits += 1
    log.debug("fitter calibration: %d/%d within %g sigma", hits, trials, n_sigma)
    return CalibrationReport(trials=trials, hits=hits, n_sigma=n_sigma, estimates=estimates)


def synth_amplification_data(beta: float, zeta_prime: float, n: Sequence[int],
                             shots: Optional[int] = None,
                             seed: Union[None, int, np.random.SeedSequence] = None) -> np.ndarray:
    """Spectator populations of an amplification sequence, binomially sampled when shots is set."""
    if shots is not None and shots < 1:
        raise ValidationError(f"shots must be at least 1, got {shots}", field="shots")
    p = np.clip(amplification_model(np.asarray(n, dtype=int), beta, zeta_prime), 0.0, 1.0)
    if shots is None:
        return p
    return np.random.default_rng(seed).binomial(shots, p) / shots


def calibrate_beta_fitter(beta: float, zeta_prime: float, n: Sequence[int], shots: int,
                          trials: int = 100, seed: int = 0, n_sigma: float = 3.0) -> CalibrationReport:
    """
    Monte-Carlo check that fit_beta's error bars on L1 cover the true value
    sin^2(beta) / 4 under binomial shot noise.
    """
    L1 = math.sin(beta) ** 2 / 4
    n = np.asarray(n, dtype=int)
    hits, estimates = 0, []
    for child in np.random.SeedSequence(seed).spawn(trials):
        p = synth_amplification_data(beta, zeta_prime, n, shots=shots, seed=child)
        try:
            fit = fit_beta(n, p, shots=shots)
        except FitError:
            estimates.append(float("nan"))
            continue
        estimates.append(fit.L1)
        if fit.L1_stderr is not None and abs(fit.L1 - L1) <= n_sigma * fit.L1_stderr:
            hits += 1
    log.debug("beta fitter calibration: %d/%d within %g sigma", hits, trials, n_sigma)
    return CalibrationReport(trials=trials, hits=hits, n_sigma=n_sigma, estimates=estimates)
