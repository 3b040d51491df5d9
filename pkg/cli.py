#!/usr/bin/env python3
"""
czleak CLI - spectator leakage simulation and calibration for tunable-coupler CZ gates.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

# Add current directory to the import path
sys.path.insert(0, str(Path(__file__).parent))

import click
import numpy as np

from core import __version__
from core.blocks import (
    bright_dark_frame, multi_spectator_g2, solve_off_frequency, sweep_off_frequency, weak_coupling_g2
)
from core.device import (
    BUNDLED_CONFIG, DeviceConfig, compensate_flux, load_config, load_crosstalk_csv, load_vector_csv
)
from core.dynamics import (
    calibrate_flat_top, calibrate_gate_duration, gate_length_scan, nominal_gate_duration, simulate_cz,
    sweep_coupler_frequency, three_level_builder
)
from core.hamiltonian import anticrossing_gaps, build_multi_level, build_three_level, eigenspectrum, spectrum_to_rows
from core.metrology import (
    additivity_report, error_budget, fit_beta, fit_leakage_population, fit_xeb_fidelity,
    leakage_error_contribution, synth_xeb_data
)
from core.pulses import ControlSchedule
from core.reporting import RunManifest, format_report, load_series_csv, write_csv, write_report
from utils.error_handling import (
    NoOffPointError, ValidationError, handle_cli_error, print_warnings, validate_file_path,
    validate_format, validate_output_dir
)

CONFIG_ENVVAR = "CZLEAK_CONFIG"
DEFAULT_OUT = "czleak-out"


class Session:
    """Global options shared by every command."""

    def __init__(self, config_path: Optional[str], out: str, seed: Optional[int], format_name: str):
        self.config_path = Path(config_path) if config_path else BUNDLED_CONFIG
        self.out = out
        self.seed = seed
        self.format_name = format_name
        self.outputs: List[str] = []

    def config(self) -> DeviceConfig:
        return load_config(self.config_path)

    def output_dir(self) -> Path:
        return validate_output_dir(self.out)

    def csv(self, name: str, header: Sequence[str], rows, units: str, kinds: Sequence[str]) -> Path:
        path = write_csv(self.output_dir() / name, header, rows, units, kinds)
        self.outputs.append(path.name)
        return path

    def finish(self, command: str, parameters: Dict[str, Any], report: Any,
               warnings: Sequence[str] = ()) -> None:
        """Write the report and the run manifest, then echo the report."""
        out_dir = self.output_dir()
        report_path = write_report(out_dir / f"{command}.{self.format_name}", report, self.format_name)
        self.outputs.append(report_path.name)
        RunManifest(command=command, config_path=str(self.config_path), parameters=parameters,
                    output_dir=str(out_dir), seed=self.seed, outputs=list(self.outputs)).write()
        click.echo(format_report(report, self.format_name))
        print_warnings(warnings)


def parse_floats(text: str, count: int, name: str) -> Tuple[float, ...]:
    """Parse 'a,b[,c]' into floats."""
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"{name} must be {count} comma-separated numbers, got '{text}'", field=name)
    if len(values) != count:
        raise ValidationError(f"{name} must be {count} comma-separated numbers, got '{text}'", field=name)
    return values


def parse_range(text: str, name: str) -> np.ndarray:
    """'start,stop,step' -> inclusive grid."""
    start, stop, step = parse_floats(text, 3, name)
    if not step > 0 or stop < start:
        raise ValidationError(f"{name} is empty: need start <= stop and step > 0, got '{text}'", field=name)
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def make_schedule(config: DeviceConfig, pulse: str, f_cs: float, f_s: float,
                  gate_ns: Optional[float]) -> ControlSchedule:
    """
    Rectangular gates default to the calibrated |11> return time and flat-top
    gates to the calibrated flat-top CZ; an explicit gate_ns skips calibration.
    """
    if pulse == "rectangular":
        if gate_ns is None:
            gate_ns = calibrate_gate_duration(build_three_level(config, f_cs, f_s))
        return ControlSchedule.rectangular(config.operating_point, f_cs, gate_ns)
    if gate_ns is None:
        return calibrate_flat_top(config).schedule.with_coupler(f_cs)
    return ControlSchedule.flat_top(config, f_cs, total_ns=gate_ns)


@click.group(context_settings=dict(help_option_names=['-h', '--help']))
@click.version_option(__version__, '--version', '-V', message='czleak %(version)s')
@click.option('--config', 'config_path', envvar=CONFIG_ENVVAR, type=click.Path(),
              help=f'Device config (JSON/YAML); defaults to ${CONFIG_ENVVAR} or the bundled device')
@click.option('--out', default=DEFAULT_OUT, show_default=True, help='Output directory')
@click.option('--seed', type=int, default=None, help='Root seed for noisy synthetic data')
@click.option('--format', 'format_', type=click.Choice(['json', 'yaml']), default='json',
              help='Report format (default: json)')
@click.option('--verbose', '-v', is_flag=True, default=False, help='Debug logging to stderr')
@click.pass_context
def cli(ctx, config_path, out, seed, format_, verbose):
    """
    Simulate and calibrate spectator leakage of tunable-coupler CZ gates.

    Examples:
      czleak solve-off --fs 4.27
      czleak solve-off --fs-range 4.24,4.30,0.001
      czleak sweep --fcs-range 5.40,5.80,0.01 --pulse rectangular
      czleak simulate --fcs 5.594 --trajectory 200
      czleak synth --l1 1.21e-3 --l2 4.66e-3 --shots 2000 --seed 7
      czleak fit --model leak czleak-out/synth_leak.csv
      czleak budget --p-floor 0.01
    """
    logging.basicConfig(level=logging.DEBUG if verbose else logging.ERROR, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = Session(config_path, out, seed, validate_format(format_))


@cli.command('solve-off')
@click.option('--fs', type=float, default=None, help='Spectator frequency (GHz); default from the gate block')
@click.option('--fs-range', default=None, help='Sweep start,stop,step (GHz); writes off_points.csv')
@click.option('--bracket', default='5.0,6.4', show_default=True, help='Coupler search window lo,hi (GHz)')
@click.pass_obj
def solve_off(session, fs, fs_range, bracket):
    """Coupler frequency at which the spectator decouples"""
    try:
        config = session.config()
        window = parse_floats(bracket, 2, 'bracket')
        if fs_range:
            grid = parse_range(fs_range, 'fs-range')
            solutions, warnings = sweep_off_frequency(config, grid, window)
            if not solutions:
                raise NoOffPointError(f"no off-point in window {window} for any f_s in {fs_range}", bracket=window)
            session.csv('off_points.csv', ['f_s_ghz', 'f_cs_off_ghz', 'residual_ghz'],
                        [(s.f_s, s.f_cs_off, s.g_BD_residual) for s in solutions],
                        units='frequencies in GHz', kinds=['f', 'f', 'p'])
            report = {'points': len(solutions), 'skipped': len(grid) - len(solutions),
                      'f_cs_off_min': min(s.f_cs_off for s in solutions),
                      'f_cs_off_max': max(s.f_cs_off for s in solutions)}
            session.finish('solve-off', {'fs_range': fs_range, 'bracket': list(window)}, report, warnings)
            return

        f_s = config.gate_param('f_s_resonant_ghz') if fs is None else fs
        solution = solve_off_frequency(config, f_s, window)
        h = build_three_level(config, solution.f_cs_off, f_s)
        report = {
            'solution': solution,
            'g_gate_mhz': h.g_gate * 1e3,
            'g1_mhz': h.g1 * 1e3,
            'g2_mhz': h.g2 * 1e3,
            'g2_closed_form_mhz': multi_spectator_g2(h.g_gate, [(h.g1, h.fS)], h.f11, h.f02)[0] * 1e3,
            'g2_weak_coupling_mhz': weak_coupling_g2(h.g_gate, [(h.g1, h.fS)], h.f11)[0] * 1e3,
            'case': h.case,
        }
        session.finish('solve-off', {'fs': f_s, 'bracket': list(window)}, report,
                       list(solution.warnings) + list(h.warnings))
    except Exception as e:
        handle_cli_error(e)


@cli.command()
@click.option('--fs', type=float, default=None, help='Spectator frequency (GHz)')
@click.option('--fcs-range', required=True, help='Coupler plateau grid start,stop,step (GHz)')
@click.option('--pulse', type=click.Choice(['rectangular', 'flat-top']), default='flat-top',
              show_default=True, help='Gate envelope')
@click.option('--gate-ns', type=float, default=None, help='Gate length (ns)')
@click.pass_obj
def sweep(session, fs, fcs_range, pulse, gate_ns):
    """Spectator leakage across coupler frequencies (leakage valley)"""
    try:
        config = session.config()
        f_s = config.gate_param('f_s_resonant_ghz') if fs is None else fs
        grid = parse_range(fcs_range, 'fcs-range')
        idle = config.mode(config.roles.cs[0]).f_idle
        schedule = make_schedule(config, pulse, idle, f_s, gate_ns)
        curve = sweep_coupler_frequency(config, f_s, grid, schedule)
        p_idle = simulate_cz(three_level_builder(config, f_s), schedule.with_coupler(idle)).total_leakage

        rows = [(f, p, '') for f, p in zip(curve.f_cs, curve.p_leak)]
        rows.append((curve.f_min, curve.p_min, 'valley_min'))
        rows.append((idle, p_idle, 'idle'))
        session.csv('leakage_valley.csv', ['f_cs_ghz', 'p_leak', 'marker'], rows,
                    units='f_cs in GHz, p_leak as probability', kinds=['f', 'p', 's'])

        warnings = []
        try:
            off = solve_off_frequency(config, f_s).f_cs_off
        except NoOffPointError as e:
            off = None
            warnings.append(str(e))
        report = {'f_s': f_s, 'pulse': pulse, 'gate_ns': schedule.gate_total_ns,
                  'f_cs_min': curve.f_min, 'p_leak_min': curve.p_min,
                  'idle_f_cs': idle, 'p_leak_idle': p_idle, 'f_cs_off_point': off}
        session.finish('sweep', {'fs': f_s, 'fcs_range': fcs_range, 'pulse': pulse,
                                 'gate_ns': schedule.gate_total_ns}, report, warnings)
    except Exception as e:
        handle_cli_error(e)


def _multi_builders(config: DeviceConfig, f_s_list: Sequence[float], f_cs_list: Sequence[float]):
    """Joint and per-spectator builders; all couplers follow the first coupler's pulse with fixed offsets."""
    offsets = [f - f_cs_list[0] for f in f_cs_list]

    def joint(f_l: float, f_cs: float):
        return build_multi_level(config, [f_cs + d for d in offsets], f_s_list, f_l=f_l)

    def single(i: int):
        return lambda f_l, f_cs: joint(f_l, f_cs).single(i)

    return joint, [single(i) for i in range(len(f_s_list))]


@cli.command()
@click.option('--fs', type=float, multiple=True, help='Spectator frequency (GHz); repeat per spectator')
@click.option('--fcs', type=float, multiple=True, help='Coupler plateau (GHz); repeat per spectator')
@click.option('--pulse', type=click.Choice(['rectangular', 'flat-top']), default='flat-top',
              show_default=True, help='Gate envelope')
@click.option('--gate-ns', type=float, default=None, help='Gate length (ns)')
@click.option('--trajectory', type=int, default=0, help='Write N trajectory samples to trajectory.csv')
@click.option('--scan', default=None, help='Gate-length scan start,stop,step (ns)')
@click.pass_obj
def simulate(session, fs, fcs, pulse, gate_ns, trajectory, scan):
    """Evolve |11> through one CZ gate"""
    try:
        config = session.config()
        n = config.roles.n_spectators
        f_s_list = list(fs) or [config.gate_param('f_s_resonant_ghz')] * n
        f_cs_list = list(fcs) or [config.mode(label).f_idle for label in config.roles.cs]
        if len(f_s_list) == 1:
            f_s_list *= n
        if len(f_cs_list) == 1:
            f_cs_list *= n
        if len(f_s_list) != n or len(f_cs_list) != n:
            raise ValidationError(f"config has {n} spectators: give --fs and --fcs once or {n} times",
                                  field='spectators')

        schedule = make_schedule(config, pulse, f_cs_list[0], f_s_list[0], gate_ns)
        if n == 1:
            builder = three_level_builder(config, f_s_list[0])
            singles = []
        else:
            builder, singles = _multi_builders(config, f_s_list, f_cs_list)
        result = simulate_cz(builder, schedule, n_samples=trajectory or None)

        report: Dict[str, Any] = {
            'f_s': f_s_list, 'f_cs': f_cs_list, 'pulse': pulse, 'gate_ns': schedule.gate_total_ns,
            'p_leak_S': list(result.p_leak_S), 'p_leak_total': result.total_leakage,
            'p_return_11': result.p_return_11, 'p_02': result.p_02,
            'conditional_phase': result.conditional_phase,
        }
        if n == 1:
            h = builder(*schedule.controls(schedule.gate_total_ns / 2))
            frame = bright_dark_frame(h)
            report.update({'g_BD_mhz': frame.g_BD * 1e3, 'g_B_mhz': frame.g_B * 1e3,
                           'nominal_gate_ns': nominal_gate_duration(h)})
        else:
            per_spectator = [simulate_cz(b, schedule).total_leakage for b in singles]
            report['additivity'] = additivity_report(per_spectator, result.total_leakage)

        if result.trajectory is not None:
            header = ['t_ns', 'p11', 'p02', 'pS', 'pD']
            rows = result.trajectory.rows()
            if n > 1:
                header += [f'pS{i + 1}' for i in range(n)]
                rows = [r + list(p[2:]) for r, p in zip(rows, result.trajectory.populations)]
            session.csv('trajectory.csv', header, rows, units='t in ns, populations as probabilities',
                        kinds=['f'] + ['p'] * (len(header) - 1))

        if scan:
            lengths = parse_range(scan, 'scan')
            scan_rows = gate_length_scan(builder, schedule, lengths)
            session.csv('gate_length_scan.csv', ['gate_ns', 'p_leak', 'p11'], scan_rows,
                        units='gate length in ns, populations as probabilities', kinds=['f', 'p', 'p'])

        session.finish('simulate', {'fs': f_s_list, 'fcs': f_cs_list, 'pulse': pulse,
                                    'gate_ns': schedule.gate_total_ns, 'trajectory': trajectory,
                                    'scan': scan}, report, result.warnings)
    except Exception as e:
        handle_cli_error(e)


@cli.command()
@click.argument('data', type=click.Path(dir_okay=False))
@click.option('--model', type=click.Choice(['leak', 'fidelity', 'beta']), required=True, help='Decay model')
@click.option('--lambda1', type=float, default=None, help='Leakage decay constant (fidelity model)')
@click.option('--l1', type=float, default=0.0, help='Leakage rate entering the fidelity formula')
@click.pass_obj
def fit(session, data, model, lambda1, l1):
    """Fit a leakage, fidelity or amplification series from CSV"""
    try:
        x, y, shots = load_series_csv(validate_file_path(data))
        warnings: List[str] = []
        if model == 'leak':
            result = fit_leakage_population(x, y)
            err = result.stderr.get('L1')
            report = {'fit': result, 'L1': result.L1, 'L1_stderr': err,
                      'L1_ci95': [result.L1 - 1.96 * err, result.L1 + 1.96 * err] if err else None,
                      'eps_leak': leakage_error_contribution(min(max(result.L1, 0.0), 1.0))}
        elif model == 'fidelity':
            if lambda1 is None:
                raise ValidationError("--lambda1 is required for the fidelity model", field='lambda1')
            result = fit_xeb_fidelity(x, y, lambda1, l1)
            report = {'fit': result, 'avg_fidelity': result.avg_fidelity}
        else:
            result = fit_beta(x, y, shots=int(shots[0]) if shots is not None else None)
            report = {'fit': result, 'L1': result.L1, 'L1_ci95': list(result.ci95)}
        warnings.extend(result.warnings)
        session.finish('fit', {'data': str(data), 'model': model, 'lambda1': lambda1, 'l1': l1},
                       report, warnings)
    except Exception as e:
        handle_cli_error(e)


@cli.command()
@click.option('--p-floor', type=float, default=0.01, show_default=True, help='Smallest resolvable p_inf')
@click.option('--l1', type=float, default=0.0, help='Measured leakage rate per cycle')
@click.option('--spectator', type=int, default=0, help='Spectator index in the role map')
@click.pass_obj
def budget(session, p_floor, l1, spectator):
    """Seepage, leakage error and measurement floor"""
    try:
        config = session.config()
        if not 0 <= spectator < config.roles.n_spectators:
            raise ValidationError(f"spectator index {spectator} out of range", field='spectator')
        result = error_budget(config, p_floor, l1, spectator)
        session.finish('budget', {'p_floor': p_floor, 'l1': l1, 'spectator': spectator},
                       result, result.warnings)
    except Exception as e:
        handle_cli_error(e)


@cli.command()
@click.argument('matrix', type=click.Path(dir_okay=False))
@click.argument('targets', type=click.Path(dir_okay=False))
@click.pass_obj
def crosstalk(session, matrix, targets):
    """Flux amplitudes that realise target shifts under crosstalk"""
    try:
        m = load_crosstalk_csv(matrix)
        z = load_vector_csv(targets, m.labels)
        applied = compensate_flux(m, z)
        residual = float(np.max(np.abs(m.m @ applied - z))) if z.size else 0.0
        session.csv('compensated.csv', ['label', 'z_target', 'z_applied'],
                    [(label, f"{t:.12g}", f"{a:.12g}") for label, t, a in zip(m.labels, z, applied)],
                    units='flux amplitudes in the units of the targets', kinds=['s', 's', 's'])
        report = {'labels': list(m.labels), 'condition_number': m.condition_number,
                  'residual': residual}
        session.finish('crosstalk', {'matrix': str(matrix), 'targets': str(targets)}, report)
    except Exception as e:
        handle_cli_error(e)


@cli.command()
@click.option('--fs', type=float, default=None, help='Spectator frequency (GHz)')
@click.option('--fcs', type=float, default=None, help='Spectator coupler frequency (GHz); default idle')
@click.option('--delta-range', default='-0.06,0.06,0.0005', show_default=True,
              help='Spectator detuning grid start,stop,step (GHz)')
@click.pass_obj
def spectrum(session, fs, fcs, delta_range):
    """Eigenvalues across a spectator detuning sweep"""
    try:
        config = session.config()
        f_s = config.gate_param('f_s_resonant_ghz') if fs is None else fs
        f_cs = config.mode(config.roles.cs[0]).f_idle if fcs is None else fcs
        grid = parse_range(delta_range, 'delta-range')
        h = build_three_level(config, f_cs, f_s)
        header, rows = spectrum_to_rows(eigenspectrum(h, grid))
        session.csv('spectrum.csv', header, rows, units='frequencies in GHz', kinds=['f'] * len(header))
        g_plus, g_minus = anticrossing_gaps(h, grid)
        report = {'f_s': f_s, 'f_cs': f_cs, 'g1_mhz': h.g1 * 1e3, 'g2_mhz': h.g2 * 1e3,
                  'g_plus_mhz': g_plus * 1e3, 'g_minus_mhz': g_minus * 1e3}
        session.finish('spectrum', {'fs': f_s, 'fcs': f_cs, 'delta_range': delta_range}, report, h.warnings)
    except Exception as e:
        handle_cli_error(e)


@cli.command()
@click.option('--l1', type=float, required=True, help='Leakage rate per cycle')
@click.option('--l2', type=float, required=True, help='Seepage rate per cycle')
@click.option('--p0', type=float, default=0.0, show_default=True, help='Initial leakage population')
@click.option('--depths', default='0,500,10', show_default=True, help='Cycle depths start,stop,step')
@click.option('--shots', type=int, default=None, help='Shots per depth; exact model values when omitted')
@click.option('--lambda2', type=float, default=0.985, show_default=True, help='Fidelity decay constant')
@click.pass_obj
def synth(session, l1, l2, p0, depths, shots, lambda2):
    """Synthetic leakage and fidelity decays with known rates"""
    try:
        grid = parse_range(depths, 'depths').round().astype(int)
        data = synth_xeb_data(l1, l2, p0, grid, shots=shots, seed=session.seed, lambda2=lambda2)
        for name, which in (('synth_leak.csv', 'leak'), ('synth_fidelity.csv', 'fidelity')):
            session.csv(name, ['depth', 'value', 'shots'], data.rows(which),
                        units='depth in cycles, value as probability', kinds=['i', 'p', 'i'])
        report = {'L1': l1, 'L2': l2, 'p0': p0, 'lambda1': data.lambda1, 'lambda2': lambda2,
                  'points': int(grid.size), 'shots': shots}
        session.finish('synth', {'l1': l1, 'l2': l2, 'p0': p0, 'depths': depths, 'shots': shots,
                                 'lambda2': lambda2}, report)
    except Exception as e:
        handle_cli_error(e)


def main():
    cli()


if __name__ == "__main__":
    main()
