"""
Command-line front end: validate, decompose, diagonalize, transfer, certify,
impulse, simulate and gain.

Exit codes: 0 success or certified, 2 invalid input, 3 inconclusive certificate,
4 numerical failure.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import pandas as pd
import yaml

from .alert_system import AlertSystem
from .certify import Outcome, certify, gain_upper_bound, impulse_response
from .data_manager import (
    DataManager,
    decomposition_to_dict,
    diagonal_to_dict,
    impulse_summary,
    report_to_dict,
    validation_to_dict,
)
from .errors import CertificateError, DomainError, HBCSError, NumericalError, ParameterError, StructuralError
from .fixtures import FIXTURES, get_fixture
from .simulate import InputSignal, linf_gain_probe, simulate
from .spectral import decompose_boundary, diagonalize, signature_projections
from .system_model import validate_system
from .transfer import transfer_eval

logger = logging.getLogger(__name__)

run_logger = logging.getLogger("hbcs.cli.runs")
run_logger.propagate = False
run_logger.addHandler(logging.NullHandler())

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INCONCLUSIVE = 3
EXIT_NUMERICAL = 4

SUBCOMMANDS = ("validate", "decompose", "diagonalize", "transfer", "certify", "impulse", "simulate", "gain")

DEFAULT_CONFIG = {
    'tol': 1e-10,
    'grid_size': 257,
    'k_max': 12,
    'merge_tol': 1e-9,
    'strict_margin': 1e-12,
    'k_condition_limit': 1e10,
    'resolvent_condition_limit': 1e12,
    'ode_tol': 1e-11,
    's_cap': 1e3,
    'dt': 1e-3,
    'T': 10.0,
    'trials': 8,
    'seed': 0,
    'order': 40,
    'log_dir': "logs",
    'output_dir': None,
}


def load_config(path=None):
    """DEFAULT_CONFIG overlaid with the YAML file at path"""
    config = dict(DEFAULT_CONFIG)
    if path is None:
        return config
    path = Path(path)
    try:
        with open(path, 'r') as file:
            overrides = yaml.safe_load(file) or {}
    except FileNotFoundError:
        logger.warning(f"Config file {path} not found, using defaults")
        return config
    except yaml.YAMLError as e:
        raise ParameterError(f"unparseable config file {path}: {e}")

    for key, value in overrides.items():
        if key not in DEFAULT_CONFIG:
            logger.warning(f"Ignoring unknown config key: {key}")
            continue
        config[key] = value
    return config


@dataclass
class CliConfig:
    subcommand: str
    system_path: str
    s_values: List[complex] = field(default_factory=list)
    k_max: int = DEFAULT_CONFIG['k_max']
    order: int = DEFAULT_CONFIG['order']
    T: float = DEFAULT_CONFIG['T']
    dt: float = DEFAULT_CONFIG['dt']
    trials: int = DEFAULT_CONFIG['trials']
    seed: int = DEFAULT_CONFIG['seed']
    grid_size: int = DEFAULT_CONFIG['grid_size']
    output: Optional[str] = None
    constant_input: Optional[List[float]] = None
    sine_terms: List[str] = field(default_factory=list)
    input_csv: Optional[str] = None
    diagonal: bool = False
    settings: dict = field(default_factory=lambda: dict(DEFAULT_CONFIG))

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ParameterError(f"unknown subcommand {self.subcommand!r}")
        if self.k_max < 1:
            raise ParameterError(f"--kmax must be at least 1, got {self.k_max}")
        if self.order < 0:
            raise ParameterError(f"--order must be nonnegative, got {self.order}")
        if self.T <= 0 or self.dt <= 0:
            raise ParameterError(f"--T and --dt must be positive, got T={self.T}, dt={self.dt}")
        if self.trials < 0:
            raise ParameterError(f"--trials must be nonnegative, got {self.trials}")
        if self.subcommand == "transfer":
            if not self.s_values:
                raise ParameterError("transfer needs at least one --s value")
            cap = self.settings['s_cap']
            for s in self.s_values:
                if abs(s) > cap:
                    raise ParameterError(f"|s| = {abs(s):.6g} exceeds the cap {cap:g}")
        if self.subcommand == "simulate":
            given = sum(x is not None and x != [] for x in (self.constant_input, self.sine_terms, self.input_csv))
            if given != 1:
                raise ParameterError("simulate needs exactly one of --constant, --sine or --input-csv")


def parse_complex(text):
    try:
        return complex(text.strip().replace("i", "j").replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="bibo_check", description="BIBO certificates for hyperbolic boundary control systems")
    parser.add_argument("--config", help="YAML file overriding the default tolerances")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, help_text):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("system", help=f"system YAML file or built-in fixture ({', '.join(FIXTURES)})")
        sub.add_argument("--output", help="write the result to this file instead of stdout")
        sub.add_argument("--grid-size", type=int, dest="grid_size")
        return sub

    add("validate", "check the standing assumptions")
    sub = add("decompose", "signature projections and (J, L) / (K, M) decomposition")
    sub.add_argument("--diagonal", action="store_true", help="decompose the diagonalized input matrix")
    add("diagonalize", "Riemann-invariant form and characteristic delays")
    sub = add("transfer", "evaluate G(s) as CSV")
    sub.add_argument("--s", type=parse_complex, action="append", dest="s_values", default=[])
    sub = add("certify", "run the sufficient BIBO conditions")
    sub.add_argument("--kmax", type=int, dest="k_max")
    sub = add("impulse", "truncated impulse-response measure as CSV")
    sub.add_argument("--order", type=int)
    sub.add_argument("--kmax", type=int, dest="k_max")
    sub = add("simulate", "time-domain response from zero initial state")
    sub.add_argument("--T", type=float)
    sub.add_argument("--dt", type=float)
    sub.add_argument("--constant", type=lambda t: [float(x) for x in t.split(",")], dest="constant_input")
    sub.add_argument("--sine", action="append", dest="sine_terms", default=[],
                     help="channel:amplitude:frequency:phase, amplitude*cos(frequency*t + phase); repeatable")
    sub.add_argument("--input-csv", dest="input_csv", help="CSV with columns t, u1..un")
    sub = add("gain", "empirical lower bound on the L-infinity gain")
    sub.add_argument("--T", type=float)
    sub.add_argument("--dt", type=float)
    sub.add_argument("--trials", type=int)
    sub.add_argument("--seed", type=int)
    return parser


def config_from_args(args, settings):
    values = {k: v for k, v in vars(args).items() if v is not None}
    config = CliConfig(
        subcommand=values.pop("subcommand"),
        system_path=values.pop("system"),
        settings=settings,
        k_max=settings['k_max'],
        order=settings['order'],
        T=settings['T'],
        dt=settings['dt'],
        trials=settings['trials'],
        seed=settings['seed'],
        grid_size=settings['grid_size'],
    )
    values.pop("config", None)
    for key, value in values.items():
        setattr(config, key, value)
    return config


def _load(config, data_manager):
    if config.system_path in FIXTURES:
        return get_fixture(config.system_path)
    return data_manager.load_system(config.system_path)


def _emit(config, data_manager, text):
    if config.output:
        data_manager.write_text(config.output, text)
        logger.info(f"Wrote {config.output}")
    else:
        sys.stdout.write(text)


def _store(data_manager, stem, report=None, frame=None, subdir=None):
    """Keep a copy under output_dir when one is configured"""
    if data_manager.output_dir is None:
        return
    if frame is not None:
        data_manager.save_frame(frame, stem, subdir)
    if report is not None:
        data_manager.save_report(report, stem)


def _pipeline(system, config):
    """Diagonal form and the (K, M) decomposition of its input matrix"""
    settings = config.settings
    diag = diagonalize(system, config.grid_size)
    sig = signature_projections(diag.P1D, settings['tol'])
    dec = decompose_boundary(diag.WBD, sig, diag.P1D, settings['tol'], settings['k_condition_limit'])
    return diag, dec


def _input_signal(config, n):
    if config.constant_input is not None:
        return InputSignal.constant(config.constant_input)
    if config.sine_terms:
        terms = []
        for text in config.sine_terms:
            parts = text.split(":")
            if len(parts) != 4:
                raise ParameterError(f"--sine expects channel:amplitude:frequency:phase, got {text!r}")
            terms.append((int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3])))
        return InputSignal.sine_combination(n, terms)
    df = pd.read_csv(config.input_csv)
    if "t" not in df.columns:
        raise ParameterError(f"{config.input_csv} has no 't' column")
    return InputSignal.sampled(df["t"].to_numpy(), df.drop(columns="t").to_numpy())


def render_certificate(name, report):
    """Human-readable summary lines"""
    details = report.details
    lines = [f"system: {name}", f"outcome: {report.outcome.value} via {report.triggered_condition.value}"]
    if "m_inf" in details:
        lines.append(f"  condition 1: ||M||_inf = {details['m_inf']:.15g} ({'pass' if details['cond1_passed'] else 'fail'})")
    if "rho_abs" in details:
        lines.append(f"  condition 2: rho(|M|) = {details['rho_abs']:.15g} ({'pass' if details['cond2_passed'] else 'fail'})")
    if "row_sums_by_k" in details:
        lines.append(f"  condition 3: k0 = {details['k0']}")
        for k, rows in enumerate(details["row_sums_by_k"], start=1):
            lines.append(f"    k={k}: row sums " + " ".join(f"{r:.15g}" for r in rows))
    if report.contraction_margin is not None:
        lines.append(f"  contraction margin: {report.contraction_margin:.15g}")
    for warning in report.warnings:
        lines.append(f"  warning: {warning}")
    return "\n".join(lines) + "\n"


def _execute(config, data_manager, alert_system):
    settings = config.settings
    system = _load(config, data_manager)
    name = system.name or Path(config.system_path).stem
    stem = f"{name}_{config.subcommand}"

    if config.subcommand == "validate":
        report = validate_system(system, settings['tol'])
        result = validation_to_dict(report)
        _store(data_manager, stem, report=result)
        _emit(config, data_manager, data_manager.report_text(result))
        return EXIT_OK if report.ok else EXIT_INVALID

    if config.subcommand == "decompose":
        if config.diagonal:
            _, dec = _pipeline(system, config)
        else:
            sig = signature_projections(system.P1, settings['tol'])
            dec = decompose_boundary(system.WB, sig, system.P1, settings['tol'], settings['k_condition_limit'])
        result = decomposition_to_dict(dec)
        _store(data_manager, stem, report=result)
        _emit(config, data_manager, data_manager.report_text(result))
        return EXIT_OK

    if config.subcommand == "diagonalize":
        diag = diagonalize(system, config.grid_size)
        result = diagonal_to_dict(diag)
        _store(data_manager, stem, report=result)
        _emit(config, data_manager, data_manager.report_text(result))
        return EXIT_OK

    if config.subcommand == "transfer":
        samples = []
        for s in config.s_values:
            sample = transfer_eval(system, s, settings['ode_tol'], settings['resolvent_condition_limit'])
            for alert in alert_system.check_transfer(sample):
                logger.warning(f"Alert: {alert['type']} - {alert['message']}")
            samples.append(sample)
        frame = data_manager.transfer_frame(samples)
        _store(data_manager, stem, frame=frame, subdir="transfer")
        _emit(config, data_manager, data_manager.to_csv_text(frame))
        return EXIT_OK

    if config.subcommand == "certify":
        report = certify(system, config.k_max, config.grid_size, settings['tol'], settings['merge_tol'],
                         settings['strict_margin'], settings['k_condition_limit'], alert_system)
        result = report_to_dict(report)
        _store(data_manager, stem, report=result)
        text = render_certificate(name, report) + "---\n" + data_manager.report_text(result)
        _emit(config, data_manager, text)
        return {
            Outcome.CERTIFIED_BIBO: EXIT_OK,
            Outcome.INCONCLUSIVE: EXIT_INCONCLUSIVE,
            Outcome.INVALID_INPUT: EXIT_INVALID,
        }[report.outcome]

    diag, dec = _pipeline(system, config)

    if config.subcommand == "impulse":
        imp = impulse_response(diag, dec, config.order, config.k_max, settings['merge_tol'], settings['strict_margin'])
        summary = impulse_summary(imp)
        if imp.bounded:
            summary["gain_upper_bound"] = gain_upper_bound(imp)
        for line in data_manager.report_text(summary).splitlines():
            logger.info(f"impulse: {line}")
        frame = data_manager.measure_frame(imp.measure, settings['merge_tol'])
        _store(data_manager, stem, report=summary, frame=frame, subdir="measures")
        _emit(config, data_manager, data_manager.to_csv_text(frame))
        return EXIT_OK

    if config.subcommand == "simulate":
        signal = _input_signal(config, system.n)
        trace = simulate(diag, dec, signal, config.T, config.dt)
        frame = data_manager.trace_frame(trace)
        _store(data_manager, stem, frame=frame, subdir="traces")
        _emit(config, data_manager, data_manager.to_csv_text(frame))
        return EXIT_OK

    lower_bound, descriptor = linf_gain_probe(diag, dec, config.T, config.dt, config.trials, config.seed)
    result = {"lower_bound": lower_bound, "worst_input": descriptor}
    _store(data_manager, stem, report=result)
    _emit(config, data_manager, data_manager.report_text(result))
    return EXIT_OK


def run(config: CliConfig) -> int:
    """Dispatch one subcommand and return its exit code"""
    started = time.perf_counter()
    output_dir = config.settings.get('output_dir')
    data_manager = DataManager(output_dir)
    alert_system = AlertSystem(data_dir=output_dir, thresholds={
        'k_condition_limit': config.settings['k_condition_limit'],
        'resolvent_condition_limit': config.settings['resolvent_condition_limit'],
    })
    try:
        config.validate()
        exit_code = _execute(config, data_manager, alert_system)
    except (StructuralError, ParameterError, DomainError) as e:
        logger.error(f"Invalid input: {e}")
        exit_code = EXIT_INVALID
    except (NumericalError, CertificateError) as e:
        logger.error(f"Numerical failure: {e}")
        exit_code = EXIT_NUMERICAL
    except HBCSError as e:
        logger.error(f"Error running {config.subcommand}: {e}")
        exit_code = EXIT_NUMERICAL

    if output_dir:
        summary = alert_system.get_alert_summary(alert_system.load_alerts())
        logger.info(f"Alerts on record in {output_dir}: {summary['total_alerts']} "
                    f"({summary['critical_alerts']} critical, {summary['warning_alerts']} warning)")
    log_run(config, exit_code, (time.perf_counter() - started) * 1000)
    return exit_code


def log_run(config, exit_code, elapsed_ms):
    """One JSON record per run on the hbcs.cli.runs logger"""
    record = {
        'subcommand': config.subcommand,
        'system': config.system_path,
        'parameters': {
            'k_max': config.k_max,
            'order': config.order,
            'T': config.T,
            'dt': config.dt,
            'trials': config.trials,
            'seed': config.seed,
            'grid_size': config.grid_size,
            's_values': [[s.real, s.imag] for s in config.s_values],
        },
        'exit_code': exit_code,
        'elapsed_ms': round(elapsed_ms, 3),
    }
    run_logger.info(json.dumps(record, sort_keys=True))


def main(argv=None, settings=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if settings is None:
        try:
            settings = load_config(args.config)
        except ParameterError as e:
            logger.error(f"Invalid input: {e}")
            return EXIT_INVALID
    return run(config_from_args(args, settings))
