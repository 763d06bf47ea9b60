import logging
import os
import tempfile
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .delta_calculus import MERGE_TOL, merged_atoms
from .errors import HBCSError, StructuralError, SystemFileError
from .system_model import HyperbolicSystem, SpatialKind, SpatialMatrixFunction

SYSTEM_KEYS = ("name", "description", "n", "interval", "field", "P1", "P0", "H", "WB", "WC")
REQUIRED_KEYS = ("n", "interval", "P1", "P0", "H", "WB", "WC")
FLOAT_FORMAT = "%.17g"


def format_float(value):
    """%.17g, written so that YAML reads it back as the same float"""
    value = float(value)
    if np.isnan(value):
        return ".nan"
    if np.isinf(value):
        return ".inf" if value > 0 else "-.inf"
    mantissa, _, exponent = (FLOAT_FORMAT % value).partition("e")
    if "." not in mantissa:
        mantissa += ".0"
    return f"{mantissa}e{exponent}" if exponent else mantissa


def format_complex(value):
    """re+im·i for complex values, plain float text for real ones"""
    value = complex(value)
    if value.imag == 0:
        return format_float(value.real)
    sign = "+" if value.imag >= 0 else "-"
    return f"{format_float(value.real)}{sign}{format_float(abs(value.imag))}·i"


class ReportDumper(yaml.SafeDumper):
    """SafeDumper that writes every float with 17 significant digits"""


def _represent_float(dumper, value):
    return dumper.represent_scalar("tag:yaml.org,2002:float", format_float(value))


ReportDumper.add_representer(float, _represent_float)



def to_plain(value):
    """numpy and complex values converted to YAML-safe builtins"""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (complex, np.complexfloating)):
        return format_complex(value) if complex(value).imag != 0 else float(complex(value).real)
    if isinstance(value, np.generic):
        return value.item()
    return value


def _parse_entry(entry, key):
    if isinstance(entry, (list, tuple)):
        if len(entry) != 2 or not all(isinstance(x, (int, float)) for x in entry):
            raise SystemFileError(f"complex entries must be [re, im], got {entry!r}", key)
        return complex(entry[0], entry[1])
    if isinstance(entry, bool) or not isinstance(entry, (int, float)):
        raise SystemFileError(f"matrix entries must be numbers, got {entry!r}", key)
    return entry


def _parse_matrix(rows, key):
    if not isinstance(rows, list) or not rows or not all(isinstance(row, list) for row in rows):
        raise SystemFileError("expected a nested list of rows", key)
    if len({len(row) for row in rows}) != 1:
        raise SystemFileError("rows have different lengths", key)
    parsed = [[_parse_entry(entry, key) for entry in row] for row in rows]
    is_complex = any(isinstance(entry, complex) for row in parsed for entry in row)
    return np.array(parsed, dtype=complex if is_complex else float)


def _dump_matrix(matrix, complex_field):
    matrix = np.asarray(matrix)
    if complex_field:
        return [[[float(np.real(x)), float(np.imag(x))] for x in row] for row in matrix]
    return [[float(np.real(x)) for x in row] for row in matrix]


class DataManager:
    """Reads and writes system files, CSV outputs and reports"""

    def __init__(self, output_dir=None):
        self.output_dir = Path(output_dir) if output_dir else None
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)

            # Create subdirectories
            for subdir in ("transfer", "measures", "traces", "reports"):
                (self.output_dir / subdir).mkdir(exist_ok=True)

        self.logger = logging.getLogger(__name__)

    def load_system(self, path):
        """Load a system-definition YAML file"""
        path = Path(path)
        try:
            with open(path, 'r') as file:
                data = yaml.safe_load(file)
        except FileNotFoundError:
            raise SystemFileError(f"system file not found: {path}")
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f" at line {mark.line + 1}" if mark is not None else ""
            raise SystemFileError(f"unparseable system file {path}{where}: {e}")

        system = self.parse_system(data, source=str(path))
        self.logger.info(f"Loaded system {system.name or path.stem} (n={system.n}) from {path}")
        return system

    def parse_system(self, data, source="<dict>"):
        """Build a HyperbolicSystem from the parsed YAML mapping"""
        if not isinstance(data, dict):
            raise SystemFileError(f"{source}: top level must be a mapping")
        for key in data:
            if key not in SYSTEM_KEYS:
                raise SystemFileError(f"{source}: unknown key", key)
        for key in REQUIRED_KEYS:
            if key not in data:
                raise SystemFileError(f"{source}: missing key", key)

        n = data["n"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise SystemFileError(f"{source}: n must be a positive integer", "n")

        interval = data["interval"]
        if not isinstance(interval, list) or len(interval) != 2:
            raise SystemFileError(f"{source}: interval must be [a, b]", "interval")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in interval):
            raise SystemFileError(f"{source}: interval endpoints must be real numbers", "interval")
        a, b = float(interval[0]), float(interval[1])

        field = data.get("field", "real")
        if field not in ("real", "complex"):
            raise SystemFileError(f"{source}: field must be 'real' or 'complex'", "field")

        matrices = {key: _parse_matrix(data[key], key) for key in ("P1", "WB", "WC")}
        coefficients = {key: self._parse_coefficient(data[key], key, source) for key in ("P0", "H")}

        try:
            return HyperbolicSystem(
                n=n, a=a, b=b, field=field, name=str(data.get("name", "")),
                **matrices, **coefficients,
            )
        except SystemFileError:
            raise
        except StructuralError as e:
            key = next((k for k in ("P1", "WB", "WC", "P0", "H") if k in str(e)), None)
            raise SystemFileError(f"{source}: {e}", key)

    def _parse_coefficient(self, entry, key, source):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise SystemFileError(f"{source}: expected an object with a 'kind'", key)
        kind = entry["kind"]
        allowed = {"constant": {"kind", "value"}, "grid": {"kind", "xs", "values"}}
        if kind not in allowed:
            raise SystemFileError(f"{source}: kind must be 'constant' or 'grid', got {kind!r}", key)
        unknown = set(entry) - allowed[kind]
        if unknown:
            raise SystemFileError(f"{source}: unknown key {sorted(unknown)[0]!r}", key)
        try:
            if kind == "constant":
                return SpatialMatrixFunction.constant(_parse_matrix(entry["value"], key))
            values = [_parse_matrix(matrix, key) for matrix in entry["values"]]
            return SpatialMatrixFunction.grid([float(x) for x in entry["xs"]], np.array(values))
        except KeyError as e:
            raise SystemFileError(f"{source}: missing key {e.args[0]!r}", key)
        except StructuralError as e:
            if isinstance(e, SystemFileError):
                raise
            raise SystemFileError(f"{source}: {e}", key)

    def dump_system(self, system: HyperbolicSystem):
        """Mapping that parse_system turns back into the same system"""
        complex_field = system.field.value == "complex"
        data = {}
        if system.name:
            data["name"] = system.name
        data.update({
            "n": int(system.n),
            "interval": [float(system.a), float(system.b)],
            "field": system.field.value,
            "P1": _dump_matrix(system.P1, complex_field),
        })
        for key in ("P0", "H"):
            coefficient = getattr(system, key)
            if coefficient.kind == SpatialKind.CONSTANT:
                data[key] = {"kind": "constant", "value": _dump_matrix(coefficient.value, complex_field)}
            else:
                data[key] = {
                    "kind": "grid",
                    "xs": [float(x) for x in coefficient.xs],
                    "values": [_dump_matrix(v, complex_field) for v in coefficient.values],
                }
        data["WB"] = _dump_matrix(system.WB, complex_field)
        data["WC"] = _dump_matrix(system.WC, complex_field)
        return data

    def save_system(self, system, path):
        text = yaml.dump(self.dump_system(system), Dumper=ReportDumper, sort_keys=False, default_flow_style=None)
        self.write_text(path, text)
        self.logger.info(f"Saved system {system.name or ''} to {path}")
        return Path(path)

    def transfer_frame(self, samples):
        """re_s, im_s, then Re/Im of each G entry row-major"""
        rows = []
        for sample in samples:
            row = {"re_s": sample.s.real, "im_s": sample.s.imag}
            n = sample.G.shape[0]
            for i in range(n):
                for j in range(n):
                    row[f"re_G{i + 1}{j + 1}"] = float(np.real(sample.G[i, j]))
                    row[f"im_G{i + 1}{j + 1}"] = float(np.imag(sample.G[i, j]))
            rows.append(row)
        return pd.DataFrame(rows)

    def measure_frame(self, measure, merge_tol=MERGE_TOL):
        """location, then Re/Im of each merged weight entry row-major"""
        n = measure.n
        columns = ["location"] + [f"{part}_W{i + 1}{j + 1}" for i in range(n) for j in range(n) for part in ("re", "im")]
        rows = []
        for location, weight in merged_atoms(measure, merge_tol):
            row = [location]
            for i in range(n):
                for j in range(n):
                    row.extend([float(np.real(weight[i, j])), float(np.imag(weight[i, j]))])
            rows.append(row)
        return pd.DataFrame(rows, columns=columns)

    def trace_frame(self, trace):
        """t, y1..yn, sup_y"""
        y = np.real(trace.y)
        df = pd.DataFrame(y, columns=[f"y{i + 1}" for i in range(y.shape[1])])
        df.insert(0, "t", trace.times)
        df["sup_y"] = trace.sup_y
        return df

    def to_csv_text(self, df):
        return df.to_csv(index=False, float_format=FLOAT_FORMAT)

    def save_frame(self, df, name, subdir):
        """Write a CSV under output_dir/subdir, atomically"""
        if self.output_dir is None:
            raise HBCSError("no output directory configured")
        path = self.output_dir / subdir / f"{name}.csv"
        self.write_text(path, self.to_csv_text(df))
        self.logger.info(f"Saved {len(df)} rows to {path}")
        return path

    def report_text(self, report_dict):
        return yaml.dump(to_plain(report_dict), Dumper=ReportDumper, sort_keys=False, allow_unicode=True)

    def save_report(self, report_dict, name):
        if self.output_dir is None:
            raise HBCSError("no output directory configured")
        path = self.output_dir / "reports" / f"{name}.yaml"
        self.write_text(path, self.report_text(report_dict))
        self.logger.info(f"Saved report to {path}")
        return path

    def write_text(self, path, text):
        """Write to a temp file next to path, then rename over it"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, 'w', encoding='utf-8') as f:
                f.write(text)
            os.replace(tmp, path)
        except Exception as e:
            self.logger.error(f"Error writing {path}: {e}")
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def validation_to_dict(report):
    return {
        "ok": report.ok,
        "checks": [{"name": c.name, "passed": bool(c.passed), "residual": float(c.residual)} for c in report.checks],
        "contraction_class": report.contraction_class,
        "contraction_margin": report.contraction_margin,
        "contraction_matrix": report.contraction_matrix,
        "semigroup_rank_ok": report.semigroup_rank_ok,
    }


def decomposition_to_dict(dec):
    sig = dec.signature
    return {
        "m": sig.m,
        "Qplus": sig.Qplus,
        "Qminus": sig.Qminus,
        "J": dec.J,
        "L": dec.L,
        "exists_KM": dec.exists_KM,
        "J_condition": dec.J_condition,
        "K": dec.K,
        "M": dec.M,
    }


def diagonal_to_dict(diag):
    return {
        "n": diag.n,
        "m": diag.m,
        "tau": list(diag.tau),
        "HD_at_a": np.diag(diag.HD.sample([diag.a])[0]),
        "HD_at_b": np.diag(diag.HD.sample([diag.b])[0]),
        "S_inv_at_a": diag.S_inv.sample([diag.a])[0],
        "WBD": diag.WBD,
        "WCD": diag.WCD,
        "P0D_is_zero": diag.P0D_is_zero,
        "P0D_residual": diag.P0D_residual,
        "relation_residual": diag.relation_residual,
    }


def report_to_dict(report):
    details = {k: v for k, v in report.details.items()}
    return {
        "outcome": report.outcome,
        "triggered_condition": report.triggered_condition,
        "contraction_margin": report.contraction_margin,
        "details": details,
        "warnings": list(report.warnings),
    }


def impulse_summary(imp):
    return {
        "order": imp.order,
        "condition": imp.condition,
        "atoms": len(imp.measure),
        "horizon": imp.horizon,
        "decay_ratio": imp.decay_ratio,
        "tail_tv_bound": None if imp.tail_tv_bound is None else imp.tail_tv_bound,
    }
