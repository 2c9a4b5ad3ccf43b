"""Canonical file schemas (field CSV, load CSV, series CSV), run-config
validation, dataset ingestion and provenance manifests.

All emitted files are deterministic: floats are written with shortest
round-trip repr, writes are atomic (temp file + rename), and every file
carries a schema-version header line.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile

import numpy as np

from .errors import ConfigError, DataError
from .fields import VelocityField
from .fitting import DecaySeries, GrowthSeries
from .loads import LoadGrid, VehicleLoads

FIELD_MAGIC = "# downwash field v1"
LOADS_MAGIC = "# downwash loads v1"
SERIES_MAGIC = "# downwash series v1"

DATA_DIR_ENV = "DOWNWASH_DATA_DIR"


def _fmt(x):
    """Shortest decimal that round-trips the double exactly."""
    return repr(float(x))


def atomic_write_text(path, text):
    """Write text to path via a same-directory temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_of(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_input(path):
    """Resolve an input path, falling back to DOWNWASH_DATA_DIR."""
    if os.path.exists(path):
        return path
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        candidate = os.path.join(base, path)
        if os.path.exists(candidate):
            return candidate
    raise DataError(f"input file not found: {path}")


# ---------------------------------------------------------------------------
# field CSV

def field_csv_text(field: VelocityField):
    mask = field.valid_mask()
    lines = [
        FIELD_MAGIC,
        f"# length_unit: {field.length_unit}",
        f"# velocity_unit: {field.velocity_unit}",
        f"# frames: {field.frame_count}",
        "# x_axis: " + ",".join(_fmt(x) for x in field.x_axis),
        "# z_axis: " + ",".join(_fmt(z) for z in field.z_axis),
        "x,z,u,v,valid",
    ]
    for i, z in enumerate(field.z_axis):
        zs = _fmt(z)
        for j, x in enumerate(field.x_axis):
            if mask[i, j]:
                lines.append(f"{_fmt(x)},{zs},{_fmt(field.u[i, j])},{_fmt(field.v[i, j])},1")
            else:
                lines.append(f"{_fmt(x)},{zs},nan,nan,0")
    return "\n".join(lines) + "\n"


def write_field_csv(field: VelocityField, path):
    atomic_write_text(path, field_csv_text(field))


def _parse_headers(lines, magic, path):
    if not lines or lines[0].strip() != magic:
        raise DataError(f"{path}: missing schema header {magic!r}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        m = re.match(r"#\s*([\w]+):\s*(.*)$", lines[i])
        if m:
            meta[m.group(1)] = m.group(2).strip()
        i += 1
    return meta, i


def read_field_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, i = _parse_headers(lines, FIELD_MAGIC, path)
    for key in ("x_axis", "z_axis"):
        if key not in meta:
            raise DataError(f"{path}: header is missing {key}")
    x_axis = np.array([float(v) for v in meta["x_axis"].split(",")])
    z_axis = np.array([float(v) for v in meta["z_axis"].split(",")])
    if i >= len(lines) or lines[i].split(",")[:4] != ["x", "z", "u", "v"]:
        raise DataError(f"{path}: expected column header 'x,z,u,v[,valid]'")
    i += 1
    nx, nz = x_axis.size, z_axis.size
    expected = nx * nz
    rows = [ln for ln in lines[i:] if ln.strip()]
    if len(rows) != expected:
        raise DataError(f"{path}: expected {expected} records, found {len(rows)}")
    u = np.empty((nz, nx))
    v = np.empty((nz, nx))
    valid = np.ones((nz, nx), dtype=bool)
    k = 0
    for iz in range(nz):
        for ix in range(nx):
            parts = rows[k].split(",")
            if len(parts) not in (4, 5):
                raise DataError(f"{path}: record {k + 1} has {len(parts)} fields")
            x, z = float(parts[0]), float(parts[1])
            if x != x_axis[ix] or z != z_axis[iz]:
                raise DataError(
                    f"{path}: record {k + 1} at ({parts[0]}, {parts[1]}) is out of "
                    "row-major (z, x) order or off the declared axes"
                )
            ok = parts[4].strip() == "1" if len(parts) == 5 else True
            valid[iz, ix] = ok
            u[iz, ix] = float(parts[2]) if ok else 0.0
            v[iz, ix] = float(parts[3]) if ok else 0.0
            k += 1
    return VelocityField(
        x_axis=x_axis, z_axis=z_axis, u=u, v=v,
        frame_count=int(meta.get("frames", 1)),
        length_unit=meta.get("length_unit", "arm_lengths"),
        velocity_unit=meta.get("velocity_unit", "induced_velocity"),
        valid=None if valid.all() else valid,
    )


# ---------------------------------------------------------------------------
# loads CSV

LOAD_COLUMNS = ("dx_over_l", "dz_over_l", "vehicle", "mean_Fz_over_W",
                "std_Fz", "mean_My_over_Wl", "std_My", "trials")


def load_csv_text(grid: LoadGrid):
    lines = [
        LOADS_MAGIC,
        f"# trial_count: {grid.trial_count}",
        f"# sampling_rate_hz: {_fmt(grid.sampling_rate_hz)}",
        f"# duration_s: {_fmt(grid.duration_s)}",
        ",".join(LOAD_COLUMNS),
    ]
    for vehicle in ("upper", "lower"):
        loads = grid.vehicle(vehicle)
        for iz, dz in enumerate(grid.dz_axis):
            for ix, dx in enumerate(grid.dx_axis):
                lines.append(",".join([
                    _fmt(dx), _fmt(dz), vehicle,
                    _fmt(loads.mean_thrust[iz, ix]), _fmt(loads.thrust_std[iz, ix]),
                    _fmt(loads.mean_pitch[iz, ix]), _fmt(loads.pitch_std[iz, ix]),
                    str(grid.trial_count),
                ]))
    return "\n".join(lines) + "\n"


def write_load_csv(grid: LoadGrid, path):
    atomic_write_text(path, load_csv_text(grid))


def read_load_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, i = _parse_headers(lines, LOADS_MAGIC, path)
    if i >= len(lines) or lines[i] != ",".join(LOAD_COLUMNS):
        raise DataError(f"{path}: expected column header {','.join(LOAD_COLUMNS)!r}")
    i += 1
    records = {"upper": {}, "lower": {}}
    for k, ln in enumerate(lines[i:], start=1):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != len(LOAD_COLUMNS):
            raise DataError(f"{path}: record {k} has {len(parts)} fields, need {len(LOAD_COLUMNS)}")
        vehicle = parts[2]
        if vehicle not in records:
            raise DataError(f"{path}: record {k}: unknown vehicle {vehicle!r}")
        key = (float(parts[0]), float(parts[1]))
        if key in records[vehicle]:
            raise DataError(f"{path}: duplicate record for {vehicle} at {key}")
        records[vehicle][key] = tuple(float(p) for p in parts[3:7])
    if not records["upper"] or not records["lower"]:
        raise DataError(f"{path}: both upper and lower vehicle records are required")
    dx_axis = np.array(sorted({k[0] for k in records["lower"]}))
    dz_axis = np.array(sorted({k[1] for k in records["lower"]}))
    shape = (dz_axis.size, dx_axis.size)
    vehicles = {}
    for vehicle, recs in records.items():
        if len(recs) != shape[0] * shape[1]:
            raise DataError(
                f"{path}: {vehicle} records do not fill the {shape[1]}x{shape[0]} grid"
            )
        arrays = [np.empty(shape) for _ in range(4)]
        for (dx, dz), values in recs.items():
            ix = np.searchsorted(dx_axis, dx)
            iz = np.searchsorted(dz_axis, dz)
            if ix >= dx_axis.size or dx_axis[ix] != dx or iz >= dz_axis.size or dz_axis[iz] != dz:
                raise DataError(f"{path}: {vehicle} node ({dx}, {dz}) off the common grid")
            for a, val in zip(arrays, values):
                a[iz, ix] = val
        vehicles[vehicle] = VehicleLoads(*arrays)
    return LoadGrid(
        dx_axis=dx_axis, dz_axis=dz_axis,
        upper=vehicles["upper"], lower=vehicles["lower"],
        trial_count=int(meta.get("trial_count", 1)),
        sampling_rate_hz=float(meta.get("sampling_rate_hz", 0.0) or 0.0),
        duration_s=float(meta.get("duration_s", 0.0) or 0.0),
    )


# ---------------------------------------------------------------------------
# series CSV

def series_csv_text(kind, z, values, weights=None, length_unit="arm_lengths",
                    velocity_unit="induced_velocity"):
    if kind not in ("growth", "decay"):
        raise DataError("series kind must be 'growth' or 'decay'")
    value_col = "r_half" if kind == "growth" else "u_c"
    lines = [
        SERIES_MAGIC,
        f"# kind: {kind}",
        f"# length_unit: {length_unit}",
        f"# velocity_unit: {velocity_unit}",
        f"z,{value_col}" + (",weight" if weights is not None else ""),
    ]
    for idx in range(len(z)):
        row = f"{_fmt(z[idx])},{_fmt(values[idx])}"
        if weights is not None:
            row += f",{_fmt(weights[idx])}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_series_csv(path, kind, z, values, weights=None, **units):
    atomic_write_text(path, series_csv_text(kind, z, values, weights, **units))


def read_series_csv(path):
    """Returns (kind, series, units dict) where series is Growth- or DecaySeries."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, i = _parse_headers(lines, SERIES_MAGIC, path)
    kind = meta.get("kind")
    if kind not in ("growth", "decay"):
        raise DataError(f"{path}: series kind must be 'growth' or 'decay'")
    i += 1  # column header
    z, vals, weights = [], [], []
    has_weight = None
    for ln in lines[i:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        if has_weight is None:
            has_weight = len(parts) == 3
        if len(parts) != (3 if has_weight else 2):
            raise DataError(f"{path}: inconsistent series record {ln!r}")
        z.append(float(parts[0]))
        vals.append(float(parts[1]))
        if has_weight:
            weights.append(float(parts[2]))
    units = {
        "length_unit": meta.get("length_unit", "arm_lengths"),
        "velocity_unit": meta.get("velocity_unit", "induced_velocity"),
    }
    w = np.array(weights) if has_weight else None
    if kind == "growth":
        return kind, GrowthSeries(np.array(z), np.array(vals), w), units
    return kind, DecaySeries(np.array(z), np.array(vals), w), units


# ---------------------------------------------------------------------------
# run configuration

def _type_name(t):
    return getattr(t, "__name__", str(t))


_NUMBER = (int, float)

CONFIG_SCHEMA = {
    "geometry": {
        "arm_length_m": _NUMBER, "rotor_radius_m": _NUMBER,
        "rotor_count": int, "weight_n": _NUMBER,
    },
    "environment": {"air_density": _NUMBER, "kinematic_viscosity": _NUMBER},
    "thrust_n": _NUMBER,
    "scaling": {
        "spread_rate": _NUMBER, "decay_product": _NUMBER, "virtual_origin": _NUMBER,
        "merge_point": _NUMBER, "initial_jet_velocity": _NUMBER,
        "length_unit": str, "velocity_unit": str,
    },
    "near_field": {
        "rotor_jet_peak": _NUMBER, "annulus_inner_fraction": _NUMBER,
        "jet_width_sigma": _NUMBER, "inflow_peak_fraction": _NUMBER,
        "blend_window": _NUMBER,
    },
    "field": {
        "x_min": _NUMBER, "x_max": _NUMBER, "nx": int,
        "z_min": _NUMBER, "z_max": _NUMBER, "nz": int,
    },
    "analyze": {
        "fit_range": list, "merge_epsilon": _NUMBER, "merge_window": int,
        "collapse_stations": list, "unimodal_tol": _NUMBER,
    },
    "fit": {
        "fit_range": list, "u0": _NUMBER, "merge_point": _NUMBER,
        "reference": {
            "spread_rate": _NUMBER, "decay_product": _NUMBER, "virtual_origin": _NUMBER,
        },
    },
    "loads": {"vehicle": str, "queries": list},
    "envelope": {
        "vehicle": str, "kind": str, "threshold": _NUMBER,
        "std_threshold": _NUMBER, "refine": int,
    },
    "dynsim": {
        "dz_min_m": _NUMBER, "amplitude_m": _NUMBER, "frequency_hz": _NUMBER,
        "configuration": str, "sample_rate_hz": _NUMBER, "bins": int,
        "ramp_up_cycles": int, "stable_cycles": int, "ramp_down_cycles": int,
        "lag": str,
    },
    "ingest": {
        "kind": str, "columns": dict, "ignore_columns": list,
        "scales": dict, "output_units": dict, "frames": int,
        "delimiter": str, "vehicle_map": dict,
        "trial_count": int, "sampling_rate_hz": _NUMBER, "duration_s": _NUMBER,
    },
}


def _line_of_key(text, key):
    pattern = re.compile(r'"%s"\s*:' % re.escape(key))
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return lineno
    return None


def _validate_node(node, schema, path, text, source):
    if not isinstance(node, dict):
        raise ConfigError(f"{source}: section {'.'.join(path) or '<root>'} must be an object")
    for key, value in node.items():
        where = ".".join(path + [key])
        line = _line_of_key(text, key)
        anchor = f"{source}:{line}" if line else source
        if key not in schema:
            raise ConfigError(f"{anchor}: unknown config key {where!r}")
        expected = schema[key]
        if isinstance(expected, dict) and expected and not all(
            isinstance(v, type) or isinstance(v, tuple) or isinstance(v, dict)
            for v in expected.values()
        ):
            expected = dict  # free-form dict section
        if isinstance(expected, dict):
            if expected:
                _validate_node(value, expected, path + [key], text, source)
            elif not isinstance(value, dict):
                raise ConfigError(f"{anchor}: {where} must be an object")
        else:
            if expected is int and isinstance(value, bool):
                raise ConfigError(f"{anchor}: {where} must be an integer")
            if expected is dict:
                if not isinstance(value, dict):
                    raise ConfigError(f"{anchor}: {where} must be an object")
            elif not isinstance(value, expected):
                names = (
                    "/".join(_type_name(t) for t in expected)
                    if isinstance(expected, tuple) else _type_name(expected)
                )
                raise ConfigError(f"{anchor}: {where} must be of type {names}")


def load_config(path):
    """Parse and schema-validate a run configuration; unknown keys rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    _validate_node(data, CONFIG_SCHEMA, [], text, path)
    return data


# ---------------------------------------------------------------------------
# dataset ingestion

def _sniff_canonical(path):
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first == FIELD_MAGIC:
        return "field"
    if first == LOADS_MAGIC:
        return "loads"
    return None


def _ingest_generic_field(path, mapping):
    delimiter = mapping.get("delimiter", ",")
    columns = mapping.get("columns", {})
    needed = {"x", "z", "u", "v"}
    missing = needed - set(columns)
    if missing:
        raise DataError(f"mapping does not cover required field columns: {sorted(missing)}")
    ignore = set(mapping.get("ignore_columns", []))
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.startswith("#")]
    header = [h.strip() for h in lines[0].split(delimiter)]
    source_to_target = {src: tgt for tgt, src in columns.items() if src}
    unmapped = [h for h in header if h not in source_to_target and h not in ignore]
    if unmapped:
        raise DataError(f"{path}: unmapped source columns: {unmapped}")
    absent = [src for src in source_to_target if src not in header]
    if absent:
        raise DataError(f"{path}: mapped columns missing from source: {absent}")
    idx = {source_to_target[h]: i for i, h in enumerate(header) if h in source_to_target}
    scales = mapping.get("scales", {})
    lscale = float(scales.get("length", 1.0))
    vscale = float(scales.get("velocity", 1.0))
    xs, zs, us, vs, ok = [], [], [], [], []
    for ln in lines[1:]:
        parts = [p.strip() for p in ln.split(delimiter)]
        xs.append(float(parts[idx["x"]]) * lscale)
        zs.append(float(parts[idx["z"]]) * lscale)
        raw_u = float(parts[idx["u"]])
        raw_v = float(parts[idx["v"]])
        valid = np.isfinite(raw_u) and np.isfinite(raw_v)
        if "valid" in idx:
            valid = valid and parts[idx["valid"]] not in ("0", "false", "False")
        ok.append(valid)
        us.append(raw_u * vscale if valid else 0.0)
        vs.append(raw_v * vscale if valid else 0.0)
    x_axis = np.array(sorted(set(xs)))
    z_axis = np.array(sorted(set(zs)))
    shape = (z_axis.size, x_axis.size)
    if len(xs) != shape[0] * shape[1]:
        raise DataError(f"{path}: records do not fill a {shape[1]}x{shape[0]} grid")
    u = np.zeros(shape)
    v = np.zeros(shape)
    valid = np.zeros(shape, dtype=bool)
    for x, z, uu, vv, good in zip(xs, zs, us, vs, ok):
        ix = int(np.searchsorted(x_axis, x))
        iz = int(np.searchsorted(z_axis, z))
        u[iz, ix], v[iz, ix], valid[iz, ix] = uu, vv, good
    out_units = mapping.get("output_units", {})
    return VelocityField(
        x_axis=x_axis, z_axis=z_axis, u=u, v=v,
        frame_count=int(mapping.get("frames", 1)),
        length_unit=out_units.get("length_unit", "arm_lengths"),
        velocity_unit=out_units.get("velocity_unit", "induced_velocity"),
        valid=None if valid.all() else valid,
    )


def _ingest_generic_loads(path, mapping):
    delimiter = mapping.get("delimiter", ",")
    columns = mapping.get("columns", {})
    needed = {"dx_over_l", "dz_over_l", "vehicle", "mean_Fz_over_W", "std_Fz",
              "mean_My_over_Wl", "std_My"}
    missing = needed - set(columns)
    if missing:
        raise DataError(f"mapping does not cover required load columns: {sorted(missing)}")
    ignore = set(mapping.get("ignore_columns", []))
    vehicle_map = mapping.get("vehicle_map", {})
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.startswith("#")]
    header = [h.strip() for h in lines[0].split(delimiter)]
    source_to_target = {src: tgt for tgt, src in columns.items() if src}
    unmapped = [h for h in header if h not in source_to_target and h not in ignore]
    if unmapped:
        raise DataError(f"{path}: unmapped source columns: {unmapped}")
    absent = [src for src in source_to_target if src not in header]
    if absent:
        raise DataError(f"{path}: mapped columns missing from source: {absent}")
    idx = {source_to_target[h]: i for i, h in enumerate(header) if h in source_to_target}
    records = {"upper": {}, "lower": {}}
    for ln in lines[1:]:
        parts = [p.strip() for p in ln.split(delimiter)]
        vehicle = vehicle_map.get(parts[idx["vehicle"]], parts[idx["vehicle"]])
        if vehicle not in records:
            raise DataError(f"{path}: unknown vehicle {vehicle!r} (add it to vehicle_map)")
        key = (float(parts[idx["dx_over_l"]]), float(parts[idx["dz_over_l"]]))
        if key in records[vehicle]:
            raise DataError(f"{path}: duplicate record for {vehicle} at {key}")
        records[vehicle][key] = (
            float(parts[idx["mean_Fz_over_W"]]), float(parts[idx["std_Fz"]]),
            float(parts[idx["mean_My_over_Wl"]]), float(parts[idx["std_My"]]),
        )
    dx_axis = np.array(sorted({k[0] for k in records["lower"]}))
    dz_axis = np.array(sorted({k[1] for k in records["lower"]}))
    shape = (dz_axis.size, dx_axis.size)
    vehicles = {}
    for vehicle, recs in records.items():
        if len(recs) != shape[0] * shape[1]:
            raise DataError(f"{path}: {vehicle} records do not fill the grid")
        arrays = [np.empty(shape) for _ in range(4)]
        for (dx, dz), values in recs.items():
            ix = int(np.searchsorted(dx_axis, dx))
            iz = int(np.searchsorted(dz_axis, dz))
            for a, val in zip(arrays, values):
                a[iz, ix] = val
        vehicles[vehicle] = VehicleLoads(*arrays)
    return LoadGrid(
        dx_axis=dx_axis, dz_axis=dz_axis,
        upper=vehicles["upper"], lower=vehicles["lower"],
        trial_count=int(mapping.get("trial_count", 1)),
        sampling_rate_hz=float(mapping.get("sampling_rate_hz", 0.0)),
        duration_s=float(mapping.get("duration_s", 0.0)),
    )


def ingest(source_path, mapping, out_dir):
    """Convert a dataset file to the canonical schema.

    Canonical inputs pass through (identity mapping is byte-preserving,
    scales still apply); other layouts are converted per the mapping config.
    Returns (output path, manifest dict); the manifest records source hashes.
    """
    source_path = resolve_input(source_path)
    kind = mapping.get("kind") or _sniff_canonical(source_path)
    if kind not in ("field", "loads"):
        raise DataError("mapping must declare kind: 'field' or 'loads'")
    scales = mapping.get("scales", {})
    identity_scales = all(float(v) == 1.0 for v in scales.values()) if scales else True

    canonical = _sniff_canonical(source_path)
    if kind == "field":
        if canonical == "field":
            data = read_field_csv(source_path)
            if not identity_scales:
                lscale = float(scales.get("length", 1.0))
                vscale = float(scales.get("velocity", 1.0))
                data = VelocityField(
                    x_axis=data.x_axis * lscale, z_axis=data.z_axis * lscale,
                    u=data.u * vscale, v=data.v * vscale,
                    frame_count=data.frame_count,
                    length_unit=mapping.get("output_units", {}).get("length_unit", data.length_unit),
                    velocity_unit=mapping.get("output_units", {}).get("velocity_unit", data.velocity_unit),
                    valid=data.valid,
                )
        else:
            data = _ingest_generic_field(source_path, mapping)
        out_name = os.path.splitext(os.path.basename(source_path))[0] + ".field.csv"
        out_path = os.path.join(out_dir, out_name)
        write_field_csv(data, out_path)
    else:
        if canonical == "loads":
            data = read_load_csv(source_path)
        else:
            data = _ingest_generic_loads(source_path, mapping)
        out_name = os.path.splitext(os.path.basename(source_path))[0] + ".loads.csv"
        out_path = os.path.join(out_dir, out_name)
        write_load_csv(data, out_path)

    manifest = {
        "schema": "downwash ingest manifest v1",
        "source": {
            "path": os.path.abspath(source_path),
            "sha256": sha256_of(source_path),
            "bytes": os.path.getsize(source_path),
        },
        "mapping": mapping,
        "output": {
            "path": os.path.abspath(out_path),
            "sha256": sha256_of(out_path),
            "bytes": os.path.getsize(out_path),
        },
    }
    return out_path, manifest
