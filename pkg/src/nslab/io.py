"""Snapshot files, flat key=value configs and CSV output.

Snapshot layout (all integers little-endian):

    offset  size  content
    0       5     magic b"NSLB1"
    5       4     uint32 N
    9       4     uint32 components
    13      1     uint8 reality flag (0/1)
    14      4     uint32 label length L
    18      L     label, UTF-8
    18+L    ...   components * N^3 complex values as '<f8' (re, im) pairs,
                  C order over (component, i, j, k) with FFT index order per axis
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nslab import __version__
from nslab.errors import BadMagic, ConfigIOError, ConfigSchemaError, ConfigSyntaxError, TruncatedPayload
from nslab.spectral import SpectralField

MAGIC = b"NSLB1"
_HEADER = struct.Struct("<IIBI")


def write_snapshot(f, path):
    label = f.label.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(f.N, f.components, int(bool(f.real)), len(label)))
        fh.write(label)
        fh.write(np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes())


def read_snapshot(path):
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:5]!r}")
    if len(data) < 5 + _HEADER.size:
        raise TruncatedPayload(f"{path}: header truncated")
    N, comps, real, llen = _HEADER.unpack_from(data, 5)
    off = 5 + _HEADER.size
    if len(data) < off + llen:
        raise TruncatedPayload(f"{path}: label truncated")
    label = data[off : off + llen].decode("utf-8")
    off += llen
    need = comps * N**3 * 16
    if len(data) - off < need:
        raise TruncatedPayload(f"{path}: payload has {len(data) - off} of {need} bytes")
    if len(data) - off > need:
        raise TruncatedPayload(f"{path}: {len(data) - off - need} trailing bytes")
    coeffs = np.frombuffer(data, dtype="<c16", count=comps * N**3, offset=off).reshape(comps, N, N, N)
    return SpectralField(coeffs.astype(np.complex128), real=bool(real), label=label)


# -- config

@dataclass(frozen=True)
class Key:
    kind: type
    required: bool = False
    default: object = None
    check: object = None  # callable value -> reason or None
    is_list: bool = False


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _open_unit(v):
    return None if 0 < v < 1 else "must satisfy 0 < b < 1 (admissible range of the decay exponent b)"


def _grid(v):
    return None if v >= 4 and v % 2 == 0 else "must be an even integer >= 4"


def _positives(vs):
    return None if all(v > 0 for v in vs) else "entries must be positive"


_COMMON = {
    "N": Key(int, True, check=_grid),
    "seed": Key(int, False, 0),
    "output_dir": Key(str, False, "out"),
}

_PIPELINE = {
    "b": Key(float, True, check=_open_unit),
    "M0": Key(float, False, 1.0, _positive),
    "epsilon": Key(float, True, check=_positive),
    "epsilon_threshold": Key(float, False, 0.05, _positive),
    "C": Key(float, False, 0.1, _positive),
    "dt": Key(float, False, 0.01, _positive),
    "record_every": Key(int, False, 10, _positive),
    "horizon_extra": Key(float, False, 5.0, _positive),
    "picard_steps": Key(int, False, 16, _positive),
    "picard_tol": Key(float, False, 1e-10, _positive),
    "remainder_kmax": Key(int, False, 3, _positive),
    "eps_scaling": Key(bool, False, False),
}

SCHEMAS = {
    "theorem13": {**_COMMON, **_PIPELINE, "lambda_sq": Key(int, True, check=_non_negative)},
    "corollary18": {
        **_COMMON,
        **_PIPELINE,
        "shells": Key(int, True, check=_positives, is_list=True),
        "amplitudes": Key(float, False, None, is_list=True),
        "epsilon1": Key(float, True, check=_non_negative),
        "bernstein_c": Key(float, False, 4.0, _positive),
    },
    "estimate_suite": {
        **_COMMON,
        "ensemble": Key(int, False, 20, lambda v: None if v >= 20 else "ensemble size must be >= 20"),
        "grids": Key(int, False, (16, 32), is_list=True),
        "kmax": Key(int, False, 4, _positive),
        "T": Key(float, False, 1.0, _positive),
        "t_min": Key(float, False, 1e-4, _positive),
        "drift_bound": Key(float, False, 0.25, _positive),
        "zero_data": Key(bool, False, False),
    },
    "beltrami_exactness": {
        **_COMMON,
        "shells": Key(int, False, (1, 2, 3), check=_positives, is_list=True),
        "dt": Key(float, False, 1e-3, _positive),
        "error_bound": Key(float, False, 1e-8, _positive),
        "order_gain": Key(float, False, 8.0, _positive),
    },
    "solve": {
        **_COMMON,
        "input": Key(str, False, ""),
        "lambda_sq": Key(int, False, 1, _positive),
        "amplitude": Key(float, False, 1.0),
        "dt": Key(float, True, check=_positive),
        "T": Key(float, True, check=_positive),
        "record_every": Key(int, False, 1, _positive),
    },
    "picard": {
        **_COMMON,
        "input": Key(str, False, ""),
        "lambda_sq": Key(int, False, 1, _positive),
        "b": Key(float, False, 0.5, _open_unit),
        "M0": Key(float, False, 1.0, _positive),
        "epsilon": Key(float, False, 0.05, _positive),
        "C": Key(float, False, 0.1, _positive),
        "perturbation": Key(float, False, 1e-3, _non_negative),
        "steps": Key(int, False, 16, _positive),
        "tol": Key(float, False, 1e-8, _positive),
        "max_iter": Key(int, False, 30, _positive),
    },
}


@dataclass
class Config:
    schema: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def digest(self):
        return config_hash(self.values)


def config_hash(values):
    text = "\n".join(f"{k}={_render(values[k])}" for k in sorted(values))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _render(v):
    if isinstance(v, (list, tuple)):
        return ",".join(_render(x) for x in v)
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(kind, text):
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("not finite")
        return v
    return text


def parse_pairs(text):
    """Lines of key = value; '#' starts a comment. Returns {key: (raw, line, col)}."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigSyntaxError(lineno, col, "expected key = value")
        key_part, value = line.split("=", 1)
        key = key_part.strip()
        col = len(key_part) - len(key_part.lstrip()) + 1
        if not key or not key.replace("_", "").isalnum():
            raise ConfigSyntaxError(lineno, col, f"invalid key {key!r}")
        if key in out:
            raise ConfigSyntaxError(lineno, col, f"duplicate key {key!r} (first on line {out[key][1]})")
        out[key] = (value.strip(), lineno, col)
    return out


def validate(pairs, schema):
    if schema not in SCHEMAS:
        raise ConfigSchemaError([("<schema>", f"unknown schema {schema!r}")])
    spec = SCHEMAS[schema]
    problems = []
    values = {}
    for key in pairs:
        if key not in spec:
            problems.append((key, "unknown key"))
    for key, k in spec.items():
        if key not in pairs:
            if k.required:
                problems.append((key, "missing required key"))
            else:
                values[key] = k.default
            continue
        raw = pairs[key][0]
        try:
            if k.is_list:
                v = tuple(_convert(k.kind, p.strip()) for p in raw.split(",") if p.strip())
                if not v:
                    raise ValueError("empty list")
            else:
                v = _convert(k.kind, raw)
        except ValueError as exc:
            problems.append((key, f"cannot parse {raw!r} as {k.kind.__name__}: {exc}"))
            continue
        reason = k.check(v) if k.check else None
        if reason:
            problems.append((key, f"{reason} (got {raw})"))
            continue
        values[key] = v
    if problems:
        raise ConfigSchemaError(problems)
    return Config(schema, values)


def parse_config(path, schema):
    """Read and validate a flat config file against the named schema."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return validate(parse_pairs(text), schema)


def config_from_text(text, schema):
    return validate(parse_pairs(text), schema)


# -- CSV

def write_csv(path, header, rows, config_digest=""):
    """CSV with a leading '# nslab <version> config_hash=<hash>' line and a header row."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# nslab {__version__} config_hash={config_digest or 'none'}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def _cell(x):
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def read_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
