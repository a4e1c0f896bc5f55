"""File formats: count-table CSV, POVM/report JSON, key = value configs, manifests.

Floats are written with 17 significant digits so that write -> read -> write
reproduces the same bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .fock import CountTable, ProbeGrid
from .models import DiagonalPOVM

__all__ = [
    "ConfigError",
    "fmt_float",
    "dumps_json",
    "write_count_table",
    "read_count_table",
    "counts_path",
    "write_povm",
    "read_povm",
    "read_grid_file",
    "parse_config",
    "RunManifest",
    "sha256_file",
]


class ConfigError(ValueError):
    """Malformed config or flag; carries the offending key and line."""

    def __init__(self, message, key=None, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.key = key
        self.line = line


def fmt_float(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        raise ValueError("refusing to serialize NaN")
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return json.dumps(str(obj))
        return fmt_float(obj)
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, list):
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(k) + ": " + _encode(obj[k], indent, level + 1) for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON with sorted keys and 17-digit floats."""
    return _encode(_plain(obj), indent, 0) + "\n"


def counts_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_counts" + path.suffix)


def _header(n_out):
    return ["alpha_sq", "sigma_sq", "trials"] + [f"n{j}" for j in range(n_out)]


def _trial_text(j):
    return "inf" if j is None else str(int(j))


def write_count_table(table: CountTable, path) -> list:
    """Write frequencies to ``path`` and raw counts (if any) beside it.

    Returns the list of written paths.
    """
    path = Path(path)
    grid = table.grid
    written = []
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(table.outcomes))
    for p, j, row in zip(grid.probes, grid.trials, table.frequencies):
        w.writerow([fmt_float(p.mean_photon_number), fmt_float(p.noise_sigma_sq), _trial_text(j)]
                   + [fmt_float(v) for v in row])
    path.write_text(buf.getvalue())
    written.append(path)
    if table.raw_counts is not None:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_header(table.outcomes))
        for p, j, row in zip(grid.probes, grid.trials, table.raw_counts):
            w.writerow([fmt_float(p.mean_photon_number), fmt_float(p.noise_sigma_sq), _trial_text(j)]
                       + [str(int(v)) for v in row])
        counts_path(path).write_text(buf.getvalue())
        written.append(counts_path(path))
    return written


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    head = [h.strip() for h in rows[0]]
    if head[:3] != ["alpha_sq", "sigma_sq", "trials"] or len(head) < 4:
        raise ConfigError(f"{path}: header must start with alpha_sq,sigma_sq,trials,n0", line=1)
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body, start=2):
        if len(r) != len(head):
            raise ConfigError(f"{path}: expected {len(head)} fields, got {len(r)}", line=i)
    return head, body


def read_count_table(path) -> CountTable:
    """Read a table written by :func:`write_count_table`.

    Rows that do not sum to one mark the table as a predicted response.
    """
    path = Path(path)
    head, body = _read_rows(path)
    try:
        alpha_sq = [float(r[0]) for r in body]
        sigma_sq = [float(r[1]) for r in body]
        trials = [None if r[2].strip() == "inf" else int(r[2]) for r in body]
        freq = np.array([[float(v) for v in r[3:]] for r in body])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    grid = ProbeGrid.from_arrays(alpha_sq, sigma_sq, trials)
    raw = None
    cpath = counts_path(path)
    if cpath.exists():
        _, cbody = _read_rows(cpath)
        raw = np.array([[int(v) for v in r[3:]] for r in cbody], dtype=np.int64)
    predicted = bool(np.abs(freq.sum(axis=1) - 1.0).max() > 1e-12) if len(freq) else False
    return CountTable(grid, freq, raw_counts=raw, predicted=predicted)


def read_grid_file(path) -> ProbeGrid:
    """Probe magnitudes from a CSV with an ``alpha_sq`` column (``sigma_sq`` optional)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ConfigError(f"grid file {path} is empty")
    head = [h.strip() for h in rows[0]]
    if "alpha_sq" not in head:
        raise ConfigError(f"grid file {path} needs an alpha_sq column", line=1)
    ia = head.index("alpha_sq")
    isg = head.index("sigma_sq") if "sigma_sq" in head else None
    try:
        a = [float(r[ia]) for r in rows[1:]]
        s = [float(r[isg]) for r in rows[1:]] if isg is not None else None
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"grid file {path}: {exc}") from exc
    return ProbeGrid.from_arrays(a, s, None)


def write_povm(povm: DiagonalPOVM, path) -> Path:
    path = Path(path)
    doc = {"M": povm.M, "N": povm.outcomes, "theta": povm.theta, "meta": povm.meta}
    path.write_text(dumps_json(doc))
    return path


def read_povm(path) -> DiagonalPOVM:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})", line=exc.lineno) from exc
    for key in ("M", "N", "theta"):
        if key not in doc:
            raise ConfigError(f"{path}: missing key {key!r}", key=key)
    theta = np.array(doc["theta"], dtype=np.float64)
    if theta.shape != (int(doc["M"]) + 1, int(doc["N"])):
        raise ConfigError(f"{path}: theta shape {theta.shape} disagrees with M={doc['M']}, N={doc['N']}")
    return DiagonalPOVM(theta, int(doc["M"]), meta=doc.get("meta", {}))


def parse_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Returns ``{key: (value, line_number)}``.
    """
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError("empty key", line=lineno)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", key=key, line=lineno)
            out[key] = (value, lineno)
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: object = None
    version: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    created: str = ""

    def record(self, inputs=(), outputs=()):
        self.inputs = {str(p): sha256_file(p) for p in inputs}
        self.outputs = {str(p): sha256_file(p) for p in outputs}
        self.created = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return self

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(dumps_json(asdict(self)))
        return path
