"""Command-line pipeline: simulate, reconstruct, certify, compare, wigner, calibrate.

Exit codes: 0 success, 2 usage or config error, 3 numeric failure,
4 certificate above threshold (``certify``).  ``QDTOMO_OUTDIR`` sets the
directory for outputs whose path is not given explicitly.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import io as qio
from .analysis import compare_povms, response_overlay, wigner_element
from .fock import CountTable, ProbeGrid, QuadratureError, build_probe_matrix
from .io import ConfigError, RunManifest, dumps_json
from .models import APD_LOSS, TMD_LOSS
from .reconstruct import InfeasibleError, Objective, kkt_certificate, objective_value, solve
from .synth import (
    CalibrationInput,
    ExperimentConfig,
    alpha_from_power,
    default_apd_grid,
    default_tmd_grid,
    simulate_counts,
)

log = logging.getLogger("qdtomo")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CERT = 0, 2, 3, 4

SIMULATE_KEYS = {
    "model": "apd | tmd | path to a POVM JSON file (required)",
    "loss": f"detector loss (apd default {APD_LOSS}, tmd default {TMD_LOSS})",
    "reflectivities": "comma-separated splitting ratios for the tmd",
    "grid": "default-apd | default-tmd | geom:lo:hi:n | lin:lo:hi:n | path to a CSV with alpha_sq",
    "trials": "trials per probe, a positive integer or inf (required)",
    "seed": "64-bit integer seed (default 0)",
    "delta": "relative amplitude jitter width (default none)",
    "sigma_law": "c in sigma^2 = c |alpha|^4 for mixed probes (default 0)",
    "basis": "simulation cut M (default: automatic)",
    "out": "output CSV path",
}


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _outdir() -> Path:
    return Path(os.environ.get("QDTOMO_OUTDIR", "."))


def _out_path(value, default_name) -> Path:
    path = Path(value) if value else _outdir() / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _manifest_path(path: Path) -> Path:
    return path.with_name(path.name + ".manifest.json")


def parse_grid(spec: str, model: str = None) -> ProbeGrid:
    if spec is None:
        if model == "tmd":
            return default_tmd_grid()
        if model == "apd":
            return default_apd_grid()
        raise ConfigError("missing key 'grid'", key="grid")
    if spec == "default-apd":
        return default_apd_grid()
    if spec == "default-tmd":
        return default_tmd_grid()
    if spec.startswith(("geom:", "lin:")):
        parts = spec.split(":")
        if len(parts) != 4:
            raise ConfigError(f"grid spec {spec!r} must look like geom:lo:hi:n", key="grid")
        try:
            lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise ConfigError(f"bad grid spec {spec!r}: {exc}", key="grid") from exc
        if n < 1 or lo < 0 or hi < lo or (parts[0] == "geom" and lo <= 0):
            raise ConfigError(f"bad grid range in {spec!r}", key="grid")
        values = np.geomspace(lo, hi, n) if parts[0] == "geom" else np.linspace(lo, hi, n)
        return ProbeGrid.from_arrays(values)
    if Path(spec).exists():
        return qio.read_grid_file(spec)
    raise ConfigError(f"unknown grid {spec!r}", key="grid")


def _float(value, key, positive=False, nonneg=False):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r} expects a number, got {value!r}", key=key) from None
    if not np.isfinite(x) or (positive and x <= 0) or (nonneg and x < 0):
        raise ConfigError(f"key {key!r} out of range: {value!r}", key=key)
    return x


def _trials(value):
    if value is None:
        raise ConfigError("missing key 'trials'", key="trials")
    if str(value).strip().lower() == "inf":
        return None
    try:
        j = int(str(value))
    except ValueError:
        raise ConfigError(f"key 'trials' expects a positive integer or inf, got {value!r}", key="trials") from None
    if j <= 0:
        raise ConfigError(f"key 'trials' must be positive, got {j}", key="trials")
    return j


# ------------------------------------------------------------------ simulate

def _simulate_settings(args) -> dict:
    settings = {}
    if args.config:
        for key, (value, line) in qio.parse_config(args.config).items():
            if key not in SIMULATE_KEYS:
                raise ConfigError(f"unknown key {key!r}", key=key, line=line)
            settings[key] = value
    for key in SIMULATE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = str(value)
    return settings


def cmd_simulate(args) -> int:
    s = _simulate_settings(args)
    if "model" not in s:
        raise ConfigError("missing key 'model'", key="model")
    model = s["model"]
    params = {}
    inputs = []
    if model in ("apd", "tmd"):
        source = model
        if "loss" in s:
            loss = _float(s["loss"], "loss", nonneg=True)
            if loss > 1:
                raise ConfigError("key 'loss' must lie in [0, 1]", key="loss")
            params["loss"] = loss
        if "reflectivities" in s:
            if model != "tmd":
                raise ConfigError("key 'reflectivities' only applies to the tmd", key="reflectivities")
            params["reflectivities"] = [_float(v, "reflectivities", positive=True)
                                        for v in s["reflectivities"].split(",")]
    elif Path(model).exists():
        source = qio.read_povm(model)
        inputs.append(Path(model))
    else:
        raise ConfigError(f"key 'model' must be apd, tmd or an existing POVM file, got {model!r}", key="model")
    grid = parse_grid(s.get("grid"), model if model in ("apd", "tmd") else None)
    grid = grid.with_trials(_trials(s.get("trials")))
    if "sigma_law" in s:
        grid = grid.with_sigma_law(_float(s["sigma_law"], "sigma_law", nonneg=True))
    try:
        seed = int(s.get("seed", "0"))
    except ValueError:
        raise ConfigError(f"key 'seed' expects an integer, got {s['seed']!r}", key="seed") from None
    delta = _float(s["delta"], "delta", nonneg=True) if "delta" in s else None
    basis = int(s["basis"]) if "basis" in s else None
    try:
        config = ExperimentConfig(source, grid, seed, delta, params, basis)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    table = simulate_counts(config)
    out = _out_path(s.get("out"), f"counts_{model if isinstance(source, str) else 'povm'}_{seed}.csv")
    written = qio.write_count_table(table, out)
    echo = dict(s)
    echo.update({"seed": seed, "simulation_M": table.meta["simulation_M"], "rng": table.meta["rng"]})
    manifest = RunManifest("simulate", echo, seed, _version()).record(inputs, written)
    manifest.write(_manifest_path(out))
    print(out)
    return EXIT_OK


# --------------------------------------------------------------- reconstruct

def _objective(data_path, M, y, sigma_law) -> Objective:
    data = qio.read_count_table(data_path)
    grid = data.grid
    if sigma_law is not None:
        grid = grid.with_sigma_law(sigma_law)
    if M < 0:
        raise ConfigError("--M must be >= 0", key="M")
    F = build_probe_matrix(grid, M)
    data = CountTable(grid, data.frequencies, data.raw_counts, data.predicted)
    return Objective(F, data, y)


def cmd_reconstruct(args) -> int:
    obj = _objective(args.data, args.M, args.y, args.mixed_sigma_law)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = solve(obj, max_iter=args.max_iter, tol=args.tol)
    for w in caught:
        log.warning("%s", w.message)
    out = _out_path(args.out, "povm.json")
    qio.write_povm(report.povm, out)
    written = [out]
    if args.report:
        rpath = _out_path(args.report, "report.json")
        rpath.write_text(dumps_json(report.to_dict()))
        written.append(rpath)
    config = {"M": args.M, "y": obj.reg_weight, "tol": args.tol, "max_iter": args.max_iter,
              "mixed_sigma_law": args.mixed_sigma_law}
    RunManifest("reconstruct", config, None, _version()).record([Path(args.data)], written).write(
        _manifest_path(out))
    print(json.dumps({"converged": report.converged, "iterations": report.iterations,
                      "objective_value": report.objective_value,
                      "stationarity_residual": report.certificate.stationarity_residual}))
    return EXIT_OK if report.converged else EXIT_NUMERIC


def cmd_certify(args) -> int:
    povm = qio.read_povm(args.povm)
    obj = _objective(args.data, povm.M, args.y, args.mixed_sigma_law)
    cert = kkt_certificate(obj, povm.theta)
    doc = cert.to_dict()
    doc["objective_value"] = objective_value(obj, povm.theta)
    doc["threshold"] = args.threshold
    sys.stdout.write(dumps_json(doc))
    return EXIT_OK if cert.stationarity_residual <= args.threshold else EXIT_CERT


def cmd_compare(args) -> int:
    a, b = qio.read_povm(args.a), qio.read_povm(args.b)
    if a.theta.shape != b.theta.shape:
        raise ConfigError(f"POVM shapes differ: {a.theta.shape} vs {b.theta.shape}")
    text = dumps_json(compare_povms(a, b))
    if args.out:
        _out_path(args.out, "compare.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_wigner(args) -> int:
    povm = qio.read_povm(args.povm)
    if not 0 <= args.outcome < povm.outcomes:
        raise ConfigError(f"--outcome must lie in [0, {povm.outcomes - 1}]", key="outcome")
    if args.rmax <= 0 or args.points < 1:
        raise ConfigError("--rmax must be > 0 and --points >= 1")
    axis = np.linspace(0.0, args.rmax, args.points)
    if args.planar:
        axis = np.linspace(-args.rmax, args.rmax, args.points)
        grid = wigner_element(povm, args.outcome, (axis, axis), tail=args.tail)
        header = ["re_alpha", "im_alpha", "W"]
        rows = zip(grid.re.ravel(), grid.im.ravel(), grid.values.ravel())
    else:
        grid = wigner_element(povm, args.outcome, axis, tail=args.tail)
        header = ["abs_alpha", "W"]
        rows = zip(grid.abs_alpha, grid.values)
    out = _out_path(args.out, f"wigner_{args.outcome}.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([qio.fmt_float(v) for v in row])
    print(out)
    return EXIT_OK


def cmd_overlay(args) -> int:
    povm = qio.read_povm(args.povm)
    grid = parse_grid(args.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = response_overlay(povm, grid)
    out = _out_path(args.out, "overlay.csv")
    qio.write_count_table(table, out)
    print(out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        cal = CalibrationInput(args.gamma, args.power, args.wavelength, args.rate)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(qio.fmt_float(alpha_from_power(cal)))
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdtomo", description="Detector tomography with coherent-state probes.")
    p.add_argument("--version", action="version", version=_version())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    keys = "\n".join(f"  {k:15s} {v}" for k, v in SIMULATE_KEYS.items())
    s = sub.add_parser("simulate", help="sample click counts from a detector model",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Config file keys (key = value; flags override):\n" + keys)
    s.add_argument("--config")
    s.add_argument("--model")
    s.add_argument("--loss")
    s.add_argument("--reflectivities")
    s.add_argument("--grid")
    s.add_argument("--trials")
    s.add_argument("--seed")
    s.add_argument("--delta")
    s.add_argument("--sigma-law", dest="sigma_law")
    s.add_argument("--basis")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    def _data_flags(q):
        q.add_argument("--data", required=True)
        q.add_argument("--y", type=float, default=None, help="regularization weight (default 1e-2 D/M)")
        q.add_argument("--mixed-sigma-law", dest="mixed_sigma_law", type=float, default=None,
                       help="use mixed probes with sigma^2 = c |alpha|^4")

    r = sub.add_parser("reconstruct", help="fit a diagonal POVM to a count table")
    _data_flags(r)
    r.add_argument("--M", type=int, default=60)
    r.add_argument("--tol", type=float, default=1e-8)
    r.add_argument("--max-iter", dest="max_iter", type=int, default=200_000)
    r.add_argument("--out")
    r.add_argument("--report")
    r.set_defaults(func=cmd_reconstruct)

    c = sub.add_parser("certify", help="print the optimality certificate of a POVM")
    c.add_argument("--povm", required=True)
    _data_flags(c)
    c.add_argument("--threshold", type=float, default=1e-8)
    c.set_defaults(func=cmd_certify)

    m = sub.add_parser("compare", help="fidelities and distance between two POVMs")
    m.add_argument("a")
    m.add_argument("b", help="reference POVM")
    m.add_argument("--out")
    m.set_defaults(func=cmd_compare)

    w = sub.add_parser("wigner", help="Wigner function of one POVM element")
    w.add_argument("--povm", required=True)
    w.add_argument("--outcome", type=int, required=True)
    w.add_argument("--rmax", type=float, default=2.0)
    w.add_argument("--points", type=int, default=101)
    w.add_argument("--planar", action="store_true")
    w.add_argument("--tail", choices=("constant", "truncate"), default="constant")
    w.add_argument("--out")
    w.set_defaults(func=cmd_wigner)

    o = sub.add_parser("overlay", help="predicted response curves of a POVM")
    o.add_argument("--povm", required=True)
    o.add_argument("--grid", required=True)
    o.add_argument("--out")
    o.set_defaults(func=cmd_overlay)

    k = sub.add_parser("calibrate", help="mean photon number from measured power")
    k.add_argument("--gamma", type=float, required=True)
    k.add_argument("--power", type=float, required=True)
    k.add_argument("--wavelength", type=float, required=True)
    k.add_argument("--rate", type=float, required=True)
    k.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="qdtomo: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"qdtomo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"qdtomo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, QuadratureError, np.linalg.LinAlgError, InfeasibleError) as exc:
        print(f"qdtomo {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"qdtomo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
