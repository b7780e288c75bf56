"""Sharp Gagliardo-Nirenberg constants, extremals and torus simulations.

Every subcommand accepts ``--config FILE`` (flat ``key = value`` lines, ``#``
comments); explicit flags override config values, which override defaults.
The resolved configuration is embedded in every artifact written, so feeding
it back reproduces the artifact byte for byte.

Exit codes: 0 success, 2 domain error, 3 I/O error, 4 extremality
violation, 5 non-convergence under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    Regime,
    closed_form_A,
    dpd_r,
    extremal_profile,
    validate_params,
)
from .errors import DomainError, ExtremalityViolated, GNError, TailDivergence
from .quadrature import (
    QuadratureScheme,
    TailModel,
    blowup_coefficient,
    moments,
    verify_extremality,
)
from .torus import SolverOptions, TorusGrid, alpha_sweep, minimize_j_alpha


OUTPUT_DIR_ENV = "GNSHARP_OUTPUT_DIR"

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_IO = 3
EXIT_EXTREMALITY = 4
EXIT_NOT_CONVERGED = 5

EXTREMAL_HEADER = ["rho", "w", "dw"]
BLOWUP_HEADER = ["p", "q", "r", "theta", "I1", "I2", "I3", "I4", "I5", "bracket", "in_regime", "reason"]
SWEEP_HEADER = ["alpha", "nu_alpha", "grad_energy", "penalty", "q_mass", "conc_r02"]


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def fmt(x) -> str:
    """12 significant digits; used for every float written."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NA"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        x = 0.0
    return f"{x:.12g}"


def _round(obj):
    """Recursively round floats to 12 significant digits for JSON."""
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(fmt(x))
    return obj


def _float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if not text:
        return []
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


# (name, type, default, help); names map to --flag-name and config keys
_QUAD_OPTS = [
    ("order", int, 16, "Gauss-Legendre order per panel"),
    ("panels", int, 64, "panel count on [0, R]"),
    ("radius", float, 1e4, "truncation radius R"),
    ("tail", str, "PowerLawCorrection", "tail model: PowerLawCorrection or Drop"),
    ("target_rel_err", float, 1e-8, "target relative quadrature error"),
]

_SOLVER_OPTS = [
    ("dim", int, 2, "torus dimension (2 or 3)"),
    ("grid", int, 64, "points per side N"),
    ("p", float, 2.0, "gradient exponent"),
    ("q", float, 2.0, "L^q exponent"),
    ("r", float, 3.0, "L^r constraint exponent"),
    ("delta", _opt_float, None, "gradient regularization (default 1e-8 for p<2, 0 for p=2)"),
    ("max_iter", int, 100_000, "iteration cap per descent"),
    ("rtol", float, 1e-10, "relative change stopping tolerance"),
    ("init_width", float, 0.15, "initial bump width in units of L"),
    ("seed", int, 0, "recorded seed"),
    ("strict", _bool, False, "exit 5 when a run does not converge"),
]

SUBCOMMANDS = {
    "constants": [
        ("n", int, None, "dimension"),
        ("p", float, None, "gradient exponent"),
        ("q", float, None, "L^q exponent"),
        ("r", _opt_float, None, "L^r exponent (default p(q-1)/(p-1))"),
        ("json", _bool, False, "emit JSON"),
    ],
    "extremal": [
        ("n", int, None, "dimension"),
        ("p", float, None, "gradient exponent"),
        ("q", float, None, "L^q exponent"),
        ("rho", _float_list, "0,0.5,1,2,5,10", "comma-separated radii"),
        ("out", str, "extremal.csv", "output CSV path"),
    ],
    "verify": [
        ("n", int, None, "dimension"),
        ("p", float, None, "gradient exponent"),
        ("q", float, None, "L^q exponent"),
        *_QUAD_OPTS,
        ("perturbations", int, 20, "number of random bumps"),
        ("eps", float, 1e-4, "perturbation size"),
        ("seed", int, 0, "seed of the first bump"),
        ("out", str, "", "output JSON path (stdout if empty)"),
    ],
    "moments": [
        ("n", int, None, "dimension"),
        ("p", float, None, "gradient exponent"),
        ("q", float, None, "L^q exponent"),
        *_QUAD_OPTS,
        ("out", str, "", "output JSON path (stdout if empty)"),
    ],
    "blowup": [
        ("n", int, None, "dimension"),
        ("p_min", float, None, "first p of the grid"),
        ("p_max", float, None, "last p of the grid"),
        ("steps", int, 20, "number of p values"),
        ("q", _opt_float, None, "fixed q (default: see --q-mode)"),
        ("q_mode", str, "midpoint", "midpoint of (p, p(n-1)/(n-p)) or 'offset'"),
        ("q_offset", float, 0.05, "q = p(n-1)/(n-p) - offset when q-mode is offset"),
        *_QUAD_OPTS,
        ("out", str, "blowup.csv", "output CSV path"),
    ],
    "simulate": [
        *_SOLVER_OPTS,
        ("alpha", float, 1.0, "penalty parameter"),
        ("out", str, "simulate", "output path stem (.json and .csv)"),
    ],
    "sweep": [
        *_SOLVER_OPTS,
        ("alphas", _float_list, "1,10,100,1000", "strictly increasing penalties"),
        ("out", str, "sweep", "output path stem (.json and .csv)"),
    ],
}


def read_config(path) -> dict:
    """Parse a flat key = value file."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CLIError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected key = value", EXIT_DOMAIN)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnsharp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in SUBCOMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value config file")
        for key, typ, default, help_ in opts:
            extra = {"nargs": "?", "const": "true"} if typ is _bool else {}
            sp.add_argument(
                "--" + key.replace("_", "-"), dest=key, default=argparse.SUPPRESS,
                help=f"{help_} (default: {default})", **extra,
            )
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults < config file < flags, converted to their declared types."""
    opts = SUBCOMMANDS[command]
    raw = {key: default for key, _t, default, _h in opts}
    if getattr(args, "config", None):
        file_cfg = read_config(args.config)
        unknown = set(file_cfg) - set(raw)
        if unknown:
            raise CLIError(f"unknown config keys for {command}: {sorted(unknown)}", EXIT_DOMAIN)
        raw.update(file_cfg)
    for key in raw:
        if hasattr(args, key):
            raw[key] = getattr(args, key)
    cfg = {}
    for key, typ, _default, _h in opts:
        val = raw[key]
        if val is None:
            cfg[key] = None
            continue
        try:
            cfg[key] = typ(val)
        except (TypeError, ValueError) as exc:
            raise CLIError(f"bad value for {key}: {val!r}", EXIT_DOMAIN) from exc
    # options typed _opt_float may stay unset; other None defaults are required
    missing = [k for k, t, d, _h in opts if d is None and cfg[k] is None and t is not _opt_float]
    if missing:
        raise CLIError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}", EXIT_DOMAIN)
    return cfg


def _output_path(path: str) -> Path:
    p = Path(path)
    if not p.is_absolute():
        base = os.environ.get(OUTPUT_DIR_ENV)
        if base:
            p = Path(base) / p
    return p


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(_round(obj), indent=2, sort_keys=False) + "\n"


def _config_record(command, cfg) -> dict:
    return {"command": command, "version": __version__, **cfg}


def _write_csv_with_meta(path: Path, header, rows, command, cfg) -> None:
    write_atomic(path, _csv_text(header, rows))
    # CSV headers are fixed, so the resolved config travels in a sidecar
    write_atomic(path.with_name(path.name + ".config.json"),
                 _json_text({"config": _config_record(command, cfg)}))


def _emit_json(obj, out: str) -> None:
    text = _json_text(obj)
    if out:
        write_atomic(_output_path(out), text)
    else:
        sys.stdout.write(text)


def _scheme(cfg) -> QuadratureScheme:
    try:
        tail = TailModel(cfg["tail"])
    except ValueError as exc:
        raise DomainError(f"unknown tail model {cfg['tail']!r}") from exc
    return QuadratureScheme(
        order=cfg["order"],
        panels=cfg["panels"],
        truncation_radius=cfg["radius"],
        tail_model=tail,
        target_rel_err=cfg["target_rel_err"],
    )


def cmd_constants(cfg) -> int:
    params = validate_params(cfg["n"], cfg["p"], cfg["q"], cfg["r"])
    a_val = closed_form_A(params) if params.has_closed_form else None
    r_dpd = dpd_r(params.p, params.q)
    if cfg["json"]:
        _emit_json({
            "theta": params.theta,
            "p_star": params.p_star,
            "regime": params.regime.value,
            "r_dpd": r_dpd,
            "A": a_val,
            "config": _config_record("constants", cfg),
        }, "")
    else:
        print(f"theta={fmt(params.theta)}")
        print(f"p_star={fmt(params.p_star)}")
        print(f"regime={params.regime.value}")
        print(f"r_dpd={fmt(r_dpd)}")
        print(f"A={fmt(a_val) if a_val is not None else 'NA'}")
    return EXIT_OK


def cmd_extremal(cfg) -> int:
    params = validate_params(cfg["n"], cfg["p"], cfg["q"])
    w = extremal_profile(params)
    rho = np.asarray(cfg["rho"], dtype=float)
    if np.any(rho < 0):
        raise DomainError("radii must be nonnegative")
    rows = [(x, float(w.evaluate(x)), float(w.evaluate_derivative(x))) for x in rho]
    _write_csv_with_meta(_output_path(cfg["out"]), EXTREMAL_HEADER, rows, "extremal", cfg)
    return EXIT_OK


def cmd_verify(cfg) -> int:
    params = validate_params(cfg["n"], cfg["p"], cfg["q"])
    if not params.has_closed_form:
        raise DomainError("verify requires p < q <= p(n-1)/(n-p)")
    scheme = _scheme(cfg)
    report = verify_extremality(
        params, scheme, perturbations=cfg["perturbations"], eps=cfg["eps"],
        seed=cfg["seed"], raise_on_failure=False,
    )
    _emit_json({"report": report.as_dict(), "config": _config_record("verify", cfg)}, cfg["out"])
    if not report.passed:
        raise CLIError("extremality violated", EXIT_EXTREMALITY)
    return EXIT_OK


def cmd_moments(cfg) -> int:
    params = validate_params(cfg["n"], cfg["p"], cfg["q"])
    m = moments(params, _scheme(cfg))
    out = {f"I{i}": v for i, v in enumerate(m.values(), 1)}
    out["errors"] = list(m.errors)
    out["config"] = _config_record("moments", cfg)
    _emit_json(out, cfg["out"])
    return EXIT_OK


def _blowup_row(n, p, q_cfg, cfg, scheme):
    if not 1 < p < n:
        return [p, "NA", "NA", "NA", *["NA"] * 5, "NA", False, "p outside (1, n)"]
    q_max = p * (n - 1) / (n - p)
    if q_cfg is not None:
        q = q_cfg
    elif cfg["q_mode"] == "offset":
        q = q_max - cfg["q_offset"]
    elif cfg["q_mode"] == "midpoint":
        q = 0.5 * (p + q_max)
    else:
        raise DomainError(f"unknown q-mode {cfg['q_mode']!r}")
    try:
        params = validate_params(n, p, q)
    except DomainError as exc:
        return [p, q, "NA", "NA", *["NA"] * 5, "NA", False, str(exc)]
    in_regime = params.has(Regime.BLOWUP_NONVALIDITY)
    if not params.is_dpd:
        return [p, q, params.r, params.theta, *["NA"] * 5, "NA", in_regime,
                "outside the explicit-extremal range"]
    try:
        m = moments(params, scheme)
    except TailDivergence as exc:
        return [p, q, params.r, params.theta, *["NA"] * 5, "NA", in_regime, str(exc)]
    bracket = blowup_coefficient(params, scheme, m)
    return [p, q, params.r, params.theta, *m.values(), bracket, in_regime, ""]


def cmd_blowup(cfg) -> int:
    n = cfg["n"]
    if n < 2:
        raise DomainError("n must be an integer >= 2")
    steps = cfg["steps"]
    if steps < 1:
        raise DomainError("steps must be >= 1")
    p_grid = np.linspace(cfg["p_min"], cfg["p_max"], steps) if steps > 1 else np.array([cfg["p_min"]])
    scheme = _scheme(cfg)
    rows = [_blowup_row(n, float(p), cfg["q"], cfg, scheme) for p in p_grid]
    _write_csv_with_meta(_output_path(cfg["out"]), BLOWUP_HEADER, rows, "blowup", cfg)
    in_rows = [row for row in rows if row[10] is True]
    positive = [row for row in in_rows if not isinstance(row[9], str) and row[9] > 0]
    if in_rows:
        verdict = "positive" if len(positive) == len(in_rows) else "NOT positive"
        print(f"in-regime rows: {len(in_rows)}; bracket {verdict} on {len(positive)}/{len(in_rows)}")
    else:
        print("in-regime rows: 0")
    return EXIT_OK


def _sim_setup(cfg):
    params = validate_params(cfg["dim"], cfg["p"], cfg["q"], cfg["r"])
    grid = TorusGrid(cfg["dim"], cfg["grid"])
    options = SolverOptions(
        delta=cfg["delta"], max_iter=cfg["max_iter"], rtol=cfg["rtol"],
        init_width=cfg["init_width"],
    )
    return params, grid, options


def _write_sim(records, cfg, command, params) -> int:
    stem = _output_path(cfg["out"])
    rows = [
        (d.alpha, d.nu_alpha, d.grad_energy, d.penalty, d.q_mass, d.concentration_at(0.2))
        for d in records
    ]
    write_atomic(stem.with_name(stem.name + ".csv"), _csv_text(SWEEP_HEADER, rows))
    doc = {
        "config": _config_record(command, cfg),
        "seed": cfg["seed"],
        "params": params.as_dict(),
        "runs": [d.as_dict() for d in records],
    }
    write_atomic(stem.with_name(stem.name + ".json"), _json_text(doc))
    if cfg["strict"] and not all(d.converged for d in records):
        raise CLIError("a run did not converge", EXIT_NOT_CONVERGED)
    return EXIT_OK


def cmd_simulate(cfg) -> int:
    params, grid, options = _sim_setup(cfg)
    _, diag = minimize_j_alpha(params, grid, cfg["alpha"], options)
    return _write_sim([diag], cfg, "simulate", params)


def cmd_sweep(cfg) -> int:
    params, grid, options = _sim_setup(cfg)
    records = alpha_sweep(params, grid, cfg["alphas"], options)
    return _write_sim(records, cfg, "sweep", params)


COMMANDS = {
    "constants": cmd_constants,
    "extremal": cmd_extremal,
    "verify": cmd_verify,
    "moments": cmd_moments,
    "blowup": cmd_blowup,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ExtremalityViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTREMALITY
    except GNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
