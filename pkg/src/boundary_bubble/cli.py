"""Command-line front end: ``boundary-bubble <command> [options]``.

Every command validates its configuration before computing, writes a report
that embeds the configuration hash and the package version, and exits with 0
only when every declared check passes (1 on failed checks, 2 on invalid
input).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core_math import ParameterError, ProblemParams, constants_AB, integral_I, omega
from .correction import (
    SolverError,
    correction_scalars,
    decay_fit,
    profile_to_csv,
    refinement_study,
    solve_reduced_bvp,
)
from .forms import TraceFreeForm
from .geometry import FermiMetricJet, GeometryError, load_field
from .reduced import ScanError, conjecture_scan, critical_table_csv, field_coefficients, find_critical, phi_of_q

log = logging.getLogger("boundary_bubble")

PARAM_KEYS = {"n", "quad_tol", "r_max", "t_max", "n_r", "n_t", "grading"}
COMMAND_KEYS = {
    "constants": set(),
    "correction": {"h", "refine", "refine_sizes", "ibp_tol"},
    "phi": {"h", "field"},
    "reduce": {"field"},
    "conjecture": {"samples", "tol"},
    "expansion": {"jet", "field", "q", "term", "gamma", "lambda", "deltas", "tol", "order_tol"},
    "remainder": {"jet", "field", "q", "lambda", "eps", "slope_tol"},
}
GLOBAL_KEYS = {"seed", "threads", "format", "out"}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def validate_config(command: str, cfg: dict) -> dict:
    allowed = PARAM_KEYS | GLOBAL_KEYS | COMMAND_KEYS[command]
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys for '{command}': {', '.join(unknown)}")
    if cfg.get("format", "json") not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    for k in ("seed", "threads", "samples"):
        if k in cfg and (not isinstance(cfg[k], int) or isinstance(cfg[k], bool) or cfg[k] < 0):
            raise ConfigError(f"{k} must be a non-negative integer")
    if "threads" in cfg and cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if "out" in cfg and Path(cfg["out"]).is_dir():
        raise ConfigError(f"--out {cfg['out']} is a directory; give a file path")
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def params_from(cfg: dict) -> ProblemParams:
    kw = {k: cfg[k] for k in PARAM_KEYS if k in cfg}
    return ProblemParams(**kw)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def read_form(path, n: int) -> TraceFreeForm:
    """A form file holds either a bare matrix or {"h": matrix}."""
    data = _read_json(path)
    if isinstance(data, dict):
        extra = set(data) - {"h", "n"}
        if extra:
            raise ConfigError(f"unknown keys in form file: {sorted(extra)}")
        if "n" in data and data["n"] != n:
            raise ConfigError("form file dimension disagrees with n")
        data = data.get("h")
    h = TraceFreeForm(data)
    if h.dim != n - 1:
        raise ConfigError(f"form must be {n - 1} x {n - 1} for n = {n}")
    return h


def read_jet(path, n: int) -> FermiMetricJet:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ConfigError("jet file must hold a JSON object")
    data = dict(data)
    if data.pop("n", n) != n:
        raise ConfigError("jet file dimension disagrees with n")
    return FermiMetricJet.from_dict(n, data)


# ------------------------------------------------------------------ output


class Report:
    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.result = {}
        self.checks = {}
        self.table = None  # (header, rows) for csv output

    def check(self, name, passed, value=None, tol=None):
        self.checks[name] = {"passed": bool(passed), "value": value, "tol": tol}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "tool": "boundary_bubble",
            "version": __version__,
            "command": self.command,
            "config_hash": config_hash(self.cfg),
            "config": self.cfg,
            "result": self.result,
            "checks": self.checks,
            "passed": self.passed,
            "failures": [k for k, c in self.checks.items() if not c["passed"]],
        }

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            header, rows = self.table if self.table else (["key", "value"], _flat_rows(self.result))
            buf = io.StringIO()
            wr = csv.writer(buf, lineterminator="\n")
            wr.writerow(["# config_hash", config_hash(self.cfg), "version", __version__])
            wr.writerow(header)
            wr.writerows(rows)
            return buf.getvalue()
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _flat_rows(d, prefix=""):
    rows = []
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            rows.extend(_flat_rows(v, f"{prefix}{k}."))
        else:
            rows.append([f"{prefix}{k}", _jsonable(v)])
    return rows


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text)


def _side_path(out, suffix: str):
    """Path next to the report for an auxiliary file, or None when writing to stdout."""
    if out is None:
        return None
    p = Path(out)
    return p.with_name(p.stem + suffix)


# ---------------------------------------------------------------- commands


def cmd_constants(cfg: dict, rep: Report) -> None:
    n = cfg.get("n", 7)
    if not isinstance(n, int) or n < 3:
        raise ParameterError("n must be an integer >= 3")
    AB = constants_AB(n)
    rep.result = {
        "n": n,
        "A": AB.A,
        "B": AB.B,
        "omega": omega(n),
        "I_n-1^n": integral_I(n - 1, n),
        "I_n-1^n-2": integral_I(n - 1, n - 2),
        "A_over_B": AB.A / AB.B,
    }
    rep.check("A_positive", AB.A > 0, AB.A)
    rep.check("B_positive", AB.B > 0, AB.B)


def cmd_correction(cfg: dict, rep: Report) -> None:
    p = params_from(cfg)
    if "h" not in cfg:
        raise ConfigError("correction needs an h file (--h)")
    h = read_form(cfg["h"], p.n)
    prof = solve_reduced_bvp(p, h)
    sc = correction_scalars(prof)
    rep.result = {"scalars": sc.to_dict(), "solver": {"iterations": prof.info.iterations,
                                                      "residual": prof.info.residual}}
    rep.check("solver_converged", prof.info.converged, prof.info.residual)
    rep.check("delta_v_v_nonpositive", sc.delta_v_v <= 0.0, sc.delta_v_v)
    if "ibp_tol" in cfg:
        rep.check("ibp_identity", sc.ibp_residual <= cfg["ibp_tol"], sc.ibp_residual, cfg["ibp_tol"])
    if not prof.is_zero:
        try:
            fit = decay_fit(prof)
            rep.result["decay"] = fit.to_dict()
        except Exception as exc:  # decay fit is diagnostic only
            rep.result["decay"] = {"error": str(exc)}
    if cfg.get("refine"):
        sizes = tuple(cfg.get("refine_sizes", (64, 128, 256)))
        rep.result["refinement"] = refinement_study(p, h, sizes)
    side = _side_path(cfg.get("out"), "_profile.csv")
    if side is not None:
        profile_to_csv(prof, side)
        rep.result["profile_csv"] = side.name
    rep.table = (["key", "value"], _flat_rows(rep.result["scalars"]))


def cmd_phi(cfg: dict, rep: Report) -> None:
    p = params_from(cfg)
    if "field" in cfg:
        field_ = load_field(cfg["field"])
        if field_.n != p.n:
            p = params_from({**cfg, "n": field_.n})
        coeffs = field_coefficients(p, field_)
        rows = [[q, field_.jets[k].pi_norm_sq, coeffs.phi[q]] for k, q in enumerate(field_.ids)]
        rep.result = {"phi": {str(r[0]): r[2] for r in rows}, "provenance": coeffs.provenance}
        rep.table = (["id", "pi_norm_sq", "phi"], rows)
        vals = [r[2] for r in rows]
    elif "h" in cfg:
        h = read_form(cfg["h"], p.n)
        prof = solve_reduced_bvp(p, h)
        jet = FermiMetricJet.build(p.n, h)
        val = phi_of_q(p, jet, prof)
        rep.result = {"phi": val, "pi_norm_sq": h.norm_sq}
        vals = [val]
    else:
        raise ConfigError("phi needs --h or --field")
    rep.check("phi_nonpositive", all(v <= 0 for v in vals), max(vals))


def cmd_reduce(cfg: dict, rep: Report) -> None:
    if "field" not in cfg:
        raise ConfigError("reduce needs --field")
    field_ = load_field(cfg["field"])
    p = params_from({**cfg, "n": field_.n})
    coeffs = field_coefficients(p, field_)
    report = find_critical(coeffs, field_)
    rep.result = report.to_dict()
    rep.result["coefficients"] = {"A": coeffs.A, "B": coeffs.B, "provenance": coeffs.provenance}
    rep.check("critical", report.critical, report.gradient)
    rep.check("nondegenerate_max", report.classification == "max", report.classification)
    text = critical_table_csv(report)
    rows = list(csv.reader(io.StringIO(text)))
    rep.table = (rows[0], rows[1:])


def cmd_conjecture(cfg: dict, rep: Report) -> None:
    p = params_from(cfg)
    scan = conjecture_scan(p, cfg.get("samples", 20), cfg.get("seed", 0), cfg.get("threads", 1))
    tol = cfg.get("tol", 1e-6)
    rep.result = scan.to_dict()
    rep.check("ratio_constant", scan.max_rel_deviation <= tol, scan.max_rel_deviation, tol)
    rep.check("phi_nonpositive", all(r["phi"] <= 0 for r in scan.rows))
    rows = list(csv.reader(io.StringIO(scan.to_csv())))
    rep.table = (rows[0], rows[1:])


def _jet_gamma(cfg: dict, n: int):
    if "field" in cfg:
        field_ = load_field(cfg["field"])
        k = field_.index(cfg["q"]) if "q" in cfg else 0
        return field_, field_.jets[k], float(field_.gamma[k])
    if "jet" in cfg:
        return None, read_jet(cfg["jet"], n), float(cfg.get("gamma", 1.0))
    raise ConfigError("needs --jet or --field")


def cmd_expansion(cfg: dict, rep: Report) -> None:
    from . import expansion as ex

    p = params_from(cfg)
    field_, jet, gam = _jet_gamma(cfg, p.n)
    if jet.n != p.n:
        p = params_from({**cfg, "n": jet.n})
    term = cfg.get("term", "all")
    terms = ["I2", "I3", "I5", "I1prime", "I4", "combined"] if term == "all" else [term]
    known = {"I2", "I3", "I5", "I1prime", "I4", "combined"}
    if not set(terms) <= known:
        raise ConfigError(f"term must be one of {sorted(known)} or all")
    lam = float(cfg.get("lambda", 1.0))
    deltas = tuple(cfg.get("deltas", ex.DEFAULT_DELTAS))
    tol = cfg.get("tol", 0.03)
    order_tol = cfg.get("order_tol", 0.2)
    needs_v = bool({"I4", "combined"} & set(terms))
    prof = solve_reduced_bvp(p, jet.h) if needs_v else None
    model = ex.ExpansionModel(p, jet, prof)
    fits = []
    for t in terms:
        if t == "I2":
            f = ex.verify_I2(p, jet, deltas, model=model)
        elif t == "I3":
            f = ex.verify_I3(p, jet, gam, deltas, lam, model=model)
        elif t == "I5":
            f = ex.verify_I5(p, jet, deltas, model=model)
        elif t == "I1prime":
            f = ex.verify_I1prime(p, jet, deltas, model=model)
        elif t == "I4":
            f = ex.verify_I4_and_cross(p, jet, prof, deltas, model=model)
        else:
            if field_ is None:
                from .geometry import BoundaryField

                field_ = BoundaryField(p.n, [0], np.zeros((1, 1)), np.array([gam]), [jet], (1,), False)
            eps = tuple(cfg.get("deltas", (0.1, 0.05, 0.025)))
            f = ex.combined_expansion_fit(p, field_, lam, eps, cfg.get("q"), prof, model=model)
        fits.append(f)
        if f.predicted_coeff != 0 and np.isfinite(f.predicted_coeff):
            rep.check(f"{f.term_id}_coeff", f.rel_err <= tol, f.rel_err, tol)
        if abs(f.predicted_coeff) > 0 and np.isfinite(f.fitted_order):
            rep.check(f"{f.term_id}_order", f.order_error <= order_tol, f.fitted_order, order_tol)
    rep.result = {"fits": [f.to_dict() for f in fits]}
    rows = list(csv.reader(io.StringIO(ex.termfits_to_csv(fits))))
    rep.table = (rows[0], rows[1:])


def cmd_remainder(cfg: dict, rep: Report) -> None:
    from . import expansion as ex

    p = params_from(cfg)
    _, jet, _ = _jet_gamma(cfg, p.n)
    if jet.n != p.n:
        p = params_from({**cfg, "n": jet.n})
    prof = solve_reduced_bvp(p, jet.h)
    lam = float(cfg.get("lambda", 1.0))
    eps = tuple(cfg.get("eps", ex.REMAINDER_EPS))
    f = ex.remainder_scaling(p, jet, prof, eps, lam)
    tol = cfg.get("slope_tol", 0.1)
    rep.result = f.to_dict()
    rep.check("slope", abs(f.fitted_order - 2.0) <= tol, f.fitted_order, tol)
    rep.check("monotone", f.extra["monotone"])
    rows = list(csv.reader(io.StringIO(ex.termfits_to_csv([f]))))
    rep.table = (rows[0], rows[1:])


COMMANDS = {
    "constants": cmd_constants,
    "correction": cmd_correction,
    "phi": cmd_phi,
    "reduce": cmd_reduce,
    "conjecture": cmd_conjecture,
    "expansion": cmd_expansion,
    "remainder": cmd_remainder,
}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; command-line flags override it")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--n", type=int)
    grid.add_argument("--n-r", dest="n_r", type=int)
    grid.add_argument("--n-t", dest="n_t", type=int)
    grid.add_argument("--r-max", dest="r_max", type=float)
    grid.add_argument("--t-max", dest="t_max", type=float)
    grid.add_argument("--grading", type=float)

    ap = argparse.ArgumentParser(prog="boundary-bubble", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("constants", parents=[common, grid], help="closed-form constants A, B, omega, I")

    s = sub.add_parser("correction", parents=[common, grid], help="solve the correction problem for one form")
    s.add_argument("--h", help="JSON file with the trace-free form")
    s.add_argument("--refine", action="store_true", default=None, help="also run a three-grid refinement study")
    s.add_argument("--ibp-tol", dest="ibp_tol", type=float)

    s = sub.add_parser("phi", parents=[common, grid], help="phi for a form or every point of a field")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--h")
    g.add_argument("--field")

    s = sub.add_parser("reduce", parents=[common, grid], help="critical point of the reduced functional")
    s.add_argument("--field")

    s = sub.add_parser("conjecture", parents=[common, grid], help="phi / |h|^2 over random forms")
    s.add_argument("--samples", type=int)
    s.add_argument("--tol", type=float)

    for name in ("expansion", "remainder"):
        s = sub.add_parser(name, parents=[common, grid])
        g = s.add_mutually_exclusive_group()
        g.add_argument("--jet")
        g.add_argument("--field")
        s.add_argument("--q", type=int)
        s.add_argument("--lambda", dest="lambda", type=float)
        if name == "expansion":
            s.add_argument("--term")
            s.add_argument("--gamma", type=float)
            s.add_argument("--deltas", type=float, nargs="+")
            s.add_argument("--tol", type=float)
        else:
            s.add_argument("--eps", type=float, nargs="+")
    return ap


def _setup_logging():
    level = os.environ.get("BOUNDARY_BUBBLE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    args = ap.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    try:
        cfg = load_config(args.config)
        cfg.update(flags)
        validate_config(args.command, cfg)
        fmt = cfg.get("format", "json")
        rep = Report(args.command, {k: v for k, v in cfg.items() if k not in ("out", "format")})
        COMMANDS[args.command](cfg, rep)
    except (ConfigError, ParameterError, GeometryError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except (SolverError, ScanError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    emit(rep.render(fmt), cfg.get("out"))
    for name, c in rep.checks.items():
        log.info("check %s: %s", name, "pass" if c["passed"] else "FAIL")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
