"""Command-line entry point.

Every run prints a JSON report, writes any requested CSV or JSON output and
a manifest next to it, and exits 0 when all requested checks pass, 1 on a
failed check or numerical error, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy

from . import __version__
from .bands import arc_diagnostics, band_structure, critical_g
from .chain import chain_summary, load_chain
from .duality import verify_chain
from .ensembles import EnsembleSpec, generate_chain, lyapunov_spectrum, souillard_check, thouless_check
from .errors import BlockTridError
from .exponents import (
    counting_function,
    exponents_direct,
    sum_positive_direct,
    sum_positive_phase_average,
    track_loops,
)

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "realization": 0,
    "method": "direct",
    "points": 128,
    "sign": "+",
    "branch": 0,
    "check": "lyapunov",
    "tol": None,
    "phase_tol": 1e-7,
}

# per-subcommand acceptance tolerances when --tol is not given
CHECK_TOLERANCE = {
    "exponents": 1e-6,
    "arcs": 1e-6,
    "criticalg": 1e-5,
    "ensemble": 0.02,
}

EPILOG = """\
Settings come from three places, in decreasing priority: command-line
flags, the JSON object given with --config (keys are the long flag names
with dashes replaced by underscores), and built-in defaults.
BLOCKTRID_THREADS caps the number of worker threads.
"""


class UsageError(Exception):
    pass


# -- formatting ---------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (complex, np.complexfloating)):
        return [_jsonable(x.real), _jsonable(x.imag)]
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.16e" % float(v)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())


def parse_complex(text) -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    parts = str(text).split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise UsageError(f"cannot read a complex number from {text!r}; use re,im")


def parse_window(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        try:
            lo, hi = (float(p) for p in str(text).split(","))
        except ValueError:
            raise UsageError(f"window must be lo,hi, got {text!r}") from None
    return float(lo), float(hi)


# -- argument handling --------------------------------------------------------------

def _source_options(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--chain", help="chain JSON file with explicit blocks")
    g.add_argument("--spec", help="ensemble spec JSON; one realization is used unless stated otherwise")
    p.add_argument("--realization", type=int, help="realization index for --spec (default 0)")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--out", help="output file")
    p.add_argument("--manifest", help="manifest path (default: next to --out, else ./blocktrid-<command>.manifest.json)")
    p.add_argument("--tol", type=float, help="acceptance tolerance override")
    p.add_argument("--seed", type=int, help="seed for randomly drawn test inputs (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocktrid",
        description="Spectral duality checks for block-tridiagonal chains.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"blocktrid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run every identity check on a chain", epilog=EPILOG)
    _source_options(p)
    _common(p)
    p.add_argument("--energy", action="append", help="energy re,im (repeatable; default three random energies)")
    p.add_argument("--z", action="append", help="boundary parameter re,im (repeatable)")

    p = sub.add_parser("exponents", help="exponents of T(E)", epilog=EPILOG)
    _source_options(p)
    _common(p)
    p.add_argument("--energy", required=False, help="energy re,im")
    p.add_argument("--method", choices=["direct", "phase"], help="direct diagonalization or phase-average quadrature")
    p.add_argument("--phase-tol", type=float, help="quadrature convergence tolerance (default 1e-7)")

    p = sub.add_parser("count", help="number of exponents below xi via loop winding", epilog=EPILOG)
    _source_options(p)
    _common(p)
    p.add_argument("--energy", help="energy re,im")
    p.add_argument("--xi", type=float, help="exponent threshold")
    p.add_argument("--points", type=int, help="phase samples per loop (default 128)")
    p.add_argument("--emit-loops", help="CSV of loop points: loop_index, phi, re_E, im_E")

    p = sub.add_parser("bands", help="band structure from discriminants", epilog=EPILOG)
    _source_options(p)
    _common(p)
    p.add_argument("--window", help="energy window lo,hi (default: spectrum bound)")
    p.add_argument("--grid", type=int, help="initial energy grid size (default 2048)")
    p.add_argument("--phi-points", type=int, help="Bloch phases in [0, pi] (default 33)")

    p = sub.add_parser("arcs", help="eigenvalues of H(+-exp(Ng)) with duality residuals", epilog=EPILOG)
    _source_options(p)
    _common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--g", type=float, help="growth rate g, z = sign * exp(N g)")
    g.add_argument("--z", type=float, help="|z|; sets g = ln(z)/N")
    p.add_argument("--sign", choices=["+", "-"], help="boundary sign (default +)")

    p = sub.add_parser("criticalg", help="critical g of a discriminant branch", epilog=EPILOG)
    _source_options(p)
    _common(p)
    p.add_argument("--branch", type=int, help="branch index a (default 0)")
    p.add_argument("--window", help="energy window lo,hi")

    p = sub.add_parser("ensemble", help="ensemble Lyapunov exponents and density-of-states checks", epilog=EPILOG)
    _common(p)
    p.add_argument("--spec", help="ensemble spec JSON")
    p.add_argument("--energy", action="append", help="energy re,im (repeatable)")
    p.add_argument("--check", choices=["lyapunov", "thouless", "souillard"], help="default lyapunov")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults."""
    config: dict = {}
    if getattr(args, "config", None):
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
    known = set(vars(args))
    unknown = set(config) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, value in vars(args).items():
        if value is None and key in config:
            value = config[key]
        if value is None and key in DEFAULTS:
            value = DEFAULTS[key]
        out[key] = value
    if out.get("chain") and out.get("spec") and out["command"] != "ensemble":
        if args.chain is None and args.spec is None:
            raise UsageError("config gives both chain and spec")
        # a flag beats the config entry for the other source
        if args.chain is not None:
            out["spec"] = None
        else:
            out["chain"] = None
    if out.get("tol") is not None and not out["tol"] > 0:
        raise UsageError("tolerances must be positive")
    return out


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _chain(cfg):
    if cfg.get("chain"):
        data = _read_json(cfg["chain"])
        return load_chain(data), {"chain_file": cfg["chain"]}
    if cfg.get("spec"):
        data = _read_json(cfg["spec"])
        spec = EnsembleSpec.from_dict(data)
        return generate_chain(spec, cfg["realization"]), {"spec": spec.to_dict(), "realization": cfg["realization"]}
    raise UsageError("give exactly one of --chain or --spec")


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _tol(cfg, command):
    return cfg["tol"] if cfg.get("tol") is not None else CHECK_TOLERANCE.get(command)


# -- subcommands -------------------------------------------------------------------

def cmd_verify(cfg, chain):
    energies = [parse_complex(e) for e in cfg["energy"]] if cfg.get("energy") else None
    zs = [parse_complex(z) for z in cfg["z"]] if cfg.get("z") else None
    if energies is not None and zs is not None and len(energies) != len(zs):
        raise UsageError("--energy and --z must be given the same number of times")
    if (energies is None) != (zs is None):
        raise UsageError("give --energy and --z together, or neither")
    reports = verify_chain(chain, energies, zs, seed=cfg["seed"])
    result = [r.to_dict() for r in reports]
    passed = all(r.passed for r in reports)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(dumps(result))
    return result, passed, {"identity": "per report"}


def cmd_exponents(cfg, chain):
    _require(cfg, "energy")
    E = parse_complex(cfg["energy"])
    spec = exponents_direct(chain, E)
    report = {
        "E": E,
        "exponents": spec.exponents,
        "phases": spec.phases,
        "source": spec.source,
        "sum_positive": sum_positive_direct(spec),
        "method": cfg["method"],
    }
    passed = True
    tol = None
    if cfg["method"] == "phase":
        tol = _tol(cfg, "exponents")
        value = sum_positive_phase_average(chain, E, tol=cfg["phase_tol"])
        report["sum_positive_quadrature"] = value
        report["difference"] = abs(value - report["sum_positive"])
        passed = report["difference"] <= tol
    report["pass"] = passed
    if cfg.get("out"):
        Path(cfg["out"]).write_text(dumps(report))
    return report, passed, {"agreement": tol, "quadrature": cfg["phase_tol"]}


def cmd_count(cfg, chain):
    _require(cfg, "energy", "xi")
    E = parse_complex(cfg["energy"])
    res = counting_function(chain, E, cfg["xi"], points=cfg["points"])
    report = {
        "E": E,
        "xi": cfg["xi"],
        "count": res.count,
        "winding_total": res.winding_total,
        "windings": res.windings,
        "direct_count": res.direct_count,
        "evaluated_at": res.evaluated_at,
        "min_distance": res.min_distance,
        "pass": bool(res.agrees),
    }
    if cfg.get("emit_loops"):
        loops = track_loops(chain, cfg["xi"], points=cfg["points"])
        rows = [(k, p, v.real, v.imag) for k, loop in enumerate(loops) for p, v in zip(loop.phi, loop.values)]
        write_csv(Path(cfg["emit_loops"]), ["loop_index", "phi", "re_E", "im_E"], rows)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(dumps(report))
    return report, bool(res.agrees), {}


def cmd_bands(cfg, chain):
    grid = None
    if cfg.get("window") is not None or cfg.get("grid") is not None:
        r = chain.spectral_radius_bound()
        lo, hi = parse_window(cfg["window"]) if cfg.get("window") is not None else (-1.05 * r, 1.05 * r)
        grid = np.linspace(lo, hi, cfg.get("grid") or 2048)
    phi_grid = np.linspace(0, np.pi, cfg["phi_points"]) if cfg.get("phi_points") else None
    bs = band_structure(chain, grid, phi_grid)
    nm = chain.N * chain.M
    report = {
        "crossings": bs.crossings,
        "total_crossings": bs.total_crossings,
        "expected": nm,
        "strip_extrema": bs.strip_extrema,
        "touching": bs.touching,
        "branch_points": bs.branch_points,
        "max_edge_residual": bs.max_edge_residual,
        "bands": [
            {"a": b.a, "j": b.j, "E_min": b.E_min, "E_max": b.E_max, "edge_types": list(b.edge_types)}
            for b in bs.bands
        ],
    }
    passed = bs.total_crossings == nm
    report["pass"] = passed
    if cfg.get("out"):
        rows = [(b.a, b.j, p, e) for b in bs.bands for p, e in zip(b.phi, b.energies)]
        write_csv(Path(cfg["out"]), ["a", "j", "phi", "E"], rows)
    return report, passed, {"edge": 1e-8}


def cmd_arcs(cfg, chain):
    if cfg.get("g") is None and cfg.get("z") is None:
        raise UsageError("give --g or --z")
    sign = 1 if cfg["sign"] in ("+", 1, "1") else -1
    g = cfg["g"] if cfg.get("g") is not None else math.log(cfg["z"]) / chain.N
    tol = _tol(cfg, "arcs")
    arc = arc_diagnostics(chain, g, sign)
    passed = arc.max_duality_residual <= tol
    report = {
        "g": g,
        "z": arc.z,
        "sign": sign,
        "eigenvalue_count": len(arc.eigenvalues),
        "complex_arc": arc.n_complex,
        "real_wing": len(arc.eigenvalues) - arc.n_complex,
        "max_duality_residual": arc.max_duality_residual,
        "pass": passed,
    }
    if cfg.get("out"):
        rows = zip(arc.eigenvalues.real, arc.eigenvalues.imag, arc.classification, arc.duality_residual)
        write_csv(Path(cfg["out"]), ["re_E", "im_E", "class", "duality_residual"], rows)
    return report, passed, {"duality_residual": tol, "reality": arc.reality_tolerance}


def cmd_criticalg(cfg, chain):
    window = parse_window(cfg["window"]) if cfg.get("window") is not None else None
    res = critical_g(chain, cfg["branch"], window)
    tol = _tol(cfg, "criticalg")
    passed = res.mismatch is not None and res.mismatch <= tol
    report = {
        "branch": res.branch,
        "E": res.E,
        "g": res.g,
        "sign": res.sign,
        "delta": res.delta,
        "g_bisection": res.g_bisection,
        "E_collision": res.E_collision,
        "mismatch": res.mismatch,
        "pass": passed,
    }
    if cfg.get("out"):
        Path(cfg["out"]).write_text(dumps(report))
    return report, passed, {"mismatch": tol}


def cmd_ensemble(cfg, _chain_unused=None):
    _require(cfg, "spec", "energy")
    spec = EnsembleSpec.from_dict(_read_json(cfg["spec"]))
    energies = [parse_complex(e) for e in cfg["energy"]]
    tolerances = {}
    if cfg["check"] == "lyapunov":
        estimates = [lyapunov_spectrum(spec, E) for E in energies]
        report = {
            "check": "lyapunov",
            "results": [
                {"E": est.energy, "gamma": est.gamma, "stderr": est.stderr, "cadence": est.cadence}
                for est in estimates
            ],
            "pass": True,
        }
        passed = True
    else:
        fn = thouless_check if cfg["check"] == "thouless" else souillard_check
        res = fn(spec, energies)
        tol = _tol(cfg, "ensemble")
        tolerances["deviation"] = tol
        passed = res.max_deviation <= tol
        report = {"check": cfg["check"], **res.to_dict(), "pass": passed}
    report["realizations"] = spec.realizations
    if cfg.get("out"):
        Path(cfg["out"]).write_text(dumps(report))
    return report, passed, tolerances


COMMANDS = {
    "verify": cmd_verify,
    "exponents": cmd_exponents,
    "count": cmd_count,
    "bands": cmd_bands,
    "arcs": cmd_arcs,
    "criticalg": cmd_criticalg,
    "ensemble": cmd_ensemble,
}


# -- manifest -------------------------------------------------------------------------

def _manifest_path(cfg) -> Path:
    if cfg.get("manifest"):
        return Path(cfg["manifest"])
    if cfg.get("out"):
        return Path(str(cfg["out"]) + ".manifest.json")
    return Path(f"blocktrid-{cfg['command']}.manifest.json")


def manifest(cfg, inputs, tolerances, status, outputs) -> dict:
    payload = dumps(inputs).encode()
    return {
        "command": cfg["command"],
        "config": {k: v for k, v in sorted(cfg.items()) if k not in ("command",)},
        "inputs": inputs,
        "inputs_sha256": hashlib.sha256(payload).hexdigest(),
        "seeds": {"seed": cfg.get("seed"), "realization": cfg.get("realization")},
        "tolerances": tolerances,
        "versions": {
            "blocktrid": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": outputs,
        "exit_status": status,
    }


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg: dict = {}
    inputs: dict = {}
    try:
        cfg = resolve(args)
        if cfg["command"] == "ensemble":
            spec_data = _read_json(cfg["spec"]) if cfg.get("spec") else None
            inputs = {"spec": EnsembleSpec.from_dict(spec_data).to_dict() if spec_data else None}
            chain = None
        else:
            chain, inputs = _chain(cfg)
            inputs["chain"] = chain_summary(chain)
        report, passed, tolerances = COMMANDS[cfg["command"]](cfg, chain)
        status = 0 if passed else 1
    except UsageError as exc:
        print(f"blocktrid: error: {exc}", file=sys.stderr)
        return 2
    except (BlockTridError, ValueError) as exc:
        name = getattr(exc, "name", type(exc).__name__)
        report = {"error": name, "message": str(exc), "pass": False}
        tolerances, status = {}, 1
        if cfg.get("out") and not str(cfg["out"]).endswith(".csv"):
            Path(cfg["out"]).write_text(dumps(report))
    outputs = [str(p) for p in (cfg.get("out"), cfg.get("emit_loops")) if p]
    mpath = _manifest_path(cfg)
    mpath.write_text(dumps(manifest(cfg, inputs, tolerances, status, outputs)))
    stdout.write(dumps(report))
    return status


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
