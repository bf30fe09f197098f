"""Command-line runner: configuration, orchestration and run manifests.

Every subcommand reads an optional JSON config (``--config``) with flat keys,
then applies command-line overrides.  A run manifest written by an earlier
run is also accepted as a config, which reproduces that run.

Exit codes: 0 ok, 2 invalid configuration, 3 non-convergence, 4 bracket error.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from contextlib import contextmanager
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .equilibrium import (EquilibriumParams, NonConvergenceError,
                          lay_initial_condition, solve_equilibrium)
from .grid import (SNAPSHOT_MAGIC, ContourGreen, DomainError, TimeLattice,
                   read_snapshot, write_csv, write_snapshot)
from .lindblad import KEYS, LindbladConfig, evolve_lindblad, unmap
from .observables import (BetaTrace, BracketError, compute_trace,
                          detect_crossings, threshold_scan)
from .quench import BathSpec, QuenchConfig, evolve_quench

log = logging.getLogger("sykquench")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_BRACKET = 0, 2, 3, 4
PAPER_SCALE = {"lambda_t": 50.0, "dt": 0.1}

_LATTICE = {"lambda_t": 25.0, "dt": 0.1}
_SOLVER = {"tol": 1e-9, "max_sweeps": 2000, "damping": 0.5,
           "method": "fixed_point", "stride": 5}

# Per-scenario schema: defaults for optional keys, and required keys.
SCHEMA = {
    "equilibrium": (
        {"j": 0.5, "q": 4, "omega_max": None, "n_omega": 4096, "mixing": 0.3,
         "tol": 1e-10, "max_iters": 5000, **_LATTICE, "out": "run"},
        ("beta",)),
    "quench": (
        {"j": 0.5, "q": 4, **_LATTICE, **_SOLVER, "out": "run"},
        ("beta_init", "baths")),
    "lindblad": (
        {"j": 0.5, "q": 4, **_LATTICE, **_SOLVER,
         "convention": "vectorized", "out": "run"},
        ("beta_init", "mu")),
    "mpc_compare": (
        {"deadband": None, "window": None, "out": None},
        ("runs",)),
    "threshold_scan": (
        {"j": 0.5, "n": 3, **_LATTICE, **_SOLVER, "method": "causal",
         "bisect_tol": 0.01, "deadband": None, "window": None, "out": "run"},
        ("beta_bath", "beta_pair", "v_range")),
    "snapshot_dump": ({"out": None}, ("input",)),
}


class ConfigError(ValueError):
    """Configuration does not validate against the schema."""


# ---------------------------------------------------------------- config

def parse_bath(text) -> dict:
    """``"beta=0.5,v=0.525,n=3"`` (or an equivalent dict) to a bath record."""
    if isinstance(text, dict):
        items = dict(text)
    else:
        items = {}
        for part in str(text).split(","):
            if "=" not in part:
                raise ConfigError(f"bad bath field {part!r}; use key=value")
            key, val = part.split("=", 1)
            items[key.strip()] = val.strip()
    unknown = set(items) - {"beta", "v", "n"}
    missing = {"beta", "v"} - set(items)
    if unknown or missing:
        raise ConfigError(f"bath {text!r}: unknown {sorted(unknown)}, "
                          f"missing {sorted(missing)}")
    try:
        return {"beta": float(items["beta"]), "v": float(items["v"]),
                "n": int(items.get("n", 3))}
    except ValueError as exc:
        raise ConfigError(f"bath {text!r}: {exc}") from None


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text() or "{}")
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "scenario" in data and "config" in data:
        data = data["config"]
    return data


def resolve(scenario: str, file_cfg: dict, overrides: dict) -> dict:
    """Merge defaults, file values and overrides; reject unknown keys."""
    defaults, required = SCHEMA[scenario]
    known = set(defaults) | set(required)
    unknown = sorted(set(file_cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = dict(defaults)
    cfg.update(file_cfg)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in required if cfg.get(k) in (None, [], "")]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    if "baths" in cfg:
        cfg["baths"] = [parse_bath(b) for b in cfg["baths"]]
        if not 1 <= len(cfg["baths"]) <= 2:
            raise ConfigError("give one or two baths")
    return cfg


def lattice_of(cfg) -> TimeLattice:
    return TimeLattice(float(cfg["dt"]), float(cfg["lambda_t"]))


def build_quench(cfg, lattice=None) -> QuenchConfig:
    lat = lattice or lattice_of(cfg)
    system = EquilibriumParams.for_lattice(lat, float(cfg["beta_init"]),
                                           float(cfg["j"]), q_body=int(cfg.get("q", 4)))
    baths = [BathSpec.thermal(lat, b["beta"], b["v"], b["n"], float(cfg["j"]))
             for b in cfg["baths"]]
    return QuenchConfig(system, baths, lat, fp_tol=float(cfg["tol"]),
                        fp_max_sweeps=int(cfg["max_sweeps"]),
                        damping=float(cfg["damping"]), method=cfg["method"])


def build_lindblad(cfg) -> LindbladConfig:
    return LindbladConfig(float(cfg["j"]), int(cfg["q"]), float(cfg["mu"]),
                          float(cfg["beta_init"]), lattice_of(cfg),
                          fp_tol=float(cfg["tol"]),
                          fp_max_sweeps=int(cfg["max_sweeps"]),
                          damping=float(cfg["damping"]), method=cfg["method"],
                          convention=cfg["convention"])


# -------------------------------------------------------------- manifest

class Timer:
    def __init__(self):
        self.phases = {}

    @contextmanager
    def phase(self, name):
        start = time.perf_counter()
        yield
        self.phases[name] = round(time.perf_counter() - start, 6)


def versions() -> dict:
    return {"sykquench": __version__, "snapshot": SNAPSHOT_MAGIC.decode(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out: Path, scenario: str, cfg: dict, timer: Timer) -> None:
    manifest = {"scenario": scenario, "config": cfg, "seedless": True,
                "versions": versions(), "timings": timer.phases}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------- scenarios

def run_equilibrium(cfg) -> int:
    out, timer = _outdir(cfg), Timer()
    params = EquilibriumParams(float(cfg["beta"]), float(cfg["j"]),
                               int(cfg["q"]), cfg["omega_max"],
                               int(cfg["n_omega"]), float(cfg["mixing"]),
                               float(cfg["tol"]), int(cfg["max_iters"]))
    with timer.phase("solve"):
        state = solve_equilibrium(params)
    with timer.phase("write"):
        rows = np.column_stack([state.omega, state.g_retarded_omega.real,
                                state.g_retarded_omega.imag, state.spectral])
        _write_table(out / "spectrum.csv", ["omega", "re_gr", "im_gr", "A"], rows)
        lat = lattice_of(cfg)
        lat_params = EquilibriumParams.for_lattice(
            lat, params.beta, params.coupling_j, q_body=params.q_body,
            mixing=params.mixing, tol=params.tol, max_iters=params.max_iters)
        write_snapshot(out / "green.kbsyk",
                       lay_initial_condition(solve_equilibrium(lat_params), lat))
    write_manifest(out, "equilibrium", cfg, timer)
    print(f"equilibrium: {state.iterations} iterations, sum rule "
          f"{state.sum_rule():.8f}, KMS residual {state.kms_residual():.2e}")
    return EXIT_OK


def run_quench(cfg) -> int:
    out, timer = _outdir(cfg), Timer()
    qcfg = build_quench(cfg)
    scenario = "two_bath" if len(qcfg.baths) == 2 else "quench"
    with timer.phase("evolve"):
        green = evolve_quench(qcfg)
    with timer.phase("observables"):
        trace = compute_trace(green, qcfg.coupling_j, int(cfg["stride"]))
    write_snapshot(out / "green.kbsyk", green)
    trace.write_csv(out / "trace.csv")
    write_manifest(out, scenario, cfg, timer)
    print(f"{scenario}: wrote {out}")
    return EXIT_OK


def run_lindblad(cfg) -> int:
    out, timer = _outdir(cfg), Timer()
    lcfg = build_lindblad(cfg)
    with timer.phase("evolve"):
        green = evolve_lindblad(lcfg)
    with timer.phase("observables"):
        trace = compute_trace(unmap(green), lcfg.coupling_j, int(cfg["stride"]))
    names = {"++": "pp", "+-": "pm", "-+": "mp", "--": "mm"}
    for key in KEYS:
        # each stored component is written through the G^> container
        write_snapshot(out / f"green_{names[key]}.kbsyk",
                       ContourGreen(green.lattice, green[key]))
    trace.write_csv(out / "trace.csv")
    write_manifest(out, "lindblad", cfg, timer)
    print(f"lindblad: wrote {out}")
    return EXIT_OK


def mpc_compare(run_dirs, window=None, deadband=None):
    """Pairwise crossing reports between the traces of several runs."""
    if len(run_dirs) < 2:
        raise ConfigError("mpc-compare needs at least two run directories")
    runs = []
    for d in map(Path, run_dirs):
        man = json.loads((d / "manifest.json").read_text())
        runs.append((d, man["config"], BetaTrace.read_csv(d / "trace.csv")))
    ref = runs[0][1]
    for d, c, _ in runs[1:]:
        if (float(c["dt"]), float(c["lambda_t"])) != \
                (float(ref["dt"]), float(ref["lambda_t"])):
            raise DomainError(f"{d} uses a different lattice")
    results = []
    for (da, _, ta), (db, _, tb) in combinations(runs, 2):
        results.append((str(da), str(db),
                        detect_crossings(ta, tb, window, deadband)))
    return results


def run_mpc_compare(cfg) -> int:
    results = mpc_compare(cfg["runs"], cfg["window"], cfg["deadband"])
    table = []
    for a, b, rep in results:
        print(f"{a}  {b}  crossings={rep.count}  parity={rep.parity}  "
              f"min_sep={rep.min_separation:.6g}")
        table.append({"a": a, "b": b, **rep.to_json()})
    text = json.dumps(table, indent=2) + "\n"
    if cfg["out"]:
        out = _outdir(cfg)
        (out / "crossings.json").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def run_threshold_scan(cfg) -> int:
    out, timer = _outdir(cfg), Timer()
    betas = cfg["beta_bath"]
    betas = betas if isinstance(betas, list) else [betas]
    v_lo, v_hi = map(float, cfg["v_range"])
    base = dict(cfg, beta_init=cfg["beta_pair"][0],
                baths=[{"beta": b, "v": v_hi, "n": int(cfg["n"])} for b in betas])
    qcfg = build_quench(base)
    with timer.phase("scan"):
        v = threshold_scan(qcfg, tuple(map(float, cfg["beta_pair"])),
                           (v_lo, v_hi), float(cfg["bisect_tol"]),
                           stride=int(cfg["stride"]), window=cfg["window"],
                           deadband=cfg["deadband"])
    (out / "threshold.json").write_text(
        json.dumps({"v_threshold": v, "bisect_tol": cfg["bisect_tol"]},
                   indent=2) + "\n")
    write_manifest(out, "threshold_scan", cfg, timer)
    print(f"threshold_scan: V_threshold = {v:.6g}")
    return EXIT_OK


def run_snapshot_dump(cfg) -> int:
    green = read_snapshot(cfg["input"])
    out = cfg["out"] or str(Path(cfg["input"]).with_suffix(".csv"))
    write_csv(out, green)
    print(f"snapshot-dump: wrote {out}")
    return EXIT_OK


RUNNERS = {
    "equilibrium": run_equilibrium, "quench": run_quench,
    "lindblad": run_lindblad, "mpc_compare": run_mpc_compare,
    "threshold_scan": run_threshold_scan, "snapshot_dump": run_snapshot_dump,
}


def _write_table(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


# --------------------------------------------------------------- parser

def _lattice_flags(p):
    p.add_argument("--lambda-t", dest="lambda_t", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--paper-scale", action="store_true",
                   help="lambda_t = 50, dt = 0.1 (1000 x 1000 lattice)")


def _solver_flags(p):
    p.add_argument("--tol", type=float)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    p.add_argument("--damping", type=float)
    p.add_argument("--method", choices=("fixed_point", "causal"))
    p.add_argument("--stride", type=int, help="trace sampling stride")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sykquench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config or run manifest")
        p.add_argument("--out", help="output directory")
        return p

    p = add("equilibrium", "thermal state from the Schwinger-Dyson loop")
    p.add_argument("--beta", type=float)
    p.add_argument("--j", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--omega-max", dest="omega_max", type=float)
    p.add_argument("--n-omega", dest="n_omega", type=int)
    p.add_argument("--mixing", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    _lattice_flags(p)

    p = add("quench", "couple to one or two thermal SYK baths at t = 0")
    p.add_argument("--j", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--beta-init", dest="beta_init", type=float)
    p.add_argument("--bath", dest="baths", action="append",
                   help='"beta=0.5,v=0.525,n=3"; repeat for a second bath')
    _lattice_flags(p)
    _solver_flags(p)

    p = add("lindblad", "switch on linear jump operators at t = 0")
    p.add_argument("--j", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--beta-init", dest="beta_init", type=float)
    p.add_argument("--convention", choices=("vectorized", "contour"))
    _lattice_flags(p)
    _solver_flags(p)

    p = add("mpc-compare", "pairwise Mpemba crossings between runs")
    p.add_argument("runs", nargs="*")
    p.add_argument("--deadband", type=float)
    p.add_argument("--window", type=float, nargs=2)

    p = add("threshold-scan", "bisect the coupling for the onset of crossings")
    p.add_argument("--j", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--beta-bath", dest="beta_bath", type=float, action="append")
    p.add_argument("--beta-pair", dest="beta_pair", type=float, nargs=2)
    p.add_argument("--v-range", dest="v_range", type=float, nargs=2)
    p.add_argument("--bisect-tol", dest="bisect_tol", type=float)
    p.add_argument("--deadband", type=float)
    p.add_argument("--window", type=float, nargs=2)
    _lattice_flags(p)
    _solver_flags(p)

    p = add("snapshot-dump", "convert a binary snapshot to CSV")
    p.add_argument("input", nargs="?")
    return parser


_NON_KEYS = {"command", "config", "verbose", "paper_scale"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    scenario = args.command.replace("-", "_")
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_KEYS}
    for key in ("runs", "window", "beta_pair", "v_range", "beta_bath"):
        if overrides.get(key) is not None:
            overrides[key] = list(overrides[key]) or None
    if getattr(args, "paper_scale", False):
        overrides.update({k: v for k, v in PAPER_SCALE.items()
                          if overrides.get(k) is None})
    try:
        cfg = resolve(scenario, load_config(args.config), overrides)
        return RUNNERS[scenario](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except BracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BRACKET


if __name__ == "__main__":
    sys.exit(main())
