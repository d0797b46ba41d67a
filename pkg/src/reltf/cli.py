"""Command-line entry point: ``reltf <command> --config FILE [options]``.

Configuration is a key-value text file, one ``key = value`` per line, ``#``
starts a comment.  Lists are comma separated, positions are ``x y z`` triples
separated by ``;``.  Every command writes its tables into ``--out`` and a
``manifest.json`` describing the run.

Exit codes: 0 success, 1 invariant violation, 2 configuration error,
3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cache import DEFAULT_DIR, ENV_VAR, DiskCache, atomic_write_text, content_hash
from .model import CRITICAL_COUPLING, ConfigError, NuclearConfiguration
from .spectral import (
    Exponential,
    Gaussian,
    MomentumGrid,
    NonConvergenceError,
    RadialOperatorSpec,
    RadialPotential,
    SquareWell,
    SupercriticalError,
    eigenvalues_below,
    position_grid,
)
from .tf import ShootingError

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3

COMMANDS = ("tf", "spectrum", "scott", "decompose", "check", "bounds")


# --- configuration ----------------------------------------------------------------

def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _positions(text):
    out = []
    for chunk in text.split(";"):
        vals = _floats(chunk)
        if len(vals) != 3:
            raise ValueError(f"position {chunk.strip()!r} is not an x y z triple")
        out.append(vals)
    return tuple(out)


def _optional_float(text):
    return None if text.strip().lower() in ("", "none", "neutral") else float(text)


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _words(text):
    return tuple(w for w in text.replace(",", " ").split())


# key -> (parser, default, help)
SCHEMA = {
    "charges": (_floats, (1.0,), "nuclear charges; each entry is one atom (a Z-sweep)"),
    "positions": (_positions, None, "one 'x y z' per charge, separated by ';'"),
    "q": (int, 2, "spin multiplicity"),
    "beta": (float, 0.0, "inverse speed of light; 0 is non-relativistic"),
    "N": (_optional_float, None, "electron number; none means neutral"),
    "tf_points": (int, 2000, "radial nodes of the TF solution"),
    "momentum_step": (float, 0.06, "log-step of momentum grids"),
    "position_step": (float, 0.02, "log-step of finite-difference grids"),
    "L_max": (int, 20, "largest angular momentum channel"),
    "tolerance": (float, 1e-6, "check: relative tolerance on inequality margins"),
    "eigen_tolerance": (float, 1e-5, "spectrum: eigenvalue convergence, relative to |lambda_0|"),
    "potential": (str, "coulomb", "spectrum: coulomb | tf | exp | gauss | well"),
    "depth": (float, 1.0, "spectrum: depth of exp/gauss/well potentials"),
    "width": (float, 1.0, "spectrum: length scale of exp/gauss/well potentials"),
    "kinetic": (str, "auto", "spectrum: auto | nonrelativistic | chandrasekhar"),
    "ell_values": (_ints, (0, 1, 2), "spectrum: channels to solve"),
    "cut": (float, -0.02, "spectrum: eigenvalues below this value (< 0; accumulation at 0)"),
    "t_values": (_floats, (0.0, 0.1, 0.2, 0.4, 0.55), "scott: Z beta ladder"),
    "scott_radii": (_floats, (20.0, 40.0, 80.0), "scott: cutoff radii for extrapolation"),
    "scott_L": (int, 12, "scott: channels with explicit relativistic shift"),
    "convention": (str, "atomic", "decompose: atomic | printed"),
    "checks": (_words, (), "check: subset of inequality names (default all)"),
    "refine": (int, 0, "check: number of grid halvings"),
    "drift": (_bool, False, "check: also run refine+1 and report constant drift"),
    "drift_limit": (float, 0.05, "check: largest allowed relative drift"),
    "epsilon_factors": (_floats, (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0),
                        "bounds: epsilon = factor * Z^(-2/3)"),
    "C0": (float, 1.0, "bounds: correlation constant of the mollified lower bound"),
    "scott_in_bounds": (_bool, True, "bounds: evaluate the Scott term for each record"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict
    text_hash: str
    source: str = ""

    def __getitem__(self, key):
        return self.values[key]

    def configurations(self) -> list[NuclearConfiguration]:
        """One atomic configuration per charge."""
        v = self.values
        pos = v["positions"] or tuple((0.0, 0.0, 0.0) for _ in v["charges"])
        return [NuclearConfiguration((z,), (p,), v["q"], v["beta"], v["N"])
                for z, p in zip(v["charges"], pos)]

    def params(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}


def parse_config(text: str, source: str = "") -> RunConfig:
    """Parse key-value text; every problem is collected before raising."""
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    problems = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        seen.add(key)
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            problems.append(f"line {lineno}: bad value for {key!r}: {exc}")
    problems += _validate(values)
    if problems:
        raise ConfigError(problems)
    return RunConfig(values, content_hash("config-v1", text), source)


def _validate(v) -> list[str]:
    problems = []
    if not v["charges"] or any(z <= 0 for z in v["charges"]):
        problems.append("charges: need at least one positive charge")
    if v["positions"] is not None and len(v["positions"]) != len(v["charges"]):
        problems.append(f"positions: {len(v['positions'])} triples for {len(v['charges'])} charges")
    if v["q"] < 1:
        problems.append("q: must be a positive integer")
    if v["beta"] < 0:
        problems.append("beta: must be >= 0")
    elif v["charges"] and max(v["charges"]) * v["beta"] >= CRITICAL_COUPLING:
        problems.append(f"beta: Z beta = {max(v['charges']) * v['beta']:.4g} is not below 2/pi")
    if v["N"] is not None and v["N"] <= 0:
        problems.append("N: must be positive")
    for key in ("tf_points", "L_max", "scott_L"):
        if v[key] < 1:
            problems.append(f"{key}: must be positive")
    for key in ("momentum_step", "position_step", "tolerance", "eigen_tolerance", "drift_limit", "C0"):
        if not v[key] > 0:
            problems.append(f"{key}: must be positive")
    if v["potential"] not in ("coulomb", "tf", "exp", "gauss", "well"):
        problems.append(f"potential: unknown kind {v['potential']!r}")
    if v["kinetic"] not in ("auto", "nonrelativistic", "chandrasekhar"):
        problems.append(f"kinetic: unknown kind {v['kinetic']!r}")
    if v["potential"] == "well" and (v["beta"] > 0 or v["kinetic"] == "chandrasekhar"):
        problems.append("potential: square wells are supported for the non-relativistic kinetic energy only")
    if v["cut"] >= 0:
        problems.append("cut: must be negative (levels accumulate at 0)")
    if any(ell < 0 for ell in v["ell_values"]):
        problems.append("ell_values: channels must be >= 0")
    if any(not 0 <= t < CRITICAL_COUPLING for t in v["t_values"]):
        problems.append("t_values: each t must satisfy 0 <= t < 2/pi")
    if len(v["scott_radii"]) < 2 or any(R <= 0 for R in v["scott_radii"]):
        problems.append("scott_radii: need at least two positive radii")
    if v["convention"] not in ("atomic", "printed"):
        problems.append(f"convention: unknown {v['convention']!r}")
    if v["refine"] < 0:
        problems.append("refine: must be >= 0")
    if not v["epsilon_factors"] or any(f <= 0 for f in v["epsilon_factors"]):
        problems.append("epsilon_factors: need positive factors")
    from .inequalities import corpus_manifest
    known = set(corpus_manifest()) - {"version"}
    bad = [c for c in v["checks"] if c not in known]
    if bad:
        problems.append(f"checks: unknown names {bad}; known {sorted(known)}")
    return problems


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config(text, str(path))


# --- outputs ----------------------------------------------------------------------

class InvariantViolation(RuntimeError):
    """A computed result breaks a property the run is required to satisfy."""


@dataclass
class RunManifest:
    command: str
    config_hash: str
    params: dict
    outputs: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    cache_hits: int = 0
    cache_misses: int = 0
    cache_corrupt: int = 0
    status: str = "ok"
    messages: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return repr(x)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


class _Run:
    """Per-invocation context: output directory, cache, manifest."""

    def __init__(self, command, cfg: RunConfig, out: Path, jobs: int, cache: DiskCache,
                 tol: float | None):
        self.cfg, self.out, self.jobs, self.cache = cfg, out, jobs, cache
        self.override = tol
        self.tol = cfg["tolerance"] if tol is None else tol
        self.manifest = RunManifest(command, cfg.text_hash, cfg.params())

    def write(self, name: str, text: str) -> None:
        path = self.out / name
        atomic_write_text(path, text)
        self.manifest.outputs.append(str(path))

    def timed(self, label, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.manifest.timing[label] = round(time.perf_counter() - t0, 6)


# --- commands ---------------------------------------------------------------------

def cmd_tf(run: _Run) -> int:
    """TF solution table per charge plus an energy record."""
    from .tf import poisson_residual, self_consistency_residual, solve_tf_atom, tf_energy_dual

    records = []
    for cfg in run.cfg.configurations():
        Z = cfg.Z[0]
        sol = run.timed(f"tf Z={Z:g}", solve_tf_atom, Z, cfg.N, cfg.q, n=run.cfg["tf_points"])
        rows = zip(sol.r, sol.rho, sol.W)
        run.write(f"tf_Z{Z:g}.csv", _csv(("r", "rho", "W"), rows))
        records.append({"Z": Z, "N": sol.N, "q": sol.q, "E_TF": sol.E_TF, "nu": sol.nu,
                        "E_TF_dual": tf_energy_dual(sol), "length": sol.length,
                        "self_consistency": self_consistency_residual(sol),
                        "poisson": poisson_residual(sol)})
    run.write("tf_energy.json", json.dumps(records, indent=1, sort_keys=True, default=_jsonable) + "\n")
    return EXIT_OK


def _spectrum_potential(v, Z):
    kind = v["potential"]
    if kind == "coulomb":
        return RadialPotential.coulomb(Z)
    if kind == "tf":
        from .tf import solve_tf_atom
        return RadialPotential.from_tf(solve_tf_atom(Z, v["N"], v["q"], n=v["tf_points"]))
    term = {"exp": lambda: Exponential(v["depth"], 1.0 / v["width"]),
            "gauss": lambda: Gaussian(v["depth"], v["width"]),
            "well": lambda: SquareWell(v["depth"], v["width"])}[kind]()
    return RadialPotential((term,), f"{kind}(a={v['depth']:g})")


def cmd_spectrum(run: _Run) -> int:
    """Eigenvalues below ``cut`` per charge and channel."""
    v = run.cfg.values
    rows = []
    for cfg in run.cfg.configurations():
        Z = cfg.Z[0]
        pot = _spectrum_potential(v, Z)
        kind = v["kinetic"]
        if kind == "auto":
            kind = "chandrasekhar" if cfg.beta > 0 else "nonrelativistic"
        if kind == "chandrasekhar":
            grid = MomentumGrid.default(Z, cfg.beta, v["momentum_step"])
        else:
            grid = position_grid(Z, v["cut"], v["position_step"])
        for ell in v["ell_values"]:
            spec = RadialOperatorSpec(kind, ell, pot, cfg.beta, cfg.q, grid)
            tol = v["eigen_tolerance"] if run.override is None else run.override
            s = run.timed(f"spectrum Z={Z:g} l={ell}", eigenvalues_below, spec, v["cut"],
                          tol, cache=run.cache)
            kin = s.kinetic_expectations() if len(s) else []
            for j, E in enumerate(s.eigenvalues):
                rows.append((Z, cfg.beta, kind, ell, j, E, kin[j], s.metadata["richardson_shift"]))
    run.write("spectrum.csv", _csv(("Z", "beta", "kinetic", "ell", "index", "eigenvalue", "kinetic_energy",
                                    "richardson_shift"), rows))
    return EXIT_OK


def cmd_scott(run: _Run) -> int:
    """S(t) over the t-ladder; fails if the ladder is not monotone."""
    from .corrections import scott_S

    v = run.cfg.values
    rows = []
    for t in v["t_values"]:
        est = run.timed(f"scott t={t:g}", scott_S, t, v["q"], v["scott_radii"], v["momentum_step"],
                        v["scott_L"], jobs=run.jobs, cache=run.cache)
        rows.append((t, est.value, est.error, est.trace_value, est.rtf_divergence_power))
    run.write("scott.csv", _csv(("t", "S", "error", "trace_value", "rtf_divergence_power"), rows))
    ordered = sorted(rows)
    for (t0, s0, e0, *_), (t1, s1, e1, *_) in zip(ordered, ordered[1:]):
        if s1 > s0 + e0 + e1:
            raise InvariantViolation(f"S increases between t={t0:g} and t={t1:g}")
    return EXIT_OK


def cmd_decompose(run: _Run) -> int:
    """Energy decomposition per charge: one CSV plus one JSON record each."""
    from .corrections import EnergyDecomposition, energy_decomposition, scott_S

    v = run.cfg.values
    rows = []
    scott_cache = {}
    for cfg in run.cfg.configurations():
        Z = cfg.Z[0]
        t = Z * cfg.beta
        if t not in scott_cache:
            scott_cache[t] = run.timed(f"scott t={t:g}", scott_S, t, cfg.q, v["scott_radii"],
                                       v["momentum_step"], v["scott_L"], jobs=run.jobs, cache=run.cache)
        dec = run.timed(f"decompose Z={Z:g}", energy_decomposition, cfg, v["convention"],
                        scott_cache[t], run.cache, run.jobs, v["tf_points"])
        run.write(f"decomposition_Z{Z:g}.json", dec.to_json() + "\n")
        rows.append(dec.csv_row())
    run.write("decomposition.csv", _csv(EnergyDecomposition.CSV_FIELDS, rows))
    return EXIT_OK


def cmd_check(run: _Run) -> int:
    """Inequality corpus; exit 0 iff every margin passes (and drift is small)."""
    from .inequalities import CORPUS_VERSION, constant_drift, fitted_constants, reports_to_csv, run_corpus

    v = run.cfg.values
    names = v["checks"] or None
    reports = run.timed("corpus", run_corpus, v["refine"], run.jobs, run.cache, names)
    run.write("inequalities.csv", reports_to_csv(reports))
    failed = [r for r in reports if not r.passes(run.tol)]
    summary = {"corpus_version": CORPUS_VERSION, "reports": len(reports), "failed": len(failed),
               "failures": [f"{r.name}/{r.instance}: margin {r.margin:.3e}" for r in failed],
               "tolerance": run.tol, "fitted_constants": fitted_constants(reports)}
    if v["drift"]:
        fine = run.timed("corpus refined", run_corpus, v["refine"] + 1, run.jobs, run.cache, names)
        run.write("inequalities_refined.csv", reports_to_csv(fine))
        drift = constant_drift(reports, fine)
        summary["drift"] = drift
        summary["drift_failures"] = sorted(k for k, d in drift.items() if d >= v["drift_limit"])
        failed += [r for r in fine if not r.passes(run.tol)]
    run.write("check_summary.json", json.dumps(summary, indent=1, sort_keys=True, default=_jsonable) + "\n")
    run.manifest.messages += summary["failures"] + [f"drift: {k}" for k in summary.get("drift_failures", [])]
    if failed or summary.get("drift_failures"):
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_bounds(run: _Run) -> int:
    """Sandwich harness: lower/upper bounds, exchange and the epsilon ladder per charge."""
    from .bounds import SandwichRecord, epsilon_ladder, upper_bound
    from .corrections import dirac_term, scott_S
    from .tf import solve_tf_atom

    v = run.cfg.values
    rows, ladder_rows, violations = [], [], []
    for cfg in run.cfg.configurations():
        Z = cfg.Z[0]
        sol = solve_tf_atom(Z, cfg.N, cfg.q, n=v["tf_points"])
        up = run.timed(f"upper Z={Z:g}", upper_bound, cfg, sol, jobs=run.jobs, cache=run.cache,
                       L_max=v["L_max"])
        ladder, best = run.timed(f"ladder Z={Z:g}", epsilon_ladder, cfg, v["epsilon_factors"], rho=sol,
                                 C0=v["C0"], jobs=run.jobs, cache=run.cache)
        for f, lb in zip(v["epsilon_factors"], ladder):
            ladder_rows.append((Z, cfg.beta, f, lb.epsilon, lb.value, lb.trace, lb.penalty))
        lower = ladder[best].value
        scott = (cfg.q * Z * Z * scott_S(Z * cfg.beta, cfg.q, jobs=run.jobs, cache=run.cache).value
                 if v["scott_in_bounds"] else math.nan)
        rec = SandwichRecord(Z, cfg.N, cfg.q, cfg.beta, lower, up.value, sol.E_TF, scott,
                             up.exchange, dirac_term(sol, "atomic"))
        rows.append(rec.csv_row())
        if lower > up.value:
            violations.append(f"Z={Z:g}: lower {lower:.6g} > upper {up.value:.6g}")
    run.write("sandwich.csv", _csv(SandwichRecord.CSV_FIELDS, rows))
    run.write("epsilon_ladder.csv", _csv(("Z", "beta", "factor", "epsilon", "lower", "trace", "penalty"),
                                         ladder_rows))
    if violations:
        raise InvariantViolation("; ".join(violations))
    return EXIT_OK


HANDLERS = {"tf": cmd_tf, "spectrum": cmd_spectrum, "scott": cmd_scott, "decompose": cmd_decompose,
            "check": cmd_check, "bounds": cmd_bounds}


# --- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:<16} {h} (default {d!r})" for k, (_, d, h) in SCHEMA.items())
    ap = argparse.ArgumentParser(prog="reltf", description=__doc__.split("\n\n")[0],
                                 epilog=f"configuration keys:\n{keys}",
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key-value configuration file")
    ap.add_argument("--out", default="reltf-out", help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="worker threads")
    ap.add_argument("--cache", default=None,
                    help=f"cache directory (default ${ENV_VAR} or {DEFAULT_DIR})")
    ap.add_argument("--tolerance", type=float, default=None,
                    help="overrides the margin tolerance (check) or eigenvalue tolerance (spectrum)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError(["--jobs must be >= 1"])
        if args.tolerance is not None and not args.tolerance > 0:
            raise ConfigError(["--tolerance must be positive"])
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"reltf: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cache = DiskCache(args.cache or os.environ.get(ENV_VAR) or DEFAULT_DIR)
    run = _Run(args.command, cfg, Path(args.out), args.jobs, cache, args.tolerance)
    t0 = time.perf_counter()
    try:
        code = HANDLERS[args.command](run)
    except (ConfigError, SupercriticalError) as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except InvariantViolation as exc:
        code, msg = EXIT_INVARIANT, str(exc)
    except (NonConvergenceError, ShootingError) as exc:
        code, msg = EXIT_NONCONVERGENCE, str(exc)
    else:
        msg = None
    if msg:
        run.manifest.messages.append(msg)
        print(f"reltf {args.command}: {msg}", file=sys.stderr)
    run.manifest.status = {EXIT_OK: "ok", EXIT_INVARIANT: "invariant violation",
                           EXIT_CONFIG: "configuration error",
                           EXIT_NONCONVERGENCE: "non-convergence"}[code]
    run.manifest.timing["total"] = round(time.perf_counter() - t0, 6)
    run.manifest.cache_hits = cache.hits
    run.manifest.cache_misses = cache.misses
    run.manifest.cache_corrupt = cache.corrupt
    atomic_write_text(run.out / "manifest.json", run.manifest.to_json() + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
