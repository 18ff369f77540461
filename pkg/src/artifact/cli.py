"""Command-line front end: ``run``, ``sweep`` and ``validate`` on a config file.

Config files are line oriented::

    # comment
    [scenario]
    name = vtol
    amplitude = 1.0

    [gains]
    g = 2

    [sweep]
    parameter = g
    values = 2, 4

Sections are ``scenario``, ``gains``, ``run``, ``initial`` and ``sweep``.
Anything not given takes the scenario default; ``resolved.cfg`` records the
fully resolved configuration and parses back to the same values.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .numerics import Polynomial, is_hurwitz
from .regulator import GainSet
from .scenarios import LinearBenchmark, VtolParams, VtolScenario
from .simulation import SWEEP_PARAMETERS, RunRecord, simulate, summarize, theorem1_ratio

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2

# keys shared by every scenario, with their types
_COMMON_KEYS = {
    "d": int, "lam": float, "gamma_scale": float, "m1": float, "m2": float,
    "psidot_factor": float, "sigma_factor": float, "kappa_per_g": float, "ell_per_kappa": float,
    "h": tuple, "c": tuple,
}
_SCENARIO_KEYS = {
    "vtol": {"varrho": float, "B": float, "M": float, "amplitude": float, "omega0": float, "phase": float,
             "L": float, "v_amplitude": float, "v_decay": float},
    "linear": {"omega0": float, "amplitude": float, "phase": float},
}
_RUN_KEYS = {"tfinal": float, "dt": float, "record_dt": float, "tail_fraction": float, "out": str}
_GAIN_KEYS = ("rho", "g", "kappa", "ell")
_SECTIONS = ("scenario", "gains", "run", "initial", "sweep")


@dataclass
class RunConfig:
    scenario: str = "vtol"
    scenario_params: dict = field(default_factory=dict)
    gains: Optional[GainSet] = None
    tfinal: float = 100.0
    dt: Optional[float] = None
    record_dt: float = 0.01
    tail_fraction: float = 0.2
    out: str = "out"
    offset: Optional[tuple] = None
    sweep: Optional[tuple] = None  # (parameter, values)

    def build_scenario(self):
        return build_scenario(self.scenario, self.scenario_params)


def build_scenario(name: str, params: dict):
    p = dict(params)
    common = {}
    for key in list(p):
        if key in _COMMON_KEYS:
            value = p.pop(key)
            common[{"h": "h_coeffs", "c": "chain_coeffs"}.get(key, key)] = value
    if name == "vtol":
        return VtolScenario(params=VtolParams(**p), **common)
    if name == "linear":
        if "omega0" in p:
            p["omega0_"] = p.pop("omega0")
        return LinearBenchmark(**p, **common)
    raise ValueError(f"unknown scenario {name!r}")


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(kind, raw: str, key: str, line: int):
    try:
        if kind is tuple:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: expected a {kind.__name__ if kind is not tuple else 'list of numbers'}, "
                          f"got {raw!r}", line) from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; every error names its line."""
    entries = {s: {} for s in _SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in entries:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in entries[section]:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        entries[section][key] = (value, lineno)

    cfg = RunConfig()
    sc = entries["scenario"]
    if "name" in sc:
        cfg.scenario = sc["name"][0]
        if cfg.scenario not in _SCENARIO_KEYS:
            raise ConfigError(f"unknown scenario {cfg.scenario!r}", sc["name"][1])
    allowed = dict(_COMMON_KEYS, **_SCENARIO_KEYS[cfg.scenario])
    params = {}
    for key, (value, lineno) in sc.items():
        if key == "name":
            continue
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [scenario]", lineno)
        params[key] = _convert(allowed[key], value, key, lineno)
        if key in ("h", "c") and not is_hurwitz(Polynomial(tuple(reversed(params[key])) if key == "h"
                                                           else params[key])):
            raise ConfigError(f"{key} coefficients {params[key]} do not give a Hurwitz polynomial", lineno)
    cfg.scenario_params = params
    header_line = sc["name"][1] if "name" in sc else None
    try:
        scenario = cfg.build_scenario()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), header_line) from None

    gains = {k: getattr(scenario.default_gains, k) for k in _GAIN_KEYS}
    for key, (value, lineno) in entries["gains"].items():
        if key not in _GAIN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [gains]", lineno)
        gains[key] = _convert(float, value, key, lineno)
        if not gains[key] > 1:
            raise ConfigError(f"{key} must be > 1", lineno)
    cfg.gains = GainSet(**gains)

    for key, (value, lineno) in entries["run"].items():
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [run]", lineno)
        v = _convert(_RUN_KEYS[key], value, key, lineno)
        if key != "out" and not v > 0:
            raise ConfigError(f"{key} must be positive", lineno)
        setattr(cfg, key, v)
    if not cfg.tail_fraction <= 1:
        raise ConfigError("tail_fraction must be in (0, 1]", entries["run"]["tail_fraction"][1])

    for key, (value, lineno) in entries["initial"].items():
        if key != "offset":
            raise ConfigError(f"unknown key {key!r} in [initial]", lineno)
        off = _convert(tuple, value, key, lineno)
        if len(off) != scenario.plant.structure.nx:
            raise ConfigError(f"offset needs {scenario.plant.structure.nx} entries", lineno)
        cfg.offset = off

    sw = entries["sweep"]
    for key, (_, lineno) in sw.items():
        if key not in ("parameter", "values"):
            raise ConfigError(f"unknown key {key!r} in [sweep]", lineno)
    if sw:
        if "parameter" not in sw or "values" not in sw:
            raise ConfigError("[sweep] needs both parameter and values", next(iter(sw.values()))[1])
        param, lineno = sw["parameter"]
        if param not in SWEEP_PARAMETERS:
            raise ConfigError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMETERS)}", lineno)
        values = _convert(tuple, sw["values"][0], "values", sw["values"][1])
        if not values or any(not v > 0 for v in values):
            raise ConfigError("sweep values must be positive", sw["values"][1])
        if param in _GAIN_KEYS and any(not v > 1 for v in values):
            raise ConfigError(f"{param} must be > 1", sw["values"][1])
        cfg.sweep = (param, values)

    # full regulator construction catches the remaining invariants
    try:
        scenario.regulator(cfg.gains)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), header_line) from None
    return cfg


def emit_config(cfg: RunConfig) -> str:
    """Fully resolved configuration text; ``parse_config`` inverts it."""
    scenario = cfg.build_scenario()
    lines = ["[scenario]", f"name = {cfg.scenario}"]
    resolved = resolved_scenario_params(cfg.scenario, scenario)
    resolved.update(cfg.scenario_params)
    for key in sorted(resolved):
        lines.append(f"{key} = {_fmt(resolved[key])}")
    lines += ["", "[gains]"]
    lines += [f"{k} = {_fmt(float(getattr(cfg.gains, k)))}" for k in _GAIN_KEYS]
    lines += ["", "[run]"]
    lines.append(f"tfinal = {_fmt(float(cfg.tfinal))}")
    if cfg.dt is not None:
        lines.append(f"dt = {_fmt(float(cfg.dt))}")
    lines.append(f"record_dt = {_fmt(float(cfg.record_dt))}")
    lines.append(f"tail_fraction = {_fmt(float(cfg.tail_fraction))}")
    lines.append(f"out = {cfg.out}")
    offset = cfg.offset if cfg.offset is not None else tuple(float(v) for v in scenario.x_offset)
    lines += ["", "[initial]", f"offset = {_fmt(tuple(float(v) for v in offset))}"]
    if cfg.sweep is not None:
        lines += ["", "[sweep]", f"parameter = {cfg.sweep[0]}",
                  f"values = {_fmt(tuple(float(v) for v in cfg.sweep[1]))}"]
    return "\n".join(lines) + "\n"


def resolved_scenario_params(name: str, scenario) -> dict:
    out = {}
    for key, kind in _COMMON_KEYS.items():
        if key in ("h", "c"):
            coeffs = scenario.h() if key == "h" else scenario.c_coeffs()[0]
            out[key] = tuple(float(v) for v in coeffs)
        else:
            out[key] = kind(getattr(scenario, key))
    for key in _SCENARIO_KEYS[name]:
        if name == "vtol":
            out[key] = float(getattr(scenario.params, key))
        else:
            out[key] = float(scenario.omega0 if key == "omega0" else getattr(scenario, key))
    return out


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def csv_header(record: RunRecord) -> list:
    ne = record.e.shape[1]
    nu = record.u.shape[1]
    nt = record.theta.shape[1]
    neta = record.eta.shape[1]
    cols = ["t"] + [f"e_{i}" for i in range(1, ne + 1)] + ["norm_e"]
    cols += [f"u_{i}" for i in range(1, nu + 1)]
    cols += [f"theta_{i}" for i in range(1, nt + 1)]
    cols += [f"eps_star_{i}" for i in range(1, ne + 1)]
    cols += [f"eta_{i}" for i in range(1, neta + 1)]
    cols += ["diag_eq8_residual", "diag_minEig_OmegaL", "diag_sigma_norm"]
    return cols


def csv_rows(record: RunRecord):
    norm_e = np.linalg.norm(record.e, axis=1)
    diag = record.diagnostics
    for k in range(len(record)):
        vals = [record.times[k], *record.e[k], norm_e[k], *record.u[k], *record.theta[k],
                *record.eps_star[k], *record.eta[k], diag["eq8_residual"][k],
                diag["minEig_OmegaL"][k], diag["sigma_norm"][k]]
        yield ",".join(f"{float(v):.17g}" for v in vals)


def write_csv(record: RunRecord, path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(csv_header(record)) + "\n")
        for row in csv_rows(record):
            fh.write(row + "\n")


def read_csv(path) -> dict:
    """Columns of a run CSV as float arrays, keyed by header name."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def tail_metrics_from_columns(cols: dict, fraction: float) -> dict:
    """Tail sups of ``|e|`` and ``|eps*|`` from CSV columns, same window as the simulator."""
    t = cols["t"]
    start = t[-1] - fraction * (t[-1] - t[0])
    mask = t >= start - 1e-12 * max(1.0, abs(start))
    e = cols["norm_e"][mask]
    eps_names = sorted(k for k in cols if k.startswith("eps_star_"))
    eps = np.sqrt(sum(cols[k][mask] ** 2 for k in eps_names))
    return {"e_tail": float(np.max(e)), "eps_tail": float(np.max(eps))}


def _summary_line(k, label, value, record, fraction) -> str:
    if record.diverged:
        return f"{k}\t{label}\t{_fmt(value)}\tdiverged\tt={_fmt(record.divergence_time)}"
    s = summarize(record, value, fraction, keep_record=False)
    r = theorem1_ratio(record, fraction)
    ratio = "asymptotic" if r.asymptotic else _fmt(r.ratio)
    theta = " ".join(_fmt(float(v)) for v in s.theta_tail_mean)
    return f"{k}\t{label}\t{_fmt(value)}\tok\t{_fmt(s.e_tail)}\t{_fmt(s.eps_tail)}\t{ratio}\t{theta}"


def execute(cfg: RunConfig, out_dir: Path, overwrite: bool, use_sweep: bool) -> list:
    """Run the configured simulations and write all outputs; returns the records."""
    scenario = cfg.build_scenario()
    if use_sweep:
        param, values = cfg.sweep
    else:
        param, values = "none", (float("nan"),)
    out_dir.mkdir(parents=True, exist_ok=True)
    targets = [out_dir / f"run_{k}.csv" for k in range(len(values))]
    targets += [out_dir / "summary.txt", out_dir / "resolved.cfg"]
    existing = [p for p in targets if p.exists()]
    if existing and not overwrite:
        raise FileExistsError(f"{existing[0]} exists; pass --overwrite to replace it")

    from .simulation import _variant

    records = []
    lines = ["# k\tparameter\tvalue\tstatus\te_tail\teps_tail\ttheorem1_ratio\ttheta_tail_mean",
             f"# scenario={cfg.scenario} tail_fraction={_fmt(cfg.tail_fraction)}"]
    for k, v in enumerate(values):
        if use_sweep:
            scen, gains = _variant(scenario, cfg.gains, param, v)
        else:
            scen, gains = scenario, cfg.gains
        init = None
        if cfg.offset is not None:
            from .simulation import ClosedLoop, initial_state

            init = initial_state(scen, ClosedLoop(scen, gains), cfg.offset)
        rec = simulate(scen, gains, initial=init, tfinal=cfg.tfinal, dt=cfg.dt, record_dt=cfg.record_dt)
        write_csv(rec, targets[k])
        lines.append(_summary_line(k, param, v, rec, cfg.tail_fraction))
        lines.append(f"#   gains: {gains.tuning_order_tag}")
        records.append(rec)
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    (out_dir / "resolved.cfg").write_text(emit_config(cfg))
    return records


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="artifact", description="Simulate adaptive output regulators.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb, text in (("run", "one simulation"), ("sweep", "one simulation per sweep value"),
                       ("validate", "parse the config and print it resolved")):
        p = sub.add_parser(verb, help=text)
        p.add_argument("config")
        p.add_argument("--out", default=None)
        p.add_argument("--tfinal", type=float, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--overwrite", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out is not None:
        cfg.out = args.out
    for name in ("tfinal", "dt"):
        value = getattr(args, name)
        if value is not None:
            if not (value > 0 and math.isfinite(value)):
                print(f"error: --{name} must be positive", file=sys.stderr)
                return EXIT_USAGE
            setattr(cfg, name, value)
    if args.verb == "validate":
        sys.stdout.write(emit_config(cfg))
        return EXIT_OK
    if args.verb == "sweep" and cfg.sweep is None:
        print(f"{args.config}: no [sweep] section", file=sys.stderr)
        return EXIT_USAGE
    try:
        records = execute(cfg, Path(cfg.out), args.overwrite, use_sweep=args.verb == "sweep")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for k, rec in enumerate(records):
        if rec.diverged:
            log.warning("run %d diverged at t=%s", k, rec.divergence_time)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
