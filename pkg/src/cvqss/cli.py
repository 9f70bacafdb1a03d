"""Command-line front end: JSON config in, CSV tables and a JSON manifest out.

Exit codes: 0 success, 2 bad configuration or arguments, 3 numerical
failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import platform
import sys
import time
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from . import attacks as atk
from .config import (ALPHA_MODES, CHI_MODES, RATE_MODES, SECTIONS, ConfigError, RunConfig, load,
                     loads, with_overrides)
from .interruption import qss_noninterruption
from .keyrate import finite_size_rate, asymptotic_rate
from .qss import (SWEEP_PARAMS, QssScenario, link1_scenarios, link_channels, optimize_modulation,
                  sweep, with_parameter)
from .turbulence import NumericalError, beam_statistics, monte_carlo_stats, pdf_histogram
from .interruption import interruption_probability

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4

COMMANDS = ("channel-stats", "pdf", "interruption", "noise-budget", "bounds", "keyrate",
            "qss-sweep", "optimize-vm")
RECIPES = ("fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9")
PER_PARTICIPANT = ("d_dB", "R_e", "R_p")


class UsageError(ValueError):
    pass


# --- value parsing ------------------------------------------------------------------

def parse_values(text: str) -> list[float]:
    """``START:STOP:STEP`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" not in text:
        try:
            return [_number(tok) for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise UsageError(f"bad value list {text!r}") from exc
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--values expects START:STOP:STEP, got {text!r}")
    try:
        start, stop, step = (_number(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad range {text!r}") from exc
    if step == 0 or (stop - start) * step < 0:
        raise UsageError(f"range {text!r} is empty or never terminates")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [start + i * step for i in range(count)]
    if all(isinstance(x, int) for x in (start, stop, step)):
        return [int(v) for v in values]
    # snap float drift, e.g. 0.30000000000000004 -> 0.3
    return [float(f"{v:.12g}") for v in values]


def _number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(text)
        return value


def fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO(newline="")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


# --- argument handling --------------------------------------------------------------

def _field_type(section: str, name: str) -> Callable[[str], Any]:
    if name in PER_PARTICIPANT:
        return lambda s: tuple(float(x) for x in s.split(",")) if "," in s else float(s)
    default = getattr(SECTIONS[section](), name)
    if isinstance(default, bool):
        return lambda s: s.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return lambda s: int(float(s)) if float(s).is_integer() else int(s)
    if isinstance(default, float):
        return float
    return str


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--recipe", choices=RECIPES, help="packaged figure recipe")
    p.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, help="output CSV path (default: stdout)")
    p.add_argument("--param", help=f"sweep parameter, one of {', '.join(SWEEP_PARAMS)}")
    p.add_argument("--values", help="START:STOP:STEP (inclusive) or comma list")
    p.add_argument("--samples", type=int, dest="n_samples", help="Monte Carlo samples per link")
    p.add_argument("--mode", choices=RATE_MODES)
    p.add_argument("--alpha-mode", choices=ALPHA_MODES, dest="alpha_mode")
    p.add_argument("--chi-mode", choices=CHI_MODES, dest="chi_mode")
    p.add_argument("--habs", dest="habs", action="store_true", default=None)
    p.add_argument("--no-habs", dest="habs", action="store_false")
    p.add_argument("--attack-all-links", dest="attack_all_links", action="store_true", default=None)
    group = p.add_argument_group("model parameters")
    for section in ("protocol", "geometry", "attack"):
        for f in fields(SECTIONS[section]):
            group.add_argument(f"--{f.name}", dest=f"{section}.{f.name}",
                               type=_field_type(section, f.name), metavar="X")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvqss", description="Free-space CV-QSS key-rate simulator",
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "channel-stats": "transmittance moments and interruption probability",
        "pdf": "histogram of the transmittance PDF",
        "interruption": "per-link interruption probabilities",
        "noise-budget": "excess-noise budget per attack scenario",
        "bounds": "estimators and worst-case bounds per scenario and block size",
        "keyrate": "link key rate at fixed (T, eps)",
        "qss-sweep": "system rates K, K_c, K_r over a parameter",
        "optimize-vm": "rate curve over V_M with its maximum flagged",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], allow_abbrev=False)
        _add_common(p)
        if name == "pdf":
            p.add_argument("--bins", type=int)
            p.add_argument("--dump-samples", type=Path, help="also write raw beam samples here")
        if name == "bounds":
            p.add_argument("--blocks", help="comma list of block sizes m")
        if name == "keyrate":
            p.add_argument("--T", type=float, dest="T_value", help="transmittance (default: link-1 estimate)")
            p.add_argument("--eps", type=float, dest="eps_value", help="excess noise (default: link-1 estimate)")
        if name == "optimize-vm":
            p.add_argument("--rate", choices=("K", "K_c", "K_r"), default=None)
    return parser


def load_run(args: argparse.Namespace) -> RunConfig:
    if args.recipe and args.config:
        raise UsageError("use either --config or --recipe, not both")
    if args.recipe:
        run = loads(resources.files("cvqss.recipes").joinpath(f"{args.recipe}.json").read_text("utf-8"))
    elif args.config:
        run = load(args.config)
    else:
        run = RunConfig()
    command = run.recipe.get("command")
    if command and command != args.command:
        raise UsageError(f"recipe is for {command!r}, not {args.command!r}")

    overrides: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    for key, value in vars(args).items():
        if value is not None and "." in key:
            section, name = key.split(".", 1)
            overrides[section][name] = value
    for name in ("n_samples", "mode", "alpha_mode", "chi_mode", "habs", "attack_all_links", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            overrides["simulation"][name] = value
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    return with_overrides(run, overrides)


def scenario_of(run: RunConfig) -> QssScenario:
    return QssScenario(run.protocol, run.geometry, run.attack, run.simulation)


def _sweep_spec(args, run: RunConfig, default_param: Optional[str]) -> tuple[Optional[str], list]:
    param = args.param or run.recipe.get("param") or default_param
    values = args.values or run.recipe.get("values")
    if param is None:
        return None, [None]
    if param not in SWEEP_PARAMS:
        raise UsageError(f"unknown --param {param!r}; expected one of {', '.join(SWEEP_PARAMS)}")
    if values is None:
        return param, [_current(run, param)]
    parsed = parse_values(values) if isinstance(values, str) else list(values)
    if not parsed:
        raise UsageError("--values is empty")
    return param, parsed


def _current(run: RunConfig, param: str):
    if param in ("L", "Cn2"):
        return getattr(run.geometry, param)
    if param in ("p_t", "p_u"):
        return getattr(run.attack, param)
    return getattr(run.protocol, param)


def _points(args, run, default_param):
    param, values = _sweep_spec(args, run, default_param)
    base = scenario_of(run)
    if param is None:
        return param, [(None, base)]
    return param, [(v, with_parameter(base, param, v)) for v in values]


# --- subcommands --------------------------------------------------------------------

def cmd_channel_stats(args, run):
    param, points = _points(args, run, "L")
    header = ["sweep_param", "value", "L", "Cn2", "mean_T", "mean_sqrtT", "var_sqrtT", "se_T",
              "se_sqrtT", "rytov", "var_x0", "P_interrupt", "n_samples", "seed"]
    rows = []
    for value, sc in points:
        g, o = sc.geometry, sc.options
        st = monte_carlo_stats(g, o.n_samples, o.seed, o.alpha_mode)
        beam = beam_statistics(g)
        rows.append([param, value, g.L, g.Cn2, st.mean_T, st.mean_sqrtT, st.var_sqrtT, st.se_T,
                     st.se_sqrtT, beam.rytov, beam.var_x0, interruption_probability(g, beam.var_x0),
                     st.n_samples, o.seed])
    return header, rows, {}


def cmd_pdf(args, run):
    sc = scenario_of(run)
    g, o = sc.geometry, sc.options
    bins = args.bins or run.recipe.get("bins") or 50
    param, values = _sweep_spec(args, run, None)
    if param not in (None, "L", "Cn2"):
        raise UsageError("pdf sweeps only L or Cn2")
    rows = []
    extra = {}
    for value in values:
        geom = g if param is None else replace(g, **{param: float(value)})
        st = monte_carlo_stats(geom, o.n_samples, o.seed, o.alpha_mode)
        hist = pdf_histogram(st, bins)
        for lo, hi, dens in zip(hist.edges[:-1], hist.edges[1:], hist.density):
            rows.append([geom.L, geom.Cn2, lo, hi, dens])
        if args.dump_samples is not None:
            if len(values) > 1:
                raise UsageError("--dump-samples needs a single channel")
            b = st.beams
            write_csv(args.dump_samples, ["index", "x0", "y0", "W1", "W2", "theta", "T"],
                      zip(range(len(st.samples)), b.x0, b.y0, b.W1, b.W2, b.theta, st.samples))
            extra["samples_csv"] = str(args.dump_samples)
    return ["L", "Cn2", "bin_left", "bin_right", "density"], rows, extra


def cmd_interruption(args, run):
    sc = scenario_of(run)
    channels = link_channels(sc)
    Pr = qss_noninterruption([ch.P for ch in channels])
    rows = [[ch.index, ch.distance, ch.var_x0, ch.P, Pr] for ch in channels]
    return ["link", "distance", "var_x0", "P_interrupt", "Pr_qss_non"], rows, {"Pr_qss_non": Pr}


def cmd_noise_budget(args, run):
    param, points = _points(args, run, "V_M")
    header = ["V_M", "scenario", "weight", "E_T", "E_sqrtT", "eps_0", "eps_AM", "eps_LE", "eps_LO",
              "eps_CF", "total", "E_R2_opt"]
    rows = []
    table_rows = []
    for value, sc in points:
        evs = link1_scenarios(sc)
        table = atk.per_scenario_moments(evs["ntu"].moments, sc.attack)
        weights = dict(zip(table.names, table.weights))
        weights["c"] = 1.0
        for name, ev in evs.items():
            nb = ev.noise
            rows.append([sc.config.V_M, name, weights[name], ev.moments.mean_T, ev.moments.mean_sqrtT,
                         nb.eps_0, nb.eps_AM, nb.eps_LE, nb.eps_LO, nb.eps_CF, nb.total, nb.E_R2])
        if not table_rows:
            table_rows = [[n, w, t, s] for n, w, t, s in zip(table.names, table.weights, table.E_T, table.E_sqrtT)]
    extra = {}
    if args.out is not None:
        side = args.out.with_suffix(".scenarios.csv")
        write_csv(side, ["scenario_id", "weight", "E_T", "E_sqrtT"], table_rows)
        extra["scenario_table_csv"] = str(side)
    return header, rows, extra


def cmd_bounds(args, run):
    blocks = args.blocks or run.recipe.get("blocks")
    if blocks is None:
        block_list = [run.protocol.m]
    else:
        block_list = parse_values(blocks) if isinstance(blocks, str) else list(blocks)
    if any(b <= 0 for b in block_list):
        raise UsageError("block sizes must be positive")
    param, points = _points(args, run, "V_M")
    header = ["link", "V_M", "scenario", "m", "T_hat", "eps_hat", "V_eps_hat", "sigma_T", "sigma_Veps",
              "T_min", "V_eps_max"]
    rows = []
    for value, sc in points:
        for m in block_list:
            for name, ev in link1_scenarios(sc, m=m).items():
                e = ev.estimate
                rows.append([1, sc.config.V_M, name, m, e.T_hat, e.eps_hat, e.V_eps_hat, e.sigma_T,
                             e.sigma_Veps, e.T_min, e.V_eps_max])
    return header, rows, {}


def cmd_keyrate(args, run):
    param, points = _points(args, run, "V_M")
    header = ["V_M", "T", "eps", "I_AB", "chi_BE", "r_asym", "Delta", "R_finite"]
    rows = []
    for value, sc in points:
        cfg = sc.config
        if args.T_value is None or args.eps_value is None:
            est = link1_scenarios(sc)["ntu"].estimate
        T = args.T_value if args.T_value is not None else est.T_hat
        eps = args.eps_value if args.eps_value is not None else est.V_eps_hat / est.T_hat
        asym = asymptotic_rate(cfg, T, eps)
        fin = finite_size_rate(cfg, T, T * eps)
        rows.append([cfg.V_M, T, eps, asym.I_AB, asym.chi_BE, asym.r_asym, fin.Delta, fin.R_finite])
    return header, rows, {}


SWEEP_HEADER = ["sweep_param", "value", "K", "K_c", "K_r", "Delta_K", "Pr_qss_non", "argmin_link",
                "V_M_used", "seed"]


def cmd_qss_sweep(args, run):
    param, values = _sweep_spec(args, run, "n")
    rows = sweep(scenario_of(run), param, values)
    return SWEEP_HEADER, [[r[k] for k in SWEEP_HEADER] for r in rows], {}


def cmd_optimize_vm(args, run):
    param, values = _sweep_spec(args, run, "V_M")
    if param != "V_M":
        raise UsageError("optimize-vm sweeps V_M only")
    rate = args.rate or "K_r"
    opt = optimize_modulation(scenario_of(run), values, rate=rate)
    rows = sweep(scenario_of(run), "V_M", opt.grid)
    header = ["V_M", "K", "K_c", "K_r", "rate", "is_max"]
    out = [[r["value"], r["K"], r["K_c"], r["K_r"], rate, i == opt.index] for i, r in enumerate(rows)]
    return header, out, {"V_M_star": opt.V_M_star, "flag": opt.flag, "rate": rate}


HANDLERS = {
    "channel-stats": cmd_channel_stats,
    "pdf": cmd_pdf,
    "interruption": cmd_interruption,
    "noise-budget": cmd_noise_budget,
    "bounds": cmd_bounds,
    "keyrate": cmd_keyrate,
    "qss-sweep": cmd_qss_sweep,
    "optimize-vm": cmd_optimize_vm,
}


def _manifest(args, run: RunConfig, wall: float, extra: dict) -> dict:
    return {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": run.to_dict(),
        "seed": run.simulation.seed,
        "versions": {"cvqss": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": wall,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **extra,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        run = load_run(args)
        header, rows, extra = HANDLERS[args.command](args, run)
    except (ConfigError, UsageError, ValueError, TypeError) as exc:
        print(f"cvqss: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"cvqss: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"cvqss: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.out is None:
            sys.stdout.write(",".join(header) + "\n")
            for row in rows:
                sys.stdout.write(",".join(fmt(v) for v in row) + "\n")
        else:
            write_csv(args.out, header, rows)
            manifest = _manifest(args, run, time.perf_counter() - t0, extra)
            args.out.with_suffix(".manifest.json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"cvqss: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
