"""Command-line driver: ``cascade-sim <command> --config <file> [flags]``.

Each run writes ``<command>.csv`` (one header line, 12 significant digits) and
``<command>.manifest.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import Schedule, amplitudes_driven, evolve_protocol, find_tbar
from .detection import (
    channel_probabilities,
    concurrence_conditional,
    cumulative_channel_integrals,
    records_from_ensemble,
)
from .dynamics import DEFAULT_DT, DEFAULT_T_MAX, run_ensemble
from .entanglement import concurrence_atoms_closed, concurrence_cavities_closed
from .errors import (
    CascadeError,
    ConfigParseError,
    MissingFile,
    NegativeRate,
    NonFinite,
    NonPositiveDetuning,
    ParamsError,
    UnknownCommand,
    UnknownKey,
)
from .params import SubsystemParams, SystemParams, raman_adequacy

COMMANDS = ("fig3", "fig4", "fig5", "conditional", "trajectories", "find-tbar")
KAPPA_RATIOS = (1.0, 0.9, 0.8)

# config key stem -> SubsystemParams field
_SUBSYSTEM_KEYS = {
    "g": "g",
    "omega": "omega_rabi",
    "delta": "detuning",
    "kappa": "kappa",
    "kappa_loss": "kappa_loss",
    "gamma": "gamma",
    "gamma_prime": "gamma_prime",
}
_REQUIRED = ("g", "omega", "delta", "kappa")
_RATE_STEMS = ("kappa", "kappa_loss", "gamma", "gamma_prime")
_GLOBAL_KEYS = ("phi", "eta")

NOTES = (
    "dark counts are not simulated; a dark click only forces the protocol to be repeated",
    "asymptotic quantities are evaluated at t_max, which defaults to 100/K",
)


@dataclass(frozen=True)
class RunOptions:
    eta: float = 0.0
    t_max: float = DEFAULT_T_MAX
    dt: float = DEFAULT_DT
    seed: int = 0
    ntraj: int = 10_000
    tbar: float | None = None  # None = locate the concurrence peak
    every: int = 10
    workers: int = 1


def _with_line(exc_type, message, line):
    exc = exc_type(f"line {line}: {message}")
    exc.line = line
    return exc


def parse_config(path) -> tuple[SystemParams, RunOptions, dict]:
    """Read a ``key = value`` file; returns params, options and the raw key map.

    Blank lines and ``#`` comments are ignored.  Every ``_b`` key that is absent
    takes the value of its ``_a`` counterpart.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"config file not found: {path}")
    allowed = {f"{stem}_{side}" for stem in _SUBSYSTEM_KEYS for side in "ab"} | set(_GLOBAL_KEYS)
    values: dict[str, float] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, value = (part.strip() for part in text.partition("="))
        if key not in allowed:
            raise UnknownKey(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigParseError(f"duplicate key {key!r}", lineno)
        try:
            number = float(value)
        except ValueError:
            raise ConfigParseError(f"value of {key!r} is not a number: {value!r}", lineno) from None
        if not math.isfinite(number):
            raise _with_line(NonFinite, f"{key} must be finite", lineno)
        stem = key[:-2] if key not in _GLOBAL_KEYS else key
        if stem in _RATE_STEMS and number < 0:
            raise _with_line(NegativeRate, f"{key} must be >= 0, got {number!r}", lineno)
        if stem == "delta" and number <= 0:
            raise _with_line(NonPositiveDetuning, f"{key} must be > 0, got {number!r}", lineno)
        if key == "eta" and not 0 <= number <= 1:
            raise ConfigParseError(f"eta must lie in [0, 1], got {number!r}", lineno)
        values[key] = number
        lines[key] = lineno

    for stem in _REQUIRED:
        if f"{stem}_a" not in values:
            raise ConfigParseError(f"missing required key {stem}_a")
    subs = {}
    for side in "ab":
        kwargs = {}
        for stem, field_name in _SUBSYSTEM_KEYS.items():
            key = f"{stem}_{side}"
            if key in values:
                kwargs[field_name] = values[key]
            elif side == "b" and f"{stem}_a" in values:
                kwargs[field_name] = values[f"{stem}_a"]
        try:
            subs[side] = SubsystemParams(**kwargs)
        except ParamsError as exc:
            where = min((lines[k] for k in lines if k.endswith(f"_{side}")), default=None)
            exc.line = where
            raise
    params = SystemParams(a=subs["a"], b=subs["b"], phi=values.get("phi", 0.0))
    return params, RunOptions(eta=values.get("eta", 0.0)), values


def _with_kappa_ratio(params: SystemParams, ratio: float) -> SystemParams:
    def sub(s: SubsystemParams) -> SubsystemParams:
        total = s.kappa + s.kappa_loss
        return replace(s, kappa=ratio * total, kappa_loss=(1.0 - ratio) * total)

    return replace(params, a=sub(params.a), b=sub(params.b))


def _output_times(options: RunOptions) -> np.ndarray:
    n = int(math.floor(options.t_max / options.dt + 1e-9))
    idx = np.arange(0, n + 1, max(1, options.every))
    t = options.dt * idx
    if t[-1] < options.t_max:
        t = np.append(t, options.t_max)
    return t


def _resolve_tbar(params: SystemParams, options: RunOptions) -> float:
    if options.tbar is not None:
        return options.tbar
    return find_tbar(params, (0.0, options.t_max))


def _write_csv(path: Path, header: list[str], columns, fmts=None) -> None:
    fmts = fmts or ["%.12g"] * len(columns)
    cols = [np.asarray(c).ravel() for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f % v for f, v in zip(fmts, row)) + "\n")


def run_fig3(params, options):
    t = _output_times(options)
    pops = amplitudes_driven(params, t).populations
    scalars = {"tbar": find_tbar(params, (0.0, options.t_max))}
    return ["t", "alpha2", "beta2", "gamma2", "delta2"], [t, *pops], scalars


def run_fig4(params, options):
    t = _output_times(options)
    header, columns, scalars = ["t"], [t], {}
    for ratio in KAPPA_RATIOS:
        p = _with_kappa_ratio(params, ratio)
        header.append(f"C_at_kappa{ratio:.1f}")
        columns.append(concurrence_atoms_closed(amplitudes_driven(p, t)))
        tbar = find_tbar(p, (0.0, options.t_max))
        scalars[f"tbar_kappa{ratio:.1f}"] = tbar
        scalars[f"C_tbar_kappa{ratio:.1f}"] = concurrence_atoms_closed(amplitudes_driven(p, tbar))
    return header, columns, scalars


def run_fig5(params, options):
    tbar = _resolve_tbar(params, options)
    t = _output_times(options)
    state = evolve_protocol(params, Schedule(tbar), t)
    end = evolve_protocol(params, Schedule(tbar), options.t_max)
    scalars = {
        "tbar": tbar,
        "C_tbar": concurrence_atoms_closed(amplitudes_driven(params, tbar)),
        "C_at_end": concurrence_atoms_closed(end),
        "C_cav_end": concurrence_cavities_closed(end),
    }
    columns = [t, concurrence_atoms_closed(state), concurrence_cavities_closed(state)]
    return ["t", "C_at", "C_cav"], columns, scalars


def run_conditional(params, options):
    tbar = _resolve_tbar(params, options)
    schedule = Schedule(tbar)
    t = _output_times(options)
    state = evolve_protocol(params, schedule, t)
    p_rad, p_abs = cumulative_channel_integrals(params, schedule, t, options.dt)
    survive = np.sum(state.populations, axis=0)
    p0 = 1.0 - options.eta * p_rad
    c_at = concurrence_atoms_closed(state)
    c_cond = np.minimum(c_at / p0, 1.0)

    probs = channel_probabilities(params, schedule, options.t_max, options.eta, options.dt)
    end = evolve_protocol(params, schedule, options.t_max)
    c_tbar = concurrence_atoms_closed(amplitudes_driven(params, tbar))
    c_cond_end = concurrence_conditional(end, probs)
    scalars = {
        "tbar": tbar,
        "C_tbar": c_tbar,
        "eta": options.eta,
        "p_no": probs.p_no,
        "p_rad": probs.p_rad,
        "p_abs": probs.p_abs,
        "p0": probs.p0,
        "success_probability": probs.p0,
        "C_at": concurrence_atoms_closed(end),
        "C_cond": c_cond_end,
        "enhancement_percent": 100.0 * probs.enhancement,
    }
    header = ["t", "p_no", "p_rad", "p_abs", "p0", "C_at", "C_cond"]
    return header, [t, survive, p_rad, p_abs, p0, c_at, c_cond], scalars


def run_trajectories(params, options):
    tbar = _resolve_tbar(params, options)
    schedule = Schedule(tbar)
    result = run_ensemble(
        params, schedule, n=options.ntraj, seed=options.seed, t_max=options.t_max, dt=options.dt, eta=options.eta, workers=options.workers
    )
    records = records_from_ensemble(result, options.eta)
    probs = channel_probabilities(params, schedule, options.t_max, options.eta, options.dt)
    scalars = {
        "tbar": tbar,
        **records.as_dict(),
        "jump_fraction": result.n_jumped / result.n,
        "radiated_share": records.n_click / records.n + records.n_reflected / records.n,
        "loss_share": records.n_loss / records.n,
        "p_no_analytic": probs.p_no,
        "p_rad_analytic": probs.p_rad,
        "p_abs_analytic": probs.p_abs,
        "p0_analytic": probs.p0,
    }
    columns = [np.arange(result.n), result.seeds, result.jump_times, result.channels, result.clicks.astype(int)]
    return ["index", "seed", "jump_time", "channel", "click"], columns, scalars, ["%d", "%d", "%.12g", "%d", "%d"]


def run_find_tbar(params, options):
    tbar = find_tbar(params, (0.0, options.t_max))
    c = concurrence_atoms_closed(amplitudes_driven(params, tbar))
    return ["tbar", "C_tbar"], [[tbar], [c]], {"tbar": tbar, "C_tbar": c}


_RUNNERS = {
    "fig3": run_fig3,
    "fig4": run_fig4,
    "fig5": run_fig5,
    "conditional": run_conditional,
    "trajectories": run_trajectories,
    "find-tbar": run_find_tbar,
}


def _manifest(command, params, options, config, config_path, scalars):
    report = raman_adequacy(params)
    return {
        "command": command,
        "version": __version__,
        "config_path": str(config_path) if config_path is not None else None,
        "config": config,
        "params": {"a": asdict(params.a), "b": asdict(params.b), "phi": params.phi},
        "derived": {"a": asdict(params.derived_a), "b": asdict(params.derived_b)},
        "grid": {"t_max": options.t_max, "dt": options.dt, "every": options.every},
        "seed": options.seed,
        "ntraj": options.ntraj,
        "eta": options.eta,
        "tbar_option": "auto" if options.tbar is None else options.tbar,
        "adequacy": asdict(report),
        "scalars": {k: float(v) if isinstance(v, (float, np.floating)) else v for k, v in scalars.items()},
        "notes": list(NOTES),
    }


def run(command: str, params: SystemParams, options: RunOptions, out_dir=".", config=None, config_path=None) -> dict:
    """Run one command, write its CSV and manifest, and return the manifest."""
    if command not in _RUNNERS:
        raise UnknownCommand(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header, columns, scalars, *fmts = _RUNNERS[command](params, options)
    _write_csv(out / f"{command}.csv", header, columns, fmts[0] if fmts else None)
    manifest = _manifest(command, params, options, config or {}, config_path, scalars)
    (out / f"{command}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _tbar_arg(text: str):
    if text == "auto":
        return None
    value = float(text)
    if not (value >= 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError("tbar must be 'auto' or a time >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade-sim", description=__doc__.splitlines()[0])
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("--config", required=True, help="key = value parameter file")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--tmax", type=float, default=DEFAULT_T_MAX, help="end time in units of 1/K (default 100)")
    parser.add_argument("--dt", type=float, default=DEFAULT_DT, help="integration and quadrature step (default 1e-3)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ntraj", type=int, default=10_000)
    parser.add_argument("--eta", type=float, default=None, help="detector efficiency; overrides the config value")
    parser.add_argument("--tbar", type=_tbar_arg, default=None, help="switch-off time, or 'auto' for the concurrence peak")
    parser.add_argument("--every", type=int, default=10, help="write every N-th grid point to the CSV (default 10)")
    parser.add_argument("--workers", type=int, default=1, help="processes for trajectory ensembles")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command not in _RUNNERS:
            raise UnknownCommand(f"unknown command {args.command!r}; choose from {', '.join(COMMANDS)}")
        params, options, config = parse_config(args.config)
        eta = options.eta if args.eta is None else args.eta
        if not 0 <= eta <= 1:
            raise ValueError(f"eta must lie in [0, 1], got {eta!r}")
        options = RunOptions(
            eta=eta,
            t_max=args.tmax,
            dt=args.dt,
            seed=args.seed,
            ntraj=args.ntraj,
            tbar=args.tbar,
            every=args.every,
            workers=args.workers,
        )
        manifest = run(args.command, params, options, args.out, config, args.config)
    except (CascadeError, ValueError) as exc:
        print(f"cascade-sim: error: {exc}", file=sys.stderr)
        return 2
    for key, value in manifest["scalars"].items():
        print(f"{key} = {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
