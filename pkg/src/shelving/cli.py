"""Command-line entry point.

Configuration comes from an optional flat ``key = value`` file, then from
command-line flags, which win.  Every key is a :class:`RunConfig` field.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import sys
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import analytic, checks
from .ensemble import WORKERS_ENV, default_workers, run_ensemble
from .errors import ConfigError, ShelvingError
from .model import SystemParams, format_value, parse_value, validate_params
from .trajectory import CSV_HEADER, run_trajectory

PARAM_FIELDS = tuple(f.name for f in dataclasses.fields(SystemParams))
ANALYTIC_COLUMNS = (
    "t",
    "re_a0",
    "im_a0",
    "re_a1",
    "im_a1",
    "re_a2",
    "im_a2",
    "norm",
    "j_fluor",
    "j_reset_gamma",
    "j_reset_gamma_prime",
)


@dataclass(frozen=True)
class RunConfig:
    rabi_frequency: float = 1.0
    strong_decay: float = 0.1
    weak_decay: float = 0.001
    resonance_amp_a: complex = 0.05j
    resonance_amp_b: complex = 0.05 + 0j
    strong_photons: int = 1_000_000
    weak_photons: int = 1_000_000
    phantom_epsilon: float = 1e-12
    max_hazard_step: float = 0.01
    t_end: float = 50_000.0
    count: int = 100
    master_seed: int = 0
    trajectory_index: int = 0
    workers: int = 0
    gap_factor: float = 20.0
    max_events: int = 10_000_000
    t_start: float = 0.0
    t_stop: float = 100.0
    points: int = 101
    samples: int = 10_000
    output_path: str = "-"
    output_format: str = "auto"

    @property
    def params(self) -> SystemParams:
        return SystemParams(**{name: getattr(self, name) for name in PARAM_FIELDS})

    @property
    def worker_count(self) -> int:
        return self.workers if self.workers > 0 else default_workers()

    def format_for(self, default: str) -> str:
        fmt = default if self.output_format == "auto" else self.output_format
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output_format must be csv, json or auto, got {fmt!r}")
        return fmt

    def dump(self) -> str:
        return "".join(
            f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in dataclasses.fields(self)
        )

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: parse_value(known[k].type, v) for k, v in raw.items()})


def read_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        values[key.strip()] = value.strip()
    return values


_ALIASES = {"master_seed": "--seed", "output_path": "--output", "output_format": "--format"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shelving", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analytic": "tabulate amplitudes, norm and channel currents on a time grid",
        "trajectory": "simulate one trajectory and write its emission CSV",
        "ensemble": "simulate many trajectories and report period statistics",
        "validate": "run the oracle-equivalence checks",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", help="flat key = value configuration file")
        cmd.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
        for f in dataclasses.fields(RunConfig):
            flags = ["--" + f.name.replace("_", "-")]
            if f.name in _ALIASES:
                flags.insert(0, _ALIASES[f.name])
            extra: dict[str, Any] = {}
            if f.name == "output_format":
                extra["choices"] = ("csv", "json", "auto")
            cmd.add_argument(*flags, dest=f.name, default=None, metavar=f.name.upper(), **extra)
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    raw: dict[str, str] = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw.update(read_config_text(fh.read()))
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name)
        if value is not None:
            raw[f.name] = value
    return RunConfig.from_mapping(raw)


def _emit(config: RunConfig, text: str) -> None:
    if config.output_path == "-":
        sys.stdout.write(text)
        return
    with open(config.output_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def cmd_analytic(config: RunConfig) -> int:
    p = validate_params(config.params)
    if config.points < 1 or config.t_stop < config.t_start:
        raise ConfigError("need points >= 1 and t_stop >= t_start")
    t = np.linspace(config.t_start, config.t_stop, config.points)
    a = analytic.amplitudes(p, t)
    j = analytic.currents(p, t)
    columns = [
        t,
        np.real(a.a0),
        np.imag(a.a0),
        np.real(a.a1),
        np.imag(a.a1),
        np.real(a.a2),
        np.imag(a.a2),
        np.asarray(a.norm),
        np.asarray(j.j_fluor),
        np.asarray(j.j_reset_gamma),
        np.asarray(j.j_reset_gamma_prime),
    ]
    rows = np.column_stack([np.broadcast_to(c, t.shape) for c in columns]).tolist()
    if config.format_for("csv") == "json":
        _emit(config, _json({"schema": "shelving.analytic-table/1", "columns": ANALYTIC_COLUMNS, "rows": rows}))
    else:
        lines = [",".join(ANALYTIC_COLUMNS)]
        lines += [",".join(f"{v:.17g}" for v in row) for row in rows]
        _emit(config, "\n".join(lines) + "\n")
    return 0


def cmd_trajectory(config: RunConfig) -> int:
    p = validate_params(config.params)
    record = run_trajectory(
        p, config.master_seed, config.trajectory_index, config.t_end, max_events=config.max_events
    )
    if config.format_for("csv") == "json":
        events = [
            {
                "time": e.t_sc,
                "photon_kind": e.kind.value,
                "channel": e.channel.kind.label,
                "cycle_index": e.cycle_index,
            }
            for e in record
        ]
        _emit(
            config,
            _json(
                {
                    "schema": "shelving.emission-record/1",
                    "params": p.to_dict(),
                    "t_end": record.t_end,
                    "master_seed": record.master_seed,
                    "trajectory_index": record.trajectory_index,
                    "final_counts": list(record.final_counts),
                    "columns": list(CSV_HEADER),
                    "events": events,
                }
            ),
        )
    else:
        _emit(config, record.to_csv())
    return 0


def cmd_ensemble(config: RunConfig) -> int:
    p = validate_params(config.params)
    ens = run_ensemble(
        p,
        config.master_seed,
        config.count,
        config.t_end,
        workers=config.worker_count,
        gap_factor=config.gap_factor,
        max_events=config.max_events,
    )
    report = ens.report()
    if config.format_for("json") == "csv":
        buf = io.StringIO()
        buf.write("kind,bin_lo,bin_hi,count\n")
        for kind in ("dark", "bright"):
            h = report[f"{kind}_histogram"]
            for lo, hi, n in zip(h["edges"][:-1], h["edges"][1:], h["counts"]):
                buf.write(f"{kind},{lo:.17g},{hi:.17g},{n}\n")
        _emit(config, buf.getvalue())
    else:
        _emit(config, _json(report))
    print(ens.summary_text(), file=sys.stderr)
    return 0


def cmd_validate(config: RunConfig) -> int:
    p = validate_params(config.params)
    results = checks.run_checks(
        p,
        master_seed=config.master_seed,
        count=config.count,
        t_end=config.t_end,
        workers=config.worker_count,
        gap_factor=config.gap_factor,
        samples=config.samples,
    )
    if config.format_for("csv") == "json":
        _emit(config, _json([dataclasses.asdict(r) for r in results]))
    else:
        _emit(config, "".join(r.line() + "\n" for r in results))
    return 3 if any(r.failed for r in results) else 0


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "analytic": cmd_analytic,
    "trajectory": cmd_trajectory,
    "ensemble": cmd_ensemble,
    "validate": cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
        if args.dump_config:
            sys.stdout.write(config.dump())
            return 0
        return COMMANDS[args.command](config)
    except ShelvingError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


__all__ = ["RunConfig", "main", "WORKERS_ENV"]


if __name__ == "__main__":
    sys.exit(main())
