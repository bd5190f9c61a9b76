import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import pandas as pd
from rich import print
from rich.logging import RichHandler
from rich.table import Table

from .config import load_settings
from .errors import ConfigError, FloatLabError, GeometryError, NumericalError, SweepError
from .experiments import (
    run_asa,
    run_converge,
    run_float_body,
    run_float_func,
    run_randpoly,
    run_sconcave,
)
from .reporting import emit_report
from .schemas import ExperimentConfig, parse_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _setup_logging(level: str) -> None:
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]",
                        handlers=[RichHandler(rich_tracebacks=False, show_path=False)], force=True)


def load_config(path: str, seed: Optional[int] = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}")
    if seed is not None:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = None
        if isinstance(data, dict):
            data["seed"] = seed
            text = json.dumps(data)
    return parse_config(text)


def _formats(arg: Optional[str], cfg: ExperimentConfig, default: List[str]) -> List[str]:
    if arg:
        return [f.strip() for f in arg.split(",") if f.strip()]
    return list(cfg.output.formats or default)


def _out_dir(arg: Optional[str], cfg: ExperimentConfig, default: str) -> str:
    return arg or cfg.output.out_dir or default


def _stem(cfg: ExperimentConfig, cmd: str) -> str:
    return cfg.output.name or f"{cmd}_{cfg.experiment}"


def _write_frame(df: pd.DataFrame, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def _write_json(doc, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")
    return path


def cmd_float_body(args, cfg, settings) -> int:
    fb = run_float_body(cfg, settings, args.delta)
    print(f"[bold]Floating body[/bold] {fb.body.label} delta={fb.delta:.6g} directions={fb.grid.count}")
    print(f"  volume = {fb.volume:.12g} +- {fb.volume_error:.2g}")
    cols = {f"u{i}": fb.grid.directions[:, i] for i in range(fb.body.dim)}
    cols["offset"] = fb.offsets
    for i in range(fb.touching.shape[1] if fb.touching.size else 0):
        cols[f"touch{i}"] = fb.touching[:, i]
    path = _write_frame(pd.DataFrame(cols), _out_dir(args.out, cfg, settings.out_dir), f"{_stem(cfg, 'float_body')}.csv")
    print(f"[green]Wrote[/green] {path}")
    return EXIT_OK


def cmd_float_func(args, cfg, settings) -> int:
    approx, di = run_float_func(cfg, settings, args.delta)
    print(f"[bold]Floating function[/bold] {approx.psi.label} delta={approx.delta:.6g} slopes={len(approx.slopes)}")
    print(f"  I_f = {di.i_f:.12g}   I_psi = {di.i_psi:.12g}   tail <= {di.tail_bound:.2g}")
    cols = {f"v{i}": approx.slopes[:, i] for i in range(approx.psi.dim)}
    cols["offset"] = approx.offsets
    cols["depth"] = approx.depths
    for i in range(approx.psi.dim):
        cols[f"touch{i}"] = approx.touching[:, i]
    cols["gap"] = approx.gaps
    path = _write_frame(pd.DataFrame(cols), _out_dir(args.out, cfg, settings.out_dir), f"{_stem(cfg, 'float_func')}.csv")
    print(f"[green]Wrote[/green] {path}")
    return EXIT_OK


def cmd_sconcave(args, cfg, settings) -> int:
    approx, deficit = run_sconcave(cfg, settings, args.delta)
    print(f"[bold]s-concave floating function[/bold] {approx.source.label} s={approx.source.s} "
          f"delta={approx.delta:.6g}")
    print(f"  int (f - f_delta) = {deficit:.12g}")
    doc = {"label": approx.source.label, "s": approx.source.s, "delta": approx.delta, "deficit": deficit,
           "meridian_volume": approx.floating.volume, "meridian_volume_error": approx.floating.volume_error}
    path = _write_json(doc, _out_dir(args.out, cfg, settings.out_dir), f"{_stem(cfg, 'sconcave')}.json")
    print(f"[green]Wrote[/green] {path}")
    return EXIT_OK


def cmd_asa(args, cfg, settings) -> int:
    results = run_asa(cfg)
    if not results:
        print("[yellow]No body, function or sconcave section to evaluate.[/yellow]")
        return EXIT_CONFIG
    table = Table(title="Affine surface areas")
    for col in ("functional", "params", "value", "error"):
        table.add_column(col)
    for r in results:
        table.add_row(r.functional, json.dumps(r.params, sort_keys=True, default=str),
                      f"{r.value:.12g}", f"{r.error:.2g}")
    print(table)
    doc = [r.model_dump() for r in results]
    path = _write_json(doc, _out_dir(args.out, cfg, settings.out_dir), f"{_stem(cfg, 'asa')}.json")
    print(f"[green]Wrote[/green] {path}")
    return EXIT_OK


def cmd_converge(args, cfg, settings) -> int:
    try:
        report = run_converge(cfg, settings)
    except SweepError as e:
        print(f"[red]Sweep aborted:[/red] {e} ({len(e.partial)} point(s) completed)")
        for p in e.partial:
            print(f"  delta={p.delta:.6g} ratio={p.ratio:.10g}")
        return EXIT_NUMERICAL
    formats = _formats(args.format, cfg, settings.default_formats)
    paths = emit_report(report, formats, _out_dir(args.out, cfg, settings.out_dir), _stem(cfg, "converge"))
    color = "green" if report.passed else "red"
    print(f"[bold]{report.experiment}[/bold] {report.label}: L = {report.limit:.8g} "
          f"(beta={report.beta if report.beta is None else round(report.beta, 4)}), target = {report.target:.8g}, "
          f"rel. error = {report.relative_error:.3%} [{color}]{'PASS' if report.passed else 'FAIL'}[/{color}]")
    if not report.monotone:
        print("[yellow]Deficits are not monotone in delta; increase the quadrature budget.[/yellow]")
    for fmt, path in paths.items():
        print(f"[green]Wrote[/green] {fmt}: {path}")
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_randpoly(args, cfg, settings) -> int:
    summary = run_randpoly(cfg, settings)
    color = "green" if summary["passed"] else "red"
    print(f"[bold]Random polytopes[/bold] {summary['label']} N={summary['N']} trials={summary['trials']}: "
          f"ratio = {summary['estimate']:.6g} +- {summary['half_width']:.3g}, target = {summary['target']:.6g} "
          f"[{color}]{'PASS' if summary['passed'] else 'FAIL'}[/{color}]")
    path = _write_json(summary, _out_dir(args.out, cfg, settings.out_dir), f"{_stem(cfg, 'randpoly')}.json")
    print(f"[green]Wrote[/green] {path}")
    return EXIT_OK if summary["passed"] else EXIT_NUMERICAL


COMMANDS = {
    "float-body": cmd_float_body,
    "float-func": cmd_float_func,
    "sconcave": cmd_sconcave,
    "asa": cmd_asa,
    "converge": cmd_converge,
    "randpoly": cmd_randpoly,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floatlab", description="Weighted floating bodies, floating functions and affine surface areas")
    sub = parser.add_subparsers(dest="cmd", required=True)

    helps = {
        "float-body": "Weighted floating body of a convex body at one delta",
        "float-func": "Weighted floating function of a convex function at one delta",
        "sconcave": "s-concave floating function at one delta",
        "asa": "Evaluate every affine surface area functional that applies to the configured objects",
        "converge": "Run a delta sweep, extrapolate and compare with the analytic limit",
        "randpoly": "Monte Carlo deficit of random polytopes",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=str, required=True, help="Path to a JSON experiment config")
        p.add_argument("--out", type=str, default=None, help="Output directory (default FLOATLAB_OUT_DIR)")
        p.add_argument("--seed", type=int, default=None, help="Seed for Monte Carlo stages, overrides the config")
        p.add_argument("--format", type=str, default=None, help="Comma-separated report formats: csv,json,svg")
        if name in ("float-body", "float-func", "sconcave"):
            p.add_argument("--delta", type=float, default=None, help="Cap mass (default sweep.delta0)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except ConfigError as e:
        print(f"[red]Configuration error:[/red] {e}")
        return EXIT_CONFIG
    _setup_logging(settings.log_level)

    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        print("[red]Invalid config:[/red]")
        for err in e.errors:
            print(f"  - {err}")
        return EXIT_CONFIG

    try:
        return COMMANDS[args.cmd](args, cfg, settings)
    except (NumericalError, GeometryError) as e:
        print(f"[red]Numerical failure:[/red] {e}")
        return EXIT_NUMERICAL
    except (FloatLabError, ValueError) as e:
        print(f"[red]Error:[/red] {e}")
        return EXIT_CONFIG
    except OSError as e:
        print(f"[red]Cannot write output:[/red] {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
