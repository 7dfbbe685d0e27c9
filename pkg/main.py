import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

import artifacts
import densities
import girsanov
import numerics
import processes
import simulate
import verify
from config import config
from errors import EntranceDiffusionError, ParameterError, UnsupportedFamilyError
from processes import ProcessSpec

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def configure_logging():
    logging.basicConfig(
        level=getattr(logging, str(config.LOG_LEVEL).upper(), logging.INFO),
        format=config.LOG_FORMAT,
        stream=sys.stderr,
    )


def parse_grid(text: str) -> np.ndarray:
    """lo:hi:step -> lo, lo+step, ... up to the last full step not beyond hi."""
    try:
        lo, hi, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise ParameterError(f"grid must look like lo:hi:step, got {text!r}")
    if not (step > 0) or not (hi > lo):
        raise ParameterError(f"empty grid {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


GRID_FLAGS = ("--x-grid", "--t-grid")


def join_grid_values(argv: Sequence[str]) -> List[str]:
    """Glue a negative lo:hi:step onto its flag so argparse does not read it as an option."""
    out: List[str] = []
    items = list(argv)
    i = 0
    while i < len(items):
        item = items[i]
        if item in GRID_FLAGS and i + 1 < len(items) and items[i + 1].startswith("-") and ":" in items[i + 1]:
            out.append(f"{item}={items[i + 1]}")
            i += 2
            continue
        out.append(item)
        i += 1
    return out


def parse_pairs(items: Optional[Sequence[str]], what: str) -> Dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ParameterError(f"{what} must look like key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def load_spec(text: str) -> ProcessSpec:
    """Inline JSON, or @path to a JSON file."""
    if text.startswith("@"):
        path = Path(text[1:])
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ParameterError(f"cannot read spec file {path}: {e}")
    return processes.spec_from_json(text)


class EntranceDiffusionsCLI:
    """Command-line surface over the density, simulation and verification modules"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.spec = load_spec(args.spec) if getattr(args, "spec", None) else None

    # Output

    def _header(self, **extra) -> Dict:
        fields = {"command": self.args.command}
        if self.spec is not None:
            fields["spec"] = processes.spec_to_dict(self.spec)
        fields.update({k: v for k, v in extra.items() if v is not None})
        return fields

    def emit(self, frame: pd.DataFrame, **header_fields):
        header = self._header(**header_fields)
        if self.args.format == "json":
            payload = dict(header, version=config.ARTIFACT_VERSION,
                           rows=frame.astype(object).where(frame.notna(), None).to_dict(orient="records"))
            if self.args.out == "-":
                sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
            else:
                artifacts.write_json(payload, self.args.out)
            return
        if self.args.out == "-":
            sys.stdout.write(artifacts.frame_to_csv(frame, artifacts.header_line(**header)))
        else:
            artifacts.write_csv(frame, self.args.out, **header)

    # Subcommands

    def cmd_density(self) -> int:
        spec, t = self.spec, self.args.t
        xs = parse_grid(self.args.x_grid)
        frame = pd.DataFrame({"x": xs, "pdf": densities.pdf(spec, xs, t)})
        if spec.family in girsanov.TILDE_FAMILIES:
            tilde = girsanov.TildeDensity(spec)
            frame["tilde_pdf"] = tilde.eval(xs, t)
            frame["image_pdf"] = girsanov.image_density(tilde, tilde.boundary, xs, t)
        logger.info(f"Evaluated {spec.label()} at t={t} on {len(xs)} points")
        self.emit(frame, t=t)
        return EXIT_OK

    def cmd_moments(self) -> int:
        spec = self.spec
        ts = parse_grid(self.args.t_grid)
        try:
            law = densities.asymptotics(spec)
        except UnsupportedFamilyError:
            law = None
        rows = []
        for t in ts:
            pair = densities.moments(spec, float(t))
            rows.append({
                "t": float(t),
                "mean": pair.mean,
                "variance": pair.variance,
                "asymptotic_mean": law.mean_leading(t) if law else math.nan,
                "asymptotic_var": law.var_leading(t) if law else math.nan,
                "provenance": pair.provenance.value,
            })
        self.emit(pd.DataFrame(rows))
        return EXIT_OK

    def cmd_simulate(self) -> int:
        spec, args = self.spec, self.args
        stats = simulate.simulate_ensemble(spec, args.dt, args.t_end, args.n, args.seed, args.workers)
        frame = stats.to_frame()
        frame["closed_mean"] = closed_mean_curve(spec, stats.t_grid)
        self.emit(frame, seed=args.seed, dt=args.dt)
        if args.paths:
            directory = Path(args.paths_dir)
            for index in range(min(args.paths, args.n)):
                path = simulate.ensemble_path(spec, args.dt, args.t_end, args.seed, index)
                artifacts.write_csv(path.to_frame(), directory / f"path_{index:04d}.csv",
                                    **self._header(seed=args.seed, dt=args.dt, path_index=index))
        logger.info(f"Final mean {stats.mean_hat[-1]:.6f} +- {stats.stderr[-1]:.6f} over {stats.n_paths} paths")
        return EXIT_OK

    def cmd_verify(self) -> int:
        args = self.args
        overrides = {k: float(v) for k, v in parse_pairs(args.tol, "--tol").items()}
        unknown = sorted(set(overrides) - set(config.DEFAULT_TOLERANCES))
        if unknown:
            raise ParameterError(f"unknown tolerance keys: {unknown}")
        battery = verify.default_battery(include_simulation=not args.skip_simulation)
        only = parse_pairs(args.only, "--only")
        if only:
            battery = battery.only(**only)
        battery.tolerances = overrides
        battery.workers = args.workers
        report = verify.run_battery(battery)
        table = verify.report_table(report)
        if args.out == "-":
            sys.stdout.write(verify.report_to_json(report) + "\n" if args.format == "json" else table)
        else:
            artifacts.atomic_write_text(args.out, verify.report_to_json(report) + "\n")
            sys.stdout.write(table)
        return EXIT_OK if report.ok else EXIT_CHECK_FAILED

    def cmd_girsanov_demo(self) -> int:
        spec, args = self.spec, self.args
        edges, weighted, _, masses = verify.girsanov_histogram(spec, args.t, args.n, args.bins, args.seed)
        tilde = girsanov.TildeDensity(spec)
        domain = processes.state_space(spec, args.t)
        image = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            lo, hi = max(lo, domain.lo), min(hi, domain.hi)
            if hi <= lo:
                image.append(0.0)
                continue
            image.append(numerics.integrate(
                lambda y: girsanov.image_density(tilde, tilde.boundary, y, args.t),
                numerics.Interval(lo, hi)).value)
        frame = pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "weighted": weighted,
                              "tilde_mass": masses, "image_mass": image})
        self.emit(frame, t=args.t, seed=args.seed)
        return EXIT_OK

    def run(self) -> int:
        handler = {
            "density": self.cmd_density,
            "moments": self.cmd_moments,
            "simulate": self.cmd_simulate,
            "verify": self.cmd_verify,
            "girsanov-demo": self.cmd_girsanov_demo,
        }[self.args.command]
        return handler()


def closed_mean_curve(spec: ProcessSpec, times: np.ndarray) -> np.ndarray:
    """Closed-form mean along a time grid (NaN where none exists)."""
    out = np.full(len(times), math.nan)
    for i, t in enumerate(times):
        if t == 0:
            out[i] = spec.x0
            continue
        try:
            out[i] = densities.closed_moments(spec, float(t)).mean
        except EntranceDiffusionError:
            break
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrance-diffusions",
        description="Densities, simulation and verification of diffusions with entrance boundaries",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec_required=True):
        p.add_argument("--spec", required=spec_required, help="ProcessSpec JSON, or @file")
        p.add_argument("--out", default="-", help="output file ('-' for stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--workers", type=int, default=None, help="worker threads (results do not depend on it)")

    p = sub.add_parser("density", help="pdf, tilde and image densities on an x grid")
    common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x-grid", required=True, help="lo:hi:step")

    p = sub.add_parser("moments", help="mean and variance over a t grid")
    common(p)
    p.add_argument("--t-grid", required=True, help="lo:hi:step")

    p = sub.add_parser("simulate", help="Euler-Maruyama ensemble statistics")
    common(p)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--paths", type=int, default=0, help="also write this many individual paths")
    p.add_argument("--paths-dir", default="paths")

    p = sub.add_parser("verify", help="run the verification battery")
    common(p, spec_required=False)
    p.add_argument("--only", action="append", help="filter, e.g. check=boundary_flux or family=taboo_i")
    p.add_argument("--tol", action="append", help="tolerance override, e.g. normalization=1e-10")
    p.add_argument("--skip-simulation", action="store_true", help="leave out the ensemble checks")

    p = sub.add_parser("girsanov-demo", help="Z-weighted Brownian histogram against tilde masses")
    common(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function of the command-line interface"""
    configure_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(join_grid_values(argv))
    try:
        return EntranceDiffusionsCLI(args).run()
    except EntranceDiffusionError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
