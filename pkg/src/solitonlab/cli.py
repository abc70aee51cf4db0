"""Command-line front end: ``verify``, ``converge`` and ``replay``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from . import reports, suite
from .catalog import CATALOG, GRIM_REAPER_CYLINDER, SolitonSpec
from .errors import SolitonLabError
from .patch import BACKENDS, ANALYTIC
from .variation import FD_STEP, CheckReport, validate_ladder

log = logging.getLogger("solitonlab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "SOLITONLAB_THREADS"
DEFAULT_LADDER = (16, 32, 64, 128)


@dataclass
class RunConfig:
    """Everything needed to reproduce a run; output paths are not part of it."""

    subcommand: str
    soliton: str = GRIM_REAPER_CYLINDER
    n: int = 2
    speeds: tuple = ()
    window: tuple = ()
    resolution: int = 64
    backend: str = ANALYTIC
    checks: tuple = ("all",)
    step: float = FD_STEP
    samples: int = 20
    seed: int = 42
    tolerances: dict = field(default_factory=dict)
    resolutions: tuple = ()
    timings: bool = False

    def __post_init__(self):
        self.speeds = tuple(self.speeds)
        self.window = tuple(tuple(w) for w in self.window)
        self.resolutions = tuple(int(r) for r in self.resolutions)
        self.checks = tuple(self.checks)
        unknown = sorted(set(self.tolerances) - set(suite.TOLERANCES))
        if unknown:
            raise SolitonLabError(f"unknown tolerance keys {unknown}; known: {', '.join(suite.TOLERANCES)}")
        if self.backend not in BACKENDS:
            raise SolitonLabError(f"unknown backend {self.backend!r}")
        if self.samples < 1:
            raise SolitonLabError("sample count must be positive")
        if not self.step > 0:
            raise SolitonLabError("step s must be positive")
        known = suite.MEASURES if self.subcommand == "converge" else suite.CHECKS
        names = self.check_list()
        bad = [c for c in names if c not in known]
        if bad:
            raise SolitonLabError(f"unknown check(s) {', '.join(bad)}; available: {', '.join(known)}")
        if self.subcommand == "converge":
            if len(names) != 1:
                raise SolitonLabError("converge takes exactly one check")
            validate_ladder(self.resolutions or DEFAULT_LADDER)
        self.soliton_spec()

    def check_list(self) -> list:
        if self.subcommand == "verify" and "all" in self.checks:
            return list(suite.CHECKS)
        return list(self.checks)

    def soliton_spec(self) -> SolitonSpec:
        return SolitonSpec(self.soliton, self.n, self.speeds, self.window, self.resolution)

    def suite_config(self) -> suite.SuiteConfig:
        tol = dict(suite.TOLERANCES)
        tol.update(self.tolerances)
        return suite.SuiteConfig(self.soliton_spec(), self.backend, self.seed, self.step,
                                 self.samples, tol)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["soliton_spec"] = self.soliton_spec().to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in keys})


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


def _guarded(name: str, job, cfg: suite.SuiteConfig) -> CheckReport:
    try:
        return job()
    except SolitonLabError as exc:
        return CheckReport(name, cfg.spec.to_dict(), [cfg.spec.resolution], cfg.backend,
                           float("nan"), None, float("nan"), False, seed=cfg.seed,
                           details={"error": f"{type(exc).__name__}: {exc}"})


def execute(config: RunConfig) -> list:
    """Run the configured checks; results come back in request order."""
    cfg = config.suite_config()
    if config.subcommand == "converge":
        name = config.check_list()[0]
        res = list(config.resolutions or DEFAULT_LADDER)
        jobs = [(name, lambda: suite.convergence_study(name, cfg.spec, res, cfg.backend, cfg))]
    else:
        jobs = [(name, (lambda nm=name: suite.run_check(nm, cfg))) for name in config.check_list()]
    with ThreadPoolExecutor(max_workers=min(_threads(), len(jobs))) as pool:
        futures = [pool.submit(_guarded, name, job, cfg) for name, job in jobs]
        out = [f.result() for f in futures]
    if not config.timings:
        for r in out:
            r.wall_clock_seconds = None
    return out


def _write_outputs(config: RunConfig, results: list, out: Optional[str], plot: Optional[str]):
    if out:
        if out.endswith(".csv"):
            if len(results) != 1 or "table" not in results[0].details:
                raise SolitonLabError("CSV output holds a single convergence table; use .json")
            reports.write_convergence_csv(out, results[0])
        else:
            reports.write_json(out, config.to_dict(), results)
    if plot:
        reports.emit_plot_data(results, plot)


def _finish(results: list) -> int:
    print(reports.summary_table(results))
    failed = [r.check for r in results if not r.passed]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --- argument parsing ------------------------------------------------------------

def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _window(text: str) -> tuple:
    out = tuple(_floats(w) for w in text.split(";") if w.strip())
    if any(len(w) != 2 for w in out):
        raise argparse.ArgumentTypeError("window is 'a1,b1;a2,b2;...'")
    return out


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _tol(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("tolerance override is key=value")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key!r} needs a number")


def _add_common(p: argparse.ArgumentParser, default_check: str):
    p.add_argument("--soliton", choices=CATALOG, default=GRIM_REAPER_CYLINDER)
    p.add_argument("--n", type=int, default=2, help="real dimension of the soliton")
    p.add_argument("--speeds", type=_floats, default=(), help="grim reaper speeds, e.g. 1,2")
    p.add_argument("--window", type=_window, default=(),
                   help="parameter box 'a1,b1;a2,b2'; write --window=-1,1;0,1 for negative bounds")
    p.add_argument("--res", type=int, default=64, help="cells per axis")
    p.add_argument("--backend", choices=BACKENDS, default=ANALYTIC)
    p.add_argument("--check", default=default_check)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--s", type=float, default=FD_STEP, help="finite-difference step in s")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--tol", type=_tol, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", help="report path (.json, or .csv for a convergence table)")
    p.add_argument("--plot-data", help="long-format CSV for plotting")
    p.add_argument("--timings", action="store_true", help="record wall-clock seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solitonlab", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    verify = sub.add_parser("verify", help="run named checks on one soliton")
    _add_common(verify, "all")
    conv = sub.add_parser("converge", help="refinement study of one check")
    _add_common(conv, "commutation")
    conv.add_argument("--resolutions", type=_ints, default=DEFAULT_LADDER)
    replay = sub.add_parser("replay", help="rerun the configuration stored in a JSON report")
    replay.add_argument("report")
    replay.add_argument("--out")
    replay.add_argument("--plot-data")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        subcommand=args.subcommand, soliton=args.soliton, n=args.n, speeds=args.speeds,
        window=args.window, resolution=args.res, backend=args.backend,
        checks=tuple(c.strip() for c in args.check.split(",") if c.strip()), step=args.s,
        samples=args.samples, seed=args.seed, tolerances=dict(args.tol),
        resolutions=getattr(args, "resolutions", ()), timings=args.timings,
    )


def _replay(args, parser) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            doc = json.load(fh)
        config = RunConfig.from_dict(doc["config"])
    except (OSError, ValueError, KeyError, TypeError, SolitonLabError) as exc:
        parser.error(f"cannot replay {args.report}: {exc}")
    results = execute(config)
    _write_outputs(config, results, args.out, args.plot_data)
    status = _finish(results)
    # compare the serialised numbers so the check is exactly what a reader sees
    fresh = json.loads(reports.dumps(reports.report_document(config.to_dict(), results)))
    if fresh["reports"] != doc["reports"]:
        print("replay differs from the stored report", file=sys.stderr)
        return EXIT_FAIL
    print("replay reproduces the stored report")
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand == "replay":
        return _replay(args, parser)
    try:
        config = config_from_args(args)
    except SolitonLabError as exc:
        parser.error(str(exc))
    results = execute(config)
    try:
        _write_outputs(config, results, args.out, args.plot_data)
    except SolitonLabError as exc:
        parser.error(str(exc))
    return _finish(results)


if __name__ == "__main__":
    sys.exit(main())
