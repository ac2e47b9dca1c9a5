"""Command-line front end.

    decohere run CONFIG          scenario -> trajectory.csv, coeffs.csv, report.csv, ...
    decohere coeffs CONFIG       decoherence/dissipation tensors
    decohere timescales --m ...  t_dec, t_mix, t_wp
    decohere nogo CONFIG         sampled no-go check
    decohere kernel CONFIG       collisional kernel F(ξ)
    decohere selftest            acceptance criteria

Outputs are staged in a temporary directory and moved into place only
when the command succeeds.
"""
from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config

log = logging.getLogger("decohere")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


@contextmanager
def _threads(n: int | None):
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=n):
        yield


def _commit(files: dict, out_dir: Path):
    """Write every file to a staging dir, then move them into out_dir together."""
    out_dir = Path(out_dir)
    parent = out_dir.parent if out_dir.parent != Path("") else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=parent))
    try:
        for name, text in files.items():
            (stage / name).write_text(text)
        out_dir.mkdir(exist_ok=True)
        for name in files:
            os.replace(stage / name, out_dir / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_run(args) -> int:
    from .scenario import run_scenario
    cfg = _load(args)
    out = Path(args.out_dir or cfg.resolve(cfg.output.directory))
    with _threads(args.threads):
        res = run_scenario(cfg, args.snapshot_every, args.threads or 1)
    _commit(res.files, out)
    print(f"wrote {len(res.files)} files to {out}")
    sys.stdout.write(res.files["report.csv"])
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_coeffs(args) -> int:
    from .scenario import coeffs_text
    cfg = _load(args)
    text = coeffs_text(cfg)
    sys.stdout.write(text)
    if args.out_dir:
        _commit({"coeffs.csv": text}, Path(args.out_dir))
    return EXIT_OK


def cmd_timescales(args) -> int:
    from .analysis import TimescaleParams, timescale_report
    p = TimescaleParams(args.m, args.T, args.gamma, args.omega, args.dx, args.hbar)
    rep = timescale_report(p, args.min_ratio)
    text = f"# decohere {__version__} timescales\n" + rep.to_text()
    sys.stdout.write(text)
    if args.out_dir:
        _commit({"timescales.csv": text}, Path(args.out_dir))
    return EXIT_OK if rep.ordered else EXIT_FAIL


def cmd_nogo(args) -> int:
    from .scenario import nogo_text
    cfg = _load(args)
    with _threads(args.threads):
        text, status = nogo_text(cfg, args.threads or 1)
    sys.stdout.write(text)
    if status == "inapplicable":
        print("status: inapplicable (degenerate tensor)")
    if args.out_dir:
        _commit({"nogo.csv": text}, Path(args.out_dir))
    return EXIT_OK


def cmd_kernel(args) -> int:
    from .scenario import kernel_text
    cfg = _load(args)
    text = kernel_text(cfg)
    out = Path(args.out_dir or cfg.resolve(cfg.output.directory))
    _commit({"kernel.csv": text}, out)
    print(f"wrote kernel.csv to {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import CRITERIA, run_criteria
    which = None
    if args.criteria:
        which = [int(c) for c in args.criteria.split(",")]
        bad = set(which) - set(CRITERIA)
        if bad:
            raise ConfigError(f"unknown criteria {sorted(bad)}")
    with _threads(args.threads):
        results = run_criteria(which)
    for r in results:
        print(r.line())
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return EXIT_OK if n_pass == len(results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decohere", description="projection-method decoherence toolkit")
    ap.add_argument("--version", action="version", version=f"decohere {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="scenario TOML file")
        p.add_argument("--out-dir", help="output directory (overrides [output] directory)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="fixed thread count")
        return p

    p = common(sub.add_parser("run", help="run a scenario"))
    p.add_argument("--snapshot-every", type=int, default=None,
                   help="write a Wigner snapshot every K samples (0 = none)")
    p.set_defaults(func=cmd_run)
    common(sub.add_parser("coeffs", help="decoherence and dissipation coefficients")).set_defaults(func=cmd_coeffs)
    common(sub.add_parser("nogo", help="sampled no-go check")).set_defaults(func=cmd_nogo)
    common(sub.add_parser("kernel", help="collisional localization kernel")).set_defaults(func=cmd_kernel)

    p = common(sub.add_parser("timescales", help="decoherence, mixing and spreading times"), config=False)
    for flag, hlp in (("--m", "mass"), ("--T", "temperature"), ("--gamma", "friction γ^pp"),
                      ("--omega", "frequency"), ("--dx", "separation Δx")):
        p.add_argument(flag, type=float, required=True, help=hlp)
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--min-ratio", type=float, default=10.0)
    p.set_defaults(func=cmd_timescales)

    p = common(sub.add_parser("selftest", help="run the acceptance criteria"), config=False)
    p.add_argument("--criteria", help="comma-separated criterion numbers (default: all)")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "snapshot_every", None) is not None and args.snapshot_every < 0:
        print("error: --snapshot-every must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    from .evolution import BoundaryError, StabilityError
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StabilityError as exc:
        print(f"numerical abort: {exc}\nhint: reduce [evolution] dt", file=sys.stderr)
        return EXIT_NUMERIC
    except BoundaryError as exc:
        print(f"numerical abort: {exc}\nhint: widen [grid] x/p ranges or shorten t_final",
              file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
