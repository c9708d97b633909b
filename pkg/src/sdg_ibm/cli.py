"""Command line interface: ``run``, ``sweep`` and ``check``."""
import argparse
import sys

from .config import build_config, load_config_file
from .errors import InvalidParameter

_FLAGS = [
    ("experiment", str), ("N", int), ("m", int), ("K", int), ("T", float), ("dt", float),
    ("rho", float), ("mu", float), ("kappa", float), ("R", float),
    ("picard_tol", float), ("picard_max_iters", int), ("output", str), ("snapshot_stride", int),
]
SWEEP_AXES = ("N", "m", "K", "kappa", "dt")


def _add_flags(p, sweep=False):
    p.add_argument("--config", help="key = value file; flags override its entries")
    for name, typ in _FLAGS:
        flag = "--" + name.replace("_", "-")
        if sweep and name in SWEEP_AXES:
            p.add_argument(flag, dest=name, type=str, help="comma-separated list")
        else:
            p.add_argument(flag, dest=name, type=typ)


def _values(args):
    values = load_config_file(args.config) if args.config else {}
    for name, _ in _FLAGS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    return values


def _progress(record):
    print(f"step {record.step:6d}  t={record.t:.6g}  area%={record.area_change_pct:+.6e}  "
          f"E={record.E:.6g}  eta={record.eta:.4g}  picard={record.picard_iters}", flush=True)


def cmd_run(args):
    from .experiments import run_experiment

    config = build_config(_values(args))
    if not config.output:
        config = build_config({**_values(args), "output": f"out_{config.experiment}"})
    rec = run_experiment(config, progress=None if args.quiet else _progress)
    print(f"status = {rec.status}; final area change = {rec.final.area_change_pct:.6e} %; "
          f"output in {config.output}")
    return 0 if rec.status in ("completed", "picard_warnings") else 3


def cmd_sweep(args):
    from .experiments import sweep

    values = _values(args)
    axes = {}
    for name in SWEEP_AXES:
        raw = values.pop(name, None)
        if raw is None:
            continue
        items = [t.strip() for t in str(raw).split(",") if t.strip()]
        if len(items) > 1 or name in ("dt", "K"):
            axes[name] = items
        else:
            values[name] = items[0]
    directory = values.pop("output", None) or "sweep_out"
    records = sweep(values, axes, directory)
    for r in records:
        c = r.config
        print(f"N={c.N} m={c.m} K={c.K} dt={c.dt:.6g} kappa={c.kappa:g}: {r.status}, "
              f"area change {r.final.area_change_pct:.6e} %")
    print(f"summary written to {directory}/summary.csv")
    return 0


def cmd_check(args):
    from .checks import run_checks

    ok = True
    for name, passed, value in run_checks(args.N):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:26s} {value:.3e}")
    return 0 if ok else 1


def make_parser():
    parser = argparse.ArgumentParser(prog="sdg-ibm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment")
    _add_flags(p)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="cartesian sweep over N, m, K, kappa, dt")
    _add_flags(p, sweep=True)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("check", help="quick invariant checks on a small mesh")
    p.add_argument("--N", type=int, default=4)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidParameter as exc:
        parser.print_usage(sys.stderr)
        print(f"sdg-ibm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
