"""Command line entry point: ``qoesim run|batch|compare|validate|traces``."""

import argparse
import logging
import re
import sys
from pathlib import Path

import yaml

from . import batch as B
from .config import ARCHITECTURES, ConfigError, load_config, preset_names, write_effective
from .runner import build_ladder
from .traces import export_ladder

log = logging.getLogger("qoesim")


def read_seeds(path):
    """Integers separated by whitespace or commas; ``#`` starts a comment."""
    text = Path(path).read_text()
    seeds = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for tok in re.split(r"[\s,]+", line.strip()):
            if not tok:
                continue
            try:
                seeds.append(int(tok))
            except ValueError:
                raise ConfigError([f"{path}: not an integer seed: {tok!r}"]) from None
    if not seeds:
        raise ConfigError([f"{path}: no seeds"])
    return seeds


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError([f"--set {item!r}: expected key=value"])
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _load(args, architecture=None):
    over = _overrides(args.set)
    if architecture is not None:
        over["architecture"] = architecture
    if args.config is None and args.preset is None:
        raise ConfigError(["give --config PATH or --preset NAME"])
    return load_config(args.config, preset=args.preset, overrides=over)


def _add_scenario_args(p):
    p.add_argument("--config", metavar="PATH", help="scenario YAML file")
    p.add_argument("--preset", metavar="NAME", help=f"bundled preset ({', '.join(preset_names())})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one field, e.g. link.ecn_threshold=0.7 (repeatable)")


def _add_dump_args(p):
    p.add_argument("--dump-events", action="store_true", help="write the processed-event log")
    p.add_argument("--dump-packets", action="store_true", help="write the per-packet trace")
    p.add_argument("--dump-admission", action="store_true", help="write the admission audit log")
    p.add_argument("--dump-qp", action="store_true", help="write the per-source QP timeline")


def _dumps(args):
    return dict(dump_events=args.dump_events, dump_packets=args.dump_packets,
                dump_admission=args.dump_admission, dump_qp=args.dump_qp)


def cmd_run(args):
    cfg = _load(args, args.architecture)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_effective(cfg, out / "effective_config.yaml")
    s = B.run_one(cfg, seed, out, **_dumps(args))
    print(f"{cfg.architecture} seed {seed}: admitted {s.sessions_admitted}, decoded {s.sessions_decoded}, "
          f"mean MOS {s.mean_mos:.3f}, video loss {s.mean_loss:.4f}, delay {s.mean_delay_ms:.1f} ms, "
          f"utilization {s.utilization:.3f}")
    print(f"results in {out}")
    if s.conservation_violations:
        print(f"error: {s.conservation_violations} conservation violations", file=sys.stderr)
        return 1
    return 0


def cmd_batch(args):
    archs = args.architecture or [None]
    if archs == ["all"]:
        archs = list(ARCHITECTURES)
    out = Path(args.out)
    dirs = []
    for arch in archs:
        cfg = _load(args, arch)
        seeds = read_seeds(args.seeds) if args.seeds else list(cfg.seeds)
        print(f"{cfg.architecture}: {len(seeds)} seeds")
        B.run_batch(cfg, seeds, out, jobs=args.jobs, plots=not args.no_plots, **_dumps(args))
        dirs.append(out / cfg.architecture)
    table = B.compare(dirs, out if len(dirs) > 1 else None, plots=not args.no_plots)
    print(B.format_table(table))
    print(f"results in {out}")
    return 0


def cmd_compare(args):
    table = B.compare(args.dirs, args.out, plots=not args.no_plots)
    print(B.format_table(table))
    return 0


def cmd_validate(args):
    path = args.path or args.config
    if path is None:
        raise ConfigError(["give a scenario file"])
    cfg = load_config(path)
    if args.out:
        write_effective(cfg, args.out)
    else:
        yaml.safe_dump(cfg.to_dict(), sys.stdout, sort_keys=False)
    print(f"ok: {path} (config hash {cfg.config_hash()})", file=sys.stderr)
    return 0


def cmd_traces(args):
    cfg = _load(args)
    ladder = build_ladder(cfg, args.seed if args.seed is not None else cfg.seeds[0])
    path = export_ladder(ladder, args.out)
    print(f"wrote {len(ladder)} rungs, manifest {path}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="qoesim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one scenario, one seed")
    _add_scenario_args(p)
    p.add_argument("--architecture", choices=ARCHITECTURES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="results/run", metavar="DIR")
    _add_dump_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="every seed of a scenario, CDFs and figures")
    _add_scenario_args(p)
    p.add_argument("--architecture", action="append", choices=[*ARCHITECTURES, "all"],
                   help="repeatable; 'all' runs the three architectures")
    p.add_argument("--seeds", metavar="FILE", help="seed list file (default: the scenario's seeds)")
    p.add_argument("--out", default="results/batch", metavar="DIR")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-plots", action="store_true")
    _add_dump_args(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("compare", help="trend table over batch result directories")
    p.add_argument("dirs", nargs="+", metavar="DIR")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="lint a scenario file and print the effective config")
    p.add_argument("path", nargs="?")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="FILE", help="write the effective config here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("traces", help="export the synthetic trace ladder as CSV files")
    _add_scenario_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="results/traces", metavar="DIR")
    p.set_defaults(func=cmd_traces)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        for err in e.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    except (B.BatchError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
