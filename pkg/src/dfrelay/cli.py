"""Command-line entry point.

Subcommands::

    dfrelay sep-eval  --config spec.yaml --powers 1,2,3
    dfrelay allocate  --config spec.yaml
    dfrelay simulate  --config spec.yaml --powers 1,2,3
    dfrelay sweep     --config spec.yaml [--out results.csv]
    dfrelay preset    fig1|fig2|fig3 [--out spec.yaml]

Exit codes: 0 success, 2 config or input error, 3 infeasible constraints,
4 solver non-convergence.
"""

import argparse
import logging
import sys

from . import allocator as alloc
from .experiment import (PRESETS, ConfigError, emit_csv, format_csv, load_spec_file,
                         preset_text, run_sweep)
from .model import derive_stats
from .montecarlo import TrialPlan, estimate_sep
from .sep import sep_closed_form, sep_quadrature

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4

log = logging.getLogger("dfrelay")


def _parse_powers(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--powers: cannot parse {text!r} as comma-separated numbers") from None


def _common(parser):
    parser.add_argument("--config", required=True, help="YAML or JSON experiment spec")
    parser.add_argument("--seed", type=int, help="override validation.seed")
    parser.add_argument("--trials", type=int, help="override validation.trials")
    parser.add_argument("--out", help="write CSV here instead of stdout")
    parser.add_argument("--quiet", action="store_true", help="only print errors")


def build_parser():
    parser = argparse.ArgumentParser(prog="dfrelay", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sep-eval", help="SEP at given relay powers by every method")
    _common(p)
    p.add_argument("--powers", required=True, help="comma-separated relay powers")
    p.add_argument("--relays", help="comma-separated 1-based relay indices (default: all)")

    p = sub.add_parser("allocate", help="run the configured solvers at the first sweep value")
    _common(p)

    p = sub.add_parser("simulate", help="Monte-Carlo SEP at given relay powers")
    _common(p)
    p.add_argument("--powers", required=True, help="comma-separated relay powers")
    p.add_argument("--relays", help="comma-separated 1-based relay indices (default: all)")

    p = sub.add_parser("sweep", help="run the full sweep and write CSV")
    _common(p)

    p = sub.add_parser("preset", help="print a reference experiment spec")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--out", help="write the spec here instead of stdout")
    p.add_argument("--quiet", action="store_true")
    return parser


def _write(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _network(spec, relays_arg):
    try:
        relays = ([int(r) for r in relays_arg.split(",")] if relays_arg
                  else list(range(1, spec.network.n_relays + 1)))
        return spec.network.subset(relays), relays
    except ValueError as exc:
        raise ConfigError(f"--relays: {exc}") from None


def _point_rows(args, spec, mc_only):
    cfg, relays = _network(spec, args.relays)
    p = _parse_powers(args.powers)
    if len(p) != len(relays):
        raise ConfigError(f"--powers: expected {len(relays)} values, got {len(p)}")
    if any(v < 0 for v in p):
        raise ConfigError("--powers: powers must be nonnegative")
    stats = derive_stats(cfg)
    row = {"sweep_value": None, "relay_set": ";".join(map(str, relays)), "solver": "given"}
    for r, v in zip(relays, p):
        row[f"p_{r}"] = v
    if not mc_only:
        row["sep_closed_form"] = sep_closed_form(stats, p).value
        row["sep_quadrature"] = sep_quadrature(stats, p).value
    if mc_only or spec.validation is not None:
        est = estimate_sep(cfg, p, spec.validation or TrialPlan(10 ** 6))
        row["mc_estimate"], row["mc_stderr"] = est.value, est.std_error
    return [row]


def _allocate_rows(spec):
    if not spec.solvers:
        raise ConfigError("solvers: allocate needs at least one solver")
    spec.sweep_values = spec.sweep_values[:1]
    spec.validation = None
    return run_sweep(spec, strict=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "preset":
            _write(preset_text(args.name), args.out)
            return EXIT_OK
        spec = load_spec_file(args.config, seed=args.seed, trials=args.trials)
        n = spec.network.n_relays
        if args.command == "sep-eval":
            rows = _point_rows(args, spec, mc_only=False)
        elif args.command == "simulate":
            rows = _point_rows(args, spec, mc_only=True)
        elif args.command == "allocate":
            rows = _allocate_rows(spec)
        else:
            rows = run_sweep(spec)
        out = args.out or (spec.output_path if args.command == "sweep" else None)
        if out:
            emit_csv(rows, out, n)
            log.info("wrote %d rows to %s", len(rows), out)
        else:
            sys.stdout.write(format_csv(rows, n))
        return EXIT_OK
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except alloc.InfeasibleError as exc:
        log.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except alloc.ConvergenceError as exc:
        log.error("solver did not converge: %s", exc)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
