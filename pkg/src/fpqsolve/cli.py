"""Command line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._exceptions import NumericalError, ValidationError
from .config import (
    apply_overrides,
    config_from_dict,
    load_preset_dict,
    load_sweep_preset,
    preset_names,
    sweep_preset_names,
)
from .generator import validate_generator
from .harness import build_generator, compare, run, sweep

logger = logging.getLogger("fpqsolve")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _source_args(p, many=False):
    if many:
        # one shared list keeps the command-line order of mixed --config/--preset
        p.add_argument("--config", action="append", dest="sources", type=lambda v: (v, None), metavar="PATH",
                       help="experiment config (JSON); give two sources in total")
        p.add_argument("--preset", action="append", dest="sources", type=lambda v: (None, v), metavar="NAME",
                       help="bundled config name")
    else:
        p.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
        p.add_argument("--preset", metavar="NAME", help="bundled config name")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override solver.seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fpqsolve",
        description="Discretise Fokker-Planck models and run classical or emulated quantum integrators.",
        epilog=f"presets: {', '.join(preset_names())}; sweep presets: {', '.join(sweep_preset_names())}",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _source_args(sub.add_parser("run", help="run one experiment and write CSV outputs"))
    _source_args(sub.add_parser("compare", help="compare two experiments snapshot by snapshot"), many=True)
    sw = sub.add_parser("sweep", help="parameter sweep with comparison table")
    _source_args(sw)
    sw.add_argument("--workers", type=int, default=1, help="parallel sweep cells (default 1)")
    _source_args(sub.add_parser("validate", help="structural report of the experiment's generator"))
    return parser


def _config_dict(path=None, preset=None):
    if bool(path) == bool(preset):
        raise ValidationError("give exactly one of --config or --preset")
    if preset:
        return load_preset_dict(preset), "."
    p = Path(path)
    try:
        return json.loads(p.read_text()), p.parent
    except FileNotFoundError:
        raise ValidationError(f"config file {p} not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {p}: {exc}") from None


def _load(path, preset, seed):
    d, base = _config_dict(path, preset)
    if seed is not None:
        d = apply_overrides(d, {"solver.seed": seed})
    return config_from_dict(d, base)


def _cmd_run(args):
    cfg = _load(args.config, args.preset, args.seed)
    res = run(cfg, args.out)
    final = res.trajectory.times[-1]
    print(f"{cfg.name}: {cfg.solver.name} to t={final:g}, {len(res.trajectory)} snapshots -> {args.out}")
    for w in res.warnings:
        print(f"warning: {w}")


def _cmd_compare(args):
    sources = args.sources or []
    if len(sources) != 2:
        raise ValidationError("compare needs exactly two configs (any mix of --config and --preset)")
    a, b = (_load(c, p, args.seed) for c, p in sources)
    print(compare(a, b, args.out).summary())


def _cmd_sweep(args):
    if bool(args.config) == bool(args.preset):
        raise ValidationError("give exactly one of --config or --preset")
    if args.preset:
        spec, base_dir = load_sweep_preset(args.preset), "."
    else:
        spec, base_dir = _config_dict(args.config)
    if args.seed is not None:
        runs = spec.get("runs") or {}
        spec = dict(spec, runs={k: apply_overrides(v, {"solver.seed": args.seed}) for k, v in runs.items()})
    res = sweep(spec, args.out, workers=args.workers, base_dir=base_dir)
    print(",".join(res.columns))
    for row in res.rows:
        print(",".join(f"{row[c]:.6g}" if isinstance(row.get(c), float) else str(row.get(c, "")) for c in res.columns))
    if any(r["status"] != "ok" for r in res.rows):
        raise NumericalError("one or more sweep cells failed")


def _cmd_validate(args):
    cfg = _load(args.config, args.preset, args.seed)
    R = build_generator(cfg)
    rep = validate_generator(R)
    d = rep.as_dict()
    d["warnings"] = list(rep.warnings)
    print(json.dumps(d, indent=2))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    R.to_csv(out / f"{cfg.output_prefix}_generator.csv")
    (out / f"{cfg.output_prefix}_validation.json").write_text(json.dumps(d, indent=2) + "\n")
    if (rep.conserving and not rep.conserves_probability) or rep.spectral_abscissa > 1e-8:
        raise NumericalError("generator fails conservation or stability checks")


COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "sweep": _cmd_sweep, "validate": _cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
