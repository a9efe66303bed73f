"""Command line entry point.

Every subcommand prints one ``key=value`` summary line.  Exit status is 0 on
success, 2 for configuration or usage errors and 3 when a stage fails.
"""

import argparse
import sys
from pathlib import Path

from momauth.auth import CardFormatError, authenticate, enroll, load_card, save_card
from momauth.config import ConfigError, load_config
from momauth.frontend import ComparatorModel
from momauth.harness import PRESETS, StageError, enrollment_weights, run, write_csv
from momauth.process import read_population
from momauth.signature import extract_signature, read_traces, write_traces

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

# subcommands that are thin wrappers over one preset
PRESET_COMMANDS = {
    "gen-population": "populate",
    "adc-verify": "adc",
    "failure-analysis": "fig2",
    "sweep-temperature": "fig12ab",
    "optimize": "optimize",
}


def _summary(**kv):
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    print(" ".join(f"{k}={fmt(v)}" for k, v in kv.items()))


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output_dir(args.out)
    return cfg


def _run_preset(cfg, preset, workers):
    m = run(cfg, preset, workers=workers)
    _summary(status=m["status"], preset=preset, config_hash=cfg.hash[:16], seed=cfg.global_seed,
             files=len(m["files"]), **{k: v for k, v in m["summary"].items()})


def cmd_extract(cfg, args):
    if args.population is None:
        _run_preset(cfg, "extract", args.workers)
        return
    proc = cfg.authentic_process
    chips = read_population(args.population, proc)
    ex = cfg.extraction
    traces = [
        extract_signature(c, ComparatorModel.from_process(proc, cfg.global_seed, c.chip_id), cfg.cof_grid(),
                          ex.repeats, cfg.adc.v_ref, count_rule=ex.count_rule)
        for c in chips
    ]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_traces(traces, out / "traces.csv")
    _summary(status="ok", chips=len(traces), traces=str(out / "traces.csv"))


def cmd_enroll(cfg, args):
    traces = read_traces(args.traces, count_rule=cfg.extraction.count_rule)
    en = cfg.enrollment
    card = enroll(traces, en.k_sigma, enrollment_weights(cfg, args.workers), en.quantile, cfg.authentic, cfg.global_seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_card(card, out / "card.json")
    _summary(status="ok", enrolled=len(traces), d_threshold=card.d_threshold, card=str(out / "card.json"))


def cmd_authenticate(cfg, args):
    card = load_card(args.card)
    traces = read_traces(args.traces, count_rule=cfg.extraction.count_rule)
    rows, accepted = [], 0
    for t in traces:
        d = authenticate(t, card)
        accepted += d.accepted
        rows.append([t.chip_id, d.d_auth, d.d_auth_weighted, d.per_point_bound_violations, d.verdict])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "decisions.csv", ["chip_id", "d_auth", "d_auth_weighted", "bound_violations", "verdict"], rows)
    _summary(status="ok", chips=len(traces), accepted=accepted, rejected=len(traces) - accepted)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config (defaults when omitted)")
    common.add_argument("--seed", type=int, help="global seed, overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")

    parser = argparse.ArgumentParser(prog="momauth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-population", parents=[common], help="sample authentic chips to population.csv")
    p = sub.add_parser("extract", parents=[common], help="extract N_AC traces to traces.csv")
    p.add_argument("--population", help="population CSV to read instead of sampling")
    p = sub.add_parser("enroll", parents=[common], help="build card.json from a trace CSV")
    p.add_argument("--traces", required=True)
    p = sub.add_parser("authenticate", parents=[common], help="judge traces against a card")
    p.add_argument("--card", required=True)
    p.add_argument("--traces", required=True)
    sub.add_parser("adc-verify", parents=[common], help="ADC transfer curves")
    sub.add_parser("failure-analysis", parents=[common], help="failure rates and optimal thresholds")
    sub.add_parser("optimize", parents=[common], help="array-size sweep and sigma_Cu sensitivity")
    sub.add_parser("sweep-temperature", parents=[common], help="average-trace drift with temperature")
    p = sub.add_parser("run", parents=[common], help="run a preset pipeline")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        cfg = _config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            _run_preset(cfg, args.preset, args.workers)
        elif args.command in PRESET_COMMANDS:
            _run_preset(cfg, PRESET_COMMANDS[args.command], args.workers)
        elif args.command == "extract":
            cmd_extract(cfg, args)
        elif args.command == "enroll":
            cmd_enroll(cfg, args)
        elif args.command == "authenticate":
            cmd_authenticate(cfg, args)
    except (CardFormatError, FileNotFoundError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as e:
        print(f"stage failure: {e}", file=sys.stderr)
        _summary(status="failed", stage=e.stage)
        return EXIT_STAGE
    except Exception as e:
        print(f"stage failure: {type(e).__name__}: {e}", file=sys.stderr)
        _summary(status="failed", command=args.command)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
