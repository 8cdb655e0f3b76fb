"""Command-line entry point: ``sentisim {synth,replicate,simulate,report}``.

Exit codes: 0 success, 1 configuration or usage error, 2 data error,
3 backend error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, SentisimError
from .report import cmd_replicate, cmd_report, cmd_simulate, cmd_synth, load_config


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sentisim", description="Survey replication and framed-sentiment simulation with LLM agents.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="draw a synthetic population from a sampling frame")
    p.add_argument("--frame", required=True, help="sampling frame YAML (builtin:demo_frame.yaml for the demo)")
    p.add_argument("--schema", default="builtin:demo_schema.yaml", help="survey schema YAML")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="respondents CSV to write")

    for name, text in (("replicate", "ask agents the survey items and score them against their human answers"),
                       ("simulate", "expose agents to framed scenarios and score their sentiments")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment YAML")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--backend", help="override the backend kind (e.g. mock_echo_truth, http)")
        p.add_argument("--trials", type=int, help="override the number of trials")
        p.add_argument("--encoding", choices=("categorical", "contextualized", "both"))
        p.add_argument("--out-dir", help="override the output directory")

    p = sub.add_parser("report", help="rebuild tables and plot data from results CSVs")
    p.add_argument("results", nargs="+", help="results.csv files from replicate or simulate")
    p.add_argument("--out-dir", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            path = cmd_synth(args.frame, args.schema, args.seed, args.out)
            print(f"wrote {path}")
        elif args.command in ("replicate", "simulate"):
            if args.trials is not None and args.trials < 1:
                raise ConfigError("--trials must be at least 1")
            cfg = load_config(args.config, {"seed": args.seed, "backend_kind": args.backend, "n_trials": args.trials,
                                            "encoding": args.encoding})
            if args.out_dir:
                cfg.out_dir = Path(args.out_dir)
            run = cmd_replicate if args.command == "replicate" else cmd_simulate
            run(cfg)
            print((cfg.out_dir / "report.txt").read_text(encoding="utf-8"), end="")
        else:
            cmd_report(args.results, args.out_dir)
            print((Path(args.out_dir) / "summary.txt").read_text(encoding="utf-8"), end="")
    except SentisimError as exc:
        print(f"sentisim: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
