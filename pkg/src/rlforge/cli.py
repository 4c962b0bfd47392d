"""Command line entry point: ``rlforge <stage> --config <path> [...]``.

Set ``RLFORGE_LOG`` (DEBUG, INFO, WARNING...) to control log verbosity.
Exit codes: 0 success, 2 config error, 3 missing inputs, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from rlforge.pipeline import STAGES, ConfigError, PipelineConfig, PipelineError, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlforge", description=__doc__.splitlines()[0])
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", required=True, help="pipeline YAML file")
    p.add_argument("--out", help="output root (overrides the config)")
    p.add_argument("--jobs", type=int, help="worker threads per stage")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--formats", help="comma-separated subset of rd,rda,targets,features")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RLFORGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    formats = None if args.formats is None else [f.strip() for f in args.formats.split(",")]
    try:
        cfg = PipelineConfig.load(args.config, out=args.out, jobs=args.jobs, seed=args.seed,
                                  formats=formats)
        result = run(args.stage, cfg)
    except PipelineError as exc:
        print(f"rlforge {args.stage}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"rlforge {args.stage}: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as exc:
        print(f"rlforge {args.stage}: {exc}", file=sys.stderr)
        return 4
    if args.stage == "report":
        sys.stdout.write(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
