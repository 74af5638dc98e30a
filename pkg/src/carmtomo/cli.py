"""Command-line front end.

    carmtomo [--config PATH|NAME] [--seed N] [--out-dir DIR] [--threads N]
             {simulate,project,reconstruct,metrics,export,all}
             [--views N] [--algorithms bp,fbp,...]

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ALGORITHMS, STAGES, bundled_names
from .exceptions import ConfigError, StageError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _algorithms(text):
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [n for n in names if n not in ALGORITHMS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"choose from {','.join(ALGORITHMS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carmtomo", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", default="paper_sim",
                   help=f"scenario file or bundled name ({', '.join(bundled_names())})")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--out-dir", default="carmtomo-out")
    p.add_argument("--threads", type=int, default=None, help="worker threads for numeric kernels")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("stage", choices=STAGES + ("all",))
    p.add_argument("--views", type=int, default=None, help="override the number of views")
    p.add_argument("--algorithms", type=_algorithms, default=None,
                   help="comma-separated subset of " + ",".join(ALGORITHMS))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .pipeline import run_scenario

    stages = STAGES if args.stage == "all" else (args.stage,)
    try:
        out = run_scenario(args.config, args.out_dir, stages=stages, seed=args.seed,
                           threads=args.threads, n_views=args.views, algorithms=args.algorithms)
    except ConfigError as exc:
        print(f"carmtomo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"carmtomo: {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
