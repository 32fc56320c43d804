"""
Fractional Wave Control Lab - command-line entry point
Runs one scenario through the experiment pipeline and writes CSV tables,
key: value reports and a manifest into the output directory.
"""

import argparse
import os
import sys
import traceback

import numpy as np
from dotenv import load_dotenv

from src.integrations.scenario_io import EXPERIMENTS, apply_overrides, load_scenario
from src.integrations.tables import columns_help
from src.numerics import configure_logging
from src.numerics.errors import LabError, NumericalError, VerificationFailed

EXIT_CODES = """exit codes:
  0  success
  1  verify: at least one invariant check failed
  2  scenario parse error (line / field)
  3  scenario validation error (which invariant)
  4  domain or control contract error
  5  numerical or assembly error
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_lab.py",
        description="Run a fractional wave control experiment from a scenario file",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"CSV columns per table:\n{columns_help()}\n\n{EXIT_CODES}",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("run",) + EXPERIMENTS:
        help_text = "run the experiment named in the scenario" if verb == "run" else f"run the {verb} experiment"
        p = sub.add_parser(verb, help=help_text, formatter_class=argparse.RawDescriptionHelpFormatter,
                           epilog=f"CSV columns per table:\n{columns_help()}")
        p.add_argument("--scenario", required=True, help="Scenario INI file")
        p.add_argument("--threads", type=int, default=None, help="Worker threads for the Duhamel integrals")
        p.add_argument("--seed", type=int, default=None, help="Seed for randomized checks (u64)")
        p.add_argument("--out", default=None, help="Output directory (overrides FRACLAB_OUTPUT_DIR)")
        p.add_argument("--verbose", action="store_true", help="Debug logging from the numerical library")
    return parser


def _origin(exc: BaseException) -> str:
    """Innermost module of the lab that the exception passed through."""
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if "src" in f.filename.replace("\\", "/").split("/")]
    if not frames:
        return "run_lab"
    return f"{os.path.basename(frames[-1].filename)}:{frames[-1].lineno}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    load_dotenv()
    configure_logging("DEBUG" if args.verbose else os.getenv("FRACLAB_LOG_LEVEL", "WARNING"))

    # imported here so --help stays fast
    from src.agents.lab_graph import run_pipeline

    print("\n" + "=" * 70)
    print("🔬 FRACTIONAL WAVE CONTROL LAB")
    print("=" * 70)

    try:
        scenario = load_scenario(args.scenario)
        scenario = apply_overrides(
            scenario,
            experiment=None if args.verb == "run" else args.verb,
            output_dir=args.out,
            threads=args.threads,
            seed=args.seed,
        )
        print(f"Scenario:   {args.scenario}")
        print(f"Experiment: {scenario.experiment}")
        print(f"Output:     {scenario.output_dir}")
        print("=" * 70)

        result = run_pipeline(scenario)
        if result.get("verification_passed") is False:
            raise VerificationFailed("invariant suite reported failures")
    except LabError as exc:
        print(f"\n❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        # errors raised by numpy/scipy outside LabError
        print(f"\n❌ {type(exc).__name__} in {_origin(exc)}: {exc}", file=sys.stderr)
        return NumericalError.exit_code

    print("\n" + "=" * 70)
    print(f"✅ Done: {len(result['artifacts'])} files in {scenario.output_dir}")
    print("=" * 70)
    return 0


if __name__ == "__main__":
    sys.exit(main())
