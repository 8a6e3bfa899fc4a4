"""Run one experiment scenario from a config file and print the verdict rows.

    python scripts/run_scenario.py theorem13 scripts/configs/theorem13.cfg
"""

import argparse
import sys

from nslab import experiments, io


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("scenario", choices=experiments.SCENARIOS)
    p.add_argument("config")
    p.add_argument("--output", "-o", help="override output_dir")
    args = p.parse_args()
    cfg = experiments.ExperimentConfig.from_config(io.parse_config(args.config, args.scenario))
    if args.output:
        cfg.output_dir = args.output
    report, elapsed = experiments.run(cfg)
    width = max(len(c.name) for c in report.checks)
    for name, measured, bound, ok, _ in report.rows():
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {measured:.6g} <= {bound:.6g}")
    print(f"{args.scenario}: {'pass' if report.passed else 'fail'} ({elapsed:.1f}s) -> {cfg.output_dir}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
