"""Full protocol on synthetic waves with the tuned tree configurations.

Writes every artifact under --out-dir and prints the summary.  Takes about
twenty minutes on one core; --tune adds the grid search (much longer).
"""
import argparse
import json
import sys
import tempfile

from wavexplain.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out-dir", default="runs/full")
    ap.add_argument("--tune", action="store_true")
    args = ap.parse_args()
    with tempfile.NamedTemporaryFile("w", suffix=".json") as cfg:
        json.dump({"tune": args.tune}, cfg)
        cfg.flush()
        return cli_main(["--seed", str(args.seed), "--out-dir", args.out_dir,
                         "--config", cfg.name, "run-all"])


if __name__ == "__main__":
    sys.exit(main())
