"""Gap versus rough distance on the pure-transport benchmark B1."""
import argparse
import json

from roughscl.harness import default_config, run_rate_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/rate")
    ap.add_argument("--h", type=float, default=None)
    args = ap.parse_args()
    res = run_rate_experiment(default_config("B1"), h=args.h)
    res.write(args.out)
    print(json.dumps(res.rows, indent=2))
    print("ratio spread", res.summary["ratio_spread"])


if __name__ == "__main__":
    main()
