"""Exact-solution oracles, the transform round trip and the divergence-identity audit."""
import argparse

from roughscl.harness import run_oracle_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/oracles")
    args = ap.parse_args()
    res = run_oracle_suite()
    res.write(args.out)
    for a in res.audits:
        print(f"{'PASS' if a['pass'] else 'FAIL'}  {a['name']}")
    raise SystemExit(0 if res.passed else 1)


if __name__ == "__main__":
    main()
