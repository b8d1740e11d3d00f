"""A-priori bound audits (sup-norm, TV, twin flux, entropy) on the 1D benchmarks, optionally B3."""
import argparse

from roughscl.harness import run_bound_audits


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/audits")
    ap.add_argument("--h", type=float, default=1 / 400)
    ap.add_argument("--with-2d", action="store_true")
    args = ap.parse_args()
    res = run_bound_audits(h=args.h, include_2d=args.with_2d)
    res.write(args.out)
    for a in res.audits:
        print(f"{'PASS' if a['pass'] else 'FAIL'}  {a['benchmark']:4s} {a['name']}")
    raise SystemExit(0 if res.passed else 1)


if __name__ == "__main__":
    main()
