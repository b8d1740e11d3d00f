"""Two-grid study of the divergence-identity residuals for a Gaussian stream-function flow."""
import argparse
import json

from roughscl.harness import divergence_audit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, nargs="+", default=[1 / 32, 1 / 64, 1 / 128])
    args = ap.parse_args()
    reports = [divergence_audit(h) for h in args.h]
    for a, b in zip(reports, reports[1:]):
        a["decay_to_next"] = a["residual_a"] / b["residual_a"]
    print(json.dumps(reports, indent=2))


if __name__ == "__main__":
    main()
