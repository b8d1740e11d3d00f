"""Cauchy experiment on B3: D_n over nested driver levels, then a finer grid to show the floor moving."""
import argparse
import json
from pathlib import Path

from roughscl.harness import default_config, run_wong_zakai


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/wongzakai")
    ap.add_argument("--fine-h", type=float, default=1 / 512)
    args = ap.parse_args()
    cfg = default_config("B3")
    base = run_wong_zakai(cfg)
    base.write(Path(args.out) / "h256")
    top = cfg.driver["levels"][-2:]
    fine = run_wong_zakai(cfg, h=args.fine_h, levels=top)
    fine.write(Path(args.out) / "fine")
    print(json.dumps({"D": base.summary["D"], "floor": base.summary["floor"],
                      "fine_floor": fine.summary["floor"]}, indent=2))


if __name__ == "__main__":
    main()
