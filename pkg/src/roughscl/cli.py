"""Command-line entry point: ``roughscl <subcommand> --config cfg.json --out dir``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _set_threads(n: int | None) -> None:
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _load(args):
    from .harness import ExperimentConfig, default_config

    if args.config:
        return ExperimentConfig.load(args.config)
    return default_config(args.benchmark)


def _cmd_lift(args) -> int:
    from .harness import make_driver, write_rows
    from .roughpath import lift, metric_report

    cfg = _load(args)
    path = make_driver(cfg)
    L = lift(path, cfg.p)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    sig1, sig2 = L.running_signature(path.times)
    for t, a, A in zip(path.times, sig1, sig2):
        row = {"t": float(t)}
        row.update({f"z{i + 1}": float(a[i]) for i in range(path.dim)})
        row.update({f"Z{i + 1}{j + 1}": float(A[i, j]) for i in range(path.dim) for j in range(path.dim)})
        rows.append(row)
    write_rows(out / "lift.csv", rows)
    report = metric_report(L)
    (out / "lift.json").write_text(json.dumps({"config": cfg.to_dict(), "metrics": report.to_dict(),
                                               "segments": int(path.n_segments)}, indent=2, sort_keys=True))
    return 0


def _cmd_flow(args) -> int:
    import numpy as np

    from .flows import solve_flows
    from .harness import make_driver

    cfg = _load(args)
    grid = cfg.make_grid(args.h)
    flow, affine = solve_flows(cfg.coeffs(), make_driver(cfg), grid.node_lattice(), cfg.snapshot_times(),
                               cfg.flow.get("substeps", 32))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flow.to_csv(out / "flow.csv")
    manifest = {
        "config": cfg.to_dict(),
        "volume_defect": flow.volume_defect(),
        "inverse_defect": flow.inverse_defect(),
        "mu": np.asarray(affine.mu).tolist(),
        "rho_max": float(np.max(np.abs(affine.rho))),
    }
    (out / "flow.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def _cmd_solve(args) -> int:
    from .harness import make_driver, run_pipeline

    cfg = _load(args)
    res = run_pipeline(cfg, make_driver(cfg), args.h)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.v.to_csv(out / "solution.csv")
    manifest = res.v.manifest()
    manifest["config"] = cfg.to_dict()
    manifest["alpha_max"] = res.alpha_max
    (out / "solution.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def _cmd_wongzakai(args) -> int:
    from .harness import run_wong_zakai

    cfg = _load(args)
    res = run_wong_zakai(cfg, args.h)
    res.write(args.out)
    return 0 if res.passed else 1


def _cmd_rate(args) -> int:
    from .harness import run_rate_experiment

    cfg = _load(args)
    res = run_rate_experiment(cfg, h=args.h)
    res.write(args.out)
    return 0 if res.passed else 1


def _cmd_audit(args) -> int:
    from .harness import run_bound_audits

    cfgs = [_load(args)] if args.config else None
    res = run_bound_audits(cfgs, h=args.h or 1 / 400)
    res.write(args.out)
    for a in res.audits:
        print(f"{'PASS' if a['pass'] else 'FAIL'} {a['benchmark']} {a['name']}")
    return 0 if res.passed else 1


def _cmd_oracle(args) -> int:
    from .harness import run_oracle_suite

    cfg = _load(args) if (args.config or args.benchmark != "B1") else None
    res = run_oracle_suite(cfg)
    res.write(args.out)
    for a in res.audits:
        print(f"{'PASS' if a['pass'] else 'FAIL'} {a['name']}")
    return 0 if res.passed else 1


COMMANDS = {
    "lift": _cmd_lift,
    "flow": _cmd_flow,
    "solve": _cmd_solve,
    "wongzakai": _cmd_wongzakai,
    "rate": _cmd_rate,
    "audit": _cmd_audit,
    "oracle": _cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughscl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment configuration (JSON)")
        p.add_argument("--benchmark", default="B1", help="shipped benchmark used when no config is given")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--h", type=float, default=None, help="override the grid spacing")
        p.add_argument("--threads", type=int, default=None, help="thread count for numerical libraries")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
