"""Command line entry point: ``cmcf <command> ...``.

Exit status 0 means every asserted check passed, 1 a violation, 2 a usage
or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import group as grp
from .config import ConfigError, load_config
from .experiment import (MANIFEST, SUMMARY, run_experiment, separation_report, verify_barriers,
                         verify_manifest, write_separation)

OK, VIOLATION, USAGE = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = run_experiment(cfg, Path(args.out) if args.out else None)
    summary = json.loads((out / SUMMARY).read_text())
    for c in summary["checks"]:
        status = "pass" if c["passed"] else "FAIL"
        print(f"{status}  {c['name']}: {c['value']:.6g} (limit {c['limit']:.6g})")
    print(f"artifacts in {out}")
    return OK if summary["passed"] else VIOLATION


def _cmd_check_group(args) -> int:
    try:
        g = grp.preset(args.preset)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rep = grp.verify_structure(g, samples=args.samples)
    print(f"{g.name}: dims {g.layer_dims}, step {g.step}")
    for name, value in rep.checks.items():
        print(f"  {name}: {value:.3g}")
    print(rep)
    return OK if rep.passed else VIOLATION


def _cmd_verify_barriers(args) -> int:
    cfg = load_config(args.config)
    try:
        rep = verify_barriers(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(f"barrier {rep.kind}: delta={rep.delta} eps={rep.eps} C0={rep.C0!r} h={rep.h}")
    print(f"  residual {rep.residual:.6g} (exact derivatives {rep.analytic_residual:.6g}), "
          f"slack {rep.slack:.6g}, {rep.nodes} nodes, worst at {rep.worst_point}")
    print("pass" if rep.passed else "FAIL")
    return OK if rep.passed else VIOLATION


def _cmd_compare(args) -> int:
    a, b = load_config(args.config_a), load_config(args.config_b)
    try:
        rows, cylindric = separation_report(a, b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_separation(Path(args.out), rows, cylindric)
    print("# separation: right-gauge proxy (approximate)")
    print(f"# outer set cylindric: {cylindric}")
    print("t,contained,separation")
    for r in rows:
        print(f"{r.t:.6g},{int(r.contained)},{r.separation:.6g}")
    return OK if all(r.contained for r in rows) else VIOLATION


def _cmd_report(args) -> int:
    out = Path(args.dir)
    if not (out / MANIFEST).is_file():
        raise ConfigError(f"{out} has no {MANIFEST}")
    bad = verify_manifest(out)
    for rel in bad:
        print(f"hash mismatch: {rel}")
    summary = json.loads((out / SUMMARY).read_text()) if (out / SUMMARY).is_file() else {"checks": [], "passed": True}
    for c in summary["checks"]:
        print(f"{'pass' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.6g} (limit {c['limit']:.6g})")
    ok = not bad and summary["passed"]
    print("manifest verified" if not bad else f"{len(bad)} file(s) changed")
    return OK if ok else VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmcf", description="Level-set horizontal mean curvature flow in Carnot groups")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write its artifact directory")
    r.add_argument("config")
    r.add_argument("--out", help="override [output] dir")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("check-group", help="verify the structure of a group preset")
    c.add_argument("preset", help="euclidean:<m>, heisenberg:<nu> or engel")
    c.add_argument("--samples", type=int, default=8)
    c.set_defaults(func=_cmd_check_group)

    b = sub.add_parser("verify-barriers", help="barrier sub-solution residual from a [barrier] section")
    b.add_argument("config")
    b.set_defaults(func=_cmd_verify_barriers)

    m = sub.add_parser("compare", help="containment and separation of two evolving sets")
    m.add_argument("config_a")
    m.add_argument("config_b")
    m.add_argument("--out", help="write the separation CSV here")
    m.set_defaults(func=_cmd_compare)

    rep = sub.add_parser("report", help="verify an artifact directory and print its checks")
    rep.add_argument("dir")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
