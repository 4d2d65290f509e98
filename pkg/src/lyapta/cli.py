"""Command-line front end.

Exit codes: 0 pass, 2 usage or spec error, 3 build error, 4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .automaton import AutomatonError, integer_scale
from .bounds import BoundsError
from .oracle import completeness_check, mc_soundness_check, refinement_experiment
from .partition import PartitionError, dump_partition
from .problem import SpecError, build, load_problem
from .reach import ReachError, reach
from .serialize import FormatError, dumps_native, load, to_xml
from .system import LyapunovError

EXIT_OK, EXIT_USAGE, EXIT_BUILD, EXIT_FAIL = 0, 2, 3, 4
BUILD_ERRORS = (BoundsError, PartitionError, AutomatonError, LyapunovError)


class Usage(Exception):
    pass


def _yn(v: bool) -> str:
    return "yes" if v else "no"


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_automaton(path):
    try:
        return load(path)
    except OSError as exc:
        raise Usage(f"cannot read {path}: {exc}") from None
    except FormatError as exc:
        raise Usage(f"{path}: {exc}") from None


def _frac(s: str) -> Fraction:
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        raise Usage(f"not a number: {s!r}") from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_abstract(args) -> int:
    prob = load_problem(args.spec)
    ab = build(prob, mode=args.mode, grid_step=args.grid_step)
    out = args.output or f"{Path(args.spec.split(':')[-1]).stem}.automaton.json"
    _write(out, dumps_native(ab.automaton))
    if args.dump_partition:
        _write(args.dump_partition, dump_partition(ab.partition))
    s = ab.summary()
    print(f"fingerprint     {s['fingerprint']}")
    print(f"mode            {ab.mode}")
    print(f"locations       {s['locations']}")
    print(f"transitions     {s['transitions']}")
    print(f"deterministic   {_yn(s['deterministic'])}")
    print(f"bisim-cond      {_yn(s['bisim_condition'])}")
    print(f"refinable-pre   {_yn(s['refinable_pre'])}")
    if s["thin_components"]:
        print(f"thin            {' '.join(s['thin_components'])}")
    if out != "-":
        print(f"wrote           {out}")
    return EXIT_OK


def cmd_reach(args) -> int:
    ta = _load_automaton(args.automaton)
    t1, t2 = _frac(args.window[0]), _frac(args.window[1])
    if t1 > t2 or t1 < 0:
        raise Usage(f"window [{args.window[0]}, {args.window[1]}] needs 0 <= t1 <= t2")
    if not ta.initial:
        raise Usage("automaton has no initial locations")
    res = reach(ta, None, t1, t2, args.initial_clocks)
    report = res.to_dict()
    report["window"] = [args.window[0], args.window[1]]
    for l in res.locations:
        print(l)
    if args.concretize:
        vols = [ta.info.get(l, {}).get("volume") for l in res.locations]
        if any(v is None for v in vols):
            raise Usage("automaton file carries no region volumes")
        report["volume"] = sum(vols)
        print(f"volume {report['volume']:.6g}")
    if args.report:
        _write(args.report, json.dumps(report, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    prob = load_problem(args.spec)
    ab = build(prob, mode=args.mode, grid_step=args.grid_step)
    ta = ab.automaton
    if args.automaton:
        ta = _load_automaton(args.automaton)
        if ta.fingerprint != ab.partition.fingerprint:
            raise Usage(f"automaton fingerprint {ta.fingerprint} does not match spec partition "
                        f"{ab.partition.fingerprint}")
    if not ta.initial:
        raise Usage("spec has no initial_box")
    seed = prob.seed if args.seed is None else args.seed
    N = prob.samples if args.samples is None else args.samples
    horizon = prob.horizon if args.horizon is None else args.horizon
    sound = mc_soundness_check(prob.field, ab.partition, ta, sorted(ta.initial), horizon, N, prob.dt,
                               prob.times_per_traj, seed)
    checks = [sound.to_dict()]
    ok = sound.passed
    if ab.mode == "complete":
        for f in prob.families:
            c = completeness_check(prob.field, f.lyap, f.levels, seed=seed)
            d = c.to_dict()
            d["family"] = f.index
            checks.append(d)
            ok = ok and c.passed
    report = {"fingerprint": ab.partition.fingerprint, "spec": prob.spec_hash, "seed": seed,
              "mode": ab.mode, "passed": ok, "checks": checks}
    lines = [f"fingerprint {ab.partition.fingerprint}", f"seed {seed}",
             f"soundness {'PASS' if sound.passed else 'FAIL'}: {sound.violations} violations in "
             f"{sound.checks} checks ({sound.samples} samples, {sound.gaps} modeling gaps)"]
    for w in sound.witnesses[:5]:
        lines.append(f"  sample {w.sample} x0={w.x0} t={w.time:.6g} in {w.actual}, allowed {w.allowed}")
    for d in checks[1:]:
        status = "PASS" if d["passed"] else ("SKIP" if not d["ran"] else "FAIL")
        extra = d["reason"] or f"max deviation {d['max_rel_deviation']:.3g}"
        lines.append(f"completeness family {d['family']} {status}: {extra}")
    print("\n".join(lines))
    if args.report:
        _write(args.report, json.dumps(report, indent=1, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_refine(args) -> int:
    prob = load_problem(args.spec)
    if len(prob.families) != prob.field.dim:
        raise PartitionError(f"refinable-pre = no: {len(prob.families)} slice families in dimension "
                             f"{prob.field.dim}")
    if prob.initial_box is None:
        raise Usage("refine needs an initial_box")
    depths = args.depths if args.depths else list(range(prob.refinement_depth + 1))
    horizon = args.horizon
    if horizon is None:
        horizon = prob.horizon if prob.refinement_horizon is None else prob.refinement_horizon
    seed = prob.seed if args.seed is None else args.seed
    res = refinement_experiment(prob.field, prob.families, prob.domain_box, prob.initial_box, horizon,
                                depths, args.grid_step or prob.grid_step, prob.samples, seed, prob.dt)
    print(res.table())
    if args.report:
        doc = {"depths": res.depths, "levels": res.level_counts, "volumes": res.volumes,
               "mc_floor": res.mc_floor, "seed": seed, "horizon": horizon,
               "non_increasing": res.non_increasing, "above_floor": res.above_floor}
        _write(args.report, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return EXIT_OK if res.non_increasing and res.above_floor else EXIT_FAIL


def cmd_export(args) -> int:
    ta = _load_automaton(args.automaton)
    if args.format == "native":
        text = dumps_native(ta)
    else:
        if not ta.initial:
            raise Usage("automaton has no initial locations")
        text = to_xml(ta)
        print(f"scale {integer_scale(ta)}", file=sys.stderr)
    _write(args.output or "-", text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lyapta", description="Timed-automaton abstractions from Lyapunov slices.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def spec_opts(q):
        q.add_argument("spec", help="problem YAML file, or bundled:NAME")
        q.add_argument("--grid-step", type=float)

    a = sub.add_parser("abstract", help="build the cell automaton")
    spec_opts(a)
    a.add_argument("--mode", choices=["sound", "complete"])
    a.add_argument("-o", "--output", help="automaton file ('-' for stdout)")
    a.add_argument("--dump-partition", metavar="FILE")
    a.set_defaults(func=cmd_abstract)

    r = sub.add_parser("reach", help="locations reachable in a time window")
    r.add_argument("automaton")
    r.add_argument("--window", nargs=2, metavar=("T1", "T2"), required=True)
    r.add_argument("--concretize", action="store_true", help="also print the region volume")
    r.add_argument("--initial-clocks", choices=["zero", "anywhere"], default="zero")
    r.add_argument("--report", metavar="FILE")
    r.set_defaults(func=cmd_reach)

    v = sub.add_parser("validate", help="Monte-Carlo soundness (and completeness) checks")
    spec_opts(v)
    v.add_argument("automaton", nargs="?")
    v.add_argument("--mode", choices=["sound", "complete"])
    v.add_argument("-N", "--samples", type=int)
    v.add_argument("--horizon", type=float)
    v.add_argument("--seed", type=int)
    v.add_argument("--report", metavar="FILE")
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("refine", help="reach volume under level-set refinement")
    spec_opts(f)
    f.add_argument("--depths", type=int, nargs="+")
    f.add_argument("--horizon", type=float)
    f.add_argument("--seed", type=int)
    f.add_argument("--report", metavar="FILE")
    f.set_defaults(func=cmd_refine)

    e = sub.add_parser("export", help="write the automaton in another format")
    e.add_argument("automaton")
    e.add_argument("--format", choices=["native", "xml"], default="native")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (Usage, SpecError, ReachError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BUILD_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUILD


if __name__ == "__main__":
    sys.exit(main())
