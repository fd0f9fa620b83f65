"""``ltv-steer``: scenario files in, reports and plot-ready CSV out.

Exit status: 0 success, 2 infeasible target (a clean negative answer),
1 error (malformed scenario, numerical failure).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import harness, synthesis
from .errors import InfeasibleTarget, ScenarioError, SteeringError
from .gramian import ctrl_gramian, find_partition
from .matcore import kernel_projection, range_split
from .ode import IntegratorOptions
from .scenario import (EXAMPLES, Scenario, example_ex1, example_ex2, load_scenario,
                       sphere_points)
from .synthesis import GainSchedule, PhiTarget, Segment, SigmaTarget

log = logging.getLogger("ltvsteer")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
ELLIPSE_TIMES_EX2 = tuple(k / 6 for k in range(7))


# --------------------------------------------------------------------------- output

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _names(prefix, rows, cols):
    return [f"{prefix}_{i + 1}_{j + 1}" for i in range(rows) for j in range(cols)]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_schedule(out, sys, schedule: GainSchedule):
    n, m = sys.n, sys.m
    header = ["segment", "t"] + _names("Pi", n, n) + _names("K", m, n)
    rows = []
    for k, seg in enumerate(schedule.segments):
        for t, P, K in zip(seg.times, seg.pi, seg.K):
            rows.append([k, t, *P.ravel(), *K.ravel()])
    _write_csv(os.path.join(out, "schedule.csv"), header, rows)
    _write_json(os.path.join(out, "schedule.json"), schedule_to_json(schedule))


def schedule_to_json(schedule: GainSchedule):
    return {"provenance": schedule.provenance,
            "segments": [{"start": s.start, "end": s.end, "pi0": s.pi0} for s in schedule.segments]}


def schedule_from_json(doc, n) -> GainSchedule:
    try:
        segs = []
        for k, s in enumerate(doc["segments"]):
            P = np.asarray(s["pi0"], dtype=float)
            if P.shape != (n, n):
                raise ScenarioError(f"schedule.segments[{k}].pi0: expected shape ({n}, {n})")
            empty = np.empty((0, n, n))
            segs.append(Segment(float(s["start"]), float(s["end"]), P, np.empty(0), empty,
                                np.empty((0, 0, n))))
        return GainSchedule(tuple(segs), doc.get("provenance", "loaded"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"schedule: malformed ({exc})") from None


def write_trajectory(out, traj: harness.Trajectory):
    n = traj.phi.shape[1]
    header = ["t"] + _names("Phi", n, n)
    cols = [traj.times[:, None], traj.phi.reshape(len(traj.times), -1)]
    if traj.sigma is not None:
        header += _names("Sigma", n, n)
        cols.append(traj.sigma.reshape(len(traj.times), -1))
    if traj.tracers is not None:
        p = traj.tracers.shape[1]
        header += [f"x{k + 1}_{i + 1}" for k in range(p) for i in range(n)]
        cols.append(traj.tracers.reshape(len(traj.times), -1))
    _write_csv(os.path.join(out, "trajectory.csv"), header, np.hstack(cols))


def write_ellipses(out, items):
    n = items[0][1].size
    header = ["t"] + [f"center_{i + 1}" for i in range(n)] + [
        f"axis{k + 1}_{i + 1}" for k in range(n) for i in range(n)]
    rows = [[t, *c, *axes.T.ravel()] for t, c, axes in items]
    _write_csv(os.path.join(out, "ellipses.csv"), header, rows)


# --------------------------------------------------------------------------- tasks

class _Context:
    def __init__(self, scenario: Scenario, quad=None, fac=None, seed=None):
        tol = dict(scenario.tolerances)
        if quad is not None:
            tol["quad"] = quad
        if fac is not None:
            tol["fac"] = fac
        self.tol = tol
        self.seed = scenario.seed if seed is None else seed
        self.options = IntegratorOptions(rtol=tol["quad"], atol=tol["quad"])
        self.timings = {}

    def timed(self, key, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*a, **kw)
        finally:
            self.timings[key] = time.perf_counter() - t0


def _gramian_report(sys, ctx):
    rep = ctx.timed("gramian", ctrl_gramian, sys, 0.0, sys.horizon, ctx.options, ctx.tol["rank"])
    return {"decision": "computed", "rank": rep.rank, "G": rep.G, "H": rep.H,
            "phi_A_T": rep.phi, "range_basis": rep.split.range_basis,
            "relation_residual": rep.relation_residual}


def _partition_report(sys, ctx):
    p = ctx.timed("partition", find_partition, sys, sys.horizon, ctx.tol["rank"], ctx.options)
    return {"decision": "certified", "times": p.times, "global_rank": p.global_rank,
            "segment_ranks": [r.rank for r in p.segment_reports], "strategy": p.strategy}


def _phi_outputs(out, sys, schedule, phi_f, ctx, tracers=None):
    ver = ctx.timed("verify", harness.verify, sys, schedule, PhiTarget(phi_f),
                    options=ctx.options, tracers=tracers)
    write_schedule(out, sys, schedule)
    write_trajectory(out, ver.trajectory)
    return ver


def _steer_phi(out, sc, ctx):
    sys, phi_f = sc.system, sc.target["phi_f"]
    method = sc.options.get("method", "auto")
    kw = dict(tol=ctx.tol["membership"], options=ctx.options, rank_tol=ctx.tol["rank"])
    if method == "single":
        fn, args = synthesis.synth_phi_single_rde, {}
    elif method == "five":
        fn, args = synthesis.synth_phi_five_segment, {"fac_tol": ctx.tol["fac"], "seed": ctx.seed}
    elif method == "auto":
        fn, args = synthesis.steer_phi, {"fac_tol": ctx.tol["fac"], "seed": ctx.seed}
    else:
        raise ScenarioError("method: expected auto, single or five")
    schedule = ctx.timed("synthesis", fn, sys, sys.horizon, phi_f, **kw, **args)
    ver = _phi_outputs(out, sys, schedule, phi_f, ctx, sc.options.get("tracers"))
    return {"decision": "steered", "certificate": schedule.info, **ver.summary()}


def _steer_sigma(out, sc, ctx, mean0=None, ellipse_times=None):
    sys = sc.system
    s0, sf = sc.target["sigma0"], sc.target["sigma_f"]
    method = sc.options.get("method", "general")
    kw = dict(options=ctx.options, rank_tol=ctx.tol["rank"])
    if method == "general":
        schedule = ctx.timed("synthesis", synthesis.synth_sigma, sys, sys.horizon, s0, sf,
                             tol=ctx.tol["membership"], **kw)
    elif method == "controllable":
        schedule = ctx.timed("synthesis", synthesis.synth_sigma_controllable, sys,
                             sys.horizon, s0, sf, **kw)
    else:
        raise ScenarioError("method: expected general or controllable")
    mean0 = sc.options.get("mean0") if mean0 is None else mean0
    ellipse_times = sc.options.get("times") if ellipse_times is None else ellipse_times
    tracers = None if mean0 is None else np.atleast_2d(mean0)
    ver = ctx.timed("verify", harness.verify, sys, schedule, SigmaTarget(s0, sf),
                    options=ctx.options, tracers=tracers, extra_times=ellipse_times or ())
    write_schedule(out, sys, schedule)
    write_trajectory(out, ver.trajectory)
    write_ellipses(out, harness.ellipses(ver.trajectory, mean0, ellipse_times))
    return {"decision": "steered", "certificate": schedule.info, **ver.summary()}


def _check_phi(sc, ctx):
    mem = ctx.timed("membership", synthesis.membership_phi, sc.system, sc.system.horizon,
                    sc.target["phi_f"], ctx.tol["membership"], ctx.options, ctx.tol["rank"])
    if not mem.member:
        raise InfeasibleTarget("target is not a reachable transition matrix", mem.certificate())
    return {"decision": "member", "certificate": mem.certificate(),
            "barPhi_f": mem.bar, "tildePhi_f": mem.tilde}


def _check_sigma(sc, ctx):
    mem = ctx.timed("membership", synthesis.membership_sigma, sc.system, sc.system.horizon,
                    sc.target["sigma0"], sc.target["sigma_f"], ctx.tol["membership"],
                    ctx.options, ctx.tol["rank"])
    if not mem.member:
        raise InfeasibleTarget("target covariance is not reachable", mem.certificate())
    return {"decision": "member", "certificate": mem.certificate()}


def _simulate(out, sc, ctx, base_dir):
    sys = sc.system
    ref = sc.options["schedule"]
    if isinstance(ref, str):
        path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
        try:
            with open(path) as fh:
                ref = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"schedule: cannot read {path} ({exc})") from None
    schedule = schedule_from_json(ref, sys.n)
    tgt = sc.target
    result = {"decision": "simulated"}
    if "phi_f" in tgt:
        ver = ctx.timed("simulate", harness.verify, sys, schedule, PhiTarget(tgt["phi_f"]),
                        options=ctx.options, tracers=sc.options.get("tracers"))
        traj = ver.trajectory
        result.update(ver.summary())
    elif "sigma_f" in tgt and "sigma0" in tgt:
        ver = ctx.timed("simulate", harness.verify, sys, schedule,
                        SigmaTarget(tgt["sigma0"], tgt["sigma_f"]), options=ctx.options,
                        tracers=sc.options.get("tracers"))
        traj = ver.trajectory
        result.update(ver.summary())
    else:
        traj = ctx.timed("simulate", harness.simulate, sys, schedule,
                         sigma0=tgt.get("sigma0"), tracers=sc.options.get("tracers"),
                         options=ctx.options)
    result["phi_T"] = traj.phi_T
    write_trajectory(out, traj)
    return result


def _example(name, out, ctx):
    if name == "ex1":
        sys, phi_f = example_ex1()
        rep = ctx.timed("gramian", ctrl_gramian, sys, 0.0, sys.horizon, ctx.options,
                        ctx.tol["rank"])
        mem = synthesis.membership_phi(sys, sys.horizon, phi_f, ctx.tol["membership"],
                                       ctx.options, ctx.tol["rank"], report=rep)
        schedule = ctx.timed("synthesis", synthesis.synth_phi_five_segment, sys, sys.horizon,
                             phi_f, tol=ctx.tol["membership"], fac_tol=ctx.tol["fac"],
                             seed=ctx.seed, options=ctx.options, rank_tol=ctx.tol["rank"])
        ver = _phi_outputs(out, sys, schedule, phi_f, ctx, sphere_points())
        traj = ver.trajectory
        decay = float(np.max(np.abs(traj.phi[:, 2, 2] - np.exp(-0.43 * traj.times))))
        return {"decision": "steered", "example": "ex1", "rank_H": rep.rank,
                "det_barPhi_f": mem.det_bar, "membership": mem.certificate(),
                "phi_f": phi_f, "phi_T": ver.achieved, "x3_open_loop_deviation": decay,
                "certificate": schedule.info, **ver.summary()}
    sys, s0, sf, mu0 = example_ex2()
    off = example_ex2(sigma22=np.exp(0.6) + 0.1)[2]
    rejected = not synthesis.membership_sigma(sys, 1.0, s0, off, ctx.tol["membership"],
                                              ctx.options, ctx.tol["rank"]).member
    sc = Scenario("steer-sigma", sys, 1.0, {"sigma0": s0, "sigma_f": sf}, ctx.tol, ctx.seed)
    res = _steer_sigma(out, sc, ctx, mean0=mu0, ellipse_times=list(ELLIPSE_TIMES_EX2))
    rep = ctrl_gramian(sys, 0.0, 1.0, ctx.options, ctx.tol["rank"])
    return {**res, "example": "ex2", "rank_G": range_split(rep.G, ctx.tol["rank"]).rank,
            "P_G": kernel_projection(rep.G, ctx.tol["rank"]),
            "perturbed_sigma22_rejected": rejected, "mean0": mu0}


def execute(sc: Scenario, out, ctx: _Context, base_dir="."):
    """Run one scenario; returns (exit status, report dict)."""
    os.makedirs(out, exist_ok=True)
    report = {"task": sc.task, "seed": ctx.seed, "tolerances": ctx.tol}
    try:
        if sc.task == "example":
            report.update(_example(sc.name, out, ctx))
        elif sc.task == "gramian":
            report.update(_gramian_report(sc.system, ctx))
        elif sc.task == "partition":
            report.update(_partition_report(sc.system, ctx))
        elif sc.task == "check-phi":
            report.update(_check_phi(sc, ctx))
        elif sc.task == "check-sigma":
            report.update(_check_sigma(sc, ctx))
        elif sc.task == "steer-phi":
            report.update(_steer_phi(out, sc, ctx))
        elif sc.task == "steer-sigma":
            report.update(_steer_sigma(out, sc, ctx))
        elif sc.task == "simulate":
            report.update(_simulate(out, sc, ctx, base_dir))
        status = EXIT_OK
    except InfeasibleTarget as exc:
        report.update({"decision": "infeasible", "message": str(exc),
                       "certificate": exc.certificate})
        status = EXIT_INFEASIBLE
    report["timings"] = ctx.timings
    _write_json(os.path.join(out, "report.json"), report)
    return status, report


# --------------------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="ltv-steer",
                                description="Steer transition matrices and covariances of "
                                            "linear time-varying systems.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", required=True)
    r.add_argument("--tol-quad", type=float, default=None)
    r.add_argument("--tol-fac", type=float, default=None)
    r.add_argument("--seed", type=int, default=None)
    e = sub.add_parser("example", help="reproduce a built-in example")
    e.add_argument("name", choices=EXAMPLES)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            sc = load_scenario(args.scenario)
            ctx = _Context(sc, args.tol_quad, args.tol_fac, args.seed)
            base = os.path.dirname(os.path.abspath(args.scenario))
        else:
            sc = Scenario("example", None, None, name=args.name)
            ctx = _Context(sc, seed=args.seed)
            base = "."
        status, report = execute(sc, args.out, ctx, base)
    except (ScenarioError, SteeringError, OSError) as exc:
        print(f"ltv-steer: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if status == EXIT_INFEASIBLE:
        print(f"ltv-steer: infeasible: {report.get('message', '')}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
