"""Command-line interface.

Subcommands mirror the analysis stages: ``validate``, ``velocities``,
``counts``, ``reduce``, ``branches``, ``verify``, and the end-to-end
``analyze``.  The exit code is zero only when every asserted check passes.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .branches import continue_branch, multiplier_limit, seed_directions, verify_branch
from .config import load_system
from .counts import count_report
from .errors import ParseError, ValidationError
from .flow import integrate, noether_residual, relative_equilibrium_residual
from .model import Tolerances, check_invariance, validate_action
from .pipeline import PipelineOptions, emit_report, run_pipeline
from .reduction import build_frame, lemma_residuals
from .systems import BUILTIN_NAMES
from .velocity import find_roots


def _add_common(parser):
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="path to a system definition file")
    src.add_argument("--builtin", choices=BUILTIN_NAMES,
                     help="name of a built-in example system")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="parameter override (repeatable)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for sampled checks and probes")
    parser.add_argument("--out", help="write output to this file instead of stdout")
    parser.add_argument("--format", choices=("text", "structured"), default="text")
    for name in ("structural", "invariance", "kernel-rel", "branch", "flow"):
        parser.add_argument(f"--tol-{name}", type=float, default=None,
                            help=f"override the {name.replace('-', '_')} tolerance")


def _parse_overrides(pairs):
    out = {}
    for item in pairs:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got '{item}'")
        key, val = item.split("=", 1)
        out[key.strip()] = float(val)
    return out


def _load(args):
    overrides = _parse_overrides(args.set)
    if args.builtin:
        model, analysis = load_system(args.builtin, overrides, with_options=True)
    else:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        model, analysis = load_system(text, overrides, with_options=True)
    tol_updates = {}
    for name in ("structural", "invariance", "kernel_rel", "branch", "flow"):
        val = getattr(args, f"tol_{name}")
        if val is not None:
            tol_updates[name] = val
    if tol_updates:
        from dataclasses import replace

        model.tol = replace(model.tol, **tol_updates)
    return model, analysis


def _emit(args, payload):
    data = payload if isinstance(payload, bytes) else payload.encode()
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.write(data.decode())


def _box_from(args, analysis, model):
    if args.box:
        vals = [float(x) for x in args.box]
        if model.action.dim_g == 1:
            return tuple(vals[:2])
        return tuple((vals[2 * i], vals[2 * i + 1])
                     for i in range(model.action.dim_g))
    if "box" in analysis:
        vals = analysis["box"]
        if model.action.dim_g == 1:
            return tuple(vals[:2])
        return tuple((vals[2 * i], vals[2 * i + 1])
                     for i in range(model.action.dim_g))
    return None


def cmd_validate(args):
    model, _ = _load(args)
    rep = validate_action(model.space, model.action, model.tol.structural)
    inv = check_invariance(model, 100, 0.4, args.seed)
    lines = []
    ok = rep.passed and inv.passed
    for c in rep.checks:
        lines.append(f"[{'ok ' if c.passed else 'FAIL'}] {c.name}: {c.residual:.3e}")
    lines.append(f"[{'ok ' if inv.passed else 'FAIL'}] sampled_invariance: "
                 f"{inv.max_scaled:.3e} (noether {inv.noether_max_scaled:.3e})")
    if model.hamiltonian.constant_offset:
        lines.append(f"constant offset removed from h: "
                     f"{model.hamiltonian.constant_offset}")
    if args.format == "structured":
        payload = json.dumps({
            "checks": [c.__dict__ for c in rep.checks],
            "invariance": inv.max_scaled, "passed": ok}, sort_keys=True,
            indent=2, default=float) + "\n"
    else:
        payload = "\n".join(lines) + "\n"
    _emit(args, payload)
    return 0 if ok else 1


def _roots_for(args, model, analysis):
    box = _box_from(args, analysis, model)
    grid = args.grid or analysis.get("grid") or \
        (400 if model.action.dim_g == 1 else 120)
    from .pipeline import _default_box

    search = find_roots(model, box if box is not None else _default_box(model),
                        grid)
    return search


def cmd_velocities(args):
    model, analysis = _load(args)
    search = _roots_for(args, model, analysis)
    rows = []
    for r in sorted(search.roots, key=lambda r: (r.kind, tuple(r.xi))):
        if r.kind == "curve_sample" and not args.curve_samples:
            continue
        rows.append({
            "xi": r.xi.tolist(), "kind": r.kind, "family": r.chain,
            "kernel_dim": r.kernel_dim, "definiteness": r.definiteness,
            "det_residual": r.det_residual,
            "q_eigenvalues": r.q_eigenvalues.tolist(),
            "kernel_basis": r.kernel_basis.tolist(),
        })
    n_curve = sum(1 for r in search.roots if r.kind == "curve_sample")
    if args.format == "structured":
        payload = json.dumps({"roots": rows, "n_curve_samples": n_curve,
                              "warnings": [w.message for w in search.warnings]},
                             sort_keys=True, indent=2) + "\n"
    else:
        lines = []
        for row in rows:
            xi = ", ".join(f"{x:.12g}" for x in row["xi"])
            eig = ", ".join(f"{x:.6g}" for x in row["q_eigenvalues"])
            lines.append(f"{row['kind']} xi=({xi}) kernel_dim={row['kernel_dim']} "
                         f"{row['definiteness']} Q-eigs [{eig}]")
        if n_curve and not args.curve_samples:
            lines.append(f"({n_curve} curve samples; --curve-samples to list)")
        for w in search.warnings:
            lines.append(f"warning: {w.message}")
        payload = "\n".join(lines) + "\n"
    _emit(args, payload)
    return 0


def cmd_counts(args):
    model, analysis = _load(args)
    search = _roots_for(args, model, analysis)
    out = []
    ok = True
    for r in sorted((r for r in search.roots if r.kind == "isolated"),
                    key=lambda r: tuple(r.xi)):
        if r.definiteness not in ("positive", "negative"):
            out.append({"xi": r.xi.tolist(), "skipped": r.definiteness})
            continue
        from .pipeline import _beta_complement

        betas = _beta_complement(r.xi) if model.action.dim_g == 2 else [r.xi]
        cr = count_report(model, r, beta_basis=betas)
        out.append({
            "xi": r.xi.tolist(),
            "kernel_dim": r.kernel_dim,
            "bartsch": cr.bartsch.display(),
            "category": cr.category.display(),
            "fixed_dim": cr.fixed_dim,
            "morse_bott": [{"beta": list(b), "verdict": v}
                           for b, v in cr.morse_bott],
            "lower_bound": cr.lower_bound,
        })
    if args.format == "structured":
        payload = json.dumps({"counts": out}, sort_keys=True, indent=2) + "\n"
    else:
        lines = []
        for row in out:
            if "skipped" in row:
                lines.append(f"xi={row['xi']}: skipped ({row['skipped']})")
                continue
            lines.append(f"xi={row['xi']}: kernel_dim={row['kernel_dim']} "
                         f"torus-bound={row['bartsch']} category={row['category']} "
                         f"fixed_dim={row['fixed_dim']} -> lower bound "
                         f"{row['lower_bound']}")
        payload = "\n".join(lines) + "\n"
    _emit(args, payload)
    return 0 if ok else 1


def cmd_reduce(args):
    model, analysis = _load(args)
    search = _roots_for(args, model, analysis)
    isolated = sorted((r for r in search.roots
                       if r.kind == "isolated"
                       and r.definiteness in ("positive", "negative")),
                      key=lambda r: tuple(r.xi))
    if args.root_index >= len(isolated):
        raise SystemExit(f"root index {args.root_index} out of range "
                         f"({len(isolated)} definite isolated roots)")
    root = isolated[args.root_index]
    frame = build_frame(model, root)
    res = lemma_residuals(frame, model, seed=args.seed)
    ok = all(v < 1e-6 for v in res.values())
    if args.format == "structured":
        payload = json.dumps({"xi": root.xi.tolist(), "residuals": res,
                              "passed": ok}, sort_keys=True, indent=2) + "\n"
    else:
        lines = [f"reduction residuals at xi={root.xi.tolist()}:"]
        for k, v in res.items():
            lines.append(f"  {k}: {v:.3e}")
        lines.append("PASS" if ok else "FAIL")
        payload = "\n".join(lines) + "\n"
    _emit(args, payload)
    return 0 if ok else 1


def cmd_branches(args):
    model, analysis = _load(args)
    search = _roots_for(args, model, analysis)
    isolated = sorted((r for r in search.roots
                       if r.kind == "isolated"
                       and r.definiteness in ("positive", "negative")),
                      key=lambda r: tuple(r.xi))
    if args.root_index >= len(isolated):
        raise SystemExit(f"root index {args.root_index} out of range")
    root = isolated[args.root_index]
    from .pipeline import _beta_complement

    betas = _beta_complement(root.xi) if model.action.dim_g == 2 else [root.xi]
    sd = seed_directions(model, root, betas)
    reps = {}
    for s in sd.seeds:
        reps.setdefault(s.cluster, s)
    r_max = args.r_max or analysis.get("r_max", 0.12)
    step = args.step or analysis.get("step", 1e-2)
    ok = True
    out = []
    for cl, s in sorted(reps.items()):
        br = continue_branch(model, root, s.u0, r_max, step)
        flow = verify_branch(model, br) if br.samples and not args.no_verify else None
        if flow is not None and flow > model.tol.flow:
            ok = False
        if br.diverged:
            ok = False
        try:
            mlim = multiplier_limit(br)
        except Exception:
            mlim = None
        out.append({
            "seed_cluster": cl, "diverged": br.diverged,
            "multiplier_limit": mlim, "flow_residual_max": flow,
            "samples": [{
                "r": p.r, "energy": p.energy, "v": p.v.tolist(),
                "xi_prime": p.xi_prime.tolist(), "multiplier": p.multiplier,
                "grad_residual": p.grad_residual,
                "flow_residual": p.flow_residual,
            } for p in br.samples]})
    if args.format == "structured":
        payload = json.dumps({"xi": root.xi.tolist(), "branches": out},
                             sort_keys=True, indent=2) + "\n"
    else:
        lines = [f"branches at xi={root.xi.tolist()}:"]
        for b in out:
            lines.append(f"branch[{b['seed_cluster']}] multiplier->"
                         f"{b['multiplier_limit']}"
                         + (f" flow_max={b['flow_residual_max']:.2e}"
                            if b["flow_residual_max"] is not None else ""))
            lines.append("  r        energy       velocity                multiplier")
            for p in b["samples"]:
                vel = ",".join(f"{x:.9g}" for x in p["xi_prime"])
                lines.append(f"  {p['r']:<8.4g} {p['energy']:<12.6g} "
                             f"({vel})  {p['multiplier']:.9g}")
        payload = "\n".join(lines) + "\n"
    _emit(args, payload)
    return 0 if ok else 1


def cmd_verify(args):
    model, _ = _load(args)
    v = np.array([float(x) for x in args.point])
    xi = np.array([float(x) for x in args.velocity])
    res = relative_equilibrium_residual(model, v, xi, args.T, args.dt)
    traj = integrate(model, v, args.T, args.dt)
    noe = noether_residual(model, traj)
    threshold = args.threshold if args.threshold is not None else model.tol.flow
    ok = res < threshold
    payload = (f"relative-equilibrium residual: {res:.3e} "
               f"(threshold {threshold:.1e})\n"
               f"noether drift: {noe:.3e}\n"
               f"energy drift: {traj.energy_drift:.3e}\n"
               + ("PASS\n" if ok else "FAIL\n"))
    if args.format == "structured":
        payload = json.dumps({"re_residual": res, "noether": noe,
                              "energy_drift": traj.energy_drift,
                              "passed": ok}, sort_keys=True, indent=2) + "\n"
    _emit(args, payload)
    return 0 if ok else 1


def cmd_analyze(args):
    model, analysis = _load(args)
    box = _box_from(args, analysis, model)
    opts = PipelineOptions.from_analysis(analysis, seed=args.seed)
    if box is not None:
        opts.box = box
    if args.grid:
        opts.grid = args.grid
    if args.r_max:
        opts.r_max = args.r_max
    if args.step:
        opts.step = args.step
    if args.no_verify:
        opts.verify = False
    t0 = time.monotonic()
    report = run_pipeline(model, opts)
    elapsed = time.monotonic() - t0
    payload = emit_report(report, args.format)
    if args.format == "text":
        payload += f"elapsed: {elapsed:.1f}s\n".encode()
    _emit(args, payload)
    return 0 if report["overall_pass"] else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="releq",
        description="Relative equilibria bifurcating from symmetric "
                    "Hamiltonian equilibria: find, count, verify.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="structural and invariance checks")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("velocities", help="critical-velocity roots and kernels")
    _add_common(p)
    p.add_argument("--box", nargs="+", help="search box: lo hi (or lo1 hi1 lo2 hi2)")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--curve-samples", action="store_true",
                   help="list every curve sample, not only the summary")
    p.set_defaults(func=cmd_velocities)

    p = sub.add_parser("counts", help="lower bounds per root")
    _add_common(p)
    p.add_argument("--box", nargs="+")
    p.add_argument("--grid", type=int, default=None)
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("reduce", help="reduction residual table for one root")
    _add_common(p)
    p.add_argument("--box", nargs="+")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--root-index", type=int, default=0)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("branches", help="continue branches from one root")
    _add_common(p)
    p.add_argument("--box", nargs="+")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--root-index", type=int, default=0)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(func=cmd_branches)

    p = sub.add_parser("verify", help="flow-test a point and velocity")
    _add_common(p)
    p.add_argument("--point", nargs="+", required=True)
    p.add_argument("--velocity", nargs="+", required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="full pipeline")
    _add_common(p)
    p.add_argument("--box", nargs="+")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(func=cmd_analyze)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
