"""End-to-end analysis pipeline and report emission.

The pipeline validates the model, locates critical velocities, and for each
root with a definite restricted form runs counting bounds, reduction
residual checks, seed extraction, branch continuation, flow verification,
and orbit deduplication; found-orbit counts are compared against the
topological lower bounds.  Roots failing the definiteness hypothesis are
reported with the reason and skipped downstream without aborting the run.
When the full Hessian at the origin is definite (a stable equilibrium), an
additional whole-space section reports the sphere-quotient bounds that
apply on every nearby energy level.

Structured reports are canonical JSON: plain dicts of floats, ints,
strings, booleans, and lists, with a versioned schema name, emitted with
sorted keys so identical analyses produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np

from .branches import (continue_branch, dedup_orbits, multiplier_limit,
                       seed_directions, verify_branch)
from .counts import (GroupXi, bartsch_bound, category_bound, circle_weights,
                     count_report, fixed_subspace, group_xi_metadata)
from .errors import InsufficientSamples, NoKernel
from .model import Model, check_invariance, validate_action
from .reduction import build_frame, lemma_residuals
from .velocity import find_roots

SCHEMA = "releq-report/1"


@dataclass
class PipelineOptions:
    seed: int = 0
    box: tuple | None = None
    grid: int | None = None
    r_max: float = 0.12
    step: float = 1e-2
    nu_samples: int = 3          # curve-family representatives per family
    flow_t: float = 1.0
    verify: bool = True
    lemma_tol: float = 1e-6
    multiplier_tol: float = 1e-4
    invariance_samples: int = 60
    invariance_radius: float = 0.4

    @classmethod
    def from_analysis(cls, analysis: dict, **extra):
        kwargs = {}
        for key in ("seed", "grid", "r_max", "step", "nu_samples"):
            if key in analysis:
                kwargs[key] = analysis[key]
        if "box" in analysis:
            vals = analysis["box"]
            if len(vals) == 2:
                kwargs["box"] = (vals[0], vals[1])
            elif len(vals) == 4:
                kwargs["box"] = ((vals[0], vals[1]), (vals[2], vals[3]))
        kwargs.update(extra)
        return cls(**kwargs)


def _plain(x):
    """Convert numpy scalars/arrays into JSON-safe plain Python objects."""
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _default_box(model: Model):
    radius = 2.0 * (1.0 + float(np.linalg.norm(model.d2h0, 2)))
    if model.action.dim_g == 1:
        return (-radius, radius)
    return tuple((-radius, radius) for _ in range(model.action.dim_g))


def _beta_complement(xi):
    """Orthonormal basis of the complement of a velocity in a 2-d algebra."""
    xi = np.asarray(xi, dtype=float)
    if xi.size != 2:
        return []
    n = np.linalg.norm(xi)
    if n == 0:
        return [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    u = xi / n
    return [np.array([-u[1], u[0]])]


def _stable_mode_section(model: Model, opts: PipelineOptions):
    eig = np.linalg.eigvalsh(model.d2h0)
    if np.any(eig <= 0) and np.any(eig >= 0):
        if not (np.all(eig > 0) or np.all(eig < 0)):
            return None
    gxi = group_xi_metadata(model.action)
    dim = model.space.dim
    fixed = fixed_subspace(model.action, model.action.torus_generators,
                           np.eye(dim))
    bb = bartsch_bound(dim, gxi.dim, gxi.rank, fixed.shape[1])
    weights = None
    if gxi.dim == 1:
        weights = circle_weights(model.action.generators[model.action.torus_generators[0]])
    cb = category_bound(dim, gxi, weights)
    directions = []
    for i in model.action.torus_generators:
        xi = np.zeros(model.action.dim_g)
        xi[i] = 1.0
        s = model.s_matrix(xi)
        nondeg = bool(abs(np.linalg.det(s)) > model.tol.structural)
        directions.append({"xi": xi.tolist(), "momentum_nondegenerate": nondeg})
    return _plain({
        "hessian_definite": "positive" if np.all(eig > 0) else "negative",
        "fixed_dim": fixed.shape[1],
        "bartsch": _bartsch_dict(bb),
        "category": _category_dict(cb),
        "torus_directions": directions,
    })


def _bartsch_dict(bb):
    if bb.inapplicable:
        return {"applicable": False}
    return {"applicable": True, "numerator": bb.rational.numerator,
            "denominator": bb.rational.denominator, "floor": bb.floor}


def _category_dict(cb):
    return {"known": cb.value is not None, "value": cb.value,
            "effective": cb.effective, "reason": cb.reason}


def _root_descriptor(root, include_basis=True):
    d = {
        "xi": root.xi.tolist(),
        "kind": root.kind,
        "family": root.chain,
        "kernel_dim": root.kernel_dim,
        "definiteness": root.definiteness,
        "det_residual": root.det_residual,
        "q_eigenvalues": root.q_eigenvalues.tolist(),
        "tangential": root.tangential,
    }
    if include_basis:
        d["kernel_basis"] = root.kernel_basis.tolist()
    return _plain(d)


def _process_root(model: Model, root, opts: PipelineOptions, failures: list,
                  label: str):
    entry = _root_descriptor(root)
    entry["label"] = label
    if root.definiteness not in ("positive", "negative"):
        entry["skipped"] = (f"restricted form is {root.definiteness}; the "
                            "definiteness hypothesis fails, no branch analysis")
        return entry
    beta_basis = _beta_complement(root.xi) if model.action.dim_g == 2 else \
        [np.atleast_1d(root.xi)]
    try:
        cr = count_report(model, root, beta_basis=beta_basis)
        entry["counts"] = {
            "bartsch": _bartsch_dict(cr.bartsch),
            "category": _category_dict(cr.category),
            "fixed_dim": cr.fixed_dim,
            "group_xi": {"dim": cr.group_xi.dim, "rank": cr.group_xi.rank},
            "morse_bott": [{"beta": list(b), "verdict": v} for b, v in cr.morse_bott],
            "lower_bound": cr.lower_bound,
        }
        frame = build_frame(model, root)
        lem = lemma_residuals(frame, model, seed=opts.seed)
        entry["reduction"] = _plain(lem)
        lemma_ok = all(v < opts.lemma_tol for v in lem.values())
        if not lemma_ok:
            failures.append(f"{label}: reduction residuals exceed {opts.lemma_tol}")

        sd = seed_directions(model, root, beta_basis)
        entry["seeds"] = _plain({
            "transitive": sd.transitive,
            "flags": sd.flags,
            "directions": [{"u0": s.u0.tolist(), "eigenvalue": s.eigenvalue,
                            "cluster": s.cluster} for s in sd.seeds],
        })
        reps = {}
        for s in sd.seeds:
            reps.setdefault(s.cluster, s)
        branches_out = []
        last_points = []
        last_r = None
        for cl, s in sorted(reps.items()):
            br = continue_branch(model, root, s.u0, opts.r_max, opts.step)
            if br.diverged:
                failures.append(f"{label}: {br.message}")
            flow_worst = None
            if opts.verify and br.samples:
                flow_worst = verify_branch(model, br, opts.flow_t)
                if flow_worst > model.tol.flow:
                    failures.append(
                        f"{label}: flow residual {flow_worst:.2e} above "
                        f"{model.tol.flow}")
            grad_worst = max((s2.grad_residual for s2 in br.samples), default=0.0)
            if grad_worst > model.tol.branch:
                failures.append(f"{label}: branch gradient residual {grad_worst:.2e}")
            try:
                mlim = multiplier_limit(br)
                if abs(mlim - 1.0) > opts.multiplier_tol:
                    failures.append(
                        f"{label}: multiplier limit {mlim} is not 1 within "
                        f"{opts.multiplier_tol}")
            except InsufficientSamples:
                mlim = None
            branches_out.append(_plain({
                "seed_cluster": cl,
                "seed_eigenvalue": s.eigenvalue,
                "diverged": br.diverged,
                "message": br.message,
                "multiplier_limit": mlim,
                "flow_residual_max": flow_worst,
                "samples": [{
                    "r": smp.r, "energy": smp.energy, "v": smp.v.tolist(),
                    "xi_prime": smp.xi_prime.tolist(),
                    "multiplier": smp.multiplier,
                    "grad_residual": smp.grad_residual,
                    "flow_residual": smp.flow_residual,
                } for smp in br.samples],
            }))
            if br.samples:
                last_points.append(br.samples[-1])
                last_r = br.samples[-1].r if last_r is None else min(last_r, br.samples[-1].r)
        entry["branches"] = branches_out

        if last_points and last_r is not None:
            level_pts = []
            for br_out in branches_out:
                cand = [s for s in br_out["samples"] if abs(s["r"] - last_r) < 1e-9]
                if cand:
                    level_pts.append(np.array(cand[0]["v"]))
            reps_pts = dedup_orbits(level_pts, model.action.generators)
            found = len(reps_pts)
            entry["dedup"] = _plain({
                "r_level": last_r,
                "points_in": len(level_pts),
                "found_distinct": found,
                "representatives": [p.tolist() for p in reps_pts],
            })
            bound = entry["counts"]["lower_bound"]
            entry["found_vs_bound"] = {"found": found, "bound": bound,
                                       "ok": bool(found >= bound)}
            if found < bound:
                failures.append(
                    f"{label}: found {found} distinct orbits, below the "
                    f"lower bound {bound}")
    except Exception as exc:  # per-root isolation: report, never abort others
        entry["error"] = f"{type(exc).__name__}: {exc}"
        failures.append(f"{label}: {entry['error']}")
    return entry


def run_pipeline(model: Model, opts: PipelineOptions | None = None) -> dict:
    """Full analysis; returns the structured report as a plain dict."""
    opts = opts or PipelineOptions()
    failures = []

    validation = validate_action(model.space, model.action, model.tol.structural)
    inv = check_invariance(model, opts.invariance_samples,
                           opts.invariance_radius, opts.seed)
    if not validation.passed:
        failures.append("action validation failed")
    if not inv.passed:
        failures.append(f"sampled invariance failed: {inv.max_scaled:.2e}")

    box = opts.box if opts.box is not None else _default_box(model)
    grid = opts.grid if opts.grid is not None else \
        (400 if model.action.dim_g == 1 else 120)
    search = find_roots(model, box, grid)
    warnings = [f"{w.message}" for w in search.warnings]

    isolated = sorted((r for r in search.roots if r.kind == "isolated"),
                      key=lambda r: tuple(r.xi))
    curve = [r for r in search.roots if r.kind == "curve_sample"]

    roots_out = []
    for i, root in enumerate(isolated):
        label = f"root[{i}] xi={np.round(root.xi, 9).tolist()}"
        roots_out.append(_process_root(model, root, opts, failures, label))

    families_out = []
    fam_ids = sorted(set(r.chain for r in curve))
    for fam in fam_ids:
        members = [r for r in curve if r.chain == fam]
        members.sort(key=lambda r: tuple(r.xi))
        k = min(opts.nu_samples, len(members))
        idx = np.linspace(0, len(members) - 1, k + 2)[1:-1] if k < len(members) \
            else np.arange(len(members))
        idx = sorted(set(int(round(j)) for j in np.atleast_1d(idx)))[:k]
        while len(idx) < k:
            extras = [j for j in range(len(members)) if j not in idx]
            idx.append(extras[0])
            idx = sorted(idx)
        rep_entries = []
        for j in idx:
            root = members[j]
            label = f"family[{fam}] nu-sample xi={np.round(root.xi, 9).tolist()}"
            rep_entries.append(_process_root(model, root, opts, failures, label))
        families_out.append(_plain({
            "family": fam,
            "n_curve_samples": len(members),
            "kernel_dim": members[0].kernel_dim if members else None,
            "samples_xi": [r.xi.tolist() for r in members],
            "representatives": rep_entries,
        }))

    comparison = []
    for entry in roots_out + [r for f in families_out for r in f["representatives"]]:
        if "found_vs_bound" in entry:
            comparison.append({
                "label": entry["label"],
                "found": entry["found_vs_bound"]["found"],
                "bound": entry["found_vs_bound"]["bound"],
                "ok": entry["found_vs_bound"]["ok"],
            })

    report = {
        "schema": SCHEMA,
        "system": _plain({
            "name": model.name,
            "dim": model.space.dim,
            "dim_g": model.action.dim_g,
            "rank_g": model.action.rank_g,
            "abelian": model.action.abelian,
            "parameters": dict(model.hamiltonian.parameters),
            "constant_offset": model.hamiltonian.constant_offset,
        }),
        "options": _plain({
            "seed": opts.seed, "box": box, "grid": grid, "r_max": opts.r_max,
            "step": opts.step, "nu_samples": opts.nu_samples,
            "flow_t": opts.flow_t, "verify": opts.verify,
        }),
        "validation": [{
            "name": c.name, "residual": c.residual,
            "tolerance": c.tolerance, "passed": c.passed,
        } for c in validation.checks],
        "invariance": _plain({
            "max_scaled": inv.max_scaled, "max_raw": inv.max_raw,
            "noether_max_scaled": inv.noether_max_scaled,
            "passed": inv.passed,
        }),
        "stable_mode": _stable_mode_section(model, opts),
        "roots": roots_out,
        "families": families_out,
        "warnings": warnings,
        "comparison": comparison,
        "failures": failures,
        "overall_pass": not failures,
    }
    return _plain(report)


def emit_report(report: dict, fmt: str = "structured") -> bytes:
    """Serialize a report: canonical JSON or a human-readable summary."""
    if fmt == "structured":
        return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()
    if fmt == "text":
        return _render_text(report).encode()
    raise ValueError(f"unknown format '{fmt}' (use 'text' or 'structured')")


def parse_report(data: bytes) -> dict:
    """Inverse of structured emission; parse(emit(r)) == r."""
    report = json.loads(data.decode())
    if report.get("schema") != SCHEMA:
        raise ValueError(f"unsupported report schema {report.get('schema')!r}")
    return report


def _render_text(report: dict) -> str:
    lines = []
    sysd = report["system"]
    lines.append(f"system: {sysd['name'] or 'custom'}  dim={sysd['dim']}  "
                 f"symmetry dim={sysd['dim_g']} rank={sysd['rank_g']}")
    if sysd.get("parameters"):
        lines.append("  parameters: " + ", ".join(
            f"{k}={v}" for k, v in sorted(sysd["parameters"].items())))
    if sysd.get("constant_offset"):
        lines.append(f"  constant offset removed from h: {sysd['constant_offset']}")
    lines.append("validation:")
    for c in report["validation"]:
        mark = "ok " if c["passed"] else "FAIL"
        lines.append(f"  [{mark}] {c['name']}: residual {c['residual']:.3e}")
    inv = report["invariance"]
    mark = "ok " if inv["passed"] else "FAIL"
    lines.append(f"  [{mark}] sampled invariance: {inv['max_scaled']:.3e} "
                 f"(noether bracket {inv['noether_max_scaled']:.3e})")
    if report.get("stable_mode"):
        sm = report["stable_mode"]
        lines.append(f"stable equilibrium mode ({sm['hessian_definite']} Hessian):")
        lines.append(f"  whole-space torus bound: "
                     f"{sm['bartsch'].get('floor', 'inapplicable')}  "
                     f"category: {sm['category']['effective']}"
                     f"{'' if sm['category']['known'] else ' (unknown case, >=1)'}")
    lines.append(f"roots: {len(report['roots'])} isolated"
                 + (f", {len(report['families'])} curve families"
                    if report["families"] else ""))
    for entry in report["roots"]:
        lines.extend(_render_root(entry))
    for fam in report["families"]:
        lines.append(f"family {fam['family']}: {fam['n_curve_samples']} curve "
                     f"samples, kernel dim {fam['kernel_dim']}")
        for entry in fam["representatives"]:
            lines.extend(_render_root(entry, indent="  "))
    if report["comparison"]:
        lines.append("found vs lower bound:")
        for c in report["comparison"]:
            mark = "ok " if c["ok"] else "FAIL"
            lines.append(f"  [{mark}] {c['label']}: found {c['found']} >= bound {c['bound']}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    for f in report["failures"]:
        lines.append(f"FAILURE: {f}")
    lines.append("overall: " + ("PASS" if report["overall_pass"] else "FAILED"))
    return "\n".join(lines) + "\n"


def _render_root(entry: dict, indent: str = "") -> list:
    lines = []
    xi = ", ".join(f"{x:.9g}" for x in entry["xi"])
    head = (f"{indent}{entry['kind']} xi=({xi})  kernel dim "
            f"{entry['kernel_dim']}  {entry['definiteness']}")
    lines.append(head)
    if "skipped" in entry:
        lines.append(f"{indent}  skipped: {entry['skipped']}")
        return lines
    if "error" in entry:
        lines.append(f"{indent}  error: {entry['error']}")
        return lines
    if "counts" in entry:
        cts = entry["counts"]
        bart = cts["bartsch"].get("floor", "inapplicable") \
            if cts["bartsch"]["applicable"] else "inapplicable"
        lines.append(f"{indent}  bounds: torus {bart}, category "
                     f"{cts['category']['effective']}"
                     f"{'' if cts['category']['known'] else ' (>=1 fallback)'}; "
                     f"fixed dim {cts['fixed_dim']}")
        for mb in cts["morse_bott"]:
            lines.append(f"{indent}  morse-bott beta={mb['beta']}: {mb['verdict']}")
    if "reduction" in entry:
        worst = max(entry["reduction"].values())
        lines.append(f"{indent}  reduction residuals max {worst:.2e}")
    for br in entry.get("branches", []):
        n = len(br["samples"])
        if not n:
            lines.append(f"{indent}  branch[{br['seed_cluster']}]: no samples"
                         f" ({br['message']})")
            continue
        last = br["samples"][-1]
        vel = ", ".join(f"{x:.9g}" for x in last["xi_prime"])
        flow = (f", flow {br['flow_residual_max']:.1e}"
                if br.get("flow_residual_max") is not None else "")
        mlim = (f", multiplier->{br['multiplier_limit']:.6f}"
                if br.get("multiplier_limit") is not None else "")
        lines.append(f"{indent}  branch[{br['seed_cluster']}]: {n} samples to "
                     f"r={last['r']:.3g}, velocity ({vel}){mlim}{flow}")
    if "found_vs_bound" in entry:
        fb = entry["found_vs_bound"]
        mark = "ok " if fb["ok"] else "FAIL"
        lines.append(f"{indent}  [{mark}] distinct orbits at top level: "
                     f"{fb['found']} (bound {fb['bound']})")
    return lines
