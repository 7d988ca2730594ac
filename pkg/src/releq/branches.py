"""Branches of relative equilibria on nearby energy levels.

Each branch grows from a seed direction in the kernel of the augmented
Hessian, found as a generalized eigenvector of a momentum form against the
definite restricted form Q.  Continuation runs in the blow-up radius r (the
Q-norm of the kernel component), with energy recorded per sample: the
corrector solves the full relative-equilibrium gradient system together
with a radius normalization and phase conditions that pin the group
direction, by Gauss-Newton least squares; the velocity is recovered as a
rescaling of the root velocity, and the associated multiplier tends to one
at the bifurcation point, which is asserted by extrapolation rather than
assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples
from .model import Model, eval_h2
from .velocity import VelocityRoot, restricted_form


@dataclass(frozen=True)
class Seed:
    u0: np.ndarray          # kernel coordinates, on the Q-unit sphere
    eigenvalue: float | None
    cluster: int
    beta_index: int | None


@dataclass
class SeedResult:
    seeds: list
    flags: list = field(default_factory=list)
    transitive: bool = False


@dataclass
class BranchSample:
    r: float
    energy: float
    v: np.ndarray
    xi_prime: np.ndarray
    multiplier: float
    grad_residual: float
    flow_residual: float | None = None


@dataclass
class Branch:
    root: VelocityRoot
    seed: np.ndarray
    samples: list = field(default_factory=list)
    diverged: bool = False
    message: str = ""


def _sigma(root: VelocityRoot) -> float:
    if root.definiteness == "positive":
        return 1.0
    if root.definiteness == "negative":
        return -1.0
    raise ValueError(
        f"root at xi={root.xi} has {root.definiteness} restricted form; "
        "branch construction requires definiteness")


def q_normalize(root: VelocityRoot, u):
    """Scale kernel coordinates onto the unit sphere of the definite form."""
    u = np.asarray(u, dtype=float)
    sigma = _sigma(root)
    nrm = sigma * float(u @ root.restricted_hessian @ u)
    if nrm <= 0:
        raise ValueError("direction has non-positive Q-norm")
    return u / np.sqrt(nrm)


def seed_directions(model: Model, root: VelocityRoot, beta_basis) -> SeedResult:
    """Unit kernel directions from which branches start, with eigen-labels.

    For each probe momentum direction beta, the generalized eigenvectors of
    the restricted beta-form against Q are returned, normalized to the
    Q-unit sphere and labeled by eigenvalue cluster.  When the residual
    group action is transitive on the sphere every direction is equivalent
    and a single representative is returned.  A beta whose restricted form
    is proportional to Q splits nothing and is flagged instead of producing
    directions.
    """
    from .counts import generalized_eigs, orbit_dimension

    sigma = _sigma(root)
    l = root.kernel_dim
    q = root.restricted_hessian
    u_probe = q_normalize(root, np.ones(l))
    odim = orbit_dimension(model, root.kernel_basis, u_probe)
    if odim == l - 1:
        e = np.zeros(l)
        e[0] = 1.0
        return SeedResult([Seed(q_normalize(root, e), None, 0, None)],
                          transitive=True)

    seeds = []
    flags = []
    cluster_counter = 0
    for bi, beta in enumerate(beta_basis):
        s_res = restricted_form(model.s_matrix(beta), root.kernel_basis)
        w, vecs = generalized_eigs(s_res, q, sigma)
        scale = max(float(np.max(np.abs(w))), 1e-300)
        spread = float(np.max(w) - np.min(w))
        if spread < 1e-9 * scale or scale < 1e-14:
            flags.append(
                f"beta #{bi} gives a restricted form proportional to Q "
                "(no eigenvalue splitting)")
            continue
        order = np.argsort(w)
        prev = None
        for idx in order:
            lam = float(w[idx])
            if prev is None or lam - prev > 1e-7 * scale:
                cluster_counter += 1
            prev = lam
            seeds.append(Seed(q_normalize(root, vecs[:, idx]), lam,
                              cluster_counter - 1, bi))
    return SeedResult(seeds, flags)


def _phase_directions(model: Model, v_ref, sv_tol: float = 1e-8):
    """Orthonormal covectors spanning the group-orbit tangent at v_ref."""
    cols = np.stack([a @ v_ref for a in model.action.generators], axis=1)
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    keep = s > sv_tol * max(1.0, float(s[0]) if s.size else 0.0)
    return u[:, keep]


def _corrector(model: Model, root: VelocityRoot, v_init, t_init, r,
               v_ref, max_iter: int = 40):
    """Gauss-Newton solve of the extended relative-equilibrium system.

    Unknowns are the phase point and the velocity scaling t with
    xi' = (1 + t) xi_root.  Equations: the augmented gradient, the blow-up
    radius normalization on the kernel component, and phase conditions
    pinning the group directions at the reference point.  The system is
    overdetermined but consistent; least squares takes the minimum-norm
    step, which also tolerates exactly degenerate directions along
    continua of solutions.
    """
    sigma = _sigma(root)
    b0 = root.kernel_basis
    q = root.restricted_hessian
    xi_root = root.xi
    s_root = model.s_matrix(xi_root)
    phases = _phase_directions(model, v_ref)
    dim = model.space.dim
    v = np.asarray(v_init, dtype=float).copy()
    t = float(t_init)
    tol = model.tol.branch

    for _ in range(max_iter):
        _, grad, hess = eval_h2(model, v)
        s_total = (1.0 + t) * s_root
        res_grad = grad - s_total @ v
        c = b0.T @ v
        res_rad = sigma * float(c @ q @ c) - r * r
        res_phase = phases.T @ (v - v_ref)
        res = np.concatenate([res_grad, [res_rad], res_phase])
        grad_norm = float(np.linalg.norm(res_grad))
        if grad_norm < tol and abs(res_rad) < 1e-12 * max(1.0, r * r) \
                and np.all(np.abs(res_phase) < 1e-10):
            return v, t, grad_norm, True
        jac = np.zeros((dim + 1 + phases.shape[1], dim + 1))
        jac[:dim, :dim] = hess - s_total
        jac[:dim, dim] = -(s_root @ v)
        jac[dim, :dim] = 2.0 * sigma * (b0 @ (q @ c))
        jac[dim + 1:, :dim] = phases.T
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        v = v + step[:dim]
        t = t + float(step[dim])
    _, grad, _ = eval_h2(model, v)
    return v, t, float(np.linalg.norm(grad - (1.0 + t) * (s_root @ v))), False


def continue_branch(model: Model, root: VelocityRoot, u0, r_max: float,
                    step: float = 1e-2, min_step: float = 1e-5) -> Branch:
    """Predictor-corrector continuation in the blow-up radius.

    The first predictor is r * (kernel basis) u0; subsequent predictors are
    tangent extrapolations from the last two samples.  The corrector
    recovers the velocity as a rescaling of the root velocity, the
    multiplier being the reciprocal of the rescaling factor.  On corrector
    failure the step is halved down to ``min_step``; the branch is then
    truncated at the last good sample and flagged.
    """
    u0 = q_normalize(root, u0)
    b0 = root.kernel_basis
    branch = Branch(root, u0)
    direction = b0 @ u0

    r_prev = 0.0
    v_prev = np.zeros(model.space.dim)
    t_prev = 0.0
    have_two = False
    v_prev2 = None
    t_prev2 = None
    r_prev2 = None

    h = step
    r = 0.0
    while r < r_max - 1e-12:
        r_next = min(r + h, r_max)
        if have_two:
            frac = (r_next - r_prev) / (r_prev - r_prev2)
            v_pred = v_prev + frac * (v_prev - v_prev2)
            t_pred = t_prev + frac * (t_prev - t_prev2)
        else:
            v_pred = r_next * direction
            t_pred = t_prev
        v_ref = v_pred if np.linalg.norm(v_pred) > 0 else r_next * direction
        v_new, t_new, grad_res, ok = _corrector(model, root, v_pred, t_pred,
                                                r_next, v_ref)
        if not ok:
            if h > min_step:
                h = max(h / 2.0, min_step)
                continue
            branch.diverged = True
            branch.message = (f"corrector diverged at r={r_next:.4g} "
                              f"(gradient residual {grad_res:.2e})")
            break
        xi_prime = (1.0 + t_new) * root.xi
        mult = 1.0 / (1.0 + t_new)
        energy = model.h(v_new)
        branch.samples.append(BranchSample(
            r=r_next, energy=energy, v=v_new, xi_prime=xi_prime,
            multiplier=mult, grad_residual=grad_res))
        v_prev2, t_prev2, r_prev2 = v_prev, t_prev, r_prev
        v_prev, t_prev, r_prev = v_new, t_new, r_next
        have_two = True
        r = r_next
    return branch


def verify_branch(model: Model, branch: Branch, t_final: float = 1.0,
                  threshold: float | None = None) -> float:
    """Flow-verify every sample; fills per-sample residuals, returns the max.

    No sample should be reported without this independent check; the
    integrator step is chosen per sample so the discretization error stays
    under the pass threshold.
    """
    from .flow import relative_equilibrium_residual, suggest_dt

    threshold = model.tol.flow if threshold is None else threshold
    worst = 0.0
    for s in branch.samples:
        dt = suggest_dt(model, s.v, s.xi_prime, t_final, threshold)
        s.flow_residual = relative_equilibrium_residual(
            model, s.v, s.xi_prime, t_final, dt)
        worst = max(worst, s.flow_residual)
    return worst


def multiplier_limit(branch: Branch, r_cut: float = 0.2) -> float:
    """Multiplier extrapolated to zero radius (Richardson in r^2).

    Requires at least three samples below ``r_cut``.  The limit equals one
    for any branch rooted at a genuine critical velocity; callers assert
    this rather than assuming it.
    """
    pts = [(s.r, s.multiplier) for s in branch.samples if s.r < r_cut]
    if len(pts) < 3:
        raise InsufficientSamples(
            f"need at least 3 samples with r < {r_cut}, have {len(pts)}")
    pts = sorted(pts)[:5]
    xs = np.array([r * r for r, _ in pts])
    ys = np.array([m for _, m in pts])
    # Neville extrapolation to x = 0
    n = len(xs)
    tableau = ys.copy()
    for level in range(1, n):
        for i in range(n - level):
            tableau[i] = ((xs[i + level] * tableau[i] - xs[i] * tableau[i + 1])
                          / (xs[i + level] - xs[i]))
    return float(tableau[0])


# --------------------------------------------------------------------------
# orbit deduplication


class _TorusGeometry:
    """Cached eigen-structure for fast evaluation of torus orbits."""

    def __init__(self, generators):
        self.generators = [np.asarray(a, dtype=float) for a in generators]
        self.eig = []
        for a in self.generators:
            d, u = np.linalg.eig(a)
            self.eig.append((d, u, np.linalg.inv(u)))

    def rotate(self, v, thetas):
        out = np.asarray(v, dtype=complex)
        for (d, u, uinv), th in zip(self.eig, thetas):
            out = u @ (np.exp(th * d) * (uinv @ out))
        return out.real

    def orbit_states(self, v, theta_grid):
        """All exp(th A) v for th in a 1-d grid (single generator)."""
        d, u, uinv = self.eig[0]
        c = uinv @ np.asarray(v, dtype=complex)
        e = np.exp(np.outer(theta_grid, d))
        return ((e * c) @ u.T).real


def orbit_distance(geom: _TorusGeometry, v, w, resolution: int = 512):
    """min over torus angles of ||exp(sum th_i A_i) v - w||, refined locally."""
    k = len(geom.generators)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if k == 1:
        grid = np.linspace(0.0, 2.0 * np.pi, resolution, endpoint=False)
        states = geom.orbit_states(v, grid)
        dists = np.linalg.norm(states - w, axis=1)
        i = int(np.argmin(dists))
        lo = grid[i] - 2.0 * np.pi / resolution
        hi = grid[i] + 2.0 * np.pi / resolution
        from scipy.optimize import minimize_scalar

        res = minimize_scalar(
            lambda th: float(np.linalg.norm(geom.rotate(v, [th]) - w)),
            bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12})
        return float(res.fun)
    if k == 2:
        coarse = max(32, resolution // 8)
        grid = np.linspace(0.0, 2.0 * np.pi, coarse, endpoint=False)
        d1, u1, u1inv = geom.eig[0]
        d2, u2, u2inv = geom.eig[1]
        mid = np.exp(np.outer(grid, d2)) * (u2inv @ v.astype(complex))
        mid = mid @ u2.T  # states after the second-generator rotation
        best = (np.inf, 0.0, 0.0)
        c1 = (u1inv @ mid.T).T  # coefficients for the first rotation
        e1 = np.exp(np.outer(grid, d1))
        for j in range(coarse):
            states = ((e1 * c1[j]) @ u1.T).real
            dists = np.linalg.norm(states - w, axis=1)
            i = int(np.argmin(dists))
            if dists[i] < best[0]:
                best = (float(dists[i]), grid[i], grid[j])
        from scipy.optimize import minimize

        res = minimize(
            lambda th: float(np.linalg.norm(geom.rotate(v, th) - w)),
            x0=[best[1], best[2]], method="Nelder-Mead",
            options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 400})
        return float(min(best[0], res.fun))
    raise NotImplementedError("orbit distance for torus rank > 2")


def dedup_orbits(points, generators, tol: float | None = None,
                 resolution: int = 512):
    """Greedy clustering of phase points under group-orbit distance.

    Points on a common torus orbit collapse to one representative; the
    representative of each cluster is its lexicographically smallest member
    (coordinates rounded to 12 digits for the tie-break).  ``tol`` defaults
    to 1e-6 times the largest point norm.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    if not pts:
        return []
    if tol is None:
        tol = 1e-6 * max(max(np.linalg.norm(p) for p in pts), 1.0)
    geom = _TorusGeometry(generators)
    clusters = []  # list of lists
    for p in pts:
        placed = False
        for cl in clusters:
            if orbit_distance(geom, cl[0], p, resolution) < tol:
                cl.append(p)
                placed = True
                break
        if not placed:
            clusters.append([p])
    reps = []
    for cl in clusters:
        key = lambda p: tuple(np.round(p, 12))
        reps.append(min(cl, key=key))
    return reps
