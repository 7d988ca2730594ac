"""Critical velocities: roots of det(d^2(h - J_xi)(0)) = 0 and their kernels.

For one-parameter symmetry algebras, roots are located on a grid by sign
changes of the determinant (bisection plus Newton polish) and, because
symmetry forces kernel dimensions to be even in the generic case, by dips of
|det| without a sign change: a dip is sharpened by local minimization and
accepted only if the determinant is numerically zero, otherwise it is kept
as a grid-too-coarse warning rather than silently dropped.

For two-parameter algebras the root set is generically a curve.  The
determinant is a perfect square whenever kernels come in even-dimensional
blocks, so the traced field is the signed eigenvalue of the augmented
Hessian nearest zero, whose zero set coincides with the determinant's and
which does change sign across the curve.  Marching on a grid yields sample
chains; chain crossings, where kernel dimension jumps, are sharpened into
isolated roots by Gauss-Newton on the small-eigenvalue vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoKernel
from .model import Model, _frozen


@dataclass(frozen=True)
class VelocityRoot:
    """A critical velocity with its kernel data and definiteness verdict."""

    xi: np.ndarray
    det_residual: float
    kernel_basis: np.ndarray      # 2n x l, orthonormal columns
    kernel_dim: int
    restricted_hessian: np.ndarray  # l x l, d^2 h(0) restricted via the basis
    q_eigenvalues: np.ndarray
    definiteness: str             # positive | negative | indefinite | degenerate
    kind: str = "isolated"        # isolated | curve_sample
    chain: int | None = None
    tangential: bool = False
    kernel_identity_residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "xi", _frozen(np.atleast_1d(self.xi)))
        object.__setattr__(self, "kernel_basis", _frozen(self.kernel_basis))
        object.__setattr__(self, "restricted_hessian", _frozen(self.restricted_hessian))
        object.__setattr__(self, "q_eigenvalues", _frozen(self.q_eigenvalues))


@dataclass
class GridWarning:
    """A |det| dip that could not be polished into a root."""

    xi: np.ndarray
    det_value: float
    message: str


@dataclass
class RootSearch:
    """Result of a root search: roots plus honest diagnostics."""

    roots: list
    warnings: list = field(default_factory=list)
    det_scale: float = 1.0


def det_at(model: Model, xi) -> float:
    """Determinant of the augmented Hessian at the origin, exact polynomial in xi."""
    return float(np.linalg.det(model.aug_hessian0(xi)))


def nearest_eigenvalue(model: Model, xi) -> float:
    """Signed eigenvalue of the augmented Hessian closest to zero."""
    w = np.linalg.eigvalsh(model.aug_hessian0(xi))
    return float(w[np.argmin(np.abs(w))])


def kernel_space(model: Model, xi, tol=None):
    """Orthonormal kernel basis of d^2(h - J_xi)(0) and its dimension.

    The kernel is spanned by eigenvectors whose eigenvalues are below
    ``tol`` relative to the spectral radius.  Raises :class:`NoKernel` when
    no eigenvalue qualifies, signalling that xi is not a root at this
    tolerance.
    """
    tol = model.tol.kernel_rel if tol is None else tol
    m = model.aug_hessian0(xi)
    w, v = np.linalg.eigh(m)
    scale = float(np.max(np.abs(w)))
    if scale == 0.0:
        return np.eye(model.space.dim), model.space.dim
    sel = np.abs(w) < tol * scale
    if not np.any(sel):
        raise NoKernel(f"no kernel at xi={np.atleast_1d(xi)} with relative tolerance {tol}")
    basis = v[:, sel]
    # eigh returns orthonormal columns; re-orthonormalize to guard roundoff
    basis, _ = np.linalg.qr(basis)
    return basis, int(sel.sum())


def restricted_form(matrix: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Restriction B^T M B of a symmetric form to the span of basis columns."""
    m = basis.T @ matrix @ basis
    return 0.5 * (m + m.T)


def definiteness_verdict(eigenvalues: np.ndarray, margin_rel: float):
    """Classify the spectrum of a restricted form."""
    scale = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    margin = margin_rel * max(scale, 1e-300)
    if scale == 0.0 or np.any(np.abs(eigenvalues) <= margin):
        return "degenerate"
    if np.all(eigenvalues > 0):
        return "positive"
    if np.all(eigenvalues < 0):
        return "negative"
    return "indefinite"


def make_root(model: Model, xi, kind="isolated", chain=None, tangential=False,
              tol=None) -> VelocityRoot:
    """Assemble a VelocityRoot at a (numerically polished) critical velocity."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    basis, dim = kernel_space(model, xi, tol)
    q = restricted_form(model.d2h0, basis)
    eig = np.linalg.eigvalsh(q)
    verdict = definiteness_verdict(eig, model.tol.definiteness_rel)
    s = model.s_matrix(xi)
    ident = restricted_form(s - model.d2h0, basis)
    ident_res = float(np.max(np.abs(ident)))
    return VelocityRoot(
        xi=xi,
        det_residual=det_at(model, xi),
        kernel_basis=basis,
        kernel_dim=dim,
        restricted_hessian=q,
        q_eigenvalues=eig,
        definiteness=verdict,
        kind=kind,
        chain=chain,
        tangential=tangential,
        kernel_identity_residual=ident_res,
    )


def definiteness(model: Model, root: VelocityRoot):
    """Definiteness verdict and eigenvalues of the restricted form.

    Also cross-checks that the momentum Hessian restricted to the kernel
    agrees with the restricted Hamiltonian Hessian (they coincide on the
    kernel by construction).
    """
    q = restricted_form(model.d2h0, root.kernel_basis)
    eig = np.linalg.eigvalsh(q)
    verdict = definiteness_verdict(eig, model.tol.definiteness_rel)
    s = model.s_matrix(root.xi)
    ident = float(np.max(np.abs(restricted_form(s - model.d2h0, root.kernel_basis))))
    qn = max(float(np.max(np.abs(eig))), 1e-300)
    if ident > 1e-8 * qn:
        raise AssertionError(
            f"momentum/Hamiltonian restricted forms disagree on the kernel: {ident}")
    return verdict, eig


# --------------------------------------------------------------------------
# one-parameter search


def _newton_polish_1d(f, x, fprime_step=1e-6, iters=8):
    """Newton on f with central-difference derivative; returns the best point."""
    best_x, best_f = x, abs(f(x))
    for _ in range(iters):
        h = fprime_step * max(1.0, abs(x))
        d = (f(x + h) - f(x - h)) / (2.0 * h)
        if d == 0.0:
            break
        x = x - f(x) / d
        fx = abs(f(x))
        if fx < best_f:
            best_x, best_f = x, fx
        else:
            break
    return best_x


def _minimize_dip_1d(f, a, b, iters=120):
    """Golden-section minimization of |f| on [a, b]."""
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = b - gr * (b - a)
    x2 = a + gr * (b - a)
    f1, f2 = abs(f(x1)), abs(f(x2))
    for _ in range(iters):
        if b - a < 1e-14 * max(1.0, abs(a), abs(b)):
            break
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - gr * (b - a)
            f1 = abs(f(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + gr * (b - a)
            f2 = abs(f(x2))
    return (a + b) / 2.0


def _polish_stationary_1d(f, x, iters=30):
    """Newton on f' = 0 via central differences (even-multiplicity roots).

    Central differences carry an O(h^2) bias from odd higher derivatives, so
    the best-|f| iterate is kept rather than the last one.
    """
    best_x, best_f = x, abs(f(x))
    for _ in range(iters):
        h = 1e-5 * max(1.0, abs(x))
        d1 = (f(x + h) - f(x - h)) / (2.0 * h)
        d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
        if d2 == 0.0:
            break
        step = d1 / d2
        x = x - step
        fx = abs(f(x))
        if fx < best_f:
            best_x, best_f = x, fx
        if abs(step) < 1e-13 * max(1.0, abs(x)):
            break
    return best_x


def merge_close(values, spacing):
    """Merge scalar roots closer than the grid spacing (keep the first)."""
    out = []
    for v in sorted(values):
        if not out or abs(v - out[-1]) > spacing:
            out.append(v)
    return out


def _find_roots_1d(model, lo, hi, grid):
    xs = np.linspace(lo, hi, grid)
    det = np.array([det_at(model, [x]) for x in xs])
    scale = max(1.0, float(np.max(np.abs(det))))
    accept = 1e-10 * scale
    f = lambda x: det_at(model, [x])

    roots = []
    warnings = []
    # sign changes: bisection bracket + Newton polish
    for i in range(len(xs) - 1):
        if det[i] == 0.0:
            roots.append(xs[i])
            continue
        if det[i] * det[i + 1] < 0.0:
            from scipy.optimize import brentq

            x0 = brentq(f, xs[i], xs[i + 1], xtol=1e-14)
            roots.append(_newton_polish_1d(f, x0))
    # dips: interior local minima of |det| below the dip tolerance; near a
    # double root the smallest grid value scales like the squared spacing, so
    # widen the relative tolerance on coarse grids
    dip_tol = max(model.tol.dip_rel, 25.0 / (grid - 1) ** 2) * scale
    absdet = np.abs(det)
    for i in range(1, len(xs) - 1):
        if absdet[i] <= absdet[i - 1] and absdet[i] <= absdet[i + 1] and absdet[i] < dip_tol:
            if det[i - 1] * det[i] < 0 or det[i] * det[i + 1] < 0:
                continue  # already handled as a sign change
            x0 = _minimize_dip_1d(f, xs[i - 1], xs[i + 1])
            x0 = _polish_stationary_1d(f, x0)
            if abs(f(x0)) < accept:
                roots.append(x0)
            else:
                warnings.append(GridWarning(
                    np.array([x0]), f(x0),
                    f"|det| dips to {abs(f(x0)):.3e} at xi={x0:.6g} without reaching "
                    f"zero at tolerance {accept:.3e}; refine the grid or parameters"))
    spacing = (hi - lo) / max(grid - 1, 1)
    deduped = []
    for w in sorted(warnings, key=lambda w: w.xi[0]):
        if not deduped or abs(w.xi[0] - deduped[-1].xi[0]) > spacing:
            deduped.append(w)
    warnings = deduped
    merged = merge_close(roots, spacing)
    out = []
    for x in merged:
        tangential = True
        # a root found via sign change has odd multiplicity
        eps = spacing * 0.5
        if f(x - eps) * f(x + eps) < 0:
            tangential = False
        try:
            out.append(make_root(model, [x], kind="isolated", tangential=tangential))
        except NoKernel:
            warnings.append(GridWarning(np.array([x]), f(x),
                                        f"polished point xi={x:.6g} has no kernel"))
    return RootSearch(out, warnings, scale)


# --------------------------------------------------------------------------
# two-parameter search: curve tracing plus kernel-jump points


def _bisect_edge(g, p0, p1, f0, f1, iters=60):
    """Bisection for g = 0 along the segment p0 -> p1 (f0, f1 of opposite sign)."""
    a, b = np.asarray(p0, float), np.asarray(p1, float)
    fa = f0
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = g(m)
        if fm == 0.0:
            return m
        if fa * fm < 0:
            b = m
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def _segments_in_cell(corners, values, crossings):
    """Marching-squares segments for one cell, resolving the saddle ambiguity."""
    idx = [k for k in range(4) if values[k] * values[(k + 1) % 4] < 0]
    if len(idx) == 2:
        return [(idx[0], idx[1])]
    if len(idx) == 4:
        center = sum(values) / 4.0
        if center * values[0] >= 0:
            return [(0, 1), (2, 3)]
        return [(3, 0), (1, 2)]
    return []


def _gauss_newton_crossing(model, xi0, n_small, iters=40):
    """Sharpen a kernel-jump point: drive the n_small smallest eigenvalues to zero."""
    xi = np.asarray(xi0, dtype=float).copy()
    for _ in range(iters):
        m = model.aug_hessian0(xi)
        w, v = np.linalg.eigh(m)
        order = np.argsort(np.abs(w))[:n_small]
        res = w[order]
        jac = np.zeros((n_small, xi.size))
        for r, k in enumerate(order):
            u = v[:, k]
            for j in range(xi.size):
                jac[r, j] = -u @ model.s_basis[j] @ u
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        xi = xi + step
        if np.linalg.norm(step) < 1e-14 * max(1.0, np.linalg.norm(xi)):
            break
    return xi


def _find_roots_2d(model, box, grid):
    (lo1, hi1), (lo2, hi2) = box
    xs = np.linspace(lo1, hi1, grid)
    ys = np.linspace(lo2, hi2, grid)
    fvals = np.empty((grid, grid))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            fvals[i, j] = nearest_eigenvalue(model, [x, y])
    g = lambda p: nearest_eigenvalue(model, p)

    # crossing points live on grid edges, keyed for chain assembly
    edge_points = {}

    def edge_key(i, j, horizontal):
        return (i, j, horizontal)

    def crossing(i, j, horizontal):
        key = edge_key(i, j, horizontal)
        if key not in edge_points:
            if horizontal:
                p0, p1 = (xs[i], ys[j]), (xs[i + 1], ys[j])
                f0, f1 = fvals[i, j], fvals[i + 1, j]
            else:
                p0, p1 = (xs[i], ys[j]), (xs[i], ys[j + 1])
                f0, f1 = fvals[i, j], fvals[i, j + 1]
            edge_points[key] = _bisect_edge(g, p0, p1, f0, f1)
        return key

    # adjacency between edge crossings, via cell segments
    adjacency = {}
    segments = []
    for i in range(grid - 1):
        for j in range(grid - 1):
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            values = [fvals[a, b] for a, b in corners]
            sides = {
                0: ("h", i, j),        # bottom
                1: ("v", i + 1, j),    # right
                2: ("h", i, j + 1),    # top
                3: ("v", i, j),        # left
            }
            cut = []
            for k in range(4):
                if values[k] * values[(k + 1) % 4] < 0:
                    kind, a, b = sides[k]
                    cut.append((k, crossing(a, b, kind == "h")))
            if len(cut) == 2:
                pairs = [(cut[0][1], cut[1][1])]
            elif len(cut) == 4:
                center = g([(xs[i] + xs[i + 1]) / 2.0, (ys[j] + ys[j + 1]) / 2.0])
                by_side = dict(cut)
                if center * values[0] >= 0:
                    pairs = [(by_side[0], by_side[1]), (by_side[2], by_side[3])]
                else:
                    pairs = [(by_side[3], by_side[0]), (by_side[1], by_side[2])]
            else:
                pairs = []
            for a, b in pairs:
                segments.append((a, b))
                adjacency.setdefault(a, set()).add(b)
                adjacency.setdefault(b, set()).add(a)

    # connected components of the crossing graph
    comp_of = {}
    components = []
    for node in adjacency:
        if node in comp_of:
            continue
        cid = len(components)
        stack = [node]
        comp = []
        while stack:
            cur = stack.pop()
            if cur in comp_of:
                continue
            comp_of[cur] = cid
            comp.append(cur)
            stack.extend(adjacency[cur] - comp_of.keys())
        components.append(comp)

    pts = {k: np.asarray(edge_points[k]) for k in comp_of}
    step = max((hi1 - lo1), (hi2 - lo2)) / max(grid - 1, 1)
    base_dim = None
    for k in list(pts)[:8]:
        try:
            _, d = kernel_space(model, pts[k])
            base_dim = d if base_dim is None else min(base_dim, d)
        except NoKernel:
            continue
    base_dim = base_dim or 2

    # kernel-jump candidates: nearby crossing points from different graph
    # components (curve intersections disconnect or entangle the marching
    # graph, so distinct components approaching each other flag a jump)
    from collections import defaultdict

    buckets = defaultdict(list)
    for k, p in pts.items():
        buckets[(int((p[0] - lo1) / step), int((p[1] - lo2) / step))].append(k)
    candidates = []
    seen_pairs = set()
    for (bi, bj), ks in buckets.items():
        neigh = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                neigh.extend(buckets.get((bi + di, bj + dj), []))
        for ka in ks:
            for kb in neigh:
                if ka >= kb or comp_of[ka] == comp_of[kb]:
                    continue
                if (ka, kb) in seen_pairs:
                    continue
                seen_pairs.add((ka, kb))
                if np.linalg.norm(pts[ka] - pts[kb]) < 1.5 * step:
                    candidates.append(0.5 * (pts[ka] + pts[kb]))

    isolated = []
    for cand in candidates:
        xi = _gauss_newton_crossing(model, cand, 2 * base_dim)
        w = np.linalg.eigvalsh(model.aug_hessian0(xi))
        small = np.sort(np.abs(w))[:2 * base_dim]
        if np.max(small) < model.tol.kernel_rel * max(1.0, np.max(np.abs(w))):
            isolated.append(xi)
    uniq = []
    for xi in isolated:
        if not any(np.linalg.norm(xi - u) < step for u in uniq):
            uniq.append(xi)

    # cut the graph near kernel-jump points; remaining components are arcs
    # lying on a single sheet of the root variety
    cut_radius = 2.0 * step

    def near_jump(p):
        return any(np.linalg.norm(p - u) < cut_radius for u in uniq)

    kept = {k for k in pts if not near_jump(pts[k])}
    arc_of = {}
    arcs = []
    for node in kept:
        if node in arc_of:
            continue
        aid = len(arcs)
        stack = [node]
        comp = []
        while stack:
            cur = stack.pop()
            if cur in arc_of or cur not in kept:
                continue
            arc_of[cur] = aid
            comp.append(cur)
            stack.extend((adjacency[cur] & kept) - arc_of.keys())
        arcs.append(comp)

    arc_roots = {}
    for aid, comp in enumerate(arcs):
        rr = []
        for k in comp:
            try:
                rr.append(make_root(model, pts[k], kind="curve_sample", chain=aid))
            except NoKernel:
                continue
        if rr:
            arc_roots[aid] = rr

    # merge arcs across each kernel-jump point when their nearest samples
    # carry matching kernel subspaces (the kernel varies continuously along a
    # family through a crossing; distinct families have distinct kernels)
    parent = {aid: aid for aid in arc_roots}

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    merge_radius = 5.0 * step
    for u in uniq:
        ends = []
        for aid, rr in arc_roots.items():
            close = [r for r in rr if np.linalg.norm(r.xi - u) < merge_radius]
            if close:
                ends.append((aid, min(close, key=lambda r: float(np.linalg.norm(r.xi - u)))))
        for i in range(len(ends)):
            for j in range(i + 1, len(ends)):
                (aida, ra), (aidb, rb) = ends[i], ends[j]
                if ra.kernel_dim != rb.kernel_dim:
                    continue
                pa = ra.kernel_basis @ ra.kernel_basis.T
                pb = rb.kernel_basis @ rb.kernel_basis.T
                if float(np.linalg.norm(pa - pb)) < 0.2:
                    union(aida, aidb)

    fam_reps = sorted(set(find(aid) for aid in arc_roots))
    fam_id = {rep: i for i, rep in enumerate(fam_reps)}

    roots = []
    for xi in sorted(uniq, key=tuple):
        roots.append(make_root(model, xi, kind="isolated"))
    for aid, rr in sorted(arc_roots.items()):
        fam = fam_id[find(aid)]
        for r in rr:
            roots.append(VelocityRoot(
                xi=r.xi, det_residual=r.det_residual, kernel_basis=r.kernel_basis,
                kernel_dim=r.kernel_dim, restricted_hessian=r.restricted_hessian,
                q_eigenvalues=r.q_eigenvalues, definiteness=r.definiteness,
                kind="curve_sample", chain=fam, tangential=r.tangential,
                kernel_identity_residual=r.kernel_identity_residual))
    det_grid = [abs(det_at(model, [x, y])) for x in xs[::16] for y in ys[::16]]
    return RootSearch(roots, [], max(1.0, float(np.max(det_grid))))


def find_roots(model: Model, box, grid: int = 400) -> RootSearch:
    """Locate critical velocities in a box of the symmetry algebra.

    ``box`` is (lo, hi) for one-parameter algebras, or a pair of such
    intervals.  Returns isolated roots and, for two-parameter algebras, chains
    of curve samples; unresolved |det| dips are reported as warnings.
    Searches over disjoint boxes may run concurrently and merge their results
    with :func:`merge_close` dedup.
    """
    if model.action.dim_g == 1:
        if np.ndim(box) == 2:
            (lo, hi), = box
        else:
            lo, hi = box
        return _find_roots_1d(model, float(lo), float(hi), int(grid))
    if model.action.dim_g == 2:
        return _find_roots_2d(model, box, int(grid))
    raise NotImplementedError(
        "root search is implemented for one- and two-dimensional symmetry algebras; "
        "higher-dimensional root varieties need dedicated machinery")
