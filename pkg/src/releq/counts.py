"""Lower bounds on critical orbits and the Morse-Bott verification.

Two bounds are computed for each kernel space.  The torus-action bound
(dim V0 over twice (1 + dim G - rank G)) applies when the maximal torus
fixes only the origin in V0.  The Lusternik-Schnirelman category bound of
the sphere quotient is computed only for recognized quotients (weighted
projective spaces and transitive actions); everything else honestly reports
"unknown (>= 1)", since a compact quotient always has category at least one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import GroupAction, Model
from .velocity import VelocityRoot, restricted_form


@dataclass(frozen=True)
class BartschBound:
    inapplicable: bool
    rational: Fraction | None = None
    floor: int | None = None

    def display(self):
        if self.inapplicable:
            return "inapplicable (torus-fixed vectors present)"
        return f"{self.rational} -> {self.floor}"


@dataclass(frozen=True)
class CategoryBound:
    value: int | None  # None means unknown; the bound is still >= 1
    reason: str = ""

    def display(self):
        return "unknown (>= 1)" if self.value is None else str(self.value)

    @property
    def effective(self):
        return 1 if self.value is None else self.value


@dataclass(frozen=True)
class GroupXi:
    """Dimension and rank of the adjoint isotropy of a velocity.

    For abelian groups the isotropy is the whole group; otherwise callers
    supply the metadata, since computing centralizers of arbitrary compact
    groups is out of scope.
    """

    dim: int
    rank: int


def group_xi_metadata(action: GroupAction, supplied: GroupXi | None = None) -> GroupXi:
    if action.abelian:
        return GroupXi(action.dim_g, action.rank_g)
    if supplied is None:
        raise ValueError("non-abelian action: supply GroupXi(dim, rank) metadata")
    return supplied


def fixed_subspace(action: GroupAction, torus_indices, subspace_basis: np.ndarray) -> np.ndarray:
    """Basis of torus-fixed vectors within span(subspace_basis).

    Computed as the joint null space of the stacked generator restrictions:
    vectors v = B c with A_i v = 0 for every torus generator.
    """
    b = np.asarray(subspace_basis, dtype=float)
    if b.ndim != 2:
        raise ValueError("subspace_basis must be a matrix of basis columns")
    stacked = [action.generators[i] @ b for i in torus_indices]
    if not stacked:
        return b
    m = np.vstack(stacked)
    if np.allclose(m, 0.0):
        return b
    _, s, vt = np.linalg.svd(m)
    tol = max(m.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    null_mask = np.zeros(b.shape[1], dtype=bool)
    null_mask[s.size:] = True
    null_mask[:s.size] = s < max(tol, 1e-10)
    coeffs = vt.T[:, null_mask]
    return b @ coeffs


def bartsch_bound(v0_dim: int, dim_g_xi: int, rank_g_xi: int, fixed_dim: int) -> BartschBound:
    """Torus-action lower bound for critical orbits on the kernel sphere.

    Inapplicable when the maximal torus fixes a nonzero subspace.  Otherwise
    the rational value dim V0 / (2 (1 + dim - rank)) is reported along with
    its floor.
    """
    if fixed_dim > 0:
        return BartschBound(True)
    rational = Fraction(v0_dim, 2 * (1 + dim_g_xi - rank_g_xi))
    return BartschBound(False, rational, int(rational.__floor__()))


def circle_weights(generator_restricted: np.ndarray, tol: float = 1e-9):
    """Rotation weights of a circle action on a subspace.

    The restricted generator is antisymmetric; its spectrum is +/- i w_k.
    Returns the sorted nonnegative weights (each 2-dim rotation block once,
    zero weights once per fixed direction pair).
    """
    ev = np.linalg.eigvals(generator_restricted)
    im = np.sort(np.abs(ev.imag))
    # eigenvalues come in conjugate pairs; take every second
    return im[1::2] if im.size % 2 == 0 else im


def category_bound(v0_dim: int, group_xi: GroupXi, weights=None,
                   orbit_dim: int | None = None) -> CategoryBound:
    """Category of the kernel-sphere quotient, for recognized cases.

    (a) circle acting on R^{2k} with all weights nonzero: the quotient of
        S^{2k-1} is a weighted projective space of category k;
    (b) transitive orbits (orbit dimension equals sphere dimension): 1;
    otherwise unknown, which still guarantees at least one critical orbit.
    """
    if orbit_dim is not None and orbit_dim == v0_dim - 1:
        return CategoryBound(1, "transitive group orbit on the sphere")
    if group_xi.dim == 1 and group_xi.rank == 1 and weights is not None:
        w = np.asarray(weights, dtype=float)
        if v0_dim % 2 == 0 and w.size == v0_dim // 2 and np.all(w > 1e-9):
            return CategoryBound(v0_dim // 2,
                                 "weighted projective quotient of the sphere")
    return CategoryBound(None, "quotient not in the recognized list")


@dataclass(frozen=True)
class MorseBottResult:
    verdict: str  # morse_bott | degenerate | transitive_auto_pass
    eigenvalues: np.ndarray
    orbit_dim: int
    sphere_dim: int
    clusters: tuple = ()
    note: str = ""


def _restricted_generators(model: Model, basis: np.ndarray):
    """Generators of the residual action in kernel coordinates."""
    return [basis.T @ a @ basis for a in model.action.generators]


def orbit_dimension(model: Model, basis: np.ndarray, u, sv_tol: float = 1e-8) -> int:
    """Rank of the group-orbit tangent at basis @ u, in kernel coordinates."""
    gens = _restricted_generators(model, basis)
    cols = np.stack([a @ u for a in gens], axis=1)
    s = np.linalg.svd(cols, compute_uv=False)
    return int(np.sum(s > sv_tol * max(1.0, s[0] if s.size else 0.0)))


def generalized_eigs(s_restricted: np.ndarray, q: np.ndarray, sigma: float):
    """Eigenpairs of S u = lambda Q u with Q definite of sign sigma."""
    from scipy.linalg import eigh

    w, v = eigh(s_restricted, sigma * q)
    return sigma * w, v


def morse_bott_check(model: Model, root: VelocityRoot, beta,
                     cluster_rel: float = 1e-7) -> MorseBottResult:
    """Morse-Bott test for the momentum component beta on the kernel sphere.

    The quadratic form of beta restricted to the kernel is diagonalized
    against the definite form Q.  At each eigen-orbit the degeneracy
    directions of the sphere-restricted Hessian are exactly the remaining
    eigenvectors of the same eigenvalue cluster; the function is Morse-Bott
    when those coincide with the group-orbit tangent.  Transitive orbits
    pass automatically; an eigenvalue spectrum collapsed to a single cluster
    means the function is constant on the sphere and is flagged degenerate.
    """
    basis = root.kernel_basis
    l = root.kernel_dim
    q = root.restricted_hessian
    sigma = 1.0 if root.definiteness == "positive" else -1.0
    s_res = restricted_form(model.s_matrix(beta), basis)

    # transitive case first: every invariant function is Morse-Bott
    u_probe = np.ones(l) / np.sqrt(l)
    odim = orbit_dimension(model, basis, u_probe)
    if odim == l - 1:
        return MorseBottResult("transitive_auto_pass", np.array([]), odim, l - 1,
                               note="orbit dimension equals sphere dimension")

    w, vecs = generalized_eigs(s_res, q, sigma)
    spread = float(np.max(w) - np.min(w)) if w.size else 0.0
    scale = max(float(np.max(np.abs(w))), 1e-300)
    if spread < cluster_rel * scale:
        return MorseBottResult("degenerate", w, odim, l - 1,
                               note="restricted form proportional to Q; "
                                    "the sphere function is constant")

    # cluster eigenvalues
    order = np.argsort(w)
    w_sorted = w[order]
    v_sorted = vecs[:, order]
    clusters = []
    start = 0
    for i in range(1, l + 1):
        if i == l or w_sorted[i] - w_sorted[i - 1] > cluster_rel * scale:
            clusters.append((start, i))
            start = i
    verdict = "morse_bott"
    notes = []
    cluster_info = []
    for (a, b) in clusters:
        mult = b - a
        u0 = v_sorted[:, a]
        u0 = u0 / np.sqrt(abs(u0 @ (sigma * q) @ u0))
        od = orbit_dimension(model, basis, u0)
        cluster_info.append((float(w_sorted[a]), mult, od))
        # sphere-Hessian kernel at u0 has dimension mult - 1 within the
        # tangent; Morse-Bott needs it to equal the orbit tangent
        if mult - 1 != od:
            verdict = "degenerate"
            notes.append(f"cluster at {w_sorted[a]:.6g}: degeneracy {mult - 1} "
                         f"vs orbit dimension {od}")
            continue
        if mult > 1:
            # directions must coincide, not only dimensions
            cluster_vecs = v_sorted[:, a:b]
            gens = _restricted_generators(model, basis)
            tangent = np.stack([g @ u0 for g in gens], axis=1)
            qn = sigma * q
            # project tangent onto the cluster eigenspace, Q-orthogonally
            gram = cluster_vecs.T @ qn @ cluster_vecs
            coeff = np.linalg.solve(gram, cluster_vecs.T @ qn @ tangent)
            resid = tangent - cluster_vecs @ coeff
            rel = np.linalg.norm(resid) / max(np.linalg.norm(tangent), 1e-300)
            if rel > 1e-6:
                verdict = "degenerate"
                notes.append(f"cluster at {w_sorted[a]:.6g}: orbit tangent leaves "
                             f"the degeneracy space (residual {rel:.2e})")
    return MorseBottResult(verdict, w_sorted, odim, l - 1, tuple(cluster_info),
                           "; ".join(notes))


@dataclass(frozen=True)
class CountReport:
    """Per-root lower-bound summary."""

    bartsch: BartschBound
    category: CategoryBound
    fixed_dim: int
    group_xi: GroupXi
    morse_bott: tuple = ()  # (beta tuple, verdict) pairs

    @property
    def lower_bound(self) -> int:
        if not self.bartsch.inapplicable:
            return max(self.bartsch.floor, self.category.effective)
        return self.category.effective


def count_report(model: Model, root: VelocityRoot, group_xi: GroupXi | None = None,
                 beta_basis=None) -> CountReport:
    """Assemble the counting data for one root."""
    gxi = group_xi_metadata(model.action, group_xi)
    fixed = fixed_subspace(model.action, model.action.torus_generators,
                           root.kernel_basis)
    fixed_dim = fixed.shape[1]
    bb = bartsch_bound(root.kernel_dim, gxi.dim, gxi.rank, fixed_dim)

    weights = None
    orbit_dim_probe = None
    if model.action.dim_g >= 1:
        u_probe = np.ones(root.kernel_dim) / np.sqrt(root.kernel_dim)
        orbit_dim_probe = orbit_dimension(model, root.kernel_basis, u_probe)
    if gxi.dim == 1:
        gen_res = _restricted_generators(model, root.kernel_basis)[
            model.action.torus_generators[0]]
        weights = circle_weights(gen_res)
    cb = category_bound(root.kernel_dim, gxi, weights, orbit_dim_probe)

    mb = []
    if beta_basis is not None and root.definiteness in ("positive", "negative"):
        for beta in beta_basis:
            res = morse_bott_check(model, root, beta)
            mb.append((tuple(np.atleast_1d(beta).tolist()), res.verdict))
    return CountReport(bb, cb, fixed_dim, gxi, tuple(mb))
