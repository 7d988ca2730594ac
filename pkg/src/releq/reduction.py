"""Numerical Lyapunov-Schmidt reduction at a critical velocity.

The phase space splits as V0 (kernel of the augmented Hessian) plus its
orthogonal complement V1; antisymmetric generators make the Euclidean
complement invariant under the residual symmetry.  The slave equation
solves for the V1-component implicitly by Newton iteration, the reduced
gradient is the V0-projection of the augmented gradient at the
reconstructed point, and the structural properties of both maps are
measured by finite differences as independent residual checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .model import Model, _frozen
from .velocity import VelocityRoot


@dataclass(frozen=True)
class ReductionFrame:
    """Orthonormal splitting V = V0 + V1 adapted to a root."""

    root: VelocityRoot
    b0: np.ndarray  # 2n x l
    b1: np.ndarray  # 2n x (2n - l)
    projector: np.ndarray  # onto V0

    def __post_init__(self):
        object.__setattr__(self, "b0", _frozen(self.b0))
        object.__setattr__(self, "b1", _frozen(self.b1))
        object.__setattr__(self, "projector", _frozen(self.projector))


def build_frame(model: Model, root: VelocityRoot) -> ReductionFrame:
    """Orthonormal basis of the kernel and of its orthogonal complement."""
    b0 = root.kernel_basis
    dim = model.space.dim
    # complete to a full orthonormal basis: null space of b0^T
    u, s, vt = np.linalg.svd(b0.T)
    b1 = vt[root.kernel_dim:].T
    proj = b0 @ b0.T
    return ReductionFrame(root, b0, b1, proj)


def _check_trust(model, v0, alpha):
    tr = model.tol.trust_region
    if np.linalg.norm(v0) > tr or np.linalg.norm(alpha) > tr:
        raise ValueError(
            f"probe outside the reduction trust region (radius {tr}); "
            "the implicit solve is only locally defined")


def solve_slave(frame: ReductionFrame, model: Model, v0, alpha,
                max_iter: int = 50):
    """Solve the complement equation for the V1-component.

    Newton iteration on w -> B1^T grad(h - J_{xi+alpha})(v0 + B1 w) starting
    from w = 0; the restricted Hessian is available exactly, giving quadratic
    convergence down to the slave tolerance.  Returns the full-space vector
    B1 w.  Raises :class:`NoConvergence` when the iteration leaves the
    implicit-function neighborhood.
    """
    v0 = np.asarray(v0, dtype=float)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    _check_trust(model, v0, alpha)
    b1 = frame.b1
    xi_total = frame.root.xi + alpha
    s_total = model.s_matrix(xi_total)
    tol = model.tol.slave
    w = np.zeros(b1.shape[1])
    from .model import eval_h2

    for _ in range(max_iter):
        v = v0 + b1 @ w
        _, grad, hess = eval_h2(model, v)
        g = b1.T @ (grad - s_total @ v)
        if np.linalg.norm(g) < tol:
            return b1 @ w
        jac = b1.T @ (hess - s_total) @ b1
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular complement Hessian: {exc}") from exc
        w = w + step
    raise NoConvergence(
        f"slave equation did not reach {tol} in {max_iter} iterations at "
        f"v0 norm {np.linalg.norm(v0):.3g}, alpha {alpha}")


def reduced_gradient(frame: ReductionFrame, model: Model, v0, alpha):
    """V0-components of the augmented gradient at the reconstructed point.

    The complement component of the same gradient vanishes by construction
    of the slave map; this is asserted.
    """
    v0 = np.asarray(v0, dtype=float)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    v1 = solve_slave(frame, model, v0, alpha)
    v = v0 + v1
    grad = model.grad_h(v) - model.s_matrix(frame.root.xi + alpha) @ v
    comp = frame.b1.T @ grad
    if np.linalg.norm(comp) > 1e-10:
        raise AssertionError(
            f"complement gradient component {np.linalg.norm(comp):.3e} "
            "exceeds 1e-10 after the slave solve")
    return frame.b0.T @ grad


def potential_value(frame: ReductionFrame, model: Model, v0, alpha):
    """(h - J_{xi+alpha}) at the reconstructed point; its V0-gradient is the
    reduced gradient."""
    v0 = np.asarray(v0, dtype=float)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    v1 = solve_slave(frame, model, v0, alpha)
    v = v0 + v1
    s = model.s_matrix(frame.root.xi + alpha)
    return model.h(v) - 0.5 * float(v @ s @ v)


def energy_on_kernel(frame: ReductionFrame, model: Model, v0, alpha):
    """h at the reconstructed point (kernel coordinates fixed by the frame)."""
    v1 = solve_slave(frame, model, v0, alpha)
    return model.h(np.asarray(v0, float) + v1)


def lemma_residuals(frame: ReductionFrame, model: Model, n_probes: int = 5,
                    probe_scale: float = 0.05, fd_step: float = 1e-4,
                    seed: int = 0):
    """Finite-difference residuals of the structural reduction properties.

    (a) the slave map vanishes on the parameter axis: max ||v1(0, alpha)||;
    (b) its kernel-direction derivative vanishes at the origin;
    (c) so does the kernel-direction derivative of the reduced gradient;
    (d) the mixed kernel/parameter derivative of the reduced gradient is
        minus the momentum Hessian, tested on random direction pairs.
    All derivatives are central finite differences: these are independent
    checks of the implicitly-defined maps, not retained derivatives.
    """
    rng = np.random.default_rng(seed)
    l = frame.root.kernel_dim
    dim_g = model.action.dim_g
    b0 = frame.b0

    res_a = 0.0
    for _ in range(n_probes):
        alpha = probe_scale * rng.normal(size=dim_g)
        res_a = max(res_a, float(np.linalg.norm(
            solve_slave(frame, model, np.zeros(model.space.dim), alpha))))

    h = fd_step
    res_b = 0.0
    for j in range(l):
        d = b0[:, j]
        vp = solve_slave(frame, model, h * d, np.zeros(dim_g))
        vm = solve_slave(frame, model, -h * d, np.zeros(dim_g))
        res_b = max(res_b, float(np.linalg.norm((vp - vm) / (2 * h))))

    res_c = 0.0
    for j in range(l):
        d = b0[:, j]
        gp = reduced_gradient(frame, model, h * d, np.zeros(dim_g))
        gm = reduced_gradient(frame, model, -h * d, np.zeros(dim_g))
        res_c = max(res_c, float(np.linalg.norm((gp - gm) / (2 * h))))

    res_d = 0.0
    for _ in range(n_probes):
        v_dir = rng.normal(size=l)
        v_dir /= np.linalg.norm(v_dir)
        w_dir = rng.normal(size=l)
        w_dir /= np.linalg.norm(w_dir)
        a_dir = rng.normal(size=dim_g)
        a_dir /= np.linalg.norm(a_dir)
        vpp = reduced_gradient(frame, model, h * b0 @ v_dir, h * a_dir)
        vpm = reduced_gradient(frame, model, h * b0 @ v_dir, -h * a_dir)
        vmp = reduced_gradient(frame, model, -h * b0 @ v_dir, h * a_dir)
        vmm = reduced_gradient(frame, model, -h * b0 @ v_dir, -h * a_dir)
        mixed = (vpp - vpm - vmp + vmm) / (4 * h * h)
        lhs = float(mixed @ w_dir)
        s_alpha = model.s_matrix(a_dir)
        rhs = -float((b0 @ v_dir) @ s_alpha @ (b0 @ w_dir))
        res_d = max(res_d, abs(lhs - rhs))

    return {
        "slave_on_axis": res_a,
        "slave_kernel_derivative": res_b,
        "reduced_gradient_kernel_derivative": res_c,
        "mixed_derivative_identity": res_d,
    }
