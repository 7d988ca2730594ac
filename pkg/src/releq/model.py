"""Phase space, group action, momentum map, and Hamiltonian.

Conventions.  The symplectic form is the bilinear form ``w(u, v) = u^T W v``
for an antisymmetric invertible matrix ``W``.  Hamiltonian vector fields are
``X_f(v) = -W^{-1} grad f(v)``; with the standard block form of ``W`` this is
the usual ``(dq/dt, dp/dt) = (dh/dp, -dh/dq)``.  For an infinitesimally
canonical generator matrix ``A`` the momentum component is the quadratic form
``J_A(v) = v^T S v / 2`` with ``S = sym(A^T W)``, and the defining identity
``X_{J_A}(v) = A v`` holds exactly.

All types are immutable after construction; every operation is a pure
function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .dual import value_grad_hess
from .errors import DimensionMismatch, ValidationError


DEFAULT_STRUCTURAL_TOL = 1e-12


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds, overridable from configuration."""

    structural: float = DEFAULT_STRUCTURAL_TOL
    invariance: float = 1e-9
    origin: float = 1e-10          # |h(0)|, |grad h(0)| at load
    kernel_rel: float = 1e-8       # eigenvalue cutoff relative to spectral radius
    definiteness_rel: float = 1e-8  # margin relative to ||Q||
    slave: float = 1e-11           # slave-equation Newton residual
    trust_region: float = 0.5
    branch: float = 1e-9           # gradient residual on accepted branch samples
    flow: float = 1e-7             # relative-equilibrium flow test, T=1 scale
    orbit_rel: float = 1e-6        # orbit-distance dedup threshold, relative
    dip_rel: float = 1e-3          # |det| dip detection relative to grid scale


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SymplecticSpace:
    """Even-dimensional real phase space with its symplectic-form matrix."""

    dim: int
    omega: np.ndarray

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise ValidationError("space_dim", f"dim must be even and positive, got {self.dim}")
        omega = _frozen(self.omega)
        if omega.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"omega must be {self.dim}x{self.dim}")
        object.__setattr__(self, "omega", omega)

    def validate(self, tol=DEFAULT_STRUCTURAL_TOL):
        checks = []
        anti = float(np.max(np.abs(self.omega + self.omega.T)))
        checks.append(Check("omega_antisymmetry", anti, 0.0, anti == 0.0))
        det = abs(float(np.linalg.det(self.omega)))
        checks.append(Check("omega_invertibility", det, tol, det > tol))
        return checks


def standard_omega(dim):
    """Pairwise dq_i ^ dp_i blocks in (q_1..q_n, p_1..p_n) ordering."""
    n = dim // 2
    omega = np.zeros((dim, dim))
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    return omega


@dataclass(frozen=True)
class GroupAction:
    """Linear canonical action, given by Lie algebra generator matrices."""

    dim_g: int
    rank_g: int
    abelian: bool
    generators: tuple
    torus_generators: tuple

    def __post_init__(self):
        gens = tuple(_frozen(a) for a in self.generators)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "torus_generators", tuple(int(i) for i in self.torus_generators))
        if len(gens) != self.dim_g:
            raise DimensionMismatch(f"expected {self.dim_g} generators, got {len(gens)}")


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    passed: bool

    def residual(self, name):
        for c in self.checks:
            if c.name == name:
                return c.residual
        raise KeyError(name)


def validate_action(space: SymplecticSpace, action: GroupAction, tol=None) -> ValidationReport:
    """Check canonicity, antisymmetry, commutativity, and torus bookkeeping."""
    tol = DEFAULT_STRUCTURAL_TOL if tol is None else tol
    n = space.dim
    for i, a in enumerate(action.generators):
        if a.shape != (n, n):
            raise DimensionMismatch(f"generator {i} is {a.shape}, expected square of size {n}")
    checks = list(space.validate(tol))
    omega = space.omega
    canon = 0.0
    anti = 0.0
    for a in action.generators:
        canon = max(canon, float(np.max(np.abs(a.T @ omega + omega @ a))))
        anti = max(anti, float(np.max(np.abs(a.T + a))))
    checks.append(Check("generator_canonicity", canon, tol, canon < tol))
    checks.append(Check("generator_antisymmetry", anti, tol, anti < tol))
    if action.abelian:
        comm = 0.0
        for i, a in enumerate(action.generators):
            for b in action.generators[i + 1:]:
                comm = max(comm, float(np.max(np.abs(a @ b - b @ a))))
        checks.append(Check("generator_commutators", comm, tol, comm < tol))
    rank_ok = action.rank_g <= action.dim_g
    checks.append(Check("rank_le_dim", 0.0 if rank_ok else 1.0, 0.5, rank_ok))
    torus_ok = len(action.torus_generators) == action.rank_g and all(
        0 <= i < action.dim_g for i in action.torus_generators
    )
    checks.append(Check("torus_cardinality", 0.0 if torus_ok else 1.0, 0.5, torus_ok))
    return ValidationReport(tuple(checks), all(c.passed for c in checks))


@dataclass(frozen=True)
class MomentumForm:
    """Quadratic momentum component J(v) = v^T S v / 2 for a velocity xi."""

    xi: np.ndarray
    s_matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", _frozen(np.atleast_1d(self.xi)))
        object.__setattr__(self, "s_matrix", _frozen(self.s_matrix))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * float(v @ self.s_matrix @ v)

    def gradient(self, v):
        return self.s_matrix @ np.asarray(v, dtype=float)


def momentum_matrix(space: SymplecticSpace, generator: np.ndarray) -> np.ndarray:
    """Symmetrized A^T W; for canonical A this equals A^T W exactly."""
    m = generator.T @ space.omega
    return 0.5 * (m + m.T)


def momentum_quadratic(space: SymplecticSpace, action: GroupAction, xi) -> MomentumForm:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (action.dim_g,):
        raise DimensionMismatch(f"xi must have {action.dim_g} components")
    s = np.zeros((space.dim, space.dim))
    for c, a in zip(xi, action.generators):
        if c != 0.0:
            s = s + c * momentum_matrix(space, a)
    return MomentumForm(xi, s)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Expression tree for h with named parameters.

    ``constant_offset`` records the value subtracted from the raw expression
    so that h(0) = 0 holds exactly after loading.
    """

    expression: object
    parameters: dict = field(default_factory=dict)
    constant_offset: float = 0.0


class Model:
    """A validated system: space + action + Hamiltonian, with cached evaluators."""

    def __init__(self, space, action, hamiltonian, tol=None, name=None):
        self.space = space
        self.action = action
        self.hamiltonian = hamiltonian
        self.tol = tol or Tolerances()
        self.name = name
        self.validation = validate_action(space, action, self.tol.structural)
        if not self.validation.passed:
            failed = [c.name for c in self.validation.checks if not c.passed]
            raise ValidationError(failed[0], f"action validation failed: {failed}")
        self._vg = ex.compile_value_grad(hamiltonian.expression, space.dim)
        val0, grad0, hess0 = value_grad_hess(self._eval_tree, np.zeros(space.dim))
        if abs(val0) > self.tol.origin:
            raise ValidationError("origin_value", f"h(0) = {val0} after offset removal")
        g0 = float(np.max(np.abs(grad0)))
        if g0 > self.tol.origin:
            raise ValidationError("origin_gradient", f"max |grad h(0)| = {g0}")
        self.d2h0 = 0.5 * (hess0 + hess0.T)
        self.d2h0.setflags(write=False)
        self.omega_inv = np.linalg.inv(space.omega)
        self.omega_inv.setflags(write=False)
        self.s_basis = tuple(
            _frozen(momentum_matrix(space, a)) for a in action.generators
        )

    # -- evaluation ------------------------------------------------------

    def _eval_tree(self, vals):
        return ex.evaluate(self.hamiltonian.expression, vals)

    def h_value_grad(self, v):
        return self._vg(np.asarray(v, dtype=float))

    def h(self, v):
        return self._vg(np.asarray(v, dtype=float))[0]

    def grad_h(self, v):
        return self._vg(np.asarray(v, dtype=float))[1]

    def s_matrix(self, xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        s = np.zeros((self.space.dim, self.space.dim))
        for c, m in zip(xi, self.s_basis):
            if c != 0.0:
                s = s + c * m
        return s

    def momentum_values(self, v):
        v = np.asarray(v, dtype=float)
        return np.array([0.5 * float(v @ s @ v) for s in self.s_basis])

    def aug_hessian0(self, xi):
        """d^2(h - J_xi)(0) = d^2 h(0) - S_xi."""
        return self.d2h0 - self.s_matrix(xi)

    def grad_aug(self, v, xi):
        """grad (h - J_xi) at v."""
        return self.grad_h(v) - self.s_matrix(xi) @ np.asarray(v, dtype=float)

    def hamiltonian_field(self, v):
        """X_h(v) = -W^{-1} grad h(v)."""
        return -self.omega_inv @ self.grad_h(v)


def build_model(space, action, hamiltonian, tol=None, name=None) -> Model:
    """Validate and assemble a model, subtracting any constant offset of h.

    The offset subtraction houses Hamiltonians whose natural expression has
    h(0) != 0; the subtracted value is recorded on the returned model's
    HamiltonianSpec.
    """
    tol = tol or Tolerances()
    tree = hamiltonian.expression
    h0 = ex.evaluate(tree, [0.0] * space.dim)
    offset = hamiltonian.constant_offset
    if abs(h0) > 0.0:
        tree = ex.Sum((tree, ex.Const(-h0)))
        offset = offset + h0
    spec = HamiltonianSpec(tree, dict(hamiltonian.parameters), offset)
    return Model(space, action, spec, tol=tol, name=name)


def eval_h2(model: Model, v):
    """Value, gradient, and symmetrized Hessian of h at v.

    Derivatives come from nested first-order forward duals (dual-of-dual),
    exact to roundoff; finite differences are used only as a test oracle.
    """
    val, grad, hess = value_grad_hess(model._eval_tree, v)
    return val, grad, hess


@dataclass(frozen=True)
class InvarianceReport:
    max_scaled: float
    max_raw: float
    noether_max_scaled: float
    noether_max_raw: float
    tolerance: float
    passed: bool
    per_generator: tuple = ()


def check_invariance(model: Model, sample_count: int = 100, radius: float = 1.0,
                     seed: int = 0) -> InvarianceReport:
    """Sampled invariance of h along generator directions, plus Noether brackets.

    Reports max |grad h(v) . (A_i v)| scaled by |grad h||A_i v|, and the
    Poisson bracket residual grad J_i(v)^T W^{-1} grad h(v) at the same
    samples, certifying that each momentum component is flow-invariant.
    """
    rng = np.random.default_rng(seed)
    n = model.space.dim
    max_scaled = 0.0
    max_raw = 0.0
    noe_scaled = 0.0
    noe_raw = 0.0
    per_gen = [0.0] * model.action.dim_g
    for _ in range(sample_count):
        v = rng.normal(size=n)
        v *= radius * rng.uniform() ** (1.0 / n) / np.linalg.norm(v)
        grad = model.grad_h(v)
        gn = np.linalg.norm(grad)
        for i, a in enumerate(model.action.generators):
            av = a @ v
            raw = abs(float(grad @ av))
            scale = gn * np.linalg.norm(av)
            scaled = raw / scale if scale > 0 else 0.0
            max_raw = max(max_raw, raw)
            max_scaled = max(max_scaled, scaled)
            per_gen[i] = max(per_gen[i], scaled)
            gj = model.s_basis[i] @ v
            braw = abs(float(gj @ model.omega_inv @ grad))
            bscale = np.linalg.norm(gj) * gn
            noe_raw = max(noe_raw, braw)
            noe_scaled = max(noe_scaled, braw / bscale if bscale > 0 else 0.0)
    tol = model.tol.invariance
    return InvarianceReport(max_scaled, max_raw, noe_scaled, noe_raw, tol,
                            max_scaled < tol, tuple(per_gen))
