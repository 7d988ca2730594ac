"""Built-in example systems.

Each builder returns a validated :class:`~releq.model.Model`.  Coordinate
orderings follow the conventional presentation of each system, so the
symplectic matrices differ between builtins; nothing downstream assumes a
particular ordering.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .expr import Const, Neg, Pow, Prod, Sqrt, Sum, Var
from .model import (GroupAction, HamiltonianSpec, SymplecticSpace, Tolerances,
                    build_model, check_invariance)

BUILTIN_NAMES = ("motivating_s1", "spherical_pendulum", "coupled_oscillators")


def _sq(node):
    return Pow(node, 2)


def motivating_s1(tol=None):
    """Planar two-mode system with one circle symmetry and an indefinite Hessian.

    Coordinates (q1, q2, p1, p2).  The circle action rotates the (q1, p1) and
    (q2, p2) planes with opposite symplectic orientation, so its momentum is
    (q1^2 + p1^2 - q2^2 - p2^2)/2.  Exact relative-equilibrium planes exist
    with velocities 2 and 4.
    """
    omega = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ])
    space = SymplecticSpace(4, omega)
    gen = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ])
    action = GroupAction(1, 1, True, (gen,), (0,))
    r1 = Sum((_sq(Var(0)), _sq(Var(2))))  # q1^2 + p1^2
    r2 = Sum((_sq(Var(1)), _sq(Var(3))))  # q2^2 + p2^2
    h = Sum((r1, Neg(Prod((Const(2.0), r2))), Prod((r1, r2))))
    return build_model(space, action, HamiltonianSpec(h), tol=tol, name="motivating_s1")


def spherical_pendulum(m=1.0, l=1.0, g=1.0, pa=0.0, pb=0.0, pc=0.0, tol=None):
    """Spherical pendulum about the hanging equilibrium, in chart coordinates.

    Coordinates (x, y, px, py): the planar projection of the bob and its
    conjugate momenta.  The circle action is simultaneous rotation of the
    position and momentum planes.  ``pa``, ``pb``, ``pc`` are coefficients of
    an invariant perturbation  pa*(x^2+y^2)^2 + pb*(px^2+py^2)^2
    + pc*(x*px+y*py)^2.  The gravitational constant term is removed at load.
    """
    if m <= 0 or l <= 0 or g <= 0:
        raise ValidationError("parameters", "m, l, g must be positive")
    omega = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ])
    space = SymplecticSpace(4, omega)
    rot = np.array([
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    action = GroupAction(1, 1, True, (rot,), (0,))
    x, y, px, py = Var(0), Var(1), Var(2), Var(3)
    p2 = Sum((_sq(px), _sq(py)))
    radial = Sum((_sq(x), _sq(y)))
    mixed = Sum((Prod((x, px)), Prod((y, py))))
    terms = [
        Prod((Const(1.0 / (2.0 * m)), p2)),
        Neg(Prod((Const(1.0 / (2.0 * m * l * l)), _sq(mixed)))),
        Neg(Prod((Const(m * g), Sqrt(Sum((Const(l * l), Neg(radial))))))),
    ]
    if pa:
        terms.append(Prod((Const(float(pa)), _sq(radial))))
    if pb:
        terms.append(Prod((Const(float(pb)), _sq(p2))))
    if pc:
        terms.append(Prod((Const(float(pc)), _sq(mixed))))
    h = Sum(tuple(terms))
    params = {"m": m, "l": l, "g": g, "pa": pa, "pb": pb, "pc": pc}
    return build_model(space, action, HamiltonianSpec(h, params), tol=tol,
                       name="spherical_pendulum")


def coupled_oscillators(m=1.0, k=1.0, gamma=0.5, f1=0.0, f2=0.0, f3=0.0, f4=0.0,
                        tol=None):
    """Two charged harmonic oscillators in a transverse magnetic field.

    Coordinates (q1..q4, p1..p4).  A two-torus acts canonically with momentum
    components  (q1 p2 - q2 p1 + q3 p4 - q4 p3,  q1 p3 - q3 p1 + q2 p4 - q4 p2).
    ``f1..f4`` are coefficients of an invariant interaction
    f1*s1^2 + f2*s2^2 + f3*s3^2 + f4*s4^2 in the basic invariants
    s1 = |q|^2, s2 = |p|^2, s3 = q.p, s4 = p1 q2 - p2 q1 + p3 q4 - p4 q3.
    """
    if m <= 0 or k <= 0:
        raise ValidationError("parameters", "m and k must be positive")
    dim = 8
    omega = np.zeros((dim, dim))
    omega[:4, 4:] = np.eye(4)
    omega[4:, :4] = -np.eye(4)
    space = SymplecticSpace(dim, omega)

    c1 = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ])
    c2 = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ])
    a1 = np.zeros((dim, dim))
    a1[:4, :4] = -c1
    a1[4:, 4:] = -c1
    a2 = np.zeros((dim, dim))
    a2[:4, :4] = -c2
    a2[4:, 4:] = -c2
    action = GroupAction(2, 2, True, (a1, a2), (0, 1))

    q = [Var(i) for i in range(4)]
    p = [Var(i + 4) for i in range(4)]
    s1 = Sum(tuple(_sq(qi) for qi in q))
    s2 = Sum(tuple(_sq(pi) for pi in p))
    s3 = Sum(tuple(Prod((qi, pi)) for qi, pi in zip(q, p)))
    # s4 = p1 q2 - p2 q1 + p3 q4 - p4 q3
    s4 = Sum((
        Prod((p[0], q[1])), Neg(Prod((p[1], q[0]))),
        Prod((p[2], q[3])), Neg(Prod((p[3], q[2]))),
    ))
    terms = [
        Prod((Const(1.0 / (2.0 * m)), s2)),
        Prod((Const(gamma * gamma / (2.0 * m) + 0.5 * k), s1)),
        Prod((Const(gamma / m), s4)),
    ]
    for coeff, inv in ((f1, s1), (f2, s2), (f3, s3), (f4, s4)):
        if coeff:
            terms.append(Prod((Const(float(coeff)), _sq(inv))))
    h = Sum(tuple(terms))
    params = {"m": m, "k": k, "gamma": gamma, "f1": f1, "f2": f2, "f3": f3, "f4": f4}
    return build_model(space, action, HamiltonianSpec(h, params), tol=tol,
                       name="coupled_oscillators")


_BUILDERS = {
    "motivating_s1": motivating_s1,
    "spherical_pendulum": spherical_pendulum,
    "coupled_oscillators": coupled_oscillators,
}


def make_builtin(name, tol=None, check=True, **params):
    """Build a named example system with parameter overrides.

    With ``check`` set, sampled Hamiltonian invariance is verified at load;
    builtins must pass it by construction.
    """
    if name not in _BUILDERS:
        raise ValidationError("builtin_name",
                              f"unknown builtin '{name}'; choose from {BUILTIN_NAMES}")
    model = _BUILDERS[name](tol=tol, **params)
    if check:
        inv = check_invariance(model, sample_count=20, radius=0.4, seed=0)
        if not inv.passed:
            raise ValidationError("invariance",
                                  f"builtin {name} failed sampled invariance: {inv.max_scaled}")
    return model
