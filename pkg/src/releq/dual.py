"""Nestable forward-mode dual numbers.

A :class:`Dual` carries a value part ``a`` and a derivative part ``b``.
Parts may be floats, numpy arrays, or further ``Dual`` instances; nesting one
level deep propagates exact second derivatives (dual-of-dual).

Whole gradients and Hessians come out of a single evaluation pass by seeding
array-shaped derivative parts: the inner level carries row-shaped seeds and
the outer level column-shaped ones, so the cross term of the product rule
broadcasts into the (n, n) Hessian block.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

_SCALAR_TYPES = (int, float, np.floating)


class Dual:
    """First-order dual number a + b*eps with eps**2 = 0."""

    __slots__ = ("a", "b")
    # Keep numpy from broadcasting over Dual operands elementwise.
    __array_ufunc__ = None

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def __repr__(self):
        return f"Dual({self.a!r}, {self.b!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a + other.a, self.b + other.b)
        return Dual(self.a + other, self.b)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.a, -self.b)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a - other.a, self.b - other.b)
        return Dual(self.a - other, self.b)

    def __rsub__(self, other):
        return Dual(other - self.a, -self.b)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a * other.a, self.a * other.b + self.b * other.a)
        return Dual(self.a * other, self.b * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other
            return self * inv
        return Dual(self.a / other, self.b / other)

    def __rtruediv__(self, other):
        # other / self with other scalar-like
        inv_a = other / self.a
        return Dual(inv_a, -(inv_a / self.a) * self.b)

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("Dual.__pow__ supports non-negative integer exponents")
        result = 1.0
        base = self
        e = k
        while e:
            if e & 1:
                result = base * result
            base = base * base
            e >>= 1
        return result

    def sqrt(self):
        root = dsqrt(self.a)
        return Dual(root, self.b * (0.5 / root))


def dsqrt(x):
    """Square root for floats and Duals; rejects non-positive real parts."""
    if isinstance(x, Dual):
        return x.sqrt()
    if x <= 0.0:
        raise DomainError(f"sqrt of non-positive value {x}")
    return math.sqrt(x)


def _unwrap(y):
    """Extract (value, first-part, second-part) from a possibly-constant result."""
    if isinstance(y, Dual):
        return y.a, y.b
    return y, None


def value_grad(f, x):
    """Value and gradient of ``f`` at ``x`` in one forward pass.

    ``f`` receives a list of scalar-like objects, one per coordinate.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    eye = np.eye(n)
    seeds = [Dual(float(x[i]), eye[i].copy()) for i in range(n)]
    y = f(seeds)
    if isinstance(y, Dual):
        return float(y.a), np.asarray(y.b, dtype=float).reshape(n)
    return float(y), np.zeros(n)


def value_grad_hess(f, x):
    """Value, gradient, and Hessian of ``f`` at ``x`` via dual-of-dual.

    The inner dual level carries (1, n) row seeds, the outer level (n, 1)
    column seeds; their product-rule cross terms assemble the full Hessian in
    a single evaluation.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    eye = np.eye(n)
    seeds = []
    for i in range(n):
        inner = Dual(float(x[i]), eye[i].reshape(1, n).copy())
        outer = Dual(eye[i].reshape(n, 1).copy(), np.zeros((n, n)))
        seeds.append(Dual(inner, outer))
    y = f(seeds)
    if not isinstance(y, Dual):
        return float(y), np.zeros(n), np.zeros((n, n))
    val_part, der_part = y.a, y.b
    if isinstance(val_part, Dual):
        value = float(val_part.a)
        grad = np.asarray(val_part.b, dtype=float).reshape(n)
    else:
        value = float(val_part)
        grad = np.zeros(n)
    if isinstance(der_part, Dual):
        hess = np.asarray(der_part.b, dtype=float).reshape(n, n)
    else:
        hess = np.zeros((n, n))
    hess = 0.5 * (hess + hess.T)
    return value, grad, hess
