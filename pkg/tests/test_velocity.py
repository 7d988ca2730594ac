"""Critical-velocity roots, kernels, and definiteness verdicts."""

import numpy as np
import pytest

from releq import GroupAction, HamiltonianSpec, NoKernel, SymplecticSpace, build_model
from releq.expr import Const, Pow, Prod, Sum, Var
from releq.velocity import (det_at, definiteness, find_roots, kernel_space,
                            make_root, merge_close, restricted_form)

from conftest import S5, coupled_paper_bases, subspace_angle


def cofactor_det(m):
    """Brute-force determinant by cofactor expansion (test oracle)."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if n == 1:
        return m[0, 0]
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += ((-1.0) ** j) * m[0, j] * cofactor_det(minor)
    return total


# -- det_at ------------------------------------------------------------------

def test_det_motivating_at_3_is_one(s1_model):
    # diag(2 - xi, xi - 4, 2 - xi, xi - 4) -> (2-3)^2 (3-4)^2 = 1
    assert det_at(s1_model, [3.0]) == pytest.approx(1.0, abs=1e-12)


def test_det_motivating_roots_vanish(s1_model):
    assert det_at(s1_model, [2.0]) == pytest.approx(0.0, abs=1e-14)
    assert det_at(s1_model, [4.0]) == pytest.approx(0.0, abs=1e-14)


def test_det_pendulum_root(pend_model):
    assert det_at(pend_model, [1.0]) == pytest.approx(0.0, abs=1e-14)


def test_det_matches_cofactor_oracle(s1_model, pend_model):
    rng = np.random.default_rng(4)
    for model in (s1_model, pend_model):
        for _ in range(5):
            xi = rng.uniform(-3, 3)
            got = det_at(model, [xi])
            want = cofactor_det(model.aug_hessian0([xi]))
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_det_coupled_matches_closed_form(co_model):
    """8x8 determinant equals the published quartic squared (m=k=1, g=1/2)."""
    m, k, g = 1.0, 1.0, 0.5
    rng = np.random.default_rng(5)
    for _ in range(8):
        x1, x2 = rng.uniform(-2, 2, size=2)
        quartic = (m ** 2 * x2 ** 4
                   - 2 * ((k * m + g * g) + (m * x1 + g) ** 2) * x2 ** 2
                   + (m * x1 ** 2 + 2 * g * x1 - k) ** 2)
        expected = quartic ** 2 / m ** 4
        assert det_at(co_model, [x1, x2]) == pytest.approx(expected, rel=1e-9)


# -- find_roots ---------------------------------------------------------------

def test_find_roots_motivating(s1_model, s1_roots):
    xs = sorted(float(r.xi[0]) for r in s1_roots)
    assert xs[0] == pytest.approx(2.0, abs=1e-9)
    assert xs[1] == pytest.approx(4.0, abs=1e-9)
    for r in s1_roots:
        assert abs(r.det_residual) < 1e-10
        assert r.kind == "isolated"


def test_find_roots_pendulum(pend_roots):
    xs = sorted(float(r.xi[0]) for r in pend_roots)
    assert xs[0] == pytest.approx(-1.0, abs=1e-9)
    assert xs[1] == pytest.approx(1.0, abs=1e-9)


def test_find_roots_sign_change_path():
    """A non-invariant quadratic gives simple det roots found by bracketing."""
    space = SymplecticSpace(2, np.array([[0.0, 1.0], [-1.0, 0.0]]))
    gen = np.array([[0.0, -1.0], [1.0, 0.0]])
    action = GroupAction(1, 1, True, (gen,), (0,))
    h = HamiltonianSpec(Sum((Prod((Const(0.5), Pow(Var(0), 2))), Pow(Var(1), 2))))
    model = build_model(space, action, h)
    # S = -I, so the augmented Hessian is diag(1 + xi, 2 + xi)
    search = find_roots(model, (-3.0, 0.5), 200)
    xs = sorted(float(r.xi[0]) for r in search.roots)
    assert xs == pytest.approx([-2.0, -1.0], abs=1e-11)
    assert all(not r.tangential for r in search.roots)
    assert search.roots[0].kernel_dim == 1


def test_find_roots_coupled_curves_and_jumps(co_isolated, co_curve):
    targets = [(-0.5 - S5, 0.0), (-0.5, -S5), (-0.5, S5), (0.5 * (-1) + S5, 0.0)]
    targets = [np.array([-0.5 + S5, 0.0]), np.array([-0.5 - S5, 0.0]),
               np.array([-0.5, S5]), np.array([-0.5, -S5])]
    for t in targets:
        best = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - t))
        assert np.linalg.norm(best.xi - t) < 1e-8
        assert best.kernel_dim == 4
    # curve samples satisfy one of the four published relations
    for r in co_curve:
        x1, x2 = r.xi
        locus = min(abs(x2 - (abs(x1 + 0.5) + S5)), abs(x2 + (abs(x1 + 0.5) + S5)),
                    abs(x2 - (abs(x1 + 0.5) - S5)), abs(x2 + (abs(x1 + 0.5) - S5)))
        assert locus < 1e-8
        assert r.kernel_dim == 2
    assert len(set(r.chain for r in co_curve)) == 4


def test_root_sign_symmetry_coupled(co_isolated):
    """Isolated roots come in the published sign-symmetric combinations."""
    xs = {tuple(np.round(r.xi, 9)) for r in co_isolated}
    for x1, x2 in list(xs):
        assert (round(x1, 9), round(-x2, 9)) in xs


def test_coarse_grid_still_finds_double_root(s1_model):
    """A window straddling a double root at very coarse resolution still
    finds it through the dip-minimization path."""
    search = find_roots(s1_model, (1.0, 2.9), 13)
    assert len(search.roots) == 1
    assert search.roots[0].xi[0] == pytest.approx(2.0, abs=1e-9)
    assert search.roots[0].tangential


def test_dip_without_zero_is_reported(s1_model):
    """A |det| dip that cannot be polished to zero becomes a warning.

    Coupling the two mode pairs invariantly with a large coefficient lifts
    the double roots off zero: det = ((2-xi)(xi-4) - eps^2)^2 has no real
    roots for eps > 1 but dips near xi = 3."""
    space = s1_model.space
    action = s1_model.action
    eps = 1.05
    r1 = Sum((Pow(Var(0), 2), Pow(Var(2), 2)))
    r2 = Sum((Pow(Var(1), 2), Pow(Var(3), 2)))
    coupling = Sum((Prod((Var(0), Var(1))),
                    Prod((Const(-1.0), Var(2), Var(3)))))
    h = Sum((r1, Prod((Const(-2.0), r2)), Prod((Const(eps), coupling))))
    model = build_model(space, action, HamiltonianSpec(h))
    from releq.model import check_invariance

    assert check_invariance(model, 40, seed=0).passed
    search = find_roots(model, (0.0, 6.0), 400)
    assert search.roots == []
    assert len(search.warnings) == 1
    assert "dips" in search.warnings[0].message
    assert search.warnings[0].xi[0] == pytest.approx(3.0, abs=1e-3)


# -- kernel_space --------------------------------------------------------------

def test_kernel_motivating_xi4(s1_roots):
    r4 = s1_roots[1]
    target = np.zeros((4, 2))
    target[1, 0] = 1.0  # q2
    target[3, 1] = 1.0  # p2
    assert subspace_angle(r4.kernel_basis, target) < 1e-8
    gram = r4.kernel_basis.T @ r4.kernel_basis
    assert np.max(np.abs(gram - np.eye(2))) < 1e-12


def test_kernel_pendulum(pend_roots):
    r = pend_roots[1]  # xi = +1
    target = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 0.0]])
    assert subspace_angle(r.kernel_basis, target) < 1e-8


def test_kernel_none_off_root(s1_model):
    with pytest.raises(NoKernel):
        kernel_space(s1_model, [3.0])


def test_kernel_residual_invariant(s1_model, pend_model, s1_roots, pend_roots):
    for model, roots in ((s1_model, s1_roots), (pend_model, pend_roots)):
        for r in roots:
            m = model.aug_hessian0(r.xi)
            resid = np.linalg.norm(m @ r.kernel_basis)
            assert resid < 10 * model.tol.kernel_rel * np.linalg.norm(m)


def test_kernel_is_group_invariant(s1_model, s1_roots, co_model, co_isolated):
    """(I - B B^T) A_i B is small for generators commuting with the velocity."""
    for model, roots in ((s1_model, s1_roots), (co_model, co_isolated)):
        for r in roots:
            b = r.kernel_basis
            proj = np.eye(model.space.dim) - b @ b.T
            for a in model.action.generators:
                assert np.linalg.norm(proj @ (a @ b)) < 1e-9


# -- definiteness and restricted forms ----------------------------------------

def test_definiteness_motivating(s1_model, s1_roots):
    v2, e2 = definiteness(s1_model, s1_roots[0])
    v4, e4 = definiteness(s1_model, s1_roots[1])
    assert v2 == "positive" and v4 == "negative"
    np.testing.assert_allclose(e2, [2.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(e4, [-4.0, -4.0], atol=1e-12)


def test_restricted_form_motivating_xi2_plane(s1_model):
    basis = np.zeros((4, 2))
    basis[0, 0] = 1.0  # q1
    basis[2, 1] = 1.0  # p1
    q = restricted_form(s1_model.d2h0, basis)
    np.testing.assert_allclose(q, 2.0 * np.eye(2), atol=0.0)


def test_pendulum_paper_basis_q(pend_model, pend_roots):
    """In the published (non-orthonormal) kernel basis, Q = 2 I at unit
    parameters; the orthonormal eigenvalues are the same divided by the
    basis norm squared."""
    paper = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 0.0]])
    q = restricted_form(pend_model.d2h0, paper)
    np.testing.assert_allclose(q, 2.0 * np.eye(2), atol=1e-9)
    _, eig = definiteness(pend_model, pend_roots[1])
    np.testing.assert_allclose(eig, [1.0, 1.0], atol=1e-9)


def test_coupled_paper_q_values(co_model):
    bases = coupled_paper_bases()
    d2 = co_model.d2h0
    s = S5
    q1p = 2 * (1 + 0.5 * (0.5 - s)) / 1.25
    q1m = 2 * (1 + 0.5 * (0.5 + s)) / 1.25
    q3 = 4 * (1 + 0.5 * (0.5 + s)) / 1.25
    q4 = 4 * (1 + 0.5 * (0.5 - s)) / 1.25
    np.testing.assert_allclose(restricted_form(d2, bases["1+"]),
                               q1p * np.eye(4), atol=1e-8)
    np.testing.assert_allclose(restricted_form(d2, bases["1-"]),
                               q1m * np.eye(4), atol=1e-8)
    for key in ("3+", "3-"):
        np.testing.assert_allclose(restricted_form(d2, bases[key]),
                                   q3 * np.eye(2), atol=1e-8)
    for key in ("4+", "4-"):
        np.testing.assert_allclose(restricted_form(d2, bases[key]),
                                   q4 * np.eye(2), atol=1e-8)
    for key in ("2+", "2-"):
        eig = np.linalg.eigvalsh(restricted_form(d2, bases[key]))
        np.testing.assert_allclose(sorted(eig), [q1p, q1p, q1m, q1m], atol=1e-8)


def test_coupled_q2_matrix_pattern(co_model):
    """The published 2+/2- restricted matrices, including off-diagonal signs."""
    bases = coupled_paper_bases()
    off = 2.0 * 0.5 / S5
    want = 2.0 * np.eye(4)
    want[0, 3] = want[3, 0] = off
    want[1, 2] = want[2, 1] = -off
    np.testing.assert_allclose(restricted_form(co_model.d2h0, bases["2+"]),
                               want, atol=1e-10)
    want2 = want.copy()
    want2[0, 3] = want2[3, 0] = -off
    want2[1, 2] = want2[2, 1] = off
    np.testing.assert_allclose(restricted_form(co_model.d2h0, bases["2-"]),
                               want2, atol=1e-10)


def test_paper_bases_span_computed_kernels(co_model, co_isolated):
    bases = coupled_paper_bases()
    r1p = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5 + S5, 0]))
    r1m = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5 - S5, 0]))
    r2p = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5, S5]))
    r2m = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5, -S5]))
    for root, key in ((r1p, "1+"), (r1m, "1-"), (r2p, "2+"), (r2m, "2-")):
        assert subspace_angle(root.kernel_basis, bases[key]) < 1e-8
    # the published two-dimensional bases hold on the half of each velocity
    # family with m xi_1 + gamma > 0
    for key, xi in (("3+", (0.3, abs(0.8) + S5)), ("3-", (0.3, -(abs(0.8) + S5))),
                    ("4+", (0.3, abs(0.8) - S5)), ("4-", (0.3, -(abs(0.8) - S5)))):
        b, _ = kernel_space(co_model, list(xi))
        assert subspace_angle(b, bases[key]) < 1e-8


def test_q3_definiteness_from_root(co_model):
    """Direct root assembly at a family point reproduces the published scalar."""
    xi = (0.3, abs(0.3 + 0.5) + S5)
    root = make_root(co_model, list(xi), kind="curve_sample")
    assert root.definiteness == "positive"
    bases = coupled_paper_bases()
    q = restricted_form(co_model.d2h0, bases["3+"])
    assert q[0, 0] == pytest.approx(4 * (1 + 0.5 * (0.5 + S5)) / 1.25, abs=1e-8)


def test_kernel_identity_on_every_root(s1_roots, pend_roots, co_isolated):
    """Momentum and Hamiltonian Hessians agree when restricted to the kernel."""
    for r in list(s1_roots) + list(pend_roots) + list(co_isolated):
        qn = max(np.max(np.abs(r.q_eigenvalues)), 1e-300)
        assert r.kernel_identity_residual < 1e-10 * qn


def test_eigenvalues_invariant_under_basis_change(co_model, co_isolated):
    """Generalized spectra do not depend on the kernel basis choice."""
    from releq.counts import generalized_eigs

    root = co_isolated[0]
    rng = np.random.default_rng(7)
    beta = np.array([0.3, -0.9])
    s_full = co_model.s_matrix(beta)
    spectra = []
    for _ in range(2):
        mix, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        basis = root.kernel_basis @ mix
        q = restricted_form(co_model.d2h0, basis)
        s_res = restricted_form(s_full, basis)
        w, _ = generalized_eigs(s_res, q, 1.0)
        spectra.append(np.sort(w))
    np.testing.assert_allclose(spectra[0], spectra[1], atol=1e-10)


def test_merge_close():
    assert merge_close([1.0, 1.0000001, 2.0], 0.001) == [1.0, 2.0]
