"""Lower bounds, fixed subspaces, and the Morse-Bott verification."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from releq import GroupAction
from releq.counts import (GroupXi, bartsch_bound, category_bound, circle_weights,
                          count_report, fixed_subspace, group_xi_metadata,
                          morse_bott_check)
from releq.velocity import restricted_form

from conftest import S5


# -- fixed_subspace -----------------------------------------------------------

def test_fixed_trivial_on_coupled_kernels(co_model, co_isolated, co_curve):
    for r in list(co_isolated) + co_curve[:8]:
        fixed = fixed_subspace(co_model.action, co_model.action.torus_generators,
                               r.kernel_basis)
        assert fixed.shape[1] == 0


def test_fixed_everything_for_trivial_action():
    action = GroupAction(1, 1, True, (np.zeros((4, 4)),), (0,))
    basis = np.eye(4)[:, :3]
    fixed = fixed_subspace(action, (0,), basis)
    assert fixed.shape[1] == 3


def test_fixed_trivial_on_motivating_kernel(s1_model, s1_roots):
    fixed = fixed_subspace(s1_model.action, (0,), s1_roots[1].kernel_basis)
    assert fixed.shape[1] == 0


def test_fixed_vectors_are_annihilated():
    """Any reported fixed vector satisfies A_i v = 0 tightly."""
    gen = np.zeros((4, 4))
    gen[0, 2] = 1.0
    gen[2, 0] = -1.0  # rotation in coordinates (0, 2); (1, 3) fixed
    action = GroupAction(1, 1, True, (gen,), (0,))
    fixed = fixed_subspace(action, (0,), np.eye(4))
    assert fixed.shape[1] == 2
    for j in range(fixed.shape[1]):
        assert np.linalg.norm(gen @ fixed[:, j]) < 1e-10


# -- bartsch_bound ------------------------------------------------------------

def test_bartsch_torus_four_dim():
    b = bartsch_bound(4, 2, 2, 0)
    assert not b.inapplicable
    assert b.rational == Fraction(4, 2)
    assert b.floor == 2


def test_bartsch_circle_two_dim():
    b = bartsch_bound(2, 1, 1, 0)
    assert b.floor == 1


def test_bartsch_inapplicable_with_fixed_vectors():
    assert bartsch_bound(2, 1, 1, 1).inapplicable


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 6))
def test_bartsch_monotone_in_kernel_dimension(dim1, dim2, extra):
    """Monotone nondecreasing in the kernel dimension, everything else fixed."""
    lo, hi = sorted((dim1, dim2))
    dim_g, rank_g = 1 + extra, 1
    a = bartsch_bound(lo, dim_g, rank_g, 0)
    b = bartsch_bound(hi, dim_g, rank_g, 0)
    assert b.floor >= a.floor
    assert b.rational >= a.rational


# -- category_bound -----------------------------------------------------------

def test_category_transitive_is_one():
    gx = GroupXi(1, 1)
    assert category_bound(2, gx, weights=[1.0], orbit_dim=1).value == 1


def test_category_weighted_projective():
    """dim 4 under a circle with weights (1, 1): complex projective line, 2."""
    gx = GroupXi(1, 1)
    cb = category_bound(4, gx, weights=[1.0, 1.0])
    assert cb.value == 2


def test_category_unknown_fallback():
    gx = GroupXi(2, 2)
    cb = category_bound(4, gx)
    assert cb.value is None
    assert cb.effective == 1


def test_category_zero_weight_not_recognized():
    gx = GroupXi(1, 1)
    cb = category_bound(4, gx, weights=[1.0, 0.0])
    assert cb.value is None


def test_circle_weights_of_rotation():
    gen = np.array([[0.0, -1.0, 0, 0], [1.0, 0.0, 0, 0],
                    [0, 0, 0.0, -2.0], [0, 0, 2.0, 0.0]])
    w = circle_weights(gen)
    np.testing.assert_allclose(sorted(w), [1.0, 2.0], atol=1e-9)


def test_motivating_category_equals_bartsch(s1_model, s1_roots):
    for root in s1_roots:
        cr = count_report(s1_model, root)
        assert cr.category.value == 1
        assert cr.bartsch.floor == 1


# -- group_xi metadata --------------------------------------------------------

def test_group_xi_abelian_automatic(co_model):
    gx = group_xi_metadata(co_model.action)
    assert gx == GroupXi(2, 2)


def test_group_xi_nonabelian_requires_metadata():
    action = GroupAction(1, 1, False, (np.zeros((2, 2)),), (0,))
    with pytest.raises(ValueError):
        group_xi_metadata(action)
    assert group_xi_metadata(action, GroupXi(3, 1)) == GroupXi(3, 1)


# -- morse_bott_check ----------------------------------------------------------

def test_morse_bott_transitive_any_beta(s1_model, s1_roots):
    for beta in ([1.0], [4.0], [-0.3]):
        res = morse_bott_check(s1_model, s1_roots[1], beta)
        assert res.verdict == "transitive_auto_pass"


def test_morse_bott_coupled_splitting_beta(co_model, co_isolated):
    r1p = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5 + S5, 0]))
    res = morse_bott_check(co_model, r1p, [0.0, 1.0])
    assert res.verdict == "morse_bott"
    # two eigenvalue clusters of multiplicity two, each with a circle orbit
    assert len(res.clusters) == 2
    for _, mult, odim in res.clusters:
        assert mult == 2 and odim == 1


def test_morse_bott_beta_equal_xi_degenerate(co_model, co_isolated):
    """The velocity's own momentum restricts to Q: the sphere function is
    constant (all generalized eigenvalues are one) and is flagged."""
    r1p = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5 + S5, 0]))
    res = morse_bott_check(co_model, r1p, r1p.xi)
    assert res.verdict == "degenerate"
    np.testing.assert_allclose(res.eigenvalues, np.ones(4), atol=1e-9)


def test_morse_bott_beta_zero_degenerate(co_model, co_isolated):
    res = morse_bott_check(co_model, co_isolated[0], [0.0, 0.0])
    assert res.verdict == "degenerate"


# -- assembled report ----------------------------------------------------------

def test_count_report_coupled_isolated(co_model, co_isolated):
    for root in co_isolated:
        cr = count_report(co_model, root)
        assert cr.fixed_dim == 0
        assert cr.bartsch.floor == 2
        assert cr.lower_bound == 2


def test_count_report_coupled_curve(co_model, co_curve):
    root = co_curve[0]
    cr = count_report(co_model, root)
    assert cr.fixed_dim == 0
    assert cr.bartsch.floor == 1
    assert cr.category.value == 1
    assert cr.lower_bound == 1
