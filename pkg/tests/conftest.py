"""Shared fixtures: built-in models and their root searches, built once."""

import numpy as np
import pytest

from releq import make_builtin
from releq.velocity import find_roots

S5 = np.sqrt(1.25)  # sqrt(k m + gamma^2) at the coupled-oscillator defaults


@pytest.fixture(scope="session")
def s1_model():
    return make_builtin("motivating_s1")


@pytest.fixture(scope="session")
def s1_roots(s1_model):
    search = find_roots(s1_model, (0.0, 6.0), 400)
    assert len(search.roots) == 2
    return search.roots  # sorted: xi = 2, xi = 4


@pytest.fixture(scope="session")
def pend_model():
    return make_builtin("spherical_pendulum")


@pytest.fixture(scope="session")
def pend_pert_model():
    return make_builtin("spherical_pendulum", pa=0.1)


@pytest.fixture(scope="session")
def pend_roots(pend_model):
    search = find_roots(pend_model, (-2.0, 2.0), 400)
    assert len(search.roots) == 2
    return search.roots  # sorted: xi = -1, xi = +1


@pytest.fixture(scope="session")
def co_model():
    return make_builtin("coupled_oscillators")


@pytest.fixture(scope="session")
def co_search(co_model):
    return find_roots(co_model, ((-3.0, 3.0), (-3.0, 3.0)), 120)


@pytest.fixture(scope="session")
def co_isolated(co_search):
    iso = sorted((r for r in co_search.roots if r.kind == "isolated"),
                 key=lambda r: tuple(r.xi))
    assert len(iso) == 4
    return iso


@pytest.fixture(scope="session")
def co_curve(co_search):
    return [r for r in co_search.roots if r.kind == "curve_sample"]


def paper_basis(rows):
    """Column matrix from explicitly listed basis vectors."""
    return np.array(rows, dtype=float).T


def coupled_paper_bases(a=1.0 / S5):
    """The eight published kernel bases of the coupled-oscillator system.

    Valid on the half of each velocity family where m*xi_1 + gamma > 0 (the
    two four-dimensional pairs are at isolated velocities and uncondition).
    """
    return {
        "1+": paper_basis([(0, 0, a, 0, 0, 0, 0, 1), (0, 0, 0, -a, 0, 0, 1, 0),
                           (a, 0, 0, 0, 0, 1, 0, 0), (0, -a, 0, 0, 1, 0, 0, 0)]),
        "1-": paper_basis([(0, 0, -a, 0, 0, 0, 0, 1), (0, 0, 0, a, 0, 0, 1, 0),
                           (-a, 0, 0, 0, 0, 1, 0, 0), (0, a, 0, 0, 1, 0, 0, 0)]),
        "2+": paper_basis([(0, a, 0, 0, 0, 0, 0, 1), (a, 0, 0, 0, 0, 0, 1, 0),
                           (0, 0, 0, -a, 0, 1, 0, 0), (0, 0, -a, 0, 1, 0, 0, 0)]),
        "2-": paper_basis([(0, -a, 0, 0, 0, 0, 0, 1), (-a, 0, 0, 0, 0, 0, 1, 0),
                           (0, 0, 0, a, 0, 1, 0, 0), (0, 0, a, 0, 1, 0, 0, 0)]),
        "3+": paper_basis([(0, a, -a, 0, 1, 0, 0, 1), (a, 0, 0, a, 0, -1, 1, 0)]),
        "3-": paper_basis([(0, -a, -a, 0, -1, 0, 0, 1), (-a, 0, 0, a, 0, 1, 1, 0)]),
        "4+": paper_basis([(0, -a, a, 0, 1, 0, 0, 1), (-a, 0, 0, -a, 0, -1, 1, 0)]),
        "4-": paper_basis([(0, a, a, 0, -1, 0, 0, 1), (a, 0, 0, -a, 0, 1, 1, 0)]),
    }


def subspace_angle(b1, b2):
    """Largest principal angle between equal-dimension column spans.

    Computed through its sine (the projection residual), which stays
    well-conditioned for nearly identical subspaces where arccos saturates.
    """
    q1, _ = np.linalg.qr(np.asarray(b1, float))
    q2, _ = np.linalg.qr(np.asarray(b2, float))
    resid = q1 - q2 @ (q2.T @ q1)
    s = np.linalg.svd(resid, compute_uv=False)
    return float(np.arcsin(np.clip(s.max() if s.size else 0.0, 0.0, 1.0)))
