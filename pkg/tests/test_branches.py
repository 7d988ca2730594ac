"""Branch continuation, multiplier limits, and orbit deduplication."""

import numpy as np
import pytest
from scipy.linalg import expm

from releq.branches import (Branch, BranchSample, continue_branch, dedup_orbits,
                            multiplier_limit, q_normalize, seed_directions,
                            verify_branch)
from releq.errors import InsufficientSamples
from releq.velocity import restricted_form

from conftest import S5


@pytest.fixture(scope="module")
def s1_branches(s1_model, s1_roots):
    out = []
    for root in s1_roots:
        sd = seed_directions(s1_model, root, [root.xi])
        out.append(continue_branch(s1_model, root, sd.seeds[0].u0, 0.12, 1e-2))
    return out


@pytest.fixture(scope="module")
def pend_branch(pend_pert_model):
    from releq.velocity import find_roots

    root = find_roots(pend_pert_model, (-2.0, 2.0), 400).roots[1]
    sd = seed_directions(pend_pert_model, root, [root.xi])
    return continue_branch(pend_pert_model, root, sd.seeds[0].u0, 0.3, 1e-2)


# -- seed_directions -----------------------------------------------------------

def test_seeds_transitive_single_representative(s1_model, s1_roots):
    sd = seed_directions(s1_model, s1_roots[1], [s1_roots[1].xi])
    assert sd.transitive
    assert len(sd.seeds) == 1
    u = sd.seeds[0].u0
    q = s1_roots[1].restricted_hessian
    assert abs(abs(u @ q @ u) - 1.0) < 1e-12


def test_seeds_coupled_isolated_two_clusters(co_model, co_isolated):
    r1p = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5 + S5, 0]))
    beta = np.array([0.0, 1.0])
    sd = seed_directions(co_model, r1p, [beta])
    assert not sd.transitive
    assert len(sd.seeds) == 4
    clusters = sorted(set(s.cluster for s in sd.seeds))
    assert len(clusters) == 2
    # eigenvalues agree with a direct dense solve on the same restriction
    from scipy.linalg import eigh

    s_res = restricted_form(co_model.s_matrix(beta), r1p.kernel_basis)
    q = r1p.restricted_hessian
    w_direct = eigh(s_res, q, eigvals_only=True)
    got = sorted(s.eigenvalue for s in sd.seeds)
    np.testing.assert_allclose(got, np.sort(w_direct), atol=1e-10)


def test_seeds_beta_zero_flagged(co_model, co_isolated):
    sd = seed_directions(co_model, co_isolated[0], [np.zeros(2)])
    assert sd.seeds == []
    assert len(sd.flags) == 1


def test_seed_beta_xi_flagged_on_nontransitive(co_model, co_isolated):
    """The velocity's own momentum gives no splitting on its kernel."""
    root = co_isolated[0]
    sd = seed_directions(co_model, root, [root.xi])
    assert sd.seeds == [] and len(sd.flags) == 1


# -- continue_branch -------------------------------------------------------------

def test_motivating_branch_velocity_exact(s1_branches):
    br2, br4 = s1_branches
    for s in br2.samples:
        assert abs(s.xi_prime[0] - 2.0) < 1e-9
        assert abs(s.v[1]) < 1e-12 and abs(s.v[3]) < 1e-12  # stays in the plane
        assert abs(s.energy - 0.5 * s.r ** 2) < 1e-12
    for s in br4.samples:
        assert abs(s.xi_prime[0] - 4.0) < 1e-9
        assert abs(s.v[0]) < 1e-12 and abs(s.v[2]) < 1e-12
        assert s.energy < 0
        assert abs(s.energy + 0.5 * s.r ** 2) < 1e-12


def test_branch_radii_strictly_increasing(s1_branches, pend_branch):
    for br in list(s1_branches) + [pend_branch]:
        rs = [s.r for s in br.samples]
        assert all(b > a for a, b in zip(rs, rs[1:]))


def test_branch_gradient_residuals(s1_branches, pend_branch, s1_model,
                                   pend_pert_model):
    for br, model in ((s1_branches[0], s1_model), (s1_branches[1], s1_model),
                      (pend_branch, pend_pert_model)):
        for s in br.samples:
            grad = model.grad_h(s.v) - model.s_matrix(s.xi_prime) @ s.v
            assert np.linalg.norm(grad) < 1e-9


def test_branch_energy_recorded_exactly(pend_branch, pend_pert_model):
    for s in pend_branch.samples:
        assert abs(pend_pert_model.h(s.v) - s.energy) <= 1e-12 * max(1.0, abs(s.energy))


def test_pendulum_velocity_drift_and_monotonicity(pend_branch):
    vels = [float(s.xi_prime[0]) for s in pend_branch.samples]
    rs = [s.r for s in pend_branch.samples]
    assert all(abs(v - 1.0) < 0.05 for v, r in zip(vels, rs) if r <= 0.2001)
    diffs = np.diff(vels)
    assert np.all(diffs > 0) or np.all(diffs < 0)


def test_velocity_converges_to_root_velocity(pend_branch):
    """|xi'(r_min) - xi_root| below 10 r_min^2 on the built-in examples."""
    first = pend_branch.samples[0]
    assert abs(first.xi_prime[0] - 1.0) < 10.0 * first.r ** 2


def test_flow_verification_of_samples(s1_model, s1_branches):
    worst = verify_branch(s1_model, s1_branches[0])
    assert worst < 1e-7
    assert all(s.flow_residual is not None for s in s1_branches[0].samples)


def test_equivariance_of_found_set(s1_model, s1_branches):
    """A rotated sample is again a relative equilibrium with the same velocity."""
    rng = np.random.default_rng(30)
    a = s1_model.action.generators[0]
    for s in (s1_branches[0].samples[-1], s1_branches[1].samples[-1]):
        g = expm(rng.uniform(0, 2 * np.pi) * a)
        v = g @ s.v
        grad = s1_model.grad_h(v) - s1_model.s_matrix(s.xi_prime) @ v
        assert np.linalg.norm(grad) < 1e-8


def test_coupled_isolated_branches_and_dedup(co_model, co_isolated):
    r1p = min(co_isolated, key=lambda r: np.linalg.norm(r.xi - [-0.5 + S5, 0]))
    sd = seed_directions(co_model, r1p, [np.array([0.0, 1.0])])
    reps = {}
    for s in sd.seeds:
        reps.setdefault(s.cluster, s)
    assert len(reps) == 2
    branches = [continue_branch(co_model, r1p, s.u0, 0.05, 1e-2)
                for _, s in sorted(reps.items())]
    for br in branches:
        assert not br.diverged
        for s in br.samples:
            assert np.linalg.norm(s.xi_prime - r1p.xi) < 1e-12
            assert abs(s.multiplier - 1.0) < 1e-12
    pts = [br.samples[-1].v for br in branches]
    assert len(dedup_orbits(pts, co_model.action.generators)) == 2
    # two seeds of the same cluster land on the same torus orbit
    same = [s for s in sd.seeds if s.cluster == sd.seeds[0].cluster]
    b1 = continue_branch(co_model, r1p, same[0].u0, 0.03, 1e-2)
    b2 = continue_branch(co_model, r1p, same[1].u0, 0.03, 1e-2)
    assert len(dedup_orbits([b1.samples[-1].v, b2.samples[-1].v],
                            co_model.action.generators)) == 1


def test_curve_family_branch(co_model, co_curve):
    root = co_curve[len(co_curve) // 3]
    sd = seed_directions(co_model, root, [])
    assert sd.transitive
    br = continue_branch(co_model, root, sd.seeds[0].u0, 0.04, 1e-2)
    assert not br.diverged
    for s in br.samples:
        assert np.linalg.norm(s.xi_prime - root.xi) < 1e-10


# -- multiplier_limit ------------------------------------------------------------

def test_multiplier_limits(s1_branches, pend_branch):
    for br in s1_branches:
        assert multiplier_limit(br) == pytest.approx(1.0, abs=1e-12)
    assert multiplier_limit(pend_branch) == pytest.approx(1.0, abs=1e-4)


def test_multiplier_insufficient_samples(s1_roots):
    br = Branch(s1_roots[0], np.array([1.0, 0.0]))
    br.samples = [BranchSample(0.05, 0.0, np.zeros(4), np.array([2.0]), 1.0, 0.0),
                  BranchSample(0.10, 0.0, np.zeros(4), np.array([2.0]), 1.0, 0.0)]
    with pytest.raises(InsufficientSamples):
        multiplier_limit(br)


# -- dedup_orbits ------------------------------------------------------------------

def test_dedup_same_circle(s1_model):
    v = np.array([0.0, 0.13, 0.0, 0.05])
    a = s1_model.action.generators[0]
    pts = [v, expm(0.8 * a) @ v, expm(-2.1 * a) @ v]
    reps = dedup_orbits(pts, s1_model.action.generators)
    assert len(reps) == 1


def test_dedup_two_planes_distinct(s1_model):
    v2 = np.array([0.1, 0.0, 0.1, 0.0])
    v4 = np.array([0.0, 0.1, 0.0, 0.1])
    assert len(dedup_orbits([v2, v4], s1_model.action.generators)) == 2


def test_dedup_representative_deterministic(s1_model):
    v = np.array([0.0, 0.13, 0.0, 0.05])
    a = s1_model.action.generators[0]
    pts1 = [v, expm(0.8 * a) @ v]
    pts2 = [expm(0.8 * a) @ v, v]
    r1 = dedup_orbits(pts1, s1_model.action.generators)
    r2 = dedup_orbits(pts2, s1_model.action.generators)
    np.testing.assert_allclose(r1[0], r2[0], atol=1e-12)


def test_dedup_torus_orbit(co_model):
    rng = np.random.default_rng(31)
    v = 0.1 * rng.normal(size=8)
    g = expm(1.3 * co_model.action.generators[0]) @ \
        expm(-0.7 * co_model.action.generators[1])
    assert len(dedup_orbits([v, g @ v], co_model.action.generators)) == 1


def test_q_normalize_rejects_null_direction(s1_roots):
    with pytest.raises(ValueError):
        q_normalize(s1_roots[0], np.zeros(2))
