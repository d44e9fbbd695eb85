import numpy as np
import pytest

from transfer_stab import sdp, sets, synthesis
from transfer_stab.data import LinearSystem, energy_bound_from_amplitude, simulate
from transfer_stab.linalg import max_eig, min_eig, spectral_radius
from transfer_stab.synthesis import InfeasibleError, Layout, SynthesisOptions
from transfer_stab.verify import lyapunov_oracle, sample_intersection

SRC = LinearSystem([[1.021]], [[0.041]])
EPS = 0.025


def scalar_setup(seed):
    """Source ball of radius 0.025 and one noisy target snapshot."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((2, 1))
    Zt = SRC.as_z() + EPS * rng.uniform() * G / np.linalg.norm(G)
    target = LinearSystem.from_z(Zt, 1)
    d = simulate(target, rng.uniform(-1, 1, 1), rng.uniform(-10, 10, (1, 1)), rng.uniform(-1, 1, (1, 1)))
    qT = sets.qmi_from_data(d, energy_bound_from_amplitude(1, 1, 1.0))
    return target, qT, sets.epsilon_ball(SRC, EPS)


def test_layout_counts():
    lay = Layout(1, 1)
    assert lay.nvars == 5
    prob, _, _ = synthesis.build_lmi(*scalar_setup(0)[1:])
    assert prob.nvars == 5 and prob.blocks[0].dim == 4
    lay = Layout(4, 2)
    assert (lay.n_p, lay.m * lay.n) == (10, 8)
    ball = sets.ball(np.zeros((6, 4)), 0.1)
    prob, _, _ = synthesis.build_lmi(ball, ball)
    assert prob.blocks[0].dim == 14 and prob.nvars == 10 + 8 + 3


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(0)
    lay = Layout(3, 2)
    G = rng.standard_normal((3, 3))
    P, Y = G @ G.T, rng.standard_normal((2, 3))
    P2, Y2, b, t1, t2 = lay.unpack(lay.pack(P, Y, 0.1, 0.2, 0.3))
    np.testing.assert_allclose(P2, P, atol=1e-15)
    np.testing.assert_array_equal(Y2, Y)
    assert (b, t1, t2) == (0.1, 0.2, 0.3)


def test_zero_point_is_not_feasible():
    prob, _, _ = synthesis.build_lmi(*scalar_setup(0)[1:])
    res = sdp.residuals(prob, np.zeros(prob.nvars))
    assert res[0] == 0.0  # homogeneous block
    assert min(res) < 0  # P >= p_min I fails


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        synthesis.build_lmi(sets.ball(np.zeros((2, 1)), 1.0), sets.ball(np.zeros((3, 2)), 1.0))


def test_scalar_reference_setup_feasible():
    for seed in range(5):
        target, qT, qb = scalar_setup(seed)
        res = synthesis.synthesize(qT, qb)
        assert res.K[0, 0] < 0
        assert abs(target.A[0, 0] + target.B[0, 0] * res.K[0, 0]) < 1
        assert res.lmi_min_eig >= -1e-7
        assert res.schur_min_eig <= 1e-6
        assert res.beta >= synthesis.BETA_MIN and res.tau_T >= 0 and res.tau_S >= 0
        np.testing.assert_allclose(res.K @ res.P, res.Y, atol=1e-8 * np.linalg.norm(res.Y))


def test_stable_singleton_small_ball():
    stable = LinearSystem([[0.5, 0.1], [0.0, 0.3]], [[1.0], [0.5]])
    qb = sets.epsilon_ball(stable, 1e-3)
    # target data with a huge disturbance bound carries almost no information
    d = simulate(stable, [1.0, 0.0], [[1.0]])
    qT = sets.qmi_from_data(d, energy_bound_from_amplitude(2, 1, 100.0))
    res = synthesis.synthesize(qT, qb)
    assert spectral_radius(stable.closed_loop(res.K)) < 1
    assert res.lmi_min_eig >= -1e-7 and res.schur_min_eig <= 1e-6


def test_uncontrollable_unstable_infeasible():
    qb = sets.epsilon_ball(LinearSystem([[2.0]], [[0.0]]), 0.01)
    with pytest.raises(InfeasibleError) as info:
        synthesis.synthesize(qb, qb)
    assert info.value.solution.status is sdp.Status.INFEASIBLE


def test_objectives_all_certify():
    _, qT, qb = scalar_setup(1)
    for obj in synthesis.OBJECTIVES:
        res = synthesis.synthesize(qT, qb, SynthesisOptions(objective=obj))
        assert res.lmi_min_eig >= -1e-7 and res.schur_min_eig <= 1e-6
    with pytest.raises(ValueError):
        SynthesisOptions(objective="lqr")


def test_homogeneity():
    _, qT, qb = scalar_setup(2)
    prob, _, _ = synthesis.build_lmi(qT, qb)
    x = synthesis.synthesize(qT, qb).solution.x
    big = prob.blocks[0]
    base = min_eig(big.value(x))
    for lam in (0.5, 2.0, 10.0):
        val = min_eig(big.value(lam * x))
        assert val >= -1e-7 * lam * np.linalg.norm(big.value(x), 2)
        assert val == pytest.approx(lam * base, abs=1e-12 * lam)


def test_lmi_and_schur_forms_agree():
    """Big block PSD iff the Schur form is NSD, on random candidate points."""
    rng = np.random.default_rng(3)
    _, qT, qb = scalar_setup(3)
    prob, lay, (sT, sS) = synthesis.build_lmi(qT, qb)
    agree = 0
    for _ in range(300):
        P = np.array([[rng.uniform(0.05, 1.0)]])
        K = np.array([[rng.uniform(-40, 5)]])
        beta = rng.uniform(1e-4, 0.1)
        tn = rng.uniform(0, 2, 2)
        x = lay.pack(P, K @ P, beta, *tn)
        lmi = min_eig(prob.blocks[0].value(x))
        schur = synthesis.schur_residual(qT, qb, P, K, beta, tn[0] / sT, tn[1] / sS)
        if abs(lmi) > 1e-9 and abs(schur) > 1e-9:
            assert (lmi >= 0) == (schur <= 0)
            agree += 1
    assert agree > 250


def test_soundness_on_intersection_samples():
    for seed in range(3):
        target, qT, qb = scalar_setup(seed)
        res = synthesis.synthesize(qT, qb)
        rep = sample_intersection(qT, qb, 300, seed)
        assert rep.accepted > 0
        for s in rep.systems + [target]:
            F = s.closed_loop(res.K)
            assert max_eig(F @ res.P @ F.T - res.P + res.beta * np.eye(1)) <= 1e-6
            assert spectral_radius(F) < 1
        assert lyapunov_oracle(res.P, res.K, res.beta, qT, qb, samples=2000, seed=seed)["holds"]


def test_mu_s_alone_is_insufficient():
    qb = sets.epsilon_ball(SRC, EPS)
    assert min_eig(qb.bordered()) < 0
    _, qT, _ = scalar_setup(0)
    assert min_eig(qT.bordered()) < 0


def test_regularity_scalar_noiseless_setup():
    _, qT, qb = scalar_setup(0)
    rep = synthesis.check_regularity(qT, qb, tries=2000)
    center = SRC.as_z()
    assert max_eig(qb.evaluate(center)) == pytest.approx(-EPS**2)
    if max_eig(qT.evaluate(center)) < 0:
        assert rep.tries == 1
    assert rep.satisfied
    assert rep.min_eig_combo > 0 and max(rep.slater_margins) < 0
    # multipliers are real, not sign-constrained
    combo = rep.mu_T * qT.bordered() + rep.mu_S * qb.bordered()
    assert min_eig(combo) == pytest.approx(rep.min_eig_combo) and min_eig(combo) > 0


def test_regularity_disjoint_sets():
    _, qT, _ = scalar_setup(0)
    # move the ball far along the direction the target data constrains
    w = -qT.B[:, 0] / np.linalg.norm(qT.B[:, 0])
    qb = sets.ball(SRC.as_z() + 50.0 * w[:, None], EPS)
    rep = synthesis.check_regularity(qT, qb, tries=2000)
    assert rep.slater_point is None
    assert not rep.satisfied


def test_best_mu_finds_mixture():
    A1 = np.diag([1.0, -1.0])
    A2 = np.diag([-0.5, 2.0])
    mu1, mu2, lam = synthesis.best_mu(A1, A2)
    assert lam > 0
    assert min_eig(mu1 * A1 + mu2 * A2) == pytest.approx(lam)
    assert np.hypot(mu1, mu2) == pytest.approx(1.0)
    # neither matrix alone is positive definite
    assert min_eig(A1) < 0 and min_eig(A2) < 0
