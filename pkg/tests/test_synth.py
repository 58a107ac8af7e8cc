import numpy as np
import pytest

from ddsls.blockops import CostWeights, spectral_norm
from ddsls.hankel import NotPersistentlyExciting
from ddsls.lqg import optimal_responses, recover_gstar
from ddsls.lti import LtiSystem, average, generate_ensemble, simulate
from ddsls.sls import achievability_map, achievability_residual, responses_from_controller, sls_cost
from ddsls.synth import (
    DataHankels,
    assemble_delta,
    assemble_responses,
    synth_noiseless,
    synth_robust,
)
from tests.conftest import L_BENCH, T_BENCH


@pytest.fixture(scope="module")
def clean_data(plant):
    rng = np.random.default_rng(21)
    u = rng.standard_normal((T_BENCH, 3))
    traj = simulate(plant, np.zeros(3), u)
    return DataHankels.from_trajectory(traj, L_BENCH)


@pytest.fixture(scope="module")
def noisy_data(plant):
    ens = generate_ensemble(plant, T_BENCH, 32, seed=22)
    return DataHankels.from_trajectory(average(ens), L_BENCH)


def random_feasible_ghat(data, rng, spread=0.1):
    """Random parameter matrix satisfying the block structure exactly."""
    U, s, Vt = np.linalg.svd(data.h1x, full_matrices=True)
    pinv = (Vt[: data.n].T / s) @ U.T
    null = Vt[data.n :].T
    ghat = np.zeros((data.cols * data.L, data.n * data.L))
    for i in range(data.L):
        for j in range(i + 1):
            block = null @ rng.standard_normal((null.shape[1], data.n)) * spread
            if i == j:
                block = block + pinv
            ghat[i * data.cols : (i + 1) * data.cols, j * data.n : (j + 1) * data.n] = block
    return ghat


class TestSynthNoiseless:
    def test_matches_model_based_optimum(self, plant, bench_weights, clean_data):
        _, jstar = optimal_responses(plant, bench_weights)
        res = synth_noiseless(clean_data, bench_weights)
        assert res.objective == pytest.approx(jstar, rel=1e-6)
        assert achievability_residual(res.responses, plant) < 1e-8

    def test_multiple_excitation_seeds(self, plant, bench_weights):
        _, jstar = optimal_responses(plant, bench_weights)
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            traj = simulate(plant, np.zeros(3), rng.standard_normal((T_BENCH, 3)))
            res = synth_noiseless(DataHankels.from_trajectory(traj, L_BENCH), bench_weights)
            assert res.objective == pytest.approx(jstar, rel=1e-6)

    def test_zero_weights_minimum_norm(self, plant, clean_data):
        w = CostWeights(
            np.zeros((3, 3)), 1e-30 * np.eye(3), np.zeros((3, 3)), horizon=L_BENCH
        )
        res = synth_noiseless(clean_data, w)
        assert res.objective < 1e-10

    def test_controller_closed_loop_matches_optimal_responses(
        self, plant, bench_weights, clean_data
    ):
        from ddsls.sls import closed_loop

        resp_star, _ = optimal_responses(plant, bench_weights)
        res = synth_noiseless(clean_data, bench_weights)
        rng = np.random.default_rng(23)
        for _ in range(5):
            wvec = rng.standard_normal(3 * L_BENCH)
            x_sim, u_sim = closed_loop(plant, res.controller, wvec)
            predicted = resp_star.stacked() @ wvec
            assert np.abs(np.concatenate([x_sim, u_sim]) - predicted).max() < 1e-8

    def test_rank_deficient_data_rejected(self, plant, bench_weights):
        traj = simulate(plant, np.ones(3), np.zeros((T_BENCH, 3)))
        with pytest.raises(NotPersistentlyExciting):
            synth_noiseless(DataHankels.from_trajectory(traj, L_BENCH), bench_weights)


class TestAssembleResponses:
    def test_single_step_horizon(self, plant):
        rng = np.random.default_rng(24)
        traj = simulate(plant, np.zeros(3), rng.standard_normal((8, 3)))
        data = DataHankels.from_trajectory(traj, 1)
        ghat = np.linalg.pinv(data.h1x)
        resp = assemble_responses(data, ghat)
        np.testing.assert_allclose(resp.phi_x.dense, np.eye(3), atol=1e-10)

    def test_gstar_reassembly(self, plant, bench_weights, clean_data):
        resp_star, _ = optimal_responses(plant, bench_weights)
        gstar = recover_gstar(clean_data.hx, clean_data.hu, resp_star)
        rebuilt = assemble_responses(clean_data, gstar.dense)
        assert np.abs(rebuilt.stacked() - resp_star.stacked()).max() < 1e-8

    def test_structure_violation_raises(self, noisy_data):
        rng = np.random.default_rng(25)
        bad = rng.standard_normal((noisy_data.cols * noisy_data.L, 3 * noisy_data.L))
        with pytest.raises(ValueError):
            assemble_responses(noisy_data, bad)

    def test_residual_equals_delta(self, plant, noisy_data):
        rng = np.random.default_rng(26)
        for _ in range(10):
            ghat = random_feasible_ghat(noisy_data, rng)
            resp = assemble_responses(noisy_data, ghat)
            delta = assemble_delta(noisy_data.hw, noisy_data, ghat)
            lhs = achievability_map(plant, L_BENCH) @ resp.stacked()
            residual = np.abs(lhs - np.eye(3 * L_BENCH) - delta.delta.dense).max()
            assert residual < 1e-9
            assert achievability_residual(resp, plant) == pytest.approx(
                np.abs(delta.delta.dense).max(), abs=1e-9
            )


class TestAssembleDelta:
    def test_zero_noise_zero_delta(self, plant, clean_data):
        rng = np.random.default_rng(27)
        ghat = random_feasible_ghat(clean_data, rng)
        delta = assemble_delta(clean_data.hw, clean_data, ghat)
        assert np.abs(delta.delta.dense).max() < 1e-12

    def test_norm_bound(self, noisy_data):
        rng = np.random.default_rng(28)
        for _ in range(10):
            ghat = random_feasible_ghat(noisy_data, rng)
            delta = assemble_delta(noisy_data.hw, noisy_data, ghat)
            bound = (
                np.sqrt(L_BENCH) * spectral_norm(noisy_data.hw) * spectral_norm(ghat)
            )
            assert spectral_norm(delta.delta.dense) <= bound * (1 + 1e-12)

    def test_linearity_in_parameter(self, noisy_data):
        rng = np.random.default_rng(29)
        ghat = random_feasible_ghat(noisy_data, rng)
        d1 = assemble_delta(noisy_data.hw, noisy_data, ghat).delta.dense
        d2 = assemble_delta(noisy_data.hw, noisy_data, 2.0 * ghat).delta.dense
        np.testing.assert_allclose(d2, 2.0 * d1, atol=1e-12)


class TestSynthRobust:
    def test_eps_zero_equals_noiseless(self, bench_weights, clean_data):
        a = synth_noiseless(clean_data, bench_weights)
        b = synth_robust(clean_data, bench_weights, 0.0)
        assert b.gamma == 0.0
        assert b.objective == pytest.approx(a.objective, rel=1e-12)

    def test_noisy_budget_gives_interior_gamma(self, plant, bench_weights, noisy_data):
        eps = spectral_norm(noisy_data.hw)
        res = synth_robust(noisy_data, bench_weights, eps)
        assert 0.0 < res.gamma < 1.0
        _, jstar = optimal_responses(plant, bench_weights)
        assert res.objective >= jstar

    def test_true_cost_certificate(self, plant, bench_weights, noisy_data):
        eps = spectral_norm(noisy_data.hw)
        res = synth_robust(noisy_data, bench_weights, eps)
        jhat = sls_cost(responses_from_controller(plant, res.controller), bench_weights)
        assert jhat <= res.objective * (1 + 1e-9)

    def test_naive_mode_gamma_none(self, bench_weights, noisy_data):
        res = synth_robust(noisy_data, bench_weights, 0.0, mode="naive")
        assert res.gamma is None
        assert res.mode == "naive"

    def test_ghat_norm_within_budget(self, bench_weights, noisy_data):
        eps = spectral_norm(noisy_data.hw)
        res = synth_robust(noisy_data, bench_weights, eps)
        tau = res.gamma / (np.sqrt(L_BENCH) * eps)
        assert res.ghat_norm <= tau * (1 + 1e-6)

    def test_full_structure_noiseless_matches_optimum(self, plant):
        # Small instance keeps the coupled solve cheap.
        rng = np.random.default_rng(30)
        A = np.array([[0.9, 0.2], [0.0, 0.8]])
        sys = LtiSystem(A=A, B=np.eye(2))
        w = CostWeights.uniform(np.eye(2), np.eye(2), horizon=3)
        traj = simulate(sys, np.zeros(2), rng.standard_normal((15, 2)))
        data = DataHankels.from_trajectory(traj, 3)
        _, jstar = optimal_responses(sys, w)
        res = synth_robust(data, w, 0.0, structure="full")
        assert res.objective == pytest.approx(jstar, rel=1e-8)

    def test_full_structure_robust_small(self):
        rng = np.random.default_rng(31)
        A = np.array([[0.9, 0.2], [0.0, 0.8]])
        sys = LtiSystem(A=A, B=np.eye(2), noise_std=0.1)
        w = CostWeights.uniform(np.eye(2), np.eye(2), horizon=3)
        ens = generate_ensemble(sys, 15, 8, seed=32)
        data = DataHankels.from_trajectory(average(ens), 3)
        eps = spectral_norm(data.hw)
        full = synth_robust(data, w, eps, structure="full")
        block = synth_robust(data, w, eps, structure="blockdiag")
        # The coupled parameterization can only improve on block-diagonal.
        assert full.objective <= block.objective * (1 + 1e-6)

    def test_negative_eps_rejected(self, bench_weights, noisy_data):
        with pytest.raises(ValueError):
            synth_robust(noisy_data, bench_weights, -1.0)
