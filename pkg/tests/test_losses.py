import math

import numpy as np
import pytest

from almpinn.autodiff import Jet2
from almpinn.losses import (AlmState, DegenerateLossWarning, LossBreakdown,
                            alm_forward_loss, alm_inverse_loss,
                            data_term_gaussian, data_term_laplace,
                            data_term_lognormal, pinns_inverse_loss, pinns_loss)
from almpinn.network import init_network
from almpinn.problems import exact_nl1d, exact_nl1d_jet, get_problem
from almpinn.sampling import sample_additional, sample_sets
from almpinn.train import _build_dataset
from almpinn.config import build_run_config


class OracleNet:
    """Test stub that answers with the exact solution instead of a network."""

    v = None

    def register_params(self, tape, include_v=False):
        return [], None

    def forward_jet(self, x, t, tape, layer_vars=None, dropout_rng=None):
        return exact_nl1d_jet(np.asarray(x), np.asarray(t))

    def forward_values(self, x, t, tape, layer_vars=None, dropout_rng=None):
        return exact_nl1d(np.asarray(x), np.asarray(t))


@pytest.fixture(scope="module")
def problem():
    return get_problem("nl1d")


@pytest.fixture(scope="module")
def data(problem):
    return sample_sets(problem, 40, 20, 20, seed=1)


class TestDataTerms:
    def test_gaussian(self):
        obs = np.array([1.0, 2.0, 3.0])
        assert data_term_gaussian(obs, obs, 1.0) == 0.0
        assert data_term_gaussian(np.array([0.0]), np.array([2.0]),
                                  math.sqrt(0.5)) == pytest.approx(4.0, rel=1e-15)
        pred = obs - np.array([1.0, -1.0, 2.0])
        assert data_term_gaussian(pred, obs, 1.0) == pytest.approx(1.0, rel=1e-15)
        with pytest.raises(ValueError):
            data_term_gaussian(obs, obs, 0.0)

    def test_laplace(self):
        obs = np.array([1.0, 2.0])
        assert data_term_laplace(obs, obs, 1.0) == 0.0
        assert data_term_laplace(np.array([3.0]), np.array([0.0]), 1.0) == 3.0
        pred = obs - np.array([1.0, -2.0])
        assert data_term_laplace(pred, obs, 0.5) == pytest.approx(3.0, rel=1e-15)
        with pytest.raises(ValueError):
            data_term_laplace(obs, obs, -1.0)

    def test_lognormal_direct_values(self):
        # r = 1: ln(sqrt(2 pi)) + 0
        got = data_term_lognormal(np.array([0.0]), np.array([1.0]), 1.0)
        assert got == pytest.approx(0.9189385332046727, abs=1e-12)
        # r = 1/sqrt(2 pi): log term vanishes, leaving (ln r)^2 / 2
        r = 1.0 / math.sqrt(2 * math.pi)
        got = data_term_lognormal(np.array([0.0]), np.array([r]), 1.0)
        assert got == pytest.approx(0.5 * math.log(r) ** 2, abs=1e-15)
        assert got == pytest.approx(0.42222401390417763, abs=1e-12)

    def test_lognormal_scan_has_interior_minimum(self):
        rng = np.random.default_rng(0)
        u = np.full(400, 2.0)
        obs = u + rng.lognormal(0.0, 1.0, size=400)
        cs = np.linspace(0.0, 3.5, 351)
        losses = [data_term_lognormal(np.full_like(u, c), obs, 1.0) for c in cs]
        k = int(np.argmin(losses))
        assert 0 < k < len(cs) - 1

    def test_lognormal_clamps_and_warns(self):
        obs = np.zeros(4)
        pred = np.ones(4)  # residuals all negative
        with pytest.warns(DegenerateLossWarning):
            val = data_term_lognormal(pred, obs, 1.0)
        assert np.isfinite(val)

    def test_mle_equivalence_random_vectors(self):
        rng = np.random.default_rng(11)
        for sigma, gamma in [(0.6, 0.9), (1.0, 1.0), (2.5, 0.3)]:
            r = rng.normal(size=300)
            obs = rng.normal(size=300)
            pred = obs - r
            nll_g = np.mean(np.log(sigma * np.sqrt(2 * np.pi)) + r**2 / (2 * sigma**2))
            nll_l = np.mean(np.log(2 * gamma) + np.abs(r) / gamma)
            const_g = nll_g - data_term_gaussian(pred, obs, sigma)
            const_l = nll_l - data_term_laplace(pred, obs, gamma)
            assert const_g == pytest.approx(np.log(sigma * np.sqrt(2 * np.pi)), abs=1e-10)
            assert const_l == pytest.approx(np.log(2 * gamma), abs=1e-10)
            rp = np.abs(r) + 0.01
            nll_ln = np.mean(np.log(np.sqrt(2 * np.pi) * sigma * rp)
                             + np.log(rp) ** 2 / (2 * sigma**2))
            assert data_term_lognormal(obs - rp, obs, sigma) == pytest.approx(nll_ln, abs=1e-10)

    def test_argmin_mean_and_median(self):
        obs = np.array([0.1, -0.7, 1.3, 2.2, 0.4, -1.1, 0.9])
        grid = np.linspace(-2, 3, 20001)
        gaussian = [data_term_gaussian(np.full_like(obs, c), obs, 1.0) for c in grid]
        laplace = [data_term_laplace(np.full_like(obs, c), obs, 1.0) for c in grid]
        assert grid[np.argmin(gaussian)] == pytest.approx(obs.mean(), abs=5e-4)
        assert grid[np.argmin(laplace)] == pytest.approx(np.median(obs), abs=5e-4)

    def test_argmin_invariant_under_sigma(self):
        obs = np.array([0.5, 1.5, -0.5, 2.0])
        grid = np.linspace(-1, 3, 8001)
        k1 = np.argmin([data_term_gaussian(np.full_like(obs, c), obs, 1.0) for c in grid])
        k2 = np.argmin([data_term_gaussian(np.full_like(obs, c), obs, 0.2) for c in grid])
        assert grid[k1] == grid[k2]


class TestCompositeLosses:
    def test_oracle_net_gives_zero_losses(self, problem, data):
        bd, total = pinns_loss(OracleNet(), problem, data, 1.0, 1.0, 1.0)
        assert bd.total <= 1e-20
        assert bd.gover_loss <= 1e-20

    def test_weighted_sum(self, problem, data):
        bd, _ = pinns_loss(OracleNet(), problem, data, 2.0, 3.0, 4.0)
        want = 2 * bd.gover_loss + 3 * bd.bc_ls + 4 * bd.ic_ls
        assert bd.total == pytest.approx(want, abs=1e-18)

    def test_pinns_rejects_empty_interior_with_weight(self, problem):
        empty = sample_sets(problem, 0, 5, 5, seed=0)
        with pytest.raises(ValueError):
            pinns_loss(OracleNet(), problem, empty, 1.0, 1.0, 1.0)

    def test_alm_forward_formula(self, problem, data):
        net = init_network([2, 6, 1], seed=3, domain=problem.domain)
        state = AlmState(lam=np.array([1.0, 1.0]), mu=np.array([4.0, 4.0]))
        bd, _ = alm_forward_loss(net, problem, data, state)
        want = (bd.gover_loss + bd.bc_ls + bd.ic_ls
                + 2.0 * (bd.bc_ls**2 + bd.ic_ls**2))
        assert bd.total == pytest.approx(want, rel=1e-12)
        assert bd.penalty == pytest.approx(bd.bc_ls**2 + bd.ic_ls**2, rel=1e-15)

    def test_alm_forward_hand_value(self):
        # components (0.1, 0.2, 0.3), lam=(1,1), mu=4 -> 0.86
        total = 0.1 + 1 * 0.2 + 1 * 0.3 + 2 * (0.2**2 + 0.3**2)
        assert total == pytest.approx(0.86, abs=1e-15)

    def test_alm_reduces_to_pinns_when_mu_vanishes(self, problem, data):
        net = init_network([2, 6, 1], seed=3, domain=problem.domain)
        state = AlmState(lam=np.array([1.3, 0.4]), mu=np.array([1e-300, 1e-300]))
        bd_alm, _ = alm_forward_loss(net, problem, data, state)
        bd_pinns, _ = pinns_loss(net, problem, data, 1.0, 1.3, 0.4)
        assert bd_alm.total == pytest.approx(bd_pinns.total, abs=1e-15)

    def test_constraints_satisfied_make_multipliers_inert(self, problem, data):
        bd, _ = alm_forward_loss(OracleNet(), problem, data,
                                 AlmState(lam=np.array([9.0, 9.0]),
                                          mu=np.array([100.0, 100.0])))
        assert bd.total == pytest.approx(bd.gover_loss, abs=1e-16)

    def test_alm_inverse_formula_and_hand_value(self, problem):
        cfg = build_run_config({
            "problem": "nl1d", "mode": "inverse", "method": "alm",
            "optim": {"v_bounds": [0, 10]}, "inverse": {"pretrained": "x"},
            "noise": {"distribution": "gaussian", "level": 0.0},
            "sampling": {"n_interior": 20, "n_boundary": 10, "n_initial": 10},
        })
        data = _build_dataset(cfg, problem)
        net = init_network([2, 6, 1], seed=5, domain=problem.domain)
        net.v = np.array([2.0, 2.0])
        state = AlmState(lam=np.array([1.0, 2.0]), mu=np.array([2.0, 2.0]),
                         mode="inverse")
        bd, _ = alm_inverse_loss(net, net.v, problem, data, state, "gaussian",
                                 math.sqrt(0.5))
        want = (bd.bc_ls + bd.ic_ls + 1.0 * bd.gover_loss + 2.0 * bd.data_ls
                + 1.0 * bd.gover_loss**2 + 1.0 * bd.data_ls**2)
        assert bd.total == pytest.approx(want, rel=1e-12)
        # hand value: (LB,LI,LF,LE)=(0.1,0.1,0.2,0.3), lam=(1,2), mu=(2,2)
        hand = 0.1 + 0.1 + 1 * 0.2 + 2 * 0.3 + 1 * 0.2**2 + 1 * 0.3**2
        assert hand == pytest.approx(1.13, abs=1e-15)

    def test_alm_inverse_with_oracle_and_true_v(self, problem):
        data = sample_sets(problem, 30, 15, 15, seed=2)
        data.additional = sample_additional(problem, (1.0, 3.0), 25, seed=2)
        stub = OracleNet()
        stub.v = np.array([2.0, 2.0])
        state = AlmState(lam=np.array([1.0, 1.0]), mu=np.array([1.0, 1.0]),
                         mode="inverse")
        bd, _ = alm_inverse_loss(stub, stub.v, problem, data, state, "gaussian",
                                 math.sqrt(0.5))
        assert bd.total <= 1e-18

    def test_inverse_requires_additional_data(self, problem, data):
        net = init_network([2, 6, 1], seed=5, domain=problem.domain)
        net.v = np.array([2.0, 2.0])
        state = AlmState(lam=np.array([1.0, 1.0]), mu=np.array([1.0, 1.0]),
                         mode="inverse")
        with pytest.raises(ValueError):
            alm_inverse_loss(net, net.v, problem, data, state, "gaussian", 1.0)
        with pytest.raises(ValueError):
            pinns_inverse_loss(net, net.v, problem, data, "gaussian", 1.0)

    def test_unknown_kind_rejected(self, problem, data):
        net = init_network([2, 6, 1], seed=5, domain=problem.domain)
        net.v = np.array([2.0, 2.0])
        state = AlmState(lam=np.array([1.0, 1.0]), mu=np.array([1.0, 1.0]),
                         mode="inverse")
        with pytest.raises(ValueError):
            alm_inverse_loss(net, net.v, problem, data, state, "cauchy", 1.0)


def test_alm_state_validation():
    with pytest.raises(ValueError):
        AlmState(lam=np.array([1.0, 1.0]), mu=np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        AlmState(lam=np.array([1.0, 1.0]), mu=np.array([1.0, 2e4]), mu_max=1e4)
    with pytest.raises(ValueError):
        AlmState(lam=np.array([np.inf, 1.0]), mu=np.array([1.0, 1.0]))
    st = AlmState(lam=np.array([1.0, 1.0]), mu=2.0)
    assert np.array_equal(st.mu, [2.0, 2.0])


def test_breakdown_reconstruction_invariant():
    bd = LossBreakdown(total=0.86, gover_loss=0.1, bc_ls=0.2, ic_ls=0.3,
                       penalty=0.2**2 + 0.3**2)
    lam, mu = (1.0, 1.0), (4.0, 4.0)
    rebuilt = (bd.gover_loss + lam[0] * bd.bc_ls + lam[1] * bd.ic_ls
               + mu[0] / 2 * bd.bc_ls**2 + mu[1] / 2 * bd.ic_ls**2)
    assert rebuilt == pytest.approx(bd.total, abs=1e-12)
