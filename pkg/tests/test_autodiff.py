import numpy as np
import pytest

from almpinn.autodiff import (Jet2, JetDomainError, NonFiniteError, Tape,
                              backward, grad_check, jet_apply, seed_input)
from almpinn.losses import AlmState, alm_forward_loss
from almpinn.network import init_network
from almpinn.problems import get_problem
from almpinn.sampling import sample_sets


def jet_values(jet):
    return [float(v) for v in jet.values()]


def test_seed_input_examples():
    tape = Tape()
    jx, jt = seed_input(3.0, 0.5, tape)
    assert jet_values(jx) == [3.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    assert jet_values(jt) == [0.5, 0.0, 1.0, 0.0, 0.0, 0.0]
    jx0, jt0 = seed_input(0.0, 0.0, Tape())
    assert jet_values(jx0)[0] == 0.0 and jet_values(jx0)[1] == 1.0
    _, jt1 = seed_input(1.0, 4.0, Tape())
    assert float(jt1.gt.value) == 1.0 and float(jt1.gx.value) == 0.0


def test_seed_input_rejects_non_finite():
    with pytest.raises(JetDomainError):
        seed_input(np.inf, 0.0, Tape())
    with pytest.raises(JetDomainError):
        seed_input(0.0, np.nan, Tape())


def test_jet_apply_examples():
    tape = Tape()
    jx, _ = seed_input(3.0, 0.5, tape)
    assert jet_values(jet_apply("square", [jx], tape)) == [9, 6, 0, 2, 0, 0]

    tape = Tape()
    j0, _ = seed_input(0.0, 0.0, tape)
    assert jet_values(jet_apply("tanh", [j0], tape)) == [0, 1, 0, 0, 0, 0]

    tape = Tape()
    jx, jt = seed_input(2.0, 5.0, tape)
    assert jet_values(jet_apply("mul", [jx, jt], tape)) == [10, 5, 2, 0, 1, 0]


def test_jet_apply_arity_and_op_validation():
    tape = Tape()
    jx, jt = seed_input(1.0, 2.0, tape)
    with pytest.raises(ValueError):
        jet_apply("nope", [jx], tape)
    with pytest.raises(ValueError):
        jet_apply("add", [jx], tape)
    with pytest.raises(ValueError):
        jet_apply("scale", [jx], tape)  # missing factor


def test_jet_ln_domain_and_overflow_errors():
    tape = Tape()
    jx, _ = seed_input(-1.0, 0.0, tape)
    with pytest.raises(JetDomainError):
        jet_apply("ln", [jx], tape)
    tape = Tape()
    jbig, _ = seed_input(1e308, 0.0, tape)
    with pytest.raises(NonFiniteError):
        jet_apply("exp", [jbig], tape)


# Composite jets must agree with nested finite differences of the value.
def _compose(x, t, tape):
    jx, jt = seed_input(x, t, tape)
    a = jet_apply("mul", [jx, jt], tape)
    b = jet_apply("sin", [a], tape)
    c = jet_apply("exp", [jet_apply("scale", [jx], tape, const=-0.5)], tape)
    d = jet_apply("add", [b, c], tape)
    e = jet_apply("square", [d], tape)
    return jet_apply("ln", [jet_apply("add", [e, _one_jet(tape)], tape)], tape)


def _one_jet(tape):
    one = tape.const(1.0)
    zero = tape.const(0.0)
    return Jet2(one, zero, zero, zero, zero, zero)


@pytest.mark.parametrize("x,t", [(0.3, 0.7), (1.2, -0.4), (0.0, 2.0)])
def test_jet_consistency_against_finite_differences(x, t):
    h = 1e-5
    jet = _compose(x, t, Tape())

    def val(xx, tt):
        return float(_compose(xx, tt, Tape()).v.value)

    def gx(xx, tt):
        return float(_compose(xx, tt, Tape()).gx.value)

    gx_fd = (val(x + h, t) - val(x - h, t)) / (2 * h)
    gt_fd = (val(x, t + h) - val(x, t - h)) / (2 * h)
    hxx_fd = (gx(x + h, t) - gx(x - h, t)) / (2 * h)
    hxt_fd = (gx(x, t + h) - gx(x, t - h)) / (2 * h)
    for got, want in [(jet.gx, gx_fd), (jet.gt, gt_fd), (jet.hxx, hxx_fd),
                      (jet.hxt, hxt_fd)]:
        assert abs(float(got.value) - want) / max(1.0, abs(want)) <= 1e-6


def test_backward_square():
    tape = Tape()
    w = tape.param(np.array([3.0]))
    loss = w.square().mean()
    assert backward(tape, loss) == pytest.approx([6.0])


def test_backward_constant_loss_gives_zero_gradient():
    tape = Tape()
    _ = tape.param(np.array([1.0, 2.0]))
    loss = tape.const(5.0).mean()
    assert np.array_equal(backward(tape, loss), np.zeros(2))


def test_backward_requires_scalar():
    tape = Tape()
    w = tape.param(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        backward(tape, w.square())


def test_backward_network_loss_matches_finite_differences():
    # random 2-4-1 tanh network, loss = u(0.3, 0.7)^2
    net = init_network([2, 4, 1], seed=13, domain=(0, 1, 0, 4))

    def f(theta):
        net.theta[:] = theta
        tape = Tape()
        u = net.forward_values(0.3, 0.7, tape)
        loss = u.square().mean()
        return float(loss.value), backward(tape, loss)

    assert grad_check(f, net.theta.copy(), 1e-5) <= 1e-6


def test_backward_linearity():
    rng = np.random.default_rng(7)
    tape = Tape()
    p = tape.param(rng.normal(size=6))
    f = (p * rng.normal(size=6)).mean().square()
    g = (p.tanh() * rng.normal(size=6)).mean()
    a, b = 1.7, -0.6
    combined = f * a + g * b
    gf = backward(tape, f)
    gg = backward(tape, g)
    gc = backward(tape, combined)
    assert np.allclose(gc, a * gf + b * gg, atol=1e-12, rtol=0)


def test_backward_determinism_bitwise():
    def build():
        net = init_network([2, 6, 6, 1], seed=3, domain=(0, 1, 0, 4))
        tape = Tape()
        u = net.forward_values(np.array([0.1, 0.5, 0.9]), np.array([1.0, 2.0, 3.0]), tape)
        return backward(tape, u.square().mean())

    g1, g2 = build(), build()
    assert np.array_equal(g1, g2)


def test_grad_check_quadratic_and_constant():
    def quad(theta):
        return float(theta[0] ** 2), np.array([2.0 * theta[0]])

    assert grad_check(quad, np.array([3.0]), 1e-5) <= 1e-9

    def const(theta):
        return 4.2, np.zeros_like(theta)

    assert grad_check(const, np.array([1.0, -2.0]), 1e-5) == 0.0


def test_grad_check_full_alm_forward_loss():
    # full ALM forward loss on 10 collocation points, random 2-8-8-1 net
    problem = get_problem("nl1d")
    net = init_network([2, 8, 8, 1], seed=21, domain=problem.domain)
    data = sample_sets(problem, 10, 6, 6, seed=2)
    state = AlmState(lam=np.array([1.5, 0.5]), mu=np.array([2.0, 2.0]))

    def f(theta):
        net.theta[:] = theta
        bd, total = alm_forward_loss(net, problem, data, state)
        return bd.total, backward(total.tape, total)

    assert grad_check(f, net.theta.copy(), 1e-5) <= 1e-6
