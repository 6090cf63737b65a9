import numpy as np
import pytest

from ddlab.averages import (
    ValidationError,
    averaged_hamiltonians,
    compute_H0,
    compute_H1,
    compute_Hlambda,
    decoupled_generator,
)
from ddlab.linalg import expm, identity, kron, opnorm
from ddlab.model import (
    DecouplingSet,
    Hamiltonian,
    SpaceSpec,
    build_cycle,
    pauli_matrices,
    pauli_set,
    weyl_set,
)
from ddlab.propagate import build_schedule, repeated_evolution
from ddlab.pulses import PulsePath, PulseShape

X, Y, Z = pauli_matrices()
I2 = identity(2)
N_CASES = 200


def random_hermitian(rng, d):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (a + a.conj().T) / 2


def plain_x_cycle():
    vset = DecouplingSet.create(SpaceSpec(2, 1), [I2, X], reduced=True, test_operators=())
    return build_cycle(vset, [1, 0], kind="plain")


class TestComputeH0:
    def test_pauli_cycle_annihilates_x(self):
        h = Hamiltonian.from_full(SpaceSpec(2, 1), X)
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        assert opnorm(compute_H0(h, cycle)) <= 1e-14

    def test_environment_term_invariant(self):
        rng = np.random.default_rng(1)
        b = random_hermitian(rng, 3)
        h = Hamiltonian.from_terms(SpaceSpec(2, 3), [(I2, b)])
        cycle = build_cycle(pauli_set(dim_e=3), [1, 2, 3, 0])
        assert opnorm(compute_H0(h, cycle) - kron(I2, b)) <= 1e-12

    def test_plain_cycle_by_hand(self):
        cycle = plain_x_cycle()
        hz = Hamiltonian.from_full(SpaceSpec(2, 1), Z)
        assert opnorm(compute_H0(hz, cycle)) <= 1e-14  # (XZX + Z)/2 = 0
        hx = Hamiltonian.from_full(SpaceSpec(2, 1), X)
        assert opnorm(compute_H0(hx, cycle) - X) <= 1e-14  # (XXX + X)/2 = X

    def test_decoupling_cycle_equals_embedded_partial_trace(self):
        rng = np.random.default_rng(2)
        for d, de in ((2, 2), (2, 3)):
            h = Hamiltonian.from_terms(
                SpaceSpec(d, de),
                [(random_hermitian(rng, d), random_hermitian(rng, de)) for _ in range(2)],
            )
            cycle = build_cycle(pauli_set(dim_e=de), [1, 2, 3, 0])
            expected = kron(identity(d), decoupled_generator(h))
            assert opnorm(compute_H0(h, cycle) - expected) <= 1e-10


class TestComputeH1:
    def test_counterexample_value(self):
        # the worked value: averaging the rectangular-pulse conjugations of X
        # over the (X, Y, Z, 1) cycle gives Y/pi
        h = Hamiltonian.from_full(SpaceSpec(2, 1), X)
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        sched = build_schedule(cycle, lam=1.0, total_time=1.0, convention="canonical")
        h1 = compute_H1(h, cycle, sched.paths)
        assert np.abs(h1 - Y / np.pi).max() <= 1e-10

    def test_trivial_pulses_return_h(self):
        rng = np.random.default_rng(3)
        hmat = random_hermitian(rng, 2)
        h = Hamiltonian.from_full(SpaceSpec(2, 1), hmat)
        vset = DecouplingSet.create(SpaceSpec(2, 1), [I2], reduced=True)
        cycle = build_cycle(vset, [0])
        paths = (PulsePath.geodesic(generator=np.zeros((2, 2))),)
        assert opnorm(compute_H1(h, cycle, paths) - hmat) <= 1e-12

    def test_euler_cycle_matches_h0(self):
        rng = np.random.default_rng(4)
        h = Hamiltonian.from_terms(SpaceSpec(2, 2),
                                   [(random_hermitian(rng, 2), random_hermitian(rng, 2))])
        cycle = build_cycle(pauli_set(dim_e=2), [3, 2, 1, 0, 1, 2, 3, 0])
        from ddlab.linalg import dist_up_to_phase

        paths = []
        for g in cycle.derived_pulses:
            sigma = X if dist_up_to_phase(g, X) < 1e-9 else Z
            paths.append(PulsePath.geodesic(shape=PulseShape.raised_cosine(),
                                            generator=(np.pi / 2) * (sigma - I2)))
        h1 = compute_H1(h, cycle, tuple(paths))
        h0 = compute_H0(h, cycle)
        assert opnorm(h1 - h0) <= 1e-9

    def test_quadrature_doubling_converges(self):
        rng = np.random.default_rng(5)
        h = Hamiltonian.from_full(SpaceSpec(2, 1), random_hermitian(rng, 2))
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        sched = build_schedule(cycle, lam=1.0, total_time=1.0,
                               shape=PulseShape.raised_cosine())
        coarse = compute_H1(h, cycle, sched.paths, nodes=8)
        fine = compute_H1(h, cycle, sched.paths, nodes=128)
        assert opnorm(coarse - fine) <= 1e-9

    def test_rejects_bad_node_count_and_path_count(self):
        h = Hamiltonian.from_full(SpaceSpec(2, 1), X)
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        sched = build_schedule(cycle, lam=1.0, total_time=1.0)
        with pytest.raises(ValidationError):
            compute_H1(h, cycle, sched.paths, nodes=4)
        with pytest.raises(ValidationError):
            compute_H1(h, cycle, sched.paths[:2])


class TestComputeHlambda:
    def test_endpoints(self):
        rng = np.random.default_rng(6)
        h0, h1 = random_hermitian(rng, 3), random_hermitian(rng, 3)
        assert opnorm(compute_Hlambda(h0, h1, 0.0) - h0) == 0.0
        assert opnorm(compute_Hlambda(h0, h1, 1.0) - h1) == 0.0

    def test_counterexample_limit_generator(self):
        # at lambda = 1 the limit evolution is driven by H1 = Y/pi
        h = Hamiltonian.from_full(SpaceSpec(2, 1), X)
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        sched = build_schedule(cycle, lam=1.0, total_time=1.0, convention="canonical")
        avg = averaged_hamiltonians(h, cycle, sched.paths, lam=1.0)
        predicted = expm(-1j * 1.0 * avg.h_lambda)
        assert opnorm(predicted - expm(-1j * Y / np.pi)) <= 1e-9

    def test_rejects_lambda_out_of_range(self):
        with pytest.raises(ValidationError):
            compute_Hlambda(I2, I2, 1.2)


class TestDecoupledGenerator:
    def test_examples(self):
        rng = np.random.default_rng(7)
        b0 = random_hermitian(rng, 2)
        b1 = random_hermitian(rng, 2)
        b2 = random_hermitian(rng, 2)
        space = SpaceSpec(2, 2)
        assert opnorm(decoupled_generator(Hamiltonian.from_terms(space, [(X, b0)]))) <= 1e-14
        got = decoupled_generator(Hamiltonian.from_terms(space, [(I2, b0)]))
        assert opnorm(got - b0) <= 1e-14
        h = Hamiltonian.from_terms(space, [(Z, b1), (I2, b2)])
        assert opnorm(decoupled_generator(h) - b2) <= 1e-14


class TestLinearity:
    def test_all_averages_linear_in_h(self):
        rng = np.random.default_rng(8)
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        sched = build_schedule(cycle, lam=1.0, total_time=1.0)
        space = SpaceSpec(2, 1)
        for _ in range(N_CASES // 4):
            a = random_hermitian(rng, 2)
            b = random_hermitian(rng, 2)
            alpha, beta = rng.uniform(-2, 2, size=2)
            ha, hb = Hamiltonian.from_full(space, a), Hamiltonian.from_full(space, b)
            hc = Hamiltonian.from_full(space, alpha * a + beta * b)
            assert opnorm(compute_H0(hc, cycle)
                          - alpha * compute_H0(ha, cycle) - beta * compute_H0(hb, cycle)) <= 1e-12
            h1a = compute_H1(ha, cycle, sched.paths)
            h1b = compute_H1(hb, cycle, sched.paths)
            h1c = compute_H1(hc, cycle, sched.paths)
            assert opnorm(h1c - alpha * h1a - beta * h1b) <= 1e-12
            assert opnorm(decoupled_generator(hc)
                          - alpha * decoupled_generator(ha) - beta * decoupled_generator(hb)) <= 1e-12


class TestConsistencyWithDynamics:
    def test_repeated_evolution_approaches_hlambda_exponential(self):
        rng = np.random.default_rng(9)
        hmat = random_hermitian(rng, 2)
        hmat /= opnorm(hmat)
        h = Hamiltonian.from_full(SpaceSpec(2, 1), hmat)
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        t, lam = 1.0, 0.5
        sched = build_schedule(cycle, lam=lam, total_time=t)
        avg = averaged_hamiltonians(h, cycle, sched.paths, lam=lam)
        target = expm(-1j * t * avg.h_lambda)
        errs = []
        for m in (32, 320):
            s = build_schedule(cycle, lam=lam, total_time=t, repetitions=m, paths=sched.paths)
            errs.append(opnorm(repeated_evolution(h, s) - target))
        assert errs[1] <= errs[0] / 5  # O(1/m)
        assert errs[1] <= 2e-3

    def test_weyl_qutrit_euler_identity(self):
        # edge-uniform pulses over any Euler cycle force H1 = H0, also for
        # the d = 3 Weyl set where generators are not Hermitian
        from ddlab.euler import build_cayley, euler_cycle, to_cycle
        from ddlab.scenarios import _default_generator_path

        rng = np.random.default_rng(10)
        vset = weyl_set(3)
        # generators: the shift (a=1,b=0) and clock (a=0,b=1) elements
        gidx = [3, 1]
        graph = build_cayley(vset, gidx)
        ec = euler_cycle(graph)
        shape = PulseShape.rectangular()
        pulses = {pos: _default_generator_path(vset.elements[gi], shape)
                  for pos, gi in enumerate(graph.generator_indices)}
        cycle, paths = to_cycle(ec, pulses)
        h = Hamiltonian.from_full(SpaceSpec(3, 1), random_hermitian(rng, 3))
        h1 = compute_H1(h, cycle, paths)
        h0 = compute_H0(h, cycle)
        assert opnorm(h1 - h0) <= 1e-9
