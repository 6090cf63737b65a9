import numpy as np
import pytest

from ddlab.linalg import dist_up_to_phase, expm, identity, kron, opnorm, unitary_exp
from ddlab.model import (
    DecouplingSet,
    Hamiltonian,
    SpaceSpec,
    ValidationError,
    build_cycle,
    pauli_matrices,
    pauli_set,
    parity_set,
)
from ddlab.propagate import (
    Schedule,
    bangbang_evolution,
    build_schedule,
    cycle_evolution,
    pulse_step,
    pulse_step_partial,
    repeated_evolution,
)
from ddlab.pulses import PulseError, PulsePath, PulseShape, ScaledPulse
from ddlab.scenarios import deep_pocket_hamiltonian

X, Y, Z = pauli_matrices()
I2 = identity(2)
N_CASES = 200


def hamiltonian_x():
    return Hamiltonian.from_full(SpaceSpec(2, 1), X)


def counterexample_schedule(t=1.0, m=1, lam=1.0):
    """Pauli cycle (X, Y, Z, 1) with the worked example's pulse branch."""
    cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
    return build_schedule(cycle, lam=lam, total_time=t, repetitions=m,
                          shape=PulseShape.rectangular(), convention="canonical")


class TestPulseStep:
    def test_commuting_fast_path(self):
        # generator (pi/2)X and drift X commute: single exponential
        h = hamiltonian_x()
        path = PulsePath.geodesic(target=-1j * X, shape=PulseShape.rectangular())
        for tau in (0.1, 0.7):
            res = pulse_step(h, ScaledPulse(path, 1.0), tau)
            angle = np.pi / 2 + tau
            expected = np.cos(angle) * I2 - 1j * np.sin(angle) * X
            assert opnorm(res.unitary - expected) <= 1e-12
            assert res.substep_count == 1
            assert res.step_error_estimate == 0.0

    def test_identity_pulse_is_pure_drift(self):
        h = hamiltonian_x()
        path = PulsePath.geodesic(generator=np.zeros((2, 2)), shape=PulseShape.rectangular())
        res = pulse_step(h, ScaledPulse(path, 0.5), 0.3)
        assert opnorm(res.unitary - expm(-1j * 0.3 * X)) <= 1e-12

    def test_small_lambda_approaches_bangbang_step(self):
        # || u_k - e^{-i tau H} gamma_k || = O(lambda tau)
        h = hamiltonian_x()
        path = PulsePath.geodesic(target=-1j * Z, shape=PulseShape.rectangular())
        tau = 0.5
        bang = expm(-1j * tau * X) @ (-1j * Z)
        errs = []
        lams = [0.5, 0.25, 0.125, 0.0625, 0.03125]
        for lam in lams:
            res = pulse_step(h, ScaledPulse(path, lam), tau)
            errs.append(opnorm(res.unitary - bang))
        slope = np.polyfit(np.log(lams), np.log(errs), 1)[0]
        assert abs(slope - 1.0) <= 0.1

    def test_midpoint_matches_interaction_picture_oracle(self):
        # independent formulation: in the frame of the pulse the window obeys
        # w' = -i (lam tau) gamma(s)* H gamma(s) w, so
        # u = drift * gamma(1) * T with T integrated on a fine grid
        rng = np.random.default_rng(3)
        h_mat = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        h_mat = (h_mat + h_mat.conj().T) / 2
        h = Hamiltonian.from_full(SpaceSpec(2, 1), h_mat)
        path = PulsePath.geodesic(target=-1j * Y, shape=PulseShape.raised_cosine())
        lam, tau = 0.6, 0.8
        res = pulse_step(h, ScaledPulse(path, lam), tau)

        n = 4096
        w = I2.copy()
        for j in range(n):
            s = (j + 0.5) / n
            g = path.at(s)
            heff = g.conj().T @ h_mat @ g
            w = unitary_exp(heff, lam * tau / n) @ w
        oracle = expm(-1j * (1 - lam) * tau * h_mat) @ path.at(1.0) @ w
        assert opnorm(res.unitary - oracle) <= 1e-7

    def test_custom_constant_shape_matches_fast_path(self):
        h = hamiltonian_x()
        fast = pulse_step(
            h, ScaledPulse(PulsePath.geodesic(target=-1j * Z, shape=PulseShape.rectangular()), 1.0),
            0.4)
        const = PulseShape.custom(np.ones(64))
        slow = pulse_step(h, ScaledPulse(PulsePath.geodesic(target=-1j * Z, shape=const), 1.0), 0.4)
        assert opnorm(fast.unitary - slow.unitary) <= 1e-8

    def test_unitarity(self):
        rng = np.random.default_rng(4)
        shapes = [PulseShape.rectangular(), PulseShape.triangular(), PulseShape.raised_cosine()]
        for i in range(N_CASES):
            d = 2
            a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            h = Hamiltonian.from_full(SpaceSpec(d, 1), (a + a.conj().T) / 2)
            q, r = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
            u_target = q * (np.diag(r) / np.abs(np.diag(r)))
            import warnings

            from ddlab.pulses import BranchCutWarning

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BranchCutWarning)
                path = PulsePath.geodesic(target=u_target, shape=shapes[i % 3])
            res = pulse_step(h, ScaledPulse(path, float(rng.uniform(0.1, 1.0))),
                              float(rng.uniform(0.05, 1.0)))
            u = res.unitary
            assert opnorm(u.conj().T @ u - identity(d)) <= 1e-9

    def test_invalid_arguments(self):
        h = hamiltonian_x()
        path = PulsePath.geodesic(target=-1j * X)
        with pytest.raises(PulseError):
            ScaledPulse(path, 0.0)
        with pytest.raises(ValidationError):
            pulse_step(h, ScaledPulse(path, 0.5), 0.0)


class TestComposition:
    def test_fast_path_splits_exactly(self):
        # constant window Hamiltonian: u(tau) = u(tau/2 -> tau) u(0 -> tau/2)
        h = hamiltonian_x()
        path = PulsePath.geodesic(target=-1j * Z, shape=PulseShape.rectangular())
        tau = 0.8
        full = pulse_step(h, ScaledPulse(path, 1.0), tau).unitary
        first = pulse_step_partial(h, ScaledPulse(path, 1.0), tau, s=tau / 2)
        second = full @ np.linalg.inv(first)
        assert opnorm(second @ first - full) <= 1e-13
        # and the half-window propagator is the square root factor
        m = path.generator / tau + X
        assert opnorm(first - unitary_exp(m, tau / 2)) <= 1e-12

    def test_general_window_plus_drift_composition(self):
        h = hamiltonian_x()
        path = PulsePath.geodesic(target=-1j * Y, shape=PulseShape.triangular())
        lam, tau = 0.5, 0.6
        full = pulse_step(h, ScaledPulse(path, lam), tau).unitary
        window = pulse_step_partial(h, ScaledPulse(path, lam), tau, s=lam * tau)
        drift = expm(-1j * (1 - lam) * tau * X)
        assert opnorm(drift @ window - full) <= 5e-9


class TestCycleEvolution:
    def test_trivial_cycle_is_drift(self):
        vset = DecouplingSet.create(SpaceSpec(2, 1), [I2], reduced=True)
        cycle = build_cycle(vset, [0])
        sched = build_schedule(cycle, lam=1.0, total_time=0.9)
        h = hamiltonian_x()
        assert opnorm(cycle_evolution(h, sched) - expm(-1j * 0.9 * X)) <= 1e-10

    def test_counterexample_single_cycle_product_form(self):
        # the worked example's closed form at m = 1:
        # F_1(t) = (-1) (e^{-i pi/2 Z - i t/4 X} e^{-i pi/2 X - i t/4 X})^2
        t = 1.0
        sched = counterexample_schedule(t=t)
        h = hamiltonian_x()
        got = cycle_evolution(h, sched)
        tau = t / 4
        a = expm(-1j * ((np.pi / 2) * Z + tau * X))
        b = expm(-1j * ((np.pi / 2) * X + tau * X))
        expected = -(a @ b) @ (a @ b)
        assert opnorm(got - expected) <= 1e-12

    def test_commuting_factorized_oracle(self):
        # all pulse generators proportional to Z and H = Z (x) B: everything
        # commutes, so the cycle evolution is a single exponential of the sum
        rng = np.random.default_rng(8)
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        b = (b + b.conj().T) / 2
        space = SpaceSpec(2, 3)
        h = Hamiltonian.from_terms(space, [(Z, b)])
        vset = DecouplingSet.create(space, [I2, Z], reduced=True, test_operators=())
        cycle = build_cycle(vset, [1, 0], kind="plain")
        sched = build_schedule(cycle, lam=1.0, total_time=0.7)
        got = cycle_evolution(h, sched)
        total_gen = sum(kron(p.generator, identity(3)) for p in sched.paths)
        expected = expm(-1j * (total_gen + 0.7 * h.full))
        assert opnorm(got - expected) <= 1e-10

    def test_schedule_phase_bookkeeping(self):
        sched = counterexample_schedule()
        # canonical pulses end exactly on the cycle products: no phase slip
        assert all(abs(p) <= 1e-12 for p in sched.step_phases)
        assert abs(sched.cycle_phase) <= 1e-12


class TestRepeatedEvolution:
    def test_m_one_is_single_cycle(self):
        sched = counterexample_schedule(m=1)
        h = hamiltonian_x()
        assert opnorm(repeated_evolution(h, sched) - cycle_evolution(h, sched)) == 0.0

    def test_counterexample_limit(self):
        h = hamiltonian_x()
        t = 1.0
        target = expm(-1j * (t / np.pi) * Y)
        last = None
        for m in (200, 2000):
            sched = counterexample_schedule(t=t, m=m)
            d = dist_up_to_phase(repeated_evolution(h, sched), target)
            if last is not None:
                assert d < last / 5  # O(1/m)
            last = d
        assert last <= 5e-4

    def test_euler_cycle_approaches_identity(self):
        h = hamiltonian_x()
        cycle = build_cycle(pauli_set(), [3, 2, 1, 0, 1, 2, 3, 0])
        gen_for = {1: (np.pi / 2) * (X - I2), 3: (np.pi / 2) * (Z - I2)}
        errs = {}
        for m in (100, 1000):
            paths = []
            for g in cycle.derived_pulses:
                sigma = 1 if dist_up_to_phase(g, X) < 1e-9 else 3
                paths.append(PulsePath.geodesic(shape=PulseShape.rectangular(),
                                                generator=gen_for[sigma]))
            sched = build_schedule(cycle, lam=1.0, total_time=1.0, repetitions=m, paths=paths)
            errs[m] = dist_up_to_phase(repeated_evolution(h, sched), I2)
        assert errs[1000] <= 1e-3
        assert errs[100] / errs[1000] == pytest.approx(10.0, rel=0.3)

    def test_lambda_zero_dispatches_to_bangbang(self):
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        sched = build_schedule(cycle, lam=0.0, total_time=1.0, repetitions=7)
        h = hamiltonian_x()
        got = repeated_evolution(h, sched)
        expected = bangbang_evolution(h, cycle, 1.0, 7)
        assert opnorm(got - expected) <= 1e-12


class TestBangbang:
    def test_all_identity_cycle(self):
        vset = DecouplingSet.create(SpaceSpec(2, 1), [I2], reduced=True)
        cycle = build_cycle(vset, [0, 0], kind="plain")
        h = hamiltonian_x()
        assert opnorm(bangbang_evolution(h, cycle, 1.3, 5) - expm(-1j * 1.3 * X)) <= 1e-10

    def test_pauli_cycle_decouples_to_environment_evolution(self):
        # F(t/m)^m -> 1 (x) e^{-itB} with B = tr_s(H)/2
        rng = np.random.default_rng(9)
        b1 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        b1 = (b1 + b1.conj().T) / 2
        b2 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        b2 = (b2 + b2.conj().T) / 2
        space = SpaceSpec(2, 2)
        h = Hamiltonian.from_terms(space, [(X, b1), (I2, b2)])
        cycle = build_cycle(pauli_set(dim_e=2), [1, 2, 3, 0])
        t = 1.0
        target = kron(I2, expm(-1j * t * b2))
        errs = [opnorm(bangbang_evolution(h, cycle, t, m) - target) for m in (64, 640)]
        assert errs[1] <= errs[0] / 5
        assert errs[1] <= 1e-2

    def test_deep_pocket_bangbang_is_exactly_identity(self):
        h_mat, x0 = deep_pocket_hamiltonian(16)
        space = SpaceSpec(16, 1)
        h = Hamiltonian.from_full(space, h_mat)
        vset = parity_set(x0, [h_mat])
        cycle = build_cycle(vset, [1, 0])
        got = bangbang_evolution(h, cycle, 1.0, 8)
        assert opnorm(got - identity(16)) <= 1e-12

    def test_invalid_arguments(self):
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        h = hamiltonian_x()
        with pytest.raises(ValidationError):
            bangbang_evolution(h, cycle, 1.0, 0)
        with pytest.raises(ValidationError):
            bangbang_evolution(h, cycle, -1.0, 4)


class TestBuildSchedule:
    def test_validates_lambda_and_time(self):
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        with pytest.raises(ValidationError):
            build_schedule(cycle, lam=1.5, total_time=1.0)
        with pytest.raises(ValidationError):
            build_schedule(cycle, lam=0.5, total_time=0.0)

    def test_rejects_wrong_path_count(self):
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        paths = (PulsePath.geodesic(target=-1j * X),)
        with pytest.raises(ValidationError):
            build_schedule(cycle, lam=1.0, total_time=1.0, paths=paths)

    def test_rejects_mismatched_target(self):
        cycle = build_cycle(pauli_set(), [1, 2, 3, 0])
        paths = tuple(PulsePath.geodesic(target=-1j * X) for _ in range(4))
        with pytest.raises(ValidationError):
            build_schedule(cycle, lam=1.0, total_time=1.0, paths=paths)

    def test_euler_per_generator_paths_have_zero_cycle_phase(self):
        cycle = build_cycle(pauli_set(), [3, 2, 1, 0, 1, 2, 3, 0])
        paths = []
        for g in cycle.derived_pulses:
            sigma = X if dist_up_to_phase(g, X) < 1e-9 else Z
            paths.append(PulsePath.geodesic(shape=PulseShape.rectangular(),
                                            generator=(np.pi / 2) * (sigma - I2)))
        sched = build_schedule(cycle, lam=1.0, total_time=1.0, paths=tuple(paths))
        assert abs(np.exp(1j * sched.cycle_phase) - 1.0) <= 1e-12
        # individual steps do slip phases (edge-uniform paths cannot all end
        # on the exact products), they just cancel over the cycle
        assert any(abs(p) > 0.1 for p in sched.step_phases)
