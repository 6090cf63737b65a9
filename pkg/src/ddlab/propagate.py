"""Time-ordered propagation of the pulsed Schroedinger equation.

Each cycle step k evolves over [0, tau] with the pulse generator squeezed
into the window [0, lambda*tau] followed by pure drift; later times act on
the left throughout. The pulse window is integrated with the exponential-
midpoint (second-order Magnus) rule under Richardson step control, except
for the rectangular/geodesic case where the window Hamiltonian is constant
and a single exact exponential suffices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .linalg import dagger, identity, opnorm, polar_unitary, unitary_exp
from .model import Cycle, Hamiltonian, ValidationError
from .pulses import (
    BranchCutWarning,
    PulsePath,
    PulseShape,
    ScaledPulse,
    canonical_generator,
    generator_from_target,
)

SUBSTEP_CAP = 2**20
STEP_TOL = 1e-9
REUNITARIZE_EVERY = 64


class StepControlError(RuntimeError):
    """Richardson halving failed to converge within the substep cap."""


@dataclass(frozen=True)
class PropagatorResult:
    unitary: np.ndarray
    substep_count: int
    step_error_estimate: float


@dataclass(frozen=True)
class Schedule:
    """Control program: a cycle, one pulse path per step, a shared relative
    width lambda, the total time and the repetition count.

    lam = 0 selects the bangbang path (instantaneous pulses). Paths must hit
    the cycle's derived pulses up to a global phase; the per-step phases and
    their sum over a cycle are recorded so that evolutions built from
    phase-shifted paths can be compared against the exact-product frame.
    """

    cycle: Cycle
    paths: tuple
    lam: float
    total_time: float
    repetitions: int
    step_phases: tuple
    targets_full: tuple = field(repr=False)

    @property
    def cycle_phase(self) -> float:
        """Sum of per-step phase offsets over one cycle (0 for exact paths)."""
        return float(sum(self.step_phases))

    @property
    def scaled_pulses(self) -> tuple:
        if self.lam == 0.0:
            raise ValidationError("bangbang schedule (lambda = 0) has no scaled pulses")
        return tuple(ScaledPulse(p, self.lam) for p in self.paths)

    def with_time(self, total_time: float, repetitions: int = 1) -> "Schedule":
        return Schedule(
            cycle=self.cycle,
            paths=self.paths,
            lam=self.lam,
            total_time=total_time,
            repetitions=repetitions,
            step_phases=self.step_phases,
            targets_full=self.targets_full,
        )


def build_schedule(
    cycle: Cycle,
    lam: float,
    total_time: float,
    repetitions: int = 1,
    shape: PulseShape | None = None,
    convention: str = "principal",
    paths=None,
) -> Schedule:
    """Assemble a schedule for a cycle.

    Without explicit paths, geodesic paths are derived from the cycle's
    pulses under the given convention: "principal" takes the principal
    Hermitian logarithm of each exact product; "canonical" uses the
    (pi/2)*direction branch (matching the set element the pulse is
    proportional to) with an identity shift so endpoints stay exact.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    if total_time <= 0:
        raise ValidationError(f"total_time must be > 0, got {total_time}")
    if repetitions < 1:
        raise ValidationError(f"repetitions must be >= 1, got {repetitions}")
    shape = shape or PulseShape.rectangular()

    if paths is None:
        paths = []
        for g in cycle.derived_pulses:
            if convention == "principal":
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", BranchCutWarning)
                    gen = generator_from_target(g)
            elif convention == "canonical":
                idx = cycle.vset.match_up_to_phase(g)
                direction = None
                if idx is not None:
                    r = cycle.vset.elements[idx]
                    if linalg.is_hermitian(r, 1e-10) and linalg.is_unitary(r, 1e-10):
                        direction = r
                gen = canonical_generator(g, direction=direction)
            else:
                raise ValidationError(f"unknown pulse convention {convention!r}")
            paths.append(PulsePath.geodesic(target=g, shape=shape, generator=gen))
    paths = tuple(paths)
    if len(paths) != cycle.length:
        raise ValidationError(f"need one pulse path per cycle step ({cycle.length}), got {len(paths)}")

    space = cycle.vset.space
    d = space.dim_s
    phases = []
    targets_full = []
    for k, (path, g) in enumerate(zip(paths, cycle.derived_pulses)):
        z = np.trace(dagger(g) @ path.target) / d
        if abs(abs(z) - 1.0) > 1e-8:
            raise ValidationError(
                f"step {k}: path target differs from the cycle pulse beyond a global phase"
            )
        phases.append(float(np.angle(z)))
        targets_full.append(space.embed_system(path.target))
    return Schedule(
        cycle=cycle,
        paths=paths,
        lam=lam,
        total_time=float(total_time),
        repetitions=int(repetitions),
        step_phases=tuple(phases),
        targets_full=tuple(targets_full),
    )


def _generator_stack(path: PulsePath, svals: np.ndarray, space) -> np.ndarray:
    """Embedded generators A(s) (x) 1 for a batch of path parameters."""
    de = space.dim_e
    if path.mode == "geodesic":
        phi = np.array([path.shape.value(float(s)) for s in svals])
        a_full = space.embed_system(path.generator)
        return phi[:, None, None] * a_full
    gens = np.stack([path.generator_at(float(s)) for s in svals])
    if de == 1:
        return gens
    eye = identity(de)
    n, d, _ = gens.shape
    return np.einsum("nij,kl->nikjl", gens, eye).reshape(n, d * de, d * de)


def _midpoint_window(h_full: np.ndarray, path: PulsePath, lam: float, tau: float, n: int,
                     space, s_end: float | None = None) -> np.ndarray:
    """Midpoint-rule propagator of the pulse window [0, min(s_end, lam*tau)].

    All substep exponentials come from one batched eigendecomposition; the
    ordered product is a pairwise tree (later factors on the left).
    """
    window = lam * tau if s_end is None else min(s_end, lam * tau)
    if window <= 0:
        return identity(h_full.shape[0])
    h = window / n
    scale = lam * tau
    smids = (np.arange(n) + 0.5) * (h / scale)
    ms = _generator_stack(path, smids, space) / scale + h_full
    w, v = np.linalg.eigh(ms)
    phases = np.exp(-1j * h * w)
    us = (v * phases[:, None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    while us.shape[0] > 1:
        k = us.shape[0]
        if k % 2:
            tail = us[-1]
            us = np.concatenate([(us[1:k - 1:2] @ us[0:k - 1:2]),
                                 tail[None, :, :]], axis=0)
        else:
            us = us[1::2] @ us[0::2]
    return us[0]


def pulse_step(hamiltonian: Hamiltonian, pulse: ScaledPulse, tau: float) -> PropagatorResult:
    """Propagator u_k(tau, lambda; tau): pulse window then drift.

    Rectangular shape + geodesic mode makes the window Hamiltonian constant,
    so the window is one exact exponential; otherwise the midpoint rule is
    refined (substep halving) until the unitary changes by < 1e-9.
    """
    path, lam = pulse.base, pulse.lam
    if tau <= 0:
        raise ValidationError(f"tau must be > 0, got {tau}")
    space = hamiltonian.space
    if path.dim != space.dim_s:
        raise ValidationError(f"pulse acts on dim {path.dim}, system is dim {space.dim_s}")
    h_full = hamiltonian.full

    if path.mode == "geodesic" and path.shape.kind == "rectangular":
        a_full = space.embed_system(path.generator)
        u = unitary_exp(a_full + lam * tau * h_full, 1.0)
        substeps, err = 1, 0.0
    else:
        h_norm = opnorm(h_full)
        n = max(1, int(np.ceil((path.sup_generator_norm + lam * tau * h_norm) / 0.1)))
        u = _midpoint_window(h_full, path, lam, tau, n, space)
        while True:
            u2 = _midpoint_window(h_full, path, lam, tau, 2 * n, space)
            err = opnorm(u2 - u)
            u, n = u2, 2 * n
            if err < STEP_TOL:
                break
            if n > SUBSTEP_CAP:
                raise StepControlError(
                    f"pulse window integration did not converge below {STEP_TOL} "
                    f"within {SUBSTEP_CAP} substeps (last change {err:.3e})"
                )
        substeps = n
    if lam < 1.0:
        u = unitary_exp(h_full, (1.0 - lam) * tau) @ u
    return PropagatorResult(unitary=u, substep_count=substeps, step_error_estimate=err)


def pulse_step_partial(hamiltonian: Hamiltonian, pulse: ScaledPulse, tau: float,
                       s: float) -> np.ndarray:
    """u_k(tau, lambda; s) for s in [0, tau]; used by composition checks."""
    path, lam = pulse.base, pulse.lam
    if not 0.0 <= s <= tau:
        raise ValidationError(f"s={s} outside [0, {tau}]")
    space = hamiltonian.space
    h_full = hamiltonian.full
    window = lam * tau
    if path.mode == "geodesic" and path.shape.kind == "rectangular":
        a_full = space.embed_system(path.generator)
        m = a_full / window + h_full
        u = unitary_exp(m, min(s, window))
    else:
        h_norm = opnorm(h_full)
        n = max(1, int(np.ceil((path.sup_generator_norm + lam * tau * h_norm) / 0.1)))
        u = _midpoint_window(h_full, path, lam, tau, n, space, s_end=s)
        while True:
            u2 = _midpoint_window(h_full, path, lam, tau, 2 * n, space, s_end=s)
            err = opnorm(u2 - u)
            u, n = u2, 2 * n
            if err < STEP_TOL:
                break
            if n > SUBSTEP_CAP:
                raise StepControlError("partial pulse window integration did not converge")
    if s > window:
        u = unitary_exp(h_full, s - window) @ u
    return u


def _power_reunitarized(f: np.ndarray, m: int) -> np.ndarray:
    """f^m by repeated multiplication, polar-projected every 64 products."""
    u = identity(f.shape[0])
    for j in range(m):
        u = f @ u
        if (j + 1) % REUNITARIZE_EVERY == 0:
            u = polar_unitary(u)
    return u


def cycle_evolution(hamiltonian: Hamiltonian, schedule: Schedule) -> np.ndarray:
    """F_lambda(t) = u_N ... u_2 u_1 over one cycle of length N (tau = t/N)."""
    if schedule.lam == 0.0:
        return bangbang_cycle(hamiltonian, schedule)
    n = schedule.cycle.length
    tau = schedule.total_time / n
    u = identity(hamiltonian.space.dim)
    for pulse in schedule.scaled_pulses:
        step = pulse_step(hamiltonian, pulse, tau)
        u = step.unitary @ u
    return u


def repeated_evolution(hamiltonian: Hamiltonian, schedule: Schedule) -> np.ndarray:
    """F_lambda(t/m)^m for the schedule's repetition count m."""
    m = schedule.repetitions
    single = schedule.with_time(schedule.total_time / m)
    f = cycle_evolution(hamiltonian, single)
    return _power_reunitarized(f, m)


def bangbang_cycle(hamiltonian: Hamiltonian, schedule: Schedule) -> np.ndarray:
    """One bangbang cycle using the schedule's realized pulse targets."""
    n = schedule.cycle.length
    tau = schedule.total_time / n
    drift = unitary_exp(hamiltonian.full, tau)
    u = identity(hamiltonian.space.dim)
    for tgt in schedule.targets_full:
        u = drift @ tgt @ u
    return u


def bangbang_evolution(hamiltonian: Hamiltonian, cycle: Cycle, t: float, m: int) -> np.ndarray:
    """(e^{-i t/(mN) H} gamma_N ... e^{-i t/(mN) H} gamma_1)^m with the exact
    derived pulses (instantaneous decoupling operations)."""
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    if t <= 0:
        raise ValidationError(f"t must be > 0, got {t}")
    space = hamiltonian.space
    tau = t / (m * cycle.length)
    drift = unitary_exp(hamiltonian.full, tau)
    u = identity(space.dim)
    for g in cycle.derived_pulses:
        u = drift @ space.embed_system(g) @ u
    return _power_reunitarized(u, m)
