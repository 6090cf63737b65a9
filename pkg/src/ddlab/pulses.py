"""Pulse shapes, unitary pulse paths and their generators.

A pulse path gamma(s) runs from the identity at s=0 to its target unitary
at s=1; its generator is A(s) = i gamma'(s) gamma(s)*. Geodesic paths are
gamma(s) = exp(-i Phi(s) A) for a fixed Hermitian A and integrated shape
Phi; lambda-scaling squeezes the path into [0, lambda] while preserving
the integrated action.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline

from . import linalg
from .linalg import as_matrix, dagger, hermitian_part, identity, opnorm

SHAPE_KINDS = ("rectangular", "triangular", "raised_cosine", "custom")
ENDPOINT_TOL = 1e-10


class PulseError(ValueError):
    """Invalid pulse shape or path."""


class BranchCutWarning(UserWarning):
    """A -1 eigenvalue forced the deterministic +pi branch choice."""


@dataclass(frozen=True)
class PulseShape:
    """Normalized pulse envelope phi on [0,1] with integral 1."""

    kind: str
    samples: np.ndarray | None = None
    _spline: object = field(default=None, repr=False, compare=False)

    @classmethod
    def rectangular(cls) -> "PulseShape":
        return cls(kind="rectangular")

    @classmethod
    def triangular(cls) -> "PulseShape":
        return cls(kind="triangular")

    @classmethod
    def raised_cosine(cls) -> "PulseShape":
        return cls(kind="raised_cosine")

    @classmethod
    def custom(cls, samples) -> "PulseShape":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 1 or samples.size < 4:
            raise PulseError("custom shape needs a 1-d array of >= 4 samples on [0,1]")
        grid = np.linspace(0.0, 1.0, samples.size)
        spline = CubicSpline(grid, samples)
        total = float(spline.integrate(0.0, 1.0))
        if abs(total - 1.0) > 1e-10:
            raise PulseError(f"custom shape integrates to {total!r}, expected 1 to 1e-10")
        return cls(kind="custom", samples=samples, _spline=spline)

    @classmethod
    def named(cls, name: str) -> "PulseShape":
        if name not in ("rectangular", "triangular", "raised_cosine"):
            raise PulseError(f"unknown shape {name!r}")
        return cls(kind=name)

    def value(self, s: float) -> float:
        """phi(s); zero outside [0,1]."""
        if s < 0.0 or s > 1.0:
            return 0.0
        if self.kind == "rectangular":
            return 1.0
        if self.kind == "triangular":
            return 4.0 * s if s <= 0.5 else 4.0 * (1.0 - s)
        if self.kind == "raised_cosine":
            return 1.0 - float(np.cos(2.0 * np.pi * s))
        return float(self._spline(s))

    def integral(self, s: float) -> float:
        """Phi(s) = integral of phi over [0, s]."""
        if s <= 0.0:
            return 0.0
        if s >= 1.0:
            return 1.0
        if self.kind == "rectangular":
            return s
        if self.kind == "triangular":
            return 2.0 * s * s if s <= 0.5 else 1.0 - 2.0 * (1.0 - s) ** 2
        if self.kind == "raised_cosine":
            return s - float(np.sin(2.0 * np.pi * s)) / (2.0 * np.pi)
        return float(self._spline.integrate(0.0, s))

    @property
    def peak(self) -> float:
        if self.kind == "rectangular":
            return 1.0
        if self.kind in ("triangular", "raised_cosine"):
            return 2.0
        return float(np.max(np.abs(self.samples)))


def generator_from_target(gamma: np.ndarray) -> np.ndarray:
    """Principal Hermitian logarithm: A with e^{-iA} = gamma, eigenphases in (-pi, pi].

    Ties at the branch cut (eigenvalue -1) are placed deterministically at
    +pi and announced with a BranchCutWarning.
    """
    gamma = as_matrix(gamma)
    if not linalg.is_unitary(gamma, tol=1e-10):
        raise PulseError("generator_from_target needs a unitary input")
    # unitary => normal => complex Schur form is diagonal
    t, q = sla.schur(gamma, output="complex")
    eigs = np.diag(t)
    phases = -np.angle(eigs)
    at_cut = phases <= -np.pi + 1e-12
    if np.any(at_cut):
        phases = phases.copy()
        phases[at_cut] = np.pi
        warnings.warn(
            "eigenvalue at the -1 branch cut; eigenphase placed at +pi",
            BranchCutWarning,
            stacklevel=2,
        )
    a = (q * phases) @ q.conj().T
    a = hermitian_part(a)
    if opnorm(linalg.expm(-1j * a) - gamma) > ENDPOINT_TOL:
        raise PulseError("principal logarithm failed to reproduce the target to 1e-10")
    return a


def _canonical_sign(r: np.ndarray) -> np.ndarray:
    """Flip the overall sign so the first entry with |.| > 1e-9 points to
    positive real (or positive imaginary when purely imaginary)."""
    for val in r.ravel():
        if abs(val) > 1e-9:
            key = val.real if abs(val.real) > 1e-9 else val.imag
            return -r if key < 0 else r
    return r


def canonical_generator(gamma: np.ndarray, direction: np.ndarray | None = None) -> np.ndarray:
    """Generator with traceless part (pi/2)*direction and exact endpoint.

    For a target proportional to a Hermitian unitary r (Pauli-like), returns
    A = (pi/2) r + c*1 with the real shift c chosen so that e^{-iA} = gamma
    exactly. This is the branch the worked qubit examples use; it changes the
    pulse-averaged Hamiltonian relative to the principal branch. Falls back
    to the principal logarithm when no Hermitian-unitary direction exists.
    """
    gamma = as_matrix(gamma)
    d = gamma.shape[0]
    if direction is None:
        # phase-strip: r = e^{-i alpha} gamma Hermitian for some alpha; both
        # signs +-r qualify, so canonicalize by the first sizeable entry
        candidate = None
        for alpha in np.angle(np.linalg.eigvals(gamma)):
            r = np.exp(-1j * alpha) * gamma
            if linalg.is_hermitian(r, tol=1e-10):
                candidate = _canonical_sign(hermitian_part(r))
                break
        if candidate is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BranchCutWarning)
                return generator_from_target(gamma)
        direction = candidate
    direction = as_matrix(direction)
    if not (linalg.is_hermitian(direction, 1e-10) and linalg.is_unitary(direction, 1e-10)):
        raise PulseError("canonical_generator needs a Hermitian unitary direction")
    # e^{-i (pi/2) r} = -i r, so e^{-ic} must equal gamma (-i r)^{-1} = gamma (i r)
    z = np.trace(gamma @ (1j * direction)) / d
    if abs(abs(z) - 1.0) > 1e-8:
        raise PulseError("target is not proportional to the given direction")
    c = -float(np.angle(z))
    a = (np.pi / 2) * direction + c * identity(d)
    if opnorm(linalg.expm(-1j * a) - gamma) > ENDPOINT_TOL:
        raise PulseError("canonical generator failed to reproduce the target to 1e-10")
    return a


@dataclass(frozen=True)
class PulsePath:
    """Unitary path from 1 to target with generator samples available.

    geodesic mode evaluates exp(-i Phi(s) A) from a cached eigendecomposition
    of A; custom_path mode interpolates user-supplied samples of the path on
    a uniform grid, with the generator recovered by centered differences.
    """

    target: np.ndarray
    generator: np.ndarray
    shape: PulseShape
    mode: str
    _eig: tuple = field(default=None, repr=False, compare=False)
    _path_splines: tuple = field(default=None, repr=False, compare=False)
    _gen_splines: tuple = field(default=None, repr=False, compare=False)

    @classmethod
    def geodesic(cls, target=None, shape: PulseShape | None = None, generator=None) -> "PulsePath":
        """Geodesic path; give either the target (principal log) or the generator."""
        shape = shape or PulseShape.rectangular()
        if generator is None:
            if target is None:
                raise PulseError("geodesic path needs a target or a generator")
            target = as_matrix(target)
            generator = generator_from_target(target)
        else:
            generator = hermitian_part(as_matrix(generator))
            expected = linalg.unitary_exp(generator)
            if target is None:
                target = expected
            else:
                target = as_matrix(target)
                if opnorm(expected - target) > ENDPOINT_TOL:
                    raise PulseError("generator does not reproduce the declared target to 1e-10")
        w, v = np.linalg.eigh(generator)
        return cls(target=target, generator=generator, shape=shape, mode="geodesic", _eig=(w, v))

    @classmethod
    def from_samples(cls, samples, shape: PulseShape | None = None) -> "PulsePath":
        """Custom sampled path: unitaries on a uniform grid over [0,1]."""
        mats = [as_matrix(u) for u in samples]
        if len(mats) < 5:
            raise PulseError("custom path needs >= 5 samples")
        d = mats[0].shape[0]
        one = identity(d)
        if opnorm(mats[0] - one) > ENDPOINT_TOL:
            raise PulseError("custom path must start at the identity")
        grid = np.linspace(0.0, 1.0, len(mats))
        h = grid[1] - grid[0]
        stack = np.stack(mats)
        # centered differences in the interior, one-sided at the ends
        deriv = np.gradient(stack, h, axis=0)
        gens = []
        for k in range(len(mats)):
            gens.append(hermitian_part(1j * deriv[k] @ dagger(mats[k])))
        path_spl = CubicSpline(grid, stack, axis=0)
        gen_spl = CubicSpline(grid, np.stack(gens), axis=0)
        target = mats[-1]
        # metadata only: custom-path dynamics use the sampled generators, so
        # the log branch of the endpoint is immaterial
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BranchCutWarning)
            generator = generator_from_target(target)
        return cls(
            target=target,
            generator=generator,
            shape=shape or PulseShape.rectangular(),
            mode="custom_path",
            _path_splines=(path_spl,),
            _gen_splines=(gen_spl,),
        )

    @property
    def dim(self) -> int:
        return self.target.shape[0]

    def at(self, s: float) -> np.ndarray:
        """gamma(s) for s in [0,1]."""
        if s < 0.0 or s > 1.0:
            raise PulseError(f"path parameter {s} outside [0,1]")
        if self.mode == "geodesic":
            w, v = self._eig
            phases = np.exp(-1j * self.shape.integral(s) * w)
            return (v * phases) @ v.conj().T
        u = self._path_splines[0](s)
        return np.asarray(u, dtype=np.complex128)

    def generator_at(self, s: float) -> np.ndarray:
        """A(s) = i gamma'(s) gamma(s)*."""
        if s < 0.0 or s > 1.0:
            raise PulseError(f"path parameter {s} outside [0,1]")
        if self.mode == "geodesic":
            return self.shape.value(s) * self.generator
        return hermitian_part(np.asarray(self._gen_splines[0](s), dtype=np.complex128))

    @property
    def sup_generator_norm(self) -> float:
        if self.mode == "geodesic":
            return self.shape.peak * opnorm(self.generator)
        grid = np.linspace(0.0, 1.0, 65)
        return max(opnorm(self.generator_at(s)) for s in grid)


def path_at(path: PulsePath, s: float) -> np.ndarray:
    return path.at(s)


@dataclass(frozen=True)
class ScaledPulse:
    """Pulse path squeezed into [0, lambda]: A^(lambda)(s) = A(s/lambda)/lambda."""

    base: PulsePath
    lam: float

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise PulseError(f"lambda must be in (0, 1], got {self.lam}")

    def generator_at(self, s: float) -> np.ndarray:
        """(1/lambda) A(s/lambda) on [0, lambda], zero beyond."""
        if s < 0.0 or s > 1.0:
            raise PulseError(f"scaled-pulse parameter {s} outside [0,1]")
        if s > self.lam:
            d = self.base.dim
            return np.zeros((d, d), dtype=np.complex128)
        return self.base.generator_at(s / self.lam) / self.lam

    def path_at(self, s: float) -> np.ndarray:
        """gamma_(k,lambda)(s) = gamma(s/lambda), clamped at the target."""
        if s < 0.0 or s > 1.0:
            raise PulseError(f"scaled-pulse parameter {s} outside [0,1]")
        return self.base.at(min(s / self.lam, 1.0))


def scaled_generator_at(pulse: ScaledPulse, s: float) -> np.ndarray:
    return pulse.generator_at(s)
