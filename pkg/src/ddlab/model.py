"""System/environment split, Hamiltonians, decoupling sets and cycles.

A decoupling set V is a finite list of system unitaries whose average
conjugation action sends every operator x to tr(x)/d * identity; a cycle
is an ordered walk through V, gauge-fixed so its last element is the
identity, with derived pulses gamma_k = v_k* v_{k-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .linalg import as_matrix, dagger, identity, kron, opnorm

DECOUPLING_TOL = 1e-10


class ValidationError(ValueError):
    """Input violates a model invariant."""


@dataclass(frozen=True)
class SpaceSpec:
    """Dimensions of the system and (truncated) environment factors."""

    dim_s: int
    dim_e: int = 1

    def __post_init__(self):
        if self.dim_s < 2:
            raise ValidationError(f"dim_s must be >= 2, got {self.dim_s}")
        if self.dim_e < 1:
            raise ValidationError(f"dim_e must be >= 1, got {self.dim_e}")

    @property
    def dim(self) -> int:
        return self.dim_s * self.dim_e

    def embed_system(self, a: np.ndarray) -> np.ndarray:
        """Lift a system operator to a (x) identity on the full space."""
        a = as_matrix(a)
        if a.shape != (self.dim_s, self.dim_s):
            raise ValidationError(f"system operator has shape {a.shape}, expected ({self.dim_s},{self.dim_s})")
        if self.dim_e == 1:
            return a
        return kron(a, identity(self.dim_e))


@dataclass(frozen=True)
class Hamiltonian:
    """Total Hamiltonian, kept both factorized (terms) and as a full matrix.

    terms is a tuple of (system_factor, environment_factor) pairs whose
    Kronecker sum is the full matrix; the factorized form carries the
    partial-trace structure the Euler identity argument uses.
    """

    space: SpaceSpec
    terms: tuple
    full: np.ndarray = field(repr=False)

    @classmethod
    def from_terms(cls, space: SpaceSpec, terms) -> "Hamiltonian":
        built = []
        total = np.zeros((space.dim, space.dim), dtype=np.complex128)
        for hs, he in terms:
            hs = as_matrix(hs)
            he = identity(space.dim_e) if he is None else as_matrix(he)
            if hs.shape != (space.dim_s, space.dim_s) or he.shape != (space.dim_e, space.dim_e):
                raise ValidationError(
                    f"term shapes {hs.shape} x {he.shape} do not match space ({space.dim_s},{space.dim_e})"
                )
            built.append((hs, he))
            total = total + kron(hs, he)
        if np.abs(total - total.conj().T).max() > linalg.HERMITIAN_TOL:
            raise ValidationError("Hamiltonian is not Hermitian to 1e-12")
        return cls(space=space, terms=tuple(built), full=total)

    @classmethod
    def from_full(cls, space: SpaceSpec, full) -> "Hamiltonian":
        """Full-matrix constructor; only the trivial-environment case factorizes."""
        full = as_matrix(full)
        if space.dim_e != 1:
            raise ValidationError("from_full requires dim_e = 1; use from_terms otherwise")
        return cls.from_terms(space, [(full, None)])

    @property
    def norm(self) -> float:
        return opnorm(self.full)


def _conjugation_average(elements, x: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(x)
    for v in elements:
        acc = acc + v @ x @ dagger(v)
    return acc / len(elements)


@dataclass(frozen=True)
class DecouplingSetReport:
    passed: bool
    max_violation: float
    n_checked: int


@dataclass(frozen=True)
class DecouplingSet:
    """Finite set of system unitaries, stored modulo global phase.

    reduced=True restricts the averaging identity to the declared
    test_operators instead of all of B(H_s).
    """

    space: SpaceSpec
    elements: tuple
    reduced: bool = False
    test_operators: tuple = ()

    @classmethod
    def create(cls, space: SpaceSpec, elements, reduced: bool = False, test_operators=()) -> "DecouplingSet":
        elems = tuple(as_matrix(v) for v in elements)
        if not elems:
            raise ValidationError("decoupling set needs at least one element")
        for i, v in enumerate(elems):
            if v.shape != (space.dim_s, space.dim_s):
                raise ValidationError(f"element {i} has shape {v.shape}, expected ({space.dim_s},{space.dim_s})")
            if not linalg.is_unitary(v):
                raise ValidationError(f"element {i} is not unitary to 1e-12")
        tests = tuple(as_matrix(x) for x in test_operators)
        out = cls(space=space, elements=elems, reduced=reduced, test_operators=tests)
        report = verify_decoupling_set(out)
        if not report.passed:
            raise ValidationError(
                f"averaging identity violated (max violation {report.max_violation:.3e})"
            )
        return out

    @property
    def size(self) -> int:
        return len(self.elements)

    def identity_index(self) -> int:
        one = identity(self.space.dim_s)
        for i, v in enumerate(self.elements):
            if opnorm(v - one) <= 1e-12:
                return i
        raise ValidationError("decoupling set does not contain the identity")

    def match_up_to_phase(self, u: np.ndarray, tol: float = 1e-10):
        """Index of the element proportional to u, or None."""
        for i, v in enumerate(self.elements):
            if linalg.dist_up_to_phase(u, v) <= tol:
                return i
        return None


def verify_decoupling_set(vset: DecouplingSet) -> DecouplingSetReport:
    """Check the averaging identity over the matrix-unit basis (or the declared
    test operators for a reduced set); passes iff the worst violation is <= 1e-10.

    Linearity makes the matrix-unit basis {E_ij} equivalent to checking all x.
    """
    d = vset.space.dim_s
    if vset.reduced:
        basis = list(vset.test_operators)
    else:
        basis = []
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=np.complex128)
                e[i, j] = 1.0
                basis.append(e)
    worst = 0.0
    for x in basis:
        avg = _conjugation_average(vset.elements, x)
        target = (np.trace(x) / d) * identity(d)
        worst = max(worst, opnorm(avg - target))
    return DecouplingSetReport(passed=worst <= DECOUPLING_TOL, max_violation=worst, n_checked=len(basis))


# --- built-in sets -------------------------------------------------------

def pauli_matrices():
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
    return x, y, z


def pauli_set(dim_e: int = 1) -> DecouplingSet:
    """{1, X, Y, Z}: the qubit Pauli group modulo phase."""
    x, y, z = pauli_matrices()
    space = SpaceSpec(2, dim_e)
    return DecouplingSet.create(space, [identity(2), x, y, z])


def weyl_set(d: int, dim_e: int = 1) -> DecouplingSet:
    """Weyl-Heisenberg (generalized Pauli) set {X^a Z^b} for dimension d."""
    omega = np.exp(2j * np.pi / d)
    shift = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        shift[(j + 1) % d, j] = 1.0
    clock = np.diag(omega ** np.arange(d)).astype(np.complex128)
    elems = []
    for a in range(d):
        for b in range(d):
            elems.append(np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b))
    return DecouplingSet.create(SpaceSpec(d, dim_e), elems)


def parity_set(x0: np.ndarray, test_operators, dim_e: int = 1) -> DecouplingSet:
    """Reduced set {1, X0} for a parity (involution) operator X0."""
    x0 = as_matrix(x0)
    space = SpaceSpec(x0.shape[0], dim_e)
    return DecouplingSet.create(
        space, [identity(x0.shape[0]), x0], reduced=True, test_operators=test_operators
    )


# --- cycles --------------------------------------------------------------

@dataclass(frozen=True)
class Cycle:
    """Gauge-fixed visit sequence through a decoupling set.

    elements holds the (possibly re-gauged) visit unitaries with
    elements[-1] = identity exactly; derived_pulses[k] = v_k* v_{k-1}
    with v_0 := v_N, so v_k @ gamma_k = v_{k-1} holds exactly.
    """

    vset: DecouplingSet
    visits: tuple
    kind: str
    elements: tuple
    derived_pulses: tuple

    @property
    def length(self) -> int:
        return len(self.visits)

    def element(self, k: int) -> np.ndarray:
        """v_k in 1-based indexing with the wraparound convention v_0 = v_N."""
        return self.elements[(k - 1) % self.length]


def build_cycle(vset: DecouplingSet, visits, kind: str = "decoupling") -> Cycle:
    """Build a cycle from element indices, re-gauging so it ends at the identity.

    kind="decoupling" additionally requires each element of V to appear the
    same number of times; kind="plain" skips that check (the averaging
    theorems hold for arbitrary cycles).
    """
    if kind not in ("decoupling", "plain"):
        raise ValidationError(f"unknown cycle kind {kind!r}")
    visits = tuple(int(i) for i in visits)
    if not visits:
        raise ValidationError("empty visit list")
    for i in visits:
        if not 0 <= i < vset.size:
            raise ValidationError(f"visit index {i} out of range for |V|={vset.size}")

    if kind == "decoupling":
        counts = [0] * vset.size
        for i in visits:
            counts[i] += 1
        if len(set(counts)) != 1 or counts[0] == 0:
            raise ValidationError(
                f"decoupling cycle must visit every element equally often, got counts {counts}"
            )

    raw = [vset.elements[i] for i in visits]
    w = raw[-1]
    one = identity(vset.space.dim_s)
    if opnorm(w - one) <= 1e-12:
        elements = tuple(raw)
    else:
        # fix the gauge by w = v_N: tilde v_k = w* v_k, so tilde v_N = 1 exactly
        elements = tuple(dagger(w) @ v for v in raw)

    n = len(elements)
    pulses = []
    for k in range(n):
        vprev = elements[k - 1] if k > 0 else elements[-1]
        pulses.append(dagger(elements[k]) @ vprev)
    return Cycle(vset=vset, visits=visits, kind=kind, elements=elements, derived_pulses=tuple(pulses))
