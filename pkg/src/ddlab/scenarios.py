"""Scenario schema, presets and the runner shared by service and CLI.

Scenarios are JSON documents: complex numbers are [re, im] pairs, matrices
nested arrays of those pairs, grids explicit lists. Named system matrices
("identity", "pauli_x", "pauli_y", "pauli_z") may stand in for inline
matrices where dimensions allow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import analysis, euler as euler_mod, model, propagate
from .linalg import as_matrix, dist_up_to_phase, identity, is_hermitian, is_unitary
from .model import DecouplingSet, Hamiltonian, SpaceSpec, ValidationError, build_cycle
from .pulses import BranchCutWarning, PulsePath, PulseShape, canonical_generator, generator_from_target

MatrixPairs = list[list[list[float]]]
MatrixOrName = Union[str, MatrixPairs]

NAMED_MATRICES = ("identity", "pauli_x", "pauli_y", "pauli_z")
PRESET_NAMES = ("counterexample-4.1", "euler-5.1", "factorized-5.6", "deep-pocket", "pauli-bangbang")


class ScenarioError(ValidationError):
    """Scenario fails validation beyond what the schema can express."""


# --- matrix codec ---------------------------------------------------------

def matrix_to_pairs(a) -> MatrixPairs:
    a = as_matrix(a)
    return [[[float(v.real), float(v.imag)] for v in row] for row in a]


def pairs_to_matrix(pairs: MatrixPairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ScenarioError(f"matrix must be rows of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def resolve_matrix(spec: MatrixOrName, dim: int) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "identity":
            return identity(dim)
        if spec in ("pauli_x", "pauli_y", "pauli_z"):
            if dim != 2:
                raise ScenarioError(f"{spec} needs dimension 2, space has {dim}")
            x, y, z = model.pauli_matrices()
            return {"pauli_x": x, "pauli_y": y, "pauli_z": z}[spec]
        raise ScenarioError(f"unknown named matrix {spec!r}")
    m = pairs_to_matrix(spec)
    if m.shape != (dim, dim):
        raise ScenarioError(f"matrix has shape {m.shape}, expected ({dim},{dim})")
    return m


# --- schema ---------------------------------------------------------------

class SpaceModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dim_s: int = Field(ge=2)
    dim_e: int = Field(default=1, ge=1)


class HamiltonianTermModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    system: MatrixOrName
    environment: Optional[MatrixOrName] = None


class HamiltonianModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    terms: Optional[list[HamiltonianTermModel]] = None
    preset: Optional[Literal["deep_pocket"]] = None
    n_grid: Optional[int] = Field(default=None, ge=4)

    @field_validator("n_grid")
    @classmethod
    def _even(cls, v):
        if v is not None and v % 2 != 0:
            raise ValueError("n_grid must be even (symmetric grid without a point at 0)")
        return v


class DecouplingSetModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    preset: Optional[Literal["pauli", "weyl", "parity"]] = None
    elements: Optional[list[MatrixOrName]] = None
    reduced: bool = False
    test_operators: Optional[list[Union[Literal["hamiltonian"], MatrixPairs]]] = None


class CycleModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    visits: Optional[list[int]] = None
    kind: Literal["decoupling", "plain"] = "decoupling"
    euler_generators: Optional[list[int]] = None


class PulseModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    shape: Literal["rectangular", "triangular", "raised_cosine", "custom"] = "rectangular"
    mode: Literal["geodesic", "custom_path"] = "geodesic"
    convention: Literal["principal", "canonical"] = "principal"
    custom_shape_samples: Optional[list[float]] = None
    step_generators: Optional[list[Optional[MatrixPairs]]] = None
    generator_pulses: Optional[dict[str, MatrixPairs]] = None  # per generator position
    step_path_samples: Optional[list[list[MatrixPairs]]] = None  # custom_path mode


class OutputsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    csv: str = "results.csv"
    summary: str = "summary.json"


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: str
    space: SpaceModel
    hamiltonian: HamiltonianModel
    decoupling_set: DecouplingSetModel
    cycle: CycleModel
    pulse: PulseModel = PulseModel()
    lambda_grid: list[float]
    m_grid: list[int]
    t: float = Field(gt=0)
    outputs: OutputsModel = OutputsModel()


# --- deep-pocket discretization -------------------------------------------

def deep_pocket_hamiltonian(n: int, spacing: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference model of H = i d/dx on a symmetric grid of n points
    (spacing 1 by default, no grid point at the origin) with zero boundary.

    The momentum is the antisymmetric central difference, so index reversal
    X0 anticommutes with H exactly: the entries of X0 H X0 are exact
    negations of those of H. Returns (H, X0).
    """
    if n < 4 or n % 2 != 0:
        raise ScenarioError(f"deep pocket grid size must be even and >= 4, got {n}")
    d = np.zeros((n, n))
    for j in range(n - 1):
        d[j, j + 1] = 1.0 / (2.0 * spacing)
        d[j + 1, j] = -1.0 / (2.0 * spacing)
    h = 1j * d
    x0 = np.eye(n)[::-1].astype(np.complex128)
    return h, x0


# --- build ----------------------------------------------------------------

@dataclass
class BuiltScenario:
    scenario: Scenario
    space: SpaceSpec
    hamiltonian: Hamiltonian
    vset: DecouplingSet
    cycle: model.Cycle
    paths: tuple
    shape: PulseShape
    euler_run: bool
    cayley: Optional[euler_mod.CayleyGraph] = None
    euler: Optional[euler_mod.EulerCycle] = None


def _build_shape(pulse: PulseModel) -> PulseShape:
    if pulse.shape == "custom":
        if not pulse.custom_shape_samples:
            raise ScenarioError("shape 'custom' needs custom_shape_samples")
        return PulseShape.custom(pulse.custom_shape_samples)
    return PulseShape.named(pulse.shape)


def _build_hamiltonian(s: Scenario, space: SpaceSpec):
    hm = s.hamiltonian
    if hm.preset == "deep_pocket":
        n = hm.n_grid or 64
        if space.dim_s != n or space.dim_e != 1:
            raise ScenarioError(f"deep_pocket(n={n}) needs space dims ({n}, 1)")
        h, x0 = deep_pocket_hamiltonian(n)
        return Hamiltonian.from_full(space, h), x0
    if not hm.terms:
        raise ScenarioError("hamiltonian needs either terms or a preset")
    terms = []
    for term in hm.terms:
        hs = resolve_matrix(term.system, space.dim_s)
        he = None if term.environment is None else resolve_matrix(term.environment, space.dim_e)
        terms.append((hs, he))
    return Hamiltonian.from_terms(space, terms), None


def _build_set(s: Scenario, space: SpaceSpec, hamiltonian: Hamiltonian, x0) -> DecouplingSet:
    dm = s.decoupling_set
    if dm.preset == "pauli":
        if space.dim_s != 2:
            raise ScenarioError("pauli decoupling set needs dim_s = 2")
        return model.pauli_set(dim_e=space.dim_e)
    if dm.preset == "weyl":
        return model.weyl_set(space.dim_s, dim_e=space.dim_e)
    if dm.preset == "parity":
        if x0 is None:
            raise ScenarioError("parity decoupling set needs the deep_pocket hamiltonian preset")
        tests = _resolve_tests(dm, space, hamiltonian)
        return model.parity_set(x0, tests or [hamiltonian.full], dim_e=space.dim_e)
    if dm.elements is None:
        raise ScenarioError("decoupling_set needs either a preset or inline elements")
    elems = [resolve_matrix(e, space.dim_s) for e in dm.elements]
    tests = _resolve_tests(dm, space, hamiltonian)
    return DecouplingSet.create(space, elems, reduced=dm.reduced, test_operators=tests)


def _resolve_tests(dm: DecouplingSetModel, space: SpaceSpec, hamiltonian: Hamiltonian):
    if dm.test_operators is None:
        return ()
    out = []
    for op in dm.test_operators:
        if op == "hamiltonian":
            if space.dim_e != 1:
                raise ScenarioError("'hamiltonian' test operator needs a trivial environment")
            out.append(hamiltonian.full)
        else:
            out.append(pairs_to_matrix(op))
    return tuple(out)


def _default_generator_path(element: np.ndarray, shape: PulseShape) -> PulsePath:
    """Per-generator path hitting the stored element exactly: the
    (pi/2)(r - 1) branch for Hermitian-unitary r, the principal branch
    otherwise."""
    if is_hermitian(element, 1e-10) and is_unitary(element, 1e-10):
        gen = canonical_generator(element, direction=element)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BranchCutWarning)
            gen = generator_from_target(element)
    return PulsePath.geodesic(target=element, shape=shape, generator=gen)


def _euler_visit_labels(graph: euler_mod.CayleyGraph, cycle: model.Cycle) -> list[int]:
    """Generator position of each step's pulse; errors if the visit sequence
    is not an Euler cycle of the graph (every (source, label) edge once)."""
    vset = graph.vset
    labels = []
    used = set()
    n = cycle.length
    for k in range(n):
        src = cycle.visits[k - 1] if k > 0 else cycle.visits[-1]
        pulse = cycle.derived_pulses[k]
        gpos = None
        for pos, gi in enumerate(graph.generator_indices):
            if dist_up_to_phase(pulse, vset.elements[gi]) <= 1e-8:
                gpos = pos
                break
        if gpos is None:
            raise ScenarioError(f"step {k}: pulse is not proportional to any declared generator")
        key = (src, gpos)
        if key in used:
            raise ScenarioError(f"step {k}: edge {key} traversed twice; not an Euler cycle")
        used.add(key)
        labels.append(gpos)
    if len(used) != graph.n_edges:
        raise ScenarioError(f"visits cover {len(used)} of {graph.n_edges} Cayley edges")
    return labels


def build_scenario(s: Scenario) -> BuiltScenario:
    space = SpaceSpec(s.space.dim_s, s.space.dim_e)
    hamiltonian, x0 = _build_hamiltonian(s, space)
    vset = _build_set(s, space, hamiltonian, x0)
    shape = _build_shape(s.pulse)

    cayley = None
    ecycle = None
    if s.cycle.euler_generators is not None:
        if s.pulse.mode == "custom_path":
            raise ScenarioError("custom_path mode is only supported for explicit-visit cycles")
        cayley = euler_mod.build_cayley(vset, s.cycle.euler_generators)
        gen_paths = {}
        for pos, gi in enumerate(cayley.generator_indices):
            override = (s.pulse.generator_pulses or {}).get(str(pos))
            if override is not None:
                gen = pairs_to_matrix(override)
                gen_paths[pos] = PulsePath.geodesic(shape=shape, generator=gen)
            else:
                gen_paths[pos] = _default_generator_path(vset.elements[gi], shape)
        if s.cycle.visits is not None:
            # canned Euler cycle: validate it against the graph, label the edges
            cyc = build_cycle(vset, s.cycle.visits, kind="decoupling")
            labels = _euler_visit_labels(cayley, cyc)
            paths = tuple(gen_paths[g] for g in labels)
        else:
            ecycle = euler_mod.euler_cycle(cayley)
            cyc, paths = euler_mod.to_cycle(ecycle, gen_paths)
        euler_run = True
    else:
        if s.cycle.visits is None:
            raise ScenarioError("cycle needs either visits or euler_generators")
        cyc = build_cycle(vset, s.cycle.visits, kind=s.cycle.kind)
        paths = None
        if s.pulse.mode == "custom_path":
            if s.pulse.step_path_samples is None:
                raise ScenarioError("mode 'custom_path' needs step_path_samples")
            if len(s.pulse.step_path_samples) != cyc.length:
                raise ScenarioError("step_path_samples must list one sampled path per cycle step")
            paths = tuple(
                PulsePath.from_samples([pairs_to_matrix(u) for u in samples], shape=shape)
                for samples in s.pulse.step_path_samples
            )
        elif s.pulse.step_generators is not None:
            if len(s.pulse.step_generators) != cyc.length:
                raise ScenarioError("step_generators must list one entry per cycle step")
            defaults = propagate.build_schedule(
                cyc, lam=1.0, total_time=s.t, shape=shape, convention=s.pulse.convention
            ).paths
            paths = tuple(
                defaults[k] if entry is None
                else PulsePath.geodesic(shape=shape, generator=pairs_to_matrix(entry))
                for k, entry in enumerate(s.pulse.step_generators)
            )
        euler_run = False

    if paths is None:
        sched = propagate.build_schedule(
            cyc, lam=1.0, total_time=s.t, shape=shape, convention=s.pulse.convention
        )
        paths = sched.paths

    return BuiltScenario(
        scenario=s, space=space, hamiltonian=hamiltonian, vset=vset, cycle=cyc,
        paths=paths, shape=shape, euler_run=euler_run, cayley=cayley, euler=ecycle,
    )


# --- run ------------------------------------------------------------------

@dataclass
class RunResult:
    scenario: Scenario
    report: analysis.ConvergenceReport
    summary: dict
    csv_text: str

    @property
    def exit_code(self) -> int:
        return 0 if self.report.all_pass else 2


def run_scenario(s: Scenario) -> RunResult:
    built = build_scenario(s)
    lam0 = s.lambda_grid[0] if s.lambda_grid else 1.0
    template = propagate.build_schedule(
        built.cycle, lam=lam0, total_time=s.t, repetitions=max(s.m_grid or [1]),
        shape=built.shape, paths=built.paths,
    )
    report = analysis.sweep(
        built.hamiltonian, template, s.m_grid, s.lambda_grid, euler_run=built.euler_run
    )
    summary = analysis.emit_summary(report)
    summary["name"] = s.name
    summary["t"] = s.t
    return RunResult(scenario=s, report=report, summary=summary, csv_text=analysis.emit_csv(report))


# --- presets ---------------------------------------------------------------

def preset(name: str, n_grid: int | None = None) -> Scenario:
    """Fully populated scenarios reproducing the worked examples."""
    if name == "counterexample-4.1":
        return Scenario(
            name=name,
            space=SpaceModel(dim_s=2, dim_e=1),
            hamiltonian=HamiltonianModel(terms=[HamiltonianTermModel(system="pauli_x")]),
            decoupling_set=DecouplingSetModel(preset="pauli"),
            cycle=CycleModel(visits=[1, 2, 3, 0]),
            pulse=PulseModel(shape="rectangular", mode="geodesic", convention="canonical"),
            lambda_grid=[1.0],
            m_grid=[100, 1000, 10000],
            t=1.0,
        )
    if name == "euler-5.1":
        # the literal length-8 Euler cycle (Z, Y, X, 1, X, Y, Z, 1) over
        # the Cayley graph of ({1,X,Y,Z}, {X,Z})
        return Scenario(
            name=name,
            space=SpaceModel(dim_s=2, dim_e=1),
            hamiltonian=HamiltonianModel(terms=[HamiltonianTermModel(system="pauli_x")]),
            decoupling_set=DecouplingSetModel(preset="pauli"),
            cycle=CycleModel(euler_generators=[1, 3], visits=[3, 2, 1, 0, 1, 2, 3, 0]),
            pulse=PulseModel(shape="rectangular", mode="geodesic"),
            lambda_grid=[1.0],
            m_grid=[10, 100, 1000],
            t=1.0,
        )
    if name == "factorized-5.6":
        hs = [[[0.8, 0.0], [1.0, 0.0]], [[1.0, 0.0], [-0.2, 0.0]]]       # X + 0.5 Z + 0.3 1
        he = [[[0.5, 0.0], [0.2, 0.0]], [[0.2, 0.0], [-0.1, 0.0]]]
        return Scenario(
            name=name,
            space=SpaceModel(dim_s=2, dim_e=2),
            hamiltonian=HamiltonianModel(terms=[HamiltonianTermModel(system=hs, environment=he)]),
            decoupling_set=DecouplingSetModel(preset="pauli"),
            cycle=CycleModel(euler_generators=[1, 3]),
            pulse=PulseModel(shape="rectangular", mode="geodesic"),
            lambda_grid=[1.0, 0.5],
            m_grid=[16, 64, 256, 1024],
            t=1.0,
        )
    if name == "deep-pocket":
        n = n_grid or 64
        return Scenario(
            name=f"deep-pocket(n={n})",
            space=SpaceModel(dim_s=n, dim_e=1),
            hamiltonian=HamiltonianModel(preset="deep_pocket", n_grid=n),
            decoupling_set=DecouplingSetModel(preset="parity", reduced=True,
                                              test_operators=["hamiltonian"]),
            cycle=CycleModel(euler_generators=[1]),
            pulse=PulseModel(shape="rectangular", mode="geodesic"),
            lambda_grid=[1.0, 0.0],
            m_grid=[64, 256, 1000],
            t=0.5,
        )
    if name == "pauli-bangbang":
        b1 = [[[0.3, 0.0], [0.0, 0.1]], [[0.0, -0.1], [-0.3, 0.0]]]
        b2 = [[[-0.2, 0.0], [0.4, 0.0]], [[0.4, 0.0], [0.2, 0.0]]]
        b3 = [[[0.6, 0.0], [0.1, 0.2]], [[0.1, -0.2], [-0.4, 0.0]]]
        return Scenario(
            name=name,
            space=SpaceModel(dim_s=2, dim_e=2),
            hamiltonian=HamiltonianModel(terms=[
                HamiltonianTermModel(system="pauli_x", environment=b1),
                HamiltonianTermModel(system="pauli_z", environment=b2),
                HamiltonianTermModel(system="identity", environment=b3),
            ]),
            decoupling_set=DecouplingSetModel(preset="pauli"),
            cycle=CycleModel(visits=[1, 2, 3, 0]),
            pulse=PulseModel(shape="rectangular", mode="geodesic", convention="canonical"),
            lambda_grid=[0.0],
            m_grid=[16, 64, 256, 1024, 4096],
            t=1.0,
        )
    if name.startswith("deep-pocket(") and name.endswith(")"):
        inner = name[len("deep-pocket("):-1]
        if inner.startswith("n="):
            inner = inner[2:]
        return preset("deep-pocket", n_grid=int(inner))
    raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
