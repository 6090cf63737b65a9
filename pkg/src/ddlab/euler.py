"""Cayley graphs of (V, Gamma) and Euler cycles for Euler dynamical decoupling.

Vertices are the elements of a decoupling set V; each vertex carries one
outgoing edge per generator gamma in Gamma, pointing to the vertex w with
w * gamma = v up to a global phase. An Euler cycle traverses every edge
exactly once; walking it induces a visit sequence whose step-k pulse is the
edge label, which only depends on the edge and not on the vertex. That
edge-uniformity is what forces H1 = H0.
"""

from __future__ import annotations

from dataclasses import dataclass


from .linalg import dagger, dist_up_to_phase
from .model import Cycle, DecouplingSet, ValidationError, build_cycle

PHASE_MATCH_TOL = 1e-10


class GeneratorError(ValidationError):
    """Generator set does not generate V, or products leave V projectively."""


@dataclass(frozen=True)
class CayleyEdge:
    source: int
    generator: int  # index into the generator list
    target: int


@dataclass(frozen=True)
class CayleyGraph:
    vset: DecouplingSet
    generator_indices: tuple   # indices into vset.elements
    edges: tuple               # CayleyEdge, grouped by source then generator

    @property
    def n_vertices(self) -> int:
        return self.vset.size

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def out_edges(self, vertex: int):
        return [e for e in self.edges if e.source == vertex]


@dataclass(frozen=True)
class EulerCycle:
    graph: CayleyGraph
    edge_sequence: tuple   # CayleyEdge in traversal order
    induced_visits: tuple  # vertex indices (v_1, ..., v_N), v_N = identity


def build_cayley(vset: DecouplingSet, generators) -> CayleyGraph:
    """Cayley graph of (V, Gamma) with phase-insensitive vertex matching."""
    gen_idx = tuple(int(i) for i in generators)
    if not gen_idx:
        raise GeneratorError("need at least one generator")
    for i in gen_idx:
        if not 0 <= i < vset.size:
            raise GeneratorError(f"generator index {i} out of range for |V|={vset.size}")

    edges = []
    for src in range(vset.size):
        v = vset.elements[src]
        for gpos, gi in enumerate(gen_idx):
            gamma = vset.elements[gi]
            # edge (src --gamma--> tgt) with v_tgt * gamma = v_src up to phase
            tgt_mat = v @ dagger(gamma)
            tgt = vset.match_up_to_phase(tgt_mat, tol=PHASE_MATCH_TOL)
            if tgt is None:
                raise GeneratorError(
                    f"product v_{src} gamma_{gi}* leaves V (set not projectively closed)"
                )
            edges.append(CayleyEdge(source=src, generator=gpos, target=tgt))

    graph = CayleyGraph(vset=vset, generator_indices=gen_idx, edges=tuple(edges))
    if not _strongly_connected(graph):
        raise GeneratorError("generators do not generate V (Cayley graph not strongly connected)")
    return graph


def _strongly_connected(graph: CayleyGraph) -> bool:
    n = graph.n_vertices
    fwd = {v: [] for v in range(n)}
    bwd = {v: [] for v in range(n)}
    for e in graph.edges:
        fwd[e.source].append(e.target)
        bwd[e.target].append(e.source)
    for adj in (fwd, bwd):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != n:
            return False
    return True


def euler_cycle(graph: CayleyGraph, start: int | None = None) -> EulerCycle:
    """Hierholzer's algorithm with deterministic tie-breaking.

    Unused edges are taken in ascending (generator index, target vertex)
    order; the closed circuit is rotated so the induced visit sequence ends
    at the identity element.
    """
    if start is None:
        start = graph.vset.identity_index()
    if not 0 <= start < graph.n_vertices:
        raise ValidationError(f"start vertex {start} out of range")

    out = {v: [] for v in range(graph.n_vertices)}
    for e in graph.edges:
        out[e.source].append(e)
    for v in out:
        out[v].sort(key=lambda e: (e.generator, e.target))
    cursor = {v: 0 for v in range(graph.n_vertices)}

    # Hierholzer: walk until stuck, backtrack emitting edges; reversal at the
    # end yields the circuit in traversal order.
    stack = [(start, None)]
    circuit = []
    while stack:
        v, via = stack[-1]
        if cursor[v] < len(out[v]):
            e = out[v][cursor[v]]
            cursor[v] += 1
            stack.append((e.target, e))
        else:
            stack.pop()
            if via is not None:
                circuit.append(via)
    circuit.reverse()
    if len(circuit) != graph.n_edges:
        raise GeneratorError("graph has no Euler circuit (unbalanced or disconnected)")

    # The walk visits source(e_1), then target(e_1), ...; induced visits are
    # the vertices after each step. Rotate so the final vertex is the identity.
    identity_idx = graph.vset.identity_index()
    ends = [e.target for e in circuit]
    if identity_idx not in ends:
        raise GeneratorError("identity vertex never reached; cannot gauge-fix")
    cut = len(ends) - 1 - ends[::-1].index(identity_idx)
    rotated = circuit[cut + 1:] + circuit[:cut + 1]
    visits = tuple(e.target for e in rotated)
    return EulerCycle(graph=graph, edge_sequence=tuple(rotated), induced_visits=visits)


def to_cycle(ecycle: EulerCycle, pulses_per_generator) -> tuple:
    """Turn an Euler cycle into a gauge-fixed Cycle plus its per-step paths.

    pulses_per_generator maps each generator position (index into the
    graph's generator list) to one PulsePath; every edge with that label
    gets the same path, which is the edge-uniformity H1 = H0 needs.
    """
    graph = ecycle.graph
    vset = graph.vset
    for gpos in range(len(graph.generator_indices)):
        if gpos not in pulses_per_generator:
            raise ValidationError(f"missing pulse path for generator position {gpos}")
    for gpos, path in pulses_per_generator.items():
        rep = vset.elements[graph.generator_indices[gpos]]
        if dist_up_to_phase(path.target, rep) > 1e-8:
            raise ValidationError(
                f"pulse for generator position {gpos} does not match its element up to phase"
            )
    cycle = build_cycle(vset, ecycle.induced_visits, kind="decoupling")
    paths = tuple(pulses_per_generator[e.generator] for e in ecycle.edge_sequence)
    return cycle, paths
