"""Cycle-averaged Hamiltonians H0, H1, H_lambda and the decoupled generator.

H0 averages the plain conjugations v_k H v_k*; H1 replaces each summand by
the pulse-path average of gamma_k(s)* H gamma_k(s); the m -> infinity limit
evolution of the repeated cycle is exp(-i t H_lambda) with
H_lambda = lambda*H1 + (1-lambda)*H0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .linalg import dagger, hermitian_part, opnorm, partial_trace_system
from .model import Cycle, Hamiltonian, ValidationError

QUADRATURE_TOL = 1e-10
MAX_QUADRATURE_NODES = 4096


class QuadratureError(RuntimeError):
    """Node doubling failed to reach the requested accuracy."""


@dataclass(frozen=True)
class AveragedHamiltonians:
    h0: np.ndarray
    h1: np.ndarray
    lam: float
    h_lambda: np.ndarray
    quadrature_nodes: int


def compute_H0(hamiltonian: Hamiltonian, cycle: Cycle) -> np.ndarray:
    """(1/N) sum_k v_k H v_k*; equals 1 (x) tr_s(H)/d for a decoupling cycle."""
    space = hamiltonian.space
    acc = np.zeros_like(hamiltonian.full)
    for v in cycle.elements:
        vf = space.embed_system(v)
        acc = acc + vf @ hamiltonian.full @ dagger(vf)
    return hermitian_part(acc / cycle.length)


def _path_average(hamiltonian: Hamiltonian, path, nodes: int) -> np.ndarray:
    """Gauss-Legendre quadrature of integral_0^1 gamma(s)* H gamma(s) ds."""
    space = hamiltonian.space
    xs, ws = leggauss(nodes)
    xs = 0.5 * (xs + 1.0)
    ws = 0.5 * ws
    acc = np.zeros_like(hamiltonian.full)
    for x, w in zip(xs, ws):
        g = space.embed_system(path.at(float(x)))
        acc = acc + w * (dagger(g) @ hamiltonian.full @ g)
    return acc


def compute_H1(hamiltonian: Hamiltonian, cycle: Cycle, paths, nodes: int = 16) -> np.ndarray:
    """(1/N) sum_k v_{k-1} [integral_0^1 gamma_k(s)* H gamma_k(s) ds] v_{k-1}*.

    Each integral is evaluated with Gauss-Legendre quadrature, doubling the
    node count until the result moves by < 1e-10; geodesic paths whose
    generator commutes with H bypass quadrature (the conjugation is constant).
    """
    if len(paths) != cycle.length:
        raise ValidationError(f"need one path per cycle step ({cycle.length}), got {len(paths)}")
    if nodes < 8:
        raise ValidationError(f"nodes must be >= 8, got {nodes}")
    space = hamiltonian.space
    acc = np.zeros_like(hamiltonian.full)
    for k, path in enumerate(paths):
        if path.mode == "geodesic":
            a_full = space.embed_system(path.generator)
            comm = a_full @ hamiltonian.full - hamiltonian.full @ a_full
            if opnorm(comm) <= 1e-13 * max(1.0, opnorm(hamiltonian.full)):
                integral = hamiltonian.full
            else:
                integral = _converged_path_average(hamiltonian, path, nodes)
        else:
            integral = _converged_path_average(hamiltonian, path, nodes)
        vprev = space.embed_system(cycle.elements[k - 1] if k > 0 else cycle.elements[-1])
        acc = acc + vprev @ integral @ dagger(vprev)
    return hermitian_part(acc / cycle.length)


def _converged_path_average(hamiltonian: Hamiltonian, path, nodes: int) -> np.ndarray:
    current = _path_average(hamiltonian, path, nodes)
    n = nodes
    while True:
        n *= 2
        refined = _path_average(hamiltonian, path, n)
        delta = opnorm(refined - current)
        current = refined
        if delta < QUADRATURE_TOL:
            return current
        if n > MAX_QUADRATURE_NODES:
            raise QuadratureError(
                f"quadrature stalled at {n} nodes (last change {delta:.3e} > {QUADRATURE_TOL})"
            )


def compute_Hlambda(h0: np.ndarray, h1: np.ndarray, lam: float) -> np.ndarray:
    """lambda*H1 + (1-lambda)*H0."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    return lam * h1 + (1.0 - lam) * h0


def decoupled_generator(hamiltonian: Hamiltonian) -> np.ndarray:
    """B = tr_s(H)/dim(H_s): the environment generator of the decoupled limit
    1 (x) e^{-i t B}."""
    space = hamiltonian.space
    return partial_trace_system(hamiltonian.full, space.dim_s, space.dim_e) / space.dim_s


def averaged_hamiltonians(hamiltonian: Hamiltonian, cycle: Cycle, paths, lam: float,
                          nodes: int = 16) -> AveragedHamiltonians:
    h0 = compute_H0(hamiltonian, cycle)
    h1 = compute_H1(hamiltonian, cycle, paths, nodes=nodes)
    return AveragedHamiltonians(
        h0=h0, h1=h1, lam=lam, h_lambda=compute_Hlambda(h0, h1, lam), quadrature_nodes=nodes
    )
