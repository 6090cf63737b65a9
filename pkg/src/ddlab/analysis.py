"""Convergence metrics, explicit rate bounds and (m, lambda) sweeps.

All distances are operator norms. Evolutions built from phase-shifted pulse
paths are compared in the exact-product frame by multiplying out the
schedule's known cycle phase; for exact-endpoint schedules that phase is 0
and the comparison is plain.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .averages import compute_H0, compute_H1, compute_Hlambda, decoupled_generator
from .linalg import (
    NearSingularError,
    identity,
    kron,
    opnorm,
    partial_trace_system,
    polar_unitary,
    unitary_exp,
)
from .model import Hamiltonian, SpaceSpec, ValidationError
from .propagate import Schedule, bangbang_evolution, repeated_evolution

BOUND_SLACK = 1e-8
RATE_TOL = 0.2
THREADS_ENV = "DDLAB_THREADS"


def bound_rate1(hamiltonian: Hamiltonian, t: float, m: int) -> float:
    """(2t/m) ||H|| (1 + 2t ||H||): distance bound to exp(-i t H_lambda)."""
    if m < 1 or t <= 0:
        raise ValidationError(f"need m >= 1 and t > 0, got m={m}, t={t}")
    h = hamiltonian.norm
    return (2.0 * t / m) * h * (1.0 + 2.0 * t * h)


def bound_rate2(hamiltonian: Hamiltonian, t: float, m: int, lam: float,
                h0: np.ndarray, h1: np.ndarray) -> float:
    """bound_rate1 plus the lambda*t*||H1 - H0|| term: bound to exp(-i t H0)."""
    return bound_rate1(hamiltonian, t, m) + lam * t * opnorm(h1 - h0)


@dataclass(frozen=True)
class DecouplingErrorResult:
    value: float
    saturated: bool
    env_unitary: np.ndarray | None


def decoupling_error_detail(u: np.ndarray, space: SpaceSpec) -> DecouplingErrorResult:
    """Distance from u to the decoupled set {1 (x) W}: W is approximated by
    the unitary polar factor of tr_s(u)/d. A near-singular partial trace
    means u is far from every 1 (x) W; the error saturates at 2."""
    reduced = partial_trace_system(u, space.dim_s, space.dim_e) / space.dim_s
    try:
        w = polar_unitary(reduced)
    except NearSingularError:
        return DecouplingErrorResult(value=2.0, saturated=True, env_unitary=None)
    err = opnorm(u - kron(identity(space.dim_s), w))
    return DecouplingErrorResult(value=err, saturated=False, env_unitary=w)


def decoupling_error(u: np.ndarray, space: SpaceSpec) -> float:
    return decoupling_error_detail(u, space).value


# --- the "bound of the ring" lemma over piecewise-constant Hamiltonians ----

@dataclass(frozen=True)
class RingBoundReport:
    lhs: float          # sup_s ||U_a(s) - U_b(s)||
    action_norm: float  # sup_s ||S_ab(s)||
    h_a_l1: float
    h_b_l1: float
    rhs: float
    holds: bool


def _piecewise_propagator_samples(segments, refine: int):
    """Unitaries U(s) on a grid refining each constant segment."""
    dim = np.asarray(segments[0][1]).shape[0]
    u = identity(dim)
    out = [(0.0, u)]
    s = 0.0
    for duration, h in segments:
        h = np.asarray(h, dtype=np.complex128)
        step = duration / refine
        for _ in range(refine):
            u = unitary_exp(h, step) @ u
            s += step
            out.append((s, u))
    return out


def ring_bound_check(segments_a, segments_b, refine: int = 8) -> RingBoundReport:
    """Check ||U_a - U_b||_inf <= ||S_ab||_inf (1 + ||H_a||_1 + ||H_b||_1)
    for two piecewise-constant Hamiltonians given as (duration, matrix) lists
    over the same total interval."""
    ta = sum(d for d, _ in segments_a)
    tb = sum(d for d, _ in segments_b)
    if abs(ta - tb) > 1e-12:
        raise ValidationError(f"total durations differ: {ta} vs {tb}")

    # merge breakpoints so both sides are constant on every merged segment
    def breakpoints(segs):
        acc, s = [0.0], 0.0
        for d, _ in segs:
            s += d
            acc.append(s)
        return acc

    cuts = sorted(set(np.round(breakpoints(segments_a) + breakpoints(segments_b), 15)))

    def value_at(segs, s):
        acc = 0.0
        for d, h in segs:
            if s < acc + d - 1e-15:
                return np.asarray(h, dtype=np.complex128)
            acc += d
        return np.asarray(segs[-1][1], dtype=np.complex128)

    merged_a, merged_b = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        merged_a.append((hi - lo, value_at(segments_a, mid)))
        merged_b.append((hi - lo, value_at(segments_b, mid)))

    ua = _piecewise_propagator_samples(merged_a, refine)
    ub = _piecewise_propagator_samples(merged_b, refine)
    lhs = max(opnorm(x[1] - y[1]) for x, y in zip(ua, ub))

    # S_ab is piecewise linear, so its sup over s is attained at breakpoints
    dim = np.asarray(segments_a[0][1]).shape[0]
    s_acc = np.zeros((dim, dim), dtype=np.complex128)
    sup_action = 0.0
    for (da, ha), (_, hb) in zip(merged_a, merged_b):
        s_acc = s_acc + da * (np.asarray(ha) - np.asarray(hb))
        sup_action = max(sup_action, opnorm(s_acc))

    l1a = sum(d * opnorm(h) for d, h in merged_a)
    l1b = sum(d * opnorm(h) for d, h in merged_b)
    rhs = sup_action * (1.0 + l1a + l1b)
    return RingBoundReport(
        lhs=lhs, action_norm=sup_action, h_a_l1=l1a, h_b_l1=l1b, rhs=rhs,
        holds=lhs <= rhs + BOUND_SLACK,
    )


# --- sweeps ---------------------------------------------------------------

CSV_COLUMNS = ("m", "lambda", "dist_Hlambda", "dist_H0", "dist_bb", "bound1", "bound2", "dd_error")


@dataclass(frozen=True)
class GridPoint:
    m: int
    lam: float
    dist_hlambda: float
    dist_h0: float
    dist_bb: float
    bound1: float
    bound2: float
    dd_error: float
    error: str | None = None


@dataclass
class ConvergenceReport:
    points: list
    h0: np.ndarray
    h1: np.ndarray
    h1_minus_h0: float
    decoupled_generator: np.ndarray
    slope_m: float | None
    slope_lambda: float | None
    slope_dd: float | None
    pass_bound1: bool
    pass_bound2: bool
    pass_lambda_rate: bool | None
    pass_euler_decoupling: bool | None
    limit_swap_gap: float | None
    monotone_ratio: float | None
    euler_run: bool = False
    limits: dict = field(default_factory=dict)  # lambda -> exp(-i t H_lambda)

    @property
    def all_pass(self) -> bool:
        flags = [self.pass_bound1, self.pass_bound2, self.pass_lambda_rate, self.pass_euler_decoupling]
        return all(f for f in flags if f is not None)

    @property
    def bound_violated(self) -> bool:
        return not (self.pass_bound1 and self.pass_bound2)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _fit_slope(xs, ys):
    """Least-squares slope of log y against log x over the top half of the
    grid (burn-in excluded); None when fewer than two usable points."""
    pairs = [(x, y) for x, y in zip(xs, ys) if y > 1e-15]
    if len(pairs) < 2:
        return None
    half = pairs[len(pairs) // 2:] if len(pairs) > 3 else pairs
    lx = np.log([p[0] for p in half])
    ly = np.log([p[1] for p in half])
    if len(half) < 2:
        return None
    return float(np.polyfit(lx, ly, 1)[0])


def sweep(hamiltonian: Hamiltonian, schedule: Schedule, m_grid, lambda_grid,
          euler_run: bool = False, quadrature_nodes: int = 16) -> ConvergenceReport:
    """Evaluate the repeated evolution on the (m, lambda) grid and verify the
    rate bounds, the O(lambda) bangbang approximation rate and (for Euler
    runs) the decay of the decoupling error.

    Grid points are independent and may run on DDLAB_THREADS threads; the
    report is assembled in grid order either way.
    """
    m_grid = [int(m) for m in m_grid]
    lambda_grid = [float(l) for l in lambda_grid]
    if not m_grid or not lambda_grid:
        raise ValidationError("m_grid and lambda_grid must be nonempty")
    if sorted(m_grid) != m_grid or sorted(lambda_grid, reverse=True) != lambda_grid:
        raise ValidationError("m_grid must ascend and lambda_grid must descend")
    if any(m < 1 for m in m_grid) or any(not 0.0 <= lam <= 1.0 for lam in lambda_grid):
        raise ValidationError("m values must be >= 1 and lambda values within [0, 1]")

    space = hamiltonian.space
    t = schedule.total_time
    cycle = schedule.cycle
    h0 = compute_H0(hamiltonian, cycle)
    h1 = compute_H1(hamiltonian, cycle, schedule.paths, nodes=quadrature_nodes)
    gap10 = opnorm(h1 - h0)
    exp_h0 = unitary_exp(h0, t)
    exp_hlam = {lam: unitary_exp(compute_Hlambda(h0, h1, lam), t) for lam in lambda_grid}
    bb_cache = {}

    def bangbang_at(m: int) -> np.ndarray:
        if m not in bb_cache:
            bb_cache[m] = bangbang_evolution(hamiltonian, cycle, t, m)
        return bb_cache[m]

    grid = [(m, lam) for lam in lambda_grid for m in m_grid]

    def evaluate(point):
        m, lam = point
        try:
            sched = Schedule(
                cycle=cycle, paths=schedule.paths, lam=lam, total_time=t, repetitions=m,
                step_phases=schedule.step_phases, targets_full=schedule.targets_full,
            )
            f = repeated_evolution(hamiltonian, sched)
            # exact-product frame: strip the known per-cycle control phase
            f_frame = np.exp(-1j * m * schedule.cycle_phase) * f
            d_hlam = opnorm(f_frame - exp_hlam[lam])
            d_h0 = opnorm(f_frame - exp_h0)
            d_bb = opnorm(f_frame - bangbang_at(m))
            b1 = bound_rate1(hamiltonian, t, m)
            b2 = bound_rate2(hamiltonian, t, m, lam, h0, h1)
            dd = decoupling_error(f, space)
            return GridPoint(m=m, lam=lam, dist_hlambda=d_hlam, dist_h0=d_h0, dist_bb=d_bb,
                             bound1=b1, bound2=b2, dd_error=dd)
        except Exception as exc:  # partial reports with per-point markers
            return GridPoint(m=m, lam=lam, dist_hlambda=np.nan, dist_h0=np.nan, dist_bb=np.nan,
                             bound1=np.nan, bound2=np.nan, dd_error=np.nan, error=str(exc))

    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(evaluate, grid))
    else:
        points = [evaluate(p) for p in grid]

    ok = [p for p in points if p.error is None]
    pass_b1 = all(p.dist_hlambda <= p.bound1 + BOUND_SLACK for p in ok) and len(ok) == len(points)
    pass_b2 = all(p.dist_h0 <= p.bound2 + BOUND_SLACK for p in ok) and len(ok) == len(points)

    # m-rate at the smallest lambda in the grid
    lam_last = lambda_grid[-1]
    col = [p for p in ok if p.lam == lam_last]
    slope_m = _fit_slope([p.m for p in col], [p.dist_hlambda for p in col])

    # lambda-rate of the bangbang distance at the largest m (positive lambdas)
    m_last = m_grid[-1]
    row = [p for p in ok if p.m == m_last and p.lam > 0]
    slope_lambda = _fit_slope([p.lam for p in row], [p.dist_bb for p in row])
    if len(row) >= 3:
        pass_lambda = slope_lambda is not None and abs(slope_lambda - 1.0) <= RATE_TOL
    else:
        pass_lambda = None

    # Euler decoupling: dd_error -> 0 at rate O(1/m), at the largest lambda
    slope_dd = None
    pass_euler = None
    if euler_run:
        col_dd = [p for p in ok if p.lam == lambda_grid[0]]
        dd_final = col_dd[-1].dd_error if col_dd else np.nan
        slope_dd = _fit_slope([p.m for p in col_dd], [p.dd_error for p in col_dd])
        if dd_final <= 1e-9:
            pass_euler = True  # converged to the decoupled set outright
        elif slope_dd is None or len(col_dd) < 2:
            pass_euler = None
        else:
            pass_euler = abs(slope_dd + 1.0) <= RATE_TOL

    # corner agreement of the two iterated limits (swap m- and lambda-limits)
    limit_swap = None
    positive = [l for l in lambda_grid if l > 0]
    if positive:
        lam_min = positive[-1]
        limit_swap = float(opnorm(exp_hlam[lam_min] - bangbang_at(m_last)))

    mono = None
    if len(col) >= 2 and col[-1].m >= 10 * col[0].m and col[0].dist_hlambda > 1e-13:
        mono = float(col[-1].dist_hlambda / col[0].dist_hlambda)

    return ConvergenceReport(
        points=points, h0=h0, h1=h1, h1_minus_h0=float(gap10),
        decoupled_generator=decoupled_generator(hamiltonian),
        slope_m=slope_m, slope_lambda=slope_lambda, slope_dd=slope_dd,
        pass_bound1=pass_b1, pass_bound2=pass_b2, pass_lambda_rate=pass_lambda,
        pass_euler_decoupling=pass_euler, limit_swap_gap=limit_swap,
        monotone_ratio=mono, euler_run=euler_run, limits=exp_hlam,
    )


def emit_csv(report: ConvergenceReport) -> str:
    """One row per grid point in grid order; floats via repr for byte-stable
    output across runs."""
    lines = [",".join(CSV_COLUMNS)]
    for p in report.points:
        row = (p.m, p.lam, p.dist_hlambda, p.dist_h0, p.dist_bb, p.bound1, p.bound2, p.dd_error)
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    return "\n".join(lines) + "\n"


def _matrix_to_lists(a: np.ndarray):
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(a, dtype=np.complex128)]


def _finite(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def emit_summary(report: ConvergenceReport) -> dict:
    include_matrices = report.h0.shape[0] <= 8
    dd_final = {}
    for p in report.points:
        if p.error is None:
            dd_final[repr(p.lam)] = _finite(p.dd_error)  # grid order: last m wins
    return {
        "pass": report.all_pass,
        "theorem_violation": report.bound_violated or (report.pass_lambda_rate is False)
        or (report.pass_euler_decoupling is False),
        "flags": {
            "bound1_dominates": report.pass_bound1,
            "bound2_dominates": report.pass_bound2,
            "lambda_rate_linear": report.pass_lambda_rate,
            "euler_decoupling": report.pass_euler_decoupling,
        },
        "fitted_rates": {
            "slope_m": report.slope_m,
            "slope_lambda": report.slope_lambda,
            "slope_dd_error": report.slope_dd,
        },
        "h1_minus_h0_norm": report.h1_minus_h0,
        "limit_swap_gap": report.limit_swap_gap,
        "monotone_ratio": report.monotone_ratio,
        "euler_run": report.euler_run,
        "dd_error_final": dd_final,
        "matrices_included": include_matrices,
        "h0": _matrix_to_lists(report.h0) if include_matrices else None,
        "h1": _matrix_to_lists(report.h1) if include_matrices else None,
        "limit_evolutions": (
            {repr(lam): _matrix_to_lists(u) for lam, u in report.limits.items()}
            if include_matrices else None
        ),
        "decoupled_generator": (
            _matrix_to_lists(report.decoupled_generator)
            if report.decoupled_generator.shape[0] <= 8 else None
        ),
        "grid": [
            {
                "m": p.m, "lambda": p.lam,
                "dist_Hlambda": _finite(p.dist_hlambda), "dist_H0": _finite(p.dist_h0),
                "dist_bb": _finite(p.dist_bb), "bound1": _finite(p.bound1),
                "bound2": _finite(p.bound2), "dd_error": _finite(p.dd_error),
                **({"error": p.error} if p.error else {}),
            }
            for p in report.points
        ],
    }
