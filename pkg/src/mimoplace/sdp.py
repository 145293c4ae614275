"""Single-target placement by convex relaxation.

The placement objective sum_nm (p' ds_nm)^2 with ds_nm = s_tm - s_rn is
lifted per pair into a 2x2 matrix variable T_nm standing in for
ds ds'. The solved program is

    maximize   sum t_nm
    s.t.       t_nm <= trace(T_nm P),            P = p p'
               d^2 <= trace(T_nm) <= e^2
               [[T_nm, ds_nm], [ds_nm', 1]] >= 0       (T >= ds ds')
               [[I_2,  ds_nm], [ds_nm', e^2]] >= 0     (||ds|| <= e)
               sum_m s_tm + sum_n s_rn = 0,

with the centroid equality eliminated by parameterization. The norm
lower ring is nonconvex and enters only through its lifted image
trace(T) >= d^2; the direct upper-norm block is redundant given the
trace bound but improves conditioning. Antenna positions are recovered
from the principal eigenvectors of the T_nm and repaired by a local
polish of the same quadratic cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ipm
from .errors import InfeasibleBounds, RecoveryInfeasible
from .placement import SamplerConfig, minimize_geometry
from .scenario import SEPARATE, TRANSCEIVER, ArrayGeometry


@dataclass(frozen=True)
class SdpProblem:
    """Compiled relaxation plus the indexing needed for recovery."""

    mode: str
    num_tx: int
    num_rx: int
    pairs: tuple               # ordered (rx, tx) pairs
    bounds: tuple              # (d, e) per pair
    p_vec: np.ndarray          # bearing-derivative direction (2,)
    projector: np.ndarray      # P = p p' (2, 2)
    program: ipm.BlockSdp
    start: np.ndarray
    n_free: int                # free position coordinates

    @property
    def num_lmi_blocks(self):
        return 2 * len(self.pairs)

    def t_slice(self, pair_index):
        base = self.n_free + 3 * pair_index
        return slice(base, base + 3)

    def epigraph_index(self, pair_index):
        return self.n_free + 3 * len(self.pairs) + pair_index


@dataclass
class PlacementSolution:
    geometry: ArrayGeometry
    relaxation_bound: float
    achieved_cost: float
    gap: float
    rank1_residuals: list
    iterations: int
    status: str

    def to_dict(self):
        return {
            "geometry": {
                "mode": self.geometry.mode,
                "tx": self.geometry.tx.tolist(),
                "rx": self.geometry.rx.tolist(),
            },
            "bound": self.relaxation_bound,
            "achieved": self.achieved_cost,
            "gap": self.gap,
            "rank1_residuals": self.rank1_residuals,
            "iterations": self.iterations,
            "status": self.status,
        }


def bearing_direction(theta):
    """Derivative of the steering direction w.r.t. the bearing."""
    return np.array([math.cos(theta), -math.sin(theta)])


def quadratic_cost(geometry, p_vec, constraints):
    """sum over constrained ordered pairs of (p' (s_tm - s_rn))^2."""
    total = 0.0
    for n, m in constraints.constrained_pairs(geometry.mode,
                                              geometry.num_tx,
                                              geometry.num_rx):
        total += float(p_vec @ (geometry.tx[m] - geometry.rx[n])) ** 2
    return total


def _difference_maps(mode, num_tx, num_rx, pairs):
    """Per pair, the (2, n_free) matrix with ds_nm = D @ free_coords.

    Stacked antennas are tx then rx (shared list in transceiver mode);
    the last one equals minus the sum of the others.
    """
    count = num_tx if mode == TRANSCEIVER else num_tx + num_rx
    n_free = 2 * (count - 1)

    def coord_rows(stacked_index):
        rows = np.zeros((2, n_free))
        if stacked_index < count - 1:
            rows[0, 2 * stacked_index] = 1.0
            rows[1, 2 * stacked_index + 1] = 1.0
        else:
            rows[0, 0::2] = -1.0
            rows[1, 1::2] = -1.0
        return rows

    maps = []
    for n, m in pairs:
        tx_idx = m
        rx_idx = n if mode == TRANSCEIVER else num_tx + n
        maps.append(coord_rows(tx_idx) - coord_rows(rx_idx))
    return maps, n_free


def build_relaxation(target, num_tx, num_rx, mode, constraints):
    """Compile the lifted program for one target bearing.

    The problem depends on the target only through the rank-one projector
    P = p p'; two targets with equal bearings compile identically.
    """
    p_vec = bearing_direction(target.theta)
    projector = np.outer(p_vec, p_vec)
    pairs = tuple(constraints.constrained_pairs(mode, num_tx, num_rx))
    if not pairs:
        raise InfeasibleBounds("no constrained pairs to optimize")
    bounds = []
    for n, m in pairs:
        lo, hi = constraints.bounds_for(n, m)
        if lo > hi:
            raise InfeasibleBounds(f"pair (rx {n}, tx {m}): need d <= e, "
                                   f"got d={lo}, e={hi}")
        if lo == hi:
            # degenerate ring: keep a sliver of interior for the iteration
            hi = hi * (1.0 + 1e-9)
        bounds.append((lo, hi))
    diff_maps, n_free = _difference_maps(mode, num_tx, num_rx, pairs)

    n_pairs = len(pairs)
    num_vars = n_free + 4 * n_pairs
    b = np.zeros(num_vars)
    b[n_free + 3 * n_pairs:] = 1.0
    program = ipm.BlockSdp(num_vars=num_vars, b=b)

    e11 = np.diag([1.0, 0.0, 0.0])
    e22 = np.diag([0.0, 1.0, 0.0])
    e12 = np.zeros((3, 3)); e12[0, 1] = e12[1, 0] = 1.0
    ex = np.zeros((3, 3)); ex[0, 2] = ex[2, 0] = 1.0
    ey = np.zeros((3, 3)); ey[1, 2] = ey[2, 1] = 1.0

    start = np.zeros(num_vars)
    for k, ((n, m), (lo, hi), dmap) in enumerate(zip(pairs, bounds,
                                                     diff_maps)):
        t11, t12, t22 = range(n_free + 3 * k, n_free + 3 * k + 3)
        t_epi = n_free + 3 * n_pairs + k
        # strictly interior start: T = (d^2 + e^2)/4 * I, t = 0
        start[t11] = start[t22] = 0.25 * (lo * lo + hi * hi)

        s_terms = [(col, dmap[0, col] * ex + dmap[1, col] * ey)
                   for col in range(n_free)
                   if dmap[0, col] != 0.0 or dmap[1, col] != 0.0]
        # Schur block [[T, ds], [ds', 1]] >= 0
        program.add_block(np.diag([0.0, 0.0, 1.0]),
                          [(t11, e11), (t12, e12), (t22, e22)] + s_terms)
        # direct upper ring [[I, ds], [ds', e^2]] >= 0
        program.add_block(np.diag([1.0, 1.0, hi * hi]), s_terms)
        # epigraph and lifted trace rings
        program.add_scalar(0.0, [(t11, projector[0, 0]),
                                 (t12, 2.0 * projector[0, 1]),
                                 (t22, projector[1, 1]), (t_epi, -1.0)])
        program.add_scalar(-lo * lo, [(t11, 1.0), (t22, 1.0)])
        program.add_scalar(hi * hi, [(t11, -1.0), (t22, -1.0)])

    return SdpProblem(mode=mode, num_tx=num_tx, num_rx=num_rx, pairs=pairs,
                      bounds=tuple(bounds), p_vec=p_vec, projector=projector,
                      program=program, start=start, n_free=n_free)


def solve_relaxation(problem, tol=1e-8, max_iter=200):
    """Solve the compiled program; returns the raw interior-point result."""
    return ipm.solve_sdp(problem.program, tol=tol, max_iter=max_iter,
                         y0=problem.start)


def _rank1_directions(problem, result):
    """Per pair: sign-aligned principal direction scaled by sqrt(trace T),
    plus the rank-one residual lam2/lam1."""
    directions, residuals = [], []
    for k in range(len(problem.pairs)):
        t11, t12, t22 = result.y[problem.t_slice(k)]
        tmat = np.array([[t11, t12], [t12, t22]])
        vals, vecs = np.linalg.eigh(tmat)
        lead = vecs[:, -1]
        if float(problem.p_vec @ lead) < 0.0:
            lead = -lead
        directions.append(math.sqrt(max(np.trace(tmat), 0.0)) * lead)
        residuals.append(float(max(vals[0], 0.0) / max(vals[-1], 1e-300)))
    return directions, residuals


def _least_squares_positions(problem, directions):
    diff_maps, n_free = _difference_maps(problem.mode, problem.num_tx,
                                         problem.num_rx, problem.pairs)
    rows = np.vstack(diff_maps)
    rhs = np.concatenate(directions)
    sol, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    count = problem.num_tx if problem.mode == TRANSCEIVER \
        else problem.num_tx + problem.num_rx
    head = sol.reshape(count - 1, 2)
    pts = np.vstack([head, -head.sum(axis=0, keepdims=True)])
    if problem.mode == TRANSCEIVER:
        return ArrayGeometry.transceiver(pts)
    return ArrayGeometry(pts[:problem.num_tx], pts[problem.num_tx:],
                         SEPARATE)


def recover_geometry(problem, result, constraints, polish_restarts=8,
                     seed=0):
    """Round the lifted solution to antenna positions and polish.

    The least-squares geometry is exact whenever the per-pair directions
    are mutually consistent (separate arrays); in transceiver mode the
    ordered pairs force contradictory directions, so the polish step does
    the placement from jittered least-squares starts and the best feasible
    local optimum is kept.
    """
    directions, residuals = _rank1_directions(problem, result)
    ls_geom = _least_squares_positions(problem, directions)

    def cost_of(geom):
        return quadratic_cost(geom, problem.p_vec, constraints)

    cfg = SamplerConfig(penalty_rounds=7, gtol_rel=1e-9)
    rng = np.random.default_rng(seed)
    scale = max(b[1] for b in problem.bounds)

    bound = result.upper_bound

    # Canonical candidate first: the raw least-squares rounding, kept as-is
    # when it is already ring-feasible (exact for separate arrays). Jittered
    # polish runs only replace it on a strict cost improvement.
    best_geom, best_cost = None, -np.inf
    if constraints.violations(ls_geom) <= 1e-9:
        best_geom, best_cost = ls_geom, cost_of(ls_geom)
        if best_cost >= (1.0 - 1e-7) * bound:
            # rounding already attains the certified bound: optimal
            return PlacementSolution(geometry=best_geom,
                                     relaxation_bound=bound,
                                     achieved_cost=best_cost,
                                     gap=(bound - best_cost)
                                     / max(abs(bound), 1e-300),
                                     rank1_residuals=residuals,
                                     iterations=result.iterations,
                                     status=result.status)

    candidates = [ls_geom]
    for _ in range(max(0, polish_restarts - 1)):
        jitter = rng.normal(scale=0.3 * scale, size=ls_geom.tx.shape)
        if problem.mode == TRANSCEIVER:
            candidates.append(ArrayGeometry.transceiver(ls_geom.tx + jitter))
        else:
            jr = rng.normal(scale=0.3 * scale, size=ls_geom.rx.shape)
            candidates.append(ArrayGeometry(ls_geom.tx + jitter,
                                            ls_geom.rx + jr, SEPARATE))
    for cand in candidates:
        geom, neg, info = minimize_geometry(
            lambda g: -cost_of(g), cand, constraints, wavelength=scale,
            cfg=cfg)
        feasible = info["ring_violation"] <= 1e-9
        better = -neg > best_cost * (1.0 + 1e-9) + 1e-15
        if feasible and (best_geom is None or better):
            best_geom, best_cost = geom, -neg
    if best_geom is None:
        worst = min(constraints.violations(c) for c in candidates)
        raise RecoveryInfeasible("polish could not reach ring feasibility",
                                 max_violation=worst)

    gap = (bound - best_cost) / max(abs(bound), 1e-300)
    return PlacementSolution(geometry=best_geom, relaxation_bound=bound,
                             achieved_cost=best_cost, gap=gap,
                             rank1_residuals=residuals,
                             iterations=result.iterations,
                             status=result.status)


def optimize_single_target(target, num_tx, num_rx, mode, constraints,
                           tol=1e-8, polish_restarts=8, seed=0):
    """Build, solve and recover in one call."""
    problem = build_relaxation(target, num_tx, num_rx, mode, constraints)
    result = solve_relaxation(problem, tol=tol)
    return recover_geometry(problem, result, constraints,
                            polish_restarts=polish_restarts, seed=seed)


def rotate_solution(geometry, dtheta):
    """Rotate every antenna so the placement tracks a bearing shift.

    With R = [[cos, sin], [-sin, cos]], the bearing-derivative direction
    satisfies p(theta + dtheta) = R p(theta), so the rotated geometry
    reproduces the optimal cost at the shifted bearing exactly; dtheta =
    pi maps a placement onto its mirror optimum.
    """
    rot = np.array([[math.cos(dtheta), math.sin(dtheta)],
                    [-math.sin(dtheta), math.cos(dtheta)]])
    return ArrayGeometry(geometry.tx @ rot.T, geometry.rx @ rot.T,
                         geometry.mode, geometry.centered)
