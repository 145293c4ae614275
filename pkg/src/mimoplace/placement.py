"""Nonconvex antenna placement: penalized local optimizer and the
Gaussian-restart multistart loop, plus the path-phase separation interval.

The decision variable is the stacked antenna position vector with the
joint centroid eliminated (the last antenna is minus the sum of the
others), so the centroid equality holds exactly at every iterate. Ring
constraints d <= ||s_tm - s_rn|| <= e enter through smooth quadratic
hinges on the squared distances with a multiplier schedule; the inner
solves are quasi-Newton (BFGS) with central-difference gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sciopt

from .errors import AllRestartsFailed
from .fim import StateCrlbObjective, state_fim_and_crlb
from .scenario import SEPARATE, TRANSCEIVER, ArrayGeometry


@dataclass(frozen=True)
class SamplerConfig:
    """Multistart loop knobs.

    restarts: total perturbed-restart budget U.
    patience: stop after this many consecutive non-improving restarts.
    q_std: per-coordinate std dev (m) of the Gaussian restart perturbation
        (covariance Q = q_std^2 I); defaults to half a wavelength.
    """

    restarts: int = 50
    patience: int = 10
    q_std: float = 0.15
    seed: int = 0
    penalty_rounds: int = 7
    penalty_start: float = 1e2
    gtol_rel: float = 1e-7
    max_inner_iter: int = 400

    def __post_init__(self):
        if self.restarts < 1 or self.patience < 1:
            raise ValueError("restarts and patience must be >= 1")
        if self.q_std <= 0:
            raise ValueError("q_std must be positive")


@dataclass
class RestartRecord:
    restart: int
    final_cost: float
    accepted: bool
    inner_iterations: int


@dataclass
class OptimizerTrace:
    records: list = field(default_factory=list)
    best_costs: list = field(default_factory=list)

    def rows(self):
        for rec, best in zip(self.records, self.best_costs):
            yield rec.restart, rec.inner_iterations, rec.final_cost, \
                int(rec.accepted), best


@dataclass
class MultistartResult:
    geometry: ArrayGeometry
    cost: float
    restarts_run: int
    accepted: int
    status: str


# ---------------------------------------------------------------------------
# geometry packing (centroid eliminated)
# ---------------------------------------------------------------------------

def _stacked_points(geometry):
    if geometry.mode == TRANSCEIVER:
        return geometry.tx
    return np.vstack([geometry.tx, geometry.rx])


def _geometry_from_points(pts, mode, num_tx, num_rx):
    if mode == TRANSCEIVER:
        return ArrayGeometry.transceiver(pts)
    return ArrayGeometry(pts[:num_tx], pts[num_tx:], SEPARATE)


def _pack(geometry):
    pts = _stacked_points(geometry)
    pts = pts - pts.mean(axis=0)
    return pts[:-1].ravel().copy()


def _unpack(vec, mode, num_tx, num_rx):
    count = num_tx if mode == TRANSCEIVER else num_tx + num_rx
    head = vec.reshape(count - 1, 2)
    pts = np.vstack([head, -head.sum(axis=0, keepdims=True)])
    return _geometry_from_points(pts, mode, num_tx, num_rx)


def _ring_penalty(geometry, constraints, lam):
    """Sum of squared hinge violations of the squared-distance rings,
    normalized by lambda^4 so the penalty is dimensionless."""
    total = 0.0
    pairs = constraints.constrained_pairs(geometry.mode, geometry.num_tx,
                                          geometry.num_rx)
    for n, m in pairs:
        lo, hi = constraints.bounds_for(n, m)
        sq = float(np.sum((geometry.tx[m] - geometry.rx[n]) ** 2))
        total += max(0.0, lo * lo - sq) ** 2 + max(0.0, sq - hi * hi) ** 2
    return total / lam ** 4


def _fd_gradient(fn, x, step):
    grad = np.empty_like(x)
    for k in range(x.size):
        hi = x.copy(); hi[k] += step
        lo = x.copy(); lo[k] -= step
        grad[k] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def minimize_geometry(cost_fn, init, constraints, wavelength, cfg=None):
    """Locally minimize ``cost_fn(geometry)`` under ring and centroid
    constraints.

    Returns (geometry, cost, info) where info carries inner iteration
    counts and the final ring violation. ``cost_fn`` may return +inf for
    unusable geometries (e.g. a singular information matrix); such probes
    act as barriers for the line search.
    """
    cfg = cfg or SamplerConfig()
    mode, num_tx, num_rx = init.mode, init.num_tx, init.num_rx
    x = _pack(init)
    fd_step = 1e-6 * wavelength
    info = {"inner_iterations": 0, "rounds": 0}

    def geometry_of(vec):
        return _unpack(vec, mode, num_tx, num_rx)

    init_geom = geometry_of(x)
    base = cost_fn(init_geom)
    init_violation = constraints.violations(init_geom)
    cost_scale = max(1.0, abs(base)) if math.isfinite(base) else 1.0

    rho = cfg.penalty_start * cost_scale
    for round_idx in range(cfg.penalty_rounds):
        def objective(vec, rho=rho):
            geom = geometry_of(vec)
            c = cost_fn(geom)
            if not math.isfinite(c):
                c = 1e6 * cost_scale
            return c + rho * _ring_penalty(geom, constraints, wavelength)

        res = sciopt.minimize(
            objective, x, method="BFGS",
            jac=lambda v: _fd_gradient(objective, v, fd_step),
            options={"gtol": cfg.gtol_rel * cost_scale / wavelength,
                     "maxiter": cfg.max_inner_iter})
        x = res.x
        info["inner_iterations"] += int(res.nit)
        info["rounds"] = round_idx + 1
        violation = constraints.violations(geometry_of(x))
        if violation <= 1e-9 and round_idx >= 1:
            break
        rho *= 10.0

    geom = geometry_of(x)
    cost = float(cost_fn(geom))
    violation = constraints.violations(geom)
    # an already-feasible starting point is a floor: never return worse
    if math.isfinite(base) and init_violation <= max(violation, 1e-9) \
            and base <= cost:
        geom, cost, violation = init_geom, float(base), init_violation
    info["ring_violation"] = violation
    return geom, cost, info


# ---------------------------------------------------------------------------
# CRLB-trace placement objective and the restart loop
# ---------------------------------------------------------------------------

def placement_cost(scenario):
    """Trace of the Cartesian-state CRLB for the scenario's geometry."""
    report = state_fim_and_crlb(scenario)
    return report.metrics["trace"]


def local_optimize(scenario, init, cfg=None, objective=None):
    """Local CRLB-trace minimization from ``init``.

    Returns (geometry, cost, info); cost is +inf when every probe left the
    information matrix singular. A prebuilt :class:`StateCrlbObjective`
    may be passed to amortize the target-side precomputation.
    """
    cfg = cfg or SamplerConfig()
    cost = objective if objective is not None \
        else StateCrlbObjective(scenario, ridge=True)
    return minimize_geometry(cost, init, scenario.constraints,
                             scenario.radar.wavelength, cfg)


def _stacked_ring_bounds(mode, num_tx, i, j, constraints):
    """Ring bounds between stacked antennas i and j, or None when the pair
    is unconstrained (same-type antennas in separate mode, self-pairs)."""
    if mode == TRANSCEIVER:
        if i == j:
            return None
        lo1, hi1 = constraints.bounds_for(i, j)
        lo2, hi2 = constraints.bounds_for(j, i)
        return max(lo1, lo2), min(hi1, hi2)
    i_tx, j_tx = i < num_tx, j < num_tx
    if i_tx == j_tx:
        return None
    m = i if i_tx else j
    n = (j if i_tx else i) - num_tx
    return constraints.bounds_for(n, m)


def random_feasible_geometry(rng, mode, num_tx, num_rx, constraints,
                             attempts=500, tries_per_antenna=5000):
    """Sample a ring-feasible geometry: antennas placed one at a time
    uniformly in the e-disk around the first, rejecting candidates that
    break a ring; the set is re-centered afterwards (a common shift leaves
    every pairwise distance unchanged)."""
    rng = rng if isinstance(rng, np.random.Generator) \
        else np.random.default_rng(rng)
    count = num_tx if mode == TRANSCEIVER else num_tx + num_rx
    radius = constraints.e
    for _ in range(attempts):
        pts = [np.zeros(2)]
        stuck = False
        for i in range(1, count):
            for _ in range(tries_per_antenna):
                rho = radius * math.sqrt(rng.uniform())
                ang = rng.uniform(0.0, 2.0 * math.pi)
                cand = pts[0] + rho * np.array([math.cos(ang),
                                                math.sin(ang)])
                ok = True
                for j in range(i):
                    ring = _stacked_ring_bounds(mode, num_tx, i, j,
                                                constraints)
                    if ring is None:
                        continue
                    dist = float(np.linalg.norm(cand - pts[j]))
                    if not ring[0] <= dist <= ring[1]:
                        ok = False
                        break
                if ok:
                    pts.append(cand)
                    break
            else:
                stuck = True
                break
        if stuck:
            continue
        stacked = np.vstack(pts)
        stacked = stacked - stacked.mean(axis=0)
        geom = _geometry_from_points(stacked, mode, num_tx, num_rx)
        if constraints.violations(geom) == 0.0:
            return geom
    raise AllRestartsFailed("could not sample a ring-feasible geometry")


def sample_restart_optimize(scenario, cfg=None, init=None):
    """Gaussian-restart multistart minimization of the CRLB trace.

    One local solve from ``init`` (or a random feasible geometry) seeds the
    incumbent; each restart perturbs the incumbent positions with
    N(0, q_std^2 I) noise per antenna, re-optimizes locally, and accepts
    whenever the cost ratio to the incumbent is <= 1 (plateau moves kept).
    The loop stops after ``restarts`` perturbations or ``patience``
    consecutive rejections, whichever comes first.

    Returns (MultistartResult, OptimizerTrace); the best-so-far sequence in
    the trace is non-increasing by construction.
    """
    cfg = cfg or SamplerConfig()
    rng = np.random.default_rng(cfg.seed)
    trace = OptimizerTrace()
    arr = scenario.array
    objective = StateCrlbObjective(scenario, ridge=True)

    if init is None:
        init = random_feasible_geometry(rng, arr.mode, arr.num_tx,
                                        arr.num_rx, scenario.constraints)
    best_geom, best_cost, info = local_optimize(scenario, init, cfg,
                                                objective)
    trace.records.append(RestartRecord(0, best_cost, True,
                                       info["inner_iterations"]))
    trace.best_costs.append(best_cost)
    if not math.isfinite(best_cost):
        raise AllRestartsFailed("initial local solve failed")

    accepted = 1
    stall = 0
    restarts_run = 0
    for u in range(1, cfg.restarts + 1):
        restarts_run = u
        noise_tx = rng.normal(scale=cfg.q_std, size=best_geom.tx.shape)
        if best_geom.mode == TRANSCEIVER:
            perturbed = ArrayGeometry.transceiver(best_geom.tx + noise_tx)
        else:
            noise_rx = rng.normal(scale=cfg.q_std, size=best_geom.rx.shape)
            perturbed = ArrayGeometry(best_geom.tx + noise_tx,
                                      best_geom.rx + noise_rx, SEPARATE)
        geom, cost, info = local_optimize(scenario, perturbed, cfg,
                                          objective)
        improved = math.isfinite(cost) and cost / best_cost <= 1.0
        trace.records.append(RestartRecord(u, cost, improved,
                                           info["inner_iterations"]))
        if improved:
            best_geom, best_cost = geom, cost
            accepted += 1
            stall = 0
        else:
            stall += 1
        trace.best_costs.append(best_cost)
        if stall >= cfg.patience:
            break

    result = MultistartResult(geometry=best_geom, cost=best_cost,
                              restarts_run=restarts_run, accepted=accepted,
                              status="ok")
    return result, trace


def omega_separation_interval(dtheta, d, e, wavelength):
    """Bearing-separation interval for the per-path phase difference of two
    same-cell targets: (2 pi / lambda) * {d, e} * sqrt(2 (1 - cos dtheta)).
    """
    if not 0 < d <= e:
        raise ValueError("need 0 < d <= e")
    scale = (2.0 * np.pi / wavelength) * math.sqrt(
        max(0.0, 2.0 * (1.0 - math.cos(dtheta))))
    return d * scale, e * scale
