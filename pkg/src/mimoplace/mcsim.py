"""Monte-Carlo localization: ML estimation, RMSE-vs-CRLB experiments, and
CRLB sweeps over geometry families.

The estimator concentrates the likelihood: the mean response is linear in
the per-target amplitude pairs, so for candidate bearings/ratios the
amplitudes are solved by generalized least squares and only the reduced
(theta, beta) surface is searched. Single-target scenarios use a dense
vectorized grid plus a golden-section polish; multi-target scenarios run
cyclic coordinate ascent from a perturbed-truth initialization (an
idealization, declared openly, since geometry comparisons share it).

SNR convention: SNR(dB) = 10 log10(K (xi^2 + zeta^2) / sigma2_w) per
target (matched-filter output energy over the noise floor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GridTooCoarse, SingularFim
from .fim import state_fim_and_crlb
from .placement import (SamplerConfig, random_feasible_geometry,
                        sample_restart_optimize)
from .scenario import (SEPARATE, TRANSCEIVER, ArrayGeometry,
                       cartesian_from_params)
from .sdp import optimize_single_target
from .signal_model import (TWO_PI, covariance, mean_response, omega_matrix,
                           sample_measurement)


# ---------------------------------------------------------------------------
# geometry baselines
# ---------------------------------------------------------------------------

def ula_geometry(count, wavelength, mode=TRANSCEIVER, num_tx=None):
    """Half-wavelength uniform linear array along x, zero centroid.

    In separate mode the first ``num_tx`` elements transmit and the rest
    receive.
    """
    offsets = (np.arange(count) - (count - 1) / 2.0) * (wavelength / 2.0)
    pts = np.column_stack([offsets, np.zeros(count)])
    if mode == TRANSCEIVER:
        return ArrayGeometry.transceiver(pts)
    if num_tx is None or not 0 < num_tx < count:
        raise ValueError("separate ULA needs 0 < num_tx < count")
    return ArrayGeometry(pts[:num_tx], pts[num_tx:], SEPARATE)


def scaled_ula_scenario(scenario, spacing):
    """Scenario with its array replaced by a ULA at the given adjacent
    spacing (same antenna count and mode)."""
    arr = scenario.array
    count = arr.num_tx if arr.mode == TRANSCEIVER else arr.num_tx + arr.num_rx
    offsets = (np.arange(count) - (count - 1) / 2.0) * spacing
    pts = np.column_stack([offsets, np.zeros(count)])
    if arr.mode == TRANSCEIVER:
        geom = ArrayGeometry.transceiver(pts)
    else:
        geom = ArrayGeometry(pts[:arr.num_tx], pts[arr.num_tx:], SEPARATE)
    return scenario.with_geometry(geom)


def optimal_geometry(scenario, seed=0, sampler=None, sdp_tol=1e-8):
    """Best-known placement for the scenario's target set.

    Single-target transceiver scenarios go through the convex relaxation
    and its polish; everything else runs the restart optimizer on the
    CRLB trace.
    """
    arr = scenario.array
    if scenario.num_targets == 1 and arr.mode == TRANSCEIVER:
        sol = optimize_single_target(scenario.targets[0], arr.num_tx,
                                     arr.num_rx, arr.mode,
                                     scenario.constraints, tol=sdp_tol,
                                     seed=seed)
        return sol.geometry
    cfg = sampler or SamplerConfig(restarts=20, patience=8, seed=seed)
    result, _ = sample_restart_optimize(scenario, cfg)
    return result.geometry


# ---------------------------------------------------------------------------
# SNR handling
# ---------------------------------------------------------------------------

def target_snr_db(target, radar):
    energy = radar.snapshots * (target.xi ** 2 + target.zeta ** 2)
    return 10.0 * math.log10(energy / radar.noise_var)


def scale_to_snr(scenario, snr_db):
    """Rescale every target's amplitude pair (phase preserved) so each one
    sits at the requested per-target SNR."""
    radar = scenario.radar
    want = radar.noise_var * 10.0 ** (snr_db / 10.0) / radar.snapshots
    new = []
    for t in scenario.targets:
        cur = t.xi ** 2 + t.zeta ** 2
        if cur <= 0:
            raise ValueError("cannot scale a zero-amplitude target")
        g = math.sqrt(want / cur)
        new.append(replace(t, xi=g * t.xi, zeta=g * t.zeta))
    return scenario.with_targets(new)


# ---------------------------------------------------------------------------
# concentrated likelihood
# ---------------------------------------------------------------------------

def _amplitude_basis(scenario):
    """Mean-response columns for unit amplitudes, two per target."""
    cols = []
    for t in range(scenario.num_targets):
        for xi, zeta in ((1.0, 0.0), (0.0, 1.0)):
            probe = [replace(tgt, xi=xi if i == t else 0.0,
                             zeta=zeta if i == t else 0.0)
                     for i, tgt in enumerate(scenario.targets)]
            cols.append(mean_response(scenario.with_targets(probe)))
    return np.column_stack(cols)


def concentrated_loglik(scenario, rho):
    """Max over amplitudes of the exact log-likelihood at the scenario's
    (theta, beta) values; returns (loglik, amplitude_estimates (T, 2))."""
    model = covariance(scenario)
    basis = _amplitude_basis(scenario)
    n_bins = model.factor.shape[0]

    def apply_inv(mat):
        shaped = mat.T.reshape(-1, n_bins, model.block_dim)
        out = np.einsum("bc,kcd->kbd", np.linalg.inv(model.factor), shaped)
        return out.reshape(mat.shape[1], -1).T

    winv_basis = apply_inv(basis)
    gram = basis.T @ winv_basis
    rhs = winv_basis.T @ rho
    amps = np.linalg.solve(gram, rhs)
    resid = rho - basis @ amps
    quad = model.solve_quadratic(resid)
    ll = -0.5 * (quad + model.logdet() + model.dim * np.log(TWO_PI))
    return ll, amps.reshape(-1, 2)


class _LikelihoodEvaluator:
    """Fast concentrated log-likelihood over candidate (theta, beta) sets.

    Exploits Sigma = factor (x) I and the bin/path separability of the
    amplitude basis: the GLS gram is an elementwise product of a tiny
    inverse-factor bilinear table and per-path trig sums, so one
    evaluation costs a handful of small-matrix operations. Agrees with
    :func:`concentrated_loglik` to floating-point accuracy.
    """

    def __init__(self, scenario, rho):
        self.scenario = scenario
        radar = scenario.radar
        self.omega = omega_matrix(scenario.array, radar)
        self.paths = self.omega.shape[1]
        self.bins = scenario.bins()
        self.rows = {b: i for i, b in enumerate(self.bins)}
        self.n_bins = len(self.bins)
        self.cells = [t.cell for t in scenario.targets]
        self.rate = TWO_PI / radar.wavelength
        self.root_k = math.sqrt(radar.snapshots)
        self.ksa = radar.snapshots * radar.scatter_var
        self.noise = radar.noise_var
        blocks = np.asarray(rho).reshape(self.n_bins, 2 * self.paths)
        self.re = blocks[:, :self.paths]
        self.im = blocks[:, self.paths:]
        self.gram_rho = blocks @ blocks.T
        self.dim = 2 * self.paths * self.n_bins

    def _factor(self, betas):
        factor = self.noise * np.eye(self.n_bins)
        for cell, beta in zip(self.cells, betas):
            if cell in self.rows:
                i = self.rows[cell]
                factor[i, i] += self.ksa * beta ** 2
            if cell - 1 in self.rows:
                i = self.rows[cell - 1]
                factor[i, i] += self.ksa * (1.0 - beta) ** 2
            if cell in self.rows and cell - 1 in self.rows:
                cr = self.ksa * (1.0 - beta) * beta
                factor[self.rows[cell], self.rows[cell - 1]] += cr
                factor[self.rows[cell - 1], self.rows[cell]] += cr
        return factor

    def loglik(self, thetas, betas, want_amps=False):
        thetas = np.asarray(thetas, dtype=float)
        betas = np.asarray(betas, dtype=float)
        n_t = thetas.size
        factor = self._factor(betas)
        kinv = np.linalg.inv(factor)
        sign, ld = np.linalg.slogdet(factor)
        logdet = 2 * self.paths * ld

        # bin weight vectors, one per target
        weights = np.zeros((n_t, self.n_bins))
        for t, (cell, beta) in enumerate(zip(self.cells, betas)):
            if cell in self.rows:
                weights[t, self.rows[cell]] = beta
            if cell - 1 in self.rows:
                weights[t, self.rows[cell - 1]] = 1.0 - beta
        binco = weights @ kinv @ weights.T         # (T, T)

        args = self.rate * (np.outer(np.sin(thetas), self.omega[0])
                            + np.outer(np.cos(thetas), self.omega[1]))
        cosw, sinw = np.cos(args), np.sin(args)
        k_snap = self.root_k ** 2
        # pathwise products: cc[a,b] = K sum_l cos(w_a - w_b), etc.
        cos_cross = k_snap * (cosw @ cosw.T + sinw @ sinw.T)
        sin_cross = k_snap * (sinw @ cosw.T - cosw @ sinw.T)

        gram = np.empty((2 * n_t, 2 * n_t))
        gram[0::2, 0::2] = binco * cos_cross
        gram[1::2, 1::2] = binco * cos_cross
        gram[0::2, 1::2] = binco * sin_cross
        gram[1::2, 0::2] = binco * (-sin_cross)

        q1 = self.root_k * (cosw @ self.re.T + sinw @ self.im.T)  # (T, nb)
        q2 = self.root_k * (-sinw @ self.re.T + cosw @ self.im.T)
        wk = weights @ kinv                                       # (T, nb)
        rhs = np.empty(2 * n_t)
        rhs[0::2] = np.sum(wk * q1, axis=1)
        rhs[1::2] = np.sum(wk * q2, axis=1)

        amps = np.linalg.solve(gram, rhs)
        quad = float(np.sum(kinv * self.gram_rho)) - float(rhs @ amps)
        ll = -0.5 * (quad + logdet + self.dim * np.log(TWO_PI))
        if want_amps:
            return ll, amps.reshape(-1, 2)
        return ll


def _golden_min(fn, lo, hi, iters=40):
    """Plain golden-section minimization on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


@dataclass(frozen=True)
class MlGrid:
    """Grid resolution and bearing sector for the likelihood search.

    A purely linear array cannot distinguish a bearing from its mirror
    across the array axis (the stacked responses coincide exactly), so
    searches over the full circle flip a coin between two equal peaks.
    ``theta_center`` / ``theta_width`` restrict the search to a
    surveillance sector; the RMSE experiment uses a quarter-circle around
    the surveyed bearing, shared by every geometry under comparison.
    """

    theta_step_deg: float = 0.2
    beta_step: float = 0.01
    refine_iters: int = 48
    theta_center: float = 0.0
    theta_width: float = 2.0 * math.pi

    def theta_grid(self):
        step = math.radians(self.theta_step_deg)
        count = max(1, int(round(self.theta_width / step)))
        start = self.theta_center - self.theta_width / 2.0
        return start + step * (np.arange(count) + 0.5)


@dataclass
class EstimationResult:
    snr_db: float
    geometry: str
    estimates: np.ndarray     # (trials, T, 4): x, y, xi, zeta
    rmse: np.ndarray          # (T,) position RMSE (m)
    crlb: np.ndarray          # (T,) sqrt position-CRLB trace (m)
    trials: int
    failures: int

    def rmse_standard_error(self):
        """Large-sample standard error of the reported RMSE values."""
        return self.rmse / math.sqrt(max(2.0 * self.trials, 1.0))


def _single_target_grid_search(scenario, rho, grid):
    """Vectorized concentrated-likelihood scan over (theta, beta)."""
    radar = scenario.radar
    target = scenario.targets[0]
    omega = omega_matrix(scenario.array, radar)
    paths = omega.shape[1]
    bins = scenario.bins()
    n_bins = len(bins)
    rows = {b: i for i, b in enumerate(bins)}
    root_k = math.sqrt(radar.snapshots)

    thetas = grid.theta_grid()
    betas = np.arange(grid.beta_step / 2.0, 1.0, grid.beta_step)

    blocks = np.asarray(rho).reshape(n_bins, 2 * paths)
    re_part, im_part = blocks[:, :paths], blocks[:, paths:]

    args = (TWO_PI / radar.wavelength) * (
        np.outer(np.sin(thetas), omega[0]) + np.outer(np.cos(thetas),
                                                      omega[1]))
    cosw, sinw = np.cos(args), np.sin(args)
    # projections of rho onto the two unit-amplitude basis columns, per bin
    q1 = root_k * (cosw @ re_part.T + sinw @ im_part.T)   # (n_theta, n_bins)
    q2 = root_k * (-sinw @ re_part.T + cosw @ im_part.T)

    ksa = radar.snapshots * radar.scatter_var
    cell = target.cell
    gram_rho = blocks @ blocks.T
    n_beta = betas.size
    a_rows = np.zeros((n_beta, n_bins))
    quad_const = np.empty(n_beta)
    logdet = np.empty(n_beta)
    fnorm = np.empty(n_beta)
    for i, beta in enumerate(betas):
        w = np.zeros(n_bins)
        if cell in rows:
            w[rows[cell]] = beta
        if cell - 1 in rows:
            w[rows[cell - 1]] = 1.0 - beta
        factor = radar.noise_var * np.eye(n_bins)
        if cell in rows:
            factor[rows[cell], rows[cell]] += ksa * beta ** 2
        if cell - 1 in rows:
            factor[rows[cell - 1], rows[cell - 1]] += ksa * (1 - beta) ** 2
        if cell in rows and cell - 1 in rows:
            cr = ksa * (1 - beta) * beta
            factor[rows[cell], rows[cell - 1]] += cr
            factor[rows[cell - 1], rows[cell]] += cr
        kinv = np.linalg.inv(factor)
        a_rows[i] = w @ kinv
        quad_const[i] = float(np.sum(kinv * gram_rho))
        sign, ld = np.linalg.slogdet(factor)
        logdet[i] = 2 * paths * ld
        fnorm[i] = float(w @ kinv @ w) * radar.snapshots * paths

    m1 = q1 @ a_rows.T    # (n_theta, n_beta)
    m2 = q2 @ a_rows.T
    score = (m1 ** 2 + m2 ** 2) / fnorm
    loglik = -0.5 * (quad_const[None, :] - score + logdet[None, :]
                     + 2 * paths * n_bins * np.log(TWO_PI))
    it, ib = np.unravel_index(np.argmax(loglik), loglik.shape)
    return float(thetas[it]), float(betas[ib]), grid.theta_step_deg \
        * np.pi / 180.0, grid.beta_step


def _estimate_single(scenario, rho, grid):
    theta0, beta0, theta_step, beta_step = _single_target_grid_search(
        scenario, rho, grid)
    target = scenario.targets[0]
    ev = _LikelihoodEvaluator(scenario, rho)

    def neg_ll(theta, beta):
        return -ev.loglik([theta], [min(max(beta, 1e-9), 1.0)])

    theta = _golden_min(lambda th: neg_ll(th, beta0),
                        theta0 - 1.25 * theta_step,
                        theta0 + 1.25 * theta_step, grid.refine_iters)
    beta = _golden_min(lambda be: neg_ll(theta, be),
                       max(beta0 - 1.25 * beta_step, 1e-9),
                       min(beta0 + 1.25 * beta_step, 1.0), grid.refine_iters)
    if abs(theta - theta0) > theta_step or abs(beta - beta0) > beta_step:
        raise GridTooCoarse("refinement left the best grid cell")
    _, amps = ev.loglik([theta], [beta], want_amps=True)
    est = replace(target, theta=theta, beta=beta,
                  xi=float(amps[0, 0]), zeta=float(amps[0, 1]))
    return [est]


def _estimate_multi(scenario, rho, grid, rng, max_sweeps=60, tol=1e-9):
    radar = scenario.radar
    ev = _LikelihoodEvaluator(scenario, rho)
    thetas = np.empty(scenario.num_targets)
    betas = np.empty(scenario.num_targets)
    # perturbed-truth initialization in Cartesian coordinates
    for i, t in enumerate(scenario.targets):
        xy = cartesian_from_params(t, radar) \
            + rng.normal(scale=radar.bin_width / 10.0, size=2)
        thetas[i] = math.atan2(xy[1], xy[0])
        r = float(np.hypot(*xy))
        betas[i] = min(max(r / radar.bin_width - (t.cell - 1), 0.02), 1.0)

    last = ev.loglik(thetas, betas)
    theta_half = math.radians(1.0)
    beta_half = 0.05
    iters = max(grid.refine_iters // 2, 18)
    for _ in range(max_sweeps):
        for i in range(thetas.size):
            def neg_theta(th, i=i):
                probe = thetas.copy()
                probe[i] = th
                return -ev.loglik(probe, betas)

            thetas[i] = _golden_min(neg_theta, thetas[i] - theta_half,
                                    thetas[i] + theta_half, iters)

            def neg_beta(be, i=i):
                probe = betas.copy()
                probe[i] = be
                return -ev.loglik(thetas, probe)

            betas[i] = _golden_min(neg_beta, max(betas[i] - beta_half, 1e-9),
                                   min(betas[i] + beta_half, 1.0), iters)
        ll = ev.loglik(thetas, betas)
        if abs(ll - last) < tol:
            break
        last = ll
    _, amps = ev.loglik(thetas, betas, want_amps=True)
    return [replace(t, theta=float(th), beta=float(be),
                    xi=float(a[0]), zeta=float(a[1]))
            for t, th, be, a in zip(scenario.targets, thetas, betas, amps)]


def ml_estimate(rho, scenario, grid=None, rng=None):
    """Maximum-likelihood target estimates from one stacked measurement.

    The estimator knows the target count and cell occupancy. Returns a
    list of TargetParams (cell-major, matching the scenario order).
    """
    grid = grid or MlGrid()
    if scenario.num_targets == 1:
        return _estimate_single(scenario, rho, grid)
    if rng is None:
        rng = np.random.default_rng(0)
    return _estimate_multi(scenario, rho, grid, rng)


# ---------------------------------------------------------------------------
# RMSE experiment
# ---------------------------------------------------------------------------

def rmse_experiment(scenario, snr_grid_db, trials, seed, grid=None,
                    label="scenario"):
    """Sample -> estimate -> aggregate loop over an SNR grid.

    Per SNR point the target amplitudes are rescaled to the grid value,
    ``trials`` independent measurements are drawn with counter-derived
    seeds, and per-target position RMSE plus the CRLB reference (sqrt of
    the 2x2 position-block trace) are reported. Estimator failures are
    counted, not silently dropped.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if grid is None:
        # surveillance-sector prior around the surveyed bearing (see MlGrid)
        grid = MlGrid(theta_center=scenario.targets[0].theta,
                      theta_width=math.pi / 2.0)
    results = []
    for k, snr in enumerate(snr_grid_db):
        scaled = scale_to_snr(scenario, snr)
        # flagged ridge: a barely-resolvable target set (e.g. many targets
        # on a short ULA) still gets a finite, conservative reference
        report = state_fim_and_crlb(scaled, ridge=True)
        crlb = np.array([report.position_bound(t)
                         for t in range(scaled.num_targets)])
        truth = np.array([cartesian_from_params(t, scaled.radar)
                          for t in scaled.targets])
        estimates = np.full((trials, scaled.num_targets, 4), np.nan)
        sq_err = np.zeros(scaled.num_targets)
        good = 0
        failures = 0
        for trial in range(trials):
            rng = np.random.default_rng([seed, k, trial])
            rho = sample_measurement(scaled, rng)
            try:
                ests = ml_estimate(rho, scaled, grid, rng)
            except GridTooCoarse:
                failures += 1
                continue
            for t, est in enumerate(ests):
                xy = cartesian_from_params(est, scaled.radar)
                estimates[trial, t] = [xy[0], xy[1], est.xi, est.zeta]
                sq_err[t] += float(np.sum((xy - truth[t]) ** 2))
            good += 1
        rmse = np.sqrt(sq_err / max(good, 1))
        results.append(EstimationResult(snr_db=float(snr), geometry=label,
                                        estimates=estimates, rmse=rmse,
                                        crlb=crlb, trials=good,
                                        failures=failures))
    return results


# ---------------------------------------------------------------------------
# CRLB sweeps
# ---------------------------------------------------------------------------

SWEEP_AXES = ("spacing", "dtheta", "antenna_count", "target_count")


def _resolve_geometry(name, scenario, seed, sampler):
    if name == "ula":
        arr = scenario.array
        count = arr.num_tx if arr.mode == TRANSCEIVER \
            else arr.num_tx + arr.num_rx
        return ula_geometry(count, scenario.radar.wavelength, arr.mode,
                            None if arr.mode == TRANSCEIVER else arr.num_tx)
    if name == "optimal":
        return optimal_geometry(scenario, seed=seed, sampler=sampler)
    if name == "random":
        rng = np.random.default_rng([seed, 0xFEED])
        arr = scenario.array
        return random_feasible_geometry(rng, arr.mode, arr.num_tx,
                                        arr.num_rx, scenario.constraints)
    raise ValueError(f"unknown geometry label {name!r}")


def _sweep_scenario(base, axis, value, spread=np.pi / 3):
    if axis == "spacing":
        return scaled_ula_scenario(base, value)
    if axis == "dtheta":
        if base.num_targets < 2:
            raise ValueError("dtheta axis needs at least two targets")
        t0 = base.targets[0]
        new = [t0] + [replace(t, theta=t0.theta + value * (i + 1)
                              / (base.num_targets - 1))
                      for i, t in enumerate(base.targets[1:])]
        return base.with_targets(new)
    if axis == "antenna_count":
        count = int(value)
        arr = base.array
        geom = ula_geometry(count, base.radar.wavelength, arr.mode,
                            None if arr.mode == TRANSCEIVER
                            else max(1, count // 2))
        radar = base.radar.with_powers(
            (base.radar.powers[0],) * (count if arr.mode == TRANSCEIVER
                                       else max(1, count // 2)))
        return replace(base.with_geometry(geom), radar=radar)
    if axis == "target_count":
        count = int(value)
        t0 = base.targets[0]
        bearings = t0.theta + np.linspace(-spread / 2, spread / 2, count) \
            if count > 1 else [t0.theta]
        ratios = np.linspace(0.2, 0.8, count) if count > 1 else [t0.beta]
        new = [replace(t0, theta=float(th), beta=float(be))
               for th, be in zip(bearings, ratios)]
        return base.with_targets(new)
    raise ValueError(f"unknown sweep axis {axis!r}")


def crlb_sweep(base, axis, values, geometries=("ula",), seed=0,
               sampler=None):
    """One row per (sweep value, geometry) with CRLB scalar metrics.

    For the spacing axis the swept object is the array itself (a ULA at
    the given adjacent spacing), so the geometry list is ignored there.
    """
    rows = []
    for value in values:
        scen = _sweep_scenario(base, axis, value)
        if axis == "spacing":
            resolved = [("ula", scen.array)]
        else:
            resolved = [(name, _resolve_geometry(name, scen, seed, sampler))
                        for name in geometries]
        for name, geom in resolved:
            probe = scen.with_geometry(geom)
            try:
                metrics = state_fim_and_crlb(probe).metrics
                rows.append({"axis_value": float(value), "geometry": name,
                             "trace": metrics["trace"],
                             "det": metrics["det"],
                             "max_eig": metrics["max_eig"]})
            except SingularFim:
                rows.append({"axis_value": float(value), "geometry": name,
                             "trace": math.inf, "det": math.inf,
                             "max_eig": math.inf})
    return rows
