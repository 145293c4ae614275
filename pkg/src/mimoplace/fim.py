"""Closed-form Fisher information, CRLB assembly, and a finite-difference
oracle.

Parameter stacking is cell-major with (theta, beta, xi, zeta) per target;
the Cartesian state stacks (x, y, xi, zeta) in the same target order. The
closed forms exploit that Sigma = S (x) I, so every information entry
separates into a bin coefficient (a bilinear form in S^{-1}) times a path
sum. With the complex per-path generators

    G_theta = j (2 pi / lambda) h(l) phi_bar(l),   G_beta = phi_bar(l),
    G_xi    = sqrt(K) exp(j omega(l)),             G_zeta = j G_xi,

the mean-term entry between parameter u of target a and parameter v of
target b is  binco(u, v) * Re(sum_l conj(G_u,a) G_v,b),  where binco is
the S^{-1} bilinear form over the bins the two targets occupy. The
covariance of the stacked output depends on the beta ratios only, so the
trace term contributes solely to beta-beta entries (function F below).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularFim
from .scenario import target_range
from .signal_model import (TWO_PI, covariance, mean_response, omega_matrix,
                           steering_workspace)

COND_LIMIT = 1e12


@dataclass(frozen=True)
class PairCoefficients:
    """Amplitude products and inverse-covariance weights for a target pair."""

    kappa: float
    iota: float
    c_theta_theta: float
    c_beta_beta: float
    c_theta_beta: float
    c_beta_theta: float


@dataclass(frozen=True)
class FimReport:
    parameter_fim: np.ndarray   # (4T, 4T)
    system_matrix: np.ndarray   # (4T, 4T) block diagonal
    state_fim: np.ndarray       # (4T, 4T)
    crlb: np.ndarray            # (4T, 4T)
    metrics: dict               # trace, det, max_eig, cond
    ridged: bool = False

    def position_block(self, t):
        """2x2 Cartesian position CRLB of target t."""
        i = 4 * t
        return self.crlb[i:i + 2, i:i + 2]

    def position_bound(self, t):
        """sqrt of the position CRLB trace (meters)."""
        return float(np.sqrt(np.trace(self.position_block(t))))


class _Workspace:
    """Steering/covariance quantities shared by all pair blocks."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.steering = steering_workspace(scenario)
        self.model = covariance(scenario)
        self.kinv = np.linalg.inv(self.model.factor)
        self.rows = {b: i for i, b in enumerate(self.model.bins)}
        radar = scenario.radar
        targets = scenario.targets
        rate = TWO_PI / radar.wavelength
        # complex generators, one (4, MN) stack per target
        self.gens = []
        self.binvecs = []
        for t, target in enumerate(targets):
            psi = self.steering.psi[t]
            phi = (target.xi + 1j * target.zeta) * psi
            g = np.vstack([
                1j * rate * self.steering.hs[t] * phi,   # theta
                phi,                                     # beta
                psi,                                     # xi
                1j * psi,                                # zeta
            ])
            self.gens.append(g)
            breve = self.steering.beta_breves[t]
            self.binvecs.append({
                "theta": breve, "beta": np.array([-1.0, 1.0]),
                "xi": breve, "zeta": breve,
            })

    def bin_weight_matrix(self, a, b):
        """S^{-1} window over the bins touched by targets a and b.

        Rows follow target a's (cell-1, cell) bins, columns target b's;
        entries for bins absent from the measurement are zero (those mean
        components are not observed).
        """
        ta = self.scenario.targets[a]
        tb = self.scenario.targets[b]
        out = np.zeros((2, 2))
        for i, bi in enumerate((ta.cell - 1, ta.cell)):
            for j, bj in enumerate((tb.cell - 1, tb.cell)):
                if bi in self.rows and bj in self.rows:
                    out[i, j] = self.kinv[self.rows[bi], self.rows[bj]]
        return out

    def beta_derivative_of_factor(self, t):
        """Analytic d(factor)/d(beta_t); sparse in the bins of target t."""
        target = self.scenario.targets[t]
        ksa = self.scenario.radar.snapshots * self.scenario.radar.scatter_var
        n = self.model.factor.shape[0]
        d = np.zeros((n, n))
        c, beta = target.cell, target.beta
        if c in self.rows:
            d[self.rows[c], self.rows[c]] = 2.0 * ksa * beta
        if c - 1 in self.rows:
            d[self.rows[c - 1], self.rows[c - 1]] = -2.0 * ksa * (1.0 - beta)
        if c in self.rows and c - 1 in self.rows:
            cross = ksa * (1.0 - 2.0 * beta)
            d[self.rows[c], self.rows[c - 1]] = cross
            d[self.rows[c - 1], self.rows[c]] = cross
        return d

    def beta_beta_trace_term(self, a, b):
        """(1/2) tr(Sigma^-1 dSigma/db_a Sigma^-1 dSigma/db_b); the 2MN
        block multiplicity folds the 1/2 into MN."""
        da = self.kinv @ self.beta_derivative_of_factor(a)
        db = self.kinv @ self.beta_derivative_of_factor(b)
        paths = self.steering.num_paths
        return paths * float(np.sum(da * db.T))


_PARAM_ORDER = ("theta", "beta", "xi", "zeta")


def pair_coefficients(scenario, a, b, workspace=None):
    """kappa, iota and the four inverse-covariance bin coefficients for
    targets a, b (indices into the cell-major target list)."""
    ws = workspace if workspace is not None else _Workspace(scenario)
    ta, tb = scenario.targets[a], scenario.targets[b]
    kw = ws.bin_weight_matrix(a, b)
    breve_a = ws.binvecs[a]["theta"]
    breve_b = ws.binvecs[b]["theta"]
    diff = np.array([-1.0, 1.0])
    return PairCoefficients(
        kappa=ta.xi * tb.xi + ta.zeta * tb.zeta,
        iota=ta.xi * tb.zeta - ta.zeta * tb.xi,
        c_theta_theta=float(breve_a @ kw @ breve_b),
        c_beta_beta=float(diff @ kw @ diff),
        c_theta_beta=float(breve_a @ kw @ diff),
        c_beta_theta=float(diff @ kw @ breve_b),
    )


def pair_fim_block(scenario, a, b, workspace=None):
    """4x4 information block between targets a and b.

    Zero when the targets sit more than one cell apart (the assembled
    matrix is block tridiagonal in the cell index).
    """
    ta, tb = scenario.targets[a], scenario.targets[b]
    if abs(ta.cell - tb.cell) > 1:
        return np.zeros((4, 4))
    ws = workspace if workspace is not None else _Workspace(scenario)
    kw = ws.bin_weight_matrix(a, b)
    bva = np.vstack([ws.binvecs[a][p] for p in _PARAM_ORDER])
    bvb = np.vstack([ws.binvecs[b][p] for p in _PARAM_ORDER])
    binco = bva @ kw @ bvb.T
    pathsum = np.real(np.conj(ws.gens[a]) @ ws.gens[b].T)
    block = binco * pathsum
    block[1, 1] += ws.beta_beta_trace_term(a, b)
    return block


def assemble_parameter_fim(scenario, workspace=None):
    """Full parameter-space information matrix (4T x 4T), symmetric, block
    tridiagonal in the cell index."""
    n = scenario.num_targets
    if n == 0:
        raise ValueError("scenario has no targets")
    ws = workspace if workspace is not None else _Workspace(scenario)
    out = np.zeros((4 * n, 4 * n))
    for a in range(n):
        for b in range(a, n):
            block = pair_fim_block(scenario, a, b, ws)
            if a == b:
                block = 0.5 * (block + block.T)   # exact symmetry
            out[4 * a:4 * a + 4, 4 * b:4 * b + 4] = block
            if a != b:
                out[4 * b:4 * b + 4, 4 * a:4 * a + 4] = block.T
    return out


def gamma_block(target, radar):
    """4x4 Jacobian block mapping (x, y, xi, zeta) rows to
    (theta, beta, xi, zeta) columns."""
    r = target_range(target, radar)
    if r <= 0:
        raise ValueError("target range must be positive for the state map")
    x = r * np.cos(target.theta)
    y = r * np.sin(target.theta)
    g = np.eye(4)
    g[0, 0] = -y / r ** 2                 # d theta / d x
    g[1, 0] = x / r ** 2                  # d theta / d y
    g[0, 1] = x / (r * radar.bin_width)   # d beta / d x
    g[1, 1] = y / (r * radar.bin_width)   # d beta / d y
    return g


def system_matrix(scenario):
    """Block-diagonal Jacobian of the parameter vector w.r.t. the state."""
    n = scenario.num_targets
    out = np.zeros((4 * n, 4 * n))
    for t, target in enumerate(scenario.targets):
        out[4 * t:4 * t + 4, 4 * t:4 * t + 4] = gamma_block(target,
                                                            scenario.radar)
    return out


def state_fim_and_crlb(scenario, ridge=False):
    """Chain-rule state FIM, its inverse and scalar metrics.

    Raises SingularFim when the state FIM condition number exceeds 1e12,
    unless ``ridge`` is set, in which case a flagged diagonal loading of
    1e-10 * trace/dim is applied (used by optimizer line searches).
    """
    j_param = assemble_parameter_fim(scenario)
    gamma = system_matrix(scenario)
    j_state = gamma @ j_param @ gamma.T
    j_state = 0.5 * (j_state + j_state.T)
    eigs = np.linalg.eigvalsh(j_state)
    eig_min, eig_max = float(eigs[0]), float(eigs[-1])
    cond = np.inf if eig_min <= 0 else eig_max / eig_min
    ridged = False
    if cond > COND_LIMIT:
        if not ridge:
            raise SingularFim(
                f"state FIM condition {cond:.3e} exceeds {COND_LIMIT:.0e} "
                f"(eigenvalues in [{eig_min:.3e}, {eig_max:.3e}])",
                cond=cond, eig_min=eig_min, eig_max=eig_max)
        load = 1e-10 * max(np.trace(j_state), 1.0) / j_state.shape[0]
        j_state = j_state + load * np.eye(j_state.shape[0])
        ridged = True
        eigs = np.linalg.eigvalsh(j_state)
        cond = float(eigs[-1] / eigs[0])
    crlb = np.linalg.inv(j_state)
    crlb = 0.5 * (crlb + crlb.T)
    sign, logdet = np.linalg.slogdet(crlb)
    metrics = {
        "trace": float(np.trace(crlb)),
        "det": float(sign * np.exp(logdet)),
        "max_eig": float(np.linalg.eigvalsh(crlb)[-1]),
        "cond": float(cond),
    }
    return FimReport(parameter_fim=j_param, system_matrix=gamma,
                     state_fim=j_state, crlb=crlb, metrics=metrics,
                     ridged=ridged)


class StateCrlbObjective:
    """Reusable trace-of-state-CRLB evaluator for varying geometry.

    Everything that does not depend on antenna positions (bin-coefficient
    tables, the covariance trace terms, the state-map Jacobian, amplitude
    products) is precomputed once; per-geometry evaluation reduces to the
    path-difference matrix, per-target trig and a small assembly. Agrees
    with :func:`state_fim_and_crlb` to floating-point accuracy.
    """

    def __init__(self, scenario, ridge=False):
        self.scenario = scenario
        self.ridge = ridge
        ws = _Workspace(scenario)
        n = scenario.num_targets
        self.n = n
        radar = scenario.radar
        self.rate = TWO_PI / radar.wavelength
        self.root_k = np.sqrt(radar.snapshots)
        targets = scenario.targets
        self.us = np.column_stack([np.sin([t.theta for t in targets]),
                                   np.cos([t.theta for t in targets])])
        self.ps = np.column_stack([np.cos([t.theta for t in targets]),
                                   -np.sin([t.theta for t in targets])])
        self.amps = np.array([t.xi + 1j * t.zeta for t in targets])
        self.gamma = system_matrix(scenario)
        self.pairs = []
        for a in range(n):
            for b in range(a, n):
                if abs(targets[a].cell - targets[b].cell) > 1:
                    continue
                kw = ws.bin_weight_matrix(a, b)
                bva = np.vstack([ws.binvecs[a][p] for p in _PARAM_ORDER])
                bvb = np.vstack([ws.binvecs[b][p] for p in _PARAM_ORDER])
                binco = bva @ kw @ bvb.T
                f_term = ws.beta_beta_trace_term(a, b)
                self.pairs.append((a, b, binco, f_term))

    def state_fim(self, geometry):
        omega = omega_matrix(geometry, self.scenario.radar)
        omegas = self.rate * (self.us @ omega)
        hs = self.ps @ omega
        psi = self.root_k * np.exp(1j * omegas)
        phi = self.amps[:, None] * psi
        gens = np.stack([1j * self.rate * hs * phi, phi, psi, 1j * psi],
                        axis=1)                      # (T, 4, MN)
        out = np.zeros((4 * self.n, 4 * self.n))
        for a, b, binco, f_term in self.pairs:
            block = binco * np.real(np.conj(gens[a]) @ gens[b].T)
            block[1, 1] += f_term
            if a == b:
                block = 0.5 * (block + block.T)
                out[4 * a:4 * a + 4, 4 * a:4 * a + 4] = block
            else:
                out[4 * a:4 * a + 4, 4 * b:4 * b + 4] = block
                out[4 * b:4 * b + 4, 4 * a:4 * a + 4] = block.T
        j_state = self.gamma @ out @ self.gamma.T
        return 0.5 * (j_state + j_state.T)

    def __call__(self, geometry):
        """Trace of the state CRLB; +inf when the information matrix is
        singular and ridging is off."""
        j_state = self.state_fim(geometry)
        eigs = np.linalg.eigvalsh(j_state)
        if eigs[0] <= 0 or eigs[-1] / eigs[0] > COND_LIMIT:
            if not self.ridge:
                return np.inf
            load = 1e-10 * max(np.trace(j_state), 1.0) / j_state.shape[0]
            j_state = j_state + load * np.eye(j_state.shape[0])
            eigs = np.linalg.eigvalsh(j_state)
            if eigs[0] <= 0:
                return np.inf
        return float(np.trace(np.linalg.inv(j_state)))


def parameter_crlb(scenario):
    """Inverse of the parameter-space FIM (raises SingularFim when it is
    not safely invertible)."""
    j = assemble_parameter_fim(scenario)
    eigs = np.linalg.eigvalsh(j)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > COND_LIMIT:
        cond = np.inf if eigs[0] <= 0 else float(eigs[-1] / eigs[0])
        raise SingularFim("parameter FIM not safely invertible",
                          cond=cond, eig_min=float(eigs[0]),
                          eig_max=float(eigs[-1]))
    return np.linalg.inv(j)


def bearing_variance(scenario):
    """CRLB on the bearing of a single-target scenario (rad^2)."""
    if scenario.num_targets != 1:
        raise ValueError("bearing_variance expects a single target")
    return float(parameter_crlb(scenario)[0, 0])


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

_FD_STEPS = {"theta": 1e-6, "beta": 1e-6, "xi": 1e-6, "zeta": 1e-6}


def _central(fn, vec, k, h):
    hi, lo = vec.copy(), vec.copy()
    hi[k] += h
    lo[k] -= h
    return (fn(hi) - fn(lo)) / (2.0 * h)


def _richardson(fn, vec, k, h):
    # one Richardson extrapolation of the central difference
    d1 = _central(fn, vec, k, h)
    d2 = _central(fn, vec, k, 0.5 * h)
    return (4.0 * d2 - d1) / 3.0


def numerical_fim_oracle(scenario):
    """Gaussian FIM by finite differences on the full mean and covariance.

    J_ij = (d mu / d p_i)' Sigma^-1 (d mu / d p_j)
           + 1/2 tr(Sigma^-1 dSigma/dp_i Sigma^-1 dSigma/dp_j)

    with central differences, Richardson-extrapolated once. Independent of
    the closed-form path: only mean_response and covariance are used.
    """
    p0 = scenario.parameter_vector()
    n = p0.size

    def mean_of(vec):
        return mean_response(scenario.with_parameter_vector(vec))

    def factor_of(vec):
        return covariance(scenario.with_parameter_vector(vec)).factor

    model = covariance(scenario)
    paths = scenario.array.num_tx * scenario.array.num_rx
    kinv = np.linalg.inv(model.factor)

    dmu = np.empty((n, model.dim))
    dfac = []
    for k in range(n):
        h = _FD_STEPS[_PARAM_ORDER[k % 4]]
        dmu[k] = _richardson(mean_of, p0, k, h)
        dfac.append(_richardson(factor_of, p0, k, h))

    out = np.empty((n, n))
    n_bins = model.factor.shape[0]
    dmu_bins = dmu.reshape(n, n_bins, 2 * paths)
    for i in range(n):
        wi = np.linalg.solve(model.factor, dmu_bins[i])
        ki = kinv @ dfac[i]
        for j in range(i, n):
            mean_term = float(np.sum(wi * dmu_bins[j]))
            kj = kinv @ dfac[j]
            cov_term = paths * float(np.sum(ki * kj.T))
            out[i, j] = out[j, i] = mean_term + cov_term
    return out
