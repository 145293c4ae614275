"""Matched-filter signal model: steering, mean response, covariance, sampling.

The stacked measurement rho is real with one block per range bin (bin
indices from :meth:`Scenario.bins`); inside a bin the MN real parts come
first, then the MN imaginary parts. Path l = m * N + n pairs transmitter m
with receiver n (0-based, transmitter-major), and the path-difference
matrix Omega holds sqrt(P_m) * (s_rn - s_tm) in column l.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularRestriction

TWO_PI = 2.0 * np.pi


def omega_matrix(array, radar):
    """Power-scaled receiver-minus-transmitter differences, one column
    per transmit-receive path (shape (2, M*N))."""
    m_tx, n_rx = array.num_tx, array.num_rx
    cols = np.empty((2, m_tx * n_rx))
    roots = np.sqrt(np.asarray(radar.powers, dtype=float))
    for m in range(m_tx):
        block = (array.rx - array.tx[m]) * roots[m]
        cols[:, m * n_rx:(m + 1) * n_rx] = block.T
    return cols


@dataclass(frozen=True)
class SteeringWorkspace:
    """Per-target steering quantities over the MN paths.

    omegas[t, l] is the path phase, ps[t] the bearing-derivative direction
    [cos theta, -sin theta], hs[t, l] = ps[t] @ Omega[:, l], and
    psi[t, l] = sqrt(K) * exp(j * omegas[t, l]) so that
    |psi|^2 == K on every path.
    """

    omega: np.ndarray        # (2, MN)
    omegas: np.ndarray       # (T, MN) radians
    ps: np.ndarray           # (T, 2)
    hs: np.ndarray           # (T, MN)
    beta_breves: np.ndarray  # (T, 2) rows (1-beta, beta)
    psi: np.ndarray          # (T, MN) complex

    @property
    def num_paths(self):
        return self.omega.shape[1]


def steering_workspace(scenario):
    omega = omega_matrix(scenario.array, scenario.radar)
    lam = scenario.radar.wavelength
    root_k = np.sqrt(scenario.radar.snapshots)
    thetas = np.array([t.theta for t in scenario.targets])
    betas = np.array([t.beta for t in scenario.targets])
    if scenario.num_targets == 0:
        empty = np.zeros((0, omega.shape[1]))
        return SteeringWorkspace(omega, empty, np.zeros((0, 2)), empty,
                                 np.zeros((0, 2)), empty.astype(complex))
    us = np.column_stack([np.sin(thetas), np.cos(thetas)])      # (T, 2)
    ps = np.column_stack([np.cos(thetas), -np.sin(thetas)])
    omegas = (TWO_PI / lam) * (us @ omega)                       # (T, MN)
    hs = ps @ omega
    psi = root_k * np.exp(1j * omegas)
    beta_breves = np.column_stack([1.0 - betas, betas])
    return SteeringWorkspace(omega, omegas, ps, hs, beta_breves, psi)


def _bin_index_map(scenario):
    """bin index -> row in the stacked per-bin layout (or absent)."""
    return {b: i for i, b in enumerate(scenario.bins())}


def mean_response(scenario, workspace=None):
    """Mean stacked matched-filter output rho_bar.

    A target in cell c contributes beta * phi_bar to bin c and
    (1 - beta) * phi_bar to bin c - 1, with phi_bar = (xi + j zeta) * psi.
    """
    ws = workspace if workspace is not None else steering_workspace(scenario)
    paths = ws.num_paths
    rows = _bin_index_map(scenario)
    out = np.zeros((len(rows), 2 * paths))
    for t, target in enumerate(scenario.targets):
        phi = (target.xi + 1j * target.zeta) * ws.psi[t]
        vec = np.concatenate([phi.real, phi.imag])
        if target.cell in rows:
            out[rows[target.cell]] += target.beta * vec
        if target.cell - 1 in rows:
            out[rows[target.cell - 1]] += (1.0 - target.beta) * vec
    return out.ravel()


@dataclass(frozen=True)
class CovarianceModel:
    """Block-tridiagonal covariance Sigma = factor (x) I_{2MN}.

    ``factor`` is the (n_bins, n_bins) scalar tridiagonal matrix over the
    bins listed in ``bins``; every block of Sigma is that scalar times the
    identity of size ``block_dim`` = 2MN.
    """

    factor: np.ndarray
    bins: tuple
    block_dim: int

    @property
    def dim(self):
        return self.factor.shape[0] * self.block_dim

    def dense(self):
        return np.kron(self.factor, np.eye(self.block_dim))

    def logdet(self):
        sign, logdet = np.linalg.slogdet(self.factor)
        if sign <= 0:
            raise SingularRestriction("covariance factor not positive "
                                      "definite")
        return self.block_dim * logdet

    def solve_quadratic(self, residual):
        """residual' Sigma^{-1} residual via the scalar factor."""
        r = residual.reshape(self.factor.shape[0], self.block_dim)
        return float(np.sum(np.linalg.solve(self.factor, r) * r))

    def sqrt_factor(self):
        """Symmetric square root of the scalar factor."""
        vals, vecs = np.linalg.eigh(self.factor)
        vals = np.clip(vals, 0.0, None)
        return (vecs * np.sqrt(vals)) @ vecs.T


def covariance(scenario):
    """Covariance of the stacked output per the Gaussian model.

    Middle-bin diagonal scalar:
        K sigma2_alpha (sum_{t in c} beta^2 + sum_{t in c+1} (1-beta)^2)
        + sigma2_w,
    cross scalar between bins c-1 and c: K sigma2_alpha sum_{t in c}
    (1-beta) beta; the noise enters additively.
    """
    radar = scenario.radar
    bins = scenario.bins()
    rows = {b: i for i, b in enumerate(bins)}
    n = len(bins)
    ksa = radar.snapshots * radar.scatter_var
    factor = radar.noise_var * np.eye(n)
    for t in scenario.targets:
        c, beta = t.cell, t.beta
        if c in rows:
            factor[rows[c], rows[c]] += ksa * beta ** 2
        if c - 1 in rows:
            factor[rows[c - 1], rows[c - 1]] += ksa * (1.0 - beta) ** 2
        if c in rows and c - 1 in rows:
            cross = ksa * (1.0 - beta) * beta
            factor[rows[c], rows[c - 1]] += cross
            factor[rows[c - 1], rows[c]] += cross
    paths = scenario.array.num_tx * scenario.array.num_rx
    return CovarianceModel(factor=factor, bins=tuple(bins),
                           block_dim=2 * paths)


def covariance_window(scenario, bins, model=None):
    """Scalar covariance factor restricted to arbitrary bin indices.

    Bins outside the stacked measurement are padded as pure-noise bins
    (diagonal sigma2_w, no cross coupling), which reproduces the full
    factor exactly whenever the requested window decouples from the rest.
    """
    model = model if model is not None else covariance(scenario)
    rows = {b: i for i, b in enumerate(model.bins)}
    k = len(bins)
    out = np.zeros((k, k))
    for i, bi in enumerate(bins):
        for j, bj in enumerate(bins):
            if bi in rows and bj in rows:
                out[i, j] = model.factor[rows[bi], rows[bj]]
            elif i == j:
                out[i, j] = scenario.radar.noise_var
    return out


def restricted_covariance(scenario, c1, c2):
    """3-bin covariance window ending at cell c2 and its inverse entries.

    Returns (sigma_star, (k1..k6)) where sigma_star is the 3x3 scalar
    factor over bins (c2-2, c2-1, c2) and the k values lay out its inverse
    as [[k1, k4, k5], [k4, k2, k6], [k5, k6, k3]].

    Requires c1 in {c2, c2 - 1} and c2 within the occupied span.
    """
    if c1 not in (c2, c2 - 1):
        raise ValueError("cells must be identical or adjacent (c1 in "
                         "{c2, c2-1})")
    if not 1 <= c2 <= scenario.cell_span:
        raise ValueError(f"cell {c2} outside occupied span "
                         f"1..{scenario.cell_span}")
    window = (c2 - 2, c2 - 1, c2)
    sigma_star = covariance_window(scenario, window)
    cond = np.linalg.cond(sigma_star)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularRestriction(f"restricted factor condition {cond:.2e}")
    inv = np.linalg.inv(sigma_star)
    ks = (inv[0, 0], inv[1, 1], inv[2, 2], inv[0, 1], inv[0, 2], inv[1, 2])
    return sigma_star, ks


def sample_measurement(scenario, seed, trials=None):
    """Draw from N(rho_bar, Sigma); deterministic for a fixed seed.

    ``seed`` may be an int or a numpy Generator. With ``trials`` set,
    returns an (trials, dim) array of independent draws.
    """
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    model = covariance(scenario)
    mean = mean_response(scenario)
    root = model.sqrt_factor()
    n_bins = model.factor.shape[0]
    squeeze = trials is None
    k = 1 if squeeze else int(trials)
    z = rng.standard_normal((k, n_bins, model.block_dim))
    # Kronecker lift: (S^{1/2} (x) I) z, applied bin-wise.
    samples = np.einsum("ab,kbd->kad", root, z).reshape(k, -1) + mean
    return samples[0] if squeeze else samples


def log_likelihood(rho, scenario):
    """Exact Gaussian log-density of the stacked measurement (constant
    included)."""
    model = covariance(scenario)
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (model.dim,):
        raise DimensionMismatch(f"measurement length {rho.shape} does not "
                                f"match layout ({model.dim},)")
    resid = rho - mean_response(scenario)
    quad = model.solve_quadratic(resid)
    return -0.5 * (quad + model.logdet() + model.dim * np.log(TWO_PI))


def measurement_rows(scenario):
    """(bin, path, re, im) rows of a stacked measurement for CSV dumps."""
    def rows(rho):
        paths = scenario.array.num_tx * scenario.array.num_rx
        blocks = np.asarray(rho).reshape(-1, 2 * paths)
        for i, b in enumerate(scenario.bins()):
            for l in range(paths):
                yield b, l, blocks[i, l], blocks[i, paths + l]
    return rows
