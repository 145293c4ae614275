"""Primal-dual interior-point solver for small block-diagonal SDPs.

Solves   maximize  b' y   subject to   F(y) = F0 + sum_k y_k F_k >= 0
with F block diagonal (many small blocks; 1x1 blocks express scalar
inequalities). Internally this is the dual of the standard pair

    (P) min <F0, X>  s.t.  <F_k, X> = -b_k,  X >= 0
    (D) max b' y     s.t.  S = F0 + sum_k y_k F_k,  S >= 0

and the solver runs an infeasible-start Mehrotra predictor-corrector with
Nesterov-Todd scaling per block. On success the certified duality gap,
primal and dual infeasibility all fall below the tolerance, so the
reported primal objective is a rigorous upper bound on the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterations, NumericalFailure

_STEP_FRACTION = 0.98


@dataclass
class Block:
    """One PSD block: F(y)_j = f0 + sum_i y[idx[i]] * mats[i]."""

    f0: np.ndarray            # (s, s) symmetric
    idx: np.ndarray           # (k,) variable indices entering this block
    mats: np.ndarray          # (k, s, s) symmetric coefficient matrices

    @property
    def size(self):
        return self.f0.shape[0]

    def eval(self, y):
        return self.f0 + np.tensordot(y[self.idx], self.mats, axes=1)


@dataclass
class BlockSdp:
    num_vars: int
    b: np.ndarray             # objective, maximize b' y
    blocks: list = field(default_factory=list)

    def add_block(self, f0, terms):
        """terms: iterable of (var_index, symmetric matrix)."""
        f0 = np.atleast_2d(np.asarray(f0, dtype=float))
        if terms:
            idx = np.array([k for k, _ in terms], dtype=int)
            mats = np.stack([np.atleast_2d(np.asarray(m, dtype=float))
                             for _, m in terms])
        else:
            idx = np.zeros(0, dtype=int)
            mats = np.zeros((0,) + f0.shape)
        self.blocks.append(Block(f0=f0, idx=idx, mats=mats))

    def add_scalar(self, const, terms):
        """Scalar inequality const + sum coef * y >= 0 as a 1x1 block."""
        self.add_block([[const]], [(k, [[c]]) for k, c in terms])


@dataclass
class IpmResult:
    y: np.ndarray
    block_values: list        # F(y) per block at the solution
    objective: float          # b' y  (certified lower bound)
    upper_bound: float        # primal objective (certified upper bound)
    gap: float
    primal_infeas: float
    dual_infeas: float
    iterations: int
    status: str


def _step_to_boundary(mat, direction):
    """Largest alpha with mat + alpha * direction staying PSD."""
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return 0.0
    inner = np.linalg.solve(chol, np.linalg.solve(chol, direction).T)
    eig_min = np.linalg.eigvalsh(0.5 * (inner + inner.T))[0]
    if eig_min >= 0:
        return np.inf
    return 1.0 / (-eig_min)


def _nt_scaling(x, s):
    """Nesterov-Todd scaling for one block.

    Returns (r, r_inv, lam) with r' s r = r^-1 x r^-T = diag(lam); the
    scaled primal and dual points coincide on the diagonal lam.
    """
    lx = np.linalg.cholesky(x)
    ls = np.linalg.cholesky(s)
    u, sv, vt = np.linalg.svd(ls.T @ lx)
    r = (lx @ vt.T) / np.sqrt(sv)
    r_inv = (np.sqrt(sv)[:, None] * vt) @ np.linalg.inv(lx)
    return r, r_inv, sv


def solve_sdp(problem, tol=1e-8, max_iter=200, y0=None, verbose=False):
    """Run the interior-point iteration; see module docstring.

    Raises MaxIterations when the budget is exhausted and NumericalFailure
    on non-finite iterates or unfactorable Schur systems.
    """
    m = problem.num_vars
    b = np.asarray(problem.b, dtype=float)
    blocks = problem.blocks
    dim_total = sum(blk.size for blk in blocks)

    y = np.zeros(m) if y0 is None else np.array(y0, dtype=float)
    xs, ss = [], []
    for blk in blocks:
        s0 = blk.eval(y)
        eig_min = np.linalg.eigvalsh(s0)[0]
        scale = max(1.0, np.abs(s0).max())
        if eig_min < 0.1 * scale:
            s0 = s0 + (0.1 * scale - eig_min) * np.eye(blk.size)
        ss.append(s0)
        xs.append(np.eye(blk.size) * scale)

    f0_norm = max(1.0, max(np.linalg.norm(blk.f0) for blk in blocks))
    b_norm = 1.0 + np.linalg.norm(b)
    gap = pinf = dinf = np.inf

    for iteration in range(max_iter):
        # r_p[k] = b_k + sum_j <F_k, X_j>: want zero (primal feasibility)
        r_p = b.copy()
        for blk, x in zip(blocks, xs):
            r_p[blk.idx] += np.tensordot(blk.mats, x, axes=([1, 2], [0, 1]))
        # r_d per block = F(y) - S: want zero (dual feasibility)
        r_d = [blk.eval(y) - s for blk, s in zip(blocks, ss)]

        mu = sum(np.sum(x * s) for x, s in zip(xs, ss)) / dim_total
        pobj = sum(np.sum(blk.f0 * x) for blk, x in zip(blocks, xs))
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(r_p) / b_norm
        dinf = max(np.linalg.norm(rd) for rd in r_d) / f0_norm
        if verbose:
            print(f"  it {iteration:3d}  gap {gap:.2e}  pinf {pinf:.2e} "
                  f" dinf {dinf:.2e}  mu {mu:.2e}")
        if gap <= tol and pinf <= tol and dinf <= tol:
            return IpmResult(y=y, block_values=[blk.eval(y) for blk in blocks],
                             objective=dobj, upper_bound=pobj, gap=gap,
                             primal_infeas=pinf, dual_infeas=dinf,
                             iterations=iteration, status="optimal")

        # NT scaling and Schur complement M_kl = sum_j <F_k, W F_l W>
        scalings = [_nt_scaling(x, s) for x, s in zip(xs, ss)]
        w_list = [r @ r.T for r, _, _ in scalings]
        schur = np.zeros((m, m))
        for blk, w in zip(blocks, w_list):
            wfw = np.einsum("ab,kbc,cd->kad", w, blk.mats, w)
            flat = blk.mats.reshape(len(blk.idx), -1)
            contrib = flat @ wfw.reshape(len(blk.idx), -1).T
            schur[np.ix_(blk.idx, blk.idx)] += 0.5 * (contrib + contrib.T)
        try:
            schur_chol = np.linalg.cholesky(
                schur + 1e-14 * max(np.trace(schur), 1.0) / m * np.eye(m))
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("Schur complement not positive definite",
                                   iteration=iteration) from exc

        def solve_direction(d_blocks):
            """Newton direction for scaled-complementarity targets D.

            M dy = r_p + sum_j <F_., R D R' - W r_d W>_j, then
            dS = r_d + sum dy_k F_k and dX = R D R' - W dS W per block.
            """
            rhs = r_p.copy()
            for blk, (r, _, _), w, rd, d in zip(blocks, scalings, w_list,
                                                r_d, d_blocks):
                term = r @ d @ r.T - w @ rd @ w
                rhs[blk.idx] += np.tensordot(blk.mats, term,
                                             axes=([1, 2], [0, 1]))
            dy = np.linalg.solve(schur_chol.T,
                                 np.linalg.solve(schur_chol, rhs))
            dss, dxs = [], []
            for blk, (r, _, _), w, rd, d in zip(blocks, scalings, w_list,
                                                r_d, d_blocks):
                dsb = rd + np.tensordot(dy[blk.idx], blk.mats, axes=1)
                dsb = 0.5 * (dsb + dsb.T)
                dxb = r @ d @ r.T - w @ dsb @ w
                dxs.append(0.5 * (dxb + dxb.T))
                dss.append(dsb)
            return dxs, dy, dss

        lam_list = [sv for (_, _, sv) in scalings]

        # predictor: scaled target dx_hat + ds_hat = -lam
        d_aff = [-np.diag(lam) for lam in lam_list]
        dx_a, dy_a, ds_a = solve_direction(d_aff)

        alpha_p = min(1.0, _STEP_FRACTION * min(
            (_step_to_boundary(x, dx) for x, dx in zip(xs, dx_a)),
            default=np.inf))
        alpha_d = min(1.0, _STEP_FRACTION * min(
            (_step_to_boundary(s, ds) for s, ds in zip(ss, ds_a)),
            default=np.inf))
        mu_aff = sum(np.sum((x + alpha_p * dx) * (s + alpha_d * ds))
                     for x, dx, s, ds in zip(xs, dx_a, ss, ds_a)) / dim_total
        sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 1e-10, 1.0))

        # corrector: D = L_lam^-1(sigma mu I - lam^2 - H(dx_hat ds_hat))
        d_cc = []
        for (r, r_inv, lam), dx, ds in zip(scalings, dx_a, ds_a):
            dx_hat = r_inv @ dx @ r_inv.T
            ds_hat = r.T @ ds @ r
            cross = dx_hat @ ds_hat
            target = sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) \
                - 0.5 * (cross + cross.T)
            denom = 0.5 * (lam[:, None] + lam[None, :])
            d_cc.append(target / denom)
        dx_c, dy_c, ds_c = solve_direction(d_cc)

        alpha_p = min(1.0, _STEP_FRACTION * min(
            (_step_to_boundary(x, dx) for x, dx in zip(xs, dx_c)),
            default=np.inf))
        alpha_d = min(1.0, _STEP_FRACTION * min(
            (_step_to_boundary(s, ds) for s, ds in zip(ss, ds_c)),
            default=np.inf))

        y = y + alpha_d * dy_c
        for j in range(len(blocks)):
            xs[j] = xs[j] + alpha_p * dx_c[j]
            ss[j] = ss[j] + alpha_d * ds_c[j]
        if not (np.all(np.isfinite(y))
                and all(np.all(np.isfinite(x)) for x in xs)):
            raise NumericalFailure("non-finite iterate", iteration=iteration)

    raise MaxIterations(f"no convergence within {max_iter} iterations "
                        f"(gap {gap:.2e}, pinf {pinf:.2e}, dinf {dinf:.2e})")
