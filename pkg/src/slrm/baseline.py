"""Accelerated proximal gradient baseline with singular value thresholding.

Solves the same penalized objective as the conditional-gradient solver but
keeps a dense iterate and performs one full SVD per iteration, which is the
cost profile the factored solver is meant to avoid.  With a long iteration
budget it doubles as the reference optimum for tests.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .gcg import DivergedError, SolveTrace, TraceRecord, lam_stages, rank_estimate
from .linalg import LinearOperator, dense_svd, spmv, spmv_t, top_eigenvalue, unvec, vec
from .objective import PenaltyProblem, smooth_terms
from .structure import apply_structure


@dataclass
class ApgConfig:
    max_iter: int = 100
    tol_x: float = 1e-3
    tol_obj: float = 1e-3
    seed: int = 0
    lipschitz_safety: float = 1.05
    power_tol: float = 1e-8
    power_max_iter: int = 500
    track_structured_rank: bool = True
    rank_threshold: float = 1e-3
    # Continuation stages matching GcgConfig, used by solve_apg_homotopy so
    # both solvers terminate on the same objective.
    lam_growth: float = 10.0
    lam_max: float = 100.0

    @classmethod
    def oracle(cls, max_iter=5000, **kw):
        """Long run with stopping effectively disabled; used as a phi* reference."""
        return cls(max_iter=max_iter, tol_x=1e-300, tol_obj=1e-300, **kw)

    def validate(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.tol_x <= 0 or self.tol_obj <= 0:
            raise ValueError("tolerances must be positive")
        if self.lam_growth < 1.0:
            raise ValueError("lam_growth must be at least 1 (1 disables continuation)")


def hessian_operator(prob: PenaltyProblem) -> LinearOperator:
    """Symmetric PSD map x -> AC^T AC x + lam B^T B x on vec space."""

    def apply(x):
        out = spmv_t(prob.AC, spmv(prob.AC, x))
        if prob.B.n_rows:
            out = out + prob.lam * spmv_t(prob.B, spmv(prob.B, x))
        return out

    return LinearOperator((prob.size, prob.size), apply, apply)


def lipschitz_estimate(prob: PenaltyProblem, config: ApgConfig | None = None):
    if config is None:
        config = ApgConfig()
    est = top_eigenvalue(hessian_operator(prob), tol=config.power_tol,
                         max_iter=config.power_max_iter, seed=config.seed)
    return max(est.value, 0.0) * config.lipschitz_safety


def svt(x, tau):
    """Proximal map of tau * nuclear norm: soft-threshold the singular values."""
    u, s, vt = dense_svd(np.asarray(x, dtype=float))
    shrunk = np.maximum(s - tau, 0.0)
    return (u * shrunk) @ vt


def _svt_with_values(x, tau):
    u, s, vt = dense_svd(x)
    shrunk = np.maximum(s - tau, 0.0)
    return (u * shrunk) @ vt, shrunk


def solve_apg(prob: PenaltyProblem, config: ApgConfig | None = None, init=None):
    """FISTA on f + mu * nuclear norm; returns (dense X, trace).

    The trace shares the conditional-gradient schema; here psi equals phi,
    theta is 0, sigma_top is the iterate's largest singular value, and
    factor_rank counts the singular values surviving the threshold.
    """
    if config is None:
        config = ApgConfig()
    config.validate()
    t0 = time.perf_counter()
    lip = lipschitz_estimate(prob, config)
    if lip <= 0.0:
        lip = 1.0  # no curvature: any step works, prox does everything
    step = 1.0 / lip
    tau = prob.mu * step

    x_prev = np.asarray(init, dtype=float).copy() if init is not None \
        else np.ones((prob.rows, prob.cols))
    if x_prev.shape != (prob.rows, prob.cols):
        raise ValueError("initializer shape does not match the problem")
    y = x_prev.copy()
    t_mom = 1.0
    phi_prev = None
    trace = SolveTrace()
    trace.converged_reason = "max_iter"

    for k in range(1, config.max_iter + 1):
        yv = vec(y)
        grad = spmv_t(prob.AC, spmv(prob.AC, yv) - prob.target)
        if prob.B.n_rows:
            grad = grad + prob.lam * spmv_t(prob.B, spmv(prob.B, yv))
        x_new, s_vals = _svt_with_values(y - step * unvec(grad, prob.rows, prob.cols), tau)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = x_new + ((t_mom - 1.0) / t_new) * (x_new - x_prev)

        f_smooth, sqloss, _ = smooth_terms(prob, vec(x_new))
        phi = f_smooth + prob.mu * float(s_vals.sum())
        if not np.isfinite(phi):
            trace.wall_time_s = time.perf_counter() - t0
            raise DivergedError(f"non-finite objective at iteration {k}", trace)
        if config.track_structured_rank:
            h = apply_structure(prob.spec, spmv(prob.C, vec(x_new)))
            rank = rank_estimate(np.linalg.svd(h, compute_uv=False),
                                 config.rank_threshold)
        else:
            rank = rank_estimate(s_vals, config.rank_threshold)
        dx = float(np.linalg.norm(x_new - x_prev))
        trace.records.append(TraceRecord(
            iteration=k,
            time_s=time.perf_counter() - t0,
            phi=phi,
            f_smooth=f_smooth,
            square_loss=sqloss,
            psi=phi,
            theta=0.0,
            sigma_top=float(s_vals[0]) if s_vals.size else 0.0,
            rank=rank,
            factor_rank=int(np.sum(s_vals > 0.0)),
        ))
        if phi_prev is not None:
            denom = abs(min(phi, phi_prev))
            rel_obj = abs(phi - phi_prev) / denom if denom > 0 else abs(phi - phi_prev)
        else:
            rel_obj = np.inf
        x_prev, t_mom, phi_prev = x_new, t_new, phi
        if dx < config.tol_x:
            trace.converged_reason = "tol_x"
            break
        if rel_obj < config.tol_obj:
            trace.converged_reason = "tol_obj"
            break

    trace.wall_time_s = time.perf_counter() - t0
    return x_prev, trace


def solve_apg_homotopy(prob: PenaltyProblem, config: ApgConfig | None = None,
                       init=None):
    """Continuation twin of the conditional-gradient solve_homotopy.

    Solves at the same geometric weight stages, warm starting each stage
    with the previous dense iterate; returns the terminal stage's result
    and trace, with wall_time_s covering all stages.
    """
    if config is None:
        config = ApgConfig()
    x, trace = init, None
    total = 0.0
    for lam in lam_stages(prob.lam, config.lam_growth, config.lam_max):
        stage = replace(prob, lam=lam) if lam != prob.lam else prob
        x, trace = solve_apg(stage, config, init=x)
        total += trace.wall_time_s
    trace.wall_time_s = total
    return x, trace
