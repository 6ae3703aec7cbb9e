"""Experiment harnesses: stochastic system realization and spectral
compressed sensing.

Both reduce to the same penalized recovery problem: pick a structure,
an observation map over its parameters, and a target vector.  Random
draws are split into independent substreams keyed on the config seed so
adding a draw in one place never shifts the others.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .linalg import SparseMatrix, vec
from .objective import FactorPair, PenaltyProblem, assemble, smooth_terms
from .gcg import rank_estimate
from .structure import (StructureSpec, apply_structure, block_hankel_spec,
                        two_fold_hankel_spec)

# substream ids
_STREAM_SYSTEM = 0
_STREAM_TRAJECTORY = 1
_STREAM_MEASUREMENT = 2
_STREAM_SIGNAL = 0
_STREAM_MASK = 1
_STREAM_NOISE = 2


def substream(seed, stream):
    """Independent generator for one purpose under a shared seed."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),)))


@dataclass(frozen=True)
class SsrConfig:
    n: int            # output dimension
    r: int            # true system order
    j: int            # block rows of the covariance window
    k: int            # block columns; lags 1..k are observed
    T: int = 1000     # trajectory length
    sigma: float = 0.05
    seed: int = 0


@dataclass
class SsrData:
    v: np.ndarray               # (j+k-1, n, n) covariance blocks, zero where unobserved
    w: np.ndarray               # (j+k-1,) 0/1 block observation mask
    true_system: Optional[tuple] = None   # (D, E, F), absent after CSV reload


class ScsData(NamedTuple):
    signal: np.ndarray          # exact n1 x n2 grid
    omega: np.ndarray           # sorted column-major indices of observed entries
    observed: np.ndarray        # noisy grid, zero off omega


def _unit_nuclear(a):
    s = np.linalg.svd(a, compute_uv=False).sum()
    if s == 0.0:
        raise ValueError("cannot normalize a zero matrix")
    return a / s


def random_system(n, r, rng):
    """Random (D, E, F), each scaled to unit nuclear norm.

    The state matrix then has spectral radius below one, so the process is
    stationary.
    """
    d = _unit_nuclear(rng.standard_normal((r, r)))
    e = _unit_nuclear(rng.standard_normal((r, n)))
    f = _unit_nuclear(rng.standard_normal((n, r)))
    return d, e, f


def simulate_outputs(system, T, sigma, state_rng, noise_rng):
    """Observed outputs of the driven state-space recursion, shape (n, T).

    z_t = F s_t + u_t with s_{t+1} = D s_t + E u_t, started from a standard
    normal state; measurement noise sigma is added afterwards.
    """
    d, e, f = system
    r, n = e.shape
    s = state_rng.standard_normal(r)
    z = np.empty((n, T))
    for t in range(T):
        u = state_rng.standard_normal(n)
        z[:, t] = f @ s + u
        s = d @ s + e @ u
    if sigma:
        z = z + sigma * noise_rng.standard_normal((n, T))
    return z


def empirical_covariances(zbar, j, k):
    """Lagged covariance blocks (1/T) sum z_{t+i} z_t^T for lags 1..k.

    Returns (j+k-1, n, n); lags beyond k stay zero to match the
    observation mask.
    """
    n, T = zbar.shape
    n_blocks = j + k - 1
    v = np.zeros((n_blocks, n, n))
    for i in range(1, min(k, T - 1) + 1):
        v[i - 1] = (zbar[:, i:] @ zbar[:, : T - i].T) / T
    return v


def analytic_covariances(system, n_blocks):
    """Exact covariance blocks of the stationary process via a Lyapunov solve."""
    d, e, f = system
    p = scipy.linalg.solve_discrete_lyapunov(d, e @ e.T)
    g = d @ p @ f.T + e
    v = np.empty((n_blocks, f.shape[0], f.shape[0]))
    dpow = np.eye(d.shape[0])
    for i in range(n_blocks):
        v[i] = f @ dpow @ g
        dpow = d @ dpow
    return v


def ssr_generate(cfg: SsrConfig) -> SsrData:
    system = random_system(cfg.n, cfg.r, substream(cfg.seed, _STREAM_SYSTEM))
    zbar = simulate_outputs(system, cfg.T, cfg.sigma,
                            substream(cfg.seed, _STREAM_TRAJECTORY),
                            substream(cfg.seed, _STREAM_MEASUREMENT))
    v = empirical_covariances(zbar, cfg.j, cfg.k)
    w = np.zeros(cfg.j + cfg.k - 1)
    w[: cfg.k] = 1.0
    return SsrData(v=v, w=w, true_system=system)


def _selection_matrix(indices, width):
    indices = np.asarray(indices, dtype=np.int64)
    return SparseMatrix(indices.size, width,
                        np.arange(indices.size + 1, dtype=np.int64),
                        indices, np.ones(indices.size))


def ssr_problem(cfg: SsrConfig, data: SsrData, mu, lam=1.0) -> PenaltyProblem:
    """Penalized recovery problem over the block-Hankel covariance structure.

    The observation selects every scalar of the first k blocks, in the same
    blockwise column-major order the structure uses for its parameters.
    """
    spec = block_hankel_spec(cfg.n, cfg.n, cfg.j, cfg.k)
    nn = cfg.n * cfg.n
    cols = (np.arange(cfg.k)[:, None] * nn + np.arange(nn)[None, :]).ravel()
    target = np.concatenate([data.v[t].ravel(order="F") for t in range(cfg.k)])
    return assemble(spec, _selection_matrix(cols, spec.n_params), target, lam, mu)


@dataclass(frozen=True)
class ScsConfig:
    n1: int
    n2: int
    r: int            # number of sinusoids
    k1: int           # window rows of the two-fold structure
    k2: int
    obs_fraction: float = 0.2
    snr: float = 10.0
    seed: int = 0


def sinusoid_grid(n1, n2, f1, f2, phases, amps=None):
    """Real sinusoid superposition on a 0-based n1 x n2 grid."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    phases = np.asarray(phases, dtype=float)
    amps = np.ones_like(f1) if amps is None else np.asarray(amps, dtype=float)
    a = np.arange(n1)[:, None, None]
    b = np.arange(n2)[None, :, None]
    args = 2.0 * np.pi * (a * f1 + b * f2) + phases
    return np.sum(amps * np.cos(args), axis=2)


def scs_generate(cfg: ScsConfig) -> ScsData:
    rng_sig = substream(cfg.seed, _STREAM_SIGNAL)
    f1 = rng_sig.uniform(0.0, 1.0, cfg.r)
    f2 = rng_sig.uniform(0.0, 1.0, cfg.r)
    phases = rng_sig.uniform(0.0, 2.0 * np.pi, cfg.r)
    signal = sinusoid_grid(cfg.n1, cfg.n2, f1, f2, phases)

    total = cfg.n1 * cfg.n2
    count = int(round(cfg.obs_fraction * total))
    if not 0 < count <= total:
        raise ValueError("obs_fraction leaves nothing to observe")
    omega = np.sort(substream(cfg.seed, _STREAM_MASK).choice(total, size=count,
                                                             replace=False))
    flat = vec(signal)
    noise = substream(cfg.seed, _STREAM_NOISE).standard_normal(count)
    scale = np.linalg.norm(flat[omega]) / (cfg.snr * np.linalg.norm(noise))
    observed_flat = np.zeros(total)
    observed_flat[omega] = flat[omega] + scale * noise
    observed = observed_flat.reshape((cfg.n1, cfg.n2), order="F")
    return ScsData(signal=signal, omega=omega, observed=observed)


def scs_problem(cfg: ScsConfig, data: ScsData, mu, lam=1.0) -> PenaltyProblem:
    """Recovery problem over the two-fold Hankel lift of the signal grid."""
    spec = two_fold_hankel_spec(cfg.n1, cfg.n2, cfg.k1, cfg.k2)
    target = vec(data.observed)[data.omega]
    return assemble(spec, _selection_matrix(data.omega, spec.n_params), target,
                    lam, mu)


def recovery_metrics(y_true, y_hat, factors: FactorPair, spec: StructureSpec,
                     prob: PenaltyProblem | None = None):
    """Normalized error, structured rank of the recovery, and data misfit."""
    y_true = np.asarray(y_true, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.size != spec.n_params:
        raise ValueError("recovered parameter count does not match the structure")
    err = float(np.linalg.norm(y_hat - y_true) / np.linalg.norm(y_true))
    h = apply_structure(spec, vec(y_hat) if y_hat.ndim == 2 else y_hat)
    rank = rank_estimate(np.linalg.svd(h, compute_uv=False))
    out = {"normalized_error": err, "structured_rank": rank}
    if prob is not None:
        _, sqloss, _ = smooth_terms(prob, vec(factors.product()))
        out["square_loss"] = float(sqloss)
    return out


def save_ssr_data(path, data: SsrData):
    """Covariance blocks as CSV rows (block, row, col, value, observed)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "row", "col", "value", "observed"])
        n_blocks, n, _ = data.v.shape
        for t in range(n_blocks):
            for rr in range(n):
                for cc in range(n):
                    writer.writerow([t, rr, cc, repr(float(data.v[t, rr, cc])),
                                     int(data.w[t])])


def load_ssr_data(path) -> SsrData:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append((int(rec["block"]), int(rec["row"]), int(rec["col"]),
                         float(rec["value"]), int(rec["observed"])))
    n_blocks = max(r[0] for r in rows) + 1
    n = max(r[1] for r in rows) + 1
    v = np.zeros((n_blocks, n, n))
    w = np.zeros(n_blocks)
    for t, rr, cc, val, obs in rows:
        v[t, rr, cc] = val
        if obs:
            w[t] = 1.0
    return SsrData(v=v, w=w, true_system=None)


def save_scs_data(path, data: ScsData):
    """Signal grid as CSV rows (row, col, value, observed, observed_value)."""
    n1, n2 = data.signal.shape
    mask = np.zeros(n1 * n2, dtype=bool)
    mask[data.omega] = True
    mask = mask.reshape((n1, n2), order="F")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "value", "observed", "observed_value"])
        for rr in range(n1):
            for cc in range(n2):
                writer.writerow([rr, cc, repr(float(data.signal[rr, cc])),
                                 int(mask[rr, cc]),
                                 repr(float(data.observed[rr, cc]))])


def load_scs_data(path) -> ScsData:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append((int(rec["row"]), int(rec["col"]), float(rec["value"]),
                         int(rec["observed"]), float(rec["observed_value"])))
    n1 = max(r[0] for r in rows) + 1
    n2 = max(r[1] for r in rows) + 1
    signal = np.zeros((n1, n2))
    observed = np.zeros((n1, n2))
    mask = np.zeros((n1, n2), dtype=bool)
    for rr, cc, val, obs, oval in rows:
        signal[rr, cc] = val
        observed[rr, cc] = oval
        mask[rr, cc] = bool(obs)
    omega = np.flatnonzero(mask.ravel(order="F"))
    return ScsData(signal=signal, omega=omega, observed=observed)
