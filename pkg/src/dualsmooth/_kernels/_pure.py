"""Pure-NumPy implementations of the hot inner loops.

These are the reference semantics for the compiled kernels in ``_fast.pyx``;
both backends expose the same functions and must agree to tight tolerance.

Conventions shared by all kernels:

* observation samples are piecewise linear in time, so stage values inside a
  step are exact linear interpolations;
* tridiagonal operators are stored as three length-n bands ``lo, d0, up``
  with ``B[i, i-1] = lo[i]`` (``lo[0]`` unused), ``B[i, i] = d0[i]``,
  ``B[i, i+1] = up[i]`` (``up[n-1]`` unused);
* the log-domain fields evolve by ``dy_i/dt = sum_j B_ij exp(w_j - w_i) - h_i^2/2``
  with ``w = y + z_t * h``; the exponent only ever sees differences of
  neighboring field values, which keeps the evaluation overflow-safe.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ctmc_pathwise_rhs",
    "ctmc_pathwise_sweep",
    "ctmc_transport_sweep",
    "grid_pathwise_rhs",
    "grid_pathwise_sweep",
    "grid_transport_sweep",
    "band_apply",
    "hmm_fine_sweep",
]


# ---------------------------------------------------------------------------
# finite state space


def ctmc_pathwise_rhs(M, h, z, y):
    """dy_i/dt = sum_j M_ij exp((y + z h)_j - (y + z h)_i) - h_i^2 / 2.

    Overflow is left to produce inf (the sweeps' guard scan reports it), the
    same behavior as the compiled kernels.
    """
    w = y + z * h
    with np.errstate(over="ignore", invalid="ignore"):
        E = np.exp(w[None, :] - w[:, None])
    return (M * E).sum(axis=1) - 0.5 * h * h


def ctmc_pathwise_sweep(M, h, zs, dt, substeps, y0):
    """RK4 integration of the log-domain field over the whole grid.

    ``zs`` is given in integration order; backward passes hand in a reversed,
    sign-flipped copy and flip the result.
    """
    M = np.asarray(M, dtype=float)
    h = np.asarray(h, dtype=float)
    zs = np.asarray(zs, dtype=float)
    N = zs.size - 1
    out = np.empty((N + 1, y0.size))
    y = np.array(y0, dtype=float)
    out[0] = y
    hs = dt / substeps
    for k in range(N):
        z0, z1 = zs[k], zs[k + 1]
        for s in range(substeps):
            za = z0 + (z1 - z0) * (s / substeps)
            zm = z0 + (z1 - z0) * ((s + 0.5) / substeps)
            zb = z0 + (z1 - z0) * ((s + 1.0) / substeps)
            k1 = ctmc_pathwise_rhs(M, h, za, y)
            k2 = ctmc_pathwise_rhs(M, h, zm, y + 0.5 * hs * k1)
            k3 = ctmc_pathwise_rhs(M, h, zm, y + 0.5 * hs * k2)
            k4 = ctmc_pathwise_rhs(M, h, zb, y + hs * k3)
            y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def _controlled_rate_apply_T(A, u, pi):
    """(Atilde(u)^T pi) with Atilde_ij = A_ij u_ij off-diagonal, zero row sums."""
    R = A * u
    np.fill_diagonal(R, 0.0)
    out = R.T @ pi - R.sum(axis=1) * pi
    return out


def ctmc_transport_sweep(A, u, u_mid, pi0, dt):
    """RK4 transport of a probability vector under a time-indexed control.

    Stage controls are (u[k], u_mid[k], u_mid[k], u[k+1]). The vector is
    renormalized after every step; the largest pre-normalization drift of the
    total mass is returned.
    """
    A = np.asarray(A, dtype=float)
    N = u.shape[0] - 1
    pi = np.empty((N + 1, pi0.size))
    p = np.array(pi0, dtype=float)
    pi[0] = p
    drift = 0.0
    for k in range(N):
        k1 = _controlled_rate_apply_T(A, u[k], p)
        k2 = _controlled_rate_apply_T(A, u_mid[k], p + 0.5 * dt * k1)
        k3 = _controlled_rate_apply_T(A, u_mid[k], p + 0.5 * dt * k2)
        k4 = _controlled_rate_apply_T(A, u[k + 1], p + dt * k3)
        p = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        mass = p.sum()
        drift = max(drift, abs(mass - 1.0))
        p = p / mass
        pi[k + 1] = p
    return pi, drift


# ---------------------------------------------------------------------------
# grid (tridiagonal) operators


def band_apply(lo, d0, up, f):
    out = d0 * f
    out[1:] += lo[1:] * f[:-1]
    out[:-1] += up[:-1] * f[1:]
    return out


def grid_pathwise_rhs(lo, d0, up, hg, z, y):
    """Ratio-form evaluation of exp(-w) B exp(w) - h^2/2 for banded B."""
    w = y + z * hg
    out = d0 - 0.5 * hg * hg
    out = out.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        out[1:] += lo[1:] * np.exp(w[:-1] - w[1:])
        out[:-1] += up[:-1] * np.exp(w[1:] - w[:-1])
    return out


def grid_pathwise_sweep(lo, d0, up, hg, zs, dt, substeps, y0):
    """Substepped RK4 integration of the log-domain grid field."""
    zs = np.asarray(zs, dtype=float)
    N = zs.size - 1
    out = np.empty((N + 1, y0.size))
    y = np.array(y0, dtype=float)
    out[0] = y
    hs = dt / substeps
    for k in range(N):
        z0, z1 = zs[k], zs[k + 1]
        for s in range(substeps):
            za = z0 + (z1 - z0) * (s / substeps)
            zm = z0 + (z1 - z0) * ((s + 0.5) / substeps)
            zb = z0 + (z1 - z0) * ((s + 1.0) / substeps)
            k1 = grid_pathwise_rhs(lo, d0, up, hg, za, y)
            k2 = grid_pathwise_rhs(lo, d0, up, hg, zm, y + 0.5 * hs * k1)
            k3 = grid_pathwise_rhs(lo, d0, up, hg, zm, y + 0.5 * hs * k2)
            k4 = grid_pathwise_rhs(lo, d0, up, hg, zb, y + hs * k3)
            y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def _flux_divergence(w, dx):
    """Conservative central-flux divergence with zero flux at the walls."""
    F = 0.5 * (w[:-1] + w[1:])
    out = np.empty_like(w)
    out[0] = F[0]
    out[1:-1] = F[1:] - F[:-1]
    out[-1] = -F[-1]
    return out / dx


def grid_transport_rhs(lo, d0, up, su, p, dx):
    return band_apply(lo, d0, up, p) - _flux_divergence(su * p, dx)


def grid_transport_sweep(lo, d0, up, su, pi0, dt, dx, substeps):
    """Controlled transport of a density under drift field su = sigma * u.

    ``su`` holds node values; stage values are linear interpolations in time.
    The density is renormalized after every substep (mass = sum * dx).
    """
    N = su.shape[0] - 1
    pi = np.empty((N + 1, pi0.size))
    p = np.array(pi0, dtype=float)
    pi[0] = p
    hs = dt / substeps
    drift = 0.0
    for k in range(N):
        s0, s1 = su[k], su[k + 1]
        for s in range(substeps):
            fa = s / substeps
            fm = (s + 0.5) / substeps
            fb = (s + 1.0) / substeps
            sa = s0 + (s1 - s0) * fa
            sm = s0 + (s1 - s0) * fm
            sb = s0 + (s1 - s0) * fb
            k1 = grid_transport_rhs(lo, d0, up, sa, p, dx)
            k2 = grid_transport_rhs(lo, d0, up, sm, p + 0.5 * hs * k1, dx)
            k3 = grid_transport_rhs(lo, d0, up, sm, p + 0.5 * hs * k2, dx)
            k4 = grid_transport_rhs(lo, d0, up, sb, p + hs * k3, dx)
            p = p + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            mass = p.sum() * dx
            drift = max(drift, abs(mass - 1.0))
            p = p / mass
        pi[k + 1] = p
    return pi, drift


# ---------------------------------------------------------------------------
# fine-grid discrete forward-backward pass (oracle)


def hmm_fine_sweep(P, h, dz, dt, nu0):
    """Forward/backward pass of the discretized chain with emission weights.

    One step of the hidden chain uses the transition kernel ``P`` (the matrix
    exponential of the generator over ``dt``); the observation increment
    ``dz[k]`` over step k is absorbed by the per-state weight
    ``w_k(i) = exp(h_i dz[k] - h_i^2 dt / 2)`` attached to the state at the
    left endpoint. Returns the log of the unnormalized forward and backward
    variables on the fine grid (scaled per step, scales re-accumulated).
    """
    P = np.asarray(P, dtype=float)
    h = np.asarray(h, dtype=float)
    dz = np.asarray(dz, dtype=float)
    M = dz.size
    d = h.size
    h2dt = 0.5 * h * h * dt
    logp = np.empty((M + 1, d))
    logq = np.empty((M + 1, d))
    PT = np.ascontiguousarray(P.T)

    with np.errstate(divide="ignore"):
        p = np.array(nu0, dtype=float)
        scale = 0.0
        logp[0] = np.log(p)
        for k in range(M):
            w = np.exp(h * dz[k] - h2dt)
            p = PT @ (w * p)
            s = p.sum()
            p /= s
            scale += np.log(s)
            logp[k + 1] = np.log(p) + scale

        q = np.ones(d)
        scale = 0.0
        logq[M] = 0.0
        for k in range(M - 1, -1, -1):
            w = np.exp(h * dz[k] - h2dt)
            q = w * (P @ q)
            s = q.sum()
            q /= s
            scale += np.log(s)
            logq[k] = np.log(q) + scale
    return logp, logq
