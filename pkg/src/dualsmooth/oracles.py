"""Brute-force reference implementations used by the verification suite.

Everything here is deliberately independent of the solver modules: the
discrete forward-backward pass works on a fine time grid with a matrix
exponential step kernel, the linear-Gaussian references integrate the
classical filter/smoother equations, and the relative-entropy estimator
samples controlled chains directly. Tests compare solvers against these;
solvers never import this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CovarianceNotPD, MalformedInput
from .models import CtmcModel, GaussianModel, ObservationPath

__all__ = [
    "OracleConfig",
    "expm_pade6",
    "marginal_flow",
    "discrete_hmm_smoother",
    "kalman_rts",
    "LgPathwiseReference",
    "lg_pathwise_reference",
    "mc_relative_entropy",
]


@dataclass
class OracleConfig:
    """Resolution knobs for the reference computations."""

    dt_fine: float = 1e-5
    n_mc: int = 10_000
    seed: int = 0

    def validate(self, obs_dt: float) -> "OracleConfig":
        if self.dt_fine > obs_dt + 1e-15:
            raise MalformedInput("oracle step must not exceed the observation step")
        if self.n_mc < 1:
            raise MalformedInput("need at least one Monte-Carlo sample")
        return self


# ---------------------------------------------------------------------------
# dense matrix exponential


def expm_pade6(M: np.ndarray) -> np.ndarray:
    """Scaling-and-squaring matrix exponential with a diagonal Pade(6,6) core.

    Dense and meant for the small matrices used by the references (d <= a few
    hundred); the input is scaled until its infinity norm is below 1/4.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    norm = np.abs(M).sum(axis=1).max() if n else 0.0
    s = max(0, int(math.ceil(math.log2(norm / 0.25))) if norm > 0.25 else 0)
    A = M / (2.0**s)
    c = 1.0
    X = np.eye(n)
    num = np.eye(n)
    den = np.eye(n)
    m = 6
    for k in range(1, m + 1):
        c *= (m - k + 1) / (k * (2 * m - k + 1))
        X = X @ A
        num = num + c * X
        den = den + c * (-1.0) ** k * X
    E = np.linalg.solve(den, num)
    for _ in range(s):
        E = E @ E
    return E


def marginal_flow(generator_T: np.ndarray, p0: np.ndarray, dt: float, N: int) -> np.ndarray:
    """Uncontrolled marginals p_k = expm(generator_T * t_k) p0 on a uniform grid."""
    K = expm_pade6(np.asarray(generator_T, dtype=float) * dt)
    out = np.empty((N + 1, len(p0)))
    out[0] = p0
    for k in range(N):
        out[k + 1] = K @ out[k]
    return out


# ---------------------------------------------------------------------------
# fine-grid discrete smoother for chains


def discrete_hmm_smoother(
    model: CtmcModel, obs: ObservationPath, dt_fine: float, return_logs: bool = False
):
    """Forward-backward smoothing on a fine subdivision of the observation grid.

    The chain step kernel is ``expm(A * dt_fine)``; each fine step carries the
    emission weight ``exp(h_i dz - h_i^2 dt / 2)`` with the observation
    increment taken from the piecewise-linear observation path. Requires
    ``dt_fine`` to divide the observation step.
    """
    ratio = obs.dt / dt_fine
    R = int(round(ratio))
    if R < 1 or abs(ratio - R) > 1e-9 * max(1.0, ratio):
        raise MalformedInput(f"dt_fine must divide the observation step (ratio {ratio:.6g})")
    dt = obs.dt / R
    dz = np.repeat(np.diff(obs.z) / R, R)
    P = expm_pade6(model.A * dt)
    logp, logq = _kernels.hmm_fine_sweep(P, model.h, dz, dt, model.nu0)
    s = logp + logq
    m = s.max(axis=1, keepdims=True)
    pi = np.exp(s - m)
    pi /= pi.sum(axis=1, keepdims=True)
    times = np.linspace(0.0, obs.T, R * obs.N + 1)
    if return_logs:
        return times, pi, logp, logq
    return times, pi


# ---------------------------------------------------------------------------
# linear-Gaussian references


def _filter_rhs(model: GaussianModel, m, P, zdot):
    AT = model.A.T
    H = model.H
    innov = zdot - float(H @ m)
    PH = P @ H
    dm = AT @ m + PH * innov
    dP = AT @ P + P @ model.A + model.Q - np.outer(PH, PH)
    return dm, dP


def kalman_rts(model: GaussianModel, obs: ObservationPath, substeps: int = 1, return_filter: bool = False):
    """Continuous-time filter plus backward smoother, RK4 on the sample grid.

    The observation derivative is the forward difference of the samples, held
    constant inside each interval. Returns smoothed means (N+1, d) and
    covariances (N+1, d, d); with ``return_filter`` the forward-pass moments
    are appended to the tuple.
    """
    model.validate()
    d = model.d
    N = obs.N
    dt = obs.dt
    zdots = np.diff(obs.z) / dt
    n_sub = 2 * substeps  # storage resolution: half intervals and finer
    h = dt / n_sub
    n_steps = n_sub * N
    ms = np.empty((n_steps + 1, d))
    Ps = np.empty((n_steps + 1, d, d))
    m = model.m0.copy()
    P = model.Sigma0.copy()
    ms[0], Ps[0] = m, P
    idx = 0
    for k in range(N):
        zd = zdots[k]
        for _ in range(n_sub):
            k1m, k1P = _filter_rhs(model, m, P, zd)
            k2m, k2P = _filter_rhs(model, m + 0.5 * h * k1m, P + 0.5 * h * k1P, zd)
            k3m, k3P = _filter_rhs(model, m + 0.5 * h * k2m, P + 0.5 * h * k2P, zd)
            k4m, k4P = _filter_rhs(model, m + h * k3m, P + h * k3P, zd)
            m = m + (h / 6.0) * (k1m + 2 * k2m + 2 * k3m + k4m)
            P = P + (h / 6.0) * (k1P + 2 * k2P + 2 * k3P + k4P)
            P = 0.5 * (P + P.T)
            idx += 1
            ms[idx], Ps[idx] = m, P
        if np.linalg.eigvalsh(P).min() <= 0.0:
            raise CovarianceNotPD(f"filter covariance lost definiteness near t index {k + 1}")

    def smoother_rhs(msm, Psm, j):
        # j indexes the stored filter solution
        Pinv = np.linalg.inv(Ps[j])
        G = model.Q @ Pinv
        dm = model.A.T @ msm + G @ (msm - ms[j])
        B = model.A.T + G
        dP = B @ Psm + Psm @ B.T - model.Q
        return dm, dP

    # backward sweep with step 2h so RK4 stages hit stored filter values
    msmooth = np.empty((n_steps // 2 + 1, d))
    Psmooth = np.empty((n_steps // 2 + 1, d, d))
    mm = ms[-1].copy()
    PP = Ps[-1].copy()
    msmooth[-1], Psmooth[-1] = mm, PP
    hb = 2.0 * h
    for j in range(n_steps, 0, -2):
        k1m, k1P = smoother_rhs(mm, PP, j)
        k2m, k2P = smoother_rhs(mm - 0.5 * hb * k1m, PP - 0.5 * hb * k1P, j - 1)
        k3m, k3P = smoother_rhs(mm - 0.5 * hb * k2m, PP - 0.5 * hb * k2P, j - 1)
        k4m, k4P = smoother_rhs(mm - hb * k3m, PP - hb * k3P, j - 2)
        mm = mm - (hb / 6.0) * (k1m + 2 * k2m + 2 * k3m + k4m)
        PP = PP - (hb / 6.0) * (k1P + 2 * k2P + 2 * k3P + k4P)
        PP = 0.5 * (PP + PP.T)
        msmooth[(j - 2) // 2], Psmooth[(j - 2) // 2] = mm, PP
    # subsample the 2h grid back to the observation nodes
    stride = substeps
    if return_filter:
        return (
            msmooth[::stride].copy(),
            Psmooth[::stride].copy(),
            ms[:: 2 * substeps].copy(),
            Ps[:: 2 * substeps].copy(),
        )
    return msmooth[::stride].copy(), Psmooth[::stride].copy()


@dataclass
class LgPathwiseReference:
    """Quadratic-form parameters of the backward log field for scalar models.

    ``log_value(k, x) = alpha[k] + beta[k] x - gamma[k] x^2 / 2`` is the log of
    the unnormalized backward likelihood reweighted by the observation sample,
    i.e. the field whose terminal value is z_T H x.
    """

    times: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray

    def log_value(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.alpha[k] + self.beta[k] * x - 0.5 * self.gamma[k] * x * x


def lg_pathwise_reference(model: GaussianModel, obs: ObservationPath, substeps: int = 4) -> LgPathwiseReference:
    """Backward information-filter recursion in pathwise (log) coordinates.

    Scalar models only: the quadratic ansatz closes the backward equation into
    three ODEs for (gamma, beta, alpha), integrated with RK4 from the terminal
    values (0, z_T H, 0).
    """
    if model.d != 1:
        raise MalformedInput("the pathwise reference is implemented for scalar models")
    A = float(model.A[0, 0])
    H = float(model.H[0])
    q = float(model.Q[0, 0])
    N = obs.N
    dt = obs.dt
    z = obs.z
    gamma = np.empty(N + 1)
    beta = np.empty(N + 1)
    alpha = np.empty(N + 1)
    gamma[N] = 0.0
    beta[N] = z[-1] * H
    alpha[N] = 0.0

    def rhs(state, zval):
        g, b, a = state
        bt = b - zval * H
        dg = -2.0 * A * g + q * g * g - H * H
        db = -(A - q * g) * bt
        da = 0.5 * q * g - 0.5 * q * bt * bt
        return np.array([dg, db, da])

    state = np.array([gamma[N], beta[N], alpha[N]])
    h = dt / substeps
    for k in range(N, 0, -1):
        z0, z1 = z[k - 1], z[k]
        for s in range(substeps):
            # integrating backward: fractions walk from the right node down
            fa = 1.0 - s / substeps
            fm = 1.0 - (s + 0.5) / substeps
            fb = 1.0 - (s + 1.0) / substeps
            za = z0 + (z1 - z0) * fa
            zm = z0 + (z1 - z0) * fm
            zb = z0 + (z1 - z0) * fb
            k1 = rhs(state, za)
            k2 = rhs(state - 0.5 * h * k1, zm)
            k3 = rhs(state - 0.5 * h * k2, zm)
            k4 = rhs(state - h * k3, zb)
            state = state - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        gamma[k - 1], beta[k - 1], alpha[k - 1] = state
    return LgPathwiseReference(times=obs.times(), gamma=gamma, beta=beta, alpha=alpha)


# ---------------------------------------------------------------------------
# Monte-Carlo relative entropy between controlled and nominal chain laws


def mc_relative_entropy(model: CtmcModel, pi0, policy, n_mc: int, seed: int):
    """Sample mean and standard error of the pathwise log likelihood ratio.

    Controlled chains are simulated exactly (thinning against a per-state
    rate bound) with the policy held constant on each observation interval,
    taken from its left node. The log ratio accumulates the initial
    reweighting, the log control at every jump, and minus the time integral
    of the controlled exit-rate excess.
    """
    u = np.asarray(getattr(policy, "u", policy), dtype=float)
    timegrid = np.asarray(getattr(policy, "timegrid"), dtype=float)
    A = model.A
    nu0 = model.nu0
    pi0 = np.asarray(pi0, dtype=float)
    d = model.d
    N = timegrid.size - 1
    dt = float(timegrid[1] - timegrid[0])
    T = float(timegrid[-1])

    off_mask = ~np.eye(d, dtype=bool)
    R = A[None, :, :] * u[:N]  # (N, d, d) controlled rates, left nodes
    R = np.where(off_mask[None, :, :], R, 0.0)
    exit_rates = R.sum(axis=2)  # (N, d)
    # integrand of the exponent: sum_j A_ij u_ij = A_ii + controlled exit rate
    c = np.diag(A)[None, :] + exit_rates  # (N, d)
    cum = np.concatenate([np.zeros((1, d)), np.cumsum(c * dt, axis=0)])  # (N+1, d)
    bounds = exit_rates.max(axis=0)  # per-state thinning bound

    def c_integral(i, t0, t1):
        k0 = min(int(t0 / dt), N - 1)
        k1 = min(int(t1 / dt), N - 1)
        full = cum[k1, i] - cum[k0, i]
        return full - (t0 - k0 * dt) * c[k0, i] + (t1 - k1 * dt) * c[k1, i]

    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    x0s = rng.choice(d, size=n_mc, p=pi0)
    with np.errstate(divide="ignore"):
        log_init = np.log(pi0) - np.log(nu0)
    samples = np.empty(n_mc)
    for s in range(n_mc):
        i = int(x0s[s])
        logw = log_init[i]
        t = 0.0
        seg_start = 0.0
        while True:
            B = bounds[i]
            t_next = t + rng.exponential(1.0 / B) if B > 0 else T
            if t_next >= T:
                logw -= c_integral(i, seg_start, T)
                break
            t = t_next
            k = min(int(t / dt), N - 1)
            rate = exit_rates[k, i]
            if B <= 0 or rng.random() * B > rate:
                continue  # thinned candidate, no jump
            probs = R[k, i] / rate
            j = int(np.searchsorted(np.cumsum(probs), rng.random()))
            j = min(j, d - 1)
            logw += math.log(u[k, i, j])
            logw -= c_integral(i, seg_start, t)
            i = j
            seg_start = t
        samples[s] = logw
    est = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(n_mc))
    return est, stderr
