"""1-D Euclidean smoothing on a finite-difference grid.

The density-side operator (`Ldag`) is a conservative central-flux
discretization of f -> -(a f)' + ((sigma^2 f)'')/2 with zero flux at the
walls, so column sums vanish exactly and transported mass is conserved to
round-off. The function-side operator is its exact transpose ``L = Ldag^T``,
which in the interior is the standard second-order stencil for
f -> a f' + sigma^2 f''/2 with face-averaged advection, and whose rows sum to
zero (constants are harmonic). Using an exact transpose pair makes the
discrete duality <L f, g> = <f, Ldag g> hold to machine precision, which in
turn pins the conservation diagnostics (unit mass, constant log-normalizer)
at solver accuracy instead of discretization accuracy.

Log-domain fields are integrated in ratio form: exponentials only ever see
differences of neighboring field values, the localized version of
max-subtraction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    CFLViolation,
    DegeneratePrior,
    GridTooCoarseWarning,
    NumericalBlowup,
)
from .models import DiffusionModel1D, ObservationPath, validate_diffusion

__all__ = [
    "GridOperators",
    "SmoothingSolutionG",
    "GridSmootherResult",
    "build_grid_operators",
    "stable_substeps",
    "integrate_lambda_backward_pde",
    "integrate_mu_forward_pde",
    "optimal_control_field",
    "integrate_pi_forward_pde",
    "optimal_pi0_grid",
    "smoothing_distribution_grid",
    "log_normalizers_grid",
    "hjb_residual",
    "cost_J_grid",
    "interior_slice",
    "solve",
]

FIELD_GUARD = 1e6
CFL_SAFETY = 0.4


@dataclass
class GridOperators:
    """Discretized generator/adjoint pair on cell centers.

    Bands follow the convention ``B[i, i-1] = lo[i]``, ``B[i, i] = d0[i]``,
    ``B[i, i+1] = up[i]``; ``*_dag`` bands belong to the density operator,
    ``*_gen`` to its transpose acting on functions.
    """

    x: np.ndarray
    dx: float
    a: np.ndarray
    sigma: np.ndarray
    h: np.ndarray
    lo_dag: np.ndarray
    d0_dag: np.ndarray
    up_dag: np.ndarray
    lo_gen: np.ndarray
    d0_gen: np.ndarray
    up_gen: np.ndarray
    peclet: float

    @property
    def n(self) -> int:
        return self.x.size

    def apply_generator(self, f: np.ndarray) -> np.ndarray:
        return _kernels.band_apply(self.lo_gen, self.d0_gen, self.up_gen, np.asarray(f, float))

    def apply_adjoint(self, f: np.ndarray) -> np.ndarray:
        return _kernels.band_apply(self.lo_dag, self.d0_dag, self.up_dag, np.asarray(f, float))

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Central differences, second-order one-sided at the walls."""
        f = np.asarray(f, dtype=float)
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - f[:-2]) / (2.0 * self.dx)
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * self.dx)
        out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * self.dx)
        return out

    def _dense(self, lo, d0, up) -> np.ndarray:
        n = self.n
        M = np.zeros((n, n))
        M[np.arange(n), np.arange(n)] = d0
        M[np.arange(1, n), np.arange(n - 1)] = lo[1:]
        M[np.arange(n - 1), np.arange(1, n)] = up[:-1]
        return M

    def generator_matrix(self) -> np.ndarray:
        return self._dense(self.lo_gen, self.d0_gen, self.up_gen)

    def adjoint_matrix(self) -> np.ndarray:
        return self._dense(self.lo_dag, self.d0_dag, self.up_dag)


@dataclass
class SmoothingSolutionG:
    timegrid: np.ndarray
    x: np.ndarray
    mu: np.ndarray  # (N+1, n)
    lam: np.ndarray  # (N+1, n)
    pi: np.ndarray  # (N+1, n), densities with sum * dx = 1
    u: np.ndarray  # (N+1, n) control field values
    logC: float


@dataclass
class GridSmootherResult:
    solution: SmoothingSolutionG
    pi0: np.ndarray
    pi_controlled: np.ndarray
    route_equivalence_linf: float
    mass_drift: float
    log_normalizer_spread: float
    hjb_residual_max: float
    J_opt: float
    substeps: int


def build_grid_operators(model: DiffusionModel1D) -> GridOperators:
    """Assemble the flux-form density operator and its transpose.

    Warns (and proceeds) when the cell Peclet number max |a| dx / sigma^2
    exceeds 2, where the central scheme loses its sign structure.
    """
    validate_diffusion(model)
    x = model.grid()
    dx = model.dx
    n = x.size
    a = np.asarray(model.a(x), dtype=float)
    sig = np.asarray(model.sigma(x), dtype=float)
    hg = np.asarray(model.h(x), dtype=float)
    sig2 = sig * sig

    peclet = float(np.max(np.abs(a)) * dx / np.min(sig2)) if n else 0.0
    if peclet > 2.0:
        warnings.warn(
            f"cell Peclet number {peclet:.3g} > 2; advection underresolved on this grid",
            GridTooCoarseWarning,
            stacklevel=2,
        )

    # density flux through face f (between cells f and f+1):
    # J_f = abar_f (rho_f + rho_{f+1})/2 - (sig2_{f+1} rho_{f+1} - sig2_f rho_f) / (2 dx)
    abar = 0.5 * (a[:-1] + a[1:])
    Pf = 0.5 * abar + sig2[:-1] / (2.0 * dx)  # coefficient of rho_f
    Qf = 0.5 * abar - sig2[1:] / (2.0 * dx)  # coefficient of rho_{f+1}

    lo_dag = np.zeros(n)
    d0_dag = np.zeros(n)
    up_dag = np.zeros(n)
    lo_dag[1:] = Pf / dx
    up_dag[:-1] = -Qf / dx
    d0_dag[0] = -Pf[0] / dx
    d0_dag[-1] = Qf[-1] / dx
    d0_dag[1:-1] = (Qf[:-1] - Pf[1:]) / dx

    lo_gen = np.zeros(n)
    up_gen = np.zeros(n)
    lo_gen[1:] = up_dag[:-1]
    up_gen[:-1] = lo_dag[1:]

    return GridOperators(
        x=x,
        dx=dx,
        a=a,
        sigma=sig,
        h=hg,
        lo_dag=lo_dag,
        d0_dag=d0_dag,
        up_dag=up_dag,
        lo_gen=lo_gen,
        d0_gen=d0_dag.copy(),
        up_gen=up_gen,
        peclet=peclet,
    )


def stable_substeps(ops: GridOperators, dt: float, safety: float = CFL_SAFETY) -> int:
    """Substeps per observation interval from the explicit diffusion limit
    dt_internal <= safety * dx^2 / max sigma^2."""
    sig2max = float(np.max(ops.sigma**2))
    if sig2max <= 0.0:
        return 1
    dt_internal = safety * ops.dx * ops.dx / sig2max
    return max(1, int(math.ceil(dt / dt_internal)))


def _resolve(model, obs, ops, substeps):
    if ops is None:
        ops = build_grid_operators(model)
    if substeps is None:
        substeps = stable_substeps(ops, obs.dt)
    return ops, int(substeps)


def _check_field(name: str, field: np.ndarray, substeps: int, needed: int):
    bad = ~np.isfinite(field) | (np.abs(field) > FIELD_GUARD)
    if bad.any():
        k = int(np.argmax(bad.any(axis=1)))
        if substeps < needed:
            raise CFLViolation(
                f"{name} went unstable at time index {k} with {substeps} substeps; "
                f"the diffusion limit suggests at least {needed}"
            )
        raise NumericalBlowup(name, k)
    return field


def integrate_lambda_backward_pde(
    model: DiffusionModel1D, obs: ObservationPath, substeps: int | None = None, ops: GridOperators | None = None
) -> np.ndarray:
    """Backward log-domain field from lam_N = z_N h(x), generator side."""
    ops, substeps = _resolve(model, obs, ops, substeps)
    yT = obs.z[-1] * ops.h
    rev = _kernels.grid_pathwise_sweep(
        ops.lo_gen, ops.d0_gen, ops.up_gen, ops.h, -obs.z[::-1], obs.dt, substeps, yT
    )
    lam = rev[::-1].copy()
    lam[-1] = yT
    return _check_field("lambda", lam, substeps, stable_substeps(ops, obs.dt))


def integrate_mu_forward_pde(
    model: DiffusionModel1D, obs: ObservationPath, substeps: int | None = None, ops: GridOperators | None = None
) -> np.ndarray:
    """Forward log-domain field from mu_0 = log nu0 on the grid, adjoint side."""
    ops, substeps = _resolve(model, obs, ops, substeps)
    prior = model.prior_on_grid()
    if np.any(prior <= 0.0):
        raise DegeneratePrior("grid prior must be strictly positive for the log-domain sweep")
    y0 = np.log(prior)
    mu = _kernels.grid_pathwise_sweep(
        ops.lo_dag, ops.d0_dag, ops.up_dag, ops.h, obs.z, obs.dt, substeps, y0
    )
    return _check_field("mu", mu, substeps, stable_substeps(ops, obs.dt))


def _lambda_derivatives(ops: GridOperators, z: np.ndarray, lam: np.ndarray) -> np.ndarray:
    out = np.empty_like(lam)
    for k in range(lam.shape[0]):
        out[k] = -_kernels.grid_pathwise_rhs(
            ops.lo_gen, ops.d0_gen, ops.up_gen, ops.h, -z[k], lam[k]
        )
    return out


def _hermite_midpoints(y, ydot, dt):
    return 0.5 * (y[:-1] + y[1:]) + (dt / 8.0) * (ydot[:-1] - ydot[1:])


def optimal_control_field(
    lam: np.ndarray, obs: ObservationPath, model: DiffusionModel1D, ops: GridOperators | None = None
) -> np.ndarray:
    """u_t(x) = sigma(x) d/dx (lam - z h)(x) row by row."""
    if ops is None:
        ops = build_grid_operators(model)
    z = obs.z
    u = np.empty_like(lam)
    for k in range(lam.shape[0]):
        u[k] = ops.sigma * ops.gradient(lam[k] - z[k] * ops.h)
    return u


def _control_midpoints(ops: GridOperators, obs: ObservationPath, lam: np.ndarray) -> np.ndarray:
    """Stage-accurate interval-midpoint control fields via Hermite on lam."""
    ldot = _lambda_derivatives(ops, obs.z, lam)
    lam_mid = _hermite_midpoints(lam, ldot, obs.dt)
    z_mid = 0.5 * (obs.z[:-1] + obs.z[1:])
    u_mid = np.empty_like(lam_mid)
    for k in range(lam_mid.shape[0]):
        u_mid[k] = ops.sigma * ops.gradient(lam_mid[k] - z_mid[k] * ops.h)
    return u_mid


def integrate_pi_forward_pde(
    model: DiffusionModel1D,
    u: np.ndarray,
    pi0: np.ndarray,
    obs: ObservationPath,
    substeps: int | None = None,
    ops: GridOperators | None = None,
    return_drift: bool = False,
):
    """Controlled transport of the density under drift field sigma * u."""
    ops, substeps = _resolve(model, obs, ops, substeps)
    su = ops.sigma[None, :] * np.asarray(u, dtype=float)
    pi, drift = _kernels.grid_transport_sweep(
        ops.lo_dag, ops.d0_dag, ops.up_dag, su, np.asarray(pi0, float), obs.dt, ops.dx, substeps
    )
    _check_field("pi", pi, substeps, stable_substeps(ops, obs.dt))
    if return_drift:
        return pi, drift
    return pi


def optimal_pi0_grid(nu0_grid: np.ndarray, lambda0: np.ndarray, dx: float):
    """Density nu0 e^{lambda0} / C on the grid and log C (cell-sum quadrature)."""
    nu0_grid = np.asarray(nu0_grid, dtype=float)
    lambda0 = np.asarray(lambda0, dtype=float)
    with np.errstate(divide="ignore"):
        w = np.where(nu0_grid > 0, np.log(np.where(nu0_grid > 0, nu0_grid, 1.0)) + lambda0, -np.inf)
    m = w.max()
    if not np.isfinite(m):
        raise DegeneratePrior()
    e = np.exp(w - m)
    total = e.sum() * dx
    logC = m + np.log(total)
    if not np.isfinite(logC):
        raise DegeneratePrior()
    return e / total, float(logC)


def log_normalizers_grid(mu: np.ndarray, lam: np.ndarray, dx: float) -> np.ndarray:
    s = mu + lam
    m = s.max(axis=1)
    return m + np.log(np.exp(s - m[:, None]).sum(axis=1) * dx)


def smoothing_distribution_grid(mu: np.ndarray, lam: np.ndarray, dx: float):
    lognorms = log_normalizers_grid(mu, lam, dx)
    pi = np.exp(mu + lam - lognorms[:, None])
    pi /= pi.sum(axis=1, keepdims=True) * dx
    return pi, float(lognorms[0])


def interior_slice(n: int, frac: float = 0.1) -> slice:
    """Cells away from the walls (one-sided stencils and truncation live there)."""
    k = max(2, int(math.ceil(frac * n)))
    return slice(k, n - k)


def hjb_residual(
    lam: np.ndarray, obs: ObservationPath, model: DiffusionModel1D, ops: GridOperators | None = None
):
    """Dynamic-programming residual of the value field V = -lam.

    Evaluates -dV/dt - L(V + z h) - h^2/2 + |sigma d/dx (V + z h)|^2 / 2 with
    the same grid operators used by the sweeps. The time derivative is the
    per-interval difference quotient and all fields are taken at interval
    midpoints, where the piecewise-linear observation keeps them smooth, so
    the residual vanishes at the discretization order. Returns (midpoint
    times, residual array of shape (N, n)).
    """
    if ops is None:
        ops = build_grid_operators(model)
    z = obs.z
    dt = obs.dt
    N = lam.shape[0] - 1
    V = -lam
    res = np.empty((N, lam.shape[1]))
    for k in range(N):
        dVdt = (V[k + 1] - V[k]) / dt
        vbar = 0.5 * (V[k] + V[k + 1])
        zbar = 0.5 * (z[k] + z[k + 1])
        w = vbar + zbar * ops.h
        grad = ops.sigma * ops.gradient(w)
        res[k] = -dVdt - ops.apply_generator(w) - 0.5 * ops.h**2 + 0.5 * grad * grad
    t_mid = 0.5 * (obs.times()[:-1] + obs.times()[1:])
    return t_mid, res


# ---------------------------------------------------------------------------
# control cost on the grid


def _lagrangian_values_grid(ops: GridOperators, z_rows, pi_rows, u_rows):
    """L(rho, v; y) = <rho, v^2 + h^2>/2 + y <rho, L h + sigma v (Gh)> with
    cell-sum quadrature."""
    dx = ops.dx
    Lh = ops.apply_generator(ops.h)
    Gh = ops.gradient(ops.h)
    out = np.empty(pi_rows.shape[0])
    for k in range(pi_rows.shape[0]):
        quad = 0.5 * (u_rows[k] ** 2 + ops.h**2)
        drift_term = Lh + ops.sigma * u_rows[k] * Gh
        out[k] = (pi_rows[k] * quad).sum() * dx + z_rows[k] * (pi_rows[k] * drift_term).sum() * dx
    return out


def kl_divergence_grid(p: np.ndarray, q: np.ndarray, dx: float) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p > 0) & (q == 0)):
        return float("inf")
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])) * dx)


def cost_J_grid(
    model: DiffusionModel1D,
    pi0: np.ndarray,
    u: np.ndarray,
    u_mid: np.ndarray,
    obs: ObservationPath,
    substeps: int | None = None,
    ops: GridOperators | None = None,
) -> float:
    """Objective along the transported density, per-interval Simpson in time."""
    ops, substeps = _resolve(model, obs, ops, substeps)
    pi = integrate_pi_forward_pde(model, u, pi0, obs, substeps=substeps, ops=ops)
    su = ops.sigma[None, :] * u
    pidot = np.empty_like(pi)
    for k in range(pi.shape[0]):
        pidot[k] = _kernels.grid_transport_rhs(
            ops.lo_dag, ops.d0_dag, ops.up_dag, su[k], pi[k], ops.dx
        )
    pi_mid = _hermite_midpoints(pi, pidot, obs.dt)
    z = obs.z
    z_mid = 0.5 * (z[:-1] + z[1:])
    L_nodes = _lagrangian_values_grid(ops, z, pi, u)
    L_mid = _lagrangian_values_grid(ops, z_mid, pi_mid, u_mid)
    integral = (obs.dt / 6.0) * np.sum(L_nodes[:-1] + 4.0 * L_mid + L_nodes[1:])
    nu0 = model.prior_on_grid()
    terminal = z[-1] * float((pi[-1] * ops.h).sum() * ops.dx)
    return kl_divergence_grid(pi0, nu0, ops.dx) + integral - terminal


# ---------------------------------------------------------------------------
# driver


def solve(
    model: DiffusionModel1D,
    obs: ObservationPath,
    substeps: int | None = None,
    ops: GridOperators | None = None,
    hjb_interior_frac: float = 0.1,
) -> GridSmootherResult:
    ops, substeps = _resolve(model, obs, ops, substeps)
    lam = integrate_lambda_backward_pde(model, obs, substeps=substeps, ops=ops)
    mu = integrate_mu_forward_pde(model, obs, substeps=substeps, ops=ops)
    pi_prod, _ = smoothing_distribution_grid(mu, lam, ops.dx)
    lognorms = log_normalizers_grid(mu, lam, ops.dx)
    pi0, logC = optimal_pi0_grid(model.prior_on_grid(), lam[0], ops.dx)
    u = optimal_control_field(lam, obs, model, ops=ops)
    u_mid = _control_midpoints(ops, obs, lam)
    pi_ctrl, drift = integrate_pi_forward_pde(
        model, u, pi0, obs, substeps=substeps, ops=ops, return_drift=True
    )
    inner = interior_slice(ops.n, hjb_interior_frac)
    _, res = hjb_residual(lam, obs, model, ops=ops)
    solution = SmoothingSolutionG(
        timegrid=obs.times(), x=ops.x, mu=mu, lam=lam, pi=pi_prod, u=u, logC=logC
    )
    return GridSmootherResult(
        solution=solution,
        pi0=pi0,
        pi_controlled=pi_ctrl,
        route_equivalence_linf=float(np.max(np.abs(pi_prod[:, inner] - pi_ctrl[:, inner]))),
        mass_drift=float(drift),
        log_normalizer_spread=float(lognorms.max() - lognorms.min()),
        hjb_residual_max=float(np.max(np.abs(res[:, inner]))),
        J_opt=cost_J_grid(model, pi0, u, u_mid, obs, substeps=substeps, ops=ops),
        substeps=substeps,
    )
