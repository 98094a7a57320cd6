"""Forward simulation of hidden states and observations.

All samplers draw from a counter-based Philox generator keyed by the seed, so
paths are bit-reproducible for fixed (model, T, N, seed) on a given platform.
A ``zero_noise`` flag replaces observation-noise increments by zero to build
deterministic fixtures.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from .errors import PathEscapedDomainWarning
from .models import (
    CtmcModel,
    CtmcPath,
    DiffusionModel1D,
    DiffusionPath,
    GaussianModel,
    ObservationPath,
    validate_ctmc,
    validate_diffusion,
)

log = logging.getLogger("dualsmooth")

__all__ = [
    "rng_from_seed",
    "simulate_ctmc",
    "simulate_diffusion",
    "simulate_gaussian",
    "simulate_observations",
]


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) so fixtures regenerate identically."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def simulate_ctmc(model: CtmcModel, T: float, seed: int) -> CtmcPath:
    """Exact jump-process sample: exponential holding times with rate
    ``-A[i][i]``, jump to j with probability ``A[i][j] / -A[i][i]``."""
    validate_ctmc(model)
    rng = rng_from_seed(seed)
    A = model.A
    d = model.d
    state = int(rng.choice(d, p=model.nu0))
    t = 0.0
    times = [0.0]
    states = [state + 1]
    while True:
        rate = -A[state, state]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= T:
            break
        probs = A[state].copy()
        probs[state] = 0.0
        probs /= rate
        state = int(rng.choice(d, p=probs))
        times.append(t)
        states.append(state + 1)
    return CtmcPath(T=T, times=np.array(times), states=np.array(states))


def _reflect(x: float, lo: float, hi: float) -> float:
    """Fold a point back into [lo, hi] by mirror reflection at the walls."""
    width = hi - lo
    y = (x - lo) % (2.0 * width)
    return lo + (y if y <= width else 2.0 * width - y)


def _sample_from_density(model: DiffusionModel1D, rng: np.random.Generator) -> float:
    """Inverse-CDF draw from the gridded prior density."""
    x = model.grid()
    dens = model.prior_on_grid()
    cdf = np.cumsum(dens) * model.dx
    cdf /= cdf[-1]
    u = rng.uniform()
    return float(np.interp(u, cdf, x))


def simulate_diffusion(model: DiffusionModel1D, T: float, N: int, seed: int) -> DiffusionPath:
    """Euler-Maruyama path on the uniform grid.

    Steps leaving [x_min, x_max] are reflected at the boundary (consistent
    with the zero-flux discretization) and counted; a warning reports the
    count.
    """
    validate_diffusion(model)
    rng = rng_from_seed(seed)
    dt = T / N
    sqdt = np.sqrt(dt)
    x = _sample_from_density(model, rng)
    values = np.empty(N + 1)
    values[0] = x
    lo, hi = model.x_min, model.x_max
    n_reflect = 0
    dw = rng.standard_normal(N) * sqdt
    for k in range(N):
        x = x + float(model.a(x)) * dt + float(model.sigma(x)) * dw[k]
        if x < lo or x > hi:
            n_reflect += 1
            x = _reflect(x, lo, hi)
        values[k + 1] = x
    if n_reflect:
        warnings.warn(
            f"diffusion path reflected at the domain boundary {n_reflect} times",
            PathEscapedDomainWarning,
            stacklevel=2,
        )
    return DiffusionPath(T=T, times=np.linspace(0.0, T, N + 1), values=values, n_reflections=n_reflect)


def simulate_gaussian(model: GaussianModel, T: float, N: int, seed: int) -> DiffusionPath:
    """Euler-Maruyama sample of the linear model dX = A^T X dt + sigma dB."""
    rng = rng_from_seed(seed)
    dt = T / N
    sqdt = np.sqrt(dt)
    d = model.d
    p = model.sigma.shape[1]
    x = rng.multivariate_normal(model.m0, model.Sigma0)
    values = np.empty((N + 1, d))
    values[0] = x
    dB = rng.standard_normal((N, p)) * sqdt
    AT = model.A.T
    for k in range(N):
        x = x + AT @ x * dt + model.sigma @ dB[k]
        values[k + 1] = x
    return DiffusionPath(T=T, times=np.linspace(0.0, T, N + 1), values=values)


def _h_values_on_grid(path, h, N: int) -> np.ndarray:
    """h(X_{t_k}) for k = 0..N, dispatching on the path representation."""
    if isinstance(path, CtmcPath):
        hvec = np.asarray(h, dtype=float).reshape(-1)
        return hvec[path.states_on_grid(N) - 1]
    if isinstance(path, DiffusionPath):
        vals = path.values
        if vals.ndim == 2:  # linear observation of a vector state
            hvec = np.asarray(h, dtype=float).reshape(-1)
            hx = vals @ hvec
        else:
            hx = np.asarray(h(vals), dtype=float) if callable(h) else np.asarray(h, dtype=float) * vals
        if hx.shape[0] == N + 1:
            return hx
        # resample a finer path onto the observation grid
        t = np.linspace(0.0, path.T, N + 1)
        return np.interp(t, path.times, hx)
    raise TypeError(f"unsupported path type {type(path).__name__}")


def simulate_observations(path, h, N: int, seed: int, zero_noise: bool = False) -> ObservationPath:
    """Cumulative observation z with z[k+1] = z[k] + h(X_{t_k}) dt + dW_k.

    ``h`` is the per-state value vector for chain paths and a callable (or a
    coefficient vector for vector states) for diffusion paths. ``zero_noise``
    drops the Wiener increments.
    """
    T = path.T
    dt = T / N
    hx = _h_values_on_grid(path, h, N)
    if zero_noise:
        dW = np.zeros(N)
    else:
        dW = rng_from_seed(seed).standard_normal(N) * np.sqrt(dt)
    z = np.zeros(N + 1)
    np.cumsum(hx[:-1] * dt + dW, out=z[1:])
    return ObservationPath(T=T, N=N, z=z)
