"""Model and path containers, validation, presets and JSON (de)serialization.

Three model families are supported:

* :class:`CtmcModel` -- finite-state Markov chain with a rate-matrix
  generator ``A`` (zero row sums, nonnegative off-diagonal rates), a vector
  ``h`` of per-state observation values and a prior ``nu0``.
* :class:`DiffusionModel1D` -- scalar Ito diffusion ``dX = a(X)dt + sigma(X)dB``
  observed through ``h(X)``, discretized on ``n`` uniform cells of
  ``[x_min, x_max]``.
* :class:`GaussianModel` -- linear drift ``a(x) = A^T x``, linear observation
  ``h(x) = H^T x``, constant noise matrix ``sigma`` and Gaussian prior.

Scalar-function fields of the diffusion model can be given as callables or as
named presets (``"zero"``, ``"ou"``, ``"linear:c"``, ``"const:c"``,
``"cubic-well"``, ``"gauss:m,s"``) so models round-trip through JSON.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BadPrior, MalformedInput, NegativeRate, RowSumNonzero

log = logging.getLogger("dualsmooth")

__all__ = [
    "CtmcModel",
    "DiffusionModel1D",
    "GaussianModel",
    "ObservationPath",
    "CtmcPath",
    "DiffusionPath",
    "validate_ctmc",
    "validate_diffusion",
    "validate_gaussian",
    "resolve_preset",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "save_model",
    "load_observations",
    "save_observations",
]

_ROWSUM_TOL = 1e-12
_PRIOR_TOL = 1e-12


# ---------------------------------------------------------------------------
# function presets


def _parse_args(spec: str) -> list[float]:
    _, _, tail = spec.partition(":")
    if not tail:
        return []
    return [float(tok) for tok in tail.split(",")]


def resolve_preset(spec):
    """Turn a preset string into a vectorized scalar function of x.

    Accepted forms: ``zero``, ``const:c``, ``linear:c`` (c*x), ``ou`` or
    ``ou:theta`` (-theta*x), ``cubic-well`` (x - x^3, the negative gradient
    of the double-well potential x^4/4 - x^2/2) and ``gauss:m,s`` (normal
    density). Callables pass through unchanged.
    """
    if callable(spec):
        return spec
    if not isinstance(spec, str):
        raise MalformedInput(f"cannot interpret function spec {spec!r}")
    name = spec.split(":", 1)[0]
    args = _parse_args(spec)
    if name == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if name == "const":
        c = args[0] if args else 1.0
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if name == "linear":
        c = args[0] if args else 1.0
        return lambda x: c * np.asarray(x, dtype=float)
    if name == "ou":
        theta = args[0] if args else 1.0
        return lambda x: -theta * np.asarray(x, dtype=float)
    if name == "cubic-well":
        return lambda x: np.asarray(x, dtype=float) - np.asarray(x, dtype=float) ** 3
    if name == "gauss":
        m = args[0] if args else 0.0
        s = args[1] if len(args) > 1 else 1.0
        c = 1.0 / (s * math.sqrt(2.0 * math.pi))
        return lambda x: c * np.exp(-0.5 * ((np.asarray(x, dtype=float) - m) / s) ** 2)
    raise MalformedInput(f"unknown function preset {name!r}")


# ---------------------------------------------------------------------------
# models


@dataclass
class CtmcModel:
    """Finite-state hidden Markov model.

    Attributes
    ----------
    d : number of states.
    A : (d, d) rate matrix; ``A[i][j]`` (i != j) is the jump rate from state
        i+1 to state j+1, rows sum to zero.
    h : (d,) observation value per state.
    nu0 : (d,) prior probability vector.
    """

    d: int
    A: np.ndarray
    h: np.ndarray
    nu0: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        self.nu0 = np.asarray(self.nu0, dtype=float).reshape(-1)

    def validate(self) -> "CtmcModel":
        validate_ctmc(self)
        return self


def validate_ctmc(model: CtmcModel, tol: float = _ROWSUM_TOL) -> None:
    """Check the generator/prior invariants; raise a named error on failure."""
    d, A, nu0 = model.d, model.A, model.nu0
    if d < 1:
        raise MalformedInput("state count must be >= 1")
    if A.shape != (d, d):
        raise MalformedInput(f"A has shape {A.shape}, expected {(d, d)}")
    if model.h.shape != (d,) or nu0.shape != (d,):
        raise MalformedInput("h and nu0 must be d-vectors")
    if not np.all(np.isfinite(A)):
        raise MalformedInput("A contains non-finite entries")
    off = A - np.diag(np.diag(A))
    bad = np.argwhere(off < 0)
    if bad.size:
        i, j = bad[0]
        raise NegativeRate(int(i), int(j), float(A[i, j]))
    rowsum = A.sum(axis=1)
    worst = int(np.argmax(np.abs(rowsum)))
    if abs(rowsum[worst]) > tol:
        raise RowSumNonzero(worst, float(rowsum[worst]))
    if np.any(nu0 < 0):
        i = int(np.argmax(nu0 < 0))
        raise BadPrior(f"nu0[{i}] = {nu0[i]:.3e} is negative")
    if abs(nu0.sum() - 1.0) > _PRIOR_TOL:
        raise BadPrior(f"nu0 sums to {nu0.sum():.15g}, expected 1")


@dataclass
class DiffusionModel1D:
    """Scalar Ito diffusion with its finite-difference discretization window.

    ``a``, ``sigma``, ``h`` and ``nu0`` may be callables or preset strings;
    they are resolved to callables on construction, the original spec strings
    are kept for serialization.
    """

    a: Callable
    sigma: Callable
    h: Callable
    nu0: Callable
    x_min: float
    x_max: float
    n: int
    _specs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        specs = {}
        for name in ("a", "sigma", "h", "nu0"):
            raw = getattr(self, name)
            if isinstance(raw, str):
                specs[name] = raw
            setattr(self, name, resolve_preset(raw))
        self._specs = {**specs, **self._specs}

    def grid(self) -> np.ndarray:
        """Cell centers of the uniform discretization."""
        dx = self.dx
        return self.x_min + dx * (np.arange(self.n) + 0.5)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    def prior_on_grid(self) -> np.ndarray:
        """Prior density sampled at cell centers, renormalized to unit mass."""
        x = self.grid()
        raw = np.asarray(self.nu0(x), dtype=float)
        total = raw.sum() * self.dx
        return raw / total

    def validate(self) -> "DiffusionModel1D":
        validate_diffusion(self)
        return self


def validate_diffusion(model: DiffusionModel1D) -> None:
    if model.n < 8:
        raise MalformedInput(f"grid needs n >= 8 cells, got {model.n}")
    if not model.x_max > model.x_min:
        raise MalformedInput("domain must satisfy x_max > x_min")
    x = model.grid()
    sig = np.asarray(model.sigma(x), dtype=float)
    if np.any(~np.isfinite(sig)) or np.any(sig <= 0):
        i = int(np.argmin(sig))
        raise MalformedInput(f"sigma must be strictly positive on the grid; sigma(x[{i}]) = {sig[i]:.3e}")
    raw = np.asarray(model.nu0(x), dtype=float)
    if np.any(raw < 0):
        i = int(np.argmax(raw < 0))
        raise BadPrior(f"nu0(x[{i}]) = {raw[i]:.3e} is negative")
    total = raw.sum() * model.dx
    if not np.isfinite(total) or total <= 0:
        raise BadPrior("nu0 has no mass on the grid")
    if abs(total - 1.0) > 1e-2:
        raise BadPrior(f"nu0 integrates to {total:.6g} on the grid, expected 1 (within 1e-2)")
    if abs(total - 1.0) > 1e-8:
        log.info("prior renormalized on the grid (raw mass %.12g)", total)
    # domain should cover at least 6 prior standard deviations
    dens = raw / total
    m = (x * dens).sum() * model.dx
    var = ((x - m) ** 2 * dens).sum() * model.dx
    sd = math.sqrt(max(var, 0.0))
    if sd > 0 and (model.x_max - model.x_min) < 6.0 * sd:
        log.warning(
            "domain [%g, %g] is narrower than 6 prior standard deviations (sd=%.3g)",
            model.x_min,
            model.x_max,
            sd,
        )


@dataclass
class GaussianModel:
    """Linear-Gaussian model: drift a(x) = A^T x, observation h(x) = H^T x."""

    A: np.ndarray
    H: np.ndarray
    sigma: np.ndarray
    m0: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.H = np.asarray(self.H, dtype=float).reshape(-1)
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        self.m0 = np.asarray(self.m0, dtype=float).reshape(-1)
        self.Sigma0 = np.atleast_2d(np.asarray(self.Sigma0, dtype=float))

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def Q(self) -> np.ndarray:
        return self.sigma @ self.sigma.T

    def validate(self) -> "GaussianModel":
        validate_gaussian(self)
        return self


def validate_gaussian(model: GaussianModel) -> None:
    d = model.d
    if model.A.shape != (d, d):
        raise MalformedInput("A must be square")
    if model.H.shape != (d,) or model.m0.shape != (d,):
        raise MalformedInput("H and m0 must be d-vectors")
    if model.sigma.shape[0] != d:
        raise MalformedInput("sigma must have d rows")
    S0 = model.Sigma0
    if S0.shape != (d, d) or not np.allclose(S0, S0.T, atol=1e-12):
        raise MalformedInput("Sigma0 must be symmetric d x d")
    if np.linalg.eigvalsh(S0).min() <= 0:
        raise MalformedInput("Sigma0 must be positive definite")
    Q = model.Q
    if np.linalg.eigvalsh(Q).min() < -1e-12:
        raise MalformedInput("Q = sigma sigma^T must be positive semidefinite")


# ---------------------------------------------------------------------------
# paths


@dataclass
class ObservationPath:
    """Cumulative observation process sampled on a uniform grid of [0, T]."""

    T: float
    N: int
    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(-1)
        if self.z.shape != (self.N + 1,):
            raise MalformedInput(f"z has length {self.z.size}, expected N+1 = {self.N + 1}")
        if self.z[0] != 0.0:
            raise MalformedInput("observation path must start at z[0] = 0")
        if not np.all(np.isfinite(self.z)):
            raise MalformedInput("observation path contains non-finite entries")

    @property
    def dt(self) -> float:
        return self.T / self.N

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def at(self, t) -> np.ndarray:
        """Piecewise-linear value between samples."""
        return np.interp(t, self.times(), self.z)


@dataclass
class CtmcPath:
    """Jump-time representation of a chain path; states are 1-based labels."""

    T: float
    times: np.ndarray  # jump instants, times[0] = 0
    states: np.ndarray  # state after each instant, in {1..d}

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.states = np.asarray(self.states, dtype=int).reshape(-1)
        if self.times.shape != self.states.shape or self.times[0] != 0.0:
            raise MalformedInput("path needs matching times/states with times[0] = 0")
        if np.any(self.states < 1):
            raise MalformedInput("CTMC states are 1-based labels")

    def states_on_grid(self, N: int) -> np.ndarray:
        """State occupied at each grid time t_k = k*T/N (right-continuous)."""
        t = np.linspace(0.0, self.T, N + 1)
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.states[idx]


@dataclass
class DiffusionPath:
    """Euler-Maruyama sample on a uniform grid; values may be (N+1,) or (N+1, d)."""

    T: float
    times: np.ndarray
    values: np.ndarray
    n_reflections: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise MalformedInput("diffusion path contains non-finite values")


# ---------------------------------------------------------------------------
# JSON round-trip


def model_to_dict(model) -> dict:
    if isinstance(model, CtmcModel):
        return {
            "kind": "ctmc",
            "d": model.d,
            "A": model.A.tolist(),
            "h": model.h.tolist(),
            "nu0": model.nu0.tolist(),
        }
    if isinstance(model, DiffusionModel1D):
        missing = [k for k in ("a", "sigma", "h", "nu0") if k not in model._specs]
        if missing:
            raise MalformedInput(
                f"diffusion model fields {missing} were given as callables; only preset-backed models serialize"
            )
        return {
            "kind": "diffusion1d",
            "a": model._specs["a"],
            "sigma": model._specs["sigma"],
            "h": model._specs["h"],
            "nu0": model._specs["nu0"],
            "domain": [model.x_min, model.x_max],
            "n": model.n,
        }
    if isinstance(model, GaussianModel):
        return {
            "kind": "gaussian",
            "A": model.A.tolist(),
            "H": model.H.tolist(),
            "sigma": model.sigma.tolist(),
            "m0": model.m0.tolist(),
            "Sigma0": model.Sigma0.tolist(),
        }
    raise MalformedInput(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind is None:  # infer from the schema
        if {"d", "A", "h", "nu0"} <= payload.keys():
            kind = "ctmc"
        elif {"domain", "n"} <= payload.keys():
            kind = "diffusion1d"
        elif {"H", "Sigma0"} <= payload.keys():
            kind = "gaussian"
        else:
            raise MalformedInput("cannot infer model kind from JSON keys")
    try:
        if kind == "ctmc":
            model = CtmcModel(d=int(payload["d"]), A=payload["A"], h=payload["h"], nu0=payload["nu0"])
            validate_ctmc(model)
            return model
        if kind == "diffusion1d":
            lo, hi = payload["domain"]
            model = DiffusionModel1D(
                a=payload["a"],
                sigma=payload["sigma"],
                h=payload["h"],
                nu0=payload["nu0"],
                x_min=float(lo),
                x_max=float(hi),
                n=int(payload["n"]),
            )
            validate_diffusion(model)
            return model
        if kind == "gaussian":
            model = GaussianModel(
                A=payload["A"],
                H=payload["H"],
                sigma=payload["sigma"],
                m0=payload["m0"],
                Sigma0=payload["Sigma0"],
            )
            validate_gaussian(model)
            return model
    except KeyError as exc:
        raise MalformedInput(f"model JSON is missing key {exc}") from exc
    raise MalformedInput(f"unknown model kind {kind!r}")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_observations(path) -> ObservationPath:
    with open(path) as fh:
        payload = json.load(fh)
    try:
        return ObservationPath(T=float(payload["T"]), N=int(payload["N"]), z=payload["z"])
    except KeyError as exc:
        raise MalformedInput(f"observation JSON is missing key {exc}") from exc


def save_observations(obs: ObservationPath, path) -> None:
    with open(path, "w") as fh:
        json.dump({"T": obs.T, "N": obs.N, "z": obs.z.tolist()}, fh)


def as_observation(obj) -> ObservationPath:
    if isinstance(obj, ObservationPath):
        return obj
    if isinstance(obj, (str,)) or hasattr(obj, "__fspath__"):
        return load_observations(obj)
    if isinstance(obj, dict):
        return ObservationPath(T=float(obj["T"]), N=int(obj["N"]), z=obj["z"])
    if isinstance(obj, Sequence):
        z = np.asarray(obj, dtype=float)
        return ObservationPath(T=float(len(z) - 1), N=len(z) - 1, z=z)
    raise MalformedInput(f"cannot interpret observations of type {type(obj).__name__}")
