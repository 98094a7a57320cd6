"""Named verification checks binding solvers to their oracles.

Each check runs one measurable criterion on the bundled fixtures and returns
its measured value, threshold and verdict; the CLI ``verify`` subcommand and
the acceptance test suite both drive this module, so there is a single source
of truth for what "correct" means.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import finite, gaussian, grid, oracles
from .models import load_model, load_observations

__all__ = [
    "CheckResult",
    "DEFAULT_THRESHOLDS",
    "fixture_path",
    "load_fixture_model",
    "load_fixture_observations",
    "run_all",
    "report_dict",
]


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    op: str  # "<=" or ">="
    passed: bool
    seconds: float

    @staticmethod
    def build(name, value, threshold, op="<=", seconds=0.0) -> "CheckResult":
        value = float(value)
        passed = value <= threshold if op == "<=" else value >= threshold
        return CheckResult(name, value, float(threshold), op, bool(passed), float(seconds))


DEFAULT_THRESHOLDS = {
    "finite_route_equivalence": 1e-6,
    "finite_route_runtime": 1.0,
    "finite_hmm_oracle": 1e-3,
    "finite_hmm_runtime": 10.0,
    "finite_optimality_margin": 0.0,
    "finite_cost_identity": 1e-6,
    "finite_unconditioned": 1e-8,
    "finite_unit_mass": 1e-8,
    "finite_lognorm_const": 1e-6,
    "lg_rts_coincidence": 1e-6,
    "lg_cost_forms": 1e-6,
    "grid_rts_mean": 2e-2,
    "grid_spatial_order": 1.7,
    "grid_suite_runtime": 30.0,
    "grid_hjb_monotone": 1.0,
    "grid_hjb_finest": 1e-2,
    "grid_unit_mass": 1e-8,
    "grid_lognorm_const": 1e-4,
    "mc_entropy_zscore": 3.0,
}

_PERTURBATION_SEED = 7_000
_MC_SEED = 9_000


def fixture_path(name: str):
    return resources.files("dualsmooth").joinpath("fixtures", name)


def load_fixture_model(name: str):
    with resources.as_file(fixture_path(name)) as p:
        return load_model(p)


def load_fixture_observations(name: str):
    with resources.as_file(fixture_path(name)) as p:
        return load_observations(p)


def load_default_thresholds() -> dict:
    with resources.as_file(fixture_path("thresholds.json")) as p:
        with open(p) as fh:
            return json.load(fh)


def _thr(thresholds: dict, name: str) -> float:
    return float(thresholds.get(name, DEFAULT_THRESHOLDS[name]))


# ---------------------------------------------------------------------------
# finite-state checks


def check_finite(thresholds: dict) -> list[CheckResult]:
    model = load_fixture_model("model_f3.json")
    obs = load_fixture_observations("obs_f3.json")
    out = []

    t0 = time.perf_counter()
    result = finite.solve(model, obs)
    dt_solve = time.perf_counter() - t0
    out.append(
        CheckResult.build(
            "finite_route_equivalence",
            result.route_equivalence_linf,
            _thr(thresholds, "finite_route_equivalence"),
            seconds=dt_solve,
        )
    )
    out.append(
        CheckResult.build(
            "finite_route_runtime", dt_solve, _thr(thresholds, "finite_route_runtime"), seconds=dt_solve
        )
    )

    t0 = time.perf_counter()
    _, pi_ref = oracles.discrete_hmm_smoother(model, obs, dt_fine=1e-5)
    stride = round(obs.dt / 1e-5)
    gap = float(np.max(np.abs(result.solution.pi - pi_ref[::stride])))
    dt_oracle = time.perf_counter() - t0
    out.append(CheckResult.build("finite_hmm_oracle", gap, _thr(thresholds, "finite_hmm_oracle"), seconds=dt_oracle))
    out.append(
        CheckResult.build("finite_hmm_runtime", dt_oracle, _thr(thresholds, "finite_hmm_runtime"), seconds=dt_oracle)
    )

    t0 = time.perf_counter()
    J_star = result.J_opt
    margins = []
    for i in range(100):
        pol = finite.perturbed_policy(result.policy, model.A, eps=0.05, seed=_PERTURBATION_SEED + i)
        margins.append(finite.cost_J(model, result.pi0, pol, obs) - J_star)
    rng = np.random.Generator(np.random.Philox(key=_PERTURBATION_SEED + 500))
    for _ in range(100):
        tilted = result.pi0 * np.exp(0.05 * rng.standard_normal(model.d))
        tilted /= tilted.sum()
        margins.append(finite.cost_J(model, tilted, result.policy, obs) - J_star)
    dt_opt = time.perf_counter() - t0
    out.append(
        CheckResult.build(
            "finite_optimality_margin",
            min(margins),
            _thr(thresholds, "finite_optimality_margin"),
            op=">=",
            seconds=dt_opt,
        )
    )
    out.append(
        CheckResult.build(
            "finite_cost_identity", abs(J_star + result.solution.logC), _thr(thresholds, "finite_cost_identity")
        )
    )

    # unconditioned reduction: zero observation function
    from .models import CtmcModel

    model0 = CtmcModel(d=model.d, A=model.A, h=np.zeros(model.d), nu0=model.nu0)
    res0 = finite.solve(model0, obs)
    flow = oracles.marginal_flow(model0.A.T, model0.nu0, obs.dt, obs.N)
    gap0 = max(
        float(np.max(np.abs(res0.solution.pi - flow))),
        float(np.max(np.abs(res0.pi_controlled - flow))),
    )
    out.append(CheckResult.build("finite_unconditioned", gap0, _thr(thresholds, "finite_unconditioned")))

    mass_gap = max(
        float(np.max(np.abs(result.solution.pi.sum(axis=1) - 1.0))),
        float(np.max(np.abs(result.pi_controlled.sum(axis=1) - 1.0))),
    )
    out.append(CheckResult.build("finite_unit_mass", mass_gap, _thr(thresholds, "finite_unit_mass")))
    out.append(
        CheckResult.build(
            "finite_lognorm_const", result.log_normalizer_spread, _thr(thresholds, "finite_lognorm_const")
        )
    )
    return out


# ---------------------------------------------------------------------------
# linear-Gaussian checks


def check_gaussian(thresholds: dict) -> list[CheckResult]:
    model = load_fixture_model("lg_scalar.json")
    obs = load_fixture_observations("obs_lg.json")
    out = []
    sol = gaussian.solve_min_energy(model, obs)
    means, _ = oracles.kalman_rts(model, obs)
    gap = float(np.max(np.abs(sol.m - means)))
    out.append(CheckResult.build("lg_rts_coincidence", gap, _thr(thresholds, "lg_rts_coincidence")))
    J_a, J_b = gaussian.cost_ibp_identity(model, sol.m, sol.u, obs)
    out.append(CheckResult.build("lg_cost_forms", abs(J_a - J_b), _thr(thresholds, "lg_cost_forms")))
    return out


# ---------------------------------------------------------------------------
# grid checks


def _grid_model_with_n(base, n: int):
    from .models import DiffusionModel1D

    return DiffusionModel1D(
        a=base._specs["a"],
        sigma=base._specs["sigma"],
        h=base._specs["h"],
        nu0=base._specs["nu0"],
        x_min=base.x_min,
        x_max=base.x_max,
        n=n,
    )


def _grid_mean(pi: np.ndarray, x: np.ndarray, dx: float) -> np.ndarray:
    return (pi * x[None, :]).sum(axis=1) * dx


def check_grid(thresholds: dict) -> list[CheckResult]:
    gmodel = load_fixture_model("lg_scalar.json")
    base = load_fixture_model("grid_ou.json")
    obs = load_fixture_observations("obs_lg.json")
    out = []

    t0 = time.perf_counter()
    means_ref, _ = oracles.kalman_rts(gmodel, obs)
    mref = means_ref[:, 0]

    errors = {}
    results = {}
    for n in (100, 200, 400):
        model_n = _grid_model_with_n(base, n)
        res = grid.solve(model_n, obs)
        results[n] = res
        mgrid = _grid_mean(res.solution.pi, res.solution.x, model_n.dx)
        errors[n] = float(np.max(np.abs(mgrid - mref)))
    dt_grid = time.perf_counter() - t0

    out.append(CheckResult.build("grid_rts_mean", errors[400], _thr(thresholds, "grid_rts_mean"), seconds=dt_grid))
    order = 0.5 * np.log2(errors[100] / errors[400])
    out.append(
        CheckResult.build("grid_spatial_order", order, _thr(thresholds, "grid_spatial_order"), op=">=")
    )
    out.append(
        CheckResult.build(
            "grid_suite_runtime", dt_grid, _thr(thresholds, "grid_suite_runtime"), seconds=dt_grid
        )
    )

    # dynamic-programming identity under refinement
    hjb = {}
    for n in (200, 400, 800):
        if n in results:
            hjb[n] = results[n].hjb_residual_max
        else:
            model_n = _grid_model_with_n(base, n)
            ops = grid.build_grid_operators(model_n)
            lam = grid.integrate_lambda_backward_pde(model_n, obs, ops=ops)
            _, res_field = grid.hjb_residual(lam, obs, model_n, ops=ops)
            inner = grid.interior_slice(n)
            hjb[n] = float(np.max(np.abs(res_field[:, inner])))
    ratios = [hjb[200] / hjb[400], hjb[400] / hjb[800]]
    out.append(
        CheckResult.build("grid_hjb_monotone", min(ratios), _thr(thresholds, "grid_hjb_monotone"), op=">=")
    )
    out.append(CheckResult.build("grid_hjb_finest", hjb[800], _thr(thresholds, "grid_hjb_finest")))

    res400 = results[400]
    dx400 = _grid_model_with_n(base, 400).dx
    mass_gap = max(
        float(np.max(np.abs(res400.solution.pi.sum(axis=1) * dx400 - 1.0))),
        float(np.max(np.abs(res400.pi_controlled.sum(axis=1) * dx400 - 1.0))),
    )
    out.append(CheckResult.build("grid_unit_mass", mass_gap, _thr(thresholds, "grid_unit_mass")))
    out.append(
        CheckResult.build(
            "grid_lognorm_const", res400.log_normalizer_spread, _thr(thresholds, "grid_lognorm_const")
        )
    )
    return out


# ---------------------------------------------------------------------------
# relative entropy check


def check_entropy(thresholds: dict) -> list[CheckResult]:
    model = load_fixture_model("model_f3.json")
    obs = load_fixture_observations("obs_f3.json")
    result = finite.solve(model, obs)
    n_mc = 10_000
    est, stderr = oracles.mc_relative_entropy(model, result.pi0, result.policy, n_mc, seed=_MC_SEED)
    # closed form: initial divergence plus time integral of pi^T C(u)
    running = np.array(
        [float(result.pi_controlled[k] @ finite.control_cost(model.A, result.policy.u[k])) for k in range(obs.N + 1)]
    )
    closed = finite.kl_divergence(result.pi0, model.nu0) + float(np.trapezoid(running, dx=obs.dt))
    z = abs(est - closed) / stderr
    return [CheckResult.build("mc_entropy_zscore", z, _thr(thresholds, "mc_entropy_zscore"))]


def run_all(thresholds: dict | None = None) -> list[CheckResult]:
    thresholds = thresholds or {}
    results = []
    results += check_finite(thresholds)
    results += check_gaussian(thresholds)
    results += check_grid(thresholds)
    results += check_entropy(thresholds)
    return results


def report_dict(results: list[CheckResult]) -> dict:
    return {
        "all_passed": all(r.passed for r in results),
        "checks": [{**asdict(r), "pass": r.passed} for r in results],
    }
