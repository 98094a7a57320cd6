"""Regenerate the bundled fixtures under src/dualsmooth/fixtures/.

The observation fixtures are simulated with pinned seeds following the CLI
convention (hidden path keyed by `seed`, observation noise by `seed + 1`), so
`dualsmooth run` on the bundled scenarios reproduces them byte for byte.
"""

import json
from pathlib import Path

from dualsmooth import simulate, verify
from dualsmooth.models import (
    CtmcModel,
    DiffusionModel1D,
    GaussianModel,
    model_to_dict,
    save_model,
    save_observations,
)

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "dualsmooth" / "fixtures"

F3_SEED = 101
LG_SEED = 303
T, N = 1.0, 1000


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    model_f3 = CtmcModel(
        d=3,
        A=[[-2.0, 1.0, 1.0], [1.0, -2.0, 1.0], [1.0, 1.0, -2.0]],
        h=[-1.0, 0.0, 1.0],
        nu0=[0.5, 0.25, 0.25],
    )
    save_model(model_f3, FIXTURES / "model_f3.json")
    path = simulate.simulate_ctmc(model_f3, T, F3_SEED)
    obs = simulate.simulate_observations(path, model_f3.h, N, F3_SEED + 1)
    save_observations(obs, FIXTURES / "obs_f3.json")

    lg = GaussianModel(A=[[-1.0]], H=[1.0], sigma=[[1.0]], m0=[0.0], Sigma0=[[1.0]])
    save_model(lg, FIXTURES / "lg_scalar.json")
    lg_path = simulate.simulate_gaussian(lg, T, N, LG_SEED)
    lg_obs = simulate.simulate_observations(lg_path, lg.H, N, LG_SEED + 1)
    save_observations(lg_obs, FIXTURES / "obs_lg.json")

    grid_model = DiffusionModel1D(
        a="ou", sigma="const:1", h="linear:1", nu0="gauss:0,1", x_min=-6.0, x_max=6.0, n=400
    )
    save_model(grid_model, FIXTURES / "grid_ou.json")

    scenarios = {
        "scenario_f3.json": {
            "name": "three-state-demo",
            "kind": "finite",
            "model": model_to_dict(model_f3),
            "T": T,
            "N": N,
            "seed": F3_SEED,
            "thresholds": {"route_equivalence_linf": 1e-6},
        },
        "scenario_grid.json": {
            "name": "scalar-grid-demo",
            "kind": "grid",
            "model": model_to_dict(grid_model),
            "T": T,
            "N": N,
            "seed": LG_SEED,
            "options": {"grid_n": 400},
            "thresholds": {"route_equivalence_linf": 5e-4, "mass_drift": 1e-9, "hjb_residual_max": 5e-2},
        },
        "scenario_lg.json": {
            "name": "scalar-mee-demo",
            "kind": "lg",
            "model": model_to_dict(lg),
            "T": T,
            "N": N,
            "seed": LG_SEED,
            "thresholds": {"rts_mean_error": 1e-6},
        },
    }
    for name, payload in scenarios.items():
        with open(FIXTURES / name, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    with open(FIXTURES / "thresholds.json", "w") as fh:
        json.dump(verify.DEFAULT_THRESHOLDS, fh, indent=1, sort_keys=True)
        fh.write("\n")

    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
