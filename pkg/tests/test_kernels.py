"""Backend equivalence: the compiled kernels must reproduce the pure-NumPy
reference to floating-point noise on representative inputs."""

import numpy as np
import pytest

import dualsmooth
from dualsmooth._kernels import _pure

_fast = pytest.importorskip("dualsmooth._kernels._fast")


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(123)


@pytest.fixture(scope="module")
def chain_inputs(rng):
    d, N = 4, 200
    A = rng.uniform(0.0, 2.0, (d, d))
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    h = rng.standard_normal(d)
    z = np.concatenate([[0.0], np.cumsum(0.03 * rng.standard_normal(N))])
    return A, h, z


@pytest.fixture(scope="module")
def band_inputs(rng):
    n = 60
    lo = np.zeros(n)
    up = np.zeros(n)
    lo[1:] = rng.uniform(0.5, 1.5, n - 1)
    up[:-1] = rng.uniform(0.5, 1.5, n - 1)
    d0 = -(lo + up)
    hg = 0.4 * rng.standard_normal(n)
    return lo, d0, up, hg


def test_backend_is_reported():
    assert dualsmooth.BACKEND in ("pure", "fast")


@pytest.mark.parametrize("substeps", [1, 3])
def test_ctmc_pathwise(chain_inputs, rng, substeps):
    A, h, z = chain_inputs
    y0 = rng.standard_normal(4)
    a = _pure.ctmc_pathwise_sweep(A, h, z, 1e-3, substeps, y0)
    b = _fast.ctmc_pathwise_sweep(A, h, z, 1e-3, substeps, y0)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


def test_ctmc_transport(chain_inputs, rng):
    A, h, z = chain_inputs
    N = z.size - 1
    u = np.exp(0.1 * rng.standard_normal((N + 1, 4, 4)))
    um = np.exp(0.1 * rng.standard_normal((N, 4, 4)))
    pi0 = rng.uniform(0.1, 1.0, 4)
    pi0 /= pi0.sum()
    a, da = _pure.ctmc_transport_sweep(A, u, um, pi0, 1e-3)
    b, db = _fast.ctmc_transport_sweep(A, u, um, pi0, 1e-3)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)
    assert da == pytest.approx(db, abs=1e-15)
    assert np.max(np.abs(a.sum(axis=1) - 1.0)) < 1e-12


@pytest.mark.parametrize("substeps", [1, 4])
def test_grid_pathwise(band_inputs, chain_inputs, rng, substeps):
    lo, d0, up, hg = band_inputs
    _, _, z = chain_inputs
    y0 = rng.standard_normal(60)
    a = _pure.grid_pathwise_sweep(lo, d0, up, hg, z, 1e-3, substeps, y0)
    b = _fast.grid_pathwise_sweep(lo, d0, up, hg, z, 1e-3, substeps, y0)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


def test_grid_transport(band_inputs, chain_inputs, rng):
    lo, d0, up, _ = band_inputs
    _, _, z = chain_inputs
    N = z.size - 1
    n = 60
    su = 0.3 * rng.standard_normal((N + 1, n))
    p0 = rng.uniform(0.2, 1.0, n)
    dx = 0.11
    p0 /= p0.sum() * dx
    a, da = _pure.grid_transport_sweep(lo, d0, up, su, p0, 1e-3, dx, 2)
    b, db = _fast.grid_transport_sweep(lo, d0, up, su, p0, 1e-3, dx, 2)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    assert da == pytest.approx(db, abs=1e-14)
    assert np.max(np.abs(a.sum(axis=1) * dx - 1.0)) < 1e-12


def test_hmm_fine(chain_inputs, rng):
    from dualsmooth.oracles import expm_pade6

    A, h, z = chain_inputs
    R = 20
    dt = 1e-3 / R
    dz = np.repeat(np.diff(z) / R, R)
    P = expm_pade6(A * dt)
    nu0 = np.full(4, 0.25)
    la, lqa = _pure.hmm_fine_sweep(P, h, dz, dt, nu0)
    lb, lqb = _fast.hmm_fine_sweep(P, h, dz, dt, nu0)
    np.testing.assert_allclose(la, lb, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(lqa, lqb, rtol=1e-12, atol=1e-12)


def test_forced_pure_backend_subprocess():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import dualsmooth; print(dualsmooth.BACKEND)"],
        env={"PATH": "/usr/bin:/bin", "DUALSMOOTH_BACKEND": "pure"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "pure"
