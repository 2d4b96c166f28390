import os
import subprocess
import sys

import numpy as np
import pytest

from aerothrow import _kernels_py, kernels
from aerothrow.model import VehicleParams

try:
    from aerothrow import _kernels as compiled
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")

P = VehicleParams()


def random_case(rng, n=25):
    q = rng.standard_normal(4)
    x0 = np.concatenate([rng.normal(0, 1, 3), rng.normal(0, 2, 3), q / np.linalg.norm(q)])
    U = np.column_stack([rng.uniform(5, 30, n), rng.normal(0, 2, (n, 3))])
    return x0, U, rng.normal(0, 1, 3)


@needs_compiled
def test_rollout_and_linearization_agree():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x0, U, f = random_case(rng)
        Xa = compiled.rk4_rollout(x0, U, f, 1.59, 9.81, 0.02)
        Xb = _kernels_py.rk4_rollout(x0, U, f, 1.59, 9.81, 0.02)
        assert np.allclose(Xa, Xb, rtol=1e-12, atol=1e-12)
        for a, b in zip(compiled.rk4_linearize(Xb[:-1], U, f, 1.59, 9.81, 0.02),
                        _kernels_py.rk4_linearize(Xb[:-1], U, f, 1.59, 9.81, 0.02)):
            assert np.allclose(a, b, rtol=1e-11, atol=1e-11)


@needs_compiled
def test_plant_step_agrees():
    rng = np.random.default_rng(1)
    prm = kernels.pack_plant_params(P, 0.2, (0.0, 0.05, -0.2))
    for _ in range(50):
        q = rng.standard_normal(4)
        y = np.concatenate([rng.normal(0, 1, 6), q / np.linalg.norm(q), rng.normal(0, 1, 3),
                            rng.uniform(500, 1200, 4)])
        cmd = rng.uniform(300, 1500, 4)
        a = compiled.plant_step(y, cmd, prm, 0.001)
        b = _kernels_py.plant_step(y, cmd, prm, 0.001)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        assert np.allclose(compiled.plant_deriv(y, cmd, prm), _kernels_py.plant_deriv(y, cmd, prm),
                           rtol=1e-12, atol=1e-10)


def test_linearization_matches_finite_differences():
    rng = np.random.default_rng(2)
    x0, U, f = random_case(rng, n=3)
    X = _kernels_py.rk4_rollout(x0, U, f, 1.59, 9.81, 0.02)[:-1]
    Xn, A, B = kernels.rk4_linearize(X, U, f, 1.59, 9.81, 0.02)
    h = 1e-6
    step = lambda x, u: kernels.rk4_rollout(x, u[None, :], f, 1.59, 9.81, 0.02)[-1]
    for k in range(3):
        assert np.allclose(Xn[k], step(X[k], U[k]), atol=1e-13)
        for i in range(10):
            e = np.zeros(10)
            e[i] = h
            assert np.allclose(A[k][:, i], (step(X[k] + e, U[k]) - step(X[k] - e, U[k])) / (2 * h), atol=1e-7)
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            assert np.allclose(B[k][:, j], (step(X[k], U[k] + e) - step(X[k], U[k] - e)) / (2 * h), atol=1e-7)


def test_backend_selection_env_override():
    code = "import aerothrow.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, AEROTHROW_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env["AEROTHROW_PURE"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("cython" if compiled is not None else "python")
