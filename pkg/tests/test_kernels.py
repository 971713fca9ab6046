"""Consistency between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from antipgd.kernels import BACKEND_NAME, load_backend
from antipgd.noise import NoiseSpec, NoiseStream


def _backends():
    pairs = []
    try:
        pairs.append(("compiled", load_backend("compiled")))
    except ImportError:
        pass
    pairs.append(("python", load_backend("python")))
    return pairs


BACKENDS = _backends()
HAVE_BOTH = len(BACKENDS) == 2


def test_backend_selected():
    assert BACKEND_NAME in ("compiled", "python")


@pytest.mark.skipif(not HAVE_BOTH, reason="compiled backend not built")
class TestBackendAgreement:
    def test_valley_block(self):
        spec = NoiseSpec(sigma=0.05, dim=21, distribution="gaussian",
                         correlation="anticorrelated", seed=5)
        eps = NoiseStream(spec).next_perturbation_block(5000)
        results = []
        for _, mod in BACKENDS:
            u = np.full(20, 0.5)
            done, v, div = mod.valley_block(u, 0.1, 0.02, eps, 1e12)
            results.append((done, v, div, u.copy()))
        assert results[0][0] == results[1][0] == 5000
        assert not results[0][2] and not results[1][2]
        np.testing.assert_allclose(results[0][1], results[1][1], rtol=1e-10)
        np.testing.assert_allclose(results[0][3], results[1][3], rtol=1e-10, atol=1e-14)

    def test_valley_divergence_step_matches(self):
        eps = np.zeros((100, 3))
        for _, mod in BACKENDS:
            u = np.array([2.0, 2.0])
            # eta far beyond 2/max{v^2,|u|^2}: oscillating blowup
            done, v, div = mod.valley_block(u, 3.0, 5.0, eps, 1e12)
            assert div
            assert done < 100

    def test_recursion_block(self):
        rng = np.random.Generator(np.random.Philox(key=7))
        xi = 0.1 * rng.standard_normal((50, 100, 8))
        rho = rng.uniform(0.2, 0.9, size=(50, 100))
        outs = []
        for anti in (True, False):
            pair = []
            for _, mod in BACKENDS:
                w = np.zeros((100, 8))
                prev = np.zeros((100, 8))
                s = np.empty(50)
                sq = np.empty(50)
                mod.recursion_block(w, prev, rho.copy(), xi.copy(), anti, s, sq)
                pair.append((w.copy(), s.copy(), sq.copy()))
            np.testing.assert_allclose(pair[0][0], pair[1][0], rtol=1e-12, atol=1e-15)
            np.testing.assert_allclose(pair[0][1], pair[1][1], rtol=1e-12)
            np.testing.assert_allclose(pair[0][2], pair[1][2], rtol=1e-12)
            outs.append(pair)
        # anti and uncorrelated must genuinely differ
        assert not np.allclose(outs[0][0][1], outs[1][0][1])


@pytest.mark.skipif(not HAVE_BOTH, reason="compiled backend not built")
def test_env_var_forces_python(monkeypatch):
    import importlib

    import antipgd.kernels as kernels_mod

    monkeypatch.setenv("ANTIPGD_PURE_PYTHON", "1")
    reloaded = importlib.reload(kernels_mod)
    try:
        assert reloaded.BACKEND_NAME == "python"
    finally:
        monkeypatch.delenv("ANTIPGD_PURE_PYTHON")
        importlib.reload(kernels_mod)
