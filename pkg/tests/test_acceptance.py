"""Acceptance gate: every check in antipgd.verify must pass at its pinned
tolerance and inside its runtime budget. One PASS/FAIL line prints per
criterion (run with ``pytest -s`` to see them, or use ``antipgd verify``).
"""

import numpy as np
import pytest

from antipgd import verify
from antipgd.landscapes import WideningValley
from antipgd.noise import NoiseSpec, NoiseStream


@pytest.mark.parametrize("name", verify.CHECK_NAMES)
def test_acceptance_criterion(name):
    result = verify.run_check(name)
    print(result.line())
    assert result.passed, result.line()
    assert result.seconds < result.budget_s, (
        f"{name} exceeded its runtime budget: {result.seconds:.1f}s >= {result.budget_s:.0f}s"
    )


class TestVerifySuiteHardening:
    """The suite must be insensitive to the increment sign convention and
    must not silently accept a corrupted nu recursion."""

    def test_flipped_increment_sign_keeps_valley_limits(self):
        # xi_n - xi_{n+1} instead of xi_{n+1} - xi_n: the draws are
        # sign-symmetric, so the |u|^2 limit statistics must agree
        landscape = WideningValley(50)
        d, big_d = 50, 5.0
        eta, sigma = 0.05 / big_d, 0.05
        n_steps, seeds = 20_000, 4

        def final_usq(flip, seed_offset):
            vals = []
            for i in range(seeds):
                spec = NoiseSpec(sigma=sigma, dim=d + 1, distribution="bernoulli",
                                 correlation="anticorrelated", seed=1000 + seed_offset + i)
                stream = NoiseStream(spec)
                stream.next_xi()
                eps = stream.next_perturbation_block(n_steps)
                if flip:
                    eps = -eps
                from antipgd.kernels import valley_block

                rng = np.random.Generator(np.random.Philox(key=7 + i))
                u = rng.standard_normal(d)
                u *= np.sqrt(big_d) / np.linalg.norm(u)
                valley_block(u, 0.0, eta, eps, 1e12)
                vals.append(float(u @ u))
            return np.array(vals)

        plain = final_usq(False, 0)
        flipped = final_usq(True, 0)
        # same equilibrium scale (2 d sigma^2-ish); compare means loosely
        pooled = np.sqrt((plain.var(ddof=1) + flipped.var(ddof=1)) / seeds)
        assert abs(plain.mean() - flipped.mean()) < 4 * pooled + 0.05
        assert plain.mean() < big_d and flipped.mean() < big_d

    def test_corrupted_nu_recursion_breaks_bound(self):
        # flipping the minus sign in (1 - rho)^2 must violate the <= 1 bound,
        # i.e. the acceptance check would fail loudly
        rng = np.random.Generator(np.random.Philox(key=5))
        rho = rng.uniform(0.0, 1.0, size=1000)
        nu = 0.0
        worst = 0.0
        for r in rho:
            nu = r * r * nu + (1.0 + r) ** 2  # corrupted accumulator
            worst = max(worst, nu)
        assert worst > 1.0
