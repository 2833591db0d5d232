import numpy as np
import pytest

from kepdiff import PhysParams, SimConfig, simulate_ensemble


@pytest.fixture(scope="session")
def p():
    """Showcase parameters."""
    return PhysParams(lam=1.0, mu=1.0, ecc=0.5, eps=0.1)


@pytest.fixture(scope="session")
def p_unit():
    """Unit diffusion scale: gradients coincide with the scaled fields."""
    return PhysParams(lam=1.0, mu=1.0, ecc=0.5, eps=1.0)


@pytest.fixture(scope="session")
def stationary_ensemble(p):
    """One medium ensemble shared by the statistics tests (seeded)."""
    cfg = SimConfig(params=p, dt=1e-3, n_steps=60_000, n_paths=64, seed=2024,
                    record_stride=10)
    return simulate_ensemble(cfg)


def random_points(n, seed, lo=-4.0, hi=4.0, min_r=0.3, min_y=0.05):
    """Seeded generic points avoiding the origin ball and the y = 0 plane."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        q = rng.uniform(lo, hi, 3)
        if np.linalg.norm(q) > min_r and abs(q[1]) > min_y:
            out.append(q)
    return np.array(out)
