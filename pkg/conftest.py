import numpy as np
import pytest

from models import Dataset, KernelConfig
from simulation import default_mixture, make_affine_domain, simulate_shared_space, split_domains


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def kcfg():
    return KernelConfig(sigma_sq=2.0)


@pytest.fixture
def small_domains():
    """Mixture latent space (150 rows) split in halves and observed in 5 dims."""
    latent = simulate_shared_space(default_mixture(n=150, seed=3))
    z_src, z_tgt = split_domains(latent, seed=4)
    X_A, map_a = make_affine_domain(z_src, obs_dim=5, seed=5)
    X_B, map_b = make_affine_domain(z_tgt, obs_dim=5, seed=6)
    return {"latent_source": z_src, "latent_target": z_tgt, "X_A": X_A, "X_B": X_B, "map_a": map_a, "map_b": map_b}


def random_dataset(rng, rows, cols, labels=False) -> Dataset:
    values = rng.standard_normal((rows, cols))
    return Dataset(values=values, labels=rng.integers(0, 2, rows) if labels else None)
