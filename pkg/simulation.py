"""
Synthetic data for the experiments: a shared 2-d Gaussian-mixture latent
space observed through random affine maps, the MMD angle sweep over 2-d
rotations and reflections, the mirrored two-Gaussian anti-alignment
scenario, and multi-class synthetic embeddings.
"""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from adaptation import AlignmentObjective
from errors import DimensionMismatchError, InvalidDataError
from linalg_core import random_orthogonal, reflection_2d, rotation_2d
from models import AffineMap, Dataset, KernelConfig, MixtureSpec, OrthogonalMatrix, SweepRow

logger = logging.getLogger(__name__)

MIN_SINGULAR_VALUE = 0.1
FAMILIES = ("rotation", "reflection")


def derive_seeds(seed: int, names: List[str]) -> Dict[str, int]:
    """Independent named sub-seeds from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


###########################################
# Shared latent space and affine domains
###########################################

def default_mixture(n: int = 600, seed: int = 0) -> MixtureSpec:
    """Two equally weighted bivariate Gaussians used by the simulated experiment."""
    return MixtureSpec(
        weights=[0.5, 0.5],
        means=[[1.0, 1.0], [5.0, -5.0]],
        covariances=[[[2.0, 0.7], [0.7, 1.0]], [[2.0, 1.0], [1.0, 4.0]]],
        n=n,
        seed=seed,
    )


def simulate_shared_space(spec: MixtureSpec) -> Dataset:
    """Sample spec.n points; the label is the index of the generating component."""
    rng = np.random.default_rng(spec.seed)
    labels = rng.choice(len(spec.weights), size=spec.n, p=np.asarray(spec.weights))
    values = np.empty((spec.n, spec.dim))
    for k, (mean, cov) in enumerate(zip(spec.means, spec.covariances)):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            values[idx] = rng.multivariate_normal(mean, cov, size=idx.size)
    return Dataset(values=values, labels=labels)


def random_affine_map(latent_dim: int, obs_dim: int, seed: int) -> AffineMap:
    """Standard-normal theta and mu; theta is redrawn until its smallest singular value exceeds 0.1."""
    if obs_dim < latent_dim:
        raise DimensionMismatchError("obs_dim", f">= {latent_dim}", obs_dim)
    rng = np.random.default_rng(seed)
    while True:
        theta = rng.standard_normal((obs_dim, latent_dim))
        if np.linalg.svd(theta, compute_uv=False).min() > MIN_SINGULAR_VALUE:
            break
        logger.debug("Redrawing degenerate affine map")
    return AffineMap(theta=theta, mu=rng.standard_normal(obs_dim))


def make_affine_domain(
    Z: Dataset,
    obs_dim: int,
    seed: int,
    amap: Optional[AffineMap] = None,
) -> Tuple[Dataset, AffineMap]:
    """Observe latent rows through x = theta z + mu (a fixed `amap` skips the random draw)."""
    if amap is None:
        amap = random_affine_map(Z.n_features, obs_dim, seed)
    elif amap.theta.shape != (obs_dim, Z.n_features):
        raise DimensionMismatchError("theta", (obs_dim, Z.n_features), amap.theta.shape)
    return Z.with_values(Z.values @ amap.theta.T + amap.mu), amap


def split_domains(Z: Dataset, seed: int, n_source: Optional[int] = None) -> Tuple[Dataset, Dataset]:
    """Random split of latent rows into source and target halves."""
    if Z.n_rows < 2:
        raise InvalidDataError("need at least two rows to split")
    n_source = Z.n_rows // 2 if n_source is None else n_source
    order = np.random.default_rng(seed).permutation(Z.n_rows)
    return Z.subset(np.sort(order[:n_source])), Z.subset(np.sort(order[n_source:]))


def labeled_subset(X: Dataset, fraction: float, seed: int) -> np.ndarray:
    """Sorted row indices of a seeded random subset (at least one row)."""
    if not 0 < fraction <= 1:
        raise InvalidDataError(f"labeled fraction must be in (0, 1], got {fraction}")
    count = max(1, int(round(fraction * X.n_rows)))
    return np.sort(np.random.default_rng(seed).choice(X.n_rows, size=count, replace=False))


###########################################
# Angle sweep
###########################################

def family_matrix(family: str, alpha: float) -> OrthogonalMatrix:
    if family == "rotation":
        return rotation_2d(alpha)
    if family == "reflection":
        return reflection_2d(alpha)
    raise InvalidDataError(f"unknown family {family!r}")


def angle_sweep(
    Z_A: Dataset,
    Z_B_prime: Dataset,
    grid_size: int = 360,
    kcfg: Optional[KernelConfig] = None,
) -> List[SweepRow]:
    """MMD^2(Z_A, Z_B' M(alpha)) on a uniform grid over [0, 2 pi) for both 2-d families."""
    kcfg = kcfg or KernelConfig()
    if Z_A.n_features != 2 or Z_B_prime.n_features != 2:
        raise DimensionMismatchError("sweep dimension", 2, (Z_A.n_features, Z_B_prime.n_features))
    if grid_size < 3:
        raise InvalidDataError("grid_size must be at least 3")
    objective = AlignmentObjective(Z_A.values, Z_B_prime.values, kcfg)
    alphas = 2.0 * np.pi * np.arange(grid_size) / grid_size
    rows = []
    for family in FAMILIES:
        for alpha in alphas:
            mmd2 = objective.value(family_matrix(family, alpha).Q)
            rows.append(SweepRow(alpha=float(alpha), family=family, mmd2=mmd2))
    return rows


def count_local_minima(rows: List[SweepRow]) -> Dict[str, int]:
    """
    Strict local minima per family, comparing each grid point with its two
    cyclic neighbours, plus the "combined" total over both families.
    """
    counts = {}
    for family in FAMILIES:
        values = np.array([row.mmd2 for row in rows if row.family == family])
        if values.size < 3:
            counts[family] = 0
            continue
        is_min = (values < np.roll(values, 1)) & (values < np.roll(values, -1))
        counts[family] = int(is_min.sum())
    counts["combined"] = sum(counts[family] for family in FAMILIES)
    return counts


def sweep_global_minimum(rows: List[SweepRow]) -> SweepRow:
    if not rows:
        raise InvalidDataError("empty sweep")
    return min(rows, key=lambda row: row.mmd2)


###########################################
# Anti-alignment scenario and synthetic embeddings
###########################################

def anti_alignment_latent(n_per_class: int = 150, separation: float = 2.5, seed: int = 0) -> Dataset:
    """
    Two classes with mirrored means (-separation, 0) and (+separation, 0)
    and one shared axis-aligned covariance. The mixture is invariant under
    z -> -z, which swaps the classes, so aligned and anti-aligned
    solutions have the same population MMD.
    """
    rng = np.random.default_rng(seed)
    cov = np.diag([0.4, 1.0])
    class0 = rng.multivariate_normal([-separation, 0.0], cov, size=n_per_class)
    class1 = rng.multivariate_normal([separation, 0.0], cov, size=n_per_class)
    labels = np.repeat([0, 1], n_per_class)
    return Dataset(values=np.vstack([class0, class1]), labels=labels)


def anti_alignment_domains(
    n_per_class: int = 150,
    separation: float = 2.5,
    obs_dim: int = 5,
    seed: int = 0,
) -> Tuple[Dataset, Dataset]:
    """Source and target observations of two independent anti-alignment samples."""
    seeds = derive_seeds(seed, ["source", "target", "map_a", "map_b"])
    X_A, _ = make_affine_domain(anti_alignment_latent(n_per_class, separation, seeds["source"]), obs_dim, seeds["map_a"])
    X_B, _ = make_affine_domain(anti_alignment_latent(n_per_class, separation, seeds["target"]), obs_dim, seeds["map_b"])
    return X_A, X_B


def synthetic_embeddings(
    n_classes: int = 10,
    latent_dim: int = 5,
    obs_dim: int = 20,
    n_source_per_class: int = 60,
    n_target_per_class: int = 40,
    mean_scale: float = 3.0,
    noise_scale: float = 0.0,
    seed: int = 0,
) -> Tuple[Dataset, Dataset]:
    """
    Class-conditional Gaussians in a shared latent space, observed in two
    domains through independent random affine maps. Each class gets its
    own anisotropic covariance, so the latent distribution has no
    label-swapping symmetry.

    With noise_scale > 0, isotropic observation noise is added to both
    domains, so their covariances have full rank obs_dim instead of
    latent_dim.
    """
    if n_classes < 2:
        raise InvalidDataError("need at least two classes")
    if noise_scale < 0:
        raise InvalidDataError(f"noise_scale must be >= 0, got {noise_scale}")
    seeds = derive_seeds(seed, ["classes", "source", "target", "map_a", "map_b", "noise"])
    rng = np.random.default_rng(seeds["classes"])
    means = rng.normal(0.0, mean_scale, size=(n_classes, latent_dim))
    covariances = []
    for c in range(n_classes):
        basis = random_orthogonal(latent_dim, int(rng.integers(2**31))).Q
        covariances.append(basis @ np.diag(rng.uniform(0.2, 1.0, latent_dim)) @ basis.T)

    def sample(per_class: int, sample_seed: int) -> Dataset:
        sample_rng = np.random.default_rng(sample_seed)
        values = np.vstack([
            sample_rng.multivariate_normal(means[c], covariances[c], size=per_class) for c in range(n_classes)
        ])
        return Dataset(values=values, labels=np.repeat(np.arange(n_classes), per_class))

    source, _ = make_affine_domain(sample(n_source_per_class, seeds["source"]), obs_dim, seeds["map_a"])
    target, _ = make_affine_domain(sample(n_target_per_class, seeds["target"]), obs_dim, seeds["map_b"])
    if noise_scale > 0:
        noise_rng = np.random.default_rng(seeds["noise"])
        source = source.with_values(source.values + noise_scale * noise_rng.standard_normal(source.values.shape))
        target = target.with_values(target.values + noise_scale * noise_rng.standard_normal(target.values.shape))
    return source, target
