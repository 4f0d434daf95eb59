"""
Experiment drivers shared by the CLI and the HTTP API.

- run_simulated_experiment: 2-d Gaussian mixture observed in two random
  5-dim affine domains; baseline, unsupervised, semi-supervised, angle
  sweep and latent-oracle scenarios.
- run_embedding_experiment: every binary class pair of a two-domain
  embedding set, three scenarios per task.
- run_embedding_replicates: the embedding experiment over several seeded
  synthetic embedding sets, aggregated.
- run_anti_alignment_experiment: the mirrored two-Gaussian scenario in
  which half of the MMD optima swap the classes.
- run_adaptation: adapt one uploaded source/target pair.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from adaptation import adapt_semisupervised, adapt_unsupervised, fit_shared_whitening, whiten
from dataset_io import write_dataset_csv, write_report, write_sweep_csv
from errors import DegenerateLabelsError, InvalidDataError, ShiftCorrectionError
from eval_classify import accuracy, predict, train_logistic
from models import (
    AdaptationResult,
    Dataset,
    ExperimentReport,
    KernelConfig,
    OptimizerConfig,
    ScenarioResult,
    SweepRow,
    TaskResult,
    TrainConfig,
)
from simulation import (
    anti_alignment_domains,
    angle_sweep,
    count_local_minima,
    default_mixture,
    derive_seeds,
    family_matrix,
    labeled_subset,
    make_affine_domain,
    simulate_shared_space,
    split_domains,
    sweep_global_minimum,
    synthetic_embeddings,
)

logger = logging.getLogger(__name__)

SIMULATED_SEED_NAMES = ["mixture", "split", "map_a", "map_b", "labeled", "restarts"]
# p = None keeps every positive eigen-direction shared by both domains.
FULL_RANK = "full"


def _elapsed_ms(started: float, timing: bool) -> Optional[float]:
    return round((time.perf_counter() - started) * 1000.0, 3) if timing else None


def _config_echo(kcfg: KernelConfig, ocfg: OptimizerConfig, train_cfg: TrainConfig, **extra) -> Dict[str, Any]:
    return {
        "kernel": kcfg.model_dump(),
        "optimizer": ocfg.model_dump(),
        "train": train_cfg.model_dump(),
        **extra,
    }


def _p_label(p: Optional[int]) -> Any:
    return FULL_RANK if p is None else p


def _score(classifier, data: Dataset) -> float:
    return accuracy(predict(classifier, data), data.labels)


def _binary_labels(data: Dataset) -> bool:
    return data.has_labels and bool(np.all(np.isin(data.labels, (0, 1))))


###########################################
# Simulated experiment
###########################################

class SimulatedDomains(NamedTuple):
    latent_source: Dataset
    latent_target: Dataset
    source: Dataset
    target: Dataset
    seeds: Dict[str, int]


def simulated_domains(seed: int, n: int = 600, obs_dim: int = 5) -> SimulatedDomains:
    """Mixture sample split in two halves, each observed through its own random affine map."""
    seeds = derive_seeds(seed, SIMULATED_SEED_NAMES)
    latent = simulate_shared_space(default_mixture(n, seeds["mixture"]))
    latent_source, latent_target = split_domains(latent, seeds["split"])
    source, _ = make_affine_domain(latent_source, obs_dim, seeds["map_a"])
    target, _ = make_affine_domain(latent_target, obs_dim, seeds["map_b"])
    return SimulatedDomains(latent_source, latent_target, source, target, seeds)


def whitened_sweep(
    source: Dataset,
    target: Dataset,
    grid_size: int,
    kcfg: KernelConfig,
) -> Tuple[List[SweepRow], Dataset, Dataset]:
    """Whiten both domains to p = 2 and sweep rotations and reflections of the target."""
    model_a, model_b = fit_shared_whitening(source, target, p=2)
    z_a, z_b_prime = whiten(model_a, source), whiten(model_b, target)
    return angle_sweep(z_a, z_b_prime, grid_size, kcfg), z_a, z_b_prime


def run_simulated_experiment(
    seed: int = 42,
    out_dir: Optional[Path] = None,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    n: int = 600,
    obs_dim: int = 5,
    n_restarts: int = 10,
    labeled_fraction: float = 0.10,
    grid_size: int = 360,
    workers: int = 1,
    timing: bool = False,
) -> ExperimentReport:
    """
    Run every scenario of the simulated experiment and, when `out_dir` is
    given, write report.json and sweep.csv there.
    """
    kcfg = kcfg or KernelConfig()
    ocfg = ocfg or OptimizerConfig()
    train_cfg = train_cfg or TrainConfig()
    started = time.perf_counter()

    domains = simulated_domains(seed, n, obs_dim)
    X_A, X_B = domains.source, domains.target
    logger.info(f"Simulated domains: source {X_A.n_rows}x{X_A.n_features}, target {X_B.n_rows}x{X_B.n_features}")

    # Baseline: classifier on raw source features applied to the raw target.
    baseline_clf = train_logistic(X_A, train_cfg)
    baseline = ScenarioResult(name="baseline", accuracy=_score(baseline_clf, X_B))

    unsup = adapt_unsupervised(X_A, X_B, p=2, kcfg=kcfg, ocfg=ocfg)
    latent_clf = train_logistic(unsup.z_a, train_cfg)
    unsupervised = ScenarioResult(
        name="unsupervised",
        accuracy=_score(latent_clf, unsup.z_b),
        mmd_before=unsup.mmd_before,
        mmd_after=unsup.mmd_after,
        details={"iterations": len(unsup.trace), "stop_reason": unsup.trace.stop_reason},
    )

    labeled_idx = labeled_subset(X_B, labeled_fraction, domains.seeds["labeled"])
    outcome = adapt_semisupervised(
        X_A, X_B, X_B.subset(labeled_idx), p=2, kcfg=kcfg, ocfg=ocfg,
        n_restarts=n_restarts, seed=domains.seeds["restarts"], train_cfg=train_cfg, workers=workers,
    )
    chosen = outcome.report[outcome.chosen]
    semi = ScenarioResult(
        name="semi_supervised",
        accuracy=_score(outcome.classifier, outcome.result.z_b),
        mmd_before=chosen.mmd_before,
        mmd_after=chosen.mmd_after,
        details={
            "chosen_restart": outcome.chosen,
            "labeled_count": int(labeled_idx.size),
            "restarts": [record.model_dump(mode="json") for record in outcome.report],
        },
    )

    rows = angle_sweep(unsup.z_a, unsup.z_b_prime, grid_size, kcfg)
    minima = count_local_minima(rows)
    best = sweep_global_minimum(rows)
    swept = unsup.z_b_prime.with_values(unsup.z_b_prime.values @ family_matrix(best.family, best.alpha).Q)
    sweep = ScenarioResult(
        name="sweep_global",
        accuracy=_score(latent_clf, swept),
        mmd_after=best.mmd2,
        details={"family": best.family, "alpha": best.alpha, "local_minima": minima, "grid_size": grid_size},
    )

    oracle_clf = train_logistic(domains.latent_source, train_cfg)
    oracle = ScenarioResult(name="latent_oracle", accuracy=_score(oracle_clf, domains.latent_target))

    report = ExperimentReport(
        config=_config_echo(
            kcfg, ocfg, train_cfg,
            experiment="simulated", seed=seed, n=n, obs_dim=obs_dim, p=2,
            restarts=n_restarts, labeled_fraction=labeled_fraction, grid_size=grid_size,
        ),
        scenarios=[baseline, unsupervised, semi, sweep, oracle],
        seeds={"master": seed, **domains.seeds},
        runtime_ms=_elapsed_ms(started, timing),
    )
    logger.info(
        f"Simulated experiment (seed {seed}): baseline {baseline.accuracy:.3f}, "
        f"unsupervised {unsupervised.accuracy:.3f}, semi-supervised {semi.accuracy:.3f}, "
        f"oracle {oracle.accuracy:.3f}, local minima {minima['combined']}"
    )

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(report, out_dir / "report.json")
        write_sweep_csv(rows, out_dir / "sweep.csv")
    return report


###########################################
# Anti-alignment scenario
###########################################

def run_anti_alignment_experiment(
    seed: int = 7,
    n_per_class: int = 150,
    n_restarts: int = 10,
    labeled_fraction: float = 0.10,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    workers: int = 1,
    timing: bool = False,
) -> ExperimentReport:
    """
    Multi-restart alignment of the mirrored two-Gaussian domains. Every
    restart's full-target accuracy is recorded next to its labeled error
    so aligned and anti-aligned optima can be told apart.
    """
    kcfg = kcfg or KernelConfig()
    ocfg = ocfg or OptimizerConfig()
    train_cfg = train_cfg or TrainConfig()
    started = time.perf_counter()

    seeds = derive_seeds(seed, ["domains", "labeled", "restarts"])
    X_A, X_B = anti_alignment_domains(n_per_class=n_per_class, seed=seeds["domains"])
    labeled_idx = labeled_subset(X_B, labeled_fraction, seeds["labeled"])
    outcome = adapt_semisupervised(
        X_A, X_B, X_B.subset(labeled_idx), p=2, kcfg=kcfg, ocfg=ocfg,
        n_restarts=n_restarts, seed=seeds["restarts"], train_cfg=train_cfg, workers=workers,
    )

    z_b_prime = outcome.result.z_b_prime
    restart_accuracy = []
    for record in outcome.report:
        if record.failed:
            restart_accuracy.append(None)
            continue
        rotated = z_b_prime.with_values(z_b_prime.values @ np.asarray(record.q_b))
        restart_accuracy.append(_score(outcome.classifier, rotated))

    scenarios = [
        ScenarioResult(
            name="restart",
            accuracy=acc,
            mmd_before=record.mmd_before,
            mmd_after=record.mmd_after,
            details={"index": record.index, "labeled_error": record.labeled_error, "start_det": record.start_det},
        )
        for record, acc in zip(outcome.report, restart_accuracy)
    ]
    scenarios.append(
        ScenarioResult(
            name="semi_supervised",
            accuracy=restart_accuracy[outcome.chosen],
            mmd_before=outcome.result.mmd_before,
            mmd_after=outcome.result.mmd_after,
            details={"chosen_restart": outcome.chosen, "labeled_count": int(labeled_idx.size)},
        )
    )
    anti = sum(1 for acc in restart_accuracy if acc is not None and acc < 0.5)
    logger.info(f"Anti-alignment: {anti} of {n_restarts} restarts swapped the classes; chose restart {outcome.chosen}")

    return ExperimentReport(
        config=_config_echo(
            kcfg, ocfg, train_cfg,
            experiment="anti_alignment", seed=seed, n_per_class=n_per_class,
            restarts=n_restarts, labeled_fraction=labeled_fraction,
        ),
        scenarios=scenarios,
        seeds={"master": seed, **seeds},
        runtime_ms=_elapsed_ms(started, timing),
    )


###########################################
# Embedding experiment
###########################################

def _binary_task(X: Dataset, negative: int, positive: int) -> Dataset:
    """Rows of the two classes, relabelled negative -> 0, positive -> 1."""
    keep = np.flatnonzero(np.isin(X.labels, (negative, positive)))
    subset = X.subset(keep)
    return Dataset(values=subset.values, labels=(subset.labels == positive).astype(np.int64))


def _run_task(
    source: Dataset,
    target: Dataset,
    classes: Tuple[int, int],
    task_seed: int,
    p: Optional[int],
    labeled_fraction: float,
    n_restarts: int,
    kcfg: KernelConfig,
    ocfg: OptimizerConfig,
    train_cfg: TrainConfig,
) -> TaskResult:
    name = f"{classes[0]}-{classes[1]}"
    src = _binary_task(source, *classes)
    tgt = _binary_task(target, *classes)

    for domain, data in (("source", src), ("target", tgt)):
        counts = np.bincount(data.labels, minlength=2)
        if counts.min() < 2:
            reason = f"{domain} has fewer than 2 instances of a class (counts {counts.tolist()})"
            logger.warning(f"Skipping task {name}: {reason}")
            return TaskResult(task=name, classes=list(classes), skipped=True, reason=reason, seed=task_seed)

    try:
        baseline_acc = _score(train_logistic(src, train_cfg), tgt)

        unsup = adapt_unsupervised(src, tgt, p=p, kcfg=kcfg, ocfg=ocfg)
        unsup_acc = _score(train_logistic(unsup.z_a, train_cfg), unsup.z_b)

        seeds = derive_seeds(task_seed, ["labeled", "restarts"])
        labeled_idx = labeled_subset(tgt, labeled_fraction, seeds["labeled"])
        outcome = adapt_semisupervised(
            src, tgt, tgt.subset(labeled_idx), p=p, kcfg=kcfg, ocfg=ocfg,
            n_restarts=n_restarts, seed=seeds["restarts"], train_cfg=train_cfg,
        )
        semi_acc = _score(outcome.classifier, outcome.result.z_b)
    except ShiftCorrectionError as exc:
        logger.warning(f"Skipping task {name}: {exc}")
        return TaskResult(task=name, classes=list(classes), skipped=True, reason=str(exc), seed=task_seed)

    logger.info(f"Task {name}: baseline {baseline_acc:.3f}, unsupervised {unsup_acc:.3f}, semi-supervised {semi_acc:.3f}")
    return TaskResult(
        task=name,
        classes=list(classes),
        baseline_accuracy=baseline_acc,
        unsupervised_accuracy=unsup_acc,
        semi_supervised_accuracy=semi_acc,
        delta_unsupervised=unsup_acc - baseline_acc,
        delta_semi_supervised=semi_acc - baseline_acc,
        mmd_before=unsup.mmd_before,
        mmd_after=unsup.mmd_after,
        chosen_restart=outcome.chosen,
        seed=task_seed,
        p=unsup.p,
    )


def _summarize_tasks(tasks: List[TaskResult]) -> List[ScenarioResult]:
    done = [task for task in tasks if not task.skipped]
    summary = []
    for scenario, field, delta in (
        ("baseline", "baseline_accuracy", None),
        ("unsupervised", "unsupervised_accuracy", "delta_unsupervised"),
        ("semi_supervised", "semi_supervised_accuracy", "delta_semi_supervised"),
    ):
        values = [getattr(task, field) for task in done]
        details: Dict[str, Any] = {"completed_tasks": len(done), "skipped_tasks": len(tasks) - len(done)}
        if delta is not None and done:
            # "Improved" counts ties with the baseline.
            details["improved_fraction"] = sum(getattr(task, delta) >= 0 for task in done) / len(done)
            details["mean_delta"] = float(np.mean([getattr(task, delta) for task in done]))
        summary.append(ScenarioResult(
            name=scenario,
            accuracy=float(np.mean(values)) if values else None,
            details=details,
        ))
    return summary


def run_embedding_experiment(
    source: Dataset,
    target: Dataset,
    labeled_fraction: float = 0.10,
    p: Optional[int] = 5,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    n_restarts: int = 10,
    seed: int = 0,
    workers: int = 1,
    timing: bool = False,
    out_path: Optional[Path] = None,
) -> ExperimentReport:
    """
    One binary task per unordered class pair of the source labels, each
    running the baseline, unsupervised and semi-supervised scenarios with
    its own whitening. Tasks run concurrently when workers > 1; the report
    keeps them in class-pair order. p = None uses the full shared positive
    rank of each task; the p actually used is recorded per task.
    """
    kcfg = kcfg or KernelConfig()
    ocfg = ocfg or OptimizerConfig()
    train_cfg = train_cfg or TrainConfig()
    started = time.perf_counter()

    if not source.has_labels or not target.has_labels:
        raise DegenerateLabelsError("both embedding files need a label column")
    classes = sorted(int(c) for c in np.unique(source.labels))
    if len(classes) < 2:
        raise DegenerateLabelsError(f"need at least 2 classes, got {classes}")
    pairs = list(combinations(classes, 2))
    children = np.random.SeedSequence(seed).spawn(len(pairs))
    task_seeds = [int(child.generate_state(1)[0]) for child in children]
    logger.info(f"Embedding experiment: {len(pairs)} binary tasks over classes {classes}")

    def run(index: int) -> TaskResult:
        return _run_task(
            source, target, pairs[index], task_seeds[index], p,
            labeled_fraction, n_restarts, kcfg, ocfg, train_cfg,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tasks = list(pool.map(run, range(len(pairs))))
    else:
        tasks = [run(index) for index in range(len(pairs))]

    report = ExperimentReport(
        config=_config_echo(
            kcfg, ocfg, train_cfg,
            experiment="embedding", seed=seed, p=_p_label(p), restarts=n_restarts,
            labeled_fraction=labeled_fraction, classes=classes,
            source_shape=[source.n_rows, source.n_features],
            target_shape=[target.n_rows, target.n_features],
        ),
        scenarios=_summarize_tasks(tasks),
        tasks=tasks,
        seeds={"master": seed},
        runtime_ms=_elapsed_ms(started, timing),
    )
    if out_path is not None:
        write_report(report, out_path)
    return report


def run_embedding_replicates(
    n_seeds: int = 10,
    seed: int = 0,
    labeled_fraction: float = 0.10,
    p: Optional[int] = 5,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    n_restarts: int = 10,
    workers: int = 1,
    timing: bool = False,
    out_path: Optional[Path] = None,
    **embedding_kwargs: Any,
) -> ExperimentReport:
    """
    The embedding experiment repeated on `n_seeds` independently drawn
    synthetic embedding sets. Every replicate's task grid is kept in
    `tasks` (tagged with its replicate index); the summary scenarios
    aggregate over all replicates and list the per-replicate improved
    fractions.
    """
    if n_seeds < 1:
        raise InvalidDataError(f"n_seeds must be >= 1, got {n_seeds}")
    kcfg = kcfg or KernelConfig()
    ocfg = ocfg or OptimizerConfig()
    train_cfg = train_cfg or TrainConfig()
    started = time.perf_counter()

    names = [f"replicate_{index}" for index in range(n_seeds)]
    seeds = derive_seeds(seed, names)
    tasks: List[TaskResult] = []
    per_replicate: List[List[ScenarioResult]] = []
    for index, name in enumerate(names):
        source, target = synthetic_embeddings(seed=seeds[name], **embedding_kwargs)
        replicate = run_embedding_experiment(
            source, target, labeled_fraction=labeled_fraction, p=p, kcfg=kcfg, ocfg=ocfg,
            train_cfg=train_cfg, n_restarts=n_restarts, seed=seeds[name], workers=workers,
        )
        tasks.extend(task.model_copy(update={"replicate": index}) for task in replicate.tasks)
        per_replicate.append(replicate.scenarios)
        logger.info(f"Replicate {index + 1}/{n_seeds} done ({len(replicate.tasks)} tasks)")

    scenarios = _summarize_tasks(tasks)
    for position, scenario in enumerate(scenarios):
        scenario.details["replicates"] = n_seeds
        fractions = [rep[position].details.get("improved_fraction") for rep in per_replicate]
        if any(fraction is not None for fraction in fractions):
            scenario.details["replicate_improved_fraction"] = fractions

    report = ExperimentReport(
        config=_config_echo(
            kcfg, ocfg, train_cfg,
            experiment="embedding_replicates", seed=seed, replicates=n_seeds, p=_p_label(p),
            restarts=n_restarts, labeled_fraction=labeled_fraction, synthetic=dict(embedding_kwargs),
        ),
        scenarios=scenarios,
        tasks=tasks,
        seeds={"master": seed, **seeds},
        runtime_ms=_elapsed_ms(started, timing),
    )
    if out_path is not None:
        write_report(report, out_path)
    return report


###########################################
# Single adaptation
###########################################

def run_adaptation(
    source: Dataset,
    target: Dataset,
    p: Optional[int] = 5,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    n_restarts: int = 10,
    labeled_fraction: float = 0.10,
    seed: int = 0,
    workers: int = 1,
    timing: bool = False,
    out_dir: Optional[Path] = None,
) -> Tuple[ExperimentReport, AdaptationResult]:
    """
    Adapt one source/target pair. When both sides carry labels and
    labeled_fraction > 0, a seeded fraction of the target labels drives the
    semi-supervised restart selection; otherwise the alignment is
    unsupervised. With `out_dir`, report.json, z_a.csv and z_b.csv are
    written there.
    """
    kcfg = kcfg or KernelConfig()
    ocfg = ocfg or OptimizerConfig()
    train_cfg = train_cfg or TrainConfig()
    started = time.perf_counter()
    seeds = derive_seeds(seed, ["labeled", "restarts"])
    labeled = _binary_labels(source) and _binary_labels(target)

    scenarios = []
    if labeled:
        scenarios.append(ScenarioResult(name="baseline", accuracy=_score(train_logistic(source, train_cfg), target)))

    if labeled and labeled_fraction > 0:
        labeled_idx = labeled_subset(target, labeled_fraction, seeds["labeled"])
        outcome = adapt_semisupervised(
            source, target, target.subset(labeled_idx), p=p, kcfg=kcfg, ocfg=ocfg,
            n_restarts=n_restarts, seed=seeds["restarts"], train_cfg=train_cfg, workers=workers,
        )
        result = outcome.result
        scenarios.append(ScenarioResult(
            name="semi_supervised",
            accuracy=_score(outcome.classifier, result.z_b),
            mmd_before=result.mmd_before,
            mmd_after=result.mmd_after,
            details={
                "chosen_restart": outcome.chosen,
                "labeled_count": int(labeled_idx.size),
                "restarts": [record.model_dump(mode="json") for record in outcome.report],
            },
        ))
    else:
        if not labeled:
            logger.info("Binary labels missing on one side; running unsupervised alignment only")
        result = adapt_unsupervised(source, target, p=p, kcfg=kcfg, ocfg=ocfg)
        scenarios.append(ScenarioResult(
            name="unsupervised",
            accuracy=_score(train_logistic(result.z_a, train_cfg), result.z_b) if labeled else None,
            mmd_before=result.mmd_before,
            mmd_after=result.mmd_after,
            details={"iterations": len(result.trace), "stop_reason": result.trace.stop_reason},
        ))

    scenarios[-1].details["q_b"] = result.q_b.Q.tolist()
    scenarios[-1].details["p"] = result.p
    report = ExperimentReport(
        config=_config_echo(
            kcfg, ocfg, train_cfg,
            experiment="adapt", seed=seed, p=_p_label(p), restarts=n_restarts, labeled_fraction=labeled_fraction,
            source_shape=[source.n_rows, source.n_features],
            target_shape=[target.n_rows, target.n_features],
        ),
        scenarios=scenarios,
        seeds={"master": seed, **seeds},
        runtime_ms=_elapsed_ms(started, timing),
    )

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(report, out_dir / "report.json")
        write_dataset_csv(result.z_a, out_dir / "z_a.csv")
        write_dataset_csv(result.z_b, out_dir / "z_b.csv")
    return report, result
