"""
Augmented Random Search over the controller gain space.

Each iteration draws ``N`` Gaussian search directions from a single master stream,
evaluates the ``2N`` mirrored perturbations ``K +/- sigma * delta`` and steps along the
cost-weighted average of the directions, normalized by the standard deviation of the
``2N`` costs. Every perturbed and updated gain is projected onto ``[gain_floor, inf)`` so
the closed loop stays stable during exploration.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .controller import N_GAINS, Gains

SIGMA_J_MIN = 1e-12

Evaluator = Callable[[Gains], float]
MapFn = Callable[[Callable, Iterable], Iterable]


@dataclass(frozen=True)
class ArsConfig:
    M: int = 2000
    alpha: float = 5e-3
    N: int = 16
    sigma: float = 2e-3
    Sigma_delta: tuple = (0.1, 1.0, 1.0, 1.0, 10.0)
    seed: int = 0
    gain_floor: float = 1e-6
    # read Sigma_delta as per-component standard deviations instead of variances
    sigma_delta_is_std: bool = False
    # evaluate K at every iteration for the log (not used by the update)
    log_nominal: bool = True

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")
        if not (self.alpha > 0 and self.sigma > 0 and self.gain_floor > 0):
            raise ValueError("alpha, sigma and gain_floor must be positive")
        sd = tuple(float(s) for s in self.Sigma_delta)
        if len(sd) != N_GAINS or not all(s > 0 for s in sd):
            raise ValueError(f"Sigma_delta needs {N_GAINS} positive entries, got {sd}")
        object.__setattr__(self, "Sigma_delta", sd)

    @property
    def direction_std(self) -> np.ndarray:
        sd = np.asarray(self.Sigma_delta)
        return sd if self.sigma_delta_is_std else np.sqrt(sd)


@dataclass
class IterationLog:
    iter: int
    K: tuple
    Jplus: list
    Jminus: list
    sigmaJ: float
    Jnominal: float = math.nan
    skipped: bool = False
    wall_ms: float = 0.0


class TrainingError(RuntimeError):
    """Training aborted; ``logs`` holds the completed iterations."""

    def __init__(self, message, logs=None, gains=None):
        super().__init__(message)
        self.logs = list(logs or [])
        self.gains = gains


class EvaluationError(RuntimeError):
    def __init__(self, message, gains):
        super().__init__(message)
        self.gains = gains


def sample_directions(N: int, Sigma_delta, rng: np.random.Generator, is_std: bool = False) -> np.ndarray:
    """Draw ``N`` independent zero-mean normal directions with diagonal covariance.

    ``Sigma_delta`` holds variances unless ``is_std`` is set. Advances ``rng``.
    """
    sd = np.asarray(Sigma_delta, dtype=float)
    scale = sd if is_std else np.sqrt(sd)
    return rng.standard_normal((N, len(sd))) * scale


def perturb(K, sigma: float, delta, gain_floor: float) -> tuple[Gains, Gains]:
    k = np.asarray((K if isinstance(K, Gains) else Gains(K)).K)
    d = sigma * np.asarray(delta, dtype=float)
    return Gains(np.maximum(k + d, gain_floor)), Gains(np.maximum(k - d, gain_floor))


def population_std(values) -> float:
    return float(np.std(np.asarray(values, dtype=float)))


def _evaluate_all(evaluator: Evaluator, gains: Sequence[Gains], map_fn: MapFn | None) -> list[float]:
    def one(g):
        try:
            J = float(evaluator(g))
        except Exception as exc:
            raise EvaluationError(f"episode failed for K = {list(g.K)}: {exc}", g) from exc
        if not math.isfinite(J):
            raise EvaluationError(f"non-finite cost for K = {list(g.K)}", g)
        return J

    mapper = map_fn or map
    return list(mapper(one, gains))


def ars_step(
    K,
    evaluator: Evaluator,
    cfg: ArsConfig,
    rng: np.random.Generator,
    map_fn: MapFn | None = None,
    iteration: int = 0,
) -> tuple[Gains, IterationLog]:
    """One update of the gain vector; ``rng`` is advanced in place.

    ``map_fn`` (e.g. ``executor.map``) may evaluate the ``2N`` episodes concurrently;
    the directions are drawn before dispatch so the result does not depend on it.
    """
    t0 = time.perf_counter()
    K = K if isinstance(K, Gains) else Gains(K)
    deltas = sample_directions(cfg.N, cfg.Sigma_delta, rng, cfg.sigma_delta_is_std)
    pairs = [perturb(K, cfg.sigma, d, cfg.gain_floor) for d in deltas]
    batch = [g for pair in pairs for g in pair]
    if cfg.log_nominal:
        batch.append(K)
    costs = _evaluate_all(evaluator, batch, map_fn)
    Jplus = costs[0 : 2 * cfg.N : 2]
    Jminus = costs[1 : 2 * cfg.N : 2]
    sigmaJ = population_std(Jplus + Jminus)

    skipped = sigmaJ < SIGMA_J_MIN
    if skipped:
        K_new = K
    else:
        step = np.zeros(N_GAINS)
        for jp, jm, d in zip(Jplus, Jminus, deltas):
            step += (jp - jm) * d
        k = np.asarray(K.K) - cfg.alpha / (cfg.N * sigmaJ) * step
        K_new = Gains(np.maximum(k, cfg.gain_floor))
    log = IterationLog(
        iter=iteration,
        K=K_new.K,
        Jplus=Jplus,
        Jminus=Jminus,
        sigmaJ=sigmaJ,
        Jnominal=costs[-1] if cfg.log_nominal else math.nan,
        skipped=skipped,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
    return K_new, log


@dataclass
class Checkpoint:
    iteration: int
    K: tuple
    rng_state: dict
    logs: list = field(default_factory=list)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1))

    @classmethod
    def load(cls, path) -> Checkpoint:
        data = json.loads(Path(path).read_text())
        data["K"] = tuple(data["K"])
        data["logs"] = [IterationLog(**{**d, "K": tuple(d["K"])}) for d in data.get("logs", [])]
        return cls(**data)


def train(
    K1,
    evaluator: Evaluator,
    cfg: ArsConfig,
    map_fn: MapFn | None = None,
    checkpoint_path=None,
    checkpoint_every: int = 10,
    resume: bool = False,
    callback: Callable[[IterationLog], None] | None = None,
) -> tuple[Gains, list[IterationLog]]:
    """Run ``cfg.M`` iterations from ``K1``; returns ``K* = K^(M+1)`` and the logs.

    With ``checkpoint_path`` the current gains, RNG state and logs are written every
    ``checkpoint_every`` iterations; ``resume=True`` continues from an existing file and
    reproduces the uninterrupted run bit for bit.
    """
    rng = np.random.default_rng(cfg.seed)
    K = K1 if isinstance(K1, Gains) else Gains(K1)
    logs: list[IterationLog] = []
    start = 0
    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        ck = Checkpoint.load(checkpoint_path)
        rng.bit_generator.state = ck.rng_state
        K = Gains(ck.K)
        logs = ck.logs
        start = ck.iteration

    for i in range(start, cfg.M):
        try:
            K, log = ars_step(K, evaluator, cfg, rng, map_fn, iteration=i + 1)
        except EvaluationError as exc:
            raise TrainingError(f"iteration {i + 1}: {exc}", logs, exc.gains) from exc
        logs.append(log)
        if callback is not None:
            callback(log)
        if checkpoint_path is not None and ((i + 1) % checkpoint_every == 0 or i + 1 == cfg.M):
            Checkpoint(i + 1, K.K, rng.bit_generator.state, logs).save(checkpoint_path)
    return K, logs


def write_training_log(path, logs: Sequence[IterationLog]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "K1", "K2", "K3", "K4", "K5", "Jnominal", "sigmaJ", "wall_ms"])
        for lg in logs:
            w.writerow(
                [lg.iter, *(f"{k:.17g}" for k in lg.K), f"{lg.Jnominal:.17g}",
                 f"{lg.sigmaJ:.17g}", f"{lg.wall_ms:.3f}"]
            )


def running_min(values) -> np.ndarray:
    return np.minimum.accumulate(np.asarray(values, dtype=float))
