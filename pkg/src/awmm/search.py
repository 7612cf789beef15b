"""Bi-level search: K weighted replicas per step, keep the best, update controllers.

Each outer iteration samples K task-weight vectors, trains K copies of the
current model for one epoch each, scores them by validation accuracy, adopts
the best copy and feeds the accuracies back to the controllers as rewards.
Manual weighting modes run the same population loop with fixed weights.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from .controller import (COMMIT_BEST, MEAN_CENTER, EpisodeRecord, make_controllers,
                         reinforce_update, sample_actions, tie_break, weights_from_logits)
from .data import MODALITIES, Dataset
from .errors import DataError, NumericError
from .model import SHARED, MultimodalModel, WeightVector, train_epoch
from .numcore import OptimizerState

__all__ = ["SearchConfig", "SearchResult", "run_search", "tie_break"]

log = logging.getLogger(__name__)

AUTO = "auto"
MANUAL_UNIFORM = "manual-uniform"
MANUAL_FIXED = "manual-fixed"


@dataclass
class SearchConfig:
    k: int = 10
    outer_iterations: int = 50
    beta_init: float = 1.0
    model_lr: float = 1e-4
    controller_lr: float = 1e-3
    baseline: str = MEAN_CENTER
    commit: str = COMMIT_BEST
    seed: int = 0
    sharing: str = SHARED
    weighting: str = AUTO
    fixed_weights: dict | None = None
    freeze_policy: bool = False
    hidden: tuple = (64, 32)
    batch_size: int = 32
    # prediction route used for the validation reward
    reward_mode: str = "mean"
    reward_modality: str | None = None
    # replicas of one iteration share a minibatch order (common random numbers)
    shared_shuffle: bool = False

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("K must be >= 1")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if not (self.model_lr > 0 and self.controller_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.weighting not in (AUTO, MANUAL_UNIFORM, MANUAL_FIXED):
            raise ValueError(f"unknown weighting mode {self.weighting!r}")
        if self.weighting == MANUAL_FIXED and self.fixed_weights is None:
            raise ValueError("manual-fixed weighting needs fixed_weights")
        if self.reward_mode not in ("fusion", "mean", "branch"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        if self.reward_mode == "branch" and self.reward_modality not in MODALITIES:
            raise ValueError("branch reward needs reward_modality")

    def manual_weights(self) -> WeightVector:
        if self.weighting == MANUAL_UNIFORM:
            return WeightVector.uniform()
        w = self.fixed_weights
        return w if isinstance(w, WeightVector) else WeightVector.from_dict(w)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        if isinstance(self.fixed_weights, WeightVector):
            d["fixed_weights"] = self.fixed_weights.as_dict()
        return d


@dataclass
class SearchResult:
    model: MultimodalModel
    weights: WeightVector
    episodes: list = field(default_factory=list)
    history: list = field(default_factory=list)
    epochs_run: int = 0


def replica_seed(seed: int, iteration: int, replica: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, iteration, replica])


def _params_finite(model: MultimodalModel) -> bool:
    return all(np.all(np.isfinite(p)) for p in model.named_params().values())


def run_search(config: SearchConfig, dataset: Dataset, on_episode=None) -> SearchResult:
    config.validate()
    if dataset.splits is None:
        raise DataError("dataset has no train/validation splits")
    train = dataset.split("train")
    val = dataset.split("validation")
    test = dataset.split("test") if len(dataset.splits.get("test", [])) else None
    for name, b in (("train", train), ("validation", val)):
        missing = [m for m in MODALITIES if m not in b.features]
        if missing:
            raise DataError(f"{name} split is missing modalities {missing}")

    model = MultimodalModel(dataset.dims, config.hidden, config.sharing, config.seed)
    optimizer = OptimizerState("adam", learning_rate=config.model_lr)
    auto = config.weighting == AUTO
    controllers = make_controllers(config.beta_init, config.controller_lr) if auto else None
    ctl_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xC7]))
    if not auto:
        fixed = config.manual_weights()

    result = SearchResult(model, None)
    for t in range(config.outer_iterations):
        if auto:
            episode = sample_actions(controllers, config.k, ctl_rng, t, config.freeze_policy)
        else:
            episode = EpisodeRecord(t, None, None, None, np.tile(fixed.as_array(), (config.k, 1)))
        rewards = np.zeros(config.k)
        losses = np.full(config.k, np.nan)
        failed = []
        best = None
        for j, alpha in enumerate(episode.weight_vectors()):
            replica = model.copy()
            opt = optimizer.copy()
            rng = np.random.default_rng(replica_seed(config.seed, t, 0 if config.shared_shuffle else j))
            try:
                losses[j] = train_epoch(replica, train, alpha, opt, rng, config.batch_size)
                if not _params_finite(replica):
                    raise NumericError("parameters diverged")
                rewards[j] = metrics.accuracy(replica, val, config.reward_mode, config.reward_modality)
            except NumericError as exc:
                log.warning("iteration %d replica %d failed: %s", t, j, exc)
                failed.append(j)
                rewards[j] = 0.0
                continue
            if best is None or rewards[j] > rewards[best[0]]:
                best = (j, replica, opt)
        result.epochs_run += config.k
        episode.rewards = rewards
        episode.failed = failed
        if best is None:
            log.warning("iteration %d: every replica failed; keeping previous model", t)
            episode.selected = tie_break(rewards)
        else:
            episode.selected = best[0]
            model, optimizer = best[1], best[2]

        if auto:
            reinforce_update(controllers, episode, config.controller_lr, config.baseline,
                             config.commit, frozen=config.freeze_policy)
            committed = weights_from_logits([c.beta for c in controllers])
        else:
            episode.committed_beta = None
            committed = fixed

        record = {
            "iteration": t,
            "selected": episode.selected,
            "val_acc": float(rewards[episode.selected]),
            "train_loss": float(losses[episode.selected]),
            "alpha": committed.as_dict(),
        }
        if test is not None:
            record["test_acc"] = metrics.accuracy(model, test, config.reward_mode, config.reward_modality)
        result.history.append(record)
        result.episodes.append(episode)
        if on_episode is not None:
            on_episode(episode, record)

    result.model = model
    result.weights = committed
    return result
