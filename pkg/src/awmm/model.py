"""Four-branch multimodal classifier with per-branch heads and a fusion head.

Each modality passes through a trunk (one shared parameter store, or four
independent copies) to a feature vector of size F. Every branch has its own
2-way head; the fusion head reads the concatenated features in the fixed
order ``MODALITIES``. Training minimises the weighted sum of the five
cross-entropy losses.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .data import MODALITIES, TASKS, SampleBatch
from .errors import DimensionError, NumericError, SimplexError, StateError
from .numcore import (IDENTITY, Dense, LayerStack, OptimizerState, load_tensors,
                      optimizer_step, save_tensors, softmax, softmax_cross_entropy)

SHARED = "shared"
UNSHARED = "unshared"
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class WeightVector:
    """Task weights on the simplex, stored in ``TASKS`` order."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) != len(TASKS):
            raise SimplexError(f"need {len(TASKS)} weights, got {len(vals)}")
        if not all(np.isfinite(vals)) or min(vals) < 0.0:
            raise SimplexError(f"weights must be finite and non-negative: {vals}")
        if abs(sum(vals) - 1.0) > SIMPLEX_TOL:
            raise SimplexError(f"weights sum to {sum(vals)!r}, not 1")

    @classmethod
    def uniform(cls) -> "WeightVector":
        return cls((1.0 / len(TASKS),) * len(TASKS))

    @classmethod
    def one_hot(cls, task: str) -> "WeightVector":
        return cls(tuple(1.0 if t == task else 0.0 for t in TASKS))

    @classmethod
    def from_dict(cls, alpha: dict) -> "WeightVector":
        if set(alpha) != set(TASKS):
            raise SimplexError(f"weights must cover exactly {TASKS}")
        return cls(tuple(alpha[t] for t in TASKS))

    def __getitem__(self, task: str) -> float:
        return self.values[TASKS.index(task)]

    def as_dict(self) -> dict:
        return dict(zip(TASKS, self.values))

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


def global_loss(losses: dict, weights: WeightVector) -> float:
    """Weighted sum of the five task losses."""
    if not isinstance(weights, WeightVector):
        weights = WeightVector(tuple(weights))
    if set(losses) != set(TASKS):
        raise ValueError(f"need losses for exactly {TASKS}")
    total = 0.0
    for t in TASKS:
        total += weights[t] * losses[t]
    return total


class MultimodalModel:
    def __init__(self, input_dims: dict, hidden=(64, 32), sharing: str = SHARED,
                 seed: int = 0, head_init: str = "he"):
        if sharing not in (SHARED, UNSHARED):
            raise ValueError(f"sharing must be {SHARED!r} or {UNSHARED!r}")
        self.input_dims = {m: int(input_dims[m]) for m in MODALITIES}
        self.hidden = tuple(int(h) for h in hidden)
        self.sharing = sharing
        self.seed = seed
        self.head_init = head_init
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x30D]))
        if sharing == SHARED:
            dims = set(self.input_dims.values())
            if len(dims) != 1:
                raise DimensionError(f"shared trunk needs equal modality dims, got {self.input_dims}")
            self.trunks = {"shared": LayerStack.mlp([dims.pop(), *self.hidden], rng)}
        else:
            self.trunks = {m: LayerStack.mlp([self.input_dims[m], *self.hidden], rng)
                           for m in MODALITIES}
        F = self.feature_dim
        self.heads = {m: Dense(F, 2, IDENTITY, rng=rng, init=head_init) for m in MODALITIES}
        self.heads["fusion"] = Dense(len(MODALITIES) * F, 2, IDENTITY, rng=rng, init=head_init)
        self._last = None

    @property
    def feature_dim(self) -> int:
        return self.hidden[-1]

    def trunk_for(self, modality: str) -> LayerStack:
        return self.trunks["shared" if self.sharing == SHARED else modality]

    # ---- parameters -------------------------------------------------------

    def named_params(self) -> dict:
        out = {}
        for key, stack in self.trunks.items():
            out.update(stack.named_params(f"trunk.{key}"))
        for t, head in self.heads.items():
            for k, v in head.params().items():
                out[f"head.{t}.{k}"] = v
        return out

    def named_grads(self) -> dict:
        out = {}
        for key, stack in self.trunks.items():
            out.update(stack.named_grads(f"trunk.{key}"))
        for t, head in self.heads.items():
            for k, v in head.grads().items():
                out[f"head.{t}.{k}"] = v
        return out

    def zero_grad(self) -> None:
        for stack in self.trunks.values():
            stack.zero_grad()
        for head in self.heads.values():
            head.zero_grad()

    def num_params(self) -> int:
        return sum(p.size for p in self.named_params().values())

    def trunk_num_params(self) -> int:
        return sum(stack.num_params() for stack in self.trunks.values())

    def copy(self) -> "MultimodalModel":
        new = copy.copy(self)
        new.trunks = {k: copy.deepcopy(v) for k, v in self.trunks.items()}
        new.heads = {k: copy.deepcopy(v) for k, v in self.heads.items()}
        new._last = None
        return new

    def load_params(self, params: dict) -> None:
        own = self.named_params()
        if set(own) != set(params):
            raise ValueError("parameter names do not match this model")
        for k, v in params.items():
            if own[k].shape != v.shape:
                raise DimensionError(f"{k}: shape {v.shape} != {own[k].shape}")
            own[k][...] = v

    # ---- forward / backward -----------------------------------------------

    def features(self, inputs: dict) -> dict:
        """Trunk features for each modality in ``inputs``."""
        mods = [m for m in MODALITIES if m in inputs]
        if self.sharing == SHARED:
            sizes = [inputs[m].shape[0] for m in mods]
            stacked = self.trunks["shared"].forward(np.vstack([inputs[m] for m in mods]))
            parts = np.split(stacked, np.cumsum(sizes)[:-1])
            feats = dict(zip(mods, parts))
        else:
            feats = {m: self.trunks[m].forward(inputs[m]) for m in mods}
        self._last = mods
        return feats

    def forward_all(self, batch: SampleBatch) -> dict:
        missing = [m for m in MODALITIES if m not in batch.features]
        if missing:
            raise ValueError(f"training forward needs all modalities; missing {missing}")
        feats = self.features(batch.features)
        logits = {m: self.heads[m].forward(feats[m]) for m in MODALITIES}
        fused = np.hstack([feats[m] for m in MODALITIES])
        logits["fusion"] = self.heads["fusion"].forward(fused)
        return logits

    def backward(self, grad_logits: dict) -> None:
        """Accumulate parameter gradients from per-task logit gradients."""
        if self._last is None or list(self._last) != list(MODALITIES):
            raise StateError("backward needs a preceding forward_all")
        F = self.feature_dim
        dfeat = {m: self.heads[m].backward(grad_logits[m]) for m in MODALITIES}
        dfused = self.heads["fusion"].backward(grad_logits["fusion"])
        for i, m in enumerate(MODALITIES):
            dfeat[m] = dfeat[m] + dfused[:, i * F:(i + 1) * F]
        if self.sharing == SHARED:
            self.trunks["shared"].backward(np.vstack([dfeat[m] for m in MODALITIES]))
        else:
            for m in MODALITIES:
                self.trunks[m].backward(dfeat[m])

    def loss_and_grad(self, batch: SampleBatch, weights: WeightVector) -> tuple[float, dict]:
        """Forward, weighted loss, backward. Gradients accumulate into the model."""
        logits = self.forward_all(batch)
        losses, grads = {}, {}
        for t in TASKS:
            losses[t], grads[t] = softmax_cross_entropy(logits[t], batch.labels)
        total = global_loss(losses, weights)
        if not np.isfinite(total):
            raise NumericError("global loss is not finite")
        self.backward({t: weights[t] * grads[t] for t in TASKS})
        return total, losses

    # ---- inference ----------------------------------------------------------

    def logits(self, batch: SampleBatch, mode: str = "fusion", modality: str | None = None) -> np.ndarray:
        present = batch.present
        if mode == "fusion":
            if len(present) != len(MODALITIES):
                raise ValueError("fusion head needs all four modalities")
            return self.forward_all(batch)["fusion"]
        if mode == "branch":
            if modality not in MODALITIES:
                raise ValueError(f"branch mode needs a modality from {MODALITIES}")
            if modality not in present:
                raise ValueError(f"modality {modality!r} is not present in the batch")
            feats = self.features({modality: batch.features[modality]})
            return self.heads[modality].forward(feats[modality])
        if mode == "mean":
            feats = self.features(batch.features)
            return np.mean([self.heads[m].forward(feats[m]) for m in present], axis=0)
        raise ValueError(f"unknown prediction mode {mode!r}")

    def predict(self, batch: SampleBatch, mode: str = "fusion",
                modality: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Class predictions (1 = malignant iff p >= 0.5) and malignant probabilities."""
        prob = softmax(self.logits(batch, mode, modality))[:, 1]
        return (prob >= 0.5).astype(np.int64), prob

    # ---- persistence --------------------------------------------------------

    def manifest(self) -> dict:
        return {"sharing_mode": self.sharing, "input_dims": self.input_dims,
                "hidden": list(self.hidden), "seed": self.seed, "head_init": self.head_init}

    def save(self, path) -> None:
        save_tensors(path, self.named_params(), extra=self.manifest())

    @classmethod
    def load(cls, path) -> "MultimodalModel":
        params, meta = load_tensors(path)
        model = cls(meta["input_dims"], meta["hidden"], meta["sharing_mode"],
                    meta["seed"], meta.get("head_init", "he"))
        model.load_params(params)
        return model


def forward_all(model: MultimodalModel, batch: SampleBatch) -> dict:
    return model.forward_all(batch)


def predict(model: MultimodalModel, batch: SampleBatch, mode: str = "fusion",
            modality: str | None = None):
    return model.predict(batch, mode, modality)


def train_epoch(model: MultimodalModel, train: SampleBatch, weights: WeightVector,
                optimizer: OptimizerState, rng: np.random.Generator,
                batch_size: int = 32) -> float:
    """One shuffled pass over ``train``; returns the mean global loss."""
    if not isinstance(weights, WeightVector):
        weights = WeightVector(tuple(weights))
    n = len(train)
    order = rng.permutation(n)
    params = model.named_params()
    grads = model.named_grads()
    total, steps = 0.0, 0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        mb = SampleBatch({m: x[idx] for m, x in train.features.items()}, train.labels[idx])
        model.zero_grad()
        loss, _ = model.loss_and_grad(mb, weights)
        optimizer_step(params, grads, optimizer)
        total += loss
        steps += 1
    return total / steps
