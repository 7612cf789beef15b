"""Synthetic multimodal datasets, patient-level splits and CSV I/O.

Every sample carries one feature vector per modality. The generator plants a
class signal of strength ``s_m`` (in noise standard deviations) along a fixed
unit direction of each modality, so single-modality Bayes accuracy is known in
closed form: ``Phi(s_m)`` for a balanced label prior.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, SchemaError

MODALITIES = ("b", "doppler", "swe", "se")
TASKS = MODALITIES + ("fusion",)
SPLITS = ("train", "validation", "test")
DEFAULT_FRACTIONS = (0.6, 0.2, 0.2)

# single-modality ranking SWE > SE > B ~ Doppler
DEFAULT_PROFILE = {"b": 0.9, "doppler": 0.9, "swe": 1.4, "se": 1.2}


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bayes_accuracy(strength: float, prior: float = 0.5) -> float:
    """Optimal accuracy for a +/-strength mean shift in unit Gaussian noise."""
    if strength == 0.0:
        return max(prior, 1.0 - prior)
    t = math.log((1.0 - prior) / prior) / (2.0 * strength)
    return prior * normal_cdf(strength - t) + (1.0 - prior) * normal_cdf(strength + t)


@dataclass
class SynthConfig:
    n_samples: int = 2000
    dims: dict = field(default_factory=lambda: {m: 8 for m in MODALITIES})
    strengths: dict = field(default_factory=lambda: dict(DEFAULT_PROFILE))
    prior: float = 0.5
    rho: float = 0.0
    sets_per_patient: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if set(self.dims) != set(MODALITIES) or set(self.strengths) != set(MODALITIES):
            raise ValueError(f"dims and strengths need exactly the modalities {MODALITIES}")
        if any(int(d) < 1 for d in self.dims.values()):
            raise ValueError("every modality dimension must be >= 1")
        if any(s < 0 for s in self.strengths.values()):
            raise ValueError("strengths must be >= 0")
        if not 0.0 < self.prior < 1.0:
            raise ValueError("prior must lie in (0, 1)")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.sets_per_patient < 1:
            raise ValueError("sets_per_patient must be >= 1")

    def combined_bayes_accuracy(self) -> float:
        """Bayes accuracy using all modalities (balanced prior assumed)."""
        s = np.array([self.strengths[m] for m in MODALITIES], dtype=float)
        cov = (1.0 - self.rho) * np.eye(len(s)) + self.rho * np.ones((len(s), len(s)))
        sep = float(np.sqrt(s @ np.linalg.pinv(cov) @ s))
        return bayes_accuracy(sep, self.prior)


@dataclass
class SampleBatch:
    features: dict  # modality -> [batch x d]; only present modalities
    labels: np.ndarray

    def __post_init__(self):
        if not self.features:
            raise DataError("a batch needs at least one modality")
        for m, x in self.features.items():
            if x.shape[0] != self.labels.shape[0]:
                raise DataError(f"modality {m} has {x.shape[0]} rows, labels have {self.labels.shape[0]}")

    @property
    def present(self) -> tuple:
        return tuple(m for m in MODALITIES if m in self.features)

    def __len__(self):
        return int(self.labels.shape[0])


@dataclass
class Dataset:
    features: dict  # modality -> [n x d]
    labels: np.ndarray
    patient_ids: np.ndarray
    present: np.ndarray  # [n x 4] bool, column order MODALITIES
    splits: dict | None = None

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def dims(self) -> dict:
        return {m: int(self.features[m].shape[1]) for m in MODALITIES}

    def batch(self, indices=None, modalities=None) -> SampleBatch:
        """Rows ``indices`` restricted to modalities present in all of them."""
        if indices is None:
            indices = np.arange(len(self))
        indices = np.asarray(indices)
        if modalities is None:
            modalities = MODALITIES
        feats = {}
        for m in modalities:
            col = MODALITIES.index(m)
            if np.all(self.present[indices, col]):
                feats[m] = self.features[m][indices]
        return SampleBatch(feats, self.labels[indices])

    def split(self, name: str) -> SampleBatch:
        if self.splits is None:
            raise DataError("dataset has no splits; call split_by_patient first")
        return self.batch(self.splits[name])


def generate(config: SynthConfig) -> Dataset:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_samples
    labels = (rng.random(n) < config.prior).astype(np.int64)
    sign = 2.0 * labels - 1.0
    shared = rng.standard_normal(n)
    features = {}
    for m in MODALITIES:
        d = int(config.dims[m])
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        z = rng.standard_normal((n, d))
        along = z @ u
        # swap the noise along u for one correlated (rho) across modalities
        mixed = math.sqrt(config.rho) * shared + math.sqrt(1.0 - config.rho) * along
        z += np.outer(mixed - along, u)
        features[m] = z + np.outer(sign * config.strengths[m], u)
    patient_ids = np.array([f"p{i // config.sets_per_patient:05d}" for i in range(n)])
    present = np.ones((n, len(MODALITIES)), dtype=bool)
    ds = Dataset(features, labels, patient_ids, present)
    ds.splits = split_by_patient(ds, DEFAULT_FRACTIONS, config.seed)
    return ds


def split_sizes(n_patients: int, fractions) -> list[int]:
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError("split fractions must be non-negative and sum to 1")
    if n_patients < len(fractions):
        raise ValueError(f"{n_patients} patients cannot fill {len(fractions)} splits")
    bounds = np.rint(np.cumsum(fractions) * n_patients).astype(int)
    sizes = np.diff(np.concatenate([[0], bounds]))
    for i in np.flatnonzero((sizes == 0) & (fractions > 0)):
        sizes[np.argmax(sizes)] -= 1
        sizes[i] += 1
    return [int(s) for s in sizes]


def split_by_patient(dataset: Dataset, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> dict:
    """Shuffle patients and cut contiguous blocks; returns sample indices per split."""
    patients = np.unique(dataset.patient_ids)
    sizes = split_sizes(len(patients), fractions)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5911]))
    order = patients[rng.permutation(len(patients))]
    splits = {}
    start = 0
    for name, size in zip(SPLITS, sizes):
        chosen = order[start:start + size]
        start += size
        splits[name] = np.flatnonzero(np.isin(dataset.patient_ids, chosen))
    return splits


def csv_header(dims: dict) -> list[str]:
    cols = ["patient_id", "label"]
    for m in MODALITIES:
        cols += [f"{m}_{i}" for i in range(int(dims[m]))]
    return cols


def write_csv(dataset: Dataset, path) -> None:
    dims = dataset.dims
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(csv_header(dims))
        for i in range(len(dataset)):
            row = [str(dataset.patient_ids[i]), str(int(dataset.labels[i]))]
            for c, m in enumerate(MODALITIES):
                if dataset.present[i, c]:
                    row += [repr(float(v)) for v in dataset.features[m][i]]
                else:
                    row += [""] * dims[m]
            w.writerow(row)


def load_csv(path, schema: dict) -> Dataset:
    """Read a dataset laid out as ``patient_id,label,<b_*>,<doppler_*>,<swe_*>,<se_*>``.

    ``schema`` maps each modality to its feature count. A modality whose cells
    are all empty in a row is recorded as missing for that sample.
    """
    expected = csv_header(schema)
    ids, labels, present = [], [], []
    rows = {m: [] for m in MODALITIES}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != expected:
            raise SchemaError(f"header does not match schema; expected {expected[:4]}...", line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataError(f"expected {len(expected)} fields, got {len(row)}", line=lineno)
            try:
                label = int(row[1])
            except ValueError:
                raise SchemaError(f"label {row[1]!r} is not an integer", line=lineno) from None
            if label not in (0, 1):
                raise SchemaError(f"label {label} outside {{0, 1}}", line=lineno)
            col = 2
            mask = []
            for m in MODALITIES:
                cells = row[col:col + schema[m]]
                col += schema[m]
                if all(c.strip() == "" for c in cells):
                    rows[m].append(np.zeros(schema[m]))
                    mask.append(False)
                    continue
                try:
                    vals = np.array([float(c) for c in cells])
                except ValueError:
                    raise DataError(f"non-numeric value in modality {m}", line=lineno) from None
                if not np.all(np.isfinite(vals)):
                    raise DataError(f"non-finite value in modality {m}", line=lineno)
                rows[m].append(vals)
                mask.append(True)
            ids.append(row[0])
            labels.append(label)
            present.append(mask)
    if not ids:
        raise DataError("no data rows")
    present = np.array(present, dtype=bool)
    if not np.all(present.any(axis=1)):
        raise DataError("every sample needs at least one modality")
    features = {m: np.vstack(rows[m]) for m in MODALITIES}
    return Dataset(features, np.array(labels, dtype=np.int64), np.array(ids), present)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(config: SynthConfig, csv_path, manifest_path) -> dict:
    manifest = {
        "config": asdict(config),
        "csv": str(csv_path.name if hasattr(csv_path, "name") else csv_path),
        "sha256": file_sha256(csv_path),
        "bayes_accuracy": {m: bayes_accuracy(config.strengths[m], config.prior)
                           for m in MODALITIES},
        "bayes_accuracy_all": config.combined_bayes_accuracy(),
    }
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
