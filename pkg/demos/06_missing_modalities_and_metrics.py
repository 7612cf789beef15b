"""Inference with missing modalities, and the clinical metrics."""

import numpy as np

from awmm import metrics
from awmm.data import MODALITIES, DEFAULT_PROFILE, SynthConfig, generate
from awmm.search import SearchConfig, run_search

ds = generate(SynthConfig(n_samples=2000, strengths=DEFAULT_PROFILE, seed=3))
model = run_search(SearchConfig(k=4, outer_iterations=10, seed=3), ds).model
test_idx = ds.splits["test"]

# mean of branch logits over whichever modalities are present
for present in (MODALITIES, ("swe", "se"), ("b",), ("doppler",)):
    r = metrics.evaluate(model, ds.batch(test_idx, present), "mean")
    row = r.percent_row()
    print(f"{'+'.join(present):22s}", "  ".join(f"{k} {row[k]}" for k in metrics.METRIC_NAMES))

# metrics straight from a confusion matrix; undefined ratios stay undefined
print(metrics.compute(metrics.ConfusionCounts(tp=8, fp=1, tn=9, fn=2)).percent_row())
print(metrics.compute(metrics.ConfusionCounts(tp=0, fp=0, tn=5, fn=0)).percent_row())
