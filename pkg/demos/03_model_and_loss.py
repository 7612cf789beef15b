"""The four-branch model, weighted global loss, and weight sharing."""

import numpy as np

from awmm.data import SynthConfig, generate
from awmm.model import SHARED, UNSHARED, MultimodalModel, WeightVector, global_loss
from awmm.numcore import OptimizerState
from awmm.model import train_epoch

ds = generate(SynthConfig(n_samples=1000, seed=1))
shared = MultimodalModel(ds.dims, (64, 32), SHARED, seed=0)
unshared = MultimodalModel(ds.dims, (64, 32), UNSHARED, seed=0)
print("trunk parameters  shared", shared.trunk_num_params(), " unshared", unshared.trunk_num_params())

batch = ds.split("train")
logits = shared.forward_all(batch)
print({t: v.shape for t, v in logits.items()})

# the global loss is the alpha-weighted sum of the five task losses
uniform = WeightVector.uniform()
loss, _ = shared.loss_and_grad(batch, uniform)
print(f"uniform-weighted loss {loss:.4f}")
only_swe = WeightVector.one_hot("swe")
losses = {"b": 0.7, "doppler": 0.6, "swe": 0.4, "se": 0.5, "fusion": 0.3}
print("one-hot swe picks out", global_loss(losses, only_swe))

opt = OptimizerState("adam", learning_rate=1e-3)
rng = np.random.default_rng(0)
val = ds.split("validation")
for epoch in range(5):
    loss = train_epoch(shared, batch, uniform, opt, rng)
    pred, _ = shared.predict(val, "fusion")
    print(f"epoch {epoch}  loss {loss:.4f}  val acc (fusion head) {np.mean(pred == val.labels):.3f}")
