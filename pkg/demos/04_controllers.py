"""REINFORCE controllers: sampling weight moves and learning from rewards."""

import numpy as np

from awmm.controller import ACTION_DELTAS, make_controllers, reinforce_update, sample_actions

ctls = make_controllers()
rng = np.random.default_rng(0)

# one episode: each of the 5 controllers picks a move in {-0.2, 0, +0.2}
ep = sample_actions(ctls, 4, rng)
print("beta moves per replica:\n", ACTION_DELTAS[ep.actions])
print("task weights per replica:\n", np.round(ep.alphas, 4))

# a rigged reward: 1 whenever the b-mode controller steps up
for step in range(1, 101):
    ep = sample_actions(ctls, 10, rng)
    ep.rewards = (ep.actions[:, 0] == 2).astype(float)
    reinforce_update(ctls, ep, eta=0.05)
    if step % 25 == 0:
        print(f"update {step:3d}  b-mode policy {np.round(ctls[0].policy(), 3)}")
