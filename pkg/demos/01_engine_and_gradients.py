"""The numpy engine: layers, cross-entropy, hand-written backprop, Adam."""

import numpy as np

from awmm.numcore import IDENTITY, LayerStack, OptimizerState, optimizer_step, softmax_cross_entropy

rng = np.random.default_rng(0)

# a 2-class MLP on a toy problem: the label is the sign of the first feature
net = LayerStack.mlp([4, 16, 2], rng, final_activation=IDENTITY)
x = rng.normal(size=(256, 4))
y = (x[:, 0] > 0).astype(int)
print("parameters:", net.num_params())

# backprop against a central difference on one weight
loss, g = softmax_cross_entropy(net.forward(x), y)
net.zero_grad()
net.backward(g)
W = net.layers[0].W
analytic = net.layers[0].dW[2, 3]
h = 1e-5
W[2, 3] += h
up = softmax_cross_entropy(net.forward(x), y)[0]
W[2, 3] -= 2 * h
down = softmax_cross_entropy(net.forward(x), y)[0]
W[2, 3] += h
print(f"dL/dW[2,3]  backprop {analytic:.8f}  finite difference {(up - down) / (2 * h):.8f}")

# a few hundred Adam steps
state = OptimizerState("adam", learning_rate=1e-2)
for step in range(301):
    net.zero_grad()
    loss, g = softmax_cross_entropy(net.forward(x), y)
    net.backward(g)
    optimizer_step(net.named_params("net"), net.named_grads("net"), state)
    if step % 100 == 0:
        acc = np.mean(net.forward(x).argmax(axis=1) == y)
        print(f"step {step:3d}  loss {loss:.4f}  train acc {acc:.3f}")
