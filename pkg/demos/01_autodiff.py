"""Reverse-mode gradients on a tiny tape, checked against central differences."""

import numpy as np

from coregen import ndmath as nd
from coregen.ndmath import Graph, Tensor

rng = np.random.default_rng(0)

# a one-layer network with a masked softmax on top
W = Tensor(rng.normal(size=(4, 3)), name="W")
x = Tensor(rng.normal(size=(2, 4)))
mask = np.array([[True, True, False], [True, True, True]])

W.requires_grad = True
with Graph() as g:                      # ops are only recorded inside a graph
    probs = nd.softmax_masked(nd.tanh(x @ W), mask)
    loss = -nd.sum(nd.log(probs[:, :1]))
print("loss", loss.item())
print("recorded ops", [node.kind for node in g.nodes])

grads = nd.backward(g, loss)
print("dL/dW\n", grads["W"].round(4))

# masked entries get exactly zero probability
print("probs\n", probs.data.round(4))

# the same gradient, numerically
err = nd.finite_diff_check(lambda p: -nd.sum(nd.log(nd.softmax_masked(nd.tanh(x @ p["W"]), mask)[:, :1])),
                           {"W": W})
print(f"worst relative error vs central differences: {err:.2e}")
