#!/usr/bin/env python3
"""A tour of the tensor core: reverse-mode gradients from scratch.

The whole dialogue engine sits on one small autodiff module. A Tensor
wraps a numpy array; every op records how to push gradients back to its
parents; calling backward() on a scalar walks that tape. This script
builds a few graphs by hand, checks one against finite differences, and
fits a small nonlinear regression with the Adam optimizer.
"""

import numpy as np

from common import banner
from taskdial import tensor as T
from taskdial.gradcheck import check_gradients
from taskdial.nn import ParamStore
from taskdial.optim import Adam
from taskdial.tensor import Tensor

banner("1. A gradient, by hand and by tape")

# d/dx of sum((x @ w) * sigmoid(x @ w)) at a random point
rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)

y = T.matmul(x, w)
loss = T.tsum(T.mul(y, T.sigmoid(y)))
loss.backward()
print("loss          :", round(loss.item(), 6))
print("dL/dw row 0   :", np.round(w.grad[0], 4))

banner("2. The tape agrees with central differences")

with T.use_dtype(np.float64):
    a = Tensor(rng.normal(size=(5, 5)), requires_grad=True)
    g = Tensor(np.ones(5), requires_grad=True)
    b = Tensor(np.zeros(5), requires_grad=True)

    def fn():
        h = T.layer_norm(T.tanh(T.matmul(a, a)), g, b)
        return T.tsum(T.mul(T.softmax_rows(h), h))

    err = check_gradients(fn, [a, g, b])
print(f"worst relative error over every coordinate: {err:.2e}")

banner("3. Fitting y = sin(x) with a 2-layer net and Adam")

store = ParamStore(seed=1)
w1 = store.uniform("w1", (1, 32))
b1 = store.constant("b1", (32,), 0.0)
w2 = store.uniform("w2", (32, 1))
b2 = store.constant("b2", (1,), 0.0)

xs = np.linspace(-3, 3, 64).reshape(-1, 1).astype(np.float32)
ys = np.sin(xs)

optimizer = Adam(store, lr=1e-2)  # step() clears gradients itself
for step in range(400):
    hidden = T.tanh(T.add(T.matmul(Tensor(xs), w1), b1))
    pred = T.add(T.matmul(hidden, w2), b2)
    diff = T.sub(pred, ys)
    mse = T.tmean(T.mul(diff, diff))
    mse.backward()
    optimizer.step()
    if step % 100 == 0 or step == 399:
        print(f"step {step:3d}  mse {mse.item():.5f}")

print("\nThe same Tensor/ParamStore/Adam trio trains the full dialogue model.")
