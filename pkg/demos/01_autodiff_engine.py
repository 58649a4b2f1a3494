"""The tensor engine in five minutes: tape, gradients, a finite-difference
check, and Adam minimizing a tiny function.

Run:  python demos/01_autodiff_engine.py
"""

import numpy as np

from srt import tensor as T
from srt.tensor import Tensor, backward, AdamState, adam_step, check_gradients

# --- forward + backward over the tape ---------------------------------------
x = Tensor([1.0, 2.0, 3.0], requires_grad=True, name="x")
w = Tensor([[0.5], [-1.0], [0.25]], requires_grad=True, name="w")
loss = T.tsum(T.sigmoid(T.matmul(T.reshape(x, (1, 3)), w)))
backward(loss)
print("loss           ", float(loss.data))
print("d loss / d x   ", x.grad.ravel())
print("d loss / d w   ", w.grad.ravel())

# --- every gradient is checked against central differences -------------------
rng = np.random.default_rng(0)
a = Tensor(rng.normal(size=(4, 5)), requires_grad=True, dtype=np.float64)
g = Tensor(rng.normal(size=5) * 0.2 + 1.0, requires_grad=True, dtype=np.float64)
b = Tensor(rng.normal(size=5), requires_grad=True, dtype=np.float64)
err = check_gradients(lambda a, g, b: T.tsum(T.gelu(T.layer_norm(a, g, b))), [a, g, b])
print(f"layer_norm+gelu vs finite differences: max rel err {err:.2e}")

# --- Adam on a quadratic ------------------------------------------------------
p = Tensor(np.zeros(2), requires_grad=True, name="p")
target = np.array([3.0, -1.5])
state = AdamState()
for step in range(200):
    p.zero_grad()
    diff = p - Tensor(target)
    backward(T.tsum(diff * diff))
    adam_step({"p": p}, state, lr=0.1)
print(f"adam after {state.step} steps: {p.data} (target {target})")
