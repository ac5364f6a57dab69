"""Tour of the tensor engine: tape recording, gradients, checking, Adam.

Run: python3 demos/01_autodiff_and_optimizer.py
"""

import numpy as np

from ltgan import tensor as T

print("== forward ops record on the tape only inside a Tape context ==")
with T.Tape() as tape:
    x = T.param([1.0, 2.0, 3.0])
    w = T.param(np.full(3, 0.5))
    loss = T.tmean(T.tanh(T.mul(x, w)))
    print(f"loss = {loss.item():.6f}, ops recorded: {len(tape)}")

    grads = T.backward(loss, wrt=[x, w])
    print("dloss/dx =", np.round(grads[x], 4))
    print("dloss/dw =", np.round(grads[w], 4))

print("\n== the same tape supports a second backward from another root ==")
with T.Tape():
    x = T.param([2.0, -1.0])
    a = T.tsum(T.mul(x, x))       # sum of squares
    b = T.tsum(T.sigmoid(x))
    print("grad of a:", T.backward(a, wrt=[x])[x])
    print("grad of b:", np.round(T.backward(b, wrt=[x])[x], 4))

print("\n== central finite differences validate every gradient ==")
report = T.grad_check(lambda t: T.tsum(T.mul(T.sigmoid(t), t)),
                      [T.param(np.random.default_rng(0).normal(size=6))], h=1e-6, tol=1e-6)
print(f"max relative error {report.max_rel_err:.2e} -> passed = {report.passed}")

print("\n== Adam: the first bias-corrected step moves by -alpha * sign(grad) ==")
p = T.param(np.array([1.0, -1.0, 0.5]))
state = T.AdamState(alpha=0.1)
g = np.array([3.0, -0.2, 0.0])
before = p.data.copy()
T.adam_update({"p": p}, {"p": g}, state)
print("delta:", np.round(p.data - before, 4), "(alpha = 0.1)")
