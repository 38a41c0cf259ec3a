"""Tour of the float64 autodiff core: tape, gradients, a gradient check, Adam.

Run: python demos/01_autodiff_basics.py
"""

import numpy as np

from ctxseq import tensor as T

# A tensor is a float64 array; a Tape records ops so backward can replay them
# in exact reverse. Parameters carry gradient buffers, constants do not.
w = T.parameter([[0.4, -0.2], [0.1, 0.3]])
b = T.parameter([0.05, -0.05])
x = T.constant([1.0, 2.0])

with T.Tape() as tape:
    y = T.tanh(T.add(T.matmul(w, x), b))
    loss = T.sum_(T.mul(y, y))
    tape.backward(loss)

print("loss        :", float(loss.data))
print("dloss/dw    :\n", w.grad)
print("dloss/db    :", b.grad)

# Spot-check one entry against central finite differences.
step = 1e-5
orig = w.data[0, 1]
w.data[0, 1] = orig + step
hi = float(T.sum_(T.mul(*(2 * [T.tanh(T.add(T.matmul(w, x), b))]))).data)
w.data[0, 1] = orig - step
lo = float(T.sum_(T.mul(*(2 * [T.tanh(T.add(T.matmul(w, x), b))]))).data)
w.data[0, 1] = orig
fd = (hi - lo) / (2 * step)
print(f"finite diff for w[0,1]: {fd:.10f}  (tape said {w.grad[0, 1]:.10f})")

# The LSTM cell is built from the same primitives, so it is differentiable
# end to end; the forget gate starts open (bias 1).
rng = np.random.default_rng(0)
cell = T.init_lstm_params(rng, input_dim=3, hidden=4)
h, c = T.lstm_cell(T.constant(rng.normal(size=3)), T.constant(np.zeros(4)), T.constant(np.zeros(4)), cell)
print("\nlstm h:", np.round(h.data, 4))

# Adam with global-norm clipping drives a small quadratic to zero.
p = T.parameter([4.0, -7.0])
opt = T.Adam({"p": p}, lr=0.1)
for i in range(200):
    with T.Tape() as tape:
        loss = T.sum_(T.mul(p, p))
        opt.zero_grad()
        tape.backward(loss)
    opt.step()
print("\nafter 200 Adam steps, p =", np.round(p.data, 5))

# Checkpoints round-trip bit-exactly: a version tag, a manifest, raw floats.
import tempfile, pathlib

with tempfile.TemporaryDirectory() as d:
    path = pathlib.Path(d) / "demo.bin"
    T.save_tensors(path, {"w": w.data, "p": p.data})
    back = T.load_tensors(path)
    print("\ncheckpoint round-trip bit-exact:", back["w"].tobytes() == w.data.tobytes())
