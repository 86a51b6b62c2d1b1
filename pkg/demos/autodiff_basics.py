"""
Reverse-mode gradients with ucl.autodiff
========================================

Build a small expression, run backward, and compare the result with
central finite differences.
"""

import numpy as np

from ucl import autodiff as ad
from ucl.autodiff import Tensor, backward, grad_check, precision

# Tensors default to float32; gradients flow only into tensors that ask for them
w = Tensor(np.array([[1.0, -2.0], [0.5, 3.0]]), requires_grad=True)
x = Tensor(np.array([[0.2, 0.4]]))
loss = ad.reduce_sum(ad.relu(ad.matmul(x, w)) ** 2)
backward(loss)
print("loss:", float(loss.data))
print("dloss/dw:\n", w.grad)

# backward is single shot: the graph is released after one pass
try:
    backward(loss)
except Exception as err:
    print("second backward:", type(err).__name__)

# a convolution followed by batch norm, checked against finite differences in 64-bit mode
state = ad.BatchNormState(3)


def conv_bn(img, kernel):
    h = ad.conv2d(img, kernel, stride=1, padding=1)
    return ad.reduce_sum(ad.batch_norm2d(h, np.ones(3), np.zeros(3), state, "train") * np.arange(3.0 * 16).reshape(1, 3, 4, 4))


rng = np.random.default_rng(0)
with precision(np.float64):
    err = grad_check(conv_bn, [rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(3, 2, 3, 3))])
print(f"conv + batch norm max relative error: {err:.2e}")
