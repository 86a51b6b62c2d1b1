from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from .tensor import Tensor, backward, precision

ArrayLike = Union[np.ndarray, Sequence[np.ndarray]]


def grad_check(function: Callable[..., Tensor], point: ArrayLike, eps: float = 1e-5,
               dtype=np.float64, reference_dtype=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``function`` receives one Tensor per array in ``point`` and must return a
    scalar Tensor.  The analytic gradient is computed at ``dtype``; the finite
    differences at ``reference_dtype`` (default: the same), so 32-bit gradients
    can be judged against a reference free of 32-bit cancellation noise.  The
    relative error of each coordinate uses the denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    reference_dtype = dtype if reference_dtype is None else reference_dtype
    points = [point] if isinstance(point, np.ndarray) else list(point)
    with precision(dtype):
        args = [Tensor(p, requires_grad=True, dtype=dtype) for p in points]
        out = function(*args)
        backward(out)
        analytic = [a.grad if a.grad is not None else np.zeros_like(a.data) for a in args]

    def f(vals):
        with precision(reference_dtype):
            return float(function(*[Tensor(v, dtype=reference_dtype) for v in vals]).data)

    worst = 0.0
    vals = [np.array(p, dtype=reference_dtype) for p in points]
    for k, v in enumerate(vals):
        flat = v.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            fp = f(vals)
            flat[idx] = orig - eps
            fm = f(vals)
            flat[idx] = orig
            numeric = (fp - fm) / (2 * eps)
            a = float(analytic[k].reshape(-1)[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
